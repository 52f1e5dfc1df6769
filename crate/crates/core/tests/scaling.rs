//! Cost of one memory step grows linearly in the width.

use std::time::Instant;

use mflab_core::network::{init_params, memory_step_in_place, HiddenState, ParamSet};
use mflab_core::{LambdaSpec, ModelConfig};

struct Bench {
    cfg: ModelConfig<f64>,
    p: ParamSet<f64>,
    s: HiddenState<f64>,
    steps: usize,
}

impl Bench {
    fn new(n: usize, steps: usize) -> Self {
        let cfg = ModelConfig::<f64>::new(n, 1, 1);
        let p = init_params(&cfg, &LambdaSpec::default()).unwrap();
        Self {
            cfg,
            p,
            s: HiddenState::zeros(n),
            steps,
        }
    }

    fn per_step(&mut self) -> f64 {
        let t = Instant::now();
        for k in 0..self.steps {
            let x = [((k % 17) as f64 - 8.0) / 10.0];
            std::hint::black_box(memory_step_in_place(
                &self.p,
                &mut self.s,
                &x,
                &self.cfg.act,
            ));
        }
        t.elapsed().as_secs_f64() / self.steps as f64
    }
}

#[test]
fn memory_step_is_linear_in_width() {
    let mut small = Bench::new(1_000, 20_000);
    let mut large = Bench::new(10_000, 2_000);
    let (mut ts, mut tl) = (f64::INFINITY, f64::INFINITY);
    // Interleaved so that frequency drift affects both sizes alike.
    for _ in 0..8 {
        ts = ts.min(small.per_step());
        tl = tl.min(large.per_step());
    }
    let ratio = tl / ts;
    assert!(
        (8.0..=12.0).contains(&ratio),
        "cost ratio N=1e4 / N=1e3 = {ratio}"
    );
}
