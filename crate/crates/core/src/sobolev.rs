use crate::activation::Activation;
use crate::error::{domain, Result};
use crate::function::FuncH;
use crate::measure::MeasureSample;
use crate::scalar::Scalar;

/// Monte-Carlo estimate of `‖hA − hB‖²_{H¹(λ)} = ∫ |hA − hB|² + |∇hA − ∇hB|² dλ(w)`
/// using the `w` entries of `measure`.
pub fn h1_distance_sq<T: Scalar>(
    ha: &FuncH<T>,
    hb: &FuncH<T>,
    measure: &MeasureSample<T>,
    act: &Activation<T>,
) -> Result<T> {
    if measure.is_empty() {
        return Err(domain("H1 estimate over an empty measure"));
    }
    let d = measure.dim();
    let mut acc = T::zero();
    for w in measure.w().chunks_exact(d) {
        let dv = ha.eval(w, act) - hb.eval(w, act);
        let ga = ha.grad(w, act);
        let gb = hb.grad(w, act);
        let dg: T = ga.iter().zip(&gb).map(|(&p, &q)| (p - q) * (p - q)).sum();
        acc = acc + dv * dv + dg;
    }
    Ok(acc / T::from_usize_lossy(measure.len()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::sample_lambda;

    #[test]
    fn identical_and_zero_functions() {
        let m = sample_lambda::<f64>(500, 2, 1).unwrap();
        let act = Activation::logistic();
        let h = FuncH::logistic(vec![0.2, 0.3], -0.4).unwrap();
        assert_eq!(h1_distance_sq(&h, &h, &m, &act).unwrap(), 0.0);
        assert_eq!(
            h1_distance_sq(&FuncH::Zero, &FuncH::Zero, &m, &act).unwrap(),
            0.0
        );
    }

    #[test]
    fn activation_norm_bound() {
        let m = sample_lambda::<f64>(2000, 3, 2).unwrap();
        let act = Activation::logistic();
        let bound = 1.0 + act.c_sigma() * act.c_sigma();
        for (a, b) in [
            (vec![0.0, 0.0, 1.0], 5.0),
            (vec![0.5, 0.5, 0.5], -1.0),
            (vec![1.0, 0.0, 0.0], 0.0),
        ] {
            let h = FuncH::logistic(a, b).unwrap();
            let v = h1_distance_sq(&h, &FuncH::Zero, &m, &act).unwrap();
            assert!(v > 0.0 && v <= bound);
        }
    }

    #[test]
    fn symmetric() {
        let m = sample_lambda::<f64>(300, 1, 3).unwrap();
        let act = Activation::logistic();
        let p = FuncH::logistic(vec![0.9], 0.1).unwrap();
        let q = FuncH::logistic(vec![-0.4], 0.7).unwrap();
        assert_eq!(
            h1_distance_sq(&p, &q, &m, &act).unwrap(),
            h1_distance_sq(&q, &p, &m, &act).unwrap()
        );
    }
}
