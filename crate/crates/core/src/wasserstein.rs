use crate::error::{domain, Result};
use crate::scalar::Scalar;

/// Exact `W₁` between two empirical distributions on the real line,
/// `∫ |F_a(x) − F_b(x)| dx`, for samples of any (possibly unequal) sizes.
pub fn wasserstein1<T: Scalar>(a: &[T], b: &[T]) -> Result<T> {
    if a.is_empty() || b.is_empty() {
        return Err(domain("Wasserstein distance of an empty sample"));
    }
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(|p, q| p.partial_cmp(q).expect("finite samples"));
    b.sort_by(|p, q| p.partial_cmp(q).expect("finite samples"));
    let (na, nb) = (T::from_usize_lossy(a.len()), T::from_usize_lossy(b.len()));
    let (mut i, mut j) = (0usize, 0usize);
    let mut prev = a[0].min(b[0]);
    let mut total = T::zero();
    while i < a.len() || j < b.len() {
        let next = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => unreachable!(),
        };
        let fa = T::from_usize_lossy(i) / na;
        let fb = T::from_usize_lossy(j) / nb;
        total = total + (fa - fb).abs() * (next - prev);
        while i < a.len() && a[i] <= next {
            i += 1;
        }
        while j < b.len() && b[j] <= next {
            j += 1;
        }
        prev = next;
    }
    Ok(total)
}
