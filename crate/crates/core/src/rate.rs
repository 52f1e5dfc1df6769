//! Log-log least-squares fits of decay exponents.

use crate::error::{domain, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateFit<T> {
    pub slope: T,
    pub intercept: T,
    /// Coefficient of determination; 1 when the data have no spread in log space.
    pub r_squared: T,
}

/// Ordinary least squares of `ln(value)` against `ln(n)`.
pub fn fit_rate<T: Scalar>(points: &[(T, T)]) -> Result<RateFit<T>> {
    if points.len() < 3 {
        return Err(domain(format!(
            "rate fit needs at least 3 points, got {}",
            points.len()
        )));
    }
    if let Some(&(n, v)) = points
        .iter()
        .find(|&&(n, v)| !(n > T::zero() && v > T::zero()))
    {
        return Err(domain(format!(
            "rate fit needs positive abscissa and values, got ({n}, {v})"
        )));
    }
    let xs: Vec<T> = points.iter().map(|p| p.0.ln()).collect();
    let ys: Vec<T> = points.iter().map(|p| p.1.ln()).collect();
    let k = T::from_usize_lossy(points.len());
    let mx = xs.iter().copied().sum::<T>() / k;
    let my = ys.iter().copied().sum::<T>() / k;
    let sxx: T = xs.iter().map(|&x| (x - mx) * (x - mx)).sum();
    if sxx <= T::zero() {
        return Err(domain("rate fit needs at least two distinct abscissae"));
    }
    let sxy: T = xs.iter().zip(&ys).map(|(&x, &y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let ss_tot: T = ys.iter().map(|&y| (y - my) * (y - my)).sum();
    let ss_res: T = xs
        .iter()
        .zip(&ys)
        .map(|(&x, &y)| {
            let r = y - (intercept + slope * x);
            r * r
        })
        .sum();
    let r_squared = if ss_tot > T::zero() {
        (T::one() - ss_res / ss_tot).max(T::zero())
    } else {
        T::one()
    };
    Ok(RateFit {
        slope,
        intercept,
        r_squared,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn exact_power_law() {
        let fit = fit_rate::<f64>(&[(10.0, 1.0), (100.0, 0.1), (1000.0, 0.01)]).unwrap();
        assert!((fit.slope + 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_values_have_zero_slope() {
        let fit = fit_rate::<f64>(&[(10.0, 0.3), (100.0, 0.3), (1000.0, 0.3)]).unwrap();
        assert!(fit.slope.abs() < 1e-15);
        assert_eq!(fit.r_squared, 1.0);
    }

    #[test]
    fn noisy_power_law_within_five_percent() {
        let mut rng = crate::rng::rng_from_seed(17);
        for _ in 0..200 {
            let pts: Vec<(f64, f64)> = [10.0, 100.0, 1000.0, 10_000.0]
                .iter()
                .map(|&n| (n, (1.0 / n) * (1.0 + rng.random_range(-0.01..0.01))))
                .collect();
            let fit = fit_rate(&pts).unwrap();
            assert!((-1.05..=-0.95).contains(&fit.slope), "{}", fit.slope);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(fit_rate(&[(1.0, 1.0), (2.0, 2.0)]).is_err());
        assert!(fit_rate(&[(1.0, 1.0), (2.0, 0.0), (3.0, 1.0)]).is_err());
        assert!(fit_rate(&[(1.0, 1.0), (1.0, 2.0), (1.0, 1.0)]).is_err());
    }
}
