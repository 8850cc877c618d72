//! Exponential-moment boundaries estimated from a sample.
//!
//! For a tail `P(X > x) ~ C e^{-theta x}` the excesses over a high order
//! statistic are approximately Exp(theta), so the reciprocal mean excess of the
//! top `k` observations estimates `theta` (Hill's estimator applied on the
//! exponential scale). The reported value is the lower end of a normal
//! confidence interval, `theta_hat (1 - 1.96 / sqrt(k))`, clamped at 0.

use crate::xreal::{XReal, PosInfinity};

/// Number of upper order statistics used for a sample of size `n`.
pub fn tail_count(n: usize) -> usize {
    ((n as f64).sqrt().floor() as usize).max(2).min(n.saturating_sub(1))
}

/// Lower-bound estimate of `sup { theta : E e^{theta X} < inf }` for `X >= 0`.
pub fn exp_tail_rate_lower_bound(values: &[f64]) -> XReal {
    let k = tail_count(values.len());
    if k == 0 {
        return PosInfinity;
    }
    let mut sorted: Vec<f64> = values.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let threshold = sorted[k];
    let excess: f64 = sorted[..k].iter().map(|v| v - threshold).sum::<f64>() / k as f64;
    if excess <= 0.0 {
        return PosInfinity;
    }
    let theta_hat = 1.0 / excess;
    XReal::Finite((theta_hat * (1.0 - 1.96 / (k as f64).sqrt())).max(0.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, Exp};

    #[test]
    fn constant_sample_has_no_tail() {
        assert_eq!(exp_tail_rate_lower_bound(&[1.0; 50]), PosInfinity);
        assert_eq!(exp_tail_rate_lower_bound(&[3.0]), PosInfinity);
    }

    #[test]
    fn exponential_sample_is_bounded_by_true_rate() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = Exp::new(2.0).unwrap();
        let xs: Vec<f64> = (0..40_000).map(|_| d.sample(&mut rng)).collect();
        let est = exp_tail_rate_lower_bound(&xs).finite().unwrap();
        assert!(est > 1.0 && est < 2.2, "{est}");
    }
}
