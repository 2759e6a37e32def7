//! Reference computations for the statistical test suites.
//!
//! Nothing here calls into the sampler's own marginal-likelihood code: the
//! cluster marginal is recomputed from the multivariate-t form or by direct
//! numerical integration, and label posteriors by brute-force enumeration.

pub mod enumerate;
pub mod quadrature;
pub mod stats;
pub mod xi;

/// `ln sum exp(v)`, `-inf` for an empty or all `-inf` input.
pub fn log_sum_exp(v: &[f64]) -> f64 {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + v.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}
