//! Confidence intervals for Monte-Carlo estimates.

use statrs::distribution::{Beta, ContinuousCDF, StudentsT};

/// Two-sided Clopper–Pearson interval for a binomial proportion after `k`
/// successes in `n` trials.
///
/// # Panics
/// If `n == 0`, `k > n`, or `confidence` is not in `(0, 1)`.
pub fn clopper_pearson(k: u64, n: u64, confidence: f64) -> (f64, f64) {
    assert!(n > 0 && k <= n, "need 0 <= k <= n and n > 0");
    assert!(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0, 1)");
    let alpha = 1.0 - confidence;
    let (k, n) = (k as f64, n as f64);
    let lo = if k == 0.0 {
        0.0
    } else {
        Beta::new(k, n - k + 1.0)
            .expect("positive shape parameters")
            .inverse_cdf(alpha / 2.0)
    };
    let hi = if k == n {
        1.0
    } else {
        Beta::new(k + 1.0, n - k)
            .expect("positive shape parameters")
            .inverse_cdf(1.0 - alpha / 2.0)
    };
    (lo, hi)
}

/// Half-width of the two-sided Student-t interval for a sample mean.
///
/// # Panics
/// If `n < 2` or `confidence` is not in `(0, 1)`.
pub fn student_t_half_width(std_dev: f64, n: u64, confidence: f64) -> f64 {
    assert!(n >= 2, "a t interval needs at least two samples");
    assert!(confidence > 0.0 && confidence < 1.0, "confidence must lie in (0, 1)");
    if std_dev == 0.0 {
        return 0.0;
    }
    let t = StudentsT::new(0.0, 1.0, (n - 1) as f64)
        .expect("positive degrees of freedom")
        .inverse_cdf(1.0 - (1.0 - confidence) / 2.0);
    t * std_dev / (n as f64).sqrt()
}
