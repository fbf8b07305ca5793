//! Small shared numeric helpers: log-factorials and log-sum-exp.

/// Natural log of `n!`.
///
/// Exact product for `n <= 170` (where `n!` fits in an `f64`), Stirling's
/// series with the `1/(12n) - 1/(360n^3) + 1/(1260n^5)` correction above.
pub fn ln_factorial(n: u64) -> f64 {
    if n <= 170 {
        let mut f = 1.0f64;
        for k in 2..=n {
            f *= k as f64;
        }
        f.ln()
    } else {
        let x = n as f64;
        let x2 = x * x;
        x * x.ln() - x + 0.5 * (2.0 * std::f64::consts::PI * x).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x * x2)
            + 1.0 / (1260.0 * x * x2 * x2)
    }
}

/// `n!` as an `f64`; `f64::INFINITY` for `n > 170`.
pub fn factorial(n: u64) -> f64 {
    if n > 170 {
        return f64::INFINITY;
    }
    let mut f = 1.0f64;
    for k in 2..=n {
        f *= k as f64;
    }
    f
}

/// log(sum(exp(v))) computed against the running maximum.
pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    let sum: f64 = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}
