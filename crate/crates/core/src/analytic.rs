//! Closed-form long-run frequency of the two-form learner.
//!
//! With `lambda = nu / (1 - nu)` the stationary mass on state `m` is
//! proportional to `lambda^m`, and its mean `P(L, nu)` is
//!
//! ```text
//! P(L, nu) = 1 + (1/L) * ( (L+1) / (lambda^(L+1) - 1) - 1 / (lambda - 1) )
//! ```

/// Below this distance from `lambda = 1` the formula is replaced by its limit 1/2.
pub const LAMBDA_SINGULARITY: f64 = 1e-8;

/// Exponent beyond which `lambda^(L+1)` is evaluated in log space.
const LOG_SPACE_EXPONENT: f64 = 700.0;

/// Expected learner frequency of form 1 under a two-form source emitting
/// form 1 with probability `nu`, for capacity `L` (increment `s = 1/L`).
pub fn expected_frequency(capacity: u32, nu: f64) -> f64 {
    if nu <= 0.0 {
        return 0.0;
    }
    if nu >= 1.0 {
        return 1.0;
    }
    let mu = 1.0 - nu;
    let lambda = nu / mu;
    if (lambda - 1.0).abs() < LAMBDA_SINGULARITY {
        return 0.5;
    }
    let l = capacity as f64;
    // lambda - 1 written without the cancellation of nu/mu - 1.
    let lambda_minus_one = (nu - mu) / mu;
    let exponent = (l + 1.0) * (nu.ln() - mu.ln());
    let boundary = if exponent > LOG_SPACE_EXPONENT {
        // (L+1) / (e^a - 1) = (L+1) e^-a / (1 - e^-a)
        (l + 1.0) * (-exponent).exp() / -(-exponent).exp_m1()
    } else {
        (l + 1.0) / exponent.exp_m1()
    };
    1.0 + (boundary - 1.0 / lambda_minus_one) / l
}

/// `P(L, nu) - nu`; positive whenever `nu > 1/2`.
pub fn boosting_margin(capacity: u32, nu: f64) -> f64 {
    expected_frequency(capacity, nu) - nu
}

/// Large-`L` approximation `1 - (1/L) / (lambda - 1)` for `nu > 1/2`.
pub fn large_capacity_asymptote(capacity: u32, nu: f64) -> f64 {
    let lambda = nu / (1.0 - nu);
    1.0 - 1.0 / (capacity as f64 * (lambda - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Weighted mean of the geometric profile, summed term by term.
    fn brute(capacity: u32, nu: f64) -> f64 {
        let lambda = nu / (1.0 - nu);
        let (mut num, mut den) = (0.0, 0.0);
        for m in 0..=capacity {
            let w = lambda.powi(m as i32);
            num += m as f64 / capacity as f64 * w;
            den += w;
        }
        num / den
    }

    #[test]
    fn small_capacity_value() {
        assert!((expected_frequency(2, 0.7) - 59.5 / 79.0).abs() < 1e-14);
        assert!((boosting_margin(2, 0.7) - (59.5 / 79.0 - 0.7)).abs() < 1e-14);
    }

    #[test]
    fn symmetric_point_is_exact() {
        for capacity in [2, 5, 100, 100_000] {
            assert_eq!(expected_frequency(capacity, 0.5), 0.5);
        }
        assert_eq!(boosting_margin(5, 0.5), 0.0);
    }

    #[test]
    fn degenerate_sources() {
        assert_eq!(expected_frequency(10, 0.0), 0.0);
        assert_eq!(expected_frequency(10, 1.0), 1.0);
    }

    #[test]
    fn matches_term_by_term_sum() {
        for capacity in [2u32, 3, 10, 37, 100] {
            for k in 1..20 {
                let nu = k as f64 / 20.0;
                let a = expected_frequency(capacity, nu);
                let b = brute(capacity, nu);
                assert!((a - b).abs() < 1e-12, "L={capacity} nu={nu}: {a} vs {b}");
            }
        }
    }

    #[test]
    fn reference_values() {
        assert!((expected_frequency(10, 0.7) - 0.925_098_556_882_288_6).abs() < 1e-12);
        assert!((expected_frequency(9, 0.57) - 0.729_268_398_817_508_6).abs() < 1e-12);
        assert!(expected_frequency(1000, 0.7) >= 0.999);
    }

    #[test]
    fn huge_exponent_stays_finite() {
        let p = expected_frequency(1_000_000, 0.99);
        assert!(p.is_finite() && p > 0.99999);
        let q = expected_frequency(1_000_000, 0.01);
        assert!(q.is_finite() && q < 1e-5);
    }

    #[test]
    fn near_singularity_is_continuous() {
        let p = expected_frequency(50, 0.5 + 1e-7);
        assert!((p - 0.5).abs() < 1e-4);
    }

    #[test]
    fn asymptote_is_approached() {
        let gap = (expected_frequency(1000, 0.7) - large_capacity_asymptote(1000, 0.7)).abs();
        assert!(gap < 1e-12);
    }
}
