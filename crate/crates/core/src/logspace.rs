//! Log-domain arithmetic helpers.
//!
//! The explicit stability constants contain factors like `e^{C3*T}` that
//! overflow `f64` for modest arguments, so every constant and every decisive
//! inequality in the certificate machinery is evaluated on natural logarithms.
//! A value `x > 0` is represented by `ln x`; zero is `NEG_INFINITY`.

/// `ln(e^a + e^b)` without overflow.
#[inline]
pub fn log_sum_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY && b == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    if a >= b {
        a + (b - a).exp().ln_1p()
    } else {
        b + (a - b).exp().ln_1p()
    }
}

/// `ln(e^a - e^b)` for `a > b`; `NEG_INFINITY` when `a == b`.
#[inline]
pub fn log_diff_exp(a: f64, b: f64) -> f64 {
    debug_assert!(a >= b, "log_diff_exp needs a >= b, got {a} < {b}");
    if a == b {
        return f64::NEG_INFINITY;
    }
    // 1 - e^{b-a} in (0, 1]; ln of it is safe.
    a + (-(b - a).exp_m1()).ln()
}

/// `ln(e^x - 1)` for `x >= 0`, stable at both ends.
#[inline]
pub fn log_expm1(x: f64) -> f64 {
    debug_assert!(x >= 0.0, "log_expm1 needs x >= 0, got {x}");
    if x == 0.0 {
        return f64::NEG_INFINITY;
    }
    if x > 36.0 {
        // e^x - 1 == e^x * (1 - e^{-x}); the correction underflows past ~36.
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// `ln(2^x)`.
#[inline]
pub fn ln_pow2(x: f64) -> f64 {
    x * std::f64::consts::LN_2
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn log_sum_exp_matches_plain_domain() {
        let a = 0.5f64;
        let b = 2.0f64;
        assert_relative_eq!(
            log_sum_exp(a, b),
            (a.exp() + b.exp()).ln(),
            max_relative = 1e-15
        );
    }

    #[test]
    fn log_sum_exp_survives_overflow_range() {
        // ln(e^1234 + e^1232) = 1234 + ln(1 + e^-2)
        let expected = 1234.0 + (1.0f64 + (-2.0f64).exp()).ln();
        assert_relative_eq!(log_sum_exp(1234.0, 1232.0), expected, max_relative = 1e-15);
        assert!((1234.0f64.exp() + 1232.0f64.exp()).is_infinite());
    }

    #[test]
    fn log_sum_exp_neg_infinity_acts_as_zero() {
        assert_eq!(log_sum_exp(f64::NEG_INFINITY, 2.0), 2.0);
        assert_eq!(
            log_sum_exp(f64::NEG_INFINITY, f64::NEG_INFINITY),
            f64::NEG_INFINITY
        );
    }

    #[test]
    fn log_diff_exp_matches_plain_domain() {
        assert_relative_eq!(
            log_diff_exp(2.0, 0.5),
            (2.0f64.exp() - 0.5f64.exp()).ln(),
            max_relative = 1e-15
        );
        // nearly-equal arguments keep precision: ln(e^x (1 - e^-h))
        let x = 700.0;
        let h = 1e-9;
        let expected = x + (-(-h as f64).exp_m1()).ln();
        assert_relative_eq!(log_diff_exp(x, x - h), expected, max_relative = 1e-12);
    }

    #[test]
    fn log_expm1_small_and_large() {
        assert_relative_eq!(log_expm1(1e-12), (1e-12f64).ln(), max_relative = 1e-9);
        assert_relative_eq!(log_expm1(3.0), (3.0f64.exp() - 1.0).ln(), max_relative = 1e-15);
        // beyond f64 overflow the identity ln(e^x - 1) ~ x holds to machine eps
        assert_relative_eq!(log_expm1(5000.0), 5000.0, max_relative = 1e-15);
        assert_eq!(log_expm1(0.0), f64::NEG_INFINITY);
    }

    #[test]
    fn ln_pow2_matches() {
        assert_relative_eq!(ln_pow2(3.0), 8.0f64.ln(), max_relative = 1e-15);
    }
}
