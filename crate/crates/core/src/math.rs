#[inline]
pub(crate) fn exp(x: f64) -> f64 {
    libm::exp(x)
}

#[inline]
pub(crate) fn ln(x: f64) -> f64 {
    libm::log(x)
}

/// `log(sum(exp(x)))` over a slice, stable for large magnitudes.
pub(crate) fn logsumexp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    let mut sum = 0.0;
    for &x in xs {
        sum += exp(x - max);
    }
    max + ln(sum)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn logsumexp_matches_direct_sum() {
        let xs = [0.5, 2.0, -1.0];
        let direct = ln(exp(0.5) + exp(2.0) + exp(-1.0));
        assert!((logsumexp(&xs) - direct).abs() < 1e-15);
    }

    #[test]
    fn logsumexp_large_values() {
        let xs = [1234.0, 1232.0];
        let expected = 1234.0 + ln(1.0 + exp(-2.0));
        assert!((logsumexp(&xs) - expected).abs() < 1e-12);
        assert_eq!(logsumexp(&[]), f64::NEG_INFINITY);
        assert_eq!(logsumexp(&[f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
