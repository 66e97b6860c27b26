//! Standard normal density, distribution and quantile functions.

use std::f64::consts::{PI, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

pub fn pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Inverse of [`cdf`] on `(0, 1)`; returns `-inf` / `+inf` at the endpoints.
pub fn quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    let x = -SQRT_2 * erfc_inv(2.0 * p);
    let d = pdf(x);
    if d > 0.0 {
        x - (cdf(x) - p) / d
    } else {
        x
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // reference values from mpmath at 50 digits
    const CDF_REF: [(f64, f64); 6] = [
        (0.0, 0.5),
        (1.0, 0.841_344_746_068_542_9),
        (-1.0, 0.158_655_253_931_457_05),
        (-3.5, 2.326_290_790_355_250_4e-4),
        (2.5, 0.993_790_334_674_223_8),
        (-8.0, 6.220_960_574_271_785e-16),
    ];

    const QUANTILE_REF: [(f64, f64); 6] = [
        (0.5, 0.0),
        (1.0 / 6.0, -0.967_421_566_101_701),
        (5.0 / 6.0, 0.967_421_566_101_701),
        (0.975, 1.959_963_984_540_054),
        (1e-6, -4.753_424_308_822_899),
        (0.01 / 100.0, -3.719_016_485_455_680_6),
    ];

    #[test]
    fn cdf_matches_reference() {
        for (x, p) in CDF_REF {
            assert!((cdf(x) - p).abs() <= 1e-12, "cdf({x}) = {} vs {p}", cdf(x));
        }
    }

    #[test]
    fn quantile_matches_reference() {
        for (p, x) in QUANTILE_REF {
            assert!(
                (quantile(p) - x).abs() <= 1e-10,
                "quantile({p}) = {} vs {x}",
                quantile(p)
            );
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for i in 1..2000 {
            let p = i as f64 / 2000.0;
            assert!((cdf(quantile(p)) - p).abs() < 1e-13);
        }
    }

    #[test]
    fn pdf_at_zero() {
        assert!((pdf(0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }
}
