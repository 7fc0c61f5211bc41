//! Standard normal helpers shared by the Pólya spec and the test oracles.

use statrs::distribution::{ContinuousCDF, Normal};
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 - Φ(x)` without cancellation for large `x`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

pub fn norm_quantile(u: f64) -> f64 {
    if u <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if u >= 1.0 {
        return f64::INFINITY;
    }
    // unwrap: the standard normal has valid parameters
    let x = Normal::new(0.0, 1.0).unwrap().inverse_cdf(u);
    // one Halley step polishes the statrs approximation to full precision
    let pdf = norm_pdf(x);
    if pdf == 0.0 {
        return x;
    }
    let err = if u < 0.5 {
        norm_cdf(x) - u
    } else {
        (1.0 - u) - norm_sf(x)
    };
    let step = err / pdf;
    x - step / (1.0 + 0.5 * x * step)
}
