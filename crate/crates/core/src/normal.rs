//! Standard normal distribution.
//!
//! Every use of Φ, Φ⁻¹ and φ in the crate goes through this module. Φ is
//! built on `libm::erfc`; the quantile starts from `statrs`' inverse erfc and
//! is polished by Newton steps against the tail carrying the mass.

use std::f64::consts::{FRAC_1_SQRT_2, SQRT_2};

use libm::erfc;
use statrs::function::erf::erfc_inv;

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Density φ(x).
pub fn pdf(x: f64) -> f64 {
    if x.is_infinite() {
        return 0.0;
    }
    FRAC_1_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Distribution function Φ(x).
pub fn cdf(x: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        0.0
    } else if x == f64::INFINITY {
        1.0
    } else {
        0.5 * erfc(-x * FRAC_1_SQRT_2)
    }
}

/// Survival function 1 − Φ(x), accurate in the upper tail.
pub fn sf(x: f64) -> f64 {
    cdf(-x)
}

/// Φ(hi) − Φ(lo), evaluated on whichever side of zero loses less precision.
pub fn interval_probability(lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return 0.0;
    }
    if lo > 0.0 {
        sf(lo) - sf(hi)
    } else {
        cdf(hi) - cdf(lo)
    }
}

/// Quantile Φ⁻¹(p) for p in (0, 1). Returns ±∞ at the endpoints and NaN outside.
pub fn quantile(p: f64) -> f64 {
    if !(0.0..=1.0).contains(&p) || p.is_nan() {
        return f64::NAN;
    }
    if p == 0.0 {
        return f64::NEG_INFINITY;
    }
    if p == 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

// Quantile for the lower tail mass `tail` (≤ 0.5). For p > 0.5 the caller
// passes tail = 1 − p, which is exact whenever p is close to 1.
fn lower_quantile(tail: f64) -> f64 {
    let mut x = -SQRT_2 * erfc_inv(2.0 * tail);
    for _ in 0..2 {
        let dens = pdf(x);
        if dens > 0.0 {
            x -= (cdf(x) - tail) / dens;
        }
    }
    x
}
