//! Constant-coefficient Black–Scholes market and the lognormal law of the
//! state-price density.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::normal;

/// Number of draws generated from one RNG substream.
pub const SAMPLE_BLOCK: usize = 8192;

/// Drift, short rate and volatility of a one-asset market over `[0, horizon]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MarketParams {
    pub mu: f64,
    pub r: f64,
    pub sigma: f64,
    pub horizon: f64,
}

impl MarketParams {
    pub fn new(mu: f64, r: f64, sigma: f64, horizon: f64) -> Result<Self> {
        let p = Self {
            mu,
            r,
            sigma,
            horizon,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.mu.is_finite() {
            return Err(invalid("mu", "must be finite"));
        }
        if !(self.r >= 0.0 && self.r.is_finite()) {
            return Err(invalid("r", format!("must be >= 0, got {}", self.r)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(invalid("sigma", format!("must be > 0, got {}", self.sigma)));
        }
        if !(self.horizon > 0.0 && self.horizon.is_finite()) {
            return Err(invalid(
                "horizon",
                format!("must be > 0, got {}", self.horizon),
            ));
        }
        Ok(())
    }

    /// Market price of risk θ = (μ − r)/σ.
    pub fn theta(&self) -> f64 {
        (self.mu - self.r) / self.sigma
    }

    /// Law of ξ_t for 0 < t ≤ horizon.
    pub fn state_price_law(&self, t: f64) -> Result<StatePriceLaw> {
        if !(t > 0.0) {
            return Err(Error::Domain(format!("time must be positive, got {t}")));
        }
        if t > self.horizon * (1.0 + 1e-12) {
            return Err(Error::Domain(format!(
                "time {t} exceeds the horizon {}",
                self.horizon
            )));
        }
        Ok(self.law_over(t))
    }

    /// Law of ξ_{s+τ}/ξ_s, which only depends on the length τ > 0.
    pub(crate) fn law_over(&self, tau: f64) -> StatePriceLaw {
        let theta = self.theta();
        StatePriceLaw {
            theta,
            log_mean: -(self.r + 0.5 * theta * theta) * tau,
            log_sd: theta.abs() * tau.sqrt(),
            t: tau,
        }
    }
}

/// ln ξ_t ~ Normal(log_mean, log_sd²).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StatePriceLaw {
    pub theta: f64,
    pub log_mean: f64,
    pub log_sd: f64,
    pub t: f64,
}

impl StatePriceLaw {
    /// True when θ = 0 and ξ_t is the constant e^{−rt}.
    pub fn is_degenerate(&self) -> bool {
        self.log_sd == 0.0
    }

    pub fn mean(&self) -> f64 {
        (self.log_mean + 0.5 * self.log_sd * self.log_sd).exp()
    }

    pub fn median(&self) -> f64 {
        self.log_mean.exp()
    }

    /// Standardized coordinate of a level, with ln 0 = −∞.
    pub fn z_of(&self, x: f64) -> f64 {
        if x <= 0.0 {
            f64::NEG_INFINITY
        } else if x == f64::INFINITY {
            f64::INFINITY
        } else {
            (x.ln() - self.log_mean) / self.log_sd
        }
    }

    pub fn xi_at(&self, z: f64) -> f64 {
        (self.log_mean + self.log_sd * z).exp()
    }

    /// P(ξ_t > x).
    pub fn tail_probability(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            return if self.median() > x { 1.0 } else { 0.0 };
        }
        normal::sf(self.z_of(x))
    }

    /// P(ξ_t ≤ x).
    pub fn cdf(&self, x: f64) -> f64 {
        if self.is_degenerate() {
            return if self.median() <= x { 1.0 } else { 0.0 };
        }
        normal::cdf(self.z_of(x))
    }

    /// Level ξ̄ with P(ξ_t > ξ̄) = beta.
    pub fn quantile_upper(&self, beta: f64) -> Result<f64> {
        if !(beta > 0.0 && beta < 1.0) {
            return Err(Error::Domain(format!("beta must lie in (0,1), got {beta}")));
        }
        if self.is_degenerate() {
            return Err(Error::DegenerateMarket);
        }
        // z_{1-β} = -Φ⁻¹(β) keeps full precision for small β.
        let z = -normal::quantile(beta);
        Ok(self.xi_at(z))
    }

    /// E[ξ^a · 1{lo ≤ ξ < hi}] via the lognormal partial-moment formula.
    pub fn partial_power_expectation(&self, a: f64, lo: f64, hi: f64) -> Result<f64> {
        if a.is_nan() || lo.is_nan() || hi.is_nan() {
            return Err(Error::Domain("NaN argument".into()));
        }
        if lo > hi {
            return Err(Error::Domain(format!("lo = {lo} exceeds hi = {hi}")));
        }
        Ok(self.partial_moment(a, lo, hi))
    }

    pub(crate) fn partial_moment(&self, a: f64, lo: f64, hi: f64) -> f64 {
        if hi <= lo {
            return 0.0;
        }
        let (m, s) = (self.log_mean, self.log_sd);
        if self.is_degenerate() {
            let c = m.exp();
            return if lo <= c && c < hi { c.powf(a) } else { 0.0 };
        }
        let shift = m + a * s * s;
        let d = |x: f64| {
            if x <= 0.0 {
                f64::NEG_INFINITY
            } else if x == f64::INFINITY {
                f64::INFINITY
            } else {
                (x.ln() - shift) / s
            }
        };
        (a * m + 0.5 * a * a * s * s).exp() * normal::interval_probability(d(lo), d(hi))
    }

    /// Draws n samples of ξ_t. The output depends only on (n, seed, antithetic).
    pub fn sample_xi(&self, n: usize, seed: u64, antithetic: bool) -> Result<Vec<f64>> {
        let mut z = standard_normals(n, seed, antithetic)?;
        for v in z.iter_mut() {
            *v = self.xi_at(*v);
        }
        Ok(z)
    }
}

/// Standard normal draws in fixed-size blocks, each block on its own ChaCha
/// stream so the result is identical for any thread count. With `antithetic`
/// the draws come in pairs (z, −z).
pub fn standard_normals(n: usize, seed: u64, antithetic: bool) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(Error::Domain("sample size must be at least 1".into()));
    }
    let mut out = vec![0.0; n];
    out.par_chunks_mut(SAMPLE_BLOCK)
        .enumerate()
        .for_each(|(block, chunk)| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            if antithetic {
                let mut i = 0;
                while i < chunk.len() {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    chunk[i] = z;
                    if i + 1 < chunk.len() {
                        chunk[i + 1] = -z;
                    }
                    i += 2;
                }
            } else {
                for v in chunk.iter_mut() {
                    *v = StandardNormal.sample(&mut rng);
                }
            }
        });
    Ok(out)
}
