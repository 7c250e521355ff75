//! Utility machinery: the CRRA core utility, its S-shaped extension, the
//! mortality-mixed utility above the bonus threshold and the inverse
//! marginal utilities used to express optimal wealth.

use serde::{Deserialize, Serialize};

use crate::contract::{ContractKind, ContractParams};
use crate::error::{invalid, Error, Result};

/// A utility on (0, ∞) satisfying the Inada and asymptotic-elasticity conditions.
pub trait Utility {
    fn value(&self, x: f64) -> f64;
    fn marginal(&self, x: f64) -> f64;
    /// Inverse of the marginal utility.
    fn inv_marginal(&self, y: f64) -> f64;
    /// Second derivative.
    fn curvature(&self, x: f64) -> f64;
    /// lim_{x↓0} U(x); may be −∞.
    fn value_at_zero(&self) -> f64;
}

/// Power utility x^{1−γ}/(1−γ), logarithmic for γ = 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Crra {
    pub gamma: f64,
}

impl Crra {
    pub fn new(gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(invalid("gamma", format!("must be > 0, got {gamma}")));
        }
        Ok(Self { gamma })
    }

    pub fn is_log(&self) -> bool {
        self.gamma == 1.0
    }

    /// Exponent p with I(y) = y^p.
    pub fn inv_exponent(&self) -> f64 {
        -1.0 / self.gamma
    }
}

impl Utility for Crra {
    fn value(&self, x: f64) -> f64 {
        if self.is_log() {
            x.ln()
        } else if x == 0.0 {
            self.value_at_zero()
        } else {
            x.powf(1.0 - self.gamma) / (1.0 - self.gamma)
        }
    }

    fn marginal(&self, x: f64) -> f64 {
        x.powf(-self.gamma)
    }

    fn inv_marginal(&self, y: f64) -> f64 {
        y.powf(-1.0 / self.gamma)
    }

    fn curvature(&self, x: f64) -> f64 {
        -self.gamma * x.powf(-self.gamma - 1.0)
    }

    fn value_at_zero(&self) -> f64 {
        if self.gamma < 1.0 {
            0.0
        } else {
            f64::NEG_INFINITY
        }
    }
}

/// δ̃_ε = (1−δ̃)(1−ε) + ε, the slope weight of U_ε′ at the bonus threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MortalityMix {
    pub delta_eps: f64,
}

impl MortalityMix {
    pub fn new(contract: &ContractParams, epsilon: f64) -> Self {
        Self {
            delta_eps: (1.0 - contract.tilde_delta) * (1.0 - epsilon) + epsilon,
        }
    }
}

/// Preferences of the equity holder.
///
/// Losses are valued on their magnitude m > 0 as U_lo(m) = η·U(m). The
/// death probability ε weights the loss term by ε for a defaultable
/// contract and by 1 for a fully protected one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSpec {
    pub gamma: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub kind: ContractKind,
}

impl PreferenceSpec {
    pub fn new(gamma: f64, eta: f64, epsilon: f64, kind: ContractKind) -> Result<Self> {
        let p = Self {
            gamma,
            eta,
            epsilon,
            kind,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        Crra::new(self.gamma)?;
        if !(self.eta >= 1.0 && self.eta.is_finite()) {
            return Err(invalid("eta", format!("must be >= 1, got {}", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.epsilon) {
            return Err(invalid(
                "epsilon",
                format!("must lie in [0,1], got {}", self.epsilon),
            ));
        }
        Ok(())
    }

    pub fn utility(&self) -> Crra {
        Crra { gamma: self.gamma }
    }

    /// True when U(0) is finite, so that the loss region has bounded disutility
    /// and concavification is required.
    pub fn bounded_below(&self) -> bool {
        self.utility().value_at_zero().is_finite()
    }

    pub fn u(&self, x: f64) -> Result<f64> {
        positive("x", x)?;
        Ok(self.utility().value(x))
    }

    pub fn u_prime(&self, x: f64) -> Result<f64> {
        positive("x", x)?;
        Ok(self.utility().marginal(x))
    }

    pub fn inv_marginal(&self, y: f64) -> Result<f64> {
        positive("y", y)?;
        Ok(self.utility().inv_marginal(y))
    }

    /// Loss weight ε_j: ε for a defaultable contract, 1 under full protection.
    pub fn loss_weight(&self) -> f64 {
        match self.kind {
            ContractKind::Defaultable => self.epsilon,
            ContractKind::FullyProtected => 1.0,
        }
    }

    /// U_lo(m) = η·U(m) for a loss of magnitude m ≥ 0.
    pub fn loss_utility(&self, magnitude: f64) -> f64 {
        self.eta * self.utility().value(magnitude)
    }

    /// Upper bound q of the loss disutility when wealth may fall to `floor`:
    /// ε_j·U_lo(L_T − floor). Infinite when U(0) = −∞, zero when the floor
    /// is at or above the guarantee.
    pub fn loss_bound(&self, contract: &ContractParams, floor: f64) -> f64 {
        if !self.bounded_below() {
            return f64::INFINITY;
        }
        let magnitude = contract.guarantee - floor;
        if magnitude <= 0.0 {
            return 0.0;
        }
        let w = self.loss_weight();
        if w == 0.0 {
            0.0
        } else {
            w * self.loss_utility(magnitude)
        }
    }

    /// q_j = ε_j·U_lo(L_T).
    pub fn q(&self, contract: &ContractParams) -> f64 {
        self.loss_bound(contract, 0.0)
    }

    pub fn mix(&self, contract: &ContractParams) -> MortalityMix {
        MortalityMix::new(contract, self.epsilon)
    }

    /// True when U_ε(x) ≡ U(x − L_T), i.e. ε = 1 or no bonus sharing.
    pub(crate) fn mixture_is_shifted_utility(&self, contract: &ContractParams) -> bool {
        self.epsilon == 1.0 || contract.tilde_delta == 0.0
    }

    /// U_ε(x) = (1−ε)U(f(x)) + εU(x − L_T) for x ≥ L̃_T.
    pub fn u_eps(&self, contract: &ContractParams, x: f64) -> Result<f64> {
        above_threshold(contract, x)?;
        Ok(self.u_eps_raw(contract, x))
    }

    pub fn u_eps_prime(&self, contract: &ContractParams, x: f64) -> Result<f64> {
        above_threshold(contract, x)?;
        Ok(self.u_eps_prime_raw(contract, x))
    }

    pub(crate) fn u_eps_raw(&self, c: &ContractParams, x: f64) -> f64 {
        let u = self.utility();
        let e = self.epsilon;
        let mut v = 0.0;
        if e < 1.0 {
            v += (1.0 - e) * u.value(c.f_slope(x));
        }
        if e > 0.0 {
            v += e * u.value(x - c.guarantee);
        }
        v
    }

    pub(crate) fn u_eps_prime_raw(&self, c: &ContractParams, x: f64) -> f64 {
        let u = self.utility();
        let e = self.epsilon;
        let mut v = 0.0;
        if e < 1.0 {
            v += (1.0 - e) * (1.0 - c.tilde_delta) * u.marginal(c.f_slope(x));
        }
        if e > 0.0 {
            v += e * u.marginal(x - c.guarantee);
        }
        v
    }

    pub(crate) fn u_eps_second_raw(&self, c: &ContractParams, x: f64) -> f64 {
        let u = self.utility();
        let e = self.epsilon;
        let k = 1.0 - c.tilde_delta;
        let mut v = 0.0;
        if e < 1.0 {
            v += (1.0 - e) * k * k * u.curvature(c.f_slope(x));
        }
        if e > 0.0 {
            v += e * u.curvature(x - c.guarantee);
        }
        v
    }

    /// h(y) = [I(y/(1−δ̃)) + (1−δ)L_T]/(1−δ̃) on (0, (1−δ̃)U′(L̂_T)].
    pub fn h_map(&self, contract: &ContractParams, y: f64) -> Result<f64> {
        let top = (1.0 - contract.tilde_delta) * self.utility().marginal(contract.gap);
        if !(y > 0.0 && y <= top * (1.0 + 1e-14)) {
            return Err(Error::Domain(format!(
                "h is defined on (0, {top}], got {y}"
            )));
        }
        Ok(self.h_raw(contract, y))
    }

    pub(crate) fn h_raw(&self, c: &ContractParams, y: f64) -> f64 {
        let k = 1.0 - c.tilde_delta;
        (self.utility().inv_marginal(y / k) + (1.0 - c.delta) * c.guarantee) / k
    }

    /// Bracket [lower, upper] containing I_ε(y), from U′(f(x)) ≥ U′(x − L_T).
    pub fn inv_marginal_eps_bounds(&self, c: &ContractParams, y: f64) -> (f64, f64) {
        let de = self.mix(c).delta_eps;
        let i = self.utility().inv_marginal(y / de);
        let lower = i + c.guarantee;
        let upper = (i + (1.0 - c.delta) * c.guarantee) / (1.0 - c.tilde_delta);
        (lower, upper)
    }

    /// I_ε = (U_ε′)⁻¹ on (0, U_ε′(L̃_T)].
    pub fn inv_marginal_eps(&self, contract: &ContractParams, y: f64) -> Result<f64> {
        let top = self.u_eps_prime_raw(contract, contract.bonus_threshold);
        if !(y > 0.0 && y <= top * (1.0 + 1e-14)) {
            return Err(Error::Domain(format!(
                "I_eps is defined on (0, {top}], got {y}"
            )));
        }
        Ok(self.inv_marginal_eps_raw(contract, y))
    }

    pub(crate) fn inv_marginal_eps_raw(&self, c: &ContractParams, y: f64) -> f64 {
        if self.mixture_is_shifted_utility(c) {
            return c.guarantee + self.utility().inv_marginal(y);
        }
        if self.epsilon == 0.0 {
            return self.h_raw(c, y);
        }
        let (lower, upper) = self.inv_marginal_eps_bounds(c, y);
        let mut lo = lower.max(c.bonus_threshold);
        let mut hi = upper.max(lo);
        // U_ε′ is convex and decreasing: Newton from the left end stays left
        // of the root, so the bracket only serves as a safeguard.
        let mut x = lo;
        for _ in 0..200 {
            let fx = self.u_eps_prime_raw(c, x) - y;
            if fx == 0.0 {
                return x;
            }
            if fx > 0.0 {
                lo = x;
            } else {
                hi = x;
            }
            let d = self.u_eps_second_raw(c, x);
            let mut next = x - fx / d;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = 0.5 * (lo + hi);
            }
            if (next - x).abs() <= 1e-15 * x || hi - lo <= 1e-15 * hi {
                return next;
            }
            x = next;
        }
        x
    }

    /// U^S: U on gains, −U_lo(−x) on losses (−∞ when U(0) = −∞).
    pub fn s_utility(&self, x: f64) -> f64 {
        let u = self.utility();
        if x > 0.0 {
            u.value(x)
        } else if x == 0.0 {
            u.value_at_zero()
        } else if self.bounded_below() {
            -self.loss_utility(-x)
        } else {
            f64::NEG_INFINITY
        }
    }

    /// Ũ^{S,j,ε}(x) = (1−ε)U^S(V_E^j(x)) + εU^S(x − L_T), evaluated straight
    /// from the contract payoffs.
    pub fn derived_utility(&self, contract: &ContractParams, x: f64) -> f64 {
        let e = self.epsilon;
        let mut v = 0.0;
        if e < 1.0 {
            let equity = contract.equity_unchecked(self.kind, x);
            v += (1.0 - e) * self.s_utility(equity);
        }
        if e > 0.0 {
            v += e * self.s_utility(x - contract.guarantee);
        }
        v
    }
}

fn positive(name: &'static str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!("{name} must be positive, got {v}")))
    }
}

fn above_threshold(c: &ContractParams, x: f64) -> Result<()> {
    if x >= c.bonus_threshold {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "x = {x} lies below the bonus threshold {}",
            c.bonus_threshold
        )))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn contract() -> ContractParams {
        ContractParams::new(100.0, 0.4, 0.6, 0.02, 10.0)
            .unwrap()
            .with_guarantee(50.0 * 0.2f64.exp())
            .unwrap()
    }

    fn prefs(eps: f64) -> PreferenceSpec {
        PreferenceSpec::new(0.5, 1.01, eps, ContractKind::Defaultable).unwrap()
    }

    #[test]
    fn validation() {
        assert!(PreferenceSpec::new(0.0, 1.0, 0.0, ContractKind::Defaultable).is_err());
        assert!(PreferenceSpec::new(0.5, 0.9, 0.0, ContractKind::Defaultable).is_err());
        assert!(PreferenceSpec::new(0.5, 1.0, 1.1, ContractKind::Defaultable).is_err());
        assert!(PreferenceSpec::new(1.0, 1.0, 0.0, ContractKind::Defaultable).is_ok());
    }

    #[test]
    fn crra_basics() {
        let p = prefs(0.0);
        assert_eq!(p.inv_marginal(1.0).unwrap(), 1.0);
        assert!((p.inv_marginal(4.0).unwrap() - 1.0 / 16.0).abs() < 1e-16);
        assert!(p.u(0.0).is_err());
        assert!(p.inv_marginal(-1.0).is_err());
        for g in [0.3, 0.5, 1.0, 2.0, 5.0] {
            let p = PreferenceSpec::new(g, 1.0, 0.0, ContractKind::Defaultable).unwrap();
            for k in -60..=60 {
                let x = 10f64.powf(k as f64 / 10.0);
                let back = p.inv_marginal(p.u_prime(x).unwrap()).unwrap();
                assert!((back / x - 1.0).abs() < 1e-12, "gamma={g} x={x}");
            }
        }
        let log = PreferenceSpec::new(1.0, 1.0, 0.0, ContractKind::Defaultable).unwrap();
        assert!((log.u(std::f64::consts::E).unwrap() - 1.0).abs() < 1e-15);
        assert!(!log.bounded_below());
        assert!(prefs(0.0).bounded_below());
    }

    #[test]
    fn mixture_limits() {
        let c = contract();
        let x = 1.7 * c.bonus_threshold;
        let u = prefs(0.0).utility();
        assert!((prefs(0.0).u_eps(&c, x).unwrap() - u.value(c.f_slope(x))).abs() < 1e-12);
        assert!((prefs(1.0).u_eps(&c, x).unwrap() - u.value(x - c.guarantee)).abs() < 1e-12);
        for eps in [0.0, 0.1, 0.5, 1.0] {
            let v = prefs(eps).u_eps(&c, c.bonus_threshold).unwrap();
            assert!((v - u.value(c.gap)).abs() < 1e-12);
            let lo = u.value(c.f_slope(x));
            let hi = u.value(x - c.guarantee);
            let mid = prefs(eps).u_eps(&c, x).unwrap();
            assert!(lo - 1e-12 <= mid && mid <= hi + 1e-12);
        }
        assert!(prefs(0.1).u_eps(&c, c.guarantee).is_err());
    }

    #[test]
    fn marginal_jump_at_bonus_threshold() {
        let c = contract();
        let p = prefs(0.1);
        let right = p.u_eps_prime(&c, c.bonus_threshold).unwrap();
        let left = p.utility().marginal(c.gap);
        let de = p.mix(&c).delta_eps;
        assert!((right - de * left).abs() < 1e-14);
        assert!(right < left);
        assert!((prefs(0.0).mix(&c).delta_eps - (1.0 - c.tilde_delta)).abs() < 1e-15);
        assert_eq!(prefs(1.0).mix(&c).delta_eps, 1.0);
    }

    #[test]
    fn h_map_properties() {
        let c = contract();
        let p = prefs(0.0);
        let top = (1.0 - c.tilde_delta) * p.utility().marginal(c.gap);
        assert!((p.h_map(&c, top).unwrap() / c.bonus_threshold - 1.0).abs() < 1e-13);
        assert!(p.h_map(&c, 1e-12).unwrap() > 1e20);
        assert!(p.h_map(&c, top * 1.01).is_err());
        assert!(p.h_map(&c, 0.0).is_err());
        let mut prev = f64::INFINITY;
        for k in 1..100 {
            let v = p.h_map(&c, top * k as f64 / 100.0).unwrap();
            assert!(v < prev);
            prev = v;
        }
        let nb = ContractParams::new(100.0, 0.4, 0.0, 0.02, 10.0).unwrap();
        let y = 0.05;
        let expect = p.utility().inv_marginal(y) + nb.guarantee;
        assert!((p.h_map(&nb, y).unwrap() - expect).abs() < 1e-10);
    }

    #[test]
    fn inverse_mixture_limits() {
        let c = contract();
        let y = 0.05;
        let h = prefs(0.0).h_map(&c, y).unwrap();
        assert_eq!(prefs(0.0).inv_marginal_eps(&c, y).unwrap(), h);
        let shifted = c.guarantee + prefs(1.0).utility().inv_marginal(y);
        assert!((prefs(1.0).inv_marginal_eps(&c, y).unwrap() - shifted).abs() < 1e-12);
        let p = prefs(0.1);
        let top = p.u_eps_prime(&c, c.bonus_threshold).unwrap();
        assert!(p.inv_marginal_eps(&c, top * 1.001).is_err());
        assert!((p.inv_marginal_eps(&c, top).unwrap() / c.bonus_threshold - 1.0).abs() < 1e-12);
    }

    #[test]
    fn inverse_mixture_residual_and_bracket() {
        let c = contract();
        let p = prefs(0.1);
        let top = p.u_eps_prime(&c, c.bonus_threshold).unwrap();
        for k in 0..200 {
            let y = top * 10f64.powf(-(k as f64) / 25.0);
            let x = p.inv_marginal_eps(&c, y).unwrap();
            let res = (p.u_eps_prime(&c, x).unwrap() - y).abs() / y;
            assert!(res <= 1e-10, "y={y} res={res}");
            let (lo, hi) = p.inv_marginal_eps_bounds(&c, y);
            assert!(lo <= x * (1.0 + 1e-12) && x <= hi * (1.0 + 1e-12));
        }
    }

    #[test]
    fn derived_utility_branches() {
        let c = contract();
        let lt = c.guarantee;
        let p = prefs(0.0);
        assert_eq!(p.derived_utility(&c, 0.5 * lt), 0.0);
        let np = PreferenceSpec::new(0.5, 1.01, 0.0, ContractKind::FullyProtected).unwrap();
        let v = np.derived_utility(&c, 0.5 * lt);
        assert!((v + 1.01 * 2.0 * (0.5 * lt).sqrt()).abs() < 1e-12);
        assert!((np.q(&c) - 1.01 * 2.0 * lt.sqrt()).abs() < 1e-12);
        assert_eq!(p.q(&c), 0.0);
        let pe = prefs(0.1);
        assert!((pe.q(&c) - 0.1 * 1.01 * 2.0 * lt.sqrt()).abs() < 1e-12);
        assert!(pe.q(&c) < np.q(&c));
        // mixture identity above the threshold
        let x = 2.0 * c.bonus_threshold;
        assert!((pe.derived_utility(&c, x) - pe.u_eps(&c, x).unwrap()).abs() < 1e-12);
        // gain region between guarantee and bonus threshold
        let x = 0.5 * (lt + c.bonus_threshold);
        assert!((pe.derived_utility(&c, x) - pe.utility().value(x - lt)).abs() < 1e-12);
        // losses: −ε_j U_lo(L − x)
        let x = 0.3 * lt;
        assert!((pe.derived_utility(&c, x) + 0.1 * pe.loss_utility(lt - x)).abs() < 1e-12);
        let log = PreferenceSpec::new(1.0, 1.0, 0.0, ContractKind::FullyProtected).unwrap();
        assert_eq!(log.derived_utility(&c, 0.5 * lt), f64::NEG_INFINITY);
        assert_eq!(log.q(&c), f64::INFINITY);
    }

    #[test]
    fn assumption_u_moments_are_finite() {
        // E[ξ I(λξ)] and E[U(I(λξ)/(1−δ̃))] reduce to lognormal moments.
        let law = crate::market::MarketParams::new(0.05, 0.03, 0.3, 10.0)
            .unwrap()
            .state_price_law(10.0)
            .unwrap();
        let c = contract();
        for g in [0.3, 0.5, 2.0, 4.0] {
            let p = PreferenceSpec::new(g, 1.0, 0.0, ContractKind::Defaultable).unwrap();
            let lam: f64 = 0.1;
            let exp = p.utility().inv_exponent();
            let budget = lam.powf(exp) * law.partial_moment(1.0 + exp, 0.0, f64::INFINITY);
            assert!(budget.is_finite() && budget > 0.0);
            let k = 1.0 / (1.0 - c.tilde_delta);
            let a = exp * (1.0 - g);
            let eu = (k * lam.powf(exp)).powf(1.0 - g) / (1.0 - g)
                * law.partial_moment(a, 0.0, f64::INFINITY);
            assert!(eu.is_finite());
        }
    }

    proptest! {
        #[test]
        fn inverse_mixture_round_trip(eps in 0.0f64..=1.0, scale in 1.0f64..1e4) {
            let c = contract();
            let p = prefs(eps);
            let x = c.bonus_threshold * scale;
            let y = p.u_eps_prime(&c, x).unwrap();
            let back = p.inv_marginal_eps(&c, y).unwrap();
            prop_assert!((back / x - 1.0).abs() < 1e-8);
        }

        #[test]
        fn mixture_marginal_decreasing(eps in 0.0f64..=1.0, a in 1.0f64..100.0, b in 1.0f64..100.0) {
            let c = contract();
            let p = prefs(eps);
            let (x1, x2) = (c.bonus_threshold * a.min(b), c.bonus_threshold * a.max(b));
            prop_assume!(x2 > x1 * (1.0 + 1e-9));
            prop_assert!(p.u_eps_prime(&c, x1).unwrap() > p.u_eps_prime(&c, x2).unwrap());
        }
    }
}
