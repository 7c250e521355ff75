//! Piecewise terminal-wealth profiles ξ ↦ X(ξ).

use serde::{Deserialize, Serialize};

use crate::contract::ContractParams;
use crate::error::{Error, Result};
use crate::market::StatePriceLaw;
use crate::preferences::{PreferenceSpec, Utility};
use crate::quad;

/// Wealth rule on one ξ-interval of a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SegmentKind {
    /// I_ε(λξ); the closed form h(λξ) when ε = 0.
    InvMarginalEps,
    /// The bonus threshold L̃_T.
    ConstantTildeL,
    /// L_T + I(λξ).
    GuaranteePlusInv,
    /// A floor l imposed by portfolio insurance.
    ConstantFloor(f64),
    Zero,
}

impl SegmentKind {
    pub fn label(&self) -> &'static str {
        match self {
            SegmentKind::InvMarginalEps => "inv_marginal_eps",
            SegmentKind::ConstantTildeL => "constant_tilde_l",
            SegmentKind::GuaranteePlusInv => "guarantee_plus_inv",
            SegmentKind::ConstantFloor(_) => "constant_floor",
            SegmentKind::Zero => "zero",
        }
    }
}

/// X = a + b·ξ^p on a segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerForm {
    pub a: f64,
    pub b: f64,
    pub p: f64,
}

/// Segment i covers (breakpoints[i−1], breakpoints[i]], with 0 and ∞ at the
/// ends. At a breakpoint the left segment, which carries the larger wealth,
/// applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WealthProfile {
    pub breakpoints: Vec<f64>,
    pub segments: Vec<SegmentKind>,
    pub lambda: f64,
    pub contract: ContractParams,
    pub prefs: PreferenceSpec,
}

impl WealthProfile {
    pub fn new(
        breakpoints: Vec<f64>,
        segments: Vec<SegmentKind>,
        lambda: f64,
        contract: ContractParams,
        prefs: PreferenceSpec,
    ) -> Result<Self> {
        if segments.len() != breakpoints.len() + 1 {
            return Err(Error::Domain(format!(
                "{} segments need {} breakpoints, got {}",
                segments.len(),
                segments.len().saturating_sub(1),
                breakpoints.len()
            )));
        }
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
        }
        if breakpoints.iter().any(|b| !(*b > 0.0 && b.is_finite()))
            || breakpoints.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(Error::Domain(
                "breakpoints must be finite, positive and strictly increasing".into(),
            ));
        }
        Ok(Self {
            breakpoints,
            segments,
            lambda,
            contract,
            prefs,
        })
    }

    /// Builds a profile from `(kind, upper end)` pieces listed in increasing ξ.
    /// Empty pieces are dropped; with δ̃_ε = 1 the I_ε rule coincides with
    /// L_T + I and equal neighbours are merged.
    pub fn from_pieces(
        pieces: &[(SegmentKind, f64)],
        lambda: f64,
        contract: ContractParams,
        prefs: PreferenceSpec,
    ) -> Result<Self> {
        let shifted = prefs.mixture_is_shifted_utility(&contract);
        let mut segments: Vec<SegmentKind> = Vec::new();
        let mut uppers: Vec<f64> = Vec::new();
        let mut prev = 0.0;
        for &(kind, upper) in pieces {
            if !(upper > prev) {
                continue;
            }
            let kind = match kind {
                SegmentKind::InvMarginalEps if shifted => SegmentKind::GuaranteePlusInv,
                SegmentKind::ConstantFloor(0.0) => SegmentKind::Zero,
                k => k,
            };
            if segments.last() == Some(&kind) {
                *uppers.last_mut().unwrap() = upper;
            } else {
                segments.push(kind);
                uppers.push(upper);
            }
            prev = upper;
        }
        if uppers.last() != Some(&f64::INFINITY) {
            return Err(Error::Domain(
                "the last piece must extend to infinity".into(),
            ));
        }
        uppers.pop();
        Self::new(uppers, segments, lambda, contract, prefs)
    }

    pub fn segment_index(&self, xi: f64) -> usize {
        self.breakpoints.partition_point(|&b| b < xi)
    }

    pub fn segment_at(&self, xi: f64) -> SegmentKind {
        self.segments[self.segment_index(xi)]
    }

    /// Lower and upper ξ-ends of segment i.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        let lo = if i == 0 { 0.0 } else { self.breakpoints[i - 1] };
        let hi = self.breakpoints.get(i).copied().unwrap_or(f64::INFINITY);
        (lo, hi)
    }

    pub fn eval(&self, xi: f64) -> f64 {
        self.level(self.segment_at(xi), xi)
    }

    /// Wealth prescribed by `kind` at ξ, regardless of where ξ lies.
    pub fn level(&self, kind: SegmentKind, xi: f64) -> f64 {
        let c = &self.contract;
        match kind {
            SegmentKind::InvMarginalEps => self.prefs.inv_marginal_eps_raw(c, self.lambda * xi),
            SegmentKind::ConstantTildeL => c.bonus_threshold,
            SegmentKind::GuaranteePlusInv => {
                c.guarantee + self.prefs.utility().inv_marginal(self.lambda * xi)
            }
            SegmentKind::ConstantFloor(l) => l,
            SegmentKind::Zero => 0.0,
        }
    }

    /// Closed form a + b·ξ^p of a segment rule, when one exists.
    pub fn power_form(&self, kind: SegmentKind) -> Option<PowerForm> {
        let c = &self.contract;
        let p = self.prefs.utility().inv_exponent();
        match kind {
            SegmentKind::GuaranteePlusInv => Some(PowerForm {
                a: c.guarantee,
                b: self.lambda.powf(p),
                p,
            }),
            SegmentKind::InvMarginalEps => {
                if self.prefs.mixture_is_shifted_utility(c) {
                    self.power_form(SegmentKind::GuaranteePlusInv)
                } else if self.prefs.epsilon == 0.0 {
                    let k = 1.0 - c.tilde_delta;
                    Some(PowerForm {
                        a: (1.0 - c.delta) * c.guarantee / k,
                        b: (self.lambda / k).powf(p) / k,
                        p,
                    })
                } else {
                    None
                }
            }
            SegmentKind::ConstantTildeL => Some(constant(c.bonus_threshold)),
            SegmentKind::ConstantFloor(l) => Some(constant(l)),
            SegmentKind::Zero => Some(constant(0.0)),
        }
    }

    /// Centre in the standard-normal coordinate of ξ^{1+p}·φ for segment rules
    /// that behave like ξ^p.
    pub(crate) fn growth_center(&self, law: &StatePriceLaw, extra_power: f64) -> f64 {
        (extra_power + self.prefs.utility().inv_exponent()) * law.log_sd
    }

    fn tolerance(&self) -> f64 {
        1e-11 * self.contract.x0
    }

    /// E[ξ X(ξ)] from closed-form lognormal partial moments, with quadrature
    /// only for I_ε segments that have no closed form.
    pub fn budget_cost(&self, law: &StatePriceLaw) -> f64 {
        (0..self.segments.len())
            .map(|i| {
                let (lo, hi) = self.bounds(i);
                let kind = self.segments[i];
                match self.power_form(kind) {
                    Some(f) => {
                        let mut v = 0.0;
                        if f.a != 0.0 {
                            v += f.a * law.partial_moment(1.0, lo, hi);
                        }
                        if f.b != 0.0 {
                            v += f.b * law.partial_moment(1.0 + f.p, lo, hi);
                        }
                        v
                    }
                    None => self.segment_quadrature(law, i, 1.0, |xi, x| xi * x),
                }
            })
            .sum()
    }

    /// E[ξ X(ξ)] by quadrature on every segment; an independent path to
    /// `budget_cost`.
    pub fn budget_cost_quadrature(&self, law: &StatePriceLaw) -> f64 {
        (0..self.segments.len())
            .map(|i| self.segment_quadrature(law, i, 1.0, |xi, x| xi * x))
            .sum()
    }

    /// ∫ g(ξ, X(ξ)) over segment i against the law of ξ.
    pub(crate) fn segment_quadrature<G: Fn(f64, f64) -> f64>(
        &self,
        law: &StatePriceLaw,
        i: usize,
        extra_power: f64,
        g: G,
    ) -> f64 {
        let (lo, hi) = self.bounds(i);
        let kind = self.segments[i];
        let center = match kind {
            SegmentKind::InvMarginalEps | SegmentKind::GuaranteePlusInv => {
                self.growth_center(law, extra_power)
            }
            _ => extra_power * law.log_sd,
        };
        quad::integrate_normal(
            |z| {
                let xi = law.xi_at(z);
                g(xi, self.level(kind, xi))
            },
            law.z_of(lo),
            law.z_of(hi),
            center,
            self.tolerance(),
        )
    }

    /// P(X(ξ) < L_T) under `law`.
    pub fn default_probability(&self, law: &StatePriceLaw) -> f64 {
        let lt = self.contract.guarantee;
        for (i, kind) in self.segments.iter().enumerate() {
            let below = match kind {
                SegmentKind::Zero => true,
                SegmentKind::ConstantFloor(l) => *l < lt,
                _ => false,
            };
            if below {
                return law.tail_probability(self.bounds(i).0);
            }
        }
        0.0
    }

    /// ξ where the profile first drops below L_T, if it does.
    pub fn default_boundary(&self) -> Option<f64> {
        let lt = self.contract.guarantee;
        self.segments.iter().enumerate().find_map(|(i, k)| match k {
            SegmentKind::Zero => Some(self.bounds(i).0),
            SegmentKind::ConstantFloor(l) if *l < lt => Some(self.bounds(i).0),
            _ => None,
        })
    }
}

fn constant(v: f64) -> PowerForm {
    PowerForm {
        a: v,
        b: 0.0,
        p: 0.0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::ContractKind;
    use crate::market::MarketParams;

    fn setup(eps: f64) -> (ContractParams, PreferenceSpec, StatePriceLaw) {
        let c = ContractParams::new(100.0, 0.4, 0.6, 0.02, 10.0)
            .unwrap()
            .with_guarantee(50.0 * 0.2f64.exp())
            .unwrap();
        let p = PreferenceSpec::new(0.5, 1.01, eps, ContractKind::Defaultable).unwrap();
        let law = MarketParams::new(0.05, 0.03, 0.3, 10.0)
            .unwrap()
            .state_price_law(10.0)
            .unwrap();
        (c, p, law)
    }

    fn four_region(eps: f64, lambda: f64) -> WealthProfile {
        let (c, p, _) = setup(eps);
        let u = p.utility();
        let a = p.mix(&c).delta_eps * u.marginal(c.gap) / lambda;
        let b = u.marginal(c.gap) / lambda;
        WealthProfile::from_pieces(
            &[
                (SegmentKind::InvMarginalEps, a),
                (SegmentKind::ConstantTildeL, b),
                (SegmentKind::GuaranteePlusInv, 3.0 * b),
                (SegmentKind::Zero, f64::INFINITY),
            ],
            lambda,
            c,
            p,
        )
        .unwrap()
    }

    #[test]
    fn construction_checks() {
        let (c, p, _) = setup(0.0);
        assert!(WealthProfile::new(vec![1.0], vec![SegmentKind::Zero], 1.0, c, p).is_err());
        let two = vec![SegmentKind::Zero, SegmentKind::Zero, SegmentKind::Zero];
        assert!(WealthProfile::new(vec![2.0, 1.0], two, 1.0, c, p).is_err());
        assert!(WealthProfile::new(vec![], vec![SegmentKind::Zero], 0.0, c, p).is_err());
        let pieces = [(SegmentKind::Zero, 1.0)];
        assert!(WealthProfile::from_pieces(&pieces, 1.0, c, p).is_err());
    }

    #[test]
    fn pieces_drop_empty_and_merge() {
        let (c, _, _) = setup(0.0);
        let p1 = PreferenceSpec::new(0.5, 1.01, 1.0, ContractKind::Defaultable).unwrap();
        let prof = WealthProfile::from_pieces(
            &[
                (SegmentKind::InvMarginalEps, 1.0),
                (SegmentKind::ConstantTildeL, 1.0),
                (SegmentKind::GuaranteePlusInv, 2.0),
                (SegmentKind::ConstantFloor(0.0), f64::INFINITY),
            ],
            0.1,
            c,
            p1,
        )
        .unwrap();
        assert_eq!(prof.breakpoints, vec![2.0]);
        assert_eq!(
            prof.segments,
            vec![SegmentKind::GuaranteePlusInv, SegmentKind::Zero]
        );
    }

    #[test]
    fn evaluation_is_monotone_and_left_continuous_at_breaks() {
        for eps in [0.0, 0.1] {
            let prof = four_region(eps, 0.05);
            let mut prev = f64::INFINITY;
            for k in 0..2000 {
                let xi = 10f64.powf(-3.0 + 4.0 * k as f64 / 2000.0);
                let x = prof.eval(xi);
                assert!(x <= prev * (1.0 + 1e-12) && x >= 0.0);
                prev = x;
            }
            let b = prof.breakpoints[2];
            assert_eq!(prof.segment_at(b), SegmentKind::GuaranteePlusInv);
            assert_eq!(prof.segment_at(b * (1.0 + 1e-12)), SegmentKind::Zero);
            // continuity of I_ε into the plateau
            let b0 = prof.breakpoints[0];
            let left = prof.eval(b0);
            assert!((left / prof.contract.bonus_threshold - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn power_form_matches_level() {
        for eps in [0.0, 1.0] {
            let prof = four_region(eps, 0.05);
            for kind in [SegmentKind::InvMarginalEps, SegmentKind::GuaranteePlusInv] {
                let f = prof.power_form(kind).unwrap();
                for xi in [0.01, 0.3, 1.0] {
                    let direct = prof.level(kind, xi);
                    let viaf = f.a + f.b * xi.powf(f.p);
                    assert!((direct / viaf - 1.0).abs() < 1e-12);
                }
            }
        }
        assert!(four_region(0.1, 0.05)
            .power_form(SegmentKind::InvMarginalEps)
            .is_none());
    }

    #[test]
    fn budget_examples() {
        let (c, p, law) = setup(0.0);
        let flat =
            WealthProfile::new(vec![], vec![SegmentKind::ConstantFloor(7.0)], 1.0, c, p).unwrap();
        assert!((flat.budget_cost(&law) / (7.0 * (-0.3f64).exp()) - 1.0).abs() < 1e-14);
        // pure I(λξ) with γ = 0.5: λ^{-2} E[ξ^{-1}] plus L_T e^{-rT}
        let lam = 0.07;
        let merton =
            WealthProfile::new(vec![], vec![SegmentKind::GuaranteePlusInv], lam, c, p).unwrap();
        let s = law.log_sd;
        let expect =
            lam.powi(-2) * (-law.log_mean + 0.5 * s * s).exp() + c.guarantee * (-0.3f64).exp();
        assert!((merton.budget_cost(&law) / expect - 1.0).abs() < 1e-12);
    }

    #[test]
    fn budget_dual_paths_agree() {
        for eps in [0.0, 0.1, 1.0] {
            for lam in [0.01, 0.05, 0.2] {
                let prof = four_region(eps, lam);
                let (_, _, law) = setup(eps);
                let a = prof.budget_cost(&law);
                let b = prof.budget_cost_quadrature(&law);
                assert!((a / b - 1.0).abs() < 1e-9, "eps={eps} lam={lam} {a} {b}");
            }
        }
    }

    #[test]
    fn default_probability_from_breakpoint() {
        let prof = four_region(0.0, 0.05);
        let (_, _, law) = setup(0.0);
        let b = prof.default_boundary().unwrap();
        assert_eq!(b, prof.breakpoints[2]);
        assert_eq!(prof.default_probability(&law), law.tail_probability(b));
        let (c, p, _) = setup(0.0);
        let floor = WealthProfile::new(
            vec![1.0],
            vec![
                SegmentKind::GuaranteePlusInv,
                SegmentKind::ConstantFloor(c.guarantee),
            ],
            0.05,
            c,
            p,
        )
        .unwrap();
        assert_eq!(floor.default_probability(&law), 0.0);
    }

    #[test]
    fn serde_round_trip() {
        let prof = four_region(0.1, 0.05);
        let s = serde_json::to_string(&prof).unwrap();
        let back: WealthProfile = serde_json::from_str(&s).unwrap();
        assert_eq!(back, prof);
        assert!(s.contains("constant_tilde_l"));
    }
}
