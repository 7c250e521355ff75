//! Tangency points of the concavified objective and the case classification
//! they induce.
//!
//! The line from (l, −q) to the utility curve touches it at the root of
//! Υ_l(x) = U(x) − U′(x)(x − l) + q, evaluated either on the gain branch
//! U(x − L_T) ("one") or on the mixture branch U_ε ("eps").

use serde::{Deserialize, Serialize};

use crate::contract::ContractParams;
use crate::error::{Error, Result};
use crate::preferences::{PreferenceSpec, Utility};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CaseClass {
    /// Υ^{1,q}(L̃_T) > 0: growth, plateau, guarantee-plus and loss regions.
    FourRegion,
    /// Υ^{ε,q}(L̃_T) ≥ 0 ≥ Υ^{1,q}(L̃_T): growth, plateau and loss regions.
    ThreeRegion,
    /// Υ^{ε,q}(L̃_T) < 0: growth and loss regions only.
    TwoRegion,
}

impl CaseClass {
    pub fn label(self) -> &'static str {
        match self {
            CaseClass::FourRegion => "four_region",
            CaseClass::ThreeRegion => "three_region",
            CaseClass::TwoRegion => "two_region",
        }
    }

    /// Number of distinct wealth regions of the unconstrained profile.
    pub fn region_count(self) -> usize {
        match self {
            CaseClass::FourRegion => 4,
            CaseClass::ThreeRegion => 3,
            CaseClass::TwoRegion => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// U(x − L_T) on (L_T, L̃_T].
    One,
    /// U_ε on [L̃_T, ∞).
    Eps,
}

/// Υ^{1,q}_l or Υ^{ε,q}_l at x. Strictly increasing in x on its branch.
pub fn upsilon(
    spec: &PreferenceSpec,
    contract: &ContractParams,
    branch: Branch,
    x: f64,
    q: f64,
    l: f64,
) -> Result<f64> {
    match branch {
        Branch::One if x < contract.guarantee => Err(Error::Domain(format!(
            "x = {x} lies below the guarantee {}",
            contract.guarantee
        ))),
        Branch::Eps if x < contract.bonus_threshold => Err(Error::Domain(format!(
            "x = {x} lies below the bonus threshold {}",
            contract.bonus_threshold
        ))),
        _ => Ok(upsilon_raw(spec, contract, branch, x, q, l)),
    }
}

fn upsilon_raw(
    spec: &PreferenceSpec,
    c: &ContractParams,
    branch: Branch,
    x: f64,
    q: f64,
    l: f64,
) -> f64 {
    if q == f64::INFINITY {
        return f64::INFINITY;
    }
    match branch {
        Branch::One => {
            let u = spec.utility();
            let v = x - c.guarantee;
            if v <= 0.0 {
                return f64::NEG_INFINITY;
            }
            u.value(v) - u.marginal(v) * (x - l) + q
        }
        Branch::Eps => spec.u_eps_raw(c, x) - spec.u_eps_prime_raw(c, x) * (x - l) + q,
    }
}

fn upsilon_slope(spec: &PreferenceSpec, c: &ContractParams, branch: Branch, x: f64, l: f64) -> f64 {
    match branch {
        Branch::One => -spec.utility().curvature(x - c.guarantee) * (x - l),
        Branch::Eps => -spec.u_eps_second_raw(c, x) * (x - l),
    }
}

/// Root ŷ of Υ_l on the given branch.
///
/// Branch one needs Υ^{1,q}_l(L̃_T) > 0 and returns ŷ ∈ (L_T, L̃_T); branch eps
/// needs Υ^{ε,q}_l(L̃_T) < 0 and returns ŷ > L̃_T.
pub fn tangency_point(
    spec: &PreferenceSpec,
    contract: &ContractParams,
    branch: Branch,
    q: f64,
    l: f64,
) -> Result<f64> {
    if !(q >= 0.0 && q.is_finite()) {
        return Err(Error::Domain(format!(
            "tangency needs a finite loss bound q >= 0, got {q}"
        )));
    }
    if !(l >= 0.0 && l < contract.guarantee) {
        return Err(Error::Domain(format!(
            "floor l = {l} must lie in [0, L_T = {})",
            contract.guarantee
        )));
    }
    let lt = contract.bonus_threshold;
    let at = upsilon_raw(spec, contract, branch, lt, q, l);
    let f = |x: f64| upsilon_raw(spec, contract, branch, x, q, l);
    let df = |x: f64| upsilon_slope(spec, contract, branch, x, l);
    let (lo, hi) = match branch {
        Branch::One => {
            if !(at > 0.0) {
                return Err(Error::Domain(format!(
                    "branch one needs Υ¹(L̃_T) > 0, got {at}"
                )));
            }
            (contract.guarantee * (1.0 + 1e-12), lt)
        }
        Branch::Eps => {
            if !(at < 0.0) {
                return Err(Error::Domain(format!(
                    "branch eps needs Υ^ε(L̃_T) < 0, got {at}"
                )));
            }
            let mut hi = 2.0 * lt;
            let mut k = 1;
            while f(hi) < 0.0 {
                hi *= 2.0;
                k += 1;
                if k > 60 {
                    return Err(Error::Numerical(
                        "no sign change of Υ^ε below 2^60·L̃_T".into(),
                    ));
                }
            }
            (lt, hi)
        }
    };
    if branch == Branch::One && f(lo) > 0.0 {
        // q so large that the tangency is within 1e-12·L_T of the guarantee
        return Ok(lo);
    }
    Ok(increasing_root(f, df, lo, hi))
}

/// Root of an increasing function bracketed by f(lo) ≤ 0 ≤ f(hi), by Newton
/// steps that fall back to bisection whenever they leave the bracket.
fn increasing_root<F, D>(f: F, df: D, mut lo: f64, mut hi: f64) -> f64
where
    F: Fn(f64) -> f64,
    D: Fn(f64) -> f64,
{
    let mut x = 0.5 * (lo + hi);
    for _ in 0..400 {
        let fx = f(x);
        if fx == 0.0 {
            return x;
        }
        if fx < 0.0 {
            lo = x;
        } else {
            hi = x;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let d = df(x);
        let mut next = x - fx / d;
        if !(next > lo && next < hi) {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 2.0 * f64::EPSILON * x {
            return next;
        }
        x = next;
    }
    0.5 * (lo + hi)
}

/// Case classification of the pointwise problem with loss bound `q` and
/// reference level `l`. All quantities are independent of the multiplier.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub case: CaseClass,
    #[serde(with = "crate::serde_f64")]
    pub q: f64,
    pub l: f64,
    /// Υ^{1,q}_l(L̃_T).
    #[serde(with = "crate::serde_f64")]
    pub upsilon_one: f64,
    /// Υ^{ε,q}_l(L̃_T).
    #[serde(with = "crate::serde_f64")]
    pub upsilon_eps: f64,
    /// Tangency point on the active branch (FourRegion or TwoRegion). With
    /// q = ∞ the FourRegion tangency degenerates to L_T.
    pub tangency: Option<f64>,
    /// λ·ξ at which wealth leaves the gain region; ∞ when it never does.
    #[serde(with = "crate::serde_f64")]
    pub cutoff_numerator: f64,
}

/// Classifies the case and solves for the tangency point.
pub fn classify(
    spec: &PreferenceSpec,
    contract: &ContractParams,
    q: f64,
    l: f64,
) -> Result<Classification> {
    if !(q >= 0.0) {
        return Err(Error::Domain(format!("loss bound q must be >= 0, got {q}")));
    }
    if !(l >= 0.0 && l < contract.guarantee) {
        return Err(Error::Domain(format!(
            "reference level l = {l} must lie in [0, L_T = {})",
            contract.guarantee
        )));
    }
    let lt = contract.bonus_threshold;
    let u = spec.utility();
    let one = upsilon_raw(spec, contract, Branch::One, lt, q, l);
    let eps = upsilon_raw(spec, contract, Branch::Eps, lt, q, l);
    let (case, tangency, num) = if q == f64::INFINITY {
        (
            CaseClass::FourRegion,
            Some(contract.guarantee),
            f64::INFINITY,
        )
    } else if one > 0.0 {
        let y = tangency_point(spec, contract, Branch::One, q, l)?;
        (
            CaseClass::FourRegion,
            Some(y),
            u.marginal(y - contract.guarantee),
        )
    } else if eps >= 0.0 {
        let num = (u.value(contract.gap) + q) / (lt - l);
        (CaseClass::ThreeRegion, None, num)
    } else {
        let y = tangency_point(spec, contract, Branch::Eps, q, l)?;
        (
            CaseClass::TwoRegion,
            Some(y),
            spec.u_eps_prime_raw(contract, y),
        )
    };
    Ok(Classification {
        case,
        q,
        l,
        upsilon_one: one,
        upsilon_eps: eps,
        tangency,
        cutoff_numerator: num,
    })
}

/// Thresholds in ξ for a given multiplier λ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    /// ξ_{L̃}^ε = U_ε′(L̃_T)/λ.
    pub xi_tilde_l: f64,
    /// ξ_{L̂} = U′(L̂_T)/λ.
    pub xi_hat_l: f64,
    /// ξ_U^q = (U(L̂_T) + q)/((L̃_T − l)λ), when q is finite.
    pub xi_u: Option<f64>,
    /// ξ̂^{1,q} = U′(ŷ^{1,q} − L_T)/λ, FourRegion only.
    pub xi_hat_one: Option<f64>,
    /// ξ̂^{ε,q} = U_ε′(ŷ^{ε,q})/λ, TwoRegion only.
    pub xi_hat_eps: Option<f64>,
    /// Level of ξ beyond which the gain region is abandoned.
    #[serde(with = "crate::serde_f64")]
    pub cutoff: f64,
}

impl Classification {
    pub fn thresholds(
        &self,
        spec: &PreferenceSpec,
        contract: &ContractParams,
        lambda: f64,
    ) -> Result<Thresholds> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
        }
        let u = spec.utility();
        let marg_gap = u.marginal(contract.gap);
        let xi_u = if self.q.is_finite() {
            Some((u.value(contract.gap) + self.q) / ((contract.bonus_threshold - self.l) * lambda))
        } else {
            None
        };
        let cut = self.cutoff_numerator / lambda;
        Ok(Thresholds {
            xi_tilde_l: spec.mix(contract).delta_eps * marg_gap / lambda,
            xi_hat_l: marg_gap / lambda,
            xi_u,
            xi_hat_one: (self.case == CaseClass::FourRegion).then_some(cut),
            xi_hat_eps: (self.case == CaseClass::TwoRegion).then_some(cut),
            cutoff: cut,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::ContractKind;

    fn contract(alpha: f64, delta: f64) -> ContractParams {
        ContractParams::new(100.0, alpha, delta, 0.02, 10.0)
            .unwrap()
            .with_guarantee(50.0 * 0.2f64.exp())
            .unwrap()
    }

    fn prefs(eps: f64, kind: ContractKind) -> PreferenceSpec {
        PreferenceSpec::new(0.5, 1.01, eps, kind).unwrap()
    }

    #[test]
    fn branch_domains() {
        let c = contract(0.4, 0.6);
        let p = prefs(0.0, ContractKind::Defaultable);
        assert!(upsilon(&p, &c, Branch::Eps, c.guarantee, 0.0, 0.0).is_err());
        assert!(upsilon(&p, &c, Branch::One, 0.5 * c.guarantee, 0.0, 0.0).is_err());
        let near = upsilon(&p, &c, Branch::One, c.guarantee * (1.0 + 1e-14), 0.0, 0.0).unwrap();
        assert!(near < -1e5);
    }

    #[test]
    fn gap_between_branches_at_threshold() {
        for eps in [0.0, 0.1, 0.5, 1.0] {
            let c = contract(0.4, 0.6);
            let p = prefs(eps, ContractKind::FullyProtected);
            let q = p.q(&c);
            let lt = c.bonus_threshold;
            let e = upsilon(&p, &c, Branch::Eps, lt, q, 0.0).unwrap();
            let o = upsilon(&p, &c, Branch::One, lt, q, 0.0).unwrap();
            let de = p.mix(&c).delta_eps;
            let expect = (1.0 - de) * p.utility().marginal(c.gap) * lt;
            assert!((e - o - expect).abs() < 1e-10, "eps={eps}");
        }
    }

    #[test]
    fn upsilon_increasing_on_grids() {
        let c = contract(0.6, 0.6);
        for eps in [0.0, 0.1, 1.0] {
            let p = prefs(eps, ContractKind::Defaultable);
            let mut prev = f64::NEG_INFINITY;
            for k in 1..=200 {
                let x = c.guarantee + c.gap * k as f64 / 200.0;
                let v = upsilon(&p, &c, Branch::One, x, 0.0, 0.0).unwrap();
                assert!(v > prev);
                prev = v;
            }
            let mut prev = f64::NEG_INFINITY;
            for k in 0..200 {
                let x = c.bonus_threshold * (1.0 + k as f64 / 10.0);
                let v = upsilon(&p, &c, Branch::Eps, x, 0.0, 0.0).unwrap();
                assert!(v > prev);
                prev = v;
            }
        }
    }

    #[test]
    fn power_utility_case_boundaries() {
        // With γ = 0.5 and q = 0 the one-branch sign flips at α = 1/2 and the
        // ε = 0 branch at α = 1/(2 − δ).
        let p = prefs(0.0, ContractKind::Defaultable);
        let cases = [
            (0.3, CaseClass::FourRegion),
            (0.45, CaseClass::FourRegion),
            (0.55, CaseClass::ThreeRegion),
            (0.7, CaseClass::ThreeRegion),
            (0.73, CaseClass::TwoRegion),
            (0.9, CaseClass::TwoRegion),
        ];
        for (alpha, expect) in cases {
            let c = contract(alpha, 0.6);
            let cl = classify(&p, &c, 0.0, 0.0).unwrap();
            assert_eq!(cl.case, expect, "alpha={alpha}");
            assert!(cl.upsilon_eps >= cl.upsilon_one);
        }
    }

    #[test]
    fn tangency_roots_and_geometry() {
        let p = prefs(0.1, ContractKind::FullyProtected);
        let u = p.utility();
        for (alpha, branch) in [(0.3, Branch::One), (0.85, Branch::Eps)] {
            let c = contract(alpha, 0.6);
            for (q, l) in [(0.0, 0.0), (p.q(&c), 0.0), (p.loss_bound(&c, 5.0), 5.0)] {
                let Ok(y) = tangency_point(&p, &c, branch, q, l) else {
                    continue;
                };
                let r = upsilon(&p, &c, branch, y, q, l).unwrap();
                assert!(r.abs() <= 1e-10 * (1.0 + q), "residual {r}");
                let (value, slope) = match branch {
                    Branch::One => {
                        assert!(y > c.guarantee && y < c.bonus_threshold);
                        (u.value(y - c.guarantee), u.marginal(y - c.guarantee))
                    }
                    Branch::Eps => {
                        assert!(y > c.bonus_threshold);
                        (p.u_eps(&c, y).unwrap(), p.u_eps_prime(&c, y).unwrap())
                    }
                };
                // the chord from (l, −q) is tangent at ŷ
                let chord = (value + q) / (y - l);
                assert!((chord / slope - 1.0).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn tangency_preconditions() {
        let p = prefs(0.0, ContractKind::Defaultable);
        let c = contract(0.9, 0.6);
        assert!(tangency_point(&p, &c, Branch::One, 0.0, 0.0).is_err());
        let c = contract(0.3, 0.6);
        assert!(tangency_point(&p, &c, Branch::Eps, 0.0, 0.0).is_err());
        assert!(tangency_point(&p, &c, Branch::One, -1.0, 0.0).is_err());
        assert!(tangency_point(&p, &c, Branch::One, 0.0, c.guarantee).is_err());
    }

    #[test]
    fn loss_bound_moves_tangency_left() {
        let pd = prefs(0.0, ContractKind::Defaultable);
        let pn = prefs(0.0, ContractKind::FullyProtected);
        let c = contract(0.3, 0.6);
        let y0 = tangency_point(&pd, &c, Branch::One, 0.0, 0.0).unwrap();
        let yq = tangency_point(&pn, &c, Branch::One, pn.q(&c), 0.0).unwrap();
        assert!(yq < y0);
        // raising the floor with q fixed also moves the tangency left
        let mut prev = f64::INFINITY;
        for k in 0..10 {
            let l = c.guarantee * k as f64 / 10.0;
            let y = tangency_point(&pd, &c, Branch::One, 0.0, l).unwrap();
            assert!(y < prev);
            prev = y;
        }
    }

    #[test]
    fn epsilon_one_never_three_regions() {
        let p = prefs(1.0, ContractKind::Defaultable);
        for k in 1..20 {
            let c = contract(k as f64 / 20.0, 0.6);
            let cl = classify(&p, &c, p.q(&c), 0.0).unwrap();
            assert_ne!(cl.case, CaseClass::ThreeRegion);
            assert!((cl.upsilon_eps - cl.upsilon_one).abs() < 1e-10);
        }
    }

    #[test]
    fn thresholds_scale_and_order() {
        let p = prefs(0.1, ContractKind::FullyProtected);
        for alpha in [0.2, 0.4, 0.6, 0.8] {
            let c = contract(alpha, 0.6);
            let cl = classify(&p, &c, p.q(&c), 0.0).unwrap();
            let t1 = cl.thresholds(&p, &c, 0.2).unwrap();
            let t2 = cl.thresholds(&p, &c, 0.4).unwrap();
            assert!((t1.xi_hat_l / t2.xi_hat_l - 2.0).abs() < 1e-14);
            assert!((t1.xi_tilde_l / t2.xi_tilde_l - 2.0).abs() < 1e-14);
            assert!((t1.cutoff / t2.cutoff - 2.0).abs() < 1e-14);
            match cl.case {
                CaseClass::FourRegion => {
                    assert!(t1.xi_tilde_l <= t1.xi_hat_l && t1.xi_hat_l < t1.cutoff)
                }
                CaseClass::ThreeRegion => {
                    let u = t1.xi_u.unwrap();
                    assert!(t1.xi_tilde_l <= u && u < t1.xi_hat_l);
                    assert_eq!(u, t1.cutoff);
                }
                CaseClass::TwoRegion => assert!(t1.cutoff <= t1.xi_tilde_l),
            }
        }
        let c = contract(0.4, 0.6);
        let cl = classify(&p, &c, 0.0, 0.0).unwrap();
        assert!(cl.thresholds(&p, &c, 0.0).is_err());
    }

    #[test]
    fn unbounded_loss_has_no_zero_region() {
        let p = PreferenceSpec::new(2.0, 1.0, 0.0, ContractKind::Defaultable).unwrap();
        let c = contract(0.8, 0.6);
        let cl = classify(&p, &c, p.q(&c), 0.0).unwrap();
        assert_eq!(cl.case, CaseClass::FourRegion);
        assert_eq!(cl.cutoff_numerator, f64::INFINITY);
    }
}
