//! Optimal terminal wealth under no constraint, a Value-at-Risk constraint or
//! a portfolio-insurance floor.

use serde::{Deserialize, Serialize};

use crate::concavify::{classify, CaseClass, Classification, Thresholds};
use crate::contract::ContractParams;
use crate::error::{invalid, Error, Result};
use crate::market::{MarketParams, StatePriceLaw};
use crate::preferences::{PreferenceSpec, Utility};
use crate::profile::{SegmentKind, WealthProfile};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum ConstraintSpec {
    Unconstrained,
    /// P(X_T < L_T) ≤ beta.
    Var {
        beta: f64,
    },
    /// X_T ≥ floor almost surely.
    Pi {
        floor: f64,
    },
}

impl ConstraintSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ConstraintSpec::Unconstrained => Ok(()),
            ConstraintSpec::Var { beta } if beta > 0.0 && beta < 1.0 => Ok(()),
            ConstraintSpec::Var { beta } => {
                Err(invalid("beta", format!("must lie in (0,1), got {beta}")))
            }
            ConstraintSpec::Pi { floor } if floor >= 0.0 && floor.is_finite() => Ok(()),
            ConstraintSpec::Pi { floor } => {
                Err(invalid("floor", format!("must be >= 0, got {floor}")))
            }
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            ConstraintSpec::Unconstrained => "none",
            ConstraintSpec::Var { .. } => "var",
            ConstraintSpec::Pi { .. } => "pi",
        }
    }
}

/// How the profile is assembled for a given multiplier.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Plan {
    /// Concavified gain envelope cut at ξ* (or at ξ̄ under VaR), then `tail`.
    Envelope {
        cl: Classification,
        tail: SegmentKind,
        xi_bar: Option<f64>,
    },
    /// Floor between L_T and L̃_T: no concavification.
    FloorAboveGuarantee { floor: f64 },
    /// Floor at or above L̃_T.
    FloorAboveThreshold { floor: f64 },
}

/// Profile and VaR penalty at a fixed λ.
#[derive(Debug, Clone, PartialEq)]
pub struct LambdaProfile {
    pub profile: WealthProfile,
    pub lambda2: f64,
    pub binding: bool,
    pub thresholds: Option<Thresholds>,
}

/// A fully specified optimization problem.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Problem {
    pub market: MarketParams,
    pub contract: ContractParams,
    pub prefs: PreferenceSpec,
    pub constraint: ConstraintSpec,
}

impl Problem {
    pub fn new(
        market: MarketParams,
        contract: ContractParams,
        prefs: PreferenceSpec,
        constraint: ConstraintSpec,
    ) -> Result<Self> {
        market.validate()?;
        prefs.validate()?;
        constraint.validate()?;
        Ok(Self {
            market,
            contract,
            prefs,
            constraint,
        })
    }

    pub fn terminal_law(&self) -> Result<StatePriceLaw> {
        self.market.state_price_law(self.market.horizon)
    }

    fn plan(&self) -> Result<Plan> {
        let c = &self.contract;
        let p = &self.prefs;
        match self.constraint {
            ConstraintSpec::Unconstrained => Ok(Plan::Envelope {
                cl: classify(p, c, p.q(c), 0.0)?,
                tail: SegmentKind::Zero,
                xi_bar: None,
            }),
            ConstraintSpec::Var { beta } => Ok(Plan::Envelope {
                cl: classify(p, c, p.q(c), 0.0)?,
                tail: SegmentKind::Zero,
                xi_bar: Some(self.terminal_law()?.quantile_upper(beta)?),
            }),
            ConstraintSpec::Pi { floor } if floor < c.guarantee => Ok(Plan::Envelope {
                cl: classify(p, c, p.loss_bound(c, floor), floor)?,
                tail: SegmentKind::ConstantFloor(floor),
                xi_bar: None,
            }),
            ConstraintSpec::Pi { floor } if floor < c.bonus_threshold => {
                Ok(Plan::FloorAboveGuarantee { floor })
            }
            ConstraintSpec::Pi { floor } => Ok(Plan::FloorAboveThreshold { floor }),
        }
    }

    /// Case classification, absent for floors at or above L_T.
    pub fn classification(&self) -> Result<Option<Classification>> {
        Ok(match self.plan()? {
            Plan::Envelope { cl, .. } => Some(cl),
            _ => None,
        })
    }

    /// Pointwise maximizer of the Lagrangian for every ξ at multiplier λ.
    pub fn profile_at(&self, lambda: f64) -> Result<LambdaProfile> {
        let plan = self.plan()?;
        self.profile_for(&plan, lambda)
    }

    fn profile_for(&self, plan: &Plan, lambda: f64) -> Result<LambdaProfile> {
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(Error::Domain(format!("lambda must be > 0, got {lambda}")));
        }
        let c = self.contract;
        let p = self.prefs;
        let u = p.utility();
        let inf = f64::INFINITY;
        let xi_tilde = p.mix(&c).delta_eps * u.marginal(c.gap) / lambda;
        let xi_hat = u.marginal(c.gap) / lambda;
        let envelope = |cut: f64, tail: SegmentKind| {
            WealthProfile::from_pieces(
                &[
                    (SegmentKind::InvMarginalEps, xi_tilde.min(cut)),
                    (SegmentKind::ConstantTildeL, xi_hat.min(cut)),
                    (SegmentKind::GuaranteePlusInv, cut),
                    (tail, inf),
                ],
                lambda,
                c,
                p,
            )
        };
        match *plan {
            Plan::Envelope { cl, tail, xi_bar } => {
                let th = cl.thresholds(&p, &c, lambda)?;
                let star = th.cutoff;
                let (cut, lambda2, binding) = match xi_bar {
                    Some(bar) if star < bar => {
                        let l2 = lambda2(&p, &c, cl.q, lambda, bar, &th);
                        (bar, l2, true)
                    }
                    _ => (star, 0.0, false),
                };
                Ok(LambdaProfile {
                    profile: envelope(cut, tail)?,
                    lambda2,
                    binding,
                    thresholds: Some(th),
                })
            }
            Plan::FloorAboveGuarantee { floor } => {
                let cut = if floor == c.guarantee {
                    inf
                } else {
                    u.marginal(floor - c.guarantee) / lambda
                };
                Ok(LambdaProfile {
                    profile: envelope(cut, SegmentKind::ConstantFloor(floor))?,
                    lambda2: 0.0,
                    binding: false,
                    thresholds: None,
                })
            }
            Plan::FloorAboveThreshold { floor } => {
                let cut = p.u_eps_prime_raw(&c, floor) / lambda;
                let profile = WealthProfile::from_pieces(
                    &[
                        (SegmentKind::InvMarginalEps, cut),
                        (SegmentKind::ConstantFloor(floor), inf),
                    ],
                    lambda,
                    c,
                    p,
                )?;
                Ok(LambdaProfile {
                    profile,
                    lambda2: 0.0,
                    binding: false,
                    thresholds: None,
                })
            }
        }
    }

    /// Global maximizer of the (penalized) pointwise Lagrangian at (λ, ξ).
    pub fn pointwise_argmax(&self, lambda: f64, xi: f64) -> Result<f64> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::Domain(format!("xi must be > 0, got {xi}")));
        }
        Ok(self.profile_at(lambda)?.profile.eval(xi))
    }

    fn check_feasible(&self, law: &StatePriceLaw, plan: &Plan) -> Result<()> {
        let c = &self.contract;
        let x0 = c.x0;
        match (self.constraint, plan) {
            (
                ConstraintSpec::Var { .. },
                Plan::Envelope {
                    xi_bar: Some(bar),
                    cl,
                    ..
                },
            ) if cl.q.is_finite() => {
                let need = c.guarantee * law.partial_moment(1.0, 0.0, *bar);
                if x0 <= need {
                    return Err(Error::Infeasible(format!(
                        "VaR needs X0 > E[xi L_T 1{{xi <= xi_bar}}] = {need}, got {x0}"
                    )));
                }
            }
            (ConstraintSpec::Pi { floor }, _) => {
                let need = floor * law.mean();
                if x0 <= need {
                    return Err(Error::Infeasible(format!(
                        "portfolio insurance needs X0 > l e^(-rT) = {need}, got {x0}"
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }

    /// Solves the budget equation E[ξ_T X(λ, ξ_T)] = X₀ for λ.
    pub fn solve(&self) -> Result<Solution> {
        let law = self.terminal_law()?;
        if law.is_degenerate() {
            return Err(Error::DegenerateMarket);
        }
        let plan = self.plan()?;
        self.check_feasible(&law, &plan)?;
        let x0 = self.contract.x0;
        let gap = |lam: f64| -> Result<f64> {
            let lp = self.profile_for(&plan, lam)?;
            Ok(lp.profile.budget_cost(&law).ln() - x0.ln())
        };

        // Bracket in ln λ; ψ is strictly decreasing.
        let start = self.prefs.utility().marginal(x0 / law.mean()).ln();
        let step = 4f64.ln();
        let (mut a, mut b) = (start, start);
        let mut fa = gap(a.exp())?;
        let mut fb = fa;
        let mut expansions = 0;
        while fa < 0.0 {
            b = a;
            fb = fa;
            a -= step;
            fa = gap(a.exp())?;
            expansions += 1;
            if expansions > 400 {
                return Err(Error::Numerical(
                    "could not bracket lambda from below".into(),
                ));
            }
        }
        while fb > 0.0 {
            a = b;
            fa = fb;
            b += step;
            fb = gap(b.exp())?;
            expansions += 1;
            if expansions > 400 {
                return Err(Error::Numerical(
                    "could not bracket lambda from above".into(),
                ));
            }
        }

        // Illinois regula falsi in (ln λ, ln ψ), bisection as a fallback.
        let tol = (1.0 + 1e-9f64).ln();
        let mut t = if fa.abs() < fb.abs() { a } else { b };
        let mut ft = if fa.abs() < fb.abs() { fa } else { fb };
        let mut side = 0i8;
        let mut iterations = 0;
        while ft.abs() > tol && iterations < 200 {
            iterations += 1;
            let mut next = (a * fb - b * fa) / (fb - fa);
            if !(next > a && next < b) || iterations % 8 == 0 {
                next = 0.5 * (a + b);
            }
            let fnext = gap(next.exp())?;
            if fnext > 0.0 {
                a = next;
                fa = fnext;
                if side == 1 {
                    fb *= 0.5;
                }
                side = 1;
            } else {
                b = next;
                fb = fnext;
                if side == -1 {
                    fa *= 0.5;
                }
                side = -1;
            }
            t = next;
            ft = fnext;
            if b - a <= 1e-15 * (1.0 + t.abs()) {
                break;
            }
        }
        let lambda = t.exp();
        let lp = self.profile_for(&plan, lambda)?;
        let cost = lp.profile.budget_cost(&law);
        let residual = (cost - x0) / x0;
        if !(residual.abs() <= 1e-6) {
            return Err(Error::Numerical(format!(
                "budget residual {residual:e} after {iterations} iterations"
            )));
        }
        let (case, classification, xi_bar) = match plan {
            Plan::Envelope { cl, xi_bar, .. } => (Some(cl.case), Some(cl), xi_bar),
            _ => (None, None, None),
        };
        let default_probability = lp.profile.default_probability(&law);
        Ok(Solution {
            problem: *self,
            profile: lp.profile,
            lambda,
            lambda2: lp.lambda2,
            case,
            classification,
            thresholds: lp.thresholds,
            xi_bar,
            binding: lp.binding,
            diagnostics: Diagnostics {
                budget_residual: residual,
                default_probability,
                iterations,
            },
        })
    }
}

/// Penalty λ₂ making the VaR-constrained pointwise problem indifferent
/// between the gain envelope and the loss corner at ξ̄. Zero when the
/// unconstrained cutoff already lies beyond ξ̄.
pub fn lambda2(
    spec: &PreferenceSpec,
    contract: &ContractParams,
    q: f64,
    lambda: f64,
    xi_bar: f64,
    thresholds: &Thresholds,
) -> f64 {
    if !q.is_finite() || thresholds.cutoff >= xi_bar {
        return 0.0;
    }
    let u = spec.utility();
    let y = lambda * xi_bar;
    let delta = if xi_bar < thresholds.xi_tilde_l {
        let x = spec.inv_marginal_eps_raw(contract, y);
        spec.u_eps_raw(contract, x) - y * x + q
    } else if xi_bar < thresholds.xi_hat_l {
        u.value(contract.gap) - y * contract.bonus_threshold + q
    } else {
        let i = u.inv_marginal(y);
        u.value(i) - y * (i + contract.guarantee) + q
    };
    (-delta).max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    /// (E[ξ_T X*] − X₀)/X₀.
    pub budget_residual: f64,
    /// P(X* < L_T).
    pub default_probability: f64,
    pub iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Solution {
    pub problem: Problem,
    pub profile: WealthProfile,
    pub lambda: f64,
    pub lambda2: f64,
    /// Absent for portfolio-insurance floors at or above L_T.
    pub case: Option<CaseClass>,
    pub classification: Option<Classification>,
    pub thresholds: Option<Thresholds>,
    pub xi_bar: Option<f64>,
    pub binding: bool,
    pub diagnostics: Diagnostics,
}

impl Solution {
    pub fn eval(&self, xi: f64) -> f64 {
        self.profile.eval(xi)
    }

    pub fn default_probability(&self, law: &StatePriceLaw) -> f64 {
        self.profile.default_probability(law)
    }
}

pub fn solve(
    market: MarketParams,
    contract: ContractParams,
    prefs: PreferenceSpec,
    constraint: ConstraintSpec,
) -> Result<Solution> {
    Problem::new(market, contract, prefs, constraint)?.solve()
}
