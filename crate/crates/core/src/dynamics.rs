//! Time-t optimal wealth, the replicating strategy and path simulation.
//!
//! With R = ξ_T/ξ_t independent of ℱ_t, the optimal wealth is
//! Z_t = g(t, ξ_t) = E[R·X*(ξ_t R)] and the amount held in the risky asset is
//! π_t = −(θ/σ)·∂g/∂ln ξ_t.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::{MarketParams, StatePriceLaw};
use crate::normal;
use crate::preferences::Utility;
use crate::profile::{PowerForm, SegmentKind, WealthProfile};
use crate::quad;
use crate::solver::Solution;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateSnapshot {
    pub t: f64,
    pub xi_t: f64,
    pub wealth: f64,
    pub risky_amount: f64,
}

/// Profile data reused across many evaluations of g and ∂g/∂ln ξ.
#[derive(Debug, Clone)]
pub struct Replicator {
    profile: WealthProfile,
    market: MarketParams,
    forms: Vec<Option<PowerForm>>,
    /// X(b⁻) − X(b⁺) at each breakpoint b.
    jumps: Vec<f64>,
}

impl Replicator {
    pub fn new(profile: &WealthProfile, market: &MarketParams) -> Result<Self> {
        market.validate()?;
        if market.theta() == 0.0 {
            return Err(Error::DegenerateMarket);
        }
        let forms = profile
            .segments
            .iter()
            .map(|k| profile.power_form(*k))
            .collect();
        let jumps = profile
            .breakpoints
            .iter()
            .enumerate()
            .map(|(j, &b)| {
                profile.level(profile.segments[j], b) - profile.level(profile.segments[j + 1], b)
            })
            .collect();
        Ok(Self {
            profile: profile.clone(),
            market: *market,
            forms,
            jumps,
        })
    }

    pub fn from_solution(solution: &Solution) -> Result<Self> {
        Self::new(&solution.profile, &solution.problem.market)
    }

    fn law(&self, t: f64, xi_t: f64) -> Result<StatePriceLaw> {
        let horizon = self.market.horizon;
        if !(t >= 0.0 && t < horizon) {
            return Err(Error::Domain(format!("t = {t} must lie in [0, {horizon})")));
        }
        if !(xi_t > 0.0 && xi_t.is_finite()) {
            return Err(Error::Domain(format!("xi_t must be > 0, got {xi_t}")));
        }
        Ok(self.market.law_over(horizon - t))
    }

    /// Z_t = E[R X(ξ_t R)].
    pub fn wealth_at(&self, t: f64, xi_t: f64) -> Result<f64> {
        let law = self.law(t, xi_t)?;
        Ok(self.value_and_slope(&law, xi_t, false).0)
    }

    /// π_t from the analytic derivative of g in ln ξ.
    pub fn strategy_at(&self, t: f64, xi_t: f64) -> Result<f64> {
        let law = self.law(t, xi_t)?;
        let slope = self.value_and_slope(&law, xi_t, true).1;
        Ok(self.risky_from_slope(slope))
    }

    pub fn snapshot(&self, t: f64, xi_t: f64) -> Result<StateSnapshot> {
        let law = self.law(t, xi_t)?;
        let (wealth, slope) = self.value_and_slope(&law, xi_t, true);
        Ok(StateSnapshot {
            t,
            xi_t,
            wealth,
            risky_amount: self.risky_from_slope(slope),
        })
    }

    /// π_t from a central difference of g in ln ξ, with a smaller step when
    /// ln ξ_t lies within five conditional standard deviations of a breakpoint.
    pub fn strategy_at_fd(&self, t: f64, xi_t: f64) -> Result<f64> {
        let law = self.law(t, xi_t)?;
        let u = xi_t.ln();
        let near = self
            .profile
            .breakpoints
            .iter()
            .any(|b| (b.ln() - u).abs() < 5.0 * law.log_sd);
        let h = if near { 1e-7 } else { 1e-5 };
        let up = self.value_and_slope(&law, (u + h).exp(), false).0;
        let down = self.value_and_slope(&law, (u - h).exp(), false).0;
        Ok(self.risky_from_slope((up - down) / (2.0 * h)))
    }

    fn risky_from_slope(&self, slope: f64) -> f64 {
        // Adding zero turns a −0 into +0.
        -self.market.theta() / self.market.sigma * slope + 0.0
    }

    fn value_and_slope(&self, law: &StatePriceLaw, xi_t: f64, with_slope: bool) -> (f64, f64) {
        let (m, s) = (law.log_mean, law.log_sd);
        let mut value = 0.0;
        let mut slope = 0.0;
        for (i, form) in self.forms.iter().enumerate() {
            let (lo, hi) = self.profile.bounds(i);
            let (rlo, rhi) = (lo / xi_t, hi / xi_t);
            match form {
                Some(f) => {
                    if f.a != 0.0 {
                        value += f.a * law.partial_moment(1.0, rlo, rhi);
                    }
                    if f.b != 0.0 {
                        let k = f.b * xi_t.powf(f.p) * law.partial_moment(1.0 + f.p, rlo, rhi);
                        value += k;
                        slope += f.p * k;
                    }
                }
                None => {
                    let (v, d) = self.quadrature_segment(law, i, xi_t, with_slope);
                    value += v;
                    slope += d;
                }
            }
        }
        if with_slope {
            for (b, jump) in self.profile.breakpoints.iter().zip(&self.jumps) {
                if *jump != 0.0 {
                    let r = b / xi_t;
                    let d = (r.ln() - m) / s;
                    slope -= r * normal::pdf(d) / s * jump;
                }
            }
        }
        (value, slope)
    }

    fn quadrature_segment(
        &self,
        law: &StatePriceLaw,
        i: usize,
        xi_t: f64,
        with_slope: bool,
    ) -> (f64, f64) {
        let prof = &self.profile;
        let (lo, hi) = prof.bounds(i);
        let kind = prof.segments[i];
        let (za, zb) = (law.z_of(lo / xi_t), law.z_of(hi / xi_t));
        let center = prof.growth_center(law, 1.0);
        let tol = 1e-11 * prof.contract.x0;
        let value = quad::integrate_normal(
            |z| {
                let r = law.xi_at(z);
                r * prof.level(kind, xi_t * r)
            },
            za,
            zb,
            center,
            tol,
        );
        if !with_slope {
            return (value, 0.0);
        }
        let c = &prof.contract;
        let p = &prof.prefs;
        let slope = quad::integrate_normal(
            |z| {
                let r = law.xi_at(z);
                let x = prof.level(kind, xi_t * r);
                // ξ dX/dξ for X = I_ε(λξ)
                let elasticity = match kind {
                    SegmentKind::InvMarginalEps => {
                        p.u_eps_prime_raw(c, x) / p.u_eps_second_raw(c, x)
                    }
                    _ => {
                        let u = p.utility();
                        let v = x - c.guarantee;
                        u.marginal(v) / u.curvature(v)
                    }
                };
                r * elasticity
            },
            za,
            zb,
            center,
            tol,
        );
        (value, slope)
    }
}

pub fn wealth_at(solution: &Solution, t: f64, xi_t: f64) -> Result<f64> {
    Replicator::from_solution(solution)?.wealth_at(t, xi_t)
}

pub fn strategy_at(solution: &Solution, t: f64, xi_t: f64) -> Result<f64> {
    Replicator::from_solution(solution)?.strategy_at(t, xi_t)
}

pub fn strategy_at_fd(solution: &Solution, t: f64, xi_t: f64) -> Result<f64> {
    Replicator::from_solution(solution)?.strategy_at_fd(t, xi_t)
}

/// Paths per RNG substream.
pub const PATH_BLOCK: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub n_paths: usize,
    pub n_steps: usize,
    pub seed: u64,
    /// RMS of X_T − X*(ξ_T) divided by the RMS of X*(ξ_T).
    pub replication_rmse: f64,
    pub replication_max_abs: f64,
    pub default_frequency: f64,
    pub default_frequency_se: f64,
    pub closed_form_default_probability: f64,
    pub mean_terminal_wealth: f64,
    pub mean_target_wealth: f64,
    pub mean_equity_payoff: f64,
    pub mean_policyholder_payoff: f64,
    /// Sample mean and standard error of ξ_T X*(ξ_T).
    pub deflated_target_mean: f64,
    pub deflated_target_se: f64,
    pub min_risky_amount: f64,
}

#[derive(Default, Clone, Copy)]
struct Acc {
    n: f64,
    err2: f64,
    target2: f64,
    max_abs: f64,
    defaults: f64,
    wealth: f64,
    target: f64,
    equity: f64,
    holder: f64,
    deflated: f64,
    deflated2: f64,
    min_pi: f64,
}

impl Acc {
    fn merge(mut self, o: Acc) -> Acc {
        self.n += o.n;
        self.err2 += o.err2;
        self.target2 += o.target2;
        self.max_abs = self.max_abs.max(o.max_abs);
        self.defaults += o.defaults;
        self.wealth += o.wealth;
        self.target += o.target;
        self.equity += o.equity;
        self.holder += o.holder;
        self.deflated += o.deflated;
        self.deflated2 += o.deflated2;
        self.min_pi = self.min_pi.min(o.min_pi);
        self
    }
}

/// Rebalancing dates t_k = T(1 − (1 − k/n)²), denser towards maturity where
/// the strategy of a profile with jumps varies fastest.
pub fn time_grid(horizon: f64, n_steps: usize) -> Vec<f64> {
    (0..=n_steps)
        .map(|k| {
            let u = 1.0 - k as f64 / n_steps as f64;
            horizon * (1.0 - u * u)
        })
        .collect()
}

/// Euler scheme for the self-financing wealth equation driven by the
/// replicating strategy on `time_grid`, with ξ stepped exactly. Wealth is
/// clamped at zero to absorb discretization overshoot. Deterministic for a
/// fixed seed.
pub fn simulate_paths(
    solution: &Solution,
    n_paths: usize,
    n_steps: usize,
    seed: u64,
) -> Result<SimulationReport> {
    if n_paths == 0 || n_steps == 0 {
        return Err(Error::Domain(
            "n_paths and n_steps must be at least 1".into(),
        ));
    }
    let rep = Replicator::from_solution(solution)?;
    let m = solution.problem.market;
    let contract = solution.problem.contract;
    let kind = solution.problem.prefs.kind;
    let theta = m.theta();
    let times = time_grid(m.horizon, n_steps);
    let x_start = rep.wealth_at(0.0, 1.0)?;
    let lt = contract.guarantee;
    let blocks = n_paths.div_ceil(PATH_BLOCK);

    let results: Vec<Result<Acc>> = (0..blocks)
        .into_par_iter()
        .map(|block| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(block as u64);
            let count = PATH_BLOCK.min(n_paths - block * PATH_BLOCK);
            let mut acc = Acc {
                min_pi: f64::INFINITY,
                ..Acc::default()
            };
            for _ in 0..count {
                let mut x = x_start;
                let mut xi = 1.0f64;
                for w in times.windows(2) {
                    let (t, dt) = (w[0], w[1] - w[0]);
                    let pi = rep.strategy_at(t, xi)?;
                    acc.min_pi = acc.min_pi.min(pi);
                    let z: f64 = StandardNormal.sample(&mut rng);
                    let dw = dt.sqrt() * z;
                    x += (m.r * x + pi * (m.mu - m.r)) * dt + pi * m.sigma * dw;
                    x = x.max(0.0);
                    xi *= (-(m.r + 0.5 * theta * theta) * dt - theta * dw).exp();
                }
                let target = rep.profile.eval(xi);
                let e = x - target;
                acc.n += 1.0;
                acc.err2 += e * e;
                acc.target2 += target * target;
                acc.max_abs = acc.max_abs.max(e.abs());
                if x < lt {
                    acc.defaults += 1.0;
                }
                acc.wealth += x;
                acc.target += target;
                acc.equity += contract.equity_unchecked(kind, x);
                acc.holder += x - contract.equity_unchecked(kind, x);
                acc.deflated += xi * target;
                acc.deflated2 += (xi * target).powi(2);
            }
            Ok(acc)
        })
        .collect();
    let mut total = Acc {
        min_pi: f64::INFINITY,
        ..Acc::default()
    };
    for r in results {
        total = total.merge(r?);
    }
    let n = total.n;
    let freq = total.defaults / n;
    let dmean = total.deflated / n;
    let dvar = (total.deflated2 / n - dmean * dmean).max(0.0);
    let law = m.state_price_law(m.horizon)?;
    Ok(SimulationReport {
        n_paths,
        n_steps,
        seed,
        replication_rmse: (total.err2 / total.target2).sqrt(),
        replication_max_abs: total.max_abs,
        default_frequency: freq,
        default_frequency_se: (freq * (1.0 - freq) / n).sqrt(),
        closed_form_default_probability: solution.profile.default_probability(&law),
        mean_terminal_wealth: total.wealth / n,
        mean_target_wealth: total.target / n,
        mean_equity_payoff: total.equity / n,
        mean_policyholder_payoff: total.holder / n,
        deflated_target_mean: dmean,
        deflated_target_se: (dvar / n).sqrt(),
        min_risky_amount: total.min_pi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::contract::{ContractKind, ContractParams};
    use crate::preferences::PreferenceSpec;
    use crate::solver::{ConstraintSpec, Problem};

    fn market() -> MarketParams {
        MarketParams::new(0.05, 0.03, 0.3, 10.0).unwrap()
    }

    fn contract() -> ContractParams {
        ContractParams::new(100.0, 0.4, 0.6, 0.02, 10.0)
            .unwrap()
            .with_guarantee(50.0 * 0.2f64.exp())
            .unwrap()
    }

    fn solve(eps: f64, kind: ContractKind, cons: ConstraintSpec) -> Solution {
        let p = PreferenceSpec::new(0.5, 1.01, eps, kind).unwrap();
        Problem::new(market(), contract(), p, cons)
            .unwrap()
            .solve()
            .unwrap()
    }

    #[test]
    fn constant_profile_is_a_bond() {
        let p = PreferenceSpec::new(0.5, 1.01, 0.0, ContractKind::Defaultable).unwrap();
        let prof = WealthProfile::new(
            vec![],
            vec![SegmentKind::ConstantFloor(80.0)],
            1.0,
            contract(),
            p,
        )
        .unwrap();
        let rep = Replicator::new(&prof, &market()).unwrap();
        for t in [0.0, 3.0, 9.99] {
            for xi in [0.3, 1.0, 4.0] {
                let z = rep.wealth_at(t, xi).unwrap();
                assert!((z - 80.0 * (-0.03 * (10.0 - t)).exp()).abs() < 1e-12);
                assert_eq!(rep.strategy_at(t, xi).unwrap(), 0.0);
            }
        }
        assert!(rep.wealth_at(10.0, 1.0).is_err());
        assert!(rep.wealth_at(1.0, 0.0).is_err());
    }

    #[test]
    fn merton_proportion() {
        // A shifted Merton profile minus its bond part: π = θ/(γσ)·(Z − bond).
        let p = PreferenceSpec::new(0.5, 1.01, 0.0, ContractKind::Defaultable).unwrap();
        let c = contract();
        let prof =
            WealthProfile::new(vec![], vec![SegmentKind::GuaranteePlusInv], 0.05, c, p).unwrap();
        let m = market();
        let rep = Replicator::new(&prof, &m).unwrap();
        for t in [0.0, 5.0, 9.0] {
            for xi in [0.5, 1.0, 2.0] {
                let z = rep.wealth_at(t, xi).unwrap();
                let bond = c.guarantee * (-m.r * (m.horizon - t)).exp();
                let pi = rep.strategy_at(t, xi).unwrap();
                let expect = m.theta() / (0.5 * m.sigma) * (z - bond);
                assert!((pi / expect - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn time_zero_wealth_is_initial_capital() {
        for eps in [0.0, 0.1] {
            for cons in [
                ConstraintSpec::Unconstrained,
                ConstraintSpec::Var { beta: 0.025 },
            ] {
                let s = solve(eps, ContractKind::Defaultable, cons);
                let z = wealth_at(&s, 0.0, 1.0).unwrap();
                assert!((z / 100.0 - 1.0).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn near_maturity_matches_terminal_profile() {
        let s = solve(
            0.0,
            ContractKind::Defaultable,
            ConstraintSpec::Unconstrained,
        );
        let rep = Replicator::from_solution(&s).unwrap();
        let t = 10.0 - 1e-9;
        for xi in [0.2, 0.5, 0.9] {
            // away from breakpoints
            if s.profile
                .breakpoints
                .iter()
                .any(|b| (b / xi - 1.0).abs() < 1e-2)
            {
                continue;
            }
            let z = rep.wealth_at(t, xi).unwrap();
            assert!(
                (z - s.eval(xi)).abs() < 1e-3,
                "xi={xi} z={z} x={}",
                s.eval(xi)
            );
        }
    }

    #[test]
    fn analytic_and_fd_strategies_agree() {
        for eps in [0.0, 0.1] {
            for kind in [ContractKind::Defaultable, ContractKind::FullyProtected] {
                let s = solve(eps, kind, ConstraintSpec::Unconstrained);
                let rep = Replicator::from_solution(&s).unwrap();
                for t in [0.0, 4.0, 8.0, 9.5] {
                    for k in 0..25 {
                        let xi = 10f64.powf(-1.0 + k as f64 / 12.0);
                        let a = rep.strategy_at(t, xi).unwrap();
                        let f = rep.strategy_at_fd(t, xi).unwrap();
                        if a.abs() > 1e-4 {
                            assert!((a / f - 1.0).abs() < 1e-3, "t={t} xi={xi} {a} {f}");
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn wealth_monotone_and_strategy_nonnegative() {
        let s = solve(
            0.0,
            ContractKind::Defaultable,
            ConstraintSpec::Unconstrained,
        );
        let rep = Replicator::from_solution(&s).unwrap();
        for t in [0.5, 5.0, 8.0, 9.9] {
            let mut prev = f64::INFINITY;
            for k in 0..200 {
                let xi = 10f64.powf(-1.5 + 3.0 * k as f64 / 200.0);
                let snap = rep.snapshot(t, xi).unwrap();
                assert!(snap.wealth <= prev, "t={t} xi={xi} {} {prev}", snap.wealth);
                assert!(snap.risky_amount >= 0.0);
                prev = snap.wealth;
            }
        }
    }

    #[test]
    fn simulation_is_deterministic_and_checks_inputs() {
        let s = solve(
            0.0,
            ContractKind::Defaultable,
            ConstraintSpec::Unconstrained,
        );
        assert!(simulate_paths(&s, 0, 10, 1).is_err());
        let a = simulate_paths(&s, 130, 50, 7).unwrap();
        let b = simulate_paths(&s, 130, 50, 7).unwrap();
        assert_eq!(a, b);
        let c = simulate_paths(&s, 130, 50, 8).unwrap();
        assert_ne!(a.mean_terminal_wealth, c.mean_terminal_wealth);
        assert!(a.min_risky_amount >= 0.0);
    }

    #[test]
    fn constant_profile_replicates_exactly() {
        let pr = Problem::new(
            market(),
            contract(),
            PreferenceSpec::new(0.5, 1.01, 0.0, ContractKind::Defaultable).unwrap(),
            ConstraintSpec::Unconstrained,
        )
        .unwrap();
        let mut s = pr.solve().unwrap();
        s.profile = WealthProfile::new(
            vec![],
            vec![SegmentKind::ConstantFloor(100.0 * 0.3f64.exp())],
            s.lambda,
            s.problem.contract,
            s.problem.prefs,
        )
        .unwrap();
        let rep = simulate_paths(&s, 64, 200, 3).unwrap();
        // Euler compounding (1 + r dt) against e^{r dt}
        assert!(rep.replication_rmse < 1e-3);
        assert_eq!(rep.min_risky_amount, 0.0);
    }
}
