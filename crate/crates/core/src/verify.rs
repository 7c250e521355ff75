//! Independent checks of optimality: brute-force pointwise maximization of
//! the Lagrangian, Monte-Carlo expected utility and feasible competitors.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::market::StatePriceLaw;
use crate::preferences::Utility;
use crate::profile::{SegmentKind, WealthProfile};
use crate::solver::{ConstraintSpec, Problem, Solution};

/// Points of the logarithmic brute-force grid.
pub const BRUTE_GRID: usize = 20_001;

/// Ψ(x) = Ũ(x) − λξx − λ₂·1{x < L_T}, and −∞ below a portfolio-insurance floor.
pub fn lagrangian(problem: &Problem, lambda: f64, lambda2: f64, xi: f64, x: f64) -> f64 {
    if let ConstraintSpec::Pi { floor } = problem.constraint {
        if x < floor {
            return f64::NEG_INFINITY;
        }
    }
    let mut v = problem.prefs.derived_utility(&problem.contract, x) - lambda * xi * x;
    if lambda2 > 0.0 && x < problem.contract.guarantee {
        v -= lambda2;
    }
    v
}

/// Grid maximizer of Ψ together with its value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BruteForce {
    pub argmax: f64,
    pub value: f64,
    /// True when the best grid point is the top of the grid.
    pub at_grid_top: bool,
}

/// Maximizes Ψ over a log grid on [1e−6·L_T, top] plus the exact candidates
/// {0, l, L_T, L̃_T, L_T + I(λξ), I_ε(λξ)}. The top of the grid is ten times
/// the larger of L̃_T and an upper bound for I_ε(λξ·1e−3).
pub fn brute_force_argmax(problem: &Problem, lambda: f64, lambda2: f64, xi: f64) -> BruteForce {
    let c = &problem.contract;
    let p = &problem.prefs;
    let y = lambda * xi;
    let bound = p.inv_marginal_eps_bounds(c, y * 1e-3).1;
    let top = 10.0 * c.bonus_threshold.max(bound);
    let bottom = 1e-6 * c.guarantee;
    let step = (top / bottom).ln() / (BRUTE_GRID - 1) as f64;
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    let mut at_top = false;
    for k in 0..BRUTE_GRID {
        let x = bottom * (step * k as f64).exp();
        let v = lagrangian(problem, lambda, lambda2, xi, x);
        if v > best.0 {
            best = (v, x);
            at_top = k == BRUTE_GRID - 1;
        }
    }
    let mut candidates = vec![
        0.0,
        c.guarantee,
        c.bonus_threshold,
        c.guarantee + p.utility().inv_marginal(y),
    ];
    if let ConstraintSpec::Pi { floor } = problem.constraint {
        candidates.push(floor);
    }
    if y <= p.u_eps_prime_raw(c, c.bonus_threshold) {
        candidates.push(p.inv_marginal_eps_raw(c, y));
    }
    for x in candidates {
        let v = lagrangian(problem, lambda, lambda2, xi, x);
        if v > best.0 {
            best = (v, x);
            at_top = false;
        }
    }
    BruteForce {
        argmax: best.1,
        value: best.0,
        at_grid_top: at_top,
    }
}

/// Result of comparing the closed-form maximizer with the brute-force one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleGap {
    pub pairs: usize,
    /// Largest (brute − closed)/max(1, |brute|) over all pairs.
    pub max_gap: f64,
    pub violations: usize,
    pub grid_top_hits: usize,
}

/// Tolerance on the relative Lagrangian gap.
pub const GAP_TOLERANCE: f64 = 1e-8;

/// Compares Ψ at the closed-form maximizer with the brute-force maximum on
/// random pairs: λ log-uniform on [λ*/10, 10λ*] and ξ log-uniform over a
/// widened quantile range, a quarter of them within 1% of a breakpoint.
pub fn oracle_gap(solution: &Solution, pairs: usize, seed: u64) -> Result<OracleGap> {
    let problem = &solution.problem;
    let law = problem.terminal_law()?;
    let xi_lo = law.quantile_upper(1.0 - 1e-6)? / 3.0;
    let xi_hi = law.quantile_upper(1e-6)? * 3.0;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(f64, f64, f64)> = (0..pairs)
        .map(|_| {
            let a: f64 = rng.random();
            let b: f64 = rng.random();
            let c: f64 = rng.random();
            (a, b, c)
        })
        .collect();
    let results: Vec<Result<(f64, bool)>> = draws
        .par_iter()
        .map(|&(a, b, c)| {
            let lambda = solution.lambda * 10f64.powf(2.0 * a - 1.0);
            let lp = problem.profile_at(lambda)?;
            let bps = &lp.profile.breakpoints;
            let xi = if c < 0.25 && !bps.is_empty() {
                let j = ((b * bps.len() as f64) as usize).min(bps.len() - 1);
                bps[j] * (1.0 + 0.02 * (4.0 * c - 0.5))
            } else {
                xi_lo * (xi_hi / xi_lo).powf(b)
            };
            let x = lp.profile.eval(xi);
            let closed = lagrangian(problem, lambda, lp.lambda2, xi, x);
            let brute = brute_force_argmax(problem, lambda, lp.lambda2, xi);
            let gap = (brute.value - closed) / brute.value.abs().max(1.0);
            Ok((gap, brute.at_grid_top))
        })
        .collect();
    let mut out = OracleGap {
        pairs,
        max_gap: f64::NEG_INFINITY,
        violations: 0,
        grid_top_hits: 0,
    };
    for r in results {
        let (gap, top) = r?;
        let gap = if gap.is_nan() { f64::INFINITY } else { gap };
        out.max_gap = out.max_gap.max(gap);
        if gap > GAP_TOLERANCE {
            out.violations += 1;
        }
        if top {
            out.grid_top_hits += 1;
        }
    }
    Ok(out)
}

/// Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
}

impl Estimate {
    /// Mean and standard error from antithetic pairs (consecutive entries).
    pub fn from_pairs(values: &[f64]) -> Estimate {
        let pairs: Vec<f64> = values
            .chunks(2)
            .map(|c| c.iter().sum::<f64>() / c.len() as f64)
            .collect();
        let n = pairs.len() as f64;
        let mean = pairs.iter().sum::<f64>() / n;
        if mean.is_infinite() {
            return Estimate { mean, se: 0.0 };
        }
        let var = if n > 1.0 {
            pairs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
        } else {
            0.0
        };
        Estimate {
            mean,
            se: (var / n).sqrt(),
        }
    }
}

/// Antithetic Monte-Carlo estimates of E[Ũ(X(ξ_T))] and E[ξ_T X(ξ_T)].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McUtility {
    pub utility: Estimate,
    pub budget: Estimate,
}

/// Minimum sample size for Monte-Carlo utility estimates.
pub const MIN_MC_SAMPLES: usize = 10_000;

pub fn mc_expected_utility<F>(
    problem: &Problem,
    payoff: F,
    n: usize,
    seed: u64,
) -> Result<McUtility>
where
    F: Fn(f64) -> f64 + Sync,
{
    if n < MIN_MC_SAMPLES {
        return Err(Error::Domain(format!(
            "Monte-Carlo needs at least {MIN_MC_SAMPLES} samples, got {n}"
        )));
    }
    let law = problem.terminal_law()?;
    let xi = law.sample_xi(n, seed, true)?;
    let (u, b): (Vec<f64>, Vec<f64>) = xi
        .par_iter()
        .map(|&s| {
            let x = payoff(s);
            (problem.prefs.derived_utility(&problem.contract, x), s * x)
        })
        .unzip();
    Ok(McUtility {
        utility: Estimate::from_pairs(&u),
        budget: Estimate::from_pairs(&b),
    })
}

/// E[Ũ(X*(ξ_T))] by quadrature over the profile segments.
pub fn expected_utility_quadrature(profile: &WealthProfile, law: &StatePriceLaw) -> f64 {
    let p = profile.prefs;
    let c = profile.contract;
    (0..profile.segments.len())
        .map(|i| profile.segment_quadrature(law, i, 1.0, |_, x| p.derived_utility(&c, x)))
        .sum()
}

/// Non-increasing competitor payoff.
#[derive(Debug, Clone, PartialEq)]
enum Payoff {
    Constant(f64),
    /// a + b·ξ^p.
    Power {
        a: f64,
        b: f64,
        p: f64,
    },
    /// anchor + s·(X(ξ) − anchor) wherever X(ξ) > anchor.
    Rescaled {
        profile: WealthProfile,
        anchor: f64,
        scale: f64,
    },
    /// L_T + s·(X(ξ) − L_T)⁺ on ξ ≤ ξ̄ and 0 beyond.
    VarProjected {
        profile: WealthProfile,
        xi_bar: f64,
        scale: f64,
    },
}

impl Payoff {
    fn eval(&self, xi: f64) -> f64 {
        match self {
            Payoff::Constant(v) => *v,
            Payoff::Power { a, b, p } => a + b * xi.powf(*p),
            Payoff::Rescaled {
                profile,
                anchor,
                scale,
            } => {
                let x = profile.eval(xi);
                if x > *anchor {
                    anchor + scale * (x - anchor)
                } else {
                    x
                }
            }
            Payoff::VarProjected {
                profile,
                xi_bar,
                scale,
            } => {
                if xi > *xi_bar {
                    0.0
                } else {
                    let l = profile.contract.guarantee;
                    l + scale * (profile.eval(xi) - l).max(0.0)
                }
            }
        }
    }
}

/// Scale s with anchor-part cost A and scalable cost B so that A + s·B = X₀.
fn rescale_factor(x0: f64, fixed: f64, scalable: f64) -> Option<f64> {
    let s = (x0 - fixed) / scalable;
    (s.is_finite() && s >= 0.0).then_some(s)
}

/// anchor + s(X − anchor) on {X > anchor}, with s chosen so the cost is X₀.
pub fn rescale_profile(
    profile: &WealthProfile,
    anchor: f64,
    law: &StatePriceLaw,
) -> Result<impl Fn(f64) -> f64 + Sync + Clone> {
    let payoff = rescaled(profile, anchor, law)
        .ok_or_else(|| Error::Infeasible("no non-negative rescaling reaches X0".into()))?;
    Ok(move |xi: f64| payoff.eval(xi))
}

fn rescaled(profile: &WealthProfile, anchor: f64, law: &StatePriceLaw) -> Option<Payoff> {
    let above = |xi: f64, x: f64| if x > anchor { xi * (x - anchor) } else { 0.0 };
    let below = |xi: f64, x: f64| if x > anchor { xi * anchor } else { xi * x };
    let n = profile.segments.len();
    let scalable: f64 = (0..n)
        .map(|i| profile.segment_quadrature(law, i, 1.0, above))
        .sum();
    let fixed: f64 = (0..n)
        .map(|i| profile.segment_quadrature(law, i, 1.0, below))
        .sum();
    let scale = rescale_factor(profile.contract.x0, fixed, scalable)?;
    Some(Payoff::Rescaled {
        profile: profile.clone(),
        anchor,
        scale,
    })
}

/// Outcome of one competitor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompetitorResult {
    pub name: String,
    pub feasible: bool,
    pub utility: Estimate,
    /// Paired mean of Ũ(X*) − Ũ(Y) and its standard error.
    pub advantage: Estimate,
    /// √(se(X*)² + se(Y)²) of the two unpaired utility estimates.
    pub combined_se: f64,
    /// Gate: E[Ũ(X*)] ≥ E[Ũ(Y)] − 3·combined se. Infeasible competitors pass.
    pub passed: bool,
    /// Paired advantage above 3 standard errors, or identical payoffs.
    pub strictly_better: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleReport {
    pub oracle: OracleGap,
    pub budget_mc: Estimate,
    pub utility_mc: Estimate,
    pub utility_quadrature: f64,
    pub competitors: Vec<CompetitorResult>,
    pub dominance_xi_star: Option<f64>,
}

impl OracleReport {
    /// Names of the gates that failed; empty when everything passed.
    pub fn failed_gates(&self, x0: f64) -> Vec<String> {
        let mut out = Vec::new();
        if self.oracle.violations > 0 || self.oracle.grid_top_hits > 0 {
            out.push(format!(
                "lagrangian: {} violations, {} grid-top hits, max gap {:e}",
                self.oracle.violations, self.oracle.grid_top_hits, self.oracle.max_gap
            ));
        }
        if (self.budget_mc.mean - x0).abs() > 4.0 * self.budget_mc.se {
            out.push(format!(
                "budget: MC {} ± {} vs X0 {x0}",
                self.budget_mc.mean, self.budget_mc.se
            ));
        }
        let du = self.utility_mc.mean - self.utility_quadrature;
        if !(du.abs() <= 4.0 * self.utility_mc.se) && du != 0.0 {
            out.push(format!(
                "utility: MC {} ± {} vs quadrature {}",
                self.utility_mc.mean, self.utility_mc.se, self.utility_quadrature
            ));
        }
        for c in &self.competitors {
            if !c.passed {
                out.push(format!(
                    "competitor {}: advantage {} ± {}",
                    c.name, c.advantage.mean, c.advantage.se
                ));
            }
        }
        out
    }
}

/// Verification sizes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub oracle_pairs: usize,
    pub mc_samples: usize,
    pub seed: u64,
}

impl VerifyConfig {
    pub fn new(seed: u64) -> Self {
        Self {
            oracle_pairs: 2000,
            mc_samples: 1_000_000,
            seed,
        }
    }
}

/// P(Y < L_T) for a non-increasing payoff Y, from the ξ where it crosses L_T.
fn shortfall_probability<F: Fn(f64) -> f64>(payoff: F, law: &StatePriceLaw, level: f64) -> f64 {
    let (mut lo, mut hi) = (law.xi_at(-40.0), law.xi_at(40.0));
    if payoff(lo) < level {
        return 1.0;
    }
    if payoff(hi) >= level {
        return 0.0;
    }
    for _ in 0..200 {
        let mid = (lo * hi).sqrt();
        if payoff(mid) >= level {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            break;
        }
    }
    law.tail_probability(lo)
}

/// Builds the competitor payoffs, each costing exactly X₀.
fn competitors(solution: &Solution, law: &StatePriceLaw) -> Result<Vec<(String, Option<Payoff>)>> {
    let pr = &solution.problem;
    let c = &pr.contract;
    let x0 = c.x0;
    let gamma = pr.prefs.gamma;
    let mut out: Vec<(String, Option<Payoff>)> = Vec::new();
    out.push(("bond".into(), Some(Payoff::Constant(x0 / law.mean()))));

    let p = -1.0 / gamma;
    let merton_b = x0 / law.partial_moment(1.0 + p, 0.0, f64::INFINITY);
    out.push((
        "merton".into(),
        Some(Payoff::Power {
            a: 0.0,
            b: merton_b,
            p,
        }),
    ));

    let floor = match pr.constraint {
        ConstraintSpec::Pi { floor } => floor.max(c.guarantee),
        _ => c.guarantee,
    };
    for kappa in [2.0, 4.0] {
        let fixed = floor * law.mean();
        let unit = law.partial_moment(1.0 - kappa, 0.0, f64::INFINITY);
        let payoff = rescale_factor(x0, fixed, unit).map(|b| Payoff::Power {
            a: floor,
            b,
            p: -kappa,
        });
        out.push((format!("cppi_kappa{kappa}"), payoff));
    }

    let anchor = match pr.constraint {
        ConstraintSpec::Unconstrained => 0.0,
        ConstraintSpec::Var { .. } => c.guarantee,
        ConstraintSpec::Pi { floor } => floor,
    };
    if pr.constraint != ConstraintSpec::Unconstrained {
        let unc = Problem {
            constraint: ConstraintSpec::Unconstrained,
            ..*pr
        }
        .solve()?;
        let projected = match pr.constraint {
            ConstraintSpec::Var { .. } => {
                let bar = solution.xi_bar.unwrap_or(f64::INFINITY);
                let lt = c.guarantee;
                let prof = &unc.profile;
                let n = prof.segments.len();
                let cut = |xi: f64| xi <= bar;
                let fixed: f64 = (0..n)
                    .map(|i| {
                        prof.segment_quadrature(
                            law,
                            i,
                            1.0,
                            |xi, _| if cut(xi) { xi * lt } else { 0.0 },
                        )
                    })
                    .sum();
                let scalable: f64 = (0..n)
                    .map(|i| {
                        prof.segment_quadrature(law, i, 1.0, |xi, x| {
                            if cut(xi) {
                                xi * (x - lt).max(0.0)
                            } else {
                                0.0
                            }
                        })
                    })
                    .sum();
                rescale_factor(x0, fixed, scalable).map(|scale| Payoff::VarProjected {
                    profile: prof.clone(),
                    xi_bar: bar,
                    scale,
                })
            }
            _ => {
                let mut prof = unc.profile.clone();
                for s in prof.segments.iter_mut() {
                    if *s == SegmentKind::Zero {
                        *s = SegmentKind::ConstantFloor(anchor);
                    }
                }
                let floored = FlooredProfile(prof, anchor);
                rescaled(&floored.materialize(), anchor, law)
            }
        };
        out.push(("projected_unconstrained".into(), projected));
    }

    for (name, factor) in [("perturbed_minus5", 0.95), ("perturbed_plus5", 1.05)] {
        let mut prof = solution.profile.clone();
        for b in prof.breakpoints.iter_mut() {
            *b *= factor;
        }
        out.push((name.into(), rescaled(&prof, anchor, law)));
    }
    Ok(out)
}

/// Unconstrained profile with every level raised to at least a floor.
struct FlooredProfile(WealthProfile, f64);

impl FlooredProfile {
    fn materialize(self) -> WealthProfile {
        // The unconstrained profile only dips below a floor l < L_T on its
        // loss segment, which `competitors` has already replaced by l. For
        // floors at or above L_T the gain segments can also dip below, so cut
        // them at the first ξ where the profile falls under the floor.
        let FlooredProfile(prof, floor) = self;
        let law_free_cross = |kind: SegmentKind, lo: f64, hi: f64| -> f64 {
            let (mut a, mut b) = (lo.max(1e-300), hi.min(1e300));
            if prof.level(kind, b) >= floor {
                return hi;
            }
            if prof.level(kind, a) < floor {
                return lo;
            }
            for _ in 0..200 {
                let m = (a * b).sqrt();
                if prof.level(kind, m) >= floor {
                    a = m;
                } else {
                    b = m;
                }
            }
            a
        };
        let mut pieces = Vec::new();
        for (i, kind) in prof.segments.iter().enumerate() {
            let (lo, hi) = prof.bounds(i);
            let cross = law_free_cross(*kind, lo, hi);
            if cross < hi {
                pieces.push((*kind, cross));
                break;
            }
            pieces.push((*kind, hi));
        }
        pieces.push((SegmentKind::ConstantFloor(floor), f64::INFINITY));
        WealthProfile::from_pieces(&pieces, prof.lambda, prof.contract, prof.prefs).unwrap_or(prof)
    }
}

fn feasible(problem: &Problem, payoff: &Payoff, law: &StatePriceLaw) -> bool {
    let lt = problem.contract.guarantee;
    match problem.constraint {
        ConstraintSpec::Unconstrained => true,
        ConstraintSpec::Var { beta } => {
            shortfall_probability(|xi| payoff.eval(xi), law, lt) <= beta + 1e-12
        }
        ConstraintSpec::Pi { floor } => {
            shortfall_probability(|xi| payoff.eval(xi), law, floor * (1.0 - 1e-12)) == 0.0
        }
    }
}

/// ξ* on `grid` such that `upper(ξ) ≥ lower(ξ)` for every grid point ξ ≥ ξ*.
pub fn dominance_point<A, B>(upper: A, lower: B, grid: &[f64]) -> Option<f64>
where
    A: Fn(f64) -> f64,
    B: Fn(f64) -> f64,
{
    let mut star = None;
    for &xi in grid.iter().rev() {
        if upper(xi) >= lower(xi) {
            star = Some(xi);
        } else {
            break;
        }
    }
    star
}

/// Log grid of `n` points spanning the [q, 1 − q] quantiles of ξ_T.
pub fn evaluation_grid(law: &StatePriceLaw, n: usize, q: f64) -> Result<Vec<f64>> {
    let lo = law.quantile_upper(1.0 - q)?;
    let hi = law.quantile_upper(q)?;
    Ok((0..n)
        .map(|k| lo * (hi / lo).powf(k as f64 / (n - 1) as f64))
        .collect())
}

/// Runs every oracle against a solution.
pub fn competitor_suite(solution: &Solution, config: &VerifyConfig) -> Result<OracleReport> {
    let pr = &solution.problem;
    let law = pr.terminal_law()?;
    let oracle = oracle_gap(solution, config.oracle_pairs, config.seed)?;
    let mc = mc_expected_utility(pr, |xi| solution.eval(xi), config.mc_samples, config.seed)?;
    let quad_u = expected_utility_quadrature(&solution.profile, &law);

    let xi = law.sample_xi(config.mc_samples, config.seed, true)?;
    let own: Vec<f64> = xi
        .par_iter()
        .map(|&s| pr.prefs.derived_utility(&pr.contract, solution.eval(s)))
        .collect();
    let mut results = Vec::new();
    for (name, payoff) in competitors(solution, &law)? {
        let Some(payoff) = payoff else {
            results.push(CompetitorResult {
                name,
                feasible: false,
                utility: Estimate {
                    mean: f64::NAN,
                    se: f64::NAN,
                },
                advantage: Estimate {
                    mean: f64::NAN,
                    se: f64::NAN,
                },
                combined_se: f64::NAN,
                passed: true,
                strictly_better: false,
            });
            continue;
        };
        let ok = feasible(pr, &payoff, &law);
        let theirs: Vec<f64> = xi
            .par_iter()
            .map(|&s| pr.prefs.derived_utility(&pr.contract, payoff.eval(s)))
            .collect();
        let diff: Vec<f64> = own
            .iter()
            .zip(&theirs)
            .map(|(a, b)| if a == b { 0.0 } else { a - b })
            .collect();
        let adv = Estimate::from_pairs(&diff);
        let exact = diff.iter().all(|d| *d == 0.0);
        let utility = Estimate::from_pairs(&theirs);
        let combined_se = mc.utility.se.hypot(utility.se);
        results.push(CompetitorResult {
            name,
            feasible: ok,
            utility,
            advantage: adv,
            combined_se,
            passed: !ok || exact || mc.utility.mean - utility.mean >= -3.0 * combined_se,
            strictly_better: exact || adv.mean > 3.0 * adv.se,
        });
    }

    let dominance_xi_star = match pr.constraint {
        ConstraintSpec::Var { .. } => {
            let unc = Problem {
                constraint: ConstraintSpec::Unconstrained,
                ..*pr
            }
            .solve()?;
            let grid = evaluation_grid(&law, 2001, 1e-4)?;
            dominance_point(|x| solution.eval(x), |x| unc.eval(x), &grid)
        }
        _ => None,
    };

    Ok(OracleReport {
        oracle,
        budget_mc: mc.budget,
        utility_mc: mc.utility,
        utility_quadrature: quad_u,
        competitors: results,
        dominance_xi_star,
    })
}

/// Moves every breakpoint by `factor` and re-solves the multiplier so the
/// shifted payoff still costs X₀. The result is feasible whenever the shift
/// keeps the constraint satisfied, and suboptimal unless `factor` is 1.
pub fn tamper_breakpoints(solution: &Solution, factor: f64) -> Result<Solution> {
    if !(factor > 0.0 && factor.is_finite()) {
        return Err(Error::Domain(format!(
            "tamper factor must be > 0, got {factor}"
        )));
    }
    let pr = &solution.problem;
    let law = pr.terminal_law()?;
    let x0 = pr.contract.x0;
    let shifted = |lambda: f64| -> Result<WealthProfile> {
        let base = pr.profile_at(lambda)?.profile;
        let mut pieces: Vec<(SegmentKind, f64)> = base
            .segments
            .iter()
            .zip(&base.breakpoints)
            .map(|(k, b)| (*k, b * factor))
            .collect();
        pieces.push((
            *base.segments.last().expect("non-empty profile"),
            f64::INFINITY,
        ));
        WealthProfile::from_pieces(&pieces, lambda, pr.contract, pr.prefs)
    };
    let excess = |lambda: f64| -> Result<f64> { Ok(shifted(lambda)?.budget_cost(&law) - x0) };
    let (mut lo, mut hi) = (solution.lambda, solution.lambda);
    for _ in 0..200 {
        if excess(lo)? > 0.0 {
            break;
        }
        lo *= 0.5;
    }
    for _ in 0..200 {
        if excess(hi)? < 0.0 {
            break;
        }
        hi *= 2.0;
    }
    if !(excess(lo)? > 0.0 && excess(hi)? < 0.0) {
        return Err(Error::Numerical(
            "could not bracket the tampered budget".into(),
        ));
    }
    while hi / lo - 1.0 > 1e-13 {
        let mid = (lo * hi).sqrt();
        if excess(mid)? > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let profile = shifted(hi)?;
    let residual = (profile.budget_cost(&law) - x0) / x0;
    let mut out = solution.clone();
    out.diagnostics.default_probability = profile.default_probability(&law);
    out.diagnostics.budget_residual = residual;
    out.lambda = hi;
    out.profile = profile;
    Ok(out)
}
