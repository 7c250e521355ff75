//! CSV writers and console summaries. Numbers are written in shortest
//! round-trip scientific notation.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use pcvar_core::verify::OracleReport;
use pcvar_core::{Replicator, SimulationReport, Solution, StateSnapshot};

pub fn write_profile(path: &Path, solution: &Solution, grid: &[f64]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "xi,terminal_wealth,segment_label")?;
    for &xi in grid {
        let label = solution.profile.segment_at(xi).label();
        writeln!(w, "{:e},{:e},{label}", xi, solution.eval(xi))?;
    }
    w.flush()
}

/// States on a ξ_t log grid spanning the [q, 1 − q] quantiles; the single
/// state ξ₀ = 1 at t = 0.
pub fn curve_rows(
    solution: &Solution,
    t: f64,
    points: usize,
    q: f64,
) -> pcvar_core::Result<Vec<StateSnapshot>> {
    let rep = Replicator::from_solution(solution)?;
    if t == 0.0 {
        return Ok(vec![rep.snapshot(0.0, 1.0)?]);
    }
    let law = solution.problem.market.state_price_law(t)?;
    pcvar_core::verify::evaluation_grid(&law, points, q)?
        .into_iter()
        .map(|xi| rep.snapshot(t, xi))
        .collect()
}

pub fn write_curve(path: &Path, rows: &[StateSnapshot]) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "xi_t,wealth,risky_amount")?;
    for r in rows {
        writeln!(w, "{:e},{:e},{:e}", r.xi_t, r.wealth, r.risky_amount)?;
    }
    w.flush()
}

pub fn write_verify(path: &Path, report: &OracleReport, x0: f64) -> std::io::Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "gate,name,value,std_error,passed")?;
    let o = &report.oracle;
    let ok = o.violations == 0 && o.grid_top_hits == 0;
    writeln!(w, "lagrangian,max_relative_gap,{:e},,{ok}", o.max_gap)?;
    let b = &report.budget_mc;
    let ok = (b.mean - x0).abs() <= 4.0 * b.se;
    writeln!(w, "budget,mc,{:e},{:e},{ok}", b.mean, b.se)?;
    let u = &report.utility_mc;
    let ok = (u.mean - report.utility_quadrature).abs() <= 4.0 * u.se;
    writeln!(w, "utility,mc,{:e},{:e},{ok}", u.mean, u.se)?;
    writeln!(
        w,
        "utility,quadrature,{:e},,{ok}",
        report.utility_quadrature
    )?;
    for c in &report.competitors {
        let name = if c.feasible {
            c.name.clone()
        } else {
            format!("{}(infeasible)", c.name)
        };
        writeln!(
            w,
            "competitor,{name},{:e},{:e},{}",
            c.advantage.mean, c.advantage.se, c.passed
        )?;
    }
    w.flush()
}

pub fn solution_summary(s: &Solution) -> String {
    let mut out = String::new();
    let case = s.case.map_or("n/a", |c| c.label());
    let _ = writeln!(out, "constraint          {}", s.problem.constraint.label());
    let _ = writeln!(out, "case                {case}");
    let _ = writeln!(out, "lambda              {:e}", s.lambda);
    let _ = writeln!(out, "lambda2             {:e}", s.lambda2);
    let _ = writeln!(out, "binding             {}", s.binding);
    if let Some(b) = s.xi_bar {
        let _ = writeln!(out, "xi_bar              {b:e}");
    }
    if let Some(t) = &s.thresholds {
        let _ = writeln!(out, "xi_tilde_l          {:e}", t.xi_tilde_l);
        let _ = writeln!(out, "xi_hat_l            {:e}", t.xi_hat_l);
        for (name, v) in [
            ("xi_u", t.xi_u),
            ("xi_hat_one", t.xi_hat_one),
            ("xi_hat_eps", t.xi_hat_eps),
        ] {
            if let Some(v) = v {
                let _ = writeln!(out, "{name:<20}{v:e}");
            }
        }
        let _ = writeln!(out, "cutoff              {:e}", t.cutoff);
    }
    let _ = writeln!(out, "breakpoints         {:?}", s.profile.breakpoints);
    let labels: Vec<&str> = s.profile.segments.iter().map(|k| k.label()).collect();
    let _ = writeln!(out, "segments            {}", labels.join(" | "));
    let d = &s.diagnostics;
    let _ = writeln!(out, "default_probability {:e}", d.default_probability);
    let _ = writeln!(out, "budget_residual     {:e}", d.budget_residual);
    out
}

pub fn simulation_summary(r: &SimulationReport) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "paths x steps       {} x {}", r.n_paths, r.n_steps);
    let _ = writeln!(out, "replication_rmse    {:e}", r.replication_rmse);
    let _ = writeln!(out, "replication_max_abs {:e}", r.replication_max_abs);
    let _ = writeln!(
        out,
        "default_frequency   {:e} ± {:e} (closed form {:e})",
        r.default_frequency, r.default_frequency_se, r.closed_form_default_probability
    );
    let _ = writeln!(out, "mean_terminal       {:e}", r.mean_terminal_wealth);
    let _ = writeln!(out, "mean_target         {:e}", r.mean_target_wealth);
    let _ = writeln!(out, "min_risky_amount    {:e}", r.min_risky_amount);
    out
}

pub fn verify_summary(r: &OracleReport) -> String {
    let mut out = String::new();
    let o = &r.oracle;
    let _ = writeln!(
        out,
        "lagrangian   pairs {} max gap {:e} violations {} grid-top {}",
        o.pairs, o.max_gap, o.violations, o.grid_top_hits
    );
    let _ = writeln!(
        out,
        "budget mc    {:e} ± {:e}",
        r.budget_mc.mean, r.budget_mc.se
    );
    let _ = writeln!(
        out,
        "utility mc   {:e} ± {:e} (quadrature {:e})",
        r.utility_mc.mean, r.utility_mc.se, r.utility_quadrature
    );
    for c in &r.competitors {
        if c.feasible {
            let _ = writeln!(
                out,
                "competitor   {:<24} advantage {:e} ± {:e} {}",
                c.name,
                c.advantage.mean,
                c.advantage.se,
                if c.passed { "ok" } else { "FAIL" }
            );
        } else {
            let _ = writeln!(out, "competitor   {:<24} infeasible, excluded", c.name);
        }
    }
    if let Some(x) = r.dominance_xi_star {
        let _ = writeln!(out, "dominance    xi* = {x:e}");
    }
    out
}
