mod config;
mod output;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcvar_core::verify::{competitor_suite, tamper_breakpoints, VerifyConfig};
use pcvar_core::{simulate_paths, Solution};
use thiserror::Error;

use config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(
    name = "pcvar",
    version,
    about = "Optimal equity-holder strategies for participating contracts"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// JSON run configuration; omitted blocks take the study defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve for the optimal terminal wealth and write profile.csv and solution.json.
    Solve(Common),
    /// Wealth and risky amount against ξ_t at a fixed date, optionally swept.
    Curve {
        #[command(flatten)]
        common: Common,
        /// Evaluation date in years, 0 ≤ t < T.
        #[arg(long)]
        t: Option<f64>,
        #[arg(long, value_delimiter = ',')]
        alpha_list: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        delta_list: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        eta_list: Option<Vec<f64>>,
        #[arg(long, value_delimiter = ',')]
        epsilon_list: Option<Vec<f64>>,
    },
    /// Euler replication of the optimal strategy along simulated paths.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        paths: Option<usize>,
        #[arg(long)]
        steps: Option<usize>,
    },
    /// Run the independent oracles; exit code 5 when a gate fails.
    Verify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        mc_samples: Option<usize>,
        #[arg(long)]
        oracle_pairs: Option<usize>,
        /// Scale every breakpoint before verifying (negative control).
        #[arg(long, hide = true)]
        tamper_breakpoints: Option<f64>,
    },
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Model(#[from] pcvar_core::Error),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{0} requires a seed (--seed or run.seed)")]
    MissingSeed(&'static str),
    #[error("verification failed:\n  {}", .0.join("\n  "))]
    Gates(Vec<String>),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        use pcvar_core::Error as E;
        match self {
            CliError::Config(ConfigError::Model(E::Infeasible(_)))
            | CliError::Model(E::Infeasible(_)) => 3,
            CliError::Config(ConfigError::Model(E::Numerical(_) | E::Domain(_)))
            | CliError::Model(E::Numerical(_) | E::Domain(_)) => 4,
            CliError::Config(_) | CliError::MissingSeed(_) => 2,
            CliError::Model(E::InvalidParameter { .. } | E::DegenerateMarket) => 2,
            CliError::Gates(_) => 5,
            CliError::Io { .. } => 1,
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(common) => {
            let (cfg, out) = setup(&common)?;
            cmd_solve(&cfg, &out)
        }
        Command::Curve {
            common,
            t,
            alpha_list,
            delta_list,
            eta_list,
            epsilon_list,
        } => {
            let (mut cfg, out) = setup(&common)?;
            if let Some(t) = t {
                cfg.run.curve_t = t;
                cfg.problem()?;
            }
            let sweeps = [
                ("alpha", alpha_list),
                ("delta", delta_list),
                ("eta", eta_list),
                ("epsilon", epsilon_list),
            ];
            cmd_curve(&cfg, &out, &sweeps)
        }
        Command::Simulate {
            common,
            paths,
            steps,
        } => {
            let (mut cfg, out) = setup(&common)?;
            let seed = cfg.run.seed.ok_or(CliError::MissingSeed("simulate"))?;
            if let Some(p) = paths {
                cfg.run.mc_paths = p;
            }
            if let Some(s) = steps {
                cfg.run.steps = s;
            }
            cmd_simulate(&cfg, &out, seed)
        }
        Command::Verify {
            common,
            mc_samples,
            oracle_pairs,
            tamper_breakpoints,
        } => {
            let (mut cfg, out) = setup(&common)?;
            let seed = cfg.run.seed.ok_or(CliError::MissingSeed("verify"))?;
            if let Some(n) = mc_samples {
                cfg.run.mc_samples = n;
            }
            if let Some(n) = oracle_pairs {
                cfg.run.oracle_pairs = n;
            }
            cmd_verify(&cfg, &out, seed, tamper_breakpoints)
        }
    }
}

/// Loads the config, applies command-line overrides and creates the output directory.
fn setup(common: &Common) -> Result<(RunConfig, PathBuf), CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if common.seed.is_some() {
        cfg.run.seed = common.seed;
    }
    let out = common
        .out
        .clone()
        .or_else(|| cfg.run.out.clone())
        .unwrap_or_else(|| PathBuf::from("out"));
    std::fs::create_dir_all(&out).map_err(|source| CliError::Io {
        path: out.clone(),
        source,
    })?;
    Ok((cfg, out))
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn cmd_solve(cfg: &RunConfig, out: &Path) -> Result<(), CliError> {
    let solution = cfg.problem()?.solve()?;
    let law = solution.problem.terminal_law()?;
    let grid = pcvar_core::verify::evaluation_grid(&law, cfg.run.grid_points, 1e-4)?;
    let path = out.join("profile.csv");
    output::write_profile(&path, &solution, &grid).map_err(io_err(&path))?;
    let path = out.join("solution.json");
    let json = serde_json::to_string_pretty(&solution).expect("solution serializes");
    std::fs::write(&path, json).map_err(io_err(&path))?;
    print!("{}", output::solution_summary(&solution));
    Ok(())
}

fn cmd_curve(
    cfg: &RunConfig,
    out: &Path,
    sweeps: &[(&'static str, Option<Vec<f64>>)],
) -> Result<(), CliError> {
    let mut series: Vec<(String, RunConfig)> = vec![(String::new(), cfg.clone())];
    for (name, values) in sweeps {
        let Some(values) = values else { continue };
        let mut next = Vec::new();
        for (tag, base) in &series {
            for &v in values {
                let mut c = base.clone();
                match *name {
                    "alpha" => {
                        if c.contract.l0.is_some() {
                            return Err(ConfigError::Invalid(
                                "alpha sweeps need the x0/alpha contract form".into(),
                            )
                            .into());
                        }
                        c.contract.alpha = Some(v);
                    }
                    "delta" => c.contract.delta = v,
                    "eta" => c.preferences.eta = v,
                    _ => c.preferences.epsilon = v,
                }
                next.push((format!("{tag}_{name}_{v}"), c));
            }
        }
        series = next;
    }
    for (tag, c) in &series {
        let solution = c.problem()?.solve()?;
        let rows = output::curve_rows(
            &solution,
            c.run.curve_t,
            c.run.curve_points,
            c.run.curve_quantile,
        )?;
        let path = out.join(format!("curve{tag}.csv"));
        output::write_curve(&path, &rows).map_err(io_err(&path))?;
        println!("wrote {} ({} rows)", path.display(), rows.len());
    }
    Ok(())
}

fn cmd_simulate(cfg: &RunConfig, out: &Path, seed: u64) -> Result<(), CliError> {
    let solution = cfg.problem()?.solve()?;
    let report = simulate_paths(&solution, cfg.run.mc_paths, cfg.run.steps, seed)?;
    let path = out.join("simulation.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&path, json).map_err(io_err(&path))?;
    print!("{}", output::simulation_summary(&report));
    Ok(())
}

fn cmd_verify(cfg: &RunConfig, out: &Path, seed: u64, tamper: Option<f64>) -> Result<(), CliError> {
    let mut solution: Solution = cfg.problem()?.solve()?;
    if let Some(f) = tamper {
        solution = tamper_breakpoints(&solution, f)?;
    }
    let vc = VerifyConfig {
        oracle_pairs: cfg.run.oracle_pairs,
        mc_samples: cfg.run.mc_samples,
        seed,
    };
    let report = competitor_suite(&solution, &vc)?;
    let x0 = solution.problem.contract.x0;
    let failed = report.failed_gates(x0);
    let path = out.join("verify.csv");
    output::write_verify(&path, &report, x0).map_err(io_err(&path))?;
    let path = out.join("verify.json");
    let json = serde_json::to_string_pretty(&report).expect("report serializes");
    std::fs::write(&path, json).map_err(io_err(&path))?;
    print!("{}", output::verify_summary(&report));
    if failed.is_empty() {
        println!("all gates passed");
        Ok(())
    } else {
        Err(CliError::Gates(failed))
    }
}
