//! JSON run configuration. Every block and field is optional; omitted
//! values take the numerical-study defaults.

use std::path::{Path, PathBuf};

use pcvar_core::{
    ConstraintSpec, ContractKind, ContractParams, MarketParams, PreferenceSpec, Problem,
};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("malformed config: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error(transparent)]
    Model(#[from] pcvar_core::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MarketBlock {
    pub mu: f64,
    pub r: f64,
    pub sigma: f64,
    pub horizon: f64,
}

impl Default for MarketBlock {
    fn default() -> Self {
        Self {
            mu: 0.05,
            r: 0.03,
            sigma: 0.3,
            horizon: 10.0,
        }
    }
}

/// Either (x0, alpha) or the two premiums (l0, e0). The guarantee is an
/// explicit `guarantee`, or `guarantee_base`·e^{gT} (base 50 by default).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ContractBlock {
    pub x0: Option<f64>,
    pub alpha: Option<f64>,
    pub l0: Option<f64>,
    pub e0: Option<f64>,
    pub delta: f64,
    pub g: f64,
    pub guarantee: Option<f64>,
    pub guarantee_base: Option<f64>,
}

impl Default for ContractBlock {
    fn default() -> Self {
        Self {
            x0: None,
            alpha: None,
            l0: None,
            e0: None,
            delta: 0.6,
            g: 0.02,
            guarantee: None,
            guarantee_base: None,
        }
    }
}

pub const DEFAULT_X0: f64 = 100.0;
pub const DEFAULT_ALPHA: f64 = 0.4;
pub const DEFAULT_GUARANTEE_BASE: f64 = 50.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PreferenceBlock {
    pub gamma: f64,
    pub eta: f64,
    pub epsilon: f64,
    pub kind: ContractKind,
}

impl Default for PreferenceBlock {
    fn default() -> Self {
        Self {
            gamma: 0.5,
            eta: 1.01,
            epsilon: 0.0,
            kind: ContractKind::Defaultable,
        }
    }
}

/// `floor` is absolute; `floor_fraction` is a multiple of L_T (0.2 when
/// neither is given).
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum ConstraintBlock {
    #[default]
    None,
    Var {
        #[serde(default = "default_beta")]
        beta: f64,
    },
    Pi {
        #[serde(default)]
        floor: Option<f64>,
        #[serde(default)]
        floor_fraction: Option<f64>,
    },
}

fn default_beta() -> f64 {
    0.025
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunBlock {
    pub seed: Option<u64>,
    pub mc_paths: usize,
    pub steps: usize,
    pub grid_points: usize,
    pub curve_points: usize,
    pub curve_t: f64,
    /// The ξ_t grid spans the [q, 1 − q] quantiles.
    pub curve_quantile: f64,
    pub oracle_pairs: usize,
    pub mc_samples: usize,
    pub out: Option<PathBuf>,
}

impl Default for RunBlock {
    fn default() -> Self {
        Self {
            seed: None,
            mc_paths: 10_000,
            steps: 2_500,
            grid_points: 2_001,
            curve_points: 401,
            curve_t: 8.0,
            curve_quantile: 1e-4,
            oracle_pairs: 2_000,
            mc_samples: 1_000_000,
            out: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub market: MarketBlock,
    pub contract: ContractBlock,
    pub preferences: PreferenceBlock,
    pub constraint: ConstraintBlock,
    pub run: RunBlock,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let cfg: RunConfig = serde_json::from_str(&text)?;
        cfg.problem()?;
        Ok(cfg)
    }

    pub fn market(&self) -> Result<MarketParams, ConfigError> {
        let m = &self.market;
        Ok(MarketParams::new(m.mu, m.r, m.sigma, m.horizon)?)
    }

    pub fn contract(&self) -> Result<ContractParams, ConfigError> {
        let c = &self.contract;
        let horizon = self.market.horizon;
        let base = match (c.l0, c.e0, c.x0, c.alpha) {
            (Some(l0), Some(e0), None, None) => {
                ContractParams::from_premiums(l0, e0, c.delta, c.g, horizon)?
            }
            (None, None, x0, alpha) => ContractParams::new(
                x0.unwrap_or(DEFAULT_X0),
                alpha.unwrap_or(DEFAULT_ALPHA),
                c.delta,
                c.g,
                horizon,
            )?,
            _ => {
                return Err(ConfigError::Invalid(
                    "contract: give either both of l0/e0 or x0/alpha, not a mix".into(),
                ))
            }
        };
        let guarantee = match (c.guarantee, c.guarantee_base) {
            (Some(_), Some(_)) => {
                return Err(ConfigError::Invalid(
                    "contract: guarantee and guarantee_base are exclusive".into(),
                ))
            }
            (Some(l), None) => l,
            (None, b) => b.unwrap_or(DEFAULT_GUARANTEE_BASE) * (c.g * horizon).exp(),
        };
        Ok(base.with_guarantee(guarantee)?)
    }

    pub fn preferences(&self) -> Result<PreferenceSpec, ConfigError> {
        let p = &self.preferences;
        Ok(PreferenceSpec::new(p.gamma, p.eta, p.epsilon, p.kind)?)
    }

    pub fn constraint(&self, contract: &ContractParams) -> Result<ConstraintSpec, ConfigError> {
        let spec = match self.constraint {
            ConstraintBlock::None => ConstraintSpec::Unconstrained,
            ConstraintBlock::Var { beta } => ConstraintSpec::Var { beta },
            ConstraintBlock::Pi {
                floor,
                floor_fraction,
            } => {
                let floor = match (floor, floor_fraction) {
                    (Some(_), Some(_)) => {
                        return Err(ConfigError::Invalid(
                            "constraint: floor and floor_fraction are exclusive".into(),
                        ))
                    }
                    (Some(f), None) => f,
                    (None, fr) => fr.unwrap_or(0.2) * contract.guarantee,
                };
                ConstraintSpec::Pi { floor }
            }
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn problem(&self) -> Result<Problem, ConfigError> {
        let market = self.market()?;
        let contract = self.contract()?;
        let prefs = self.preferences()?;
        let constraint = self.constraint(&contract)?;
        if !(self.run.curve_t >= 0.0 && self.run.curve_t < self.market.horizon) {
            return Err(ConfigError::Invalid(format!(
                "run.curve_t must lie in [0, horizon), got {}",
                self.run.curve_t
            )));
        }
        if !(self.run.curve_quantile > 0.0 && self.run.curve_quantile < 0.5) {
            return Err(ConfigError::Invalid(format!(
                "run.curve_quantile must lie in (0, 0.5), got {}",
                self.run.curve_quantile
            )));
        }
        if self.run.grid_points < 2 || self.run.curve_points < 2 {
            return Err(ConfigError::Invalid("grid sizes must be at least 2".into()));
        }
        Ok(Problem::new(market, contract, prefs, constraint)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_study_defaults() {
        let cfg: RunConfig = serde_json::from_str("{}").unwrap();
        let pr = cfg.problem().unwrap();
        assert_eq!(pr.contract.x0, 100.0);
        assert!((pr.contract.alpha - 0.4).abs() < 1e-15);
        assert!((pr.contract.guarantee - 50.0 * 0.2f64.exp()).abs() < 1e-12);
        assert_eq!(pr.prefs.gamma, 0.5);
        assert_eq!(pr.prefs.eta, 1.01);
        assert_eq!(pr.constraint, ConstraintSpec::Unconstrained);
        assert_eq!(pr.market.mu, 0.05);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<RunConfig>(r#"{"market": {"sigmaa": 0.2}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(r#"{"runn": {}}"#).is_err());
        assert!(serde_json::from_str::<RunConfig>(
            r#"{"constraint": {"type": "var", "beta": 0.1, "floor": 2}}"#
        )
        .is_err());
    }

    #[test]
    fn constraint_blocks() {
        let cfg: RunConfig = serde_json::from_str(r#"{"constraint": {"type": "pi"}}"#).unwrap();
        let pr = cfg.problem().unwrap();
        let lt = pr.contract.guarantee;
        assert_eq!(pr.constraint, ConstraintSpec::Pi { floor: 0.2 * lt });
        let cfg: RunConfig = serde_json::from_str(r#"{"constraint": {"type": "var"}}"#).unwrap();
        assert_eq!(
            cfg.problem().unwrap().constraint,
            ConstraintSpec::Var { beta: 0.025 }
        );
        let cfg: RunConfig =
            serde_json::from_str(r#"{"constraint": {"type": "var", "beta": 1.5}}"#).unwrap();
        assert!(cfg.problem().is_err());
    }

    #[test]
    fn premiums_and_explicit_guarantee() {
        let cfg: RunConfig =
            serde_json::from_str(r#"{"contract": {"l0": 30, "e0": 70, "guarantee_base": 30}}"#)
                .unwrap();
        let c = cfg.contract().unwrap();
        assert!((c.alpha - 0.3).abs() < 1e-15);
        assert!((c.guarantee - 30.0 * 0.2f64.exp()).abs() < 1e-12);
        let cfg: RunConfig =
            serde_json::from_str(r#"{"contract": {"l0": 30, "alpha": 0.3}}"#).unwrap();
        assert!(cfg.contract().is_err());
        let cfg: RunConfig = serde_json::from_str(r#"{"contract": {"guarantee": 70}}"#).unwrap();
        assert_eq!(cfg.contract().unwrap().guarantee, 70.0);
    }
}
