//! Participating-contract parameters and terminal payoffs.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Whether the policyholder bears the shortfall below the guarantee.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContractKind {
    /// The policyholder is short a default put; equity payoff is non-negative.
    Defaultable,
    /// The guarantee is always paid; equity payoff may be negative.
    FullyProtected,
}

impl ContractKind {
    pub fn label(self) -> &'static str {
        match self {
            ContractKind::Defaultable => "defaultable",
            ContractKind::FullyProtected => "fully_protected",
        }
    }
}

/// Single-premium participating contract.
///
/// `guarantee` is L_T, `bonus_threshold` is L̃_T = L_T/α, `gap` is
/// L̂_T = L̃_T − L_T and `tilde_delta` is the achieved bonus rate αδ.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ContractParams {
    pub l0: f64,
    pub e0: f64,
    pub x0: f64,
    pub alpha: f64,
    pub delta: f64,
    pub g: f64,
    pub guarantee: f64,
    pub bonus_threshold: f64,
    pub gap: f64,
    pub tilde_delta: f64,
}

impl ContractParams {
    /// Contract from the two premiums; the guarantee is L_T = l0·e^{g·horizon}.
    pub fn from_premiums(l0: f64, e0: f64, delta: f64, g: f64, horizon: f64) -> Result<Self> {
        if !(l0 > 0.0 && l0.is_finite()) {
            return Err(invalid("l0", format!("must be > 0, got {l0}")));
        }
        if !(e0 > 0.0 && e0.is_finite()) {
            return Err(invalid("e0", format!("must be > 0, got {e0}")));
        }
        if !g.is_finite() {
            return Err(invalid("g", "must be finite"));
        }
        if !(horizon > 0.0 && horizon.is_finite()) {
            return Err(invalid("horizon", "must be > 0"));
        }
        Self::assemble(l0, e0, delta, g, l0 * (g * horizon).exp())
    }

    /// Contract from the pool size X₀ and participation rate α = L₀/X₀.
    pub fn new(x0: f64, alpha: f64, delta: f64, g: f64, horizon: f64) -> Result<Self> {
        if !(x0 > 0.0 && x0.is_finite()) {
            return Err(invalid("x0", format!("must be > 0, got {x0}")));
        }
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0,1), got {alpha}")));
        }
        Self::from_premiums(alpha * x0, (1.0 - alpha) * x0, delta, g, horizon)
    }

    /// Replaces L_T by an explicit guarantee amount.
    pub fn with_guarantee(self, guarantee: f64) -> Result<Self> {
        if !(guarantee > 0.0 && guarantee.is_finite()) {
            return Err(invalid(
                "guarantee",
                format!("must be > 0, got {guarantee}"),
            ));
        }
        Self::assemble(self.l0, self.e0, self.delta, self.g, guarantee)
    }

    fn assemble(l0: f64, e0: f64, delta: f64, g: f64, guarantee: f64) -> Result<Self> {
        let x0 = l0 + e0;
        let alpha = l0 / x0;
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(invalid("alpha", format!("must lie in (0,1), got {alpha}")));
        }
        if !((0.0..1.0).contains(&delta)) {
            return Err(invalid("delta", format!("must lie in [0,1), got {delta}")));
        }
        let bonus_threshold = guarantee / alpha;
        Ok(Self {
            l0,
            e0,
            x0,
            alpha,
            delta,
            g,
            guarantee,
            bonus_threshold,
            gap: bonus_threshold - guarantee,
            tilde_delta: alpha * delta,
        })
    }

    /// Equity payoff above the bonus threshold, (1−δ̃)x − (1−δ)L_T.
    pub fn f_slope(&self, x: f64) -> f64 {
        (1.0 - self.tilde_delta) * x - (1.0 - self.delta) * self.guarantee
    }

    /// Residual value V_E received by the equity holder when the policyholder survives.
    pub fn payoff_equity(&self, kind: ContractKind, x: f64) -> Result<f64> {
        check_wealth(x)?;
        Ok(self.equity_unchecked(kind, x))
    }

    pub(crate) fn equity_unchecked(&self, kind: ContractKind, x: f64) -> f64 {
        let lt = self.guarantee;
        let bonus = self.delta * (self.alpha * x - lt).max(0.0);
        match kind {
            ContractKind::Defaultable => (x - lt).max(0.0) - bonus,
            ContractKind::FullyProtected => x - lt - bonus,
        }
    }

    /// Policyholder payoff; on death before maturity the guarantee is paid.
    pub fn payoff_policyholder(&self, kind: ContractKind, x: f64, dead: bool) -> Result<f64> {
        check_wealth(x)?;
        if dead {
            return Ok(self.guarantee);
        }
        Ok(match kind {
            ContractKind::Defaultable => x - self.equity_unchecked(kind, x),
            ContractKind::FullyProtected => {
                self.guarantee + self.delta * (self.alpha * x - self.guarantee).max(0.0)
            }
        })
    }
}

fn check_wealth(x: f64) -> Result<()> {
    if x >= 0.0 {
        Ok(())
    } else {
        Err(Error::Domain(format!(
            "wealth must be non-negative, got {x}"
        )))
    }
}
