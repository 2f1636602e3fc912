//! Scalar parameters of the rotating condensate and the regime they fall in.
//!
//! The coupling is `1/ε²` and the angular velocity is `Ω`. Everything else
//! (`ω = εΩ`, `δ = ε²Ω|log ε|`, `γ = min(ε, ε²Ω)`) is derived once here and
//! carried around immutably. Logarithms are natural logarithms.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::{Error, Result};

/// Physical parameters and their derived combinations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Params {
    pub epsilon: f64,
    /// Angular velocity `Ω`.
    #[serde(rename = "Omega")]
    pub rotation: f64,
    /// `ω = εΩ`.
    pub omega: f64,
    /// `δ = ε²Ω|log ε|`.
    pub delta: f64,
    /// `γ = min(ε, ε²Ω)`.
    pub gamma: f64,
    /// `|log ε|`.
    pub log_eps: f64,
}

impl Params {
    /// Derives all quantities from `(ε, Ω)` with `0 < ε < 1` and `Ω > 0`.
    pub fn derive(epsilon: f64, rotation: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        if !(rotation.is_finite() && rotation > 0.0) {
            return Err(Error::InvalidParameter(format!(
                "Omega must be positive and finite, got {rotation}"
            )));
        }
        Ok(Self::build(epsilon, rotation))
    }

    /// Non-rotating parameters (`Ω = 0`), used for the zero-rotation reference
    /// problem. `δ` and `γ` are zero and no lattice quantity is meaningful.
    pub fn at_rest(epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        Ok(Self::build(epsilon, 0.0))
    }

    fn build(epsilon: f64, rotation: f64) -> Self {
        let log_eps = epsilon.ln().abs();
        let eps2 = epsilon * epsilon;
        Self {
            epsilon,
            rotation,
            omega: epsilon * rotation,
            delta: eps2 * rotation * log_eps,
            gamma: epsilon.min(eps2 * rotation),
            log_eps,
        }
    }

    pub fn is_rotating(&self) -> bool {
        self.rotation > 0.0
    }

    /// `|log γ|`, the logarithm governing the subleading energy.
    pub fn log_gamma(&self) -> f64 {
        self.gamma.ln().abs()
    }

    /// The subleading energy scale `(Ω/2)|log γ|`.
    pub fn subleading_scale(&self) -> f64 {
        0.5 * self.rotation * self.log_gamma()
    }

    pub fn classify(&self, constants: &RegimeConstants) -> Regime {
        Regime::classify(self, constants)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0 && epsilon < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "epsilon must lie in (0, 1), got {epsilon}"
        )));
    }
    Ok(())
}

/// Multiplicative constants placed in front of the regime thresholds
/// `|log ε|`, `1/ε` and `1/(ε²|log ε|)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeConstants {
    pub c_low: f64,
    pub c_mid: f64,
    pub c_high: f64,
}

impl Default for RegimeConstants {
    fn default() -> Self {
        Self {
            c_low: 1.0,
            c_mid: 1.0,
            c_high: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RegimeTag {
    FewVortex,
    LatticeSlow,
    LatticeFast,
    GiantVortex,
}

impl RegimeTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            RegimeTag::FewVortex => "FEW_VORTEX",
            RegimeTag::LatticeSlow => "LATTICE_SLOW",
            RegimeTag::LatticeFast => "LATTICE_FAST",
            RegimeTag::GiantVortex => "GIANT_VORTEX",
        }
    }

    pub fn is_lattice(&self) -> bool {
        matches!(self, RegimeTag::LatticeSlow | RegimeTag::LatticeFast)
    }
}

impl fmt::Display for RegimeTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Regime tag together with the (scaled) thresholds it was decided against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Regime {
    pub tag: RegimeTag,
    /// `c_low · |log ε|`
    pub lower: f64,
    /// `c_mid / ε`
    pub middle: f64,
    /// `c_high / (ε²|log ε|)`
    pub upper: f64,
}

impl Regime {
    pub fn classify(params: &Params, c: &RegimeConstants) -> Self {
        let eps = params.epsilon;
        let lower = c.c_low * params.log_eps;
        let middle = c.c_mid / eps;
        let upper = c.c_high / (eps * eps * params.log_eps);
        let w = params.rotation;
        // `middle` may exceed `upper` for ε close to 1; the ordered checks keep
        // the tag monotone in Ω regardless.
        let tag = if w <= lower {
            RegimeTag::FewVortex
        } else if w <= middle {
            RegimeTag::LatticeSlow
        } else if w < upper {
            RegimeTag::LatticeFast
        } else {
            RegimeTag::GiantVortex
        };
        Self {
            tag,
            lower,
            middle,
            upper,
        }
    }
}
