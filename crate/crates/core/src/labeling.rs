//! The safety-aware labeling function `g_I`.
//!
//! In (more helpful, less helpful) form:
//!
//! ```text
//!   g_I(hw, hl) = B3 * (B1 * I_safe(hw) - I_safe(hl) + B2)
//! ```
//!
//! The canonical parameterization fixes `B1 = 3`, `B3 = 1/2`, `B2 = -2 alpha`,
//! which is the same function as `3/2 I_safe(hw) - 1/2 I_safe(hl) - alpha`.
//! `alpha` is signed and unconstrained.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLabelConfig")]
pub struct LabelConfig {
    pub b1: f64,
    pub b2: f64,
    pub b3: f64,
    pub alpha: f64,
    pub tau: f64,
    pub canonical: bool,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLabelConfig {
    b1: f64,
    b2: f64,
    b3: f64,
    #[serde(default)]
    alpha: f64,
    tau: f64,
    #[serde(default)]
    canonical: bool,
}

impl TryFrom<RawLabelConfig> for LabelConfig {
    type Error = crate::Error;

    fn try_from(r: RawLabelConfig) -> Result<Self> {
        let cfg = Self { b1: r.b1, b2: r.b2, b3: r.b3, alpha: r.alpha, tau: r.tau, canonical: r.canonical };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Label values for the four (safe(hw), safe(hl)) cases, ordered
/// (1,0), (1,1), (0,0), (0,1).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LabelTable {
    pub safe_over_unsafe: f64,
    pub both_safe: f64,
    pub both_unsafe: f64,
    pub unsafe_over_safe: f64,
}

impl LabelTable {
    pub fn as_array(&self) -> [f64; 4] {
        [self.safe_over_unsafe, self.both_safe, self.both_unsafe, self.unsafe_over_safe]
    }

    /// Strict decrease across the four cases.
    pub fn is_strictly_ordered(&self) -> bool {
        let v = self.as_array();
        v.windows(2).all(|w| w[0] > w[1])
    }
}

impl LabelConfig {
    pub fn canonical(alpha: f64, tau: f64) -> Result<Self> {
        let cfg = Self { b1: 3.0, b2: -2.0 * alpha, b3: 0.5, alpha, tau, canonical: true };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Free constants; `alpha` is recorded as 0 and takes no part.
    pub fn general(b1: f64, b2: f64, b3: f64, tau: f64) -> Result<Self> {
        let cfg = Self { b1, b2, b3, alpha: 0.0, tau, canonical: false };
        cfg.validate()?;
        Ok(cfg)
    }

    /// The member of the general family satisfying `B3 (B1 - 1) = 1`.
    pub fn from_relations(b3: f64, b2: f64, tau: f64) -> Result<Self> {
        if b3 == 0.0 {
            return Err(invalid("B3 = 0 has no matching B1"));
        }
        Self::general(1.0 + 1.0 / b3, b2, b3, tau)
    }

    pub fn validate(&self) -> Result<()> {
        if ![self.b1, self.b2, self.b3, self.alpha, self.tau].iter().all(|x| x.is_finite()) {
            return Err(invalid("label constants must be finite"));
        }
        if !(self.tau > 0.0) {
            return Err(invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if self.canonical && (self.b1 != 3.0 || self.b3 != 0.5 || self.b2 != -2.0 * self.alpha) {
            return Err(invalid("canonical label config requires b1 = 3, b3 = 1/2, b2 = -2 alpha"));
        }
        Ok(())
    }

    pub fn with_tau(mut self, tau: f64) -> Result<Self> {
        self.tau = tau;
        self.validate()?;
        Ok(self)
    }

    /// `g_I` evaluated at real-valued safety inputs.
    pub fn label_values(&self, safe_hw: f64, safe_hl: f64) -> f64 {
        self.b3 * (self.b1 * safe_hw - safe_hl + self.b2)
    }

    pub fn label_hw_hl(&self, safe_hw: bool, safe_hl: bool) -> f64 {
        self.label_values(bit(safe_hw), bit(safe_hl))
    }

    /// Ordering-free form `g_I(y, y')`, evaluated through the expanded
    /// polynomial in `I_help(y > y')`, `I_safe(y)`, `I_safe(y')`.
    pub fn label_pairwise(&self, i_help_first: bool, safe_first: bool, safe_second: bool) -> f64 {
        let (b1, b2, b3) = (self.b1, self.b2, self.b3);
        let (h, s, sp) = (bit(i_help_first), bit(safe_first), bit(safe_second));
        (b1 * b3 - b3) * h * s + (b1 * b3 - b3) * h * sp - b1 * b3 * sp + b3 * s + 2.0 * b2 * b3 * h - b2 * b3
    }

    pub fn label_table(&self) -> LabelTable {
        self.shifted_label_table(0.0, 0.0)
    }

    /// Label table with constants `p1` added to `I_safe(hw)` and `p2` to
    /// `I_safe(hl)`. Every entry moves by `B3 (B1 p1 - p2)`.
    pub fn shifted_label_table(&self, p1: f64, p2: f64) -> LabelTable {
        let g = |w: f64, l: f64| self.label_values(w + p1, l + p2);
        LabelTable {
            safe_over_unsafe: g(1.0, 0.0),
            both_safe: g(1.0, 1.0),
            both_unsafe: g(0.0, 0.0),
            unsafe_over_safe: g(0.0, 1.0),
        }
    }
}

fn bit(b: bool) -> f64 {
    if b {
        1.0
    } else {
        0.0
    }
}
