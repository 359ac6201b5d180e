//! Bound reports shared by all bound families and the command-line front end.

use serde::{Deserialize, Serialize};
use std::fmt;

/// The bound families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundKind {
    /// Sum of the `t` largest log-eigenvalues of `C`.
    Spectral,
    /// Lagrangian spectral bound.
    LagrangianSpectral,
    /// Generalized factorization bound.
    Ddgfact,
    /// Generalized linx bound.
    Glinx,
    /// Generalized NLP bound with the identity parameter.
    GnlpId,
    /// Its companion.
    GnlpComp,
}

impl BoundKind {
    /// All kinds, in a fixed order.
    pub const ALL: [BoundKind; 6] = [
        BoundKind::Spectral,
        BoundKind::LagrangianSpectral,
        BoundKind::Ddgfact,
        BoundKind::Glinx,
        BoundKind::GnlpId,
        BoundKind::GnlpComp,
    ];

    /// Command-line name.
    pub fn name(self) -> &'static str {
        match self {
            BoundKind::Spectral => "spectral",
            BoundKind::LagrangianSpectral => "lagrangian-spectral",
            BoundKind::Ddgfact => "ddgfact",
            BoundKind::Glinx => "glinx",
            BoundKind::GnlpId => "gnlp-id",
            BoundKind::GnlpComp => "gnlp-comp",
        }
    }

    /// Parses a command-line name.
    pub fn parse(s: &str) -> Option<Self> {
        BoundKind::ALL.iter().copied().find(|k| k.name() == s)
    }
}

impl fmt::Display for BoundKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Scaling applied when computing a bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct ScalingUsed {
    /// `"none"`, `"o"` or `"g"`.
    pub mode: String,
    /// Scalar factor `γ` (o-scaling), if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    /// Per-variable factors `Υ` (g-scaling), if any.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub upsilon: Option<Vec<f64>>,
}

impl ScalingUsed {
    /// No scaling.
    pub fn none() -> Self {
        ScalingUsed { mode: "none".into(), gamma: None, upsilon: None }
    }
}

/// Outcome of one bound computation.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BoundReport {
    /// Bound family.
    pub kind: BoundKind,
    /// Feasible-region variant (matrix relaxations only).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub region: Option<String>,
    /// Scaling used.
    pub scaling: ScalingUsed,
    /// Objective value at the solver's primal point (or the bound itself for
    /// closed-form bounds).
    pub primal: f64,
    /// Value of a dual-feasible point: a valid upper bound.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub certified: Option<f64>,
    /// `certified − LB` when a lower bound was supplied.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gap: Option<f64>,
    /// Solver iterations (Newton steps, Frank-Wolfe steps, evaluations).
    pub iterations: usize,
    /// Wall time in seconds.
    pub wall_time: f64,
    /// Whether the inner solver met its tolerances.
    pub converged: bool,
    /// Free-form solver notes.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<String>,
}

impl BoundReport {
    /// The value to use as an upper bound: the certified value when present,
    /// otherwise the primal value.
    pub fn bound(&self) -> f64 {
        self.certified.unwrap_or(self.primal)
    }

    /// Sets `gap = bound − lb`.
    pub fn with_lb(mut self, lb: Option<f64>) -> Self {
        self.gap = lb.map(|lb| self.bound() - lb);
        self
    }
}
