use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};

/// γ-update rule used inside the alternating loop.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Expectation-maximization: `γᵢ ← μᵢ² + Σᵢᵢ`.
    Em,
    /// MacKay fixed point: `γᵢ ← γᵢ μᵢ² / (γᵢ − Σᵢᵢ)`.
    Mk,
    /// Convex bounding: `γᵢ ← γᵢ sqrt(μᵢ² / (γᵢ − Σᵢᵢ))`.
    Cb,
    /// Quadratic proximal update in `θ = γ^(-1/2)` with a diminishing blend step.
    Amq,
}

impl Algorithm {
    pub const ALL: [Algorithm; 4] = [Algorithm::Em, Algorithm::Mk, Algorithm::Cb, Algorithm::Amq];

    pub fn as_str(self) -> &'static str {
        match self {
            Algorithm::Em => "em",
            Algorithm::Mk => "mk",
            Algorithm::Cb => "cb",
            Algorithm::Amq => "amq",
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Algorithm {
    type Err = SblError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "em" => Ok(Algorithm::Em),
            "mk" | "mackay" => Ok(Algorithm::Mk),
            "cb" => Ok(Algorithm::Cb),
            "amq" => Ok(Algorithm::Amq),
            other => Err(SblError::input(format!(
                "unknown algorithm '{other}' (expected em, mk, cb or amq)"
            ))),
        }
    }
}

/// Settings for one run of the outer loop. Defaults are the values used in
/// the synthetic benchmark suite.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AlgorithmConfig {
    pub algorithm: Algorithm,
    /// Proximal weight (AMQ only).
    pub tau: f64,
    /// Step-size decay `η ← η(1 − εη)` (AMQ only).
    pub epsilon: f64,
    /// Initial blend step (AMQ only).
    pub eta0: f64,
    pub max_iters: usize,
    /// Stop once `‖γ⁺ − γ‖ / ‖γ‖` drops below this.
    pub rel_tol: f64,
    /// Entries at or below this are pruned for good.
    pub prune_tol: f64,
}

impl Default for AlgorithmConfig {
    fn default() -> Self {
        AlgorithmConfig {
            algorithm: Algorithm::Amq,
            tau: 1e-10,
            epsilon: 0.02,
            eta0: 1.0,
            max_iters: 10_000,
            rel_tol: 1e-3,
            prune_tol: 1e-12,
        }
    }
}

impl AlgorithmConfig {
    pub fn new(algorithm: Algorithm) -> Self {
        AlgorithmConfig {
            algorithm,
            ..Default::default()
        }
    }

    /// `ε = 0` is accepted (constant step).
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str, v: f64| {
            Err(SblError::input(format!("invalid {what}: {v}")))
        };
        if !(self.tau >= 0.0) || !self.tau.is_finite() {
            return bad("tau (must be >= 0)", self.tau);
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return bad("epsilon (must be in [0, 1))", self.epsilon);
        }
        if !(self.eta0 > 0.0 && self.eta0 <= 1.0) {
            return bad("eta0 (must be in (0, 1])", self.eta0);
        }
        if !(self.rel_tol > 0.0) || !self.rel_tol.is_finite() {
            return bad("rel_tol (must be > 0)", self.rel_tol);
        }
        if !(self.prune_tol >= 0.0) || !self.prune_tol.is_finite() {
            return bad("prune_tol (must be >= 0)", self.prune_tol);
        }
        if self.max_iters == 0 {
            return Err(SblError::input("max_iters must be positive"));
        }
        Ok(())
    }
}
