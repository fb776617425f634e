use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, AlgorithmConfig};
use super::trace::{ConvergenceTrace, TerminationStatus, TraceRecord};
use super::updates::{amq_blend, amq_half_step, cb_update, em_update, mk_update, step_size_next};
use crate::error::{Result, SblError};
use crate::evidence::{evaluate, EvidenceState};
use crate::model::{EvidenceDerivatives, HyperparamVector, PosteriorMoments, ProblemInstance};

/// Objective increase (relative to `|L|`) treated as divergence.
pub const DIVERGENCE_FACTOR: f64 = 1e3;

/// Per-run AMQ bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct AmqState {
    pub eta: f64,
    /// Last half step `γ^(k+½)`; zero off the active set.
    pub half_step: Vec<f64>,
}

impl AmqState {
    pub fn new(eta0: f64, n: usize) -> Self {
        AmqState {
            eta: eta0,
            half_step: vec![0.0; n],
        }
    }

    /// `θ = γ^(-1/2)` on the active set, `+∞` elsewhere.
    pub fn theta(gamma: &HyperparamVector) -> Vec<f64> {
        gamma
            .values()
            .iter()
            .map(|&g| if g > 0.0 { g.sqrt().recip() } else { f64::INFINITY })
            .collect()
    }
}

#[derive(Debug, Clone)]
pub struct RunOutput {
    pub gamma: HyperparamVector,
    /// Moments at the returned `gamma`.
    pub moments: PosteriorMoments,
    /// Derivatives at the returned `gamma`.
    pub derivs: EvidenceDerivatives,
    pub trace: ConvergenceTrace,
}

impl RunOutput {
    pub fn summary(&self, config: &AlgorithmConfig) -> RunSummary {
        RunSummary::new(&self.gamma, &self.trace, config)
    }
}

/// Runs the alternating loop from `gamma0` (see [`run_with_observer`]).
pub fn run(
    problem: &ProblemInstance,
    gamma0: &HyperparamVector,
    config: &AlgorithmConfig,
) -> Result<RunOutput> {
    run_with_observer(problem, gamma0, config, |_, _| {})
}

/// Alternates the x-update (posterior mean) with the configured γ-update.
///
/// `observer` sees every iterate, starting with `gamma0` at index 0.
/// Returns `Err` only for invalid input; numerical trouble during the loop
/// ends the run with a `numerical_error`/`diverged` status and the last good
/// iterate.
pub fn run_with_observer(
    problem: &ProblemInstance,
    gamma0: &HyperparamVector,
    config: &AlgorithmConfig,
    mut observer: impl FnMut(usize, &HyperparamVector),
) -> Result<RunOutput> {
    config.validate()?;
    if gamma0.len() != problem.cols() {
        return Err(SblError::input(format!(
            "gamma0 has length {} but dictionary has {} columns",
            gamma0.len(),
            problem.cols()
        )));
    }
    let start = Instant::now();
    let elapsed = || start.elapsed().as_secs_f64() * 1e3;

    let mut gamma = HyperparamVector::with_threshold(gamma0.values().to_vec(), config.prune_tol)?;
    let mut state = evaluate(&gamma, problem)?;
    let mut amq = AmqState::new(config.eta0, gamma.len());
    let mut records = vec![TraceRecord {
        iter: 0,
        objective: state.objective(),
        gamma_rel_change: f64::NAN,
        active_count: gamma.active_set().len(),
        elapsed_ms: elapsed(),
    }];
    observer(0, &gamma);

    let mut status = TerminationStatus::MaxIters;
    for iter in 1..=config.max_iters {
        let next = gamma_step(&state, &gamma, config, &mut amq);
        if !next.is_finite() {
            status = TerminationStatus::Diverged;
            break;
        }
        let next_state = match evaluate(&next, problem) {
            Ok(s) => s,
            Err(_) => {
                status = TerminationStatus::NumericalError;
                break;
            }
        };
        let prev_obj = state.objective();
        let obj = next_state.objective();
        let rel = rel_change(&next, &gamma);
        records.push(TraceRecord {
            iter,
            objective: obj,
            gamma_rel_change: rel,
            active_count: next.active_set().len(),
            elapsed_ms: elapsed(),
        });
        if !obj.is_finite() || obj - prev_obj > DIVERGENCE_FACTOR * prev_obj.abs() {
            status = TerminationStatus::Diverged;
            break;
        }
        gamma = next;
        state = next_state;
        observer(iter, &gamma);
        if rel < config.rel_tol {
            status = TerminationStatus::Converged;
            break;
        }
    }

    Ok(RunOutput {
        gamma,
        moments: state.moments,
        derivs: state.derivs,
        trace: ConvergenceTrace { records, status },
    })
}

/// One γ-update from the state at `gamma`, after pruning indices whose
/// posterior mean is exactly zero.
fn gamma_step(
    state: &EvidenceState,
    gamma: &HyperparamVector,
    config: &AlgorithmConfig,
    amq: &mut AmqState,
) -> HyperparamVector {
    let x = &state.moments.mean;
    let kept = gamma.successor(|i, g| if x[i] == 0.0 { 0.0 } else { g });
    match config.algorithm {
        Algorithm::Em => em_update(&state.moments, &kept),
        Algorithm::Mk => mk_update(&state.moments, &kept, config.prune_tol),
        Algorithm::Cb => cb_update(&state.moments, &kept, config.prune_tol),
        Algorithm::Amq => {
            amq.half_step = amq_half_step(&state.derivs, x, &kept, config.tau);
            let next = amq_blend(&kept, &amq.half_step, amq.eta);
            amq.eta = step_size_next(amq.eta, config.epsilon);
            next
        }
    }
}

/// `‖a − b‖ / max(‖b‖, 1e-300)` over the full vectors.
fn rel_change(next: &HyperparamVector, prev: &HyperparamVector) -> f64 {
    let (mut diff, mut norm) = (0.0, 0.0);
    for (a, b) in next.values().iter().zip(prev.values()) {
        diff += (a - b) * (a - b);
        norm += b * b;
    }
    diff.sqrt() / norm.sqrt().max(1e-300)
}

/// JSON-friendly result of one run. Non-finite objectives serialize as null.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub status: TerminationStatus,
    pub iterations: usize,
    pub final_objective: Option<f64>,
    pub n: usize,
    pub active_count: usize,
    /// `(index, γᵢ)` for every nonzero entry.
    pub gamma: Vec<(usize, f64)>,
    pub config: AlgorithmConfig,
}

impl RunSummary {
    pub fn new(gamma: &HyperparamVector, trace: &ConvergenceTrace, config: &AlgorithmConfig) -> Self {
        RunSummary {
            status: trace.status,
            iterations: trace.iterations(),
            final_objective: trace.final_objective().filter(|v| v.is_finite()),
            n: gamma.len(),
            active_count: gamma.active_set().len(),
            gamma: gamma
                .active_set()
                .iter()
                .map(|&i| (i, gamma.values()[i]))
                .collect(),
            config: *config,
        }
    }

    pub fn dense_gamma(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n];
        for &(i, v) in &self.gamma {
            g[i] = v;
        }
        g
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary is always serializable")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| SblError::input(format!("bad run summary: {e}")))
    }
}
