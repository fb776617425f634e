//! The alternating loop and its γ-update rules.

mod config;
mod run;
mod trace;
mod updates;

pub use config::{Algorithm, AlgorithmConfig};
pub use run::{run, run_with_observer, AmqState, RunOutput, RunSummary, DIVERGENCE_FACTOR};
pub use trace::{ConvergenceTrace, TerminationStatus, TraceRecord, TRACE_CSV_HEADER};
pub use updates::{amq_blend, amq_half_step, cb_update, em_update, mk_update, step_size_next};
