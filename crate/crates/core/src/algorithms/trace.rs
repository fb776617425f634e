use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};

pub const TRACE_CSV_HEADER: &str = "iter,objective,gamma_rel_change,active_count,elapsed_ms";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationStatus {
    Converged,
    MaxIters,
    Diverged,
    NumericalError,
}

impl TerminationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TerminationStatus::Converged => "converged",
            TerminationStatus::MaxIters => "max_iters",
            TerminationStatus::Diverged => "diverged",
            TerminationStatus::NumericalError => "numerical_error",
        }
    }

    /// Converged or ran out of iterations.
    pub fn terminated_normally(self) -> bool {
        matches!(self, TerminationStatus::Converged | TerminationStatus::MaxIters)
    }
}

impl fmt::Display for TerminationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TerminationStatus {
    type Err = SblError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "converged" => Ok(TerminationStatus::Converged),
            "max_iters" => Ok(TerminationStatus::MaxIters),
            "diverged" => Ok(TerminationStatus::Diverged),
            "numerical_error" => Ok(TerminationStatus::NumericalError),
            other => Err(SblError::input(format!("unknown status '{other}'"))),
        }
    }
}

/// One row of the trace. Record 0 is the starting point, whose relative
/// change is NaN.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceRecord {
    pub iter: usize,
    pub objective: f64,
    pub gamma_rel_change: f64,
    pub active_count: usize,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub records: Vec<TraceRecord>,
    pub status: TerminationStatus,
}

impl ConvergenceTrace {
    /// Number of γ-updates performed.
    pub fn iterations(&self) -> usize {
        self.records.last().map_or(0, |r| r.iter)
    }

    pub fn final_objective(&self) -> Option<f64> {
        self.records.last().map(|r| r.objective)
    }

    pub fn objectives(&self) -> impl Iterator<Item = f64> + '_ {
        self.records.iter().map(|r| r.objective)
    }

    /// First iteration whose objective is within `rel_tol·|L_final|` of the
    /// final objective.
    pub fn iterations_to_reach_final(&self, rel_tol: f64) -> Option<usize> {
        let last = self.final_objective()?;
        let tol = rel_tol * last.abs();
        self.records
            .iter()
            .find(|r| (r.objective - last).abs() <= tol)
            .map(|r| r.iter)
    }

    /// CSV rendering. With `timing = false` the elapsed column is written as
    /// zero so that output depends only on the inputs.
    pub fn to_csv(&self, timing: bool) -> String {
        let mut out = String::with_capacity(48 * (self.records.len() + 1));
        out.push_str(TRACE_CSV_HEADER);
        out.push('\n');
        for r in &self.records {
            let elapsed = if timing { r.elapsed_ms } else { 0.0 };
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                r.iter, r.objective, r.gamma_rel_change, r.active_count, elapsed
            );
        }
        out
    }

    /// Parses the records of [`ConvergenceTrace::to_csv`]; the status is not
    /// part of the CSV and must be supplied.
    pub fn from_csv(text: &str, status: TerminationStatus) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == TRACE_CSV_HEADER => {}
            other => {
                return Err(SblError::input(format!(
                    "unexpected trace header {other:?}"
                )))
            }
        }
        let mut records = Vec::new();
        for (ln, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 5 {
                return Err(SblError::input(format!(
                    "trace line {}: expected 5 fields, got {}",
                    ln + 2,
                    fields.len()
                )));
            }
            let bad = |what: &str| SblError::input(format!("trace line {}: bad {what}", ln + 2));
            records.push(TraceRecord {
                iter: fields[0].trim().parse().map_err(|_| bad("iter"))?,
                objective: fields[1].trim().parse().map_err(|_| bad("objective"))?,
                gamma_rel_change: fields[2].trim().parse().map_err(|_| bad("gamma_rel_change"))?,
                active_count: fields[3].trim().parse().map_err(|_| bad("active_count"))?,
                elapsed_ms: fields[4].trim().parse().map_err(|_| bad("elapsed_ms"))?,
            });
        }
        Ok(ConvergenceTrace { records, status })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConvergenceTrace {
        ConvergenceTrace {
            records: vec![
                TraceRecord {
                    iter: 0,
                    objective: 10.0,
                    gamma_rel_change: f64::NAN,
                    active_count: 3,
                    elapsed_ms: 0.25,
                },
                TraceRecord {
                    iter: 1,
                    objective: 9.5,
                    gamma_rel_change: 0.1,
                    active_count: 2,
                    elapsed_ms: 0.5,
                },
                TraceRecord {
                    iter: 2,
                    objective: 9.4999,
                    gamma_rel_change: 1e-4,
                    active_count: 2,
                    elapsed_ms: 0.75,
                },
            ],
            status: TerminationStatus::Converged,
        }
    }

    #[test]
    fn csv_layout() {
        let csv = sample().to_csv(false);
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some(TRACE_CSV_HEADER));
        assert_eq!(lines.next(), Some("0,10,NaN,3,0"));
        assert_eq!(lines.next(), Some("1,9.5,0.1,2,0"));
    }

    #[test]
    fn csv_parses_back() {
        let t = sample();
        let back = ConvergenceTrace::from_csv(&t.to_csv(true), t.status).unwrap();
        assert_eq!(back.records.len(), 3);
        assert!(back.records[0].gamma_rel_change.is_nan());
        assert_eq!(back.records[1..], t.records[1..]);
        assert!(ConvergenceTrace::from_csv("a,b\n", t.status).is_err());
    }

    #[test]
    fn reach_final() {
        let t = sample();
        assert_eq!(t.iterations(), 2);
        assert_eq!(t.iterations_to_reach_final(1e-3), Some(1));
        assert_eq!(t.iterations_to_reach_final(1e-9), Some(2));
    }
}
