//! Symmetric positive-definite factorization with a single jitter retry.

use nalgebra::{Cholesky, DMatrix, Dyn};

use crate::error::{Result, SblError};

const JITTER_SCALE: f64 = 1e-12;

/// Cholesky factor of an SPD matrix. On failure the diagonal is shifted by
/// `1e-12 * trace / dim` and the factorization is attempted once more.
pub(crate) fn spd_factor(matrix: DMatrix<f64>, what: &str) -> Result<Cholesky<f64, Dyn>> {
    let dim = matrix.nrows();
    let diag = matrix.diagonal();
    let trace = diag.sum();
    let (dmin, dmax) = diag
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &d| {
            (lo.min(d), hi.max(d))
        });

    let retry = matrix.clone();
    if let Some(chol) = Cholesky::new(matrix) {
        return Ok(chol);
    }
    let jitter = JITTER_SCALE * trace / dim as f64;
    let mut shifted = retry;
    for i in 0..dim {
        shifted[(i, i)] += jitter;
    }
    Cholesky::new(shifted).ok_or_else(|| {
        SblError::numerical(format!(
            "Cholesky of {what} ({dim}x{dim}) failed after jitter {jitter:e}; \
             diagonal range [{dmin:e}, {dmax:e}], trace {trace:e}"
        ))
    })
}

/// `2 Σ log Lᵢᵢ`
pub(crate) fn chol_log_det(chol: &Cholesky<f64, Dyn>) -> f64 {
    let l = chol.l_dirty();
    (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>() * 2.0
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn factors_spd_matrix() {
        let m = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 3.0]);
        let chol = spd_factor(m, "test").unwrap();
        assert!((chol_log_det(&chol) - 8f64.ln()).abs() < 1e-14);
    }

    #[test]
    fn jitter_rescues_roundoff_singular_matrix() {
        // rank one, exactly singular: jitter makes it barely SPD
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert!(spd_factor(m, "rank one").is_ok());
    }

    #[test]
    fn indefinite_matrix_is_numerical_error() {
        let m = DMatrix::from_row_slice(2, 2, &[1.0, 0.0, 0.0, -1.0]);
        match spd_factor(m, "indefinite") {
            Err(SblError::Numerical(msg)) => assert!(msg.contains("indefinite")),
            other => panic!("expected numerical error, got {other:?}"),
        }
    }
}
