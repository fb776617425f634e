//! Dense brute-force reference computations.
//!
//! Everything here forms `S(γ)` explicitly and inverts it through an LU
//! decomposition, independent of the Cholesky/Woodbury fast path. Meant for
//! small problems and for checking the fast path.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SblError};
use crate::evidence::EvidenceState;
use crate::model::{EvidenceDerivatives, HyperparamVector, PosteriorMoments, ProblemInstance};

/// Largest `n` accepted by [`psi_hessian`].
pub const HESSIAN_MAX_N: usize = 64;

/// Dense `S(γ)`, `S⁻¹` and `log det S` via LU.
fn dense_s_inverse(gamma: &HyperparamVector, problem: &ProblemInstance) -> Result<(DMatrix<f64>, f64)> {
    if gamma.len() != problem.cols() {
        return Err(SblError::input(format!(
            "gamma has length {} but dictionary has {} columns",
            gamma.len(),
            problem.cols()
        )));
    }
    let f = problem.dictionary();
    let m = problem.rows();
    let big_gamma = DMatrix::from_diagonal(&DVector::from_column_slice(gamma.values()));
    let s = DMatrix::identity(m, m) * problem.noise_variance() + f * &big_gamma * f.transpose();
    let lu = s.lu();
    let det = lu.determinant();
    if !(det > 0.0) || !det.is_finite() {
        return Err(SblError::numerical(format!(
            "dense S(gamma) has non-positive or non-finite determinant {det:e}"
        )));
    }
    let inv = lu
        .try_inverse()
        .ok_or_else(|| SblError::numerical("dense S(gamma) is singular"))?;
    Ok((inv, det.ln()))
}

/// Brute-force evaluation; fills in the full posterior covariance.
pub fn dense_evaluate(gamma: &HyperparamVector, problem: &ProblemInstance) -> Result<EvidenceState> {
    let (s_inv, log_det) = dense_s_inverse(gamma, problem)?;
    let f = problem.dictionary();
    let y = problem.observation();
    let big_gamma = DMatrix::from_diagonal(&DVector::from_column_slice(gamma.values()));

    let s_inv_y = &s_inv * y;
    let quad = y.dot(&s_inv_y);
    let gain = &big_gamma * f.transpose() * &s_inv; // n x m
    let mean = &gain * y;
    let cov = &big_gamma - &gain * f * &big_gamma;
    let z = f.transpose() * &s_inv * f;
    let u = f.transpose() * &s_inv_y;

    Ok(EvidenceState {
        quad,
        log_det,
        moments: PosteriorMoments {
            mean: mean.iter().copied().collect(),
            cov_diag: cov.diagonal().iter().copied().collect(),
            full_cov: Some(cov),
        },
        derivs: EvidenceDerivatives::from_parts(
            z.diagonal().iter().copied().collect(),
            u.iter().copied().collect(),
        ),
    })
}

/// Full `Z(γ) = Fᵀ S(γ)⁻¹ F`.
pub fn dense_z(gamma: &HyperparamVector, problem: &ProblemInstance) -> Result<DMatrix<f64>> {
    let (s_inv, _) = dense_s_inverse(gamma, problem)?;
    let f = problem.dictionary();
    Ok(f.transpose() * s_inv * f)
}

/// Hessian of `Ψ(θ) = log det S(θ⁻²)` in `θ = γ^(-1/2)` coordinates:
///
/// `Hᵢᵢ = 6 Zᵢᵢ γᵢ² − 4 Zᵢᵢ² γᵢ³`, `Hᵢⱼ = −4 Zᵢⱼ² γᵢ^(3/2) γⱼ^(3/2)`.
///
/// All `γᵢ` must be positive and `n ≤ 64`.
pub fn psi_hessian(gamma: &HyperparamVector, problem: &ProblemInstance) -> Result<DMatrix<f64>> {
    let n = gamma.len();
    if n > HESSIAN_MAX_N {
        return Err(SblError::input(format!(
            "Hessian assembly is limited to n <= {HESSIAN_MAX_N}, got {n}"
        )));
    }
    if gamma.active_set().len() != n {
        return Err(SblError::input("Hessian requires every gamma entry to be positive"));
    }
    let z = dense_z(gamma, problem)?;
    let g = gamma.values();
    Ok(DMatrix::from_fn(n, n, |i, j| {
        if i == j {
            6.0 * z[(i, i)] * g[i] * g[i] - 4.0 * z[(i, i)].powi(2) * g[i].powi(3)
        } else {
            -4.0 * z[(i, j)].powi(2) * (g[i] * g[j]).powf(1.5)
        }
    }))
}
