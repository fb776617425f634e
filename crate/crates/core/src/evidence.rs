//! Evidence objective `L(γ) = yᵀS⁻¹y + log det S`, `S = β⁻¹I + FΓFᵀ`, and
//! everything that falls out of one factorization of it: posterior moments,
//! `diag(Z)`, `u` and the gradient.
//!
//! Inactive indices (`γᵢ = 0`) are dropped before factoring. Their `μᵢ` and
//! `Σᵢᵢ` are reported as zero, while `Zᵢᵢ` and `uᵢ` are still computed from
//! the full column so the gradient `Zᵢᵢ − uᵢ²` stays meaningful there.

use nalgebra::{DMatrix, DVector};

use crate::error::{Result, SblError};
use crate::linalg::{chol_log_det, spd_factor};
use crate::model::{EvidenceDerivatives, HyperparamVector, PosteriorMoments, ProblemInstance};
use crate::oracle;

/// How the posterior is computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MomentsMode {
    /// Woodbury-accelerated path on the active set.
    Fast,
    /// Dense brute force: every inverse formed explicitly.
    Oracle,
}

/// Factorization used by the fast path.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Strategy {
    /// `S` is diagonal (dictionary is a scaled partial permutation).
    Diagonal,
    /// Factor the `m x m` matrix `S`.
    Observation,
    /// Factor the `|J| x |J|` matrix `I + β Γ_J^½ F_JᵀF_J Γ_J^½`, a symmetric
    /// rescaling of `Γ_J⁻¹ + βF_JᵀF_J`.
    Weight,
}

impl Strategy {
    /// Cheapest factorization for the given problem and active-set size.
    pub fn select(problem: &ProblemInstance, active: usize) -> Strategy {
        if problem.selection().is_some() {
            Strategy::Diagonal
        } else if problem.rows() <= active {
            Strategy::Observation
        } else {
            Strategy::Weight
        }
    }
}

/// All evidence quantities at one `γ`.
#[derive(Debug, Clone)]
pub struct EvidenceState {
    /// `yᵀ S⁻¹ y`
    pub quad: f64,
    /// `log det S`
    pub log_det: f64,
    pub moments: PosteriorMoments,
    pub derivs: EvidenceDerivatives,
}

impl EvidenceState {
    pub fn objective(&self) -> f64 {
        self.quad + self.log_det
    }
}

fn check_dims(gamma: &HyperparamVector, problem: &ProblemInstance) -> Result<()> {
    if gamma.len() != problem.cols() {
        return Err(SblError::input(format!(
            "gamma has length {} but dictionary has {} columns",
            gamma.len(),
            problem.cols()
        )));
    }
    Ok(())
}

/// Fast-path evaluation with automatic strategy selection.
pub fn evaluate(gamma: &HyperparamVector, problem: &ProblemInstance) -> Result<EvidenceState> {
    let strategy = Strategy::select(problem, gamma.active_set().len());
    evaluate_with(gamma, problem, strategy)
}

/// Fast-path evaluation with a forced strategy. `Diagonal` falls back to
/// `Weight` when the dictionary does not have the required structure.
pub fn evaluate_with(
    gamma: &HyperparamVector,
    problem: &ProblemInstance,
    strategy: Strategy,
) -> Result<EvidenceState> {
    check_dims(gamma, problem)?;
    let (quad, log_det, mean, cov_diag, z_diag, u) = match (strategy, problem.selection()) {
        (Strategy::Diagonal, Some(sel)) => diagonal(gamma, problem, sel),
        (Strategy::Observation, _) => observation(gamma, problem)?,
        _ => weight(gamma, problem)?,
    };
    Ok(EvidenceState {
        quad,
        log_det,
        moments: PosteriorMoments {
            mean,
            cov_diag,
            full_cov: None,
        },
        derivs: EvidenceDerivatives::from_parts(z_diag, u),
    })
}

type Parts = (f64, f64, Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>);

fn moments_from_zu(gamma: &HyperparamVector, z: &[f64], u: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let n = gamma.len();
    let g = gamma.values();
    let mut mean = vec![0.0; n];
    let mut cov = vec![0.0; n];
    for &i in gamma.active_set() {
        mean[i] = g[i] * u[i];
        cov[i] = (g[i] - g[i] * g[i] * z[i]).clamp(0.0, g[i]);
    }
    (mean, cov)
}

fn diagonal(
    gamma: &HyperparamVector,
    problem: &ProblemInstance,
    sel: &[Option<(usize, f64)>],
) -> Parts {
    let b = problem.noise_variance();
    let y = problem.observation();
    let g = gamma.values();
    let n = gamma.len();

    let mut s = vec![b; problem.rows()];
    for (i, e) in sel.iter().enumerate() {
        if let Some((r, c)) = *e {
            s[r] += g[i] * c * c;
        }
    }
    let quad = s.iter().zip(y.iter()).map(|(s, y)| y * y / s).sum();
    let log_det = s.iter().map(|s| s.ln()).sum();

    let mut z = vec![0.0; n];
    let mut u = vec![0.0; n];
    let mut mean = vec![0.0; n];
    let mut cov = vec![0.0; n];
    for (i, e) in sel.iter().enumerate() {
        if let Some((r, c)) = *e {
            z[i] = c * c / s[r];
            u[i] = c * y[r] / s[r];
            if g[i] > 0.0 {
                mean[i] = g[i] * u[i];
                // rows are not shared, so S_rr − γᵢcᵢ² is exactly b
                cov[i] = g[i] * b / s[r];
            }
        }
    }
    (quad, log_det, mean, cov, z, u)
}

fn observation(gamma: &HyperparamVector, problem: &ProblemInstance) -> Result<Parts> {
    let f = problem.dictionary();
    let y = problem.observation();
    let m = problem.rows();
    let g = gamma.values();
    let active = gamma.active_set();

    let mut scaled = DMatrix::zeros(m, active.len());
    for (c, &i) in active.iter().enumerate() {
        scaled.set_column(c, &(f.column(i) * g[i].sqrt()));
    }
    let mut s = &scaled * scaled.transpose();
    let b = problem.noise_variance();
    for r in 0..m {
        s[(r, r)] += b;
    }
    let chol = spd_factor(s, "S(gamma)")?;
    let l = chol.l_dirty();

    let mut w = f.clone();
    if !l.solve_lower_triangular_mut(&mut w) {
        return Err(SblError::numerical("triangular solve with L(S) failed"));
    }
    let mut v = y.clone();
    if !l.solve_lower_triangular_mut(&mut v) {
        return Err(SblError::numerical("triangular solve with L(S) failed"));
    }

    let quad = v.norm_squared();
    let log_det = chol_log_det(&chol);
    let z: Vec<f64> = w.column_iter().map(|c| c.norm_squared()).collect();
    let u: Vec<f64> = w.tr_mul(&v).iter().copied().collect();
    let (mean, cov) = moments_from_zu(gamma, &z, &u);
    Ok((quad, log_det, mean, cov, z, u))
}

fn weight(gamma: &HyperparamVector, problem: &ProblemInstance) -> Result<Parts> {
    let f = problem.dictionary();
    let y = problem.observation();
    let beta = problem.beta();
    let (m, n) = f.shape();
    let g = gamma.values();
    let active = gamma.active_set();
    let na = active.len();
    let col_sq = problem.col_sq_norms();

    if na == 0 {
        let quad = beta * y.norm_squared();
        let log_det = -(m as f64) * beta.ln();
        let z = col_sq.iter().map(|c| beta * c).collect();
        let u = problem.dict_t_obs().iter().map(|v| beta * v).collect();
        return Ok((quad, log_det, vec![0.0; n], vec![0.0; n], z, u));
    }

    let sg: Vec<f64> = active.iter().map(|&i| g[i].sqrt()).collect();

    // Γ_J^½ F_Jᵀ F  (na x n); rows restricted to J give Γ_J^½ G_JJ.
    let cross = match problem.gram() {
        Some(gram) => DMatrix::from_fn(na, n, |a, j| sg[a] * gram[(active[a], j)]),
        None => {
            let mut fj = DMatrix::zeros(m, na);
            for (c, &i) in active.iter().enumerate() {
                fj.set_column(c, &(f.column(i) * sg[c]));
            }
            fj.tr_mul(f)
        }
    };
    let mut a = DMatrix::from_fn(na, na, |r, c| beta * cross[(r, active[c])] * sg[c]);
    for r in 0..na {
        a[(r, r)] += 1.0;
    }
    let chol = spd_factor(a, "I + beta*Gamma^1/2 F'F Gamma^1/2")?;
    let l = chol.l_dirty();

    let fty = problem.dict_t_obs();
    let t = DVector::from_fn(na, |a, _| sg[a] * fty[active[a]]);
    let w = chol.solve(&t);

    let mut linv = DMatrix::identity(na, na);
    if !l.solve_lower_triangular_mut(&mut linv) {
        return Err(SblError::numerical("triangular solve with L(A) failed"));
    }
    let mut q = cross;
    if !l.solve_lower_triangular_mut(&mut q) {
        return Err(SblError::numerical("triangular solve with L(A) failed"));
    }

    let mut mean = vec![0.0; n];
    let mut cov = vec![0.0; n];
    let mut penalty = 0.0;
    let mut residual = y.clone();
    for (a, &i) in active.iter().enumerate() {
        let mu = beta * sg[a] * w[a];
        mean[i] = mu;
        cov[i] = (g[i] * linv.column(a).norm_squared()).clamp(0.0, g[i]);
        penalty += mu * mu / g[i];
        residual.axpy(-mu, &f.column(i), 1.0);
    }
    // F(μ, γ) = β‖Fμ − y‖² + μᵀΓ⁻¹μ equals yᵀS⁻¹y without cancellation
    let quad = beta * residual.norm_squared() + penalty;
    let log_det = chol_log_det(&chol) - (m as f64) * beta.ln();

    let u: Vec<f64> = f.tr_mul(&residual).iter().map(|v| beta * v).collect();
    let z: Vec<f64> = (0..n)
        .map(|j| (beta * col_sq[j] - beta * beta * q.column(j).norm_squared()).max(0.0))
        .collect();
    Ok((quad, log_det, mean, cov, z, u))
}

/// `L(γ) = yᵀS(γ)⁻¹y + log det S(γ)`.
pub fn evidence_objective(gamma: &HyperparamVector, problem: &ProblemInstance) -> Result<f64> {
    evaluate(gamma, problem).map(|s| s.objective())
}

/// Posterior mean `μ = ΓFᵀS⁻¹y` and `diag(Σ)`, `Σ = Γ − ΓFᵀS⁻¹FΓ`.
pub fn posterior_moments(
    gamma: &HyperparamVector,
    problem: &ProblemInstance,
    mode: MomentsMode,
) -> Result<PosteriorMoments> {
    match mode {
        MomentsMode::Fast => evaluate(gamma, problem).map(|s| s.moments),
        MomentsMode::Oracle => oracle::dense_evaluate(gamma, problem).map(|s| s.moments),
    }
}

pub fn evidence_derivatives(
    gamma: &HyperparamVector,
    problem: &ProblemInstance,
) -> Result<EvidenceDerivatives> {
    evaluate(gamma, problem).map(|s| s.derivs)
}

/// `β‖Fx − y‖² + xᵀΓ†x`, or `+∞` when some `xᵢ ≠ 0` has `γᵢ = 0`.
pub fn auxiliary_objective(
    x: &[f64],
    gamma: &HyperparamVector,
    problem: &ProblemInstance,
) -> Result<f64> {
    check_dims(gamma, problem)?;
    if x.len() != problem.cols() {
        return Err(SblError::input(format!(
            "x has length {} but dictionary has {} columns",
            x.len(),
            problem.cols()
        )));
    }
    let g = gamma.values();
    let mut penalty = 0.0;
    for (xi, gi) in x.iter().zip(g) {
        if *gi > 0.0 {
            penalty += xi * xi / gi;
        } else if *xi != 0.0 {
            return Ok(f64::INFINITY);
        }
    }
    let xv = DVector::from_column_slice(x);
    let misfit = (problem.dictionary() * xv - problem.observation()).norm_squared();
    Ok(problem.beta() * misfit + penalty)
}

/// EM majorant of `log det S` built at `gamma_anchor`:
///
/// `φ(s⁽ᵏ⁾) + Σᵢ Σᵢᵢ(γ⁽ᵏ⁾)(1/γᵢ − 1/γᵢ⁽ᵏ⁾) + Σᵢ log γᵢ − m log β`
///
/// evaluated as `g(γ⁽ᵏ⁾) + Σᵢ Σᵢᵢ(γ⁽ᵏ⁾)(1/γᵢ − 1/γᵢ⁽ᵏ⁾) + Σᵢ (log γᵢ − log γᵢ⁽ᵏ⁾)`
/// so the anchor point reproduces `g` exactly. Sums run over the shared
/// active set; both vectors must be positive on exactly the same indices.
pub fn em_surrogate_value(
    gamma: &HyperparamVector,
    gamma_anchor: &HyperparamVector,
    problem: &ProblemInstance,
) -> Result<f64> {
    check_dims(gamma, problem)?;
    check_dims(gamma_anchor, problem)?;
    if gamma.active_set() != gamma_anchor.active_set() {
        return Err(SblError::input(
            "gamma and anchor must be strictly positive on the same active set",
        ));
    }
    let anchor = evaluate(gamma_anchor, problem)?;
    let g = gamma.values();
    let ga = gamma_anchor.values();
    let mut linear = 0.0;
    let mut logs = 0.0;
    for &i in gamma_anchor.active_set() {
        linear += anchor.moments.cov_diag[i] * (1.0 / g[i] - 1.0 / ga[i]);
        logs += g[i].ln() - ga[i].ln();
    }
    Ok(anchor.log_det + linear + logs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn scalar(f: f64, y: f64, beta: f64) -> ProblemInstance {
        ProblemInstance::new(
            DMatrix::from_element(1, 1, f),
            DVector::from_element(1, y),
            beta,
        )
        .unwrap()
    }

    fn two_by_one() -> ProblemInstance {
        ProblemInstance::new(
            DMatrix::from_row_slice(2, 1, &[1.0, 1.0]),
            DVector::from_row_slice(&[1.0, 1.0]),
            1.0,
        )
        .unwrap()
    }

    fn all_strategies() -> [Strategy; 3] {
        [Strategy::Diagonal, Strategy::Observation, Strategy::Weight]
    }

    #[test]
    fn scalar_objective() {
        let p = scalar(1.0, 2.0, 1.0);
        for s in all_strategies() {
            let g1 = HyperparamVector::new(vec![1.0]).unwrap();
            let l = evaluate_with(&g1, &p, s).unwrap().objective();
            assert_relative_eq!(l, 2.0 + 2f64.ln(), max_relative = 1e-14);
            let g0 = HyperparamVector::new(vec![0.0]).unwrap();
            let l0 = evaluate_with(&g0, &p, s).unwrap().objective();
            assert_relative_eq!(l0, 4.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn two_by_one_objective_and_moments() {
        // S = [[2,1],[1,2]], S⁻¹ = [[2,-1],[-1,2]]/3, yᵀS⁻¹y = 2/3, det S = 3
        let p = two_by_one();
        let g = HyperparamVector::new(vec![1.0]).unwrap();
        for s in [Strategy::Observation, Strategy::Weight] {
            let st = evaluate_with(&g, &p, s).unwrap();
            assert_relative_eq!(st.objective(), 2.0 / 3.0 + 3f64.ln(), max_relative = 1e-14);
            assert_relative_eq!(st.moments.mean[0], 2.0 / 3.0, max_relative = 1e-14);
            assert_relative_eq!(st.moments.cov_diag[0], 1.0 / 3.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn scalar_moments_and_derivatives() {
        let p = scalar(1.0, 2.0, 1.0);
        let g = HyperparamVector::new(vec![1.0]).unwrap();
        let m = posterior_moments(&g, &p, MomentsMode::Fast).unwrap();
        assert_relative_eq!(m.mean[0], 1.0);
        assert_relative_eq!(m.cov_diag[0], 0.5);
        let d = evidence_derivatives(&g, &p).unwrap();
        assert_relative_eq!(d.z_diag[0], 0.5);
        assert_relative_eq!(d.u[0], 1.0);
        assert_relative_eq!(d.gradient[0], -0.5);

        let p0 = scalar(1.0, 0.0, 1.0);
        let d0 = evidence_derivatives(&g, &p0).unwrap();
        assert_eq!(d0.u[0], 0.0);
        assert_relative_eq!(d0.gradient[0], 0.5);
    }

    #[test]
    fn zero_prior_gives_zero_posterior() {
        let f = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 0.5, -1.0, 0.3, 2.0]);
        let p = ProblemInstance::new(f, DVector::from_row_slice(&[1.0, -2.0]), 2.0).unwrap();
        let g = HyperparamVector::new(vec![0.0; 3]).unwrap();
        for s in all_strategies() {
            let st = evaluate_with(&g, &p, s).unwrap();
            assert_eq!(st.moments.mean, vec![0.0; 3]);
            assert_eq!(st.moments.cov_diag, vec![0.0; 3]);
            // S = I/2, so Z = 2 FᵀF diagonal and u = 2Fᵀy
            assert_relative_eq!(st.derivs.z_diag[1], 2.0 * (4.0 + 0.09), max_relative = 1e-14);
            assert_relative_eq!(st.derivs.u[0], 2.0 * 3.0, max_relative = 1e-14);
        }
    }

    #[test]
    fn auxiliary_objective_cases() {
        let p = scalar(1.0, 2.0, 1.0);
        let g = HyperparamVector::new(vec![1.0]).unwrap();
        let mu = posterior_moments(&g, &p, MomentsMode::Fast).unwrap().mean;
        let v = auxiliary_objective(&mu, &g, &p).unwrap();
        assert_relative_eq!(v, 2.0, max_relative = 1e-14);
        let st = evaluate(&g, &p).unwrap();
        assert_relative_eq!(v, st.quad, max_relative = 1e-14);

        let g0 = HyperparamVector::new(vec![0.0]).unwrap();
        assert_eq!(auxiliary_objective(&[0.1], &g0, &p).unwrap(), f64::INFINITY);
        assert_eq!(auxiliary_objective(&[0.0], &g0, &p).unwrap(), 4.0);
        assert!(auxiliary_objective(&[0.0, 1.0], &g0, &p).is_err());
    }

    #[test]
    fn em_surrogate_scalar() {
        let p = scalar(1.0, 2.0, 1.0);
        let anchor = HyperparamVector::new(vec![1.0]).unwrap();
        let at_anchor = em_surrogate_value(&anchor, &anchor, &p).unwrap();
        assert_eq!(at_anchor, evaluate(&anchor, &p).unwrap().log_det);

        let g = HyperparamVector::new(vec![2.0]).unwrap();
        let v = em_surrogate_value(&g, &anchor, &p).unwrap();
        assert_relative_eq!(v, 2.0 * 2f64.ln() - 0.25, max_relative = 1e-14);
        let logdet = evaluate(&g, &p).unwrap().log_det;
        assert_relative_eq!(logdet, 3f64.ln(), max_relative = 1e-14);
        assert!(logdet <= v);
    }

    #[test]
    fn em_surrogate_rejects_mismatched_support() {
        let p = two_by_one();
        let a = HyperparamVector::new(vec![1.0]).unwrap();
        let z = HyperparamVector::new(vec![0.0]).unwrap();
        assert!(matches!(
            em_surrogate_value(&z, &a, &p),
            Err(SblError::Input(_))
        ));
    }

    #[test]
    fn dimension_mismatch_is_input_error() {
        let p = two_by_one();
        let g = HyperparamVector::new(vec![1.0, 1.0]).unwrap();
        assert!(matches!(evidence_objective(&g, &p), Err(SblError::Input(_))));
    }

    #[test]
    fn strategy_selection() {
        let p = two_by_one();
        assert_eq!(Strategy::select(&p, 1), Strategy::Weight);
        assert_eq!(Strategy::select(&p, 2), Strategy::Observation);
        let id = scalar(1.0, 1.0, 1.0);
        assert_eq!(Strategy::select(&id, 1), Strategy::Diagonal);
    }
}
