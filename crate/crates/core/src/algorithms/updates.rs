//! Closed-form γ-updates. Each one only touches the active set of its input,
//! so indices that are already zero stay zero.

use crate::model::{EvidenceDerivatives, HyperparamVector, PosteriorMoments};

/// `γᵢ⁺ = μᵢ² + Σᵢᵢ`
pub fn em_update(moments: &PosteriorMoments, gamma: &HyperparamVector) -> HyperparamVector {
    gamma.successor(|i, _| moments.mean[i] * moments.mean[i] + moments.cov_diag[i])
}

/// `γᵢ − Σᵢᵢ`, floored at `prune_tol·γᵢ`; `None` when the raw value is not
/// positive (the index is then pruned).
fn mk_denominator(gamma_i: f64, cov_i: f64, prune_tol: f64) -> Option<f64> {
    let raw = gamma_i - cov_i;
    (raw > 0.0).then(|| raw.max(prune_tol * gamma_i))
}

/// `γᵢ⁺ = γᵢ μᵢ² / (γᵢ − Σᵢᵢ)`
pub fn mk_update(
    moments: &PosteriorMoments,
    gamma: &HyperparamVector,
    prune_tol: f64,
) -> HyperparamVector {
    gamma.successor(|i, g| match mk_denominator(g, moments.cov_diag[i], prune_tol) {
        Some(d) => g * moments.mean[i] * moments.mean[i] / d,
        None => 0.0,
    })
}

/// `γᵢ⁺ = γᵢ sqrt(μᵢ² / (γᵢ − Σᵢᵢ))`
pub fn cb_update(
    moments: &PosteriorMoments,
    gamma: &HyperparamVector,
    prune_tol: f64,
) -> HyperparamVector {
    gamma.successor(|i, g| match mk_denominator(g, moments.cov_diag[i], prune_tol) {
        Some(d) => g * (moments.mean[i] * moments.mean[i] / d).sqrt(),
        None => 0.0,
    })
}

/// AMQ half step `γᵢ^(k+½) = γᵢ ((xᵢ² + τ) / (γᵢ² Zᵢᵢ + τ))²` on the active
/// set, zero elsewhere and wherever the denominator vanishes.
pub fn amq_half_step(
    derivs: &EvidenceDerivatives,
    x: &[f64],
    gamma: &HyperparamVector,
    tau: f64,
) -> Vec<f64> {
    let g = gamma.values();
    let mut half = vec![0.0; g.len()];
    for &i in gamma.active_set() {
        let den = g[i] * g[i] * derivs.z_diag[i] + tau;
        if den > 0.0 {
            let ratio = (x[i] * x[i] + tau) / den;
            half[i] = g[i] * ratio * ratio;
        }
    }
    half
}

/// Blend in `θ = γ^(-1/2)`: `θ⁺ = θ + η(θ^(k+½) − θ)`, `γ⁺ = (θ⁺)⁻²`.
/// With `η = 1` the half step is returned unchanged.
pub fn amq_blend(gamma: &HyperparamVector, half_step: &[f64], eta: f64) -> HyperparamVector {
    gamma.successor(|i, g| {
        let h = half_step[i];
        if eta == 1.0 || h == 0.0 {
            // θ-space target at infinity sends γ to zero for any η > 0
            return h;
        }
        let theta = g.sqrt().recip();
        let theta_half = h.sqrt().recip();
        let next = theta + eta * (theta_half - theta);
        (next * next).recip()
    })
}

/// `η⁺ = η(1 − εη)`
pub fn step_size_next(eta: f64, epsilon: f64) -> f64 {
    eta * (1.0 - epsilon * eta)
}
