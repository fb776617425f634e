//! Problem data and hyperparameter containers.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};

/// Largest `n` for which the `n x n` Gram matrix `FᵀF` is cached.
const GRAM_CACHE_MAX_N: usize = 2048;

/// Linear model `y = F x + noise` with noise precision `beta`.
#[derive(Debug, Clone)]
pub struct ProblemInstance {
    dictionary: DMatrix<f64>,
    observation: DVector<f64>,
    beta: f64,
    col_sq_norms: Vec<f64>,
    dict_t_obs: DVector<f64>,
    // Some(..) when every column has at most one nonzero and no two columns
    // share a row; entry i is (row, value) of column i.
    selection: Option<Vec<Option<(usize, f64)>>>,
    gram: OnceLock<Option<DMatrix<f64>>>,
}

impl ProblemInstance {
    pub fn new(dictionary: DMatrix<f64>, observation: DVector<f64>, beta: f64) -> Result<Self> {
        let (m, n) = dictionary.shape();
        if m == 0 || n == 0 {
            return Err(SblError::input(format!(
                "dictionary must be non-empty, got {m}x{n}"
            )));
        }
        if observation.len() != m {
            return Err(SblError::input(format!(
                "observation has length {} but dictionary has {m} rows",
                observation.len()
            )));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(SblError::input(format!(
                "noise precision must be finite and positive, got {beta}"
            )));
        }
        if dictionary.iter().any(|v| !v.is_finite()) {
            return Err(SblError::input("dictionary contains non-finite entries"));
        }
        if observation.iter().any(|v| !v.is_finite()) {
            return Err(SblError::input("observation contains non-finite entries"));
        }

        let col_sq_norms = dictionary
            .column_iter()
            .map(|c| c.norm_squared())
            .collect();
        let dict_t_obs = dictionary.tr_mul(&observation);
        let selection = detect_selection(&dictionary);

        Ok(ProblemInstance {
            dictionary,
            observation,
            beta,
            col_sq_norms,
            dict_t_obs,
            selection,
            gram: OnceLock::new(),
        })
    }

    pub fn dictionary(&self) -> &DMatrix<f64> {
        &self.dictionary
    }

    pub fn observation(&self) -> &DVector<f64> {
        &self.observation
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// Noise variance `b = 1/beta`.
    pub fn noise_variance(&self) -> f64 {
        1.0 / self.beta
    }

    pub fn rows(&self) -> usize {
        self.dictionary.nrows()
    }

    pub fn cols(&self) -> usize {
        self.dictionary.ncols()
    }

    pub(crate) fn col_sq_norms(&self) -> &[f64] {
        &self.col_sq_norms
    }

    pub(crate) fn dict_t_obs(&self) -> &DVector<f64> {
        &self.dict_t_obs
    }

    /// Row/value pairs when the dictionary is a scaled partial permutation
    /// (the identity being the common case). `S(γ)` is then diagonal.
    pub(crate) fn selection(&self) -> Option<&[Option<(usize, f64)>]> {
        self.selection.as_deref()
    }

    pub(crate) fn gram(&self) -> Option<&DMatrix<f64>> {
        self.gram
            .get_or_init(|| {
                (self.cols() <= GRAM_CACHE_MAX_N).then(|| self.dictionary.tr_mul(&self.dictionary))
            })
            .as_ref()
    }
}

fn detect_selection(dictionary: &DMatrix<f64>) -> Option<Vec<Option<(usize, f64)>>> {
    let mut row_used = vec![false; dictionary.nrows()];
    let mut out = Vec::with_capacity(dictionary.ncols());
    for col in dictionary.column_iter() {
        let mut entry = None;
        for (r, &v) in col.iter().enumerate() {
            if v != 0.0 {
                if entry.is_some() || row_used[r] {
                    return None;
                }
                row_used[r] = true;
                entry = Some((r, v));
            }
        }
        out.push(entry);
    }
    Some(out)
}

/// Prior variances `γ` together with the active index set.
///
/// Entries at or below `threshold` are stored as exact zeros and are not
/// part of the active set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HyperparamVector {
    gamma: Vec<f64>,
    active: Vec<usize>,
    threshold: f64,
}

impl HyperparamVector {
    /// Active set is `{i : γᵢ > 0}`.
    pub fn new(gamma: Vec<f64>) -> Result<Self> {
        Self::with_threshold(gamma, 0.0)
    }

    pub fn with_threshold(mut gamma: Vec<f64>, threshold: f64) -> Result<Self> {
        if !(threshold >= 0.0) || !threshold.is_finite() {
            return Err(SblError::input(format!(
                "pruning threshold must be finite and nonnegative, got {threshold}"
            )));
        }
        if let Some((i, v)) = gamma
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < 0.0)
        {
            return Err(SblError::input(format!(
                "gamma[{i}] = {v} is not a finite nonnegative number"
            )));
        }
        let mut active = Vec::with_capacity(gamma.len());
        for (i, g) in gamma.iter_mut().enumerate() {
            if *g > threshold {
                active.push(i);
            } else {
                *g = 0.0;
            }
        }
        Ok(HyperparamVector {
            gamma,
            active,
            threshold,
        })
    }

    pub fn ones(n: usize) -> Self {
        HyperparamVector {
            gamma: vec![1.0; n],
            active: (0..n).collect(),
            threshold: 0.0,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.gamma
    }

    pub fn active_set(&self) -> &[usize] {
        &self.active
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }

    pub fn len(&self) -> usize {
        self.gamma.len()
    }

    pub fn is_empty(&self) -> bool {
        self.gamma.is_empty()
    }

    pub fn is_active(&self, i: usize) -> bool {
        self.gamma[i] > 0.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.gamma
    }

    /// Builds the successor of `self`: only currently active indices may
    /// carry a value, so the active set can shrink but never grow.
    pub(crate) fn successor(&self, mut update: impl FnMut(usize, f64) -> f64) -> Self {
        let mut gamma = vec![0.0; self.gamma.len()];
        let mut active = Vec::with_capacity(self.active.len());
        for &i in &self.active {
            let v = update(i, self.gamma[i]);
            // non-finite values are kept so the caller can flag divergence
            if !(v <= self.threshold) {
                gamma[i] = v;
                active.push(i);
            }
        }
        HyperparamVector {
            gamma,
            active,
            threshold: self.threshold,
        }
    }

    pub(crate) fn is_finite(&self) -> bool {
        self.gamma.iter().all(|g| g.is_finite())
    }
}

/// Posterior mean and covariance diagonal of the weights for a fixed `γ`.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorMoments {
    pub mean: Vec<f64>,
    pub cov_diag: Vec<f64>,
    /// Full covariance; only the dense oracle fills this in.
    pub full_cov: Option<DMatrix<f64>>,
}

/// `diag(Z)`, `u` and `∂L/∂γ` where `Z = Fᵀ S⁻¹ F` and `u = Fᵀ S⁻¹ y`.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceDerivatives {
    pub z_diag: Vec<f64>,
    pub u: Vec<f64>,
    pub gradient: Vec<f64>,
}

impl EvidenceDerivatives {
    pub(crate) fn from_parts(z_diag: Vec<f64>, u: Vec<f64>) -> Self {
        let gradient = z_diag.iter().zip(&u).map(|(z, u)| z - u * u).collect();
        EvidenceDerivatives {
            z_diag,
            u,
            gradient,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_bad_problems() {
        let f = DMatrix::from_element(2, 2, 1.0);
        assert!(ProblemInstance::new(f.clone(), DVector::zeros(3), 1.0).is_err());
        assert!(ProblemInstance::new(f.clone(), DVector::zeros(2), 0.0).is_err());
        assert!(ProblemInstance::new(f.clone(), DVector::zeros(2), f64::NAN).is_err());
        let mut g = f.clone();
        g[(0, 1)] = f64::INFINITY;
        assert!(ProblemInstance::new(g, DVector::zeros(2), 1.0).is_err());
        assert!(ProblemInstance::new(DMatrix::zeros(0, 2), DVector::zeros(0), 1.0).is_err());
    }

    #[test]
    fn identity_is_detected_as_selection() {
        let p = ProblemInstance::new(DMatrix::identity(4, 4), DVector::zeros(4), 1.0).unwrap();
        assert!(p.selection().is_some());
        let mut f = DMatrix::identity(3, 4);
        f[(0, 3)] = 2.0; // two columns share row 0
        let p = ProblemInstance::new(f, DVector::zeros(3), 1.0).unwrap();
        assert!(p.selection().is_none());
    }

    #[test]
    fn threshold_zeroes_small_entries() {
        let h = HyperparamVector::with_threshold(vec![1.0, 1e-13, 0.0, 2.0], 1e-12).unwrap();
        assert_eq!(h.values(), &[1.0, 0.0, 0.0, 2.0]);
        assert_eq!(h.active_set(), &[0, 3]);
        assert!(HyperparamVector::new(vec![-1.0]).is_err());
        assert!(HyperparamVector::new(vec![f64::NAN]).is_err());
    }

    #[test]
    fn successor_never_reactivates() {
        let h = HyperparamVector::new(vec![1.0, 0.0, 3.0]).unwrap();
        let next = h.successor(|_, _| 5.0);
        assert_eq!(next.values(), &[5.0, 0.0, 5.0]);
        assert_eq!(next.active_set(), &[0, 2]);
        let pruned = next.successor(|i, g| if i == 0 { 0.0 } else { g });
        assert_eq!(pruned.active_set(), &[2]);
    }
}
