use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::data::{support_size, DictionaryKind, NoiseSpec};
use crate::algorithms::{Algorithm, AlgorithmConfig};
use crate::error::{Result, SblError};

/// The τ values of the proximal-weight sweep.
pub const TAU_SWEEP: [f64; 4] = [1e-10, 1e-5, 1e-2, 1e-1];

/// Names accepted by [`ExperimentSpec::preset`].
pub const PRESETS: [&str; 5] = ["denoising", "fourier", "tau_sweep", "eeg_analog", "sar_analog"];

/// A grid of runs: every sparsity × noise × repetition data instance is
/// solved by every algorithm (and every τ, for AMQ).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub dictionary: DictionaryKind,
    /// Matrix file for `custom_file`.
    #[serde(default)]
    pub dictionary_path: Option<PathBuf>,
    pub m: usize,
    pub n: usize,
    pub sparsity_percents: Vec<f64>,
    pub noise: Vec<NoiseSpec>,
    pub algorithms: Vec<Algorithm>,
    /// AMQ proximal weights; other algorithms ignore τ.
    #[serde(default = "default_taus")]
    pub taus: Vec<f64>,
    /// Shared settings; its `tau` and `algorithm` fields are overridden per cell.
    #[serde(default)]
    pub config: AlgorithmConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub repetitions: usize,
    /// When set, nonzero amplitudes are rescaled into `[-bound, bound]`.
    #[serde(default)]
    pub amplitude_bound: Option<f64>,
    /// Wall-clock times are written only when enabled, so that outputs are
    /// byte-identical by default.
    #[serde(default)]
    pub record_timing: bool,
}

fn default_taus() -> Vec<f64> {
    vec![AlgorithmConfig::default().tau]
}

fn one() -> usize {
    1
}

impl ExperimentSpec {
    fn grid(name: &str, dictionary: DictionaryKind, m: usize, n: usize) -> Self {
        ExperimentSpec {
            name: name.to_string(),
            dictionary,
            dictionary_path: None,
            m,
            n,
            sparsity_percents: vec![10.0, 80.0],
            noise: vec![NoiseSpec::Beta(0.1), NoiseSpec::Beta(1.0), NoiseSpec::Beta(10.0)],
            algorithms: Algorithm::ALL.to_vec(),
            taus: default_taus(),
            config: AlgorithmConfig::default(),
            seed: 0,
            repetitions: 1,
            amplitude_bound: None,
            record_timing: false,
        }
    }

    /// Built-in experiment grids:
    ///
    /// - `denoising`: 512×512 identity, s ∈ {10, 80}, β ∈ {0.1, 1, 10}, all algorithms
    /// - `fourier`: the same grid on the 256×512 partial DCT
    /// - `tau_sweep`: AMQ on the partial DCT grid for each τ in [`TAU_SWEEP`]
    /// - `eeg_analog`: 122×16384 unit-norm Gaussian dictionary, 590 nonzeros in
    ///   [−1, 1], 20 dB SNR
    /// - `sar_analog`: 4096×16384 partial DCT, 10% sparsity, 20 dB SNR
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "denoising" => Ok(Self::grid(name, DictionaryKind::Identity, 512, 512)),
            "fourier" => Ok(Self::grid(name, DictionaryKind::PartialDct, 256, 512)),
            "tau_sweep" => Ok(ExperimentSpec {
                algorithms: vec![Algorithm::Amq],
                taus: TAU_SWEEP.to_vec(),
                ..Self::grid(name, DictionaryKind::PartialDct, 256, 512)
            }),
            "eeg_analog" => Ok(ExperimentSpec {
                sparsity_percents: vec![590.0 / 16384.0 * 100.0],
                noise: vec![NoiseSpec::SnrDb(20.0)],
                amplitude_bound: Some(1.0),
                ..Self::grid(name, DictionaryKind::Gaussian, 122, 16384)
            }),
            "sar_analog" => Ok(ExperimentSpec {
                sparsity_percents: vec![10.0],
                noise: vec![NoiseSpec::SnrDb(20.0)],
                ..Self::grid(name, DictionaryKind::PartialDct, 4096, 16384)
            }),
            other => Err(SblError::input(format!(
                "unknown preset '{other}' (expected one of {})",
                PRESETS.join(", ")
            ))),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: ExperimentSpec = serde_json::from_str(text)
            .map_err(|e| SblError::input(format!("bad experiment spec: {e}")))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| SblError::Io(format!("{}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            SblError::Input(msg) => SblError::Input(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("spec is always serializable")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(SblError::input(msg));
        if self.m == 0 || self.n == 0 {
            return bad(format!("dimensions must be positive, got {}x{}", self.m, self.n));
        }
        match self.dictionary {
            DictionaryKind::Identity if self.m != self.n => {
                return bad(format!("identity dictionary needs m = n, got {}x{}", self.m, self.n))
            }
            DictionaryKind::PartialDct if self.m > self.n => {
                return bad(format!("partial DCT needs m <= n, got {}x{}", self.m, self.n))
            }
            DictionaryKind::CustomFile if self.dictionary_path.is_none() => {
                return bad("custom_file dictionary needs dictionary_path".to_string())
            }
            _ => {}
        }
        if self.sparsity_percents.is_empty() || self.noise.is_empty() || self.algorithms.is_empty() {
            return bad("sparsity_percents, noise and algorithms must be non-empty".to_string());
        }
        for &s in &self.sparsity_percents {
            if !(s > 0.0 && s <= 100.0) {
                return bad(format!("sparsity must be in (0, 100], got {s}"));
            }
        }
        for noise in &self.noise {
            noise.validate()?;
            if *noise == NoiseSpec::Noiseless {
                return bad("noiseless observations cannot be solved (beta would be infinite)".to_string());
            }
        }
        if self.algorithms.contains(&Algorithm::Amq) && self.taus.is_empty() {
            return bad("taus must be non-empty when AMQ is requested".to_string());
        }
        for &tau in &self.taus {
            if !(tau >= 0.0) || !tau.is_finite() {
                return bad(format!("tau must be finite and >= 0, got {tau}"));
            }
        }
        if self.repetitions == 0 {
            return bad("repetitions must be positive".to_string());
        }
        if let Some(b) = self.amplitude_bound {
            if !(b > 0.0) || !b.is_finite() {
                return bad(format!("amplitude_bound must be positive, got {b}"));
            }
        }
        self.config.validate()
    }

    /// Nonzeros per generated signal, one per sparsity level.
    pub fn support_sizes(&self) -> Vec<usize> {
        self.sparsity_percents
            .iter()
            .map(|&s| support_size(self.n, s))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets_are_valid() {
        for name in PRESETS {
            let spec = ExperimentSpec::preset(name).unwrap();
            spec.validate().unwrap();
            assert_eq!(ExperimentSpec::from_json(&spec.to_json()).unwrap(), spec);
        }
        assert!(ExperimentSpec::preset("nope").is_err());
        assert_eq!(ExperimentSpec::preset("eeg_analog").unwrap().support_sizes(), vec![590]);
        assert_eq!(ExperimentSpec::preset("denoising").unwrap().support_sizes(), vec![51, 410]);
    }

    #[test]
    fn minimal_json_uses_defaults() {
        let spec = ExperimentSpec::from_json(
            r#"{"name":"t","dictionary":"partial_dct","m":8,"n":16,
                "sparsity_percents":[25],"noise":[{"beta":1.0},{"snr_db":20}],
                "algorithms":["em","amq"],"config":{"max_iters":50}}"#,
        )
        .unwrap();
        assert_eq!(spec.repetitions, 1);
        assert_eq!(spec.taus, vec![1e-10]);
        assert_eq!(spec.config.max_iters, 50);
        assert_eq!(spec.config.epsilon, 0.02);
    }

    #[test]
    fn invalid_specs() {
        let mut s = ExperimentSpec::preset("denoising").unwrap();
        s.m = 10;
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::preset("fourier").unwrap();
        s.sparsity_percents = vec![0.0];
        assert!(s.validate().is_err());
        let mut s = ExperimentSpec::preset("fourier").unwrap();
        s.noise = vec![NoiseSpec::Noiseless];
        assert!(s.validate().is_err());
        assert!(ExperimentSpec::from_json("{}").is_err());
    }
}
