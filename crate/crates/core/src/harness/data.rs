//! Seeded synthetic data: sparse signals, dictionaries and noisy observations.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SblError};

/// Random stream identifiers. Each quantity draws from its own ChaCha20
/// stream so that changing one never shifts another.
pub const STREAM_SUPPORT: u64 = 0;
pub const STREAM_SIGNAL: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_DICTIONARY: u64 = 3;

/// Key of a ChaCha20 generator: the user seed plus the coordinates of the
/// data instance (sparsity, noise setting, repetition), packed little-endian
/// into the 32-byte key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct DataSeed {
    pub seed: u64,
    pub sparsity_bits: u64,
    pub noise_key: u64,
    pub repetition: u64,
}

impl DataSeed {
    pub fn rng(&self, stream: u64) -> ChaCha20Rng {
        let mut key = [0u8; 32];
        for (chunk, word) in key
            .chunks_exact_mut(8)
            .zip([self.seed, self.sparsity_bits, self.noise_key, self.repetition])
        {
            chunk.copy_from_slice(&word.to_le_bytes());
        }
        let mut rng = ChaCha20Rng::from_seed(key);
        rng.set_stream(stream);
        rng
    }
}

impl From<u64> for DataSeed {
    fn from(seed: u64) -> Self {
        DataSeed {
            seed,
            ..Default::default()
        }
    }
}

/// Noise level of an observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseSpec {
    /// Noise precision; variance is `1/β`.
    Beta(f64),
    /// Target SNR in dB relative to the realized signal power `‖Fx‖²/m`.
    SnrDb(f64),
    /// `y = Fx` exactly; reported precision is `+∞`.
    Noiseless,
}

impl NoiseSpec {
    pub fn validate(&self) -> Result<()> {
        match *self {
            NoiseSpec::Beta(b) if !(b > 0.0) || !b.is_finite() => {
                Err(SblError::input(format!("beta must be positive and finite, got {b}")))
            }
            NoiseSpec::SnrDb(s) if !s.is_finite() => {
                Err(SblError::input(format!("SNR must be finite, got {s}")))
            }
            _ => Ok(()),
        }
    }

    /// Short tag used in file names: `b0.1`, `snr20`, `noiseless`.
    pub fn label(&self) -> String {
        match self {
            NoiseSpec::Beta(b) => format!("b{b}"),
            NoiseSpec::SnrDb(s) => format!("snr{s}"),
            NoiseSpec::Noiseless => "noiseless".to_string(),
        }
    }

    /// Seed component distinguishing noise settings.
    pub fn key(&self) -> u64 {
        match self {
            NoiseSpec::Beta(b) => b.to_bits(),
            NoiseSpec::SnrDb(s) => !s.to_bits(),
            NoiseSpec::Noiseless => u64::MAX - 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DictionaryKind {
    Identity,
    /// First `m` rows of the orthonormal DCT-II matrix of size `n`.
    PartialDct,
    /// i.i.d. standard normal entries, columns scaled to unit norm.
    Gaussian,
    /// Read from a matrix file.
    CustomFile,
}

impl DictionaryKind {
    pub fn as_str(self) -> &'static str {
        match self {
            DictionaryKind::Identity => "identity",
            DictionaryKind::PartialDct => "partial_dct",
            DictionaryKind::Gaussian => "gaussian",
            DictionaryKind::CustomFile => "custom_file",
        }
    }
}

/// Number of nonzeros for `s` percent of `n`, rounded half away from zero.
pub fn support_size(n: usize, s_percent: f64) -> usize {
    ((n as f64) * s_percent / 100.0).round() as usize
}

/// `round(n·s/100)` standard-normal entries at uniformly drawn positions.
pub fn gen_sparse_signal(n: usize, s_percent: f64, seed: impl Into<DataSeed>) -> Result<Vec<f64>> {
    if !(s_percent > 0.0 && s_percent <= 100.0) {
        return Err(SblError::input(format!(
            "sparsity must be in (0, 100], got {s_percent}"
        )));
    }
    let seed = seed.into();
    let k = support_size(n, s_percent).min(n);
    let mut support = sample(&mut seed.rng(STREAM_SUPPORT), n, k).into_vec();
    support.sort_unstable();
    let mut values = seed.rng(STREAM_SIGNAL);
    let mut x = vec![0.0; n];
    for i in support {
        x[i] = values.sample(StandardNormal);
    }
    Ok(x)
}

/// Rescales so that the largest magnitude is `bound` (a zero vector is left alone).
pub fn scale_to_unit_range(x: &mut [f64], bound: f64) {
    let max = x.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if max > 0.0 {
        for v in x {
            *v *= bound / max;
        }
    }
}

/// Orthonormal DCT-II matrix rows `0..m` for length `n`:
/// `C[k,j] = α(k) cos(π(2j+1)k / 2n)`.
pub fn partial_dct(m: usize, n: usize) -> Result<DMatrix<f64>> {
    if m == 0 || m > n {
        return Err(SblError::input(format!(
            "partial DCT needs 1 <= m <= n, got m = {m}, n = {n}"
        )));
    }
    let nf = n as f64;
    let a0 = (1.0 / nf).sqrt();
    let ak = (2.0 / nf).sqrt();
    Ok(DMatrix::from_fn(m, n, |k, j| {
        let alpha = if k == 0 { a0 } else { ak };
        // reduce the angle index modulo 4n to keep the cosine argument small
        let idx = ((2 * j + 1) * k) % (4 * n);
        alpha * (PI * idx as f64 / (2.0 * nf)).cos()
    }))
}

pub fn gen_gaussian_dictionary(m: usize, n: usize, seed: impl Into<DataSeed>) -> Result<DMatrix<f64>> {
    if m == 0 || n == 0 {
        return Err(SblError::input("dictionary dimensions must be positive"));
    }
    let mut rng = seed.into().rng(STREAM_DICTIONARY);
    let mut f = DMatrix::from_fn(m, n, |_, _| rng.sample::<f64, _>(StandardNormal));
    for mut col in f.column_iter_mut() {
        let norm = col.norm();
        if norm > 0.0 {
            col /= norm;
        }
    }
    Ok(f)
}

/// Deterministic dictionaries; the seeded and file-backed kinds are built
/// by [`gen_gaussian_dictionary`] and [`crate::io::read_matrix`].
pub fn gen_dictionary(kind: DictionaryKind, m: usize, n: usize) -> Result<DMatrix<f64>> {
    match kind {
        DictionaryKind::Identity => {
            if m != n || n == 0 {
                return Err(SblError::input(format!(
                    "identity dictionary needs m = n > 0, got {m}x{n}"
                )));
            }
            Ok(DMatrix::identity(n, n))
        }
        DictionaryKind::PartialDct => partial_dct(m, n),
        DictionaryKind::Gaussian => Err(SblError::input("gaussian dictionary needs a seed")),
        DictionaryKind::CustomFile => Err(SblError::input("custom dictionary needs a file path")),
    }
}

/// `y = Fx + ε`, `ε ~ N(0, β⁻¹ I)`. Returns `y` and the precision actually used.
pub fn gen_observation(
    f: &DMatrix<f64>,
    x: &[f64],
    noise: NoiseSpec,
    seed: impl Into<DataSeed>,
) -> Result<(DVector<f64>, f64)> {
    noise.validate()?;
    if x.len() != f.ncols() {
        return Err(SblError::input(format!(
            "signal has length {} but dictionary has {} columns",
            x.len(),
            f.ncols()
        )));
    }
    let clean = f * DVector::from_column_slice(x);
    let m = f.nrows() as f64;
    let beta = match noise {
        NoiseSpec::Noiseless => return Ok((clean, f64::INFINITY)),
        NoiseSpec::Beta(b) => b,
        NoiseSpec::SnrDb(snr) => {
            let power = clean.norm_squared() / m;
            if !(power > 0.0) {
                return Err(SblError::input("SNR is undefined for a zero signal (Fx = 0)"));
            }
            let variance = power / 10f64.powf(snr / 10.0);
            variance.recip()
        }
    };
    let sd = beta.recip().sqrt();
    let mut rng = seed.into().rng(STREAM_NOISE);
    let y = clean.map(|v| v + sd * rng.sample::<f64, _>(StandardNormal));
    Ok((y, beta))
}

/// `γᵢ* = max(0, yᵢ² − β⁻¹)`, the exact minimizer for an identity dictionary.
pub fn denoising_reference(y: &[f64], beta: f64) -> Vec<f64> {
    let b = beta.recip();
    y.iter().map(|v| (v * v - b).max(0.0)).collect()
}
