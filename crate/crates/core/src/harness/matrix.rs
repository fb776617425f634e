//! Runs an [`ExperimentSpec`] grid and writes its output directory.

use std::fs;
use std::path::Path;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::data::{
    denoising_reference, gen_dictionary, gen_gaussian_dictionary, gen_observation,
    gen_sparse_signal, scale_to_unit_range, DataSeed, DictionaryKind, NoiseSpec,
};
use super::spec::ExperimentSpec;
use crate::algorithms::{
    run_with_observer, Algorithm, AlgorithmConfig, ConvergenceTrace, RunSummary, TerminationStatus,
};
use crate::error::{Result, SblError};
use crate::model::{HyperparamVector, ProblemInstance};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const ERROR_CSV_HEADER: &str = "iter,log10_error";

/// Checksums identifying one generated data instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFingerprint {
    pub seed: u64,
    pub sparsity_percent: f64,
    pub noise: String,
    pub repetition: usize,
    pub beta: f64,
    pub nonzeros: usize,
    pub dictionary_sha256: String,
    pub signal_sha256: String,
    pub observation_sha256: String,
}

/// One generated (signal, observation) pair.
#[derive(Debug, Clone)]
pub struct DataInstance {
    pub sparsity_percent: f64,
    pub noise: NoiseSpec,
    pub repetition: usize,
    pub signal: Vec<f64>,
    pub problem: ProblemInstance,
    /// Exact minimizer, identity dictionary only.
    pub reference: Option<Vec<f64>>,
    pub fingerprint: DataFingerprint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CellKey {
    pub algorithm: Algorithm,
    /// `None` for algorithms without a proximal weight.
    pub tau: Option<f64>,
    pub data_index: usize,
    pub sparsity_percent: f64,
    pub noise: NoiseSpec,
    pub repetition: usize,
}

impl CellKey {
    /// `{alg}_{dict}_{s}_{beta_or_snr}_{tau}_{rep}`
    pub fn stem(&self, dictionary: DictionaryKind) -> String {
        let tau = self.tau.map_or_else(|| "na".to_string(), |t| format!("{t:e}"));
        format!(
            "{}_{}_{}_{}_{}_{}",
            self.algorithm,
            dictionary.as_str(),
            self.sparsity_percent,
            self.noise.label(),
            tau,
            self.repetition
        )
    }

    /// Column name inside a panel.
    pub fn series(&self) -> String {
        match self.tau {
            Some(t) => format!("{}_tau{t:e}", self.algorithm),
            None => self.algorithm.to_string(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct CellResult {
    pub key: CellKey,
    pub config: AlgorithmConfig,
    /// `None` only when the run was rejected before iterating.
    pub trace: Option<ConvergenceTrace>,
    pub summary: Option<RunSummary>,
    /// `log10 ‖γᵏ − γ*‖` per iterate (identity dictionary only).
    pub error_curve: Option<Vec<f64>>,
    pub failure: Option<String>,
}

impl CellResult {
    pub fn status(&self) -> TerminationStatus {
        self.trace
            .as_ref()
            .map_or(TerminationStatus::NumericalError, |t| t.status)
    }

    /// Iterations until the objective is within `rel_tol·|L|` of its final value.
    pub fn iterations_to_final(&self) -> Option<usize> {
        self.trace
            .as_ref()
            .and_then(|t| t.iterations_to_reach_final(self.config.rel_tol))
    }
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub spec: ExperimentSpec,
    pub data: Vec<DataFingerprint>,
    pub cells: Vec<CellResult>,
}

fn sha256_hex(values: &[f64]) -> String {
    let mut h = Sha256::new();
    for v in values {
        h.update(v.to_le_bytes());
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

fn build_dictionary(spec: &ExperimentSpec) -> Result<DMatrix<f64>> {
    match spec.dictionary {
        DictionaryKind::Gaussian => gen_gaussian_dictionary(spec.m, spec.n, spec.seed),
        DictionaryKind::CustomFile => {
            let path = spec
                .dictionary_path
                .as_ref()
                .ok_or_else(|| SblError::input("custom_file dictionary needs dictionary_path"))?;
            let f = crate::io::read_matrix(path)?;
            if (f.nrows(), f.ncols()) != (spec.m, spec.n) {
                return Err(SblError::input(format!(
                    "{}: expected a {}x{} dictionary, found {}x{}",
                    path.display(),
                    spec.m,
                    spec.n,
                    f.nrows(),
                    f.ncols()
                )));
            }
            Ok(f)
        }
        kind => gen_dictionary(kind, spec.m, spec.n),
    }
}

/// All data instances of the grid, in spec order (sparsity, noise, repetition).
pub fn generate_data(spec: &ExperimentSpec) -> Result<Vec<DataInstance>> {
    spec.validate()?;
    let dictionary = build_dictionary(spec)?;
    let dictionary_sha = sha256_hex(dictionary.as_slice());
    let mut out = Vec::new();
    for &s in &spec.sparsity_percents {
        for &noise in &spec.noise {
            for rep in 0..spec.repetitions {
                let seed = DataSeed {
                    seed: spec.seed,
                    sparsity_bits: s.to_bits(),
                    noise_key: noise.key(),
                    repetition: rep as u64,
                };
                let mut signal = gen_sparse_signal(spec.n, s, seed)?;
                if let Some(bound) = spec.amplitude_bound {
                    scale_to_unit_range(&mut signal, bound);
                }
                let (y, beta) = gen_observation(&dictionary, &signal, noise, seed)?;
                let reference = (spec.dictionary == DictionaryKind::Identity)
                    .then(|| denoising_reference(y.as_slice(), beta));
                let fingerprint = DataFingerprint {
                    seed: spec.seed,
                    sparsity_percent: s,
                    noise: noise.label(),
                    repetition: rep,
                    beta,
                    nonzeros: signal.iter().filter(|v| **v != 0.0).count(),
                    dictionary_sha256: dictionary_sha.clone(),
                    signal_sha256: sha256_hex(&signal),
                    observation_sha256: sha256_hex(y.as_slice()),
                };
                out.push(DataInstance {
                    sparsity_percent: s,
                    noise,
                    repetition: rep,
                    signal,
                    problem: ProblemInstance::new(dictionary.clone(), y, beta)?,
                    reference,
                    fingerprint,
                });
            }
        }
    }
    Ok(out)
}

/// Cells in deterministic order: data instance, then algorithm, then τ.
pub fn cell_keys(spec: &ExperimentSpec, data: &[DataInstance]) -> Vec<CellKey> {
    let mut keys = Vec::new();
    for (data_index, d) in data.iter().enumerate() {
        for &algorithm in &spec.algorithms {
            let taus: Vec<Option<f64>> = if algorithm == Algorithm::Amq {
                spec.taus.iter().map(|&t| Some(t)).collect()
            } else {
                vec![None]
            };
            for tau in taus {
                keys.push(CellKey {
                    algorithm,
                    tau,
                    data_index,
                    sparsity_percent: d.sparsity_percent,
                    noise: d.noise,
                    repetition: d.repetition,
                });
            }
        }
    }
    keys
}

fn log10_distance(gamma: &[f64], reference: &[f64]) -> f64 {
    gamma
        .iter()
        .zip(reference)
        .map(|(g, r)| (g - r) * (g - r))
        .sum::<f64>()
        .sqrt()
        .log10()
}

/// Solves one cell; failures are captured in the result.
pub fn run_cell(spec: &ExperimentSpec, key: CellKey, data: &DataInstance) -> CellResult {
    let config = AlgorithmConfig {
        algorithm: key.algorithm,
        tau: key.tau.unwrap_or(spec.config.tau),
        ..spec.config
    };
    let mut curve = data.reference.as_ref().map(|_| Vec::new());
    let gamma0 = HyperparamVector::ones(spec.n);
    let outcome = run_with_observer(&data.problem, &gamma0, &config, |_, g| {
        if let (Some(c), Some(r)) = (curve.as_mut(), data.reference.as_ref()) {
            c.push(log10_distance(g.values(), r));
        }
    });
    match outcome {
        Ok(mut out) => {
            if !spec.record_timing {
                for r in &mut out.trace.records {
                    r.elapsed_ms = 0.0;
                }
            }
            CellResult {
                key,
                config,
                summary: Some(out.summary(&config)),
                trace: Some(out.trace),
                error_curve: curve,
                failure: None,
            }
        }
        Err(e) => CellResult {
            key,
            config,
            trace: None,
            summary: None,
            error_curve: None,
            failure: Some(e.to_string()),
        },
    }
}

/// Runs every cell of the grid on up to `jobs` threads. Results come back
/// in [`cell_keys`] order regardless of completion order.
pub fn run_matrix(spec: &ExperimentSpec, jobs: usize) -> Result<ExperimentResult> {
    let data = generate_data(spec)?;
    let keys = cell_keys(spec, &data);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| SblError::Io(format!("cannot start worker pool: {e}")))?;
    let cells = pool.install(|| {
        keys.into_par_iter()
            .map(|key| {
                let d = &data[key.data_index];
                run_cell(spec, key, d)
            })
            .collect()
    });
    Ok(ExperimentResult {
        spec: spec.clone(),
        data: data.into_iter().map(|d| d.fingerprint).collect(),
        cells,
    })
}

/// Manifest entry for one cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellEntry {
    pub file: String,
    #[serde(default)]
    pub error_file: Option<String>,
    pub algorithm: Algorithm,
    #[serde(default)]
    pub tau: Option<f64>,
    pub series: String,
    pub sparsity_percent: f64,
    pub noise: String,
    pub repetition: usize,
    pub status: TerminationStatus,
    pub iterations: usize,
    #[serde(default)]
    pub final_objective: Option<f64>,
    pub active_count: usize,
    #[serde(default)]
    pub iterations_to_final: Option<usize>,
    #[serde(default)]
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub spec: ExperimentSpec,
    pub data: Vec<DataFingerprint>,
    pub cells: Vec<CellEntry>,
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path)
            .map_err(|e| SblError::input(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| SblError::input(format!("{}: bad manifest: {e}", path.display())))
    }
}

pub fn error_curve_csv(curve: &[f64]) -> String {
    let mut out = String::from(ERROR_CSV_HEADER);
    out.push('\n');
    for (k, v) in curve.iter().enumerate() {
        out.push_str(&format!("{k},{v}\n"));
    }
    out
}

/// Writes one trace CSV (plus an error-curve CSV for identity runs) per cell
/// and `manifest.json`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<Manifest> {
    fs::create_dir_all(dir)?;
    let dict = result.spec.dictionary;
    let mut entries = Vec::with_capacity(result.cells.len());
    for cell in &result.cells {
        let stem = cell.key.stem(dict);
        let file = format!("{stem}.csv");
        if let Some(trace) = &cell.trace {
            fs::write(dir.join(&file), trace.to_csv(result.spec.record_timing))?;
        }
        let error_file = match &cell.error_curve {
            Some(curve) => {
                let name = format!("{stem}_error.csv");
                fs::write(dir.join(&name), error_curve_csv(curve))?;
                Some(name)
            }
            None => None,
        };
        let summary = cell.summary.as_ref();
        entries.push(CellEntry {
            file,
            error_file,
            algorithm: cell.key.algorithm,
            tau: cell.key.tau,
            series: cell.key.series(),
            sparsity_percent: cell.key.sparsity_percent,
            noise: cell.key.noise.label(),
            repetition: cell.key.repetition,
            status: cell.status(),
            iterations: summary.map_or(0, |s| s.iterations),
            final_objective: summary.and_then(|s| s.final_objective),
            active_count: summary.map_or(0, |s| s.active_count),
            iterations_to_final: cell.iterations_to_final(),
            failure: cell.failure.clone(),
        });
    }
    let manifest = Manifest {
        spec: result.spec.clone(),
        data: result.data.clone(),
        cells: entries,
    };
    let text = serde_json::to_string_pretty(&manifest)
        .map_err(|e| SblError::Io(format!("cannot serialize manifest: {e}")))?;
    fs::write(dir.join(MANIFEST_FILE), text + "\n")?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_spec() -> ExperimentSpec {
        ExperimentSpec {
            m: 24,
            n: 24,
            sparsity_percents: vec![25.0],
            noise: vec![NoiseSpec::Beta(10.0)],
            taus: vec![1e-10, 1e-2],
            config: AlgorithmConfig {
                max_iters: 200,
                ..AlgorithmConfig::default()
            },
            repetitions: 2,
            ..ExperimentSpec::preset("denoising").unwrap()
        }
    }

    #[test]
    fn cell_names() {
        let key = CellKey {
            algorithm: Algorithm::Amq,
            tau: Some(1e-10),
            data_index: 0,
            sparsity_percent: 10.0,
            noise: NoiseSpec::Beta(0.1),
            repetition: 0,
        };
        assert_eq!(key.stem(DictionaryKind::Identity), "amq_identity_10_b0.1_1e-10_0");
        assert_eq!(key.series(), "amq_tau1e-10");
        let em = CellKey {
            algorithm: Algorithm::Em,
            tau: None,
            noise: NoiseSpec::SnrDb(20.0),
            ..key
        };
        assert_eq!(em.stem(DictionaryKind::PartialDct), "em_partial_dct_10_snr20_na_0");
    }

    #[test]
    fn grid_shape_and_order() {
        let spec = small_spec();
        let res = run_matrix(&spec, 1).unwrap();
        // 2 reps × (em, mk, cb, 2 × amq)
        assert_eq!(res.cells.len(), 10);
        assert_eq!(res.data.len(), 2);
        assert_ne!(res.data[0].signal_sha256, res.data[1].signal_sha256);
        assert_eq!(res.cells[0].key.algorithm, Algorithm::Em);
        assert_eq!(res.cells[4].key.tau, Some(1e-2));
        for c in &res.cells {
            assert!(c.error_curve.is_some());
            assert_eq!(
                c.error_curve.as_ref().unwrap().len(),
                c.trace.as_ref().unwrap().records.len()
            );
        }
    }

    #[test]
    fn outputs_are_reproducible() {
        let spec = small_spec();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_outputs(&run_matrix(&spec, 1).unwrap(), a.path()).unwrap();
        write_outputs(&run_matrix(&spec, 2).unwrap(), b.path()).unwrap();
        let mut names: Vec<_> = fs::read_dir(a.path())
            .unwrap()
            .map(|e| e.unwrap().file_name())
            .collect();
        names.sort();
        assert_eq!(names.len(), 10 + 10 + 1);
        for name in names {
            assert_eq!(
                fs::read(a.path().join(&name)).unwrap(),
                fs::read(b.path().join(&name)).unwrap(),
                "{name:?}"
            );
        }
        let m = Manifest::load(a.path()).unwrap();
        assert_eq!(m.cells.len(), 10);
    }
}
