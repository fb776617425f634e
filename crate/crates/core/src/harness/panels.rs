//! Reshapes an experiment output directory into one CSV per figure panel.
//!
//! A panel is one data instance (sparsity, noise, repetition); its columns
//! are `iter` plus one series per algorithm (and τ). Identity-dictionary
//! panels plot `log10 ‖γᵏ − γ*‖`, all others the objective.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use super::data::DictionaryKind;
use super::matrix::{CellEntry, Manifest, ERROR_CSV_HEADER};
use crate::algorithms::{ConvergenceTrace, TRACE_CSV_HEADER};
use crate::error::{Result, SblError};

#[derive(Debug, Clone, PartialEq)]
pub struct PanelReport {
    pub name: String,
    pub path: PathBuf,
    pub series: Vec<String>,
    /// One message per series that could not be loaded.
    pub warnings: Vec<String>,
}

pub fn panel_name(dictionary: DictionaryKind, cell: &CellEntry) -> String {
    format!(
        "panel_{}_{}_{}_{}",
        dictionary.as_str(),
        cell.sparsity_percent,
        cell.noise,
        cell.repetition
    )
}

fn load_series(dir: &Path, cell: &CellEntry, identity: bool) -> Result<Vec<f64>> {
    if identity {
        let name = cell
            .error_file
            .as_ref()
            .ok_or_else(|| SblError::input(format!("{}: no error curve recorded", cell.file)))?;
        let text = fs::read_to_string(dir.join(name))
            .map_err(|e| SblError::input(format!("{name}: {e}")))?;
        let mut lines = text.lines();
        if lines.next() != Some(ERROR_CSV_HEADER) {
            return Err(SblError::input(format!("{name}: unexpected header")));
        }
        lines
            .filter(|l| !l.trim().is_empty())
            .map(|l| {
                l.split(',')
                    .nth(1)
                    .and_then(|v| v.trim().parse::<f64>().ok())
                    .ok_or_else(|| SblError::input(format!("{name}: bad line '{l}'")))
            })
            .collect()
    } else {
        let text = fs::read_to_string(dir.join(&cell.file))
            .map_err(|e| SblError::input(format!("{}: {e}", cell.file)))?;
        if !text.starts_with(TRACE_CSV_HEADER) {
            return Err(SblError::input(format!("{}: unexpected header", cell.file)));
        }
        let trace = ConvergenceTrace::from_csv(&text, cell.status)?;
        Ok(trace.objectives().collect())
    }
}

/// Writes the panel CSVs of the experiment in `dir` into `out_dir`.
/// `only` restricts output to the panel with that name. Cells whose files
/// are missing leave an empty column and a warning.
pub fn emit_panels(dir: &Path, out_dir: &Path, only: Option<&str>) -> Result<Vec<PanelReport>> {
    let manifest = Manifest::load(dir)?;
    let dictionary = manifest.spec.dictionary;
    let identity = dictionary == DictionaryKind::Identity;

    let mut panels: BTreeMap<(usize, String), Vec<&CellEntry>> = BTreeMap::new();
    let mut order = Vec::new();
    for cell in &manifest.cells {
        let name = panel_name(dictionary, cell);
        if only.is_some_and(|o| o != name) {
            continue;
        }
        if !order.contains(&name) {
            order.push(name.clone());
        }
        let pos = order.iter().position(|n| *n == name).unwrap();
        panels.entry((pos, name)).or_default().push(cell);
    }
    if panels.is_empty() {
        return Err(SblError::input(match only {
            Some(o) => format!("no panel named '{o}' in {}", dir.display()),
            None => format!("manifest in {} lists no cells", dir.display()),
        }));
    }

    fs::create_dir_all(out_dir)?;
    let mut reports = Vec::new();
    for ((_, name), cells) in panels {
        let mut warnings = Vec::new();
        let mut columns = Vec::new();
        for cell in &cells {
            let values = match load_series(dir, cell, identity) {
                Ok(v) => v,
                Err(e) => {
                    warnings.push(format!("{name}: series {} missing ({e})", cell.series));
                    Vec::new()
                }
            };
            columns.push((cell.series.clone(), values));
        }
        let rows = columns.iter().map(|(_, v)| v.len()).max().unwrap_or(0);
        let mut out = String::from("iter");
        for (series, _) in &columns {
            out.push(',');
            out.push_str(series);
        }
        out.push('\n');
        for k in 0..rows {
            out.push_str(&k.to_string());
            for (_, v) in &columns {
                out.push(',');
                if let Some(x) = v.get(k) {
                    out.push_str(&x.to_string());
                }
            }
            out.push('\n');
        }
        let path = out_dir.join(format!("{name}.csv"));
        fs::write(&path, out)?;
        reports.push(PanelReport {
            name,
            path,
            series: columns.into_iter().map(|(s, _)| s).collect(),
            warnings,
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::algorithms::AlgorithmConfig;
    use crate::harness::{run_matrix, write_outputs, ExperimentSpec, NoiseSpec};

    fn spec(preset: &str, m: usize, n: usize) -> ExperimentSpec {
        ExperimentSpec {
            m,
            n,
            sparsity_percents: vec![20.0],
            noise: vec![NoiseSpec::Beta(1.0), NoiseSpec::Beta(10.0)],
            config: AlgorithmConfig {
                max_iters: 100,
                ..AlgorithmConfig::default()
            },
            ..ExperimentSpec::preset(preset).unwrap()
        }
    }

    #[test]
    fn identity_panels_hold_error_curves() {
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&run_matrix(&spec("denoising", 20, 20), 1).unwrap(), dir.path()).unwrap();
        let out = dir.path().join("panels");
        let reports = emit_panels(dir.path(), &out, None).unwrap();
        assert_eq!(reports.len(), 2);
        assert_eq!(reports[0].series, vec!["em", "mk", "cb", "amq_tau1e-10"]);
        assert!(reports.iter().all(|r| r.warnings.is_empty()));
        let text = fs::read_to_string(&reports[0].path).unwrap();
        assert!(text.starts_with("iter,em,mk,cb,amq_tau1e-10\n0,"));
    }

    #[test]
    fn missing_cells_leave_gaps() {
        let dir = tempfile::tempdir().unwrap();
        let m = write_outputs(&run_matrix(&spec("fourier", 8, 16), 1).unwrap(), dir.path()).unwrap();
        fs::remove_file(dir.path().join(&m.cells[1].file)).unwrap();
        let name = panel_name(DictionaryKind::PartialDct, &m.cells[0]);
        let reports = emit_panels(dir.path(), dir.path(), Some(&name)).unwrap();
        assert_eq!(reports.len(), 1);
        assert_eq!(reports[0].warnings.len(), 1);
        let text = fs::read_to_string(&reports[0].path).unwrap();
        assert!(text.lines().nth(1).unwrap().contains(",,"));
    }

    #[test]
    fn empty_directory_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        assert!(matches!(
            emit_panels(dir.path(), dir.path(), None),
            Err(SblError::Input(_))
        ));
    }
}
