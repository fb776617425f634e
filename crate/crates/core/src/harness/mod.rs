//! Synthetic data generation and the experiment grid runner.

mod data;
mod matrix;
mod panels;
mod spec;

pub use data::{
    denoising_reference, gen_dictionary, gen_gaussian_dictionary, gen_observation,
    gen_sparse_signal, partial_dct, scale_to_unit_range, support_size, DataSeed, DictionaryKind,
    NoiseSpec, STREAM_DICTIONARY, STREAM_NOISE, STREAM_SIGNAL, STREAM_SUPPORT,
};
pub use matrix::{
    cell_keys, error_curve_csv, generate_data, run_cell, run_matrix, write_outputs, CellEntry,
    CellKey, CellResult, DataFingerprint, DataInstance, ExperimentResult, Manifest,
    ERROR_CSV_HEADER, MANIFEST_FILE,
};
pub use panels::{emit_panels, panel_name, PanelReport};
pub use spec::{ExperimentSpec, PRESETS, TAU_SWEEP};
