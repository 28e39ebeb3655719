//! Experiment plumbing: datasets, metrics over certification reports, and
//! the end-to-end pipeline driver.

pub mod data;
pub mod experiment;
pub mod metrics;

pub use data::{generate_radial_dataset, load_csv, load_idx, write_csv};
pub use experiment::{fnv1a64, run_experiment, ExperimentConfig, ExperimentOutcome};
pub use metrics::{
    acr, certified_accuracy_curve, factor_histograms, find_witness_delta, report_regions,
    superset_stats, FactorHistograms, FactorRow, HistogramBin, SupersetStats,
};
