//! Runs the default end-to-end toy experiment and prints the metric summary.

use std::path::PathBuf;

use ancer::harness::{run_experiment, ExperimentConfig};

fn main() {
    let out_dir = std::env::args()
        .nth(1)
        .map_or_else(|| PathBuf::from("toy_out"), PathBuf::from);
    let cfg = ExperimentConfig {
        out_dir,
        ..ExperimentConfig::default()
    };
    match run_experiment(&cfg) {
        Ok(outcome) => print!("{}", outcome.summary),
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
