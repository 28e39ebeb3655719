use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use ancer::certify::{certify_dataset, CertifyConfig};
use ancer::harness::data::{generate_radial_dataset, load_csv, write_csv};
use ancer::harness::{acr, certified_accuracy_curve, factor_histograms, find_witness_delta,
    report_regions, superset_stats};
use ancer::nn::{load_model, save_model, train_classifier, TrainConfig};
use ancer::optimize::{optimize_ancer, optimize_isotropic, OptimizerConfig};
use ancer::report::{read_theta_csv, write_theta_csv, CertificationReport};
use ancer::smoothing::{SmoothingKind, SmoothingSpec};
use ancer::{Error, Result};

#[derive(Parser)]
#[command(name = "ancer", version, about = "Certified robustness via randomized smoothing \
with per-sample anisotropic noise")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Isotropic,
    Ancer,
}

fn parse_noise_kind(s: &str) -> std::result::Result<SmoothingKind, String> {
    match s {
        "gaussian" => Ok(SmoothingKind::Gaussian),
        "uniform" => Ok(SmoothingKind::Uniform),
        other => Err(format!("unknown kind {other:?} (expected gaussian or uniform)")),
    }
}

fn parse_any_kind(s: &str) -> std::result::Result<SmoothingKind, String> {
    SmoothingKind::parse(s).map_err(|e| e.to_string())
}

#[derive(Subcommand)]
enum Cmd {
    /// Generate the two-class radial toy dataset as CSV.
    GenData {
        #[arg(long)]
        count: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train an MLP classifier on a CSV dataset and save it.
    Train {
        #[arg(long)]
        data: PathBuf,
        /// Layer widths, input to output, e.g. 2,32,32,2.
        #[arg(long, value_delimiter = ',')]
        arch: Vec<usize>,
        #[arg(long, default_value_t = 200)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Optimize per-sample smoothing scales and write a theta file.
    Optimize {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, value_parser = parse_noise_kind)]
        kind: SmoothingKind,
        #[arg(long, value_enum)]
        mode: Mode,
        #[arg(long, default_value_t = 0.5)]
        init_sigma: f64,
        /// Optional key=value file overriding optimizer settings
        /// (iterations, samples_per_iter, kappa, learning_rate,
        /// adam_beta1, adam_beta2, adam_eps, seed).
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out_thetas: PathBuf,
    },
    /// Certify every sample under the given theta file and write a report.
    Certify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        thetas: PathBuf,
        #[arg(long, value_parser = parse_any_kind)]
        kind: SmoothingKind,
        #[arg(long, default_value_t = 100)]
        n0: usize,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 0.001)]
        alpha: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print certified accuracy at the given radii plus summary metrics.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long, value_delimiter = ',')]
        radii: Vec<f64>,
    },
    /// Compare two certification reports (a as candidate, b as baseline).
    Compare {
        #[arg(long = "a")]
        a: PathBuf,
        #[arg(long = "b")]
        b: PathBuf,
    },
}

fn run(cmd: Cmd) -> Result<()> {
    match cmd {
        Cmd::GenData {
            count,
            noise,
            seed,
            out,
        } => {
            let data = generate_radial_dataset(count, noise, seed)?;
            write_csv(&out, &data)?;
            println!("wrote {} samples to {}", data.len(), out.display());
        }
        Cmd::Train {
            data,
            arch,
            epochs,
            lr,
            seed,
            out,
        } => {
            let dataset = load_csv(&data)?;
            let cfg = TrainConfig {
                lr,
                epochs,
                seed,
                ..TrainConfig::default()
            };
            let (model, accuracy) = train_classifier(&dataset, &arch, &cfg)?;
            save_model(&model, &out)?;
            println!(
                "trained on {} samples, train accuracy {accuracy:.4}, model saved to {}",
                dataset.len(),
                out.display()
            );
        }
        Cmd::Optimize {
            model,
            data,
            kind,
            mode,
            init_sigma,
            config,
            out_thetas,
        } => {
            let model = load_model(&model)?;
            let dataset = load_csv(&data)?;
            let base = match mode {
                Mode::Isotropic => OptimizerConfig::default_isotropic(),
                Mode::Ancer => OptimizerConfig::default_ancer(),
            };
            let cfg = match &config {
                Some(path) => base.apply_file(path)?,
                None => base,
            };
            let specs: Vec<SmoothingSpec> = (0..dataset.len())
                .into_par_iter()
                .map(|i| {
                    let x = &dataset.inputs[i];
                    match mode {
                        Mode::Isotropic => {
                            let (sigma, _) =
                                optimize_isotropic(&model, x, kind, init_sigma, &cfg, i as u64)?;
                            SmoothingSpec::isotropic(kind, dataset.dim, sigma)
                        }
                        Mode::Ancer => {
                            // The anisotropic ascent starts from a per-sample
                            // isotropic optimum, found with stock settings.
                            let (sigma, _) = optimize_isotropic(
                                &model,
                                x,
                                kind,
                                init_sigma,
                                &OptimizerConfig::default_isotropic(),
                                i as u64,
                            )?;
                            optimize_ancer(&model, x, kind, sigma, &cfg, i as u64)
                        }
                    }
                })
                .collect::<Result<_>>()?;
            write_theta_csv(&out_thetas, &specs)?;
            println!(
                "optimized {} smoothing specs, thetas saved to {}",
                specs.len(),
                out_thetas.display()
            );
        }
        Cmd::Certify {
            model,
            data,
            thetas,
            kind,
            n0,
            n,
            alpha,
            seed,
            out,
        } => {
            let model = load_model(&model)?;
            let dataset = load_csv(&data)?;
            let specs = read_theta_csv(&thetas)?;
            for (i, spec) in specs.iter().enumerate() {
                if spec.kind() != kind {
                    return Err(Error::InvalidInput(format!(
                        "theta row {i} has kind {}, expected {}",
                        spec.kind().name(),
                        kind.name()
                    )));
                }
            }
            let cfg = CertifyConfig { n0, n, alpha, seed };
            let report = certify_dataset(&model, &dataset, &specs, &cfg)?;
            report.write_csv(&out)?;
            let clean = certified_accuracy_curve(&report, &[0.0], false)?[0].1;
            let abstained = report.rows.iter().filter(|r| r.abstain()).count();
            println!(
                "certified {} samples ({} abstained, clean accuracy {clean:.4}), report saved to {}",
                report.rows.len(),
                abstained,
                out.display()
            );
        }
        Cmd::Report { input, radii } => {
            let report = CertificationReport::read_csv(&input)?;
            let mut radii = radii;
            radii.sort_by(f64::total_cmp);
            let curve = certified_accuracy_curve(&report, &radii, false)?;
            let proxy = certified_accuracy_curve(&report, &radii, true)?;
            println!("radius,accuracy,accuracy_proxy");
            for (i, &r) in radii.iter().enumerate() {
                println!("{r:.4},{:.6},{:.6}", curve[i].1, proxy[i].1);
            }
            let abstained = report.rows.iter().filter(|r| r.abstain()).count();
            println!("rows={}", report.rows.len());
            println!("abstain_rate={:.6}", abstained as f64 / report.rows.len().max(1) as f64);
            println!("acr={:.6}", acr(&report, false)?);
            println!("acr_proxy={:.6}", acr(&report, true)?);
        }
        Cmd::Compare { a, b } => {
            let report_a = CertificationReport::read_csv(&a)?;
            let report_b = CertificationReport::read_csv(&b)?;
            let stats = superset_stats(&report_a, &report_b)?;
            println!("rows={}", stats.rows);
            println!("superset_radius_pct={:.4}", stats.radius_pct);
            println!("superset_region_pct={:.4}", stats.region_pct);
            println!("superset_region_undetermined={}", stats.region_undetermined);
            println!("acr_a={:.6}", acr(&report_a, false)?);
            println!("acr_b={:.6}", acr(&report_b, false)?);
            println!("acr_proxy_a={:.6}", acr(&report_a, true)?);
            println!("acr_proxy_b={:.6}", acr(&report_b, true)?);
            let factors = factor_histograms(&report_b, &report_a, 20)?;
            println!("median_theta_bar_b={:.6}", factors.median_theta_bar);
            println!("median_min_theta_a={:.6}", factors.median_min_theta);
            println!("median_gap_b={:.6}", factors.median_gap_iso);
            println!("median_gap_a={:.6}", factors.median_gap_ancer);
            let regions_a = report_regions(&report_a)?;
            let regions_b = report_regions(&report_b)?;
            let mut witnesses = 0usize;
            for (ra, rb) in regions_a.iter().zip(&regions_b) {
                if find_witness_delta(ra, rb)?.is_some() {
                    witnesses += 1;
                }
            }
            println!("witness_count={witnesses}");
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(err) = run(cli.cmd) {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
