//! End-to-end experiment driver: data, model, per-sample scale optimization,
//! certification of the fixed / isotropic / anisotropic variants, and the
//! emitted report CSVs plus a flat metrics summary.

use std::fmt::Write as _;
use std::fs;
use std::fs::File;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::certify::{certify_dataset, CertifyConfig};
use crate::error::{Error, Result};
use crate::harness::data::{generate_radial_dataset, load_csv};
use crate::harness::metrics::{
    acr, certified_accuracy_curve, factor_histograms, find_witness_delta, report_regions,
    superset_stats, FactorHistograms, SupersetStats,
};
use crate::nn::{load_model, save_model, train_classifier, Dataset, TrainConfig};
use crate::optimize::{optimize_ancer, optimize_isotropic, OptimizerConfig};
use crate::report::{write_theta_csv, CertificationReport};
use crate::smoothing::{SmoothingKind, SmoothingSpec};

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    /// CSV dataset to load; a radial toy set is generated when absent.
    pub data_path: Option<PathBuf>,
    pub train_count: usize,
    pub test_count: usize,
    pub noise: f64,
    pub data_seed: u64,

    /// Pretrained model to load when `train` is false.
    pub model_path: Option<PathBuf>,
    pub train: bool,
    pub arch: Vec<usize>,
    pub epochs: usize,
    pub train_lr: f64,
    pub train_batch: usize,
    pub train_seed: u64,

    pub kind: SmoothingKind,
    /// Fixed-variant scale and the per-sample optimizer's starting point.
    pub init_sigma: f64,
    pub isotropic: OptimizerConfig,
    pub ancer: OptimizerConfig,
    pub certify: CertifyConfig,

    pub hist_bins: usize,
    pub out_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            data_path: None,
            train_count: 400,
            test_count: 200,
            noise: 0.05,
            data_seed: 7,
            model_path: None,
            train: true,
            arch: vec![2, 32, 32, 2],
            epochs: 200,
            train_lr: 0.08,
            train_batch: 32,
            train_seed: 7,
            kind: SmoothingKind::Gaussian,
            init_sigma: 0.5,
            // Slow isotropic descent: the scale settles above the radius
            // optimum, so the anisotropic floor projection pins symmetric
            // points to the exact isotropic solution instead of letting
            // end-of-run gradient noise push past the optimum.
            isotropic: OptimizerConfig {
                learning_rate: 0.005,
                ..OptimizerConfig::default_isotropic()
            },
            // Extra draws cut the gradient noise, the long momentum memory
            // keeps pinned axes pinned through the final step instead of
            // letting a late noise spike lift them off the floor, and the
            // smaller step bounds what an excursion can cost.
            ancer: OptimizerConfig {
                samples_per_iter: 1000,
                adam_beta1: 0.98,
                learning_rate: 0.005,
                ..OptimizerConfig::default_ancer()
            },
            certify: CertifyConfig::default(),
            hist_bins: 20,
            out_dir: PathBuf::from("experiment_out"),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.train && self.model_path.is_none() {
            return Err(Error::Config(
                "model path required when training is disabled".into(),
            ));
        }
        if self.train && self.train_count == 0 {
            return Err(Error::Config("training needs at least one sample".into()));
        }
        if self.test_count == 0 {
            return Err(Error::Config("nothing to certify: test_count is 0".into()));
        }
        if !(self.init_sigma > 0.0 && self.init_sigma.is_finite()) {
            return Err(Error::Config(format!(
                "init_sigma {} must be positive",
                self.init_sigma
            )));
        }
        if self.hist_bins == 0 {
            return Err(Error::Config("hist_bins must be at least 1".into()));
        }
        self.isotropic.validate()?;
        self.ancer.validate()?;
        Ok(())
    }

    /// Canonical flat serialization of everything that determines the run.
    /// `out_dir` is excluded so reruns into different directories fingerprint
    /// identically.
    pub fn canonical_string(&self) -> String {
        let mut s = String::new();
        let path_str = |p: &Option<PathBuf>| {
            p.as_ref()
                .map_or_else(|| "-".to_string(), |p| p.display().to_string())
        };
        let arch: Vec<String> = self.arch.iter().map(usize::to_string).collect();
        let _ = writeln!(s, "data_path={}", path_str(&self.data_path));
        let _ = writeln!(s, "train_count={}", self.train_count);
        let _ = writeln!(s, "test_count={}", self.test_count);
        let _ = writeln!(s, "noise={:.16e}", self.noise);
        let _ = writeln!(s, "data_seed={}", self.data_seed);
        let _ = writeln!(s, "model_path={}", path_str(&self.model_path));
        let _ = writeln!(s, "train={}", u8::from(self.train));
        let _ = writeln!(s, "arch={}", arch.join("x"));
        let _ = writeln!(s, "epochs={}", self.epochs);
        let _ = writeln!(s, "train_lr={:.16e}", self.train_lr);
        let _ = writeln!(s, "train_batch={}", self.train_batch);
        let _ = writeln!(s, "train_seed={}", self.train_seed);
        let _ = writeln!(s, "kind={}", self.kind.name());
        let _ = writeln!(s, "init_sigma={:.16e}", self.init_sigma);
        for (prefix, cfg) in [("iso", &self.isotropic), ("ancer", &self.ancer)] {
            let _ = writeln!(s, "{prefix}_iterations={}", cfg.iterations);
            let _ = writeln!(s, "{prefix}_samples_per_iter={}", cfg.samples_per_iter);
            let _ = writeln!(s, "{prefix}_kappa={:.16e}", cfg.kappa);
            let _ = writeln!(s, "{prefix}_learning_rate={:.16e}", cfg.learning_rate);
            let _ = writeln!(s, "{prefix}_adam_beta1={:.16e}", cfg.adam_beta1);
            let _ = writeln!(s, "{prefix}_adam_beta2={:.16e}", cfg.adam_beta2);
            let _ = writeln!(s, "{prefix}_adam_eps={:.16e}", cfg.adam_eps);
            let _ = writeln!(s, "{prefix}_seed={}", cfg.seed);
        }
        let _ = writeln!(s, "certify_n0={}", self.certify.n0);
        let _ = writeln!(s, "certify_n={}", self.certify.n);
        let _ = writeln!(s, "certify_alpha={:.16e}", self.certify.alpha);
        let _ = writeln!(s, "certify_seed={}", self.certify.seed);
        let _ = writeln!(s, "hist_bins={}", self.hist_bins);
        s
    }

    pub fn fingerprint(&self) -> u64 {
        fnv1a64(self.canonical_string().as_bytes())
    }
}

#[derive(Clone, Debug)]
pub struct ExperimentOutcome {
    pub fingerprint: u64,
    /// Training-set accuracy; absent when the model was loaded.
    pub train_accuracy: Option<f64>,
    pub fixed: CertificationReport,
    pub isotropic: CertificationReport,
    pub ancer: CertificationReport,
    /// ANCER vs the per-sample isotropic baseline.
    pub superset: SupersetStats,
    pub factors: FactorHistograms,
    pub witness_count: usize,
    /// Exact text written to metrics_summary.txt.
    pub summary: String,
}

fn subset(data: &Dataset, start: usize, count: usize) -> Result<Dataset> {
    Dataset::new(
        data.inputs[start..start + count].to_vec(),
        data.labels[start..start + count].to_vec(),
        data.num_classes,
    )
}

fn abstain_rate(report: &CertificationReport) -> f64 {
    if report.rows.is_empty() {
        return 0.0;
    }
    report.rows.iter().filter(|r| r.abstain()).count() as f64 / report.rows.len() as f64
}

fn write_curves(
    path: &Path,
    reports: [(&str, &CertificationReport); 3],
    use_proxy: bool,
) -> Result<()> {
    let max_radius = reports
        .iter()
        .flat_map(|(_, r)| r.rows.iter())
        .map(|row| if use_proxy { row.proxy_radius } else { row.iso_radius })
        .fold(0.0f64, f64::max);
    let step = 0.01;
    let points = (max_radius / step).ceil() as usize + 2;
    let radii: Vec<f64> = (0..points).map(|i| i as f64 * step).collect();
    let curves: Vec<Vec<(f64, f64)>> = reports
        .iter()
        .map(|(_, r)| certified_accuracy_curve(r, &radii, use_proxy))
        .collect::<Result<_>>()?;
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(
        w,
        "radius,{},{},{}",
        reports[0].0, reports[1].0, reports[2].0
    )?;
    for (i, &r) in radii.iter().enumerate() {
        writeln!(
            w,
            "{:.16e},{:.16e},{:.16e},{:.16e}",
            r, curves[0][i].1, curves[1][i].1, curves[2][i].1
        )?;
    }
    w.flush()?;
    Ok(())
}

fn write_witnesses(path: &Path, dim: usize, witnesses: &[(usize, Vec<f64>)]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    let mut header = String::from("idx");
    for i in 0..dim {
        let _ = write!(header, ",delta_{i}");
    }
    writeln!(w, "{header}")?;
    for (idx, delta) in witnesses {
        let mut line = idx.to_string();
        for v in delta {
            let _ = write!(line, ",{v:.16e}");
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

/// Runs the full pipeline and leaves all artifacts under `cfg.out_dir`:
/// `model.txt` (when trained), three theta files, three report CSVs,
/// accuracy curves, factor CSVs, witness perturbations, and
/// `metrics_summary.txt`. Everything except the report time_ms column is a
/// pure function of the config.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    cfg.validate()?;
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::stage("report", e.into()))?;

    let needed = cfg.train_count + cfg.test_count;
    let full = match &cfg.data_path {
        Some(p) => load_csv(p),
        None => generate_radial_dataset(needed, cfg.noise, cfg.data_seed),
    }
    .map_err(|e| Error::stage("data", e))?;
    if full.len() < needed {
        return Err(Error::stage(
            "data",
            Error::InvalidInput(format!(
                "dataset has {} samples, need {needed}",
                full.len()
            )),
        ));
    }
    let train_data = subset(&full, 0, cfg.train_count).map_err(|e| Error::stage("data", e))?;
    let test_data =
        subset(&full, cfg.train_count, cfg.test_count).map_err(|e| Error::stage("data", e))?;

    let (model, train_accuracy) = if cfg.train {
        let train_cfg = TrainConfig {
            lr: cfg.train_lr,
            epochs: cfg.epochs,
            batch: cfg.train_batch,
            seed: cfg.train_seed,
        };
        let (model, acc) = train_classifier(&train_data, &cfg.arch, &train_cfg)
            .map_err(|e| Error::stage("train", e))?;
        save_model(&model, &cfg.out_dir.join("model.txt"))
            .map_err(|e| Error::stage("train", e))?;
        (model, Some(acc))
    } else {
        let path = cfg.model_path.as_ref().expect("validated");
        (
            load_model(path).map_err(|e| Error::stage("model", e))?,
            None,
        )
    };
    if model.input_dim != test_data.dim {
        return Err(Error::stage(
            "model",
            Error::ShapeMismatch {
                expected: test_data.dim,
                got: model.input_dim,
            },
        ));
    }

    let dim = test_data.dim;
    let fixed_spec = SmoothingSpec::isotropic(cfg.kind, dim, cfg.init_sigma)
        .map_err(|e| Error::stage("optimize", e))?;
    let fixed_specs = vec![fixed_spec; test_data.len()];
    let optimized: Vec<(f64, SmoothingSpec)> = (0..test_data.len())
        .into_par_iter()
        .map(|i| {
            let (sigma, _) = optimize_isotropic(
                &model,
                &test_data.inputs[i],
                cfg.kind,
                cfg.init_sigma,
                &cfg.isotropic,
                i as u64,
            )?;
            let spec = optimize_ancer(
                &model,
                &test_data.inputs[i],
                cfg.kind,
                sigma,
                &cfg.ancer,
                i as u64,
            )?;
            Ok((sigma, spec))
        })
        .collect::<Result<_>>()
        .map_err(|e| Error::stage("optimize", e))?;
    let iso_specs: Vec<SmoothingSpec> = optimized
        .iter()
        .map(|(sigma, _)| SmoothingSpec::isotropic(cfg.kind, dim, *sigma))
        .collect::<Result<_>>()
        .map_err(|e| Error::stage("optimize", e))?;
    let ancer_specs: Vec<SmoothingSpec> = optimized.into_iter().map(|(_, s)| s).collect();
    for (name, specs) in [
        ("thetas_fixed.csv", &fixed_specs),
        ("thetas_isotropic.csv", &iso_specs),
        ("thetas_ancer.csv", &ancer_specs),
    ] {
        write_theta_csv(&cfg.out_dir.join(name), specs).map_err(|e| Error::stage("optimize", e))?;
    }

    let fixed = certify_dataset(&model, &test_data, &fixed_specs, &cfg.certify)
        .map_err(|e| Error::stage("certify", e))?;
    let isotropic = certify_dataset(&model, &test_data, &iso_specs, &cfg.certify)
        .map_err(|e| Error::stage("certify", e))?;
    let ancer = certify_dataset(&model, &test_data, &ancer_specs, &cfg.certify)
        .map_err(|e| Error::stage("certify", e))?;

    let report_stage = |e: Error| Error::stage("report", e);
    for (name, report) in [
        ("report_fixed.csv", &fixed),
        ("report_isotropic.csv", &isotropic),
        ("report_ancer.csv", &ancer),
    ] {
        report.write_csv(&cfg.out_dir.join(name)).map_err(report_stage)?;
    }
    let variants = [
        ("fixed", &fixed),
        ("isotropic", &isotropic),
        ("ancer", &ancer),
    ];
    write_curves(&cfg.out_dir.join("curve_radius.csv"), variants, false)
        .map_err(report_stage)?;
    write_curves(&cfg.out_dir.join("curve_proxy.csv"), variants, true).map_err(report_stage)?;

    let superset = superset_stats(&ancer, &isotropic).map_err(report_stage)?;
    let factors = factor_histograms(&isotropic, &ancer, cfg.hist_bins).map_err(report_stage)?;
    factors.write_csv(&cfg.out_dir, "factors").map_err(report_stage)?;

    let ancer_regions = report_regions(&ancer).map_err(report_stage)?;
    let iso_regions = report_regions(&isotropic).map_err(report_stage)?;
    let mut witnesses = Vec::new();
    for i in 0..ancer_regions.len() {
        if let Some(delta) =
            find_witness_delta(&ancer_regions[i], &iso_regions[i]).map_err(report_stage)?
        {
            witnesses.push((ancer.rows[i].idx, delta));
        }
    }
    write_witnesses(&cfg.out_dir.join("witnesses.csv"), dim, &witnesses)
        .map_err(report_stage)?;

    let mut summary = String::new();
    let _ = writeln!(summary, "config_fingerprint={:#018x}", cfg.fingerprint());
    let _ = writeln!(summary, "rows={}", cfg.test_count);
    if let Some(acc) = train_accuracy {
        let _ = writeln!(summary, "train_accuracy={acc:.16e}");
    }
    for (name, report) in variants {
        let clean = certified_accuracy_curve(report, &[0.0], false).map_err(report_stage)?[0].1;
        let _ = writeln!(summary, "clean_accuracy_{name}={clean:.16e}");
        let _ = writeln!(summary, "abstain_rate_{name}={:.16e}", abstain_rate(report));
        let _ = writeln!(
            summary,
            "acr_{name}={:.16e}",
            acr(report, false).map_err(report_stage)?
        );
        let _ = writeln!(
            summary,
            "acr_proxy_{name}={:.16e}",
            acr(report, true).map_err(report_stage)?
        );
    }
    let _ = writeln!(summary, "superset_radius_pct={:.16e}", superset.radius_pct);
    let _ = writeln!(summary, "superset_region_pct={:.16e}", superset.region_pct);
    let _ = writeln!(
        summary,
        "superset_region_undetermined={}",
        superset.region_undetermined
    );
    let _ = writeln!(summary, "median_theta_bar={:.16e}", factors.median_theta_bar);
    let _ = writeln!(summary, "median_min_theta={:.16e}", factors.median_min_theta);
    let _ = writeln!(summary, "median_gap_iso={:.16e}", factors.median_gap_iso);
    let _ = writeln!(summary, "median_gap_ancer={:.16e}", factors.median_gap_ancer);
    let _ = writeln!(summary, "witness_count={}", witnesses.len());
    fs::write(cfg.out_dir.join("metrics_summary.txt"), &summary)
        .map_err(|e| Error::stage("report", e.into()))?;

    Ok(ExperimentOutcome {
        fingerprint: cfg.fingerprint(),
        train_accuracy,
        fixed,
        isotropic,
        ancer,
        superset,
        factors,
        witness_count: witnesses.len(),
        summary,
    })
}
