//! Monte Carlo certification: pick the top class from a small selection
//! round, lower-bound its probability with a fresh estimation round, and
//! turn that bound into a certified region around the input.

use std::time::Instant;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::{Classifier, Dataset, Scratch};
use crate::regions::Region;
use crate::report::{CertificationReport, ReportRow};
use crate::smoothing::{gmm_effective_matrix, SmoothingKind, SmoothingSpec};
use crate::stats::{clopper_pearson_lower, std_normal_icdf, RngStream, INV_SQRT_2PI};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CertifyConfig {
    /// Draws used to select the candidate class.
    pub n0: usize,
    /// Fresh draws used to bound its probability.
    pub n: usize,
    /// One-sided confidence level of the bound.
    pub alpha: f64,
    pub seed: u64,
}

impl Default for CertifyConfig {
    fn default() -> Self {
        CertifyConfig {
            n0: 100,
            n: 100_000,
            alpha: 0.001,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Certificate {
    /// `None` means the certifier abstained (the bound did not clear 1/2).
    pub predicted: Option<usize>,
    pub p_lower: f64,
    /// Certified right-hand side r of the region inequality; 0 on abstain.
    pub gap: f64,
    pub region: Region,
    pub selection_counts: Vec<usize>,
    /// Estimation-round count of the selected class.
    pub k: u64,
    pub spec: SmoothingSpec,
}

/// Hard-classifier vote counts over `m` perturbed draws.
pub fn predict_counts(
    model: &Classifier,
    x: &[f64],
    spec: &SmoothingSpec,
    m: usize,
    rng: &mut RngStream,
) -> Result<Vec<usize>> {
    if m == 0 {
        return Err(Error::InvalidInput("draw count must be at least 1".into()));
    }
    if x.len() != model.input_dim {
        return Err(Error::ShapeMismatch {
            expected: model.input_dim,
            got: x.len(),
        });
    }
    if spec.dim() != model.input_dim {
        return Err(Error::ShapeMismatch {
            expected: model.input_dim,
            got: spec.dim(),
        });
    }
    let mut counts = vec![0usize; model.num_classes];
    let mut scratch = Scratch::for_model(model);
    let mut eps = vec![0.0; x.len()];
    let mut perturbed = vec![0.0; x.len()];
    for _ in 0..m {
        spec.sample_perturbed_into(x, rng, &mut eps, &mut perturbed)?;
        counts[model.predict_scratch(&perturbed, &mut scratch)] += 1;
    }
    Ok(counts)
}

/// Gap and certified region implied by a lower bound on the top-class
/// probability. Bounds at or below 1/2 certify nothing: zero gap, empty
/// region.
pub fn certified_region(spec: &SmoothingSpec, p_lower: f64) -> Result<(f64, Region)> {
    if !(0.0..=1.0).contains(&p_lower) {
        return Err(Error::Domain(format!("p_lower {p_lower} outside [0,1]")));
    }
    if p_lower <= 0.5 {
        return Ok((0.0, Region::empty(spec.dim())));
    }
    match spec {
        SmoothingSpec::Gaussian { theta } => {
            let r = std_normal_icdf(p_lower)?;
            Ok((r, Region::ellipsoid(theta.clone(), r)?))
        }
        SmoothingSpec::Uniform { theta } => {
            // p_lower - (1 - p_lower): the runner-up is bounded by 1 - p_lower
            let r = 2.0 * p_lower - 1.0;
            Ok((r, Region::cross_polytope(theta.clone(), r)?))
        }
        SmoothingSpec::Gmm { components } => {
            // probability-scale bound: no inverse CDF here
            let r = (2.0 * p_lower - 1.0) * INV_SQRT_2PI;
            let axes = gmm_effective_matrix(components)?
                .iter()
                .map(|b| b.sqrt())
                .collect();
            Ok((r, Region::ellipsoid(axes, r)?))
        }
    }
}

fn expect_kind(spec: &SmoothingSpec, want: SmoothingKind) -> Result<()> {
    if spec.kind() != want {
        return Err(Error::SpecKind {
            expected: want.name(),
            got: spec.kind().name(),
        });
    }
    Ok(())
}

fn certify_inner(
    model: &Classifier,
    x: &[f64],
    spec: &SmoothingSpec,
    n0: usize,
    n: usize,
    alpha: f64,
    rng: &mut RngStream,
) -> Result<Certificate> {
    let selection_counts = predict_counts(model, x, spec, n0, rng)?;
    let mut candidate = 0;
    for (i, &c) in selection_counts.iter().enumerate().skip(1) {
        if c > selection_counts[candidate] {
            candidate = i;
        }
    }
    // estimation draws continue the stream: fresh, never reused from selection
    let estimate_counts = predict_counts(model, x, spec, n, rng)?;
    let k = estimate_counts[candidate] as u64;
    let p_lower = clopper_pearson_lower(k, n as u64, alpha)?;
    let (gap, region) = certified_region(spec, p_lower)?;
    let predicted = if p_lower <= 0.5 { None } else { Some(candidate) };
    Ok(Certificate {
        predicted,
        p_lower,
        gap,
        region,
        selection_counts,
        k,
        spec: spec.clone(),
    })
}

/// Certificate with an ellipsoidal region under Gaussian smoothing; the gap
/// is on the inverse-CDF scale.
pub fn certify_ellipsoid(
    model: &Classifier,
    x: &[f64],
    spec: &SmoothingSpec,
    n0: usize,
    n: usize,
    alpha: f64,
    rng: &mut RngStream,
) -> Result<Certificate> {
    expect_kind(spec, SmoothingKind::Gaussian)?;
    certify_inner(model, x, spec, n0, n, alpha, rng)
}

/// Certificate with a generalized cross-polytope region under uniform
/// smoothing; the gap is on the raw probability scale.
pub fn certify_cross_polytope(
    model: &Classifier,
    x: &[f64],
    spec: &SmoothingSpec,
    n0: usize,
    n: usize,
    alpha: f64,
    rng: &mut RngStream,
) -> Result<Certificate> {
    expect_kind(spec, SmoothingKind::Uniform)?;
    certify_inner(model, x, spec, n0, n, alpha, rng)
}

/// Certificate with an ellipsoidal region in the mixture's effective metric.
pub fn certify_gmm(
    model: &Classifier,
    x: &[f64],
    spec: &SmoothingSpec,
    n0: usize,
    n: usize,
    alpha: f64,
    rng: &mut RngStream,
) -> Result<Certificate> {
    expect_kind(spec, SmoothingKind::Gmm)?;
    certify_inner(model, x, spec, n0, n, alpha, rng)
}

/// Kind-dispatching certification for mixed-spec datasets.
pub fn certify_sample(
    model: &Classifier,
    x: &[f64],
    spec: &SmoothingSpec,
    n0: usize,
    n: usize,
    alpha: f64,
    rng: &mut RngStream,
) -> Result<Certificate> {
    certify_inner(model, x, spec, n0, n, alpha, rng)
}

/// Certifies every sample. Each sample's stream id is its index, so the
/// parallel fan-out and a serial run produce identical reports.
pub fn certify_dataset(
    model: &Classifier,
    data: &Dataset,
    specs: &[SmoothingSpec],
    cfg: &CertifyConfig,
) -> Result<CertificationReport> {
    if specs.len() != data.len() {
        return Err(Error::InvalidInput(format!(
            "{} specs for {} samples",
            specs.len(),
            data.len()
        )));
    }
    let rows = (0..data.len())
        .into_par_iter()
        .map(|i| -> Result<ReportRow> {
            let mut rng = RngStream::new(cfg.seed, i as u64);
            let start = Instant::now();
            let cert = certify_sample(
                model,
                &data.inputs[i],
                &specs[i],
                cfg.n0,
                cfg.n,
                cfg.alpha,
                &mut rng,
            )?;
            let time_ms = start.elapsed().as_secs_f64() * 1e3;
            Ok(ReportRow {
                idx: i,
                label: data.labels[i],
                predicted: cert.predicted,
                p_lower: cert.p_lower,
                gap: cert.gap,
                iso_radius: cert.region.enclosed_radius(),
                proxy_radius: cert.region.proxy_radius(),
                kind: specs[i].kind(),
                time_ms,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CertificationReport {
        rows,
        specs: specs.to_vec(),
    })
}
