//! Report-level metrics: certified-accuracy curves, average certified
//! radius, superset statistics, factor decompositions, and witness
//! perturbations demonstrating where an anisotropic certificate beats the
//! isotropic one.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::certify::certified_region;
use crate::error::{Error, Result};
use crate::regions::{is_superior, Region, SupersetRelation};
use crate::report::CertificationReport;
use crate::smoothing::{gmm_effective_matrix, SmoothingSpec};

fn row_radius(report: &CertificationReport, i: usize, use_proxy: bool) -> f64 {
    if use_proxy {
        report.rows[i].proxy_radius
    } else {
        report.rows[i].iso_radius
    }
}

/// Certified accuracy at each requested radius: the fraction of all rows
/// that are correctly classified, not abstained, and certified at radius at
/// least R. Abstained and misclassified rows count against every R.
pub fn certified_accuracy_curve(
    report: &CertificationReport,
    radii: &[f64],
    use_proxy: bool,
) -> Result<Vec<(f64, f64)>> {
    for r in radii {
        if !r.is_finite() {
            return Err(Error::InvalidInput(format!("non-finite radius {r}")));
        }
    }
    if radii.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::InvalidInput("radii must be sorted ascending".into()));
    }
    let n = report.rows.len();
    let mut curve = Vec::with_capacity(radii.len());
    for &big_r in radii {
        let count = (0..n)
            .filter(|&i| report.rows[i].correct() && row_radius(report, i, use_proxy) >= big_r)
            .count();
        let acc = if n == 0 { 0.0 } else { count as f64 / n as f64 };
        curve.push((big_r, acc));
    }
    Ok(curve)
}

/// Average certified radius: mean over all rows of radius * [correct and
/// not abstained].
pub fn acr(report: &CertificationReport, use_proxy: bool) -> Result<f64> {
    if report.rows.is_empty() {
        return Err(Error::UndefinedMetric { metric: "acr" });
    }
    let total: f64 = (0..report.rows.len())
        .map(|i| {
            if report.rows[i].correct() {
                row_radius(report, i, use_proxy)
            } else {
                0.0
            }
        })
        .sum();
    Ok(total / report.rows.len() as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SupersetStats {
    pub rows: usize,
    /// Percentage of rows where a's max-enclosed-ball radius covers b's.
    pub radius_pct: f64,
    /// Percentage of rows where a's full region is a superset of b's.
    pub region_pct: f64,
    /// Rows whose region comparison is axis-undecidable (mixed families).
    pub region_undetermined: usize,
}

fn matched_rows(a: &CertificationReport, b: &CertificationReport) -> Result<()> {
    if a.rows.len() != b.rows.len() {
        return Err(Error::InvalidInput(format!(
            "report row counts differ: {} vs {}",
            a.rows.len(),
            b.rows.len()
        )));
    }
    for (ra, rb) in a.rows.iter().zip(&b.rows) {
        if ra.idx != rb.idx || ra.label != rb.label {
            return Err(Error::InvalidInput(format!(
                "report rows disagree at idx {} vs {}",
                ra.idx, rb.idx
            )));
        }
    }
    Ok(())
}

fn report_specs(report: &CertificationReport) -> Result<&[SmoothingSpec]> {
    if report.specs.len() != report.rows.len() {
        return Err(Error::InvalidInput(
            "report carries no per-row theta section".into(),
        ));
    }
    Ok(&report.specs)
}

/// Rebuilds each row's certified region from its theta row and p_lower.
/// This is the exact computation the certifier ran, so the reconstruction
/// is bit-identical to the original region.
pub fn report_regions(report: &CertificationReport) -> Result<Vec<Region>> {
    let specs = report_specs(report)?;
    report
        .rows
        .iter()
        .zip(specs)
        .map(|(row, spec)| Ok(certified_region(spec, row.p_lower)?.1))
        .collect()
}

/// How often a's certificate covers b's, split into the scalar radius
/// comparison and the full axis-wise region comparison. An abstained row has
/// an empty region (radius 0): any region covers it, and it covers nothing
/// non-empty.
pub fn superset_stats(
    a: &CertificationReport,
    b: &CertificationReport,
) -> Result<SupersetStats> {
    matched_rows(a, b)?;
    let regions_a = report_regions(a)?;
    let regions_b = report_regions(b)?;
    let n = a.rows.len();
    if n == 0 {
        return Ok(SupersetStats {
            rows: 0,
            radius_pct: 100.0,
            region_pct: 100.0,
            region_undetermined: 0,
        });
    }
    let mut radius_wins = 0usize;
    let mut region_wins = 0usize;
    let mut undetermined = 0usize;
    for i in 0..n {
        if a.rows[i].iso_radius >= b.rows[i].iso_radius {
            radius_wins += 1;
        }
        match is_superior(&regions_a[i], &regions_b[i])?.relation {
            SupersetRelation::Superset => region_wins += 1,
            SupersetRelation::NotSuperset => {}
            SupersetRelation::Undetermined => undetermined += 1,
        }
    }
    Ok(SupersetStats {
        rows: n,
        radius_pct: 100.0 * radius_wins as f64 / n as f64,
        region_pct: 100.0 * region_wins as f64 / n as f64,
        region_undetermined: undetermined,
    })
}

/// Smallest per-axis scale of a spec (the tied value for isotropic specs;
/// sqrt of the smallest effective variance for mixtures).
pub fn spec_min_scale(spec: &SmoothingSpec) -> Result<f64> {
    let scales: Vec<f64> = match spec {
        SmoothingSpec::Gaussian { theta } | SmoothingSpec::Uniform { theta } => theta.clone(),
        SmoothingSpec::Gmm { components } => gmm_effective_matrix(components)?
            .iter()
            .map(|b| b.sqrt())
            .collect(),
    };
    Ok(scales.iter().copied().fold(f64::INFINITY, f64::min))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FactorRow {
    pub idx: usize,
    /// Per-sample isotropic scale.
    pub theta_bar: f64,
    /// Smallest anisotropic axis.
    pub min_theta: f64,
    pub gap_iso: f64,
    pub gap_ancer: f64,
}

impl FactorRow {
    pub fn sigma_factor(&self) -> f64 {
        self.min_theta / self.theta_bar
    }

    /// NaN when the isotropic row abstained (gap 0).
    pub fn gap_factor(&self) -> f64 {
        if self.gap_iso > 0.0 {
            self.gap_ancer / self.gap_iso
        } else {
            f64::NAN
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HistogramBin {
    pub lo: f64,
    pub hi: f64,
    pub count: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FactorHistograms {
    pub rows: Vec<FactorRow>,
    pub sigma_factor_hist: Vec<HistogramBin>,
    pub gap_factor_hist: Vec<HistogramBin>,
    pub median_theta_bar: f64,
    pub median_min_theta: f64,
    pub median_gap_iso: f64,
    pub median_gap_ancer: f64,
}

fn median(values: &[f64]) -> f64 {
    if values.is_empty() {
        return f64::NAN;
    }
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let mid = v.len() / 2;
    if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    }
}

fn fixed_width_bins(values: &[f64], bins: usize) -> Vec<HistogramBin> {
    if values.is_empty() {
        return Vec::new();
    }
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if lo == hi {
        return vec![HistogramBin {
            lo,
            hi,
            count: values.len(),
        }];
    }
    let width = (hi - lo) / bins as f64;
    let mut counts = vec![0usize; bins];
    for &v in values {
        let i = (((v - lo) / width) as usize).min(bins - 1);
        counts[i] += 1;
    }
    counts
        .into_iter()
        .enumerate()
        .map(|(i, count)| HistogramBin {
            lo: lo + i as f64 * width,
            hi: if i + 1 == bins {
                hi
            } else {
                lo + (i + 1) as f64 * width
            },
            count,
        })
        .collect()
}

/// Per-sample decomposition of the anisotropic gain into a scale factor
/// (smallest ANCER axis vs the isotropic scale) and a gap factor, with
/// fixed-width histograms and column medians.
pub fn factor_histograms(
    iso: &CertificationReport,
    ancer: &CertificationReport,
    bins: usize,
) -> Result<FactorHistograms> {
    if bins == 0 {
        return Err(Error::InvalidInput("need at least one histogram bin".into()));
    }
    matched_rows(iso, ancer)?;
    let specs_iso = report_specs(iso)?;
    let specs_ancer = report_specs(ancer)?;
    let mut rows = Vec::with_capacity(iso.rows.len());
    for i in 0..iso.rows.len() {
        rows.push(FactorRow {
            idx: iso.rows[i].idx,
            theta_bar: spec_min_scale(&specs_iso[i])?,
            min_theta: spec_min_scale(&specs_ancer[i])?,
            gap_iso: iso.rows[i].gap,
            gap_ancer: ancer.rows[i].gap,
        });
    }
    let sigma_factors: Vec<f64> = rows.iter().map(FactorRow::sigma_factor).collect();
    let gap_factors: Vec<f64> = rows
        .iter()
        .map(FactorRow::gap_factor)
        .filter(|f| f.is_finite())
        .collect();
    Ok(FactorHistograms {
        sigma_factor_hist: fixed_width_bins(&sigma_factors, bins),
        gap_factor_hist: fixed_width_bins(&gap_factors, bins),
        median_theta_bar: median(&rows.iter().map(|r| r.theta_bar).collect::<Vec<_>>()),
        median_min_theta: median(&rows.iter().map(|r| r.min_theta).collect::<Vec<_>>()),
        median_gap_iso: median(&rows.iter().map(|r| r.gap_iso).collect::<Vec<_>>()),
        median_gap_ancer: median(&rows.iter().map(|r| r.gap_ancer).collect::<Vec<_>>()),
        rows,
    })
}

impl FactorHistograms {
    /// Emits `<stem>_pairs.csv`, `<stem>_hist.csv`, and `<stem>_medians.csv`
    /// under `dir`: plot-ready columns, no rendering.
    pub fn write_csv(&self, dir: &Path, stem: &str) -> Result<()> {
        let mut w = BufWriter::new(File::create(dir.join(format!("{stem}_pairs.csv")))?);
        writeln!(
            w,
            "idx,theta_bar,min_theta,sigma_factor,gap_iso,gap_ancer,gap_factor"
        )?;
        for r in &self.rows {
            writeln!(
                w,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
                r.idx,
                r.theta_bar,
                r.min_theta,
                r.sigma_factor(),
                r.gap_iso,
                r.gap_ancer,
                r.gap_factor(),
            )?;
        }
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join(format!("{stem}_hist.csv")))?);
        writeln!(w, "factor,lo,hi,count")?;
        for (name, hist) in [
            ("sigma_factor", &self.sigma_factor_hist),
            ("gap_factor", &self.gap_factor_hist),
        ] {
            for b in hist {
                writeln!(w, "{name},{:.16e},{:.16e},{}", b.lo, b.hi, b.count)?;
            }
        }
        w.flush()?;

        let mut w = BufWriter::new(File::create(dir.join(format!("{stem}_medians.csv")))?);
        writeln!(w, "name,value")?;
        writeln!(w, "median_theta_bar,{:.16e}", self.median_theta_bar)?;
        writeln!(w, "median_min_theta,{:.16e}", self.median_min_theta)?;
        writeln!(w, "median_gap_iso,{:.16e}", self.median_gap_iso)?;
        writeln!(w, "median_gap_ancer,{:.16e}", self.median_gap_ancer)?;
        w.flush()?;
        Ok(())
    }
}

/// A perturbation certified by the anisotropic region but not by the
/// isotropic one: 0.99 of the way out along the longest anisotropic axis,
/// when that exceeds the isotropic radius. Both memberships are re-verified
/// before returning.
pub fn find_witness_delta(aniso: &Region, iso: &Region) -> Result<Option<Vec<f64>>> {
    if aniso.is_empty() || iso.is_empty() {
        return Ok(None);
    }
    if aniso.dim() != iso.dim() {
        return Err(Error::ShapeMismatch {
            expected: aniso.dim(),
            got: iso.dim(),
        });
    }
    let semi = aniso.semi_axes().expect("non-empty region has axes");
    let mut j = 0;
    for (i, &s) in semi.iter().enumerate() {
        if s > semi[j] {
            j = i;
        }
    }
    if semi[j] <= iso.enclosed_radius() {
        return Ok(None);
    }
    let mut delta = vec![0.0; aniso.dim()];
    delta[j] = 0.99 * semi[j];
    if aniso.contains(&delta)? && !iso.contains(&delta)? {
        Ok(Some(delta))
    } else {
        Ok(None)
    }
}
