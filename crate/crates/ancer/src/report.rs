//! Certification report rows and the on-disk CSV formats: the per-sample
//! report file (report rows followed by per-sample theta rows), the
//! standalone theta file, and the mixture sidecar.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::smoothing::{gmm_effective_matrix, GmmComponent, SmoothingKind, SmoothingSpec};

pub const REPORT_HEADER: &str =
    "idx,label,predicted,abstain,p_lower,gap,iso_radius,proxy_radius,kind,time_ms";

#[derive(Clone, Debug, PartialEq)]
pub struct ReportRow {
    pub idx: usize,
    pub label: usize,
    /// `None` when the certifier abstained.
    pub predicted: Option<usize>,
    pub p_lower: f64,
    /// Certified right-hand side r of the region inequality (0 on abstain).
    pub gap: f64,
    /// Radius of the largest isotropic ball inside the certified region.
    pub iso_radius: f64,
    pub proxy_radius: f64,
    pub kind: SmoothingKind,
    pub time_ms: f64,
}

impl ReportRow {
    pub fn abstain(&self) -> bool {
        self.predicted.is_none()
    }

    pub fn correct(&self) -> bool {
        self.predicted == Some(self.label)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CertificationReport {
    pub rows: Vec<ReportRow>,
    /// Per-row smoothing spec, same order as `rows`; persisted as the theta
    /// section of the report file.
    pub specs: Vec<SmoothingSpec>,
}

fn fmt_row(row: &ReportRow) -> String {
    format!(
        "{},{},{},{},{:.16e},{:.16e},{:.16e},{:.16e},{},{:.3}",
        row.idx,
        row.label,
        row.predicted.map_or(-1, |c| c as i64),
        u8::from(row.abstain()),
        row.p_lower,
        row.gap,
        row.iso_radius,
        row.proxy_radius,
        row.kind.name(),
        row.time_ms,
    )
}

/// Formats `kind,theta_0,...,theta_{n-1}` rows. Mixture rows record the
/// per-axis effective scale sqrt(b); all mixture rows in one file must share
/// the same components, which go to the single sidecar on `finish`.
struct ThetaRowWriter<'a> {
    shared_gmm: Option<&'a [GmmComponent]>,
}

impl<'a> ThetaRowWriter<'a> {
    fn new() -> Self {
        ThetaRowWriter { shared_gmm: None }
    }

    fn format(&mut self, spec: &'a SmoothingSpec) -> Result<String> {
        let row_theta: Vec<f64> = match spec {
            SmoothingSpec::Gaussian { theta } | SmoothingSpec::Uniform { theta } => theta.clone(),
            SmoothingSpec::Gmm { components } => {
                match self.shared_gmm {
                    None => self.shared_gmm = Some(components),
                    Some(prev) if prev == components.as_slice() => {}
                    Some(_) => {
                        return Err(Error::InvalidInput(
                            "theta rows support a single shared gmm spec".into(),
                        ))
                    }
                }
                gmm_effective_matrix(components)?
                    .iter()
                    .map(|b| b.sqrt())
                    .collect()
            }
        };
        let mut line = String::from(spec.kind().name());
        for t in &row_theta {
            line.push(',');
            line.push_str(&format!("{t:.16e}"));
        }
        Ok(line)
    }

    fn finish(self, base: &Path) -> Result<()> {
        if let Some(components) = self.shared_gmm {
            write_gmm_sidecar(&gmm_sidecar_path(base), components)?;
        }
        Ok(())
    }
}

/// Parses theta rows; mixture rows are resolved through the sidecar next to
/// `base` and their recorded sqrt(b) values cross-checked against it.
struct ThetaRowReader {
    cache: Option<(Vec<GmmComponent>, Vec<f64>)>,
    sidecar: PathBuf,
}

impl ThetaRowReader {
    fn new(base: &Path) -> Self {
        ThetaRowReader {
            cache: None,
            sidecar: gmm_sidecar_path(base),
        }
    }

    fn parse(&mut self, pname: &str, line_no: usize, line: &str) -> Result<SmoothingSpec> {
        let mut parts = line.split(',');
        let kind = SmoothingKind::parse(parts.next().unwrap_or("").trim())
            .map_err(|_| Error::parse(pname, line_no, "bad smoothing kind"))?;
        let mut theta = Vec::new();
        for tok in parts {
            theta.push(
                tok.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(pname, line_no, format!("bad number {tok:?}")))?,
            );
        }
        match kind {
            SmoothingKind::Gaussian => SmoothingSpec::gaussian(theta)
                .map_err(|e| Error::parse(pname, line_no, e.to_string())),
            SmoothingKind::Uniform => SmoothingSpec::uniform(theta)
                .map_err(|e| Error::parse(pname, line_no, e.to_string())),
            SmoothingKind::Gmm => {
                if self.cache.is_none() {
                    let comps = read_gmm_sidecar(&self.sidecar)?;
                    let sqrt_b: Vec<f64> = gmm_effective_matrix(&comps)?
                        .iter()
                        .map(|b| b.sqrt())
                        .collect();
                    self.cache = Some((comps, sqrt_b));
                }
                let (comps, sqrt_b) = self.cache.as_ref().unwrap();
                if theta.len() != sqrt_b.len()
                    || theta
                        .iter()
                        .zip(sqrt_b)
                        .any(|(a, b)| (a - b).abs() > 1e-6 * b.abs())
                {
                    return Err(Error::parse(
                        pname,
                        line_no,
                        "gmm row inconsistent with sidecar mixture",
                    ));
                }
                SmoothingSpec::gmm(comps.clone())
                    .map_err(|e| Error::parse(pname, line_no, e.to_string()))
            }
        }
    }
}

impl CertificationReport {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if self.specs.len() != self.rows.len() {
            return Err(Error::InvalidInput(format!(
                "{} theta rows for {} report rows",
                self.specs.len(),
                self.rows.len()
            )));
        }
        for (row, spec) in self.rows.iter().zip(&self.specs) {
            if row.kind != spec.kind() {
                return Err(Error::InvalidInput(format!(
                    "row {} kind {} does not match its theta row {}",
                    row.idx,
                    row.kind.name(),
                    spec.kind().name()
                )));
            }
        }
        let mut theta_writer = ThetaRowWriter::new();
        let mut w = BufWriter::new(File::create(path)?);
        writeln!(w, "{REPORT_HEADER}")?;
        for row in &self.rows {
            writeln!(w, "{}", fmt_row(row))?;
        }
        for spec in &self.specs {
            writeln!(w, "{}", theta_writer.format(spec)?)?;
        }
        w.flush()?;
        theta_writer.finish(path)
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let pname = path.display().to_string();
        let reader = BufReader::new(File::open(path)?);
        let mut rows = Vec::new();
        let mut specs = Vec::new();
        let mut spec_lines = Vec::new();
        let mut theta_reader = ThetaRowReader::new(path);
        let mut last_line = 1;
        let mut lines = reader.lines();
        let header = lines
            .next()
            .ok_or_else(|| Error::parse(&pname, 1, "empty report file"))??;
        if header.trim() != REPORT_HEADER {
            return Err(Error::parse(&pname, 1, "unexpected report header"));
        }
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            last_line = line_no;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            // Report rows are keyed by an integer idx; theta rows by a kind
            // token. The theta section always follows the report rows.
            if fields[0].trim().parse::<usize>().is_err() {
                specs.push(theta_reader.parse(&pname, line_no, &line)?);
                spec_lines.push(line_no);
                continue;
            }
            if !specs.is_empty() {
                return Err(Error::parse(&pname, line_no, "report row after theta rows"));
            }
            if fields.len() != 10 {
                return Err(Error::parse(
                    &pname,
                    line_no,
                    format!("expected 10 fields, found {}", fields.len()),
                ));
            }
            let parse_usize = |s: &str, what: &str| {
                s.trim()
                    .parse::<usize>()
                    .map_err(|_| Error::parse(&pname, line_no, format!("bad {what} {s:?}")))
            };
            let parse_f64 = |s: &str, what: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::parse(&pname, line_no, format!("bad {what} {s:?}")))
            };
            let idx = parse_usize(fields[0], "idx")?;
            let label = parse_usize(fields[1], "label")?;
            let pred_raw = fields[2].trim().parse::<i64>().map_err(|_| {
                Error::parse(&pname, line_no, format!("bad predicted {:?}", fields[2]))
            })?;
            let predicted = if pred_raw < 0 {
                None
            } else {
                Some(pred_raw as usize)
            };
            let abstain_flag = parse_usize(fields[3], "abstain")?;
            if (abstain_flag == 1) != predicted.is_none() {
                return Err(Error::parse(
                    &pname,
                    line_no,
                    "abstain flag inconsistent with predicted class",
                ));
            }
            let kind = SmoothingKind::parse(fields[8].trim())
                .map_err(|_| Error::parse(&pname, line_no, format!("bad kind {:?}", fields[8])))?;
            rows.push(ReportRow {
                idx,
                label,
                predicted,
                p_lower: parse_f64(fields[4], "p_lower")?,
                gap: parse_f64(fields[5], "gap")?,
                iso_radius: parse_f64(fields[6], "iso_radius")?,
                proxy_radius: parse_f64(fields[7], "proxy_radius")?,
                kind,
                time_ms: parse_f64(fields[9], "time_ms")?,
            });
        }
        if specs.len() != rows.len() {
            return Err(Error::parse(
                &pname,
                last_line,
                format!("{} theta rows for {} report rows", specs.len(), rows.len()),
            ));
        }
        for ((row, spec), &line_no) in rows.iter().zip(&specs).zip(&spec_lines) {
            if row.kind != spec.kind() {
                return Err(Error::parse(
                    &pname,
                    line_no,
                    format!(
                        "theta row kind {} does not match report row {} kind {}",
                        spec.kind().name(),
                        row.idx,
                        row.kind.name()
                    ),
                ));
            }
        }
        Ok(CertificationReport { rows, specs })
    }
}

/// Path of the mixture sidecar tied to a theta or report file.
pub fn gmm_sidecar_path(base: &Path) -> PathBuf {
    let mut s = base.as_os_str().to_os_string();
    s.push(".gmm");
    PathBuf::from(s)
}

/// Writes a standalone theta file: one `kind,theta_0,...,theta_{n-1}` row
/// per spec, mixture components in the `<path>.gmm` sidecar.
pub fn write_theta_csv(path: &Path, specs: &[SmoothingSpec]) -> Result<()> {
    let mut theta_writer = ThetaRowWriter::new();
    let mut w = BufWriter::new(File::create(path)?);
    for spec in specs {
        writeln!(w, "{}", theta_writer.format(spec)?)?;
    }
    w.flush()?;
    theta_writer.finish(path)
}

pub fn write_gmm_sidecar(path: &Path, components: &[GmmComponent]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for c in components {
        let mut line = format!("{:.16e}", c.weight);
        for t in &c.theta {
            line.push(' ');
            line.push_str(&format!("{t:.16e}"));
        }
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_gmm_sidecar(path: &Path) -> Result<Vec<GmmComponent>> {
    let pname = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut components = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let mut vals = Vec::new();
        for tok in line.split_whitespace() {
            vals.push(
                tok.parse::<f64>()
                    .map_err(|_| Error::parse(&pname, i + 1, format!("bad number {tok:?}")))?,
            );
        }
        if vals.len() < 2 {
            return Err(Error::parse(
                &pname,
                i + 1,
                "component needs a weight and a theta",
            ));
        }
        components.push(GmmComponent {
            weight: vals[0],
            theta: vals[1..].to_vec(),
        });
    }
    // constructor re-validates weights/dims
    SmoothingSpec::gmm(components.clone())?;
    Ok(components)
}

/// Reads a standalone theta file back into per-sample specs.
pub fn read_theta_csv(path: &Path) -> Result<Vec<SmoothingSpec>> {
    let pname = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut theta_reader = ThetaRowReader::new(path);
    let mut specs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        specs.push(theta_reader.parse(&pname, i + 1, &line)?);
    }
    Ok(specs)
}
