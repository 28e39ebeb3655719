//! Dataset sources: the 2D radially separable toy problem, CSV files with
//! the label in the last column, and big-endian IDX image/label pairs.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::nn::Dataset;
use crate::stats::RngStream;

/// Two classes separated radially around the origin: class 0 inside the unit
/// disk, class 1 on the annulus 1.4 < r < 2.4. Labels alternate so classes
/// balance within one sample; Gaussian coordinate noise (std `noise`) is
/// added after labeling, so the classes can overlap when noise is large.
pub fn generate_radial_dataset(count: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if count < 2 {
        return Err(Error::InvalidInput(format!(
            "need at least 2 samples, got {count}"
        )));
    }
    if !(noise >= 0.0 && noise.is_finite()) {
        return Err(Error::Domain(format!("noise std {noise} must be >= 0")));
    }
    let mut rng = RngStream::new(seed, 0x64617461);
    let mut inputs = Vec::with_capacity(count);
    let mut labels = Vec::with_capacity(count);
    for i in 0..count {
        let label = i % 2;
        let radius = if label == 0 {
            rng.next_f64()
        } else {
            1.4 + rng.next_f64()
        };
        let angle = 2.0 * std::f64::consts::PI * rng.next_f64();
        let mut x = radius * angle.cos();
        let mut y = radius * angle.sin();
        x += noise * rng.standard_normal();
        y += noise * rng.standard_normal();
        inputs.push(vec![x, y]);
        labels.push(label);
    }
    Dataset::new(inputs, labels, 2)
}

/// One sample per line, comma-separated features with the integer label in
/// the last column. Class count is inferred as max label + 1.
pub fn load_csv(path: &Path) -> Result<Dataset> {
    let pname = path.display().to_string();
    let reader = BufReader::new(File::open(path)?);
    let mut inputs: Vec<Vec<f64>> = Vec::new();
    let mut labels = Vec::new();
    let mut dim = None;
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() < 2 {
            return Err(Error::parse(&pname, line_no, "need at least one feature and a label"));
        }
        let want = *dim.get_or_insert(fields.len() - 1);
        if fields.len() - 1 != want {
            return Err(Error::parse(
                &pname,
                line_no,
                format!("ragged row: expected {} features, found {}", want, fields.len() - 1),
            ));
        }
        let mut x = Vec::with_capacity(want);
        for tok in &fields[..want] {
            x.push(tok.trim().parse::<f64>().map_err(|_| {
                Error::parse(&pname, line_no, format!("bad feature {tok:?}"))
            })?);
        }
        let label = fields[want].trim().parse::<usize>().map_err(|_| {
            Error::parse(&pname, line_no, format!("bad label {:?}", fields[want]))
        })?;
        inputs.push(x);
        labels.push(label);
    }
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(inputs, labels, num_classes.max(1))
}

pub fn write_csv(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for (x, label) in data.inputs.iter().zip(&data.labels) {
        let mut line = String::new();
        for v in x {
            line.push_str(&format!("{v:.16e},"));
        }
        line.push_str(&label.to_string());
        writeln!(w, "{line}")?;
    }
    w.flush()?;
    Ok(())
}

fn read_be_u32(bytes: &[u8], offset: usize, pname: &str) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::parse(
            pname,
            offset,
            "file truncated inside a header word",
        ));
    }
    Ok(u32::from_be_bytes([
        bytes[offset],
        bytes[offset + 1],
        bytes[offset + 2],
        bytes[offset + 3],
    ]))
}

/// IDX image/label pair: magic 0x00000803 for images (count x rows x cols
/// bytes), 0x00000801 for labels. Pixels are scaled to [0,1]. Parse errors
/// report the byte offset of the offending field.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let iname = images_path.display().to_string();
    let lname = labels_path.display().to_string();
    let mut images = Vec::new();
    File::open(images_path)?.read_to_end(&mut images)?;
    let mut labels_raw = Vec::new();
    File::open(labels_path)?.read_to_end(&mut labels_raw)?;

    let magic = read_be_u32(&images, 0, &iname)?;
    if magic != 0x0000_0803 {
        return Err(Error::parse(&iname, 0, format!("bad image magic {magic:#010x}")));
    }
    let count = read_be_u32(&images, 4, &iname)? as usize;
    let rows = read_be_u32(&images, 8, &iname)? as usize;
    let cols = read_be_u32(&images, 12, &iname)? as usize;
    let pixel_count = count
        .checked_mul(rows)
        .and_then(|v| v.checked_mul(cols))
        .ok_or_else(|| Error::parse(&iname, 4, "image dimensions overflow"))?;
    if images.len() != 16 + pixel_count {
        return Err(Error::parse(
            &iname,
            16,
            format!("expected {} pixel bytes, found {}", pixel_count, images.len() - 16),
        ));
    }

    let lmagic = read_be_u32(&labels_raw, 0, &lname)?;
    if lmagic != 0x0000_0801 {
        return Err(Error::parse(&lname, 0, format!("bad label magic {lmagic:#010x}")));
    }
    let lcount = read_be_u32(&labels_raw, 4, &lname)? as usize;
    if lcount != count {
        return Err(Error::parse(
            &lname,
            4,
            format!("{lcount} labels for {count} images"),
        ));
    }
    if labels_raw.len() != 8 + lcount {
        return Err(Error::parse(
            &lname,
            8,
            format!("expected {} label bytes, found {}", lcount, labels_raw.len() - 8),
        ));
    }

    let dim = rows * cols;
    let mut inputs = Vec::with_capacity(count);
    for i in 0..count {
        let start = 16 + i * dim;
        inputs.push(
            images[start..start + dim]
                .iter()
                .map(|&b| f64::from(b) / 255.0)
                .collect(),
        );
    }
    let labels: Vec<usize> = labels_raw[8..].iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().max().map_or(0, |m| m + 1);
    Dataset::new(inputs, labels, num_classes.max(1))
}
