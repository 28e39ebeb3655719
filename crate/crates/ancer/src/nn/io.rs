use super::{Activation, Classifier, Layer};
use crate::error::{Error, Result};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

const MAGIC: &str = "ANCER-MLP v1";

/// Writes the model as line-oriented text. 17 significant digits make the
/// round-trip exact for every f64.
pub fn save_model(model: &Classifier, path: &Path) -> Result<()> {
    model.validate()?;
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    let _ = writeln!(
        out,
        "{} {} {}",
        model.layers.len(),
        model.input_dim,
        model.num_classes
    );
    for layer in &model.layers {
        let _ = writeln!(out, "{} {} {}", layer.rows, layer.cols, layer.activation.name());
        for i in 0..layer.rows {
            let row = &layer.weights[i * layer.cols..(i + 1) * layer.cols];
            push_floats(&mut out, row);
        }
        push_floats(&mut out, &layer.bias);
    }
    let mut file = std::io::BufWriter::new(std::fs::File::create(path)?);
    file.write_all(out.as_bytes())?;
    file.flush()?;
    Ok(())
}

fn push_floats(out: &mut String, values: &[f64]) {
    for (i, v) in values.iter().enumerate() {
        if i > 0 {
            out.push(' ');
        }
        let _ = write!(out, "{v:.16e}");
    }
    out.push('\n');
}

pub fn load_model(path: &Path) -> Result<Classifier> {
    let pname = path.display().to_string();
    let file = std::fs::File::open(path)?;
    let mut lines = BufReader::new(file).lines();
    let mut line_no = 0usize;
    let mut next_line = |what: &str| -> Result<String> {
        line_no += 1;
        match lines.next() {
            Some(Ok(l)) => Ok(l),
            Some(Err(e)) => Err(Error::parse(&pname, line_no, format!("read failed: {e}"))),
            None => Err(Error::parse(
                &pname,
                line_no,
                format!("file ends where {what} was expected"),
            )),
        }
    };

    let magic = next_line("the magic header")?;
    if magic.trim_end() != MAGIC {
        return Err(Error::parse(&pname, 1, format!("bad magic line {magic:?}")));
    }
    let header = next_line("the size header")?;
    let dims = parse_usizes(&header, 3)
        .ok_or_else(|| Error::parse(&pname, 2, format!("expected `L n K`, got {header:?}")))?;
    let (num_layers, input_dim, num_classes) = (dims[0], dims[1], dims[2]);

    let mut layers = Vec::with_capacity(num_layers);
    let mut used = 2usize;
    for _ in 0..num_layers {
        let head = next_line("a layer header")?;
        used += 1;
        let head_line = used;
        let mut parts = head.split_whitespace();
        let (rows, cols) = match (
            parts.next().and_then(|t| t.parse::<usize>().ok()),
            parts.next().and_then(|t| t.parse::<usize>().ok()),
        ) {
            (Some(r), Some(c)) if r > 0 && c > 0 => (r, c),
            _ => {
                return Err(Error::parse(
                    &pname,
                    head_line,
                    format!("expected `rows cols activation`, got {head:?}"),
                ))
            }
        };
        let activation = match parts.next() {
            Some("relu") => Activation::Relu,
            Some("identity") => Activation::Identity,
            other => {
                return Err(Error::parse(
                    &pname,
                    head_line,
                    format!("unknown activation {other:?}"),
                ))
            }
        };
        let mut weights = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let row = next_line("a weight row")?;
            used += 1;
            parse_floats_into(&row, cols, &mut weights)
                .map_err(|msg| Error::parse(&pname, used, msg))?;
        }
        let bias_line = next_line("a bias row")?;
        used += 1;
        let mut bias = Vec::with_capacity(rows);
        parse_floats_into(&bias_line, rows, &mut bias)
            .map_err(|msg| Error::parse(&pname, used, msg))?;
        layers.push(Layer {
            weights,
            bias,
            rows,
            cols,
            activation,
        });
    }

    let model = Classifier {
        layers,
        input_dim,
        num_classes,
    };
    model
        .validate()
        .map_err(|e| Error::parse(&pname, used, format!("inconsistent dimensions: {e}")))?;
    Ok(model)
}

fn parse_usizes(line: &str, want: usize) -> Option<Vec<usize>> {
    let vals: Vec<usize> = line
        .split_whitespace()
        .map(|t| t.parse::<usize>())
        .collect::<std::result::Result<_, _>>()
        .ok()?;
    (vals.len() == want).then_some(vals)
}

fn parse_floats_into(
    line: &str,
    want: usize,
    out: &mut Vec<f64>,
) -> std::result::Result<(), String> {
    let start = out.len();
    for token in line.split_whitespace() {
        match token.parse::<f64>() {
            Ok(v) => out.push(v),
            Err(_) => return Err(format!("bad number {token:?}")),
        }
    }
    let got = out.len() - start;
    if got != want {
        return Err(format!("expected {want} values, found {got}"));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{train_classifier, Dataset, TrainConfig};
    use crate::stats::RngStream;

    fn small_model() -> Classifier {
        let mut rng = RngStream::new(77, 0);
        let mut inputs = Vec::new();
        let mut labels = Vec::new();
        for i in 0..40 {
            inputs.push(vec![rng.uniform_symmetric(), rng.uniform_symmetric(), rng.uniform_symmetric()]);
            labels.push(i % 2);
        }
        let data = Dataset::new(inputs, labels, 2).unwrap();
        let cfg = TrainConfig {
            epochs: 3,
            seed: 8,
            ..TrainConfig::default()
        };
        train_classifier(&data, &[3, 7, 2], &cfg).unwrap().0
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let m = small_model();
        save_model(&m, &path).unwrap();
        let back = load_model(&path).unwrap();
        assert_eq!(back.input_dim, m.input_dim);
        assert_eq!(back.num_classes, m.num_classes);
        for (a, b) in m.layers.iter().zip(&back.layers) {
            assert_eq!(a.weights, b.weights);
            assert_eq!(a.bias, b.bias);
            assert_eq!(a.activation, b.activation);
        }
    }

    #[test]
    fn truncated_file_is_a_parse_error_with_line() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        let m = small_model();
        save_model(&m, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let cut: String = text.lines().take(4).collect::<Vec<_>>().join("\n");
        std::fs::write(&path, cut).unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(
            matches!(err, Error::Parse { line, .. } if line == 5),
            "unhelpful error: {err}"
        );
    }

    #[test]
    fn wrong_magic_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        std::fs::write(&path, "MLP v0\n1 2 2\n").unwrap();
        let err = load_model(&path).unwrap_err();
        assert!(err.to_string().contains("magic"), "{err}");
    }

    #[test]
    fn garbage_numbers_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.txt");
        std::fs::write(
            &path,
            "ANCER-MLP v1\n1 2 2\n2 2 identity\n1.0 oops\n0.0 1.0\n0.0 0.0\n",
        )
        .unwrap();
        assert!(load_model(&path).is_err());
    }
}
