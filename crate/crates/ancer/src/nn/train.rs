use super::{Activation, Classifier, Dataset, Layer, Scratch};
use crate::error::{Error, Result};
use crate::stats::RngStream;

#[derive(Clone, Copy, Debug)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: 0.05,
            epochs: 200,
            batch: 32,
            seed: 0,
        }
    }
}

fn xavier_init(arch: &[usize], rng: &mut RngStream) -> Classifier {
    let mut layers = Vec::with_capacity(arch.len() - 1);
    for (t, w) in arch.windows(2).enumerate() {
        let (cols, rows) = (w[0], w[1]);
        let bound = (6.0 / (cols + rows) as f64).sqrt();
        layers.push(Layer {
            weights: (0..rows * cols)
                .map(|_| bound * rng.uniform_symmetric())
                .collect(),
            bias: vec![0.0; rows],
            rows,
            cols,
            activation: if t + 2 == arch.len() {
                Activation::Identity
            } else {
                Activation::Relu
            },
        });
    }
    Classifier {
        layers,
        input_dim: arch[0],
        num_classes: *arch.last().unwrap(),
    }
}

/// Plain SGD on the cross-entropy loss. Deterministic for a fixed seed:
/// initialization and epoch shuffles all come from one seeded stream, and
/// training is single-threaded. Returns the model and its training accuracy.
pub fn train_classifier(
    data: &Dataset,
    arch: &[usize],
    cfg: &TrainConfig,
) -> Result<(Classifier, f64)> {
    if data.is_empty() {
        return Err(Error::InvalidInput("training set is empty".into()));
    }
    if arch.len() < 2 {
        return Err(Error::InvalidInput(
            "architecture needs input and output sizes".into(),
        ));
    }
    if arch[0] != data.dim {
        return Err(Error::ShapeMismatch {
            expected: data.dim,
            got: arch[0],
        });
    }
    if *arch.last().unwrap() != data.num_classes {
        return Err(Error::ShapeMismatch {
            expected: data.num_classes,
            got: *arch.last().unwrap(),
        });
    }
    if cfg.batch == 0 {
        return Err(Error::InvalidInput("batch size must be positive".into()));
    }

    let mut rng = RngStream::new(cfg.seed, 0x7261494e); // train stream tag
    let mut model = xavier_init(arch, &mut rng);
    let mut s = Scratch::for_model(&model);

    // gradient accumulators mirroring the layer buffers
    let mut gw: Vec<Vec<f64>> = model.layers.iter().map(|l| vec![0.0; l.weights.len()]).collect();
    let mut gb: Vec<Vec<f64>> = model.layers.iter().map(|l| vec![0.0; l.bias.len()]).collect();

    let mut order: Vec<usize> = (0..data.len()).collect();
    for _epoch in 0..cfg.epochs {
        rng.shuffle(&mut order);
        for chunk in order.chunks(cfg.batch) {
            for g in gw.iter_mut().chain(gb.iter_mut()) {
                g.iter_mut().for_each(|v| *v = 0.0);
            }
            for &idx in chunk {
                accumulate_example(&model, &data.inputs[idx], data.labels[idx], &mut s, &mut gw, &mut gb);
            }
            let step = cfg.lr / chunk.len() as f64;
            for (layer, (gwl, gbl)) in model.layers.iter_mut().zip(gw.iter().zip(&gb)) {
                for (w, g) in layer.weights.iter_mut().zip(gwl) {
                    *w -= step * g;
                }
                for (b, g) in layer.bias.iter_mut().zip(gbl) {
                    *b -= step * g;
                }
            }
        }
    }

    let mut correct = 0usize;
    for (x, &y) in data.inputs.iter().zip(&data.labels) {
        if model.predict_scratch(x, &mut s) == y {
            correct += 1;
        }
    }
    Ok((model, correct as f64 / data.len() as f64))
}

// Adds this example's cross-entropy gradient into the accumulators.
fn accumulate_example(
    model: &Classifier,
    x: &[f64],
    label: usize,
    s: &mut Scratch,
    gw: &mut [Vec<f64>],
    gb: &mut [Vec<f64>],
) {
    model.forward_scratch(x, s);
    // d(-ln p_y)/d logits = p - onehot(y)
    for j in 0..model.num_classes {
        s.g_cur[j] = s.probs[j] - if j == label { 1.0 } else { 0.0 };
    }
    for (t, layer) in model.layers.iter().enumerate().rev() {
        if layer.activation == Activation::Relu {
            for i in 0..layer.rows {
                if s.acts[t + 1][i] <= 0.0 {
                    s.g_cur[i] = 0.0;
                }
            }
        }
        for j in 0..layer.cols {
            s.g_next[j] = 0.0;
        }
        for i in 0..layer.rows {
            let g = s.g_cur[i];
            gb[t][i] += g;
            if g == 0.0 {
                continue;
            }
            let row = &layer.weights[i * layer.cols..(i + 1) * layer.cols];
            let grow = &mut gw[t][i * layer.cols..(i + 1) * layer.cols];
            let prev = &s.acts[t];
            for j in 0..layer.cols {
                grow[j] += g * prev[j];
                s.g_next[j] += row[j] * g;
            }
        }
        std::mem::swap(&mut s.g_cur, &mut s.g_next);
    }
}
