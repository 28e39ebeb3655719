//! Minimal differentiable feedforward classifier.
//!
//! Everything runs in f64: certified gaps are tiny differences between
//! near-one probabilities, and f32 loses them around p = 0.999.

mod io;
mod train;

pub use io::{load_model, save_model};
pub use train::{train_classifier, TrainConfig};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

impl Activation {
    pub fn name(self) -> &'static str {
        match self {
            Activation::Relu => "relu",
            Activation::Identity => "identity",
        }
    }
}

#[derive(Clone, Debug)]
pub struct Layer {
    /// Row-major `rows x cols`.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub rows: usize,
    pub cols: usize,
    pub activation: Activation,
}

#[derive(Clone, Debug)]
pub struct Classifier {
    pub layers: Vec<Layer>,
    pub input_dim: usize,
    pub num_classes: usize,
}

#[derive(Clone, Debug)]
pub struct Dataset {
    pub inputs: Vec<Vec<f64>>,
    pub labels: Vec<usize>,
    pub dim: usize,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Vec<Vec<f64>>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if inputs.len() != labels.len() {
            return Err(Error::InvalidInput(format!(
                "{} inputs but {} labels",
                inputs.len(),
                labels.len()
            )));
        }
        let dim = inputs.first().map_or(0, Vec::len);
        for (i, x) in inputs.iter().enumerate() {
            if x.len() != dim {
                return Err(Error::ShapeMismatch {
                    expected: dim,
                    got: x.len(),
                });
            }
            if labels[i] >= num_classes {
                return Err(Error::ClassOutOfRange {
                    index: labels[i],
                    num_classes,
                });
            }
        }
        Ok(Dataset {
            inputs,
            labels,
            dim,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.is_empty()
    }
}

/// Reusable forward/backward buffers so the Monte Carlo loops never allocate.
#[derive(Clone, Debug)]
pub struct Scratch {
    /// `acts[0]` is the input, `acts[t]` the post-activation output of layer
    /// t-1; the last entry holds the logits.
    acts: Vec<Vec<f64>>,
    probs: Vec<f64>,
    g_cur: Vec<f64>,
    g_next: Vec<f64>,
    input_grad: Vec<f64>,
}

impl Scratch {
    pub fn for_model(model: &Classifier) -> Self {
        let mut acts = Vec::with_capacity(model.layers.len() + 1);
        acts.push(vec![0.0; model.input_dim]);
        let mut widest = model.input_dim;
        for layer in &model.layers {
            acts.push(vec![0.0; layer.rows]);
            widest = widest.max(layer.rows);
        }
        Scratch {
            acts,
            probs: vec![0.0; model.num_classes],
            g_cur: vec![0.0; widest],
            g_next: vec![0.0; widest],
            input_grad: vec![0.0; model.input_dim],
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn input_grad(&self) -> &[f64] {
        &self.input_grad
    }
}

/// Numerically stable softmax into `out`.
pub fn softmax_into(logits: &[f64], out: &mut [f64]) {
    debug_assert_eq!(logits.len(), out.len());
    let mut max = f64::NEG_INFINITY;
    for &z in logits {
        if z > max {
            max = z;
        }
    }
    let mut sum = 0.0;
    for (o, &z) in out.iter_mut().zip(logits) {
        *o = (z - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

impl Classifier {
    /// Class probabilities for `x` (allocating convenience wrapper).
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        let mut s = Scratch::for_model(self);
        self.forward_scratch(x, &mut s);
        Ok(s.probs)
    }

    /// Allocation-free forward pass; probabilities land in `s.probs()`.
    pub fn forward_scratch(&self, x: &[f64], s: &mut Scratch) {
        debug_assert_eq!(x.len(), self.input_dim);
        s.acts[0].copy_from_slice(x);
        for (t, layer) in self.layers.iter().enumerate() {
            let (done, rest) = s.acts.split_at_mut(t + 1);
            let input = &done[t];
            let out = &mut rest[0];
            for i in 0..layer.rows {
                let row = &layer.weights[i * layer.cols..(i + 1) * layer.cols];
                let mut acc = layer.bias[i];
                for (w, a) in row.iter().zip(input.iter()) {
                    acc += w * a;
                }
                out[i] = match layer.activation {
                    Activation::Relu => {
                        if acc > 0.0 {
                            acc
                        } else {
                            0.0
                        }
                    }
                    Activation::Identity => acc,
                };
            }
        }
        let logits = &s.acts[self.layers.len()];
        softmax_into(logits, &mut s.probs);
    }

    /// Predicted class for `x` using the shared scratch.
    pub fn predict_scratch(&self, x: &[f64], s: &mut Scratch) -> usize {
        self.forward_scratch(x, s);
        argmax(&s.probs)
    }

    /// Gradient of softmax output `head` with respect to the input.
    pub fn input_gradient(&self, x: &[f64], head: usize) -> Result<Vec<f64>> {
        if x.len() != self.input_dim {
            return Err(Error::ShapeMismatch {
                expected: self.input_dim,
                got: x.len(),
            });
        }
        if head >= self.num_classes {
            return Err(Error::ClassOutOfRange {
                index: head,
                num_classes: self.num_classes,
            });
        }
        let mut s = Scratch::for_model(self);
        self.forward_scratch(x, &mut s);
        self.backward_input(head, &mut s);
        Ok(s.input_grad)
    }

    /// Backward pass reusing the forward state already in `s`; the result is
    /// left in `s.input_grad()`. Caller must have run `forward_scratch` with
    /// the same input immediately before.
    pub fn backward_input(&self, head: usize, s: &mut Scratch) {
        debug_assert!(head < self.num_classes);
        let k = self.num_classes;
        // d softmax_head / d logits = p_h (e_h - p)
        let ph = s.probs[head];
        for j in 0..k {
            s.g_cur[j] = if j == head {
                ph * (1.0 - s.probs[j])
            } else {
                -ph * s.probs[j]
            };
        }
        for (t, layer) in self.layers.iter().enumerate().rev() {
            // relu passes gradient only where it fired; relu'(0) = 0
            if layer.activation == Activation::Relu {
                let out = &s.acts[t + 1];
                for i in 0..layer.rows {
                    if out[i] <= 0.0 {
                        s.g_cur[i] = 0.0;
                    }
                }
            }
            for j in 0..layer.cols {
                s.g_next[j] = 0.0;
            }
            for i in 0..layer.rows {
                let g = s.g_cur[i];
                if g == 0.0 {
                    continue;
                }
                let row = &layer.weights[i * layer.cols..(i + 1) * layer.cols];
                for (gn, w) in s.g_next[..layer.cols].iter_mut().zip(row) {
                    *gn += w * g;
                }
            }
            std::mem::swap(&mut s.g_cur, &mut s.g_next);
        }
        s.input_grad.copy_from_slice(&s.g_cur[..self.input_dim]);
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::InvalidInput("classifier has no layers".into()));
        }
        let mut dim = self.input_dim;
        for layer in &self.layers {
            if layer.cols != dim {
                return Err(Error::ShapeMismatch {
                    expected: dim,
                    got: layer.cols,
                });
            }
            if layer.weights.len() != layer.rows * layer.cols || layer.bias.len() != layer.rows {
                return Err(Error::InvalidInput("layer buffer sizes disagree".into()));
            }
            dim = layer.rows;
        }
        if dim != self.num_classes {
            return Err(Error::ShapeMismatch {
                expected: self.num_classes,
                got: dim,
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::RngStream;

    fn identity_model(k: usize) -> Classifier {
        let mut weights = vec![0.0; k * k];
        for i in 0..k {
            weights[i * k + i] = 1.0;
        }
        Classifier {
            layers: vec![Layer {
                weights,
                bias: vec![0.0; k],
                rows: k,
                cols: k,
                activation: Activation::Identity,
            }],
            input_dim: k,
            num_classes: k,
        }
    }

    fn random_model(arch: &[usize], rng: &mut RngStream) -> Classifier {
        let mut layers = Vec::new();
        for w in arch.windows(2) {
            let (cols, rows) = (w[0], w[1]);
            let layers_left = arch.len() - 2 - layers.len();
            layers.push(Layer {
                weights: (0..rows * cols).map(|_| rng.uniform_symmetric()).collect(),
                bias: (0..rows).map(|_| 0.1 * rng.uniform_symmetric()).collect(),
                rows,
                cols,
                activation: if layers_left == 0 {
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

    #[test]
    fn symmetric_logits_split_evenly() {
        let m = identity_model(2);
        let p = m.forward(&[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_of_log_odds_is_exact() {
        let m = identity_model(2);
        let p = m.forward(&[3.0_f64.ln(), 0.0]).unwrap();
        assert!((p[0] - 0.75).abs() < 1e-12, "{p:?}");
        assert!((p[1] - 0.25).abs() < 1e-12, "{p:?}");
    }

    #[test]
    fn outputs_normalize_over_many_random_models() {
        let mut rng = RngStream::new(17, 0);
        for case in 0..1000 {
            let arch = [
                2 + rng.index(4),
                1 + rng.index(8),
                2 + rng.index(5),
            ];
            let m = random_model(&arch, &mut rng);
            let x: Vec<f64> = (0..arch[0]).map(|_| 3.0 * rng.uniform_symmetric()).collect();
            let p = m.forward(&x).unwrap();
            let sum: f64 = p.iter().sum();
            assert!((sum - 1.0).abs() < 1e-9, "case {case}: sum {sum}");
            assert!(p.iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn gradient_matches_softmax_linear_jacobian() {
        // one identity layer: d softmax_h / d x = p_h (W_h - sum_j p_j W_j)
        let m = Classifier {
            layers: vec![Layer {
                weights: vec![0.7, -0.3, 0.2, 1.1],
                bias: vec![0.05, -0.2],
                rows: 2,
                cols: 2,
                activation: Activation::Identity,
            }],
            input_dim: 2,
            num_classes: 2,
        };
        let x = [0.3, -0.6];
        let p = m.forward(&x).unwrap();
        for head in 0..2 {
            let got = m.input_gradient(&x, head).unwrap();
            for j in 0..2 {
                let wbar: f64 = (0..2).map(|i| p[i] * m.layers[0].weights[i * 2 + j]).sum();
                let want = p[head] * (m.layers[0].weights[head * 2 + j] - wbar);
                assert!(
                    (got[j] - want).abs() < 1e-14,
                    "head {head} coord {j}: {} vs {}",
                    got[j],
                    want
                );
            }
        }
    }

    // pre-activations of every layer, for the kink filter below
    fn preactivations(m: &Classifier, x: &[f64]) -> Vec<Vec<f64>> {
        let mut act = x.to_vec();
        let mut pre_all = Vec::new();
        for layer in &m.layers {
            let mut pre = vec![0.0; layer.rows];
            for i in 0..layer.rows {
                let row = &layer.weights[i * layer.cols..(i + 1) * layer.cols];
                pre[i] = layer.bias[i] + row.iter().zip(&act).map(|(w, a)| w * a).sum::<f64>();
            }
            act = pre
                .iter()
                .map(|&u| match layer.activation {
                    Activation::Relu => u.max(0.0),
                    Activation::Identity => u,
                })
                .collect();
            pre_all.push(pre);
        }
        pre_all
    }

    #[test]
    fn gradient_matches_central_differences() {
        let mut rng = RngStream::new(23, 0);
        let mut checked = 0;
        'outer: while checked < 20 {
            let m = random_model(&[4, 6, 5, 3], &mut rng);
            let x: Vec<f64> = (0..4).map(|_| rng.uniform_symmetric()).collect();
            // stay away from relu kinks so the derivative is classical
            for (layer, pre) in m.layers.iter().zip(preactivations(&m, &x)) {
                if layer.activation == Activation::Relu
                    && pre.iter().any(|u| u.abs() <= 1e-3)
                {
                    continue 'outer;
                }
            }
            let head = rng.index(3);
            let grad = m.input_gradient(&x, head).unwrap();
            let h = 1e-4;
            for j in 0..4 {
                let mut xp = x.clone();
                let mut xm = x.clone();
                xp[j] += h;
                xm[j] -= h;
                let fd =
                    (m.forward(&xp).unwrap()[head] - m.forward(&xm).unwrap()[head]) / (2.0 * h);
                let scale = grad[j].abs().max(fd.abs()).max(1e-8);
                assert!(
                    ((grad[j] - fd) / scale).abs() < 1e-5,
                    "coord {j}: analytic {} vs fd {}",
                    grad[j],
                    fd
                );
            }
            checked += 1;
        }
    }

    #[test]
    fn constant_model_has_zero_gradient() {
        let m = Classifier {
            layers: vec![Layer {
                weights: vec![0.0; 6],
                bias: vec![0.0; 2],
                rows: 2,
                cols: 3,
                activation: Activation::Identity,
            }],
            input_dim: 3,
            num_classes: 2,
        };
        let g = m.input_gradient(&[0.4, -1.0, 2.0], 1).unwrap();
        assert_eq!(g, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn shape_errors_are_reported() {
        let m = identity_model(2);
        assert!(m.forward(&[1.0, 2.0, 3.0]).is_err());
        assert!(m.input_gradient(&[1.0, 2.0], 5).is_err());
    }

    #[test]
    fn argmax_prefers_lowest_index_on_ties() {
        assert_eq!(argmax(&[0.4, 0.4, 0.2]), 0);
        assert_eq!(argmax(&[0.1, 0.6, 0.6]), 1);
        assert_eq!(argmax(&[1.0]), 0);
    }
}
