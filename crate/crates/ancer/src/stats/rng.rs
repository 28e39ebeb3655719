use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

/// Deterministic random stream: a counter-mode generator addressed by
/// `(global_seed, stream_id)`. Distinct stream ids yield independent
/// sequences, so parallel workers can each own a stream derived from their
/// sample index and reproduce the serial run exactly.
///
/// Gaussian variates use Box-Muller on the raw uniform stream so the drawn
/// values are identical across platforms and library versions.
#[derive(Clone, Debug)]
pub struct RngStream {
    chacha: ChaCha8Rng,
    spare_normal: Option<f64>,
}

impl RngStream {
    pub fn new(global_seed: u64, stream_id: u64) -> Self {
        let mut chacha = ChaCha8Rng::seed_from_u64(global_seed);
        chacha.set_stream(stream_id);
        RngStream {
            chacha,
            spare_normal: None,
        }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.chacha.next_u64()
    }

    /// Uniform on [0, 1) with 53 random bits.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on (0, 1]; safe as a logarithm argument.
    fn next_f64_open_zero(&mut self) -> f64 {
        ((self.next_u64() >> 11) + 1) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on [-1, 1).
    pub fn uniform_symmetric(&mut self) -> f64 {
        2.0 * self.next_f64() - 1.0
    }

    /// Standard normal via Box-Muller; pairs are cached so consecutive calls
    /// consume the underlying stream two uniforms at a time.
    pub fn standard_normal(&mut self) -> f64 {
        if let Some(z) = self.spare_normal.take() {
            return z;
        }
        let r = (-2.0 * self.next_f64_open_zero().ln()).sqrt();
        let t = 2.0 * std::f64::consts::PI * self.next_f64();
        self.spare_normal = Some(r * t.sin());
        r * t.cos()
    }

    /// Uniform index in [0, bound) via the widening-multiply map; bias is
    /// below 2^-64 and the draw cost is a single u64.
    pub fn index(&mut self, bound: usize) -> usize {
        debug_assert!(bound > 0);
        (((self.next_u64() as u128) * (bound as u128)) >> 64) as usize
    }

    /// Samples an index proportionally to `weights` (assumed nonnegative,
    /// summing to ~1). Always consumes exactly one uniform.
    pub fn weighted_index<I>(&mut self, weights: I) -> usize
    where
        I: IntoIterator<Item = f64>,
    {
        let u = self.next_f64();
        let mut acc = 0.0;
        let mut last = 0;
        for (i, w) in weights.into_iter().enumerate() {
            acc += w;
            last = i;
            if u < acc {
                return i;
            }
        }
        last
    }

    /// Fisher-Yates shuffle driven by this stream.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.index(i + 1);
            items.swap(i, j);
        }
    }
}
