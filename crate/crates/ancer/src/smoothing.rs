//! Smoothing distributions and their reparameterized sampling: diagonal
//! anisotropic Gaussian, anisotropic uniform, and a zero-mean Gaussian
//! mixture. Draws are always produced as `x + theta (.) eps_raw` with a
//! parameter-free `eps_raw`, so gradients in theta can reuse the same noise.

use crate::error::{Error, Result};
use crate::stats::RngStream;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SmoothingKind {
    Gaussian,
    Uniform,
    Gmm,
}

impl SmoothingKind {
    pub fn name(self) -> &'static str {
        match self {
            SmoothingKind::Gaussian => "gaussian",
            SmoothingKind::Uniform => "uniform",
            SmoothingKind::Gmm => "gmm",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(SmoothingKind::Gaussian),
            "uniform" => Ok(SmoothingKind::Uniform),
            "gmm" => Ok(SmoothingKind::Gmm),
            other => Err(Error::InvalidInput(format!(
                "unknown smoothing kind {other:?}"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GmmComponent {
    /// Mixture weight in (0, 1]; weights sum to 1.
    pub weight: f64,
    /// Per-axis standard deviations of this component.
    pub theta: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub enum SmoothingSpec {
    /// N(0, diag(theta^2)): theta holds per-axis standard deviations.
    Gaussian { theta: Vec<f64> },
    /// x + diag(theta) * U[-1,1]^n: theta holds per-axis half-widths.
    Uniform { theta: Vec<f64> },
    Gmm { components: Vec<GmmComponent> },
}

fn check_theta(theta: &[f64]) -> Result<()> {
    if theta.is_empty() {
        return Err(Error::InvalidInput("theta must be non-empty".into()));
    }
    for &t in theta {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("non-positive smoothing scale {t}")));
        }
    }
    Ok(())
}

impl SmoothingSpec {
    pub fn gaussian(theta: Vec<f64>) -> Result<Self> {
        check_theta(&theta)?;
        Ok(SmoothingSpec::Gaussian { theta })
    }

    pub fn uniform(theta: Vec<f64>) -> Result<Self> {
        check_theta(&theta)?;
        Ok(SmoothingSpec::Uniform { theta })
    }

    pub fn isotropic(kind: SmoothingKind, dim: usize, sigma: f64) -> Result<Self> {
        match kind {
            SmoothingKind::Gaussian => SmoothingSpec::gaussian(vec![sigma; dim]),
            SmoothingKind::Uniform => SmoothingSpec::uniform(vec![sigma; dim]),
            SmoothingKind::Gmm => Err(Error::InvalidInput(
                "gmm smoothing needs explicit components".into(),
            )),
        }
    }

    pub fn gmm(components: Vec<GmmComponent>) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::Domain("gmm needs at least one component".into()));
        }
        let dim = components[0].theta.len();
        let mut total = 0.0;
        for c in &components {
            if !(c.weight > 0.0 && c.weight <= 1.0) {
                return Err(Error::Domain(format!("gmm weight {} out of (0,1]", c.weight)));
            }
            if c.theta.len() != dim {
                return Err(Error::ShapeMismatch {
                    expected: dim,
                    got: c.theta.len(),
                });
            }
            check_theta(&c.theta)?;
            total += c.weight;
        }
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::Domain(format!("gmm weights sum to {total}, not 1")));
        }
        Ok(SmoothingSpec::Gmm { components })
    }

    pub fn kind(&self) -> SmoothingKind {
        match self {
            SmoothingSpec::Gaussian { .. } => SmoothingKind::Gaussian,
            SmoothingSpec::Uniform { .. } => SmoothingKind::Uniform,
            SmoothingSpec::Gmm { .. } => SmoothingKind::Gmm,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            SmoothingSpec::Gaussian { theta } | SmoothingSpec::Uniform { theta } => theta.len(),
            SmoothingSpec::Gmm { components } => components[0].theta.len(),
        }
    }

    /// The per-axis scale vector for the single-distribution kinds.
    pub fn theta(&self) -> Option<&[f64]> {
        match self {
            SmoothingSpec::Gaussian { theta } | SmoothingSpec::Uniform { theta } => Some(theta),
            SmoothingSpec::Gmm { .. } => None,
        }
    }

    pub fn components(&self) -> Option<&[GmmComponent]> {
        match self {
            SmoothingSpec::Gmm { components } => Some(components),
            _ => None,
        }
    }

    /// One reparameterized draw: fills `eps_raw` with parameter-free noise
    /// and `out` with `x + theta (.) eps_raw`. For the mixture, one weight
    /// draw selects the component (consumed even when K = 1, so streams stay
    /// aligned when K changes).
    pub fn sample_perturbed_into(
        &self,
        x: &[f64],
        rng: &mut RngStream,
        eps_raw: &mut [f64],
        out: &mut [f64],
    ) -> Result<()> {
        let n = self.dim();
        if x.len() != n || eps_raw.len() != n || out.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: x.len(),
            });
        }
        let theta: &[f64] = match self {
            SmoothingSpec::Gaussian { theta } => {
                for e in eps_raw.iter_mut() {
                    *e = rng.standard_normal();
                }
                theta
            }
            SmoothingSpec::Uniform { theta } => {
                for e in eps_raw.iter_mut() {
                    *e = rng.uniform_symmetric();
                }
                theta
            }
            SmoothingSpec::Gmm { components } => {
                let pick = rng.weighted_index(components.iter().map(|c| c.weight));
                for e in eps_raw.iter_mut() {
                    *e = rng.standard_normal();
                }
                &components[pick].theta
            }
        };
        for i in 0..n {
            out[i] = x[i] + theta[i] * eps_raw[i];
        }
        Ok(())
    }

    /// Allocating wrapper around `sample_perturbed_into`.
    pub fn sample_perturbed(&self, x: &[f64], rng: &mut RngStream) -> Result<(Vec<f64>, Vec<f64>)> {
        let mut eps = vec![0.0; self.dim()];
        let mut out = vec![0.0; self.dim()];
        self.sample_perturbed_into(x, rng, &mut eps, &mut out)?;
        Ok((eps, out))
    }
}

/// Diagonal of the effective covariance B of the mixture certificate:
/// 1/b_i = sum_k alpha_k / theta_{k,i}^2.
pub fn gmm_effective_matrix(components: &[GmmComponent]) -> Result<Vec<f64>> {
    if components.is_empty() {
        return Err(Error::Domain("gmm needs at least one component".into()));
    }
    let n = components[0].theta.len();
    let mut inv_b = vec![0.0; n];
    for c in components {
        if c.theta.len() != n {
            return Err(Error::ShapeMismatch {
                expected: n,
                got: c.theta.len(),
            });
        }
        check_theta(&c.theta)?;
        for (acc, &t) in inv_b.iter_mut().zip(&c.theta) {
            *acc += c.weight / (t * t);
        }
    }
    Ok(inv_b.iter().map(|v| 1.0 / v).collect())
}
