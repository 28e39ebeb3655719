//! Geometry of certified regions: membership, proxy radius, (log-)volume,
//! maximum enclosed isotropic ball, and the superiority partial order.

use crate::error::{Error, Result};
use crate::stats::RngStream;
use statrs::function::gamma::ln_gamma;

#[derive(Clone, Debug, PartialEq)]
pub enum Region {
    /// Certificate of an abstained sample; contains nothing.
    Empty { dim: usize },
    L1Ball { dim: usize, radius: f64 },
    L2Ball { dim: usize, radius: f64 },
    /// { delta : sum (delta_i / theta_i)^2 <= scale^2 }, semi-axes theta_i * scale.
    Ellipsoid { theta: Vec<f64>, scale: f64 },
    /// { delta : sum |delta_i| / theta_i <= scale }, vertices at theta_i * scale * e_i.
    CrossPolytope { theta: Vec<f64>, scale: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SupersetRelation {
    Superset,
    NotSuperset,
    Undetermined,
}

/// Result of a superiority comparison; `strict` is meaningful only when the
/// relation is `Superset` and records whether some axis dominates strictly.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Superiority {
    pub relation: SupersetRelation,
    pub strict: bool,
}

fn check_theta(theta: &[f64]) -> Result<()> {
    if theta.is_empty() {
        return Err(Error::InvalidInput("region needs at least one axis".into()));
    }
    for &t in theta {
        if !(t > 0.0 && t.is_finite()) {
            return Err(Error::Domain(format!("non-positive region axis {t}")));
        }
    }
    Ok(())
}

fn check_scale(r: f64) -> Result<()> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(Error::Domain(format!("invalid region scale {r}")));
    }
    Ok(())
}

impl Region {
    pub fn empty(dim: usize) -> Region {
        Region::Empty { dim }
    }

    pub fn l1_ball(dim: usize, radius: f64) -> Result<Region> {
        check_scale(radius)?;
        Ok(Region::L1Ball { dim, radius })
    }

    pub fn l2_ball(dim: usize, radius: f64) -> Result<Region> {
        check_scale(radius)?;
        Ok(Region::L2Ball { dim, radius })
    }

    pub fn ellipsoid(theta: Vec<f64>, scale: f64) -> Result<Region> {
        check_theta(&theta)?;
        check_scale(scale)?;
        Ok(Region::Ellipsoid { theta, scale })
    }

    pub fn cross_polytope(theta: Vec<f64>, scale: f64) -> Result<Region> {
        check_theta(&theta)?;
        check_scale(scale)?;
        Ok(Region::CrossPolytope { theta, scale })
    }

    pub fn dim(&self) -> usize {
        match self {
            Region::Empty { dim } | Region::L1Ball { dim, .. } | Region::L2Ball { dim, .. } => {
                *dim
            }
            Region::Ellipsoid { theta, .. } | Region::CrossPolytope { theta, .. } => theta.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        matches!(self, Region::Empty { .. })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            Region::Empty { .. } => "empty",
            Region::L1Ball { .. } => "l1_ball",
            Region::L2Ball { .. } => "l2_ball",
            Region::Ellipsoid { .. } => "ellipsoid",
            Region::CrossPolytope { .. } => "gen_cross_polytope",
        }
    }

    /// Evaluates the defining inequality (boundary counts as inside).
    pub fn contains(&self, delta: &[f64]) -> Result<bool> {
        if delta.len() != self.dim() {
            return Err(Error::ShapeMismatch {
                expected: self.dim(),
                got: delta.len(),
            });
        }
        Ok(match self {
            Region::Empty { .. } => false,
            Region::L1Ball { radius, .. } => {
                delta.iter().map(|d| d.abs()).sum::<f64>() <= *radius
            }
            Region::L2Ball { radius, .. } => {
                delta.iter().map(|d| d * d).sum::<f64>() <= radius * radius
            }
            Region::Ellipsoid { theta, scale } => {
                ellipsoid_norm(theta, delta) <= *scale
            }
            Region::CrossPolytope { theta, scale } => {
                cross_polytope_norm(theta, delta) <= *scale
            }
        })
    }

    /// n-th root of the volume up to the unit-shape constant: r times the
    /// geometric mean of the axes. Coincides with the radius for isotropic
    /// regions; 0 for the empty region.
    pub fn proxy_radius(&self) -> f64 {
        match self {
            Region::Empty { .. } => 0.0,
            Region::L1Ball { radius, .. } | Region::L2Ball { radius, .. } => *radius,
            Region::Ellipsoid { theta, scale } | Region::CrossPolytope { theta, scale } => {
                let mean_log = theta.iter().map(|t| t.ln()).sum::<f64>() / theta.len() as f64;
                scale * mean_log.exp()
            }
        }
    }

    /// Natural log of the volume; -inf for the empty region. Log-gamma keeps
    /// this finite for dimensions in the thousands.
    pub fn log_volume(&self) -> f64 {
        fn ellipsoid_lv(n: usize, log_semi_axes_sum: f64) -> f64 {
            let half_n = n as f64 / 2.0;
            log_semi_axes_sum + half_n * std::f64::consts::PI.ln() - ln_gamma(half_n + 1.0)
        }
        fn cross_polytope_lv(n: usize, log_semi_axes_sum: f64) -> f64 {
            log_semi_axes_sum + n as f64 * 2.0_f64.ln() - ln_gamma(n as f64 + 1.0)
        }
        match self {
            Region::Empty { .. } => f64::NEG_INFINITY,
            Region::L2Ball { dim, radius } => ellipsoid_lv(*dim, *dim as f64 * radius.ln()),
            Region::L1Ball { dim, radius } => cross_polytope_lv(*dim, *dim as f64 * radius.ln()),
            Region::Ellipsoid { theta, scale } => {
                let sum = theta.iter().map(|t| (t * scale).ln()).sum::<f64>();
                ellipsoid_lv(theta.len(), sum)
            }
            Region::CrossPolytope { theta, scale } => {
                let sum = theta.iter().map(|t| (t * scale).ln()).sum::<f64>();
                cross_polytope_lv(theta.len(), sum)
            }
        }
    }

    /// Radius of the largest isotropic ball (l2 for ellipsoids, l1 for
    /// cross-polytopes) contained in the region.
    pub fn enclosed_radius(&self) -> f64 {
        match self {
            Region::Empty { .. } => 0.0,
            Region::L1Ball { radius, .. } | Region::L2Ball { radius, .. } => *radius,
            Region::Ellipsoid { theta, scale } | Region::CrossPolytope { theta, scale } => {
                scale * theta.iter().copied().fold(f64::INFINITY, f64::min)
            }
        }
    }

    /// The largest enclosed isotropic ball as a region of its own.
    pub fn max_enclosed_ball(&self) -> Region {
        match self {
            Region::Empty { dim } => Region::Empty { dim: *dim },
            Region::L1Ball { .. } | Region::L2Ball { .. } => self.clone(),
            Region::Ellipsoid { theta, .. } => Region::L2Ball {
                dim: theta.len(),
                radius: self.enclosed_radius(),
            },
            Region::CrossPolytope { theta, .. } => Region::L1Ball {
                dim: theta.len(),
                radius: self.enclosed_radius(),
            },
        }
    }

    /// Semi-axis lengths along the coordinate axes, when the region has them.
    pub fn semi_axes(&self) -> Option<Vec<f64>> {
        match self {
            Region::Empty { .. } => None,
            Region::L1Ball { dim, radius } | Region::L2Ball { dim, radius } => {
                Some(vec![*radius; *dim])
            }
            Region::Ellipsoid { theta, scale } | Region::CrossPolytope { theta, scale } => {
                Some(theta.iter().map(|t| t * scale).collect())
            }
        }
    }

    // l2-like families (ellipsoid, l2 ball) compare; l1-like likewise.
    fn family(&self) -> Option<u8> {
        match self {
            Region::Empty { .. } => None,
            Region::L2Ball { .. } | Region::Ellipsoid { .. } => Some(2),
            Region::L1Ball { .. } | Region::CrossPolytope { .. } => Some(1),
        }
    }
}

/// Whether `a`'s region contains `b`'s. Same-family axis-aligned pairs are
/// decided exactly by per-axis semi-axis dominance (for co-centered
/// ellipsoids and cross-polytopes this is necessary and sufficient);
/// cross-family pairs are not attempted.
pub fn is_superior(a: &Region, b: &Region) -> Result<Superiority> {
    if a.dim() != b.dim() {
        return Err(Error::ShapeMismatch {
            expected: a.dim(),
            got: b.dim(),
        });
    }
    // The empty region is a subset of everything and a superset of nothing
    // but itself.
    if b.is_empty() {
        return Ok(Superiority {
            relation: SupersetRelation::Superset,
            strict: !a.is_empty(),
        });
    }
    if a.is_empty() {
        return Ok(Superiority {
            relation: SupersetRelation::NotSuperset,
            strict: false,
        });
    }
    if a.family() != b.family() {
        return Ok(Superiority {
            relation: SupersetRelation::Undetermined,
            strict: false,
        });
    }
    let sa = a.semi_axes().expect("non-empty");
    let sb = b.semi_axes().expect("non-empty");
    let mut strict = false;
    for (&x, &y) in sa.iter().zip(&sb) {
        if x < y {
            return Ok(Superiority {
                relation: SupersetRelation::NotSuperset,
                strict: false,
            });
        }
        if x > y {
            strict = true;
        }
    }
    Ok(Superiority {
        relation: SupersetRelation::Superset,
        strict,
    })
}

/// Log-volume sandwich for the generalized cross-polytope: the exact value
/// lies between n ln(2r/n) + sum ln theta and n ln(2r) + sum ln theta.
pub fn cross_polytope_volume_bounds(theta: &[f64], r: f64) -> Result<(f64, f64)> {
    check_theta(theta)?;
    check_scale(r)?;
    let n = theta.len() as f64;
    let log_det = theta.iter().map(|t| t.ln()).sum::<f64>();
    let lower = n * (2.0 * r / n).ln() + log_det;
    let upper = n * (2.0 * r).ln() + log_det;
    Ok((lower, upper))
}

/// Mahalanobis-style norm sqrt(sum (d_i/theta_i)^2) defining the ellipsoid.
pub fn ellipsoid_norm(theta: &[f64], d: &[f64]) -> f64 {
    theta
        .iter()
        .zip(d)
        .map(|(t, x)| {
            let q = x / t;
            q * q
        })
        .sum::<f64>()
        .sqrt()
}

/// Its dual: sqrt(sum (theta_i d_i)^2).
pub fn ellipsoid_dual_norm(theta: &[f64], d: &[f64]) -> f64 {
    theta
        .iter()
        .zip(d)
        .map(|(t, x)| {
            let q = t * x;
            q * q
        })
        .sum::<f64>()
        .sqrt()
}

/// Weighted l1 norm sum |d_i|/theta_i defining the cross-polytope.
pub fn cross_polytope_norm(theta: &[f64], d: &[f64]) -> f64 {
    theta.iter().zip(d).map(|(t, x)| x.abs() / t).sum()
}

/// Its dual: max_i theta_i |d_i|.
pub fn cross_polytope_dual_norm(theta: &[f64], d: &[f64]) -> f64 {
    theta
        .iter()
        .zip(d)
        .map(|(t, x)| t * x.abs())
        .fold(0.0, f64::max)
}

/// Rejection-sampling volume estimate over the region's bounding box;
/// returns (volume, standard error). Test oracle only — cost is exponential
/// in the dimension, so it is capped at n <= 8.
pub fn mc_volume(region: &Region, draws: usize, rng: &mut RngStream) -> Result<(f64, f64)> {
    let n = region.dim();
    if n > 8 {
        return Err(Error::UnsupportedDimension(n));
    }
    if region.is_empty() {
        return Ok((0.0, 0.0));
    }
    let half_widths = region.semi_axes().expect("non-empty");
    let log_box: f64 = half_widths.iter().map(|w| (2.0 * w).ln()).sum();
    let box_volume = log_box.exp();
    let mut point = vec![0.0; n];
    let mut hits = 0usize;
    for _ in 0..draws {
        for (p, w) in point.iter_mut().zip(&half_widths) {
            *p = w * rng.uniform_symmetric();
        }
        if region.contains(&point)? {
            hits += 1;
        }
    }
    let p_hat = hits as f64 / draws as f64;
    let volume = p_hat * box_volume;
    let se = box_volume * (p_hat * (1.0 - p_hat) / draws as f64).sqrt();
    Ok((volume, se))
}
