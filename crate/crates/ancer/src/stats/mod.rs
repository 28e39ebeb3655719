//! Deterministic randomness and the scalar probability kernels everything
//! else is built on.

mod binomial;
mod normal;
mod rng;

pub use binomial::clopper_pearson_lower;
pub use normal::{erf, erfc, std_normal_cdf, std_normal_icdf, std_normal_pdf, INV_SQRT_2PI};
pub use rng::RngStream;
