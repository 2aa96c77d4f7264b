//! Probability machinery shared by every other module.

pub mod dist;
pub mod normal;
pub mod quad;
pub mod rng;

pub use dist::{LogNormalPrt, PrtDistribution, TruncatedNormalPrt, TAIL_CUTOFF};
pub use normal::{norm_cdf, norm_pdf, norm_quantile, norm_sf, std_normal_cdf, std_normal_quantile};
pub use quad::{integrate, integrate_with_error, Integral, QuadratureSpec};
pub use rng::SeededRng;
