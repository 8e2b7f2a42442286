//! Extremile scalar-on-function regression.
//!
//! Given curves `X_i` tabulated on a shared grid and scalar responses `Y_i`,
//! the conditional extremile `ξ_τ(x)` is estimated by a local linear fit in
//! the span of the leading functional principal components, with observation
//! weights `J_τ(F̂(Y_i | X_i))` built from a kernel conditional CDF estimate and
//! nearest-neighbour bandwidths rescaled by a level-dependent factor.
//!
//! Numerical modules are generic over [`Scalar`] (`f32` or `f64`); the
//! simulation harness and the CLI run in `f64`. Concrete aliases for both
//! precisions are exported below.

pub mod ccdf;
pub mod cli;
pub mod curves;
pub mod error;
pub mod extremile;
pub mod fpca;
pub mod kernel;
pub mod linalg;
pub mod quadrature;
pub mod quantile;
pub mod regression;
pub mod scalar;
pub mod simulation;

pub use ccdf::{BandwidthGrid, CcdfConfig, CcdfModel, VhatForm};
pub use curves::{distance_matrix, inner_product, l2_distance, Curve, CurveSample, Grid};
pub use error::{Error, Result};
pub use extremile::{
    adaptive_factor, big_k, exponent_r, exponent_s, gaussian_extremile, little_j,
    std_normal_quantile, ExtremileLevel,
};
pub use fpca::{fit_fpca, project_scores, FpcaBasis};
pub use kernel::KernelSpec;
pub use quantile::{check_loss, fit_quantile, predict_quantiles, QuantileFit};
pub use regression::{
    fit_extremile, local_linear_mean, predict_extremiles, ExtremileFit, ExtremileModel, KRule,
    RegressionConfig,
};
pub use scalar::Scalar;

pub type Grid64 = Grid<f64>;
pub type Curve64 = Curve<f64>;
pub type CurveSample64 = CurveSample<f64>;
pub type FpcaBasis64 = FpcaBasis<f64>;
pub type ExtremileLevel64 = ExtremileLevel<f64>;
pub type ExtremileFit64 = ExtremileFit<f64>;
pub type ExtremileModel64 = ExtremileModel<f64>;
pub type CcdfModel64 = CcdfModel<f64>;
pub type QuantileFit64 = QuantileFit<f64>;

pub type Grid32 = Grid<f32>;
pub type Curve32 = Curve<f32>;
pub type CurveSample32 = CurveSample<f32>;
pub type FpcaBasis32 = FpcaBasis<f32>;
pub type ExtremileLevel32 = ExtremileLevel<f32>;
pub type ExtremileFit32 = ExtremileFit<f32>;
pub type ExtremileModel32 = ExtremileModel<f32>;
pub type CcdfModel32 = CcdfModel<f32>;
pub type QuantileFit32 = QuantileFit<f32>;
