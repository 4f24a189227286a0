//! Tail-risk analysis of bounded, heavy-tailed severities.
//!
//! Severities on `[L, H)` are mapped to an unbounded dual scale ([`dual`]),
//! where a generalized Pareto tail is fitted ([`gpd`]). Moments of the bounded
//! variable are then recovered from the fitted dual tail ([`shadow`]).
//! [`corpus`] loads event records, [`diagnostics`] and [`arrivals`] provide
//! exploratory statistics and Poisson-arrival tests, [`resample`] measures the
//! robustness of the shape estimate, and [`synth`] generates test data.
//!
//! The numeric kernels are generic over [`Real`] (`f32`, `f64`); the data
//! pipeline works in `f64`.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrivals;
pub mod corpus;
pub mod diagnostics;
pub mod dual;
pub mod error;
pub mod gpd;
pub mod optimize;
pub mod quadrature;
pub mod resample;
pub mod scalar;
pub mod seeds;
pub mod shadow;
pub mod special;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision bounds, the pipeline default.
pub type Bounds = dual::DualBounds<f64>;
pub type Bounds32 = dual::DualBounds<f32>;
pub type Gpd = gpd::GpdParams<f64>;
pub type Gpd32 = gpd::GpdParams<f32>;
pub type MePlot = diagnostics::MePlotSeries<f64>;
pub type MsPlot = diagnostics::MsPlotSeries<f64>;
pub type Records = diagnostics::RecordSeries<f64>;
pub type Qq = diagnostics::QqPlot<f64>;
