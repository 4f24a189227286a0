//! Generalized Pareto distribution of threshold excesses.
//!
//! ```text
//! G(w) = 1 − (1 + ξ w/σ)^(−1/ξ)    ξ ≠ 0
//! G(w) = 1 − exp(−w/σ)             ξ = 0
//! ```
//!
//! Support is `w ≥ 0` for `ξ ≥ 0` and `0 ≤ w ≤ −σ/ξ` for `ξ < 0`. For
//! `|ξ| < 1e-8` first-order series in `ξ` replace the `1/ξ` forms.

mod fit;
mod gof;
mod pickands;

pub use fit::{
    fit_exceedances, fit_mle, log_likelihood, residuals, tail_stability_scan, Convergence,
    FiniteMoments, FitOptions, GpdFit, Residuals, StabilityScan,
};
pub use gof::{anderson_darling, goodness_of_fit, GoodnessOfFit};
pub use pickands::{pickands_curve, PickandsCurve, PickandsPoint};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Shape values closer to zero than this use the exponential-limit series.
pub const XI_ZERO_BAND: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GpdParams<T> {
    pub xi: T,
    pub sigma: T,
    /// Threshold the excesses were measured from.
    pub threshold: T,
    pub n_exceed: usize,
}

impl<T: Real> GpdParams<T> {
    pub fn new(xi: T, sigma: T) -> Result<Self> {
        if !(sigma > T::zero() && sigma.is_finite()) || !xi.is_finite() {
            return Err(Error::domain(format!("GPD needs finite xi and sigma > 0 (xi={xi}, sigma={sigma})")));
        }
        Ok(Self {
            xi,
            sigma,
            threshold: T::zero(),
            n_exceed: 0,
        })
    }

    pub fn with_threshold(mut self, threshold: T, n_exceed: usize) -> Self {
        self.threshold = threshold;
        self.n_exceed = n_exceed;
        self
    }

    fn near_zero(&self) -> bool {
        self.xi.abs() < T::lit(XI_ZERO_BAND)
    }

    /// Right end of the support (`∞` for `ξ ≥ 0`).
    pub fn support_end(&self) -> T {
        if self.xi < T::zero() {
            -self.sigma / self.xi
        } else {
            T::infinity()
        }
    }

    fn check(&self, w: T) -> Result<T> {
        if w.is_nan() || w < T::zero() || w > self.support_end() {
            return Err(Error::domain(format!(
                "excess {w} outside GPD support [0, {}]",
                self.support_end()
            )));
        }
        Ok(w / self.sigma)
    }

    /// `(1/ξ)·ln(1 + ξ w/σ)`; standard exponential under a correct model.
    pub fn residual(&self, w: T) -> Result<T> {
        let x = self.check(w)?;
        Ok(if self.near_zero() {
            x - self.xi * x * x * T::lit(0.5)
        } else {
            (self.xi * x).ln_1p() / self.xi
        })
    }

    /// `ln(1 − G(w))`
    pub fn log_survival(&self, w: T) -> Result<T> {
        self.residual(w).map(|r| -r)
    }

    pub fn survival(&self, w: T) -> Result<T> {
        self.log_survival(w).map(T::exp)
    }

    pub fn cdf(&self, w: T) -> Result<T> {
        self.log_survival(w).map(|l| -l.exp_m1())
    }

    pub fn log_pdf(&self, w: T) -> Result<T> {
        let x = self.check(w)?;
        let ln_sigma = self.sigma.ln();
        Ok(if self.near_zero() {
            -ln_sigma - x + self.xi * (x * x * T::lit(0.5) - x)
        } else {
            let l = (self.xi * x).ln_1p();
            -ln_sigma - l - l / self.xi
        })
    }

    pub fn pdf(&self, w: T) -> Result<T> {
        if self.xi < T::zero() && w == self.support_end() && self.xi > -T::one() {
            return Ok(T::zero());
        }
        self.log_pdf(w).map(T::exp)
    }

    /// Inverse CDF for `p ∈ [0, 1)`.
    pub fn quantile(&self, p: T) -> Result<T> {
        if p.is_nan() || p < T::zero() || p >= T::one() {
            if p == T::one() {
                return Ok(self.support_end());
            }
            return Err(Error::domain(format!("quantile probability {p} outside [0, 1)")));
        }
        // L = −ln(1 − p)
        let l = -(-p).ln_1p();
        Ok(if self.near_zero() {
            self.sigma * (l + self.xi * l * l * T::lit(0.5))
        } else {
            self.sigma * (self.xi * l).exp_m1() / self.xi
        })
    }

    /// Whether the `p`-th moment is finite (`ξ < 1/p`).
    pub fn moment_exists(&self, p: u32) -> bool {
        self.xi * T::from_u32(p).expect("u32 fits") < T::one()
    }
}
