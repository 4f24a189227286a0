//! Shadow moments: moments of the bounded severity recovered from a GPD
//! fitted to its dual.
//!
//! With the dual excess `W = φ(Y) − L ~ GPD(ξ, σ)`, write `α = 1/ξ`, `k = σ/H`
//! and `T = W/H ~ GPD(ξ, k)`. Then `Y = L + (H − L)(1 − e^{−T})` and
//!
//! ```text
//! f(y) = (1 − (ln(H−y) − ln(H−L))/(αk))^{−α−1} / ((H − y)·k)     L ≤ y < H
//! E[Y] = L + (H − L)·e^{αk}·(αk)^α·Γ(1 − α, αk)                    α < 1
//! ```
//!
//! Every integral is taken in `t`, where `f(y) dy` is the GPD density of `T`.
//! Near `y = H` double precision cannot resolve `H − y`: for heavy dual tails
//! with a small scale, a few parts in 10⁴ of the mass lie beyond the last representable
//! `y`, so integrals in `y` itself cannot reach a 1e-6 tolerance.

use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{ObservationSet, View};
use crate::dual::{phi, DualBounds};
use crate::error::{Error, Result};
use crate::gpd::{fit_mle, FitOptions, GpdFit};
use crate::quadrature::{integrate_to_infinity, Integral, QuadOptions};
use crate::special::upper_incomplete_gamma;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ShadowParams {
    /// `1/ξ`
    pub alpha: f64,
    /// `σ/H`
    pub k: f64,
    pub bounds: DualBounds<f64>,
}

impl ShadowParams {
    /// From the dual GPD shape and scale of excesses over `L = bounds.lower()`.
    pub fn new(xi: f64, sigma: f64, bounds: DualBounds<f64>) -> Result<Self> {
        if !(xi > 0.0 && xi.is_finite()) {
            return Err(Error::domain(format!("shadow moments need a dual shape xi > 0, got {xi}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::domain(format!("shadow moments need sigma > 0, got {sigma}")));
        }
        Ok(Self {
            alpha: 1.0 / xi,
            k: sigma / bounds.upper(),
            bounds,
        })
    }

    pub fn from_fit(fit: &GpdFit, bounds: DualBounds<f64>) -> Result<Self> {
        Self::new(fit.xi(), fit.sigma(), bounds)
    }

    pub fn xi(&self) -> f64 {
        1.0 / self.alpha
    }

    pub fn sigma(&self) -> f64 {
        self.k * self.bounds.upper()
    }

    /// The incomplete-gamma closed form needs `α < 1` (`ξ > 1`).
    pub fn closed_form_available(&self) -> bool {
        self.alpha < 1.0
    }

    /// `ln` of the density of `T` at `t ≥ 0`.
    fn ln_density_t(&self, t: f64) -> f64 {
        -(self.alpha + 1.0) * (t / (self.alpha * self.k)).ln_1p() - self.k.ln()
    }

    /// `y(t) − c` without cancellation at small `t`.
    fn offset(&self, t: f64, c: f64) -> f64 {
        (self.bounds.lower() - c) + self.bounds.width() * (-(-t).exp_m1())
    }
}

/// How a shadow value was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ShadowMethod {
    ClosedForm,
    Quadrature,
}

fn quad_options() -> QuadOptions<f64> {
    QuadOptions::with_tolerance(1e-300, 1e-9)
}

/// `f(y; α, k)` for `y ∈ [L, H)`.
pub fn real_tail_density(y: f64, params: &ShadowParams) -> Result<f64> {
    let (l, h) = (params.bounds.lower(), params.bounds.upper());
    if y.is_nan() || y < l || y >= h {
        return Err(Error::domain(format!("density argument y={y} outside [{l}, {h})")));
    }
    let t = -((h - y) / (h - l)).ln();
    Ok((params.ln_density_t(t) - (h - y).ln()).exp())
}

/// `∫_L^H f(y) dy`, taken in `t` where `f(y)·dy/dt` is the density of `T`.
pub fn density_mass(params: &ShadowParams) -> Result<Integral<f64>> {
    integrate_to_infinity(|t| params.ln_density_t(t).exp(), 0.0, params.k, &quad_options())
}

/// `P(Y > y)` from the closed-form survival of `T`.
pub fn real_tail_survival(y: f64, params: &ShadowParams) -> Result<f64> {
    let (l, h) = (params.bounds.lower(), params.bounds.upper());
    if y.is_nan() || y < l || y > h {
        return Err(Error::domain(format!("survival argument y={y} outside [{l}, {h}]")));
    }
    if y == h {
        return Ok(0.0);
    }
    let t = -((h - y) / (h - l)).ln();
    Ok((-params.alpha * (t / (params.alpha * params.k)).ln_1p()).exp())
}

/// Closed-form shadow mean; requires `α < 1`.
pub fn shadow_mean_closed_form(params: &ShadowParams) -> Result<f64> {
    if !params.closed_form_available() {
        return Err(Error::domain(format!(
            "closed-form shadow mean needs alpha < 1 (xi > 1), got alpha={}",
            params.alpha
        )));
    }
    let x = params.alpha * params.k;
    let g = upper_incomplete_gamma(1.0 - params.alpha, x)?;
    let frac = (x + params.alpha * x.ln() + g.ln()).exp();
    Ok(params.bounds.lower() + params.bounds.width() * frac)
}

/// `∫ (y − center)^p f(y) dy` by adaptive quadrature in `t`.
pub fn shadow_moment(params: &ShadowParams, p: u32, center: Option<f64>) -> Result<f64> {
    if !(1..=4).contains(&p) {
        return Err(Error::domain(format!("shadow moment order {p} outside 1..=4")));
    }
    let c = center.unwrap_or(0.0);
    let r = integrate_to_infinity(
        |t| params.offset(t, c).powi(p as i32) * params.ln_density_t(t).exp(),
        0.0,
        params.k,
        &quad_options(),
    )?;
    Ok(r.value)
}

pub fn shadow_mean_quadrature(params: &ShadowParams) -> Result<f64> {
    shadow_moment(params, 1, None)
}

/// Closed form when available, quadrature otherwise.
pub fn shadow_mean(params: &ShadowParams) -> Result<(f64, ShadowMethod)> {
    if params.closed_form_available() {
        Ok((shadow_mean_closed_form(params)?, ShadowMethod::ClosedForm))
    } else {
        Ok((shadow_mean_quadrature(params)?, ShadowMethod::Quadrature))
    }
}

/// Square root of the second moment about the shadow mean.
pub fn shadow_sd(params: &ShadowParams) -> Result<f64> {
    let (mean, _) = shadow_mean(params)?;
    Ok(shadow_moment(params, 2, Some(mean))?.max(0.0).sqrt())
}

/// Shadow mean at fixed `(ξ, σ)` for each upper bound in `uppers`.
pub fn h_sensitivity(xi: f64, sigma: f64, lower: f64, uppers: &[f64]) -> Result<Vec<(f64, f64)>> {
    uppers
        .iter()
        .map(|&h| {
            let p = ShadowParams::new(xi, sigma, DualBounds::new(lower, h)?)?;
            Ok((h, shadow_mean(&p)?.0))
        })
        .collect()
}

fn values_at_or_above(obs: &ObservationSet, l: f64) -> Result<Vec<f64>> {
    let v: Vec<f64> = obs.values.iter().copied().filter(|&v| v >= l).collect();
    if v.is_empty() {
        return Err(Error::EmptySelection {
            threshold: l,
            view: obs.view.to_string(),
        });
    }
    Ok(v)
}

/// Mean of the observations at or above `l`.
pub fn sample_conditional_mean(obs: &ObservationSet, l: f64) -> Result<f64> {
    let v = values_at_or_above(obs, l)?;
    Ok(v.iter().sum::<f64>() / v.len() as f64)
}

/// Standard deviation (divisor `n − 1`) of the observations at or above `l`.
pub fn sample_conditional_sd(obs: &ObservationSet, l: f64) -> Result<f64> {
    let v = values_at_or_above(obs, l)?;
    if v.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: v.len() });
    }
    let m = v.iter().sum::<f64>() / v.len() as f64;
    Ok((v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ShadowMomentReport {
    pub threshold: f64,
    /// 1 for the mean, 2 for the standard deviation.
    pub moment: u32,
    pub shadow: f64,
    pub sample: f64,
    pub ratio: f64,
    pub xi: f64,
    pub sigma: f64,
    pub n_exceed: usize,
    pub method: ShadowMethod,
    /// Heavy dual tail (`ξ > 1`) yet the shadow value does not exceed the sample value.
    pub flagged: bool,
}

/// Refits the dual tail above each threshold `L` (bounds `[L, upper]`) and
/// compares shadow and sample moments of order `1..=p_max` (`p_max ≤ 2`).
pub fn shadow_report(
    obs: &ObservationSet,
    upper: f64,
    thresholds: &[f64],
    p_max: u32,
    opts: &FitOptions,
) -> Result<Vec<ShadowMomentReport>> {
    if obs.view == View::Dual {
        return Err(Error::invalid("shadow report needs raw or rescaled observations"));
    }
    if !(1..=2).contains(&p_max) {
        return Err(Error::invalid(format!("p_max must be 1 or 2, got {p_max}")));
    }
    let rows = thresholds
        .par_iter()
        .map(|&l| threshold_rows(obs, upper, l, p_max, opts))
        .collect::<Result<Vec<_>>>()?;
    Ok(rows.into_iter().flatten().collect())
}

fn threshold_rows(
    obs: &ObservationSet,
    upper: f64,
    l: f64,
    p_max: u32,
    opts: &FitOptions,
) -> Result<Vec<ShadowMomentReport>> {
    let bounds = DualBounds::new(l, upper)?;
    let excesses = values_at_or_above(obs, l)?
        .into_iter()
        .map(|y| phi(y, &bounds).map(|z| z - l))
        .collect::<Result<Vec<_>>>()?;
    let fit = fit_mle(&excesses, opts)?;
    let params = ShadowParams::from_fit(&fit, bounds)?;
    let (mean, method) = shadow_mean(&params)?;
    let mut rows = Vec::new();
    for p in 1..=p_max {
        let (shadow, sample) = if p == 1 {
            (mean, sample_conditional_mean(obs, l)?)
        } else {
            let sd = shadow_moment(&params, 2, Some(mean))?.max(0.0).sqrt();
            (sd, sample_conditional_sd(obs, l)?)
        };
        let ratio = shadow / sample;
        rows.push(ShadowMomentReport {
            threshold: l,
            moment: p,
            shadow,
            sample,
            ratio,
            xi: fit.xi(),
            sigma: fit.sigma(),
            n_exceed: excesses.len(),
            method: if p == 1 { method } else { ShadowMethod::Quadrature },
            flagged: fit.xi() > 1.0 && ratio <= 1.0,
        });
    }
    Ok(rows)
}

/// Writes rows as `threshold,shadow,sample,ratio,moment`.
pub fn write_shadow_csv<W: std::io::Write>(rows: &[ShadowMomentReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["threshold", "shadow", "sample", "ratio", "moment"])?;
    for r in rows {
        w.write_record([
            r.threshold.to_string(),
            r.shadow.to_string(),
            r.sample.to_string(),
            r.ratio.to_string(),
            r.moment.to_string(),
        ])?;
    }
    w.flush().map_err(|source| Error::Io {
        context: "writing shadow csv".into(),
        source,
    })
}
