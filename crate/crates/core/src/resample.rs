//! Resampling robustness of the shape estimate: bootstrap, random deletion
//! (jackknife-style) and fuzzy-triplet Monte Carlo.
//!
//! Run `i` draws from its own stream seeded with `base ^ i`; results are
//! collected in run order, so summaries do not depend on thread scheduling.

use rand::seq::index;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::corpus::{build_observation_set, build_observation_set_with, ConflictRecord, Estimate, ObservationSet, ViewSpec};
use crate::error::{Error, Result};
use crate::gpd::{fit_exceedances, fit_mle, FitOptions, GpdFit};
use crate::seeds::replicate_rng;

/// Paper-scale run count is 100 000; this is the default.
pub const DEFAULT_RUNS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Scheme {
    Bootstrap,
    Jackknife,
    Fuzzy,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct XiQuantiles {
    pub q025: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub q975: f64,
}

impl XiQuantiles {
    pub fn iqr(&self) -> f64 {
        self.q75 - self.q25
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResampleSummary {
    pub scheme: Scheme,
    /// Successful fits (`xi_values.len()`).
    pub n_runs: usize,
    pub n_requested: usize,
    /// Shape estimates in run order.
    pub xi_values: Vec<f64>,
    /// `(run index, error message)` for fits that failed.
    pub failures: Vec<(usize, String)>,
    pub fraction_xi_leq_1: f64,
    pub mean: f64,
    pub sd: f64,
    pub quantiles: XiQuantiles,
    pub base_seed: u64,
}

/// Linear-interpolation quantile of sorted data.
fn quantile_sorted(v: &[f64], q: f64) -> f64 {
    let h = (v.len() - 1) as f64 * q;
    let (i, frac) = (h.floor() as usize, h - h.floor());
    if i + 1 < v.len() {
        v[i] + frac * (v[i + 1] - v[i])
    } else {
        v[i]
    }
}

fn summarize(scheme: Scheme, requested: usize, results: Vec<Result<f64>>, base_seed: u64) -> Result<ResampleSummary> {
    let mut xi_values = Vec::with_capacity(results.len());
    let mut failures = Vec::new();
    for (i, r) in results.into_iter().enumerate() {
        match r {
            Ok(x) => xi_values.push(x),
            Err(e) => failures.push((i, e.to_string())),
        }
    }
    if xi_values.is_empty() {
        return Err(Error::Degenerate(format!("every {scheme:?} refit failed")));
    }
    let n = xi_values.len() as f64;
    let mean = xi_values.iter().sum::<f64>() / n;
    let sd = if xi_values.len() > 1 {
        (xi_values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let mut sorted = xi_values.clone();
    sorted.sort_by(f64::total_cmp);
    let q = |p| quantile_sorted(&sorted, p);
    Ok(ResampleSummary {
        scheme,
        n_runs: xi_values.len(),
        n_requested: requested,
        fraction_xi_leq_1: xi_values.iter().filter(|&&x| x <= 1.0).count() as f64 / n,
        mean,
        sd,
        quantiles: XiQuantiles {
            q025: q(0.025),
            q25: q(0.25),
            median: q(0.5),
            q75: q(0.75),
            q975: q(0.975),
        },
        xi_values,
        failures,
        base_seed,
    })
}

/// Refits on `n_runs` with-replacement resamples of the exceedances.
pub fn bootstrap_xi(obs: &ObservationSet, opts: &FitOptions, n_runs: usize, seed: u64) -> Result<ResampleSummary> {
    if n_runs < 1000 {
        return Err(Error::invalid(format!("bootstrap needs at least 1000 runs, got {n_runs}")));
    }
    let w = obs.exceedances();
    let n = w.len();
    let results = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let sample: Vec<f64> = (0..n).map(|_| w[rng.random_range(0..n)]).collect();
            fit_mle(&sample, opts).map(|f| f.xi())
        })
        .collect();
    summarize(Scheme::Bootstrap, n_runs, results, seed)
}

/// Refits after deleting a random subset of the exceedances, of uniform size
/// in `1..=⌊max_removal_fraction·n⌋`. With nothing to remove, one run refits
/// the full set.
pub fn jackknife_xi(
    obs: &ObservationSet,
    opts: &FitOptions,
    max_removal_fraction: f64,
    n_runs: usize,
    seed: u64,
) -> Result<ResampleSummary> {
    if !(0.0..1.0).contains(&max_removal_fraction) {
        return Err(Error::invalid(format!("removal fraction {max_removal_fraction} outside [0, 1)")));
    }
    let w = obs.exceedances();
    let n = w.len();
    let max_remove = (max_removal_fraction * n as f64).floor() as usize;
    if n - max_remove < opts.min_exceedances {
        return Err(Error::InsufficientData {
            needed: opts.min_exceedances + max_remove,
            got: n,
        });
    }
    if max_remove == 0 {
        let r = vec![fit_mle(&w, opts).map(|f| f.xi())];
        return summarize(Scheme::Jackknife, 1, r, seed);
    }
    let results = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let m = rng.random_range(1..=max_remove);
            let mut keep = vec![true; n];
            for j in index::sample(&mut rng, n, m) {
                keep[j] = false;
            }
            let sample: Vec<f64> = w.iter().zip(&keep).filter(|(_, &k)| k).map(|(x, _)| *x).collect();
            fit_mle(&sample, opts).map(|f| f.xi())
        })
        .collect();
    summarize(Scheme::Jackknife, n_runs, results, seed)
}

/// Draws every record's casualty count uniformly on `[min, max]`, rebuilds
/// the view, and refits the excesses over `threshold`.
pub fn fuzzy_mc_xi(
    records: &[ConflictRecord],
    spec: &ViewSpec,
    threshold: f64,
    opts: &FitOptions,
    n_runs: usize,
    seed: u64,
) -> Result<ResampleSummary> {
    if n_runs == 0 {
        return Err(Error::invalid("fuzzy Monte Carlo needs at least one run"));
    }
    let results = (0..n_runs)
        .into_par_iter()
        .map(|i| {
            let mut rng = replicate_rng(seed, i);
            let draws: Vec<f64> = records
                .iter()
                .map(|r| r.lower() + (r.upper() - r.lower()) * rng.random::<f64>())
                .collect();
            let obs = build_observation_set_with(records, spec, threshold, |j, _| draws[j])?;
            fit_mle(&obs.exceedances(), opts).map(|f| f.xi())
        })
        .collect();
    summarize(Scheme::Fuzzy, n_runs, results, seed)
}

#[derive(Debug, Clone, Serialize)]
pub struct EstimateSensitivity {
    pub fits: Vec<(Estimate, GpdFit)>,
    /// Largest pairwise `|Δξ|`.
    pub max_abs_delta_xi: f64,
}

/// Refits using the min, mid and max estimate of every record.
pub fn estimate_sensitivity(
    records: &[ConflictRecord],
    spec: &ViewSpec,
    threshold: f64,
    opts: &FitOptions,
) -> Result<EstimateSensitivity> {
    let mut fits = Vec::with_capacity(3);
    for est in [Estimate::Min, Estimate::Mid, Estimate::Max] {
        let spec = ViewSpec { estimate: est, ..*spec };
        let obs = build_observation_set(records, &spec, threshold)?;
        fits.push((est, fit_exceedances(&obs.values, threshold, opts)?));
    }
    let mut max_abs_delta_xi: f64 = 0.0;
    for i in 0..fits.len() {
        for j in i + 1..fits.len() {
            max_abs_delta_xi = max_abs_delta_xi.max((fits[i].1.xi() - fits[j].1.xi()).abs());
        }
    }
    Ok(EstimateSensitivity { fits, max_abs_delta_xi })
}
