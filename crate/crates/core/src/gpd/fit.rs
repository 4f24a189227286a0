//! Maximum-likelihood GPD fitting.
//!
//! The log-likelihood is profiled over `ξ`: for each shape the scale solves the
//! score equation `mean(a/(1+a)) = ξ/(1+ξ)`, `a = ξw/σ`, which is monotone in
//! `σ` on the admissible range. The profile is scanned on a fixed grid over
//! `(−0.5, 10]` and refined with Brent's method around the best grid point.
//! Standard errors come from a central-difference Hessian of the full
//! log-likelihood at the optimum.

use rayon::prelude::*;
use serde::Serialize;

use super::{GpdParams, XI_ZERO_BAND};
use crate::diagnostics::{qq_exponential_standard, QqPlot};
use crate::error::{Error, Result};
use crate::optimize::brent_minimize;

/// Outer grid for the profile scan.
const XI_GRID: [f64; 15] = [
    -0.45, -0.25, -0.05, 0.15, 0.4, 0.7, 1.0, 1.35, 1.75, 2.25, 3.0, 4.25, 6.0, 8.0, 10.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FitOptions {
    /// Fewer excesses than this is an error.
    pub min_exceedances: usize,
    /// Open lower end of the shape box.
    pub xi_min: f64,
    /// Closed upper end of the shape box.
    pub xi_max: f64,
    pub xi_tol: f64,
    pub max_iter: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_exceedances: 30,
            xi_min: -0.5,
            xi_max: 10.0,
            xi_tol: 1e-9,
            max_iter: 200,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Convergence {
    pub converged: bool,
    pub iterations: usize,
    /// Profile-likelihood evaluations.
    pub evaluations: usize,
    /// Optimum sits on the edge of the shape box.
    pub at_boundary: bool,
}

/// Which integer moments of the fitted tail are finite.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FiniteMoments {
    All,
    /// Moments of order `1..=n` are finite; `UpTo(0)` means none.
    UpTo(u32),
}

impl FiniteMoments {
    pub fn for_shape(xi: f64) -> Self {
        if xi <= 0.0 {
            FiniteMoments::All
        } else {
            // largest integer p with p < 1/ξ
            FiniteMoments::UpTo(((1.0 / xi).ceil() - 1.0).max(0.0) as u32)
        }
    }

    /// `None` when every moment is finite.
    pub fn max_order(self) -> Option<u32> {
        match self {
            FiniteMoments::All => None,
            FiniteMoments::UpTo(p) => Some(p),
        }
    }

    pub fn describe(self) -> String {
        match self {
            FiniteMoments::All => "all moments finite".into(),
            FiniteMoments::UpTo(0) => "no finite moments".into(),
            FiniteMoments::UpTo(1) => "only the mean is finite".into(),
            FiniteMoments::UpTo(p) => format!("moments finite up to order {p}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GpdFit {
    pub params: GpdParams<f64>,
    /// Reported only when the Hessian is positive definite and `ξ > −0.5`.
    pub se_xi: Option<f64>,
    pub se_sigma: Option<f64>,
    pub log_likelihood: f64,
    pub convergence: Convergence,
}

impl GpdFit {
    pub fn xi(&self) -> f64 {
        self.params.xi
    }

    pub fn sigma(&self) -> f64 {
        self.params.sigma
    }

    pub fn finite_moments(&self) -> FiniteMoments {
        FiniteMoments::for_shape(self.params.xi)
    }
}

/// GPD log-likelihood of excesses; `-∞` outside the parameter space or support.
pub fn log_likelihood(xi: f64, sigma: f64, excesses: &[f64]) -> f64 {
    if !(sigma > 0.0) || !xi.is_finite() {
        return f64::NEG_INFINITY;
    }
    let n = excesses.len() as f64;
    let inv = 1.0 / sigma;
    if xi.abs() < XI_ZERO_BAND {
        let mut s = 0.0;
        for &w in excesses {
            let x = w * inv;
            s += x - xi * (0.5 * x * x - x);
        }
        return -n * sigma.ln() - s;
    }
    let mut s = 0.0;
    for &w in excesses {
        let a = xi * w * inv;
        if a <= -1.0 {
            return f64::NEG_INFINITY;
        }
        s += a.ln_1p();
    }
    -n * sigma.ln() - (1.0 + 1.0 / xi) * s
}

/// Scale maximizing the likelihood at fixed `ξ`; `warm` is a starting `ln σ`.
fn profile_log_sigma(xi: f64, w: &[f64], w_max: f64, mean: f64, warm: f64) -> f64 {
    if xi.abs() < XI_ZERO_BAND {
        return mean.ln();
    }
    let target = xi / (1.0 + xi);
    let n = w.len() as f64;
    let eval = |rho: f64| {
        let c = xi * (-rho).exp();
        let (mut s, mut ds) = (0.0, 0.0);
        for &wi in w {
            let a = c * wi;
            let q = 1.0 / (1.0 + a);
            s += a * q;
            ds += a * q * q;
        }
        (s / n - target, -ds / n)
    };
    let mut lo = if xi < 0.0 { (-xi * w_max).ln() } else { f64::NEG_INFINITY };
    let mut hi = f64::INFINITY;
    let mut rho = if warm.is_finite() && warm > lo { warm } else { mean.ln().max(lo + 1.0) };
    for _ in 0..200 {
        let (h, dh) = eval(rho);
        if h == 0.0 {
            return rho;
        }
        // Newton step −h/dh points towards the root; it is on that side of rho.
        if h * dh < 0.0 {
            lo = rho;
        } else {
            hi = rho;
        }
        let mut next = rho - h / dh;
        if !(next > lo && next < hi) || !next.is_finite() {
            next = match (lo.is_finite(), hi.is_finite()) {
                (true, true) => 0.5 * (lo + hi),
                (true, false) => rho + 2.0,
                (false, true) => rho - 2.0,
                (false, false) => rho,
            };
        }
        if (next - rho).abs() <= 1e-14 * rho.abs().max(1.0) {
            return next;
        }
        rho = next;
    }
    rho
}

/// Maximum-likelihood fit to non-negative excesses.
pub fn fit_mle(excesses: &[f64], opts: &FitOptions) -> Result<GpdFit> {
    let n = excesses.len();
    if n < opts.min_exceedances.max(2) {
        return Err(Error::InsufficientData {
            needed: opts.min_exceedances.max(2),
            got: n,
        });
    }
    if excesses.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::invalid("excesses must be finite and non-negative"));
    }
    let w_max = excesses.iter().cloned().fold(0.0, f64::max);
    let w_min = excesses.iter().cloned().fold(f64::INFINITY, f64::min);
    if w_max <= 0.0 || w_max == w_min {
        return Err(Error::Degenerate("all excesses are equal; likelihood has no interior maximum".into()));
    }
    let mean = excesses.iter().sum::<f64>() / n as f64;

    let mut warm = mean.ln();
    let mut trace: Vec<(f64, f64)> = Vec::new();
    let mut profile = |xi: f64| -> f64 {
        let rho = profile_log_sigma(xi, excesses, w_max, mean, warm);
        let ll = log_likelihood(xi, rho.exp(), excesses);
        if ll.is_finite() {
            warm = rho;
        }
        trace.push((xi, ll));
        ll
    };

    let xi_lo = opts.xi_min + 1e-9;
    let grid: Vec<f64> = XI_GRID
        .iter()
        .copied()
        .filter(|&x| x > opts.xi_min && x <= opts.xi_max)
        .chain(std::iter::once(opts.xi_max))
        .collect();
    let values: Vec<f64> = grid.iter().map(|&x| profile(x)).collect();
    let best = values
        .iter()
        .enumerate()
        .filter(|(_, v)| v.is_finite())
        .max_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i);
    let Some(best) = best else {
        return Err(no_convergence(0, trace));
    };
    let a = if best == 0 { xi_lo } else { grid[best - 1] };
    let b = if best + 1 >= grid.len() { opts.xi_max } else { grid[best + 1] };
    let min = brent_minimize(|x| -profile(x), a, b, opts.xi_tol, opts.max_iter);
    let evaluations = trace.len();
    if !min.converged || !min.fx.is_finite() {
        return Err(no_convergence(min.iterations, trace));
    }

    let xi = min.x;
    let sigma = profile_log_sigma(xi, excesses, w_max, mean, warm).exp();
    let ll = log_likelihood(xi, sigma, excesses);
    let edge = 1e-6 * (opts.xi_max - opts.xi_min);
    let at_boundary = xi <= opts.xi_min + edge || xi >= opts.xi_max - edge;
    let (se_xi, se_sigma) = if xi > -0.5 + edge && !at_boundary {
        standard_errors(xi, sigma, excesses).unzip()
    } else {
        (None, None)
    };
    Ok(GpdFit {
        params: GpdParams::new(xi, sigma)?.with_threshold(0.0, n),
        se_xi,
        se_sigma,
        log_likelihood: ll,
        convergence: Convergence {
            converged: true,
            iterations: min.iterations,
            evaluations,
            at_boundary,
        },
    })
}

fn no_convergence(iterations: usize, trace: Vec<(f64, f64)>) -> Error {
    let (best_xi, best_loglik) = trace
        .iter()
        .copied()
        .filter(|(_, l)| l.is_finite())
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap_or((f64::NAN, f64::NAN));
    Error::NoConvergence {
        iterations,
        best_xi,
        best_sigma: f64::NAN,
        best_loglik,
        trace,
    }
}

/// Square roots of the diagonal of the inverse observed information.
fn standard_errors(xi: f64, sigma: f64, w: &[f64]) -> Option<(f64, f64)> {
    let hx = (1e-5 * xi.abs()).max(1e-8);
    let hs = (1e-5 * sigma.abs()).max(1e-8);
    let f = |dx: f64, ds: f64| log_likelihood(xi + dx, sigma + ds, w);
    let f0 = f(0.0, 0.0);
    let fxx = (f(hx, 0.0) - 2.0 * f0 + f(-hx, 0.0)) / (hx * hx);
    let fss = (f(0.0, hs) - 2.0 * f0 + f(0.0, -hs)) / (hs * hs);
    let fxs = (f(hx, hs) - f(hx, -hs) - f(-hx, hs) + f(-hx, -hs)) / (4.0 * hx * hs);
    // observed information = −Hessian
    let (a, b, d) = (-fxx, -fxs, -fss);
    let det = a * d - b * b;
    if !(a > 0.0 && d > 0.0 && det > 0.0 && det.is_finite()) {
        return None;
    }
    let var_xi = d / det;
    let var_sigma = a / det;
    Some((var_xi.sqrt(), var_sigma.sqrt()))
}

/// Fits the excesses of `sample` over `threshold` (values `≥ threshold`).
pub fn fit_exceedances(sample: &[f64], threshold: f64, opts: &FitOptions) -> Result<GpdFit> {
    let w: Vec<f64> = sample.iter().filter(|&&x| x >= threshold).map(|x| x - threshold).collect();
    let mut fit = fit_mle(&w, opts)?;
    fit.params.threshold = threshold;
    Ok(fit)
}

#[derive(Debug, Clone, Serialize)]
pub struct Residuals {
    pub values: Vec<f64>,
    /// Standard-exponential QQ data of the residuals.
    pub qq: QqPlot<f64>,
}

/// `r_i = (1/ξ)·ln(1 + ξ w_i/σ)`, standard exponential under a correct fit.
pub fn residuals(excesses: &[f64], fit: &GpdFit) -> Result<Residuals> {
    let values = excesses
        .iter()
        .map(|&w| fit.params.residual(w))
        .collect::<Result<Vec<_>>>()?;
    let qq = qq_exponential_standard(&values);
    Ok(Residuals { values, qq })
}

#[derive(Debug, Clone, Serialize)]
pub struct StabilityScan {
    pub fits: Vec<GpdFit>,
    /// Index pairs whose shape estimates differ by more than two combined standard errors.
    pub flagged: Vec<(usize, usize)>,
}

/// Fits the GPD above each threshold and flags unstable shape estimates.
pub fn tail_stability_scan(sample: &[f64], thresholds: &[f64], opts: &FitOptions) -> Result<StabilityScan> {
    let fits = thresholds
        .par_iter()
        .map(|&u| fit_exceedances(sample, u, opts))
        .collect::<Result<Vec<_>>>()?;
    let mut flagged = Vec::new();
    for i in 0..fits.len() {
        for j in i + 1..fits.len() {
            let (a, b) = (&fits[i], &fits[j]);
            if let (Some(sa), Some(sb)) = (a.se_xi, b.se_xi) {
                if (a.xi() - b.xi()).abs() > 2.0 * (sa * sa + sb * sb).sqrt() {
                    flagged.push((i, j));
                }
            }
        }
    }
    Ok(StabilityScan { fits, flagged })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeds;
    use crate::synth::sample_gpd;
    use rand::Rng;

    #[test]
    fn recovers_shape_and_scale_on_large_sample() {
        let truth = GpdParams::new(1.5, 9.062e4).unwrap();
        let w = sample_gpd(&truth, 10_000, 7);
        let fit = fit_mle(&w, &FitOptions::default()).unwrap();
        let (se_xi, se_sigma) = (fit.se_xi.unwrap(), fit.se_sigma.unwrap());
        assert!((fit.xi() - 1.5).abs() < 3.0 * se_xi, "{fit:?}");
        assert!((fit.sigma() - 9.062e4).abs() < 3.0 * se_sigma, "{fit:?}");
        // asymptotic se(ξ) ≈ (1+ξ)/√n
        let asymptotic = 2.5 / 100.0;
        assert!((se_xi / asymptotic - 1.0).abs() < 0.1, "se {se_xi}");
        // asymptotic se(σ) ≈ σ·sqrt(2(1+ξ)/n)
        let asym_sigma = fit.sigma() * (5.0_f64 / 10_000.0).sqrt();
        assert!((se_sigma / asym_sigma - 1.0).abs() < 0.1, "se {se_sigma}");
    }

    #[test]
    fn exponential_and_negative_shapes() {
        let w = sample_gpd(&GpdParams::new(0.0, 2.0).unwrap(), 5000, 3);
        let fit = fit_mle(&w, &FitOptions::default()).unwrap();
        assert!(fit.xi().abs() < 3.0 * fit.se_xi.unwrap());
        let w = sample_gpd(&GpdParams::new(-0.3, 1.0).unwrap(), 5000, 4);
        let fit = fit_mle(&w, &FitOptions::default()).unwrap();
        assert!((fit.xi() + 0.3).abs() < 3.0 * fit.se_xi.unwrap(), "{fit:?}");
    }

    #[test]
    fn uniform_data_hits_the_shape_floor_without_standard_errors() {
        let mut rng = seeds::rng(11);
        let w: Vec<f64> = (0..500).map(|_| rng.random::<f64>()).collect();
        let fit = fit_mle(&w, &FitOptions::default()).unwrap();
        assert!(fit.convergence.at_boundary);
        assert!(fit.xi() < -0.49);
        assert!(fit.se_xi.is_none() && fit.se_sigma.is_none());
    }

    #[test]
    fn optimum_beats_random_probes() {
        let w = sample_gpd(&GpdParams::new(0.8, 3.0).unwrap(), 400, 21);
        let fit = fit_mle(&w, &FitOptions::default()).unwrap();
        let mut rng = seeds::rng(5);
        for _ in 0..100 {
            let xi = rng.random_range(-0.49..5.0);
            let sigma = fit.sigma() * rng.random_range(0.2..5.0);
            assert!(log_likelihood(xi, sigma, &w) <= fit.log_likelihood + 1e-9);
        }
    }

    #[test]
    fn permutation_invariant() {
        let mut w = sample_gpd(&GpdParams::new(1.2, 10.0).unwrap(), 200, 8);
        let a = fit_mle(&w, &FitOptions::default()).unwrap();
        w.reverse();
        w.swap(3, 150);
        let b = fit_mle(&w, &FitOptions::default()).unwrap();
        assert!((a.xi() - b.xi()).abs() < 1e-7);
        assert!((a.sigma() / b.sigma() - 1.0).abs() < 1e-7);
    }

    #[test]
    fn degenerate_and_small_inputs() {
        let err = fit_mle(&[5.0; 50], &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::Degenerate(_)));
        let err = fit_mle(&[1.0, 2.0, 3.0], &FitOptions::default()).unwrap_err();
        assert!(matches!(err, Error::InsufficientData { needed: 30, got: 3 }));
        assert!(fit_mle(&[-1.0; 40], &FitOptions::default()).is_err());
    }

    #[test]
    fn finite_moment_summary() {
        assert_eq!(FiniteMoments::for_shape(1.5), FiniteMoments::UpTo(0));
        assert_eq!(FiniteMoments::for_shape(1.5).describe(), "no finite moments");
        assert_eq!(FiniteMoments::for_shape(0.5), FiniteMoments::UpTo(1));
        assert_eq!(FiniteMoments::for_shape(0.3), FiniteMoments::UpTo(3));
        assert_eq!(FiniteMoments::for_shape(-0.1), FiniteMoments::All);
    }

    #[test]
    fn residuals_of_exact_draws_are_standard_exponential() {
        let p = GpdParams::new(1.5, 5.0).unwrap();
        let w = sample_gpd(&p, 4000, 99);
        let fit = GpdFit {
            params: p,
            se_xi: None,
            se_sigma: None,
            log_likelihood: 0.0,
            convergence: Convergence { converged: true, iterations: 0, evaluations: 0, at_boundary: false },
        };
        let r = residuals(&w, &fit).unwrap();
        let mean = r.values.iter().sum::<f64>() / r.values.len() as f64;
        assert!((mean - 1.0).abs() < 3.0 / (w.len() as f64).sqrt());
        assert_eq!(residuals(&[0.0], &fit).unwrap().values, vec![0.0]);
    }

    #[test]
    fn stability_scan_flags_nothing_for_single_threshold() {
        let w = sample_gpd(&GpdParams::new(0.5, 1.0).unwrap(), 300, 2);
        let scan = tail_stability_scan(&w, &[0.0], &FitOptions::default()).unwrap();
        assert_eq!(scan.fits.len(), 1);
        assert!(scan.flagged.is_empty());
    }
}
