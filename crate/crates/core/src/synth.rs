//! Synthetic data: GPD excesses and peaks-over-threshold event histories.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::corpus::{ConflictRecord, YearWindow, REFERENCE_POPULATION};
use crate::dual::{phi_inverse, DualBounds};
use crate::error::{Error, Result};
use crate::gpd::GpdParams;
use crate::seeds;

/// `n` excesses by inversion, `w = σ((1 − U)^{−ξ} − 1)/ξ`.
pub fn sample_gpd(params: &GpdParams<f64>, n: usize, seed: u64) -> Vec<f64> {
    let mut rng = seeds::rng(seed);
    sample_gpd_with(params, n, &mut rng)
}

pub fn sample_gpd_with<R: Rng + ?Sized>(params: &GpdParams<f64>, n: usize, rng: &mut R) -> Vec<f64> {
    (0..n).map(|_| gpd_from_uniform(params, rng.random::<f64>())).collect()
}

/// Inverse CDF at `u ∈ [0, 1)`.
pub fn gpd_from_uniform(params: &GpdParams<f64>, u: f64) -> f64 {
    params.quantile(u).expect("u in [0, 1)")
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub xi: f64,
    pub sigma: f64,
    /// Severities are `threshold + excess`.
    pub threshold: f64,
    /// Bounded history: excesses are dual-scale and mapped into `[threshold, upper)`.
    pub upper: Option<f64>,
    /// Events per year.
    pub rate: f64,
    pub window: YearWindow,
    /// Exact event count instead of a Poisson draw.
    pub n_events: Option<usize>,
    /// Triplets are `mid·(1 − fuzz)`, `mid`, `mid·(1 + fuzz)`.
    pub fuzz: f64,
    /// Coeval population written on every record.
    pub population: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            xi: 1.5,
            sigma: 9.062e4,
            threshold: 25_000.0,
            upper: None,
            rate: 0.65,
            window: YearWindow { start: 1500, end: 2015 },
            n_events: None,
            fuzz: 0.0,
            population: REFERENCE_POPULATION,
            seed: 0,
        }
    }
}

impl SynthConfig {
    fn validate(&self) -> Result<()> {
        GpdParams::new(self.xi, self.sigma)?;
        if !(self.threshold > 0.0) {
            return Err(Error::invalid("synthetic threshold must be positive"));
        }
        if let Some(h) = self.upper {
            DualBounds::new(self.threshold, h)?;
        }
        if !(self.rate > 0.0 && self.rate.is_finite()) {
            return Err(Error::invalid(format!("event rate {} must be positive", self.rate)));
        }
        if !(0.0..1.0).contains(&self.fuzz) {
            return Err(Error::invalid(format!("fuzz {} outside [0, 1)", self.fuzz)));
        }
        if !(self.population > 0.0) {
            return Err(Error::invalid("population must be positive"));
        }
        YearWindow::new(self.window.start, self.window.end)?;
        Ok(())
    }
}

/// Poisson arrivals on the window with GPD severities above the threshold.
///
/// In bounded mode the severity is `φ⁻¹(L + W)` and never reaches `H`. A
/// record whose upper estimate would reach the population instead gets a
/// population just above it.
pub fn sample_history(config: &SynthConfig) -> Result<Vec<ConflictRecord>> {
    config.validate()?;
    let mut rng = seeds::rng(config.seed);
    let span = config.window.span() as f64;
    let n = match config.n_events {
        Some(n) => n,
        None => Poisson::new(config.rate * span)
            .map_err(|e| Error::invalid(format!("poisson rate: {e}")))?
            .sample(&mut rng) as usize,
    };
    let mut years: Vec<i32> = (0..n)
        .map(|_| config.window.start + (rng.random::<f64>() * span).floor().min(span - 1.0) as i32)
        .collect();
    years.sort_unstable();
    let params = GpdParams::new(config.xi, config.sigma)?;
    let bounds = config.upper.map(|h| DualBounds::new(config.threshold, h)).transpose()?;

    let mut out = Vec::with_capacity(n);
    for (i, year) in years.into_iter().enumerate() {
        let w = gpd_from_uniform(&params, rng.random::<f64>());
        let mid = match bounds {
            None => config.threshold + w,
            Some(b) => {
                let y = phi_inverse(config.threshold + w, &b)?;
                if y >= b.upper() { b.upper().next_down() } else { y }
            }
        };
        let mut population = config.population;
        let mut max = mid * (1.0 + config.fuzz);
        if max >= population {
            if mid < population {
                max = population.next_down();
            } else {
                population = max.next_up();
            }
        }
        let (min, max) = if config.fuzz > 0.0 {
            (Some(mid * (1.0 - config.fuzz)), Some(max))
        } else {
            (Some(mid), Some(mid))
        };
        out.push(ConflictRecord {
            name: format!("synthetic-{i:05}"),
            start_year: year,
            end_year: year,
            casualties_min: min,
            casualties_mid: mid,
            casualties_max: max,
            population,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{parse_corpus, write_corpus, LoadOptions};

    #[test]
    fn inversion_hand_values() {
        let p = GpdParams::new(1.0, 1.0).unwrap();
        assert_eq!(gpd_from_uniform(&p, 0.0), 0.0);
        assert!((gpd_from_uniform(&p, 0.5) - 1.0).abs() < 1e-15);
        let e = GpdParams::new(0.0, 2.0).unwrap();
        assert!((gpd_from_uniform(&e, 0.5) - 2.0 * 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn kolmogorov_distance_is_small() {
        let p = GpdParams::new(1.5, 9.062e4).unwrap();
        let n = 100_000;
        let mut w = sample_gpd(&p, n, 123);
        w.sort_by(f64::total_cmp);
        let d = w
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = p.cdf(x).unwrap();
                (f - i as f64 / n as f64).abs().max(((i + 1) as f64 / n as f64 - f).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.01, "{d}");
    }

    #[test]
    fn event_count_follows_rate() {
        let cfg = SynthConfig {
            rate: 1.0,
            window: YearWindow::new(1, 500).unwrap(),
            seed: 8,
            ..SynthConfig::default()
        };
        let recs = sample_history(&cfg).unwrap();
        assert!((recs.len() as f64 - 500.0).abs() < 3.0 * 500f64.sqrt());
        assert!(recs.iter().all(|r| (1..=500).contains(&r.start_year)));
        assert!(recs.windows(2).all(|w| w[0].start_year <= w[1].start_year));
    }

    #[test]
    fn fuzz_zero_gives_degenerate_triplets() {
        let recs = sample_history(&SynthConfig {
            n_events: Some(50),
            ..SynthConfig::default()
        })
        .unwrap();
        assert!(recs.iter().all(|r| r.lower() == r.casualties_mid && r.upper() == r.casualties_mid));
        assert!(recs.iter().all(|r| r.validate(3000.0).is_ok()));
    }

    #[test]
    fn bounded_histories_stay_below_the_bound() {
        let cfg = SynthConfig {
            xi: 3.0,
            sigma: 5e7,
            threshold: 145_000.0,
            upper: Some(7.2e9),
            n_events: Some(2000),
            fuzz: 0.2,
            ..SynthConfig::default()
        };
        let recs = sample_history(&cfg).unwrap();
        for r in &recs {
            assert!(r.casualties_mid >= 145_000.0 && r.casualties_mid < 7.2e9);
            assert!(r.validate(3000.0).is_ok(), "{r:?}");
        }
    }

    #[test]
    fn csv_round_trip() {
        let recs = sample_history(&SynthConfig {
            n_events: Some(40),
            fuzz: 0.1,
            ..SynthConfig::default()
        })
        .unwrap();
        let mut buf = Vec::new();
        write_corpus(&recs, &mut buf).unwrap();
        let c = parse_corpus(std::str::from_utf8(&buf).unwrap(), "synth", &LoadOptions::default()).unwrap();
        assert!(c.rejects.is_empty());
        assert_eq!(c.records, recs);
    }

    #[test]
    fn invalid_configs() {
        assert!(sample_history(&SynthConfig { rate: 0.0, ..SynthConfig::default() }).is_err());
        assert!(sample_history(&SynthConfig { fuzz: 1.5, ..SynthConfig::default() }).is_err());
        assert!(sample_history(&SynthConfig { upper: Some(10.0), ..SynthConfig::default() }).is_err());
    }
}
