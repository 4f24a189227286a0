//! Inter-arrival gaps and a homogeneous-Poisson test battery for the times
//! of qualifying events.

use serde::Serialize;

use crate::corpus::{build_observation_set, AnchorRule, ConflictRecord, ObservationSet, ViewSpec, YearWindow};
use crate::diagnostics::{qq_exponential, QqPlot};
use crate::error::{Error, Result};
use crate::gpd::{fit_exceedances, FitOptions, GpdFit};
use crate::special::chi_square_sf;

/// Highest autocorrelation lag reported.
pub const MAX_LAG: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GapSeries {
    pub threshold: f64,
    pub anchor: AnchorRule,
    /// Anchor years of the qualifying events, ascending.
    pub years: Vec<i32>,
    pub gaps: Vec<i64>,
    pub mean: f64,
    /// Mean absolute deviation from the mean.
    pub mad: f64,
}

fn qualifying_years(obs: &ObservationSet, threshold: f64, window: Option<YearWindow>) -> Vec<i32> {
    let mut years: Vec<i32> = obs
        .values
        .iter()
        .zip(&obs.anchor_years)
        .filter(|(v, y)| **v >= threshold && window.is_none_or(|w| w.contains(**y)))
        .map(|(_, y)| *y)
        .collect();
    years.sort_unstable();
    years
}

/// Whole-year gaps between consecutive events at or above `threshold`.
pub fn gap_series(obs: &ObservationSet, threshold: f64) -> Result<GapSeries> {
    gaps_from_years(qualifying_years(obs, threshold, None), threshold, obs.anchor)
}

fn gaps_from_years(years: Vec<i32>, threshold: f64, anchor: AnchorRule) -> Result<GapSeries> {
    if years.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: years.len() });
    }
    let gaps: Vec<i64> = years.windows(2).map(|w| i64::from(w[1]) - i64::from(w[0])).collect();
    let n = gaps.len() as f64;
    let mean = gaps.iter().sum::<i64>() as f64 / n;
    let mad = gaps.iter().map(|&g| (g as f64 - mean).abs()).sum::<f64>() / n;
    Ok(GapSeries {
        threshold,
        anchor,
        years,
        gaps,
        mean,
        mad,
    })
}

/// Gap summaries for several thresholds under every anchor rule.
pub fn gap_table(records: &[ConflictRecord], spec: &ViewSpec, thresholds: &[f64]) -> Result<Vec<GapSeries>> {
    let mut out = Vec::new();
    for anchor in AnchorRule::ALL {
        let spec = ViewSpec { anchor, ..*spec };
        for &u in thresholds {
            let obs = build_observation_set(records, &spec, u)?;
            out.push(gap_series(&obs, u)?);
        }
    }
    Ok(out)
}

/// Biased autocorrelations (divisor `n`) at lags `0..=max_lag`; only lag 0
/// when the series is constant.
pub fn acf(x: &[f64], max_lag: usize) -> Vec<f64> {
    let n = x.len();
    if n == 0 {
        return Vec::new();
    }
    let m = x.iter().sum::<f64>() / n as f64;
    let c0 = x.iter().map(|v| (v - m).powi(2)).sum::<f64>() / n as f64;
    if c0 == 0.0 {
        return vec![1.0];
    }
    (0..=max_lag.min(n - 1))
        .map(|h| (0..n - h).map(|i| (x[i] - m) * (x[i + h] - m)).sum::<f64>() / n as f64 / c0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Cell {
    /// First and last calendar year of the cell.
    pub start: i32,
    pub end: i32,
    pub observed: usize,
    pub expected: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareTest {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Cells requested before merging.
    pub n_subintervals: usize,
    pub cells: Vec<Cell>,
}

/// Pearson test that events fall in each cell with probability proportional
/// to its length in years.
///
/// The window is split into `n_subintervals` runs of whole years as equal as
/// possible; cells with expected count below 5 are merged into their left
/// neighbour, scanning right to left.
pub fn equiprobability_test(years: &[i32], window: YearWindow, n_subintervals: usize) -> Result<ChiSquareTest> {
    let span = window.span() as usize;
    if n_subintervals < 2 || n_subintervals > span {
        return Err(Error::invalid(format!(
            "need between 2 and {span} subintervals, got {n_subintervals}"
        )));
    }
    let n = years.iter().filter(|&&y| window.contains(y)).count();
    let mut cells: Vec<Cell> = (0..n_subintervals)
        .map(|j| {
            let a = window.start + (j * span / n_subintervals) as i32;
            let b = window.start + ((j + 1) * span / n_subintervals) as i32 - 1;
            Cell {
                start: a,
                end: b,
                observed: years.iter().filter(|&&y| (a..=b).contains(&y)).count(),
                expected: n as f64 * (b - a + 1) as f64 / span as f64,
            }
        })
        .collect();
    let mut i = cells.len() - 1;
    while i > 0 {
        if cells[i].expected < 5.0 {
            let c = cells.remove(i);
            let left = &mut cells[i - 1];
            left.end = c.end;
            left.observed += c.observed;
            left.expected += c.expected;
        }
        i -= 1;
    }
    if cells.len() > 1 && cells[0].expected < 5.0 {
        let c = cells.remove(0);
        cells[0].start = c.start;
        cells[0].observed += c.observed;
        cells[0].expected += c.expected;
    }
    if cells.len() < 2 {
        return Err(Error::InsufficientData {
            needed: 10,
            got: n,
        });
    }
    let statistic = cells
        .iter()
        .map(|c| (c.observed as f64 - c.expected).powi(2) / c.expected)
        .sum::<f64>();
    let df = cells.len() - 1;
    Ok(ChiSquareTest {
        statistic,
        df,
        p_value: chi_square_sf(statistic, df)?,
        n_subintervals,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonTestReport {
    pub window: YearWindow,
    pub n_events: usize,
    pub gaps: GapSeries,
    /// Exponential QQ of the gaps; absent with fewer than two gaps.
    pub qq: Option<QqPlot<f64>>,
    /// Autocorrelation of the gaps at lags `0..=20`.
    pub acf: Vec<f64>,
    /// Half-width of the 95% white-noise band, `1.96/√n`.
    pub acf_band: f64,
    /// Lags `1..` whose autocorrelation falls outside the band.
    pub lags_outside_band: Vec<usize>,
    pub chi_square: ChiSquareTest,
}

impl PoissonTestReport {
    pub fn qq_correlation(&self) -> Option<f64> {
        self.qq.as_ref().map(|q| q.correlation)
    }
}

/// Default cell count: `⌊n/10⌋` capped at 20, at least 2.
pub fn default_subintervals(n_events: usize) -> usize {
    (n_events / 10).clamp(2, 20)
}

/// Exponential gaps, uncorrelated gaps and uniform occupancy of the window
/// for events at or above `threshold`.
pub fn poisson_battery(
    obs: &ObservationSet,
    threshold: f64,
    window: YearWindow,
    n_subintervals: Option<usize>,
) -> Result<PoissonTestReport> {
    let years = qualifying_years(obs, threshold, Some(window));
    let n_events = years.len();
    let gaps = gaps_from_years(years, threshold, obs.anchor)?;
    let g: Vec<f64> = gaps.gaps.iter().map(|&x| x as f64).collect();
    let qq = if g.len() >= 2 { Some(qq_exponential(&g)?) } else { None };
    let acf = acf(&g, MAX_LAG);
    let acf_band = 1.96 / (g.len() as f64).sqrt();
    let lags_outside_band = acf
        .iter()
        .enumerate()
        .skip(1)
        .filter(|(_, r)| r.abs() > acf_band)
        .map(|(h, _)| h)
        .collect();
    let m = n_subintervals
        .unwrap_or_else(|| default_subintervals(n_events))
        .min(window.span() as usize);
    let chi_square = equiprobability_test(&gaps.years, window, m)?;
    Ok(PoissonTestReport {
        window,
        n_events,
        gaps,
        qq,
        acf,
        acf_band,
        lags_outside_band,
        chi_square,
    })
}

/// GPD fit to the excesses of events whose anchor year lies in `window`.
pub fn restricted_refit(
    records: &[ConflictRecord],
    spec: &ViewSpec,
    threshold: f64,
    window: YearWindow,
    opts: &FitOptions,
) -> Result<GpdFit> {
    let spec = ViewSpec {
        window: Some(window),
        ..*spec
    };
    let obs = build_observation_set(records, &spec, threshold)?;
    fit_exceedances(&obs.values, threshold, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::View;
    use crate::seeds;
    use crate::synth::{sample_history, SynthConfig};
    use rand::Rng;
    use rand_distr::{Distribution, Exp};

    fn obs_years(years: &[i32]) -> ObservationSet {
        ObservationSet {
            view: View::Raw,
            threshold: 0.0,
            anchor: AnchorRule::Start,
            bounds: None,
            records: Vec::new(),
            values: vec![1.0; years.len()],
            lower: vec![1.0; years.len()],
            upper: vec![1.0; years.len()],
            anchor_years: years.to_vec(),
        }
    }

    #[test]
    fn hand_gaps() {
        let g = gap_series(&obs_years(&[20, 10, 12]), 0.0).unwrap();
        assert_eq!(g.gaps, vec![2, 8]);
        assert_eq!(g.mean, 5.0);
        assert_eq!(g.mad, 3.0);
        assert!(gap_series(&obs_years(&[5]), 0.0).is_err());
        let z = gap_series(&obs_years(&[5, 5, 9]), 0.0).unwrap();
        assert_eq!(z.gaps, vec![0, 4]);
    }

    #[test]
    fn telescoping_and_threshold_monotonicity() {
        let recs = sample_history(&SynthConfig {
            n_events: Some(400),
            ..SynthConfig::default()
        })
        .unwrap();
        let spec = ViewSpec::new(View::Raw);
        let mut prev = 0.0;
        for u in [25_000.0, 1e5, 5e5, 2e6] {
            let obs = build_observation_set(&recs, &spec, u).unwrap();
            let g = gap_series(&obs, u).unwrap();
            let span = g.years.last().unwrap() - g.years[0];
            assert!((g.mean * g.gaps.len() as f64 - span as f64).abs() < 1e-9);
            assert!(g.mean >= prev);
            prev = g.mean;
        }
        let table = gap_table(&recs, &spec, &[25_000.0, 1e5]).unwrap();
        assert_eq!(table.len(), 6);
    }

    #[test]
    fn acf_properties() {
        let x = [1.0, 3.0, 2.0, 5.0, 4.0];
        let r = acf(&x, 20);
        assert_eq!(r.len(), 5);
        assert!((r[0] - 1.0).abs() < 1e-15);
        assert_eq!(acf(&[2.0, 2.0, 2.0], 20), vec![1.0]);
    }

    #[test]
    fn white_noise_band_calibration() {
        let mut outside = 0usize;
        let seeds_n = 500;
        for s in 0..seeds_n {
            let mut rng = seeds::rng(s);
            let x: Vec<f64> = Exp::new(1.0).unwrap().sample_iter(&mut rng).take(500).collect();
            let r = acf(&x, MAX_LAG);
            let band = 1.96 / (x.len() as f64).sqrt();
            outside += r[1..].iter().filter(|v| v.abs() > band).count();
        }
        let frac = outside as f64 / (seeds_n as usize * MAX_LAG) as f64;
        assert!(frac <= 0.10, "{frac}");
    }

    #[test]
    fn cells_and_merging() {
        let w = YearWindow::new(1, 100).unwrap();
        let years: Vec<i32> = (1..=100).collect();
        let t = equiprobability_test(&years, w, 10).unwrap();
        assert_eq!(t.cells.len(), 10);
        assert_eq!(t.statistic, 0.0);
        assert_eq!(t.p_value, 1.0);
        assert_eq!(t.cells[0].start, 1);
        assert_eq!(t.cells[9].end, 100);
        // 12 events over 4 cells: expected 3 each, merged into two cells of 6
        let few: Vec<i32> = (0..12).map(|i| 1 + i * 8).collect();
        let t = equiprobability_test(&few, w, 4).unwrap();
        assert_eq!(t.cells.len(), 2);
        assert_eq!(t.df, 1);
        assert!(t.cells.iter().all(|c| c.expected >= 5.0));
        assert_eq!(t.cells.iter().map(|c| c.observed).sum::<usize>(), 12);
        assert!(equiprobability_test(&few, w, 1).is_err());
        assert!(equiprobability_test(&[1, 2, 3], w, 2).is_err());
    }

    #[test]
    fn clustered_arrivals_are_rejected() {
        let mut rng = seeds::rng(5);
        let years: Vec<i32> = (0..60).map(|_| 1700 + rng.random_range(0..10)).collect();
        let obs = obs_years(&years);
        let r = poisson_battery(&obs, 0.0, YearWindow::new(1500, 1999).unwrap(), None).unwrap();
        assert!(r.chi_square.p_value < 0.01);
    }

    #[test]
    fn poisson_histories_pass_most_of_the_time() {
        let window = YearWindow::new(1500, 2015).unwrap();
        let mut pass = 0;
        let runs = 200;
        for s in 0..runs {
            let recs = sample_history(&SynthConfig {
                rate: 1.0,
                window,
                seed: s,
                ..SynthConfig::default()
            })
            .unwrap();
            let obs = build_observation_set(&recs, &ViewSpec::new(View::Raw), 0.0).unwrap();
            let r = poisson_battery(&obs, 0.0, window, None).unwrap();
            assert!(r.qq_correlation().unwrap() > 0.9);
            if r.chi_square.p_value > 0.10 {
                pass += 1;
            }
        }
        let frac = pass as f64 / runs as f64;
        assert!((0.84..=0.96).contains(&frac), "{frac}");
    }

    #[test]
    fn restricted_window() {
        let recs = sample_history(&SynthConfig {
            n_events: Some(600),
            window: YearWindow::new(1000, 2015).unwrap(),
            ..SynthConfig::default()
        })
        .unwrap();
        let spec = ViewSpec::new(View::Raw);
        let f = restricted_refit(&recs, &spec, 25_000.0, YearWindow::new(1500, 2015).unwrap(), &FitOptions::default()).unwrap();
        assert!(f.params.n_exceed < 600);
        assert!(restricted_refit(&recs, &spec, 25_000.0, YearWindow::new(2100, 2200).unwrap(), &FitOptions::default()).is_err());
    }
}
