//! Exploratory heavy-tail statistics: mean excess, maximum-to-sum ratios,
//! exponential QQ, Zipf plot data and record counts.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::scalar::Real;

fn sorted<T: Real>(sample: &[T]) -> Vec<T> {
    let mut v = sample.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite sample"));
    v
}

fn check_finite<T: Real>(sample: &[T]) -> Result<()> {
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("sample contains non-finite values"));
    }
    Ok(())
}

/// Empirical `e_n(u) = Σ_{X_i>u}(X_i − u) / #{X_i > u}`.
pub fn mean_excess<T: Real>(sample: &[T], u: T) -> Result<T> {
    check_finite(sample)?;
    let (mut sum, mut count) = (T::zero(), 0usize);
    for &x in sample.iter().filter(|&&x| x > u) {
        sum = sum + (x - u);
        count += 1;
    }
    if count == 0 {
        return Err(Error::EmptySelection {
            threshold: u.to_f64_lossy(),
            view: "sample".into(),
        });
    }
    Ok(sum / T::from_usize_lossy(count))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MePlotSeries<T> {
    /// `(u, e_n(u))` at each distinct order statistic below the maximum.
    pub points: Vec<(T, T)>,
}

/// Mean excess evaluated at the order statistics, omitting the maximum.
pub fn meplot<T: Real>(sample: &[T]) -> Result<MePlotSeries<T>> {
    if sample.len() < 3 {
        return Err(Error::InsufficientData { needed: 3, got: sample.len() });
    }
    check_finite(sample)?;
    let x = sorted(sample);
    let n = x.len();
    // suffix sums of the sorted sample
    let mut tail = vec![T::zero(); n + 1];
    for i in (0..n).rev() {
        tail[i] = tail[i + 1] + x[i];
    }
    let mut points = Vec::new();
    let mut i = 0;
    while i < n {
        let u = x[i];
        let mut j = i;
        while j < n && x[j] == u {
            j += 1;
        }
        if j == n {
            break;
        }
        let m = T::from_usize_lossy(n - j);
        points.push((u, tail[j] / m - u));
        i = j;
    }
    Ok(MePlotSeries { points })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MsPlotSeries<T> {
    /// `ratios[p − 1][n − 1] = R_n^p` for `p = 1..4`.
    pub ratios: Vec<Vec<T>>,
}

/// Running `R_n^p = max_{i≤n} X_i^p / Σ_{i≤n} X_i^p` in presentation order.
pub fn max_to_sum<T: Real>(sample: &[T], p: u32) -> Result<Vec<T>> {
    if p < 1 {
        return Err(Error::domain("max-to-sum order p must be at least 1"));
    }
    check_finite(sample)?;
    if sample.iter().any(|&x| x < T::zero()) {
        return Err(Error::domain("max-to-sum needs a non-negative sample"));
    }
    let pi = p as i32;
    // track Σ (X_i/M)^p so nothing overflows
    let (mut m, mut s) = (T::zero(), T::zero());
    let mut out = Vec::with_capacity(sample.len());
    for &x in sample {
        if x > m {
            if m > T::zero() {
                s = s * (m / x).powi(pi);
            }
            m = x;
            s = s + T::one();
        } else if m > T::zero() {
            s = s + (x / m).powi(pi);
        }
        // an all-zero prefix has ratio 0/0; report 1 as for a single point
        out.push(if m > T::zero() { T::one() / s } else { T::one() });
    }
    Ok(out)
}

/// Max-to-sum ratios for `p = 1..4`.
pub fn ms_plot<T: Real>(sample: &[T]) -> Result<MsPlotSeries<T>> {
    let ratios = (1..=4).map(|p| max_to_sum(sample, p)).collect::<Result<_>>()?;
    Ok(MsPlotSeries { ratios })
}

/// Pearson correlation; `1` when both coordinates are constant only if `n < 2`.
pub fn pearson<T: Real>(pairs: &[(T, T)]) -> T {
    let n = T::from_usize_lossy(pairs.len());
    if pairs.len() < 2 {
        return T::one();
    }
    let mx = pairs.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let my = pairs.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let (mut sxy, mut sxx, mut syy) = (T::zero(), T::zero(), T::zero());
    for &(x, y) in pairs {
        let (dx, dy) = (x - mx, y - my);
        sxy = sxy + dx * dy;
        sxx = sxx + dx * dx;
        syy = syy + dy * dy;
    }
    sxy / (sxx * syy).sqrt()
}

/// Least-squares slope of `y` on `x`.
pub fn ols_slope<T: Real>(pairs: &[(T, T)]) -> T {
    let n = T::from_usize_lossy(pairs.len());
    let mx = pairs.iter().fold(T::zero(), |a, p| a + p.0) / n;
    let my = pairs.iter().fold(T::zero(), |a, p| a + p.1) / n;
    let (mut sxy, mut sxx) = (T::zero(), T::zero());
    for &(x, y) in pairs {
        sxy = sxy + (x - mx) * (y - my);
        sxx = sxx + (x - mx) * (x - mx);
    }
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QqPlot<T> {
    /// `(theoretical, empirical)` quantile pairs in increasing order.
    pub points: Vec<(T, T)>,
    pub correlation: T,
}

fn qq_with_scale<T: Real>(sample: &[T], scale: Option<T>) -> QqPlot<T> {
    let x = sorted(sample);
    let n = x.len();
    let scale = scale.unwrap_or_else(|| x.iter().fold(T::zero(), |a, &b| a + b) / T::from_usize_lossy(n));
    let np1 = T::from_usize_lossy(n + 1);
    let points: Vec<(T, T)> = x
        .iter()
        .enumerate()
        .map(|(i, &xi)| {
            let p = T::from_usize_lossy(i + 1) / np1;
            (-(-p).ln_1p() * scale, xi)
        })
        .collect();
    let correlation = pearson(&points);
    QqPlot { points, correlation }
}

/// Exponential QQ data: `(−ln(1 − i/(n+1))·mean, X_(i))`.
pub fn qq_exponential<T: Real>(sample: &[T]) -> Result<QqPlot<T>> {
    if sample.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: sample.len() });
    }
    check_finite(sample)?;
    Ok(qq_with_scale(sample, None))
}

/// QQ data against the standard exponential (unit mean).
pub fn qq_exponential_standard<T: Real>(sample: &[T]) -> QqPlot<T> {
    qq_with_scale(sample, Some(T::one()))
}

/// `(ln X_(i), ln((n − i)/n))` for `i = 1..n−1`.
pub fn zipf_data<T: Real>(sample: &[T]) -> Result<Vec<(T, T)>> {
    check_finite(sample)?;
    if sample.iter().any(|&x| x <= T::zero()) {
        return Err(Error::domain("Zipf plot needs a positive sample"));
    }
    let x = sorted(sample);
    let n = x.len();
    let nf = T::from_usize_lossy(n);
    Ok((0..n.saturating_sub(1))
        .map(|i| (x[i].ln(), (T::from_usize_lossy(n - i - 1) / nf).ln()))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordSeries<T> {
    /// 1-based positions of the records.
    pub positions: Vec<usize>,
    /// `counts[n − 1]` = records among the first `n` observations.
    pub counts: Vec<usize>,
    /// Expected count under i.i.d. sampling, `H_n = Σ_{i≤n} 1/i`.
    pub harmonic: Vec<T>,
}

impl<T> RecordSeries<T> {
    pub fn total(&self) -> usize {
        self.positions.len()
    }
}

/// Strict records of a chronologically ordered sample.
pub fn record_counts<T: Real>(sample: &[T]) -> RecordSeries<T> {
    let mut positions = Vec::new();
    let mut counts = Vec::with_capacity(sample.len());
    let mut harmonic = Vec::with_capacity(sample.len());
    let mut best: Option<T> = None;
    let mut h = T::zero();
    for (i, &x) in sample.iter().enumerate() {
        if best.is_none_or(|b| x > b) {
            best = Some(x);
            positions.push(i + 1);
        }
        counts.push(positions.len());
        h = h + T::one() / T::from_usize_lossy(i + 1);
        harmonic.push(h);
    }
    RecordSeries {
        positions,
        counts,
        harmonic,
    }
}

/// `H_n = Σ_{i≤n} 1/i`.
pub fn harmonic_number(n: usize) -> f64 {
    (1..=n).rev().map(|i| 1.0 / i as f64).sum()
}
