//! Pickands' order-statistics estimator of the shape.

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PickandsPoint {
    pub k: usize,
    pub xi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PickandsCurve {
    pub points: Vec<PickandsPoint>,
    /// `k` values left out because a spacing was zero or negative.
    pub omitted: Vec<usize>,
    /// Median estimate over the middle third of `k`.
    pub summary: f64,
}

/// `ξ̂_k = ln((X_(k) − X_(2k)) / (X_(2k) − X_(4k))) / ln 2` for `k = 1..⌊n/4⌋`,
/// with `X_(j)` the `j`-th largest observation.
pub fn pickands_curve(sample: &[f64]) -> Result<PickandsCurve> {
    if sample.len() < 4 {
        return Err(Error::InsufficientData { needed: 4, got: sample.len() });
    }
    if sample.iter().any(|x| !x.is_finite()) {
        return Err(Error::invalid("sample contains non-finite values"));
    }
    let mut x = sample.to_vec();
    x.sort_by(|a, b| b.total_cmp(a));
    let kmax = x.len() / 4;
    let mut points = Vec::with_capacity(kmax);
    let mut omitted = Vec::new();
    for k in 1..=kmax {
        let num = x[k - 1] - x[2 * k - 1];
        let den = x[2 * k - 1] - x[4 * k - 1];
        if num <= 0.0 || den <= 0.0 {
            omitted.push(k);
            continue;
        }
        points.push(PickandsPoint {
            k,
            xi: (num / den).ln() / std::f64::consts::LN_2,
        });
    }
    if points.is_empty() {
        return Err(Error::Degenerate("every Pickands spacing is zero".into()));
    }
    let (lo, hi) = (kmax / 3, 2 * kmax / 3);
    let mut mid: Vec<f64> = points.iter().filter(|p| p.k > lo && p.k <= hi).map(|p| p.xi).collect();
    if mid.is_empty() {
        mid = points.iter().map(|p| p.xi).collect();
    }
    Ok(PickandsCurve {
        points,
        omitted,
        summary: median(&mut mid),
    })
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gpd::GpdParams;
    use crate::synth::sample_gpd;

    #[test]
    fn doubling_spacings_give_unit_shape() {
        // X_(1)=7, X_(2)=3, X_(4)=1: spacings 4 and 2
        let s = [7.0, 3.0, 2.0, 1.0, 0.5, 0.4, 0.3, 0.2];
        let c = pickands_curve(&s).unwrap();
        assert_eq!(c.points[0].k, 1);
        assert!((c.points[0].xi - 1.0).abs() < 1e-15);
    }

    #[test]
    fn ties_are_omitted_and_flagged() {
        let s = [9.0, 9.0, 7.0, 5.0, 3.0, 2.0, 1.0, 0.0];
        let c = pickands_curve(&s).unwrap();
        assert_eq!(c.omitted, vec![1]);
        assert_eq!(c.points.len(), 1);
        assert!(pickands_curve(&[1.0; 12]).is_err());
        assert!(pickands_curve(&[1.0, 2.0, 3.0]).is_err());
    }

    #[test]
    fn exact_gpd_quantiles_give_exact_shape() {
        // X_(j) = U(n/j) for the GPD tail quantile function
        let p = GpdParams::new(0.7, 3.0).unwrap();
        let n = 400;
        let s: Vec<f64> = (1..=n).map(|j| p.quantile(1.0 - j as f64 / (n + 1) as f64).unwrap()).collect();
        let c = pickands_curve(&s).unwrap();
        for pt in &c.points {
            assert!((pt.xi - 0.7).abs() < 0.02, "{pt:?}");
        }
    }

    #[test]
    fn summary_recovers_moderate_shape() {
        let mut errs: Vec<f64> = (0..100)
            .map(|seed| {
                let w = sample_gpd(&GpdParams::new(0.5, 1.0).unwrap(), 10_000, seed);
                (pickands_curve(&w).unwrap().summary - 0.5).abs()
            })
            .collect();
        assert!(median(&mut errs) <= 0.15);
    }
}
