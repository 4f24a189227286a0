//! The log change of variable between a bounded severity on `[L, H)` and its
//! unbounded dual on `[L, ∞)`:
//!
//! ```text
//! φ(y)    = L − H·ln((H − y)/(H − L))
//! φ⁻¹(z)  = (L − H)·exp((L − z)/H) + H
//! ```
//!
//! `φ` fixes `L`, is strictly increasing, and `φ(y) ≈ y` while `y ≪ H`.

use serde::{Deserialize, Serialize};

use crate::corpus::{ObservationSet, View};
use crate::error::{Error, Result};
use crate::scalar::Real;

/// Support `[lower, upper]` of the bounded severity.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualBounds<T> {
    lower: T,
    upper: T,
}

impl<T: Real> DualBounds<T> {
    pub fn new(lower: T, upper: T) -> Result<Self> {
        if !(lower > T::zero() && lower < upper && upper.is_finite()) {
            return Err(Error::domain(format!(
                "dual bounds need 0 < L < H < inf, got L={lower}, H={upper}"
            )));
        }
        Ok(Self { lower, upper })
    }

    pub fn lower(&self) -> T {
        self.lower
    }

    pub fn upper(&self) -> T {
        self.upper
    }

    /// `H − L`
    pub fn width(&self) -> T {
        self.upper - self.lower
    }

    /// Returns the same bounds with a new lower end.
    pub fn with_lower(&self, lower: T) -> Result<Self> {
        Self::new(lower, self.upper)
    }
}

/// Maps a bounded value `y ∈ [L, H)` to the dual scale.
pub fn phi<T: Real>(y: T, bounds: &DualBounds<T>) -> Result<T> {
    let (l, h) = (bounds.lower, bounds.upper);
    if y.is_nan() || y < l || y > h {
        return Err(Error::domain(format!("phi: y={y} outside [{l}, {h})")));
    }
    if y == h {
        return Err(Error::domain(format!("phi: y equals the upper bound {h} (dual value is infinite)")));
    }
    if y == l {
        return Ok(l);
    }
    // Ratio formed before the log; keeps precision as y approaches H.
    Ok(l - h * ((h - y) / (h - l)).ln())
}

/// Maps a dual value `z ≥ L` back to `[L, H)`.
pub fn phi_inverse<T: Real>(z: T, bounds: &DualBounds<T>) -> Result<T> {
    let (l, h) = (bounds.lower, bounds.upper);
    if z.is_nan() || z < l {
        return Err(Error::domain(format!("phi_inverse: z={z} below lower bound {l}")));
    }
    if z == l {
        return Ok(l);
    }
    // y = L + (H − L)·(1 − e^{−(z−L)/H})
    Ok(l - (h - l) * (-(z - l) / h).exp_m1())
}

/// Derivative `φ′(y) = H / (H − y)`.
pub fn phi_derivative<T: Real>(y: T, bounds: &DualBounds<T>) -> Result<T> {
    let (l, h) = (bounds.lower, bounds.upper);
    if y.is_nan() || y < l || y >= h {
        return Err(Error::domain(format!("phi': y={y} outside [{l}, {h})")));
    }
    Ok(h / (h - y))
}

/// Applies `φ` to every value and bound of a rescaled (or raw) observation set.
///
/// Lower bounds below `L` are clamped to `L`; a value outside `[L, H)` is an
/// error naming its record.
pub fn dualize(obs: &ObservationSet, bounds: &DualBounds<f64>) -> Result<ObservationSet> {
    if obs.view == View::Dual {
        return Err(Error::invalid("observation set is already in the dual view"));
    }
    let mut out = obs.empty_like();
    out.view = View::Dual;
    out.bounds = Some(*bounds);
    out.threshold = phi(obs.threshold.max(bounds.lower()), bounds)?;
    for i in 0..obs.len() {
        let name = obs.records.get(i).map_or("<unnamed>", |r| r.name.as_str());
        let map = |y: f64| phi(y, bounds).map_err(|e| Error::domain(format!("{name}: {e}")));
        out.values.push(map(obs.values[i])?);
        out.lower.push(map(obs.lower[i].max(bounds.lower()))?);
        out.upper.push(map(obs.upper[i])?);
    }
    out.records = obs.records.clone();
    out.anchor_years = obs.anchor_years.clone();
    Ok(out)
}
