//! Points of C^k, polydiscs and the filtration V / V+ / V-.
//!
//! Coordinate axes are 1-based in every public API (axis 1 is `z_1`).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DIM: usize = 2;
pub const MAX_DIM: usize = 8;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexVector {
    pub entries: Vec<Complex64>,
    /// Set when some entry left double range during a map evaluation.
    pub overflowed: bool,
}

impl ComplexVector {
    pub fn new(entries: Vec<Complex64>) -> Result<Self> {
        check_dim(entries.len())?;
        Ok(ComplexVector { entries, overflowed: false })
    }

    /// Builds a vector and flags it when an entry is not finite.
    pub fn flagged(entries: Vec<Complex64>) -> Self {
        let overflowed = entries.iter().any(|z| !(z.re.is_finite() && z.im.is_finite()));
        ComplexVector { entries, overflowed }
    }

    pub fn zeros(k: usize) -> Self {
        ComplexVector { entries: vec![Complex64::new(0.0, 0.0); k], overflowed: false }
    }

    pub fn from_real(xs: &[f64]) -> Self {
        ComplexVector { entries: xs.iter().map(|&x| Complex64::new(x, 0.0)).collect(), overflowed: false }
    }

    pub fn k(&self) -> usize {
        self.entries.len()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    pub fn scale(&self, c: Complex64) -> Self {
        ComplexVector::flagged(self.entries.iter().map(|z| z * c).collect())
    }

    pub fn add(&self, other: &ComplexVector) -> Self {
        ComplexVector::flagged(self.entries.iter().zip(&other.entries).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &ComplexVector) -> Self {
        ComplexVector::flagged(self.entries.iter().zip(&other.entries).map(|(a, b)| a - b).collect())
    }

    /// Sup-norm without the finiteness check (inf/NaN propagate).
    pub fn sup_norm_unchecked(&self) -> f64 {
        self.entries.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }
}

pub fn check_dim(k: usize) -> Result<()> {
    if (MIN_DIM..=MAX_DIM).contains(&k) {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("dimension k={k} outside {MIN_DIM}..={MAX_DIM}")))
    }
}

pub fn sup_norm(z: &ComplexVector) -> Result<f64> {
    if !z.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(z.sup_norm_unchecked())
}

/// True iff every `|z_i| < c`.
pub fn in_polydisc(z: &ComplexVector, c: f64) -> bool {
    z.entries.iter().all(|w| w.norm() < c)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FiltrationSpec {
    pub r: f64,
    /// 1-based axes whose `V_i` make up `V+`, sorted.
    pub plus_axes: Vec<usize>,
    pub k: usize,
}

impl FiltrationSpec {
    pub fn new(k: usize, r: f64, mut plus_axes: Vec<usize>) -> Result<Self> {
        check_dim(k)?;
        if !(r > 1.0) {
            return Err(Error::InvalidParameter(format!("filtration radius must exceed 1, got {r}")));
        }
        plus_axes.sort_unstable();
        plus_axes.dedup();
        if plus_axes.is_empty() || plus_axes.len() >= k {
            return Err(Error::InvalidParameter("plus_axes must be a nonempty proper subset".into()));
        }
        if plus_axes.iter().any(|&a| a == 0 || a > k) {
            return Err(Error::InvalidParameter(format!("plus_axes must lie in 1..={k}")));
        }
        Ok(FiltrationSpec { r, plus_axes, k })
    }

    /// `V+ = V_2 ∪ … ∪ V_k`, `V- = V_1`.
    pub fn standard(k: usize, r: f64) -> Result<Self> {
        Self::new(k, r, (2..=k).collect())
    }

    pub fn is_plus_axis(&self, axis: usize) -> bool {
        self.plus_axes.binary_search(&axis).is_ok()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Region {
    Interior,
    Plus,
    Minus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionTag {
    pub region: Region,
    /// 1-based; `None` exactly for `Interior`.
    pub dominant_axis: Option<usize>,
}

/// Index (1-based) of the largest value; ties go to the largest index.
pub fn dominant_axis_of(values: impl IntoIterator<Item = f64>) -> (usize, f64) {
    let mut best = (0usize, f64::NEG_INFINITY);
    for (i, v) in values.into_iter().enumerate() {
        if v >= best.1 {
            best = (i + 1, v);
        }
    }
    best
}

/// Classification from per-axis magnitudes (moduli or log-moduli) and the
/// matching threshold (`R` or `ln R`).
pub fn classify_values(values: impl IntoIterator<Item = f64>, threshold: f64, f: &FiltrationSpec) -> RegionTag {
    let (axis, sup) = dominant_axis_of(values);
    if sup < threshold {
        return RegionTag { region: Region::Interior, dominant_axis: None };
    }
    let region = if f.is_plus_axis(axis) { Region::Plus } else { Region::Minus };
    RegionTag { region, dominant_axis: Some(axis) }
}

pub fn classify_filtration(z: &ComplexVector, f: &FiltrationSpec) -> Result<RegionTag> {
    if z.k() != f.k {
        return Err(Error::DimensionMismatch { expected: f.k, got: z.k() });
    }
    if !z.is_finite() {
        return Err(Error::NonFinite);
    }
    Ok(classify_values(z.entries.iter().map(|w| w.norm()), f.r, f))
}

/// Same partition for a point held as log-moduli.
pub fn classify_log_moduli(logs: &[f64], f: &FiltrationSpec) -> Result<RegionTag> {
    if logs.len() != f.k {
        return Err(Error::DimensionMismatch { expected: f.k, got: logs.len() });
    }
    Ok(classify_values(logs.iter().copied(), f.r.ln(), f))
}
