use std::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Upper bound on the number of frequency bands a simulation can use.
pub const MAX_BANDS: usize = 16;

/// Logarithmically spaced band centers. Band edges are the geometric
/// midpoints between neighbouring centers; the outer edges sit half a
/// spacing beyond the first and last center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct FrequencyBands {
    centers: Vec<f64>,
}

impl FrequencyBands {
    pub fn new(centers: Vec<f64>) -> Result<Self> {
        if centers.is_empty() || centers.len() > MAX_BANDS {
            return Err(Error::invalid(format!("band count must be in 1..={MAX_BANDS}")));
        }
        if centers.iter().any(|&f| !(f.is_finite() && f > 0.0)) {
            return Err(Error::invalid("band centers must be positive"));
        }
        if centers.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("band centers must be strictly increasing"));
        }
        Ok(FrequencyBands { centers })
    }

    /// `count` bands whose edges split `[f_lo, f_hi]` evenly in log frequency.
    pub fn log_spaced(count: usize, f_lo: f64, f_hi: f64) -> Result<Self> {
        if count == 0 || !(f_lo > 0.0 && f_hi > f_lo) {
            return Err(Error::invalid("invalid band range"));
        }
        let ratio = (f_hi / f_lo).powf(1.0 / count as f64);
        let centers = (0..count).map(|i| f_lo * ratio.powf(i as f64 + 0.5)).collect();
        Self::new(centers)
    }

    /// Eight octave bands with edges from 62.5 Hz to 16 kHz.
    pub fn octaves() -> Self {
        Self::log_spaced(8, 62.5, 16_000.0).expect("static band layout")
    }

    pub fn len(&self) -> usize {
        self.centers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centers.is_empty()
    }

    pub fn centers(&self) -> &[f64] {
        &self.centers
    }

    /// `len() + 1` band edges.
    pub fn edges(&self) -> Vec<f64> {
        let c = &self.centers;
        let n = c.len();
        let mut e = Vec::with_capacity(n + 1);
        if n == 1 {
            return vec![c[0] / 2f64.sqrt(), c[0] * 2f64.sqrt()];
        }
        e.push(c[0] / (c[1] / c[0]).sqrt());
        for w in c.windows(2) {
            e.push((w[0] * w[1]).sqrt());
        }
        e.push(c[n - 1] * (c[n - 1] / c[n - 2]).sqrt());
        e
    }

    pub fn spectrum(&self, value: f64) -> Spectrum {
        Spectrum::splat(self.len(), value)
    }
}

impl Default for FrequencyBands {
    fn default() -> Self {
        Self::octaves()
    }
}

impl TryFrom<Vec<f64>> for FrequencyBands {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<FrequencyBands> for Vec<f64> {
    fn from(b: FrequencyBands) -> Self {
        b.centers
    }
}

/// Per-band values with inline storage; entries past `len` are zero.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum {
    values: [f64; MAX_BANDS],
    len: usize,
}

impl Spectrum {
    pub fn splat(len: usize, v: f64) -> Self {
        let mut values = [0.0; MAX_BANDS];
        values[..len].fill(v);
        Spectrum { values, len }
    }

    pub fn zeros(len: usize) -> Self {
        Self::splat(len, 0.0)
    }

    pub fn from_slice(s: &[f64]) -> Self {
        let mut values = [0.0; MAX_BANDS];
        values[..s.len()].copy_from_slice(s);
        Spectrum { values, len: s.len() }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values[..self.len]
    }

    pub fn max(&self) -> f64 {
        self.as_slice().iter().copied().fold(0.0, f64::max)
    }

    pub fn sum(&self) -> f64 {
        self.as_slice().iter().sum()
    }

    pub fn mean(&self) -> f64 {
        if self.len == 0 {
            0.0
        } else {
            self.sum() / self.len as f64
        }
    }

    /// Weighted sum `Σ wᵢ vᵢ`.
    pub fn dot(&self, w: &[f64]) -> f64 {
        self.as_slice().iter().zip(w).map(|(a, b)| a * b).sum()
    }

    pub fn map(mut self, f: impl Fn(f64) -> f64) -> Self {
        for v in &mut self.values[..self.len] {
            *v = f(*v);
        }
        self
    }

    pub fn zip_map(mut self, o: &Spectrum, f: impl Fn(f64, f64) -> f64) -> Self {
        for (v, w) in self.values[..self.len].iter_mut().zip(&o.values) {
            *v = f(*v, *w);
        }
        self
    }

    pub fn scale(self, s: f64) -> Self {
        self.map(|v| v * s)
    }

    pub fn mul(self, o: &Spectrum) -> Self {
        self.zip_map(o, |a, b| a * b)
    }

    pub fn add_assign(&mut self, o: &Spectrum) {
        for (v, w) in self.values[..self.len].iter_mut().zip(&o.values) {
            *v += *w;
        }
    }
}

impl Index<usize> for Spectrum {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.as_slice()[i]
    }
}

impl IndexMut<usize> for Spectrum {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        let len = self.len;
        &mut self.values[..len][i]
    }
}
