use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;
use crate::materials::FrequencyBands;
use crate::scene::Plane;
use crate::spatial::sh;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcclusionState {
    Visible,
    Diffracted,
    Transmitted,
    Blocked,
}

/// The direct arrival, rendered as an exact impulse.
#[derive(Debug, Clone, PartialEq)]
pub struct DirectSound {
    pub delay: f64,
    pub energy: Vec<f64>,
    /// Arrival direction in the listener frame.
    pub direction: Vec3,
    pub state: OcclusionState,
    pub path_length: f64,
}

/// A cluster of specular paths sharing the same sequence of reflecting planes.
#[derive(Debug, Clone, PartialEq)]
pub struct EarlyReflection {
    /// Energy-weighted mean delay.
    pub delay: f64,
    pub energy: Vec<f64>,
    /// Energy-weighted mean arrival direction in the listener frame.
    pub direction: Vec3,
    /// Reflecting planes in order from source to listener.
    pub planes: Vec<Plane>,
    pub paths: u64,
}

impl EarlyReflection {
    pub fn order(&self) -> usize {
        self.planes.len()
    }
}

/// Counters from one simulation run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct TraceStats {
    pub source_rays: u64,
    pub listener_rays: u64,
    pub batches: u64,
    pub source_detections: u64,
    pub listener_detections: u64,
    pub connections: u64,
    /// Rays that escaped the scene.
    pub escaped: u64,
}

/// Time-binned per-band energy with directional moments, plus the direct
/// sound and clustered early reflections.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyHistogram {
    pub sampling_rate: u32,
    pub bin_samples: u32,
    pub bands: FrequencyBands,
    pub sh_order: u32,
    /// Ambisonic order used when rendering the direct sound.
    pub direct_sh_order: u32,
    bins: usize,
    energy: Vec<f64>,
    sh: Vec<f64>,
    pub direct: Option<DirectSound>,
    pub early_reflections: Vec<EarlyReflection>,
    /// Contributions that arrived after the last bin.
    pub dropped: u64,
    pub stats: TraceStats,
}

impl EnergyHistogram {
    pub fn new(sampling_rate: u32, bin_samples: u32, bands: FrequencyBands, sh_order: u32, seconds: f64) -> Self {
        let bins = ((seconds * sampling_rate as f64) / bin_samples as f64).ceil().max(1.0) as usize;
        let nb = bands.len();
        EnergyHistogram {
            sampling_rate,
            bin_samples,
            bands,
            sh_order,
            direct_sh_order: sh_order,
            bins,
            energy: vec![0.0; bins * nb],
            sh: vec![0.0; bins * sh::sh_count(sh_order)],
            direct: None,
            early_reflections: Vec::new(),
            dropped: 0,
            stats: TraceStats::default(),
        }
    }

    pub fn bin_count(&self) -> usize {
        self.bins
    }

    pub fn band_count(&self) -> usize {
        self.bands.len()
    }

    /// Bin width in seconds.
    pub fn bin_duration(&self) -> f64 {
        self.bin_samples as f64 / self.sampling_rate as f64
    }

    pub fn duration(&self) -> f64 {
        self.bins as f64 * self.bin_duration()
    }

    pub fn bin_of(&self, delay: f64) -> Option<usize> {
        if !(delay >= 0.0) {
            return None;
        }
        let b = (delay / self.bin_duration()).floor();
        (b < self.bins as f64).then_some(b as usize)
    }

    /// Adds `energy` arriving at `delay` from listener-frame direction `dir`.
    /// Returns false (and counts a drop) when the delay is past the end.
    pub fn accumulate(&mut self, delay: f64, energy: &[f64], dir: Vec3) -> bool {
        let Some(bin) = self.bin_of(delay) else {
            self.dropped += 1;
            return false;
        };
        let mut y = [0.0; 64];
        let n = sh::sh_count(self.sh_order);
        sh::eval_into(self.sh_order, dir, &mut y[..n]);
        self.accumulate_bin(bin, energy, &y[..n]);
        true
    }

    /// Adds to a bin with precomputed harmonics.
    pub(crate) fn accumulate_bin(&mut self, bin: usize, energy: &[f64], y: &[f64]) {
        let nb = self.bands.len();
        let row = &mut self.energy[bin * nb..(bin + 1) * nb];
        let mut total = 0.0;
        for (r, e) in row.iter_mut().zip(energy) {
            *r += e;
            total += e;
        }
        let n = y.len();
        for (s, yy) in self.sh[bin * n..(bin + 1) * n].iter_mut().zip(y) {
            *s += total * yy;
        }
    }

    /// Per-band energy of one bin.
    pub fn bin_energy(&self, bin: usize) -> &[f64] {
        let nb = self.bands.len();
        &self.energy[bin * nb..(bin + 1) * nb]
    }

    pub fn bin_energy_mut(&mut self, bin: usize) -> &mut [f64] {
        let nb = self.bands.len();
        &mut self.energy[bin * nb..(bin + 1) * nb]
    }

    /// Directional moments of one bin. Coefficient 0 equals the band sum.
    pub fn bin_sh(&self, bin: usize) -> &[f64] {
        let n = sh::sh_count(self.sh_order);
        &self.sh[bin * n..(bin + 1) * n]
    }

    pub fn bin_sh_mut(&mut self, bin: usize) -> &mut [f64] {
        let n = sh::sh_count(self.sh_order);
        &mut self.sh[bin * n..(bin + 1) * n]
    }

    /// Energy envelope of band `b` over all bins.
    pub fn band_series(&self, b: usize) -> Vec<f64> {
        let nb = self.bands.len();
        (0..self.bins).map(|i| self.energy[i * nb + b]).collect()
    }

    /// Sum of the histogram (excluding direct and early reflections) per band.
    pub fn late_energy(&self) -> Vec<f64> {
        let nb = self.bands.len();
        let mut out = vec![0.0; nb];
        for row in self.energy.chunks(nb) {
            for (o, e) in out.iter_mut().zip(row) {
                *o += e;
            }
        }
        out
    }

    /// Total per-band energy of the direct sound, reflections and histogram.
    pub fn total_energy(&self) -> Vec<f64> {
        let mut out = self.late_energy();
        let mut add = |e: &[f64]| out.iter_mut().zip(e).for_each(|(o, x)| *o += x);
        if let Some(d) = &self.direct {
            add(&d.energy);
        }
        for er in &self.early_reflections {
            add(&er.energy);
        }
        out
    }

    pub fn is_compatible(&self, o: &EnergyHistogram) -> bool {
        self.sampling_rate == o.sampling_rate
            && self.bin_samples == o.bin_samples
            && self.bands == o.bands
            && self.sh_order == o.sh_order
            && self.bins == o.bins
    }

    /// Replaces the histogram body with `(1 - w) · self + w · other`.
    pub fn blend_late(&mut self, other: &EnergyHistogram, w: f64) {
        assert!(self.is_compatible(other));
        for (a, b) in self.energy.iter_mut().zip(&other.energy) {
            *a = (1.0 - w) * *a + w * b;
        }
        for (a, b) in self.sh.iter_mut().zip(&other.sh) {
            *a = (1.0 - w) * *a + w * b;
        }
    }

    /// Multiplies every stored energy by `g`.
    pub fn scale(&mut self, g: f64) {
        self.energy.iter_mut().for_each(|e| *e *= g);
        self.sh.iter_mut().for_each(|e| *e *= g);
        if let Some(d) = &mut self.direct {
            d.energy.iter_mut().for_each(|e| *e *= g);
        }
        for er in &mut self.early_reflections {
            er.energy.iter_mut().for_each(|e| *e *= g);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accumulate_bins_and_drops() {
        let mut h = EnergyHistogram::new(1000, 10, FrequencyBands::octaves(), 1, 0.1);
        assert_eq!(h.bin_count(), 10);
        let e = vec![1.0; 8];
        assert!(h.accumulate(0.015, &e, Vec3::X));
        assert!(!h.accumulate(0.2, &e, Vec3::X));
        assert_eq!(h.dropped, 1);
        assert_eq!(h.bin_energy(1)[3], 1.0);
        let s = h.bin_sh(1);
        assert!((s[0] - 8.0).abs() < 1e-12 && (s[3] - 8.0).abs() < 1e-12 && s[1].abs() < 1e-12);
        assert_eq!(h.late_energy()[0], 1.0);
    }
}
