//! Zero-phase, power-complementary band splitting in the frequency domain.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::materials::FrequencyBands;

/// Smallest `n >= min` whose only prime factors are 2, 3 and 5.
pub fn fast_len(min: usize) -> usize {
    let mut n = min.max(1);
    loop {
        let mut m = n;
        for p in [2, 3, 5] {
            while m % p == 0 {
                m /= p;
            }
        }
        if m == 1 {
            return n;
        }
        n += 1;
    }
}

/// Forward and inverse transforms of one length.
#[derive(Clone)]
pub struct FftPair {
    pub len: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl FftPair {
    pub fn new(len: usize) -> Self {
        let mut planner = FftPlanner::new();
        FftPair { len, forward: planner.plan_fft_forward(len), inverse: planner.plan_fft_inverse(len) }
    }

    pub fn forward_real(&self, x: &[f64]) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        buf.resize(self.len, Complex64::new(0.0, 0.0));
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform scaled by `1/len`, keeping the real part.
    pub fn inverse_real(&self, mut buf: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut buf);
        let s = 1.0 / self.len as f64;
        buf.into_iter().map(|c| c.re * s).collect()
    }
}

/// Signed frequency in Hz of FFT bin `k`.
pub fn bin_frequency(k: usize, n: usize, sampling_rate: f64) -> f64 {
    let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
    signed * sampling_rate / n as f64
}

/// Amplitude responses `H_b(f)` with `Σ_b H_b(f)² = 1` at every frequency.
///
/// Each crossover is a sine/cosine fade in log frequency centred on a band
/// edge, spanning half the distance to the neighbouring centres.
#[derive(Debug, Clone)]
pub struct Filterbank {
    pub sampling_rate: f64,
    crossovers: Vec<f64>,
    widths: Vec<f64>,
    bands: usize,
}

impl Filterbank {
    pub fn new(bands: &FrequencyBands, sampling_rate: f64) -> Self {
        let edges = bands.edges();
        let centers = bands.centers();
        let crossovers: Vec<f64> = edges[1..edges.len() - 1].to_vec();
        let widths = crossovers
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let lo = (e / centers[i]).log2();
                let hi = (centers[i + 1] / e).log2();
                lo.min(hi)
            })
            .collect();
        Filterbank { sampling_rate, crossovers, widths, bands: centers.len() }
    }

    pub fn band_count(&self) -> usize {
        self.bands
    }

    /// Power share of the upper side of crossover `i` at frequency `f`.
    fn upper(&self, i: usize, f: f64) -> f64 {
        if f <= 0.0 {
            return 0.0;
        }
        let x = ((f / self.crossovers[i]).log2() / self.widths[i]).clamp(-1.0, 1.0);
        let phase = std::f64::consts::FRAC_PI_4 * (1.0 + x);
        phase.sin().powi(2)
    }

    /// `H_b(f)²` for a single band at |f|.
    pub fn power(&self, b: usize, f: f64) -> f64 {
        let f = f.abs();
        let mut p = 1.0;
        if b > 0 {
            p *= self.upper(b - 1, f);
        }
        if b + 1 < self.bands {
            p *= 1.0 - self.upper(b, f);
        }
        p
    }

    /// `H_b(f)²` for every band at every bin of an `n`-point FFT.
    pub fn power_table(&self, n: usize) -> Vec<Vec<f64>> {
        (0..self.bands)
            .map(|b| (0..n).map(|k| self.power(b, bin_frequency(k, n, self.sampling_rate))).collect())
            .collect()
    }

    /// Share of white-noise power passed by each band.
    pub fn band_weights(&self, n: usize) -> Vec<f64> {
        self.power_table(n).iter().map(|row| row.iter().sum::<f64>() / n as f64).collect()
    }

    /// Splits `x` into bands with zero-phase filters; the bands sum back to `x`
    /// up to circular wrap, which is avoided by padding.
    pub fn split(&self, x: &[f64]) -> Vec<Vec<f64>> {
        let n = fast_len(2 * x.len().max(1));
        let fft = FftPair::new(n);
        let spec = fft.forward_real(x);
        let table = self.power_table(n);
        table
            .iter()
            .map(|h2| {
                let buf = spec.iter().zip(h2).map(|(c, &p)| c * p).collect();
                let mut y = fft.inverse_real(buf);
                y.truncate(x.len());
                y
            })
            .collect()
    }

    /// Applies the amplitude response `H_b` (not squared) to `x`.
    pub fn filter_amplitude(&self, x: &[f64], b: usize) -> Vec<f64> {
        self.filter_group(x, &[b])
    }

    /// Applies `sqrt(Σ_b H_b²)` over the listed bands, which passes their
    /// combined energy.
    pub fn filter_group(&self, x: &[f64], bands: &[usize]) -> Vec<f64> {
        let n = fast_len(2 * x.len().max(1));
        let fft = FftPair::new(n);
        let mut spec = fft.forward_real(x);
        for (k, c) in spec.iter_mut().enumerate() {
            let f = bin_frequency(k, n, self.sampling_rate);
            *c *= bands.iter().map(|&b| self.power(b, f)).sum::<f64>().sqrt();
        }
        let mut y = fft.inverse_real(spec);
        y.truncate(x.len());
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn power_complementary() {
        let fb = Filterbank::new(&FrequencyBands::octaves(), 44100.0);
        for i in 0..2000 {
            let f = 10.0 * 1.005f64.powi(i);
            let s: f64 = (0..8).map(|b| fb.power(b, f)).sum();
            assert!((s - 1.0).abs() < 1e-12, "{f}: {s}");
        }
        assert!(fb.power(0, 50.0) > 0.99);
        assert!(fb.power(7, 20000.0) > 0.99);
        assert!(fb.power(3, 707.0) > 0.99);
    }

    #[test]
    fn split_reconstructs() {
        let fb = Filterbank::new(&FrequencyBands::octaves(), 44100.0);
        let mut x = vec![0.0; 4000];
        x[1000] = 1.0;
        x[2500] = -0.5;
        let parts = fb.split(&x);
        for t in 0..x.len() {
            let s: f64 = parts.iter().map(|p| p[t]).sum();
            assert!((s - x[t]).abs() < 1e-9);
        }
    }

    #[test]
    fn weights_sum_to_one() {
        let fb = Filterbank::new(&FrequencyBands::octaves(), 44100.0);
        let w = fb.band_weights(8192);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(w[7] > w[0]);
    }

    #[test]
    fn fast_lengths() {
        assert_eq!(fast_len(7), 8);
        assert_eq!(fast_len(88200), 90000);
        assert_eq!(fast_len(1), 1);
    }
}
