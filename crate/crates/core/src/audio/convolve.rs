use rustfft::num_complex::Complex64;

use super::AudioClip;
use crate::error::{Error, Result};
use crate::spatial::filterbank::{fast_len, FftPair};
use crate::spatial::ImpulseResponse;

/// Below this many multiply-adds the direct sum is used.
const DIRECT_LIMIT: usize = 1 << 16;

/// Full linear convolution, length `x.len() + h.len() - 1`.
pub fn convolve_slices(x: &[f64], h: &[f64]) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return Vec::new();
    }
    if x.len() * h.len() <= DIRECT_LIMIT {
        return direct(x, h);
    }
    let (x, h) = if x.len() >= h.len() { (x, h) } else { (h, x) };
    OverlapAdd::new(h).run(x)
}

fn direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let mut y = vec![0.0; x.len() + h.len() - 1];
    for (i, &a) in x.iter().enumerate() {
        for (j, &b) in h.iter().enumerate() {
            y[i + j] += a * b;
        }
    }
    y
}

/// Overlap-add convolver for a fixed kernel.
pub struct OverlapAdd {
    fft: FftPair,
    kernel: Vec<Complex64>,
    taps: usize,
    block: usize,
}

impl OverlapAdd {
    pub fn new(h: &[f64]) -> Self {
        let n = fast_len(2 * h.len().max(1));
        let fft = FftPair::new(n);
        let kernel = fft.forward_real(h);
        OverlapAdd { fft, kernel, taps: h.len(), block: n - h.len() + 1 }
    }

    pub fn run(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; x.len() + self.taps - 1];
        for (b, chunk) in x.chunks(self.block).enumerate() {
            let mut spec = self.fft.forward_real(chunk);
            for (s, k) in spec.iter_mut().zip(&self.kernel) {
                *s *= k;
            }
            let part = self.fft.inverse_real(spec);
            let start = b * self.block;
            let len = (chunk.len() + self.taps - 1).min(y.len() - start);
            for (o, p) in y[start..start + len].iter_mut().zip(&part) {
                *o += p;
            }
        }
        y
    }
}

/// Convolves a mono source with every channel of `ir`.
pub fn convolve(source: &AudioClip, ir: &ImpulseResponse) -> Result<AudioClip> {
    if source.sampling_rate != ir.sampling_rate {
        return Err(Error::validation(format!(
            "source is {} Hz but the impulse response is {} Hz",
            source.sampling_rate, ir.sampling_rate
        )));
    }
    if source.channel_count() != 1 {
        return Err(Error::validation("convolution needs a mono source"));
    }
    let x = &source.channels[0];
    let channels = ir.channels.iter().map(|h| convolve_slices(x, h)).collect();
    Ok(AudioClip { sampling_rate: source.sampling_rate, channels })
}
