//! Band-limited resampling with a Kaiser-windowed sinc kernel.

use std::f64::consts::PI;

use super::AudioClip;
use crate::error::{Error, Result};

pub const MIN_RATE: u32 = 8000;
pub const MAX_RATE: u32 = 96000;

/// Kernel half-width in samples at the lower of the two rates.
const HALF_WIDTH: f64 = 64.0;
/// Cutoff as a fraction of the lower Nyquist frequency.
const CUTOFF: f64 = 0.955;
const BETA: f64 = 9.0;
/// Largest number of kernel phases that are tabulated.
const MAX_TABLE_PHASES: u64 = 2048;

fn bessel_i0(x: f64) -> f64 {
    let mut sum = 1.0;
    let mut term = 1.0;
    let q = x * x / 4.0;
    for k in 1..64 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    sum
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

struct Kernel {
    /// Cutoff in cycles per input sample, times two.
    fc: f64,
    half: i64,
    width: f64,
    norm: f64,
}

impl Kernel {
    fn weight(&self, x: f64) -> f64 {
        let r = x / self.width;
        if r.abs() >= 1.0 {
            return 0.0;
        }
        let arg = PI * self.fc * x;
        let sinc = if arg.abs() < 1e-12 { 1.0 } else { arg.sin() / arg };
        self.fc * sinc * bessel_i0(BETA * (1.0 - r * r).sqrt()) / self.norm
    }

    fn taps(&self, frac: f64) -> Vec<f64> {
        (-self.half + 1..=self.half).map(|k| self.weight(k as f64 - frac)).collect()
    }
}

/// Resamples every channel to `target_rate`.
pub fn resample(clip: &AudioClip, target_rate: u32) -> Result<AudioClip> {
    for r in [clip.sampling_rate, target_rate] {
        if !(MIN_RATE..=MAX_RATE).contains(&r) {
            return Err(Error::validation(format!("sampling rate {r} Hz is outside {MIN_RATE}..={MAX_RATE}")));
        }
    }
    if clip.sampling_rate == target_rate {
        return Ok(clip.clone());
    }
    let from = clip.sampling_rate as u64;
    let to = target_rate as u64;
    let g = gcd(from, to);
    let (up, down) = (to / g, from / g);
    let scale = (to as f64 / from as f64).min(1.0);
    let width = HALF_WIDTH / scale;
    let kernel = Kernel { fc: CUTOFF * scale, half: width.ceil() as i64, width, norm: bessel_i0(BETA) };
    let table: Option<Vec<Vec<f64>>> =
        (up <= MAX_TABLE_PHASES).then(|| (0..up).map(|p| kernel.taps(p as f64 / up as f64)).collect());

    let n_in = clip.len() as i64;
    let n_out = (clip.len() as u64 * to).div_ceil(from) as usize;
    let channels = clip
        .channels
        .iter()
        .map(|x| {
            (0..n_out as u64)
                .map(|n| {
                    let num = n * down;
                    let i0 = (num / up) as i64;
                    let phase = num % up;
                    let owned;
                    let taps: &[f64] = match &table {
                        Some(t) => &t[phase as usize],
                        None => {
                            owned = kernel.taps(phase as f64 / up as f64);
                            &owned
                        }
                    };
                    let mut acc = 0.0;
                    let mut wsum = 0.0;
                    for (j, w) in taps.iter().enumerate() {
                        let k = i0 - kernel.half + 1 + j as i64;
                        if (0..n_in).contains(&k) {
                            acc += w * x[k as usize];
                            wsum += w;
                        }
                    }
                    if wsum.abs() > 1e-6 {
                        acc / wsum
                    } else {
                        0.0
                    }
                })
                .collect()
        })
        .collect();
    Ok(AudioClip { sampling_rate: target_rate, channels })
}
