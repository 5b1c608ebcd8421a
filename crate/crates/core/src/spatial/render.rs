//! Pressure impulse responses from energy histograms.
//!
//! The late part is band-filtered Gaussian noise shaped by the square root
//! of the per-bin energy. The direct sound and early reflections are exact
//! impulses filtered by `Σ_b √e_b H_b²`, which is flat when all bands carry
//! the same energy.
//!
//! Band energies are spectral levels: a histogram holding energy `e` in every
//! band renders to a signal of total energy `e`.

use std::f64::consts::PI;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::filterbank::{bin_frequency, fast_len, FftPair, Filterbank};
use super::head::{fibonacci_sphere, Ear, HeadModel};
use super::sh;
use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::propagation::{simulate, EnergyHistogram, SimulationParams};
use crate::scene::Scene;

/// Samples of padding that absorb the pre-ringing of zero-phase filters.
const PAD: usize = 4096;
const VIRTUAL_DIRECTIONS: usize = 50;
/// Width of the raised-cosine roll-off below Nyquist applied to impulses,
/// as a fraction of Nyquist. Without it a fractional delay leaves a phase
/// jump at Nyquist and a slowly decaying sinc tail that wraps around.
const NYQUIST_TAPER: f64 = 0.03;

/// Output format of a render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", deny_unknown_fields)]
pub enum MicrophoneConfig {
    Mono,
    Stereo,
    Binaural,
    Quad,
    #[serde(rename = "surround_5_1")]
    Surround51,
    #[serde(rename = "surround_7_1")]
    Surround71,
    Ambisonics { order: u32 },
    /// Omnidirectional capsules at offsets in metres, in the listener frame.
    Custom { capsules: Vec<[f64; 3]> },
}

impl MicrophoneConfig {
    pub fn validate(&self) -> Result<()> {
        if let MicrophoneConfig::Custom { capsules } = self {
            if capsules.is_empty() {
                return Err(Error::config("custom array needs at least one capsule"));
            }
            for c in capsules {
                let v = Vec3::new(c[0], c[1], c[2]);
                if !v.is_finite() || v.norm() > 1.0 {
                    return Err(Error::config(format!("capsule offset {c:?} is more than 1 m from the listener")));
                }
            }
        }
        if let MicrophoneConfig::Ambisonics { order } = self {
            if *order > sh::MAX_ORDER {
                return Err(Error::config(format!("ambisonic order {order} exceeds {}", sh::MAX_ORDER)));
            }
        }
        Ok(())
    }

    pub fn channel_count(&self) -> usize {
        match self {
            MicrophoneConfig::Mono => 1,
            MicrophoneConfig::Stereo | MicrophoneConfig::Binaural => 2,
            MicrophoneConfig::Quad => 4,
            MicrophoneConfig::Surround51 => 6,
            MicrophoneConfig::Surround71 => 8,
            MicrophoneConfig::Ambisonics { order } => sh::sh_count(*order),
            MicrophoneConfig::Custom { capsules } => capsules.len(),
        }
    }

    pub fn layout(&self) -> Layout {
        match self {
            MicrophoneConfig::Mono => Layout::Mono,
            MicrophoneConfig::Binaural => Layout::Binaural,
            MicrophoneConfig::Ambisonics { order } => Layout::Ambisonics { order: *order },
            other => Layout::Array { channels: other.channel_count() },
        }
    }
}

impl std::str::FromStr for MicrophoneConfig {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "mono" => MicrophoneConfig::Mono,
            "stereo" => MicrophoneConfig::Stereo,
            "binaural" => MicrophoneConfig::Binaural,
            "quad" => MicrophoneConfig::Quad,
            "5.1" | "surround_5_1" => MicrophoneConfig::Surround51,
            "7.1" | "surround_7_1" => MicrophoneConfig::Surround71,
            _ => {
                let Some(o) = s.strip_prefix("ambisonics") else {
                    return Err(Error::config(format!("unknown microphone type '{s}'")));
                };
                let o = o.trim_start_matches(['-', '_', ':']);
                let order = if o.is_empty() {
                    1
                } else {
                    o.parse().map_err(|_| Error::config(format!("bad ambisonic order in '{s}'")))?
                };
                MicrophoneConfig::Ambisonics { order }
            }
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type")]
pub enum Layout {
    Mono,
    Binaural,
    Ambisonics { order: u32 },
    Array { channels: usize },
}

/// Pressure impulse response, one row per channel.
#[derive(Debug, Clone, PartialEq)]
pub struct ImpulseResponse {
    pub sampling_rate: u32,
    pub layout: Layout,
    pub labels: Vec<String>,
    pub channels: Vec<Vec<f64>>,
}

impl ImpulseResponse {
    pub fn mono(sampling_rate: u32, samples: Vec<f64>) -> Self {
        ImpulseResponse { sampling_rate, layout: Layout::Mono, labels: vec!["M".into()], channels: vec![samples] }
    }

    pub fn len(&self) -> usize {
        self.channels.first().map_or(0, |c| c.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }
}

struct Arrival<'a> {
    delay: f64,
    energy: &'a [f64],
    dir: Vec3,
    direct: bool,
}

/// Gain model of one output channel.
enum Pickup {
    /// Amplitude gain as a function of listener-frame direction.
    Pattern(Box<dyn Fn(Vec3) -> f64 + Send + Sync>),
    Ear(Ear, HeadModel),
    Silent,
}

impl Pickup {
    fn gain(&self, dir: Vec3, f: f64) -> f64 {
        match self {
            Pickup::Pattern(g) => g(dir),
            Pickup::Ear(e, h) => h.shadow_gain(dir, *e, f),
            Pickup::Silent => 0.0,
        }
    }

    fn delay(&self, dir: Vec3) -> f64 {
        match self {
            Pickup::Ear(e, h) => h.ear_delay(dir, *e),
            _ => 0.0,
        }
    }

    fn frequency_dependent(&self) -> bool {
        matches!(self, Pickup::Ear(..))
    }
}

fn nyquist_tapered(power: &[Vec<f64>], fs: f64) -> Vec<Vec<f64>> {
    let nyquist = fs / 2.0;
    let start = nyquist * (1.0 - NYQUIST_TAPER);
    power
        .iter()
        .map(|row| {
            let n = row.len();
            let tapered: Vec<f64> = row
                .iter()
                .enumerate()
                .map(|(k, &p)| {
                    let f = bin_frequency(k, n, fs).abs();
                    let g = if f <= start { 1.0 } else { (PI / 2.0 * (f - start) / (nyquist - start)).cos().powi(2) };
                    p * g
                })
                .collect();
            let before: f64 = row.iter().map(|p| p * p).sum();
            let after: f64 = tapered.iter().map(|p| p * p).sum();
            let c = if after > 0.0 { (before / after).sqrt() } else { 0.0 };
            tapered.into_iter().map(|p| p * c).collect()
        })
        .collect()
}

pub struct Renderer<'a> {
    hist: &'a EnergyHistogram,
    fb: Filterbank,
    n_out: usize,
    fft: FftPair,
    power: Vec<Vec<f64>>,
    /// `power` rolled off towards Nyquist and rescaled to the same band energy.
    impulse_power: Vec<Vec<f64>>,
    weights: Vec<f64>,
    seed: u64,
    head: HeadModel,
}

impl<'a> Renderer<'a> {
    pub fn new(hist: &'a EnergyHistogram, seed: u64) -> Self {
        let fs = hist.sampling_rate as f64;
        let fb = Filterbank::new(&hist.bands, fs);
        let n_out = hist.bin_count() * hist.bin_samples as usize;
        let fft = FftPair::new(fast_len(n_out + PAD));
        let power = fb.power_table(fft.len);
        let weights = power.iter().map(|row| row.iter().sum::<f64>() / fft.len as f64).collect();
        let impulse_power = nyquist_tapered(&power, fs);
        Renderer { hist, fb, n_out, fft, power, impulse_power, weights, seed, head: HeadModel::default() }
    }

    pub fn with_head(mut self, head: HeadModel) -> Self {
        self.head = head;
        self
    }

    pub fn len(&self) -> usize {
        self.n_out
    }

    pub fn is_empty(&self) -> bool {
        self.n_out == 0
    }

    /// Share of white-noise power in each band.
    pub fn band_weights(&self) -> &[f64] {
        &self.weights
    }

    fn arrivals(&self) -> Vec<Arrival<'a>> {
        let mut out = Vec::new();
        if let Some(d) = &self.hist.direct {
            if d.energy.iter().any(|&e| e > 0.0) {
                out.push(Arrival { delay: d.delay, energy: &d.energy, dir: d.direction, direct: true });
            }
        }
        for er in &self.hist.early_reflections {
            out.push(Arrival { delay: er.delay, energy: &er.energy, dir: er.direction, direct: false });
        }
        out
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }

    /// Adds the impulses to a spectrum, each scaled by `gain(arrival, f)` and delayed by `extra(arrival)`.
    fn add_impulses(
        &self,
        spec: &mut [Complex64],
        arrivals: &[Arrival],
        gain: impl Fn(&Arrival, f64) -> f64,
        extra: impl Fn(&Arrival) -> f64,
    ) {
        let n = self.fft.len;
        let fs = self.fb.sampling_rate;
        let amps: Vec<Vec<f64>> = arrivals
            .iter()
            .map(|a| {
                let roots: Vec<f64> = a.energy.iter().map(|e| e.max(0.0).sqrt()).collect();
                let t0 = (a.delay + extra(a)) * fs;
                // Whole-sample delays have no phase jump at Nyquist and stay exact impulses.
                let table = if (t0 - t0.round()).abs() < 1e-9 { &self.power } else { &self.impulse_power };
                (0..n).map(|k| table.iter().zip(&roots).map(|(p, r)| r * p[k]).sum()).collect()
            })
            .collect();
        for (a, amp) in arrivals.iter().zip(&amps) {
            let t0 = (a.delay + extra(a)) * fs;
            let step = -2.0 * PI * t0 / n as f64;
            for (k, s) in spec.iter_mut().enumerate() {
                let fk = bin_frequency(k, n, fs);
                let signed = if k <= n / 2 { k as f64 } else { k as f64 - n as f64 };
                let g = gain(a, fk);
                if g == 0.0 {
                    continue;
                }
                *s += Complex64::from_polar(amp[k] * g, step * signed);
            }
        }
    }

    /// Unit-variance noise limited to band `b`.
    fn band_noise(&self, stream: u64, b: usize) -> Vec<f64> {
        let mut rng = self.rng(stream);
        let noise: Vec<f64> = (0..self.fft.len).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut spec = self.fft.forward_real(&noise);
        let w = self.weights[b];
        for (c, p) in spec.iter_mut().zip(&self.power[b]) {
            *c *= (p / w).sqrt();
        }
        let mut y = self.fft.inverse_real(spec);
        y.truncate(self.n_out);
        y
    }

    /// Late reverberation whose band energies per bin are `env(bin, band)`.
    fn late(&self, stream: u64, env: impl Fn(usize, usize) -> f64) -> Vec<f64> {
        let bs = self.hist.bin_samples as usize;
        let mut out = vec![0.0; self.n_out];
        for b in 0..self.hist.band_count() {
            let active = self.weights[b] > 0.0 && (0..self.hist.bin_count()).any(|i| env(i, b) > 0.0);
            if !active {
                continue;
            }
            let noise = self.band_noise(stream * 64 + b as u64, b);
            let shaped: Vec<f64> =
                noise.iter().enumerate().map(|(t, n)| n * (env(t / bs, b) / bs as f64).sqrt()).collect();
            // Calibrate the realization so the band carries exactly its share of the histogram's energy.
            let target: f64 = self.weights[b] * (0..self.hist.bin_count()).map(|i| env(i, b)).sum::<f64>();
            let got: f64 = shaped.iter().map(|v| v * v).sum();
            let g = if got > 0.0 { (target / got).sqrt() } else { 0.0 };
            for (o, v) in out.iter_mut().zip(&shaped) {
                *o += g * v;
            }
        }
        out
    }

    fn finish(&self, spec: Vec<Complex64>, late: &[f64]) -> Vec<f64> {
        let mut y = self.fft.inverse_real(spec);
        y.truncate(self.n_out);
        for (a, b) in y.iter_mut().zip(late) {
            *a += b;
        }
        y
    }

    fn zero_spectrum(&self) -> Vec<Complex64> {
        vec![Complex64::new(0.0, 0.0); self.fft.len]
    }

    /// Omnidirectional pressure response.
    pub fn pressure(&self) -> Vec<f64> {
        let mut spec = self.zero_spectrum();
        self.add_impulses(&mut spec, &self.arrivals(), |_, _| 1.0, |_| 0.0);
        let late = self.late(0, |i, b| self.hist.bin_energy(i)[b]);
        self.finish(spec, &late)
    }

    /// For each bin, the index of the nearest bin with directional data.
    fn filled_bins(&self) -> Vec<Option<usize>> {
        let n = self.hist.bin_count();
        let has = |i: usize| self.hist.bin_sh(i)[0] > 0.0;
        let mut out = vec![None; n];
        let mut last = None;
        for (i, o) in out.iter_mut().enumerate() {
            if has(i) {
                last = Some(i);
            }
            *o = last;
        }
        let mut next = None;
        for i in (0..n).rev() {
            if has(i) {
                next = Some(i);
            }
            out[i] = match (out[i], next) {
                (Some(p), Some(q)) => Some(if i - p <= q - i { p } else { q }),
                (a, b) => a.or(b),
            };
        }
        out
    }

    /// Energy share of each virtual direction, as a table of distinct rows
    /// and the row used by every bin. Row 0 is uniform.
    fn direction_weights(&self, dirs: &[Vec3]) -> (Vec<usize>, Vec<Vec<f64>>) {
        let order = self.hist.sh_order;
        let ys: Vec<Vec<f64>> = dirs.iter().map(|&d| sh::eval(order, d)).collect();
        let uniform = vec![1.0 / dirs.len() as f64; dirs.len()];
        let mut rows = vec![uniform.clone()];
        let mut row_of_bin = vec![usize::MAX; self.hist.bin_count()];
        let fill = self.filled_bins();
        let mut index = Vec::with_capacity(fill.len());
        for src in fill {
            let Some(j) = src else {
                index.push(0);
                continue;
            };
            if row_of_bin[j] == usize::MAX {
                let c = self.hist.bin_sh(j);
                let mut w: Vec<f64> = ys
                    .iter()
                    .map(|y| {
                        let mut f = 0.0;
                        for l in 0..=order {
                            let mut s = 0.0;
                            for m in -(l as i32)..=(l as i32) {
                                let i = sh::acn(l, m);
                                s += c[i] * y[i];
                            }
                            f += (2 * l + 1) as f64 * s;
                        }
                        f.max(0.0)
                    })
                    .collect();
                let total: f64 = w.iter().sum();
                if total > 0.0 {
                    w.iter_mut().for_each(|x| *x /= total);
                } else {
                    w = uniform.clone();
                }
                row_of_bin[j] = rows.len();
                rows.push(w);
            }
            index.push(row_of_bin[j]);
        }
        (index, rows)
    }

    fn render_pickups(&self, pickups: &[Pickup]) -> Vec<Vec<f64>> {
        let arrivals = self.arrivals();
        let dirs = fibonacci_sphere(VIRTUAL_DIRECTIONS);
        let (index, rows) = self.direction_weights(&dirs);
        let centers = self.hist.bands.centers().to_vec();
        let nb = centers.len();
        pickups
            .iter()
            .enumerate()
            .map(|(ch, p)| {
                if matches!(p, Pickup::Silent) {
                    return vec![0.0; self.n_out];
                }
                let mut spec = self.zero_spectrum();
                self.add_impulses(&mut spec, &arrivals, |a, f| p.gain(a.dir, f), |a| p.delay(a.dir));
                // Band energy gain of the diffuse field, averaged over the virtual directions.
                let per_dir: Vec<Vec<f64>> = dirs
                    .iter()
                    .map(|&d| {
                        if p.frequency_dependent() {
                            centers.iter().map(|&f| p.gain(d, f).powi(2)).collect()
                        } else {
                            vec![p.gain(d, 0.0).powi(2); nb]
                        }
                    })
                    .collect();
                let gains: Vec<Vec<f64>> = rows
                    .iter()
                    .map(|w| (0..nb).map(|b| w.iter().zip(&per_dir).map(|(a, g)| a * g[b]).sum()).collect())
                    .collect();
                let late = self.late(1 + ch as u64, |i, b| self.hist.bin_energy(i)[b] * gains[index[i]][b]);
                self.finish(spec, &late)
            })
            .collect()
    }

    /// Ambisonic channels in ACN order with SN3D normalization. Channel 0 equals [`Self::pressure`].
    pub fn ambisonic(&self, order: u32) -> Result<Vec<Vec<f64>>> {
        if order > self.hist.sh_order {
            return Err(Error::validation(format!(
                "ambisonic order {order} exceeds the histogram order {}",
                self.hist.sh_order
            )));
        }
        let n_ch = sh::sh_count(order);
        let arrivals = self.arrivals();
        let mono_late = self.late(0, |i, b| self.hist.bin_energy(i)[b]);
        let fill = self.filled_bins();
        let bs = self.hist.bin_samples as usize;
        let direct_order = self.hist.direct_sh_order;
        let mut out = Vec::with_capacity(n_ch);
        for c in 0..n_ch {
            let l = (c as f64).sqrt().floor() as u32;
            let mut spec = self.zero_spectrum();
            if c == 0 {
                self.add_impulses(&mut spec, &arrivals, |_, _| 1.0, |_| 0.0);
                out.push(self.finish(spec, &mono_late));
                continue;
            }
            self.add_impulses(
                &mut spec,
                &arrivals,
                |a, _| if a.direct && l > direct_order { 0.0 } else { sh::eval(order, a.dir)[c] },
                |_| 0.0,
            );
            let late: Vec<f64> = mono_late
                .iter()
                .enumerate()
                .map(|(t, &v)| match fill[t / bs] {
                    Some(j) => {
                        let s = self.hist.bin_sh(j);
                        v * s[c] / s[0]
                    }
                    None => 0.0,
                })
                .collect();
            out.push(self.finish(spec, &late));
        }
        Ok(out)
    }

    pub fn binaural(&self) -> Vec<Vec<f64>> {
        self.render_pickups(&[Pickup::Ear(Ear::Left, self.head), Pickup::Ear(Ear::Right, self.head)])
    }

    /// Renders every format except custom arrays, which need one simulation per capsule.
    pub fn render(&self, config: &MicrophoneConfig) -> Result<ImpulseResponse> {
        config.validate()?;
        let sr = self.hist.sampling_rate;
        let layout = config.layout();
        let make = |labels: Vec<String>, channels| ImpulseResponse { sampling_rate: sr, layout, labels, channels };
        let names = |l: &[&str]| l.iter().map(|s| s.to_string()).collect::<Vec<_>>();
        Ok(match config {
            MicrophoneConfig::Mono => make(names(&["M"]), vec![self.pressure()]),
            MicrophoneConfig::Binaural => make(names(&["L", "R"]), self.binaural()),
            MicrophoneConfig::Ambisonics { order } => {
                let ch = self.ambisonic(*order)?;
                make((0..ch.len()).map(|i| format!("ACN{i}")).collect(), ch)
            }
            MicrophoneConfig::Custom { .. } => {
                return Err(Error::config("custom arrays are rendered with render_array"));
            }
            speakers => {
                let (labels, azimuths) = speaker_layout(speakers);
                let placed: Vec<f64> = azimuths.iter().flatten().copied().collect();
                let mut idx = 0;
                let pickups: Vec<Pickup> = azimuths
                    .iter()
                    .map(|az| match az {
                        None => Pickup::Silent,
                        Some(_) => {
                            let (i, sp) = (idx, placed.clone());
                            idx += 1;
                            Pickup::Pattern(Box::new(move |d: Vec3| pan_gains(&sp, d.y.atan2(d.x))[i]))
                        }
                    })
                    .collect();
                make(names(&labels), self.render_pickups(&pickups))
            }
        })
    }
}

/// Unit vector for azimuth (anticlockwise from forward) and elevation in degrees.
pub fn direction_from_degrees(az: f64, el: f64) -> Vec3 {
    let (a, e) = (az.to_radians(), el.to_radians());
    Vec3::new(e.cos() * a.cos(), e.cos() * a.sin(), e.sin())
}

/// Channel labels and azimuths in degrees (anticlockwise, 0 = front). `None` marks the LFE channel.
fn speaker_layout(config: &MicrophoneConfig) -> (Vec<&'static str>, Vec<Option<f64>>) {
    match config {
        MicrophoneConfig::Stereo => (vec!["L", "R"], vec![Some(30.0), Some(-30.0)]),
        MicrophoneConfig::Quad => {
            (vec!["FL", "FR", "BL", "BR"], vec![Some(45.0), Some(-45.0), Some(135.0), Some(-135.0)])
        }
        MicrophoneConfig::Surround51 => (
            vec!["L", "R", "C", "LFE", "Ls", "Rs"],
            vec![Some(30.0), Some(-30.0), Some(0.0), None, Some(110.0), Some(-110.0)],
        ),
        MicrophoneConfig::Surround71 => (
            vec!["L", "R", "C", "LFE", "Lss", "Rss", "Lrs", "Rrs"],
            vec![Some(30.0), Some(-30.0), Some(0.0), None, Some(90.0), Some(-90.0), Some(150.0), Some(-150.0)],
        ),
        _ => unreachable!("not a loudspeaker layout"),
    }
}

/// Energy-preserving pairwise panning of azimuth `az` (radians) over speakers at `speakers_deg`.
pub fn pan_gains(speakers_deg: &[f64], az: f64) -> Vec<f64> {
    let n = speakers_deg.len();
    let mut g = vec![0.0; n];
    if n == 1 {
        g[0] = 1.0;
        return g;
    }
    let wrap = |x: f64| x.rem_euclid(360.0);
    let a = wrap(az.to_degrees());
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| wrap(speakers_deg[i]).total_cmp(&wrap(speakers_deg[j])));
    for w in 0..n {
        let i = order[w];
        let j = order[(w + 1) % n];
        let lo = wrap(speakers_deg[i]);
        let span = wrap(speakers_deg[j] - speakers_deg[i]);
        let span = if span == 0.0 { 360.0 } else { span };
        let off = wrap(a - lo);
        if off <= span {
            let t = off / span;
            g[i] = (t * PI / 2.0).cos();
            g[j] = (t * PI / 2.0).sin();
            return g;
        }
    }
    g
}

/// Omnidirectional pressure impulse response.
pub fn synthesize_pressure(hist: &EnergyHistogram, seed: u64) -> ImpulseResponse {
    ImpulseResponse::mono(hist.sampling_rate, Renderer::new(hist, seed).pressure())
}

pub fn to_ambisonic(hist: &EnergyHistogram, order: u32, seed: u64) -> Result<ImpulseResponse> {
    Renderer::new(hist, seed).render(&MicrophoneConfig::Ambisonics { order })
}

pub fn to_binaural(hist: &EnergyHistogram, head: HeadModel, seed: u64) -> Result<ImpulseResponse> {
    head.validate()?;
    Renderer::new(hist, seed).with_head(head).render(&MicrophoneConfig::Binaural)
}

/// Seed for capsule `i`; capsule 0 keeps the base seed.
pub fn capsule_seed(seed: u64, i: usize) -> u64 {
    seed ^ (i as u64).wrapping_mul(0x9e37_79b9_7f4a_7c15)
}

/// One mono simulation per capsule, placed at the listener pose plus its offset.
pub fn render_array(
    scene: &Scene,
    source: Vec3,
    listener: &Pose,
    capsules: &[[f64; 3]],
    params: &SimulationParams,
    seed: u64,
) -> Result<ImpulseResponse> {
    let config = MicrophoneConfig::Custom { capsules: capsules.to_vec() };
    config.validate()?;
    let bounds = scene.bounds();
    let mut channels = Vec::with_capacity(capsules.len());
    for (i, c) in capsules.iter().enumerate() {
        let pos = listener.position + listener.to_world(Vec3::new(c[0], c[1], c[2]));
        if !bounds.contains(pos) {
            log::warn!("capsule {i} at {pos:?} lies outside the scene bounds");
        }
        let mut p = params.clone();
        p.rng_seed = capsule_seed(params.rng_seed, i);
        let hist = simulate(scene, source, &Pose::new(pos, listener.heading), &p, None)?;
        channels.push(Renderer::new(&hist, capsule_seed(seed, i)).pressure());
    }
    Ok(ImpulseResponse {
        sampling_rate: params.sampling_rate,
        layout: config.layout(),
        labels: (0..channels.len()).map(|i| format!("CAP{i}")).collect(),
        channels,
    })
}

/// Simulates and renders one impulse response in any format.
pub fn render_ir(
    scene: &Scene,
    source: Vec3,
    listener: &Pose,
    config: &MicrophoneConfig,
    params: &SimulationParams,
    seed: u64,
) -> Result<(ImpulseResponse, Option<EnergyHistogram>)> {
    if let MicrophoneConfig::Custom { capsules } = config {
        return Ok((render_array(scene, source, listener, capsules, params, seed)?, None));
    }
    config.validate()?;
    let hist = simulate(scene, source, listener, params, None)?;
    let ir = Renderer::new(&hist, seed).render(config)?;
    Ok((ir, Some(hist)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::sample_uniform_sphere;
    use crate::materials::FrequencyBands;
    use crate::propagation::{DirectSound, OcclusionState};

    fn with_direct(dir: Vec3, delay: f64, e: f64) -> EnergyHistogram {
        let mut h = EnergyHistogram::new(44100, 1, FrequencyBands::octaves(), 1, 0.25);
        h.direct = Some(DirectSound {
            delay,
            energy: vec![e; 8],
            direction: dir,
            state: OcclusionState::Visible,
            path_length: delay * 343.0,
        });
        h
    }

    fn energy(x: &[f64]) -> f64 {
        x.iter().map(|v| v * v).sum()
    }

    fn mono(h: &EnergyHistogram, seed: u64) -> Vec<f64> {
        synthesize_pressure(h, seed).channels.remove(0)
    }

    fn peak(x: &[f64]) -> usize {
        x.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).map(|(i, _)| i).unwrap()
    }

    #[test]
    fn silent_histogram_is_silent() {
        let h = EnergyHistogram::new(44100, 1, FrequencyBands::octaves(), 1, 0.1);
        assert!(mono(&h, 0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn flat_direct_is_an_exact_impulse() {
        let h = with_direct(Vec3::X, 441.0 / 44100.0, 0.04);
        let p = mono(&h, 1);
        assert!((p[441] - 0.2).abs() < 1e-9);
        assert!((energy(&p) - 0.04).abs() < 1e-9);
    }

    #[test]
    fn fractional_delay_keeps_energy() {
        let h = with_direct(Vec3::X, 100.5 / 44100.0, 1.0);
        let p = mono(&h, 1);
        assert!((p[100] - p[101]).abs() < 1e-9);
        assert!((energy(&p) - 1.0).abs() < 0.01);
    }

    #[test]
    fn coloured_direct_keeps_energy() {
        let mut h = with_direct(Vec3::X, 0.01, 1.0);
        h.direct.as_mut().unwrap().energy = vec![1.0, 0.8, 0.6, 0.5, 0.4, 0.3, 0.2, 0.1];
        let p = mono(&h, 1);
        // Each band contributes √e_b H_b²; the cross terms between neighbours
        // make the total slightly different from Σ e_b.
        let total: f64 = h.direct.as_ref().unwrap().energy.iter().sum();
        let w = Renderer::new(&h, 0).band_weights().to_vec();
        let expected: f64 = {
            let fb = Filterbank::new(&h.bands, 44100.0);
            let n = 1 << 16;
            let roots: Vec<f64> = h.direct.as_ref().unwrap().energy.iter().map(|e| e.sqrt()).collect();
            (0..n)
                .map(|k| {
                    let f = bin_frequency(k, n, 44100.0);
                    let a: f64 = (0..8).map(|b| roots[b] * fb.power(b, f)).sum();
                    a * a
                })
                .sum::<f64>()
                / n as f64
        };
        assert!((energy(&p) - expected).abs() < 1e-3 * expected);
        assert!(w.iter().all(|&x| x > 0.0));
        assert!(energy(&p) < total);
    }

    #[test]
    fn late_noise_matches_histogram_energy() {
        let mut h = EnergyHistogram::new(44100, 1, FrequencyBands::octaves(), 1, 0.5);
        let target = 1e-3;
        let bins = h.bin_count();
        for i in 2000..bins - 2000 {
            let e = target / (bins - 4000) as f64;
            h.accumulate_bin(i, &[e; 8], &[8.0 * e, 0.0, 0.0, 0.0]);
        }
        let p = mono(&h, 7);
        let got = energy(&p);
        assert!((got / target - 1.0).abs() < 0.02, "{got}");
        assert!(energy(&p[..1500]) < 1e-3 * got);
    }

    #[test]
    fn same_seed_same_output() {
        let mut h = EnergyHistogram::new(44100, 1, FrequencyBands::octaves(), 1, 0.1);
        h.accumulate_bin(500, &[1e-3; 8], &[8e-3, 0.0, 0.0, 0.0]);
        assert_eq!(mono(&h, 3), mono(&h, 3));
        assert_ne!(mono(&h, 3), mono(&h, 4));
    }

    #[test]
    fn first_order_ambisonics_encode_direction() {
        let h = with_direct(Vec3::X, 50.0 / 44100.0, 1.0);
        let a = to_ambisonic(&h, 1, 0).unwrap();
        assert_eq!(a.channel_count(), 4);
        assert_eq!(a.layout, Layout::Ambisonics { order: 1 });
        let m = mono(&h, 0);
        for t in 0..m.len() {
            assert!((a.channels[3][t] - m[t]).abs() < 1e-12);
            assert!(a.channels[1][t].abs() < 1e-12 && a.channels[2][t].abs() < 1e-12);
        }
        assert!(to_ambisonic(&h, 2, 0).is_err());
    }

    #[test]
    fn omni_channel_is_the_mono_response() {
        let mut h = with_direct(Vec3::new(0.3, 0.5, 0.1).normalized(), 0.004, 0.5);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for i in 300..3000 {
            h.accumulate(i as f64 / 44100.0, &[1e-5; 8], sample_uniform_sphere(&mut rng));
        }
        let a = to_ambisonic(&h, 1, 9).unwrap();
        let z = to_ambisonic(&h, 0, 9).unwrap();
        assert_eq!(a.channels[0], mono(&h, 9));
        assert_eq!(z.channels, vec![mono(&h, 9)]);
    }

    #[test]
    fn isotropic_field_has_small_dipoles() {
        let mut h = EnergyHistogram::new(44100, 32, FrequencyBands::octaves(), 1, 0.2);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(2);
        for i in 0..h.bin_count() * 400 {
            let t = (i / 400) as f64 * h.bin_duration();
            h.accumulate(t, &[1e-6; 8], sample_uniform_sphere(&mut rng));
        }
        let a = to_ambisonic(&h, 1, 0).unwrap();
        let w = energy(&a.channels[0]);
        for c in 1..4 {
            assert!(energy(&a.channels[c]) / w < 0.05);
        }
    }

    #[test]
    fn binaural_lateral_source() {
        let h = with_direct(Vec3::Y, 100.0 / 44100.0, 1.0);
        let b = to_binaural(&h, HeadModel::default(), 0).unwrap();
        let (l, r) = (&b.channels[0], &b.channels[1]);
        assert!(energy(l) > 2.0 * energy(r));
        let itd = peak(r) as i64 - peak(l) as i64;
        assert!((27..=31).contains(&itd), "{itd}");
    }

    #[test]
    fn binaural_front_is_symmetric() {
        let mut h = with_direct(Vec3::X, 100.0 / 44100.0, 1.0);
        for i in 200..4000 {
            h.accumulate(i as f64 / 44100.0, &[1e-6; 8], Vec3::X);
        }
        let b = to_binaural(&h, HeadModel::default(), 0).unwrap();
        let (l, r) = (&b.channels[0], &b.channels[1]);
        assert_eq!(peak(l), peak(r));
        let (el, er) = (energy(&l[..150]), energy(&r[..150]));
        assert!((10.0 * (el / er).log10()).abs() < 0.5);
    }

    #[test]
    fn stereo_panning() {
        let h = with_direct(direction_from_degrees(30.0, 0.0), 10.0 / 44100.0, 1.0);
        let s = Renderer::new(&h, 0).render(&MicrophoneConfig::Stereo).unwrap();
        assert!((energy(&s.channels[0]) - 1.0).abs() < 1e-6);
        assert!(energy(&s.channels[1]) < 1e-12);
        let g = pan_gains(&[30.0, -30.0], 0.0);
        assert!((g[0] - g[1]).abs() < 1e-12);
        assert!((g[0] * g[0] + g[1] * g[1] - 1.0).abs() < 1e-12);
        let behind = pan_gains(&[30.0, -30.0], PI);
        assert!((behind[0] - behind[1]).abs() < 1e-12);
    }

    #[test]
    fn surround_lfe_is_silent() {
        let h = with_direct(Vec3::X, 10.0 / 44100.0, 1.0);
        let s = Renderer::new(&h, 0).render(&MicrophoneConfig::Surround51).unwrap();
        assert_eq!(s.labels[3], "LFE");
        assert!(s.channels[3].iter().all(|&v| v == 0.0));
        assert!((energy(&s.channels[2]) - 1.0).abs() < 1e-6);
    }

    #[test]
    fn parse_configs() {
        assert_eq!("5.1".parse::<MicrophoneConfig>().unwrap(), MicrophoneConfig::Surround51);
        assert_eq!("ambisonics2".parse::<MicrophoneConfig>().unwrap(), MicrophoneConfig::Ambisonics { order: 2 });
        assert_eq!("ambisonics".parse::<MicrophoneConfig>().unwrap(), MicrophoneConfig::Ambisonics { order: 1 });
        assert!("hexaphonic".parse::<MicrophoneConfig>().is_err());
        let c: MicrophoneConfig = serde_json::from_str(r#"{"type":"custom","capsules":[[0,0,0],[0.1,0,0]]}"#).unwrap();
        assert_eq!(c.channel_count(), 2);
        assert!(MicrophoneConfig::Custom { capsules: vec![] }.validate().is_err());
        assert!(MicrophoneConfig::Custom { capsules: vec![[2.0, 0.0, 0.0]] }.validate().is_err());
    }
}
