use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::convolve::convolve_slices;
use super::AudioClip;
use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::propagation::{simulate, OcclusionState, PathCache, SimulationParams};
use crate::scene::Scene;
use crate::spatial::{render_array, ImpulseResponse, MicrophoneConfig, Renderer};

pub const DEFAULT_STEP: f64 = 0.15;
pub const DEFAULT_CROSSFADE: f64 = 0.05;

/// Listener poses at uniform time steps.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub poses: Vec<Pose>,
    /// Δt in seconds.
    pub step: f64,
    /// Crossfade window T in seconds.
    pub crossfade: f64,
}

impl Trajectory {
    pub fn new(start: f64, step: f64, crossfade: f64, poses: Vec<Pose>) -> Result<Self> {
        let times = (0..poses.len()).map(|i| start + i as f64 * step).collect();
        let t = Trajectory { times, poses, step, crossfade };
        t.validate()?;
        Ok(t)
    }

    /// Repeats one pose `steps` times.
    pub fn stationary(pose: Pose, steps: usize, step: f64, crossfade: f64) -> Result<Self> {
        Self::new(0.0, step, crossfade, vec![pose; steps])
    }

    pub fn len(&self) -> usize {
        self.poses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.poses.is_empty()
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 * self.step
    }

    pub fn validate(&self) -> Result<()> {
        if self.poses.is_empty() || self.times.len() != self.poses.len() {
            return Err(Error::validation("trajectory has no steps"));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::validation("trajectory step must be positive"));
        }
        if !(self.crossfade >= 0.0 && self.crossfade < self.step) {
            return Err(Error::validation(format!(
                "crossfade {} s must be shorter than the step {} s",
                self.crossfade, self.step
            )));
        }
        let tol = 1e-6 * self.step.max(1.0);
        for w in self.times.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::validation("trajectory times must increase strictly"));
            }
            if ((w[1] - w[0]) - self.step).abs() > tol {
                return Err(Error::validation(format!("non-uniform step between {} s and {} s", w[0], w[1])));
            }
        }
        if self.poses.iter().any(|p| !p.position.is_finite() || !p.heading.is_finite()) {
            return Err(Error::validation("trajectory contains non-finite poses"));
        }
        Ok(())
    }

    /// Parses "time x y z heading_deg" records; `#` starts a comment.
    pub fn parse(text: &str, source_name: &str, crossfade: f64) -> Result<Self> {
        let mut times = Vec::new();
        let mut poses = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let err = |message: String| Error::Format { source_name: source_name.to_string(), line: i + 1, message };
            let vals: Vec<f64> = line
                .split(|c: char| c.is_whitespace() || c == ',')
                .filter(|s| !s.is_empty())
                .map(|s| s.parse::<f64>().map_err(|_| err(format!("'{s}' is not a number"))))
                .collect::<Result<_>>()?;
            if vals.len() != 5 {
                return Err(err(format!("expected 5 fields, found {}", vals.len())));
            }
            times.push(vals[0]);
            poses.push(Pose::new(Vec3::new(vals[1], vals[2], vals[3]), vals[4].to_radians()));
        }
        let step = if times.len() > 1 { (times[times.len() - 1] - times[0]) / (times.len() - 1) as f64 } else { DEFAULT_STEP };
        let t = Trajectory { times, poses, step, crossfade: crossfade.min(step * 0.5) };
        t.validate()?;
        Ok(t)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# time x y z heading_deg\n");
        for (t, p) in self.times.iter().zip(&self.poses) {
            let _ = writeln!(
                s,
                "{t} {} {} {} {}",
                p.position.x,
                p.position.y,
                p.position.z,
                p.heading.to_degrees()
            );
        }
        s
    }
}

/// Weight of the new step at sample `j` of an `m`-sample crossfade.
pub fn crossfade_weight(j: usize, m: usize) -> f64 {
    if m == 0 {
        1.0
    } else {
        (j as f64 / m as f64).clamp(0.0, 1.0)
    }
}

fn source_sample(x: &[f64], k: i64) -> f64 {
    if k >= 0 && (k as usize) < x.len() {
        x[k as usize]
    } else {
        0.0
    }
}

/// Stitches per-step renders of `source` through `irs`, one IR per trajectory step.
///
/// Step `i` covers `[tᵢ, tᵢ + Δt)` and is the valid part of the convolution of
/// the source segment `[tᵢ − L, tᵢ + Δt)` with its IR. Its first `T` seconds are
/// crossfaded with the previous IR's continuation.
pub fn render_with_irs(source: &AudioClip, irs: &[ImpulseResponse], traj: &Trajectory) -> Result<AudioClip> {
    traj.validate()?;
    if irs.len() != traj.len() {
        return Err(Error::invalid(format!("{} impulse responses for {} steps", irs.len(), traj.len())));
    }
    if source.channel_count() != 1 {
        return Err(Error::validation("trajectory rendering needs a mono source"));
    }
    let fs = source.sampling_rate;
    let n_ch = irs[0].channel_count();
    for ir in irs {
        if ir.sampling_rate != fs {
            return Err(Error::validation(format!("impulse response is {} Hz, source is {fs} Hz", ir.sampling_rate)));
        }
        if ir.channel_count() != n_ch {
            return Err(Error::invalid("impulse responses differ in channel count"));
        }
    }
    let f = fs as f64;
    let n = (traj.step * f).round() as usize;
    let m = (traj.crossfade * f).round() as usize;
    let s0 = (traj.times[0] * f).round() as i64;
    let x = &source.channels[0];
    let max_ir = irs.iter().map(ImpulseResponse::len).max().unwrap_or(0) as i64;
    if s0 - max_ir + 1 < 0 {
        log::warn!("impulse response is longer than the source history; padding with silence");
    }
    let end = s0 + (traj.len() * n) as i64;
    if end > x.len() as i64 {
        log::warn!("source ends {:.3} s before the trajectory", (end - x.len() as i64) as f64 / f);
    }

    let mut out = vec![vec![0.0; traj.len() * n]; n_ch];
    let mut tails: Vec<Vec<f64>> = vec![Vec::new(); n_ch];
    for (i, ir) in irs.iter().enumerate() {
        let start = s0 + (i * n) as i64;
        let extra = if i + 1 < irs.len() { m } else { 0 };
        for (c, h) in ir.channels.iter().enumerate() {
            let l = h.len().max(1) as i64;
            let seg: Vec<f64> = (start - l + 1..start + (n + extra) as i64).map(|k| source_sample(x, k)).collect();
            let y = if h.is_empty() { vec![0.0; seg.len()] } else { convolve_slices(&seg, h) };
            let valid = &y[(l - 1) as usize..(l - 1) as usize + n + extra];
            let dst = &mut out[c][i * n..(i + 1) * n];
            for j in 0..n {
                dst[j] = if i > 0 && j < m {
                    let w = crossfade_weight(j, m);
                    w * valid[j] + (1.0 - w) * tails[c][j]
                } else {
                    valid[j]
                };
            }
            tails[c] = valid[n..].to_vec();
        }
    }
    Ok(AudioClip { sampling_rate: fs, channels: out })
}

/// Per-step summary of a trajectory render.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub time: f64,
    pub position: [f64; 3],
    pub heading_deg: f64,
    pub source_distance: f64,
    pub direct_delay: Option<f64>,
    pub occlusion: Option<OcclusionState>,
    /// RMS of the output over the step, averaged across channels.
    pub rms: f64,
}

#[derive(Debug, Clone)]
pub struct TrajectoryRender {
    pub audio: AudioClip,
    pub steps: Vec<StepInfo>,
    pub irs: Vec<ImpulseResponse>,
}

/// Simulates an impulse response at every step and renders the source along the trajectory.
pub fn render_trajectory(
    source: &AudioClip,
    scene: &Scene,
    source_position: Vec3,
    traj: &Trajectory,
    params: &SimulationParams,
    config: &MicrophoneConfig,
    seed: u64,
) -> Result<TrajectoryRender> {
    traj.validate()?;
    if source.sampling_rate != params.sampling_rate {
        return Err(Error::validation(format!(
            "source is {} Hz but the simulation runs at {} Hz; resample first",
            source.sampling_rate, params.sampling_rate
        )));
    }
    let bounds = scene.bounds();
    let mut cache = PathCache::new();
    let mut irs = Vec::with_capacity(traj.len());
    let mut steps = Vec::with_capacity(traj.len());
    for (t, pose) in traj.times.iter().zip(&traj.poses) {
        if !bounds.contains(pose.position) {
            log::warn!("trajectory pose at {t} s lies outside the scene");
        }
        let (ir, direct) = match config {
            MicrophoneConfig::Custom { capsules } => {
                (render_array(scene, source_position, pose, capsules, params, seed)?, None)
            }
            _ => {
                let hist = simulate(scene, source_position, pose, params, Some(&mut cache))?;
                (Renderer::new(&hist, seed).render(config)?, hist.direct.clone())
            }
        };
        steps.push(StepInfo {
            time: *t,
            position: [pose.position.x, pose.position.y, pose.position.z],
            heading_deg: pose.heading.to_degrees(),
            source_distance: pose.position.distance(source_position),
            direct_delay: direct.as_ref().map(|d| d.delay),
            occlusion: direct.as_ref().map(|d| d.state),
            rms: 0.0,
        });
        irs.push(ir);
    }
    let audio = render_with_irs(source, &irs, traj)?;
    let n = (traj.step * source.sampling_rate as f64).round() as usize;
    for (i, s) in steps.iter_mut().enumerate() {
        let e: f64 = audio.channels.iter().flat_map(|c| &c[i * n..(i + 1) * n]).map(|v| v * v).sum();
        s.rms = (e / (n * audio.channel_count()).max(1) as f64).sqrt();
    }
    Ok(TrajectoryRender { audio, steps, irs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn noise(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
    }

    fn delay_ir(fs: u32, d: usize, g: f64, len: usize) -> ImpulseResponse {
        let mut h = vec![0.0; len];
        h[d] = g;
        ImpulseResponse::mono(fs, h)
    }

    #[test]
    fn parse_and_print() {
        let text = "# walk\n0 1 2 1.5 90\n0.15 1.15 2 1.5 90\n\n0.3 1.3 2 1.5 90 # last\n";
        let t = Trajectory::parse(text, "walk.txt", 0.05).unwrap();
        assert_eq!(t.len(), 3);
        assert!((t.step - 0.15).abs() < 1e-12);
        assert!((t.poses[0].heading - std::f64::consts::FRAC_PI_2).abs() < 1e-12);
        let again = Trajectory::parse(&t.to_text(), "x", 0.05).unwrap();
        assert_eq!(again.len(), 3);
        assert!(matches!(Trajectory::parse("0 1 2 3\n", "bad.txt", 0.05), Err(Error::Format { line: 1, .. })));
        assert!(Trajectory::parse("0 0 0 0 0\n0.1 0 0 0 0\n0.3 0 0 0 0\n", "x", 0.01).is_err());
        assert!(Trajectory::parse("0 0 0 0 0\n0 0 0 0 0\n", "x", 0.01).is_err());
    }

    #[test]
    fn weights_are_linear() {
        assert_eq!(crossfade_weight(0, 100), 0.0);
        assert_eq!(crossfade_weight(50, 100), 0.5);
        assert_eq!(crossfade_weight(100, 100), 1.0);
        for j in 0..=100 {
            let w = crossfade_weight(j, 100);
            assert_eq!(w + (1.0 - w), 1.0);
        }
    }

    #[test]
    fn static_trajectory_equals_one_convolution() {
        let fs = 8000;
        let x = noise(fs as usize * 2, 1);
        let h = noise(600, 2);
        let ir = ImpulseResponse::mono(fs, h.clone());
        let traj = Trajectory::stationary(Pose::default(), 10, 0.15, 0.05).unwrap();
        let out = render_with_irs(&AudioClip::mono(fs, x.clone()), &vec![ir; 10], &traj).unwrap();
        let full = convolve_slices(&x, &h);
        let scale = full.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (a, b) in out.channels[0].iter().zip(&full) {
            assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn two_delays_crossfade_exactly() {
        let fs = 1000;
        let x = noise(2000, 3);
        let (d1, d2) = (7, 19);
        let irs = vec![delay_ir(fs, d1, 1.0, 32), delay_ir(fs, d2, 0.5, 32)];
        let traj = Trajectory::new(0.5, 0.2, 0.05, vec![Pose::default(); 2]).unwrap();
        let out = &render_with_irs(&AudioClip::mono(fs, x.clone()), &irs, &traj).unwrap().channels[0];
        let (s0, n, m) = (500usize, 200usize, 50usize);
        for j in 0..n {
            assert_eq!(out[j], x[s0 + j - d1]);
            let t = s0 + n + j;
            let new = 0.5 * x[t - d2];
            let want = if j < m {
                let w = j as f64 / m as f64;
                w * new + (1.0 - w) * x[t - d1]
            } else {
                new
            };
            assert!((out[n + j] - want).abs() < 1e-12, "{j}");
        }
    }
}
