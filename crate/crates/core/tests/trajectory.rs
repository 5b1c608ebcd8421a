mod common;

use std::f64::consts::PI;

use common::{plain_params, shoebox};
use echotrace::audio::{convolve, render_trajectory, AudioClip, Trajectory};
use echotrace::propagation::{simulate, SimulationParams};
use echotrace::spatial::{MicrophoneConfig, Renderer};
use echotrace::{Pose, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const FS: u32 = 44100;
const SOURCE: Vec3 = Vec3 { x: 6.0, y: 3.0, z: 1.5 };

fn params() -> SimulationParams {
    let mut p = plain_params(2000, 2000);
    p.sampling_rate = FS;
    p.max_ir_seconds = 0.25;
    p
}

/// Sum of sinusoids well below Nyquist.
fn band_limited(seconds: f64) -> AudioClip {
    let n = (seconds * FS as f64) as usize;
    let freqs = [110.0, 237.0, 420.0, 615.0, 890.0];
    let x = (0..n)
        .map(|i| {
            let t = i as f64 / FS as f64;
            freqs.iter().enumerate().map(|(k, f)| (2.0 * PI * f * t + k as f64).sin() / freqs.len() as f64).sum()
        })
        .collect();
    AudioClip::mono(FS, x)
}

fn walk(steps: usize) -> Trajectory {
    let poses = (0..steps)
        .map(|i| Pose::new(Vec3::new(1.0 + 10.0 * i as f64 / (steps - 1) as f64, 1.0, 1.5), 0.0))
        .collect();
    Trajectory::new(0.3, 0.15, 0.05, poses).unwrap()
}

fn noise(seconds: f64) -> AudioClip {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let n = (seconds * FS as f64) as usize;
    AudioClip::mono(FS, (0..n).map(|_| rng.random_range(-0.5..0.5)).collect())
}

#[test]
fn loudness_peaks_when_passing_the_source() {
    let scene = shoebox(Vec3::new(12.0, 5.0, 3.0), 0.7, 0.5);
    let traj = walk(14);
    let out = render_trajectory(&noise(2.6), &scene, SOURCE, &traj, &params(), &MicrophoneConfig::Mono, 1).unwrap();
    assert_eq!(out.audio.len(), 14 * 6615);
    let rms: Vec<f64> = out.steps.iter().map(|s| s.rms).collect();
    let (peak, max) = rms.iter().enumerate().max_by(|a, b| a.1.total_cmp(b.1)).map(|(i, v)| (i, *v)).unwrap();
    assert!((4..=9).contains(&peak), "{rms:?}");
    assert!(rms[0] < 0.7 * max && rms[13] < 0.7 * max, "{rms:?}");
    let d: Vec<f64> = out.steps.iter().map(|s| s.source_distance).collect();
    assert!(d[0] > d[6] && d[13] > d[7]);
}

#[test]
fn static_trajectory_equals_single_convolution() {
    let scene = shoebox(Vec3::new(12.0, 5.0, 3.0), 0.4, 0.5);
    let p = params();
    let pose = Pose::new(Vec3::new(3.0, 1.0, 1.5), 0.4);
    let source = band_limited(1.5);
    let mut traj = Trajectory::stationary(pose, 6, 0.15, 0.05).unwrap();
    traj.times.iter_mut().for_each(|t| *t += 0.3);
    let out = render_trajectory(&source, &scene, SOURCE, &traj, &p, &MicrophoneConfig::Mono, 9).unwrap();

    let hist = simulate(&scene, SOURCE, &pose, &p, None).unwrap();
    let ir = Renderer::new(&hist, 9).render(&MicrophoneConfig::Mono).unwrap();
    let full = convolve(&source, &ir).unwrap();
    let s0 = (0.3 * FS as f64).round() as usize;
    let want = &full.channels[0][s0..s0 + out.audio.len()];
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = out.audio.channels[0].iter().zip(want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    assert!(err <= 1e-6 * scale, "{err} vs {scale}");
}

#[test]
fn step_boundaries_have_no_discontinuity() {
    let scene = shoebox(Vec3::new(12.0, 5.0, 3.0), 0.4, 0.5);
    let traj = walk(10);
    let out = render_trajectory(&band_limited(2.0), &scene, SOURCE, &traj, &params(), &MicrophoneConfig::Mono, 5).unwrap();
    let y = &out.audio.channels[0];
    let n = 6615;
    let mut intra = 0.0f64;
    let mut boundary = 0.0f64;
    for k in 1..y.len() {
        let jump = (y[k] - y[k - 1]).abs();
        if k % n == 0 {
            boundary = boundary.max(jump);
        } else {
            intra = intra.max(jump);
        }
    }
    assert!(boundary <= 2.0 * intra, "{boundary} vs {intra}");
}
