//! Built-in validation suites run by `echotrace validate`.

use std::f64::consts::PI;
use std::time::Instant;

use echotrace::audio::{convolve, crossfade_weight, render_trajectory, AudioClip, Trajectory};
use echotrace::materials::{AcousticMaterial, FrequencyBands, MaterialTable};
use echotrace::metrics::{drr, rt60, schroeder_edc, linear_fit, Rt60Method};
use echotrace::oracle::{image_sources, ShoeboxRoom};
use echotrace::propagation::{simulate, DirectSound, EnergyHistogram, OcclusionState, SimulationParams};
use echotrace::scene::{build_scene, primitives, Scene};
use echotrace::spatial::{direction_from_degrees, synthesize_pressure, to_binaural, HeadModel, MicrophoneConfig, Renderer};
use echotrace::{Pose, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::{CliError, CliResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Shoebox,
    Decay,
    Continuity,
}

impl std::str::FromStr for Suite {
    type Err = CliError;
    fn from_str(s: &str) -> CliResult<Self> {
        match s {
            "shoebox" => Ok(Suite::Shoebox),
            "decay" => Ok(Suite::Decay),
            "continuity" => Ok(Suite::Continuity),
            _ => Err(CliError::config(format!("unknown suite '{s}' (expected shoebox, decay or continuity)"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: &str, passed: bool, detail: String) -> Self {
        Check { name: name.into(), passed, detail }
    }
}

#[derive(Debug)]
pub struct SuiteOptions {
    /// Source rays for the image-source comparison.
    pub rays: usize,
    pub threads: usize,
    /// Multiplies indirect pressure by √(4π) before measuring DRR.
    pub sqrt_4pi_bias: bool,
    /// Room for the trajectory checks instead of the built-in one.
    pub scene: Option<Scene>,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions { rays: 1_000_000, threads: 1, sqrt_4pi_bias: false, scene: None }
    }
}

pub fn run(suite: Suite, opts: &SuiteOptions) -> CliResult<Vec<Check>> {
    match suite {
        Suite::Shoebox => shoebox(opts),
        Suite::Decay => Ok(decay()),
        Suite::Continuity => continuity(opts),
    }
}

pub const SHOEBOX: Vec3 = Vec3 { x: 4.0, y: 3.0, z: 2.5 };
pub const SHOEBOX_SOURCE: Vec3 = Vec3 { x: 1.0, y: 1.0, z: 1.2 };
pub const SHOEBOX_LISTENER: Vec3 = Vec3 { x: 2.8, y: 1.9, z: 1.5 };

/// A `[0, dims]` box with one material everywhere.
pub fn uniform_box(dims: Vec3, absorption: f64, scattering: f64) -> Scene {
    let mesh = primitives::shoebox(dims.x, dims.y, dims.z);
    let n = mesh.triangle_count();
    build_scene(mesh, MaterialTable::uniform(AcousticMaterial::constant(absorption, scattering, 0.0), n))
        .expect("box scene is valid")
}

/// Geometric spreading and wall absorption only.
pub fn oracle_params(threads: usize) -> SimulationParams {
    let mut p = SimulationParams::high_quality();
    p.air = None;
    p.stages.diffraction = false;
    p.stages.transmission = false;
    p.thread_count = threads;
    p
}

/// Multiplies all indirect energy by 4π.
pub fn inject_sqrt_4pi_bias(h: &mut EnergyHistogram) {
    let direct = h.direct.take();
    h.scale(4.0 * PI);
    h.direct = direct;
}

fn shoebox(opts: &SuiteOptions) -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    let absorption = 0.2;
    let scene = uniform_box(SHOEBOX, absorption, 0.0);
    let mut p = oracle_params(opts.threads);
    p.num_source_rays = opts.rays;
    p.num_listener_rays = 0;
    p.max_source_depth = 2;
    p.max_ir_seconds = 0.1;
    let lst = Pose::new(SHOEBOX_LISTENER, 0.0);
    let start = Instant::now();
    let h = simulate(&scene, SHOEBOX_SOURCE, &lst, &p, None)?;
    let secs = start.elapsed().as_secs_f64();
    let room = ShoeboxRoom::uniform(SHOEBOX, &vec![absorption; p.bands.len()], p.speed_of_sound);
    let images = image_sources(&room, SHOEBOX_SOURCE, SHOEBOX_LISTENER, 1, None)?;
    let bin = h.bin_duration();

    let direct = h.direct.as_ref().map_or(f64::NAN, |d| d.delay);
    let want = images.iter().find(|i| i.order == 0).map_or(f64::NAN, |i| i.delay);
    out.push(Check::new(
        "direct arrival time",
        (direct - want).abs() <= bin,
        format!("{:.4} ms vs image source {:.4} ms", direct * 1e3, want * 1e3),
    ));

    let first: Vec<_> = h.early_reflections.iter().filter(|e| e.order() == 1).collect();
    out.push(Check::new("first-order cluster count", first.len() == 6, format!("{} clusters, expected 6", first.len())));

    let mut worst_t: f64 = 0.0;
    let mut worst_e: f64 = 0.0;
    let mut matched = 0;
    for img in images.iter().filter(|i| i.order == 1) {
        let wall = img.hits.iter().position(|&n| n == 1).unwrap_or(0);
        let plane_matches = |er: &&&echotrace::propagation::EarlyReflection| {
            let pl = er.planes[0];
            let axis = wall / 2;
            let n = [pl.normal.x, pl.normal.y, pl.normal.z];
            let coord = if wall % 2 == 0 { 0.0 } else { [SHOEBOX.x, SHOEBOX.y, SHOEBOX.z][axis] };
            n[axis].abs() > 0.999 && (pl.offset * n[axis].signum() - coord).abs() < 1e-6
        };
        if let Some(er) = first.iter().find(plane_matches) {
            matched += 1;
            worst_t = worst_t.max((er.delay - img.delay).abs() / bin);
            let mean = |e: &[f64]| e.iter().sum::<f64>() / e.len() as f64;
            worst_e = worst_e.max((mean(&er.energy) / mean(&img.energy) - 1.0).abs());
        }
    }
    out.push(Check::new(
        "first-order arrival times",
        matched == 6 && worst_t <= 1.0,
        format!("{matched}/6 matched, worst offset {worst_t:.2} bins"),
    ));
    out.push(Check::new(
        "first-order energies",
        matched == 6 && worst_e <= 0.05,
        format!("worst relative error {:.2}%", worst_e * 100.0),
    ));
    if opts.threads == 1 {
        out.push(Check::new("runtime", secs < 60.0, format!("{secs:.1} s for {} rays on one thread", opts.rays)));
    }

    let (sim, oracle) = drr_comparison(opts.threads, opts.sqrt_4pi_bias)?;
    let err = sim - oracle;
    out.push(Check::new(
        "direct-to-reverberant ratio",
        err.abs() <= 1.5,
        format!("simulated {sim:.2} dB vs image source {oracle:.2} dB (error {err:+.2} dB)"),
    ));
    Ok(out)
}

/// Simulated and image-source DRR in dB for the reference shoebox.
pub fn drr_comparison(threads: usize, bias: bool) -> CliResult<(f64, f64)> {
    let absorption = 0.2;
    let scene = uniform_box(SHOEBOX, absorption, 0.5);
    let mut p = oracle_params(threads);
    p.max_ir_seconds = 1.0;
    let mut h = simulate(&scene, SHOEBOX_SOURCE, &Pose::new(SHOEBOX_LISTENER, 0.0), &p, None)?;
    if bias {
        inject_sqrt_4pi_bias(&mut h);
    }
    let ir = synthesize_pressure(&h, 1);
    let window = echotrace::metrics::DEFAULT_DIRECT_WINDOW;
    let d = drr(&ir.channels[0], p.sampling_rate, window, None)?;
    let sim = d.db.ok_or_else(|| CliError::simulation("simulated response has no reverberant energy"))?;

    let room = ShoeboxRoom::uniform(SHOEBOX, &vec![absorption; p.bands.len()], p.speed_of_sound);
    let images = image_sources(&room, SHOEBOX_SOURCE, SHOEBOX_LISTENER, 60, None)?;
    let t0 = images[0].delay;
    let (mut de, mut re) = (0.0, 0.0);
    for im in &images {
        let e = im.energy.iter().sum::<f64>();
        if im.delay <= t0 + window {
            de += e;
        } else {
            re += e;
        }
    }
    Ok((sim, 10.0 * (de / re).log10()))
}

/// Histogram whose every band decays as exp(-2t/τ).
pub fn exponential_histogram(tau: f64, seconds: f64, sampling_rate: u32) -> EnergyHistogram {
    let mut h = EnergyHistogram::new(sampling_rate, 48, FrequencyBands::octaves(), 1, seconds);
    let dt = h.bin_duration();
    for i in 0..h.bin_count() {
        let t0 = i as f64 * dt;
        let e = tau / 2.0 * ((-2.0 * t0 / tau).exp() - (-2.0 * (t0 + dt) / tau).exp());
        let nb = h.band_count();
        h.bin_energy_mut(i).iter_mut().for_each(|v| *v = e);
        h.bin_sh_mut(i)[0] = e * nb as f64;
    }
    h
}

fn decay() -> Vec<Check> {
    let mut out = Vec::new();
    let fs = 44_100;
    for tau in [0.1, 0.05] {
        let ir = synthesize_pressure(&exponential_histogram(tau, 1.5, fs), 7);
        let x = &ir.channels[0];
        let want = 60.0 * tau / (20.0 * std::f64::consts::LOG10_E);
        let r = rt60(x, fs, Rt60Method::T30);
        let got = r.seconds.unwrap_or(f64::NAN);
        out.push(Check::new(
            &format!("rt60 of exponential decay, tau {tau} s"),
            (got / want - 1.0).abs() <= 0.02,
            format!("{got:.4} s vs {want:.4} s"),
        ));
        if tau == 0.1 {
            let edc = schroeder_edc(x, fs);
            let (slope, r2) = edc.map_or((f64::NAN, 0.0), |e| {
                let (t, db): (Vec<f64>, Vec<f64>) = (0..e.len())
                    .filter(|&i| e.db[i] <= -5.0 && e.db[i] >= -35.0)
                    .map(|i| (e.time(i), e.db[i]))
                    .unzip();
                let (_, b, r2) = linear_fit(&t, &db);
                (b, r2)
            });
            let want = -20.0 * std::f64::consts::LOG10_E / tau;
            out.push(Check::new(
                "energy decay curve slope",
                (slope / want - 1.0).abs() <= 0.02 && r2 > 0.99,
                format!("{slope:.2} dB/s vs {want:.2} dB/s, R² {r2:.4}"),
            ));
        }
    }

    // Direct energy 1.0, tail energy 0.1.
    let mut x = vec![0.0; fs as usize / 2];
    x[441] = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let start = 441 + (0.01 * fs as f64) as usize;
    let tail: Vec<f64> = (start..x.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
    let e: f64 = tail.iter().map(|v| v * v).sum();
    for (i, v) in tail.iter().enumerate() {
        x[start + i] = v * (0.1 / e).sqrt();
    }
    let d = drr(&x, fs, echotrace::metrics::DEFAULT_DIRECT_WINDOW, None);
    let got = d.as_ref().ok().and_then(|d| d.db).unwrap_or(f64::NAN);
    out.push(Check::new("constructed 10 dB DRR", (got - 10.0).abs() <= 0.1, format!("{got:.3} dB")));
    out
}

fn onset(x: &[f64]) -> usize {
    x.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).map_or(0, |(i, _)| i)
}

fn continuity(opts: &SuiteOptions) -> CliResult<Vec<Check>> {
    let mut out = Vec::new();
    let fs = 44_100;
    let built_in;
    let scene = match &opts.scene {
        Some(s) => s,
        None => {
            built_in = uniform_box(Vec3::new(12.0, 5.0, 3.0), 0.4, 0.5);
            &built_in
        }
    };
    let b = scene.bounds();
    let z = b.min.z + 1.5;
    let mut p = oracle_params(opts.threads);
    p.num_source_rays = 4096;
    p.num_listener_rays = 4096;
    p.max_ir_seconds = 0.3;
    let c = b.centroid();
    let source = Vec3::new(c.x, b.min.y + 0.75 * (b.max.y - b.min.y), z);

    let mut rng = ChaCha8Rng::seed_from_u64(11);
    // Band-limited test signal: a sum of tones below 1 kHz.
    let tones: Vec<(f64, f64)> = (0..6).map(|_| (rng.random_range(80.0..1000.0), rng.random_range(0.0..2.0 * PI))).collect();
    let signal = |seconds: f64| {
        let n = (seconds * fs as f64) as usize;
        let x = (0..n)
            .map(|i| tones.iter().map(|(f, ph)| (2.0 * PI * f * i as f64 / fs as f64 + ph).sin()).sum::<f64>() / 6.0)
            .collect();
        AudioClip::mono(fs, x)
    };

    // Static trajectory against one long convolution.
    let pose = Pose::new(Vec3::new(b.min.x + 0.3 * (b.max.x - b.min.x), c.y, z), 0.3);
    let src_audio = signal(1.6);
    let mut traj = Trajectory::stationary(pose, 8, 0.15, 0.05)?;
    traj.times.iter_mut().for_each(|t| *t += 0.3);
    let r = render_trajectory(&src_audio, scene, source, &traj, &p, &MicrophoneConfig::Mono, 3)?;
    let h = simulate(scene, source, &pose, &p, None)?;
    let ir = Renderer::new(&h, 3).render(&MicrophoneConfig::Mono)?;
    let full = convolve(&src_audio, &ir)?;
    let s0 = (0.3 * fs as f64).round() as usize;
    let want = &full.channels[0][s0..s0 + r.audio.len()];
    let scale = want.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = r.audio.channels[0].iter().zip(want).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    out.push(Check::new(
        "static trajectory equals one convolution",
        err <= 1e-6 * scale,
        format!("max relative deviation {:.2e}", err / scale.max(f64::MIN_POSITIVE)),
    ));

    let mut exact = true;
    for m in [1usize, 2, 3, 7, 441, 2205, 4410] {
        for j in 0..=m {
            let w = crossfade_weight(j, m);
            exact &= w + (1.0 - w) == 1.0;
        }
    }
    let mid = crossfade_weight(2205, 4410);
    out.push(Check::new(
        "crossfade weights sum to one",
        exact && mid == 0.5 && crossfade_weight(0, 4410) == 0.0 && crossfade_weight(4410, 4410) == 1.0,
        format!("midpoint weight {mid}"),
    ));

    // Straight walk across the room.
    let steps = 12;
    let poses = (0..steps)
        .map(|i| {
            let f = 0.1 + 0.8 * i as f64 / (steps - 1) as f64;
            Pose::new(Vec3::new(b.min.x + f * (b.max.x - b.min.x), c.y, z), 0.0)
        })
        .collect();
    let traj = Trajectory::new(0.3, 0.15, 0.05, poses)?;
    let r = render_trajectory(&signal(2.2), scene, source, &traj, &p, &MicrophoneConfig::Mono, 5)?;
    let y = &r.audio.channels[0];
    let n = (0.15 * fs as f64).round() as usize;
    let (mut intra, mut boundary) = (0.0f64, 0.0f64);
    for k in 1..y.len() {
        let jump = (y[k] - y[k - 1]).abs();
        if k % n == 0 {
            boundary = boundary.max(jump);
        } else {
            intra = intra.max(jump);
        }
    }
    out.push(Check::new(
        "step boundaries are continuous",
        boundary <= 2.0 * intra,
        format!("largest boundary jump {boundary:.3e}, largest intra-step jump {intra:.3e}"),
    ));

    // Interaural delay for a source at the side.
    let mut h = EnergyHistogram::new(fs, 1, FrequencyBands::octaves(), 1, 0.05);
    h.direct = Some(DirectSound {
        delay: 0.01,
        energy: vec![1.0; 8],
        direction: direction_from_degrees(90.0, 0.0),
        state: OcclusionState::Visible,
        path_length: 3.43,
    });
    let bi = to_binaural(&h, HeadModel::default(), 0)?;
    let itd = onset(&bi.channels[1]) as f64 - onset(&bi.channels[0]) as f64;
    out.push(Check::new("interaural delay at 90°", (itd - 29.0).abs() <= 2.0, format!("{itd} samples")));
    Ok(out)
}
