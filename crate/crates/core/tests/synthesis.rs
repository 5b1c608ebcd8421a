mod common;

use common::{plain_params, uniform_scene};
use echotrace::materials::FrequencyBands;
use echotrace::metrics::{rt60, schroeder_edc, Rt60Method};
use echotrace::propagation::{DirectSound, EnergyHistogram, OcclusionState};
use echotrace::scene::primitives;
use echotrace::spatial::{render_array, synthesize_pressure, Renderer};
use echotrace::{Pose, Vec3};

const FS: u32 = 48000;

/// Histogram whose energy decays as exp(-2t/τ) in every band.
fn exponential(tau: f64, seconds: f64) -> EnergyHistogram {
    let mut h = EnergyHistogram::new(FS, 48, FrequencyBands::octaves(), 1, seconds);
    let dt = h.bin_duration();
    for i in 0..h.bin_count() {
        let t0 = i as f64 * dt;
        // Exact integral of the envelope over the bin.
        let e = tau / 2.0 * ((-2.0 * t0 / tau).exp() - (-2.0 * (t0 + dt) / tau).exp());
        h.bin_energy_mut(i).iter_mut().for_each(|v| *v = e);
        h.bin_sh_mut(i)[0] = e * 8.0;
    }
    h
}

#[test]
fn exponential_decay_gives_the_analytic_rt60() {
    let tau = 0.1;
    let ir = synthesize_pressure(&exponential(tau, 1.5), 3);
    let r = rt60(&ir.channels[0], FS, Rt60Method::T30);
    let want = 60.0 * tau / (20.0 * std::f64::consts::LOG10_E);
    assert!((want - 0.6908).abs() < 1e-4);
    let got = r.seconds.expect("valid decay");
    assert!((got / want - 1.0).abs() < 0.02, "{got} vs {want}");
    let slope = r.slope.unwrap();
    let expect = -20.0 * std::f64::consts::LOG10_E / tau;
    assert!((slope / expect - 1.0).abs() < 0.02, "{slope} vs {expect}");
    assert!(r.r_squared.unwrap() > 0.99);
}

#[test]
fn edc_starts_at_zero_db_and_falls() {
    let ir = synthesize_pressure(&exponential(0.05, 0.8), 9);
    let edc = schroeder_edc(&ir.channels[0], FS).unwrap();
    assert!(edc.db[0].abs() < 1e-9);
    assert!(edc.db.windows(2).all(|w| w[1] <= w[0] + 1e-12));
}

#[test]
fn rendered_energy_matches_histogram() {
    let mut h = exponential(0.08, 0.6);
    // Late energy arrives after the direct sound.
    for i in 0..h.bin_of(0.02).unwrap() {
        h.bin_energy_mut(i).iter_mut().for_each(|v| *v = 0.0);
        h.bin_sh_mut(i)[0] = 0.0;
    }
    h.direct = Some(DirectSound {
        delay: 0.004,
        energy: vec![0.02; 8],
        direction: Vec3::X,
        state: OcclusionState::Visible,
        path_length: 0.004 * 343.0,
    });
    let weights = Renderer::new(&h, 0).band_weights().to_vec();
    assert!((weights.iter().sum::<f64>() - 1.0).abs() < 0.01);
    let want: f64 = h.total_energy().iter().zip(&weights).map(|(e, w)| e * w).sum();
    assert!((want / (0.04 * (-0.5f64).exp() + 0.02) - 1.0).abs() < 0.01);
    for seed in [1, 2, 3] {
        let ir = synthesize_pressure(&h, seed);
        let got: f64 = ir.channels[0].iter().map(|v| v * v).sum();
        assert!((got / want - 1.0).abs() < 0.02, "seed {seed}: {got} vs {want}");
    }
}

fn onset(x: &[f64]) -> usize {
    x.iter().enumerate().max_by(|a, b| a.1.abs().total_cmp(&b.1.abs())).unwrap().0
}

fn free_field_array(capsules: &[[f64; 3]]) -> Vec<Vec<f64>> {
    let scene = uniform_scene(primitives::panel_x(100.0, -1.0, 1.0, -1.0, 1.0), 1.0, 0.0);
    let mut p = plain_params(0, 0);
    p.stages.indirect = false;
    p.sampling_rate = FS;
    p.speed_of_sound = 343.0;
    p.max_ir_seconds = 0.1;
    let ir = render_array(&scene, Vec3::new(10.0, 0.0, 0.0), &Pose::new(Vec3::ZERO, 0.0), capsules, &p, 4).unwrap();
    assert_eq!(ir.channel_count(), capsules.len());
    ir.channels
}

#[test]
fn array_capsule_delays_follow_geometry() {
    let c = scene_speed();
    let broadside = free_field_array(&[[0.0, 0.1, 0.0], [0.0, -0.1, 0.0]]);
    assert_eq!(onset(&broadside[0]), onset(&broadside[1]));

    let endfire = free_field_array(&[[0.1, 0.0, 0.0], [-0.1, 0.0, 0.0]]);
    let lag = onset(&endfire[1]) as f64 - onset(&endfire[0]) as f64;
    let want = 0.2 / c * FS as f64;
    assert!((lag - want).abs() <= 1.0, "{lag} vs {want}");

    let square = free_field_array(&[[0.1, 0.1, 0.0], [0.1, -0.1, 0.0], [-0.1, 0.1, 0.0], [-0.1, -0.1, 0.0]]);
    let t: Vec<f64> = square.iter().map(|x| onset(x) as f64).collect();
    assert_eq!(t[0], t[1]);
    assert_eq!(t[2], t[3]);
    assert!((t[2] - t[0] - want).abs() <= 1.0);
}

fn scene_speed() -> f64 {
    343.0
}


#[test]
fn fractional_delay_impulse_has_no_tail_floor() {
    let mut h = EnergyHistogram::new(44_100, 64, FrequencyBands::octaves(), 1, 2.0);
    h.direct = Some(DirectSound {
        delay: 0.004_137,
        energy: vec![0.05; 8],
        direction: Vec3::X,
        state: OcclusionState::Visible,
        path_length: 1.42,
    });
    let x = &synthesize_pressure(&h, 1).channels[0];
    let total: f64 = x.iter().map(|v| v * v).sum();
    let tail: f64 = x[x.len() / 2..].iter().map(|v| v * v).sum();
    assert!(10.0 * (tail / total).log10() < -100.0);
}
