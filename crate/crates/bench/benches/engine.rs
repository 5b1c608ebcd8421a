use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};
use echotrace::audio::{convolve, AudioClip};
use echotrace::geometry::sample_uniform_sphere;
use echotrace::materials::{AcousticMaterial, FrequencyBands, MaterialTable};
use echotrace::propagation::{simulate, EnergyHistogram, SimulationParams};
use echotrace::scene::{build_scene, primitives, Ray, Scene};
use echotrace::spatial::{synthesize_pressure, MicrophoneConfig, Renderer};
use echotrace::{Pose, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn room(absorption: f64) -> Scene {
    let mesh = primitives::merge(&[
        primitives::l_room(10.0, 8.0, 4.0, 3.0, 3.0),
        primitives::panel_x(5.0, 1.0, 3.0, 0.0, 2.0),
    ]);
    let n = mesh.triangle_count();
    build_scene(mesh, MaterialTable::uniform(AcousticMaterial::constant(absorption, 0.4, 0.0), n)).unwrap()
}

fn bvh(c: &mut Criterion) {
    let scene = room(0.2);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let rays: Vec<Ray> = (0..4096)
        .map(|_| {
            let o = Vec3::new(rng.random_range(1.0..4.0), rng.random_range(1.0..4.0), rng.random_range(0.5..2.5));
            Ray::new(o, sample_uniform_sphere(&mut rng))
        })
        .collect();
    c.bench_function("intersect 4096 rays", |b| {
        b.iter(|| rays.iter().filter(|r| scene.intersect(r, f64::INFINITY).is_some()).count())
    });
}

fn tracing(c: &mut Criterion) {
    let scene = room(0.2);
    let mut g = c.benchmark_group("simulate");
    g.sample_size(10);
    for (name, mut p) in [("high_speed", SimulationParams::high_speed()), ("high_quality", SimulationParams::high_quality())] {
        p.thread_count = 1;
        g.bench_function(name, |b| {
            b.iter(|| simulate(&scene, Vec3::new(2.0, 2.0, 1.5), &Pose::new(Vec3::new(7.0, 6.0, 1.5), 0.0), &p, None).unwrap())
        });
    }
    g.finish();
}

fn synthesis(c: &mut Criterion) {
    let mut h = EnergyHistogram::new(44_100, 64, FrequencyBands::octaves(), 2, 1.0);
    let dt = h.bin_duration();
    for i in 0..h.bin_count() {
        let e = (-(i as f64) * dt / 0.08).exp();
        h.accumulate((i as f64 + 0.5) * dt, &[e; 8], Vec3::new(1.0, 0.3, 0.1).normalized());
    }
    let mut g = c.benchmark_group("render");
    g.sample_size(20);
    g.bench_function("pressure", |b| b.iter(|| synthesize_pressure(black_box(&h), 1)));
    g.bench_function("binaural", |b| b.iter(|| Renderer::new(&h, 1).render(&MicrophoneConfig::Binaural).unwrap()));
    g.bench_function("ambisonics2", |b| {
        b.iter(|| Renderer::new(&h, 1).render(&MicrophoneConfig::Ambisonics { order: 2 }).unwrap())
    });
    let ir = synthesize_pressure(&h, 1);
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let dry = AudioClip::mono(44_100, (0..44_100 * 3).map(|_| rng.random_range(-1.0..1.0)).collect());
    g.bench_function("convolve 3 s", |b| b.iter(|| convolve(black_box(&dry), &ir).unwrap()));
    g.finish();
}

criterion_group!(benches, bvh, tracing, synthesis);
criterion_main!(benches);
