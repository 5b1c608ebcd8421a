//! Impulse-response datasets with polar source coordinates.

use std::f64::consts::PI;
use std::path::Path;

use echotrace::propagation::ParamsFile;
use echotrace::scene::{Ray, Scene};
use echotrace::spatial::MicrophoneConfig;
use echotrace::{Pose, Vec3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::commands::render_ir;
use crate::job::{fit_sh_order, params_hash, runtime_params, ListenerPose, RenderJob, SceneSpec};
use crate::{CliError, CliResult};

pub const MANIFEST_SCHEMA_VERSION: u32 = 1;
/// Source and listener height above the floor.
pub const EAR_HEIGHT: f64 = 1.5;
pub const DEFAULT_MAX_DISTANCE: f64 = 5.0;
/// Smallest allowed distance to any surface and between source and listener.
const CLEARANCE: f64 = 0.3;
const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetRecord {
    pub index: usize,
    /// WAV path relative to the dataset directory.
    pub ir: String,
    pub scene_id: String,
    /// Source azimuth anticlockwise from the listener heading, in [0, 2π).
    pub theta: f64,
    /// Source distance in metres.
    pub distance: f64,
    pub source: [f64; 3],
    pub listener: ListenerPose,
    pub seed: u64,
    pub params_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub schema_version: u32,
    pub master_seed: u64,
    pub count: usize,
    pub max_distance: f64,
    pub microphone: MicrophoneConfig,
    pub params_hash: String,
    pub records: Vec<DatasetRecord>,
}

#[derive(Debug, Clone)]
pub struct DatasetOptions {
    pub count: usize,
    pub seed: u64,
    pub max_distance: f64,
    pub microphone: MicrophoneConfig,
    pub threads: usize,
}

/// Seed of record `index`, independent of every other record.
pub fn record_seed(master: u64, index: usize) -> u64 {
    let mut z = master ^ (index as u64).wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Azimuth of `source` seen from `listener`, anticlockwise from its heading, in [0, 2π).
pub fn polar_angle(listener: &Pose, source: Vec3) -> f64 {
    let local = listener.to_local(source - listener.position);
    let t = local.y.atan2(local.x).rem_euclid(2.0 * PI);
    if t >= 2.0 * PI {
        0.0
    } else {
        t
    }
}

/// True when rays along all six axes hit geometry no closer than the clearance.
fn enclosed(scene: &Scene, p: Vec3) -> bool {
    [Vec3::X, -Vec3::X, Vec3::Y, -Vec3::Y, Vec3::Z, -Vec3::Z]
        .iter()
        .all(|&d| scene.intersect(&Ray::new(p, d), f64::INFINITY).is_some_and(|h| h.distance >= CLEARANCE))
}

fn place(scene: &Scene, rng: &mut ChaCha8Rng, max_distance: f64) -> Option<(Vec3, Pose)> {
    let b = scene.bounds();
    let z = b.min.z + EAR_HEIGHT;
    let sample = |rng: &mut ChaCha8Rng| {
        Vec3::new(rng.random_range(b.min.x..=b.max.x), rng.random_range(b.min.y..=b.max.y), z)
    };
    for _ in 0..MAX_ATTEMPTS {
        let l = sample(rng);
        if !enclosed(scene, l) {
            continue;
        }
        let heading = rng.random_range(0.0..2.0 * PI);
        for _ in 0..64 {
            let s = sample(rng);
            let d = s.distance(l);
            if d >= CLEARANCE && d <= max_distance && enclosed(scene, s) {
                return Some((s, Pose::new(l, heading)));
            }
        }
    }
    None
}

/// Renders `opts.count` records round-robin over `scenes` into `out`.
pub fn gen_dataset(scenes: &[SceneSpec], params: &ParamsFile, opts: &DatasetOptions, out: &Path) -> CliResult<Manifest> {
    if scenes.is_empty() {
        return Err(CliError::config("no scenes given"));
    }
    if !(opts.max_distance > CLEARANCE) {
        return Err(CliError::config(format!("max distance must exceed {CLEARANCE} m")));
    }
    opts.microphone.validate()?;
    let params = &fit_sh_order(params.clone(), &opts.microphone);
    let runtime = runtime_params(params, 1)?;
    let loaded = scenes.iter().map(|s| s.load(&runtime)).collect::<CliResult<Vec<_>>>()?;
    let ids: Vec<String> = scenes
        .iter()
        .map(|s| s.mesh.file_stem().map(|x| x.to_string_lossy().into_owned()).unwrap_or_default())
        .collect();
    let ir_dir = out.join("irs");

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads)
        .build()
        .map_err(|e| CliError::simulation(e.to_string()))?;
    let records = pool.install(|| {
        (0..opts.count)
            .into_par_iter()
            .map(|i| {
                let k = i % scenes.len();
                let seed = record_seed(opts.seed, i);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let (source, pose) = place(&loaded[k], &mut rng, opts.max_distance).ok_or_else(|| {
                    CliError::simulation(format!("could not place source and listener in {}", ids[k]))
                })?;
                let mut p = params.clone();
                p.rng_seed = Some(seed);
                let job = RenderJob {
                    scene: scenes[k].clone(),
                    params: p,
                    source: [source.x, source.y, source.z],
                    listener: ListenerPose {
                        position: [pose.position.x, pose.position.y, pose.position.z],
                        heading_deg: pose.heading.to_degrees(),
                    },
                    microphone: opts.microphone.clone(),
                    seed,
                };
                let stem = format!("{i:05}");
                let written = render_ir(&job, &ir_dir, &stem, 1)?;
                Ok(DatasetRecord {
                    index: i,
                    ir: format!("irs/{stem}.wav"),
                    scene_id: ids[k].clone(),
                    theta: polar_angle(&pose, source),
                    distance: source.distance(pose.position),
                    source: job.source,
                    listener: job.listener,
                    seed,
                    params_hash: written.meta.params_hash,
                })
            })
            .collect::<CliResult<Vec<_>>>()
    })?;
    let manifest = Manifest {
        schema_version: MANIFEST_SCHEMA_VERSION,
        master_seed: opts.seed,
        count: opts.count,
        max_distance: opts.max_distance,
        microphone: opts.microphone.clone(),
        params_hash: params_hash(params),
        records,
    };
    let path = out.join("manifest.json");
    std::fs::write(&path, serde_json::to_string_pretty(&manifest).expect("manifest serializes") + "\n")
        .map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
    Ok(manifest)
}
