//! Sound propagation: direct sound, early reflections and the late energy
//! histogram for one source and one listener.

mod direct;
mod histogram;
mod params;
mod tracer;

use std::hash::{Hash, Hasher};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{Pose, Vec3};
use crate::materials::Spectrum;
use crate::scene::{Plane, Scene};

pub use direct::{barrier_insertion_loss, compute_direct, edge_apex};
pub use histogram::{DirectSound, EarlyReflection, EnergyHistogram, OcclusionState, TraceStats};
pub use params::{Mode, ParamsFile, SimulationParams, Stages, PARAMS_SCHEMA_VERSION};

use tracer::{Contribution, MatProps, Mis, TraceContext, BATCH_RAYS};

/// Batches traced in parallel before their results are merged in order.
const WINDOW: usize = 32;
const PLANE_TOLERANCE: f64 = 1e-3;
/// Listener displacement below which the cached histogram is reused.
const CACHE_RADIUS: f64 = 1.0;
const CACHE_BLEND: f64 = 0.5;

/// Late-reverb reuse between consecutive simulations of a moving listener.
#[derive(Debug, Default, Clone)]
pub struct PathCache {
    entry: Option<CacheEntry>,
}

#[derive(Debug, Clone)]
struct CacheEntry {
    key: u64,
    source: Vec3,
    listener: Vec3,
    histogram: EnergyHistogram,
}

impl PathCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.entry = None;
    }

    pub fn is_warm(&self) -> bool {
        self.entry.is_some()
    }
}

/// Hash of the geometry, materials and simulation settings.
pub fn scene_fingerprint(scene: &Scene, params: &SimulationParams) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    for v in &scene.mesh().vertices {
        for c in [v.x, v.y, v.z] {
            c.to_bits().hash(&mut h);
        }
    }
    scene.mesh().triangles.hash(&mut h);
    for t in 0..scene.triangle_count() {
        scene.material_index(t as u32).hash(&mut h);
    }
    serde_json::to_string(scene.materials()).unwrap_or_default().hash(&mut h);
    serde_json::to_string(params).unwrap_or_default().hash(&mut h);
    scene.speed_of_sound.to_bits().hash(&mut h);
    h.finish()
}

struct ErAccumulator {
    planes: Vec<Plane>,
    energy: Spectrum,
    weighted_delay: f64,
    weighted_dir: Vec3,
    weight: f64,
    paths: u64,
}

/// Simulates the response from `source` to `listener`.
///
/// The result is bitwise identical for any thread count.
pub fn simulate(
    scene: &Scene,
    source: Vec3,
    listener: &Pose,
    params: &SimulationParams,
    cache: Option<&mut PathCache>,
) -> Result<EnergyHistogram> {
    params.validate()?;
    if !source.is_finite() || !listener.position.is_finite() {
        return Err(Error::invalid("source and listener positions must be finite"));
    }
    let bounds = scene.bounds();
    if !bounds.contains(source) {
        log::warn!("source {source:?} lies outside the scene bounds");
    }
    if !bounds.contains(listener.position) {
        log::warn!("listener {:?} lies outside the scene bounds", listener.position);
    }
    let table = scene.band_table(&params.bands);
    let nb = params.bands.len();
    let air = params.air.map_or(Spectrum::zeros(nb), |a| a.energy_coefficients(&params.bands));
    let mut hist = EnergyHistogram::new(
        params.sampling_rate,
        params.histogram_bin_samples,
        params.bands.clone(),
        params.indirect_sh_order,
        params.max_ir_seconds,
    );
    hist.direct_sh_order = params.direct_sh_order;
    if params.stages.direct {
        hist.direct = Some(compute_direct(scene, &table, params, &air, source, listener));
    }

    let n_src = params.num_source_rays;
    let n_lst = params.num_listener_rays;
    if params.stages.indirect && n_src + n_lst > 0 {
        let radius = params.detector_radius;
        let ctx = TraceContext {
            scene,
            mats: MatProps::table(&table, params.stages.transmission),
            air,
            freqs: params.bands.centers().to_vec(),
            source,
            listener: listener.position,
            radius,
            gain: params.initial_pressure,
            speed_of_sound: params.speed_of_sound,
            n_source: n_src,
            n_listener: n_lst,
            max_source_depth: params.max_source_depth as usize,
            max_listener_depth: params.max_listener_depth as usize,
            diffraction: params.stages.diffraction,
            mis: Mis {
                endpoint_density: 1.0 / (std::f64::consts::PI * radius * radius),
                n_source: n_src as f64,
                n_listener: n_lst as f64,
                max_source_depth: params.max_source_depth as usize,
                max_listener_depth: params.max_listener_depth as usize,
            },
        };
        let batches = n_src.div_ceil(BATCH_RAYS).max(n_lst.div_ceil(BATCH_RAYS)).max(1);
        let share = |n: usize, b: usize| n * (b + 1) / batches - n * b / batches;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(params.thread_count)
            .build()
            .map_err(|e| Error::invalid(format!("thread pool: {e}")))?;
        let mut clusters: Vec<ErAccumulator> = Vec::new();
        let mut start = 0;
        while start < batches {
            let end = (start + WINDOW).min(batches);
            let outs: Vec<_> = pool.install(|| {
                (start..end)
                    .into_par_iter()
                    .map(|b| {
                        let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
                        rng.set_stream(b as u64);
                        ctx.trace_batch(&mut rng, share(n_src, b), share(n_lst, b))
                    })
                    .collect()
            });
            for out in outs {
                merge_stats(&mut hist.stats, &out.stats);
                for c in out.contributions {
                    deposit(&mut hist, &mut clusters, scene, listener, c);
                }
            }
            start = end;
        }
        hist.early_reflections = finish_clusters(clusters);
    }

    if params.path_cache {
        if let Some(cache) = cache {
            let key = scene_fingerprint(scene, params);
            if let Some(prev) = &cache.entry {
                if prev.key == key
                    && prev.source == source
                    && prev.listener.distance(listener.position) < CACHE_RADIUS
                    && prev.histogram.is_compatible(&hist)
                {
                    hist.blend_late(&prev.histogram, CACHE_BLEND);
                }
            }
            cache.entry = Some(CacheEntry { key, source, listener: listener.position, histogram: hist.clone() });
        }
    }
    Ok(hist)
}

fn merge_stats(a: &mut TraceStats, b: &TraceStats) {
    a.source_rays += b.source_rays;
    a.listener_rays += b.listener_rays;
    a.batches += b.batches;
    a.source_detections += b.source_detections;
    a.listener_detections += b.listener_detections;
    a.connections += b.connections;
    a.escaped += b.escaped;
}

fn deposit(hist: &mut EnergyHistogram, clusters: &mut Vec<ErAccumulator>, scene: &Scene, pose: &Pose, c: Contribution) {
    let dir = pose.to_local(c.dir);
    let Some((tris, order)) = c.early else {
        hist.accumulate(c.delay, c.energy.as_slice(), dir);
        return;
    };
    let planes: Vec<Plane> = tris[..order as usize].iter().map(|&t| *scene.plane(t)).collect();
    let idx = clusters.iter().position(|k| {
        k.planes.len() == planes.len() && k.planes.iter().zip(&planes).all(|(a, b)| a.approx_eq(b, PLANE_TOLERANCE))
    });
    let idx = idx.unwrap_or_else(|| {
        clusters.push(ErAccumulator {
            planes,
            energy: Spectrum::zeros(c.energy.len()),
            weighted_delay: 0.0,
            weighted_dir: Vec3::ZERO,
            weight: 0.0,
            paths: 0,
        });
        clusters.len() - 1
    });
    let k = &mut clusters[idx];
    let w = c.energy.sum();
    k.energy.add_assign(&c.energy);
    k.weighted_delay += w * c.delay;
    k.weighted_dir += dir * w;
    k.weight += w;
    k.paths += 1;
}

fn finish_clusters(clusters: Vec<ErAccumulator>) -> Vec<EarlyReflection> {
    let mut out: Vec<EarlyReflection> = clusters
        .into_iter()
        .filter(|k| k.weight > 0.0)
        .map(|k| EarlyReflection {
            delay: k.weighted_delay / k.weight,
            energy: k.energy.as_slice().to_vec(),
            direction: k.weighted_dir.normalized(),
            planes: k.planes,
            paths: k.paths,
        })
        .collect();
    out.sort_by(|a, b| a.delay.total_cmp(&b.delay));
    out
}

