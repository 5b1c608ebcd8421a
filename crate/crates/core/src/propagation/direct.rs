//! Direct path: line of sight, edge diffraction around occluders, and
//! transmission through them.

use std::f64::consts::PI;

use super::histogram::{DirectSound, OcclusionState};
use super::params::SimulationParams;
use crate::geometry::{Pose, Vec3};
use crate::materials::Spectrum;
use crate::scene::{BandTable, DiffractionEdge, Ray, Scene};

const VIS_EPS: f64 = 1e-6;
const APEX_OFFSET: f64 = 1e-5;

/// Insertion loss in dB for signed Fresnel number `n` (negative in the lit zone).
pub fn barrier_insertion_loss(n: f64) -> f64 {
    if n >= 0.0 {
        let x = (2.0 * PI * n).sqrt();
        if x < 1e-6 {
            5.0
        } else {
            5.0 + 20.0 * (x / x.tanh()).log10()
        }
    } else {
        let x = (2.0 * PI * -n).sqrt();
        if x >= PI / 2.0 {
            return 0.0;
        }
        let r = if x < 1e-6 { 1.0 } else { x / x.tan() };
        (5.0 + 20.0 * r.log10()).max(0.0)
    }
}

/// Point on the edge minimizing `|s - p| + |p - l|`, with its path length.
pub fn edge_apex(edge: &DiffractionEdge, s: Vec3, l: Vec3) -> (Vec3, f64) {
    let u = edge.direction();
    let len = edge.length();
    let split = |q: Vec3| {
        let par = (q - edge.a).dot(u);
        let perp = ((q - edge.a) - u * par).norm();
        (par, perp)
    };
    let (sp, sd) = split(s);
    let (lp, ld) = split(l);
    let t = if sd + ld < 1e-12 { sp } else { (sp * ld + lp * sd) / (sd + ld) };
    let p = edge.a + u * t.clamp(0.0, len);
    (p, s.distance(p) + p.distance(l))
}

fn in_exterior(edge: &DiffractionEdge, p: Vec3, q: Vec3) -> bool {
    let d = q - p;
    d.dot(edge.normal_a) > -1e-9 || d.dot(edge.normal_b) > -1e-9
}

fn opposite_sides(edge: &DiffractionEdge, p: Vec3, s: Vec3, l: Vec3) -> bool {
    let side = |n: Vec3| ((s - p).dot(n) > 0.0) != ((l - p).dot(n) > 0.0);
    side(edge.normal_a) || side(edge.normal_b)
}

fn detour_visible(scene: &Scene, edge: &DiffractionEdge, p: Vec3, s: Vec3, l: Vec3) -> bool {
    let q = p - edge.into_solid * APEX_OFFSET;
    in_exterior(edge, p, s)
        && in_exterior(edge, p, l)
        && !scene.segment_occluded(s, q, VIS_EPS)
        && !scene.segment_occluded(q, l, VIS_EPS)
}

/// Shortest visible path around a single edge, as (apex, length).
fn shortest_detour(scene: &Scene, s: Vec3, l: Vec3, samples: usize) -> Option<(Vec3, f64)> {
    let edges = scene.diffraction_edges();
    let mut order: Vec<(f64, usize, Vec3)> = edges
        .iter()
        .enumerate()
        .map(|(i, e)| {
            let (p, len) = edge_apex(e, s, l);
            (len, i, p)
        })
        .collect();
    order.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut best: Option<(Vec3, f64)> = None;
    for (bound, i, apex) in order {
        if best.is_some_and(|b| b.1 <= bound) {
            break;
        }
        let e = &edges[i];
        if detour_visible(scene, e, apex, s, l) {
            best = Some((apex, bound));
            continue;
        }
        for k in 0..samples {
            let t = (k as f64 + 0.5) / samples as f64;
            let p = e.a + (e.b - e.a) * t;
            let len = s.distance(p) + p.distance(l);
            if best.is_some_and(|b| b.1 <= len) {
                continue;
            }
            if detour_visible(scene, e, p, s, l) {
                best = Some((p, len));
            }
        }
    }
    best
}

/// Largest lit-zone insertion loss per band from edges grazing the line of sight.
fn lit_zone_loss(scene: &Scene, s: Vec3, l: Vec3, wavelengths: &[f64]) -> Spectrum {
    let mut loss = Spectrum::zeros(wavelengths.len());
    let d = s.distance(l);
    let lmax = wavelengths.iter().copied().fold(0.0, f64::max);
    for e in scene.diffraction_edges() {
        let (p, len) = edge_apex(e, s, l);
        let delta = len - d;
        // IL vanishes once |N| > 1/4 at the longest wavelength.
        if delta * 2.0 / lmax > 0.25 {
            continue;
        }
        if !opposite_sides(e, p, s, l) {
            continue;
        }
        let (q, _) = crate::geometry::closest_point_on_segment(p, s, l);
        // Grazing incidence (q on the edge) still takes the N = 0 loss.
        if (q - p).dot(e.into_solid) > 1e-9 {
            continue;
        }
        for (b, lam) in wavelengths.iter().enumerate() {
            loss[b] = loss[b].max(barrier_insertion_loss(-2.0 * delta / lam));
        }
    }
    loss
}

/// Product of transmission coefficients of every surface crossed by the segment.
fn transmission_along(scene: &Scene, table: &BandTable, s: Vec3, l: Vec3) -> Spectrum {
    let n = table.absorption.first().map_or(0, |a| a.len());
    let mut t = Spectrum::splat(n, 1.0);
    let mut origin = s;
    for _ in 0..64 {
        let remaining = origin.distance(l);
        if remaining <= VIS_EPS {
            break;
        }
        let ray = Ray::new(origin, l - origin);
        let Some(hit) = scene.intersect_from(&ray, VIS_EPS, remaining - VIS_EPS) else {
            break;
        };
        let m = scene.material_index(hit.triangle) as usize;
        t = t.mul(&table.transmission[m]);
        if t.max() == 0.0 {
            break;
        }
        origin = ray.at(hit.distance + VIS_EPS);
    }
    t
}

/// Direct arrival from `source` to `listener`. `air` holds energy attenuation per metre.
pub fn compute_direct(
    scene: &Scene,
    table: &BandTable,
    params: &SimulationParams,
    air: &Spectrum,
    source: Vec3,
    listener: &Pose,
) -> DirectSound {
    let l = listener.position;
    let c = params.speed_of_sound;
    let nb = params.bands.len();
    let d = source.distance(l).max(1e-6);
    let gain = params.initial_pressure;
    let spread = |r: f64| gain / (4.0 * PI * r * r);
    let wavelengths: Vec<f64> = params.bands.centers().iter().map(|f| c / f).collect();
    let los_dir = listener.to_local((source - l).normalized());
    let attenuate = |e: Spectrum, r: f64| e.zip_map(air, |x, m| x * (-m * r).exp());

    let stages = params.stages;
    if !scene.segment_occluded(source, l, VIS_EPS) {
        let mut e = attenuate(Spectrum::splat(nb, spread(d)), d);
        if stages.diffraction {
            let il = lit_zone_loss(scene, source, l, &wavelengths);
            e = e.zip_map(&il, |x, db| x * 10f64.powf(-db / 10.0));
        }
        return DirectSound {
            delay: d / c,
            energy: e.as_slice().to_vec(),
            direction: los_dir,
            state: OcclusionState::Visible,
            path_length: d,
        };
    }
    if stages.diffraction {
        let edges = scene.diffraction_edges().len().max(1);
        let samples = (params.num_direct_rays / edges).clamp(8, 256);
        if let Some((apex, len)) = shortest_detour(scene, source, l, samples) {
            let delta = len - d;
            let mut e = attenuate(Spectrum::splat(nb, spread(len)), len);
            for (b, lam) in wavelengths.iter().enumerate() {
                e[b] *= 10f64.powf(-barrier_insertion_loss(2.0 * delta / lam) / 10.0);
            }
            return DirectSound {
                delay: len / c,
                energy: e.as_slice().to_vec(),
                direction: listener.to_local((apex - l).normalized()),
                state: OcclusionState::Diffracted,
                path_length: len,
            };
        }
    }
    if stages.transmission {
        let t = transmission_along(scene, table, source, l);
        if t.max() > 0.0 {
            let e = attenuate(Spectrum::splat(nb, spread(d)), d).mul(&t);
            return DirectSound {
                delay: d / c,
                energy: e.as_slice().to_vec(),
                direction: los_dir,
                state: OcclusionState::Transmitted,
                path_length: d,
            };
        }
    }
    DirectSound {
        delay: d / c,
        energy: vec![0.0; nb],
        direction: los_dir,
        state: OcclusionState::Blocked,
        path_length: d,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn insertion_loss_is_continuous_at_boundary() {
        assert!((barrier_insertion_loss(0.0) - 5.0).abs() < 1e-9);
        assert!((barrier_insertion_loss(1e-9) - 5.0).abs() < 1e-3);
        assert!((barrier_insertion_loss(-1e-9) - 5.0).abs() < 1e-3);
        assert_eq!(barrier_insertion_loss(-0.3), 0.0);
        // Maekawa's chart: about 13 dB at N = 1, 23 dB at N = 10.
        assert!((barrier_insertion_loss(1.0) - 13.0).abs() < 1.0);
        assert!((barrier_insertion_loss(10.0) - 23.0).abs() < 1.0);
        let mut prev = -1.0;
        for i in -100..100 {
            let v = barrier_insertion_loss(i as f64 * 0.01);
            assert!(v >= prev);
            prev = v;
        }
    }
}
