//! Bidirectional energy tracing.
//!
//! Source paths are detected by a sphere around the listener, listener paths
//! by a sphere around the source. Listener vertices are also connected to the
//! source point and to a stored source-path vertex from the same batch. All
//! four estimators are combined with the balance heuristic.

use std::f64::consts::PI;

use rand::Rng;

use super::histogram::TraceStats;
use crate::geometry::{closest_point_on_segment, sample_cosine_hemisphere, sample_uniform_sphere, Vec3};
use crate::materials::Spectrum;
use crate::scene::{BandTable, Hit, Ray, Scene};

pub(crate) const BATCH_RAYS: usize = 256;
const T_MIN: f64 = 1e-6;
const VIS_EPS: f64 = 1e-6;
const RR_THRESHOLD: f64 = 1e-4;
const RR_SURVIVAL: f64 = 0.1;
/// Capture radius around edges as a fraction of the incoming segment length.
const CAPTURE_FRACTION: f64 = 0.05;
const CAPTURE_PROB: f64 = 0.5;

#[derive(Clone, Copy, PartialEq, Eq, Debug)]
pub(crate) enum Label {
    Endpoint,
    Diffuse,
    Specular,
    Transmit,
    Diffract,
}

/// A path vertex as seen by the MIS weight computation.
#[derive(Clone, Copy, Debug)]
pub(crate) struct PVertex {
    pos: Vec3,
    normal: Vec3,
    label: Label,
    /// Selection probabilities of the four events at this vertex.
    c_d: f64,
    c_s: f64,
    c_t: f64,
    c_e: f64,
}

impl PVertex {
    fn endpoint(pos: Vec3) -> Self {
        PVertex { pos, normal: Vec3::ZERO, label: Label::Endpoint, c_d: 0.0, c_s: 0.0, c_t: 0.0, c_e: 0.0 }
    }

    fn cos(&self, dir: Vec3) -> f64 {
        if self.label == Label::Endpoint || self.label == Label::Diffract {
            1.0
        } else {
            self.normal.dot(dir).abs()
        }
    }

    /// Directional sampling density of leaving towards `dir`.
    fn dir_pdf(&self, dir: Vec3) -> f64 {
        match self.label {
            Label::Endpoint => 1.0 / (4.0 * PI),
            Label::Diffuse => self.c_d * self.normal.dot(dir).abs() / PI,
            Label::Specular => self.c_s,
            Label::Transmit => self.c_t,
            Label::Diffract => self.c_e,
        }
    }
}

/// Balance-heuristic weights over the strategies that can produce a path.
///
/// Strategy `s` generates the first `s` vertices from the source side.
/// `s = 0` is a listener path hitting the source sphere, `s = 1` a
/// connection to the source point, `2..=k` a connection to a stored source
/// vertex and `k + 2` a source path hitting the listener sphere.
#[derive(Clone, Copy, Debug)]
pub(crate) struct Mis {
    pub endpoint_density: f64,
    pub n_source: f64,
    pub n_listener: f64,
    pub max_source_depth: usize,
    pub max_listener_depth: usize,
}

impl Mis {
    fn valid(&self, path: &[PVertex], s: usize) -> bool {
        let n = path.len();
        let k = n - 2;
        let src = self.n_source > 0.0;
        let lst = self.n_listener > 0.0;
        if s == n {
            src && k <= self.max_source_depth
        } else if s == 0 {
            lst && k <= self.max_listener_depth
        } else if s == 1 {
            lst && path[1].label == Label::Diffuse && k <= self.max_listener_depth
        } else if s <= k {
            src && lst
                && path[s - 1].label == Label::Diffuse
                && path[s].label == Label::Diffuse
                && s - 1 <= self.max_source_depth
                && k + 1 - s <= self.max_listener_depth
        } else {
            false
        }
    }

    pub(crate) fn weight(&self, path: &[PVertex], own: usize, lf: &mut Vec<f64>, lr: &mut Vec<f64>) -> f64 {
        let n = path.len();
        lf.clear();
        lr.clear();
        lf.resize(n, 0.0);
        lr.resize(n, 0.0);
        lf[0] = self.endpoint_density.ln();
        lr[n - 1] = self.endpoint_density.ln();
        for i in 1..n {
            let d = path[i].pos - path[i - 1].pos;
            let d2 = d.norm_squared().max(1e-12);
            let u = d / d2.sqrt();
            lf[i] = (path[i - 1].dir_pdf(u) * path[i].cos(u) / d2).ln();
            lr[i - 1] = (path[i].dir_pdf(-u) * path[i - 1].cos(u) / d2).ln();
        }
        // ln p_s = Σ_{i<s} lf[i] + Σ_{i>=s} lr[i]
        let mut ln_p = lr.iter().sum::<f64>();
        let mut own_ln = f64::NEG_INFINITY;
        let mut terms = [0.0f64; 160];
        let mut count = 0;
        for s in 0..=n {
            if s > 0 {
                ln_p += lf[s - 1] - lr[s - 1];
            }
            if !self.valid(path, s) {
                continue;
            }
            let cnt = if s == n { self.n_source } else { self.n_listener };
            let v = ln_p + cnt.ln();
            if s == own {
                own_ln = v;
            }
            if count < terms.len() {
                terms[count] = v;
                count += 1;
            }
        }
        if !own_ln.is_finite() {
            return 0.0;
        }
        let sum: f64 = terms[..count].iter().map(|t| (t - own_ln).exp()).sum();
        if sum.is_finite() && sum > 0.0 {
            1.0 / sum
        } else {
            0.0
        }
    }
}

/// Per-material quantities used while tracing.
#[derive(Clone, Debug)]
pub(crate) struct MatProps {
    diffuse: Spectrum,
    specular: Spectrum,
    tau: Spectrum,
    damping: Spectrum,
    p_t: f64,
    p_d: f64,
}

impl MatProps {
    pub(crate) fn table(t: &BandTable, transmission: bool) -> Vec<MatProps> {
        (0..t.absorption.len())
            .map(|m| {
                let a = t.absorption[m];
                let s = t.scattering[m];
                let tau = if transmission { t.transmission[m] } else { Spectrum::zeros(a.len()) };
                let rho = a.zip_map(&t.transmission[m], |a, t| (1.0 - a - t).max(0.0));
                let diffuse = rho.mul(&s);
                let specular = rho.zip_map(&s, |r, s| r * (1.0 - s));
                let p_t = if tau.sum() > 0.0 { tau.sum() / (rho.sum() + tau.sum()) } else { 0.0 };
                let p_d = if diffuse.sum() == 0.0 {
                    0.0
                } else if specular.sum() == 0.0 {
                    1.0
                } else {
                    s.mean().clamp(0.01, 0.99)
                };
                MatProps { diffuse, specular, tau, damping: t.damping[m], p_t, p_d }
            })
            .collect()
    }
}

pub(crate) struct TraceContext<'a> {
    pub scene: &'a Scene,
    pub mats: Vec<MatProps>,
    pub air: Spectrum,
    pub freqs: Vec<f64>,
    pub source: Vec3,
    pub listener: Vec3,
    pub radius: f64,
    pub gain: f64,
    pub speed_of_sound: f64,
    pub n_source: usize,
    pub n_listener: usize,
    pub max_source_depth: usize,
    pub max_listener_depth: usize,
    pub diffraction: bool,
    pub mis: Mis,
}

/// One arrival estimate. `dir` points from the listener towards the arrival, in world space.
#[derive(Clone, Debug)]
pub(crate) struct Contribution {
    pub delay: f64,
    pub energy: Spectrum,
    pub dir: Vec3,
    /// Reflecting triangles from source to listener for all-specular paths of order 1 or 2.
    pub early: Option<([u32; 2], u8)>,
}

#[derive(Default)]
pub(crate) struct BatchOutput {
    pub contributions: Vec<Contribution>,
    pub stats: TraceStats,
}

struct PoolEntry {
    path: usize,
    depth: usize,
    vertex: PVertex,
    alpha: Spectrum,
    length: f64,
    in_dir: Vec3,
    mat: usize,
    nd: Spectrum,
}

#[derive(Default)]
struct SourceStore {
    paths: Vec<Vec<PVertex>>,
    pool: Vec<PoolEntry>,
}

/// What the tracer knows about a surface hit before choosing an event.
struct SurfaceInfo {
    mat: usize,
    c_d: f64,
    c_s: f64,
    c_t: f64,
    c_e: f64,
    /// Energy fraction that is not diffracted.
    nd: Spectrum,
    /// Diffracted fraction with the edge apex, when captured.
    edge: Option<(usize, Vec3, Spectrum)>,
}

struct Event {
    label: Label,
    dir: Vec3,
    pos: Vec3,
    weight: Spectrum,
    inside: Option<usize>,
}

struct Scratch {
    path: Vec<PVertex>,
    lf: Vec<f64>,
    lr: Vec<f64>,
}

fn sphere_chord(origin: Vec3, dir: Vec3, seg_end: f64, center: Vec3, r: f64) -> Option<(f64, f64, f64)> {
    let oc = center - origin;
    let tc = oc.dot(dir);
    let b2 = (oc.norm_squared() - tc * tc).max(0.0);
    if b2 >= r * r {
        return None;
    }
    let h = (r * r - b2).sqrt();
    let t0 = (tc - h).max(0.0);
    let t1 = (tc + h).min(seg_end);
    (t1 > t0).then(|| (t1 - t0, tc, b2.sqrt()))
}

fn facing(normal: Vec3, in_dir: Vec3) -> Vec3 {
    if normal.dot(in_dir) < 0.0 {
        normal
    } else {
        -normal
    }
}

impl TraceContext<'_> {
    fn bands(&self) -> usize {
        self.freqs.len()
    }

    fn volume(&self) -> f64 {
        4.0 / 3.0 * PI * self.radius.powi(3)
    }

    fn attenuate(&self, e: Spectrum, length: f64) -> Spectrum {
        e.zip_map(&self.air, |x, m| x * (-m * length).exp())
    }

    fn surface(&self, hit: &Hit, p: Vec3, seg_len: f64) -> SurfaceInfo {
        let mat = self.scene.material_index(hit.triangle) as usize;
        let mp = &self.mats[mat];
        let nb = self.bands();
        let mut edge = None;
        let mut nd = Spectrum::splat(nb, 1.0);
        let mut p_e = 0.0;
        if self.diffraction {
            let rc = CAPTURE_FRACTION * seg_len;
            let edges = self.scene.diffraction_edges();
            let mut best: Option<(usize, Vec3, f64)> = None;
            for &ei in self.scene.edges_of(hit.triangle) {
                let e = &edges[ei as usize];
                let (q, _) = closest_point_on_segment(p, e.a, e.b);
                let r = q.distance(p);
                if r < rc && best.is_none_or(|b| r < b.2) {
                    best = Some((ei as usize, q, r));
                }
            }
            if let Some((ei, q, r)) = best {
                let c = self.speed_of_sound;
                let mut dif = Spectrum::zeros(nb);
                for (b, f) in self.freqs.iter().enumerate() {
                    dif[b] = 1.0 / (1.0 + 2.0 * PI * f * r / c);
                }
                nd = dif.map(|d| (1.0 - d) / (1.0 - CAPTURE_PROB));
                p_e = CAPTURE_PROB;
                edge = Some((ei, q, dif.scale(1.0 / CAPTURE_PROB)));
            }
        }
        let rest = 1.0 - p_e;
        SurfaceInfo {
            mat,
            c_d: rest * (1.0 - mp.p_t) * mp.p_d,
            c_s: rest * (1.0 - mp.p_t) * (1.0 - mp.p_d),
            c_t: rest * mp.p_t,
            c_e: p_e,
            nd,
            edge,
        }
    }

    fn vertex(&self, info: &SurfaceInfo, p: Vec3, normal: Vec3, label: Label) -> PVertex {
        PVertex { pos: p, normal, label, c_d: info.c_d, c_s: info.c_s, c_t: info.c_t, c_e: info.c_e }
    }

    /// Samples what happens at a surface. `None` ends the path.
    fn sample_event<R: Rng>(&self, rng: &mut R, info: &SurfaceInfo, hit: &Hit, p: Vec3, dir: Vec3) -> Option<Event> {
        let mp = &self.mats[info.mat];
        let u: f64 = rng.random();
        let n = hit.normal;
        if u < info.c_e {
            let (ei, q, dif) = info.edge.as_ref()?;
            let e = &self.scene.diffraction_edges()[*ei];
            let axis = e.direction();
            let cb = dir.dot(axis).clamp(-1.0, 1.0);
            let sb = (1.0 - cb * cb).sqrt();
            let (e1, e2) = axis.frame();
            for _ in 0..16 {
                let phi = 2.0 * PI * rng.random::<f64>();
                let out = (axis * cb + (e1 * phi.cos() + e2 * phi.sin()) * sb).normalized();
                if out.dot(e.normal_a) > 0.0 || out.dot(e.normal_b) > 0.0 {
                    return Some(Event {
                        label: Label::Diffract,
                        dir: out,
                        pos: *q - e.into_solid * 1e-5,
                        weight: *dif,
                        inside: None,
                    });
                }
            }
            return None;
        }
        let u = u - info.c_e;
        if u < info.c_t {
            return Some(Event {
                label: Label::Transmit,
                dir,
                pos: p,
                weight: mp.tau.mul(&info.nd).scale(1.0 / info.c_t),
                inside: Some(info.mat),
            });
        }
        let u = u - info.c_t;
        if u < info.c_d {
            let nf = facing(n, dir);
            return Some(Event {
                label: Label::Diffuse,
                dir: sample_cosine_hemisphere(rng, nf),
                pos: p,
                weight: mp.diffuse.mul(&info.nd).scale(1.0 / info.c_d),
                inside: None,
            });
        }
        if info.c_s > 0.0 {
            return Some(Event {
                label: Label::Specular,
                dir: dir.reflect(n).normalized(),
                pos: p,
                weight: mp.specular.mul(&info.nd).scale(1.0 / info.c_s),
                inside: None,
            });
        }
        None
    }

    fn roulette<R: Rng>(rng: &mut R, w: &mut Spectrum, scale: f64) -> bool {
        if w.max() / scale < RR_THRESHOLD {
            if rng.random::<f64>() >= RR_SURVIVAL {
                return false;
            }
            *w = w.scale(1.0 / RR_SURVIVAL);
        }
        w.max() > 0.0
    }

    pub(crate) fn trace_batch<R: Rng>(&self, rng: &mut R, n_src: usize, n_lst: usize) -> BatchOutput {
        let mut out = BatchOutput::default();
        let mut store = SourceStore::default();
        let mut scratch = Scratch { path: Vec::new(), lf: Vec::new(), lr: Vec::new() };
        for _ in 0..n_src {
            self.trace_source(rng, &mut out, &mut store, &mut scratch);
        }
        for _ in 0..n_lst {
            self.trace_listener(rng, &mut out, &store, n_src, &mut scratch);
        }
        out.stats.source_rays = n_src as u64;
        out.stats.listener_rays = n_lst as u64;
        out.stats.batches = 1;
        out
    }

    fn trace_source<R: Rng>(&self, rng: &mut R, out: &mut BatchOutput, store: &mut SourceStore, sc: &mut Scratch) {
        let nb = self.bands();
        let scene = self.scene;
        let norm = self.gain / self.n_source as f64;
        let path_idx = store.paths.len();
        let mut verts: Vec<PVertex> = Vec::new();
        let mut alpha = Spectrum::splat(nb, 1.0);
        let mut pos = self.source;
        let mut dir = sample_uniform_sphere(rng);
        let mut length = 0.0;
        let mut l_d = 0.0;
        let mut inside: Option<usize> = None;
        let mut tris = [0u32; 2];
        let mut all_specular = true;
        for depth in 0..=self.max_source_depth {
            let hit = scene.intersect_from(&Ray { origin: pos, direction: dir }, T_MIN, f64::INFINITY);
            let seg_end = hit.map_or(f64::INFINITY, |h| h.distance);
            if depth >= 1 {
                if let Some((chord, tc, b)) = sphere_chord(pos, dir, seg_end, self.listener, self.radius) {
                    sc.path.clear();
                    sc.path.push(PVertex::endpoint(self.source));
                    sc.path.extend_from_slice(&verts);
                    sc.path.push(PVertex::endpoint(self.listener));
                    let w = self.mis.weight(&sc.path, sc.path.len(), &mut sc.lf, &mut sc.lr);
                    if w > 0.0 {
                        let ls = length - l_d + tc;
                        let total = l_d + (ls * ls + b * b).sqrt();
                        let e = self.attenuate(alpha.scale(chord / self.volume() * norm * w), total);
                        let early = (all_specular && depth <= 2).then_some((tris, depth as u8));
                        out.contributions.push(Contribution {
                            delay: total / self.speed_of_sound,
                            energy: e,
                            dir: -dir,
                            early,
                        });
                        out.stats.source_detections += 1;
                    }
                }
            }
            let Some(hit) = hit else {
                out.stats.escaped += 1;
                break;
            };
            if depth == self.max_source_depth {
                break;
            }
            let p = pos + dir * hit.distance;
            let info = self.surface(&hit, p, hit.distance);
            if inside == Some(info.mat) {
                let t = hit.distance;
                alpha = alpha.zip_map(&self.mats[info.mat].damping, |a, m| a * (-m * t).exp());
            }
            length += hit.distance;
            if info.c_d > 0.0 {
                store.pool.push(PoolEntry {
                    path: path_idx,
                    depth: verts.len(),
                    vertex: self.vertex(&info, p, hit.normal, Label::Diffuse),
                    alpha,
                    length,
                    in_dir: dir,
                    mat: info.mat,
                    nd: info.nd,
                });
            }
            let Some(ev) = self.sample_event(rng, &info, &hit, p, dir) else {
                break;
            };
            alpha = alpha.mul(&ev.weight);
            let mut v = self.vertex(&info, p, hit.normal, ev.label);
            if ev.label == Label::Diffract {
                length += ev.pos.distance(pos) - hit.distance;
                v.pos = ev.pos;
            }
            if matches!(ev.label, Label::Diffuse | Label::Diffract) {
                l_d = length;
            }
            if ev.label != Label::Specular {
                all_specular = false;
            } else if depth < 2 {
                tris[depth] = hit.triangle;
            }
            verts.push(v);
            inside = ev.inside;
            pos = ev.pos;
            dir = ev.dir;
            if !Self::roulette(rng, &mut alpha, 1.0) {
                break;
            }
        }
        store.paths.push(verts);
    }

    fn trace_listener<R: Rng>(
        &self,
        rng: &mut R,
        out: &mut BatchOutput,
        store: &SourceStore,
        batch_sources: usize,
        sc: &mut Scratch,
    ) {
        let nb = self.bands();
        let scene = self.scene;
        let c = self.speed_of_sound;
        let norm = self.gain / self.n_listener as f64;
        let mut verts: Vec<PVertex> = Vec::new();
        let mut beta = Spectrum::splat(nb, 4.0 * PI);
        let mut pos = self.listener;
        let mut dir = sample_uniform_sphere(rng);
        let arrival = dir;
        let mut length = 0.0;
        let mut l_d = 0.0;
        let mut inside: Option<usize> = None;
        let mut tris = [0u32; 2];
        let mut all_specular = true;
        for depth in 0..=self.max_listener_depth {
            let hit = scene.intersect_from(&Ray { origin: pos, direction: dir }, T_MIN, f64::INFINITY);
            let seg_end = hit.map_or(f64::INFINITY, |h| h.distance);
            if depth >= 1 {
                if let Some((chord, tc, b)) = sphere_chord(pos, dir, seg_end, self.source, self.radius) {
                    sc.path.clear();
                    sc.path.push(PVertex::endpoint(self.source));
                    sc.path.extend(verts.iter().rev());
                    sc.path.push(PVertex::endpoint(self.listener));
                    let w = self.mis.weight(&sc.path, 0, &mut sc.lf, &mut sc.lr);
                    if w > 0.0 {
                        let ls = length - l_d + tc;
                        let total = l_d + (ls * ls + b * b).sqrt();
                        let e = beta.scale(chord / (4.0 * PI * self.volume()) * norm * w);
                        let early = (all_specular && depth <= 2).then(|| {
                            let t = if depth == 2 { [tris[1], tris[0]] } else { tris };
                            (t, depth as u8)
                        });
                        out.contributions.push(Contribution {
                            delay: total / c,
                            energy: self.attenuate(e, total),
                            dir: arrival,
                            early,
                        });
                        out.stats.listener_detections += 1;
                    }
                }
            }
            let Some(hit) = hit else {
                out.stats.escaped += 1;
                break;
            };
            if depth == self.max_listener_depth {
                break;
            }
            let p = pos + dir * hit.distance;
            let info = self.surface(&hit, p, hit.distance);
            if inside == Some(info.mat) {
                let t = hit.distance;
                beta = beta.zip_map(&self.mats[info.mat].damping, |a, m| a * (-m * t).exp());
            }
            length += hit.distance;
            if info.c_d > 0.0 {
                self.connect(rng, out, store, batch_sources, sc, &verts, &info, &hit, p, dir, beta, length, arrival, norm);
            }
            let Some(ev) = self.sample_event(rng, &info, &hit, p, dir) else {
                break;
            };
            beta = beta.mul(&ev.weight);
            let mut v = self.vertex(&info, p, hit.normal, ev.label);
            if ev.label == Label::Diffract {
                length += ev.pos.distance(pos) - hit.distance;
                v.pos = ev.pos;
            }
            if matches!(ev.label, Label::Diffuse | Label::Diffract) {
                l_d = length;
            }
            if ev.label != Label::Specular {
                all_specular = false;
            } else if depth < 2 {
                tris[depth] = hit.triangle;
            }
            verts.push(v);
            inside = ev.inside;
            pos = ev.pos;
            dir = ev.dir;
            if !Self::roulette(rng, &mut beta, 4.0 * PI) {
                break;
            }
        }
    }

    /// Connections from a listener vertex to the source point and to a stored source vertex.
    #[allow(clippy::too_many_arguments)]
    fn connect<R: Rng>(
        &self,
        rng: &mut R,
        out: &mut BatchOutput,
        store: &SourceStore,
        batch_sources: usize,
        sc: &mut Scratch,
        verts: &[PVertex],
        info: &SurfaceInfo,
        hit: &Hit,
        p: Vec3,
        dir: Vec3,
        beta: Spectrum,
        length: f64,
        arrival: Vec3,
        norm: f64,
    ) {
        let scene = self.scene;
        let c = self.speed_of_sound;
        let nf = facing(hit.normal, dir);
        let here = self.vertex(info, p, hit.normal, Label::Diffuse);
        let f_y = self.mats[info.mat].diffuse.mul(&info.nd).scale(1.0 / PI);

        let to_s = self.source - p;
        let d = to_s.norm();
        if d > 0.0 {
            let w_dir = to_s / d;
            if w_dir.dot(nf) > 0.0 && !scene.segment_occluded(p, self.source, VIS_EPS) {
                sc.path.clear();
                sc.path.push(PVertex::endpoint(self.source));
                sc.path.push(here);
                sc.path.extend(verts.iter().rev());
                sc.path.push(PVertex::endpoint(self.listener));
                let w = self.mis.weight(&sc.path, 1, &mut sc.lf, &mut sc.lr);
                if w > 0.0 {
                    let g = w_dir.dot(nf) / (4.0 * PI * d * d);
                    let total = length + d;
                    let e = beta.mul(&f_y).scale(g * norm * w);
                    out.contributions.push(Contribution {
                        delay: total / c,
                        energy: self.attenuate(e, total),
                        dir: arrival,
                        early: None,
                    });
                    out.stats.connections += 1;
                }
            }
        }

        if store.pool.is_empty() || batch_sources == 0 {
            return;
        }
        let pick = &store.pool[rng.random_range(0..store.pool.len())];
        let v = p - pick.vertex.pos;
        let d = v.norm();
        if d <= 0.0 {
            return;
        }
        let w_dir = v / d;
        let nfu = facing(pick.vertex.normal, pick.in_dir);
        if w_dir.dot(nfu) <= 0.0 || (-w_dir).dot(nf) <= 0.0 {
            return;
        }
        if scene.segment_occluded(pick.vertex.pos, p, VIS_EPS) {
            return;
        }
        sc.path.clear();
        sc.path.push(PVertex::endpoint(self.source));
        sc.path.extend_from_slice(&store.paths[pick.path][..pick.depth]);
        sc.path.push(pick.vertex);
        sc.path.push(here);
        sc.path.extend(verts.iter().rev());
        sc.path.push(PVertex::endpoint(self.listener));
        let w = self.mis.weight(&sc.path, pick.depth + 2, &mut sc.lf, &mut sc.lr);
        if w <= 0.0 {
            return;
        }
        let f_u = self.mats[pick.mat].diffuse.mul(&pick.nd).scale(1.0 / PI);
        let g = w_dir.dot(nfu) * (-w_dir).dot(nf) / (d * d);
        let pool_scale = store.pool.len() as f64 / batch_sources as f64;
        let total = pick.length + d + length;
        let e = pick.alpha.mul(&f_u).mul(&f_y).mul(&beta).scale(g * pool_scale * norm * w);
        out.contributions.push(Contribution {
            delay: total / c,
            energy: self.attenuate(e, total),
            dir: arrival,
            early: None,
        });
        out.stats.connections += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diffuse(pos: Vec3, normal: Vec3) -> PVertex {
        PVertex { pos, normal, label: Label::Diffuse, c_d: 1.0, c_s: 0.0, c_t: 0.0, c_e: 0.0 }
    }

    fn mis() -> Mis {
        Mis {
            endpoint_density: 1.0 / (PI * 0.16),
            n_source: 1000.0,
            n_listener: 1000.0,
            max_source_depth: 64,
            max_listener_depth: 8,
        }
    }

    #[test]
    fn weights_partition_unity() {
        let path = vec![
            PVertex::endpoint(Vec3::new(1.0, 1.0, 1.0)),
            diffuse(Vec3::new(2.0, 0.0, 1.2), Vec3::Y),
            diffuse(Vec3::new(4.0, 1.5, 0.7), -Vec3::X),
            diffuse(Vec3::new(2.5, 3.0, 1.0), -Vec3::Y),
            PVertex::endpoint(Vec3::new(3.0, 2.0, 1.5)),
        ];
        let (mut a, mut b) = (Vec::new(), Vec::new());
        let m = mis();
        let total: f64 = (0..=path.len()).map(|s| m.weight(&path, s, &mut a, &mut b)).sum();
        assert!((total - 1.0).abs() < 1e-12, "{total}");
        // s = k + 1 is not a strategy.
        assert_eq!(m.weight(&path, path.len() - 1, &mut a, &mut b), 0.0);
    }

    #[test]
    fn specular_paths_only_use_detectors() {
        let mut v = diffuse(Vec3::new(0.0, 1.5, 1.0), Vec3::X);
        v.label = Label::Specular;
        v.c_s = 1.0;
        let path = vec![PVertex::endpoint(Vec3::new(1.0, 1.0, 1.0)), v, PVertex::endpoint(Vec3::new(1.0, 2.0, 1.0))];
        let (mut a, mut b) = (Vec::new(), Vec::new());
        let m = mis();
        assert_eq!(m.weight(&path, 1, &mut a, &mut b), 0.0);
        let wa = m.weight(&path, 3, &mut a, &mut b);
        let wb = m.weight(&path, 0, &mut a, &mut b);
        assert!((wa - 0.5).abs() < 1e-12 && (wb - 0.5).abs() < 1e-12);
    }

    #[test]
    fn depth_limits_exclude_strategies() {
        let mut m = mis();
        m.max_listener_depth = 1;
        let path = vec![
            PVertex::endpoint(Vec3::new(1.0, 1.0, 1.0)),
            diffuse(Vec3::new(2.0, 0.0, 1.2), Vec3::Y),
            diffuse(Vec3::new(4.0, 1.5, 0.7), -Vec3::X),
            PVertex::endpoint(Vec3::new(3.0, 2.0, 1.5)),
        ];
        let (mut a, mut b) = (Vec::new(), Vec::new());
        assert_eq!(m.weight(&path, 0, &mut a, &mut b), 0.0);
        assert_eq!(m.weight(&path, 1, &mut a, &mut b), 0.0);
        let total: f64 = (0..=path.len()).map(|s| m.weight(&path, s, &mut a, &mut b)).sum();
        assert!((total - 1.0).abs() < 1e-12);
    }

    #[test]
    fn chord_through_center() {
        let (c, tc, b) = sphere_chord(Vec3::ZERO, Vec3::X, 10.0, Vec3::new(5.0, 0.0, 0.0), 0.5).unwrap();
        assert!((c - 1.0).abs() < 1e-12 && (tc - 5.0).abs() < 1e-12 && b < 1e-12);
        assert!(sphere_chord(Vec3::ZERO, Vec3::X, 4.6, Vec3::new(5.0, 0.0, 0.0), 0.5).is_some_and(|x| (x.0 - 0.1).abs() < 1e-9));
        assert!(sphere_chord(Vec3::ZERO, Vec3::Y, 10.0, Vec3::new(5.0, 0.0, 0.0), 0.5).is_none());
    }
}
