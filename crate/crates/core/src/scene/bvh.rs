//! Binned-SAH bounding volume hierarchy over triangles.

use crate::geometry::{Aabb, Vec3};

use super::mesh::TriangleMesh;

const LEAF_SIZE: usize = 4;
const BINS: usize = 12;

/// Precomputed triangle for intersection.
#[derive(Debug, Clone, Copy)]
pub(crate) struct TriData {
    pub v0: Vec3,
    pub e1: Vec3,
    pub e2: Vec3,
}

impl TriData {
    /// Two-sided Möller–Trumbore. Returns `(t, u, v)` with `t > t_min`.
    #[inline]
    pub fn intersect(&self, origin: Vec3, dir: Vec3, t_min: f64) -> Option<(f64, f64, f64)> {
        let p = dir.cross(self.e2);
        let det = self.e1.dot(p);
        if det.abs() < 1e-14 {
            return None;
        }
        let inv = 1.0 / det;
        let s = origin - self.v0;
        let u = s.dot(p) * inv;
        if !(0.0..=1.0).contains(&u) {
            return None;
        }
        let q = s.cross(self.e1);
        let v = dir.dot(q) * inv;
        if v < 0.0 || u + v > 1.0 {
            return None;
        }
        let t = self.e2.dot(q) * inv;
        (t > t_min).then_some((t, u, v))
    }
}

#[derive(Debug, Clone, Copy)]
struct Node {
    bounds: Aabb,
    /// Leaf: first index into `order`; interior: index of the right child
    /// (the left child is always `self + 1`).
    offset: u32,
    /// Number of triangles for a leaf, 0 for interior nodes.
    count: u32,
}

/// Nearest-hit record produced by the traversal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) struct RawHit {
    pub tri: u32,
    pub t: f64,
    pub u: f64,
    pub v: f64,
}

#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<Node>,
    order: Vec<u32>,
    tris: Vec<TriData>,
}

struct BuildPrim {
    bounds: Aabb,
    centroid: Vec3,
    index: u32,
}

impl Bvh {
    pub fn build(mesh: &TriangleMesh) -> Bvh {
        let tris: Vec<TriData> = (0..mesh.triangle_count())
            .map(|t| {
                let [a, b, c] = mesh.corners(t);
                TriData { v0: a, e1: b - a, e2: c - a }
            })
            .collect();
        let mut prims: Vec<BuildPrim> = (0..mesh.triangle_count())
            .map(|t| {
                let mut b = Aabb::EMPTY;
                for p in mesh.corners(t) {
                    b.grow(p);
                }
                BuildPrim { bounds: b, centroid: b.centroid(), index: t as u32 }
            })
            .collect();
        let mut nodes = Vec::with_capacity(2 * prims.len().max(1));
        if !prims.is_empty() {
            let n = prims.len();
            build_recursive(&mut prims, 0, n, &mut nodes);
        }
        let order = prims.iter().map(|p| p.index).collect();
        Bvh { nodes, order, tris }
    }

    pub fn triangle_count(&self) -> usize {
        self.tris.len()
    }

    /// Triangle indices in leaf order; each appears exactly once.
    pub fn leaf_triangles(&self) -> Vec<u32> {
        let mut out = Vec::with_capacity(self.order.len());
        for n in &self.nodes {
            if n.count > 0 {
                out.extend_from_slice(&self.order[n.offset as usize..(n.offset + n.count) as usize]);
            }
        }
        out
    }

    pub(crate) fn tri(&self, i: usize) -> &TriData {
        &self.tris[i]
    }

    /// Nearest hit with `t_min < t <= t_max`. Ties on distance go to the
    /// lower triangle index so the result matches an exhaustive scan.
    pub(crate) fn nearest(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> Option<RawHit> {
        if self.nodes.is_empty() {
            return None;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut best: Option<RawHit> = None;
        let mut limit = t_max;
        let mut stack = [0u32; 64];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let idx = stack[sp];
            let node = &self.nodes[idx as usize];
            if node.bounds.hit(origin, inv, limit).is_none() {
                continue;
            }
            if node.count > 0 {
                let start = node.offset as usize;
                for &ti in &self.order[start..start + node.count as usize] {
                    if let Some((t, u, v)) = self.tris[ti as usize].intersect(origin, dir, t_min) {
                        let better = match best {
                            None => t <= limit,
                            Some(b) => t < b.t || (t == b.t && ti < b.tri),
                        };
                        if better {
                            best = Some(RawHit { tri: ti, t, u, v });
                            limit = t;
                        }
                    }
                }
            } else {
                let left = idx + 1;
                let right = node.offset;
                // Visit the nearer child first.
                let dl = self.nodes[left as usize].bounds.hit(origin, inv, limit);
                let dr = self.nodes[right as usize].bounds.hit(origin, inv, limit);
                match (dl, dr) {
                    (Some(a), Some(b)) => {
                        let (first, second) = if a <= b { (left, right) } else { (right, left) };
                        stack[sp] = second;
                        stack[sp + 1] = first;
                        sp += 2;
                    }
                    (Some(_), None) => {
                        stack[sp] = left;
                        sp += 1;
                    }
                    (None, Some(_)) => {
                        stack[sp] = right;
                        sp += 1;
                    }
                    (None, None) => {}
                }
            }
        }
        best
    }

    /// True when any triangle lies strictly between `t_min` and `t_max`.
    pub(crate) fn occluded(&self, origin: Vec3, dir: Vec3, t_min: f64, t_max: f64) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let inv = Vec3::new(1.0 / dir.x, 1.0 / dir.y, 1.0 / dir.z);
        let mut stack = [0u32; 64];
        let mut sp = 1usize;
        while sp > 0 {
            sp -= 1;
            let ni = stack[sp];
            let node = &self.nodes[ni as usize];
            if node.bounds.hit(origin, inv, t_max).is_none() {
                continue;
            }
            if node.count > 0 {
                let start = node.offset as usize;
                for &ti in &self.order[start..start + node.count as usize] {
                    if let Some((t, _, _)) = self.tris[ti as usize].intersect(origin, dir, t_min) {
                        if t < t_max {
                            return true;
                        }
                    }
                }
            } else {
                stack[sp] = ni + 1;
                stack[sp + 1] = node.offset;
                sp += 2;
            }
        }
        false
    }
}

fn build_recursive(prims: &mut [BuildPrim], start: usize, end: usize, nodes: &mut Vec<Node>) -> u32 {
    let node_index = nodes.len() as u32;
    let mut bounds = Aabb::EMPTY;
    let mut cbounds = Aabb::EMPTY;
    for p in &prims[start..end] {
        bounds = bounds.union(&p.bounds);
        cbounds.grow(p.centroid);
    }
    nodes.push(Node { bounds, offset: start as u32, count: (end - start) as u32 });
    let n = end - start;
    if n <= LEAF_SIZE {
        return node_index;
    }

    let extent = cbounds.extent();
    let axis = extent.max_axis();
    let split = if extent[axis] <= 0.0 {
        None
    } else {
        sah_split(&prims[start..end], &cbounds, axis, bounds.surface_area())
    };
    let mid = match split {
        Some(bin) => {
            let lo = cbounds.min[axis];
            let scale = BINS as f64 / extent[axis];
            let slice = &mut prims[start..end];
            let mut i = 0;
            for j in 0..slice.len() {
                let b = (((slice[j].centroid[axis] - lo) * scale) as usize).min(BINS - 1);
                if b <= bin {
                    slice.swap(i, j);
                    i += 1;
                }
            }
            start + i
        }
        None => {
            if extent[axis] <= 0.0 && n <= 4 * LEAF_SIZE {
                return node_index;
            }
            // Median split keeps the tree balanced when SAH finds nothing better.
            prims[start..end].sort_by(|a, b| {
                a.centroid[axis]
                    .partial_cmp(&b.centroid[axis])
                    .unwrap()
                    .then(a.index.cmp(&b.index))
            });
            start + n / 2
        }
    };
    if mid == start || mid == end {
        return node_index;
    }
    build_recursive(prims, start, mid, nodes);
    let right = build_recursive(prims, mid, end, nodes);
    let node = &mut nodes[node_index as usize];
    node.offset = right;
    node.count = 0;
    node_index
}

/// Returns the last bin of the left side, or `None` when a leaf is cheaper.
fn sah_split(prims: &[BuildPrim], cbounds: &Aabb, axis: usize, parent_area: f64) -> Option<usize> {
    let mut counts = [0usize; BINS];
    let mut boxes = [Aabb::EMPTY; BINS];
    let lo = cbounds.min[axis];
    let scale = BINS as f64 / cbounds.extent()[axis];
    for p in prims {
        let b = (((p.centroid[axis] - lo) * scale) as usize).min(BINS - 1);
        counts[b] += 1;
        boxes[b] = boxes[b].union(&p.bounds);
    }
    let mut best = None;
    let mut best_cost = prims.len() as f64;
    for split in 0..BINS - 1 {
        let (mut lb, mut rb) = (Aabb::EMPTY, Aabb::EMPTY);
        let (mut lc, mut rc) = (0usize, 0usize);
        for b in 0..=split {
            lb = lb.union(&boxes[b]);
            lc += counts[b];
        }
        for b in split + 1..BINS {
            rb = rb.union(&boxes[b]);
            rc += counts[b];
        }
        if lc == 0 || rc == 0 {
            continue;
        }
        let cost = 0.125
            + (lc as f64 * lb.surface_area() + rc as f64 * rb.surface_area()) / parent_area.max(1e-300);
        if cost < best_cost {
            best_cost = cost;
            best = Some(split);
        }
    }
    if best.is_none() && prims.len() > LEAF_SIZE * 4 {
        // Too many primitives for one leaf: split at the centroid midpoint.
        return Some(BINS / 2 - 1).filter(|&s| {
            let left = prims
                .iter()
                .filter(|p| ((((p.centroid[axis] - lo) * scale) as usize).min(BINS - 1)) <= s)
                .count();
            left > 0 && left < prims.len()
        });
    }
    best
}
