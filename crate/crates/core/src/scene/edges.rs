//! Diffraction edge extraction.
//!
//! Winding normals are taken to point into free space (for a room mesh they
//! face the room interior). An edge diffracts when the free-space angle around
//! it exceeds π: convex corners of objects, reflex corners of rooms, and open
//! boundary edges of thin surfaces.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use log::warn;
use serde::{Deserialize, Serialize};

use crate::geometry::Vec3;

use super::mesh::TriangleMesh;

/// Edges whose free-space wedge angle is not above `π + WEDGE_EPS` are ignored.
pub const WEDGE_EPS: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffractionEdge {
    /// Endpoints, lexicographically ordered.
    pub a: Vec3,
    pub b: Vec3,
    /// Unit winding normals of the adjacent faces. For an open boundary edge
    /// these are the two sides of the single face.
    pub normal_a: Vec3,
    pub normal_b: Vec3,
    /// Free-space (exterior) wedge angle in radians, in `(π, 2π]`.
    pub wedge_angle: f64,
    /// Unit vector perpendicular to the edge pointing into the solid part of the wedge.
    pub into_solid: Vec3,
    /// Adjacent triangle indices (one for a boundary edge).
    pub triangles: Vec<u32>,
}

impl DiffractionEdge {
    pub fn direction(&self) -> Vec3 {
        (self.b - self.a).normalized()
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct EdgeReport {
    /// Edges shared by more than two faces.
    pub non_manifold_skipped: usize,
    /// Two-face edges whose faces disagree on winding.
    pub inconsistent_winding: usize,
}

type Key = [i64; 3];

fn key(p: Vec3) -> Key {
    // Weld on a 1 µm grid so duplicated scan vertices still share edges.
    let q = |x: f64| (x * 1e6).round() as i64;
    [q(p.x), q(p.y), q(p.z)]
}

/// Extracts diffraction edges. Output is sorted and independent of triangle order.
pub fn build_diffraction_edges(mesh: &TriangleMesh) -> (Vec<DiffractionEdge>, EdgeReport) {
    // Undirected edge -> (triangle, whether the triangle traverses it low-to-high).
    let mut map: BTreeMap<(Key, Key), Vec<(u32, bool)>> = BTreeMap::new();
    let mut pos: BTreeMap<Key, Vec3> = BTreeMap::new();
    for t in 0..mesh.triangle_count() {
        let c = mesh.corners(t);
        for i in 0..3 {
            let (p, q) = (c[i], c[(i + 1) % 3]);
            let (kp, kq) = (key(p), key(q));
            if kp == kq {
                continue;
            }
            pos.entry(kp).or_insert(p);
            pos.entry(kq).or_insert(q);
            let (lo, hi, forward) = if kp < kq { (kp, kq, true) } else { (kq, kp, false) };
            map.entry((lo, hi)).or_default().push((t as u32, forward));
        }
    }

    let mut report = EdgeReport::default();
    let mut edges = Vec::new();
    for ((ka, kb), faces) in map {
        let a = pos[&ka];
        let b = pos[&kb];
        let dir = (b - a).normalized();
        match faces.len() {
            1 => {
                let n = mesh.raw_normal(faces[0].0 as usize).normalized();
                edges.push(DiffractionEdge {
                    a,
                    b,
                    normal_a: n,
                    normal_b: -n,
                    wedge_angle: 2.0 * PI,
                    into_solid: face_tangent(mesh, faces[0].0 as usize, a, dir),
                    triangles: vec![faces[0].0],
                });
            }
            2 => {
                let (t1, f1) = faces[0];
                let (t2, f2) = faces[1];
                if f1 == f2 {
                    report.inconsistent_winding += 1;
                    continue;
                }
                let n1 = mesh.raw_normal(t1 as usize).normalized();
                let n2 = mesh.raw_normal(t2 as usize).normalized();
                let angle = free_space_angle(mesh, t1 as usize, t2 as usize, a, dir, n1);
                if angle > PI + WEDGE_EPS {
                    let (ts, na, nb) = if t1 < t2 { (vec![t1, t2], n1, n2) } else { (vec![t2, t1], n2, n1) };
                    edges.push(DiffractionEdge {
                        a,
                        b,
                        normal_a: na,
                        normal_b: nb,
                        wedge_angle: angle,
                        into_solid: (-(n1 + n2)).normalized(),
                        triangles: ts,
                    });
                }
            }
            _ => report.non_manifold_skipped += 1,
        }
    }
    if report.inconsistent_winding > 0 {
        warn!(
            "{} edge(s) join faces with inconsistent winding; surfaces are treated as two-sided",
            report.inconsistent_winding
        );
    }
    if report.non_manifold_skipped > 0 {
        warn!("skipped {} non-manifold edge(s)", report.non_manifold_skipped);
    }
    (edges, report)
}

/// In-plane unit vector on triangle `t`, perpendicular to the edge, pointing
/// from the edge into the face.
fn face_tangent(mesh: &TriangleMesh, t: usize, edge_point: Vec3, dir: Vec3) -> Vec3 {
    let c = mesh.corners(t);
    let centroid = (c[0] + c[1] + c[2]) / 3.0;
    let v = centroid - edge_point;
    (v - dir * v.dot(dir)).normalized()
}

fn free_space_angle(mesh: &TriangleMesh, t1: usize, t2: usize, p: Vec3, dir: Vec3, n1: Vec3) -> f64 {
    let u1 = face_tangent(mesh, t1, p, dir);
    let u2 = face_tangent(mesh, t2, p, dir);
    let phi = u1.dot(u2).clamp(-1.0, 1.0).acos();
    if n1.dot(u2) > 0.0 {
        phi
    } else {
        2.0 * PI - phi
    }
}
