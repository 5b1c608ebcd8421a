use std::collections::HashMap;
use std::fs;
use std::path::Path;

use log::warn;

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};

/// Triangles whose area falls below this (m²) are treated as degenerate.
pub const DEGENERATE_AREA: f64 = 1e-12;

/// Indexed triangle mesh in meters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriangleMesh {
    pub vertices: Vec<Vec3>,
    pub triangles: Vec<[u32; 3]>,
    /// One optional category label per triangle.
    pub categories: Vec<Option<String>>,
}

/// Result of loading a mesh file.
#[derive(Debug, Clone)]
pub struct MeshLoad {
    pub mesh: TriangleMesh,
    pub degenerate_dropped: usize,
}

impl TriangleMesh {
    pub fn triangle_count(&self) -> usize {
        self.triangles.len()
    }

    pub fn corners(&self, tri: usize) -> [Vec3; 3] {
        let [a, b, c] = self.triangles[tri];
        [
            self.vertices[a as usize],
            self.vertices[b as usize],
            self.vertices[c as usize],
        ]
    }

    /// Unnormalized winding normal, `(b - a) x (c - a)`.
    pub fn raw_normal(&self, tri: usize) -> Vec3 {
        let [a, b, c] = self.corners(tri);
        (b - a).cross(c - a)
    }

    pub fn area(&self, tri: usize) -> f64 {
        0.5 * self.raw_normal(tri).norm()
    }

    pub fn bounds(&self) -> Aabb {
        let mut b = Aabb::EMPTY;
        for &v in &self.vertices {
            b.grow(v);
        }
        b
    }

    pub fn scale(&mut self, s: f64) {
        for v in &mut self.vertices {
            *v *= s;
        }
    }

    /// Checks index ranges and the label count.
    pub fn validate(&self) -> Result<()> {
        if self.triangles.is_empty() {
            return Err(Error::invalid("mesh has no triangles"));
        }
        if self.categories.len() != self.triangles.len() {
            return Err(Error::invalid(format!(
                "{} category labels for {} triangles",
                self.categories.len(),
                self.triangles.len()
            )));
        }
        let n = self.vertices.len() as u32;
        if let Some(t) = self.triangles.iter().position(|t| t.iter().any(|&i| i >= n)) {
            return Err(Error::invalid(format!("triangle {t} references a missing vertex")));
        }
        Ok(())
    }

    /// Drops zero-area triangles; returns how many were removed.
    pub fn drop_degenerate(&mut self) -> usize {
        let keep: Vec<bool> = (0..self.triangles.len())
            .map(|t| {
                let [a, b, c] = self.triangles[t];
                a != b && b != c && a != c && self.area(t) > DEGENERATE_AREA
            })
            .collect();
        let before = self.triangles.len();
        let mut k = keep.iter();
        self.triangles.retain(|_| *k.next().unwrap());
        let mut k = keep.iter();
        self.categories.retain(|_| *k.next().unwrap());
        before - self.triangles.len()
    }

    /// Serializes to the OBJ subset understood by [`parse_obj`].
    pub fn to_obj(&self) -> String {
        let mut out = String::new();
        for v in &self.vertices {
            out.push_str(&format!("v {} {} {}\n", v.x, v.y, v.z));
        }
        let mut current: Option<&str> = None;
        for (t, tri) in self.triangles.iter().enumerate() {
            let label = self.categories[t].as_deref();
            if label != current {
                if let Some(l) = label {
                    out.push_str(&format!("usemtl {l}\n"));
                }
                current = label;
            }
            out.push_str(&format!("f {} {} {}\n", tri[0] + 1, tri[1] + 1, tri[2] + 1));
        }
        out
    }
}

/// Parses the Wavefront OBJ subset: `v`, `f` (polygons are fan-triangulated,
/// `a/b/c` index forms and negative indices accepted) and `usemtl`, whose name
/// becomes the category label. Other records are ignored.
pub fn parse_obj(text: &str, source_name: &str) -> Result<TriangleMesh> {
    let fmt_err = |line: usize, message: String| Error::Format {
        source_name: source_name.to_string(),
        line,
        message,
    };
    let mut mesh = TriangleMesh::default();
    let mut label: Option<String> = None;
    for (lineno, raw) in text.lines().enumerate() {
        let lineno = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut parts = line.split_whitespace();
        let Some(tag) = parts.next() else { continue };
        match tag {
            "v" => {
                let coords: Vec<f64> = parts
                    .take(3)
                    .map(|p| p.parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| fmt_err(lineno, format!("bad vertex coordinate: {e}")))?;
                if coords.len() != 3 {
                    return Err(fmt_err(lineno, "vertex needs 3 coordinates".into()));
                }
                let v = Vec3::new(coords[0], coords[1], coords[2]);
                if !v.is_finite() {
                    return Err(fmt_err(lineno, "non-finite vertex".into()));
                }
                mesh.vertices.push(v);
            }
            "f" => {
                let nv = mesh.vertices.len() as i64;
                let mut idx = Vec::with_capacity(4);
                for p in parts {
                    let first = p.split('/').next().unwrap_or("");
                    let i: i64 = first
                        .parse()
                        .map_err(|_| fmt_err(lineno, format!("bad face index '{p}'")))?;
                    let resolved = match i {
                        0 => return Err(fmt_err(lineno, "face index 0 is invalid".into())),
                        i if i > 0 => i - 1,
                        i => nv + i,
                    };
                    if resolved < 0 || resolved >= nv {
                        return Err(fmt_err(lineno, format!("face index {i} out of range")));
                    }
                    idx.push(resolved as u32);
                }
                if idx.len() < 3 {
                    return Err(fmt_err(lineno, "face needs at least 3 vertices".into()));
                }
                for k in 1..idx.len() - 1 {
                    mesh.triangles.push([idx[0], idx[k], idx[k + 1]]);
                    mesh.categories.push(label.clone());
                }
            }
            "usemtl" => {
                label = parts.next().map(str::to_string);
            }
            _ => {}
        }
    }
    Ok(mesh)
}

/// Reads a newline-delimited category sidecar, one label per triangle in file order.
/// Empty lines and `-` mean "no label".
pub fn parse_category_sidecar(text: &str) -> Vec<Option<String>> {
    text.lines()
        .map(|l| {
            let l = l.trim();
            if l.is_empty() || l == "-" {
                None
            } else {
                Some(l.to_string())
            }
        })
        .collect()
}

/// Loads an OBJ mesh, applies `unit_scale` and drops degenerate triangles.
pub fn load_mesh(path: &Path, unit_scale: f64) -> Result<MeshLoad> {
    load_mesh_with_categories(path, None, unit_scale)
}

/// Like [`load_mesh`], with labels taken from a sidecar file when given.
pub fn load_mesh_with_categories(
    path: &Path,
    sidecar: Option<&Path>,
    unit_scale: f64,
) -> Result<MeshLoad> {
    if !(unit_scale.is_finite() && unit_scale > 0.0) {
        return Err(Error::invalid(format!("unit scale must be positive, got {unit_scale}")));
    }
    let text = fs::read_to_string(path)?;
    let mut mesh = parse_obj(&text, &path.display().to_string())?;
    if let Some(sc) = sidecar {
        let labels = parse_category_sidecar(&fs::read_to_string(sc)?);
        if labels.len() != mesh.triangles.len() {
            return Err(Error::invalid(format!(
                "category sidecar has {} labels for {} triangles",
                labels.len(),
                mesh.triangles.len()
            )));
        }
        mesh.categories = labels;
    }
    finish_load(mesh, unit_scale)
}

pub(crate) fn finish_load(mut mesh: TriangleMesh, unit_scale: f64) -> Result<MeshLoad> {
    mesh.scale(unit_scale);
    let degenerate_dropped = mesh.drop_degenerate();
    if degenerate_dropped > 0 {
        warn!("dropped {degenerate_dropped} degenerate triangle(s)");
    }
    mesh.validate()?;
    Ok(MeshLoad { mesh, degenerate_dropped })
}

/// Incremental mesh construction with vertex welding on exact coordinates.
#[derive(Default)]
pub struct MeshBuilder {
    mesh: TriangleMesh,
    index: HashMap<[u64; 3], u32>,
}

impl MeshBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn vertex(&mut self, p: Vec3) -> u32 {
        let key = [p.x.to_bits(), p.y.to_bits(), p.z.to_bits()];
        let mesh = &mut self.mesh;
        *self.index.entry(key).or_insert_with(|| {
            mesh.vertices.push(p);
            (mesh.vertices.len() - 1) as u32
        })
    }

    pub fn triangle(&mut self, a: Vec3, b: Vec3, c: Vec3, label: Option<&str>) {
        let t = [self.vertex(a), self.vertex(b), self.vertex(c)];
        self.mesh.triangles.push(t);
        self.mesh.categories.push(label.map(str::to_string));
    }

    /// Two triangles `(p0, p1, p2)` and `(p0, p2, p3)`; the winding normal is
    /// `(p1 - p0) x (p2 - p0)`.
    pub fn quad(&mut self, p: [Vec3; 4], label: Option<&str>) {
        self.triangle(p[0], p[1], p[2], label);
        self.triangle(p[0], p[2], p[3], label);
    }

    pub fn build(self) -> TriangleMesh {
        self.mesh
    }
}

/// Room primitives used by tests, validation suites and dataset generation.
pub mod primitives {
    use super::*;

    /// Closed room made by extruding a counter-clockwise floor outline to `height`,
    /// with winding normals facing into the room. `floor_rects` must tile the
    /// outline and share its vertices, as `[(x0, y0), (x1, y1)]` corner pairs.
    pub fn extruded_room(outline: &[(f64, f64)], floor_rects: &[[(f64, f64); 2]], height: f64) -> TriangleMesh {
        let mut b = MeshBuilder::new();
        for r in floor_rects {
            let [(x0, y0), (x1, y1)] = *r;
            b.quad(
                [
                    Vec3::new(x0, y0, 0.0),
                    Vec3::new(x1, y0, 0.0),
                    Vec3::new(x1, y1, 0.0),
                    Vec3::new(x0, y1, 0.0),
                ],
                Some("floor"),
            );
            b.quad(
                [
                    Vec3::new(x0, y0, height),
                    Vec3::new(x0, y1, height),
                    Vec3::new(x1, y1, height),
                    Vec3::new(x1, y0, height),
                ],
                Some("ceiling"),
            );
        }
        for i in 0..outline.len() {
            let (px, py) = outline[i];
            let (qx, qy) = outline[(i + 1) % outline.len()];
            b.quad(
                [
                    Vec3::new(px, py, 0.0),
                    Vec3::new(px, py, height),
                    Vec3::new(qx, qy, height),
                    Vec3::new(qx, qy, 0.0),
                ],
                Some("wall"),
            );
        }
        b.build()
    }

    /// Shoebox room `[0, lx] x [0, ly] x [0, lz]`, 12 triangles, normals inward.
    pub fn shoebox(lx: f64, ly: f64, lz: f64) -> TriangleMesh {
        extruded_room(
            &[(0.0, 0.0), (lx, 0.0), (lx, ly), (0.0, ly)],
            &[[(0.0, 0.0), (lx, ly)]],
            lz,
        )
    }

    /// L-shaped room: the `[b, lx] x [a, ly]` corner is cut away, leaving a
    /// reflex column edge at `(b, a)`.
    pub fn l_room(lx: f64, ly: f64, a: f64, b: f64, height: f64) -> TriangleMesh {
        extruded_room(
            &[
                (0.0, 0.0),
                (b, 0.0),
                (lx, 0.0),
                (lx, a),
                (b, a),
                (b, ly),
                (0.0, ly),
                (0.0, a),
            ],
            &[
                [(0.0, 0.0), (b, a)],
                [(b, 0.0), (lx, a)],
                [(0.0, a), (b, ly)],
            ],
            height,
        )
    }

    /// Solid unit-style cube `[0, s]^3` with outward normals.
    pub fn cube(s: f64) -> TriangleMesh {
        let mut m = shoebox(s, s, s);
        for t in &mut m.triangles {
            t.swap(1, 2);
        }
        m
    }

    /// Free-standing rectangular panel in the plane `x = x0`, spanning
    /// `y in [y0, y1]`, `z in [z0, z1]`.
    pub fn panel_x(x0: f64, y0: f64, y1: f64, z0: f64, z1: f64) -> TriangleMesh {
        let mut b = MeshBuilder::new();
        b.quad(
            [
                Vec3::new(x0, y0, z0),
                Vec3::new(x0, y1, z0),
                Vec3::new(x0, y1, z1),
                Vec3::new(x0, y0, z1),
            ],
            Some("wall"),
        );
        b.build()
    }

    /// Concatenate meshes.
    pub fn merge(parts: &[TriangleMesh]) -> TriangleMesh {
        let mut out = TriangleMesh::default();
        for p in parts {
            let base = out.vertices.len() as u32;
            out.vertices.extend_from_slice(&p.vertices);
            out.triangles
                .extend(p.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
            out.categories.extend(p.categories.iter().cloned());
        }
        out
    }
}
