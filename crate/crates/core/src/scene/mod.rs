//! Triangle scenes: mesh loading, acceleration structure, materials and
//! diffraction edges.

mod bvh;
mod edges;
mod mesh;

use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::materials::{band_coefficients, AcousticMaterial, CoefficientKind, FrequencyBands, MaterialTable, Spectrum};

pub use bvh::Bvh;
pub use edges::{build_diffraction_edges, DiffractionEdge, EdgeReport, WEDGE_EPS};
pub use mesh::{
    load_mesh, load_mesh_with_categories, parse_category_sidecar, parse_obj, primitives, MeshBuilder, MeshLoad,
    TriangleMesh, DEGENERATE_AREA,
};

pub const DEFAULT_SPEED_OF_SOUND: f64 = 343.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    /// Unit direction.
    pub direction: Vec3,
}

impl Ray {
    /// Normalizes `direction`.
    pub fn new(origin: Vec3, direction: Vec3) -> Ray {
        Ray { origin, direction: direction.normalized() }
    }

    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub triangle: u32,
    pub distance: f64,
    /// Weights of the three corners.
    pub barycentric: [f64; 3],
    /// Unit geometric normal from the triangle winding.
    pub normal: Vec3,
}

impl Hit {
    /// The normal flipped to face the incoming ray.
    pub fn facing_normal(&self, dir: Vec3) -> Vec3 {
        if self.normal.dot(dir) > 0.0 {
            -self.normal
        } else {
            self.normal
        }
    }
}

/// Plane `normal · p = offset` with a sign convention that makes coplanar
/// triangles with opposite windings compare equal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Plane {
    pub normal: Vec3,
    pub offset: f64,
}

impl Plane {
    pub fn canonical(normal: Vec3, point: Vec3) -> Plane {
        let n = normal.normalized();
        let flip = if n.x.abs() > 1e-9 {
            n.x < 0.0
        } else if n.y.abs() > 1e-9 {
            n.y < 0.0
        } else {
            n.z < 0.0
        };
        let n = if flip { -n } else { n };
        Plane { normal: n, offset: n.dot(point) }
    }

    pub fn approx_eq(&self, o: &Plane, tol: f64) -> bool {
        (self.normal - o.normal).norm() < tol && (self.offset - o.offset).abs() < tol
    }

    pub fn mirror(&self, p: Vec3) -> Vec3 {
        p - self.normal * (2.0 * (self.normal.dot(p) - self.offset))
    }
}

/// Band-evaluated coefficients for every material of a scene.
#[derive(Debug, Clone, PartialEq)]
pub struct BandTable {
    pub absorption: Vec<Spectrum>,
    pub scattering: Vec<Spectrum>,
    pub transmission: Vec<Spectrum>,
    /// Intensity damping per metre inside the material (`exp(-m d)`).
    pub damping: Vec<Spectrum>,
}

pub struct Scene {
    mesh: TriangleMesh,
    materials: Vec<AcousticMaterial>,
    material_names: Vec<String>,
    material_of: Vec<u32>,
    bvh: Bvh,
    edges: Vec<DiffractionEdge>,
    edge_report: EdgeReport,
    tri_edges: Vec<Vec<u32>>,
    planes: Vec<Plane>,
    normals: Vec<Vec3>,
    bounds: Aabb,
    /// Nominal speed of sound. Simulations use `SimulationParams::speed_of_sound`.
    pub speed_of_sound: f64,
    band_cache: Mutex<Vec<(FrequencyBands, Arc<BandTable>)>>,
}

impl std::fmt::Debug for Scene {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Scene")
            .field("triangles", &self.mesh.triangle_count())
            .field("materials", &self.materials.len())
            .field("edges", &self.edges.len())
            .field("speed_of_sound", &self.speed_of_sound)
            .finish()
    }
}

/// Builds the acceleration structure and diffraction edges for `mesh`.
pub fn build_scene(mesh: TriangleMesh, table: MaterialTable) -> Result<Scene> {
    mesh.validate()?;
    let n = mesh.triangle_count();
    if n == 0 {
        return Err(Error::invalid("scene has no triangles"));
    }
    if table.per_triangle.len() != n {
        return Err(Error::config(format!(
            "material table covers {} triangles, mesh has {n}",
            table.per_triangle.len()
        )));
    }
    if let Some(&bad) = table.per_triangle.iter().find(|&&i| i as usize >= table.materials.len()) {
        return Err(Error::config(format!("material index {bad} out of range")));
    }
    for (i, m) in table.materials.iter().enumerate() {
        m.validate().map_err(|e| Error::config(format!("material {i}: {e}")))?;
    }
    let bvh = Bvh::build(&mesh);
    let (edges, edge_report) = build_diffraction_edges(&mesh);
    let mut tri_edges = vec![Vec::new(); n];
    for (ei, e) in edges.iter().enumerate() {
        for &t in &e.triangles {
            tri_edges[t as usize].push(ei as u32);
        }
    }
    let normals: Vec<Vec3> = (0..n).map(|t| mesh.raw_normal(t).normalized()).collect();
    let planes = (0..n).map(|t| Plane::canonical(normals[t], mesh.corners(t)[0])).collect();
    let bounds = mesh.bounds();
    Ok(Scene {
        mesh,
        materials: table.materials,
        material_names: table.names,
        material_of: table.per_triangle,
        bvh,
        edges,
        edge_report,
        tri_edges,
        planes,
        normals,
        bounds,
        speed_of_sound: DEFAULT_SPEED_OF_SOUND,
        band_cache: Mutex::new(Vec::new()),
    })
}

impl Scene {
    pub fn mesh(&self) -> &TriangleMesh {
        &self.mesh
    }

    pub fn bvh(&self) -> &Bvh {
        &self.bvh
    }

    pub fn bounds(&self) -> Aabb {
        self.bounds
    }

    pub fn triangle_count(&self) -> usize {
        self.mesh.triangle_count()
    }

    pub fn materials(&self) -> &[AcousticMaterial] {
        &self.materials
    }

    pub fn material_names(&self) -> &[String] {
        &self.material_names
    }

    pub fn material_index(&self, tri: u32) -> u32 {
        self.material_of[tri as usize]
    }

    pub fn material_of(&self, tri: u32) -> &AcousticMaterial {
        &self.materials[self.material_of[tri as usize] as usize]
    }

    pub fn diffraction_edges(&self) -> &[DiffractionEdge] {
        &self.edges
    }

    pub fn edge_report(&self) -> &EdgeReport {
        &self.edge_report
    }

    /// Diffraction edges adjacent to triangle `tri`.
    pub fn edges_of(&self, tri: u32) -> &[u32] {
        &self.tri_edges[tri as usize]
    }

    pub fn plane(&self, tri: u32) -> &Plane {
        &self.planes[tri as usize]
    }

    pub fn normal(&self, tri: u32) -> Vec3 {
        self.normals[tri as usize]
    }

    /// Nearest hit with `0 < distance <= max_distance`.
    pub fn intersect(&self, ray: &Ray, max_distance: f64) -> Option<Hit> {
        self.intersect_from(ray, 0.0, max_distance)
    }

    /// Nearest hit with `t_min < distance <= max_distance`.
    pub fn intersect_from(&self, ray: &Ray, t_min: f64, max_distance: f64) -> Option<Hit> {
        let h = self.bvh.nearest(ray.origin, ray.direction, t_min, max_distance)?;
        Some(self.make_hit(h.tri, h.t, h.u, h.v))
    }

    /// Exhaustive reference intersection over every triangle.
    pub fn intersect_brute_force(&self, ray: &Ray, max_distance: f64) -> Option<Hit> {
        let mut best: Option<(u32, f64, f64, f64)> = None;
        for t in 0..self.triangle_count() {
            if let Some((d, u, v)) = self.bvh.tri(t).intersect(ray.origin, ray.direction, 0.0) {
                if d <= max_distance && best.is_none_or(|b| d < b.1) {
                    best = Some((t as u32, d, u, v));
                }
            }
        }
        best.map(|(t, d, u, v)| self.make_hit(t, d, u, v))
    }

    /// True when the open segment between `a` and `b` is blocked, ignoring
    /// `eps` at both ends.
    pub fn segment_occluded(&self, a: Vec3, b: Vec3, eps: f64) -> bool {
        let d = b - a;
        let len = d.norm();
        if len <= 2.0 * eps {
            return false;
        }
        self.bvh.occluded(a, d / len, eps, len - eps)
    }

    fn make_hit(&self, tri: u32, t: f64, u: f64, v: f64) -> Hit {
        Hit { triangle: tri, distance: t, barycentric: [1.0 - u - v, u, v], normal: self.normals[tri as usize] }
    }

    /// Band coefficients for every material, cached per band layout.
    pub fn band_table(&self, bands: &FrequencyBands) -> Arc<BandTable> {
        let mut cache = self.band_cache.lock().expect("band cache poisoned");
        if let Some((_, t)) = cache.iter().find(|(b, _)| b == bands) {
            return t.clone();
        }
        let eval = |k| self.materials.iter().map(|m| band_coefficients(m, k, bands)).collect::<Vec<_>>();
        let table = Arc::new(BandTable {
            absorption: eval(CoefficientKind::Absorption),
            scattering: eval(CoefficientKind::Scattering),
            transmission: eval(CoefficientKind::Transmission),
            damping: eval(CoefficientKind::Damping)
                .into_iter()
                .map(|s| s.map(|db| db * std::f64::consts::LN_10 / 10.0))
                .collect(),
        });
        cache.push((bands.clone(), table.clone()));
        table
    }
}
