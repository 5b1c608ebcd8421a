#![allow(dead_code)]

use echotrace::materials::{AcousticMaterial, MaterialTable};
use echotrace::propagation::SimulationParams;
use echotrace::scene::{build_scene, primitives, Scene, TriangleMesh};
use echotrace::Vec3;

pub fn uniform_scene(mesh: TriangleMesh, absorption: f64, scattering: f64) -> Scene {
    let n = mesh.triangle_count();
    let table = MaterialTable::uniform(AcousticMaterial::constant(absorption, scattering, 0.0), n);
    build_scene(mesh, table).unwrap()
}

pub fn shoebox(dims: Vec3, absorption: f64, scattering: f64) -> Scene {
    uniform_scene(primitives::shoebox(dims.x, dims.y, dims.z), absorption, scattering)
}

/// Only geometric spreading and wall absorption.
pub fn plain_params(source_rays: usize, listener_rays: usize) -> SimulationParams {
    let mut p = SimulationParams::default();
    p.num_source_rays = source_rays;
    p.num_listener_rays = listener_rays;
    p.air = None;
    p.stages.diffraction = false;
    p.stages.transmission = false;
    p.max_ir_seconds = 1.0;
    p
}
