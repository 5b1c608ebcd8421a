//! Acoustic materials, frequency bands and air absorption.

mod air;
mod bands;
mod database;
mod material;

pub use air::AirModel;
pub use bands::{FrequencyBands, Spectrum, MAX_BANDS};
pub use database::{resolve_assignment, AssignmentPolicy, MaterialDatabase, MaterialTable, DATABASE_SCHEMA_VERSION};
pub use material::{band_coefficients, coefficient_at, AcousticMaterial, CoefficientCurve, CoefficientKind};
