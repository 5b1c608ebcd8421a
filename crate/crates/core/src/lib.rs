//! Geometric acoustics: bidirectional path tracing of sound energy through
//! triangle scenes, spatial rendering of the resulting impulse responses,
//! and room-acoustic metrics.

pub mod audio;
pub mod error;
pub mod geometry;
pub mod materials;
pub mod metrics;
pub mod oracle;
pub mod propagation;
pub mod scene;
pub mod spatial;

pub use error::{Error, Result};
pub use geometry::{Pose, Vec3};
