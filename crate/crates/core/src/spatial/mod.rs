//! Spatial rendering: spherical harmonics, band filters, the head model and
//! conversion of energy histograms into pressure impulse responses.

pub mod filterbank;
pub mod head;
mod render;
pub mod sh;

pub use head::HeadModel;
pub use render::{
    capsule_seed, direction_from_degrees, pan_gains, render_array, render_ir, synthesize_pressure, to_ambisonic,
    to_binaural, ImpulseResponse, Layout, MicrophoneConfig, Renderer,
};
