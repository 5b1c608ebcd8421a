//! Audio plumbing: clips and WAV files, convolution, resampling and
//! rendering along a listener trajectory with crossfades between steps.

mod clip;
mod convolve;
mod resample;
mod trajectory;

pub use clip::{write_ir_wav, AudioClip};
pub use convolve::{convolve, convolve_slices, OverlapAdd};
pub use resample::{resample, MAX_RATE, MIN_RATE};
pub use trajectory::{
    crossfade_weight, render_trajectory, render_with_irs, StepInfo, Trajectory, TrajectoryRender, DEFAULT_CROSSFADE,
    DEFAULT_STEP,
};
