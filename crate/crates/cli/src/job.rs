//! Job files, resolved jobs and metadata sidecars.

use std::fs;
use std::path::{Path, PathBuf};

use echotrace::materials::{resolve_assignment, AssignmentPolicy, MaterialDatabase};
use echotrace::propagation::{Mode, ParamsFile, SimulationParams};
use echotrace::scene::{build_scene, load_mesh_with_categories, Scene};
use echotrace::spatial::{Layout, MicrophoneConfig};
use echotrace::{Pose, Vec3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::{context, CliError, CliResult};

pub const JOB_SCHEMA_VERSION: u32 = 1;
pub const SIDECAR_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ListenerPose {
    pub position: [f64; 3],
    /// Anticlockwise from +x, degrees.
    #[serde(default)]
    pub heading_deg: f64,
}

impl ListenerPose {
    pub fn pose(&self) -> Pose {
        Pose::new(vec3(self.position), self.heading_deg.to_radians())
    }
}

pub fn vec3(p: [f64; 3]) -> Vec3 {
    Vec3::new(p[0], p[1], p[2])
}

/// Job file as written by a user. Relative paths are resolved against the file's directory.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    pub schema_version: u32,
    pub scene: PathBuf,
    #[serde(default)]
    pub categories: Option<PathBuf>,
    #[serde(default)]
    pub materials: Option<PathBuf>,
    #[serde(default)]
    pub assignment: AssignmentPolicy,
    #[serde(default)]
    pub params: Option<PathBuf>,
    #[serde(default)]
    pub preset: Option<Mode>,
    pub source: [f64; 3],
    #[serde(default)]
    pub listener: Option<ListenerPose>,
    #[serde(default)]
    pub microphone: Option<MicrophoneConfig>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default)]
    pub trajectory: Option<PathBuf>,
    #[serde(default)]
    pub audio: Option<PathBuf>,
    #[serde(default)]
    pub crossfade: Option<f64>,
}

impl JobConfig {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        let mut job: JobConfig =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if job.schema_version != JOB_SCHEMA_VERSION {
            return Err(CliError::config(format!(
                "{}: job schema_version {} is not supported (expected {JOB_SCHEMA_VERSION})",
                path.display(),
                job.schema_version
            )));
        }
        let base = path.parent().unwrap_or(Path::new("."));
        let rebase = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        rebase(&mut job.scene);
        for p in [&mut job.categories, &mut job.materials, &mut job.params, &mut job.trajectory, &mut job.audio]
            .into_iter()
            .flatten()
        {
            rebase(p);
        }
        Ok(job)
    }
}

/// Geometry and material inputs of a job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneSpec {
    pub mesh: PathBuf,
    #[serde(default)]
    pub categories: Option<PathBuf>,
    /// `None` uses the built-in database.
    #[serde(default)]
    pub materials: Option<PathBuf>,
    #[serde(default)]
    pub assignment: AssignmentPolicy,
}

impl SceneSpec {
    pub fn load(&self, params: &SimulationParams) -> CliResult<Scene> {
        for p in std::iter::once(&self.mesh).chain(&self.categories).chain(&self.materials) {
            if !p.is_file() {
                return Err(CliError::config(format!("{}: file not found", p.display())));
            }
        }
        let load = context(
            load_mesh_with_categories(&self.mesh, self.categories.as_deref(), params.unit_scale),
            &self.mesh,
        )?;
        let db = match &self.materials {
            Some(p) => context(MaterialDatabase::load(p), p)?,
            None => MaterialDatabase::builtin(),
        };
        let table = resolve_assignment(&db, &load.mesh.categories, self.assignment)?;
        let mut scene = build_scene(load.mesh, table)?;
        scene.speed_of_sound = params.speed_of_sound;
        Ok(scene)
    }

    pub fn absolutize(&mut self) {
        abs(&mut self.mesh);
        for p in [&mut self.categories, &mut self.materials].into_iter().flatten() {
            abs(p);
        }
    }
}

fn abs(p: &mut PathBuf) {
    if let Ok(a) = std::path::absolute(&*p) {
        *p = a;
    }
}

/// A fully resolved single-IR job. Stored verbatim in the sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RenderJob {
    pub scene: SceneSpec,
    pub params: ParamsFile,
    pub source: [f64; 3],
    pub listener: ListenerPose,
    pub microphone: MicrophoneConfig,
    pub seed: u64,
}

/// A fully resolved moving-listener job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrajectoryJob {
    pub scene: SceneSpec,
    pub params: ParamsFile,
    pub source: [f64; 3],
    pub trajectory: PathBuf,
    pub audio: PathBuf,
    pub crossfade: f64,
    pub microphone: MicrophoneConfig,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Job {
    RenderIr(RenderJob),
    RenderTrajectory(TrajectoryJob),
}

impl Job {
    pub fn params(&self) -> &ParamsFile {
        match self {
            Job::RenderIr(j) => &j.params,
            Job::RenderTrajectory(j) => &j.params,
        }
    }
}

/// Metadata written next to every rendered WAV; enough to re-run the job.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Sidecar {
    pub schema_version: u32,
    pub wav: String,
    pub sampling_rate: u32,
    pub layout: Layout,
    pub labels: Vec<String>,
    pub samples: usize,
    pub params_hash: String,
    pub job: Job,
}

impl Sidecar {
    pub fn load(path: &Path) -> CliResult<Self> {
        let text = read_text(path)?;
        let s: Sidecar =
            serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))?;
        if s.schema_version != SIDECAR_SCHEMA_VERSION {
            return Err(CliError::config(format!("{}: unsupported sidecar schema_version", path.display())));
        }
        Ok(s)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("sidecar serializes") + "\n"
    }
}

pub(crate) fn read_text(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Resolves a parameter file and/or preset into the stored form.
///
/// The seed replaces `rng_seed`; the thread count is an execution detail and
/// is stored as 0.
pub fn resolve_params(file: Option<&Path>, preset: Option<Mode>, seed: u64) -> CliResult<ParamsFile> {
    let mut p = match file {
        Some(path) => {
            let text = read_text(path)?;
            let pf = context(ParamsFile::from_json(&text), path)?;
            context(pf.resolve(preset.unwrap_or_default()), path)?
        }
        None => SimulationParams::preset(preset.unwrap_or_default()),
    };
    p.rng_seed = seed;
    p.thread_count = 0;
    p.validate()?;
    Ok(ParamsFile::from(&p))
}

/// Raises the indirect SH order to what an ambisonic microphone needs.
pub fn fit_sh_order(mut p: ParamsFile, mic: &MicrophoneConfig) -> ParamsFile {
    if let MicrophoneConfig::Ambisonics { order } = mic {
        if p.indirect_sh_order.unwrap_or(1) < *order {
            log::info!("raising the indirect SH order to {order} for the ambisonic output");
            p.indirect_sh_order = Some(*order);
        }
    }
    p
}

/// Turns the stored form back into runnable parameters.
pub fn runtime_params(stored: &ParamsFile, threads: usize) -> CliResult<SimulationParams> {
    let mut p = stored.resolve(stored.mode.unwrap_or_default())?;
    p.thread_count = threads;
    Ok(p)
}

/// Hex SHA-256 of the canonical JSON of the stored parameters.
pub fn params_hash(stored: &ParamsFile) -> String {
    let mut canon = stored.clone();
    canon.thread_count = Some(0);
    let bytes = serde_json::to_vec(&canon).expect("parameters serialize");
    hex::encode(Sha256::digest(&bytes))
}

/// Inputs common to every job, from flags or a job file.
#[derive(Debug, Clone, Default)]
pub struct JobInputs {
    pub config: Option<PathBuf>,
    pub scene: Option<PathBuf>,
    pub categories: Option<PathBuf>,
    pub materials: Option<PathBuf>,
    pub assignment: Option<AssignmentPolicy>,
    pub params: Option<PathBuf>,
    pub preset: Option<Mode>,
    pub source: Option<[f64; 3]>,
    pub listener: Option<[f64; 3]>,
    pub heading_deg: Option<f64>,
    pub microphone: Option<MicrophoneConfig>,
    pub seed: Option<u64>,
    pub trajectory: Option<PathBuf>,
    pub audio: Option<PathBuf>,
    pub crossfade: Option<f64>,
}

impl JobInputs {
    /// Flags take precedence over the job file.
    fn merged(&self) -> CliResult<JobConfig> {
        let base = match &self.config {
            Some(p) => Some(JobConfig::load(p)?),
            None => None,
        };
        let scene = self
            .scene
            .clone()
            .or(base.as_ref().map(|b| b.scene.clone()))
            .ok_or_else(|| CliError::config("no scene given (use --scene or a job file)"))?;
        let source = self
            .source
            .or(base.as_ref().map(|b| b.source))
            .ok_or_else(|| CliError::config("no source position given"))?;
        let b = base.as_ref();
        let listener = match (self.listener, b.and_then(|b| b.listener.clone())) {
            (Some(p), prev) => Some(ListenerPose {
                position: p,
                heading_deg: self.heading_deg.or(prev.map(|l| l.heading_deg)).unwrap_or(0.0),
            }),
            (None, Some(mut l)) => {
                if let Some(h) = self.heading_deg {
                    l.heading_deg = h;
                }
                Some(l)
            }
            (None, None) => None,
        };
        Ok(JobConfig {
            schema_version: JOB_SCHEMA_VERSION,
            scene,
            categories: self.categories.clone().or(b.and_then(|b| b.categories.clone())),
            materials: self.materials.clone().or(b.and_then(|b| b.materials.clone())),
            assignment: self.assignment.or(b.map(|b| b.assignment)).unwrap_or_default(),
            params: self.params.clone().or(b.and_then(|b| b.params.clone())),
            preset: self.preset.or(b.and_then(|b| b.preset)),
            source,
            listener,
            microphone: self.microphone.clone().or(b.and_then(|b| b.microphone.clone())),
            seed: self.seed.or(b.and_then(|b| b.seed)),
            trajectory: self.trajectory.clone().or(b.and_then(|b| b.trajectory.clone())),
            audio: self.audio.clone().or(b.and_then(|b| b.audio.clone())),
            crossfade: self.crossfade.or(b.and_then(|b| b.crossfade)),
        })
    }

    fn scene_spec(job: &JobConfig) -> SceneSpec {
        let mut s = SceneSpec {
            mesh: job.scene.clone(),
            categories: job.categories.clone(),
            materials: job.materials.clone(),
            assignment: job.assignment,
        };
        s.absolutize();
        s
    }

    pub fn render_job(&self) -> CliResult<RenderJob> {
        let job = self.merged()?;
        let seed = job.seed.unwrap_or(0);
        let listener = job.listener.clone().ok_or_else(|| CliError::config("no listener position given"))?;
        let microphone = job.microphone.clone().unwrap_or(MicrophoneConfig::Mono);
        microphone.validate()?;
        Ok(RenderJob {
            scene: Self::scene_spec(&job),
            params: fit_sh_order(resolve_params(job.params.as_deref(), job.preset, seed)?, &microphone),
            source: job.source,
            listener,
            microphone,
            seed,
        })
    }

    pub fn trajectory_job(&self) -> CliResult<TrajectoryJob> {
        let job = self.merged()?;
        let seed = job.seed.unwrap_or(0);
        let microphone = job.microphone.clone().unwrap_or(MicrophoneConfig::Mono);
        microphone.validate()?;
        let mut trajectory = job.trajectory.clone().ok_or_else(|| CliError::config("no trajectory file given"))?;
        let mut audio = job.audio.clone().ok_or_else(|| CliError::config("no source audio given"))?;
        abs(&mut trajectory);
        abs(&mut audio);
        Ok(TrajectoryJob {
            scene: Self::scene_spec(&job),
            params: fit_sh_order(resolve_params(job.params.as_deref(), job.preset, seed)?, &microphone),
            source: job.source,
            trajectory,
            audio,
            crossfade: job.crossfade.unwrap_or(echotrace::audio::DEFAULT_CROSSFADE),
            microphone,
            seed,
        })
    }
}
