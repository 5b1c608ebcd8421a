use std::fs;
use std::path::{Path, PathBuf};

use echotrace::audio::{render_trajectory as trajectory_render, resample, write_ir_wav, AudioClip, StepInfo, Trajectory};
use echotrace::metrics::{analyze, relative_rt60_error, schroeder_edc, AcousticSummary, MetricsOptions, RelativeError};
use echotrace::spatial::{render_ir as simulate_ir, ImpulseResponse};
use serde::{Deserialize, Serialize};

use crate::job::{params_hash, read_text, runtime_params, vec3, Job, RenderJob, Sidecar, TrajectoryJob, SIDECAR_SCHEMA_VERSION};
use crate::{context, CliError, CliResult};

fn ensure_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::config(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> CliResult<()> {
    fs::write(path, text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

/// Paths of a written render.
#[derive(Debug, Clone)]
pub struct Written {
    pub wav: PathBuf,
    pub sidecar: PathBuf,
    pub meta: Sidecar,
}

fn write_outputs(out: &Path, stem: &str, ir: &ImpulseResponse, job: Job) -> CliResult<Written> {
    ensure_dir(out)?;
    let wav = out.join(format!("{stem}.wav"));
    context(write_ir_wav(&wav, ir), &wav)?;
    let meta = Sidecar {
        schema_version: SIDECAR_SCHEMA_VERSION,
        wav: format!("{stem}.wav"),
        sampling_rate: ir.sampling_rate,
        layout: ir.layout,
        labels: ir.labels.clone(),
        samples: ir.len(),
        params_hash: params_hash(job.params()),
        job,
    };
    let sidecar = out.join(format!("{stem}.json"));
    write_text(&sidecar, &meta.to_json())?;
    Ok(Written { wav, sidecar, meta })
}

/// Simulates one impulse response and writes `<stem>.wav` and `<stem>.json` to `out`.
pub fn render_ir(job: &RenderJob, out: &Path, stem: &str, threads: usize) -> CliResult<Written> {
    let params = runtime_params(&job.params, threads)?;
    let scene = job.scene.load(&params)?;
    let (ir, _) = simulate_ir(&scene, vec3(job.source), &job.listener.pose(), &job.microphone, &params, job.seed)
        .map_err(simulation_error)?;
    write_outputs(out, stem, &ir, Job::RenderIr(job.clone()))
}

fn simulation_error(e: echotrace::Error) -> CliError {
    let mut err = CliError::from(e);
    if err.code == crate::ExitCode::Config {
        return err;
    }
    err.code = crate::ExitCode::Simulation;
    err
}

/// Renders the source audio along a trajectory and writes `<stem>.wav`, `<stem>.json`
/// and, with `dump_steps`, `<stem>.steps.json`.
pub fn render_trajectory(
    job: &TrajectoryJob,
    out: &Path,
    stem: &str,
    threads: usize,
    dump_steps: bool,
) -> CliResult<(Written, Vec<StepInfo>)> {
    let params = runtime_params(&job.params, threads)?;
    let scene = job.scene.load(&params)?;
    let text = read_text(&job.trajectory)?;
    let traj = context(
        Trajectory::parse(&text, &job.trajectory.display().to_string(), job.crossfade),
        &job.trajectory,
    )?;
    if !job.audio.is_file() {
        return Err(CliError::config(format!("{}: file not found", job.audio.display())));
    }
    let mut source = context(AudioClip::read_wav(&job.audio), &job.audio)?;
    if source.channel_count() > 1 {
        log::warn!("{} has {} channels; mixing down to mono", job.audio.display(), source.channel_count());
        source = source.to_mono();
    }
    if source.sampling_rate != params.sampling_rate {
        log::warn!("resampling source from {} Hz to {} Hz", source.sampling_rate, params.sampling_rate);
        source = resample(&source, params.sampling_rate)?;
    }
    let r = trajectory_render(&source, &scene, vec3(job.source), &traj, &params, &job.microphone, job.seed)
        .map_err(simulation_error)?;
    let ir = ImpulseResponse {
        sampling_rate: r.audio.sampling_rate,
        layout: r.irs[0].layout,
        labels: r.irs[0].labels.clone(),
        channels: r.audio.channels,
    };
    let written = write_outputs(out, stem, &ir, Job::RenderTrajectory(job.clone()))?;
    if dump_steps {
        let path = out.join(format!("{stem}.steps.json"));
        write_text(&path, &(serde_json::to_string_pretty(&r.steps).expect("steps serialize") + "\n"))?;
    }
    Ok((written, r.steps))
}

/// Re-runs the job recorded in a sidecar.
pub fn rerun(sidecar: &Path, out: &Path, threads: usize) -> CliResult<Written> {
    let meta = Sidecar::load(sidecar)?;
    let stem = meta.wav.strip_suffix(".wav").unwrap_or(&meta.wav).to_string();
    match &meta.job {
        Job::RenderIr(j) => render_ir(j, out, &stem, threads),
        Job::RenderTrajectory(j) => render_trajectory(j, out, &stem, threads, false).map(|(w, _)| w),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IrReport {
    pub file: String,
    pub sampling_rate: u32,
    /// Channel that was analysed.
    pub channel: usize,
    #[serde(flatten)]
    pub summary: AcousticSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: echotrace::metrics::Rt60Method,
    pub direct_window_s: f64,
    pub irs: Vec<IrReport>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reference: Option<Vec<IrReport>>,
    /// Broadband RT60 of `irs` relative to `reference`.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub relative_rt60_error: Option<RelativeError>,
}

fn analyze_file(path: &Path, opts: &MetricsOptions, channel: usize, edc_dir: Option<&Path>) -> CliResult<IrReport> {
    if !path.is_file() {
        return Err(CliError::config(format!("{}: file not found", path.display())));
    }
    let clip = context(AudioClip::read_wav(path), path)?;
    let x = clip
        .channels
        .get(channel)
        .ok_or_else(|| CliError::config(format!("{}: no channel {channel}", path.display())))?;
    let summary = analyze(x, clip.sampling_rate, opts);
    if let Some(dir) = edc_dir {
        ensure_dir(dir)?;
        let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "ir".into());
        let csv = schroeder_edc(x, clip.sampling_rate).map(|e| e.to_csv()).unwrap_or_else(|| "time_s,edc_db\n".into());
        write_text(&dir.join(format!("{stem}.edc.csv")), &csv)?;
    }
    Ok(IrReport { file: path.display().to_string(), sampling_rate: clip.sampling_rate, channel, summary })
}

/// RT60/DRR of every file, plus the relative RT60 error against `reference` when given.
pub fn metrics(
    files: &[PathBuf],
    reference: Option<&[PathBuf]>,
    opts: &MetricsOptions,
    channel: usize,
    edc_dir: Option<&Path>,
) -> CliResult<MetricsReport> {
    if files.is_empty() {
        return Err(CliError::config("no impulse responses given"));
    }
    let irs = files.iter().map(|f| analyze_file(f, opts, channel, edc_dir)).collect::<CliResult<Vec<_>>>()?;
    let (reference, relative) = match reference {
        None => (None, None),
        Some(refs) => {
            if refs.len() != files.len() {
                return Err(CliError::config(format!("{} files against {} reference files", files.len(), refs.len())));
            }
            let r = refs.iter().map(|f| analyze_file(f, opts, channel, None)).collect::<CliResult<Vec<_>>>()?;
            let a: Vec<Option<f64>> = irs.iter().map(|i| i.summary.rt60.seconds).collect();
            let b: Vec<Option<f64>> = r.iter().map(|i| i.summary.rt60.seconds).collect();
            let rel = relative_rt60_error(&a, &b).map_err(|e| CliError::simulation(e.to_string()))?;
            (Some(r), Some(rel))
        }
    };
    Ok(MetricsReport {
        method: opts.method,
        direct_window_s: opts.direct_window,
        irs,
        reference,
        relative_rt60_error: relative,
    })
}
