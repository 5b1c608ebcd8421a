use std::path::{Path, PathBuf};
use std::process;

use clap::{Args, Parser, Subcommand};
use echotrace::metrics::{MetricsOptions, Rt60Method, DEFAULT_DIRECT_WINDOW};
use echotrace::propagation::Mode;
use echotrace::spatial::MicrophoneConfig;
use echotrace_cli::dataset::{gen_dataset, DatasetOptions, DEFAULT_MAX_DISTANCE};
use echotrace_cli::job::{resolve_params, JobInputs, SceneSpec};
use echotrace_cli::suites::{self, Suite, SuiteOptions};
use echotrace_cli::{commands, CliError, CliResult, ExitCode};

#[derive(Parser)]
#[command(name = "echotrace", version, about = "Geometric acoustics impulse-response simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate one impulse response.
    RenderIr(RenderIrArgs),
    /// Render source audio heard along a listener trajectory.
    RenderTrajectory(TrajectoryArgs),
    /// RT60 and DRR of impulse-response files.
    Metrics(MetricsArgs),
    /// Run a built-in validation suite.
    Validate(ValidateArgs),
    /// Generate an impulse-response dataset with polar source labels.
    GenDataset(DatasetArgs),
}

#[derive(Args)]
struct Threads {
    /// Worker threads; 0 uses every core.
    #[arg(long, env = "ECHOTRACE_THREADS", default_value_t = 0)]
    threads: usize,
}

#[derive(Args)]
struct Common {
    /// JSON job file; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Scene mesh (OBJ).
    #[arg(long)]
    scene: Option<PathBuf>,
    /// Triangle category file.
    #[arg(long)]
    categories: Option<PathBuf>,
    /// Material database (JSON); the built-in database otherwise.
    #[arg(long)]
    materials: Option<PathBuf>,
    /// Simulation parameter file (JSON).
    #[arg(long)]
    params: Option<PathBuf>,
    /// Parameter preset: high_quality or high_speed.
    #[arg(long)]
    preset: Option<String>,
    /// Source position x,y,z in metres.
    #[arg(long, value_parser = parse_vec3)]
    source: Option<[f64; 3]>,
    /// Microphone: mono, stereo, binaural, quad, 5.1, 7.1, ambisonicsN or a JSON file.
    #[arg(long)]
    mic: Option<String>,
    #[arg(long)]
    seed: Option<u64>,
    #[command(flatten)]
    threads: Threads,
    /// Output directory.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Output file stem.
    #[arg(long)]
    name: Option<String>,
}

#[derive(Args)]
struct RenderIrArgs {
    #[command(flatten)]
    common: Common,
    /// Listener position x,y,z in metres.
    #[arg(long, value_parser = parse_vec3)]
    listener: Option<[f64; 3]>,
    /// Listener heading in degrees, anticlockwise from +x.
    #[arg(long, allow_hyphen_values = true)]
    heading: Option<f64>,
    /// Re-run the job recorded in a sidecar; other job flags are ignored.
    #[arg(long)]
    from_sidecar: Option<PathBuf>,
}

#[derive(Args)]
struct TrajectoryArgs {
    #[command(flatten)]
    common: Common,
    /// Trajectory file: one `time x y z heading_deg` row per line.
    #[arg(long)]
    trajectory: Option<PathBuf>,
    /// Dry source audio (WAV).
    #[arg(long)]
    audio: Option<PathBuf>,
    /// Crossfade length in seconds.
    #[arg(long)]
    crossfade: Option<f64>,
    /// Also write per-step metadata to `<name>.steps.json`.
    #[arg(long)]
    dump_steps: bool,
    #[arg(long)]
    from_sidecar: Option<PathBuf>,
}

#[derive(Args)]
struct MetricsArgs {
    /// Impulse responses (WAV).
    #[arg(required = true)]
    files: Vec<PathBuf>,
    /// Reference impulse responses, paired with `files` in order.
    #[arg(long, num_args = 1..)]
    reference: Option<Vec<PathBuf>>,
    /// RT60 fit range: t20 or t30.
    #[arg(long, default_value = "t30")]
    method: String,
    /// Direct window after the onset, in seconds.
    #[arg(long, default_value_t = DEFAULT_DIRECT_WINDOW)]
    direct_window: f64,
    #[arg(long, default_value_t = 0)]
    channel: usize,
    /// Write each energy decay curve as CSV into this directory.
    #[arg(long)]
    edc_dir: Option<PathBuf>,
    /// Write the report here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ValidateArgs {
    /// shoebox, decay or continuity.
    suite: String,
    /// Source rays for the shoebox image-source comparison.
    #[arg(long, default_value_t = 1_000_000)]
    rays: usize,
    /// Scene for the continuity suite.
    #[arg(long)]
    scene: Option<PathBuf>,
    #[arg(long)]
    categories: Option<PathBuf>,
    #[arg(long)]
    materials: Option<PathBuf>,
    #[command(flatten)]
    threads: Threads,
    /// Multiply indirect pressure by √(4π) before the DRR check.
    #[arg(long, hide = true)]
    bias_sqrt_4pi: bool,
    /// Write the report as JSON.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct DatasetArgs {
    /// Scene meshes; records cycle through them.
    #[arg(long, required = true)]
    scene: Vec<PathBuf>,
    #[arg(long)]
    materials: Option<PathBuf>,
    #[arg(long)]
    params: Option<PathBuf>,
    #[arg(long)]
    preset: Option<String>,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Largest source-listener distance in metres.
    #[arg(long, default_value_t = DEFAULT_MAX_DISTANCE)]
    max_distance: f64,
    #[arg(long, default_value = "mono")]
    mic: String,
    #[command(flatten)]
    threads: Threads,
    #[arg(long)]
    out: PathBuf,
}

fn parse_vec3(s: &str) -> Result<[f64; 3], String> {
    let v: Vec<f64> = s
        .split(',')
        .map(|x| x.trim().parse::<f64>().map_err(|e| format!("'{x}': {e}")))
        .collect::<Result<_, _>>()?;
    <[f64; 3]>::try_from(v).map_err(|_| format!("expected x,y,z, got '{s}'"))
}

fn parse_preset(s: Option<&str>) -> CliResult<Option<Mode>> {
    s.map(|s| s.parse::<Mode>().map_err(CliError::from)).transpose()
}

fn parse_mic(s: &str) -> CliResult<MicrophoneConfig> {
    if s.ends_with(".json") {
        let path = Path::new(s);
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(format!("{s}: {e}")))?;
        return serde_json::from_str(&text).map_err(|e| CliError::config(format!("{s}: {e}")));
    }
    Ok(s.parse::<MicrophoneConfig>()?)
}

fn inputs(c: &Common) -> CliResult<JobInputs> {
    Ok(JobInputs {
        config: c.config.clone(),
        scene: c.scene.clone(),
        categories: c.categories.clone(),
        materials: c.materials.clone(),
        params: c.params.clone(),
        preset: parse_preset(c.preset.as_deref())?,
        source: c.source,
        microphone: c.mic.as_deref().map(parse_mic).transpose()?,
        seed: c.seed,
        ..JobInputs::default()
    })
}

fn report(w: &commands::Written) {
    println!("wrote {} ({} channels, {} samples)", w.wav.display(), w.meta.labels.len(), w.meta.samples);
}

fn run(cli: Cli) -> CliResult<ExitCode> {
    match cli.command {
        Command::RenderIr(a) => {
            let threads = a.common.threads.threads;
            let w = match &a.from_sidecar {
                Some(s) => commands::rerun(s, &a.common.out, threads)?,
                None => {
                    let mut i = inputs(&a.common)?;
                    i.listener = a.listener;
                    i.heading_deg = a.heading;
                    let job = i.render_job()?;
                    commands::render_ir(&job, &a.common.out, a.common.name.as_deref().unwrap_or("ir"), threads)?
                }
            };
            report(&w);
        }
        Command::RenderTrajectory(a) => {
            let threads = a.common.threads.threads;
            let w = match &a.from_sidecar {
                Some(s) => commands::rerun(s, &a.common.out, threads)?,
                None => {
                    let mut i = inputs(&a.common)?;
                    i.trajectory = a.trajectory.clone();
                    i.audio = a.audio.clone();
                    i.crossfade = a.crossfade;
                    let job = i.trajectory_job()?;
                    let stem = a.common.name.as_deref().unwrap_or("trajectory");
                    commands::render_trajectory(&job, &a.common.out, stem, threads, a.dump_steps)?.0
                }
            };
            report(&w);
        }
        Command::Metrics(a) => {
            let method: Rt60Method = a.method.parse()?;
            let opts = MetricsOptions { method, direct_window: a.direct_window, ..MetricsOptions::default() };
            let r = commands::metrics(&a.files, a.reference.as_deref(), &opts, a.channel, a.edc_dir.as_deref())?;
            let text = serde_json::to_string_pretty(&r).expect("report serializes") + "\n";
            match &a.out {
                Some(p) => std::fs::write(p, text).map_err(|e| CliError::config(format!("{}: {e}", p.display())))?,
                None => print!("{text}"),
            }
        }
        Command::Validate(a) => {
            let suite: Suite = a.suite.parse()?;
            let scene = match &a.scene {
                Some(mesh) => {
                    let mut spec = SceneSpec {
                        mesh: mesh.clone(),
                        categories: a.categories.clone(),
                        materials: a.materials.clone(),
                        assignment: Default::default(),
                    };
                    spec.absolutize();
                    Some(spec.load(&suites::oracle_params(a.threads.threads))?)
                }
                None => None,
            };
            let opts = SuiteOptions { rays: a.rays, threads: a.threads.threads, sqrt_4pi_bias: a.bias_sqrt_4pi, scene };
            let checks = suites::run(suite, &opts)?;
            if a.json {
                println!("{}", serde_json::to_string_pretty(&checks).expect("report serializes"));
            } else {
                for c in &checks {
                    println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
                }
            }
            if checks.iter().any(|c| !c.passed) {
                return Ok(ExitCode::ValidationFailed);
            }
        }
        Command::GenDataset(a) => {
            let params = resolve_params(a.params.as_deref(), parse_preset(a.preset.as_deref())?, a.seed)?;
            let scenes: Vec<SceneSpec> = a
                .scene
                .iter()
                .map(|m| {
                    let mut s = SceneSpec {
                        mesh: m.clone(),
                        categories: None,
                        materials: a.materials.clone(),
                        assignment: Default::default(),
                    };
                    s.absolutize();
                    s
                })
                .collect();
            let opts = DatasetOptions {
                count: a.count,
                seed: a.seed,
                max_distance: a.max_distance,
                microphone: parse_mic(&a.mic)?,
                threads: a.threads.threads,
            };
            let m = gen_dataset(&scenes, &params, &opts, &a.out)?;
            println!("wrote {} records to {}", m.records.len(), a.out.display());
        }
    }
    Ok(ExitCode::Success)
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let code = match run(cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            e.code
        }
    };
    process::exit(code as i32);
}
