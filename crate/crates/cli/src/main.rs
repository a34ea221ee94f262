mod error;
mod report;
mod serve;

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use gazetrack::bench::bench;
use gazetrack::calibration::run_calibration_sequence;
use gazetrack::dataset::{sample_dataset, sweep_dataset, Dataset, ImageFormat, ImageRole, SweepOptions};
use gazetrack::eval::evaluate;
use gazetrack::io::{list_images, load_dataset, load_gray, save_rgb, write_dataset, ReplaySource};
use gazetrack::overlay;
use gazetrack::pipeline::process_frame_detailed;
use gazetrack::stream::{FrameSource, LiveSource, MemorySource, NdjsonSink};
use gazetrack::{CalibrationMap, PipelineConfig, SyntheticEyeSpec};

use crate::error::CliError;
use crate::serve::{LineLog, ServeOptions};

#[derive(Parser)]
#[command(
    name = "gazetrack",
    version,
    about = "Gaze tracking from a single visible-light eye camera"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render a synthetic eye dataset with ground truth.
    Synth(SynthArgs),
    /// Run the detector on one image.
    Detect(DetectArgs),
    /// Calibrate on a dataset's knot images and score its gaze targets.
    Eval(EvalArgs),
    /// Stream results over WebSocket while logging NDJSON.
    Serve(ServeArgs),
    /// Measure per-frame throughput on a dataset.
    Bench(BenchArgs),
    /// Print a published JSON schema.
    Schema {
        #[arg(value_enum)]
        which: SchemaName,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemaName {
    EvalReport,
    FrameResult,
    WsProtocol,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Pgm,
    Png,
}

impl From<Format> for ImageFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Pgm => ImageFormat::Pgm,
            Format::Png => ImageFormat::Png,
        }
    }
}

#[derive(Args)]
struct SynthArgs {
    /// Output directory, created if missing.
    #[arg(long)]
    out: PathBuf,
    /// Number of images with varied iris positions.
    #[arg(long, default_value_t = 10, conflicts_with = "sweep")]
    count: usize,
    /// Gaze-target grid, e.g. 3x3, preceded by calibration knot images.
    #[arg(long, value_name = "NxM", value_parser = parse_grid)]
    sweep: Option<(usize, usize)>,
    /// Knot images per calibration cross (sweep only).
    #[arg(long, default_value_t = 10)]
    dwell: usize,
    /// Fraction of the screen covered by the target grid (sweep only).
    #[arg(long, default_value_t = 0.8)]
    span: f64,
    /// Fraction of the iris covered by the upper lid.
    #[arg(long)]
    eyelid: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Gaussian noise sigma in gray levels.
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long, value_enum, default_value = "pgm")]
    format: Format,
    /// Base eye spec as JSON; flags above override its fields.
    #[arg(long)]
    spec: Option<PathBuf>,
    /// Screen and eyeball model for sweeps.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct DetectArgs {
    image: PathBuf,
    /// Write a PNG with the detection stages drawn over the image.
    #[arg(long)]
    overlay: Option<PathBuf>,
    /// Print the frame result as JSON.
    #[arg(long)]
    json: bool,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Calibration map (JSON) for screen coordinates.
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    dataset: PathBuf,
    /// Pipeline config; by default screen and model come from the manifest.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print only the JSON report.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct ServeArgs {
    /// Dataset or image directory, or `-` for raw 8-bit frames on stdin.
    #[arg(long)]
    source: String,
    /// Frame size of raw stdin input.
    #[arg(long, value_name = "WxH", value_parser = parse_grid)]
    size: Option<(usize, usize)>,
    /// Port; overrides the config file.
    #[arg(long)]
    port: Option<u16>,
    #[arg(long, default_value = "127.0.0.1")]
    host: String,
    /// Replay rate of a directory source.
    #[arg(long, default_value_t = 30.0)]
    fps: f64,
    /// Frames per calibration cross.
    #[arg(long, default_value_t = gazetrack::calibration::DEFAULT_DWELL)]
    dwell: usize,
    /// Do not start the source before this many clients have connected.
    #[arg(long, default_value_t = 0)]
    wait_clients: usize,
    /// NDJSON log file; standard output by default.
    #[arg(long)]
    log: Option<PathBuf>,
    #[arg(long)]
    config: Option<PathBuf>,
    /// Start with this calibration map (JSON).
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Passes over the dataset (raised to reach 1000 processings).
    #[arg(long, default_value_t = 10)]
    repetitions: usize,
    #[arg(long)]
    config: Option<PathBuf>,
}

fn parse_grid(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s.split_once(['x', 'X']).ok_or("expected NxM, e.g. 3x3")?;
    let n: usize = a.trim().parse().map_err(|e| format!("{a}: {e}"))?;
    let m: usize = b.trim().parse().map_err(|e| format!("{b}: {e}"))?;
    if n == 0 || m == 0 {
        return Err("both dimensions must be positive".into());
    }
    Ok((n, m))
}

fn load_config(path: Option<&Path>) -> Result<PipelineConfig, CliError> {
    let Some(path) = path else {
        return Ok(PipelineConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    PipelineConfig::from_toml(&text).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn load_calibration(path: Option<&Path>) -> Result<Option<CalibrationMap>, CliError> {
    let Some(path) = path else {
        return Ok(None);
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    CalibrationMap::from_json(&text)
        .map(Some)
        .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))
}

fn print(text: &str) -> Result<(), CliError> {
    let mut out = io::stdout().lock();
    match writeln!(out, "{text}") {
        // a reader that stops early (`| head`) is not a failure
        Err(e) if e.kind() == io::ErrorKind::BrokenPipe => Ok(()),
        r => r.map_err(CliError::from_write),
    }
}

fn cmd_synth(a: SynthArgs) -> Result<(), CliError> {
    let mut spec = match &a.spec {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?
        }
        None => SyntheticEyeSpec::default(),
    };
    if let Some(c) = a.eyelid {
        spec.eyelid_coverage = c;
    }
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(n) = a.noise {
        spec.noise_sigma = n;
    }
    spec.validate().map_err(|e| CliError::Input(e.to_string()))?;
    let config = load_config(a.config.as_deref())?;
    let dataset = match a.sweep {
        Some(grid) => {
            let opts = SweepOptions {
                grid,
                span: a.span,
                dwell: a.dwell,
                format: a.format.into(),
                ..Default::default()
            };
            sweep_dataset(&spec, &config.model, &config.screen, &opts)
        }
        None => {
            if a.count == 0 {
                return Err(CliError::Input("--count must be positive".into()));
            }
            sample_dataset(&spec, a.count, a.format.into())
        }
    }
    .map_err(|e| CliError::Input(e.to_string()))?;
    write_dataset(&a.out, &dataset).map_err(CliError::from_write)?;
    let m = &dataset.manifest;
    let count = |role| m.images.iter().filter(|e| e.role == role).count();
    let flagged = m.images.iter().filter(|e| e.expect_failure).count();
    print(&format!(
        "wrote {} images to {} ({} samples, {} knots, {} targets, {} expected failures)",
        m.images.len(),
        a.out.display(),
        count(ImageRole::Sample),
        count(ImageRole::Knot),
        count(ImageRole::Target),
        flagged
    ))
}

fn cmd_detect(a: DetectArgs) -> Result<(), CliError> {
    let config = load_config(a.config.as_deref())?;
    let cal = load_calibration(a.calibration.as_deref())?;
    let img = load_gray(&a.image).map_err(CliError::from_read)?;
    let (result, detection) = process_frame_detailed(&img, cal.as_ref(), &config);
    // timing is left out so the output depends on the input alone
    let result = result.without_timing();
    if let Some(path) = &a.overlay {
        let canvas = overlay::draw(&img, &detection);
        save_rgb(canvas.width, canvas.height, canvas.rgb, path).map_err(CliError::from_write)?;
    }
    if a.json {
        return print(&result.to_json());
    }
    let mut lines = vec![format!("status  {}", result.status)];
    if let Some(c) = result.iris {
        lines.push(format!(
            "iris    center ({:.2}, {:.2}) radius {:.2}, {} inliers",
            c.a, c.b, c.r, result.inliers
        ));
    }
    if let Some(c) = result.corner {
        lines.push(format!("corner  ({:.2}, {:.2})", c.x, c.y));
    }
    if let Some(s) = result.screen {
        let p = s.point();
        let note = if s.is_on_screen() { "" } else { " (off screen)" };
        lines.push(format!("screen  ({:.1}, {:.1}){note}", p.x, p.y));
    }
    print(&lines.join("\n"))
}

fn load_input_dataset(dir: &Path) -> Result<Dataset, CliError> {
    load_dataset(dir).map_err(CliError::from_read)
}

fn cmd_eval(a: EvalArgs) -> Result<(), CliError> {
    let dataset = load_input_dataset(&a.dataset)?;
    let config = match &a.config {
        Some(p) => load_config(Some(p))?,
        None => PipelineConfig {
            screen: dataset.manifest.screen,
            model: dataset.manifest.model,
            ..Default::default()
        },
    };
    let report = evaluate(&dataset, &config).map_err(|e| CliError::Input(e.to_string()))?;
    let json: serde_json::Value = serde_json::to_value(&report).map_err(|e| CliError::Internal(e.to_string()))?;
    report::validate(report::EVAL_REPORT_SCHEMA, &json)
        .map_err(|errs| CliError::Internal(format!("report violates its schema: {}", errs.join("; "))))?;
    if !a.json {
        print(&report::table(&report))?;
    }
    print(&report.to_json())
}

fn cmd_serve(a: ServeArgs) -> Result<(), CliError> {
    let mut config = load_config(a.config.as_deref())?;
    if let Some(p) = a.port {
        config.port = p;
    }
    let calibration = load_calibration(a.calibration.as_deref())?;
    if a.fps.is_nan() || a.fps <= 0.0 {
        return Err(CliError::Input("--fps must be positive".into()));
    }
    let (mut source, fps): (Box<dyn FrameSource>, Option<f64>) = if a.source == "-" {
        let (w, h) = a
            .size
            .ok_or_else(|| CliError::Input("--size WxH is required for raw stdin input".into()))?;
        let live = LiveSource::from_reader(io::stdin(), w, h).map_err(|e| CliError::Io(e.to_string()))?;
        (Box::new(live), None)
    } else {
        let replay = ReplaySource::open(Path::new(&a.source), a.fps).map_err(|e| CliError::Io(e.to_string()))?;
        (Box::new(replay), Some(a.fps))
    };
    let listener = serve::bind(&a.host, config.port)?;
    let opts = ServeOptions {
        config,
        fps,
        dwell: a.dwell,
        wait_clients: a.wait_clients,
        calibration,
    };
    let summary = match &a.log {
        Some(path) => {
            let file = File::create(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            let mut log = LineLog(NdjsonSink::new(BufWriter::new(file)));
            serve::serve(listener, source.as_mut(), opts, &mut log)?
        }
        None => {
            let mut log = LineLog(NdjsonSink::new(io::stdout()));
            serve::serve(listener, source.as_mut(), opts, &mut log)?
        }
    };
    eprintln!(
        "gazetrack: {}",
        serde_json::to_string(&summary).map_err(|e| CliError::Internal(e.to_string()))?
    );
    Ok(())
}

fn cmd_bench(a: BenchArgs) -> Result<(), CliError> {
    let mut config = load_config(a.config.as_deref())?;
    let (frames, cal) = if a.dataset.join(gazetrack::dataset::MANIFEST_FILE).is_file() {
        let d = load_input_dataset(&a.dataset)?;
        if a.config.is_none() {
            config.screen = d.manifest.screen;
            config.model = d.manifest.model;
        }
        // calibrate from the knots when there are any, so gaze mapping is timed too
        let cal = match d.manifest.crosses {
            Some(crosses) if d.manifest.check_evaluable().is_ok() => {
                let knots = [d.manifest.knot_indices(0), d.manifest.knot_indices(1)];
                let dwell = knots[0].len().min(knots[1].len());
                let frames = knots
                    .iter()
                    .flat_map(|k| k[..dwell].iter().map(|&i| d.images[i].clone()));
                run_calibration_sequence(&mut MemorySource::new(frames, 30.0), &config, crosses, dwell, |_| {}).ok()
            }
            _ => None,
        };
        (d.images, cal)
    } else {
        let files = list_images(&a.dataset).map_err(CliError::from_read)?;
        let frames = files
            .iter()
            .map(|f| load_gray(f))
            .collect::<Result<Vec<_>, _>>()
            .map_err(CliError::from_read)?;
        (frames, None)
    };
    let report = bench(&frames, cal.as_ref(), &config, a.repetitions).map_err(|e| CliError::Input(e.to_string()))?;
    print(&serde_json::to_string_pretty(&report).map_err(|e| CliError::Internal(e.to_string()))?)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Synth(a) => cmd_synth(a),
        Command::Detect(a) => cmd_detect(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Serve(a) => cmd_serve(a),
        Command::Bench(a) => cmd_bench(a),
        Command::Schema { which } => print(
            match which {
                SchemaName::EvalReport => report::EVAL_REPORT_SCHEMA,
                SchemaName::FrameResult => report::FRAME_RESULT_SCHEMA,
                SchemaName::WsProtocol => report::WS_PROTOCOL_SCHEMA,
            }
            .trim_end(),
        ),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("gazetrack: {e}");
            e.exit_code()
        }
    }
}
