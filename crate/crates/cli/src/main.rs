use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;

use trackgraph::io::{
    parse_config, parse_detections, parse_detrac_xml, parse_features, parse_gt, parse_tracks, synth_generate,
    write_detections, write_features, write_gt, write_tracks, ScenarioSpec,
};
use trackgraph::metrics::{evaluate, MetricsReport};
use trackgraph::pipeline::{filter_confidence, hypotheses, run_sequence, TrackingRun};
use trackgraph::tracker::EventKind;
use trackgraph::{AppearanceMode, MatchSolver, ObservationSource, SequenceBundle, TrackerConfig};

mod svg;

#[derive(Parser)]
#[command(
    name = "trackgraph",
    version,
    about = "Graph-based multi-object tracking by detection"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Track a detections file and write the track CSV.
    Track(TrackArgs),
    /// Score a track CSV against ground truth.
    Eval(EvalArgs),
    /// Generate detections, features and ground truth from a scenario.
    Synth(SynthArgs),
    /// Generate, track and score one or more scenarios.
    Pipeline(PipelineArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Appearance {
    Sift,
    Deep,
    None,
}

/// Tracker settings: a config file, overridden by individual flags.
#[derive(Args)]
struct Tuning {
    /// `key = value` file with TrackerConfig field names.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    iou_threshold: Option<f64>,
    #[arg(long, value_enum)]
    appearance: Option<Appearance>,
    #[arg(long)]
    fps: Option<f64>,
    #[arg(long)]
    max_lost: Option<u32>,
    #[arg(long)]
    border_margin: Option<f64>,
    /// Discard detections below this confidence at ingestion.
    #[arg(long, default_value_t = 0.0)]
    min_conf: f64,
    /// Extrapolate with velocity * fps instead of velocity / fps.
    #[arg(long)]
    literal_eq10: bool,
    /// Greedy matching instead of the exact solver.
    #[arg(long)]
    greedy: bool,
}

impl Tuning {
    fn resolve(&self) -> Result<TrackerConfig> {
        let mut cfg = TrackerConfig::default();
        if let Some(path) = &self.config {
            let file = fs::File::open(path).with_context(|| format!("opening config {}", path.display()))?;
            cfg = parse_config(file, cfg).with_context(|| format!("reading config {}", path.display()))?;
        }
        if let Some(v) = self.alpha {
            cfg.alpha = v;
        }
        if let Some(v) = self.beta {
            cfg.beta = v;
        }
        if let Some(v) = self.iou_threshold {
            cfg.iou_prune_threshold = v;
        }
        if let Some(a) = self.appearance {
            cfg.appearance_mode = match a {
                Appearance::Sift => AppearanceMode::SiftHist,
                Appearance::Deep => AppearanceMode::Deep,
                Appearance::None => AppearanceMode::None,
            };
        }
        if let Some(v) = self.fps {
            cfg.fps = v;
        }
        if let Some(v) = self.max_lost {
            cfg.max_lost_frames = v;
        }
        if let Some(v) = self.border_margin {
            cfg.border_margin_frac = v;
        }
        if self.literal_eq10 {
            cfg.literal_eq10 = true;
        }
        if self.greedy {
            cfg.solver = MatchSolver::Greedy;
        }
        cfg.validate()?;
        log::debug!("tracker config: {cfg:?}");
        Ok(cfg)
    }
}

#[derive(Args)]
struct TrackArgs {
    #[arg(long)]
    detections: PathBuf,
    /// JSON-lines feature sidecar; required unless --appearance none.
    #[arg(long)]
    features: Option<PathBuf>,
    #[arg(long, short)]
    out: PathBuf,
    /// Number of frames; defaults to the last frame with a detection.
    #[arg(long)]
    frame_count: Option<u32>,
    #[arg(long)]
    frame_width: Option<f64>,
    #[arg(long)]
    frame_height: Option<f64>,
    /// Write one SVG box overlay per frame into this directory.
    #[arg(long)]
    svg_dir: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    tracks: PathBuf,
    /// Ground truth CSV, or UA-DETRAC annotation XML when ending in .xml.
    #[arg(long)]
    gt: PathBuf,
    /// Write `key=value` metrics to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Ignore hypothetical (H) rows of the track file.
    #[arg(long)]
    exclude_hypothetical: bool,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long)]
    spec: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Receives detections.csv, features.jsonl and gt.csv.
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// Scenario JSON files; each runs with its own engine.
    #[arg(long = "spec", required = true)]
    specs: Vec<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads for multiple scenarios (0 = all cores).
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    #[arg(long)]
    exclude_hypothetical: bool,
    /// Also write each scenario's tracks.csv and report.txt here.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    #[arg(long)]
    svg_dir: Option<PathBuf>,
    #[command(flatten)]
    tuning: Tuning,
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn open(path: &Path) -> Result<fs::File> {
    fs::File::open(path).with_context(|| format!("opening {}", path.display()))
}

fn event_summary(name: &str, run: &TrackingRun) -> String {
    format!(
        "{name}: tracks={} born={} lost={} recovered={} left={}",
        run.tracks.len(),
        run.event_count(EventKind::Born),
        run.event_count(EventKind::Lost),
        run.event_count(EventKind::Recovered),
        run.event_count(EventKind::Left),
    )
}

fn cmd_track(args: &TrackArgs) -> Result<()> {
    let mut cfg = args.tuning.resolve()?;
    if let Some(w) = args.frame_width {
        cfg.frame_width = w;
    }
    if let Some(h) = args.frame_height {
        cfg.frame_height = h;
    }
    let detections = parse_detections(open(&args.detections)?)
        .with_context(|| format!("reading detections {}", args.detections.display()))?;
    let features = match (&args.features, cfg.appearance_mode) {
        (Some(path), _) => Some(
            parse_features(open(path)?)
                .with_context(|| format!("reading features {}", path.display()))?
                .1,
        ),
        (None, AppearanceMode::None) => None,
        (None, mode) => bail!(
            "appearance mode `{}` requires a features file (--features), or pass --appearance none",
            mode.as_str()
        ),
    };
    let name = args.detections.display().to_string();
    let bundle = SequenceBundle::assemble(
        name.clone(),
        &detections,
        features.as_ref(),
        args.frame_count,
        (cfg.frame_width, cfg.frame_height),
    )?;
    let bundle = filter_confidence(&bundle, args.tuning.min_conf);
    let run = run_sequence(&bundle, &cfg)?;
    write_file(&args.out, &write_tracks(&run.tracks))?;
    if let Some(dir) = &args.svg_dir {
        svg::write_overlays(dir, &bundle, &run.tracks)?;
    }
    println!("{}", event_summary(&name, &run));
    Ok(())
}

fn load_gt(path: &Path) -> Result<Vec<trackgraph::GtEntry>> {
    let is_xml = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("xml"));
    let gt = if is_xml {
        let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        parse_detrac_xml(&text)
    } else {
        parse_gt(open(path)?)
    };
    gt.with_context(|| format!("reading ground truth {}", path.display()))
}

fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let rows =
        parse_tracks(open(&args.tracks)?).with_context(|| format!("reading tracks {}", args.tracks.display()))?;
    let gt = load_gt(&args.gt)?;
    let hyp: Vec<_> = rows
        .iter()
        .filter(|r| !(args.exclude_hypothetical && r.source == ObservationSource::Hypothetical))
        .map(|r| r.hypothesis())
        .collect();
    let report = evaluate(&gt, &hyp)?;
    print!("{}", report.table(&args.tracks.display().to_string()));
    if let Some(path) = &args.report {
        write_file(path, &report.to_key_values())?;
    }
    Ok(())
}

fn load_spec(path: &Path) -> Result<ScenarioSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    ScenarioSpec::from_json(&text).with_context(|| format!("parsing scenario {}", path.display()))
}

fn cmd_synth(args: &SynthArgs) -> Result<()> {
    let spec = load_spec(&args.spec)?;
    let bundle = synth_generate(&spec, args.seed)?;
    fs::create_dir_all(&args.out_dir).with_context(|| format!("creating {}", args.out_dir.display()))?;
    write_file(
        &args.out_dir.join("detections.csv"),
        &write_detections(&bundle.detection_frames()),
    )?;
    write_file(
        &args.out_dir.join("features.jsonl"),
        &write_features(None, &bundle.feature_table()),
    )?;
    write_file(
        &args.out_dir.join("gt.csv"),
        &write_gt(bundle.gt.as_deref().unwrap_or(&[])),
    )?;
    println!(
        "{}: {} frames, {} detections, {} ground truth boxes",
        bundle.name,
        bundle.frame_count,
        bundle.detections.iter().map(Vec::len).sum::<usize>(),
        bundle.gt.as_ref().map_or(0, Vec::len)
    );
    Ok(())
}

fn pipeline_one(args: &PipelineArgs, cfg: &TrackerConfig, path: &Path) -> Result<(String, TrackingRun, MetricsReport)> {
    let spec = load_spec(path)?;
    let bundle = filter_confidence(&synth_generate(&spec, args.seed)?, args.tuning.min_conf);
    let run = run_sequence(&bundle, cfg).with_context(|| format!("tracking {}", path.display()))?;
    let gt = bundle.gt.as_deref().unwrap_or(&[]);
    let report = evaluate(gt, &hypotheses(&run.tracks, args.exclude_hypothetical))
        .with_context(|| format!("scoring {}", path.display()))?;
    let stem = path
        .file_stem()
        .map_or_else(|| bundle.name.clone(), |s| s.to_string_lossy().into_owned());
    if let Some(dir) = &args.out_dir {
        let dir = dir.join(&stem);
        fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
        write_file(&dir.join("tracks.csv"), &write_tracks(&run.tracks))?;
        write_file(&dir.join("report.txt"), &report.to_key_values())?;
    }
    if let Some(dir) = &args.svg_dir {
        svg::write_overlays(&dir.join(&stem), &bundle, &run.tracks)?;
    }
    Ok((stem, run, report))
}

fn cmd_pipeline(args: &PipelineArgs) -> Result<()> {
    let cfg = args.tuning.resolve()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(args.jobs)
        .build()
        .context("starting worker pool")?;
    // collect keeps input order regardless of scheduling
    let results: Vec<Result<_>> = pool.install(|| args.specs.par_iter().map(|p| pipeline_one(args, &cfg, p)).collect());
    for r in results {
        let (name, run, report) = r?;
        println!("{}", event_summary(&name, &run));
        print!("{}", report.table(&name));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("TRACKGRAPH_LOG", "warn")).init();
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Track(a) => cmd_track(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Synth(a) => cmd_synth(a),
        Command::Pipeline(a) => cmd_pipeline(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
