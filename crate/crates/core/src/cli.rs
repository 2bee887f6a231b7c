//! Command-line front end: argument parsing, artifact writing and exit codes.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::Serialize;

use crate::dataio::{load_recordings, Recording, RoomVocabulary};
use crate::error::{Error, Result};
use crate::mobility::{default_pairs, mobility_report, HallwayLayout, RoomSequence};
use crate::model::{Checkpoint, Variant};
use crate::simulator::{default_floorplan_spec, load_sim_config, make_dataset, write_dataset, Floorplan, FloorplanSpec, SimConfig};
use crate::train::{
    ablate, cross_validate, forbidden_mask, make_samples, metrics_csv, predict, resume_model, score_predictions,
    train_model, training_log_csv, CvMode, Scores, TrainConfig, TrainedModel,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Parser)]
#[command(name = "dcmn", version, about = "Room-level localisation from wearable RSSI and accelerometer data")]
pub struct Cli {
    /// Worker threads for folds, variants and simulated subjects.
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a labeled synthetic dataset.
    Simulate(SimulateArgs),
    /// Train one model on every recording of a dataset.
    Train(TrainArgs),
    /// Score a checkpoint on a dataset and write per-second predictions.
    Evaluate(EvaluateArgs),
    /// Train and test over a cohort cross-validation plan.
    CrossValidate(CvArgs),
    /// Cross-validate every ablation variant.
    Ablate(CvArgs),
    /// Daily transitions and room-to-room durations.
    Mobility(MobilityArgs),
    /// Write default simulator and training configs.
    InitConfig(InitArgs),
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// Simulator config JSON; a 4 HC + 4 PD cohort when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Recording CSV.
    #[arg(long)]
    pub data: PathBuf,
    /// Floorplan JSON giving the room vocabulary and adjacency; the built-in plan when omitted.
    #[arg(long)]
    pub floorplan: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrainOptions {
    /// Training config JSON; defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Variant to train (full, no-lstm, no-grn, no-transformer, no-crf, no-accel).
    #[arg(long)]
    pub ablation: Option<String>,
    /// Forbid decoding moves between rooms that are not adjacent.
    #[arg(long)]
    pub mask_transitions: bool,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainOptions,
    #[arg(long)]
    pub out: PathBuf,
    /// Continue from this checkpoint.
    #[arg(long)]
    pub resume: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Mask non-adjacent moves from the floorplan instead of the checkpoint's own mask.
    #[arg(long)]
    pub mask_transitions: bool,
}

#[derive(Debug, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub train: TrainOptions,
    #[arg(long)]
    pub out: PathBuf,
    /// all-hc, loo-hc or loo-pd.
    #[arg(long, default_value = "loo-pd")]
    pub cv_mode: String,
}

#[derive(Debug, Args)]
pub struct MobilityArgs {
    #[command(flatten)]
    pub data: DataArgs,
    /// Predictions CSV from `evaluate`; without it the ground truth is compared with itself.
    #[arg(long)]
    pub pred: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    /// Width-3 majority filter on predicted sequences.
    #[arg(long)]
    pub smooth: bool,
}

#[derive(Debug, Args)]
pub struct InitArgs {
    #[arg(long)]
    pub out: PathBuf,
}

/// Exit code for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Divergence { .. } | Error::Oracle(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

/// Run metadata, written before any other artifact and rewritten on success.
#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub arguments: Vec<String>,
    pub config_paths: Vec<PathBuf>,
    pub seed: Option<u64>,
    pub code_version: &'static str,
    pub output_dir: PathBuf,
    pub started_unix_s: u64,
    pub finished_unix_s: Option<u64>,
    pub status: &'static str,
    pub artifacts: Vec<String>,
}

fn now() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Output directory with atomic file writes and a manifest.
struct Run {
    dir: PathBuf,
    manifest: RunManifest,
}

impl Run {
    fn start(command: &str, dir: &Path, config_paths: Vec<PathBuf>, seed: Option<u64>) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let run = Self {
            dir: dir.to_path_buf(),
            manifest: RunManifest {
                command: command.to_string(),
                arguments: std::env::args().skip(1).collect(),
                config_paths,
                seed,
                code_version: env!("CARGO_PKG_VERSION"),
                output_dir: dir.to_path_buf(),
                started_unix_s: now(),
                finished_unix_s: None,
                status: "running",
                artifacts: Vec::new(),
            },
        };
        run.write_manifest()?;
        Ok(run)
    }

    fn write_manifest(&self) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(&self.manifest)?;
        write_atomic(&self.dir.join(MANIFEST_FILE), &bytes)
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(name), bytes)?;
        self.manifest.artifacts.push(name.to_string());
        Ok(())
    }

    /// JSON artifact carrying a back-reference to the manifest.
    fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        #[derive(Serialize)]
        struct Referenced<'a, T> {
            manifest: &'static str,
            #[serde(flatten)]
            body: &'a T,
        }
        let bytes = serde_json::to_vec_pretty(&Referenced {
            manifest: MANIFEST_FILE,
            body: value,
        })?;
        self.write(name, &bytes)
    }

    fn finish(mut self) -> Result<()> {
        self.manifest.finished_unix_s = Some(now());
        self.manifest.status = "complete";
        self.write_manifest()
    }
}

/// Writes through a temporary file in the same directory, then renames.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

fn load_floorplan(path: Option<&Path>) -> Result<Floorplan> {
    let spec = match path {
        None => default_floorplan_spec(),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
            let de = &mut serde_json::Deserializer::from_str(&text);
            serde_path_to_error::deserialize::<_, FloorplanSpec>(de)
                .map_err(|e| Error::Config(format!("{}: {} ({})", p.display(), e.inner(), e.path())))?
        }
    };
    Floorplan::from_spec(&spec)
}

fn room_names_in(path: &Path) -> Result<Vec<String>> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let mut names = BTreeSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        if let Some(room) = rec.iter().last().filter(|r| !r.is_empty()) {
            names.insert(room.to_string());
        }
    }
    Ok(names.into_iter().collect())
}

/// Loads recordings against `vocab`; unknown rooms become a vocabulary
/// mismatch naming both sides.
fn load_data(path: &Path, vocab: &RoomVocabulary) -> Result<Vec<Recording>> {
    match load_recordings(path, vocab) {
        Err(Error::Vocabulary { .. }) => Err(Error::VocabularyMismatch {
            checkpoint: vocab.describe(),
            data: room_names_in(path)?.join(", "),
        }),
        other => other,
    }
}

fn train_config(opts: &TrainOptions) -> Result<TrainConfig> {
    let mut cfg = match &opts.config {
        Some(p) => TrainConfig::load(p)?,
        None => TrainConfig::default(),
    };
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(name) = &opts.ablation {
        cfg.variant = name.parse::<Variant>()?;
    }
    cfg.mask_transitions |= opts.mask_transitions;
    cfg.validate()?;
    Ok(cfg)
}

fn config_paths(opts: &TrainOptions, data: &DataArgs) -> Vec<PathBuf> {
    opts.config.iter().chain(data.floorplan.iter()).cloned().collect()
}

fn cmd_simulate(a: &SimulateArgs) -> Result<()> {
    let mut cfg = match &a.config {
        Some(p) => load_sim_config(p)?,
        None => SimConfig::cohort(4, 4, 3, 7200, 0),
    };
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    let mut run = Run::start("simulate", &a.out, a.config.iter().cloned().collect(), Some(cfg.seed))?;
    let (fp, recordings) = make_dataset(&cfg)?;
    let mut csv = Vec::new();
    write_dataset(&mut csv, &fp, &recordings)?;
    run.write("dataset.csv", &csv)?;
    run.write("floorplan.json", &serde_json::to_vec_pretty(&fp.to_spec())?)?;
    run.write("sim_config.json", &serde_json::to_vec_pretty(&cfg)?)?;
    info!("simulated {} subject-days", recordings.len());
    run.finish()
}

fn write_trained(run: &mut Run, trained: &TrainedModel) -> Result<()> {
    run.write("checkpoint.json", trained.checkpoint.to_json()?.as_bytes())?;
    run.write("training_log.csv", &training_log_csv(&trained.fitted.log)?)?;
    #[derive(Serialize)]
    struct Grid<'a> {
        selected: &'a crate::train::GridResult,
        grid: &'a [crate::train::GridResult],
    }
    run.write_json(
        "grid.json",
        &Grid {
            selected: &trained.fitted.selected,
            grid: &trained.fitted.grid,
        },
    )
}

fn cmd_train(a: &TrainArgs) -> Result<()> {
    let cfg = train_config(&a.train)?;
    let fp = load_floorplan(a.data.floorplan.as_deref())?;
    let mut paths = config_paths(&a.train, &a.data);
    paths.extend(a.resume.iter().cloned());
    let mut run = Run::start("train", &a.out, paths, Some(cfg.seed))?;
    let recordings = load_data(&a.data.data, &fp.rooms)?;
    let refs: Vec<&Recording> = recordings.iter().collect();
    let trained = match &a.resume {
        Some(p) => {
            let ckpt = Checkpoint::load(p)?;
            resume_model(&ckpt, &refs, &fp.rooms, &cfg, cfg.seed)?
        }
        None => train_model(&refs, &fp.rooms, &cfg, &fp.non_adjacent_pairs(), cfg.seed)?,
    };
    write_trained(&mut run, &trained)?;
    run.finish()
}

#[derive(Debug, Serialize)]
struct EvaluationReport {
    variant: Variant,
    windows: usize,
    steps: usize,
    #[serde(flatten)]
    scores: Scores,
}

fn cmd_evaluate(a: &EvaluateArgs) -> Result<()> {
    let ckpt = Checkpoint::load(&a.checkpoint)?;
    let vocab = ckpt.vocabulary()?;
    let mut paths = vec![a.checkpoint.clone()];
    paths.extend(a.data.floorplan.iter().cloned());
    let mut run = Run::start("evaluate", &a.out, paths, None)?;
    let recordings = load_data(&a.data.data, &vocab)?;
    let pairs = if a.mask_transitions {
        let fp = load_floorplan(a.data.floorplan.as_deref())?;
        ckpt.check_vocabulary(&fp.rooms)?;
        fp.non_adjacent_pairs()
    } else {
        ckpt.forbidden_transitions.clone()
    };
    let mask = forbidden_mask(&vocab, &pairs)?;
    let params = ckpt.model_params()?;
    let cfg = &ckpt.config;
    let refs: Vec<&Recording> = recordings.iter().collect();
    let samples = make_samples(&refs, &ckpt.norm_stats, cfg.window, cfg.window)?;
    let pred = predict(&params, cfg, &samples, &mask)?;
    let scores = score_predictions(&pred, &samples, vocab.len())?;
    let mut w = csv::Writer::from_writer(Vec::new());
    let csv_err = |e: csv::Error| Error::Report(e.to_string());
    w.write_record(["subject_id", "day_index", "timestamp_s", "predicted", "truth"])
        .map_err(csv_err)?;
    for (s, p) in samples.iter().zip(&pred) {
        for ((ts, &y), &yh) in s.timestamps().zip(&s.labels).zip(p) {
            w.write_record([
                s.meta.subject_id.as_str(),
                &s.meta.day_index.to_string(),
                &ts.to_string(),
                vocab.name(yh),
                vocab.name(y),
            ])
            .map_err(csv_err)?;
        }
    }
    let bytes = w.into_inner().map_err(|e| Error::Report(e.to_string()))?;
    run.write("predictions.csv", &bytes)?;
    let report = EvaluationReport {
        variant: cfg.variant,
        windows: samples.len(),
        steps: samples.len() * cfg.window,
        scores,
    };
    run.write_json("metrics.json", &report)?;
    run.finish()
}

fn cmd_cross_validate(a: &CvArgs, all_variants: bool) -> Result<()> {
    let cfg = train_config(&a.train)?;
    let mode: CvMode = a.cv_mode.parse()?;
    let fp = load_floorplan(a.data.floorplan.as_deref())?;
    let name = if all_variants { "ablate" } else { "cross-validate" };
    let mut run = Run::start(name, &a.out, config_paths(&a.train, &a.data), Some(cfg.seed))?;
    let recordings = load_data(&a.data.data, &fp.rooms)?;
    let pairs = fp.non_adjacent_pairs();
    let reports = if all_variants {
        ablate(&recordings, &fp.rooms, mode, &cfg, &pairs)?
    } else {
        vec![cross_validate(&recordings, &fp.rooms, mode, &cfg, &pairs)?]
    };
    run.write("metrics.csv", &metrics_csv(&reports)?)?;
    if all_variants {
        #[derive(Serialize)]
        struct Table<'a> {
            variants: &'a [crate::train::MetricsReport],
        }
        run.write_json("ablation.json", &Table { variants: &reports })?;
    } else {
        run.write_json("metrics.json", &reports[0])?;
    }
    run.finish()
}

/// Predicted and ground-truth sequences from an `evaluate` predictions file.
pub fn read_predictions(path: &Path, vocab: &RoomVocabulary) -> Result<(Vec<RoomSequence>, Vec<RoomSequence>)> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| Error::Parse {
        line: 0,
        message: e.to_string(),
    })?;
    let mut rows: std::collections::BTreeMap<(String, i64), Vec<(i64, usize, usize)>> = Default::default();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        if rec.len() != 5 {
            return Err(Error::Parse {
                line,
                message: format!("expected 5 columns, found {}", rec.len()),
            });
        }
        let int = |s: &str| {
            s.parse::<i64>().map_err(|_| Error::Parse {
                line,
                message: format!("`{s}` is not an integer"),
            })
        };
        rows.entry((rec[0].to_string(), int(&rec[1])?))
            .or_default()
            .push((int(&rec[2])?, vocab.id(&rec[3])?, vocab.id(&rec[4])?));
    }
    let mut pred = Vec::new();
    let mut truth = Vec::new();
    for ((subject, day), mut r) in rows {
        r.sort_by_key(|x| x.0);
        let ts: Vec<i64> = r.iter().map(|x| x.0).collect();
        pred.push(RoomSequence::new(subject.clone(), day, ts.clone(), r.iter().map(|x| x.1).collect())?);
        truth.push(RoomSequence::new(subject, day, ts, r.iter().map(|x| x.2).collect())?);
    }
    Ok((pred, truth))
}

fn cmd_mobility(a: &MobilityArgs) -> Result<()> {
    let fp = load_floorplan(a.data.floorplan.as_deref())?;
    let mut paths: Vec<PathBuf> = a.data.floorplan.iter().cloned().collect();
    paths.extend(a.pred.iter().cloned());
    let mut run = Run::start("mobility", &a.out, paths, None)?;
    let (pred, truth) = match &a.pred {
        Some(p) => read_predictions(p, &fp.rooms)?,
        None => {
            let recs = load_data(&a.data.data, &fp.rooms)?;
            let truth = recs.iter().map(RoomSequence::from_recording).collect::<Result<Vec<_>>>()?;
            (truth.clone(), truth)
        }
    };
    let hub = fp.hub().ok_or_else(|| Error::Config("floorplan has no hallway".into()))?;
    let layout = HallwayLayout::from_adjacency(hub, fp.num_rooms(), |a, b| fp.is_adjacent(a, b));
    let report = mobility_report(&pred, &truth, &fp.rooms, &layout, &default_pairs(), a.smooth)?;
    run.write_json("mobility.json", &report)?;
    run.write("mobility.csv", &report.summary_csv()?)?;
    run.write("mobility_long.csv", &report.long_csv()?)?;
    run.finish()
}

fn cmd_init_config(a: &InitArgs) -> Result<()> {
    let mut run = Run::start("init-config", &a.out, Vec::new(), None)?;
    run.write("sim_config.json", &serde_json::to_vec_pretty(&SimConfig::cohort(4, 4, 3, 7200, 0))?)?;
    run.write("train_config.json", &serde_json::to_vec_pretty(&TrainConfig::default())?)?;
    run.finish()
}

pub fn run(cli: &Cli) -> Result<()> {
    if let Some(jobs) = cli.jobs {
        // a second initialisation in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build_global();
    }
    match &cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Train(a) => cmd_train(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::CrossValidate(a) => cmd_cross_validate(a, false),
        Command::Ablate(a) => cmd_cross_validate(a, true),
        Command::Mobility(a) => cmd_mobility(a),
        Command::InitConfig(a) => cmd_init_config(a),
    }
}

/// Parses `args` and runs; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match run(&cli) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
