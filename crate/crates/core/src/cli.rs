//! Command-line front end for the `tcn` binary.
//!
//! Every subcommand reads its inputs, writes only below `--out-dir`, and on
//! failure prints one final line `error: <category>: <message>` to stderr.
//! Exit status: 0 success, 2 usage or configuration, 3 bad data, 4 internal.
//!
//! Settings come from built-in defaults, then an optional TOML file
//! (`--config`), then command-line flags; later sources win.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::anchors::{generate_anchors, AnchorConfig};
use crate::classifier::{train_classifier, Classifier, ClassifierConfig};
use crate::data_io::features::{feature_path, write_features};
use crate::data_io::manifest::load_manifest;
use crate::data_io::synth::{generate_synthetic, SynthConfig};
use crate::detect::{load_detections, load_proposals, propose, save_detections, save_proposals, DetectConfig, DetectionModels, ScoreCombination};
use crate::error::Error;
use crate::metrics::{recall_vs_iou_curve, recall_vs_k, summarize_with, write_xy, EvalConfig, ProposalMap};
use crate::pipeline::{classifier_dataset, detect_corpus, ranker_dataset, with_jobs, Corpus};
use crate::ranker::{train_ranker, Ranker, RankerConfig};

pub const RANKER_FILE: &str = "ranker.tcnw";
pub const CLASSIFIER_FILE: &str = "classifier.tcnw";
pub const PROPOSALS_FILE: &str = "proposals.jsonl";
pub const DETECTIONS_FILE: &str = "detections.jsonl";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const FEATURES_DIR: &str = "features";
pub const SUMMARY_FILE: &str = "summary.json";
pub const TIMELINES_FILE: &str = "timelines.jsonl";

/// Everything a TOML config file may set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub seed: u64,
    /// Worker threads for per-video work; 0 uses every core.
    pub jobs: usize,
    pub ranker_iterations: usize,
    pub classifier_iterations: usize,
    /// Proposals per video written by `rank`.
    pub rank_top_k: usize,
    pub anchors: AnchorConfig,
    pub ranker: RankerConfig,
    pub classifier: ClassifierConfig,
    pub detect: DetectConfig,
    pub synth: SynthConfig,
    pub eval: EvalConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            jobs: 0,
            ranker_iterations: 300,
            classifier_iterations: 3000,
            rank_top_k: 500,
            anchors: AnchorConfig::default(),
            ranker: RankerConfig::default(),
            classifier: ClassifierConfig::default(),
            detect: DetectConfig::default(),
            synth: SynthConfig::default(),
            eval: EvalConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
        toml::from_str(&text).map_err(|e| {
            CliError::Lib(Error::Parse { path: path.display().to_string(), message: e.to_string().replace('\n', " ") })
        })
    }
}

#[derive(Debug, Parser)]
#[command(name = "tcn", version, about = "Temporal proposal ranking, segment classification and evaluation")]
pub struct Cli {
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    /// TOML file with settings; flags override it.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Worker threads for per-video work (0 = all cores).
    #[arg(long, global = true)]
    pub jobs: Option<usize>,
    /// Master seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Dataset manifest (JSON).
    #[arg(long, value_name = "FILE")]
    pub manifest: PathBuf,
    /// Directory holding `<video_id>.tcnf` feature files.
    #[arg(long, value_name = "DIR")]
    pub features: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ScoreArg {
    ClassifierOnly,
    Product,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic benchmark (manifest plus feature files).
    Synth {
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long)]
        num_videos: Option<usize>,
        #[arg(long)]
        snr: Option<f64>,
        /// Leave out the boundary transients.
        #[arg(long)]
        no_boundary_signal: bool,
    },
    /// Train the context ranker.
    TrainRanker {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        scale_factor: Option<f64>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Train the segment classifier.
    TrainClassifier {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long)]
        iterations: Option<usize>,
        #[arg(long)]
        learning_rate: Option<f64>,
    },
    /// Score anchors and write ranked proposals after NMS.
    Rank {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "FILE")]
        ranker: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        nms_threshold: Option<f64>,
    },
    /// Run the full detection pipeline.
    Detect {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "FILE")]
        ranker: PathBuf,
        #[arg(long, value_name = "FILE")]
        classifier: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long)]
        top_k: Option<usize>,
        #[arg(long)]
        nms_threshold: Option<f64>,
        #[arg(long, value_enum)]
        score_combination: Option<ScoreArg>,
        #[arg(long)]
        nms_after_classification: bool,
    },
    /// Print proposal recall and detection mAP against a manifest.
    Eval {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_name = "FILE")]
        proposals: Option<PathBuf>,
        #[arg(long, value_name = "FILE")]
        detections: Option<PathBuf>,
        /// Also write the JSON summary and plot data here.
        #[arg(long, value_name = "DIR")]
        out_dir: Option<PathBuf>,
    },
    /// Per-video ground truth next to the top proposals, for timeline plots.
    ExportTimelines {
        #[arg(long, value_name = "FILE")]
        manifest: PathBuf,
        #[arg(long, value_name = "FILE")]
        proposals: PathBuf,
        #[arg(long, value_name = "DIR")]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 5)]
        top: usize,
    },
    /// Print the anchor pyramid for a video length as JSON lines.
    GenerateAnchors {
        #[arg(long)]
        num_frames: usize,
        #[arg(long)]
        base_length: Option<u32>,
        #[arg(long)]
        num_scales: Option<u32>,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Synth { .. } => "synth",
            Command::TrainRanker { .. } => "train-ranker",
            Command::TrainClassifier { .. } => "train-classifier",
            Command::Rank { .. } => "rank",
            Command::Detect { .. } => "detect",
            Command::Eval { .. } => "eval",
            Command::ExportTimelines { .. } => "export-timelines",
            Command::GenerateAnchors { .. } => "generate-anchors",
        }
    }
}

#[derive(Debug)]
pub enum CliError {
    /// Bad invocation; carries the subcommand whose usage should be shown.
    Usage { command: Option<&'static str>, message: String },
    Lib(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => 2,
            CliError::Lib(e) if e.category() == "config" => 2,
            CliError::Lib(e) if e.is_internal() => 4,
            CliError::Lib(_) => 3,
        }
    }

    pub fn category(&self) -> &'static str {
        match self {
            CliError::Usage { .. } => "usage",
            CliError::Lib(e) => e.category(),
        }
    }

    /// The single trailing error line.
    pub fn line(&self) -> String {
        let msg = match self {
            CliError::Usage { message, .. } => message.clone(),
            CliError::Lib(e) => e.to_string(),
        };
        format!("error: {}: {}", self.category(), msg.replace('\n', " "))
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn require_file(command: &'static str, flag: &str, path: &Path) -> CliResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CliError::Usage { command: Some(command), message: format!("--{flag} {}: no such file", path.display()) })
    }
}

fn require_dir(command: &'static str, flag: &str, path: &Path) -> CliResult {
    if path.is_dir() {
        Ok(())
    } else {
        Err(CliError::Usage { command: Some(command), message: format!("--{flag} {}: no such directory", path.display()) })
    }
}

fn out_dir(path: &Path) -> CliResult<&Path> {
    std::fs::create_dir_all(path).map_err(|e| Error::Io { path: path.into(), source: e })?;
    Ok(path)
}

fn load_corpus(command: &'static str, data: &DataArgs) -> CliResult<Corpus> {
    require_file(command, "manifest", &data.manifest)?;
    require_dir(command, "features", &data.features)?;
    Ok(Corpus::load(&data.manifest, &data.features)?)
}

/// Parses `args` (including the program name) and runs the subcommand.
/// Regular output goes to `out`; returns the process exit status.
pub fn run<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = write!(out, "{e}");
                return 0;
            }
            if matches!(e.kind(), ErrorKind::DisplayHelpOnMissingArgumentOrSubcommand) {
                let _ = write!(err, "{e}");
            } else {
                let rendered = e.to_string();
                let first = rendered
                    .lines()
                    .take_while(|l| !l.trim().is_empty())
                    .map(str::trim)
                    .collect::<Vec<_>>()
                    .join(" ")
                    .trim_start_matches("error: ")
                    .to_string();
                let _ = write!(err, "{rendered}");
                let _ = writeln!(err, "{}", CliError::Usage { command: None, message: first }.line());
                return 2;
            }
            let _ = writeln!(err, "{}", CliError::Usage { command: None, message: "missing subcommand".into() }.line());
            return 2;
        }
    };
    init_logging(cli.verbose);
    match execute(&cli, out) {
        Ok(()) => 0,
        // reader closed stdout early, e.g. `| head`
        Err(CliError::Lib(Error::Io { source, .. })) if source.kind() == std::io::ErrorKind::BrokenPipe => 0,
        Err(e) => {
            if let CliError::Usage { command: Some(name), .. } = &e {
                let mut cmd = Cli::command();
                cmd.build();
                if let Some(sub) = cmd.find_subcommand_mut(name) {
                    let _ = writeln!(err, "{}", sub.render_usage());
                }
            }
            let _ = writeln!(err, "{}", e.line());
            e.exit_code()
        }
    }
}

fn init_logging(verbose: u8) {
    let level = match verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).format_timestamp(None).try_init();
}

fn execute(cli: &Cli, out: &mut (dyn Write + Send)) -> CliResult {
    let mut cfg = match &cli.config {
        Some(p) => {
            require_file(cli.command.name(), "config", p)?;
            RunConfig::load(p)?
        }
        None => RunConfig::default(),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
        cfg.synth.seed = s;
    }
    if let Some(j) = cli.jobs {
        cfg.jobs = j;
    }
    let jobs = cfg.jobs;
    with_jobs(jobs, || dispatch(cli, cfg, out))?
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| Error::Io { path: path.into(), source: e }
}

fn dispatch(cli: &Cli, cfg: RunConfig, out: &mut (dyn Write + Send)) -> CliResult {
    let name = cli.command.name();
    match &cli.command {
        Command::Synth { out_dir: dir, num_videos, snr, no_boundary_signal } => {
            let mut s = cfg.synth;
            if let Some(n) = num_videos {
                s.num_videos = *n;
            }
            if let Some(v) = snr {
                s.snr = *v;
            }
            if *no_boundary_signal {
                s.boundary_signal = false;
            }
            let dir = out_dir(dir)?;
            let ds = generate_synthetic(&s)?;
            let fdir = dir.join(FEATURES_DIR);
            std::fs::create_dir_all(&fdir).map_err(io_err(&fdir))?;
            for fs in &ds.features {
                write_features(feature_path(&fdir, fs.video_id()), fs)?;
            }
            ds.manifest.save(dir.join(MANIFEST_FILE))?;
            writeln!(out, "wrote {} videos to {}", ds.features.len(), dir.display()).map_err(io_err(dir))?;
        }
        Command::TrainRanker { data, out_dir: dir, iterations, scale_factor, learning_rate } => {
            let corpus = load_corpus(name, data)?;
            let mut rcfg = RankerConfig { feature_dim: corpus.feature_dim(), ..cfg.ranker };
            if let Some(f) = scale_factor {
                rcfg.scale_factor = *f;
            }
            if let Some(lr) = learning_rate {
                rcfg.optimizer.learning_rate = *lr;
            }
            rcfg.validate()?;
            cfg.anchors.validate()?;
            let iterations = iterations.unwrap_or(cfg.ranker_iterations);
            let dir = out_dir(dir)?;
            let ds = ranker_dataset(&corpus, &cfg.anchors, &rcfg)?;
            log::info!("ranker dataset: {} pairs from {} videos", ds.len(), corpus.len());
            let (model, report) = train_ranker(&ds, &rcfg, iterations, cfg.seed)?;
            model.save(dir.join(RANKER_FILE))?;
            write_training_curve(&dir.join("ranker_loss.txt"), &report.losses)?;
            report_training(out, "ranker", &report.losses, &report.accuracies, dir)?;
        }
        Command::TrainClassifier { data, out_dir: dir, iterations, learning_rate } => {
            let corpus = load_corpus(name, data)?;
            let mut ccfg = ClassifierConfig {
                feature_dim: corpus.feature_dim(),
                num_classes: corpus.manifest.num_classes(),
                ..cfg.classifier
            };
            if let Some(lr) = learning_rate {
                ccfg.optimizer.learning_rate = *lr;
            }
            ccfg.validate()?;
            cfg.anchors.validate()?;
            let iterations = iterations.unwrap_or(cfg.classifier_iterations);
            let dir = out_dir(dir)?;
            let ds = classifier_dataset(&corpus, &cfg.anchors, &ccfg)?;
            log::info!("classifier dataset: {} segments from {} videos", ds.len(), corpus.len());
            let (model, report) = train_classifier(&ds, &ccfg, iterations, cfg.seed)?;
            model.save(dir.join(CLASSIFIER_FILE))?;
            write_training_curve(&dir.join("classifier_loss.txt"), &report.losses)?;
            report_training(out, "classifier", &report.losses, &report.accuracies, dir)?;
        }
        Command::Rank { data, ranker, out_dir: dir, top_k, nms_threshold } => {
            let corpus = load_corpus(name, data)?;
            require_file(name, "ranker", ranker)?;
            let model = Ranker::load(ranker)?;
            let top_k = top_k.unwrap_or(cfg.rank_top_k);
            let thr = nms_threshold.unwrap_or(cfg.detect.nms_threshold);
            DetectConfig { top_k, nms_threshold: thr, ..cfg.detect }.validate()?;
            cfg.anchors.validate()?;
            let dir = out_dir(dir)?;
            let lists = {
                use rayon::prelude::*;
                corpus
                    .features
                    .par_iter()
                    .map(|fs| propose(fs, &cfg.anchors, &model, top_k, thr))
                    .collect::<Result<Vec<_>, Error>>()?
            };
            let path = dir.join(PROPOSALS_FILE);
            save_proposals(&path, corpus.features.iter().zip(&lists).map(|(fs, ps)| (fs.video_id(), ps.as_slice())))?;
            let total: usize = lists.iter().map(Vec::len).sum();
            writeln!(out, "wrote {total} proposals for {} videos to {}", corpus.len(), path.display()).map_err(io_err(&path))?;
        }
        Command::Detect { data, ranker, classifier, out_dir: dir, top_k, nms_threshold, score_combination, nms_after_classification } => {
            let corpus = load_corpus(name, data)?;
            require_file(name, "ranker", ranker)?;
            require_file(name, "classifier", classifier)?;
            let models = DetectionModels { anchors: cfg.anchors, ranker: Ranker::load(ranker)?, classifier: Classifier::load(classifier)? };
            models.anchors.validate()?;
            if models.classifier.config().num_classes != corpus.manifest.num_classes() {
                return Err(Error::DimensionMismatch(format!(
                    "classifier predicts {} classes, manifest lists {}",
                    models.classifier.config().num_classes,
                    corpus.manifest.num_classes()
                ))
                .into());
            }
            let mut dcfg = cfg.detect;
            if let Some(k) = top_k {
                dcfg.top_k = *k;
            }
            if let Some(t) = nms_threshold {
                dcfg.nms_threshold = *t;
            }
            if let Some(s) = score_combination {
                dcfg.score_combination = match s {
                    ScoreArg::ClassifierOnly => ScoreCombination::ClassifierOnly,
                    ScoreArg::Product => ScoreCombination::Product,
                };
            }
            dcfg.nms_after_classification |= *nms_after_classification;
            dcfg.validate()?;
            let dir = out_dir(dir)?;
            let dets = detect_corpus(&corpus, &models, &dcfg)?;
            let path = dir.join(DETECTIONS_FILE);
            save_detections(&path, &dets, |c| corpus.class_name(c))?;
            writeln!(out, "wrote {} detections for {} videos to {}", dets.len(), corpus.len(), path.display()).map_err(io_err(&path))?;
        }
        Command::Eval { manifest, proposals, detections, out_dir: dir } => {
            cfg.eval.validate()?;
            require_file(name, "manifest", manifest)?;
            if proposals.is_none() && detections.is_none() {
                return Err(CliError::Usage { command: Some(name), message: "give --proposals, --detections or both".into() });
            }
            let gt = load_manifest(manifest)?.ground_truth()?;
            let props: Option<ProposalMap> = match proposals {
                Some(p) => {
                    require_file(name, "proposals", p)?;
                    Some(load_proposals(p)?.into_iter().map(|(k, v)| (k, v.into_iter().map(|(iv, _)| iv).collect())).collect())
                }
                None => None,
            };
            let dets = match detections {
                Some(p) => {
                    require_file(name, "detections", p)?;
                    Some(load_detections(p)?)
                }
                None => None,
            };
            let summary = summarize_with(props.as_ref(), dets.as_deref(), &gt, &cfg.eval)?;
            write!(out, "{}", summary.table()).map_err(io_err(manifest))?;
            if let Some(dir) = dir {
                let dir = out_dir(dir)?;
                summary.save(dir.join(SUMMARY_FILE))?;
                if let Some(props) = &props {
                    for k in [1, 5, 20, 100] {
                        let curve = recall_vs_iou_curve(props, &gt, k, &cfg.eval.iou_grid)?;
                        write_xy(dir.join(format!("recall_vs_iou_top{k}.txt")), "tiou", "recall", &curve.points())?;
                    }
                    let ks: Vec<usize> = [1, 2, 5, 10, 20, 50, 100, 200, 500].to_vec();
                    let pts: Vec<(f64, f64)> = recall_vs_k(props, &gt, &ks, 0.5)?.into_iter().map(|(k, r)| (k as f64, r)).collect();
                    write_xy(dir.join("recall_vs_k_tiou0.5.txt"), "proposals", "recall", &pts)?;
                }
            }
        }
        Command::ExportTimelines { manifest, proposals, out_dir: dir, top } => {
            require_file(name, "manifest", manifest)?;
            require_file(name, "proposals", proposals)?;
            let m = load_manifest(manifest)?;
            let props = load_proposals(proposals)?;
            let dir = out_dir(dir)?;
            let path = dir.join(TIMELINES_FILE);
            let mut buf = Vec::new();
            for g in m.ground_truth()? {
                let record = Timeline {
                    video_id: g.video_id.clone(),
                    num_frames: g.num_frames,
                    ground_truth: g
                        .intervals
                        .iter()
                        .map(|li| TimelineSpan {
                            begin: li.interval.begin(),
                            end: li.interval.end(),
                            label: m.class_name(li.class_id).map(str::to_string),
                            score: None,
                        })
                        .collect(),
                    proposals: props
                        .get(&g.video_id)
                        .map(|v| {
                            v.iter()
                                .take(*top)
                                .map(|(iv, s)| TimelineSpan { begin: iv.begin(), end: iv.end(), label: None, score: Some(*s) })
                                .collect()
                        })
                        .unwrap_or_default(),
                };
                let line = serde_json::to_string(&record).map_err(|e| Error::State(e.to_string()))?;
                writeln!(buf, "{line}").map_err(io_err(&path))?;
            }
            std::fs::write(&path, buf).map_err(io_err(&path))?;
            writeln!(out, "wrote {} timelines to {}", m.videos.len(), path.display()).map_err(io_err(&path))?;
        }
        Command::GenerateAnchors { num_frames, base_length, num_scales } => {
            let a = AnchorConfig {
                base_length: base_length.unwrap_or(cfg.anchors.base_length),
                num_scales: num_scales.unwrap_or(cfg.anchors.num_scales),
            };
            for p in generate_anchors(&a, *num_frames)? {
                let line = serde_json::json!({
                    "begin": p.interval.begin(),
                    "end": p.interval.end(),
                    "position": p.position,
                    "scale": p.scale,
                });
                writeln!(out, "{line}").map_err(io_err(Path::new("<stdout>")))?;
            }
        }
    }
    Ok(())
}

/// One line of `timelines.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timeline {
    pub video_id: String,
    pub num_frames: usize,
    pub ground_truth: Vec<TimelineSpan>,
    pub proposals: Vec<TimelineSpan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineSpan {
    pub begin: i64,
    pub end: i64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub score: Option<f64>,
}

fn write_training_curve(path: &Path, losses: &[f64]) -> CliResult {
    let pts: Vec<(f64, f64)> = losses.iter().enumerate().map(|(i, &l)| (i as f64, l)).collect();
    Ok(write_xy(path, "iteration", "loss", &pts)?)
}

fn report_training(out: &mut (dyn Write + Send), what: &str, losses: &[f64], accs: &[f64], dir: &Path) -> CliResult {
    let line = match (losses.last(), accs.last()) {
        (Some(l), Some(a)) => format!("{what}: {} iterations, final loss {l:.6}, batch accuracy {a:.4}", losses.len()),
        _ => format!("{what}: 0 iterations"),
    };
    writeln!(out, "{line}; saved to {}", dir.display()).map_err(io_err(dir))?;
    Ok(())
}
