//! Command-line front end.
//!
//! Every subcommand is also a library function (`cmd_*`) so that it can be
//! driven from tests without spawning a process.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::bag::{
    read_bag_features, read_dataset, read_manifest, write_bag, write_dataset, Bag, ManifestEntry,
};
use crate::config::ExperimentConfig;
use crate::error::{io_at, Error, Result};
use crate::metrics::{ConfusionMatrix, MetricReport, MetricSettings};
use crate::remix::{bench_remix, remix, BenchReport, RemixMethod};
use crate::synth::generate;
use crate::trainer::{
    config_hash, decode_checkpoint, encode_checkpoint, evaluate, trace_csv, train, EpochStats,
    Evaluation,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MethodFlag {
    Sfr,
    RandomMix,
}

impl From<MethodFlag> for RemixMethod {
    fn from(m: MethodFlag) -> Self {
        match m {
            MethodFlag::Sfr => RemixMethod::Sfr,
            MethodFlag::RandomMix => RemixMethod::RandomMix,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "sevmil",
    version,
    about = "Severity-aware multiple instance learning toolkit"
)]
pub struct Cli {
    /// Experiment config (TOML).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides every seed in the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory; defaults to `output_dir` from the config.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker threads, 0 = one per core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    #[arg(long, global = true, value_enum, default_value_t = OutputFormat::Json)]
    pub format: OutputFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic dataset (bag files plus manifest).
    Gen,
    /// Train a model; writes a checkpoint and the loss trace.
    Train {
        /// Dataset manifest; defaults to `dataset` from the config, else synthetic data.
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score a checkpoint on a dataset.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        data: PathBuf,
    },
    /// Remix donor bag A into recipient bag B.
    Remix {
        #[arg(long)]
        bag_a: PathBuf,
        #[arg(long)]
        bag_b: PathBuf,
        #[arg(long, value_enum, default_value_t = MethodFlag::Sfr)]
        method: MethodFlag,
        /// Manifest holding the labels of both bags.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Finest class of bag A, when no manifest is given.
        #[arg(long)]
        label_a: Option<usize>,
        #[arg(long)]
        label_b: Option<usize>,
    },
    /// Time a remix method over all priority pairs of a dataset.
    Bench {
        #[arg(long, value_enum, default_value_t = MethodFlag::Sfr)]
        method: MethodFlag,
        #[arg(long, default_value_t = 3)]
        reps: usize,
        #[arg(long)]
        data: Option<PathBuf>,
    },
    /// Score an external confusion matrix (`true,pred,count` CSV).
    Metrics {
        #[arg(long)]
        confusion: PathBuf,
        /// Hierarchy level of the matrix; defaults to the finest.
        #[arg(long)]
        level: Option<usize>,
        /// Severity penalty P; defaults to the config value.
        #[arg(long)]
        penalty: Option<f64>,
    },
}

/// JSON with keys sorted and a trailing newline.
pub fn canonical_json<T: Serialize>(value: &T) -> Result<String> {
    let v = serde_json::to_value(value)?;
    Ok(serde_json::to_string_pretty(&v)? + "\n")
}

fn load_dataset(cfg: &ExperimentConfig, data: Option<&Path>) -> Result<Vec<Bag>> {
    let h = cfg.hierarchy()?;
    if let Some(p) = data
        .map(Path::to_path_buf)
        .or_else(|| cfg.dataset.as_ref().map(PathBuf::from))
    {
        return read_dataset(&p, Some(&h));
    }
    let spec = cfg
        .synth
        .as_ref()
        .ok_or_else(|| Error::Config("no dataset given and no [synth] section".into()))?;
    generate(spec, &h)
}

pub fn cmd_gen(cfg: &ExperimentConfig, out_dir: &Path) -> Result<PathBuf> {
    let h = cfg.validate()?;
    let spec = cfg
        .synth
        .as_ref()
        .ok_or_else(|| Error::Config("gen needs a [synth] section".into()))?;
    let bags = generate(spec, &h)?;
    write_dataset(out_dir, &bags)
}

#[derive(Clone, Debug)]
pub struct TrainArtifacts {
    pub checkpoint: PathBuf,
    pub trace_csv: PathBuf,
    pub trace: Vec<EpochStats>,
}

pub fn cmd_train(
    cfg: &ExperimentConfig,
    data: Option<&Path>,
    out_dir: &Path,
) -> Result<TrainArtifacts> {
    let h = cfg.validate()?;
    let bags = load_dataset(cfg, data)?;
    let outcome = train(&bags, &h, &cfg.loss, &cfg.remix, &cfg.train)?;
    fs::create_dir_all(out_dir)?;
    let hash = config_hash(&cfg.to_toml()?);
    let checkpoint = out_dir.join("model.ckpt");
    fs::write(&checkpoint, encode_checkpoint(&outcome.model, &hash))?;
    let trace_path = out_dir.join("trace.csv");
    fs::write(&trace_path, trace_csv(&outcome.trace))?;
    Ok(TrainArtifacts {
        checkpoint,
        trace_csv: trace_path,
        trace: outcome.trace,
    })
}

fn write_reports(
    reports: &[MetricReport],
    out_dir: &Path,
    format: OutputFormat,
) -> Result<PathBuf> {
    let path = match format {
        OutputFormat::Json => {
            let p = out_dir.join("report.json");
            fs::write(&p, canonical_json(&reports)?)?;
            p
        }
        OutputFormat::Csv => {
            let p = out_dir.join("report.csv");
            let mut s = String::from("level,metric,value\n");
            reports.iter().for_each(|r| s.push_str(&r.csv_rows()));
            fs::write(&p, s)?;
            p
        }
    };
    Ok(path)
}

/// Writes `report.{json,csv}` and `confusion_level<h>.csv`.
pub fn cmd_eval(
    cfg: &ExperimentConfig,
    checkpoint: &Path,
    data: &Path,
    out_dir: &Path,
    format: OutputFormat,
) -> Result<Evaluation> {
    let h = cfg.validate()?;
    let bytes = fs::read(checkpoint).map_err(io_at(checkpoint))?;
    let (model, hash) = decode_checkpoint(&bytes).map_err(|e| match e {
        Error::BadMagic { .. } => Error::BadMagic {
            path: checkpoint.into(),
        },
        Error::Truncated {
            expected, found, ..
        } => Error::Truncated {
            path: checkpoint.into(),
            expected,
            found,
        },
        other => other,
    })?;
    if model.class_counts() != h.class_counts() {
        return Err(Error::ManifestMismatch(format!(
            "checkpoint has {:?} classes per level, config {:?}",
            model.class_counts(),
            h.class_counts()
        )));
    }
    if hash != config_hash(&cfg.to_toml()?) {
        log::warn!("checkpoint was trained with a different config");
    }
    let bags = read_dataset(data, Some(&h))?;
    let evaluation = evaluate(&model, &bags, &h, &cfg.metrics)?;
    fs::create_dir_all(out_dir)?;
    write_reports(&evaluation.reports, out_dir, format)?;
    for cm in &evaluation.confusion {
        fs::write(
            out_dir.join(format!("confusion_level{}.csv", cm.level)),
            cm.to_csv(),
        )?;
    }
    Ok(evaluation)
}

/// Which donor instances went into a remixed bag.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SelectionLog {
    pub method: RemixMethod,
    pub donor: String,
    pub recipient: String,
    pub donor_instances: usize,
    pub recipient_instances: usize,
    /// Donor instance indices, ascending; appended after the recipient's instances.
    pub selected: Vec<usize>,
    pub cluster_order: Vec<usize>,
    pub cluster_sizes: Vec<usize>,
    pub cluster_donor_counts: Vec<usize>,
    pub zero_norm: Vec<usize>,
    pub degenerate_reference: bool,
    pub seed: u64,
}

pub struct RemixInputs<'a> {
    pub bag_a: &'a Path,
    pub bag_b: &'a Path,
    pub manifest: Option<&'a Path>,
    pub label_a: Option<usize>,
    pub label_b: Option<usize>,
}

fn labelled_bag(
    path: &Path,
    manifest: Option<&[ManifestEntry]>,
    base: &Path,
    label: Option<usize>,
    h: &crate::hierarchy::Hierarchy,
) -> Result<Bag> {
    let (_, d, features) = read_bag_features(path)?;
    let stem = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    if let Some(entries) = manifest {
        let target = fs::canonicalize(path)?;
        for e in entries {
            if fs::canonicalize(base.join(&e.path)).ok().as_deref() == Some(target.as_path()) {
                let mut bag = Bag::new(e.id.clone(), d, features, e.labels.clone())?;
                if let Some(il) = &e.instance_labels {
                    bag = bag.with_instance_labels(il.clone())?;
                }
                if !h.labels_consistent(&bag.labels) {
                    return Err(Error::ManifestMismatch(format!(
                        "bag {} has invalid labels",
                        e.id
                    )));
                }
                return Ok(bag);
            }
        }
        return Err(Error::ManifestMismatch(format!(
            "{} is not listed in the manifest",
            path.display()
        )));
    }
    let label = label.ok_or_else(|| {
        Error::Config(format!(
            "no manifest given and no label for {}",
            path.display()
        ))
    })?;
    Bag::new(stem, d, features, h.labels_for(label)?)
}

/// Writes `remixed.milb`, `remixed.manifest.json` and `selection.json`.
pub fn cmd_remix(
    cfg: &ExperimentConfig,
    inputs: &RemixInputs<'_>,
    method: RemixMethod,
    out_dir: &Path,
) -> Result<SelectionLog> {
    let h = cfg.validate()?;
    let entries = inputs.manifest.map(read_manifest).transpose()?;
    let base = inputs
        .manifest
        .and_then(Path::parent)
        .unwrap_or(Path::new("."));
    let a = labelled_bag(inputs.bag_a, entries.as_deref(), base, inputs.label_a, &h)?;
    let b = labelled_bag(inputs.bag_b, entries.as_deref(), base, inputs.label_b, &h)?;
    let seed = cfg.train.seed;
    let out = remix(method, &a, &b, &h, &cfg.remix, seed)?;
    fs::create_dir_all(out_dir)?;
    write_bag(&out.bag, &out_dir.join("remixed.milb"))?;
    let entry = ManifestEntry::for_bag(&out.bag, "remixed.milb");
    fs::write(
        out_dir.join("remixed.manifest.json"),
        canonical_json(&vec![entry])?,
    )?;
    let log = SelectionLog {
        method,
        donor: a.id.clone(),
        recipient: b.id.clone(),
        donor_instances: a.len(),
        recipient_instances: b.len(),
        selected: out.selected,
        cluster_order: out.cluster_order,
        cluster_sizes: out
            .assignment
            .as_ref()
            .map(|x| x.sizes())
            .unwrap_or_default(),
        cluster_donor_counts: out
            .assignment
            .as_ref()
            .map(|x| x.donor_counts())
            .unwrap_or_default(),
        zero_norm: out.zero_norm,
        degenerate_reference: out.degenerate_reference,
        seed,
    };
    fs::write(out_dir.join("selection.json"), canonical_json(&log)?)?;
    Ok(log)
}

/// Writes `bench_<method>.json`.
pub fn cmd_bench(
    cfg: &ExperimentConfig,
    data: Option<&Path>,
    method: RemixMethod,
    reps: usize,
    out_dir: &Path,
) -> Result<BenchReport> {
    let h = cfg.validate()?;
    let bags = load_dataset(cfg, data)?;
    let report = bench_remix(&bags, &h, method, &cfg.remix, reps, cfg.train.seed)?;
    fs::create_dir_all(out_dir)?;
    let name = match method {
        RemixMethod::Sfr => "bench_sfr.json",
        RemixMethod::RandomMix => "bench_random_mix.json",
    };
    fs::write(out_dir.join(name), canonical_json(&report)?)?;
    Ok(report)
}

/// Scores a confusion CSV against the configured hierarchy.
pub fn cmd_metrics(
    cfg: &ExperimentConfig,
    confusion_csv: &Path,
    level: Option<usize>,
    penalty: Option<f64>,
) -> Result<MetricReport> {
    let h = cfg.validate()?;
    let level = level.unwrap_or(h.finest());
    let n = h.num_classes(level)?;
    let text = fs::read_to_string(confusion_csv).map_err(io_at(confusion_csv))?;
    let cm = ConfusionMatrix::from_csv(&text, level, n)?;
    let settings = MetricSettings {
        penalty: penalty.unwrap_or(cfg.metrics.penalty),
        ..cfg.metrics
    };
    if !(settings.penalty >= 0.0) {
        return Err(Error::InvalidParameter("penalty must be >= 0".into()));
    }
    MetricReport::from_confusion(&cm, &h, &settings)
}

#[derive(Serialize)]
struct ErrorBody<'a> {
    code: &'a str,
    message: String,
}

#[derive(Serialize)]
struct ErrorReport<'a> {
    error: ErrorBody<'a>,
}

pub fn error_json(code: &str, message: String) -> String {
    serde_json::to_string(&ErrorReport {
        error: ErrorBody { code, message },
    })
    .expect("error report serializes")
}

fn execute(cli: Cli) -> Result<String> {
    let path = cli
        .config
        .as_deref()
        .ok_or_else(|| Error::Config("--config is required".into()))?;
    let mut cfg = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        cfg.set_seed(seed);
    }
    let out = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from(&cfg.output_dir));
    match cli.command {
        Command::Gen => {
            let manifest = cmd_gen(&cfg, &out)?;
            Ok(format!("{}\n", manifest.display()))
        }
        Command::Train { data } => {
            let art = cmd_train(&cfg, data.as_deref(), &out)?;
            match cli.format {
                OutputFormat::Json => canonical_json(&art.trace),
                OutputFormat::Csv => Ok(trace_csv(&art.trace)),
            }
        }
        Command::Eval { checkpoint, data } => {
            let ev = cmd_eval(&cfg, &checkpoint, &data, &out, cli.format)?;
            match cli.format {
                OutputFormat::Json => canonical_json(&ev.reports),
                OutputFormat::Csv => Ok(ev.reports.iter().map(|r| r.csv_rows()).collect()),
            }
        }
        Command::Remix {
            bag_a,
            bag_b,
            method,
            manifest,
            label_a,
            label_b,
        } => {
            let inputs = RemixInputs {
                bag_a: &bag_a,
                bag_b: &bag_b,
                manifest: manifest.as_deref(),
                label_a,
                label_b,
            };
            canonical_json(&cmd_remix(&cfg, &inputs, method.into(), &out)?)
        }
        Command::Bench { method, reps, data } => {
            let report = cmd_bench(&cfg, data.as_deref(), method.into(), reps, &out)?;
            match cli.format {
                OutputFormat::Json => canonical_json(&report),
                OutputFormat::Csv => {
                    let mut s = String::from("repetition,seconds_per_sample\n");
                    for (i, t) in report.timing.per_repetition.iter().enumerate() {
                        s.push_str(&format!("{i},{t}\n"));
                    }
                    Ok(s)
                }
            }
        }
        Command::Metrics {
            confusion,
            level,
            penalty,
        } => {
            let report = cmd_metrics(&cfg, &confusion, level, penalty)?;
            match cli.format {
                OutputFormat::Json => canonical_json(&report),
                OutputFormat::Csv => Ok(format!("level,metric,value\n{}", report.csv_rows())),
            }
        }
    }
}

/// Parses `args`, runs the command and returns the process exit code.
/// Results go to stdout; failures are reported on stderr as
/// `{"error":{"code":...,"message":...}}`.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::new().filter_or("SEVMIL_LOG", "warn"))
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            eprintln!("{}", error_json("usage", e.to_string().trim().to_string()));
            return 64;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("{}", error_json("invalid_parameter", e.to_string()));
            return 4;
        }
    };
    match pool.install(|| execute(cli)) {
        Ok(text) => {
            print!("{text}");
            0
        }
        Err(e) => {
            eprintln!("{}", error_json(e.code(), e.to_string()));
            e.exit_code()
        }
    }
}
