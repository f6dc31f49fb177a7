use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use srea_core::data::{generate_cbf, generate_chp_like, load_tsv_channels, write_series_csv, ChpConfig, Dataset, Normalizer};
use srea_core::eval::{cd_diagram_svg, confusion_matrix, f1_report, Alternative};
use srea_core::nn::SreaModel;
use srea_core::noise::NoiseKind;
use srea_core::rng::{substream, Stream};
use srea_core::srea::predict_labels;

use crate::compare::{compare, load_runs, Scores};
use crate::config::{ConfigArgs, ExperimentConfig, NoiseArg};
use crate::corrupt::{corrupt_file, OracleFile};
use crate::error::CliError;
use crate::run::{write_json, Preprocessing, CODE_VERSION};
use crate::scheduler::{execute, worker_count, Job, Summary};

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub config: ConfigArgs,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Skip runs that already finished in the output directory.
    #[arg(long)]
    pub resume: bool,
}

#[derive(Debug, Clone, Args)]
pub struct CorruptArgs {
    #[arg(long)]
    pub input: PathBuf,
    #[arg(long)]
    pub output: PathBuf,
    #[arg(long)]
    pub oracle: PathBuf,
    #[arg(long = "noise-type", value_enum)]
    pub noise_type: NoiseArg,
    #[arg(long = "noise-ratio")]
    pub noise_ratio: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    /// Run directory holding `model.bin` and `preprocessing.json`.
    #[arg(long = "run-dir")]
    pub run_dir: PathBuf,
    /// Test file; repeat once per channel.
    #[arg(long = "data-path", required = true)]
    pub data_path: Vec<PathBuf>,
    /// Oracle with the true labels of the test file.
    #[arg(long = "oracle-path")]
    pub oracle_path: Option<PathBuf>,
    /// Also write the metrics to this file.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct CompareArgs {
    /// Output directories holding `runs.jsonl`.
    #[arg(required = true)]
    pub dirs: Vec<PathBuf>,
    /// Algorithm name per directory, comma-separated. Defaults to the run labels.
    #[arg(long, value_delimiter = ',')]
    pub names: Vec<String>,
    /// Algorithm tested against all others. Defaults to the first.
    #[arg(long)]
    pub reference: Option<String>,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Test only whether the reference is better.
    #[arg(long = "one-sided")]
    pub one_sided: bool,
    /// Directory for `compare.json` and the diagram files.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum GenKind {
    /// Cylinder-bell-funnel series as a label-first TSV file.
    Cbf,
    /// Simulated plant telemetry as CSV.
    Chp,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    #[arg(value_enum)]
    pub kind: GenKind,
    #[arg(long, default_value_t = 930)]
    pub n: usize,
    #[arg(long, default_value_t = 128)]
    pub length: usize,
    #[arg(long, default_value_t = 60)]
    pub days: usize,
    #[arg(long = "p-max", default_value_t = 50.0)]
    pub p_max: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    config: ExperimentConfig,
    config_hash: String,
    code_version: String,
    created_at: String,
}

fn mkdir(dir: &Path) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

/// Creates the output directory and its manifest. A resumed directory must
/// hold a manifest with the same configuration hash.
fn open_output(cfg: &ExperimentConfig, resume: bool) -> Result<PathBuf, CliError> {
    let runs = cfg.out.join("runs.jsonl");
    let manifest_path = cfg.out.join("manifest.json");
    if resume && manifest_path.is_file() {
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| CliError::io(&manifest_path, e))?;
        let old: Manifest = serde_json::from_str(&text)?;
        if old.config_hash != cfg.hash() {
            return Err(CliError::Config(format!(
                "{} was written by configuration {}, not {}",
                cfg.out.display(),
                old.config_hash,
                cfg.hash()
            )));
        }
        return Ok(runs);
    }
    if !resume && runs.exists() {
        return Err(CliError::Config(format!(
            "{} already exists; pass --resume or choose another --out",
            runs.display()
        )));
    }
    mkdir(&cfg.out)?;
    let manifest = Manifest {
        config: cfg.clone(),
        config_hash: cfg.hash(),
        code_version: CODE_VERSION.to_string(),
        created_at: chrono::Utc::now().to_rfc3339(),
    };
    write_json(&manifest_path, &manifest)?;
    Ok(runs)
}

fn finish(summary: Summary) -> Result<(), CliError> {
    if summary.skipped > 0 {
        println!("skipped {} finished runs", summary.skipped);
    }
    let mut records = summary.records;
    records.sort_by(|a, b| a.metrics.condition.cmp(&b.metrics.condition).then(a.metrics.seed.cmp(&b.metrics.seed)));
    for r in &records {
        println!("{}  seed {}  macro-F1 {:.4}", r.metrics.condition, r.metrics.seed, r.metrics.test_macro_f1);
    }
    if summary.failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Runtime(format!("{} runs failed", summary.failures.len())))
    }
}

pub fn train(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::resolve(args.config.config.as_deref(), &args.config)?;
    cfg.validate()?;
    let runs = open_output(&cfg, args.resume)?;
    let jobs: Vec<Job> = cfg
        .seeds
        .iter()
        .map(|&seed| Job {
            cfg: cfg.clone(),
            seed,
            dir: cfg.out.join(format!("seed-{seed}")),
        })
        .collect();
    let threads = worker_count(args.threads, jobs.len());
    finish(execute(jobs, threads, &runs, args.resume)?)
}

/// Every combination of noise type, ratio and seed, in that nesting order.
pub fn bench_jobs(cfg: &ExperimentConfig) -> Vec<Job> {
    let types = if cfg.noise_types.is_empty() { vec![cfg.noise_type] } else { cfg.noise_types.clone() };
    let ratios = if cfg.noise_ratios.is_empty() { vec![cfg.noise_ratio] } else { cfg.noise_ratios.clone() };
    let mut jobs = Vec::new();
    for &t in &types {
        for &r in &ratios {
            let mut c = cfg.clone();
            c.noise_type = t;
            c.noise_ratio = r;
            for &seed in &cfg.seeds {
                jobs.push(Job {
                    cfg: c.clone(),
                    seed,
                    dir: cfg.out.join(format!("{t}-{r:.2}")).join(format!("seed-{seed}")),
                });
            }
        }
    }
    jobs
}

pub fn bench(args: &TrainArgs) -> Result<(), CliError> {
    let cfg = ExperimentConfig::resolve(args.config.config.as_deref(), &args.config)?;
    cfg.validate()?;
    let runs = open_output(&cfg, args.resume)?;
    let jobs = bench_jobs(&cfg);
    let threads = worker_count(args.threads, jobs.len());
    log::info!("{} runs on {threads} workers", jobs.len());
    finish(execute(jobs, threads, &runs, args.resume)?)
}

pub fn corrupt(args: &CorruptArgs) -> Result<(), CliError> {
    let kind: NoiseKind = args.noise_type.into();
    let o = corrupt_file(&args.input, &args.output, &args.oracle, kind, args.noise_ratio, args.seed)?;
    println!("changed {} of {} labels", o.flipped.len(), o.labels.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct EvalReport {
    n: usize,
    macro_f1: f64,
    per_class_f1: Vec<f64>,
    empty_classes: Vec<usize>,
    confusion: Vec<Vec<usize>>,
}

pub fn eval(args: &EvalArgs) -> Result<(), CliError> {
    let pre_path = args.run_dir.join("preprocessing.json");
    let text = std::fs::read_to_string(&pre_path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => {
            CliError::Config(format!("{}: no such file (train with --checkpoints)", pre_path.display()))
        }
        _ => CliError::io(&pre_path, e),
    })?;
    let pre: Preprocessing = serde_json::from_str(&text)?;
    let model_path = args.run_dir.join("model.bin");
    if !model_path.is_file() {
        return Err(CliError::Config(format!("{}: no such file", model_path.display())));
    }
    let mut model = SreaModel::load(&model_path)?;
    for p in &args.data_path {
        if !p.is_file() {
            return Err(CliError::Config(format!("{}: no such file", p.display())));
        }
    }
    let paths: Vec<&Path> = args.data_path.iter().map(|p| p.as_path()).collect();
    let mut ds: Dataset = load_tsv_channels(&paths)?;
    if ds.channels != pre.channels || ds.len != pre.len {
        return Err(CliError::Config(format!(
            "data have {} channels of length {}, the model expects {} of length {}",
            ds.channels, ds.len, pre.channels, pre.len
        )));
    }
    let values: Vec<i64> = match &args.oracle_path {
        Some(p) => {
            let o = OracleFile::read(p)?;
            if o.labels.len() != ds.n() {
                return Err(CliError::Config(format!("oracle has {} labels, data have {} rows", o.labels.len(), ds.n())));
            }
            o.labels
        }
        None => ds.labels.iter().map(|&y| ds.class_values[y]).collect(),
    };
    let truth = values
        .iter()
        .map(|v| {
            pre.class_values
                .iter()
                .position(|c| c == v)
                .ok_or_else(|| CliError::Config(format!("label {v} was not seen in training")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    Normalizer {
        mean: pre.mean.clone(),
        std: pre.std.clone(),
    }
    .apply(&mut ds);
    let pred = predict_labels(&mut model, &ds.samples, ds.n())?;
    let k = pre.class_values.len();
    let report = f1_report(&pred, &truth, k);
    let out = EvalReport {
        n: ds.n(),
        macro_f1: report.macro_f1,
        per_class_f1: report.per_class,
        empty_classes: report.empty_classes,
        confusion: confusion_matrix(&pred, &truth, k),
    };
    println!("{}", serde_json::to_string_pretty(&out)?);
    if let Some(p) = &args.out {
        write_json(p, &out)?;
    }
    Ok(())
}

pub fn compare_cmd(args: &CompareArgs) -> Result<(), CliError> {
    if !args.names.is_empty() && args.names.len() != args.dirs.len() {
        return Err(CliError::Config(format!("{} names for {} directories", args.names.len(), args.dirs.len())));
    }
    let mut scores = Scores::default();
    for (i, dir) in args.dirs.iter().enumerate() {
        let runs = load_runs(dir)?;
        if runs.is_empty() {
            log::warn!("{} holds no runs", dir.display());
        }
        for r in runs {
            let name = args.names.get(i).unwrap_or(&r.metrics.label);
            scores.add(name, &r.metrics.condition, r.metrics.test_macro_f1);
        }
    }
    let reference = match &args.reference {
        Some(r) => r.clone(),
        None => scores
            .algorithms
            .first()
            .cloned()
            .ok_or_else(|| CliError::Config("no runs to compare".into()))?,
    };
    let alternative = if args.one_sided { Alternative::Greater } else { Alternative::TwoSided };
    let c = compare(&scores, &reference, args.alpha, alternative)?;
    print!("{}", c.table());
    if let Some(out) = &args.out {
        mkdir(out)?;
        write_json(&out.join("compare.json"), &c)?;
        if let Some(layout) = c.ranks.as_ref().and_then(|r| r.layout.as_ref()) {
            write_json(&out.join("cd_diagram.json"), layout)?;
            let svg = out.join("cd_diagram.svg");
            std::fs::write(&svg, cd_diagram_svg(layout)).map_err(|e| CliError::io(&svg, e))?;
        }
    }
    Ok(())
}

/// Label-first, tab-separated text, one sample per line.
pub fn dataset_tsv(ds: &Dataset) -> String {
    let mut s = String::new();
    for i in 0..ds.n() {
        let _ = write!(s, "{}", ds.class_values[ds.labels[i]]);
        for v in ds.sample(i) {
            let _ = write!(s, "\t{v}");
        }
        s.push('\n');
    }
    s
}

pub fn gen_data(args: &GenDataArgs) -> Result<(), CliError> {
    let mut rng = substream(args.seed, Stream::Generate);
    if let Some(parent) = args.out.parent().filter(|p| !p.as_os_str().is_empty()) {
        mkdir(parent)?;
    }
    match args.kind {
        GenKind::Cbf => {
            let ds = generate_cbf(args.n, args.length, &mut rng).map_err(|e| CliError::Config(e.to_string()))?;
            std::fs::write(&args.out, dataset_tsv(&ds)).map_err(|e| CliError::io(&args.out, e))?;
            println!("wrote {} series of length {} to {}", ds.n(), ds.len, args.out.display());
        }
        GenKind::Chp => {
            if args.days == 0 || !(args.p_max > 0.0) {
                return Err(CliError::Config("days and p-max must be positive".into()));
            }
            let cfg = ChpConfig {
                days: args.days,
                p_max: args.p_max,
                ..ChpConfig::default()
            };
            let s = generate_chp_like(&cfg, &mut rng)?;
            write_series_csv(&s, &args.out)?;
            println!("wrote {} minutes of telemetry to {}", s.len(), args.out.display());
        }
    }
    Ok(())
}
