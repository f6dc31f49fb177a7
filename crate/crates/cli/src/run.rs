//! One training run: preparation, training, evaluation and its files.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use srea_core::eval::{confusion_csv, confusion_matrix, f1_report};
use srea_core::srea::{predict_labels, train, Algorithm, EpochTrace, TrainData};

use crate::config::ExperimentConfig;
use crate::error::CliError;
use crate::pipeline::prepare;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// Outcome of a run that depends only on configuration and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetrics {
    pub config_hash: String,
    pub label: String,
    pub algorithm: Algorithm,
    pub condition: String,
    pub seed: u64,
    pub n_train: usize,
    pub n_test: usize,
    pub classes: usize,
    pub test_macro_f1: f64,
    pub per_class_f1: Vec<f64>,
    pub empty_classes: Vec<usize>,
    /// Rows are true classes, columns predictions.
    pub confusion: Vec<Vec<usize>>,
    /// Training labels that differ from the truth, when the truth is known.
    pub corrupted: Option<usize>,
    /// Share of corrupted labels whose final corrected label is the truth.
    pub restored_fraction: Option<f64>,
    pub corrected_label_accuracy: Option<f64>,
    pub relabeled_fraction: f64,
    pub center_collapse_events: usize,
    pub final_epoch: Option<EpochTrace>,
}

/// One line of `runs.jsonl`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    #[serde(flatten)]
    pub metrics: RunMetrics,
    pub wall_clock_s: f64,
    pub code_version: String,
    pub finished_at: String,
    pub dir: PathBuf,
}

/// Preprocessing stored next to a checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Preprocessing {
    pub channels: usize,
    pub len: usize,
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    pub class_values: Vec<i64>,
}

fn create(path: &Path) -> Result<BufWriter<File>, CliError> {
    File::create(path).map(BufWriter::new).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| CliError::io(path, e))
}

/// Trains `cfg` with `seed` and writes `metrics.json`, `trace.jsonl`,
/// `confusion.csv` and optionally a checkpoint into `dir`.
pub fn run_one(cfg: &ExperimentConfig, seed: u64, dir: &Path) -> Result<RunRecord, CliError> {
    let start = Instant::now();
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    let prepared = prepare(cfg, seed)?;
    let (tr, te) = (&prepared.train, &prepared.test);
    let data = TrainData {
        samples: &tr.samples,
        n: tr.n(),
        channels: tr.channels,
        len: tr.len,
        classes: tr.classes,
        labels: &tr.labels,
    };
    let trace_path = dir.join("trace.jsonl");
    let mut trace = create(&trace_path)?;
    let mut trace_err = None;
    let condition = match prepared.oracle_noise {
        Some((kind, ratio)) if cfg.noise_ratio == 0.0 => cfg.condition_with(kind, ratio),
        _ => cfg.condition(),
    };
    let tag = format!("{condition} seed {seed}");
    let mut out = train(data, &cfg.train_config(), seed, prepared.truth.as_deref(), |e| {
        if trace_err.is_none() {
            let line = serde_json::to_string(e).expect("trace serializes");
            if let Err(err) = writeln!(trace, "{line}") {
                trace_err = Some(err);
            }
        }
        log::debug!("{tag}: epoch {} loss {:.4} relabeled {:.3}", e.epoch, e.loss_total, e.relabel_fraction);
        if (e.epoch + 1) % 10 == 0 {
            log::info!("{tag}: epoch {} of {}", e.epoch + 1, cfg.epochs);
        }
    })?;
    if let Some(e) = trace_err {
        return Err(CliError::io(&trace_path, e));
    }
    trace.flush().map_err(|e| CliError::io(&trace_path, e))?;

    let pred = predict_labels(&mut out.model, &te.samples, te.n())?;
    let report = f1_report(&pred, &te.labels, te.classes);
    let confusion = confusion_matrix(&pred, &te.labels, te.classes);
    let (corrupted, restored, accuracy) = match &prepared.truth {
        Some(truth) => {
            let bad: Vec<usize> = (0..tr.n()).filter(|&i| tr.labels[i] != truth[i]).collect();
            let restored = bad.iter().filter(|&&i| out.corrected_labels[i] == truth[i]).count();
            let correct = (0..tr.n()).filter(|&i| out.corrected_labels[i] == truth[i]).count();
            let frac = (!bad.is_empty()).then(|| restored as f64 / bad.len() as f64);
            (Some(bad.len()), frac, Some(correct as f64 / tr.n() as f64))
        }
        None => (None, None, None),
    };
    let relabeled = out.corrected_labels.iter().zip(&tr.labels).filter(|(a, b)| a != b).count();
    let metrics = RunMetrics {
        config_hash: cfg.hash(),
        label: cfg.label(),
        algorithm: cfg.algorithm,
        condition,
        seed,
        n_train: tr.n(),
        n_test: te.n(),
        classes: tr.classes,
        test_macro_f1: report.macro_f1,
        per_class_f1: report.per_class,
        empty_classes: report.empty_classes,
        confusion: confusion.clone(),
        corrupted,
        restored_fraction: restored,
        corrected_label_accuracy: accuracy,
        relabeled_fraction: relabeled as f64 / tr.n() as f64,
        center_collapse_events: out.center_collapse_events,
        final_epoch: out.trace.last().cloned(),
    };
    write_json(&dir.join("metrics.json"), &metrics)?;
    let csv_path = dir.join("confusion.csv");
    std::fs::write(&csv_path, confusion_csv(&confusion)).map_err(|e| CliError::io(&csv_path, e))?;
    if cfg.checkpoints {
        out.model.save(&dir.join("model.bin"))?;
        let pre = Preprocessing {
            channels: tr.channels,
            len: tr.len,
            mean: prepared.normalizer.mean.clone(),
            std: prepared.normalizer.std.clone(),
            class_values: tr.class_values.clone(),
        };
        write_json(&dir.join("preprocessing.json"), &pre)?;
    }
    Ok(RunRecord {
        metrics,
        wall_clock_s: start.elapsed().as_secs_f64(),
        code_version: CODE_VERSION.to_string(),
        finished_at: chrono::Utc::now().to_rfc3339(),
        dir: dir.to_path_buf(),
    })
}
