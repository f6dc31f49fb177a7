//! Experiment configuration: a flat TOML file whose keys can all be
//! overridden on the command line.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srea_core::noise::NoiseKind;
use srea_core::srea::loss::LossFlags;
use srea_core::srea::{Algorithm, ScheduleParams, TrainConfig};

use crate::error::CliError;

/// Where the samples come from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetSource {
    /// Generated cylinder-bell-funnel series.
    Cbf,
    /// Simulated plant telemetry cut into labeled windows.
    Chp,
    /// Plant telemetry CSV (as written by `gen-data chp`) cut into windows.
    ChpCsv,
    /// Label-first text files, one per channel.
    Tsv,
    /// Binary dataset cache.
    Cache,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum AlgorithmArg {
    Srea,
    Ce,
}

impl From<AlgorithmArg> for Algorithm {
    fn from(a: AlgorithmArg) -> Self {
        match a {
            AlgorithmArg::Srea => Algorithm::Srea,
            AlgorithmArg::Ce => Algorithm::Ce,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum NoiseArg {
    Symmetric,
    Asymmetric,
    Flip,
}

impl From<NoiseArg> for NoiseKind {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Symmetric => NoiseKind::Symmetric,
            NoiseArg::Asymmetric => NoiseKind::Asymmetric,
            NoiseArg::Flip => NoiseKind::Flip,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    /// Input files; one per channel for `tsv`.
    pub data_path: Vec<PathBuf>,
    /// Separate test files. Without them the data are split by `split_ratio`.
    pub test_path: Vec<PathBuf>,
    /// Oracle written by `corrupt`, holding the true labels of `data_path`.
    pub oracle_path: Option<PathBuf>,
    /// Sample count and length of generated CBF data.
    pub n: usize,
    pub length: usize,
    /// Simulated days of plant telemetry.
    pub days: usize,
    /// Rated plant output used for the power levels.
    pub p_max: f64,
    pub split_ratio: f64,
    pub noise_type: NoiseKind,
    pub noise_ratio: f64,
    pub lambda_init: usize,
    pub delta_start: usize,
    pub delta_end: usize,
    pub use_ae: bool,
    pub use_cc: bool,
    pub use_prior: bool,
    pub halve_pseudo_sum: bool,
    pub coupled_weight_decay: bool,
    pub algorithm: Algorithm,
    pub epochs: usize,
    pub seeds: Vec<u64>,
    pub out: PathBuf,
    /// Save the trained model and preprocessing of every run.
    pub checkpoints: bool,
    /// Name used by `compare`; defaults to the algorithm.
    pub label: Option<String>,
    /// Noise grid expanded by `bench`.
    pub noise_types: Vec<NoiseKind>,
    pub noise_ratios: Vec<f64>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let schedule = ScheduleParams::default();
        Self {
            dataset: DatasetSource::Cbf,
            data_path: Vec::new(),
            test_path: Vec::new(),
            oracle_path: None,
            n: 930,
            length: 128,
            days: 60,
            p_max: 50.0,
            split_ratio: 0.8,
            noise_type: NoiseKind::Symmetric,
            noise_ratio: 0.0,
            lambda_init: schedule.lambda_init,
            delta_start: schedule.delta_start,
            delta_end: schedule.delta_end,
            use_ae: true,
            use_cc: true,
            use_prior: true,
            halve_pseudo_sum: false,
            coupled_weight_decay: false,
            algorithm: Algorithm::Srea,
            epochs: 100,
            seeds: vec![0],
            out: PathBuf::from("results"),
            checkpoints: false,
            label: None,
            noise_types: Vec::new(),
            noise_ratios: Vec::new(),
        }
    }
}

/// Fields that determine a run's results, in hashing order.
#[derive(Serialize)]
struct Semantic<'a> {
    dataset: DatasetSource,
    data_path: &'a [PathBuf],
    test_path: &'a [PathBuf],
    oracle_path: &'a Option<PathBuf>,
    n: usize,
    length: usize,
    days: usize,
    p_max: f64,
    split_ratio: f64,
    noise_type: NoiseKind,
    noise_ratio: f64,
    lambda_init: usize,
    delta_start: usize,
    delta_end: usize,
    use_ae: bool,
    use_cc: bool,
    use_prior: bool,
    halve_pseudo_sum: bool,
    coupled_weight_decay: bool,
    algorithm: Algorithm,
    epochs: usize,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    /// Reads `path` (if any), then applies command-line overrides.
    pub fn resolve(path: Option<&Path>, overrides: &ConfigArgs) -> Result<Self, CliError> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| CliError::Config(format!("{}: {e}", p.display())))?;
                Self::from_toml(&text)?
            }
            None => Self::default(),
        };
        overrides.apply(&mut cfg);
        Ok(cfg)
    }

    pub fn schedule(&self) -> ScheduleParams {
        ScheduleParams::new(self.lambda_init, self.delta_start, self.delta_end)
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            algorithm: self.algorithm,
            schedule: self.schedule(),
            flags: LossFlags {
                use_ae: self.use_ae,
                use_cc: self.use_cc,
                use_prior: self.use_prior,
            },
            epochs: self.epochs,
            halve_pseudo_sum: self.halve_pseudo_sum,
            coupled_weight_decay: self.coupled_weight_decay,
            ..TrainConfig::default()
        }
    }

    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| match self.algorithm {
            Algorithm::Srea => "srea".into(),
            Algorithm::Ce => "ce".into(),
        })
    }

    /// Short name of the data, used in condition keys.
    pub fn dataset_name(&self) -> String {
        match self.dataset {
            DatasetSource::Cbf => "cbf".into(),
            DatasetSource::Chp => "chp".into(),
            _ => self
                .data_path
                .first()
                .and_then(|p| p.file_stem())
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "data".into()),
        }
    }

    /// Comparison key: data, noise type and ratio.
    pub fn condition(&self) -> String {
        self.condition_with(self.noise_type, self.noise_ratio)
    }

    pub fn condition_with(&self, kind: NoiseKind, ratio: f64) -> String {
        format!("{}/{kind}/{ratio:.2}", self.dataset_name())
    }

    /// Hex digest over the fields that affect results. Output location,
    /// seeds, labels and the bench grid are excluded.
    pub fn hash(&self) -> String {
        let s = Semantic {
            dataset: self.dataset,
            data_path: &self.data_path,
            test_path: &self.test_path,
            oracle_path: &self.oracle_path,
            n: self.n,
            length: self.length,
            days: self.days,
            p_max: self.p_max,
            split_ratio: self.split_ratio,
            noise_type: self.noise_type,
            noise_ratio: self.noise_ratio,
            lambda_init: self.lambda_init,
            delta_start: self.delta_start,
            delta_end: self.delta_end,
            use_ae: self.use_ae,
            use_cc: self.use_cc,
            use_prior: self.use_prior,
            halve_pseudo_sum: self.halve_pseudo_sum,
            coupled_weight_decay: self.coupled_weight_decay,
            algorithm: self.algorithm,
            epochs: self.epochs,
        };
        let json = serde_json::to_string(&s).expect("config serializes");
        let digest = Sha256::digest(json.as_bytes());
        digest[..8].iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        let mut seen = HashSet::new();
        if let Some(s) = self.seeds.iter().find(|s| !seen.insert(**s)) {
            return bad(format!("seed {s} is listed twice"));
        }
        for r in std::iter::once(&self.noise_ratio).chain(&self.noise_ratios) {
            if !(0.0..1.0).contains(r) {
                return bad(format!("noise ratio {r} outside [0, 1)"));
            }
        }
        if self.epochs == 0 {
            return bad("epochs must be positive".into());
        }
        if self.algorithm == Algorithm::Srea {
            self.schedule().validate(self.epochs).map_err(CliError::Config)?;
        }
        if self.test_path.is_empty() && !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad(format!("split ratio {} outside (0, 1)", self.split_ratio));
        }
        match self.dataset {
            DatasetSource::Cbf if self.n < 3 || self.length < 16 => {
                return bad(format!("CBF needs n >= 3 and length >= 16, got n={} length={}", self.n, self.length));
            }
            DatasetSource::Chp if self.days == 0 => return bad("days must be positive".into()),
            DatasetSource::Tsv | DatasetSource::Cache | DatasetSource::ChpCsv if self.data_path.is_empty() => {
                return bad(format!("dataset {:?} needs data_path", self.dataset));
            }
            _ => {}
        }
        if matches!(self.dataset, DatasetSource::Chp | DatasetSource::ChpCsv) && !(self.p_max > 0.0) {
            return bad("p_max must be positive".into());
        }
        for p in self.data_path.iter().chain(&self.test_path).chain(&self.oracle_path) {
            if !p.is_file() {
                return bad(format!("{}: no such file", p.display()));
            }
        }
        Ok(())
    }
}

/// Command-line overrides for every configuration key.
#[derive(Debug, Clone, Default, Args)]
pub struct ConfigArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetSource>,
    /// Input file; repeat once per channel.
    #[arg(long = "data-path")]
    pub data_path: Vec<PathBuf>,
    #[arg(long = "test-path")]
    pub test_path: Vec<PathBuf>,
    #[arg(long = "oracle-path")]
    pub oracle_path: Option<PathBuf>,
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub length: Option<usize>,
    #[arg(long)]
    pub days: Option<usize>,
    #[arg(long = "p-max")]
    pub p_max: Option<f64>,
    #[arg(long = "split-ratio")]
    pub split_ratio: Option<f64>,
    #[arg(long = "noise-type", value_enum)]
    pub noise_type: Option<NoiseArg>,
    #[arg(long = "noise-ratio")]
    pub noise_ratio: Option<f64>,
    #[arg(long = "lambda-init")]
    pub lambda_init: Option<usize>,
    #[arg(long = "delta-start")]
    pub delta_start: Option<usize>,
    #[arg(long = "delta-end")]
    pub delta_end: Option<usize>,
    #[arg(long = "use-ae")]
    pub use_ae: Option<bool>,
    #[arg(long = "use-cc")]
    pub use_cc: Option<bool>,
    #[arg(long = "use-prior")]
    pub use_prior: Option<bool>,
    /// Scale the pseudo-label sum by one half when re-labeling.
    #[arg(long = "halve-pseudo-sum")]
    pub halve_pseudo_sum: bool,
    /// Add weight decay to the gradient instead of decaying parameters.
    #[arg(long = "coupled-weight-decay")]
    pub coupled_weight_decay: bool,
    #[arg(long, value_enum)]
    pub algorithm: Option<AlgorithmArg>,
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Comma-separated seeds.
    #[arg(long, value_delimiter = ',')]
    pub seeds: Vec<u64>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub checkpoints: bool,
    #[arg(long)]
    pub label: Option<String>,
    /// Comma-separated noise types for `bench`.
    #[arg(long = "noise-types", value_enum, value_delimiter = ',')]
    pub noise_types: Vec<NoiseArg>,
    /// Comma-separated noise ratios for `bench`.
    #[arg(long = "noise-ratios", value_delimiter = ',')]
    pub noise_ratios: Vec<f64>,
}

impl ConfigArgs {
    pub fn apply(&self, cfg: &mut ExperimentConfig) {
        fn set<T: Clone>(dst: &mut T, v: &Option<T>) {
            if let Some(v) = v {
                *dst = v.clone();
            }
        }
        fn set_vec<T: Clone>(dst: &mut Vec<T>, v: &[T]) {
            if !v.is_empty() {
                *dst = v.to_vec();
            }
        }
        set(&mut cfg.dataset, &self.dataset);
        set_vec(&mut cfg.data_path, &self.data_path);
        set_vec(&mut cfg.test_path, &self.test_path);
        if self.oracle_path.is_some() {
            cfg.oracle_path = self.oracle_path.clone();
        }
        set(&mut cfg.n, &self.n);
        set(&mut cfg.length, &self.length);
        set(&mut cfg.days, &self.days);
        set(&mut cfg.p_max, &self.p_max);
        set(&mut cfg.split_ratio, &self.split_ratio);
        if let Some(t) = self.noise_type {
            cfg.noise_type = t.into();
        }
        set(&mut cfg.noise_ratio, &self.noise_ratio);
        set(&mut cfg.lambda_init, &self.lambda_init);
        set(&mut cfg.delta_start, &self.delta_start);
        set(&mut cfg.delta_end, &self.delta_end);
        set(&mut cfg.use_ae, &self.use_ae);
        set(&mut cfg.use_cc, &self.use_cc);
        set(&mut cfg.use_prior, &self.use_prior);
        cfg.halve_pseudo_sum |= self.halve_pseudo_sum;
        cfg.coupled_weight_decay |= self.coupled_weight_decay;
        if let Some(a) = self.algorithm {
            cfg.algorithm = a.into();
        }
        set(&mut cfg.epochs, &self.epochs);
        set_vec(&mut cfg.seeds, &self.seeds);
        set(&mut cfg.out, &self.out);
        cfg.checkpoints |= self.checkpoints;
        if self.label.is_some() {
            cfg.label = self.label.clone();
        }
        if !self.noise_types.is_empty() {
            cfg.noise_types = self.noise_types.iter().map(|&t| t.into()).collect();
        }
        set_vec(&mut cfg.noise_ratios, &self.noise_ratios);
    }
}
