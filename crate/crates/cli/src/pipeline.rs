//! From a configuration and seed to normalized train/test sets with given
//! and (when known) true training labels.

use srea_core::data::{
    generate_cbf, generate_chp_like, load_tsv_channels, read_cache, read_series_csv, stratified_split_indices, windowize,
    znormalize, ChpConfig, Dataset, Normalizer, WindowingConfig,
};
use srea_core::noise::{corrupt, NoiseKind, TransitionMatrix};
use srea_core::rng::{substream, Stream};

use crate::config::{DatasetSource, ExperimentConfig};
use crate::corrupt::OracleFile;
use crate::error::CliError;

#[derive(Debug, Clone)]
pub struct Prepared {
    /// Training samples; `labels` are the labels training sees.
    pub train: Dataset,
    /// Test samples with true labels where an oracle provides them.
    pub test: Dataset,
    /// True training labels, when known.
    pub truth: Option<Vec<usize>>,
    pub normalizer: Normalizer,
    /// Noise recorded in the oracle of externally corrupted data.
    pub oracle_noise: Option<(NoiseKind, f64)>,
}

/// Rewrites the labels of `ds` as indices into `values`.
fn remap(ds: &mut Dataset, values: &[i64]) {
    let index = |v: i64| values.binary_search(&v).expect("class value in the joint table");
    for y in &mut ds.labels {
        *y = index(ds.class_values[*y]);
    }
    ds.classes = values.len();
    ds.class_values = values.to_vec();
}

fn joint_values<'a>(sets: impl IntoIterator<Item = &'a [i64]>) -> Vec<i64> {
    let mut v: Vec<i64> = sets.into_iter().flatten().copied().collect();
    v.sort_unstable();
    v.dedup();
    v
}

fn load(cfg: &ExperimentConfig, seed: u64) -> Result<(Dataset, Option<Dataset>), CliError> {
    let windows = |channels: Vec<Vec<f64>>, power: &[f64], p_max: f64| windowize(&channels, power, &WindowingConfig::new(p_max));
    Ok(match cfg.dataset {
        DatasetSource::Cbf => (generate_cbf(cfg.n, cfg.length, &mut substream(seed, Stream::Generate))?, None),
        DatasetSource::Chp => {
            let chp = ChpConfig {
                days: cfg.days,
                p_max: cfg.p_max,
                ..ChpConfig::default()
            };
            let s = generate_chp_like(&chp, &mut substream(seed, Stream::Generate))?;
            (windows(s.sensor_channels(), &s.p_chp, s.p_max)?, None)
        }
        DatasetSource::ChpCsv => {
            let s = read_series_csv(&cfg.data_path[0], cfg.p_max)?;
            (windows(s.sensor_channels(), &s.p_chp, s.p_max)?, None)
        }
        DatasetSource::Tsv => {
            let paths: Vec<&std::path::Path> = cfg.data_path.iter().map(|p| p.as_path()).collect();
            let test_paths: Vec<&std::path::Path> = cfg.test_path.iter().map(|p| p.as_path()).collect();
            let test = if test_paths.is_empty() { None } else { Some(load_tsv_channels(&test_paths)?) };
            (load_tsv_channels(&paths)?, test)
        }
        DatasetSource::Cache => {
            let test = match cfg.test_path.first() {
                Some(p) => Some(read_cache(p)?),
                None => None,
            };
            (read_cache(&cfg.data_path[0])?, test)
        }
    })
}

pub fn prepare(cfg: &ExperimentConfig, seed: u64) -> Result<Prepared, CliError> {
    let (mut data, mut test) = load(cfg, seed)?;
    let mut oracle_noise = None;
    let oracle = match &cfg.oracle_path {
        Some(p) => {
            let o = OracleFile::read(p)?;
            oracle_noise = Some((o.noise_type, o.noise_ratio));
            if o.labels.len() != data.n() {
                return Err(CliError::Config(format!(
                    "oracle {} has {} labels, data has {} rows",
                    p.display(),
                    o.labels.len(),
                    data.n()
                )));
            }
            Some(o.labels)
        }
        None => None,
    };
    let values = joint_values(
        [data.class_values.as_slice()]
            .into_iter()
            .chain(test.as_ref().map(|t| t.class_values.as_slice()))
            .chain(oracle.as_deref()),
    );
    remap(&mut data, &values);
    if let Some(t) = test.as_mut() {
        remap(t, &values);
    }
    let oracle: Option<Vec<usize>> = oracle.map(|o| o.iter().map(|v| values.binary_search(v).expect("joint table")).collect());

    let (mut train, mut test, mut truth) = match test {
        Some(t) => (data, t, oracle),
        None => {
            let (tr, te) = stratified_split_indices(&data.labels, data.classes, cfg.split_ratio, &mut substream(seed, Stream::Split))?;
            let mut test = data.subset(&te);
            let truth = oracle.map(|o| {
                test.labels = te.iter().map(|&i| o[i]).collect();
                tr.iter().map(|&i| o[i]).collect::<Vec<_>>()
            });
            (data.subset(&tr), test, truth)
        }
    };
    for c in train.missing_classes() {
        log::warn!("class {} has no training samples", train.class_values[c]);
    }
    let normalizer = znormalize(&mut train, &mut [&mut test]);

    if cfg.noise_ratio > 0.0 {
        let t = TransitionMatrix::new(cfg.noise_type, train.classes, cfg.noise_ratio)?;
        let c = corrupt(&train.labels, &t, &mut substream(seed, Stream::Noise))?;
        if truth.is_none() {
            truth = Some(c.oracle.reveal().to_vec());
        }
        train.labels = c.noisy;
    }
    Ok(Prepared {
        train,
        test,
        truth,
        normalizer,
        oracle_noise,
    })
}
