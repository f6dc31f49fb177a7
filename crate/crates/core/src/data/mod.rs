//! Datasets: loading, normalization, splitting, synthetic generators and
//! sliding-window preprocessing of raw multichannel series.

mod cache;
mod cbf;
mod chp;
mod normalize;
mod split;
mod tsv;
mod window;

pub use cache::{read_cache, write_cache};
pub use cbf::generate_cbf;
pub use chp::{generate_chp_like, read_series_csv, write_series_csv, ChpConfig, ChpSeries};
pub use normalize::{znormalize, Normalizer};
pub use split::{split, stratified_split_indices};
pub use tsv::{load_tsv, load_tsv_channels, parse_tsv};
pub use window::{windowize, WindowingConfig};

use thiserror::Error;

use crate::records::RecordError;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}: file is empty")]
    Empty(String),
    #[error("{file}:{line}: {msg}")]
    Parse { file: String, line: usize, msg: String },
    #[error("{0}")]
    Shape(String),
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error(transparent)]
    Records(#[from] RecordError),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Labeled samples of shape `[channels, len]`, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub channels: usize,
    pub len: usize,
    /// `[n, channels, len]` row-major.
    pub samples: Vec<f32>,
    /// Contiguous class indices in `[0, classes)`.
    pub labels: Vec<usize>,
    pub classes: usize,
    /// Original label value of each class index.
    pub class_values: Vec<i64>,
}

impl Dataset {
    pub fn new(name: impl Into<String>, channels: usize, len: usize, samples: Vec<f32>, labels: Vec<usize>, classes: usize) -> Result<Self, DataError> {
        let ds = Self {
            name: name.into(),
            channels,
            len,
            samples,
            labels,
            classes,
            class_values: (0..classes as i64).collect(),
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<(), DataError> {
        if self.samples.len() != self.labels.len() * self.channels * self.len {
            return Err(DataError::Shape(format!(
                "{} values do not form {} samples of {}x{}",
                self.samples.len(),
                self.labels.len(),
                self.channels,
                self.len
            )));
        }
        if self.class_values.len() != self.classes {
            return Err(DataError::Shape("class value table does not match class count".into()));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= self.classes) {
            return Err(DataError::Shape(format!("label {bad} out of range for {} classes", self.classes)));
        }
        Ok(())
    }

    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn sample_len(&self) -> usize {
        self.channels * self.len
    }

    pub fn sample(&self, i: usize) -> &[f32] {
        let s = self.sample_len();
        &self.samples[i * s..(i + 1) * s]
    }

    /// Samples at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Dataset {
        let mut samples = Vec::with_capacity(indices.len() * self.sample_len());
        for &i in indices {
            samples.extend_from_slice(self.sample(i));
        }
        Dataset {
            name: self.name.clone(),
            channels: self.channels,
            len: self.len,
            samples,
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            classes: self.classes,
            class_values: self.class_values.clone(),
        }
    }

    pub fn class_counts(&self) -> Vec<usize> {
        let mut c = vec![0; self.classes];
        for &y in &self.labels {
            c[y] += 1;
        }
        c
    }

    /// Classes with no sample; logs a warning for each.
    pub fn missing_classes(&self) -> Vec<usize> {
        let missing: Vec<usize> = self
            .class_counts()
            .iter()
            .enumerate()
            .filter(|(_, &c)| c == 0)
            .map(|(j, _)| j)
            .collect();
        for j in &missing {
            log::warn!("dataset {}: class {j} has no samples", self.name);
        }
        missing
    }
}
