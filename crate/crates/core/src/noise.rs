//! Label transition matrices and label corruption.

use std::fmt;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum NoiseError {
    #[error("need at least 2 classes, got {0}")]
    Classes(usize),
    #[error("noise ratio {0} outside [0, 1]")]
    Ratio(f64),
    #[error("label {label} at index {index} is out of range for {k} classes")]
    Label { index: usize, label: usize, k: usize },
    #[error("unknown noise type {0:?} (expected symmetric, asymmetric or flip)")]
    Kind(String),
}

/// Structure of the label corruption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NoiseKind {
    /// Uniform over the other classes.
    Symmetric,
    /// Class `j` moves to `(j + 1) mod k`.
    Asymmetric,
    /// Every class except 0 moves to class 0.
    Flip,
}

impl NoiseKind {
    pub const ALL: [NoiseKind; 3] = [NoiseKind::Symmetric, NoiseKind::Asymmetric, NoiseKind::Flip];

    pub fn as_str(self) -> &'static str {
        match self {
            NoiseKind::Symmetric => "symmetric",
            NoiseKind::Asymmetric => "asymmetric",
            NoiseKind::Flip => "flip",
        }
    }
}

impl fmt::Display for NoiseKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for NoiseKind {
    type Err = NoiseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "symmetric" | "symm" => Ok(NoiseKind::Symmetric),
            "asymmetric" | "asymm" => Ok(NoiseKind::Asymmetric),
            "flip" | "pair" => Ok(NoiseKind::Flip),
            _ => Err(NoiseError::Kind(s.to_string())),
        }
    }
}

/// Row-stochastic `k × k` matrix; entry `(i, j)` is the probability that
/// true class `i` is reported as `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct TransitionMatrix {
    k: usize,
    kind: NoiseKind,
    epsilon: f64,
    rows: Vec<f64>,
}

impl TransitionMatrix {
    pub fn new(kind: NoiseKind, k: usize, epsilon: f64) -> Result<Self, NoiseError> {
        if k < 2 {
            return Err(NoiseError::Classes(k));
        }
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(NoiseError::Ratio(epsilon));
        }
        let mut rows = vec![0.0; k * k];
        for i in 0..k {
            match kind {
                NoiseKind::Symmetric => {
                    let off = epsilon / (k - 1) as f64;
                    for j in 0..k {
                        rows[i * k + j] = if i == j { 1.0 - epsilon } else { off };
                    }
                }
                NoiseKind::Asymmetric => {
                    rows[i * k + i] = 1.0 - epsilon;
                    rows[i * k + (i + 1) % k] += epsilon;
                }
                NoiseKind::Flip => {
                    if i == 0 {
                        rows[0] = 1.0;
                    } else {
                        rows[i * k] = epsilon;
                        rows[i * k + i] = 1.0 - epsilon;
                    }
                }
            }
        }
        Ok(Self { k, kind, epsilon, rows })
    }

    pub fn symmetric(k: usize, epsilon: f64) -> Result<Self, NoiseError> {
        Self::new(NoiseKind::Symmetric, k, epsilon)
    }

    pub fn asymmetric(k: usize, epsilon: f64) -> Result<Self, NoiseError> {
        Self::new(NoiseKind::Asymmetric, k, epsilon)
    }

    pub fn flip(k: usize, epsilon: f64) -> Result<Self, NoiseError> {
        Self::new(NoiseKind::Flip, k, epsilon)
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn kind(&self) -> NoiseKind {
        self.kind
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.rows[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.rows[i * self.k..(i + 1) * self.k]
    }

    /// Draws a reported label for true class `i`.
    pub fn sample<R: Rng + ?Sized>(&self, i: usize, rng: &mut R) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        let row = self.row(i);
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // Rounding left `acc` just below 1; fall back to the last class with mass.
        row.iter().rposition(|&p| p > 0.0).unwrap_or(i)
    }
}

/// The true labels of a corrupted set, kept apart from the training inputs.
///
/// Only evaluation code should call [`CleanLabels::reveal`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CleanLabels(Vec<usize>);

impl CleanLabels {
    pub fn new(labels: Vec<usize>) -> Self {
        Self(labels)
    }

    pub fn reveal(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Output of [`corrupt`].
#[derive(Debug, Clone, PartialEq)]
pub struct Corruption {
    pub noisy: Vec<usize>,
    /// `true` where the reported label differs from the truth.
    pub flipped: Vec<bool>,
    pub oracle: CleanLabels,
}

/// Replaces each label by a draw from its row of `t`.
pub fn corrupt<R: Rng + ?Sized>(labels: &[usize], t: &TransitionMatrix, rng: &mut R) -> Result<Corruption, NoiseError> {
    if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &y)| y >= t.k()) {
        return Err(NoiseError::Label { index, label, k: t.k() });
    }
    let noisy: Vec<usize> = labels.iter().map(|&y| t.sample(y, rng)).collect();
    let flipped = noisy.iter().zip(labels).map(|(a, b)| a != b).collect();
    Ok(Corruption {
        noisy,
        flipped,
        oracle: CleanLabels::new(labels.to_vec()),
    })
}
