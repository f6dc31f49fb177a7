//! Label corruption of label-first text files.
//!
//! Only the label field of a changed row is rewritten; every other byte of
//! the input is copied as is. The true labels go to a separate oracle file
//! that training reads only to report how many labels it restored.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use srea_core::data::parse_tsv;
use srea_core::noise::{corrupt, NoiseKind, TransitionMatrix};
use srea_core::rng::{substream, Stream};

use crate::error::CliError;

/// True labels of a corrupted file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleFile {
    pub source: String,
    pub source_sha256: String,
    pub output_sha256: String,
    pub noise_type: NoiseKind,
    pub noise_ratio: f64,
    pub seed: u64,
    /// True label of every data row, as written in the source.
    pub labels: Vec<i64>,
    /// Rows whose label was changed.
    pub flipped: Vec<usize>,
}

impl OracleFile {
    pub fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: not an oracle file: {e}", path.display())))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn is_sep(c: char) -> bool {
    c == '\t' || c == ' ' || c == ','
}

/// Byte range of the label token in `line`.
fn label_span(line: &str) -> (usize, usize) {
    let start = line.find(|c: char| !is_sep(c)).unwrap_or(line.len());
    let end = line[start..].find(|c: char| is_sep(c) || c == '\r' || c == '\n').map_or(line.len(), |e| start + e);
    (start, end)
}

/// Result of corrupting a file's text.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedText {
    pub text: String,
    pub labels: Vec<i64>,
    pub flipped: Vec<usize>,
}

pub fn corrupt_text(text: &str, kind: NoiseKind, ratio: f64, seed: u64) -> Result<CorruptedText, CliError> {
    let ds = parse_tsv(text, "input")?;
    let t = TransitionMatrix::new(kind, ds.classes, ratio)?;
    let c = corrupt(&ds.labels, &t, &mut substream(seed, Stream::Noise))?;
    let mut out = String::with_capacity(text.len());
    let mut row = 0;
    for line in text.split_inclusive('\n') {
        if line.trim().is_empty() {
            out.push_str(line);
            continue;
        }
        if c.flipped[row] {
            let (s, e) = label_span(line);
            out.push_str(&line[..s]);
            out.push_str(&ds.class_values[c.noisy[row]].to_string());
            out.push_str(&line[e..]);
        } else {
            out.push_str(line);
        }
        row += 1;
    }
    Ok(CorruptedText {
        text: out,
        labels: ds.labels.iter().map(|&y| ds.class_values[y]).collect(),
        flipped: (0..ds.n()).filter(|&i| c.flipped[i]).collect(),
    })
}

/// Corrupts `input` into `output` and writes the oracle to `oracle`.
pub fn corrupt_file(input: &Path, output: &Path, oracle: &Path, kind: NoiseKind, ratio: f64, seed: u64) -> Result<OracleFile, CliError> {
    if !(0.0..1.0).contains(&ratio) {
        return Err(CliError::Config(format!("noise ratio {ratio} outside [0, 1)")));
    }
    let text = std::fs::read_to_string(input).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Config(format!("{}: no such file", input.display())),
        _ => CliError::io(input, e),
    })?;
    let c = corrupt_text(&text, kind, ratio, seed)?;
    std::fs::write(output, &c.text).map_err(|e| CliError::io(output, e))?;
    let file = OracleFile {
        source: input.display().to_string(),
        source_sha256: sha256_hex(text.as_bytes()),
        output_sha256: sha256_hex(c.text.as_bytes()),
        noise_type: kind,
        noise_ratio: ratio,
        seed,
        labels: c.labels,
        flipped: c.flipped,
    };
    let json = serde_json::to_string_pretty(&file)?;
    std::fs::write(oracle, json).map_err(|e| CliError::io(oracle, e))?;
    Ok(file)
}
