//! Statistical comparison of finished runs.
//!
//! Each table cell holds a comparator's mean macro-F1 on one condition and
//! the Mann-Whitney verdict of the reference algorithm against it: `+` when
//! the reference is significantly better, `-` when worse, `≈` otherwise.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};
use srea_core::eval::{
    cd_diagram_layout, friedman_test, mann_whitney_u, nemenyi_cd, Alternative, CdLayout, FriedmanResult, ScoreMatrix,
    Verdict,
};

use crate::error::CliError;
use crate::run::RunRecord;

/// Reads every record of `dir/runs.jsonl`.
pub fn load_runs(dir: &Path) -> Result<Vec<RunRecord>, CliError> {
    let path = dir.join("runs.jsonl");
    let f = std::fs::File::open(&path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => CliError::Config(format!("{}: no such file", path.display())),
        _ => CliError::io(&path, e),
    })?;
    let mut out = Vec::new();
    for (i, line) in std::io::BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(&path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line)
            .map_err(|e| CliError::Runtime(format!("{} line {}: {e}", path.display(), i + 1)))?;
        out.push(rec);
    }
    Ok(out)
}

/// Scores of named algorithms per condition, one value per seed.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Scores {
    /// Algorithm names in first-seen order.
    pub algorithms: Vec<String>,
    /// `condition -> algorithm -> scores`.
    pub by_condition: BTreeMap<String, BTreeMap<String, Vec<f64>>>,
}

impl Scores {
    pub fn add(&mut self, algorithm: &str, condition: &str, score: f64) {
        if !self.algorithms.iter().any(|a| a == algorithm) {
            self.algorithms.push(algorithm.to_string());
        }
        self.by_condition
            .entry(condition.to_string())
            .or_default()
            .entry(algorithm.to_string())
            .or_default()
            .push(score);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub condition: String,
    pub algorithm: String,
    pub runs: usize,
    pub mean: f64,
    pub std: f64,
    /// Reference against this algorithm; absent for the reference itself
    /// and when either side has fewer than three runs.
    pub verdict: Option<Verdict>,
    pub p_value: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankSummary {
    /// Algorithms scored on every condition, in the order of the ranks.
    pub algorithms: Vec<String>,
    pub conditions: Vec<String>,
    pub friedman: FriedmanResult,
    pub cd: Option<f64>,
    pub layout: Option<CdLayout>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub reference: String,
    pub algorithms: Vec<String>,
    pub conditions: Vec<String>,
    pub alpha: f64,
    pub alternative: Alternative,
    pub cells: Vec<Cell>,
    pub ranks: Option<RankSummary>,
}

fn mean_std(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 {
        v.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

pub fn compare(scores: &Scores, reference: &str, alpha: f64, alternative: Alternative) -> Result<Comparison, CliError> {
    if !scores.algorithms.iter().any(|a| a == reference) {
        return Err(CliError::Config(format!("reference {reference:?} has no runs")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(CliError::Config(format!("alpha {alpha} outside (0, 1)")));
    }
    let conditions: Vec<String> = scores.by_condition.keys().cloned().collect();
    let mut cells = Vec::new();
    for (cond, algs) in &scores.by_condition {
        let reference_scores = algs.get(reference);
        for name in &scores.algorithms {
            let Some(v) = algs.get(name) else { continue };
            let (mean, std) = mean_std(v);
            let test = match reference_scores {
                Some(r) if name != reference => match mann_whitney_u(r, v, alpha, alternative) {
                    Ok(t) => Some(t),
                    Err(e) => {
                        log::warn!("{cond}: {reference} vs {name}: {e}");
                        None
                    }
                },
                _ => None,
            };
            cells.push(Cell {
                condition: cond.clone(),
                algorithm: name.clone(),
                runs: v.len(),
                mean,
                std,
                verdict: test.as_ref().map(|t| t.verdict),
                p_value: test.as_ref().map(|t| t.p_value),
            });
        }
    }

    let complete: Vec<String> = scores
        .algorithms
        .iter()
        .filter(|a| scores.by_condition.values().all(|m| m.contains_key(*a)))
        .cloned()
        .collect();
    let ranks = if complete.len() >= 3 && conditions.len() >= 2 {
        let matrix: Vec<Vec<f64>> = complete
            .iter()
            .map(|a| conditions.iter().map(|c| mean_std(&scores.by_condition[c][a]).0).collect())
            .collect();
        let m = ScoreMatrix::new(complete.clone(), conditions.clone(), matrix)?;
        let friedman = friedman_test(&m)?;
        let cd = match nemenyi_cd(complete.len(), conditions.len(), alpha) {
            Ok(cd) => Some(cd),
            Err(e) => {
                log::warn!("no critical distance: {e}");
                None
            }
        };
        let layout = cd.map(|cd| cd_diagram_layout(&complete, &friedman.mean_ranks, cd));
        Some(RankSummary {
            algorithms: complete,
            conditions: conditions.clone(),
            friedman,
            cd,
            layout,
        })
    } else {
        None
    };
    Ok(Comparison {
        reference: reference.to_string(),
        algorithms: scores.algorithms.clone(),
        conditions,
        alpha,
        alternative,
        cells,
        ranks,
    })
}

impl Comparison {
    pub fn cell(&self, condition: &str, algorithm: &str) -> Option<&Cell> {
        self.cells.iter().find(|c| c.condition == condition && c.algorithm == algorithm)
    }

    /// Plain-text table: one row per condition, one column per algorithm.
    pub fn table(&self) -> String {
        let cw = self.conditions.iter().map(|c| c.len()).max().unwrap_or(0).max("condition".len());
        let widths: Vec<usize> = self.algorithms.iter().map(|a| a.len().max(9)).collect();
        let mut s = String::new();
        let _ = write!(s, "{:<cw$}", "condition");
        for (a, w) in self.algorithms.iter().zip(&widths) {
            let _ = write!(s, "  {a:>w$}");
        }
        s.push('\n');
        for cond in &self.conditions {
            let _ = write!(s, "{cond:<cw$}");
            for (a, w) in self.algorithms.iter().zip(&widths) {
                let text = match self.cell(cond, a) {
                    Some(c) => match c.verdict {
                        Some(v) => format!("{:.3} ({v})", c.mean),
                        None => format!("{:.3}", c.mean),
                    },
                    None => "-".to_string(),
                };
                // Pad by characters; the ≈ sign is several bytes long.
                let pad = w.saturating_sub(text.chars().count());
                let _ = write!(s, "  {}{text}", " ".repeat(pad));
            }
            s.push('\n');
        }
        if let Some(r) = &self.ranks {
            let _ = writeln!(
                s,
                "\nFriedman chi2 = {:.3} (p = {:.4}), Iman-Davenport F = {:.3} (p = {:.4})",
                r.friedman.chi2, r.friedman.p_chi2, r.friedman.f_stat, r.friedman.p_value
            );
            for (a, rank) in r.algorithms.iter().zip(&r.friedman.mean_ranks) {
                let _ = writeln!(s, "  mean rank {rank:.3}  {a}");
            }
            if let Some(cd) = r.cd {
                let _ = writeln!(s, "critical distance {cd:.3}");
            }
        }
        s
    }
}
