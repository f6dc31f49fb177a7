//! Classification metrics and statistical comparison of algorithms.

mod friedman;
mod metrics;
mod mwu;
mod ranks;

pub use friedman::{
    cd_diagram_layout, cd_diagram_svg, friedman_test, nemenyi_cd, rank_matrix, CdLayout, Clique, FriedmanResult,
    RankedAlgorithm, ScoreMatrix,
};
pub use metrics::{confusion_csv, confusion_matrix, f1_report, macro_f1, row_normalized, F1Report};
pub use mwu::{mann_whitney_u, u_distribution, Alternative, MwuResult, Verdict, EXACT_MAX};
pub use ranks::{midranks, tie_groups};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("need at least {need} values, got {got}")]
    TooFew { need: usize, got: usize },
    #[error("non-finite score")]
    NonFinite,
    #[error("{0}")]
    Shape(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("distribution: {0}")]
    Distribution(String),
}
