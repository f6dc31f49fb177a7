use std::fmt;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::ranks::{midranks, tie_groups};
use super::StatsError;

/// Largest smaller-group size for which exact p-values are computed.
pub const EXACT_MAX: usize = 8;

/// Outcome label of a comparison of `a` against `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    /// `a` is significantly greater.
    #[serde(rename = "+")]
    Greater,
    /// `a` is significantly smaller.
    #[serde(rename = "-")]
    Less,
    /// No significant difference.
    #[serde(rename = "≈")]
    Similar,
}

impl Verdict {
    pub fn symbol(self) -> &'static str {
        match self {
            Verdict::Greater => "+",
            Verdict::Less => "-",
            Verdict::Similar => "≈",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Alternative hypothesis about `a` relative to `b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Alternative {
    TwoSided,
    Greater,
    Less,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MwuResult {
    /// Pairs with `a > b`, ties counting one half.
    pub u_a: f64,
    pub u_b: f64,
    pub p_value: f64,
    /// Whether `p_value` comes from the exact null distribution.
    pub exact: bool,
    pub alternative: Alternative,
    pub verdict: Verdict,
}

/// Number of arrangements giving each value of `U` for group sizes `m` and
/// `n` without ties: the coefficients of the Gaussian binomial
/// `[m + n choose m]_q`.
pub fn u_distribution(m: usize, n: usize) -> Vec<u128> {
    let (m, n) = (m.min(n), m.max(n));
    // row[j] holds [N choose j]_q for the current N, j ≤ m.
    let mut row: Vec<Vec<u128>> = vec![vec![1]];
    row.extend((1..=m).map(|_| Vec::new()));
    for big_n in 1..=m + n {
        for j in (1..=m.min(big_n)).rev() {
            // [N choose j] = [N-1 choose j-1] + q^j [N-1 choose j]
            let prev_lower = &row[j - 1];
            let prev_same = &row[j];
            let deg = j * (big_n - j);
            let mut next = vec![0u128; deg + 1];
            for (u, &c) in prev_lower.iter().enumerate() {
                next[u] += c;
            }
            for (u, &c) in prev_same.iter().enumerate() {
                next[u + j] += c;
            }
            row[j] = next;
        }
    }
    row.swap_remove(m)
}

fn exact_p(u_a: f64, m: usize, n: usize, alt: Alternative) -> f64 {
    let dist = u_distribution(m, n);
    let total: u128 = dist.iter().sum();
    let u = u_a.round() as usize;
    let le: u128 = dist[..=u.min(dist.len() - 1)].iter().sum();
    let ge: u128 = dist[u.min(dist.len())..].iter().sum();
    let (le, ge, total) = (le as f64, ge as f64, total as f64);
    match alt {
        Alternative::TwoSided => (2.0 * le.min(ge) / total).min(1.0),
        Alternative::Greater => ge / total,
        Alternative::Less => le / total,
    }
}

fn normal_p(u_a: f64, m: usize, n: usize, ties: &[usize], alt: Alternative) -> f64 {
    let (mf, nf) = (m as f64, n as f64);
    let big_n = mf + nf;
    let mu = mf * nf / 2.0;
    let tie_term: f64 = ties.iter().map(|&t| (t * t * t - t) as f64).sum::<f64>() / (big_n * (big_n - 1.0));
    let var = mf * nf / 12.0 * ((big_n + 1.0) - tie_term);
    if var <= 0.0 {
        return 1.0;
    }
    let sd = var.sqrt();
    let phi = Normal::new(0.0, 1.0).expect("standard normal");
    match alt {
        Alternative::TwoSided => {
            let z = (((u_a - mu).abs() - 0.5) / sd).max(0.0);
            (2.0 * phi.sf(z)).min(1.0)
        }
        Alternative::Greater => phi.sf((u_a - mu - 0.5) / sd),
        Alternative::Less => phi.cdf((u_a - mu + 0.5) / sd),
    }
}

/// Mann-Whitney U test of `a` against `b`.
///
/// Exact when the smaller group has at most [`EXACT_MAX`] values and there
/// are no ties; otherwise the normal approximation with tie and continuity
/// corrections.
pub fn mann_whitney_u(a: &[f64], b: &[f64], alpha: f64, alternative: Alternative) -> Result<MwuResult, StatsError> {
    let (m, n) = (a.len(), b.len());
    if m < 3 || n < 3 {
        return Err(StatsError::TooFew { need: 3, got: m.min(n) });
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(StatsError::NonFinite);
    }
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = midranks(&pooled);
    let r_a: f64 = ranks[..m].iter().sum();
    let u_a = r_a - (m * (m + 1)) as f64 / 2.0;
    let u_b = (m * n) as f64 - u_a;
    let ties: Vec<usize> = tie_groups(&pooled).into_iter().filter(|&t| t > 1).collect();
    let exact = m.min(n) <= EXACT_MAX && ties.is_empty();
    let p_value = if exact {
        exact_p(u_a, m, n, alternative)
    } else {
        normal_p(u_a, m, n, &ties, alternative)
    };
    let mu = (m * n) as f64 / 2.0;
    let verdict = if p_value >= alpha {
        Verdict::Similar
    } else {
        match alternative {
            Alternative::TwoSided if u_a > mu => Verdict::Greater,
            Alternative::TwoSided if u_a < mu => Verdict::Less,
            Alternative::TwoSided => Verdict::Similar,
            Alternative::Greater => Verdict::Greater,
            Alternative::Less => Verdict::Less,
        }
    };
    Ok(MwuResult {
        u_a,
        u_b,
        p_value,
        exact,
        alternative,
        verdict,
    })
}
