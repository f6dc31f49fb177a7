use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF, FisherSnedecor};

use super::ranks::midranks;
use super::StatsError;

/// Scores of each algorithm (rows) on each condition (columns); higher is
/// better.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub algorithms: Vec<String>,
    pub conditions: Vec<String>,
    pub scores: Vec<Vec<f64>>,
}

impl ScoreMatrix {
    pub fn new(algorithms: Vec<String>, conditions: Vec<String>, scores: Vec<Vec<f64>>) -> Result<Self, StatsError> {
        if scores.len() != algorithms.len() || scores.iter().any(|r| r.len() != conditions.len()) {
            return Err(StatsError::Shape(format!(
                "expected {} rows of {} scores",
                algorithms.len(),
                conditions.len()
            )));
        }
        if scores.iter().flatten().any(|v| !v.is_finite()) {
            return Err(StatsError::NonFinite);
        }
        Ok(Self {
            algorithms,
            conditions,
            scores,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    /// Mean rank per algorithm; 1 is best.
    pub mean_ranks: Vec<f64>,
    pub chi2: f64,
    /// Iman-Davenport F statistic.
    pub f_stat: f64,
    /// p-value of `chi2` under chi-square with `k − 1` degrees of freedom.
    pub p_chi2: f64,
    /// p-value of `f_stat` under F with `(k − 1, (k − 1)(N − 1))` degrees.
    pub p_value: f64,
}

/// Ranks algorithms within each condition (best score gets rank 1, ties
/// share midranks).
pub fn rank_matrix(m: &ScoreMatrix) -> Vec<Vec<f64>> {
    let k = m.algorithms.len();
    let mut ranks = vec![vec![0.0; m.conditions.len()]; k];
    for c in 0..m.conditions.len() {
        let neg: Vec<f64> = (0..k).map(|a| -m.scores[a][c]).collect();
        for (a, r) in midranks(&neg).into_iter().enumerate() {
            ranks[a][c] = r;
        }
    }
    ranks
}

/// Friedman test with the Iman-Davenport correction.
pub fn friedman_test(m: &ScoreMatrix) -> Result<FriedmanResult, StatsError> {
    let k = m.algorithms.len();
    let n = m.conditions.len();
    if k < 3 {
        return Err(StatsError::TooFew { need: 3, got: k });
    }
    if n < 2 {
        return Err(StatsError::TooFew { need: 2, got: n });
    }
    if n < 5 {
        log::warn!("Friedman test on only {n} conditions; at least 5 are recommended");
    }
    let ranks = rank_matrix(m);
    let mean_ranks: Vec<f64> = ranks.iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let (kf, nf) = (k as f64, n as f64);
    let sum_sq: f64 = mean_ranks.iter().map(|r| r * r).sum();
    let chi2 = (12.0 * nf / (kf * (kf + 1.0)) * (sum_sq - kf * (kf + 1.0).powi(2) / 4.0)).max(0.0);
    let denom = nf * (kf - 1.0) - chi2;
    let f_stat = if denom > 0.0 { (nf - 1.0) * chi2 / denom } else { f64::INFINITY };
    let chi = ChiSquared::new(kf - 1.0).map_err(|e| StatsError::Distribution(e.to_string()))?;
    let p_chi2 = if chi2 > 0.0 { chi.sf(chi2) } else { 1.0 };
    let p_value = if chi2 == 0.0 {
        1.0
    } else if f_stat.is_infinite() {
        0.0
    } else {
        let f = FisherSnedecor::new(kf - 1.0, (kf - 1.0) * (nf - 1.0)).map_err(|e| StatsError::Distribution(e.to_string()))?;
        f.sf(f_stat)
    };
    Ok(FriedmanResult {
        mean_ranks,
        chi2,
        f_stat,
        p_chi2,
        p_value,
    })
}

/// Two-tailed Nemenyi `q` values (studentized range over `√2`) for
/// 2 to 20 algorithms.
const Q_05: [f64; 19] = [
    1.959964, 2.343701, 2.569032, 2.727774, 2.849705, 2.948320, 3.030878, 3.101730, 3.163684, 3.218654, 3.268004,
    3.312739, 3.353618, 3.391230, 3.426041, 3.458425, 3.488685, 3.517073, 3.543799,
];
const Q_10: [f64; 19] = [
    1.644854, 2.052293, 2.291341, 2.459516, 2.588521, 2.692732, 2.779884, 2.854606, 2.919889, 2.977768, 3.029694,
    3.076733, 3.119693, 3.159199, 3.195743, 3.229723, 3.261461, 3.291224, 3.319233,
];

/// Nemenyi critical distance between mean ranks.
pub fn nemenyi_cd(algorithms: usize, conditions: usize, alpha: f64) -> Result<f64, StatsError> {
    if !(2..=20).contains(&algorithms) {
        return Err(StatsError::Unsupported(format!("{algorithms} algorithms (table covers 2 to 20)")));
    }
    if conditions == 0 {
        return Err(StatsError::TooFew { need: 1, got: 0 });
    }
    let table = if (alpha - 0.05).abs() < 1e-12 {
        &Q_05
    } else if (alpha - 0.10).abs() < 1e-12 {
        &Q_10
    } else {
        return Err(StatsError::Unsupported(format!("alpha {alpha} (table covers 0.05 and 0.10)")));
    };
    let k = algorithms as f64;
    Ok(table[algorithms - 2] * (k * (k + 1.0) / (6.0 * conditions as f64)).sqrt())
}

/// An algorithm placed on the rank axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RankedAlgorithm {
    pub name: String,
    pub mean_rank: f64,
}

/// Algorithms joined by a bar: every pair lies within the critical distance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Clique {
    pub members: Vec<String>,
    pub from_rank: f64,
    pub to_rank: f64,
}

/// Plot-ready critical-difference diagram.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdLayout {
    pub axis_min: f64,
    pub axis_max: f64,
    pub cd: f64,
    /// Sorted best (lowest rank) first.
    pub algorithms: Vec<RankedAlgorithm>,
    pub cliques: Vec<Clique>,
}

/// Groups algorithms into maximal runs whose rank spread is at most `cd`.
/// Singletons get no bar.
pub fn cd_diagram_layout(names: &[String], mean_ranks: &[f64], cd: f64) -> CdLayout {
    assert_eq!(names.len(), mean_ranks.len());
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| mean_ranks[a].total_cmp(&mean_ranks[b]).then(a.cmp(&b)));
    let ranks: Vec<f64> = order.iter().map(|&i| mean_ranks[i]).collect();
    let mut cliques = Vec::new();
    let mut last_end = 0;
    for i in 0..ranks.len() {
        let mut j = i;
        while j + 1 < ranks.len() && ranks[j + 1] - ranks[i] <= cd {
            j += 1;
        }
        // A run ending where the previous one ended is contained in it.
        if j > i && (cliques.is_empty() || j > last_end) {
            cliques.push(Clique {
                members: order[i..=j].iter().map(|&a| names[a].clone()).collect(),
                from_rank: ranks[i],
                to_rank: ranks[j],
            });
        }
        last_end = last_end.max(j);
    }
    CdLayout {
        axis_min: 1.0,
        axis_max: names.len().max(2) as f64,
        cd,
        algorithms: order
            .iter()
            .map(|&i| RankedAlgorithm {
                name: names[i].clone(),
                mean_rank: mean_ranks[i],
            })
            .collect(),
        cliques,
    }
}

fn escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Standalone SVG rendering of a [`CdLayout`].
pub fn cd_diagram_svg(layout: &CdLayout) -> String {
    let width = 640.0;
    let (left, right) = (60.0, width - 60.0);
    let axis_y = 60.0;
    let span = (layout.axis_max - layout.axis_min).max(1.0);
    let x = |r: f64| left + (r - layout.axis_min) / span * (right - left);
    let n = layout.algorithms.len();
    let half = n.div_ceil(2);
    let label_y = |i: usize| axis_y + 40.0 + layout.cliques.len() as f64 * 10.0 + (i % half.max(1)) as f64 * 20.0;
    let height = label_y(half.saturating_sub(1)) + 30.0;
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="12">"#
    );
    let _ = writeln!(s, r#"<line x1="{left}" y1="{axis_y}" x2="{right}" y2="{axis_y}" stroke="black"/>"#);
    let mut r = layout.axis_min;
    while r <= layout.axis_max + 1e-9 {
        let xr = x(r);
        let _ = writeln!(s, r#"<line x1="{xr:.1}" y1="{axis_y}" x2="{xr:.1}" y2="{:.1}" stroke="black"/>"#, axis_y - 6.0);
        let _ = writeln!(s, r#"<text x="{xr:.1}" y="{:.1}" text-anchor="middle">{}</text>"#, axis_y - 10.0, r as usize);
        r += 1.0;
    }
    let (cd0, cd1) = (x(layout.axis_min), x(layout.axis_min + layout.cd));
    let _ = writeln!(s, r#"<line x1="{cd0:.1}" y1="20" x2="{cd1:.1}" y2="20" stroke="black" stroke-width="2"/>"#);
    let _ = writeln!(s, r#"<text x="{:.1}" y="15" text-anchor="middle">CD = {:.3}</text>"#, (cd0 + cd1) / 2.0, layout.cd);
    for (ci, c) in layout.cliques.iter().enumerate() {
        let y = axis_y + 12.0 + ci as f64 * 10.0;
        let _ = writeln!(
            s,
            r#"<line x1="{:.1}" y1="{y:.1}" x2="{:.1}" y2="{y:.1}" stroke="black" stroke-width="4"/>"#,
            x(c.from_rank) - 3.0,
            x(c.to_rank) + 3.0
        );
    }
    for (i, a) in layout.algorithms.iter().enumerate() {
        let xr = x(a.mean_rank);
        let y = label_y(i);
        let (tx, anchor) = if i < half { (left - 10.0, "end") } else { (right + 10.0, "start") };
        let _ = writeln!(s, r#"<polyline points="{xr:.1},{axis_y} {xr:.1},{y:.1} {tx:.1},{y:.1}" fill="none" stroke="gray"/>"#);
        let _ = writeln!(
            s,
            r#"<text x="{:.1}" y="{:.1}" text-anchor="{anchor}">{} ({:.2})</text>"#,
            tx + if i < half { -2.0 } else { 2.0 },
            y + 4.0,
            escape(&a.name),
            a.mean_rank
        );
    }
    s.push_str("</svg>\n");
    s
}
