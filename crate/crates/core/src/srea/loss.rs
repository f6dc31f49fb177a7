//! Loss terms built on a [`Tape`].

use serde::{Deserialize, Serialize};

use crate::tensor::{Result, Scalar, Tape, TensorError, Var};

/// Floor applied to probabilities before taking logarithms.
pub const LOG_FLOOR: f64 = 1e-12;
/// Floor on center-to-center distances inside the spreading term.
pub const CENTER_DISTANCE_FLOOR: f64 = 1e-8;

/// Which optional terms enter the total loss.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossFlags {
    pub use_ae: bool,
    pub use_cc: bool,
    pub use_prior: bool,
}

impl Default for LossFlags {
    fn default() -> Self {
        Self {
            use_ae: true,
            use_cc: true,
            use_prior: true,
        }
    }
}

impl LossFlags {
    pub const NONE: LossFlags = LossFlags {
        use_ae: false,
        use_cc: false,
        use_prior: false,
    };
}

/// Mean squared error over all elements.
pub fn reconstruction_loss<T: Scalar>(tape: &mut Tape<T>, x_hat: Var, x: Var) -> Result<Var> {
    let d = tape.sub(x_hat, x)?;
    let s = tape.square(d);
    tape.mean(s)
}

/// Mean negative log-probability of the labeled class, with probabilities
/// floored at [`LOG_FLOOR`].
pub fn classification_loss<T: Scalar>(tape: &mut Tape<T>, probs: Var, labels: &[usize]) -> Result<Var> {
    let p = tape.clamp_min(probs, T::of(LOG_FLOOR));
    let lp = tape.ln(p);
    let picked = tape.gather(lp, labels)?;
    let m = tape.mean(picked)?;
    Ok(tape.neg(m))
}

/// Clustering loss and how many centers sat closer than the distance floor
/// to their nearest neighbour.
#[derive(Debug, Clone, Copy)]
pub struct ClusteringLoss {
    pub loss: Var,
    pub collapsed_centers: usize,
}

/// Pulls each embedding `[B, d]` towards its class center and pushes it from
/// the others, plus a spreading term `−Σ_i log min_{j≠i} ‖C_i − C_j‖` over
/// the centers `[d, k]`.
pub fn clustering_loss<T: Scalar>(tape: &mut Tape<T>, embeddings: Var, labels: &[usize], centers: Var) -> Result<ClusteringLoss> {
    let sq = tape.pairwise_sq_dist(embeddings, centers)?;
    let intra = tape.gather(sq, labels)?;
    let dist = tape.sqrt(sq);
    let neg = tape.neg(dist);
    let inter = tape.log_sum_exp(neg)?;
    let per_sample = tape.add(intra, inter)?;
    let data_term = tape.mean(per_sample)?;

    let ct = tape.transpose(centers)?;
    let center_sq = tape.pairwise_sq_dist(ct, centers)?;
    let nearest = tape.min_off_diagonal(center_sq)?;
    let floor = T::of(CENTER_DISTANCE_FLOOR * CENTER_DISTANCE_FLOOR);
    let collapsed_centers = tape.value(nearest).data().iter().filter(|&&v| v < floor).count();
    let floored = tape.clamp_min(nearest, floor);
    let logs = tape.ln(floored);
    let total_log = tape.sum(logs);
    // log ‖·‖ = ½ log ‖·‖²
    let spread = tape.scale(total_log, T::of(-0.5));
    Ok(ClusteringLoss {
        loss: tape.add(data_term, spread)?,
        collapsed_centers,
    })
}

/// `KL(h ‖ p̄)` between the uniform prior `h` and the batch-mean class
/// probabilities `p̄` of `probs[B, k]`.
pub fn prior_loss<T: Scalar>(tape: &mut Tape<T>, probs: Var) -> Result<Var> {
    let k = match *tape.shape(probs) {
        [_, k] => k,
        ref s => {
            return Err(TensorError::Rank {
                op: "prior_loss",
                expected: 2,
                got: s.to_vec(),
            })
        }
    };
    let mean = tape.mean_first(probs)?;
    let floored = tape.clamp_min(mean, T::of(LOG_FLOOR));
    let logs = tape.ln(floored);
    let s = tape.sum(logs);
    let cross = tape.scale(s, T::of(-1.0 / k as f64));
    Ok(tape.add_scalar(cross, T::of(-(k as f64).ln())))
}

/// Individual loss terms feeding [`total_loss`].
#[derive(Debug, Clone, Copy)]
pub struct LossParts {
    pub ae: Option<Var>,
    pub c: Var,
    pub cc: Option<Var>,
    pub rho: Option<Var>,
}

/// `L_ae + α (L_c + L_cc + L_ρ)`, with each optional term included only when
/// present and enabled in `flags`.
pub fn total_loss<T: Scalar>(tape: &mut Tape<T>, parts: &LossParts, alpha: T, flags: LossFlags) -> Result<Var> {
    let mut supervised = parts.c;
    if flags.use_cc {
        if let Some(cc) = parts.cc {
            supervised = tape.add(supervised, cc)?;
        }
    }
    if flags.use_prior {
        if let Some(rho) = parts.rho {
            supervised = tape.add(supervised, rho)?;
        }
    }
    let scaled = tape.scale(supervised, alpha);
    match (flags.use_ae, parts.ae) {
        (true, Some(ae)) => tape.add(ae, scaled),
        _ => Ok(scaled),
    }
}
