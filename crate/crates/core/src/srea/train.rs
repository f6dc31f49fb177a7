//! The re-labeling training loop.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::kmeans::init_cluster_centers;
use super::loss::{classification_loss, clustering_loss, prior_loss, reconstruction_loss, total_loss, LossFlags, LossParts};
use super::relabel::{cluster_pseudo_label, correct_label, EmaBuffer};
use super::schedule::{alpha_at, w_at, ScheduleParams};
use crate::nn::{batch_size_for, lr_at, Adam, AdamConfig, ModelConfig, ModelError, SreaModel, EPOCHS};
use crate::rng::{substream, Stream};
use crate::tensor::{Mode, Tape, Tensor, TensorError};

/// Training procedure.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    /// Scheduled multi-task loss with re-labeling.
    Srea,
    /// Plain cross-entropy on the given labels: `α ≡ 1`, `w ≡ 0`, no
    /// autoencoder, clustering or prior terms.
    Ce,
}

/// Everything that shapes one training run besides data and seed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub schedule: ScheduleParams,
    pub flags: LossFlags,
    pub epochs: usize,
    pub halve_pseudo_sum: bool,
    pub coupled_weight_decay: bool,
    pub embed_dim: usize,
    pub dropout: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Srea,
            schedule: ScheduleParams::default(),
            flags: LossFlags::default(),
            epochs: EPOCHS,
            halve_pseudo_sum: false,
            coupled_weight_decay: false,
            embed_dim: 32,
            dropout: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn cross_entropy() -> Self {
        Self {
            algorithm: Algorithm::Ce,
            flags: LossFlags::NONE,
            ..Self::default()
        }
    }

    /// The effective loss flags: cross-entropy ignores the optional terms.
    pub fn effective_flags(&self) -> LossFlags {
        match self.algorithm {
            Algorithm::Srea => self.flags,
            Algorithm::Ce => LossFlags::NONE,
        }
    }

    pub fn alpha(&self, epoch: usize) -> f64 {
        match self.algorithm {
            Algorithm::Srea => alpha_at(epoch, &self.schedule),
            Algorithm::Ce => 1.0,
        }
    }

    pub fn w(&self, epoch: usize) -> f64 {
        match self.algorithm {
            Algorithm::Srea => w_at(epoch, &self.schedule),
            Algorithm::Ce => 0.0,
        }
    }
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("non-finite loss at epoch {epoch}, batch {batch}: total {total}, ae {ae}, c {c}, cc {cc}, rho {rho}")]
    NonFinite {
        epoch: usize,
        batch: usize,
        total: f64,
        ae: f64,
        c: f64,
        cc: f64,
        rho: f64,
    },
    #[error("invalid training input: {0}")]
    Input(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// Training samples `[n, channels, len]` with their given labels.
#[derive(Debug, Clone, Copy)]
pub struct TrainData<'a> {
    pub samples: &'a [f32],
    pub n: usize,
    pub channels: usize,
    pub len: usize,
    pub classes: usize,
    /// Labels as delivered, possibly corrupted.
    pub labels: &'a [usize],
}

impl TrainData<'_> {
    fn validate(&self) -> Result<(), TrainError> {
        if self.samples.len() != self.n * self.channels * self.len {
            return Err(TrainError::Input(format!(
                "{} values for {} samples of {}x{}",
                self.samples.len(),
                self.n,
                self.channels,
                self.len
            )));
        }
        if self.labels.len() != self.n {
            return Err(TrainError::Input(format!("{} labels for {} samples", self.labels.len(), self.n)));
        }
        if let Some(&bad) = self.labels.iter().find(|&&y| y >= self.classes) {
            return Err(TrainError::Input(format!("label {bad} out of range for {} classes", self.classes)));
        }
        if self.n < self.classes.max(2) {
            return Err(TrainError::Input(format!("{} samples is too few for {} classes", self.n, self.classes)));
        }
        Ok(())
    }
}

/// Per-epoch record of schedule values and batch-averaged losses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochTrace {
    pub epoch: usize,
    pub alpha: f64,
    pub w: f64,
    pub lr: f64,
    pub loss_total: f64,
    pub loss_ae: f64,
    pub loss_c: f64,
    pub loss_cc: f64,
    pub loss_rho: f64,
    /// Fraction of samples whose corrected label differs from the given one.
    pub relabel_fraction: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub corrected_label_accuracy: Option<f64>,
}

/// A trained model and the final corrected training labels.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub model: SreaModel,
    pub corrected_labels: Vec<usize>,
    pub trace: Vec<EpochTrace>,
    /// Batches in which two or more centers fell below the distance floor.
    pub center_collapse_events: usize,
}

/// Mini-batches over `order`; a trailing batch of one sample joins the
/// previous batch so batch normalization always sees two or more samples.
fn batches(order: &[usize], size: usize) -> Vec<&[usize]> {
    let mut out: Vec<&[usize]> = order.chunks(size).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        out.pop();
        let start = order.len() - 1 - out.last().unwrap().len();
        *out.last_mut().unwrap() = &order[start..];
    }
    out
}

/// Trains a fresh model on `data` with the given seed.
///
/// `oracle`, when given, holds the true training labels and is used only to
/// report corrected-label accuracy in the trace. `on_epoch` sees each trace
/// entry as it is produced.
pub fn train(
    data: TrainData<'_>,
    cfg: &TrainConfig,
    seed: u64,
    oracle: Option<&[usize]>,
    mut on_epoch: impl FnMut(&EpochTrace),
) -> Result<RunOutput, TrainError> {
    data.validate()?;
    if let Some(o) = oracle {
        if o.len() != data.n {
            return Err(TrainError::Input("oracle length differs from sample count".into()));
        }
    }
    if cfg.algorithm == Algorithm::Srea {
        cfg.schedule.validate(cfg.epochs).map_err(TrainError::Input)?;
    }
    let (n, c, l, k) = (data.n, data.channels, data.len, data.classes);
    let mut init_rng = substream(seed, Stream::Init);
    let mut dropout_rng = substream(seed, Stream::Dropout);
    let mut shuffle_rng = substream(seed, Stream::Shuffle);
    let model_cfg = ModelConfig {
        embed_dim: cfg.embed_dim,
        dropout: cfg.dropout,
        ..ModelConfig::new(c, l, k)
    };
    let mut model = SreaModel::new(model_cfg, &mut init_rng)?;
    let adam_cfg = AdamConfig {
        coupled_weight_decay: cfg.coupled_weight_decay,
        ..AdamConfig::default()
    };
    let mut adam = Adam::new(adam_cfg, model.params());
    let flags = cfg.effective_flags();
    let d = cfg.embed_dim;
    // Batch normalization cannot train on a single sample.
    let batch_size = batch_size_for(n).max(2);

    let mut ema = EmaBuffer::new(n, k);
    let mut corrected = data.labels.to_vec();
    let mut trace = Vec::with_capacity(cfg.epochs);
    let mut collapse_events = 0;
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..cfg.epochs {
        let alpha = cfg.alpha(epoch);
        let w = cfg.w(epoch);
        let lr = lr_at(epoch);
        if cfg.algorithm == Algorithm::Srea && epoch == cfg.schedule.lambda_init {
            let (emb, _) = model.predict(data.samples, n, batch_size.max(64))?;
            let emb: Vec<f64> = emb.iter().map(|&v| v as f64).collect();
            let (centers, _) = init_cluster_centers(&emb, n, d, data.labels, k, &mut init_rng);
            let centers = Tensor::new(&[d, k], centers.iter().map(|&v| v as f32).collect())?;
            model.set_centers(centers)?;
        }
        order.shuffle(&mut shuffle_rng);
        let mut sums = [0.0f64; 5];
        for (bi, batch) in batches(&order, batch_size).into_iter().enumerate() {
            let b = batch.len();
            let mut xb = Vec::with_capacity(b * c * l);
            for &i in batch {
                xb.extend_from_slice(&data.samples[i * c * l..(i + 1) * c * l]);
            }
            let mut tape = Tape::new();
            let p = model.bind(&mut tape);
            let x = tape.constant(Tensor::new(&[b, c, l], xb)?);
            let out = model.forward(&mut tape, &p, x, Mode::Train, &mut dropout_rng, flags.use_ae)?;
            let probs = tape.softmax(out.logits)?;

            let prob_vals = tape.value(probs).data();
            let emb_vals = tape.value(out.embedding).data();
            let center_vals: Vec<f64> = tape.value(out.centers).data().iter().map(|&v| v as f64).collect();
            let mut targets = Vec::with_capacity(b);
            for (r, &i) in batch.iter().enumerate() {
                let pr: Vec<f64> = prob_vals[r * k..(r + 1) * k].iter().map(|&v| v as f64).collect();
                ema.push(i, &pr);
                let y = if cfg.algorithm == Algorithm::Srea {
                    let y_c = ema.pseudo_label(i);
                    // Without the clustering loss the centers are never
                    // fitted, so only the classifier proposes labels.
                    let y_cc = if flags.use_cc {
                        let e: Vec<f64> = emb_vals[r * d..(r + 1) * d].iter().map(|&v| v as f64).collect();
                        cluster_pseudo_label(&e, &center_vals, k)
                    } else {
                        vec![0.0; k]
                    };
                    correct_label(data.labels[i], &y_c, &y_cc, w, cfg.halve_pseudo_sum)
                } else {
                    data.labels[i]
                };
                corrected[i] = y;
                targets.push(y);
            }

            let ae = match out.reconstruction {
                Some(r) => Some(reconstruction_loss(&mut tape, r, x)?),
                None => None,
            };
            let lc = classification_loss(&mut tape, probs, &targets)?;
            let cc = if flags.use_cc {
                let cl = clustering_loss(&mut tape, out.embedding, &targets, out.centers)?;
                if cl.collapsed_centers > 0 {
                    collapse_events += 1;
                    log::warn!("epoch {epoch} batch {bi}: {} cluster centers collapsed", cl.collapsed_centers);
                }
                Some(cl.loss)
            } else {
                None
            };
            let rho = if flags.use_prior { Some(prior_loss(&mut tape, probs)?) } else { None };
            let parts = LossParts { ae, c: lc, cc, rho };
            let total = total_loss(&mut tape, &parts, alpha as f32, flags)?;

            let val = |v: Option<crate::tensor::Var>| v.map_or(0.0, |v| tape.value(v).item() as f64);
            let vals = [val(Some(total)), val(ae), val(Some(lc)), val(cc), val(rho)];
            if !vals[0].is_finite() {
                return Err(TrainError::NonFinite {
                    epoch,
                    batch: bi,
                    total: vals[0],
                    ae: vals[1],
                    c: vals[2],
                    cc: vals[3],
                    rho: vals[4],
                });
            }
            for (s, v) in sums.iter_mut().zip(vals) {
                *s += v * b as f64;
            }

            let mut grads = tape.backward(total)?;
            let g: Vec<Tensor<f32>> = p.iter().map(|&v| grads.take(v)).collect();
            drop(tape);
            adam.step(model.params_mut(), &g, lr);
        }
        let relabeled = corrected.iter().zip(data.labels).filter(|(a, b)| a != b).count();
        let accuracy = oracle.map(|o| corrected.iter().zip(o).filter(|(a, b)| a == b).count() as f64 / n as f64);
        let nf = n as f64;
        let entry = EpochTrace {
            epoch,
            alpha,
            w,
            lr,
            loss_total: sums[0] / nf,
            loss_ae: sums[1] / nf,
            loss_c: sums[2] / nf,
            loss_cc: sums[3] / nf,
            loss_rho: sums[4] / nf,
            relabel_fraction: relabeled as f64 / nf,
            corrected_label_accuracy: accuracy,
        };
        on_epoch(&entry);
        trace.push(entry);
    }
    Ok(RunOutput {
        model,
        corrected_labels: corrected,
        trace,
        center_collapse_events: collapse_events,
    })
}

/// Eval-mode class predictions for `samples[n, C, L]`.
pub fn predict_labels(model: &mut SreaModel, samples: &[f32], n: usize) -> Result<Vec<usize>, TrainError> {
    let k = model.config().classes;
    let (_, probs) = model.predict(samples, n, 256)?;
    Ok(probs
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f32::NEG_INFINITY), |best, (j, &v)| if v > best.1 { (j, v) } else { best })
                .0
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn trailing_singleton_batch_is_merged() {
        let order: Vec<usize> = (0..21).collect();
        let b = batches(&order, 10);
        assert_eq!(b.len(), 2);
        assert_eq!(b[0].len(), 10);
        assert_eq!(b[1].len(), 11);
        let order: Vec<usize> = (0..22).collect();
        assert_eq!(batches(&order, 10).iter().map(|b| b.len()).collect::<Vec<_>>(), vec![10, 10, 2]);
    }
}
