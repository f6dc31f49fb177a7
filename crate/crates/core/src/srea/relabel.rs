//! Pseudo-labels and label correction.

/// Epochs of classifier output kept per sample.
pub const HISTORY: usize = 5;

/// Exponentially weighted average of up to [`HISTORY`] probability vectors,
/// given oldest first. The newest gets weight `e^0`, the one before
/// `e^{-1/2}` and so on; weights are normalized over the vectors present.
///
/// # Panics
/// If `history` is empty or longer than [`HISTORY`].
pub fn classifier_pseudo_label(history: &[&[f64]]) -> Vec<f64> {
    let m = history.len();
    assert!((1..=HISTORY).contains(&m), "need 1..={HISTORY} stored epochs, got {m}");
    let k = history[0].len();
    let mut out = vec![0.0; k];
    let mut total = 0.0;
    for (pos, probs) in history.iter().enumerate() {
        // Position j = 6 − m + pos runs up to 5 for the newest entry.
        let j = (HISTORY - m + pos + 1) as f64;
        let weight = ((j - HISTORY as f64) / 2.0).exp();
        total += weight;
        for (o, &p) in out.iter_mut().zip(probs.iter()) {
            *o += weight * p;
        }
    }
    out.iter_mut().for_each(|o| *o /= total);
    out
}

/// Softmax over negated Euclidean distances from `embedding[d]` to each
/// column of `centers[d, k]` (row-major).
pub fn cluster_pseudo_label(embedding: &[f64], centers: &[f64], k: usize) -> Vec<f64> {
    let d = embedding.len();
    assert_eq!(centers.len(), d * k, "centers must be d x k");
    let neg: Vec<f64> = (0..k)
        .map(|j| {
            let sq: f64 = (0..d).map(|f| (embedding[f] - centers[f * k + j]).powi(2)).sum();
            -sq.sqrt()
        })
        .collect();
    let mx = neg.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = neg.iter().map(|v| (v - mx).exp()).collect();
    let z: f64 = e.iter().sum();
    e.into_iter().map(|v| v / z).collect()
}

/// `argmax[(1 − w)·onehot(given) + w·(y_c + y_cc)]`; with `halve` the
/// pseudo-label sum is scaled by ½. Ties go to the given class, then to the
/// lowest index.
pub fn correct_label(given: usize, y_c: &[f64], y_cc: &[f64], w: f64, halve: bool) -> usize {
    let k = y_c.len();
    assert_eq!(y_cc.len(), k, "pseudo-labels differ in length");
    assert!(given < k, "given label {given} out of range for {k} classes");
    let scale = if halve { 0.5 * w } else { w };
    let score = |j: usize| {
        let onehot = if j == given { 1.0 - w } else { 0.0 };
        onehot + scale * (y_c[j] + y_cc[j])
    };
    let mut best = given;
    let mut best_score = score(given);
    for j in 0..k {
        let s = score(j);
        if s > best_score {
            best = j;
            best_score = s;
        }
    }
    best
}

/// Per-sample ring buffers of the most recent classifier probabilities.
#[derive(Debug, Clone)]
pub struct EmaBuffer {
    k: usize,
    data: Vec<f64>,
    len: Vec<u8>,
    head: Vec<u8>,
}

impl EmaBuffer {
    pub fn new(n: usize, k: usize) -> Self {
        Self {
            k,
            data: vec![0.0; n * HISTORY * k],
            len: vec![0; n],
            head: vec![0; n],
        }
    }

    /// Stores `probs` as the newest entry of sample `i`, evicting the oldest
    /// once [`HISTORY`] entries are held.
    pub fn push(&mut self, i: usize, probs: &[f64]) {
        assert_eq!(probs.len(), self.k);
        let slot = self.head[i] as usize;
        let base = (i * HISTORY + slot) * self.k;
        self.data[base..base + self.k].copy_from_slice(probs);
        self.head[i] = ((slot + 1) % HISTORY) as u8;
        self.len[i] = (self.len[i] + 1).min(HISTORY as u8);
    }

    pub fn stored(&self, i: usize) -> usize {
        self.len[i] as usize
    }

    /// Weighted average of the stored entries of sample `i`.
    pub fn pseudo_label(&self, i: usize) -> Vec<f64> {
        let m = self.len[i] as usize;
        let head = self.head[i] as usize;
        let history: Vec<&[f64]> = (0..m)
            .map(|age| {
                let slot = (head + HISTORY - m + age) % HISTORY;
                let base = (i * HISTORY + slot) * self.k;
                &self.data[base..base + self.k]
            })
            .collect();
        classifier_pseudo_label(&history)
    }
}
