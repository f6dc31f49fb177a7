use super::Dataset;

/// Lower bound on the standard deviation used for scaling.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-channel affine map to zero mean and unit variance.
#[derive(Debug, Clone, PartialEq)]
pub struct Normalizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Normalizer {
    /// Statistics of each channel over all samples and time steps of `ds`.
    pub fn fit(ds: &Dataset) -> Self {
        let (c, l) = (ds.channels, ds.len);
        let count = (ds.n() * l) as f64;
        let mut mean = vec![0.0; c];
        let mut sq = vec![0.0; c];
        for s in ds.samples.chunks(c * l) {
            for ch in 0..c {
                for &v in &s[ch * l..(ch + 1) * l] {
                    mean[ch] += v as f64;
                }
            }
        }
        mean.iter_mut().for_each(|m| *m /= count.max(1.0));
        for s in ds.samples.chunks(c * l) {
            for ch in 0..c {
                for &v in &s[ch * l..(ch + 1) * l] {
                    sq[ch] += (v as f64 - mean[ch]).powi(2);
                }
            }
        }
        let std = sq.iter().map(|s| (s / count.max(1.0)).sqrt().max(STD_FLOOR)).collect();
        Self { mean, std }
    }

    pub fn apply(&self, ds: &mut Dataset) {
        let (c, l) = (ds.channels, ds.len);
        assert_eq!(c, self.mean.len(), "normalizer fitted for a different channel count");
        for s in ds.samples.chunks_mut(c * l) {
            for ch in 0..c {
                for v in &mut s[ch * l..(ch + 1) * l] {
                    *v = ((*v as f64 - self.mean[ch]) / self.std[ch]) as f32;
                }
            }
        }
    }
}

/// Normalizes `train` with its own statistics and applies the same map to
/// every dataset in `others`.
pub fn znormalize(train: &mut Dataset, others: &mut [&mut Dataset]) -> Normalizer {
    let norm = Normalizer::fit(train);
    norm.apply(train);
    for ds in others.iter_mut() {
        norm.apply(ds);
    }
    norm
}
