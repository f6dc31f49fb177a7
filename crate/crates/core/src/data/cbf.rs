use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DataError, Dataset};

/// Cylinder-bell-funnel series.
///
/// Class 0 (cylinder) is a plateau of height `6 + η` on `[a, b]`, class 1
/// (bell) ramps up to it and class 2 (funnel) ramps down from it; unit
/// Gaussian noise is added everywhere. For length 128, `a` is uniform on
/// `[16, 32]` and `b − a` on `[32, 96]`; other lengths scale these bounds.
/// Classes are balanced to within one sample and shuffled.
pub fn generate_cbf<R: Rng + ?Sized>(n: usize, len: usize, rng: &mut R) -> Result<Dataset, DataError> {
    if n == 0 {
        return Err(DataError::Invalid("CBF needs at least one sample".into()));
    }
    if len < 8 {
        return Err(DataError::Invalid(format!("series length {len} is too short for CBF")));
    }
    let mut labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
    labels.shuffle(rng);
    let (a_lo, a_hi) = (len / 8, len / 4);
    let (w_lo, w_hi) = (len / 4, 3 * len / 4);
    let mut samples = Vec::with_capacity(n * len);
    for &class in &labels {
        let a = rng.random_range(a_lo..=a_hi);
        let b = (a + rng.random_range(w_lo..=w_hi)).min(len - 1);
        let eta: f64 = StandardNormal.sample(rng);
        let height = 6.0 + eta;
        let span = (b - a) as f64;
        for t in 0..len {
            let shape = if (a..=b).contains(&t) {
                match class {
                    0 => 1.0,
                    1 => (t - a) as f64 / span,
                    _ => (b - t) as f64 / span,
                }
            } else {
                0.0
            };
            let noise: f64 = StandardNormal.sample(rng);
            samples.push((height * shape + noise) as f32);
        }
    }
    let mut ds = Dataset::new("cbf", 1, len, samples, labels, 3)?;
    ds.class_values = vec![1, 2, 3];
    Ok(ds)
}
