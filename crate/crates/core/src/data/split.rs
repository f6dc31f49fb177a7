use rand::seq::SliceRandom;
use rand::Rng;

use super::{DataError, Dataset};

/// Stratified train/test index split.
///
/// The train side receives `round(n · ratio)` samples, shared among classes
/// by largest remainder so each class keeps its proportion within one
/// sample. Both sides come back shuffled.
pub fn stratified_split_indices<R: Rng + ?Sized>(labels: &[usize], classes: usize, ratio: f64, rng: &mut R) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(DataError::Invalid(format!("split ratio {ratio} outside [0, 1]")));
    }
    let n = labels.len();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &y) in labels.iter().enumerate() {
        if y >= classes {
            return Err(DataError::Invalid(format!("label {y} out of range for {classes} classes")));
        }
        by_class[y].push(i);
    }
    let target = (n as f64 * ratio).round() as usize;
    let quotas: Vec<f64> = by_class.iter().map(|c| c.len() as f64 * ratio).collect();
    let mut take: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
    let mut rest = target.saturating_sub(take.iter().sum());
    let mut order: Vec<usize> = (0..classes).collect();
    order.sort_by(|&a, &b| {
        let fa = quotas[a] - quotas[a].floor();
        let fb = quotas[b] - quotas[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &c in order.iter().cycle().take(classes * 2) {
        if rest == 0 {
            break;
        }
        if take[c] < by_class[c].len() {
            take[c] += 1;
            rest -= 1;
        }
    }
    let mut train = Vec::with_capacity(target);
    let mut test = Vec::with_capacity(n - target);
    for (c, members) in by_class.iter_mut().enumerate() {
        members.shuffle(rng);
        train.extend_from_slice(&members[..take[c]]);
        test.extend_from_slice(&members[take[c]..]);
    }
    train.shuffle(rng);
    test.shuffle(rng);
    Ok((train, test))
}

/// Splits `ds` into stratified, shuffled train and test sets.
pub fn split<R: Rng + ?Sized>(ds: &Dataset, ratio: f64, rng: &mut R) -> Result<(Dataset, Dataset), DataError> {
    let (train, test) = stratified_split_indices(&ds.labels, ds.classes, ratio, rng)?;
    Ok((ds.subset(&train), ds.subset(&test)))
}
