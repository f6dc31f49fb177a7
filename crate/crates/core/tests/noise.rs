use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srea_core::noise::{corrupt, NoiseError, NoiseKind, TransitionMatrix};
use statrs::distribution::{ChiSquared, ContinuousCDF};

fn epsilons() -> impl Iterator<Item = f64> {
    (0..=9).map(|i| i as f64 / 10.0)
}

#[test]
fn matrices_are_row_stochastic() {
    for kind in NoiseKind::ALL {
        for k in 2..=20 {
            for eps in epsilons() {
                let t = TransitionMatrix::new(kind, k, eps).unwrap();
                for i in 0..k {
                    let row = t.row(i);
                    assert!(row.iter().all(|&p| (0.0..=1.0).contains(&p)));
                    assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-12, "{kind} k={k} eps={eps} row {i}");
                }
                if eps == 0.0 {
                    for i in 0..k {
                        for j in 0..k {
                            assert_eq!(t.get(i, j), if i == j { 1.0 } else { 0.0 });
                        }
                    }
                }
            }
        }
    }
}

#[test]
fn documented_entries() {
    let s = TransitionMatrix::symmetric(3, 0.3).unwrap();
    assert!((s.get(1, 1) - 0.7).abs() < 1e-15 && (s.get(1, 2) - 0.15).abs() < 1e-15);
    let s = TransitionMatrix::symmetric(5, 0.6).unwrap();
    assert!((s.get(4, 4) - 0.4).abs() < 1e-15 && (s.get(4, 0) - 0.15).abs() < 1e-15);
    let f = TransitionMatrix::flip(4, 1.0).unwrap();
    for i in 1..4 {
        assert_eq!(f.row(i), &[1.0, 0.0, 0.0, 0.0]);
    }
    assert_eq!(f.row(0), &[1.0, 0.0, 0.0, 0.0]);
}

#[test]
fn rejects_bad_parameters() {
    assert!(matches!(TransitionMatrix::symmetric(1, 0.1), Err(NoiseError::Classes(1))));
    assert!(matches!(TransitionMatrix::flip(3, 1.1), Err(NoiseError::Ratio(_))));
    assert!(TransitionMatrix::asymmetric(3, -0.1).is_err());
    assert!(TransitionMatrix::asymmetric(3, f64::NAN).is_err());
    let t = TransitionMatrix::symmetric(3, 0.1).unwrap();
    let err = corrupt(&[0, 1, 3], &t, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
    assert!(matches!(err, NoiseError::Label { index: 2, label: 3, k: 3 }));
}

/// Pearson χ² statistic of the per-row destination counts against the
/// matrix, with degrees of freedom from the cells of positive probability.
fn chi_square(t: &TransitionMatrix, truth: &[usize], noisy: &[usize]) -> (f64, f64) {
    let k = t.k();
    let mut counts = vec![0usize; k * k];
    let mut per_row = vec![0usize; k];
    for (&y, &z) in truth.iter().zip(noisy) {
        counts[y * k + z] += 1;
        per_row[y] += 1;
    }
    let mut stat = 0.0;
    let mut dof = 0.0;
    for i in 0..k {
        let cells: Vec<usize> = (0..k).filter(|&j| t.get(i, j) > 0.0).collect();
        for j in 0..k {
            if t.get(i, j) == 0.0 {
                assert_eq!(counts[i * k + j], 0, "impossible transition {i}->{j}");
            }
        }
        for &j in &cells {
            let e = t.get(i, j) * per_row[i] as f64;
            stat += (counts[i * k + j] as f64 - e).powi(2) / e;
        }
        dof += cells.len() as f64 - 1.0;
    }
    (stat, dof)
}

#[test]
fn corruption_frequencies_pass_chi_square() {
    let n = 100_000;
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for kind in NoiseKind::ALL {
        for (k, eps) in [(3, 0.3), (5, 0.45), (10, 0.6), (2, 0.2)] {
            let t = TransitionMatrix::new(kind, k, eps).unwrap();
            let truth: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let c = corrupt(&truth, &t, &mut rng).unwrap();
            let (stat, dof) = chi_square(&t, &truth, &c.noisy);
            let critical = ChiSquared::new(dof).unwrap().inverse_cdf(0.99);
            assert!(stat < critical, "{kind} k={k} eps={eps}: chi2 {stat:.2} >= {critical:.2} (dof {dof})");
        }
    }
}

#[test]
fn symmetric_rate_within_binomial_bound() {
    let (n, eps) = (100_000, 0.45);
    let t = TransitionMatrix::symmetric(5, eps).unwrap();
    let truth: Vec<usize> = (0..n).map(|i| i % 5).collect();
    let c = corrupt(&truth, &t, &mut ChaCha8Rng::seed_from_u64(7)).unwrap();
    let rate = c.flipped.iter().filter(|&&f| f).count() as f64 / n as f64;
    assert!((rate - eps).abs() <= 3.0 * (eps * (1.0 - eps) / n as f64).sqrt(), "rate {rate}");
}

#[test]
fn identity_and_flip_properties() {
    let truth: Vec<usize> = (0..1000).map(|i| i % 5).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for kind in NoiseKind::ALL {
        let c = corrupt(&truth, &TransitionMatrix::new(kind, 5, 0.0).unwrap(), &mut rng).unwrap();
        assert_eq!(c.noisy, truth);
        assert!(c.flipped.iter().all(|&f| !f));
    }
    let c = corrupt(&truth, &TransitionMatrix::flip(5, 0.3).unwrap(), &mut rng).unwrap();
    for (i, (&y, &z)) in truth.iter().zip(&c.noisy).enumerate() {
        if y == 0 {
            assert_eq!(z, 0);
        }
        assert!(z == y || z == 0);
        assert_eq!(c.flipped[i], z != y);
    }
    let c = corrupt(&truth, &TransitionMatrix::flip(5, 1.0).unwrap(), &mut rng).unwrap();
    assert!(c.noisy.iter().all(|&z| z == 0));
    assert_eq!(c.oracle.reveal(), &truth[..]);
}

#[test]
fn corruption_is_deterministic_per_seed() {
    let truth: Vec<usize> = (0..500).map(|i| i % 4).collect();
    let t = TransitionMatrix::asymmetric(4, 0.4).unwrap();
    let a = corrupt(&truth, &t, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let b = corrupt(&truth, &t, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn kind_names_round_trip() {
    for kind in NoiseKind::ALL {
        assert_eq!(kind.as_str().parse::<NoiseKind>().unwrap(), kind);
        assert_eq!(kind.to_string(), kind.as_str());
    }
}

proptest! {
    #[test]
    fn sampled_labels_follow_the_support(kind_idx in 0usize..3, k in 2usize..12, eps in 0.0f64..=1.0, seed: u64) {
        let kind = NoiseKind::ALL[kind_idx];
        let t = TransitionMatrix::new(kind, k, eps).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for i in 0..k {
            let j = t.sample(i, &mut rng);
            prop_assert!(j < k && t.get(i, j) > 0.0);
        }
    }
}
