mod common;

use ndarray::Array2;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use survseg::hmm::{self, log_evidence_at};
use survseg::{build_prior, Dataset, EmissionTable, SegmentationPrior, SurvivalRecord};

use common::{enumerate, random_eta, random_log_e};

/// Random (emissions, prior) instance with n <= 12, K <= 3 and an admissible prior.
fn instance(seed: u64, zero_frac: f64) -> (Array2<f64>, SegmentationPrior) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let n = rand::Rng::random_range(&mut rng, 1..=12usize);
        let k = rand::Rng::random_range(&mut rng, 1..=3usize.min(n));
        let eta = random_eta(&mut rng, n, k, zero_frac);
        if let Ok(prior) = SegmentationPrior::new(eta) {
            return (random_log_e(&mut rng, n, k), prior);
        }
    }
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn matches_exhaustive_enumeration(seed in any::<u64>(), zero_frac in 0.0..0.4f64) {
        let (log_e, prior) = instance(seed, zero_frac);
        let tables = hmm::run(&EmissionTable::new(log_e.clone()).unwrap(), &prior).unwrap();
        let oracle = enumerate(&log_e, prior.eta());
        prop_assert!(close(tables.log_lik, oracle.log_lik, 1e-10));
        prop_assert!(close(prior.log_normalizer(), oracle.normalizer.ln(), 1e-10));
        for (a, b) in tables.weights.iter().zip(oracle.weights.iter()) {
            prop_assert!(close(*a, *b, 1e-10));
        }
        for (a, b) in tables.bp_marginal.iter().zip(oracle.bp.iter()) {
            prop_assert!(close(*a, *b, 1e-10));
        }
    }

    #[test]
    fn row_shifts_leave_posteriors_unchanged(seed in any::<u64>(), shifts in proptest::collection::vec(-30.0..30.0f64, 12)) {
        let (log_e, prior) = instance(seed, 0.2);
        let n = log_e.nrows();
        let mut shifted = log_e.clone();
        for i in 0..n {
            shifted.row_mut(i).mapv_inplace(|v| v + shifts[i]);
        }
        let a = hmm::run(&EmissionTable::new(log_e).unwrap(), &prior).unwrap();
        let b = hmm::run(&EmissionTable::new(shifted).unwrap(), &prior).unwrap();
        let total: f64 = shifts[..n].iter().sum();
        prop_assert!(close(b.log_lik - a.log_lik, total, 1e-9));
        for (x, y) in a.weights.iter().zip(b.weights.iter()) {
            prop_assert!(close(*x, *y, 1e-10));
        }
        for (x, y) in a.bp_marginal.iter().zip(b.bp_marginal.iter()) {
            prop_assert!(close(*x, *y, 1e-10));
        }
    }

    #[test]
    fn evidence_is_the_same_at_every_position(seed in any::<u64>()) {
        let (log_e, prior) = instance(seed, 0.2);
        let e = EmissionTable::new(log_e).unwrap();
        let f = hmm::forward(&e, &prior).unwrap();
        let b = hmm::backward(&e, &prior).unwrap();
        let last = log_evidence_at(&f, &b, f.nrows() - 1);
        for i in 0..f.nrows() {
            prop_assert!(close(log_evidence_at(&f, &b, i), last, 1e-10));
        }
    }

    #[test]
    fn unreachable_cells_have_zero_weight(seed in any::<u64>()) {
        let (log_e, prior) = instance(seed, 0.3);
        let tables = hmm::run(&EmissionTable::new(log_e.clone()).unwrap(), &prior).unwrap();
        let paths = common::segmentations(log_e.nrows(), log_e.ncols());
        for i in 0..log_e.nrows() {
            for k in 0..log_e.ncols() {
                let reachable = paths
                    .iter()
                    .any(|p| p[i] == k && common::prior_mass(p, prior.eta()) > 0.0);
                if !reachable {
                    prop_assert_eq!(tables.weights[[i, k]], 0.0);
                }
            }
        }
        prop_assert!((tables.weights[[0, 0]] - 1.0).abs() < 1e-12);
        prop_assert!((tables.weights[[log_e.nrows() - 1, log_e.ncols() - 1]] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn forbidden_ties_never_split(keys in proptest::collection::vec(0u8..4, 3..=10), seed in any::<u64>()) {
        let mut keys: Vec<f64> = keys.into_iter().map(f64::from).collect();
        keys.sort_by(f64::total_cmp);
        let ds = Dataset::new(
            keys.iter().map(|&k| SurvivalRecord::new(1.0, true, vec![], k)).collect(),
        ).unwrap();
        let changes = ds.distinct_key_changes();
        let k = 1 + changes.min(2);
        let prior = build_prior(&ds, k, 0.5, true).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let log_e = random_log_e(&mut rng, keys.len(), k);
        let oracle = enumerate(&log_e, prior.eta());
        let tables = hmm::run(&EmissionTable::new(log_e).unwrap(), &prior).unwrap();
        for p in common::segmentations(keys.len(), k) {
            if common::prior_mass(&p, prior.eta()) > 0.0 {
                for i in 1..p.len() {
                    if p[i] != p[i - 1] {
                        prop_assert!(keys[i] != keys[i - 1]);
                    }
                }
            }
        }
        for s in 0..k.saturating_sub(1) {
            for i in 0..keys.len() - 1 {
                if keys[i] == keys[i + 1] {
                    prop_assert_eq!(tables.bp_marginal[[s, i]], 0.0);
                }
                prop_assert!(close(tables.bp_marginal[[s, i]], oracle.bp[[s, i]], 1e-10));
            }
        }
    }
}

#[test]
fn constant_eta_normalizer_is_binomial() {
    for &eta in &[0.1, 0.5, 0.83] {
        for n in 1..=30usize {
            for k in 1..=5usize.min(n) {
                let prior = SegmentationPrior::uniform(n, k, eta).unwrap();
                let log_binom: f64 = (1..k).map(|j| ((n - j) as f64 / j as f64).ln()).sum();
                let expect =
                    (n - k) as f64 * (1.0 - eta).ln() + (k - 1) as f64 * eta.ln() + log_binom;
                assert!(
                    (prior.log_normalizer() - expect).abs() < 1e-12,
                    "n={n} K={k} eta={eta}"
                );
            }
        }
    }
}

#[test]
fn eight_positions_three_segments_has_21_paths() {
    assert_eq!(common::segmentations(8, 3).len(), 21);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let log_e = random_log_e(&mut rng, 8, 3);
    let prior = SegmentationPrior::uniform(8, 3, 0.3).unwrap();
    let f = hmm::forward(&EmissionTable::new(log_e.clone()).unwrap(), &prior).unwrap();
    let brute: f64 = common::segmentations(8, 3)
        .iter()
        .map(|p| {
            common::prior_mass(p, prior.eta())
                * p.iter().enumerate().map(|(i, &s)| log_e[[i, s]]).sum::<f64>().exp()
        })
        .sum();
    assert!((f[[7, 2]] - brute.ln()).abs() < 1e-12);
}

#[test]
fn inadmissible_segment_count_is_rejected() {
    let ds = Dataset::new(
        [1.0, 1.0, 2.0, 2.0]
            .iter()
            .map(|&k| SurvivalRecord::new(1.0, true, vec![], k))
            .collect(),
    )
    .unwrap();
    let err = build_prior(&ds, 3, 0.5, true).unwrap_err();
    assert_eq!(err.kind(), "too_many_segments");
}
