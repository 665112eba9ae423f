mod common;

use survseg::baseline::{mstep, FamilyKind, MStepSettings};
use survseg::simulation::{
    scenario_blocks, simulate_blocks, simulate_scenario, simulate_table, synthetic_two_breakpoint_table,
    BlockSpec, Censoring, HazardSpec,
};
use survseg::{BaselineFamily, Kernel};

use common::{ks_statistic, oracle_weights};

fn settings(cuts: Vec<f64>) -> MStepSettings {
    MStepSettings {
        cuts,
        bandwidth: survseg::baseline::smoothing::default_bandwidth(3000),
        kernel: Kernel::Epanechnikov,
    }
}

#[test]
fn inversion_matches_analytic_distribution() {
    // 1.95 / sqrt(n) is the 0.1% critical value of the KS statistic.
    let n = 5000;
    for id in 1..=4 {
        let first = scenario_blocks(id).unwrap().remove(0);
        let block = BlockSpec { hazard: first.hazard.clone(), beta: 0.0 };
        let c = simulate_blocks(&[block], &[n], Censoring::None, 100 + u64::from(id)).unwrap();
        let times: Vec<f64> = c.dataset.records().iter().map(|r| r.time).collect();
        let d = ks_statistic(times, |t| 1.0 - (-first.hazard.cumulative(t)).exp());
        assert!(d < 1.95 / (n as f64).sqrt(), "scenario {id}: D = {d}");
    }
}

#[test]
fn censoring_is_calibrated_to_half() {
    for id in 1..=4 {
        for seed in [1, 2, 3] {
            let c = simulate_scenario(id, 3000, seed).unwrap();
            let f = c.truth.censored_fraction;
            assert!((0.48..=0.52).contains(&f), "scenario {id} seed {seed}: {f}");
        }
    }
}

#[test]
fn oracle_weights_recover_scenario_one() {
    let c = simulate_scenario(1, 3000, 21).unwrap();
    let w = oracle_weights(&c.labels, 3);
    let out = mstep(FamilyKind::Exponential, &c.dataset, &w, &settings(vec![])).unwrap();
    let rates = [1.0, 0.5, 0.7];
    let betas = [1.5, -0.5, -0.5];
    for k in 0..3 {
        let BaselineFamily::Exponential { rate } = out.theta.baselines[k] else { panic!() };
        assert!((rate / rates[k] - 1.0).abs() < 0.25, "rate {k}: {rate}");
        assert!((out.theta.betas[k][0] - betas[k]).abs() < 0.25, "beta {k}");
    }
    let cox = mstep(FamilyKind::Cox, &c.dataset, &w, &settings(vec![])).unwrap();
    for k in 0..3 {
        assert!((cox.theta.betas[k][0] - betas[k]).abs() < 0.25, "cox beta {k}");
    }
}

#[test]
fn oracle_weights_recover_scenarios_two_and_three() {
    let c = simulate_scenario(2, 3000, 22).unwrap();
    let w = oracle_weights(&c.labels, 3);
    let out = mstep(FamilyKind::Weibull, &c.dataset, &w, &settings(vec![])).unwrap();
    for (k, b) in [1.5, -1.0, -5.0].iter().enumerate() {
        let got = out.theta.betas[k][0];
        assert!((got - b).abs() < 0.15 * b.abs() + 0.2, "scenario 2 beta {k}: {got}");
    }
    let c = simulate_scenario(3, 3000, 23).unwrap();
    let w = oracle_weights(&c.labels, 3);
    // Calibrated censoring ends follow-up before t = 3, where the only change
    // in any true hazard is at t = 1; one cut specifies every segment exactly.
    assert!(c.dataset.max_time() < 3.0);
    let out = mstep(FamilyKind::Pch, &c.dataset, &w, &settings(vec![1.0])).unwrap();
    for (k, b) in [1.5, -0.5, -1.5].iter().enumerate() {
        let got = out.theta.betas[k][0];
        assert!((got - b).abs() < 0.25, "scenario 3 beta {k}: {got}");
    }
}

#[test]
fn scenario_parameters_are_as_published() {
    let s2 = scenario_blocks(2).unwrap();
    assert_eq!(s2[0].hazard, HazardSpec::Weibull { shape: 5.0, scale: 1.0 });
    assert!((s2[0].hazard.cumulative(0.8) - 0.8f64.powi(5)).abs() < 1e-15);
    assert_eq!(s2.iter().map(|b| b.beta).collect::<Vec<_>>(), vec![1.5, -1.0, -5.0]);
    let s3 = scenario_blocks(3).unwrap();
    let cuts: Vec<Vec<f64>> = s3
        .iter()
        .map(|b| match &b.hazard {
            HazardSpec::Pch { cuts, .. } => cuts.clone(),
            _ => panic!(),
        })
        .collect();
    assert_eq!(cuts, vec![vec![1.0, 3.0], vec![4.0, 6.0], vec![5.0, 7.0]]);
    let s4 = scenario_blocks(4).unwrap();
    assert!((s4[0].hazard.cumulative(0.3) - (1.5f64.exp() - 1.0) / 5.0).abs() < 1e-14);
}

#[test]
fn seeded_generation_is_reproducible() {
    let t = synthetic_two_breakpoint_table();
    let a = simulate_table(&t, &[300, 200, 200], 700, 5).unwrap();
    let b = simulate_table(&t, &[300, 200, 200], 700, 5).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.truth.breakpoints(), vec![300, 500]);
    assert_ne!(a.dataset, simulate_table(&t, &[300, 200, 200], 700, 6).unwrap().dataset);
}
