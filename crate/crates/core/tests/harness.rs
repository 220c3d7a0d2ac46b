use std::sync::OnceLock;

use stickrec_core::harness::*;
use stickrec_core::models::{fit_item_models, ItemModels};
use stickrec_core::qvalue::PolicyArm;
use stickrec_core::simulator::logging_policy;
use stickrec_core::{SimConfig, Simulator, Trajectory};

fn world() -> &'static (Simulator, ItemModels) {
    static WORLD: OnceLock<(Simulator, ItemModels)> = OnceLock::new();
    WORLD.get_or_init(|| {
        let sim = Simulator::new(SimConfig::default()).unwrap();
        let policy = logging_policy(&sim.config).unwrap();
        let trajectories: Vec<Trajectory> = sim
            .simulate_cohort(&policy, 5_000)
            .into_iter()
            .map(|u| u.trajectory)
            .collect();
        let models = fit_item_models(&trajectories, &sim.catalogue.public_info(), 1.0, 60).unwrap();
        (sim, models)
    })
}

#[test]
fn cohorts_do_not_depend_on_thread_count() {
    let (sim, _) = world();
    let policy = logging_policy(&sim.config).unwrap();
    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let one = pool(1).install(|| sim.simulate_cohort(&policy, 200));
    let four = pool(4).install(|| sim.simulate_cohort(&policy, 200));
    assert_eq!(one, four);
}

#[test]
fn ab_report_is_deterministic() {
    let (sim, models) = world();
    let spec = ExperimentSpec {
        n_users: 500,
        ..ExperimentSpec::default()
    };
    assert_eq!(run_ab(&spec, sim, models).unwrap(), run_ab(&spec, sim, models).unwrap());
}

#[test]
fn all_user_effect_is_impacted_effect_times_fraction() {
    let (sim, models) = world();
    let spec = ExperimentSpec {
        n_users: 2_000,
        ..ExperimentSpec::default()
    };
    let report = run_ab(&spec, sim, models).unwrap();
    assert_eq!(report.effects.len(), Metric::ALL.len());
    for e in &report.effects {
        assert!(e.impacted_fraction > 0.0 && e.impacted_fraction < 1.0);
        let implied = e.paired_impacted.delta * e.impacted_fraction;
        assert!((e.all_users.delta - implied).abs() < 1e-9, "{:?}", e.metric);
    }
}

#[test]
fn identical_arms_have_no_effect() {
    let (sim, models) = world();
    let spec = ExperimentSpec {
        arms: vec![PolicyArm::Control, PolicyArm::Control],
        n_users: 300,
        ..ExperimentSpec::default()
    };
    let report = run_ab(&spec, sim, models).unwrap();
    for e in &report.effects {
        assert_eq!(e.impacted_fraction, 0.0);
        assert_eq!(e.all_users.delta, 0.0);
    }
}

#[test]
fn empty_experiment_gives_empty_report() {
    let (sim, models) = world();
    let spec = ExperimentSpec {
        n_users: 0,
        ..ExperimentSpec::default()
    };
    let report = run_ab(&spec, sim, models).unwrap();
    assert!(report.effects.is_empty());
    assert!(report.arms.iter().all(|a| a.n_users == 0));
}

#[test]
fn missing_control_is_a_config_error() {
    let (sim, models) = world();
    let spec = ExperimentSpec {
        arms: vec![PolicyArm::Personalized],
        ..ExperimentSpec::default()
    };
    assert!(run_ab(&spec, sim, models).unwrap_err().is_config());
}

#[test]
fn holdback_targets_both_cohorts_equally() {
    let (sim, models) = world();
    let spec = ExperimentSpec {
        n_users: 2_000,
        ..ExperimentSpec::default()
    };
    let r = run_holdback(&spec, sim, models).unwrap();
    assert_eq!(r.n_shown + r.n_held, 4_000);
    assert!(r.targeting_z.abs() < 3.0);
    assert!(r.discovery_shown.mean > r.discovery_held.mean);
}

#[test]
fn constant_predictor_calibrates_to_the_mean() {
    let (sim, _) = world();
    let records = heldout_discoveries(sim, 2_000, 60).unwrap();
    let mean = records.iter().map(|(_, r)| r.v_hat as f64).sum::<f64>() / records.len() as f64;
    let table = run_calibration(&ConstantPredictor(mean), sim, 2_000).unwrap();
    assert_eq!(table.bins.len(), 1);
    assert_eq!(table.bins[0].count, 2_000);
    assert!((table.bins[0].realized - mean).abs() < 1e-9);
    assert!(table.max_relative_error() < 1e-9);
}

#[test]
fn oracle_ordering_is_monotone() {
    let (sim, _) = world();
    // Predicting each record's own outcome is perfectly calibrated.
    let records = heldout_discoveries(sim, 3_000, 60).unwrap();
    let pairs: Vec<(f64, f64)> = records.iter().map(|(_, r)| (r.v_hat as f64, r.v_hat as f64)).collect();
    let table = CalibrationTable::from_pairs(&pairs, 10);
    assert!(table.is_monotone());
    assert!(table.max_relative_error() < 1e-12);
}
