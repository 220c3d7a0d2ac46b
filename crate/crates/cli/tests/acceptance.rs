//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion
//! and exits non-zero when any fails. Positional arguments select criteria
//! by number.

mod common;

use std::process::ExitCode;
use std::sync::OnceLock;
use std::time::Instant;

use stickrec_core::estimators::{
    bootstrap_ours_se, collect_meta_action_data, q_holistic, q_local, q_ours, auxiliary_value,
    sample_complexity_sweep, OutcomeSample, SweepConfig, SweepRow,
};
use stickrec_core::harness::{run_ab, run_calibration, run_holdback, ExperimentSpec, Metric};
use stickrec_core::models::{fit_item_models, train_stickiness, DiscoveryRecord, ItemModels};
use stickrec_core::policy_improvement::*;
use stickrec_core::qvalue::{q_general_decomposed, PolicyArm};
use stickrec_core::rng::hash_uniform;
use stickrec_core::simulator::logging_policy;
use stickrec_core::stats::mean_se;
use stickrec_core::{update_relationship_state, ItemId, RelationshipState, SimConfig, Simulator, Trajectory};

type Check = Result<String, String>;

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg())
    }
}

fn err<E: std::fmt::Display>(e: E) -> String {
    e.to_string()
}

fn train(sim: &Simulator, n_logged: usize) -> Result<ItemModels, String> {
    let policy = logging_policy(&sim.config).map_err(err)?;
    let trajectories: Vec<Trajectory> = sim
        .simulate_cohort(&policy, n_logged)
        .into_iter()
        .map(|u| u.trajectory)
        .collect();
    fit_item_models(&trajectories, &sim.catalogue.public_info(), 1.0, 60).map_err(err)
}

/// Default simulator with models trained on 10^5 logged users.
fn default_world() -> &'static (Simulator, ItemModels) {
    static WORLD: OnceLock<(Simulator, ItemModels)> = OnceLock::new();
    WORLD.get_or_init(|| {
        let sim = Simulator::new(SimConfig::default()).expect("default config is valid");
        let models = train(&sim, 100_000).expect("training on logged users");
        (sim, models)
    })
}

fn taste_rule(mdp: &ToyMdp) -> AggregationRule {
    let assignment = (0..mdp.n_states()).map(|s| mdp.cluster_of(s)).collect();
    AggregationRule::new(mdp.n_clusters(), assignment).expect("valid rule")
}

/// The mismatch toy plus a third, middling item.
fn three_item_toy() -> ToyMdp {
    let mut mdp = ToyMdp::mismatch();
    let row = vec![[0.05, 0.40], [0.20, 0.50], [0.40, 0.60], [0.60, 0.75], [0.70, 0.80]];
    mdp.items.push(ToyItem {
        id: ItemId(2),
        listen: vec![row.clone(), row],
    });
    mdp.pi0 = vec![vec![0.5, 0.2, 0.3], vec![0.4, 0.4, 0.2]];
    mdp.validate().expect("valid toy");
    mdp
}

fn decomposition() -> Check {
    let mut worst: f64 = 0.0;
    let mut states = 0;
    for mdp in [ToyMdp::mismatch(), three_item_toy()] {
        let stick = ToyStickiness::new(&mdp).map_err(err)?;
        let items = mdp.item_ids();
        for s in 0..mdp.n_states() {
            let exact: Vec<f64> = items
                .iter()
                .map(|&a| brute_force_q(&mdp, s, a, mdp.gamma))
                .collect::<Result<_, _>>()
                .map_err(err)?;
            let dec: Vec<f64> = items
                .iter()
                .map(|&a| q_general_decomposed(&mdp, &stick, &s, a, mdp.gamma))
                .collect();
            for j in 1..items.len() {
                worst = worst.max(((dec[j] - dec[0]) - (exact[j] - exact[0])).abs());
            }
        }
        states += mdp.n_states();
    }
    ensure(worst <= 1e-6, || format!("max DP discrepancy {worst:.2e}"))?;

    let mdp = ToyMdp::mismatch();
    let stick = ToyStickiness::new(&mdp).map_err(err)?;
    let mut worst_z: f64 = 0.0;
    for s in [mdp.encode(0, &[0, 0]), mdp.encode(1, &[2, 1]), mdp.encode(0, &[4, 3])] {
        let dec = q_general_decomposed(&mdp, &stick, &s, ItemId(1), mdp.gamma)
            - q_general_decomposed(&mdp, &stick, &s, ItemId(0), mdp.gamma);
        let a = mdp.mc_q(s, ItemId(0), 40_000, 0).map_err(err)?;
        let b = mdp.mc_q(s, ItemId(1), 40_000, 0).map_err(err)?;
        let se = (a.se * a.se + b.se * b.se).sqrt();
        let z = ((b.mean - a.mean) - dec).abs() / se;
        worst_z = worst_z.max(z);
    }
    ensure(worst_z < 3.0, || format!("Monte-Carlo discrepancy {worst_z:.2} SE"))?;
    Ok(format!(
        "{states} states, max DP error {worst:.1e}, max MC discrepancy {worst_z:.2} SE"
    ))
}

fn policy_improvement() -> Check {
    let mdp = ToyMdp::mismatch();
    let rule = AggregationRule::identity(mdp.n_states());
    let pi0 = mdp.incumbent();
    let greedy = greedy_from_aggregated(&aggregated_q_exact(&mdp, &rule).map_err(err)?).map_err(err)?;
    let plus = mdp.aggregated_policy(&rule, &greedy).map_err(err)?;
    let (j0, j1) = (mdp.j_exact(&pi0).map_err(err)?, mdp.j_exact(&plus).map_err(err)?);
    ensure(j1 >= j0, || format!("exact J fell from {j0:.4} to {j1:.4}"))?;

    let episodes = mdp.logged_episodes(&pi0, &rule, 100_000).map_err(err)?;
    let (q, _) = direct_pi(&episodes, rule.m, &mdp.item_ids()).map_err(err)?;
    let learned = mdp
        .aggregated_policy(&rule, &greedy_from_aggregated(&q).map_err(err)?)
        .map_err(err)?;
    let e0 = estimate_j(&mdp, &pi0, 20_000).map_err(err)?;
    let e1 = estimate_j(&mdp, &learned, 20_000).map_err(err)?;
    let se = (e0.se * e0.se + e1.se * e1.se).sqrt();
    ensure(e1.mean >= e0.mean - 3.0 * se, || {
        format!("simulated J {:.3} < {:.3} - 3 SE ({se:.3})", e1.mean, e0.mean)
    })?;
    Ok(format!(
        "exact J {j0:.3} -> {j1:.3}; direct_pi J {:.3} -> {:.3} (SE {se:.3})",
        e0.mean, e1.mean
    ))
}

fn gradient_fidelity() -> Check {
    let mdp = ToyMdp::mismatch();
    let rule = taste_rule(&mdp);
    let greedy = greedy_from_aggregated(&aggregated_q_exact(&mdp, &rule).map_err(err)?).map_err(err)?;
    let report = policy_gradient_check(&mdp, &greedy, &rule, &[0.02, 0.04, 0.08]).map_err(err)?;
    let slope = report.slope.ok_or("remainder vanished; slope undefined")?;
    ensure((1.7..=2.3).contains(&slope), || format!("remainder slope {slope:.3}"))?;
    Ok(format!("remainder slope {slope:.3}"))
}

fn sweep_world(slots: usize) -> Result<(Simulator, ItemModels), String> {
    let config = SimConfig {
        n_items: 50,
        pool_size: 10,
        slots,
        gamma: 0.967,
        ..SimConfig::default()
    };
    let sim = Simulator::new(config).map_err(err)?;
    let models = train(&sim, 50_000)?;
    Ok((sim, models))
}

fn find<'a>(rows: &'a [SweepRow], est: &str, arm: PolicyArm, n: usize) -> &'a SweepRow {
    rows.iter()
        .find(|r| r.estimator == est && r.meta_action == arm.name() && r.n == n)
        .expect("sweep row present")
}

fn measurement_challenge() -> Check {
    let grid = vec![1_000, 10_000, 100_000];
    let config = SweepConfig {
        n_grid: grid.clone(),
        ..SweepConfig::default()
    };
    let mut ratios = Vec::new();
    for slots in [20, 40] {
        let (sim, models) = sweep_world(slots)?;
        let rows = sample_complexity_sweep(&sim, &models, &config).map_err(err)?;
        let mut r = Vec::new();
        for arm in config.arms {
            for &n in &grid {
                let (g, l, o) = (
                    find(&rows, "glt", arm, n).se,
                    find(&rows, "llt", arm, n).se,
                    find(&rows, "ours", arm, n).se,
                );
                ensure(g > l && l >= o, || {
                    format!("L={slots} {arm} n={n}: SE glt {g:.3}, llt {l:.3}, ours {o:.3}")
                })?;
                r.push(g / o);
            }
        }
        ratios.push(r);
    }
    let min20 = ratios[0].iter().copied().fold(f64::INFINITY, f64::min);
    ensure(min20 >= 10.0, || format!("SE_glt/SE_ours at L=20 is {min20:.2}"))?;
    for (a, b) in ratios[0].iter().zip(&ratios[1]) {
        ensure(b > a, || format!("ratio did not grow with L: {a:.2} -> {b:.2}"))?;
    }
    let max = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    Ok(format!(
        "SE_glt/SE_ours in [{min20:.1}, {:.1}] at L=20, up to {:.1} at L=40",
        max(&ratios[0]),
        max(&ratios[1])
    ))
}

fn estimator_agreement() -> Check {
    let (sim, models) = default_world();
    let arms = [PolicyArm::Control, PolicyArm::Personalized];
    let data = collect_meta_action_data(sim, models, arms, 100_000, 7000, 60).map_err(err)?;
    let mut worst: f64 = 0.0;
    let mut ours = Vec::new();
    for d in &data {
        let l = q_local(&d.samples).map_err(err)?;
        let o = q_ours(&d.samples, &auxiliary_value(&d.discovery_minutes).map_err(err)?).map_err(err)?;
        worst = worst.max((l.mean - o.mean).abs() / (l.se * l.se + o.se * o.se).sqrt());
        ours.push(o);
    }
    // Holistic levels include every other habit, so all three are compared
    // on the contrast between the two meta-actions.
    let paired = |f: fn(&OutcomeSample) -> f64| {
        let diffs: Vec<f64> = data[1]
            .samples
            .iter()
            .zip(&data[0].samples)
            .map(|(b, a)| f(b) - f(a))
            .collect();
        mean_se(&diffs)
    };
    let glt = paired(|s| s.g).map_err(err)?;
    let llt = paired(|s| s.r).map_err(err)?;
    let ours_delta = ours[1].mean - ours[0].mean;
    let ours_se = (ours[0].se.powi(2) + ours[1].se.powi(2)).sqrt();
    for (name, other, se) in [("llt", llt.mean, llt.se), ("ours", ours_delta, ours_se)] {
        let z = (glt.mean - other).abs() / (glt.se * glt.se + se * se).sqrt();
        ensure(z < 3.0, || format!("glt contrast {:.3} vs {name} {other:.3}: {z:.2} SE", glt.mean))?;
        worst = worst.max(z);
    }
    let z = (llt.mean - ours_delta).abs() / (llt.se * llt.se + ours_se * ours_se).sqrt();
    worst = worst.max(z);
    ensure(worst < 3.0, || format!("largest disagreement {worst:.2} SE"))?;
    // Holistic level, reported only.
    let g0 = q_holistic(&data[0].samples).map_err(err)?;
    Ok(format!(
        "max disagreement {worst:.2} SE; contrast glt {:.3}, llt {:.3}, ours {ours_delta:.3} (glt level {:.1})",
        glt.mean, llt.mean, g0.mean
    ))
}

fn calibration() -> Check {
    let (sim, models) = default_world();
    let table = run_calibration(models, sim, 100_000).map_err(err)?;
    let max_err = table.max_relative_error();
    ensure(table.bins.len() == 10, || format!("{} bins", table.bins.len()))?;
    ensure(max_err < 0.10, || format!("max relative error {max_err:.3}"))?;
    ensure(table.is_monotone(), || "realized means are not monotone".into())?;
    Ok(format!("max relative error {max_err:.3}, monotone"))
}

fn mismatch_directionality() -> Check {
    let (sim, models) = default_world();
    let spec = ExperimentSpec {
        n_users: 100_000,
        ..ExperimentSpec::default()
    };
    let report = run_ab(&spec, sim, models).map_err(err)?;
    let t = |metric: Metric| {
        report
            .effects
            .iter()
            .find(|e| e.arm == PolicyArm::Personalized && e.metric == metric)
            .map(|e| e.impacted.delta / e.impacted.se)
            .ok_or_else(|| format!("no effect for {metric:?}"))
    };
    let (first, days, minutes) = (
        t(Metric::FirstStreams)?,
        t(Metric::ActiveDays60)?,
        t(Metric::Minutes60)?,
    );
    ensure(first < -3.0, || format!("first streams t = {first:.2}"))?;
    ensure(days > 3.0, || format!("active days t = {days:.2}"))?;
    ensure(minutes > 3.0, || format!("minutes t = {minutes:.2}"))?;
    Ok(format!(
        "t: first streams {first:.2}, active days {days:.2}, minutes {minutes:.2}"
    ))
}

fn holdback() -> Check {
    let (sim, models) = default_world();
    let spec = ExperimentSpec {
        arms: vec![PolicyArm::Personalized, PolicyArm::Control],
        n_users: 20_000,
        ..ExperimentSpec::default()
    };
    let r = run_holdback(&spec, sim, models).map_err(err)?;
    ensure(r.ratio >= 5.0, || format!("discovery ratio {:.2}", r.ratio))?;
    let rate = |t: usize, n: usize| t as f64 / n as f64;
    ensure(
        r.targeting_z.abs() < 3.0
            && (rate(r.targeted_shown, r.n_shown) - rate(r.targeted_held, r.n_held)).abs() < 0.01,
        || format!("targeting differs: z = {:.2}", r.targeting_z),
    )?;
    Ok(format!(
        "ratio {:.2} (SE {:.2}); targeted {}/{} shown, {}/{} held",
        r.ratio, r.ratio_se, r.targeted_shown, r.n_shown, r.targeted_held, r.n_held
    ))
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
fn gauss(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for c in 0..n {
        let p = (c..n).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
        a.swap(c, p);
        b.swap(c, p);
        for r in c + 1..n {
            let f = a[r][c] / a[c][c];
            for k in c..n {
                a[r][k] -= f * a[c][k];
            }
            b[r] -= f * b[c];
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
        x[r] = (b[r] - s) / a[r][r];
    }
    x
}

fn numerical_oracles() -> Check {
    let u = |tags: &[u64]| hash_uniform(2024, tags);

    let mut ridge_err: f64 = 0.0;
    for trial in 0..50u64 {
        let d = 2 + (trial % 5) as usize;
        let n = 5 + (trial * 7 % 40) as usize;
        let lambda = [0.0, 0.1, 1.0, 10.0][trial as usize % 4];
        let records: Vec<DiscoveryRecord> = (0..n as u64)
            .map(|i| DiscoveryRecord {
                u: (0..d as u64).map(|k| 4.0 * u(&[1, trial, i, k]) - 2.0).collect(),
                v_hat: (60.0 * u(&[2, trial, i])) as u32,
            })
            .collect();
        let prior: Vec<f64> = (0..d as u64).map(|k| u(&[3, trial, k]) - 0.5).collect();
        let theta = train_stickiness(&records, lambda, &prior).map_err(err)?;
        let mut a = vec![vec![0.0; d]; d];
        let mut b: Vec<f64> = prior.iter().map(|p| lambda * p).collect();
        for (i, row) in a.iter_mut().enumerate() {
            row[i] = lambda;
        }
        for r in &records {
            for i in 0..d {
                b[i] += r.u[i] * r.v_hat as f64;
                for j in 0..d {
                    a[i][j] += r.u[i] * r.u[j];
                }
            }
        }
        let x = gauss(a, b);
        for (t, x) in theta.iter().zip(&x) {
            ridge_err = ridge_err.max((t - x).abs() / x.abs().max(1.0));
        }
    }
    ensure(ridge_err <= 1e-8, || format!("ridge vs normal equations {ridge_err:.2e}"))?;

    let samples: Vec<OutcomeSample> = (0..5_000u64)
        .map(|i| OutcomeSample {
            y: u(&[4, i]) < 0.2,
            r: 0.0,
            g: 0.0,
        })
        .collect();
    let minutes: Vec<f64> = (0..2_000u64).map(|i| -30.0 * (1.0 - u(&[5, i])).ln()).collect();
    let delta = q_ours(&samples, &auxiliary_value(&minutes).map_err(err)?).map_err(err)?.se;
    let boot = bootstrap_ours_se(&samples, &minutes, 2_000, 11).map_err(err)?;
    let rel = (delta - boot).abs() / boot;
    ensure(rel < 0.10, || format!("delta SE {delta:.4} vs bootstrap {boot:.4}"))?;

    let mut violations = 0;
    for seq in 0..10_000u64 {
        let k = 1 + (seq % 4) as usize;
        let alpha: Vec<f64> = (0..k as u64).map(|j| 0.01 + 0.99 * u(&[6, seq, j])).collect();
        let mut z = RelationshipState::zero(k);
        let zero = update_relationship_state(&z, &alpha, false).map_err(err)?;
        if !zero.is_zero() {
            violations += 1;
        }
        for day in 0..50u64 {
            z = update_relationship_state(&z, &alpha, u(&[7, seq, day]) < 0.3).map_err(err)?;
            if z.values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                violations += 1;
            }
        }
    }
    ensure(violations == 0, || format!("{violations} EMA property violations"))?;
    Ok(format!(
        "ridge error {ridge_err:.1e}; delta/bootstrap SE differ by {:.2}%; 10^4 EMA sequences clean",
        100.0 * rel
    ))
}

fn determinism() -> Check {
    let (a, b) = (tempfile::tempdir().map_err(err)?, tempfile::tempdir().map_err(err)?);
    common::run_pipeline(a.path(), 42)?;
    common::run_pipeline(b.path(), 42)?;
    let (sa, sb) = (common::snapshot(a.path()), common::snapshot(b.path()));
    ensure(sa.keys().eq(sb.keys()), || "different file sets".into())?;
    for (name, bytes) in &sa {
        ensure(sb[name] == *bytes, || format!("{name} differs between runs"))?;
    }
    Ok(format!("{} artifacts byte-identical across two runs", sa.len()))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Check); 10] = [
        ("decomposition correctness", decomposition),
        ("policy improvement", policy_improvement),
        ("policy-gradient fidelity", gradient_fidelity),
        ("measurement challenge", measurement_challenge),
        ("estimator agreement", estimator_agreement),
        ("calibration", calibration),
        ("mismatch directionality", mismatch_directionality),
        ("holdback", holdback),
        ("numerical oracles", numerical_oracles),
        ("determinism", determinism),
    ];
    let selected: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let number = i + 1;
        if !selected.is_empty() && !selected.contains(&number) {
            continue;
        }
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {number:>2} {name}: {detail} [{secs:.1}s]"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {number:>2} {name}: {detail} [{secs:.1}s]");
            }
        }
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
