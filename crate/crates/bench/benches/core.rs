use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use stickrec_core::models::{train_stickiness, DiscoveryRecord};
use stickrec_core::policy_improvement::{aggregated_q_exact, brute_force_q, AggregationRule, ToyMdp};
use stickrec_core::rng::hash_uniform;
use stickrec_core::simulator::{logging_policy, StarAction};
use stickrec_core::{ItemId, SimConfig, Simulator};

fn simulator(c: &mut Criterion) {
    let sim = Simulator::new(SimConfig::default()).unwrap();
    let (user, latent) = sim.spawn_user(0);
    let actions = sim.layout(&user, StarAction::Show(ItemId(0)));
    c.bench_function("step_day", |b| {
        b.iter_batched(
            || user.clone(),
            |mut u| black_box(sim.step_day(&mut u, &latent, &actions, 0, 0)),
            BatchSize::SmallInput,
        )
    });
    let policy = logging_policy(&sim.config).unwrap();
    let mut id = 0;
    c.bench_function("simulate_user", |b| {
        b.iter(|| {
            id += 1;
            black_box(sim.simulate_user(&policy, id))
        })
    });
}

fn ridge(c: &mut Criterion) {
    let d = 4;
    let records: Vec<DiscoveryRecord> = (0..10_000u64)
        .map(|i| DiscoveryRecord {
            u: (0..d as u64).map(|k| hash_uniform(1, &[i, k]) - 0.5).collect(),
            v_hat: (60.0 * hash_uniform(2, &[i])) as u32,
        })
        .collect();
    let prior = vec![0.0; d];
    c.bench_function("ridge_10k_records", |b| {
        b.iter(|| train_stickiness(black_box(&records), 1.0, &prior).unwrap())
    });
}

fn exact_dp(c: &mut Criterion) {
    let mdp = ToyMdp::mismatch();
    let state = mdp.encode(1, &[2, 1]);
    c.bench_function("brute_force_q", |b| {
        b.iter(|| brute_force_q(&mdp, black_box(state), ItemId(1), mdp.gamma).unwrap())
    });
    let rule = AggregationRule::identity(mdp.n_states());
    c.bench_function("aggregated_q_exact", |b| {
        b.iter(|| aggregated_q_exact(&mdp, black_box(&rule)).unwrap())
    });
}

criterion_group!(benches, simulator, ridge, exact_dp);
criterion_main!(benches);
