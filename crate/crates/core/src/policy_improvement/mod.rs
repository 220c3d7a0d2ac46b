//! State-aggregated policy improvement.
//!
//! A state aggregation `φ` maps user states to `m` clusters. From logs
//! collected under an exploring incumbent, [`direct_pi`] estimates the
//! aggregated Q-function `Q̄(i, a)` as the mean lifetime reward-to-go after
//! promoting `a` in a state of cluster `i`, and the greedy policy promotes the
//! best item per cluster. Mixing the greedy policy into the incumbent with a
//! small probability `β` improves lifetime value to first order in `β`.
//!
//! The [`toy`] module provides an enumerable MDP on which every one of these
//! quantities can be computed exactly.

pub mod toy;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{day_reward, lifetime_reward, ItemId, RewardSpec, Trajectory, UserState};
use crate::error::{Error, Result};
use crate::rng::{hash_uniform, stream, SimRng};
use crate::simulator::{PolicyView, Simulator, StarAction, StarPolicy};
use crate::stats::{mean_se, quantile, EstimatorResult};

pub use toy::{
    aggregated_q_exact, brute_force_q, enumerate_aggregated_policies, mix_derivative,
    policy_gradient_check, AggregationRule, GradientCheck, ToyItem, ToyMdp, ToyPolicy,
    ToyStickiness,
};

/// One logged day: the state's cluster, the promoted item and the reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoggedStep {
    pub cluster: usize,
    pub action: ItemId,
    pub reward: f64,
}

/// `Q̄(i, a)` per cluster and action. Cells with count 0 are missing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatedQ {
    /// Column labels, ascending.
    pub actions: Vec<ItemId>,
    pub table: Vec<Vec<f64>>,
    /// Standard error per cell (0 for exact tables).
    pub se: Vec<Vec<f64>>,
    /// Supporting observations per cell (1 for populated exact cells).
    pub counts: Vec<Vec<u64>>,
}

impl AggregatedQ {
    pub fn empty(m: usize, actions: Vec<ItemId>) -> Self {
        let k = actions.len();
        Self {
            actions,
            table: vec![vec![0.0; k]; m],
            se: vec![vec![0.0; k]; m],
            counts: vec![vec![0; k]; m],
        }
    }

    pub fn m(&self) -> usize {
        self.table.len()
    }

    pub fn get(&self, cluster: usize, action: usize) -> Option<f64> {
        (self.counts[cluster][action] > 0).then(|| self.table[cluster][action])
    }

    pub fn missing_cells(&self) -> Vec<(usize, ItemId)> {
        let mut out = Vec::new();
        for (i, row) in self.counts.iter().enumerate() {
            for (j, &n) in row.iter().enumerate() {
                if n == 0 {
                    out.push((i, self.actions[j]));
                }
            }
        }
        out
    }

    /// Greedy item per cluster, `None` when the cluster has no data.
    pub fn greedy(&self) -> Vec<Option<ItemId>> {
        (0..self.m())
            .map(|i| {
                let mut best: Option<(ItemId, f64)> = None;
                for (j, &a) in self.actions.iter().enumerate() {
                    if let Some(q) = self.get(i, j) {
                        if best.is_none_or(|(_, b)| q > b) {
                            best = Some((a, q));
                        }
                    }
                }
                best.map(|(a, _)| a)
            })
            .collect()
    }
}

/// Per-cluster argmax of `q`, ties broken toward the lowest item id.
pub fn greedy_from_aggregated(q: &AggregatedQ) -> Result<Vec<ItemId>> {
    let greedy = q.greedy();
    let undecided: Vec<usize> = greedy
        .iter()
        .enumerate()
        .filter(|(_, g)| g.is_none())
        .map(|(i, _)| i)
        .collect();
    if !undecided.is_empty() {
        return Err(Error::MissingData(format!("undecided clusters: {undecided:?}")));
    }
    Ok(greedy.into_iter().flatten().collect())
}

/// Direct state-aggregated policy improvement from logged episodes.
///
/// `Q̂(i, a)` is the mean undiscounted reward-to-go over every logged day in
/// cluster `i` on which `a` was promoted. Standard errors are clustered by
/// episode. Returns the table and the greedy action per cluster.
pub fn direct_pi(
    episodes: &[Vec<LoggedStep>],
    m: usize,
    actions: &[ItemId],
) -> Result<(AggregatedQ, Vec<Option<ItemId>>)> {
    let mut actions = actions.to_vec();
    actions.sort();
    actions.dedup();
    let column: BTreeMap<ItemId, usize> = actions.iter().enumerate().map(|(j, &a)| (a, j)).collect();
    let mut q = AggregatedQ::empty(m, actions);
    let cell = |step: &LoggedStep| -> Result<(usize, usize)> {
        if step.cluster >= m {
            return Err(Error::Data(format!("cluster {} out of range for m = {m}", step.cluster)));
        }
        let j = column
            .get(&step.action)
            .ok_or_else(|| Error::Data(format!("logged action {} is not a candidate", step.action)))?;
        Ok((step.cluster, *j))
    };
    let rewards_to_go = |ep: &[LoggedStep]| -> Vec<f64> {
        let mut out = vec![0.0; ep.len()];
        let mut acc = 0.0;
        for (t, step) in ep.iter().enumerate().rev() {
            acc += step.reward;
            out[t] = acc;
        }
        out
    };
    let mut sums = vec![vec![0.0; q.actions.len()]; m];
    for ep in episodes {
        for (step, g) in ep.iter().zip(rewards_to_go(ep)) {
            let (i, j) = cell(step)?;
            sums[i][j] += g;
            q.counts[i][j] += 1;
        }
    }
    for i in 0..m {
        for j in 0..q.actions.len() {
            if q.counts[i][j] > 0 {
                q.table[i][j] = sums[i][j] / q.counts[i][j] as f64;
            }
        }
    }
    let mut var = vec![vec![0.0; q.actions.len()]; m];
    for ep in episodes {
        let mut dev: BTreeMap<(usize, usize), f64> = BTreeMap::new();
        for (step, g) in ep.iter().zip(rewards_to_go(ep)) {
            let (i, j) = cell(step)?;
            *dev.entry((i, j)).or_insert(0.0) += g - q.table[i][j];
        }
        for ((i, j), d) in dev {
            var[i][j] += d * d;
        }
    }
    for i in 0..m {
        for j in 0..q.actions.len() {
            let n = q.counts[i][j] as f64;
            if n > 1.0 {
                q.se[i][j] = (var[i][j] * n / (n - 1.0)).sqrt() / n;
            }
        }
    }
    let greedy = q.greedy();
    Ok((q, greedy))
}

/// Clusters users by quantiles of one taste coordinate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TasteQuantiles {
    pub dim: usize,
    /// `m - 1` ascending cut points.
    pub edges: Vec<f64>,
}

impl TasteQuantiles {
    pub fn fit(tastes: &[&[f64]], m: usize, dim: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::Config("cluster count must be positive".into()));
        }
        let mut xs: Vec<f64> = tastes
            .iter()
            .map(|t| {
                t.get(dim)
                    .copied()
                    .ok_or_else(|| Error::Data(format!("taste vector has no coordinate {dim}")))
            })
            .collect::<Result<_>>()?;
        if xs.is_empty() {
            return Err(Error::MissingData("no users to cluster".into()));
        }
        xs.sort_by(f64::total_cmp);
        let edges = (1..m).map(|k| quantile(&xs, k as f64 / m as f64)).collect();
        Ok(Self { dim, edges })
    }

    pub fn fit_trajectories(trajectories: &[Trajectory], m: usize, dim: usize) -> Result<Self> {
        let tastes: Vec<&[f64]> = trajectories.iter().map(|t| t.taste.as_slice()).collect();
        Self::fit(&tastes, m, dim)
    }

    pub fn m(&self) -> usize {
        self.edges.len() + 1
    }

    pub fn cluster(&self, taste: &[f64]) -> usize {
        let x = taste.get(self.dim).copied().unwrap_or(0.0);
        self.edges.iter().filter(|&&e| x >= e).count()
    }
}

/// Logged steps from trajectories: the promoted item is slot 0 of each day.
pub fn logged_from_trajectories(
    trajectories: &[Trajectory],
    clusters: &TasteQuantiles,
    reward: RewardSpec,
) -> Vec<Vec<LoggedStep>> {
    trajectories
        .iter()
        .map(|t| {
            let cluster = clusters.cluster(&t.taste);
            t.days
                .iter()
                .filter_map(|d| {
                    d.actions.first().map(|&action| LoggedStep {
                        cluster,
                        action,
                        reward: day_reward(d, reward),
                    })
                })
                .collect()
        })
        .collect()
}

/// Promotes `actions[φ(user)]` every day.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedPolicy {
    pub clusters: TasteQuantiles,
    pub actions: Vec<ItemId>,
}

impl AggregatedPolicy {
    pub fn new(clusters: TasteQuantiles, actions: Vec<ItemId>) -> Result<Self> {
        if actions.len() != clusters.m() {
            return Err(Error::InvalidArgument(format!(
                "{} actions for {} clusters",
                actions.len(),
                clusters.m()
            )));
        }
        Ok(Self { clusters, actions })
    }

    pub fn action_for(&self, user: &UserState) -> ItemId {
        self.actions[self.clusters.cluster(&user.taste)]
    }
}

impl StarPolicy for AggregatedPolicy {
    fn choose(&self, view: &PolicyView<'_>, _rng: &mut SimRng) -> StarAction {
        StarAction::Show(self.action_for(view.user))
    }
}

/// `Mix(π', π0, β)`: each day follows `pi_prime` with probability `beta`,
/// otherwise `pi0`. The coin comes from its own hash stream, so `beta = 0`
/// reproduces `pi0` draw for draw.
#[derive(Debug, Clone)]
pub struct MixPolicy<P> {
    pub pi_prime: AggregatedPolicy,
    pub pi0: P,
    pub beta: f64,
    pub seed: u64,
}

impl<P: StarPolicy> MixPolicy<P> {
    pub fn new(pi_prime: AggregatedPolicy, pi0: P, beta: f64, seed: u64) -> Result<Self> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidArgument(format!("beta must lie in [0, 1], got {beta}")));
        }
        Ok(Self {
            pi_prime,
            pi0,
            beta,
            seed,
        })
    }
}

impl<P: StarPolicy> StarPolicy for MixPolicy<P> {
    fn choose(&self, view: &PolicyView<'_>, rng: &mut SimRng) -> StarAction {
        let u = hash_uniform(self.seed, &[stream::MIX, view.user_id, view.day as u64]);
        if u < self.beta {
            StarAction::Show(self.pi_prime.action_for(view.user))
        } else {
            self.pi0.choose(view, rng)
        }
    }
}

/// Source of independent lifetime rewards under a policy.
pub trait LifetimeSampler: Sync {
    type Policy: ?Sized + Sync;

    fn lifetime_reward(&self, policy: &Self::Policy, user_id: u64) -> f64;
}

/// Fresh simulator users starting at `first_user`.
#[derive(Debug, Clone, Copy)]
pub struct SimulatorLifetimes<'a> {
    pub sim: &'a Simulator,
    pub reward: RewardSpec,
    pub first_user: u64,
}

impl LifetimeSampler for SimulatorLifetimes<'_> {
    type Policy = dyn StarPolicy;

    fn lifetime_reward(&self, policy: &dyn StarPolicy, user_id: u64) -> f64 {
        let user = self.sim.simulate_user(policy, self.first_user + user_id);
        lifetime_reward(&user.trajectory, self.reward)
    }
}

/// `J(π)`: mean lifetime reward over users `0..n_users` with its SE.
pub fn estimate_j<S: LifetimeSampler>(
    sampler: &S,
    policy: &S::Policy,
    n_users: usize,
) -> Result<EstimatorResult> {
    let totals: Vec<f64> = (0..n_users as u64)
        .into_par_iter()
        .map(|u| sampler.lifetime_reward(policy, u))
        .collect();
    mean_se(&totals)
}
