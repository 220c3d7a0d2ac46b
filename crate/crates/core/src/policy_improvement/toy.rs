//! Enumerable toy MDP with exact dynamic-programming oracles.
//!
//! A state is a taste cluster plus one quantized relationship level per item.
//! Each day the incumbent promotes one item; every item is listened to
//! independently with a probability that depends only on the cluster, the
//! item's own level and whether it was promoted. A listen moves the item one
//! level up, no listen one level down, and the day's reward is the number of
//! items listened to. The user survives to the next day with probability
//! `gamma`, so undiscounted lifetime reward equals the discounted objective.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AggregatedQ, LifetimeSampler, LoggedStep};
use crate::domain::ItemId;
use crate::error::{Error, Result};
use crate::estimators::log_log_slope;
use crate::qvalue::{ShortTermModel, StickinessFn};
use crate::rng::{rng_for, stream, SimRng};
use crate::stats::{mean_se, EstimatorResult};

/// Upper bound on the enumerated state count.
pub const MAX_TOY_STATES: usize = 10_000;
/// Largest system solved by dense LU; bigger ones use Gauss-Seidel.
const DENSE_LIMIT: usize = 2_000;
const MAX_LEVELS: usize = 5;
const MAX_ITEMS: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyItem {
    pub id: ItemId,
    /// `listen[cluster][level] = [p without promotion, p with promotion]`.
    pub listen: Vec<Vec<[f64; 2]>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyMdp {
    pub gamma: f64,
    pub levels: usize,
    /// Distribution of a new user's taste cluster.
    pub cluster_weights: Vec<f64>,
    pub items: Vec<ToyItem>,
    /// Incumbent promotion distribution over `items` per cluster.
    pub pi0: Vec<Vec<f64>>,
    pub seed: u64,
}

/// Stochastic promotion policy: one distribution over items per state.
#[derive(Debug, Clone, PartialEq)]
pub struct ToyPolicy {
    k: usize,
    probs: Vec<f64>,
}

impl ToyPolicy {
    pub fn prob(&self, state: usize, item_index: usize) -> f64 {
        self.probs[state * self.k + item_index]
    }

    fn row(&self, state: usize) -> &[f64] {
        &self.probs[state * self.k..(state + 1) * self.k]
    }

    /// `beta·pi_prime + (1 - beta)·pi0`, state by state.
    pub fn mix(pi_prime: &ToyPolicy, pi0: &ToyPolicy, beta: f64) -> Result<ToyPolicy> {
        if !(0.0..=1.0).contains(&beta) {
            return Err(Error::InvalidArgument(format!("beta must lie in [0, 1], got {beta}")));
        }
        if pi_prime.k != pi0.k || pi_prime.probs.len() != pi0.probs.len() {
            return Err(Error::InvalidArgument("policies cover different MDPs".into()));
        }
        let probs = pi_prime
            .probs
            .iter()
            .zip(&pi0.probs)
            .map(|(p, q)| beta * p + (1.0 - beta) * q)
            .collect();
        Ok(ToyPolicy { k: pi0.k, probs })
    }
}

/// Assignment of every enumerated state to one of `m` clusters.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AggregationRule {
    pub m: usize,
    pub assignment: Vec<usize>,
}

impl AggregationRule {
    pub fn new(m: usize, assignment: Vec<usize>) -> Result<Self> {
        if let Some(&bad) = assignment.iter().find(|&&c| c >= m) {
            return Err(Error::InvalidArgument(format!("cluster {bad} out of range for m = {m}")));
        }
        Ok(Self { m, assignment })
    }

    pub fn identity(n_states: usize) -> Self {
        Self {
            m: n_states,
            assignment: (0..n_states).collect(),
        }
    }

    pub fn single(n_states: usize) -> Self {
        Self {
            m: 1,
            assignment: vec![0; n_states],
        }
    }

    pub fn cluster(&self, state: usize) -> usize {
        self.assignment[state]
    }
}

/// Exact Δ(β) against its first-order prediction.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientCheck {
    pub betas: Vec<f64>,
    pub delta: Vec<f64>,
    pub prediction: Vec<f64>,
    pub error: Vec<f64>,
    /// Log-log slope of `error` against `beta` over the positive betas.
    pub slope: Option<f64>,
}

fn check_prob(p: f64, what: &str) -> Result<()> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must lie in [0, 1], got {p}")))
    }
}

fn check_distribution(ps: &[f64], what: &str) -> Result<()> {
    for &p in ps {
        check_prob(p, what)?;
    }
    let s: f64 = ps.iter().sum();
    if (s - 1.0).abs() > 1e-9 {
        return Err(Error::Config(format!("{what} sums to {s}, not 1")));
    }
    Ok(())
}

impl ToyMdp {
    pub fn new(
        gamma: f64,
        levels: usize,
        cluster_weights: Vec<f64>,
        items: Vec<ToyItem>,
        pi0: Vec<Vec<f64>>,
        seed: u64,
    ) -> Result<Self> {
        let mdp = Self {
            gamma,
            levels,
            cluster_weights,
            items,
            pi0,
            seed,
        };
        mdp.validate()?;
        Ok(mdp)
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::Config(format!("gamma must lie in [0, 1), got {}", self.gamma)));
        }
        if !(2..=MAX_LEVELS).contains(&self.levels) {
            return Err(Error::Config(format!(
                "levels must lie in 2..={MAX_LEVELS}, got {}",
                self.levels
            )));
        }
        if self.items.is_empty() || self.items.len() > MAX_ITEMS {
            return Err(Error::Config(format!(
                "toy MDP needs 1..={MAX_ITEMS} items, got {}",
                self.items.len()
            )));
        }
        let c = self.cluster_weights.len();
        if c == 0 {
            return Err(Error::Config("toy MDP needs at least one cluster".into()));
        }
        check_distribution(&self.cluster_weights, "cluster weights")?;
        if self.n_states() > MAX_TOY_STATES {
            return Err(Error::Config(format!(
                "{} states exceed the limit of {MAX_TOY_STATES}",
                self.n_states()
            )));
        }
        let mut ids: Vec<ItemId> = self.items.iter().map(|it| it.id).collect();
        ids.sort();
        ids.dedup();
        if ids.len() != self.items.len() {
            return Err(Error::Config("duplicate item ids".into()));
        }
        for it in &self.items {
            if it.listen.len() != c || it.listen.iter().any(|row| row.len() != self.levels) {
                return Err(Error::Config(format!(
                    "item {}: listen table must be {c} x {}",
                    it.id, self.levels
                )));
            }
            for &[p_norec, p_rec] in it.listen.iter().flatten() {
                check_prob(p_norec, "listen probability")?;
                check_prob(p_rec, "listen probability")?;
                if p_rec < p_norec {
                    return Err(Error::Config(format!(
                        "item {}: promotion lowers the listen probability",
                        it.id
                    )));
                }
            }
        }
        if self.pi0.len() != c || self.pi0.iter().any(|row| row.len() != self.items.len()) {
            return Err(Error::Config(format!(
                "incumbent table must be {c} x {}",
                self.items.len()
            )));
        }
        for row in &self.pi0 {
            check_distribution(row, "incumbent distribution")?;
        }
        Ok(())
    }

    /// Two clusters, a clicky item without habit formation and a less
    /// clicky item whose organic return rate grows with its level.
    pub fn mismatch() -> Self {
        let clicky = ToyItem {
            id: ItemId(0),
            listen: vec![
                vec![[0.03, 0.60], [0.04, 0.60], [0.05, 0.60], [0.05, 0.60], [0.05, 0.60]],
                vec![[0.02, 0.45], [0.03, 0.45], [0.03, 0.45], [0.04, 0.45], [0.04, 0.45]],
            ],
        };
        let sticky = ToyItem {
            id: ItemId(1),
            listen: vec![
                vec![[0.02, 0.30], [0.25, 0.50], [0.55, 0.70], [0.75, 0.85], [0.85, 0.92]],
                vec![[0.01, 0.25], [0.25, 0.45], [0.50, 0.65], [0.70, 0.80], [0.80, 0.88]],
            ],
        };
        Self {
            gamma: 0.9,
            levels: 5,
            cluster_weights: vec![0.6, 0.4],
            items: vec![clicky, sticky],
            pi0: vec![vec![0.8, 0.2], vec![0.6, 0.4]],
            seed: 7,
        }
    }

    pub fn n_clusters(&self) -> usize {
        self.cluster_weights.len()
    }

    pub fn n_items(&self) -> usize {
        self.items.len()
    }

    fn per_cluster(&self) -> usize {
        self.levels.pow(self.items.len() as u32)
    }

    pub fn n_states(&self) -> usize {
        self.n_clusters() * self.per_cluster()
    }

    pub fn item_ids(&self) -> Vec<ItemId> {
        self.items.iter().map(|it| it.id).collect()
    }

    pub fn item_index(&self, item: ItemId) -> Result<usize> {
        self.items
            .iter()
            .position(|it| it.id == item)
            .ok_or_else(|| Error::InvalidArgument(format!("item {item} is not in the toy MDP")))
    }

    pub fn encode(&self, cluster: usize, levels: &[usize]) -> usize {
        let mut s = 0;
        for &z in levels.iter().rev() {
            s = s * self.levels + z;
        }
        cluster * self.per_cluster() + s
    }

    pub fn cluster_of(&self, state: usize) -> usize {
        state / self.per_cluster()
    }

    pub fn level(&self, state: usize, item_index: usize) -> usize {
        (state % self.per_cluster()) / self.levels.pow(item_index as u32) % self.levels
    }

    fn with_level(&self, state: usize, item_index: usize, z: usize) -> usize {
        let stride = self.levels.pow(item_index as u32);
        state - self.level(state, item_index) * stride + z * stride
    }

    fn up(&self, z: usize) -> usize {
        (z + 1).min(self.levels - 1)
    }

    fn down(z: usize) -> usize {
        z.saturating_sub(1)
    }

    /// Listen probability of item `j` in `state`.
    pub fn listen_p(&self, state: usize, j: usize, promoted: bool) -> f64 {
        self.items[j].listen[self.cluster_of(state)][self.level(state, j)][promoted as usize]
    }

    /// Expected reward of promoting item index `a` in `state`.
    pub fn expected_reward(&self, state: usize, a: usize) -> f64 {
        (0..self.n_items()).map(|j| self.listen_p(state, j, j == a)).sum()
    }

    /// Next-state distribution after promoting item index `a`.
    pub fn transitions(&self, state: usize, a: usize) -> Vec<(usize, f64)> {
        let k = self.n_items();
        let mut out = Vec::with_capacity(1 << k);
        for mask in 0..(1usize << k) {
            let mut p = 1.0;
            let mut next = state;
            for j in 0..k {
                let pj = self.listen_p(state, j, j == a);
                let z = self.level(state, j);
                if mask >> j & 1 == 1 {
                    p *= pj;
                    next = self.with_level(next, j, self.up(z));
                } else {
                    p *= 1.0 - pj;
                    next = self.with_level(next, j, Self::down(z));
                }
            }
            if p > 0.0 {
                out.push((next, p));
            }
        }
        out
    }

    /// Start-state distribution: cluster weight at all-zero levels.
    pub fn initial_distribution(&self) -> Vec<f64> {
        let mut rho = vec![0.0; self.n_states()];
        let zeros = vec![0; self.n_items()];
        for (c, &w) in self.cluster_weights.iter().enumerate() {
            rho[self.encode(c, &zeros)] += w;
        }
        rho
    }

    pub fn incumbent(&self) -> ToyPolicy {
        let k = self.n_items();
        let mut probs = Vec::with_capacity(self.n_states() * k);
        for s in 0..self.n_states() {
            probs.extend_from_slice(&self.pi0[self.cluster_of(s)]);
        }
        ToyPolicy { k, probs }
    }

    /// Deterministic policy promoting `actions[rule.cluster(s)]` in state `s`.
    pub fn aggregated_policy(&self, rule: &AggregationRule, actions: &[ItemId]) -> Result<ToyPolicy> {
        self.check_rule(rule)?;
        if actions.len() != rule.m {
            return Err(Error::InvalidArgument(format!(
                "{} actions for {} clusters",
                actions.len(),
                rule.m
            )));
        }
        let idx = actions
            .iter()
            .map(|&a| self.item_index(a))
            .collect::<Result<Vec<_>>>()?;
        let k = self.n_items();
        let mut probs = vec![0.0; self.n_states() * k];
        for s in 0..self.n_states() {
            probs[s * k + idx[rule.cluster(s)]] = 1.0;
        }
        Ok(ToyPolicy { k, probs })
    }

    fn check_rule(&self, rule: &AggregationRule) -> Result<()> {
        if rule.assignment.len() != self.n_states() {
            return Err(Error::InvalidArgument(format!(
                "aggregation covers {} states, MDP has {}",
                rule.assignment.len(),
                self.n_states()
            )));
        }
        Ok(())
    }

    fn check_policy(&self, policy: &ToyPolicy) -> Result<()> {
        if policy.k != self.n_items() || policy.probs.len() != self.n_states() * self.n_items() {
            return Err(Error::InvalidArgument("policy does not match the MDP".into()));
        }
        Ok(())
    }

    fn policy_rows(&self, policy: &ToyPolicy) -> (Vec<Vec<(usize, f64)>>, Vec<f64>) {
        let n = self.n_states();
        let mut rows = Vec::with_capacity(n);
        let mut rewards = Vec::with_capacity(n);
        for s in 0..n {
            let mut row: Vec<(usize, f64)> = Vec::new();
            let mut r = 0.0;
            for (a, &pa) in policy.row(s).iter().enumerate() {
                if pa == 0.0 {
                    continue;
                }
                r += pa * self.expected_reward(s, a);
                for (t, p) in self.transitions(s, a) {
                    match row.iter_mut().find(|e| e.0 == t) {
                        Some(e) => e.1 += pa * p,
                        None => row.push((t, pa * p)),
                    }
                }
            }
            rows.push(row);
            rewards.push(r);
        }
        (rows, rewards)
    }

    /// `V_π(s)` for every state under discount `gamma`.
    pub fn values_with_gamma(&self, policy: &ToyPolicy, gamma: f64) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        let (rows, rewards) = self.policy_rows(policy);
        solve_discounted(&rows, &rewards, gamma)
    }

    pub fn values(&self, policy: &ToyPolicy) -> Result<Vec<f64>> {
        self.values_with_gamma(policy, self.gamma)
    }

    /// `Q_π(s, a)` for every state and item index, with `π` after today.
    pub fn q_table(&self, policy: &ToyPolicy) -> Result<Vec<Vec<f64>>> {
        let v = self.values(policy)?;
        Ok(self.q_from_values(&v, self.gamma))
    }

    fn q_from_values(&self, v: &[f64], gamma: f64) -> Vec<Vec<f64>> {
        (0..self.n_states())
            .map(|s| {
                (0..self.n_items())
                    .map(|a| {
                        let future: f64 = self.transitions(s, a).iter().map(|&(t, p)| p * v[t]).sum();
                        self.expected_reward(s, a) + gamma * future
                    })
                    .collect()
            })
            .collect()
    }

    /// Expected lifetime reward of a new user, `E[V_π(S_0)]`.
    pub fn j_exact(&self, policy: &ToyPolicy) -> Result<f64> {
        let v = self.values(policy)?;
        Ok(self.initial_distribution().iter().zip(&v).map(|(r, v)| r * v).sum())
    }

    /// Expected number of lifetime days spent in each state,
    /// `Σ_t γ^t P(S_t = s)`.
    pub fn visitation(&self, policy: &ToyPolicy) -> Result<Vec<f64>> {
        self.check_policy(policy)?;
        let (rows, _) = self.policy_rows(policy);
        let mut transposed: Vec<Vec<(usize, f64)>> = vec![Vec::new(); rows.len()];
        for (s, row) in rows.iter().enumerate() {
            for &(t, p) in row {
                transposed[t].push((s, p));
            }
        }
        solve_discounted(&transposed, &self.initial_distribution(), self.gamma)
    }

    /// Visitation scaled by `1 - gamma`: a probability distribution.
    pub fn occupancy(&self, policy: &ToyPolicy) -> Result<Vec<f64>> {
        let eta: Vec<f64> = self
            .visitation(policy)?
            .into_iter()
            .map(|w| (1.0 - self.gamma) * w)
            .collect();
        let total: f64 = eta.iter().sum();
        if (total - 1.0).abs() > 1e-8 || eta.iter().any(|&x| x < -1e-12) {
            return Err(Error::Degenerate(format!("occupancy measure sums to {total}")));
        }
        Ok(eta)
    }

    /// Per-item value of entering each level under the incumbent:
    /// `values[cluster][item][level]`.
    pub fn item_values(&self) -> Result<Vec<Vec<Vec<f64>>>> {
        let mut out = Vec::with_capacity(self.n_clusters());
        for c in 0..self.n_clusters() {
            let mut per_item = Vec::with_capacity(self.n_items());
            for j in 0..self.n_items() {
                let mut rows = Vec::with_capacity(self.levels);
                let mut rewards = Vec::with_capacity(self.levels);
                for z in 0..self.levels {
                    let [p_norec, p_rec] = self.items[j].listen[c][z];
                    let pj = self.pi0[c][j];
                    let p = pj * p_rec + (1.0 - pj) * p_norec;
                    rewards.push(p);
                    let mut row = vec![(self.up(z), p)];
                    let dz = Self::down(z);
                    match row.iter_mut().find(|e| e.0 == dz) {
                        Some(e) => e.1 += 1.0 - p,
                        None => row.push((dz, 1.0 - p)),
                    }
                    rows.push(row);
                }
                per_item.push(solve_discounted(&rows, &rewards, self.gamma)?);
            }
            out.push(per_item);
        }
        Ok(out)
    }

    fn sample_action(rng: &mut SimRng, row: &[f64]) -> usize {
        let u: f64 = rng.random();
        let mut acc = 0.0;
        for (a, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return a;
            }
        }
        row.iter().rposition(|&p| p > 0.0).unwrap_or(0)
    }

    fn step(&self, rng: &mut SimRng, state: usize, a: usize) -> (usize, f64) {
        let mut next = state;
        let mut reward = 0.0;
        for j in 0..self.n_items() {
            let z = self.level(state, j);
            if rng.random::<f64>() < self.listen_p(state, j, j == a) {
                reward += 1.0;
                next = self.with_level(next, j, self.up(z));
            } else {
                next = self.with_level(next, j, Self::down(z));
            }
        }
        (next, reward)
    }

    fn start_state(&self, rng: &mut SimRng) -> usize {
        let c = Self::sample_action(rng, &self.cluster_weights);
        self.encode(c, &vec![0; self.n_items()])
    }

    /// Simulated lifetime as `(state, item index, reward)` per day. The
    /// first day's action is forced when `first` is set.
    pub fn simulate_episode(
        &self,
        policy: &ToyPolicy,
        user_id: u64,
        start: Option<usize>,
        first: Option<usize>,
    ) -> Vec<(usize, usize, f64)> {
        let mut rng = rng_for(self.seed, &[stream::TOY, user_id]);
        let mut state = match start {
            Some(s) => s,
            None => self.start_state(&mut rng),
        };
        let mut out = Vec::new();
        loop {
            let a = match (out.is_empty(), first) {
                (true, Some(a)) => a,
                _ => Self::sample_action(&mut rng, policy.row(state)),
            };
            let (next, r) = self.step(&mut rng, state, a);
            out.push((state, a, r));
            state = next;
            if rng.random::<f64>() >= self.gamma {
                return out;
            }
        }
    }

    /// Logged episodes under `policy` until at least `min_days` days are
    /// collected, with states mapped through `rule`.
    pub fn logged_episodes(
        &self,
        policy: &ToyPolicy,
        rule: &AggregationRule,
        min_days: usize,
    ) -> Result<Vec<Vec<LoggedStep>>> {
        self.check_policy(policy)?;
        self.check_rule(rule)?;
        let mut out = Vec::new();
        let mut days = 0;
        let mut user = 0u64;
        while days < min_days {
            let ep: Vec<LoggedStep> = self
                .simulate_episode(policy, user, None, None)
                .into_iter()
                .map(|(s, a, r)| LoggedStep {
                    cluster: rule.cluster(s),
                    action: self.items[a].id,
                    reward: r,
                })
                .collect();
            days += ep.len();
            out.push(ep);
            user += 1;
        }
        Ok(out)
    }

    /// Monte-Carlo estimate of `Q_{π0}(state, item)` over `n` lifetimes.
    pub fn mc_q(&self, state: usize, item: ItemId, n: usize, first_user: u64) -> Result<EstimatorResult> {
        if state >= self.n_states() {
            return Err(Error::InvalidArgument(format!("state {state} out of range")));
        }
        let a = self.item_index(item)?;
        let pi0 = self.incumbent();
        let totals: Vec<f64> = (0..n as u64)
            .into_par_iter()
            .map(|u| {
                self.simulate_episode(&pi0, first_user + u, Some(state), Some(a))
                    .iter()
                    .map(|x| x.2)
                    .sum()
            })
            .collect();
        mean_se(&totals)
    }
}

/// Solves `x = b + gamma·M x` for a row-sparse non-negative `M` whose rows
/// sum to at most 1.
fn solve_discounted(rows: &[Vec<(usize, f64)>], b: &[f64], gamma: f64) -> Result<Vec<f64>> {
    let n = rows.len();
    if n <= DENSE_LIMIT {
        let mut a = DMatrix::<f64>::identity(n, n);
        for (i, row) in rows.iter().enumerate() {
            for &(j, p) in row {
                a[(i, j)] -= gamma * p;
            }
        }
        let x = a
            .lu()
            .solve(&DVector::from_column_slice(b))
            .ok_or_else(|| Error::Singular("discounted evaluation system".into()))?;
        return Ok(x.iter().copied().collect());
    }
    let mut x = b.to_vec();
    for _ in 0..1_000_000 {
        let mut change: f64 = 0.0;
        let mut scale: f64 = 0.0;
        for i in 0..n {
            let new = b[i] + gamma * rows[i].iter().map(|&(j, p)| p * x[j]).sum::<f64>();
            change = change.max((new - x[i]).abs());
            scale = scale.max(new.abs());
            x[i] = new;
        }
        if change <= 1e-14 * (1.0 + scale) {
            return Ok(x);
        }
    }
    Err(Error::Singular("Gauss-Seidel did not converge".into()))
}

/// Exact `Q_{π0}(state, item)` under discount `gamma`.
pub fn brute_force_q(mdp: &ToyMdp, state: usize, item: ItemId, gamma: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&gamma) {
        return Err(Error::InvalidArgument(format!("gamma must lie in [0, 1), got {gamma}")));
    }
    if state >= mdp.n_states() {
        return Err(Error::InvalidArgument(format!("state {state} out of range")));
    }
    let a = mdp.item_index(item)?;
    let v = mdp.values_with_gamma(&mdp.incumbent(), gamma)?;
    let future: f64 = mdp.transitions(state, a).iter().map(|&(t, p)| p * v[t]).sum();
    Ok(mdp.expected_reward(state, a) + gamma * future)
}

/// Occupancy-weighted mean of `Q_{π0}(s, ·)` within each cluster of `rule`.
pub fn aggregated_q_exact(mdp: &ToyMdp, rule: &AggregationRule) -> Result<AggregatedQ> {
    mdp.check_rule(rule)?;
    let pi0 = mdp.incumbent();
    let eta = mdp.occupancy(&pi0)?;
    let q = mdp.q_table(&pi0)?;
    let k = mdp.n_items();
    let mut weight = vec![0.0; rule.m];
    let mut table = vec![vec![0.0; k]; rule.m];
    for s in 0..mdp.n_states() {
        let i = rule.cluster(s);
        weight[i] += eta[s];
        for a in 0..k {
            table[i][a] += eta[s] * q[s][a];
        }
    }
    let empty: Vec<usize> = (0..rule.m).filter(|&i| weight[i] <= 1e-300).collect();
    if !empty.is_empty() {
        return Err(Error::Degenerate(format!("clusters never visited: {empty:?}")));
    }
    for (row, w) in table.iter_mut().zip(&weight) {
        row.iter_mut().for_each(|x| *x /= w);
    }
    Ok(AggregatedQ {
        actions: mdp.item_ids(),
        table,
        se: vec![vec![0.0; k]; rule.m],
        counts: vec![vec![1; k]; rule.m],
    })
}

/// Exact `dJ(Mix(π', π0, β))/dβ` at `β = 0`:
/// `Σ_s w(s) Σ_a (π'(a|s) - π0(a|s))·Q_{π0}(s, a)` with `w` the visitation.
pub fn mix_derivative(mdp: &ToyMdp, pi_prime: &ToyPolicy) -> Result<f64> {
    mdp.check_policy(pi_prime)?;
    let pi0 = mdp.incumbent();
    let w = mdp.visitation(&pi0)?;
    let q = mdp.q_table(&pi0)?;
    Ok((0..mdp.n_states())
        .map(|s| {
            w[s] * (0..mdp.n_items())
                .map(|a| (pi_prime.prob(s, a) - pi0.prob(s, a)) * q[s][a])
                .sum::<f64>()
        })
        .sum())
}

/// Every deterministic state-aggregated policy over `m` clusters.
pub fn enumerate_aggregated_policies(m: usize, actions: &[ItemId]) -> Vec<Vec<ItemId>> {
    let mut out = vec![Vec::new()];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                actions.iter().map(move |&a| {
                    let mut p = prefix.clone();
                    p.push(a);
                    p
                })
            })
            .collect();
    }
    out
}

/// Compares `J(Mix(π', π0, β)) - J(π0)` with the first-order prediction
/// `β·Σ_s w(s) Σ_a (π'(a|s) - π0(a|s))·Q̄(φ(s), a)`.
pub fn policy_gradient_check(
    mdp: &ToyMdp,
    pi_prime: &[ItemId],
    rule: &AggregationRule,
    betas: &[f64],
) -> Result<GradientCheck> {
    let prime = mdp.aggregated_policy(rule, pi_prime)?;
    let pi0 = mdp.incumbent();
    let qbar = aggregated_q_exact(mdp, rule)?;
    let w = mdp.visitation(&pi0)?;
    let slope_per_beta: f64 = (0..mdp.n_states())
        .map(|s| {
            let i = rule.cluster(s);
            w[s] * (0..mdp.n_items())
                .map(|a| (prime.prob(s, a) - pi0.prob(s, a)) * qbar.table[i][a])
                .sum::<f64>()
        })
        .sum();
    let j0 = mdp.j_exact(&pi0)?;
    let mut delta = Vec::with_capacity(betas.len());
    for &beta in betas {
        delta.push(mdp.j_exact(&ToyPolicy::mix(&prime, &pi0, beta)?)? - j0);
    }
    let prediction: Vec<f64> = betas.iter().map(|b| b * slope_per_beta).collect();
    let error: Vec<f64> = delta.iter().zip(&prediction).map(|(d, p)| (d - p).abs()).collect();
    let points: Vec<(f64, f64)> = betas
        .iter()
        .zip(&error)
        .filter(|(b, e)| **b > 0.0 && **e > 0.0)
        .map(|(&b, &e)| (b, e))
        .collect();
    let slope = if points.len() >= 2 {
        Some(log_log_slope(&points)?)
    } else {
        None
    };
    Ok(GradientCheck {
        betas: betas.to_vec(),
        delta,
        prediction,
        error,
        slope,
    })
}

impl ShortTermModel<usize> for ToyMdp {
    fn listen_probability(&self, state: &usize, item: ItemId, recommended: bool) -> f64 {
        let j = self.item_index(item).expect("item belongs to the toy MDP");
        self.listen_p(*state, j, recommended)
    }
}

/// Exact per-item stickiness of the toy MDP under its incumbent.
#[derive(Debug, Clone)]
pub struct ToyStickiness<'a> {
    mdp: &'a ToyMdp,
    values: Vec<Vec<Vec<f64>>>,
}

impl<'a> ToyStickiness<'a> {
    pub fn new(mdp: &'a ToyMdp) -> Result<Self> {
        Ok(Self {
            mdp,
            values: mdp.item_values()?,
        })
    }
}

impl StickinessFn<usize> for ToyStickiness<'_> {
    type State = usize;

    fn successors(&self, state: &usize, item: ItemId) -> (usize, usize) {
        let j = self.mdp.item_index(item).expect("item belongs to the toy MDP");
        let z = self.mdp.level(*state, j);
        (self.mdp.up(z), ToyMdp::down(z))
    }

    fn value(&self, state: &usize, item: ItemId, level: &usize) -> f64 {
        let j = self.mdp.item_index(item).expect("item belongs to the toy MDP");
        self.values[self.mdp.cluster_of(*state)][j][*level]
    }
}

impl LifetimeSampler for ToyMdp {
    type Policy = ToyPolicy;

    fn lifetime_reward(&self, policy: &ToyPolicy, user_id: u64) -> f64 {
        self.simulate_episode(policy, user_id, None, None)
            .iter()
            .map(|x| x.2)
            .sum()
    }
}
