//! Generative environment: synthetic users, an item catalogue with a
//! click/stick mismatch, and a day-by-day listening model.
//!
//! Listening model. On each day the user sees `L` slots: the distinguished
//! slot 0 and a background of familiar items (most recently engaged first)
//! followed by popular non-pool filler. For every distinct exposed item `a`,
//!
//! ```text
//! p_org = logistic(base_a + habit_a · Z_a[0] + ξ)          organic listen
//! p_tot = logistic(base_a + habit_a · Z_a[0] + boost + ξ)  when promoted
//! ```
//!
//! where `ξ` is a per-user daily shock,
//!
//! ```text
//! base_a  = base_offset + c_a + align
//! habit_a = max(0, habit_base + habit_scale · (s_a + habit_taste · align) - c_a)
//! ```
//!
//! with click appeal `c_a`, stick appeal `s_a` and user-item taste alignment
//! `align`. Click appeal is novelty: it governs the first listen and fades as
//! the habit builds, so a fully formed habit depends on stick appeal alone.
//!
//! A promoted item listens through two independent channels: the organic one
//! with probability `p_org` and the promotion with probability
//! `(p_tot - p_org) / (1 - p_org)`, so the total is `p_tot`. Engagement from
//! the promotion channel is recorded at slot 0.
//!
//! Listen probabilities depend only on the user's state with that item and on
//! whether the item is promoted, and the lifetime is drawn independently of
//! anything the user does. All randomness is counter-based (see [`crate::rng`]).

pub mod catalogue;
pub mod config;
pub mod policy;

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, Exp, StandardNormal};
use rayon::prelude::*;

pub use catalogue::{catalogue_from_config, spawn_catalogue, Catalogue, ItemGroundTruth, ItemInfo};
pub use config::SimConfig;
pub use policy::{
    eligible_pool, logging_policy, IdlePolicy, LoggingPolicy, PolicyView, StarAction, StarPolicy,
};

use crate::domain::{Context, DayOutcome, ItemId, RelationshipState, Trajectory, UserState};
use crate::error::Result;
use crate::rng::{rng_for, stream, SimRng};
use crate::stats::{expected_logistic, logistic};

/// Hidden per-user parameters; only the simulator and oracles read these.
#[derive(Debug, Clone, PartialEq)]
pub struct LatentUserType {
    /// Organic listen logit per item.
    pub base_affinity: Vec<f64>,
    /// Logit gained per unit of fast engagement memory, per item.
    pub habit_gain: Vec<f64>,
    /// Standard deviation of the daily shock.
    pub noise_scale: f64,
}

/// Slot layout for one day.
#[derive(Debug, Clone, PartialEq)]
pub struct DayActions {
    pub slots: Vec<ItemId>,
    /// Whether slot 0 is rendered as a promotion.
    pub star_rendered: bool,
}

/// A finished simulated user.
#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedUser {
    pub trajectory: Trajectory,
    pub final_state: UserState,
    /// Policy decision for each day.
    pub stars: Vec<StarAction>,
}

#[derive(Debug, Clone)]
pub struct Simulator {
    pub config: SimConfig,
    pub catalogue: Catalogue,
}

impl Simulator {
    /// Validates the configuration and draws its catalogue.
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let catalogue = catalogue_from_config(&config);
        Ok(Self { config, catalogue })
    }

    /// Reuses an existing catalogue under a different configuration.
    pub fn with_catalogue(config: SimConfig, catalogue: Catalogue) -> Result<Self> {
        config.validate()?;
        if catalogue.len() != config.n_items || catalogue.pool_size != config.pool_size {
            return Err(crate::Error::Config(
                "catalogue does not match n_items / pool_size".into(),
            ));
        }
        Ok(Self { config, catalogue })
    }

    /// Draws user `user_id`: observed state and hidden type.
    pub fn spawn_user(&self, user_id: u64) -> (UserState, LatentUserType) {
        let (user, latent, _) = self.spawn_user_with_start(user_id);
        (user, latent)
    }

    /// Calendar day (in `0..7`) on which user `user_id` activates.
    pub fn activation_day(&self, user_id: u64) -> u32 {
        self.spawn_user_with_start(user_id).2
    }

    fn spawn_user_with_start(&self, user_id: u64) -> (UserState, LatentUserType, u32) {
        let cfg = &self.config;
        let mut rng = rng_for(cfg.seed, &[stream::USER, user_id]);
        let latent_taste: Vec<f64> = (1..cfg.d)
            .map(|_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                cfg.taste_scale * e
            })
            .collect();
        let mut taste = Vec::with_capacity(cfg.d);
        taste.push(1.0);
        for &t in &latent_taste {
            let e: f64 = StandardNormal.sample(&mut rng);
            taste.push(t + cfg.taste_noise * e);
        }
        let start = rng.random_range(0..7u32);
        let mut base_affinity = Vec::with_capacity(cfg.n_items);
        let mut habit_gain = Vec::with_capacity(cfg.n_items);
        for item in &self.catalogue.items {
            let align: f64 = latent_taste
                .iter()
                .zip(&item.latent_embedding)
                .map(|(a, b)| a * b)
                .sum();
            base_affinity.push(cfg.base_offset + item.click_appeal + align);
            let h = cfg.habit_base + cfg.habit_scale * (item.stick_appeal + cfg.habit_taste * align)
                - item.click_appeal;
            habit_gain.push(h.max(0.0));
        }
        let user = UserState::new(
            taste,
            Context {
                day_of_week: (start % 7) as u8,
                days_since_active: 0.0,
            },
        );
        let latent = LatentUserType {
            base_affinity,
            habit_gain,
            noise_scale: cfg.noise_scale,
        };
        (user, latent, start)
    }

    /// Lifetime in days: geometric with continuation probability `gamma`,
    /// capped at `max_days`. Independent of behaviour.
    pub fn lifetime(&self, user_id: u64) -> u32 {
        let mut rng = rng_for(self.config.seed, &[stream::LIFETIME, user_id]);
        let u: f64 = rng.random();
        let extra = ((1.0 - u).ln() / self.config.gamma.ln()).floor();
        let cap = self.config.max_days as f64;
        (1.0 + extra).min(cap) as u32
    }

    fn logit(&self, user: &UserState, latent: &LatentUserType, item: ItemId) -> f64 {
        let z = user
            .relationships
            .get(&item)
            .map(RelationshipState::fast)
            .unwrap_or(0.0);
        latent.base_affinity[item.index()] + latent.habit_gain[item.index()] * z
    }

    /// Listen probability for `item` at a zero daily shock.
    pub fn listen_probability(
        &self,
        user: &UserState,
        latent: &LatentUserType,
        item: ItemId,
        recommended_at_star: bool,
    ) -> f64 {
        let boost = if recommended_at_star { self.config.boost } else { 0.0 };
        logistic(self.logit(user, latent, item) + boost)
    }

    /// Listen probability for `item` averaged over the daily shock.
    pub fn expected_listen_probability(
        &self,
        user: &UserState,
        latent: &LatentUserType,
        item: ItemId,
        recommended_at_star: bool,
    ) -> f64 {
        let boost = if recommended_at_star { self.config.boost } else { 0.0 };
        expected_logistic(self.logit(user, latent, item) + boost, latent.noise_scale)
    }

    /// Background for slots `1..L`: familiar items by decreasing engagement
    /// memory, then non-pool filler by popularity, repeated if needed.
    pub fn background(&self, user: &UserState) -> Vec<ItemId> {
        let n = self.config.slots - 1;
        let mut familiar: Vec<(&ItemId, &RelationshipState)> = user.relationships.iter().collect();
        familiar.sort_by(|(a, za), (b, zb)| {
            for (x, y) in za.values.iter().zip(&zb.values) {
                let o = y.total_cmp(x);
                if o.is_ne() {
                    return o;
                }
            }
            a.cmp(b)
        });
        let mut out: Vec<ItemId> = familiar.into_iter().take(n).map(|(&a, _)| a).collect();
        for &a in self.catalogue.popularity() {
            if out.len() >= n {
                break;
            }
            if !user.relationships.contains_key(&a) {
                out.push(a);
            }
        }
        let distinct = out.len();
        let mut i = 0;
        while out.len() < n {
            out.push(out[i % distinct]);
            i += 1;
        }
        out
    }

    /// Full slot layout for a policy decision.
    pub fn layout(&self, user: &UserState, action: StarAction) -> DayActions {
        let bg = self.background(user);
        let (star, rendered) = match action {
            StarAction::Show(a) => (a, true),
            StarAction::Hold(a) => (a, false),
            StarAction::Idle => (bg[0], false),
        };
        let mut slots = Vec::with_capacity(self.config.slots);
        slots.push(star);
        slots.extend(bg);
        DayActions {
            slots,
            star_rendered: rendered,
        }
    }

    /// Simulates one day for user `user_id` on day `day` and advances the
    /// user's relationship states and context.
    pub fn step_day(
        &self,
        user: &mut UserState,
        latent: &LatentUserType,
        actions: &DayActions,
        user_id: u64,
        day: u32,
    ) -> DayOutcome {
        let cfg = &self.config;
        let slots = &actions.slots;
        let mut engagements = vec![0.0; slots.len()];
        let shock: f64 = {
            let mut r = rng_for(cfg.seed, &[stream::SHOCK, user_id, day as u64]);
            let e: f64 = StandardNormal.sample(&mut r);
            latent.noise_scale * e
        };
        let star = slots[0];
        let exp = Exp::new(1.0 / cfg.engagement_mean_secs).expect("positive mean");
        let mut listened: Vec<ItemId> = Vec::new();
        for (pos, &a) in slots.iter().enumerate() {
            if slots[..pos].contains(&a) {
                continue;
            }
            let promoted = actions.star_rendered && a == star;
            let mut logit = self.logit(user, latent, a) + shock;
            if actions.star_rendered && a != star {
                logit -= cfg.substitution;
            }
            let p_org = logistic(logit);
            let mut r: SimRng = rng_for(cfg.seed, &[stream::LISTEN, user_id, day as u64, a.0 as u64]);
            let u_org: f64 = r.random();
            let u_rec: f64 = r.random();
            let organic = u_org < p_org;
            let banner = promoted && {
                let p_tot = logistic(logit + cfg.boost);
                let q = if p_org < 1.0 {
                    ((p_tot - p_org) / (1.0 - p_org)).clamp(0.0, 1.0)
                } else {
                    0.0
                };
                u_rec < q
            };
            if !(organic || banner) {
                continue;
            }
            let secs = cfg.engagement_min_secs + exp.sample(&mut r);
            let secs = (secs * 1000.0).round() / 1000.0;
            let slot = if banner {
                0
            } else {
                slots[1..]
                    .iter()
                    .position(|&b| b == a)
                    .map(|i| i + 1)
                    .unwrap_or(0)
            };
            engagements[slot] += secs;
            listened.push(a);
        }
        for (&a, z) in user.relationships.iter_mut() {
            z.advance(&cfg.alpha, listened.contains(&a));
        }
        for &a in &listened {
            user.relationships.entry(a).or_insert_with(|| {
                let mut z = RelationshipState::zero(cfg.k);
                z.advance(&cfg.alpha, true);
                z
            });
        }
        user.relationships.retain(|_, z| !z.is_zero());
        user.context.day_of_week = (user.context.day_of_week + 1) % 7;
        user.context.days_since_active = if listened.is_empty() {
            user.context.days_since_active + 1.0
        } else {
            0.0
        };
        DayOutcome {
            actions: slots.clone(),
            engagements,
        }
    }

    /// Begins simulating user `user_id` with the configured lifetime.
    pub fn start_user(&self, user_id: u64) -> UserRun<'_> {
        let lifetime = self.lifetime(user_id);
        self.start_user_with_lifetime(user_id, lifetime)
    }

    /// Begins simulating user `user_id` for exactly `lifetime` days.
    pub fn start_user_with_lifetime(&self, user_id: u64, lifetime: u32) -> UserRun<'_> {
        let (state, latent, start) = self.spawn_user_with_start(user_id);
        let taste = state.taste.clone();
        UserRun {
            sim: self,
            user_id,
            start,
            state,
            latent,
            lifetime,
            day: 0,
            days: Vec::with_capacity(lifetime as usize),
            stars: Vec::with_capacity(lifetime as usize),
            taste,
        }
    }

    /// Simulates one user's whole lifetime under `policy`.
    pub fn simulate_user(&self, policy: &dyn StarPolicy, user_id: u64) -> SimulatedUser {
        let mut run = self.start_user(user_id);
        while run.step(policy).is_some() {}
        run.finish()
    }

    /// Simulates users `0..n_users`, in parallel, ordered by user id.
    pub fn simulate_cohort(&self, policy: &dyn StarPolicy, n_users: usize) -> Vec<SimulatedUser> {
        self.simulate_users(policy, 0..n_users as u64)
    }

    /// Simulates the given user ids, in parallel, ordered by user id.
    pub fn simulate_users(&self, policy: &dyn StarPolicy, ids: Range<u64>) -> Vec<SimulatedUser> {
        ids.into_par_iter()
            .map(|id| self.simulate_user(policy, id))
            .collect()
    }
}

/// Incremental simulation of one user, one day at a time.
#[derive(Debug, Clone)]
pub struct UserRun<'s> {
    sim: &'s Simulator,
    pub user_id: u64,
    /// Calendar day of activation; day-of-week is the calendar day mod 7.
    pub start: u32,
    pub state: UserState,
    pub latent: LatentUserType,
    pub lifetime: u32,
    pub day: u32,
    pub days: Vec<DayOutcome>,
    pub stars: Vec<StarAction>,
    taste: Vec<f64>,
}

impl<'s> UserRun<'s> {
    pub fn sim(&self) -> &'s Simulator {
        self.sim
    }

    pub fn is_done(&self) -> bool {
        self.day >= self.lifetime
    }

    /// Lets `policy` choose today's action and simulates the day.
    pub fn step(&mut self, policy: &dyn StarPolicy) -> Option<&DayOutcome> {
        if self.is_done() {
            return None;
        }
        let action = {
            let view = PolicyView {
                user_id: self.user_id,
                day: self.day,
                user: &self.state,
                catalogue: &self.sim.catalogue,
            };
            let mut rng = rng_for(
                self.sim.config.seed,
                &[stream::POLICY, self.user_id, self.day as u64],
            );
            policy.choose(&view, &mut rng)
        };
        self.step_with(action)
    }

    /// Simulates the day with a fixed action.
    pub fn step_with(&mut self, action: StarAction) -> Option<&DayOutcome> {
        if self.is_done() {
            return None;
        }
        let actions = self.sim.layout(&self.state, action);
        let outcome = self
            .sim
            .step_day(&mut self.state, &self.latent, &actions, self.user_id, self.day);
        self.days.push(outcome);
        self.stars.push(action);
        self.day += 1;
        self.days.last()
    }

    pub fn finish(self) -> SimulatedUser {
        let end = self.start + self.days.len().saturating_sub(1) as u32;
        SimulatedUser {
            trajectory: Trajectory {
                user_id: self.user_id,
                start: self.start,
                end,
                taste: self.taste,
                days: self.days,
                latent_type_id: self.user_id,
            },
            final_state: self.state,
            stars: self.stars,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::consumption;

    fn small() -> Simulator {
        Simulator::new(SimConfig {
            n_items: 20,
            pool_size: 8,
            slots: 6,
            ..SimConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn fresh_user_has_no_relationships() {
        let sim = small();
        let (u, latent) = sim.spawn_user(3);
        assert!(u.relationships.is_empty());
        assert_eq!(u.taste.len(), sim.config.d);
        assert_eq!(u.taste[0], 1.0);
        assert_eq!(latent.base_affinity.len(), 20);
        assert_eq!(sim.spawn_user(3), (u, latent));
    }

    #[test]
    fn listen_probability_examples() {
        let sim = Simulator::new(SimConfig {
            boost: 2.0,
            ..SimConfig::default()
        })
        .unwrap();
        let (mut user, mut latent) = sim.spawn_user(0);
        latent.base_affinity.iter_mut().for_each(|b| *b = 0.0);
        latent.habit_gain.iter_mut().for_each(|h| *h = 0.0);
        assert_eq!(sim.listen_probability(&user, &latent, ItemId(1), false), 0.5);
        let p = sim.listen_probability(&user, &latent, ItemId(1), true);
        assert!((p - 0.880_797_077_977_882_3).abs() < 1e-12);

        latent.habit_gain[1] = 2.0;
        let mut prev = sim.listen_probability(&user, &latent, ItemId(1), false);
        let mut z = RelationshipState::zero(3);
        for _ in 0..5 {
            z.advance(&sim.config.alpha, true);
            user.relationships.insert(ItemId(1), z.clone());
            let p = sim.listen_probability(&user, &latent, ItemId(1), false);
            assert!(p > prev);
            prev = p;
        }
    }

    #[test]
    fn forced_probabilities() {
        let sim = small();
        let (mut user, mut latent) = sim.spawn_user(1);
        user.relationships
            .insert(ItemId(9), RelationshipState::new(vec![0.5, 0.5, 0.5]));
        latent.base_affinity.iter_mut().for_each(|b| *b = -1e6);
        latent.habit_gain.iter_mut().for_each(|h| *h = 0.0);
        let actions = sim.layout(&user, StarAction::Show(ItemId(0)));
        let before = user.relationships[&ItemId(9)].clone();
        let out = sim.step_day(&mut user, &latent, &actions, 1, 0);
        assert!(out.engagements.iter().all(|&y| y == 0.0));
        let after = &user.relationships[&ItemId(9)];
        assert!(after.values.iter().zip(&before.values).all(|(a, b)| a < b));

        latent.base_affinity.iter_mut().for_each(|b| *b = 1e6);
        let actions = sim.layout(&user, StarAction::Show(ItemId(0)));
        let out = sim.step_day(&mut user, &latent, &actions, 1, 1);
        for a in out.distinct_items() {
            assert!(consumption(&out, a) >= sim.config.engagement_min_secs);
        }
    }

    #[test]
    fn step_day_is_deterministic() {
        let sim = small();
        let (u0, latent) = sim.spawn_user(4);
        let actions = sim.layout(&u0, StarAction::Show(ItemId(2)));
        let (mut a, mut b) = (u0.clone(), u0);
        let oa = sim.step_day(&mut a, &latent, &actions, 4, 7);
        let ob = sim.step_day(&mut b, &latent, &actions, 4, 7);
        assert_eq!(oa, ob);
        assert_eq!(a, b);
    }

    #[test]
    fn lifetimes_respect_gamma_and_cap() {
        let sim = Simulator::new(SimConfig {
            gamma: 0.5,
            ..SimConfig::default()
        })
        .unwrap();
        let n = 100_000;
        let lifetimes: Vec<f64> = (0..n).map(|i| sim.lifetime(i) as f64).collect();
        let r = crate::stats::mean_se(&lifetimes).unwrap();
        assert!((r.mean - 2.0).abs() < 3.0 * r.se, "{r:?}");

        let sim = Simulator::new(SimConfig {
            gamma: 1e-9,
            ..SimConfig::default()
        })
        .unwrap();
        assert!((0..1000).all(|i| sim.lifetime(i) == 1));

        let sim = Simulator::new(SimConfig {
            gamma: 0.99,
            max_days: 30,
            ..SimConfig::default()
        })
        .unwrap();
        let users = sim.simulate_cohort(&IdlePolicy, 300);
        assert!(users.iter().all(|u| u.trajectory.len() <= 30));
        assert!(users.iter().any(|u| u.trajectory.len() == 30));
    }

    #[test]
    fn background_prefers_familiar_items() {
        let sim = small();
        let (mut user, _) = sim.spawn_user(0);
        user.relationships
            .insert(ItemId(3), RelationshipState::new(vec![0.2, 0.1, 0.0]));
        user.relationships
            .insert(ItemId(5), RelationshipState::new(vec![0.7, 0.1, 0.0]));
        let bg = sim.background(&user);
        assert_eq!(bg.len(), 5);
        assert_eq!(&bg[..2], &[ItemId(5), ItemId(3)]);
        assert!(bg[2..].iter().all(|&a| !sim.catalogue.in_pool(a)));
    }

    #[test]
    fn trajectories_are_consistent() {
        let sim = small();
        let policy = LoggingPolicy::new(0.5).unwrap();
        for u in sim.simulate_cohort(&policy, 50) {
            u.trajectory.validate().unwrap();
            assert_eq!(u.stars.len(), u.trajectory.len());
            for d in &u.trajectory.days {
                assert_eq!(d.actions.len(), sim.config.slots);
            }
        }
    }
}
