//! Policies controlling the distinguished slot, including the exploring
//! logging policy that generates training data.

use rand::Rng;

use super::catalogue::Catalogue;
use super::config::SimConfig;
use crate::domain::{ItemId, UserState};
use crate::error::{Error, Result};
use crate::rng::SimRng;

/// What the policy does with the distinguished slot on one day.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum StarAction {
    /// Render `item` as a promotion.
    Show(ItemId),
    /// Compute `item` but do not render it (holdback): the item is only
    /// reachable organically.
    Hold(ItemId),
    /// No promotion; the slot repeats the top background item.
    Idle,
}

impl StarAction {
    /// Item the policy selected, if any.
    pub fn item(self) -> Option<ItemId> {
        match self {
            StarAction::Show(a) | StarAction::Hold(a) => Some(a),
            StarAction::Idle => None,
        }
    }
}

/// Everything a policy may observe when choosing.
#[derive(Debug, Clone, Copy)]
pub struct PolicyView<'a> {
    pub user_id: u64,
    /// Days since activation.
    pub day: u32,
    pub user: &'a UserState,
    pub catalogue: &'a Catalogue,
}

pub trait StarPolicy: Sync {
    fn choose(&self, view: &PolicyView<'_>, rng: &mut SimRng) -> StarAction;
}

impl<F> StarPolicy for F
where
    F: Fn(&PolicyView<'_>, &mut SimRng) -> StarAction + Sync,
{
    fn choose(&self, view: &PolicyView<'_>, rng: &mut SimRng) -> StarAction {
        self(view, rng)
    }
}

/// Never promotes anything.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdlePolicy;

impl StarPolicy for IdlePolicy {
    fn choose(&self, _view: &PolicyView<'_>, _rng: &mut SimRng) -> StarAction {
        StarAction::Idle
    }
}

/// Pool items a policy may promote to this user.
pub fn eligible_pool(view: &PolicyView<'_>, include_familiar: bool) -> Vec<ItemId> {
    view.catalogue
        .pool()
        .filter(|&a| include_familiar || !view.user.is_familiar(a))
        .collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Exploring incumbent: with probability `1 - epsilon` promotes the eligible
/// item with the largest taste-embedding alignment, otherwise a uniformly
/// random eligible item. Every eligible item has probability at least
/// `epsilon / |pool|`.
#[derive(Debug, Clone)]
pub struct LoggingPolicy {
    epsilon: f64,
    include_familiar: bool,
}

impl LoggingPolicy {
    pub fn new(epsilon: f64) -> Result<Self> {
        if !(epsilon > 0.0 && epsilon <= 1.0) {
            return Err(Error::InvalidArgument(format!(
                "exploration probability must lie in (0, 1], got {epsilon}"
            )));
        }
        Ok(Self {
            epsilon,
            include_familiar: false,
        })
    }

    /// Also consider items the user already knows (for resurfacing logs).
    pub fn with_familiar(mut self, include: bool) -> Self {
        self.include_familiar = include;
        self
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }
}

/// The logging policy described by a configuration.
pub fn logging_policy(config: &SimConfig) -> Result<LoggingPolicy> {
    LoggingPolicy::new(config.epsilon)
}

impl StarPolicy for LoggingPolicy {
    fn choose(&self, view: &PolicyView<'_>, rng: &mut SimRng) -> StarAction {
        let pool = eligible_pool(view, self.include_familiar);
        if pool.is_empty() {
            return StarAction::Idle;
        }
        let explore: f64 = rng.random();
        let pick: f64 = rng.random();
        if explore < self.epsilon {
            let i = ((pick * pool.len() as f64) as usize).min(pool.len() - 1);
            return StarAction::Show(pool[i]);
        }
        let u = &view.user.taste;
        let mut best = pool[0];
        let mut best_score = f64::NEG_INFINITY;
        for &a in &pool {
            let s = dot(u, view.catalogue.embedding(a));
            if s > best_score {
                best_score = s;
                best = a;
            }
        }
        StarAction::Show(best)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Context;
    use crate::rng::rng_for;
    use crate::simulator::catalogue::catalogue_from_config;

    #[test]
    fn zero_epsilon_is_rejected() {
        assert!(LoggingPolicy::new(0.0).is_err());
        assert!(LoggingPolicy::new(1.5).is_err());
        assert!(LoggingPolicy::new(1.0).is_ok());
    }

    #[test]
    fn uniform_when_fully_exploring() {
        let cfg = SimConfig {
            n_items: 12,
            pool_size: 10,
            ..SimConfig::default()
        };
        let cat = catalogue_from_config(&cfg);
        let user = UserState::new(vec![1.0, 0.3, -0.2, 0.5], Context::default());
        let view = PolicyView {
            user_id: 0,
            day: 0,
            user: &user,
            catalogue: &cat,
        };
        let policy = LoggingPolicy::new(1.0).unwrap();
        let mut rng = rng_for(1, &[]);
        let n = 100_000;
        let mut counts = vec![0usize; 10];
        for _ in 0..n {
            counts[policy.choose(&view, &mut rng).item().unwrap().index()] += 1;
        }
        let expected = n as f64 / 10.0;
        let chi2: f64 = counts
            .iter()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        // 99.9% quantile of chi-square with 9 degrees of freedom.
        assert!(chi2 < 27.88, "chi2 {chi2}");
    }

    #[test]
    fn familiar_items_are_skipped_unless_requested() {
        let cfg = SimConfig {
            n_items: 4,
            pool_size: 2,
            ..SimConfig::default()
        };
        let cat = catalogue_from_config(&cfg);
        let mut user = UserState::new(vec![1.0, 0.0, 0.0, 0.0], Context::default());
        user.relationships.insert(
            ItemId(0),
            crate::domain::RelationshipState::new(vec![0.5, 0.1, 0.02]),
        );
        let view = PolicyView {
            user_id: 0,
            day: 0,
            user: &user,
            catalogue: &cat,
        };
        let mut rng = rng_for(2, &[]);
        let fresh = LoggingPolicy::new(0.5).unwrap();
        for _ in 0..100 {
            assert_eq!(fresh.choose(&view, &mut rng), StarAction::Show(ItemId(1)));
        }
        let all = LoggingPolicy::new(1.0).unwrap().with_familiar(true);
        let seen: std::collections::BTreeSet<_> =
            (0..200).map(|_| all.choose(&view, &mut rng)).collect::<Vec<_>>().into_iter().filter_map(|a| a.item()).collect();
        assert_eq!(seen.len(), 2);
    }
}
