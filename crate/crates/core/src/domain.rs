//! Foundational types shared by every module: items, per-item relationship
//! states, user states, daily outcomes, trajectories and separable rewards.
//!
//! A user's history with one item is compressed into a short vector of
//! exponential moving averages of the daily "listened" indicator. Rewards are
//! additively separable across items, so a lifetime reward can be computed
//! either day by day or item by item with identical results.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Index of an item in the catalogue.
#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct ItemId(pub u32);

impl ItemId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl std::fmt::Display for ItemId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Exponential-moving-average encoding of a user's history with one item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RelationshipState {
    pub values: Vec<f64>,
}

impl RelationshipState {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    /// The all-zero state of dimension `k` (no prior engagement).
    pub fn zero(k: usize) -> Self {
        Self {
            values: vec![0.0; k],
        }
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0.0)
    }

    /// Fast-memory component, the one the simulator's habit term reads.
    pub fn fast(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }

    /// In-place form of [`update_relationship_state`]; the caller guarantees
    /// matching dimensions.
    pub(crate) fn advance(&mut self, alpha: &[f64], listened: bool) {
        let x = if listened { 1.0 } else { 0.0 };
        for (z, &a) in self.values.iter_mut().zip(alpha) {
            *z = a * *z + (1.0 - a) * x;
        }
    }
}

/// Checks that every forgetting factor lies in (0, 1].
pub fn validate_alpha(alpha: &[f64]) -> Result<()> {
    if alpha.is_empty() {
        return Err(Error::InvalidArgument("alpha must be non-empty".into()));
    }
    if let Some(a) = alpha.iter().find(|&&a| !(a > 0.0 && a <= 1.0)) {
        return Err(Error::InvalidArgument(format!(
            "forgetting factor {a} outside (0, 1]"
        )));
    }
    Ok(())
}

/// `alpha ∘ z + (1 - alpha) ∘ 1(listened)`.
pub fn update_relationship_state(
    z: &RelationshipState,
    alpha: &[f64],
    listened: bool,
) -> Result<RelationshipState> {
    if z.dim() != alpha.len() {
        return Err(Error::InvalidArgument(format!(
            "state has dimension {} but alpha has {}",
            z.dim(),
            alpha.len()
        )));
    }
    let mut next = z.clone();
    next.advance(alpha, listened);
    Ok(next)
}

/// States reached after a listen (`z_plus`) and after no listen (`z_minus`).
pub fn successor_states(
    z: &RelationshipState,
    alpha: &[f64],
) -> Result<(RelationshipState, RelationshipState)> {
    Ok((
        update_relationship_state(z, alpha, true)?,
        update_relationship_state(z, alpha, false)?,
    ))
}

/// Exogenous context observed at the start of a day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct Context {
    /// Calendar day modulo 7.
    pub day_of_week: u8,
    /// Days since the user last consumed anything (0 if active yesterday).
    pub days_since_active: f64,
}

/// Observable user state: taste vector, context and sparse relationships.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UserState {
    pub taste: Vec<f64>,
    pub context: Context,
    /// Items in the all-zero state are omitted.
    pub relationships: BTreeMap<ItemId, RelationshipState>,
}

impl UserState {
    pub fn new(taste: Vec<f64>, context: Context) -> Self {
        Self {
            taste,
            context,
            relationships: BTreeMap::new(),
        }
    }

    /// Relationship with `item`, or the zero state of dimension `k`.
    pub fn relationship(&self, item: ItemId, k: usize) -> RelationshipState {
        self.relationships
            .get(&item)
            .cloned()
            .unwrap_or_else(|| RelationshipState::zero(k))
    }

    /// True when the user has any recorded engagement with `item`.
    pub fn is_familiar(&self, item: ItemId) -> bool {
        self.relationships.contains_key(&item)
    }
}

/// What was shown on one day and how the user engaged with each slot.
///
/// Slot 0 is the distinguished position whose content the policy controls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DayOutcome {
    pub actions: Vec<ItemId>,
    /// Seconds of engagement per slot.
    pub engagements: Vec<f64>,
}

impl DayOutcome {
    pub fn new(actions: Vec<ItemId>, engagements: Vec<f64>) -> Result<Self> {
        if actions.len() != engagements.len() {
            return Err(Error::InvalidArgument(format!(
                "{} actions but {} engagements",
                actions.len(),
                engagements.len()
            )));
        }
        if let Some(y) = engagements.iter().find(|&&y| !(y >= 0.0)) {
            return Err(Error::InvalidArgument(format!("negative engagement {y}")));
        }
        Ok(Self {
            actions,
            engagements,
        })
    }

    /// Item at the distinguished slot.
    pub fn star(&self) -> Option<ItemId> {
        self.actions.first().copied()
    }

    /// Distinct items shown this day, in ascending id order.
    pub fn distinct_items(&self) -> BTreeSet<ItemId> {
        self.actions.iter().copied().collect()
    }

    /// True when anything was consumed this day.
    pub fn is_active(&self) -> bool {
        self.engagements.iter().any(|&y| y > 0.0)
    }
}

/// One user's logged history from activation (`start`) to deactivation (`end`),
/// both inclusive calendar days.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub user_id: u64,
    #[serde(rename = "t0")]
    pub start: u32,
    #[serde(rename = "t1")]
    pub end: u32,
    /// Observed taste vector of the user.
    pub taste: Vec<f64>,
    pub days: Vec<DayOutcome>,
    /// Simulator bookkeeping; never serialized and never read by learners.
    #[serde(skip)]
    pub latent_type_id: u64,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.days.len()
    }

    pub fn is_empty(&self) -> bool {
        self.days.is_empty()
    }

    /// Context at the start of each day, reconstructed from the log.
    pub fn contexts(&self) -> Vec<Context> {
        let mut out = Vec::with_capacity(self.days.len());
        let mut since = 0.0;
        for (i, day) in self.days.iter().enumerate() {
            out.push(Context {
                day_of_week: ((self.start as usize + i) % 7) as u8,
                days_since_active: since,
            });
            since = if day.is_active() { 0.0 } else { since + 1.0 };
        }
        out
    }

    /// Checks `len = end - start + 1` and per-day slot counts.
    pub fn validate(&self) -> Result<()> {
        if self.end < self.start || (self.end - self.start + 1) as usize != self.days.len() {
            return Err(Error::Data(format!(
                "user {}: {} days recorded for span [{}, {}]",
                self.user_id,
                self.days.len(),
                self.start,
                self.end
            )));
        }
        for day in &self.days {
            if day.actions.len() != day.engagements.len() {
                return Err(Error::Data(format!(
                    "user {}: slot count mismatch",
                    self.user_id
                )));
            }
        }
        Ok(())
    }
}

/// Per-item reward applied to daily consumption.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum RewardSpec {
    /// `r(c) = 1(c > 0)`.
    #[default]
    Binary,
    /// `r(c) = c`, the raw consumption amount.
    Minutes,
}

impl RewardSpec {
    pub fn reward(self, c: f64) -> f64 {
        match self {
            RewardSpec::Binary => {
                if c > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            RewardSpec::Minutes => c,
        }
    }
}

impl std::str::FromStr for RewardSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "binary" => Ok(RewardSpec::Binary),
            "minutes" => Ok(RewardSpec::Minutes),
            other => Err(Error::Config(format!("unknown reward kind '{other}'"))),
        }
    }
}

/// Total engagement with item `a` over every slot showing it.
pub fn consumption(day: &DayOutcome, a: ItemId) -> f64 {
    day.actions
        .iter()
        .zip(&day.engagements)
        .filter(|(&item, _)| item == a)
        .map(|(_, &y)| y)
        .sum()
}

/// `Σ_a r(C_a)` over the distinct items shown that day.
pub fn day_reward(day: &DayOutcome, spec: RewardSpec) -> f64 {
    day.distinct_items()
        .into_iter()
        .map(|a| spec.reward(consumption(day, a)))
        .sum()
}

/// Sum of daily rewards over the whole trajectory.
pub fn lifetime_reward(traj: &Trajectory, spec: RewardSpec) -> f64 {
    traj.days.iter().map(|d| day_reward(d, spec)).sum()
}

/// Lifetime reward broken down per item: `item -> Σ_t r(C_{t,item})`.
pub fn item_lifetime_rewards(traj: &Trajectory, spec: RewardSpec) -> BTreeMap<ItemId, f64> {
    let mut out = BTreeMap::new();
    for day in &traj.days {
        for a in day.distinct_items() {
            *out.entry(a).or_insert(0.0) += spec.reward(consumption(day, a));
        }
    }
    out
}
