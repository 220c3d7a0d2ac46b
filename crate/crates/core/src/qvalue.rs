//! Relative Q-values and the recommendation policies built on them.
//!
//! For separable binary rewards, the value of promoting item `a` relative to
//! not promoting it factors into the lift in listen probability times the
//! long-term value of a listen:
//!
//! ```text
//! Q(s, a) - b(s) = [P(listen | rec) - P(listen | no rec)]
//!                · [(1 + γ·V(z⁺)) - γ·V(z⁻)]
//! ```
//!
//! where `z⁺`/`z⁻` are the item's relationship states after a listen / no
//! listen and `b(s)` does not depend on the action. Discovery scoring is the
//! special case `z = 0`, no organic listening, `γ = 1`, `V(0) = 0`.

use serde::{Deserialize, Serialize};

use crate::domain::{ItemId, UserState};
use crate::error::{Error, Result};
use crate::models::{predict_click, predict_stickiness, ActivityHistory, ItemModels, ResurfacingTables};
use crate::rng::SimRng;
use crate::simulator::{eligible_pool, PolicyView, StarAction, StarPolicy};

/// Relative Q-value of one item within one scoring pass.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QScore {
    pub item: ItemId,
    pub value: f64,
}

/// The policies compared in the experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyArm {
    Control,
    Personalized,
    Unpersonalized,
    SquareRoot,
}

impl PolicyArm {
    pub const ALL: [PolicyArm; 4] = [
        PolicyArm::Control,
        PolicyArm::Personalized,
        PolicyArm::Unpersonalized,
        PolicyArm::SquareRoot,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PolicyArm::Control => "control",
            PolicyArm::Personalized => "personalized",
            PolicyArm::Unpersonalized => "unpersonalized",
            PolicyArm::SquareRoot => "square_root",
        }
    }
}

impl std::fmt::Display for PolicyArm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PolicyArm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        PolicyArm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown policy arm '{s}'")))
    }
}

/// `click_p · (1 + max(stickiness, 0))`.
pub fn q_discovery(click_p: f64, stickiness: f64) -> f64 {
    click_p * (1.0 + stickiness.max(0.0))
}

/// Resurfacing value of promoting `item` to a user whose history is `z`.
pub fn q_resurfacing(tables: &ResurfacingTables, z: ActivityHistory, item: ItemId) -> Result<f64> {
    if tables.item != item {
        return Err(Error::InvalidArgument(format!(
            "tables are for item {} but item {item} was requested",
            tables.item
        )));
    }
    let missing = |what: &str, (i, j): (usize, usize)| {
        Error::MissingData(format!("item {item}: no {what} data in cell ({i}, {j})"))
    };
    let cell = z.cell();
    let p_rec = tables.p_rec(cell.0, cell.1).ok_or_else(|| missing("promotion", cell))?;
    let p_norec = tables.p_norec(cell.0, cell.1).ok_or_else(|| missing("organic", cell))?;
    let (plus, minus) = z.successors();
    let (cp, cm) = (plus.cell(), minus.cell());
    let v_plus = tables.v(cp.0, cp.1).ok_or_else(|| missing("value", cp))?;
    let v_minus = tables.v(cm.0, cm.1).ok_or_else(|| missing("value", cm))?;
    Ok((p_rec - p_norec) * ((1.0 + v_plus) - v_minus))
}

/// Immediate listen probabilities with and without a promotion.
pub trait ShortTermModel<U> {
    fn listen_probability(&self, user: &U, item: ItemId, recommended: bool) -> f64;
}

/// Item-level value of a relationship state and the states a day leads to.
pub trait StickinessFn<U> {
    type State;

    /// States after a listen and after no listen today.
    fn successors(&self, user: &U, item: ItemId) -> (Self::State, Self::State);

    /// Expected future item reward from entering `state`.
    fn value(&self, user: &U, item: ItemId, state: &Self::State) -> f64;
}

/// `[p_rec - p_norec] · [(1 + γ·V(z⁺)) - γ·V(z⁻)]`.
pub fn q_general_decomposed<U, M, S>(
    short_term: &M,
    stickiness: &S,
    user: &U,
    item: ItemId,
    gamma: f64,
) -> f64
where
    M: ShortTermModel<U> + ?Sized,
    S: StickinessFn<U> + ?Sized,
{
    let lift = short_term.listen_probability(user, item, true)
        - short_term.listen_probability(user, item, false);
    let (plus, minus) = stickiness.successors(user, item);
    let future = (1.0 + gamma * stickiness.value(user, item, &plus))
        - gamma * stickiness.value(user, item, &minus);
    lift * future
}

/// Model outputs for one candidate item.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ItemScore {
    pub item: ItemId,
    pub click_p: f64,
    /// Raw stickiness input of the arm (personalized `uᵀθ` or `v̄`).
    pub stickiness: f64,
    pub q: f64,
}

/// Scores one candidate under `arm`.
pub fn score_item(arm: PolicyArm, user: &UserState, item: ItemId, models: &ItemModels) -> Result<ItemScore> {
    let nu = models
        .embeddings
        .get(&item)
        .ok_or_else(|| Error::MissingData(format!("no embedding for item {item}")))?;
    let click_p = predict_click(&models.clickiness, nu, &user.taste, &user.context);
    let (stickiness, q) = match arm {
        PolicyArm::Control => (0.0, click_p),
        PolicyArm::Personalized => {
            let s = predict_stickiness(&user.taste, models.stickiness.theta(item))?;
            (s, q_discovery(click_p, s))
        }
        PolicyArm::Unpersonalized => {
            let v = models.stickiness.v_bar(item);
            (v, q_discovery(click_p, v))
        }
        PolicyArm::SquareRoot => {
            let v = models.stickiness.v_bar(item);
            (v, q_discovery(click_p, v.max(0.0).sqrt()))
        }
    };
    Ok(ItemScore {
        item,
        click_p,
        stickiness,
        q,
    })
}

/// Scores every candidate, keeping the pool order.
pub fn score_pool(
    arm: PolicyArm,
    user: &UserState,
    pool: &[ItemId],
    models: &ItemModels,
) -> Result<Vec<ItemScore>> {
    pool.iter().map(|&a| score_item(arm, user, a, models)).collect()
}

/// Highest-scoring item under `arm`; ties go to the lowest id.
pub fn select_action(
    arm: PolicyArm,
    user: &UserState,
    pool: &[ItemId],
    models: &ItemModels,
) -> Result<ItemId> {
    let mut best: Option<ItemScore> = None;
    for s in score_pool(arm, user, pool, models)? {
        best = match best {
            Some(b) if b.q > s.q || (b.q == s.q && b.item < s.item) => Some(b),
            _ => Some(s),
        };
    }
    best.map(|b| b.item)
        .ok_or_else(|| Error::InvalidArgument("empty candidate pool".into()))
}

/// How often an arm policy promotes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Exposure {
    /// A single promotion on the first day, nothing afterwards.
    Banner,
    /// A promotion every day.
    Shelf,
}

/// Discovery policy for one experiment arm: promotes the best unfamiliar
/// pool item. Idles when nothing is eligible.
#[derive(Debug, Clone)]
pub struct ArmPolicy<'m> {
    pub arm: PolicyArm,
    pub exposure: Exposure,
    pub models: &'m ItemModels,
    /// Compute the choice but withhold rendering (holdback).
    pub hold: bool,
}

impl<'m> ArmPolicy<'m> {
    pub fn new(arm: PolicyArm, exposure: Exposure, models: &'m ItemModels) -> Self {
        Self {
            arm,
            exposure,
            models,
            hold: false,
        }
    }

    /// The item this policy would promote today, if any.
    pub fn pick(&self, view: &PolicyView<'_>) -> Option<ItemId> {
        if self.exposure == Exposure::Banner && view.day > 0 {
            return None;
        }
        let pool = eligible_pool(view, false);
        select_action(self.arm, view.user, &pool, self.models).ok()
    }
}

impl StarPolicy for ArmPolicy<'_> {
    fn choose(&self, view: &PolicyView<'_>, _rng: &mut SimRng) -> StarAction {
        match self.pick(view) {
            Some(a) if self.hold => StarAction::Hold(a),
            Some(a) => StarAction::Show(a),
            None => StarAction::Idle,
        }
    }
}
