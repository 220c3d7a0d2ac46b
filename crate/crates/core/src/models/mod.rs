//! Trainable components: clickiness, stickiness and resurfacing tables.

pub mod clickiness;
pub mod resurfacing;
pub mod stickiness;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use clickiness::{
    build_click_dataset, cross_entropy, predict_click, train_clickiness, ClickExample,
    ClickinessModel,
};
pub use resurfacing::{build_resurfacing_tables, ActivityHistory, ResurfacingTables};
pub use stickiness::{
    build_discovery_dataset, build_discovery_datasets, fit_stickiness, predict_stickiness,
    train_stickiness, unpersonalized_stickiness, DiscoveryRecord, StickinessRecord,
    StickinessVectors,
};

use crate::domain::{ItemId, Trajectory};
use crate::error::{Error, Result};
use crate::simulator::ItemInfo;

/// Everything the discovery policies need to score an item.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemModels {
    pub clickiness: ClickinessModel,
    pub stickiness: StickinessVectors,
    /// Public embedding per item.
    pub embeddings: BTreeMap<ItemId, Vec<f64>>,
}

impl ItemModels {
    pub fn new(
        clickiness: ClickinessModel,
        stickiness: StickinessVectors,
        items: &[ItemInfo],
    ) -> Self {
        let embeddings = items
            .iter()
            .map(|it| (it.item_id, it.embedding.clone()))
            .collect();
        Self {
            clickiness,
            stickiness,
            embeddings,
        }
    }
}

/// Trains clickiness and stickiness from logged trajectories.
///
/// Stickiness uses every qualifying discovery regardless of how it happened,
/// with `horizon`-day outcome windows and ridge strength `lambda`.
pub fn fit_item_models(
    trajectories: &[Trajectory],
    items: &[ItemInfo],
    lambda: f64,
    horizon: u32,
) -> Result<ItemModels> {
    let d = trajectories
        .first()
        .map(|t| t.taste.len())
        .ok_or_else(|| Error::MissingData("no trajectories to train on".into()))?;
    let clickiness = train_clickiness(&build_click_dataset(trajectories, items))?;
    let datasets = build_discovery_datasets(trajectories, horizon);
    let stickiness = fit_stickiness(&datasets, items.iter().map(|it| it.item_id), lambda, d)?;
    Ok(ItemModels::new(clickiness, stickiness, items))
}
