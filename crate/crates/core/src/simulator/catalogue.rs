//! Item ground truth and the public view of the catalogue.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::config::SimConfig;
use crate::domain::ItemId;
use crate::rng::{rng_for, stream};

/// Hidden and public attributes of one item.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemGroundTruth {
    pub id: ItemId,
    /// Drives the first-listen probability.
    pub click_appeal: f64,
    /// Drives how strongly engagement turns into habit.
    pub stick_appeal: f64,
    /// Public embedding ν_a: noisy `(click_appeal, latent_embedding)`.
    pub clickiness_embedding: Vec<f64>,
    /// Hidden taste-space direction of the item (dimension `d - 1`).
    pub latent_embedding: Vec<f64>,
}

/// Public per-item record handed to learners.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ItemInfo {
    pub item_id: ItemId,
    pub embedding: Vec<f64>,
    /// Eligible for the distinguished slot.
    pub pool: bool,
}

#[derive(Debug, Clone)]
pub struct Catalogue {
    pub items: Vec<ItemGroundTruth>,
    pub pool_size: usize,
    /// Non-pool items by decreasing click appeal; the background filler order.
    popularity: Vec<ItemId>,
}

impl Catalogue {
    pub fn new(items: Vec<ItemGroundTruth>, pool_size: usize) -> Self {
        let mut popularity: Vec<ItemId> = items[pool_size..].iter().map(|it| it.id).collect();
        popularity.sort_by(|a, b| {
            items[b.index()]
                .click_appeal
                .total_cmp(&items[a.index()].click_appeal)
                .then(a.cmp(b))
        });
        Self {
            items,
            pool_size,
            popularity,
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn item(&self, id: ItemId) -> &ItemGroundTruth {
        &self.items[id.index()]
    }

    /// Items eligible for the distinguished slot.
    pub fn pool(&self) -> impl Iterator<Item = ItemId> + '_ {
        (0..self.pool_size as u32).map(ItemId)
    }

    pub fn in_pool(&self, id: ItemId) -> bool {
        id.index() < self.pool_size
    }

    pub fn popularity(&self) -> &[ItemId] {
        &self.popularity
    }

    pub fn embedding(&self, id: ItemId) -> &[f64] {
        &self.items[id.index()].clickiness_embedding
    }

    pub fn public_info(&self) -> Vec<ItemInfo> {
        self.items
            .iter()
            .map(|it| ItemInfo {
                item_id: it.id,
                embedding: it.clickiness_embedding.clone(),
                pool: self.in_pool(it.id),
            })
            .collect()
    }
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Draws a catalogue whose click and stick appeals have the configured
/// correlation. Deterministic in the generator state.
pub fn spawn_catalogue<R: Rng + ?Sized>(config: &SimConfig, rng: &mut R) -> Catalogue {
    let rho = config.click_stick_corr;
    let items = (0..config.n_items)
        .map(|i| {
            let z1 = normal(rng);
            let z2 = normal(rng);
            let click_appeal = config.click_scale * z1;
            let stick_appeal = rho * z1 + (1.0 - rho * rho).sqrt() * z2;
            let latent_embedding: Vec<f64> = (1..config.d)
                .map(|_| config.embedding_scale * normal(rng))
                .collect();
            let mut clickiness_embedding = Vec::with_capacity(config.d);
            clickiness_embedding.push(click_appeal + config.embedding_noise * normal(rng));
            for &v in &latent_embedding {
                clickiness_embedding.push(v + config.embedding_noise * normal(rng));
            }
            ItemGroundTruth {
                id: ItemId(i as u32),
                click_appeal,
                stick_appeal,
                clickiness_embedding,
                latent_embedding,
            }
        })
        .collect();
    Catalogue::new(items, config.pool_size)
}

/// Catalogue drawn from the configuration's own seed.
pub fn catalogue_from_config(config: &SimConfig) -> Catalogue {
    spawn_catalogue(config, &mut rng_for(config.seed, &[stream::CATALOGUE]))
}
