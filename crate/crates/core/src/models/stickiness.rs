//! Long-term model: expected number of return days after a discovery,
//! linear in the user's taste vector, one ridge regression per item.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::domain::{ItemId, Trajectory};
use crate::error::{Error, Result};

/// Default outcome window: the discovery day plus 59 follow-up days.
pub const DEFAULT_HORIZON: u32 = 60;

/// A first listen and the number of distinct active days that followed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscoveryRecord {
    /// Taste vector at discovery time.
    pub u: Vec<f64>,
    /// Active days with the item in the `horizon - 1` days after discovery.
    pub v_hat: u32,
}

/// Fitted stickiness vectors for a set of items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickinessVectors {
    pub theta: BTreeMap<ItemId, Vec<f64>>,
    pub lambda: f64,
    pub prior_mean: Vec<f64>,
    /// Unpersonalized stickiness (mean of `v_hat`) per item with records.
    pub v_bar: BTreeMap<ItemId, f64>,
    pub n_records: BTreeMap<ItemId, usize>,
}

impl StickinessVectors {
    /// Stickiness vector of `item`, falling back to the prior mean.
    pub fn theta(&self, item: ItemId) -> &[f64] {
        self.theta
            .get(&item)
            .map(Vec::as_slice)
            .unwrap_or(&self.prior_mean)
    }

    /// Unpersonalized stickiness of `item`, falling back to the mean over items.
    pub fn v_bar(&self, item: ItemId) -> f64 {
        self.v_bar.get(&item).copied().unwrap_or_else(|| {
            if self.v_bar.is_empty() {
                0.0
            } else {
                self.v_bar.values().sum::<f64>() / self.v_bar.len() as f64
            }
        })
    }
}

/// Discovery records for every item, from one pass over the trajectories.
///
/// A discovery is the first day with positive consumption of an item. It
/// qualifies only if the trajectory covers the following `horizon - 1` days.
pub fn build_discovery_datasets(
    trajectories: &[Trajectory],
    horizon: u32,
) -> BTreeMap<ItemId, Vec<DiscoveryRecord>> {
    let follow = horizon.saturating_sub(1) as usize;
    let mut out: BTreeMap<ItemId, Vec<DiscoveryRecord>> = BTreeMap::new();
    for traj in trajectories {
        let active: Vec<Vec<ItemId>> = traj
            .days
            .iter()
            .map(|d| {
                let mut v: Vec<ItemId> = d
                    .actions
                    .iter()
                    .zip(&d.engagements)
                    .filter(|(_, &y)| y > 0.0)
                    .map(|(&a, _)| a)
                    .collect();
                v.sort_unstable();
                v.dedup();
                v
            })
            .collect();
        let mut first: BTreeMap<ItemId, usize> = BTreeMap::new();
        for (t, items) in active.iter().enumerate() {
            for &a in items {
                first.entry(a).or_insert(t);
            }
        }
        for (a, t) in first {
            if t + follow >= active.len() {
                continue;
            }
            let v_hat = active[t + 1..=t + follow]
                .iter()
                .filter(|items| items.binary_search(&a).is_ok())
                .count() as u32;
            out.entry(a).or_default().push(DiscoveryRecord {
                u: traj.taste.clone(),
                v_hat,
            });
        }
    }
    out
}

/// Discovery records for a single item.
pub fn build_discovery_dataset(
    trajectories: &[Trajectory],
    a: ItemId,
    horizon: u32,
) -> Vec<DiscoveryRecord> {
    build_discovery_datasets(trajectories, horizon)
        .remove(&a)
        .unwrap_or_default()
}

/// `argmin_θ Σ (θᵀu - v̂)² + λ‖θ - prior_mean‖²`.
pub fn train_stickiness(
    records: &[DiscoveryRecord],
    lambda: f64,
    prior_mean: &[f64],
) -> Result<Vec<f64>> {
    let d = prior_mean.len();
    if !(lambda >= 0.0) {
        return Err(Error::InvalidArgument(format!(
            "ridge strength must be non-negative, got {lambda}"
        )));
    }
    if records.is_empty() && lambda > 0.0 {
        return Ok(prior_mean.to_vec());
    }
    let mut a = DMatrix::<f64>::identity(d, d) * lambda;
    let mut b = DVector::<f64>::from_column_slice(prior_mean) * lambda;
    for r in records {
        if r.u.len() != d {
            return Err(Error::InvalidArgument(format!(
                "taste dimension {} does not match prior dimension {d}",
                r.u.len()
            )));
        }
        for i in 0..d {
            b[i] += r.u[i] * r.v_hat as f64;
            for j in 0..d {
                a[(i, j)] += r.u[i] * r.u[j];
            }
        }
    }
    let chol = a.cholesky().ok_or_else(|| {
        Error::Singular(format!(
            "normal equations are not positive definite ({} records, lambda {lambda})",
            records.len()
        ))
    })?;
    Ok(chol.solve(&b).iter().copied().collect())
}

/// `uᵀθ`; may be negative.
pub fn predict_stickiness(u: &[f64], theta: &[f64]) -> Result<f64> {
    if u.len() != theta.len() {
        return Err(Error::InvalidArgument(format!(
            "taste dimension {} but theta dimension {}",
            u.len(),
            theta.len()
        )));
    }
    Ok(u.iter().zip(theta).map(|(a, b)| a * b).sum())
}

/// Mean of `v_hat` over the records.
pub fn unpersonalized_stickiness(records: &[DiscoveryRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::InvalidArgument(
            "unpersonalized stickiness needs at least one record".into(),
        ));
    }
    Ok(records.iter().map(|r| r.v_hat as f64).sum::<f64>() / records.len() as f64)
}

/// Serialized form of one item's stickiness model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StickinessRecord {
    pub item_id: ItemId,
    pub theta: Vec<f64>,
    pub lambda: f64,
    pub prior_mean: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v_bar: Option<f64>,
    pub n_records: usize,
}

impl StickinessVectors {
    /// One record per fitted item, ordered by item id.
    pub fn to_records(&self) -> Vec<StickinessRecord> {
        self.theta
            .iter()
            .map(|(&item_id, theta)| StickinessRecord {
                item_id,
                theta: theta.clone(),
                lambda: self.lambda,
                prior_mean: self.prior_mean.clone(),
                v_bar: self.v_bar.get(&item_id).copied(),
                n_records: self.n_records.get(&item_id).copied().unwrap_or(0),
            })
            .collect()
    }

    pub fn from_records(records: &[StickinessRecord]) -> Result<Self> {
        let first = records
            .first()
            .ok_or_else(|| Error::Data("stickiness artifact has no items".into()))?;
        let mut out = StickinessVectors {
            theta: BTreeMap::new(),
            lambda: first.lambda,
            prior_mean: first.prior_mean.clone(),
            v_bar: BTreeMap::new(),
            n_records: BTreeMap::new(),
        };
        for r in records {
            if r.prior_mean != out.prior_mean || r.lambda != out.lambda {
                return Err(Error::Data(format!(
                    "item {} disagrees on lambda or prior mean",
                    r.item_id
                )));
            }
            if r.theta.len() != out.prior_mean.len() {
                return Err(Error::Data(format!(
                    "item {}: theta has dimension {}, expected {}",
                    r.item_id,
                    r.theta.len(),
                    out.prior_mean.len()
                )));
            }
            out.theta.insert(r.item_id, r.theta.clone());
            out.n_records.insert(r.item_id, r.n_records);
            if let Some(v) = r.v_bar {
                out.v_bar.insert(r.item_id, v);
            }
        }
        Ok(out)
    }
}

/// Fits every item. The prior mean is a pooled ridge fit over all items'
/// records (shrunk toward zero), so sparse items regress toward the
/// population's stickiness surface instead of a constant.
pub fn fit_stickiness(
    datasets: &BTreeMap<ItemId, Vec<DiscoveryRecord>>,
    items: impl IntoIterator<Item = ItemId>,
    lambda: f64,
    d: usize,
) -> Result<StickinessVectors> {
    let pooled: Vec<DiscoveryRecord> = datasets.values().flatten().cloned().collect();
    let prior_mean = if pooled.is_empty() {
        vec![0.0; d]
    } else {
        train_stickiness(&pooled, lambda.max(1e-9), &vec![0.0; d])?
    };
    let mut theta = BTreeMap::new();
    let mut v_bar = BTreeMap::new();
    let mut n_records = BTreeMap::new();
    for a in items {
        let records = datasets.get(&a).map(Vec::as_slice).unwrap_or(&[]);
        theta.insert(a, train_stickiness(records, lambda, &prior_mean)?);
        n_records.insert(a, records.len());
        if !records.is_empty() {
            v_bar.insert(a, unpersonalized_stickiness(records)?);
        }
    }
    Ok(StickinessVectors {
        theta,
        lambda,
        prior_mean,
        v_bar,
        n_records,
    })
}
