//! Offline estimators of the value of a recommendation, and the
//! sample-complexity sweep comparing them.
//!
//! For a meta-action (a recommendation policy applied once to each user in a
//! sample) three estimators target the same quantity:
//!
//! * holistic (`glt`): mean total minutes across all items over the window,
//! * local (`llt`): mean minutes with the recommended item over the window,
//! * ours: listen rate times the mean minutes that followed past discoveries
//!   in an independent auxiliary sample.
//!
//! Holistic outcomes carry every other habit the user has, so their level
//! includes a baseline shared by all meta-actions; only contrasts between
//! meta-actions are comparable with the other two estimators.

use std::fmt;

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{consumption, ItemId};
use crate::error::{Error, Result};
use crate::models::ItemModels;
use crate::qvalue::{ArmPolicy, Exposure, PolicyArm};
use crate::rng::{rng_for, stream};
use crate::simulator::{logging_policy, PolicyView, Simulator, StarAction, StarPolicy, UserRun};
use crate::stats::{mean_se, EstimatorResult};

/// Default size of the auxiliary discovery sample.
pub const DEFAULT_AUX_SIZE: usize = 7000;
/// Default outcome window in days, starting on the recommendation day.
pub const DEFAULT_WINDOW: u32 = 60;

/// Outcome of one recommendation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OutcomeSample {
    /// Listened to the recommended item on the recommendation day.
    pub y: bool,
    /// Minutes with the recommended item over the window.
    pub r: f64,
    /// Minutes with all items over the window.
    pub g: f64,
}

/// `|D|⁻¹ Σ G`.
pub fn q_holistic(samples: &[OutcomeSample]) -> Result<EstimatorResult> {
    let g: Vec<f64> = samples.iter().map(|s| s.g).collect();
    mean_se(&g)
}

/// `|D|⁻¹ Σ R`.
pub fn q_local(samples: &[OutcomeSample]) -> Result<EstimatorResult> {
    let r: Vec<f64> = samples.iter().map(|s| s.r).collect();
    mean_se(&r)
}

/// Mean and standard error of the auxiliary discovery outcomes.
pub fn auxiliary_value(discovery_minutes: &[f64]) -> Result<EstimatorResult> {
    mean_se(discovery_minutes)
}

/// `ȳ · v̄` with the delta-method standard error for a product of
/// independent means: `se² = v̄²·se_ȳ² + ȳ²·se_v̄²`.
pub fn q_ours(samples: &[OutcomeSample], aux: &EstimatorResult) -> Result<EstimatorResult> {
    if aux.n < 2 {
        return Err(Error::InvalidArgument(format!(
            "auxiliary sample needs at least 2 records, got {}",
            aux.n
        )));
    }
    let y: Vec<f64> = samples.iter().map(|s| s.y as u8 as f64).collect();
    let y = mean_se(&y)?;
    let se = (aux.mean * aux.mean * y.se * y.se + y.mean * y.mean * aux.se * aux.se).sqrt();
    Ok(EstimatorResult {
        mean: y.mean * aux.mean,
        se,
        n: y.n,
    })
}

/// Bootstrap standard error of `ȳ · v̄`, resampling both datasets.
pub fn bootstrap_ours_se(
    samples: &[OutcomeSample],
    discovery_minutes: &[f64],
    replicates: usize,
    seed: u64,
) -> Result<f64> {
    if samples.len() < 2 || discovery_minutes.len() < 2 || replicates < 2 {
        return Err(Error::InvalidArgument(
            "bootstrap needs at least 2 samples, 2 auxiliary records and 2 replicates".into(),
        ));
    }
    let estimates: Vec<f64> = (0..replicates as u64)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng_for(seed, &[stream::BOOTSTRAP, b]);
            let n = samples.len();
            let hits = (0..n)
                .filter(|_| samples[rng.random_range(0..n)].y)
                .count();
            let m = discovery_minutes.len();
            let total: f64 = (0..m)
                .map(|_| discovery_minutes[rng.random_range(0..m)])
                .sum();
            hits as f64 / n as f64 * (total / m as f64)
        })
        .collect();
    Ok(mean_se(&estimates)?.se * (replicates as f64).sqrt())
}

/// The three estimators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Estimator {
    Holistic,
    Local,
    Ours,
}

impl Estimator {
    pub const ALL: [Estimator; 3] = [Estimator::Holistic, Estimator::Local, Estimator::Ours];

    pub fn name(self) -> &'static str {
        match self {
            Estimator::Holistic => "glt",
            Estimator::Local => "llt",
            Estimator::Ours => "ours",
        }
    }
}

impl fmt::Display for Estimator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One cell of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub estimator: String,
    pub meta_action: String,
    pub n: usize,
    pub mean: f64,
    pub se: f64,
}

/// Settings for [`sample_complexity_sweep`].
#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    /// Sample sizes; the largest is simulated once and smaller ones use prefixes.
    pub n_grid: Vec<usize>,
    pub n_aux: usize,
    pub window: u32,
    /// Meta-actions A and B.
    pub arms: [PolicyArm; 2],
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            n_grid: vec![1_000, 10_000, 100_000],
            n_aux: DEFAULT_AUX_SIZE,
            window: DEFAULT_WINDOW,
            arms: [PolicyArm::Control, PolicyArm::Personalized],
        }
    }
}

/// Randomized outcomes and auxiliary discoveries for one meta-action.
#[derive(Debug, Clone, PartialEq)]
pub struct MetaActionData {
    pub arm: PolicyArm,
    pub samples: Vec<OutcomeSample>,
    /// Window minutes with the item after each auxiliary discovery.
    pub discovery_minutes: Vec<f64>,
}

const AUX_ID_OFFSET: u64 = 1 << 40;
const AUX_CHUNK: u64 = 8192;

/// Days the user has already been active when the recommendation is made.
///
/// Geometric with continuation probability `gamma`, the age distribution of
/// a steady-state population with geometric lifetimes.
pub fn user_age(sim: &Simulator, user_id: u64) -> u32 {
    let mut rng = rng_for(sim.config.seed, &[stream::AGE, user_id]);
    let u: f64 = rng.random();
    let age = ((1.0 - u).ln() / sim.config.gamma.ln()).floor();
    age.min(sim.config.max_days.saturating_sub(1) as f64) as u32
}

/// Simulates user `user_id` under `history` up to the recommendation day.
/// The remaining lifetime is drawn independently of the age.
pub fn established_user<'s>(
    sim: &'s Simulator,
    history: &dyn StarPolicy,
    user_id: u64,
) -> UserRun<'s> {
    let age = user_age(sim, user_id);
    let remaining = sim.lifetime(user_id);
    let mut run = sim.start_user_with_lifetime(user_id, age + remaining);
    for _ in 0..age {
        run.step(history);
    }
    run
}

/// Applies `arm` once on the current day, then idles to the end of the
/// window or the lifetime, whichever comes first. With `only_listeners`,
/// users who did not listen on the first day are not followed further and
/// their `r` and `g` cover that day only.
pub fn recommend_and_follow(
    mut run: UserRun<'_>,
    models: &ItemModels,
    arm: PolicyArm,
    window: u32,
    only_listeners: bool,
) -> (Option<ItemId>, OutcomeSample) {
    let first = run.days.len();
    let pick = {
        let view = PolicyView {
            user_id: run.user_id,
            day: run.day,
            user: &run.state,
            catalogue: &run.sim().catalogue,
        };
        ArmPolicy::new(arm, Exposure::Shelf, models).pick(&view)
    };
    let action = pick.map_or(StarAction::Idle, StarAction::Show);
    run.step_with(action);
    let listened = match (pick, run.days.get(first)) {
        (Some(a), Some(d)) => consumption(d, a) > 0.0,
        _ => false,
    };
    let follow = if listened || !only_listeners { window } else { 1 };
    for _ in 1..follow {
        if run.step_with(StarAction::Idle).is_none() {
            break;
        }
    }
    let days = &run.days[first..];
    let g = days
        .iter()
        .map(|d| d.engagements.iter().sum::<f64>())
        .sum::<f64>()
        / 60.0;
    let r = match pick {
        Some(a) => days.iter().map(|d| consumption(d, a)).sum::<f64>() / 60.0,
        None => 0.0,
    };
    (pick, OutcomeSample { y: listened, r, g })
}

/// Simulates `n` established users and applies both meta-actions to each
/// (from identical pre-recommendation states), plus independent auxiliary
/// discoveries until each arm has `n_aux` of them.
pub fn collect_meta_action_data(
    sim: &Simulator,
    models: &ItemModels,
    arms: [PolicyArm; 2],
    n: usize,
    n_aux: usize,
    window: u32,
) -> Result<[MetaActionData; 2]> {
    if window == 0 {
        return Err(Error::InvalidArgument("outcome window must be positive".into()));
    }
    let history = logging_policy(&sim.config)?;
    let paired: Vec<[OutcomeSample; 2]> = (0..n as u64)
        .into_par_iter()
        .map(|id| {
            let run = established_user(sim, &history, id);
            arms.map(|arm| recommend_and_follow(run.clone(), models, arm, window, false).1)
        })
        .collect();

    let mut aux: [Vec<f64>; 2] = [Vec::new(), Vec::new()];
    let mut next = AUX_ID_OFFSET;
    while aux.iter().any(|a| a.len() < n_aux) {
        let chunk: Vec<[Option<f64>; 2]> = (next..next + AUX_CHUNK)
            .into_par_iter()
            .map(|id| {
                let run = established_user(sim, &history, id);
                arms.map(|arm| {
                    let (_, s) = recommend_and_follow(run.clone(), models, arm, window, true);
                    s.y.then_some(s.r)
                })
            })
            .collect();
        for row in chunk {
            for (k, r) in row.into_iter().enumerate() {
                if let Some(r) = r {
                    if aux[k].len() < n_aux {
                        aux[k].push(r);
                    }
                }
            }
        }
        next += AUX_CHUNK;
        if next - AUX_ID_OFFSET > 10_000 * n_aux as u64 + AUX_CHUNK {
            return Err(Error::Degenerate(
                "meta-action almost never produces a listen; auxiliary sample cannot be filled".into(),
            ));
        }
    }
    let [aux_a, aux_b] = aux;
    Ok([
        MetaActionData {
            arm: arms[0],
            samples: paired.iter().map(|p| p[0]).collect(),
            discovery_minutes: aux_a,
        },
        MetaActionData {
            arm: arms[1],
            samples: paired.iter().map(|p| p[1]).collect(),
            discovery_minutes: aux_b,
        },
    ])
}

/// Estimates for every sample size in `n_grid` (prefixes of the data).
pub fn sweep_table(data: &[MetaActionData], n_grid: &[usize]) -> Result<Vec<SweepRow>> {
    let mut rows = Vec::new();
    for &n in n_grid {
        for d in data {
            if n > d.samples.len() {
                return Err(Error::InvalidArgument(format!(
                    "grid size {n} exceeds the {} simulated samples",
                    d.samples.len()
                )));
            }
            let prefix = &d.samples[..n];
            let aux = auxiliary_value(&d.discovery_minutes)?;
            for est in Estimator::ALL {
                let r = match est {
                    Estimator::Holistic => q_holistic(prefix)?,
                    Estimator::Local => q_local(prefix)?,
                    Estimator::Ours => q_ours(prefix, &aux)?,
                };
                rows.push(SweepRow {
                    estimator: est.name().to_string(),
                    meta_action: d.arm.name().to_string(),
                    n,
                    mean: r.mean,
                    se: r.se,
                });
            }
        }
    }
    Ok(rows)
}

/// Runs both meta-actions on simulated users and tabulates all three
/// estimators at every grid size.
pub fn sample_complexity_sweep(
    sim: &Simulator,
    models: &ItemModels,
    config: &SweepConfig,
) -> Result<Vec<SweepRow>> {
    let n_max = config.n_grid.iter().copied().max().unwrap_or(0);
    let data = collect_meta_action_data(sim, models, config.arms, n_max, config.n_aux, config.window)?;
    sweep_table(&data, &config.n_grid)
}

/// Least-squares slope of `ln y` on `ln x`.
pub fn log_log_slope(points: &[(f64, f64)]) -> Result<f64> {
    if points.len() < 2 || points.iter().any(|&(x, y)| !(x > 0.0 && y > 0.0)) {
        return Err(Error::InvalidArgument(
            "log-log slope needs at least two strictly positive points".into(),
        ));
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / logs.len() as f64;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / logs.len() as f64;
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all x values are equal".into()));
    }
    Ok(sxy / sxx)
}
