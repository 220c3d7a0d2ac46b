//! Experiment orchestration on the simulator: randomized A/B tests of the
//! banner arms, holdback cohorts, calibration tables and the CSV files
//! behind each figure.
//!
//! Every user's outcome under a banner is a deterministic function of the
//! user id and the promoted item, because all randomness is keyed by
//! (seed, stream, user, day, item). Users whose arms pick the same item
//! therefore have identical outcomes in every arm, which makes the paired
//! all-user effect exactly the impacted-user effect times the impacted share.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{consumption, ItemId};
use crate::error::{Error, Result};
use crate::estimators::{SweepRow, DEFAULT_WINDOW};
use crate::io::write_csv;
use crate::models::{build_discovery_datasets, predict_stickiness, DiscoveryRecord, ItemModels};
use crate::qvalue::{ArmPolicy, Exposure, PolicyArm};
use crate::rng::{hash_uniform, stream};
use crate::simulator::{logging_policy, PolicyView, StarAction, Simulator};
use crate::stats::{mean_se, quantile, EstimatorResult};

/// Weeks covered by the weekly consumption series.
pub const WEEKS: usize = 9;
/// Window, active days and minutes that make a discovery "lasting".
pub const LASTING_WINDOW: u32 = 42;
pub const LASTING_ACTIVE_DAYS: usize = 3;
pub const LASTING_MINUTES: f64 = 120.0;

const AB_USER_OFFSET: u64 = 1 << 42;
const HOLDBACK_USER_OFFSET: u64 = 3 << 42;
const CALIBRATION_USER_OFFSET: u64 = 1 << 43;
const CALIBRATION_CHUNK: u64 = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    FirstStreams,
    ActiveDays60,
    Minutes60,
    WeeklyConsumption,
    LastingDiscovery,
}

impl Metric {
    pub const ALL: [Metric; 5] = [
        Metric::FirstStreams,
        Metric::ActiveDays60,
        Metric::Minutes60,
        Metric::WeeklyConsumption,
        Metric::LastingDiscovery,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Metric::FirstStreams => "first_streams",
            Metric::ActiveDays60 => "active_days_60",
            Metric::Minutes60 => "minutes_60",
            Metric::WeeklyConsumption => "weekly_consumption",
            Metric::LastingDiscovery => "lasting_discovery",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Metric::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown metric '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub arms: Vec<PolicyArm>,
    /// Users per arm.
    pub n_users: usize,
    pub outcome_window: u32,
    pub metrics: Vec<Metric>,
    pub seed: u64,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            arms: vec![PolicyArm::Control, PolicyArm::Personalized],
            n_users: 1000,
            outcome_window: DEFAULT_WINDOW,
            metrics: Metric::ALL.to_vec(),
            seed: 42,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self, sim: &Simulator) -> Result<()> {
        if self.arms.is_empty() {
            return Err(Error::Config("experiment needs at least one arm".into()));
        }
        if !self.arms.contains(&PolicyArm::Control) {
            return Err(Error::Config("experiment needs a control arm".into()));
        }
        if self.outcome_window == 0 || self.outcome_window > sim.config.max_days {
            return Err(Error::Config(format!(
                "outcome window {} must lie in 1..={}",
                self.outcome_window, sim.config.max_days
            )));
        }
        if self.metrics.is_empty() {
            return Err(Error::Config("experiment needs at least one metric".into()));
        }
        Ok(())
    }

    fn horizon(&self) -> u32 {
        self.outcome_window.max(7 * WEEKS as u32)
    }
}

/// Outcomes of one user under one banner action.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserOutcome {
    /// Indexed by [`Metric`] order.
    pub metrics: [f64; 5],
    /// Minutes of all listening per week.
    pub weekly: [f64; WEEKS],
}

/// Simulates a new user with `action` on day 0 and no promotions after,
/// for at most `horizon` days of the user's lifetime.
pub fn banner_outcome(sim: &Simulator, user_id: u64, action: StarAction, window: u32, horizon: u32) -> UserOutcome {
    let lifetime = sim.lifetime(user_id).min(horizon);
    let mut run = sim.start_user_with_lifetime(user_id, lifetime);
    run.step_with(action);
    while run.step_with(StarAction::Idle).is_some() {}
    let item = action.item();
    let item_minutes: Vec<f64> = run
        .days
        .iter()
        .map(|d| item.map_or(0.0, |a| consumption(d, a) / 60.0))
        .collect();
    let in_window = &item_minutes[..item_minutes.len().min(window as usize)];
    let active = in_window.iter().filter(|&&m| m > 0.0).count();
    let lasting = &item_minutes[..item_minutes.len().min(LASTING_WINDOW as usize)];
    let lasting_days = lasting.iter().filter(|&&m| m > 0.0).count();
    let lasting_minutes: f64 = lasting.iter().sum();
    let mut weekly = [0.0; WEEKS];
    for (t, d) in run.days.iter().enumerate().take(7 * WEEKS) {
        weekly[t / 7] += d.engagements.iter().sum::<f64>() / 60.0;
    }
    let mut metrics = [0.0; 5];
    metrics[Metric::FirstStreams.index()] = (active > 0) as u8 as f64;
    metrics[Metric::ActiveDays60.index()] = active as f64;
    metrics[Metric::Minutes60.index()] = in_window.iter().sum();
    metrics[Metric::WeeklyConsumption.index()] = weekly.iter().sum::<f64>() / WEEKS as f64;
    metrics[Metric::LastingDiscovery.index()] =
        (lasting_days >= LASTING_ACTIVE_DAYS && lasting_minutes >= LASTING_MINUTES) as u8 as f64;
    UserOutcome { metrics, weekly }
}

/// Banner item each arm would promote to a new user, from the day-0 state.
fn banner_picks(sim: &Simulator, models: &ItemModels, arms: &[PolicyArm], user_id: u64) -> Vec<Option<ItemId>> {
    let (user, _) = sim.spawn_user(user_id);
    let view = PolicyView {
        user_id,
        day: 0,
        user: &user,
        catalogue: &sim.catalogue,
    };
    arms.iter()
        .map(|&arm| ArmPolicy::new(arm, Exposure::Banner, models).pick(&view))
        .collect()
}

/// Arm of `user_id`: the arm with the smallest hash draw. Appending arms only
/// moves users into the new arms.
pub fn assign_arm(seed: u64, user_id: u64, n_arms: usize) -> usize {
    (0..n_arms)
        .map(|j| (hash_uniform(seed, &[stream::ARM, user_id, j as u64]), j))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .map_or(0, |(_, j)| j)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub metric: Metric,
    pub mean: f64,
    pub se: f64,
    pub p50: f64,
    pub p75: f64,
    pub p90: f64,
    pub p99: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmSummary {
    pub arm: PolicyArm,
    pub n_users: usize,
    pub metrics: Vec<MetricSummary>,
    /// Mean minutes per week, weeks `1..=WEEKS`.
    pub weekly: Vec<EstimatorResult>,
}

/// Difference of means with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Effect {
    pub delta: f64,
    pub se: f64,
    pub n: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TreatmentEffect {
    pub arm: PolicyArm,
    pub metric: Metric,
    /// Share of all experiment users for whom this arm and control differ.
    pub impacted_fraction: f64,
    /// Randomized comparison among impacted users of this arm and of control.
    pub impacted: Effect,
    /// Control mean among impacted control users.
    pub control_impacted_mean: f64,
    /// `impacted.delta / control_impacted_mean`.
    pub relative: f64,
    /// Paired (counterfactual) effect over impacted users.
    pub paired_impacted: Effect,
    /// Paired effect over all users; equals `paired_impacted.delta ·
    /// impacted_fraction` up to rounding.
    pub all_users: Effect,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub spec: ExperimentSpec,
    pub arms: Vec<ArmSummary>,
    pub effects: Vec<TreatmentEffect>,
}

fn summarize(xs: &[f64]) -> EstimatorResult {
    match xs.len() {
        0 => EstimatorResult { mean: 0.0, se: 0.0, n: 0 },
        1 => EstimatorResult { mean: xs[0], se: 0.0, n: 1 },
        _ => mean_se(xs).expect("at least two samples"),
    }
}

fn two_sample(treat: &[f64], control: &[f64]) -> Effect {
    let (a, b) = (summarize(treat), summarize(control));
    if a.n == 0 || b.n == 0 {
        return Effect { delta: 0.0, se: 0.0, n: a.n + b.n };
    }
    Effect {
        delta: a.mean - b.mean,
        se: (a.se * a.se + b.se * b.se).sqrt(),
        n: a.n + b.n,
    }
}

fn paired(diffs: &[f64], n_total: usize) -> Effect {
    if n_total == 0 {
        return Effect { delta: 0.0, se: 0.0, n: 0 };
    }
    let n = n_total as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let ss: f64 = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>()
        + (n_total - diffs.len()) as f64 * mean * mean;
    let se = if n_total > 1 { (ss / (n - 1.0) / n).sqrt() } else { 0.0 };
    Effect { delta: mean, se, n: n_total }
}

struct AbUser {
    arm: usize,
    picks: Vec<Option<ItemId>>,
    outcomes: Vec<UserOutcome>,
}

/// Randomized A/B test of banner arms on new users.
pub fn run_ab(spec: &ExperimentSpec, sim: &Simulator, models: &ItemModels) -> Result<MetricReport> {
    spec.validate(sim)?;
    let k = spec.arms.len();
    let n_total = spec.n_users * k;
    let horizon = spec.horizon();
    let users: Vec<AbUser> = (0..n_total as u64)
        .into_par_iter()
        .map(|i| {
            let id = AB_USER_OFFSET + i;
            let picks = banner_picks(sim, models, &spec.arms, id);
            let mut cache: BTreeMap<Option<ItemId>, UserOutcome> = BTreeMap::new();
            let outcomes = picks
                .iter()
                .map(|&p| {
                    *cache.entry(p).or_insert_with(|| {
                        let action = p.map_or(StarAction::Idle, StarAction::Show);
                        banner_outcome(sim, id, action, spec.outcome_window, horizon)
                    })
                })
                .collect();
            AbUser {
                arm: assign_arm(spec.seed, id, k),
                picks,
                outcomes,
            }
        })
        .collect();

    let arms = spec
        .arms
        .iter()
        .enumerate()
        .map(|(j, &arm)| {
            let members: Vec<&AbUser> = users.iter().filter(|u| u.arm == j).collect();
            let metrics = spec
                .metrics
                .iter()
                .map(|&m| {
                    let mut xs: Vec<f64> = members.iter().map(|u| u.outcomes[j].metrics[m.index()]).collect();
                    let s = summarize(&xs);
                    xs.sort_by(f64::total_cmp);
                    let q = |p: f64| if xs.is_empty() { 0.0 } else { quantile(&xs, p) };
                    MetricSummary {
                        metric: m,
                        mean: s.mean,
                        se: s.se,
                        p50: q(0.5),
                        p75: q(0.75),
                        p90: q(0.9),
                        p99: q(0.99),
                    }
                })
                .collect();
            let weekly = (0..WEEKS)
                .map(|w| summarize(&members.iter().map(|u| u.outcomes[j].weekly[w]).collect::<Vec<_>>()))
                .collect();
            ArmSummary {
                arm,
                n_users: members.len(),
                metrics,
                weekly,
            }
        })
        .collect();

    if users.is_empty() {
        return Ok(MetricReport {
            spec: spec.clone(),
            arms,
            effects: Vec::new(),
        });
    }
    let control = spec
        .arms
        .iter()
        .position(|&a| a == PolicyArm::Control)
        .expect("validated");
    let mut effects = Vec::new();
    for (j, &arm) in spec.arms.iter().enumerate() {
        if j == control {
            continue;
        }
        let impacted = |u: &AbUser| u.picks[j] != u.picks[control];
        let n_impacted = users.iter().filter(|u| impacted(u)).count();
        let fraction = if users.is_empty() { 0.0 } else { n_impacted as f64 / users.len() as f64 };
        for &m in &spec.metrics {
            let value = |u: &AbUser, a: usize| u.outcomes[a].metrics[m.index()];
            let treat: Vec<f64> = users.iter().filter(|u| u.arm == j && impacted(u)).map(|u| value(u, j)).collect();
            let ctrl: Vec<f64> = users
                .iter()
                .filter(|u| u.arm == control && impacted(u))
                .map(|u| value(u, control))
                .collect();
            let diffs: Vec<f64> = users.iter().map(|u| value(u, j) - value(u, control)).collect();
            let impacted_diffs: Vec<f64> = users
                .iter()
                .zip(&diffs)
                .filter(|(u, _)| impacted(u))
                .map(|(_, d)| *d)
                .collect();
            let randomized = two_sample(&treat, &ctrl);
            let control_mean = summarize(&ctrl).mean;
            let paired_impacted = paired(&impacted_diffs, impacted_diffs.len());
            let all_users = paired(&diffs, diffs.len());
            effects.push(TreatmentEffect {
                arm,
                metric: m,
                impacted_fraction: fraction,
                impacted: randomized,
                control_impacted_mean: control_mean,
                relative: if control_mean != 0.0 { randomized.delta / control_mean } else { 0.0 },
                paired_impacted,
                all_users,
            });
        }
    }
    Ok(MetricReport {
        spec: spec.clone(),
        arms,
        effects,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldbackReport {
    pub arm: PolicyArm,
    pub n_shown: usize,
    pub n_held: usize,
    /// Users for whom a recommendation was generated.
    pub targeted_shown: usize,
    pub targeted_held: usize,
    /// Two-proportion z statistic of the targeting rates.
    pub targeting_z: f64,
    /// Share of cohort users who listened to their recommended item.
    pub discovery_shown: EstimatorResult,
    pub discovery_held: EstimatorResult,
    /// `discovery_shown / discovery_held` with a delta-method SE.
    pub ratio: f64,
    pub ratio_se: f64,
}

/// Shown versus holdback cohorts under the first arm of `spec`. Both cohorts
/// get their recommendation computed; the holdback cohort never sees it.
pub fn run_holdback(spec: &ExperimentSpec, sim: &Simulator, models: &ItemModels) -> Result<HoldbackReport> {
    spec.validate(sim)?;
    let arm = spec.arms[0];
    let rows: Vec<(bool, bool, f64)> = (0..2 * spec.n_users as u64)
        .into_par_iter()
        .map(|i| {
            let id = HOLDBACK_USER_OFFSET + i;
            let held = hash_uniform(spec.seed, &[stream::HOLDBACK, id]) < 0.5;
            let pick = banner_picks(sim, models, &[arm], id)[0];
            let action = match pick {
                Some(a) if held => StarAction::Hold(a),
                Some(a) => StarAction::Show(a),
                None => StarAction::Idle,
            };
            let out = banner_outcome(sim, id, action, spec.outcome_window, spec.outcome_window);
            (held, pick.is_some(), out.metrics[Metric::FirstStreams.index()])
        })
        .collect();
    let cohort = |held: bool| -> (usize, usize, Vec<f64>) {
        let members: Vec<&(bool, bool, f64)> = rows.iter().filter(|r| r.0 == held).collect();
        let targeted = members.iter().filter(|r| r.1).count();
        (members.len(), targeted, members.iter().map(|r| r.2).collect())
    };
    let (n_shown, targeted_shown, ys) = cohort(false);
    let (n_held, targeted_held, yh) = cohort(true);
    let (ds, dh) = (summarize(&ys), summarize(&yh));
    let rate = |t: usize, n: usize| if n == 0 { 0.0 } else { t as f64 / n as f64 };
    let (ps, ph) = (rate(targeted_shown, n_shown), rate(targeted_held, n_held));
    let pooled = rate(targeted_shown + targeted_held, n_shown + n_held);
    let var = pooled * (1.0 - pooled) * (1.0 / n_shown.max(1) as f64 + 1.0 / n_held.max(1) as f64);
    let targeting_z = if var > 0.0 { (ps - ph) / var.sqrt() } else { 0.0 };
    let (ratio, ratio_se) = if dh.mean > 0.0 {
        let r = ds.mean / dh.mean;
        let rel = ((ds.se / ds.mean.max(f64::MIN_POSITIVE)).powi(2) + (dh.se / dh.mean).powi(2)).sqrt();
        (r, r * rel)
    } else {
        (f64::INFINITY, f64::INFINITY)
    };
    Ok(HoldbackReport {
        arm,
        n_shown,
        n_held,
        targeted_shown,
        targeted_held,
        targeting_z,
        discovery_shown: ds,
        discovery_held: dh,
        ratio,
        ratio_se,
    })
}

/// Anything that predicts the stickiness of a discovery.
pub trait StickinessPredictor: Sync {
    fn predict(&self, item: ItemId, taste: &[f64]) -> f64;
}

impl StickinessPredictor for ItemModels {
    fn predict(&self, item: ItemId, taste: &[f64]) -> f64 {
        predict_stickiness(taste, self.stickiness.theta(item)).unwrap_or(f64::NAN)
    }
}

/// Predicts the same value for every discovery.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConstantPredictor(pub f64);

impl StickinessPredictor for ConstantPredictor {
    fn predict(&self, _item: ItemId, _taste: &[f64]) -> f64 {
        self.0
    }
}

impl<F> StickinessPredictor for F
where
    F: Fn(ItemId, &[f64]) -> f64 + Sync,
{
    fn predict(&self, item: ItemId, taste: &[f64]) -> f64 {
        self(item, taste)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CalibrationBin {
    pub bin: usize,
    pub predicted: f64,
    pub realized: f64,
    pub realized_se: f64,
    pub count: usize,
}

impl CalibrationBin {
    pub fn relative_error(&self) -> f64 {
        (self.realized - self.predicted).abs() / self.predicted.abs()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationTable {
    pub bins: Vec<CalibrationBin>,
}

impl CalibrationTable {
    /// Bins by prediction deciles. Ties share a bin, so a constant predictor
    /// yields a single bin; empty bins are dropped.
    pub fn from_pairs(pairs: &[(f64, f64)], n_bins: usize) -> Self {
        if pairs.is_empty() || n_bins == 0 {
            return Self { bins: Vec::new() };
        }
        let mut preds: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        preds.sort_by(f64::total_cmp);
        let edges: Vec<f64> = (1..n_bins).map(|k| quantile(&preds, k as f64 / n_bins as f64)).collect();
        let mut grouped: Vec<Vec<(f64, f64)>> = vec![Vec::new(); n_bins];
        for &(p, r) in pairs {
            grouped[edges.iter().filter(|&&e| p > e).count()].push((p, r));
        }
        let bins = grouped
            .into_iter()
            .enumerate()
            .filter(|(_, g)| !g.is_empty())
            .map(|(bin, g)| {
                let realized = summarize(&g.iter().map(|x| x.1).collect::<Vec<_>>());
                CalibrationBin {
                    bin,
                    predicted: g.iter().map(|x| x.0).sum::<f64>() / g.len() as f64,
                    realized: realized.mean,
                    realized_se: realized.se,
                    count: g.len(),
                }
            })
            .collect();
        Self { bins }
    }

    pub fn max_relative_error(&self) -> f64 {
        self.bins.iter().map(CalibrationBin::relative_error).fold(0.0, f64::max)
    }

    /// Realized means never decrease from one bin to the next.
    pub fn is_monotone(&self) -> bool {
        self.bins.windows(2).all(|w| w[1].realized >= w[0].realized)
    }
}

/// Pool-item discoveries of held-out users logged under the incumbent, in
/// user order, until `n` have been collected.
pub fn heldout_discoveries(sim: &Simulator, n: usize, horizon: u32) -> Result<Vec<(ItemId, DiscoveryRecord)>> {
    let policy = logging_policy(&sim.config)?;
    let mut out = Vec::with_capacity(n);
    let mut next = CALIBRATION_USER_OFFSET;
    while out.len() < n {
        let chunk: Vec<Vec<(ItemId, DiscoveryRecord)>> = (next..next + CALIBRATION_CHUNK)
            .into_par_iter()
            .map(|id| {
                let traj = sim.simulate_user(&policy, id).trajectory;
                build_discovery_datasets(std::slice::from_ref(&traj), horizon)
                    .into_iter()
                    .filter(|(a, _)| sim.catalogue.in_pool(*a))
                    .flat_map(|(a, recs)| recs.into_iter().map(move |r| (a, r)))
                    .collect()
            })
            .collect();
        out.extend(chunk.into_iter().flatten().take(n - out.len()));
        next += CALIBRATION_CHUNK;
        if out.is_empty() && next - CALIBRATION_USER_OFFSET >= 64 * CALIBRATION_CHUNK {
            return Err(Error::Degenerate("held-out users produce no discoveries".into()));
        }
    }
    Ok(out)
}

/// Decile calibration of `predictor` on `n` held-out discoveries.
pub fn run_calibration(
    predictor: &dyn StickinessPredictor,
    sim: &Simulator,
    n: usize,
) -> Result<CalibrationTable> {
    let records = heldout_discoveries(sim, n, DEFAULT_WINDOW)?;
    let pairs: Vec<(f64, f64)> = records
        .iter()
        .map(|(a, r)| (predictor.predict(*a, &r.u), r.v_hat as f64))
        .collect();
    if pairs.iter().any(|p| !p.0.is_finite()) {
        return Err(Error::Data("predictor returned a non-finite value".into()));
    }
    Ok(CalibrationTable::from_pairs(&pairs, 10))
}

#[derive(Serialize)]
struct ImpactedRow {
    arm: PolicyArm,
    metric: Metric,
    control_mean: f64,
    delta: f64,
    se: f64,
    relative: f64,
    impacted_fraction: f64,
}

#[derive(Serialize)]
struct AllUserRow {
    arm: PolicyArm,
    metric: Metric,
    impacted_fraction: f64,
    delta: f64,
    se: f64,
    relative: f64,
}

#[derive(Serialize)]
struct WeeklyRow {
    arm: PolicyArm,
    week: usize,
    mean: f64,
    se: f64,
}

/// Figure data that [`emit_figures_data`] writes.
#[derive(Debug, Clone, Copy, Default)]
pub struct FigureInputs<'a> {
    pub ab: Option<&'a MetricReport>,
    pub calibration: Option<&'a CalibrationTable>,
    pub sweep: Option<&'a [SweepRow]>,
}

/// Writes `fig4a.csv` (impacted-user effects), `fig4b.csv` (all-user effects
/// relative to control), `fig4c.csv` (calibration), `fig5b.csv` (weekly
/// consumption) and `fig8.csv` (estimator sweep) into `dir`, for the inputs
/// that are present. Empty inputs give header-only files.
pub fn emit_figures_data(dir: impl AsRef<Path>, inputs: FigureInputs<'_>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let effects = inputs.ab.map_or(&[][..], |r| r.effects.as_slice());
    let impacted: Vec<ImpactedRow> = effects
        .iter()
        .map(|e| ImpactedRow {
            arm: e.arm,
            metric: e.metric,
            control_mean: e.control_impacted_mean,
            delta: e.impacted.delta,
            se: e.impacted.se,
            relative: e.relative,
            impacted_fraction: e.impacted_fraction,
        })
        .collect();
    let control_means: BTreeMap<Metric, f64> = inputs
        .ab
        .and_then(|r| r.arms.iter().find(|a| a.arm == PolicyArm::Control))
        .map(|a| a.metrics.iter().map(|m| (m.metric, m.mean)).collect())
        .unwrap_or_default();
    let all_users: Vec<AllUserRow> = effects
        .iter()
        .map(|e| {
            let base = control_means.get(&e.metric).copied().unwrap_or(0.0);
            AllUserRow {
                arm: e.arm,
                metric: e.metric,
                impacted_fraction: e.impacted_fraction,
                delta: e.all_users.delta,
                se: e.all_users.se,
                relative: if base != 0.0 { e.all_users.delta / base } else { 0.0 },
            }
        })
        .collect();
    let weekly: Vec<WeeklyRow> = inputs
        .ab
        .map(|r| {
            r.arms
                .iter()
                .flat_map(|a| {
                    a.weekly.iter().enumerate().map(move |(w, s)| WeeklyRow {
                        arm: a.arm,
                        week: w + 1,
                        mean: s.mean,
                        se: s.se,
                    })
                })
                .collect()
        })
        .unwrap_or_default();
    let calibration = inputs.calibration.map_or(&[][..], |c| c.bins.as_slice());
    let sweep = inputs.sweep.unwrap_or(&[]);

    let mut written = Vec::new();
    let mut emit = |name: &str, header: &[&str], write: &dyn Fn(&Path, &[&str]) -> Result<()>| -> Result<()> {
        let path = dir.join(name);
        write(&path, header)?;
        written.push(path);
        Ok(())
    };
    if inputs.ab.is_some() {
        emit(
            "fig4a.csv",
            &["arm", "metric", "control_mean", "delta", "se", "relative", "impacted_fraction"],
            &|p, h| write_csv(p, h, &impacted),
        )?;
        emit(
            "fig4b.csv",
            &["arm", "metric", "impacted_fraction", "delta", "se", "relative"],
            &|p, h| write_csv(p, h, &all_users),
        )?;
    }
    if inputs.calibration.is_some() {
        emit(
            "fig4c.csv",
            &["bin", "predicted", "realized", "realized_se", "count"],
            &|p, h| write_csv(p, h, calibration),
        )?;
    }
    if inputs.ab.is_some() {
        emit("fig5b.csv", &["arm", "week", "mean", "se"], &|p, h| write_csv(p, h, &weekly))?;
    }
    if inputs.sweep.is_some() {
        emit(
            "fig8.csv",
            &["estimator", "meta_action", "n", "mean", "se"],
            &|p, h| write_csv(p, h, sweep),
        )?;
    }
    Ok(written)
}
