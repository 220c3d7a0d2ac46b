//! `stickrec` command-line interface.
//!
//! Every subcommand reads its inputs from files, writes its outputs into
//! `--out`, and is byte-stable for a fixed seed and flags. Exit codes: 0 on
//! success, 2 on configuration errors, 3 on data errors.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use stickrec_core::estimators::{sample_complexity_sweep, SweepConfig};
use stickrec_core::harness::{
    emit_figures_data, run_ab, run_calibration, run_holdback, ExperimentSpec, FigureInputs, Metric,
};
use stickrec_core::io::{
    read_json, read_jsonl, read_trajectories, write_csv, write_json, write_jsonl,
    write_trajectories,
};
use stickrec_core::models::resurfacing::GRID;
use stickrec_core::models::{
    build_click_dataset, build_discovery_datasets, build_resurfacing_tables, fit_stickiness,
    train_clickiness, ClickinessModel, ItemModels, StickinessRecord, StickinessVectors,
};
use stickrec_core::policy_improvement::{direct_pi, logged_from_trajectories, TasteQuantiles};
use stickrec_core::qvalue::{score_pool, PolicyArm};
use stickrec_core::simulator::logging_policy;
use stickrec_core::{
    Context, Error, ItemId, RelationshipState, RewardSpec, SimConfig, Simulator, UserState,
};

#[derive(Debug, Parser)]
#[command(name = "stickrec", version, about = "Habit-aware recommendation simulator and models")]
struct Cli {
    /// Simulator configuration (`key = value` per line).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate users under the logging policy.
    Simulate {
        #[arg(long, default_value_t = 1000)]
        users: usize,
    },
    /// Train the clickiness model.
    TrainShort {
        #[arg(long)]
        data: PathBuf,
    },
    /// Train per-item stickiness vectors.
    TrainStickiness {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1.0)]
        lambda: f64,
        #[arg(long, default_value_t = 60)]
        horizon: u32,
    },
    /// Build resurfacing tables for every pool item.
    BuildResurfacing {
        #[arg(long)]
        data: PathBuf,
    },
    /// Score every pool item for every user state.
    Score {
        #[arg(long)]
        states: PathBuf,
        #[arg(long, default_value = "personalized")]
        arm: PolicyArm,
        #[command(flatten)]
        models: ModelsArg,
    },
    /// Banner A/B test between policy arms.
    AbTest {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[command(flatten)]
        models: ModelsArg,
    },
    /// Shown versus holdback cohorts under the first arm.
    Holdback {
        #[command(flatten)]
        experiment: ExperimentArgs,
        #[command(flatten)]
        models: ModelsArg,
    },
    /// Decile calibration of stickiness on held-out discoveries.
    Calibration {
        #[arg(long, default_value_t = 10_000)]
        heldout: usize,
        #[command(flatten)]
        models: ModelsArg,
    },
    /// Standard errors of the three offline estimators across sample sizes.
    SampleComplexity {
        #[arg(long, value_delimiter = ',', default_value = "1000,10000")]
        grid: Vec<usize>,
        #[arg(long, default_value_t = SweepConfig::default().n_aux)]
        aux: usize,
        #[arg(long, default_value_t = SweepConfig::default().window)]
        window: u32,
        #[arg(long, value_delimiter = ',', default_value = "control,personalized")]
        arms: Vec<PolicyArm>,
        #[command(flatten)]
        models: ModelsArg,
    },
    /// State-aggregated policy improvement from logged trajectories.
    PolicyImprove {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        clusters: usize,
        /// Taste coordinate clustered by quantile.
        #[arg(long, default_value_t = 1)]
        dim: usize,
        #[arg(long, default_value = "binary")]
        reward: RewardSpec,
    },
}

#[derive(Debug, Args)]
struct ModelsArg {
    /// Directory holding `clickiness.json` and `stickiness.json` (default: `--out`).
    #[arg(long)]
    models: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    /// Users per arm.
    #[arg(long, default_value_t = 1000)]
    users: usize,
    #[arg(long, value_delimiter = ',', default_value = "control,personalized")]
    arms: Vec<PolicyArm>,
    #[arg(long, default_value_t = 60)]
    window: u32,
    #[arg(long, value_delimiter = ',')]
    metrics: Option<Vec<Metric>>,
}

impl ExperimentArgs {
    fn spec(&self, seed: u64) -> ExperimentSpec {
        ExperimentSpec {
            arms: self.arms.clone(),
            n_users: self.users,
            outcome_window: self.window,
            metrics: self.metrics.clone().unwrap_or_else(|| Metric::ALL.to_vec()),
            seed,
        }
    }
}

/// A user state line of `states.jsonl`.
#[derive(Debug, Serialize, Deserialize)]
struct StateLine {
    user_id: u64,
    taste: Vec<f64>,
    context: Context,
    relationships: BTreeMap<ItemId, RelationshipState>,
}

impl StateLine {
    fn new(user_id: u64, state: UserState) -> Self {
        Self {
            user_id,
            taste: state.taste,
            context: state.context,
            relationships: state.relationships,
        }
    }

    fn state(&self) -> UserState {
        UserState {
            taste: self.taste.clone(),
            context: self.context,
            relationships: self.relationships.clone(),
        }
    }
}

#[derive(Serialize)]
struct ResurfacingRow {
    item: ItemId,
    cell_i: usize,
    cell_j: usize,
    p_rec: Option<f64>,
    p_norec: Option<f64>,
    v: Option<f64>,
}

#[derive(Serialize)]
struct ScoreRow {
    user_id: u64,
    item_id: ItemId,
    click_p: f64,
    stickiness: f64,
    q: f64,
}

#[derive(Serialize)]
struct QbarRow {
    cluster: usize,
    action: ItemId,
    q: Option<f64>,
    se: Option<f64>,
    count: u64,
}

#[derive(Serialize)]
struct PolicyArtifact {
    clusters: TasteQuantiles,
    /// Greedy item per cluster; `null` when the cluster has no logged data.
    actions: BTreeMap<usize, Option<ItemId>>,
}

fn load_config(cli: &Cli) -> Result<SimConfig> {
    let mut config = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
            SimConfig::from_text(&text)?
        }
        None => SimConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    config.validate()?;
    Ok(config)
}

fn load_models(dir: &Path, sim: &Simulator) -> Result<ItemModels> {
    let clickiness: ClickinessModel = read_json(dir.join("clickiness.json"))?;
    let records: Vec<StickinessRecord> = read_json(dir.join("stickiness.json"))?;
    let stickiness = StickinessVectors::from_records(&records)?;
    Ok(ItemModels::new(clickiness, stickiness, &sim.catalogue.public_info()))
}

fn run(cli: Cli) -> Result<()> {
    let config = load_config(&cli)?;
    let sim = Simulator::new(config)?;
    let out = cli.out.as_path();
    let models_dir = |arg: &ModelsArg| arg.models.clone().unwrap_or_else(|| out.to_path_buf());
    match &cli.command {
        Command::Simulate { users } => {
            let policy = logging_policy(&sim.config)?;
            let cohort = sim.simulate_cohort(&policy, *users);
            write_trajectories(out.join("trajectories.jsonl"), cohort.iter().map(|u| &u.trajectory))?;
            let states: Vec<StateLine> = cohort
                .into_iter()
                .map(|u| StateLine::new(u.trajectory.user_id, u.final_state))
                .collect();
            write_jsonl(out.join("states.jsonl"), &states)?;
        }
        Command::TrainShort { data } => {
            let trajectories = read_trajectories(data)?;
            let examples = build_click_dataset(&trajectories, &sim.catalogue.public_info());
            let model = train_clickiness(&examples)?;
            write_json(out.join("clickiness.json"), &model)?;
        }
        Command::TrainStickiness { data, lambda, horizon } => {
            let trajectories = read_trajectories(data)?;
            let datasets = build_discovery_datasets(&trajectories, *horizon);
            let stickiness = fit_stickiness(
                &datasets,
                sim.catalogue.public_info().iter().map(|it| it.item_id),
                *lambda,
                sim.config.d,
            )?;
            write_json(out.join("stickiness.json"), &stickiness.to_records())?;
        }
        Command::BuildResurfacing { data } => {
            let trajectories = read_trajectories(data)?;
            let mut rows = Vec::new();
            for a in sim.catalogue.pool() {
                let tables = build_resurfacing_tables(&trajectories, a);
                for i in 0..GRID {
                    for j in 0..GRID {
                        rows.push(ResurfacingRow {
                            item: a,
                            cell_i: i,
                            cell_j: j,
                            p_rec: tables.p_rec(i, j),
                            p_norec: tables.p_norec(i, j),
                            v: tables.v(i, j),
                        });
                    }
                }
            }
            write_csv(
                out.join("resurfacing.csv"),
                &["item", "cell_i", "cell_j", "p_rec", "p_norec", "v"],
                &rows,
            )?;
        }
        Command::Score { states, arm, models } => {
            let models = load_models(&models_dir(models), &sim)?;
            let states: Vec<StateLine> = read_jsonl(states)?;
            let pool: Vec<ItemId> = sim.catalogue.pool().collect();
            let mut rows = Vec::new();
            for line in &states {
                let state = line.state();
                if state.taste.len() != sim.config.d {
                    return Err(Error::Data(format!(
                        "user {}: taste has dimension {}, expected {}",
                        line.user_id,
                        state.taste.len(),
                        sim.config.d
                    ))
                    .into());
                }
                for s in score_pool(*arm, &state, &pool, &models)? {
                    rows.push(ScoreRow {
                        user_id: line.user_id,
                        item_id: s.item,
                        click_p: s.click_p,
                        stickiness: s.stickiness,
                        q: s.q,
                    });
                }
            }
            write_csv(
                out.join("scores.csv"),
                &["user_id", "item_id", "click_p", "stickiness", "q"],
                &rows,
            )?;
        }
        Command::AbTest { experiment, models } => {
            let spec = experiment.spec(sim.config.seed);
            spec.validate(&sim)?;
            let models = load_models(&models_dir(models), &sim)?;
            let report = run_ab(&spec, &sim, &models)?;
            write_json(out.join("ab_report.json"), &report)?;
            emit_figures_data(
                out,
                FigureInputs {
                    ab: Some(&report),
                    ..Default::default()
                },
            )?;
        }
        Command::Holdback { experiment, models } => {
            let spec = experiment.spec(sim.config.seed);
            spec.validate(&sim)?;
            let models = load_models(&models_dir(models), &sim)?;
            let report = run_holdback(&spec, &sim, &models)?;
            write_json(out.join("holdback.json"), &report)?;
        }
        Command::Calibration { heldout, models } => {
            let models = load_models(&models_dir(models), &sim)?;
            let table = run_calibration(&models, &sim, *heldout)?;
            write_json(out.join("calibration.json"), &table)?;
            emit_figures_data(
                out,
                FigureInputs {
                    calibration: Some(&table),
                    ..Default::default()
                },
            )?;
        }
        Command::SampleComplexity { grid, aux, window, arms, models } => {
            let arms: [PolicyArm; 2] = arms.as_slice().try_into().map_err(|_| {
                Error::Config(format!("sample-complexity needs exactly two arms, got {}", arms.len()))
            })?;
            let sweep = SweepConfig {
                n_grid: grid.clone(),
                n_aux: *aux,
                window: *window,
                arms,
            };
            let models = load_models(&models_dir(models), &sim)?;
            let rows = sample_complexity_sweep(&sim, &models, &sweep)?;
            emit_figures_data(
                out,
                FigureInputs {
                    sweep: Some(&rows),
                    ..Default::default()
                },
            )?;
        }
        Command::PolicyImprove { data, clusters, dim, reward } => {
            let trajectories = read_trajectories(data)?;
            let quantiles = TasteQuantiles::fit_trajectories(&trajectories, *clusters, *dim)?;
            let episodes = logged_from_trajectories(&trajectories, &quantiles, *reward);
            let actions: Vec<ItemId> = sim.catalogue.pool().collect();
            let (q, greedy) = direct_pi(&episodes, quantiles.m(), &actions)?;
            let mut rows = Vec::new();
            for i in 0..q.m() {
                for (j, &a) in q.actions.iter().enumerate() {
                    let present = q.counts[i][j] > 0;
                    rows.push(QbarRow {
                        cluster: i,
                        action: a,
                        q: present.then(|| q.table[i][j]),
                        se: present.then(|| q.se[i][j]),
                        count: q.counts[i][j],
                    });
                }
            }
            write_csv(out.join("qbar.csv"), &["cluster", "action", "q", "se", "count"], &rows)?;
            let artifact = PolicyArtifact {
                clusters: quantiles,
                actions: greedy.into_iter().enumerate().collect(),
            };
            write_json(out.join("policy.json"), &artifact)?;
        }
    }
    Ok(())
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Config(_) | Error::InvalidArgument(_)) => 2,
        _ => 3,
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(exit_code(&err))
        }
    }
}
