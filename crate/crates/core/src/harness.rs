//! End-to-end experiment runs: one pipeline run, beta sweeps, population
//! sweeps and exchange-subset replays. Every entry point is deterministic
//! for a fixed [`RunConfig`].

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::coordination::{build_tree, run_coordination, CoordinationConfig, CostScaling, IterationTrace, Objective};
use crate::error::{DsmError, Result};
use crate::exchange::{replay, run_exchange_phase, AcceptanceRule, Blackboard, ExchangeConfig, ExchangeOutcome};
use crate::generator::{derive_seed, SyntheticConfig};
use crate::io::{load_dataset, save_run, write_atomic};
use crate::metrics::{mean, MetricsReport, Snapshot};
use crate::plan::{self, Population};

/// Environment variable that overrides the run seed.
pub const SEED_ENV: &str = "DSM_SEED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    /// Directory of `agent_<id>.plans` files; synthetic data when absent.
    pub dataset: Option<PathBuf>,
    pub synthetic: SyntheticConfig,
    /// Seed of the synthetic dataset.
    pub data_seed: u64,
    /// Number of agents; defaults to the whole dataset.
    pub agents: Option<usize>,
    pub beta: f64,
    pub iterations: usize,
    /// Seed of the tree shuffle and exchange order.
    pub seed: u64,
    pub repeats: usize,
    pub mode: AcceptanceRule,
    pub tolerance: f64,
    pub scaling: CostScaling,
    pub out: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            dataset: None,
            synthetic: SyntheticConfig::default(),
            data_seed: 0,
            agents: None,
            beta: 0.0,
            iterations: 50,
            seed: 1,
            repeats: 10,
            mode: AcceptanceRule::Literal,
            tolerance: 0.0,
            scaling: CostScaling::default(),
            out: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| DsmError::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Applies `DSM_SEED` if it is set.
    pub fn apply_seed_env(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw
                .trim()
                .parse()
                .map_err(|e| DsmError::InvalidParameter(format!("{SEED_ENV}={raw:?}: {e}")))?;
        }
        Ok(())
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.beta) {
            return Err(DsmError::InvalidParameter(format!("beta {} outside [0, 1]", self.beta)));
        }
        if self.iterations == 0 {
            return Err(DsmError::InvalidParameter("iterations must be at least 1".into()));
        }
        Ok(())
    }

    /// Loads or synthesises the population (all agents on preferred plans).
    pub fn population(&self) -> Result<Population> {
        let mut population = match &self.dataset {
            Some(path) => load_dataset(path, self.agents)?.0,
            None => {
                let synthetic = SyntheticConfig {
                    n: self.agents.unwrap_or(self.synthetic.n),
                    ..self.synthetic.clone()
                };
                synthetic.population(self.beta, self.data_seed)?
            }
        };
        if population.is_empty() {
            return Err(DsmError::EmptyPopulation);
        }
        population.set_beta(self.beta)?;
        Ok(population)
    }

    pub fn coordination(&self) -> CoordinationConfig {
        CoordinationConfig {
            iterations: self.iterations,
            objective: Objective {
                scaling: self.scaling,
                target: None,
            },
        }
    }

    pub fn exchange(&self) -> ExchangeConfig {
        ExchangeConfig {
            rule: self.mode,
            tolerance: self.tolerance,
        }
    }
}

/// Everything produced by one pipeline run.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub config: RunConfig,
    pub trace: IterationTrace,
    pub exchange: ExchangeOutcome,
    pub metrics: MetricsReport,
    /// Tree level of every agent (root = 1).
    pub levels: Vec<usize>,
    /// Population right after coordination.
    pub pre_exchange: Population,
    /// Population after the exchange phase.
    pub population: Population,
}

impl RunReport {
    pub fn inefficiency_delta(&self) -> f64 {
        self.metrics.inefficiency - self.metrics.inefficiency_pre
    }
}

/// Runs coordination then the exchange phase on `population`.
pub fn run_pipeline(config: &RunConfig, mut population: Population) -> Result<RunReport> {
    config.validate()?;
    population.set_beta(config.beta)?;
    let topo = build_tree(population.len(), derive_seed(config.seed, 0))?;
    let trace = run_coordination(&mut population, &topo, &config.coordination())?;

    let pre = Snapshot::of(&population, None)?;
    let pre_exchange = population.clone();
    let mut board = Blackboard::with_tolerance(config.tolerance)?;
    board.sync(&population);
    let exchange = run_exchange_phase(
        &mut population,
        &mut board,
        derive_seed(config.seed, 1),
        &config.exchange(),
    )?;
    let post = Snapshot::of(&population, None)?;
    let metrics = MetricsReport::new(
        &pre,
        &post,
        exchange.stats.advertisers,
        exchange.stats.requests,
        exchange.stats.completed,
    )?;
    Ok(RunReport {
        config: config.clone(),
        trace,
        exchange,
        metrics,
        levels: topo.levels().to_vec(),
        pre_exchange,
        population,
    })
}

/// Load or generate, coordinate, exchange, and save when `config.out` is set.
pub fn cmd_run(config: &RunConfig) -> Result<RunReport> {
    let report = run_pipeline(config, config.population()?)?;
    if let Some(out) = &config.out {
        save_run(
            &report.metrics,
            &report.trace,
            &report.exchange.records,
            &report.config,
            out,
        )?;
        write_agents_csv(&report, &out.join("agents.csv"))?;
    }
    Ok(report)
}

#[derive(Debug, Serialize)]
struct AgentRow {
    agent: usize,
    level: usize,
    comfort_pre: f64,
    comfort_post: f64,
    comfort_gain: f64,
    advertised_slots: usize,
}

/// Per-agent comfort tagged with the agent's tree level.
pub fn write_agents_csv(report: &RunReport, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for (a, agent) in report.pre_exchange.agents().iter().enumerate() {
        let pre = agent.comfort();
        let post = report.metrics.per_agent_comfort[a];
        w.serialize(AgentRow {
            agent: a,
            level: report.levels[a],
            comfort_pre: pre,
            comfort_post: post,
            comfort_gain: report.metrics.comfort_gain[a],
            advertised_slots: agent.mismatched_slots(report.config.tolerance),
        })?;
    }
    let bytes = w.into_inner().map_err(|e| DsmError::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

fn write_rows<T: Serialize>(rows: &[T], path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| DsmError::io(parent, e))?;
    }
    let mut w = csv::Writer::from_writer(Vec::new());
    for row in rows {
        w.serialize(row)?;
    }
    let bytes = w.into_inner().map_err(|e| DsmError::io(path, e.into_error()))?;
    write_atomic(path, &bytes)
}

/// One (beta, repeat) run. The leading columns regenerate it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaRunRow {
    pub beta: f64,
    pub repeat: usize,
    pub seed: u64,
    pub data_seed: u64,
    pub n: usize,
    pub iterations: usize,
    pub mode: AcceptanceRule,
    pub scaling: CostScaling,
    pub trace_non_increasing: bool,
    pub inefficiency_pre: f64,
    pub inefficiency_post: f64,
    /// Whether per-slot global totals were bit-identical across exchanges.
    pub totals_unchanged: bool,
    pub avg_discomfort_pre: f64,
    pub avg_discomfort_post: f64,
    pub unfairness_pre: f64,
    pub unfairness_post: f64,
    pub mean_comfort_pre: f64,
    pub mean_comfort_post: f64,
    pub mean_comfort_gain: f64,
    pub participation_fraction: f64,
    pub positive_gain_fraction: f64,
    pub success_rate: f64,
    pub requests: usize,
    pub exchanges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSummaryRow {
    pub beta: f64,
    pub repeats: usize,
    pub seed: u64,
    pub data_seed: u64,
    pub n: usize,
    pub inefficiency_pre: f64,
    pub inefficiency_post: f64,
    pub unfairness_pre: f64,
    pub unfairness_post: f64,
    pub mean_comfort_pre: f64,
    pub mean_comfort_post: f64,
    pub mean_comfort_gain: f64,
    pub participation_fraction: f64,
    pub positive_gain_fraction: f64,
    pub success_rate: f64,
    pub exchanges: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BetaSweep {
    pub runs: Vec<BetaRunRow>,
    pub summary: Vec<BetaSummaryRow>,
}

fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    seed.wrapping_add(repeat as u64)
}

fn beta_row(report: &RunReport, repeat: usize) -> BetaRunRow {
    let c = &report.config;
    let m = &report.metrics;
    BetaRunRow {
        beta: c.beta,
        repeat,
        seed: c.seed,
        data_seed: c.data_seed,
        n: m.n,
        iterations: c.iterations,
        mode: c.mode,
        scaling: c.scaling,
        trace_non_increasing: report.trace.is_non_increasing(),
        inefficiency_pre: m.inefficiency_pre,
        inefficiency_post: m.inefficiency,
        totals_unchanged: report.pre_exchange.global_response() == report.population.global_response(),
        avg_discomfort_pre: m.avg_discomfort_pre,
        avg_discomfort_post: m.avg_discomfort,
        unfairness_pre: m.unfairness_pre,
        unfairness_post: m.unfairness,
        mean_comfort_pre: m.mean_comfort_pre,
        mean_comfort_post: m.mean_comfort,
        mean_comfort_gain: m.mean_comfort_gain,
        participation_fraction: m.participation_fraction,
        positive_gain_fraction: m.positive_gain_fraction,
        success_rate: m.exchange_success_rate,
        requests: m.requests,
        exchanges: m.exchanges,
    }
}

/// `config.repeats` runs per beta, seeds `config.seed + repeat`.
pub fn cmd_sweep_beta(config: &RunConfig, betas: &[f64]) -> Result<BetaSweep> {
    if let Some(b) = betas.iter().find(|b| !(0.0..=1.0).contains(*b)) {
        return Err(DsmError::InvalidParameter(format!("beta {b} outside [0, 1]")));
    }
    let base = config.population()?;
    let jobs: Vec<(f64, usize)> = betas
        .iter()
        .flat_map(|&b| (0..config.repeats.max(1)).map(move |r| (b, r)))
        .collect();
    let runs = jobs
        .par_iter()
        .map(|&(beta, repeat)| {
            let cfg = RunConfig {
                beta,
                seed: repeat_seed(config.seed, repeat),
                out: None,
                ..config.clone()
            };
            run_pipeline(&cfg, base.clone()).map(|r| beta_row(&r, repeat))
        })
        .collect::<Result<Vec<_>>>()?;

    let summary = betas
        .iter()
        .map(|&beta| {
            let rows: Vec<&BetaRunRow> = runs.iter().filter(|r| r.beta == beta).collect();
            let avg = |f: fn(&BetaRunRow) -> f64| mean(&rows.iter().map(|r| f(r)).collect::<Vec<_>>());
            BetaSummaryRow {
                beta,
                repeats: rows.len(),
                seed: config.seed,
                data_seed: config.data_seed,
                n: base.len(),
                inefficiency_pre: avg(|r| r.inefficiency_pre),
                inefficiency_post: avg(|r| r.inefficiency_post),
                unfairness_pre: avg(|r| r.unfairness_pre),
                unfairness_post: avg(|r| r.unfairness_post),
                mean_comfort_pre: avg(|r| r.mean_comfort_pre),
                mean_comfort_post: avg(|r| r.mean_comfort_post),
                mean_comfort_gain: avg(|r| r.mean_comfort_gain),
                participation_fraction: avg(|r| r.participation_fraction),
                positive_gain_fraction: avg(|r| r.positive_gain_fraction),
                success_rate: avg(|r| r.success_rate),
                exchanges: avg(|r| r.exchanges as f64),
            }
        })
        .collect();

    let sweep = BetaSweep { runs, summary };
    if let Some(out) = &config.out {
        write_rows(&sweep.runs, &out.join("sweep_beta_runs.csv"))?;
        write_rows(&sweep.summary, &out.join("sweep_beta.csv"))?;
    }
    Ok(sweep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationRow {
    pub size: usize,
    pub fraction: f64,
    pub repeat: usize,
    pub seed: u64,
    pub data_seed: u64,
    pub beta: f64,
    pub agents: usize,
    pub mean_comfort_gain: f64,
    pub exchanges: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSummaryRow {
    pub size: usize,
    pub fraction: f64,
    pub repeats: usize,
    pub mean_comfort_gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PopulationSweep {
    pub runs: Vec<PopulationRow>,
    pub summary: Vec<PopulationSummaryRow>,
}

/// For each population size (the first `size` agents of the dataset) and
/// each fraction, draws a seeded random subset of agents and runs the full
/// pipeline on it.
pub fn cmd_sweep_population(config: &RunConfig, sizes: &[usize], fractions: &[f64]) -> Result<PopulationSweep> {
    if let Some(f) = fractions.iter().find(|f| !(**f > 0.0 && **f <= 1.0)) {
        return Err(DsmError::InvalidParameter(format!("fraction {f} outside (0, 1]")));
    }
    let largest = sizes.iter().copied().max().unwrap_or(0);
    let base_cfg = RunConfig {
        agents: Some(largest.max(config.agents.unwrap_or(0))),
        ..config.clone()
    };
    let base = base_cfg.population()?;
    if let Some(s) = sizes.iter().find(|s| **s > base.len() || **s == 0) {
        return Err(DsmError::InvalidParameter(format!(
            "population size {s} not in 1..={}",
            base.len()
        )));
    }

    let mut jobs = Vec::new();
    for &size in sizes {
        for &fraction in fractions {
            for repeat in 0..config.repeats.max(1) {
                jobs.push((size, fraction, repeat));
            }
        }
    }
    let runs = jobs
        .par_iter()
        .map(|&(size, fraction, repeat)| {
            let seed = repeat_seed(config.seed, repeat);
            let count = ((fraction * size as f64).round() as usize).clamp(1, size);
            let stream = (size as u64) << 32 | (fraction * 1e6).round() as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream));
            let mut ids = sample(&mut rng, size, count).into_vec();
            ids.sort_unstable();
            let cfg = RunConfig {
                seed,
                out: None,
                ..config.clone()
            };
            let report = run_pipeline(&cfg, base.subset(&ids)?)?;
            Ok(PopulationRow {
                size,
                fraction,
                repeat,
                seed,
                data_seed: config.data_seed,
                beta: config.beta,
                agents: count,
                mean_comfort_gain: report.metrics.mean_comfort_gain,
                exchanges: report.metrics.exchanges,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summary = Vec::new();
    for &size in sizes {
        for &fraction in fractions {
            let gains: Vec<f64> = runs
                .iter()
                .filter(|r| r.size == size && r.fraction == fraction)
                .map(|r| r.mean_comfort_gain)
                .collect();
            summary.push(PopulationSummaryRow {
                size,
                fraction,
                repeats: gains.len(),
                mean_comfort_gain: mean(&gains),
            });
        }
    }
    let sweep = PopulationSweep { runs, summary };
    if let Some(out) = &config.out {
        write_rows(&sweep.runs, &out.join("sweep_pop_runs.csv"))?;
        write_rows(&sweep.summary, &out.join("sweep_pop.csv"))?;
    }
    Ok(sweep)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetRow {
    pub size: usize,
    pub set: usize,
    pub seed: u64,
    /// Records actually drawn (clamped to the log length).
    pub drawn: usize,
    pub applied: usize,
    pub skipped: usize,
    pub avg_comfort: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetSummaryRow {
    pub size: usize,
    pub sets: usize,
    pub min_comfort: f64,
    pub max_comfort: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubsetAnalysis {
    pub log_len: usize,
    pub pre_comfort: f64,
    pub post_comfort: f64,
    pub rows: Vec<SubsetRow>,
    pub summary: Vec<SubsetSummaryRow>,
}

/// Replays `records` (a subset of an exchange log, in log order) on a copy
/// of `pre_exchange` and returns the mean comfort afterwards.
pub fn replay_comfort(
    pre_exchange: &Population,
    records: &[crate::exchange::ExchangeRecord],
) -> (f64, crate::exchange::ReplayStats) {
    let mut pop = pre_exchange.clone();
    let stats = replay(&mut pop, records);
    (mean(&pop.comforts()), stats)
}

/// Runs the pipeline once, then replays random subsets of its exchange log
/// from the pre-exchange state.
pub fn cmd_exchange_subsets(config: &RunConfig, sizes: &[usize], sets_per_size: usize) -> Result<SubsetAnalysis> {
    let report = run_pipeline(config, config.population()?)?;
    let log = &report.exchange.records;
    let mut rows = Vec::new();
    for &size in sizes {
        let drawn = if size > log.len() {
            log::warn!("subset size {size} exceeds log length {}, clamping", log.len());
            log.len()
        } else {
            size
        };
        for set in 0..sets_per_size {
            let seed = derive_seed(config.seed, ((size as u64) << 16) | set as u64);
            let mut idx = sample(&mut ChaCha8Rng::seed_from_u64(seed), log.len(), drawn).into_vec();
            idx.sort_unstable();
            let subset: Vec<_> = idx.iter().map(|&i| log[i].clone()).collect();
            let (avg_comfort, stats) = replay_comfort(&report.pre_exchange, &subset);
            rows.push(SubsetRow {
                size,
                set,
                seed,
                drawn,
                applied: stats.applied,
                skipped: stats.skipped,
                avg_comfort,
            });
        }
    }
    let summary = sizes
        .iter()
        .map(|&size| {
            let values: Vec<f64> = rows.iter().filter(|r| r.size == size).map(|r| r.avg_comfort).collect();
            let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            SubsetSummaryRow {
                size,
                sets: values.len(),
                min_comfort: lo,
                max_comfort: hi,
                spread: if values.is_empty() { 0.0 } else { hi - lo },
            }
        })
        .collect();
    let analysis = SubsetAnalysis {
        log_len: log.len(),
        pre_comfort: report.metrics.mean_comfort_pre,
        post_comfort: report.metrics.mean_comfort,
        rows,
        summary,
    };
    if let Some(out) = &config.out {
        write_rows(&analysis.rows, &out.join("exchange_subsets_runs.csv"))?;
        write_rows(&analysis.summary, &out.join("exchange_subsets.csv"))?;
    }
    Ok(analysis)
}

/// Writes a synthetic dataset and returns the written files.
pub fn cmd_gen_plans(config: &RunConfig, dir: &Path) -> Result<Vec<PathBuf>> {
    let synthetic = SyntheticConfig {
        n: config.agents.unwrap_or(config.synthetic.n),
        ..config.synthetic.clone()
    };
    let population = synthetic.population(0.0, config.data_seed)?;
    crate::io::write_dataset(&population, dir)
}

/// Largest element-wise change in global totals between two populations.
pub fn totals_drift(a: &Population, b: &Population) -> f64 {
    let ga = a.global_response();
    let gb = b.global_response();
    ga.totals
        .iter()
        .zip(&gb.totals)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Inefficiency of the population's global response (variance form).
pub fn population_inefficiency(p: &Population) -> Result<f64> {
    plan::inefficiency(&p.global_response().totals, None)
}
