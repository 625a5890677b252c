//! Population-level metrics: average discomfort, unfairness, comfort gain.

use serde::{Deserialize, Serialize};

use crate::error::{DsmError, Result};
use crate::plan::{inefficiency, Population};

/// Root-mean-square deviation of selected from preferred values over every
/// agent and slot. Unlike [`crate::plan::discomfort`] this is not normalised
/// per agent.
pub fn average_discomfort(population: &Population) -> Result<f64> {
    if population.is_empty() {
        return Err(DsmError::EmptyPopulation);
    }
    let mut sum = 0.0;
    for agent in population.agents() {
        for (s, p) in agent.selected().slots().iter().zip(agent.preferred().slots()) {
            sum += (s - p) * (s - p);
        }
    }
    let cells = (population.len() * population.d()) as f64;
    Ok((sum / cells).sqrt())
}

/// Population standard deviation (divisor n) of per-agent discomfort.
pub fn unfairness(discomforts: &[f64]) -> Result<f64> {
    if discomforts.is_empty() {
        return Err(DsmError::EmptyPopulation);
    }
    let n = discomforts.len() as f64;
    let mean = discomforts.iter().sum::<f64>() / n;
    let var = discomforts.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    Ok(var.sqrt())
}

pub fn comfort_gain(before: &[f64], after: &[f64]) -> Result<Vec<f64>> {
    if before.len() != after.len() {
        return Err(DsmError::DimensionMismatch {
            expected: before.len(),
            got: after.len(),
        });
    }
    Ok(after.iter().zip(before).map(|(a, b)| a - b).collect())
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        0.0
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

/// Metrics of one population state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub avg_discomfort: f64,
    pub unfairness: f64,
    pub inefficiency: f64,
    pub mean_comfort: f64,
    pub per_agent_comfort: Vec<f64>,
    pub per_agent_discomfort: Vec<f64>,
}

impl Snapshot {
    pub fn of(population: &Population, target: Option<&[f64]>) -> Result<Self> {
        let discomforts = population.discomforts();
        let comforts = population.comforts();
        Ok(Snapshot {
            avg_discomfort: average_discomfort(population)?,
            unfairness: unfairness(&discomforts)?,
            inefficiency: inefficiency(&population.global_response().totals, target)?,
            mean_comfort: mean(&comforts),
            per_agent_comfort: comforts,
            per_agent_discomfort: discomforts,
        })
    }
}

/// Per-run metrics bundle covering the exchange phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n: usize,
    pub avg_discomfort_pre: f64,
    pub avg_discomfort: f64,
    pub unfairness_pre: f64,
    pub unfairness: f64,
    pub inefficiency_pre: f64,
    pub inefficiency: f64,
    pub mean_comfort_pre: f64,
    pub mean_comfort: f64,
    pub mean_comfort_gain: f64,
    /// Share of agents that advertised at least one slot.
    pub participation_fraction: f64,
    /// Share of agents whose comfort strictly increased.
    pub positive_gain_fraction: f64,
    pub exchange_success_rate: f64,
    pub exchanges: usize,
    pub requests: usize,
    pub per_agent_comfort: Vec<f64>,
    pub comfort_gain: Vec<f64>,
}

impl MetricsReport {
    pub fn new(
        pre: &Snapshot,
        post: &Snapshot,
        advertisers: usize,
        requests: usize,
        exchanges: usize,
    ) -> Result<Self> {
        let gain = comfort_gain(&pre.per_agent_comfort, &post.per_agent_comfort)?;
        let n = gain.len();
        let frac = |count: usize| if n == 0 { 0.0 } else { count as f64 / n as f64 };
        Ok(MetricsReport {
            n,
            avg_discomfort_pre: pre.avg_discomfort,
            avg_discomfort: post.avg_discomfort,
            unfairness_pre: pre.unfairness,
            unfairness: post.unfairness,
            inefficiency_pre: pre.inefficiency,
            inefficiency: post.inefficiency,
            mean_comfort_pre: pre.mean_comfort,
            mean_comfort: post.mean_comfort,
            mean_comfort_gain: mean(&gain),
            participation_fraction: frac(advertisers),
            positive_gain_fraction: frac(gain.iter().filter(|g| **g > 0.0).count()),
            exchange_success_rate: success_rate(exchanges, requests),
            exchanges,
            requests,
            per_agent_comfort: post.per_agent_comfort.clone(),
            comfort_gain: gain,
        })
    }
}

/// Completed over issued requests; 1.0 when nothing was requested.
pub fn success_rate(completed: usize, requested: usize) -> f64 {
    if requested == 0 {
        1.0
    } else {
        completed as f64 / requested as f64
    }
}
