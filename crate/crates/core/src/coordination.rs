//! Iterative plan selection over a binary tree of agents.
//!
//! Each iteration runs a bottom-up pass in post-order: an agent sees the
//! previous global response with its own subtree's previous contribution
//! replaced by the fresh aggregate of its children, picks the plan that
//! minimises the beta-weighted objective, and forwards its subtree aggregate
//! to its parent. The root aggregate becomes the global response shared with
//! every agent for the next iteration.
//!
//! A reselection is kept only if it does not raise the inefficiency of the
//! live global response, and an iteration whose final aggregate is costlier
//! than the previous one is rolled back. Together these make the recorded
//! global cost non-increasing.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DsmError, Result};
use crate::metrics::average_discomfort;
use crate::plan::{self, AgentState, GlobalResponse, Population};
use crate::AgentId;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeTopology {
    parent: Vec<Option<AgentId>>,
    children: Vec<Vec<AgentId>>,
    level: Vec<usize>,
    root: AgentId,
    post_order: Vec<AgentId>,
}

/// Complete binary tree over a seeded permutation of `0..n`, filled level by
/// level. The root is at level 1.
pub fn build_tree(n: usize, seed: u64) -> Result<TreeTopology> {
    if n == 0 {
        return Err(DsmError::InvalidParameter("tree needs at least one agent".into()));
    }
    let mut order: Vec<AgentId> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));

    let mut parent = vec![None; n];
    let mut children = vec![Vec::new(); n];
    let mut level = vec![0; n];
    for (pos, &agent) in order.iter().enumerate() {
        level[agent] = (usize::BITS - (pos + 1).leading_zeros()) as usize;
        if pos > 0 {
            let p = order[(pos - 1) / 2];
            parent[agent] = Some(p);
            children[p].push(agent);
        }
    }
    let root = order[0];

    let mut post_order = Vec::with_capacity(n);
    let mut stack = vec![(root, false)];
    while let Some((node, expanded)) = stack.pop() {
        if expanded {
            post_order.push(node);
        } else {
            stack.push((node, true));
            for &c in children[node].iter().rev() {
                stack.push((c, false));
            }
        }
    }

    Ok(TreeTopology {
        parent,
        children,
        level,
        root,
        post_order,
    })
}

impl TreeTopology {
    pub fn len(&self) -> usize {
        self.parent.len()
    }

    pub fn is_empty(&self) -> bool {
        self.parent.is_empty()
    }

    pub fn root(&self) -> AgentId {
        self.root
    }

    pub fn parent(&self, agent: AgentId) -> Option<AgentId> {
        self.parent[agent]
    }

    pub fn children(&self, agent: AgentId) -> &[AgentId] {
        &self.children[agent]
    }

    pub fn level(&self, agent: AgentId) -> usize {
        self.level[agent]
    }

    pub fn levels(&self) -> &[usize] {
        &self.level
    }

    /// Number of levels in the tree.
    pub fn depth(&self) -> usize {
        self.level.iter().copied().max().unwrap_or(0)
    }

    /// Children before parents, siblings left to right.
    pub fn post_order(&self) -> &[AgentId] {
        &self.post_order
    }
}

/// How the two terms of the selection objective are put on a common scale
/// before weighting.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CostScaling {
    /// Weight raw inefficiency against the [0, 1] discomfort directly.
    Raw,
    /// Min-max normalise each term across the agent's candidate plans.
    #[default]
    MinMax,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Objective {
    pub scaling: CostScaling,
    /// Optional supply profile; without it inefficiency is the variance of
    /// the aggregate demand.
    pub target: Option<Vec<f64>>,
}

impl Objective {
    pub fn raw() -> Self {
        Objective {
            scaling: CostScaling::Raw,
            target: None,
        }
    }

    pub fn inefficiency(&self, totals: &[f64]) -> Result<f64> {
        plan::inefficiency(totals, self.target.as_deref())
    }

    /// Index of the plan minimising `(1 - beta) * I + beta * D`, where I is
    /// the inefficiency of `context` plus the plan and D the plan's
    /// discomfort. Ties go to the lowest index.
    pub fn select_plan(&self, agent: &AgentState, context: &[f64], beta: f64) -> Result<usize> {
        let d = agent.d();
        if context.len() != d {
            return Err(DsmError::DimensionMismatch {
                expected: d,
                got: context.len(),
            });
        }
        if !(0.0..=1.0).contains(&beta) {
            return Err(DsmError::InvalidParameter(format!("beta {beta} outside [0, 1]")));
        }
        let preferred = agent.preferred().slots();
        let mut buf = vec![0.0; d];
        let mut ineff = Vec::with_capacity(agent.plan_set().len());
        let mut disc = Vec::with_capacity(agent.plan_set().len());
        for plan in agent.plan_set().plans() {
            for ((b, c), v) in buf.iter_mut().zip(context).zip(plan.slots()) {
                *b = c + v;
            }
            ineff.push(self.inefficiency(&buf)?);
            disc.push(plan::discomfort_unchecked(plan.slots(), preferred, agent.scale()));
        }
        if self.scaling == CostScaling::MinMax {
            min_max(&mut ineff);
            min_max(&mut disc);
        }
        let mut best = 0;
        let mut best_cost = f64::INFINITY;
        for (s, (i, dc)) in ineff.iter().zip(&disc).enumerate() {
            let cost = (1.0 - beta) * i + beta * dc;
            if cost < best_cost {
                best = s;
                best_cost = cost;
            }
        }
        Ok(best)
    }
}

fn min_max(values: &mut [f64]) {
    let lo = values.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let range = hi - lo;
    for v in values.iter_mut() {
        *v = if range > 0.0 { (*v - lo) / range } else { 0.0 };
    }
}

/// [`Objective::select_plan`] with the default objective.
pub fn select_plan(agent: &AgentState, context: &[f64], beta: f64) -> Result<usize> {
    Objective::default().select_plan(agent, context, beta)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoordinationConfig {
    pub iterations: usize,
    #[serde(default)]
    pub objective: Objective,
}

impl Default for CoordinationConfig {
    fn default() -> Self {
        CoordinationConfig {
            iterations: 50,
            objective: Objective::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iteration: usize,
    pub global_cost: f64,
    pub avg_discomfort: f64,
    pub selections: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationTrace {
    /// Cost with every agent on its preferred plan.
    pub initial_cost: f64,
    pub records: Vec<IterationRecord>,
    /// Root aggregate after the last iteration.
    pub global_response: GlobalResponse,
}

impl IterationTrace {
    pub fn costs(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.global_cost).collect()
    }

    pub fn final_cost(&self) -> f64 {
        self.records.last().map_or(self.initial_cost, |r| r.global_cost)
    }

    pub fn is_non_increasing(&self) -> bool {
        let mut prev = self.initial_cost;
        self.records.iter().all(|r| {
            let ok = r.global_cost <= prev;
            prev = r.global_cost;
            ok
        })
    }

    /// `iteration,global_cost,avg_discomfort`, one row per iteration.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["iteration", "global_cost", "avg_discomfort"])?;
        for r in &self.records {
            w.write_record([
                r.iteration.to_string(),
                r.global_cost.to_string(),
                r.avg_discomfort.to_string(),
            ])?;
        }
        w.flush().map_err(|e| DsmError::io("trace.csv", e))?;
        Ok(())
    }
}

fn subtree_aggregates(
    population: &Population,
    topo: &TreeTopology,
    selections: &[usize],
) -> Vec<Vec<f64>> {
    let d = population.d();
    let mut agg = vec![Vec::new(); population.len()];
    for &a in topo.post_order() {
        let mut sum = vec![0.0; d];
        for &c in topo.children(a) {
            add_into(&mut sum, &agg[c]);
        }
        add_into(&mut sum, plan_slots(population, a, selections[a]));
        agg[a] = sum;
    }
    agg
}

fn plan_slots(population: &Population, agent: AgentId, index: usize) -> &[f64] {
    population.agents()[agent].plan_set().plans()[index].slots()
}

fn add_into(acc: &mut [f64], v: &[f64]) {
    for (a, x) in acc.iter_mut().zip(v) {
        *a += x;
    }
}

/// Runs `config.iterations` bottom-up/top-down rounds. Every agent starts on
/// its preferred plan; final selections are written back into `population`.
pub fn run_coordination(
    population: &mut Population,
    topo: &TreeTopology,
    config: &CoordinationConfig,
) -> Result<IterationTrace> {
    if population.is_empty() {
        return Err(DsmError::EmptyPopulation);
    }
    if topo.len() != population.len() {
        return Err(DsmError::TopologyMismatch {
            topology: topo.len(),
            population: population.len(),
        });
    }
    if config.iterations < 1 {
        return Err(DsmError::InvalidParameter("iterations must be at least 1".into()));
    }
    let objective = &config.objective;
    let d = population.d();
    if let Some(t) = &objective.target {
        if t.len() != d {
            return Err(DsmError::DimensionMismatch {
                expected: d,
                got: t.len(),
            });
        }
    }

    population.reset_to_preferred();
    let mut selections: Vec<usize> = population
        .agents()
        .iter()
        .map(|a| a.plan_set().preferred_index())
        .collect();
    let mut prev_sub = subtree_aggregates(population, topo, &selections);
    let mut global = prev_sub[topo.root()].clone();
    let mut cost = objective.inefficiency(&global)?;
    let initial_cost = cost;

    let mut records = Vec::with_capacity(config.iterations);
    let mut context = vec![0.0; d];
    for iteration in 1..=config.iterations {
        let mut next = selections.clone();
        let mut next_sub: Vec<Vec<f64>> = vec![Vec::new(); population.len()];
        let mut live = global.clone();
        let mut live_cost = cost;

        for &a in topo.post_order() {
            let mut children = vec![0.0; d];
            for &c in topo.children(a) {
                add_into(&mut children, &next_sub[c]);
            }
            for (i, ctx) in context.iter_mut().enumerate() {
                *ctx = global[i] - prev_sub[a][i] + children[i];
            }
            let agent = &population.agents()[a];
            let candidate = objective.select_plan(agent, &context, agent.beta())?;
            if candidate != next[a] {
                let old = plan_slots(population, a, next[a]);
                let new = plan_slots(population, a, candidate);
                let trial: Vec<f64> = live
                    .iter()
                    .zip(old)
                    .zip(new)
                    .map(|((g, o), n)| g - o + n)
                    .collect();
                let trial_cost = objective.inefficiency(&trial)?;
                if trial_cost <= live_cost {
                    live = trial;
                    live_cost = trial_cost;
                    next[a] = candidate;
                }
            }
            add_into(&mut children, plan_slots(population, a, next[a]));
            next_sub[a] = children;
        }

        // top-down: the root aggregate is the response every agent sees next
        let next_global = next_sub[topo.root()].clone();
        let next_cost = objective.inefficiency(&next_global)?;
        if next_cost <= cost {
            selections = next;
            prev_sub = next_sub;
            global = next_global;
            cost = next_cost;
        }

        for (agent, &s) in population.agents_mut().iter_mut().zip(&selections) {
            agent.select(s);
        }
        records.push(IterationRecord {
            iteration,
            global_cost: cost,
            avg_discomfort: average_discomfort(population)?,
            selections: selections.clone(),
        });
    }

    Ok(IterationTrace {
        initial_cost,
        records,
        global_response: GlobalResponse { totals: global },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plan::{Plan, PlanSet};

    fn agent(id: usize, plans: &[&[f64]], beta: f64) -> AgentState {
        let plans = plans.iter().map(|p| Plan::new(p.to_vec()).unwrap()).collect();
        AgentState::new(id, PlanSet::new(plans, 0).unwrap(), beta).unwrap()
    }

    #[test]
    fn tree_shapes() {
        let t = build_tree(1, 0).unwrap();
        assert_eq!(t.depth(), 1);
        assert_eq!(t.post_order(), &[0]);

        let t = build_tree(3, 4).unwrap();
        assert_eq!(t.depth(), 2);
        assert_eq!(t.children(t.root()).len(), 2);

        let t = build_tree(1000, 1).unwrap();
        assert_eq!(t.depth(), 10);
        assert!((0..1000).all(|a| t.children(a).len() <= 2));
        assert_eq!(t.post_order().len(), 1000);
        assert_eq!(*t.post_order().last().unwrap(), t.root());

        assert!(build_tree(0, 0).is_err());
    }

    #[test]
    fn tree_is_seeded() {
        assert_eq!(build_tree(50, 3).unwrap(), build_tree(50, 3).unwrap());
        assert_ne!(build_tree(50, 3).unwrap(), build_tree(50, 4).unwrap());
    }

    #[test]
    fn select_plan_extremes() {
        let a = agent(0, &[&[1.0, 1.0], &[0.0, 2.0]], 0.0);
        // (5,1)+(1,1) = (6,2) has variance 4, (5,1)+(0,2) = (5,3) has variance 1
        for obj in [Objective::raw(), Objective::default()] {
            assert_eq!(obj.select_plan(&a, &[5.0, 1.0], 0.0).unwrap(), 1);
            assert_eq!(obj.select_plan(&a, &[5.0, 1.0], 1.0).unwrap(), 0);
        }
        assert!(select_plan(&a, &[5.0], 0.0).is_err());
    }

    #[test]
    fn select_plan_ties_pick_lowest_index() {
        let a = agent(0, &[&[1.0, 1.0], &[1.0, 1.0], &[2.0, 0.0]], 0.0);
        assert_eq!(select_plan(&a, &[0.0, 0.0], 0.0).unwrap(), 0);
        let b = agent(0, &[&[1.0, 1.0], &[2.0, 0.0], &[0.0, 2.0]], 0.0);
        assert_eq!(Objective::raw().select_plan(&b, &[1.0, 1.0], 0.0).unwrap(), 0);
        assert_eq!(Objective::raw().select_plan(&b, &[3.0, 1.0], 0.0).unwrap(), 2);
    }

    #[test]
    fn single_agent_run() {
        let mut pop = Population::new(vec![agent(0, &[&[3.0, 1.0], &[2.0, 2.0]], 1.0)]).unwrap();
        let topo = build_tree(1, 0).unwrap();
        let cfg = CoordinationConfig {
            iterations: 1,
            ..Default::default()
        };
        let trace = run_coordination(&mut pop, &topo, &cfg).unwrap();
        assert_eq!(trace.records.len(), 1);
        assert_eq!(trace.final_cost(), 1.0);
        assert_eq!(pop.agents()[0].selected().slots(), &[3.0, 1.0]);
    }

    #[test]
    fn rejects_mismatched_topology() {
        let mut pop = Population::new(vec![agent(0, &[&[1.0]], 0.0)]).unwrap();
        let topo = build_tree(2, 0).unwrap();
        assert!(matches!(
            run_coordination(&mut pop, &topo, &CoordinationConfig::default()),
            Err(DsmError::TopologyMismatch { .. })
        ));
    }

    #[test]
    fn trace_csv_layout() {
        let trace = IterationTrace {
            initial_cost: 2.0,
            records: vec![IterationRecord {
                iteration: 1,
                global_cost: 1.5,
                avg_discomfort: 0.25,
                selections: vec![0],
            }],
            global_response: GlobalResponse::zeros(1),
        };
        let mut out = Vec::new();
        trace.write_csv(&mut out).unwrap();
        assert_eq!(
            String::from_utf8(out).unwrap(),
            "iteration,global_cost,avg_discomfort\n1,1.5,0.25\n"
        );
    }
}
