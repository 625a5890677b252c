//! Plans, agents and the two cost functions that drive selection.
//!
//! A [`Plan`] is a per-slot energy vector. Every agent owns a [`PlanSet`]
//! whose plans all consume the same total energy, one of which is the
//! preferred plan. The agent's currently selected plan starts as a copy of
//! one of those plans and may later be edited slot by slot by exchanges.

use serde::{Deserialize, Serialize};

use crate::error::{DsmError, Result};
use crate::AgentId;

/// Relative tolerance used when comparing plan totals.
pub const TOTAL_ENERGY_RTOL: f64 = 1e-9;

/// Returns true when `a` and `b` agree within [`TOTAL_ENERGY_RTOL`].
pub fn totals_agree(a: f64, b: f64) -> bool {
    let scale = a.abs().max(b.abs()).max(1.0);
    (a - b).abs() <= TOTAL_ENERGY_RTOL * scale
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Plan {
    slots: Vec<f64>,
}

impl Plan {
    pub fn new(slots: Vec<f64>) -> Result<Self> {
        if slots.is_empty() {
            return Err(DsmError::EmptyPlan);
        }
        for (slot, &value) in slots.iter().enumerate() {
            if !value.is_finite() {
                return Err(DsmError::NonFinite { slot });
            }
            if value < 0.0 {
                return Err(DsmError::NegativeEnergy { slot, value });
            }
        }
        Ok(Plan { slots })
    }

    pub fn slots(&self) -> &[f64] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn get(&self, slot: usize) -> Option<f64> {
        self.slots.get(slot).copied()
    }

    pub fn total_energy(&self) -> f64 {
        self.slots.iter().sum()
    }

    /// Overwrites one slot. Callers are responsible for keeping totals
    /// balanced across agents.
    pub(crate) fn set(&mut self, slot: usize, value: f64) {
        self.slots[slot] = value;
    }
}

impl TryFrom<Vec<f64>> for Plan {
    type Error = DsmError;

    fn try_from(slots: Vec<f64>) -> Result<Self> {
        Plan::new(slots)
    }
}

impl From<Plan> for Vec<f64> {
    fn from(plan: Plan) -> Self {
        plan.slots
    }
}

impl AsRef<[f64]> for Plan {
    fn as_ref(&self) -> &[f64] {
        &self.slots
    }
}

/// The feasible plans of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanSet {
    plans: Vec<Plan>,
    preferred_index: usize,
}

impl PlanSet {
    pub fn new(plans: Vec<Plan>, preferred_index: usize) -> Result<Self> {
        if plans.is_empty() {
            return Err(DsmError::EmptyPlanSet);
        }
        if preferred_index >= plans.len() {
            return Err(DsmError::PreferredIndex {
                index: preferred_index,
                len: plans.len(),
            });
        }
        let d = plans[preferred_index].len();
        let expected = plans[preferred_index].total_energy();
        for (index, plan) in plans.iter().enumerate() {
            if plan.len() != d {
                return Err(DsmError::DimensionMismatch {
                    expected: d,
                    got: plan.len(),
                });
            }
            let total = plan.total_energy();
            if !totals_agree(total, expected) {
                return Err(DsmError::UnequalTotals {
                    index,
                    total,
                    expected,
                });
            }
        }
        Ok(PlanSet {
            plans,
            preferred_index,
        })
    }

    pub fn plans(&self) -> &[Plan] {
        &self.plans
    }

    pub fn len(&self) -> usize {
        self.plans.len()
    }

    pub fn is_empty(&self) -> bool {
        self.plans.is_empty()
    }

    pub fn d(&self) -> usize {
        self.plans[0].len()
    }

    pub fn preferred_index(&self) -> usize {
        self.preferred_index
    }

    pub fn preferred(&self) -> &Plan {
        &self.plans[self.preferred_index]
    }

    /// Default discomfort scale: the largest RMSE of any plan in the set
    /// against the preferred plan, or 1.0 when every plan coincides.
    pub fn discomfort_scale(&self) -> f64 {
        let preferred = self.preferred();
        let max = self
            .plans
            .iter()
            .map(|p| rmse(p.slots(), preferred.slots()))
            .fold(0.0, f64::max);
        if max > 0.0 {
            max
        } else {
            1.0
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub id: AgentId,
    plan_set: PlanSet,
    selected: Plan,
    beta: f64,
    scale: f64,
    pub available: bool,
}

impl AgentState {
    /// Creates an agent sitting on its preferred plan.
    pub fn new(id: AgentId, plan_set: PlanSet, beta: f64) -> Result<Self> {
        check_beta(beta)?;
        let scale = plan_set.discomfort_scale();
        Ok(AgentState {
            id,
            selected: plan_set.preferred().clone(),
            plan_set,
            beta,
            scale,
            available: true,
        })
    }

    pub fn plan_set(&self) -> &PlanSet {
        &self.plan_set
    }

    pub fn preferred(&self) -> &Plan {
        self.plan_set.preferred()
    }

    pub fn selected(&self) -> &Plan {
        &self.selected
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn set_beta(&mut self, beta: f64) -> Result<()> {
        check_beta(beta)?;
        self.beta = beta;
        Ok(())
    }

    /// Per-agent normaliser of the discomfort cost.
    pub fn scale(&self) -> f64 {
        self.scale
    }

    /// Replaces the discomfort normaliser, e.g. with a population-wide unit.
    pub fn set_scale(&mut self, scale: f64) -> Result<()> {
        if !(scale.is_finite() && scale > 0.0) {
            return Err(DsmError::InvalidParameter(format!(
                "discomfort scale must be positive, got {scale}"
            )));
        }
        self.scale = scale;
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.selected.len()
    }

    pub fn select(&mut self, index: usize) {
        self.selected = self.plan_set.plans()[index].clone();
    }

    pub(crate) fn selected_mut(&mut self) -> &mut Plan {
        &mut self.selected
    }

    pub fn discomfort(&self) -> f64 {
        discomfort_unchecked(self.selected.slots(), self.preferred().slots(), self.scale)
    }

    pub fn comfort(&self) -> f64 {
        1.0 - self.discomfort()
    }

    /// Number of slots whose selected value differs from the preferred one
    /// by more than `tolerance`.
    pub fn mismatched_slots(&self, tolerance: f64) -> usize {
        self.selected
            .slots()
            .iter()
            .zip(self.preferred().slots())
            .filter(|(s, p)| differs(**s, **p, tolerance))
            .count()
    }
}

fn check_beta(beta: f64) -> Result<()> {
    if (0.0..=1.0).contains(&beta) {
        Ok(())
    } else {
        Err(DsmError::InvalidParameter(format!(
            "beta {beta} outside [0, 1]"
        )))
    }
}

/// Slot-level mismatch test shared by advertising and matching.
/// With a zero tolerance this is exact inequality.
pub fn differs(a: f64, b: f64, tolerance: f64) -> bool {
    (a - b).abs() > tolerance
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct Population {
    agents: Vec<AgentState>,
}

impl Population {
    pub fn new(agents: Vec<AgentState>) -> Result<Self> {
        if let Some(first) = agents.first() {
            let d = first.d();
            for (idx, agent) in agents.iter().enumerate() {
                if agent.id != idx {
                    return Err(DsmError::InvalidParameter(format!(
                        "agent at position {idx} has id {}",
                        agent.id
                    )));
                }
                if agent.d() != d {
                    return Err(DsmError::DimensionMismatch {
                        expected: d,
                        got: agent.d(),
                    });
                }
            }
        }
        Ok(Population { agents })
    }

    pub fn agents(&self) -> &[AgentState] {
        &self.agents
    }

    pub fn agents_mut(&mut self) -> &mut [AgentState] {
        &mut self.agents
    }

    pub fn agent(&self, id: AgentId) -> Option<&AgentState> {
        self.agents.get(id)
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn d(&self) -> usize {
        self.agents.first().map_or(0, AgentState::d)
    }

    pub fn set_beta(&mut self, beta: f64) -> Result<()> {
        check_beta(beta)?;
        for agent in &mut self.agents {
            agent.beta = beta;
        }
        Ok(())
    }

    /// Puts every agent back on its preferred plan.
    pub fn reset_to_preferred(&mut self) {
        for agent in &mut self.agents {
            agent.selected = agent.preferred().clone();
        }
    }

    pub fn global_response(&self) -> GlobalResponse {
        GlobalResponse::from_plans(self.d(), self.agents.iter().map(|a| a.selected.slots()))
    }

    pub fn discomforts(&self) -> Vec<f64> {
        self.agents.iter().map(AgentState::discomfort).collect()
    }

    pub fn comforts(&self) -> Vec<f64> {
        self.agents.iter().map(AgentState::comfort).collect()
    }

    /// Selected plans only, in agent order.
    pub fn selections(&self) -> Vec<Plan> {
        self.agents.iter().map(|a| a.selected.clone()).collect()
    }

    /// Builds the population formed by the given agents, renumbered from 0.
    pub fn subset(&self, ids: &[AgentId]) -> Result<Population> {
        let agents = ids
            .iter()
            .enumerate()
            .map(|(new_id, &id)| {
                let mut agent = self
                    .agents
                    .get(id)
                    .cloned()
                    .ok_or_else(|| DsmError::InvalidParameter(format!("unknown agent {id}")))?;
                agent.id = new_id;
                Ok(agent)
            })
            .collect::<Result<Vec<_>>>()?;
        Population::new(agents)
    }
}

/// Element-wise sum of all selected plans.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalResponse {
    pub totals: Vec<f64>,
}

impl GlobalResponse {
    pub fn zeros(d: usize) -> Self {
        GlobalResponse {
            totals: vec![0.0; d],
        }
    }

    /// Sums plans in iteration order.
    pub fn from_plans<'a>(d: usize, plans: impl IntoIterator<Item = &'a [f64]>) -> Self {
        let mut g = GlobalResponse::zeros(d);
        for plan in plans {
            g.add(plan);
        }
        g
    }

    pub fn add(&mut self, plan: &[f64]) {
        for (t, v) in self.totals.iter_mut().zip(plan) {
            *t += v;
        }
    }

    pub fn sub(&mut self, plan: &[f64]) {
        for (t, v) in self.totals.iter_mut().zip(plan) {
            *t -= v;
        }
    }

    pub fn len(&self) -> usize {
        self.totals.len()
    }

    pub fn is_empty(&self) -> bool {
        self.totals.is_empty()
    }
}

fn check_dims(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(DsmError::DimensionMismatch { expected, got })
    }
}

fn check_finite(values: &[f64]) -> Result<()> {
    match values.iter().position(|v| !v.is_finite()) {
        Some(slot) => Err(DsmError::NonFinite { slot }),
        None => Ok(()),
    }
}

pub(crate) fn rmse(a: &[f64], b: &[f64]) -> f64 {
    let sum: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (sum / a.len() as f64).sqrt()
}

pub(crate) fn discomfort_unchecked(selected: &[f64], preferred: &[f64], scale: f64) -> f64 {
    (rmse(selected, preferred) / scale).min(1.0)
}

/// Normalised deviation of `selected` from `preferred`: RMSE divided by
/// `scale`, clamped to 1.
pub fn discomfort(selected: &[f64], preferred: &[f64], scale: f64) -> Result<f64> {
    check_dims(preferred.len(), selected.len())?;
    if selected.is_empty() {
        return Err(DsmError::EmptyPlan);
    }
    check_finite(selected)?;
    check_finite(preferred)?;
    if !(scale.is_finite() && scale > 0.0) {
        return Err(DsmError::InvalidParameter(format!(
            "discomfort scale must be positive, got {scale}"
        )));
    }
    Ok(discomfort_unchecked(selected, preferred, scale))
}

pub fn comfort(selected: &[f64], preferred: &[f64], scale: f64) -> Result<f64> {
    discomfort(selected, preferred, scale).map(|d| 1.0 - d)
}

pub(crate) fn variance(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

pub(crate) fn mse(values: &[f64], target: &[f64]) -> f64 {
    values
        .iter()
        .zip(target)
        .map(|(v, t)| (v - t) * (v - t))
        .sum::<f64>()
        / values.len() as f64
}

/// Cost of an aggregate demand profile. Without a target this is the
/// variance of the profile; with a supply target it is the mean squared
/// gap between demand and supply.
pub fn inefficiency(totals: &[f64], target: Option<&[f64]>) -> Result<f64> {
    if totals.is_empty() {
        return Err(DsmError::EmptyPlan);
    }
    check_finite(totals)?;
    match target {
        None => Ok(variance(totals)),
        Some(target) => {
            check_dims(totals.len(), target.len())?;
            check_finite(target)?;
            Ok(mse(totals, target))
        }
    }
}

pub fn total_energy(population: &Population) -> f64 {
    population
        .agents
        .iter()
        .map(|a| a.selected.total_energy())
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn plan(v: &[f64]) -> Plan {
        Plan::new(v.to_vec()).unwrap()
    }

    #[test]
    fn plan_rejects_bad_values() {
        assert!(matches!(Plan::new(vec![]), Err(DsmError::EmptyPlan)));
        assert!(matches!(
            Plan::new(vec![1.0, -0.5]),
            Err(DsmError::NegativeEnergy { slot: 1, .. })
        ));
        assert!(matches!(
            Plan::new(vec![f64::NAN]),
            Err(DsmError::NonFinite { slot: 0 })
        ));
    }

    #[test]
    fn discomfort_zero_on_identity() {
        let p = [1.0, 2.0, 3.0];
        assert_eq!(discomfort(&p, &p, 1.0).unwrap(), 0.0);
        assert_eq!(comfort(&p, &p, 1.0).unwrap(), 1.0);
    }

    #[test]
    fn discomfort_hand_value() {
        let d = discomfort(&[2.0, 0.0, 1.0, 1.0], &[1.0, 1.0, 1.0, 1.0], 1.0).unwrap();
        assert_relative_eq!(d, 0.5f64.sqrt(), epsilon = 1e-15);
    }

    #[test]
    fn discomfort_clamps_at_full_deviation() {
        let d = discomfort(&[3.0, 1.0, 3.0], &[1.0, 3.0, 1.0], 2.0).unwrap();
        assert_eq!(d, 1.0);
        assert_eq!(comfort(&[3.0, 1.0, 3.0], &[1.0, 3.0, 1.0], 2.0).unwrap(), 0.0);
        assert_eq!(discomfort(&[9.0], &[0.0], 2.0).unwrap(), 1.0);
    }

    #[test]
    fn comfort_complements_discomfort() {
        // RMSE 0.3 over a single slot
        let c = comfort(&[1.3], &[1.0], 1.0).unwrap();
        assert_relative_eq!(c, 0.7, epsilon = 1e-12);
    }

    #[test]
    fn discomfort_errors() {
        assert!(matches!(
            discomfort(&[1.0], &[1.0, 2.0], 1.0),
            Err(DsmError::DimensionMismatch { .. })
        ));
        assert!(matches!(
            discomfort(&[f64::INFINITY], &[1.0], 1.0),
            Err(DsmError::NonFinite { .. })
        ));
        assert!(discomfort(&[1.0], &[1.0], 0.0).is_err());
    }

    #[test]
    fn inefficiency_cases() {
        assert_eq!(inefficiency(&[3.0, 3.0, 3.0], None).unwrap(), 0.0);
        assert_eq!(inefficiency(&[4.0, 6.0], Some(&[4.0, 6.0])).unwrap(), 0.0);
        assert_eq!(inefficiency(&[4.0, 6.0], None).unwrap(), 1.0);
        assert!(matches!(
            inefficiency(&[4.0, 6.0], Some(&[1.0])),
            Err(DsmError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn plan_set_rejects_unequal_totals() {
        let err = PlanSet::new(vec![plan(&[1.0, 1.0]), plan(&[1.0, 2.0])], 0).unwrap_err();
        assert!(matches!(err, DsmError::UnequalTotals { index: 1, .. }));
        assert!(matches!(
            PlanSet::new(vec![plan(&[1.0])], 1),
            Err(DsmError::PreferredIndex { .. })
        ));
        assert!(matches!(PlanSet::new(vec![], 0), Err(DsmError::EmptyPlanSet)));
    }

    #[test]
    fn scale_falls_back_to_one() {
        let set = PlanSet::new(vec![plan(&[1.0, 1.0]), plan(&[1.0, 1.0])], 0).unwrap();
        assert_eq!(set.discomfort_scale(), 1.0);
        let set = PlanSet::new(vec![plan(&[1.0, 1.0]), plan(&[2.0, 0.0])], 0).unwrap();
        assert_eq!(set.discomfort_scale(), 1.0);
        let set = PlanSet::new(vec![plan(&[2.0, 2.0]), plan(&[4.0, 0.0])], 0).unwrap();
        assert_eq!(set.discomfort_scale(), 2.0);
    }

    #[test]
    fn total_energy_additive() {
        let a = AgentState::new(0, PlanSet::new(vec![plan(&[4.0, 6.0])], 0).unwrap(), 0.5).unwrap();
        let b = AgentState::new(1, PlanSet::new(vec![plan(&[10.0, 0.0])], 0).unwrap(), 0.5).unwrap();
        let pop = Population::new(vec![a, b]).unwrap();
        assert_eq!(total_energy(&pop), 20.0);
        assert_eq!(total_energy(&Population::default()), 0.0);
        assert_eq!(pop.global_response().totals, vec![14.0, 6.0]);
    }

    #[test]
    fn agent_rejects_bad_beta() {
        let set = PlanSet::new(vec![plan(&[1.0])], 0).unwrap();
        assert!(AgentState::new(0, set.clone(), 1.5).is_err());
        assert!(AgentState::new(0, set, -0.1).is_err());
    }

    #[test]
    fn subset_renumbers() {
        let agents = (0..4)
            .map(|i| {
                AgentState::new(i, PlanSet::new(vec![plan(&[i as f64])], 0).unwrap(), 0.0).unwrap()
            })
            .collect();
        let pop = Population::new(agents).unwrap();
        let sub = pop.subset(&[3, 1]).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.agents()[0].id, 0);
        assert_eq!(sub.agents()[0].selected().slots(), &[3.0]);
    }

    #[test]
    fn custom_scale_changes_discomfort() {
        let set = PlanSet::new(vec![plan(&[2.0, 0.0]), plan(&[0.0, 2.0])], 0).unwrap();
        let mut a = AgentState::new(0, set, 0.0).unwrap();
        a.select(1);
        assert_eq!(a.discomfort(), 1.0);
        a.set_scale(4.0).unwrap();
        assert_eq!(a.discomfort(), 0.5);
        assert!(a.set_scale(0.0).is_err());
        assert!(a.set_scale(f64::NAN).is_err());
    }
}
