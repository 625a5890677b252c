//! Blackboard-mediated slot exchange.
//!
//! After plan selection every agent publishes the slots where its selected
//! value differs from its preferred value. An agent wanting value `v` at slot
//! `i` asks the blackboard who currently holds `v` at `i`; the blackboard
//! only answers, and the two agents then swap their values at that slot
//! inside a locked transaction. Swaps never cross slot indices, so per-slot
//! global totals are untouched.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use ordered_float::OrderedFloat;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DsmError, ExchangeError, Result};
use crate::plan::{differs, Population};
use crate::AgentId;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Advertisement {
    pub agent: AgentId,
    pub slot: usize,
    pub current_value: f64,
    pub desired_value: f64,
}

/// When a matched agent agrees to swap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AcceptanceRule {
    /// Decline only when the requested slot already holds the acceptor's
    /// preferred value.
    #[default]
    Literal,
    /// Additionally decline when the acceptor's own deviation at the slot
    /// would grow.
    Strict,
}

impl AcceptanceRule {
    fn accepts(self, offered: f64, ad: &Advertisement) -> bool {
        match self {
            AcceptanceRule::Literal => true,
            AcceptanceRule::Strict => {
                (offered - ad.desired_value).abs() <= (ad.current_value - ad.desired_value).abs()
            }
        }
    }
}

type Key = (usize, OrderedFloat<f64>);

#[derive(Debug, Clone, Default)]
pub struct Blackboard {
    tolerance: f64,
    view: Vec<Vec<f64>>,
    ads: BTreeMap<(AgentId, usize), Advertisement>,
    index: BTreeMap<Key, BTreeSet<AgentId>>,
    locks: BTreeSet<AgentId>,
}

impl Blackboard {
    /// Empty blackboard with exact value matching.
    pub fn new() -> Self {
        Blackboard::default()
    }

    /// Matching tolerance for real-valued data. The swap itself always moves
    /// the exact stored values.
    pub fn with_tolerance(tolerance: f64) -> Result<Self> {
        if !(tolerance.is_finite() && tolerance >= 0.0) {
            return Err(DsmError::InvalidParameter(format!(
                "tolerance {tolerance} must be finite and non-negative"
            )));
        }
        Ok(Blackboard {
            tolerance,
            ..Blackboard::default()
        })
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    /// Records every agent's selected plan and drops all advertisements.
    pub fn sync(&mut self, population: &Population) {
        self.view = population
            .agents()
            .iter()
            .map(|a| a.selected().slots().to_vec())
            .collect();
        self.ads.clear();
        self.index.clear();
    }

    /// First agent whose recorded plan differs from its live plan.
    pub fn stale_agent(&self, population: &Population) -> Option<AgentId> {
        if self.view.len() != population.len() {
            return Some(self.view.len().min(population.len()));
        }
        population
            .agents()
            .iter()
            .zip(&self.view)
            .position(|(a, v)| a.selected().slots() != v.as_slice())
    }

    pub fn len(&self) -> usize {
        self.ads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ads.is_empty()
    }

    pub fn advertisement(&self, agent: AgentId, slot: usize) -> Option<&Advertisement> {
        self.ads.get(&(agent, slot))
    }

    pub fn advertisements(&self) -> impl Iterator<Item = &Advertisement> {
        self.ads.values()
    }

    pub fn is_locked(&self, agent: AgentId) -> bool {
        self.locks.contains(&agent)
    }

    pub fn locked(&self) -> &BTreeSet<AgentId> {
        &self.locks
    }

    /// Marks `agent` unavailable. Fails if it is already locked.
    pub fn lock(&mut self, population: &mut Population, agent: AgentId) -> Result<(), ExchangeError> {
        if !self.locks.insert(agent) {
            return Err(ExchangeError::Locked(agent));
        }
        if let Some(a) = population.agents_mut().get_mut(agent) {
            a.available = false;
        }
        Ok(())
    }

    pub fn unlock(&mut self, population: &mut Population, agent: AgentId) {
        self.locks.remove(&agent);
        if let Some(a) = population.agents_mut().get_mut(agent) {
            a.available = true;
        }
    }

    fn insert(&mut self, ad: Advertisement) {
        self.remove(ad.agent, ad.slot);
        self.index
            .entry((ad.slot, OrderedFloat(ad.current_value)))
            .or_default()
            .insert(ad.agent);
        self.ads.insert((ad.agent, ad.slot), ad);
    }

    fn remove(&mut self, agent: AgentId, slot: usize) {
        if let Some(old) = self.ads.remove(&(agent, slot)) {
            let key = (slot, OrderedFloat(old.current_value));
            if let Some(set) = self.index.get_mut(&key) {
                set.remove(&agent);
                if set.is_empty() {
                    self.index.remove(&key);
                }
            }
        }
    }

    /// Re-derives `agent`'s advertisement at `slot` from its live plan.
    fn refresh(&mut self, population: &Population, agent: AgentId, slot: usize) {
        let a = &population.agents()[agent];
        let current = a.selected().slots()[slot];
        let desired = a.preferred().slots()[slot];
        if let Some(v) = self.view.get_mut(agent) {
            v[slot] = current;
        }
        if differs(current, desired, self.tolerance) {
            self.insert(Advertisement {
                agent,
                slot,
                current_value: current,
                desired_value: desired,
            });
        } else {
            self.remove(agent, slot);
        }
    }

    /// Candidates holding a value within tolerance of `value` at `slot`,
    /// excluding `requester` and locked agents, in ascending id order.
    pub fn candidates(
        &self,
        requester: AgentId,
        slot: usize,
        value: f64,
    ) -> impl Iterator<Item = &Advertisement> + '_ {
        let lo = (slot, OrderedFloat(value - self.tolerance));
        let hi = (slot, OrderedFloat(value + self.tolerance));
        let ids: BTreeSet<AgentId> = self
            .index
            .range(lo..=hi)
            .flat_map(|(_, set)| set.iter().copied())
            .filter(|&a| a != requester && !self.locks.contains(&a))
            .collect();
        ids.into_iter().filter_map(move |a| self.ads.get(&(a, slot)))
    }

    /// Checks that every advertisement agrees with the owner's live plan.
    pub fn is_consistent(&self, population: &Population) -> bool {
        self.ads.values().all(|ad| {
            population.agent(ad.agent).is_some_and(|a| {
                a.selected().slots()[ad.slot] == ad.current_value
                    && a.preferred().slots()[ad.slot] == ad.desired_value
            })
        })
    }
}

/// Registers an advertisement for every mismatched (agent, slot) pair and
/// returns how many were registered.
pub fn advertise(population: &Population, board: &mut Blackboard) -> Result<usize> {
    if let Some(agent) = board.stale_agent(population) {
        return Err(DsmError::StaleBlackboard(agent));
    }
    board.ads.clear();
    board.index.clear();
    for agent in population.agents() {
        let preferred = agent.preferred().slots();
        for (slot, (&s, &p)) in agent.selected().slots().iter().zip(preferred).enumerate() {
            if differs(s, p, board.tolerance) {
                board.insert(Advertisement {
                    agent: agent.id,
                    slot,
                    current_value: s,
                    desired_value: p,
                });
            }
        }
    }
    Ok(board.ads.len())
}

/// Lowest-id unlocked agent other than `requester` advertising
/// `desired_value` at `slot`.
pub fn find_match(
    board: &Blackboard,
    requester: AgentId,
    slot: usize,
    desired_value: f64,
) -> Option<AgentId> {
    board
        .candidates(requester, slot, desired_value)
        .next()
        .map(|ad| ad.agent)
}

/// Like [`find_match`], but skips candidates whose advertisement shows they
/// would refuse `offered` under `rule`.
pub fn find_acceptor(
    board: &Blackboard,
    requester: AgentId,
    slot: usize,
    desired_value: f64,
    offered: f64,
    rule: AcceptanceRule,
) -> Option<AgentId> {
    board
        .candidates(requester, slot, desired_value)
        .find(|ad| rule.accepts(offered, ad))
        .map(|ad| ad.agent)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeRecord {
    pub initiator: AgentId,
    pub acceptor: AgentId,
    pub slot: usize,
    pub initiator_gave: f64,
    pub initiator_received: f64,
    pub acceptor_gave: f64,
    pub acceptor_received: f64,
    pub initiator_comfort_delta: f64,
    pub acceptor_comfort_delta: f64,
    pub sweep: usize,
}

/// Swaps the values `initiator` and `acceptor` hold at `slot`.
///
/// Both agents are locked for the duration of the call and released on every
/// path out of it.
pub fn exchange_slot(
    population: &mut Population,
    board: &mut Blackboard,
    initiator: AgentId,
    acceptor: AgentId,
    slot: usize,
    rule: AcceptanceRule,
) -> Result<ExchangeRecord, ExchangeError> {
    if initiator == acceptor {
        return Err(ExchangeError::SelfExchange(initiator));
    }
    for id in [initiator, acceptor] {
        if id >= population.len() {
            return Err(ExchangeError::UnknownAgent(id));
        }
    }
    let d = population.d();
    if slot >= d {
        return Err(ExchangeError::SlotOutOfRange { slot, d });
    }
    board.lock(population, initiator)?;
    if let Err(e) = board.lock(population, acceptor) {
        board.unlock(population, initiator);
        return Err(e);
    }
    let result = swap_locked(population, board, initiator, acceptor, slot, rule);
    board.unlock(population, initiator);
    board.unlock(population, acceptor);
    result
}

fn swap_locked(
    population: &mut Population,
    board: &mut Blackboard,
    initiator: AgentId,
    acceptor: AgentId,
    slot: usize,
    rule: AcceptanceRule,
) -> Result<ExchangeRecord, ExchangeError> {
    let tol = board.tolerance;
    let (gave, wanted, before_i) = {
        let a = &population.agents()[initiator];
        (a.selected().slots()[slot], a.preferred().slots()[slot], a.comfort())
    };
    let (held, acceptor_pref, before_a) = {
        let a = &population.agents()[acceptor];
        (a.selected().slots()[slot], a.preferred().slots()[slot], a.comfort())
    };

    let advertised = board.advertisement(acceptor, slot).copied();
    let fresh = advertised.is_some_and(|ad| ad.current_value == held)
        && board.view.get(acceptor).is_some_and(|v| v[slot] == held);
    if !fresh {
        board.refresh(population, acceptor, slot);
        return Err(ExchangeError::StaleAdvertisement {
            agent: acceptor,
            slot,
        });
    }
    if !differs(held, acceptor_pref, tol) {
        return Err(ExchangeError::PreferredSlot {
            agent: acceptor,
            slot,
        });
    }
    if !differs(gave, wanted, tol) {
        return Err(ExchangeError::NothingToGain {
            agent: initiator,
            slot,
        });
    }
    if differs(held, wanted, tol) {
        return Err(ExchangeError::ValueMismatch {
            agent: acceptor,
            slot,
        });
    }
    if let Some(ad) = advertised {
        if !rule.accepts(gave, &ad) {
            return Err(ExchangeError::WouldLoseComfort {
                agent: acceptor,
                slot,
            });
        }
    }

    let agents = population.agents_mut();
    agents[initiator].selected_mut().set(slot, held);
    agents[acceptor].selected_mut().set(slot, gave);
    let after_i = agents[initiator].comfort();
    let after_a = agents[acceptor].comfort();
    board.refresh(population, initiator, slot);
    board.refresh(population, acceptor, slot);

    Ok(ExchangeRecord {
        initiator,
        acceptor,
        slot,
        initiator_gave: gave,
        initiator_received: held,
        acceptor_gave: held,
        acceptor_received: gave,
        initiator_comfort_delta: after_i - before_i,
        acceptor_comfort_delta: after_a - before_a,
        sweep: 0,
    })
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ExchangeConfig {
    #[serde(default)]
    pub rule: AcceptanceRule,
    #[serde(default)]
    pub tolerance: f64,
}

/// Counters gathered over an exchange phase.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExchangeStats {
    /// Advertisements registered before the first sweep.
    pub advertisements: usize,
    /// Agents with at least one advertisement before the first sweep.
    pub advertisers: usize,
    /// Requests that found a partner and were proposed.
    pub requests: usize,
    pub completed: usize,
    pub declined: usize,
    /// Requests for which the blackboard knew no partner.
    pub unmatched: usize,
    pub sweeps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExchangeOutcome {
    pub records: Vec<ExchangeRecord>,
    pub stats: ExchangeStats,
}

impl ExchangeOutcome {
    pub fn success_rate(&self) -> f64 {
        crate::metrics::success_rate(self.stats.completed, self.stats.requests)
    }
}

/// Repeats sweeps over a freshly shuffled agent order until a sweep
/// completes no exchange. Within a sweep agents take turns in that order,
/// one request per turn, until each has requested every slot it had
/// mismatched when the sweep began. There is no request queue: a request
/// that finds no partner is dropped.
pub fn run_exchange_phase(
    population: &mut Population,
    board: &mut Blackboard,
    seed: u64,
    config: &ExchangeConfig,
) -> Result<ExchangeOutcome> {
    if board.tolerance != config.tolerance {
        return Err(DsmError::InvalidParameter(format!(
            "blackboard tolerance {} differs from configured {}",
            board.tolerance, config.tolerance
        )));
    }
    let advertisements = advertise(population, board)?;
    let mut stats = ExchangeStats {
        advertisements,
        advertisers: board
            .ads
            .keys()
            .map(|(a, _)| *a)
            .collect::<BTreeSet<_>>()
            .len(),
        ..ExchangeStats::default()
    };
    let mut records = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<AgentId> = (0..population.len()).collect();
    let tol = config.tolerance;

    loop {
        stats.sweeps += 1;
        let sweep = stats.sweeps;
        order.shuffle(&mut rng);
        // slots each agent had mismatched when the sweep started
        let mut pending: Vec<std::vec::IntoIter<usize>> = order
            .iter()
            .map(|&a| {
                let agent = &population.agents()[a];
                let slots: Vec<usize> = agent
                    .selected()
                    .slots()
                    .iter()
                    .zip(agent.preferred().slots())
                    .enumerate()
                    .filter(|(_, (s, p))| differs(**s, **p, tol))
                    .map(|(i, _)| i)
                    .collect();
                slots.into_iter()
            })
            .collect();
        let mut completed = 0;
        let mut active = true;
        while active {
            active = false;
            for (turn, &agent) in order.iter().enumerate() {
                let Some(slot) = pending[turn].next() else {
                    continue;
                };
                active = true;
                let (current, desired) = {
                    let a = &population.agents()[agent];
                    (a.selected().slots()[slot], a.preferred().slots()[slot])
                };
                if !differs(current, desired, tol) {
                    continue;
                }
                let Some(partner) = find_acceptor(board, agent, slot, desired, current, config.rule)
                else {
                    stats.unmatched += 1;
                    continue;
                };
                stats.requests += 1;
                match exchange_slot(population, board, agent, partner, slot, config.rule) {
                    Ok(mut record) => {
                        record.sweep = sweep;
                        records.push(record);
                        completed += 1;
                    }
                    Err(_) => stats.declined += 1,
                }
            }
        }
        stats.completed += completed;
        if completed == 0 {
            break;
        }
    }
    Ok(ExchangeOutcome { records, stats })
}

/// `initiator,acceptor,slot,initiator_gave,initiator_received,
/// initiator_comfort_delta,acceptor_comfort_delta,sweep`
pub fn write_exchange_csv<W: Write>(records: &[ExchangeRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "initiator",
        "acceptor",
        "slot",
        "initiator_gave",
        "initiator_received",
        "initiator_comfort_delta",
        "acceptor_comfort_delta",
        "sweep",
    ])?;
    for r in records {
        w.write_record([
            r.initiator.to_string(),
            r.acceptor.to_string(),
            r.slot.to_string(),
            r.initiator_gave.to_string(),
            r.initiator_received.to_string(),
            r.initiator_comfort_delta.to_string(),
            r.acceptor_comfort_delta.to_string(),
            r.sweep.to_string(),
        ])?;
    }
    w.flush().map_err(|e| DsmError::io("exchanges.csv", e))?;
    Ok(())
}

/// Outcome of replaying part of an exchange log.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayStats {
    pub applied: usize,
    pub skipped: usize,
}

/// Re-applies `records` in order. A record is applied only when both agents
/// still hold the values it swapped; otherwise it is skipped.
pub fn replay(population: &mut Population, records: &[ExchangeRecord]) -> ReplayStats {
    let mut stats = ReplayStats::default();
    let d = population.d();
    for r in records {
        let valid = r.initiator != r.acceptor
            && r.slot < d
            && population.agent(r.initiator).is_some_and(|a| a.selected().slots()[r.slot] == r.initiator_gave)
            && population.agent(r.acceptor).is_some_and(|a| a.selected().slots()[r.slot] == r.acceptor_gave);
        if !valid {
            stats.skipped += 1;
            continue;
        }
        let agents = population.agents_mut();
        agents[r.initiator].selected_mut().set(r.slot, r.initiator_received);
        agents[r.acceptor].selected_mut().set(r.slot, r.acceptor_received);
        stats.applied += 1;
    }
    stats
}
