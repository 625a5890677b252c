//! Flexibility-driven plan generation and synthetic residential profiles.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{DsmError, Result};
use crate::plan::{AgentState, Plan, PlanSet, Population};

/// Size of the energy packet moved by a single generator step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Quantum {
    /// Fraction of the preferred plan's total energy.
    FractionOfTotal(f64),
    /// Fixed amount of energy.
    Absolute(f64),
}

impl Default for Quantum {
    fn default() -> Self {
        Quantum::FractionOfTotal(0.01)
    }
}

impl Quantum {
    fn resolve(self, total: f64) -> Result<f64> {
        let delta = match self {
            Quantum::FractionOfTotal(f) => f * total,
            Quantum::Absolute(x) => x,
        };
        if delta.is_finite() && delta >= 0.0 {
            Ok(delta)
        } else {
            Err(DsmError::InvalidParameter(format!("invalid quantum {self:?}")))
        }
    }
}

/// How many packet moves each alternate plan receives.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MoveSchedule {
    /// Every alternate gets `round(flexibility * d)` moves.
    Uniform,
    /// Alternate `j` of `k - 1` gets `round(flexibility * d * j / (k - 1))`
    /// moves, so alternates range from mild to the full flexibility.
    #[default]
    Graded,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PlanGenerator {
    pub flexibility: f64,
    pub k: usize,
    #[serde(default)]
    pub quantum: Quantum,
    #[serde(default)]
    pub schedule: MoveSchedule,
}

impl PlanGenerator {
    pub fn new(flexibility: f64, k: usize) -> Self {
        PlanGenerator {
            flexibility,
            k,
            quantum: Quantum::default(),
            schedule: MoveSchedule::default(),
        }
    }

    pub fn with_schedule(mut self, schedule: MoveSchedule) -> Self {
        self.schedule = schedule;
        self
    }

    pub fn with_quantum(mut self, quantum: Quantum) -> Self {
        self.quantum = quantum;
        self
    }

    /// Number of packet moves applied to derive alternate `j` (1-based).
    pub fn moves(&self, d: usize, j: usize) -> usize {
        let full = self.flexibility * d as f64;
        match self.schedule {
            MoveSchedule::Uniform => full.round() as usize,
            MoveSchedule::Graded => (full * j as f64 / (self.k - 1).max(1) as f64).round() as usize,
        }
    }

    /// Returns `k` plans; index 0 is `preferred` itself and every other plan
    /// is derived from it by moving energy packets between random slots.
    pub fn generate(&self, preferred: &Plan, seed: u64) -> Result<PlanSet> {
        if self.k < 1 {
            return Err(DsmError::InvalidParameter("k must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.flexibility) {
            return Err(DsmError::InvalidParameter(format!(
                "flexibility {} outside [0, 1]",
                self.flexibility
            )));
        }
        let delta = self.quantum.resolve(preferred.total_energy())?;
        let d = preferred.len();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);

        let mut plans = Vec::with_capacity(self.k);
        plans.push(preferred.clone());
        for j in 1..self.k {
            let moves = self.moves(d, j);
            let mut slots = preferred.slots().to_vec();
            let movable = d >= 2 && delta > 0.0 && slots.iter().any(|v| *v > 0.0);
            if movable {
                for _ in 0..moves {
                    let src = loop {
                        let i = rng.gen_range(0..d);
                        if slots[i] > 0.0 {
                            break i;
                        }
                    };
                    let dst = loop {
                        let j = rng.gen_range(0..d);
                        if j != src {
                            break j;
                        }
                    };
                    let amount = delta.min(slots[src]);
                    slots[src] -= amount;
                    slots[dst] += amount;
                }
            }
            plans.push(Plan::new(slots)?);
        }
        PlanSet::new(plans, 0)
    }
}

/// Convenience wrapper using the default quantum (1% of total energy).
pub fn generate_plans(preferred: &Plan, flexibility: f64, k: usize, seed: u64) -> Result<PlanSet> {
    PlanGenerator::new(flexibility, k).generate(preferred, seed)
}

/// Derives an independent sub-seed for `stream` from a base seed.
pub fn derive_seed(seed: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Parameters for synthetic residential populations.
///
/// Preferred profiles are integer-valued (one unit per energy packet) so that
/// different agents frequently hold identical slot values, which is what the
/// exchange protocol matches on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub n: usize,
    pub d: usize,
    pub k: usize,
    pub flexibility: f64,
    /// Appliance activations per agent, inclusive range.
    pub activations: (usize, usize),
    /// Appliance power in units, inclusive range.
    pub power: (u32, u32),
    /// Activation length in slots, inclusive range.
    pub duration: (usize, usize),
    /// Share of activations clustered around the evening peak.
    pub peak_share: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n: 1000,
            d: 144,
            k: 10,
            flexibility: 0.1,
            activations: (2, 6),
            power: (1, 3),
            duration: (3, 18),
            peak_share: 0.6,
        }
    }
}

impl SyntheticConfig {
    pub fn generator(&self) -> PlanGenerator {
        PlanGenerator::new(self.flexibility, self.k).with_quantum(Quantum::Absolute(1.0))
    }

    /// One integer-valued preferred profile.
    pub fn preferred_profile(&self, seed: u64) -> Result<Plan> {
        if self.d == 0 {
            return Err(DsmError::InvalidParameter("d must be positive".into()));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let d = self.d;
        let base = rng.gen_range(0..=1) as f64;
        let mut slots = vec![base; d];
        let count = rng.gen_range(self.activations.0..=self.activations.1.max(self.activations.0));
        for _ in 0..count {
            let start = if rng.gen_bool(self.peak_share.clamp(0.0, 1.0)) {
                // evening peak: triangular around 70% of the horizon
                let centre = 0.7 * d as f64;
                let spread = 0.12 * d as f64;
                let offset = (rng.gen::<f64>() - rng.gen::<f64>()) * spread;
                ((centre + offset).round().max(0.0) as usize).min(d - 1)
            } else {
                rng.gen_range(0..d)
            };
            let len = rng.gen_range(self.duration.0..=self.duration.1.max(self.duration.0));
            let power = rng.gen_range(self.power.0..=self.power.1.max(self.power.0)) as f64;
            for slot in slots.iter_mut().skip(start).take(len) {
                *slot += power;
            }
        }
        Plan::new(slots)
    }

    /// Builds `n` agents, each with a synthetic preferred profile and `k`
    /// generated plans. Agent `a` depends only on `(seed, a)`.
    pub fn population(&self, beta: f64, seed: u64) -> Result<Population> {
        let generator = self.generator();
        let agents = (0..self.n)
            .map(|a| {
                let preferred = self.preferred_profile(derive_seed(seed, 2 * a as u64))?;
                let set = generator.generate(&preferred, derive_seed(seed, 2 * a as u64 + 1))?;
                AgentState::new(a, set, beta)
            })
            .collect::<Result<Vec<_>>>()?;
        Population::new(agents)
    }
}
