//! Brute-force oracles shared by the integration suites.
#![allow(dead_code)]

use dsm_core::generator::{PlanGenerator, Quantum};
use dsm_core::plan::{inefficiency, AgentState, Plan, Population};
use dsm_core::AcceptanceRule;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random integer-valued population with `n` agents, `k` plans and `d`
/// slots. Values stay small so that slot values collide between agents.
pub fn small_population(n: usize, k: usize, d: usize, beta: f64, seed: u64) -> Population {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let generator = PlanGenerator::new(1.0, k).with_quantum(Quantum::Absolute(1.0));
    let agents = (0..n)
        .map(|a| {
            let slots: Vec<f64> = (0..d).map(|_| rng.gen_range(0..4) as f64).collect();
            let set = generator.generate(&Plan::new(slots).unwrap(), rng.gen()).unwrap();
            AgentState::new(a, set, beta).unwrap()
        })
        .collect();
    Population::new(agents).unwrap()
}

/// Every joint selection as one index per agent, in lexicographic order.
pub fn joint_selections(sizes: &[usize]) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    for &k in sizes {
        out = out
            .into_iter()
            .flat_map(|prefix| {
                (0..k).map(move |s| {
                    let mut v = prefix.clone();
                    v.push(s);
                    v
                })
            })
            .collect();
    }
    out
}

/// Variance cost of every joint selection.
pub fn enumerate_costs(population: &Population) -> Vec<f64> {
    let d = population.d();
    let sizes: Vec<usize> = population.agents().iter().map(|a| a.plan_set().len()).collect();
    joint_selections(&sizes)
        .into_iter()
        .map(|choice| {
            let mut totals = vec![0.0; d];
            for (agent, &s) in population.agents().iter().zip(&choice) {
                for (t, v) in totals.iter_mut().zip(agent.plan_set().plans()[s].slots()) {
                    *t += v;
                }
            }
            inefficiency(&totals, None).unwrap()
        })
        .collect()
}

/// Every (initiator, acceptor, slot) swap the protocol would still carry
/// out, checked directly against the plans.
pub fn admissible_exchanges(population: &Population, rule: AcceptanceRule) -> Vec<(usize, usize, usize)> {
    let mut found = Vec::new();
    let agents = population.agents();
    for i in agents {
        for j in agents {
            if i.id == j.id {
                continue;
            }
            for s in 0..population.d() {
                let (held_i, want_i) = (i.selected().slots()[s], i.preferred().slots()[s]);
                let (held_j, want_j) = (j.selected().slots()[s], j.preferred().slots()[s]);
                let wants = held_i != want_i;
                let offers = held_j == want_i && held_j != want_j;
                let agrees = match rule {
                    AcceptanceRule::Literal => true,
                    AcceptanceRule::Strict => (held_i - want_j).abs() <= (held_j - want_j).abs(),
                };
                if wants && offers && agrees {
                    found.push((i.id, j.id, s));
                }
            }
        }
    }
    found
}

/// Sum of every selected value in the population.
pub fn energy(population: &Population) -> f64 {
    population
        .agents()
        .iter()
        .flat_map(|a| a.selected().slots().iter())
        .sum()
}
