//! Two households trade evening and morning slots through the blackboard.

use dsm_core::exchange::{run_exchange_phase, AcceptanceRule, Blackboard, ExchangeConfig};
use dsm_core::plan::{AgentState, Plan, PlanSet, Population};

fn agent(id: usize, preferred: &[f64], selected: &[f64]) -> dsm_core::Result<AgentState> {
    let set = PlanSet::new(vec![Plan::new(preferred.to_vec())?, Plan::new(selected.to_vec())?], 0)?;
    let mut a = AgentState::new(id, set, 0.0)?;
    a.select(1);
    Ok(a)
}

fn main() -> dsm_core::Result<()> {
    // each holds the other's preferred values in slots 1 and 2
    let mut population = Population::new(vec![
        agent(0, &[1.0, 3.0, 0.0, 1.0], &[1.0, 0.0, 3.0, 1.0])?,
        agent(1, &[2.0, 0.0, 3.0, 0.0], &[2.0, 3.0, 0.0, 0.0])?,
    ])?;
    let totals = population.global_response();
    println!("comfort before {:?}", population.comforts());

    let mut board = Blackboard::new();
    board.sync(&population);
    let outcome = run_exchange_phase(&mut population, &mut board, 3, &ExchangeConfig {
        rule: AcceptanceRule::Literal,
        ..Default::default()
    })?;
    for r in &outcome.records {
        println!(
            "agent {} gives {} for {} from agent {} at slot {}",
            r.initiator, r.initiator_gave, r.initiator_received, r.acceptor, r.slot
        );
    }
    println!("comfort after  {:?}", population.comforts());
    println!("per-slot totals unchanged: {}", population.global_response() == totals);
    Ok(())
}
