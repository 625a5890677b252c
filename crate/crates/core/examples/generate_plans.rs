//! Derive alternative plans from one preferred profile and show how far
//! each drifts from it.

use dsm_core::generator::{MoveSchedule, PlanGenerator, Quantum, SyntheticConfig};
use dsm_core::plan::discomfort;

fn main() -> dsm_core::Result<()> {
    let synthetic = SyntheticConfig { d: 48, ..SyntheticConfig::default() };
    let preferred = synthetic.preferred_profile(7)?;
    println!("preferred total energy {}", preferred.total_energy());

    for schedule in [MoveSchedule::Graded, MoveSchedule::Uniform] {
        let set = PlanGenerator::new(0.2, 6)
            .with_quantum(Quantum::Absolute(1.0))
            .with_schedule(schedule)
            .generate(&preferred, 11)?;
        let scale = set.discomfort_scale();
        println!("{schedule:?}:");
        for (j, plan) in set.plans().iter().enumerate() {
            let d = discomfort(plan.slots(), preferred.slots(), scale)?;
            println!("  plan {j}: total {:>4}, discomfort {d:.3}", plan.total_energy());
        }
    }
    Ok(())
}
