//! Larger markets give agents more partners to trade with.

use dsm_core::harness::{cmd_sweep_population, RunConfig};

fn main() -> dsm_core::Result<()> {
    let config = RunConfig { repeats: 2, ..RunConfig::default() };
    let sweep = cmd_sweep_population(&config, &[200, 600, 1000], &[0.4, 0.8])?;
    for s in &sweep.summary {
        println!("size {:>4}, fraction {}: mean comfort gain {:.4}", s.size, s.fraction, s.mean_comfort_gain);
    }
    Ok(())
}
