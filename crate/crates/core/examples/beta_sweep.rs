//! Comfort gain, inefficiency and unfairness across discomfort weights.

use dsm_core::harness::{cmd_sweep_beta, RunConfig};

fn main() -> dsm_core::Result<()> {
    let config = RunConfig { repeats: 3, ..RunConfig::default() };
    let sweep = cmd_sweep_beta(&config, &[0.0, 0.25, 0.5, 0.75])?;
    println!("beta  gain    advertised  inefficiency  unfairness");
    for s in &sweep.summary {
        println!(
            "{:<5} {:.4}  {:.3}       {:>10.1}    {:.3} -> {:.3}",
            s.beta, s.mean_comfort_gain, s.participation_fraction, s.inefficiency_post, s.unfairness_pre, s.unfairness_post
        );
    }
    Ok(())
}
