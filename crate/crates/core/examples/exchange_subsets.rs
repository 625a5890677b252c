//! Replay random subsets of an exchange log and watch comfort climb.

use dsm_core::harness::{cmd_exchange_subsets, RunConfig};

fn main() -> dsm_core::Result<()> {
    let sizes: Vec<usize> = (1..=9).map(|i| i * 100).collect();
    let analysis = cmd_exchange_subsets(&RunConfig::default(), &sizes, 5)?;
    println!(
        "{} exchanges; comfort {:.4} before, {:.4} after",
        analysis.log_len, analysis.pre_comfort, analysis.post_comfort
    );
    for s in &analysis.summary {
        println!("{:>4} exchanges: comfort {:.4}..{:.4}", s.size, s.min_comfort, s.max_comfort);
    }
    Ok(())
}
