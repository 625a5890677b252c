//! Run the tree-based plan selection on its own and print the cost trace.

use dsm_core::coordination::{build_tree, run_coordination, CoordinationConfig};
use dsm_core::generator::SyntheticConfig;
use dsm_core::metrics::average_discomfort;

fn main() -> dsm_core::Result<()> {
    let synthetic = SyntheticConfig { n: 200, ..SyntheticConfig::default() };
    for beta in [0.0, 0.5, 1.0] {
        let mut population = synthetic.population(beta, 0)?;
        let tree = build_tree(population.len(), 1)?;
        let trace = run_coordination(&mut population, &tree, &CoordinationConfig { iterations: 20, ..Default::default() })?;
        let costs = trace.costs();
        println!(
            "beta {beta}: {} levels, cost {:.1} -> {:.1}, average discomfort {:.3}, non-increasing {}",
            tree.depth(),
            trace.initial_cost,
            costs.last().copied().unwrap_or(trace.initial_cost),
            average_discomfort(&population)?,
            trace.is_non_increasing()
        );
    }
    Ok(())
}
