//! Write a plan dataset, load part of it back and save one run's artifacts.

use dsm_core::harness::{cmd_gen_plans, cmd_run, RunConfig};
use dsm_core::io::load_dataset;

fn main() -> anyhow::Result<()> {
    let root = std::env::temp_dir().join(format!("dsm-dataset-io-{}", std::process::id()));
    let plans = root.join("plans");
    let config = RunConfig { agents: Some(50), ..RunConfig::default() };
    let files = cmd_gen_plans(&config, &plans)?;
    println!("wrote {} files, first {}", files.len(), files[0].display());
    println!("{}", std::fs::read_to_string(&files[0])?.lines().next().unwrap_or_default());

    let (population, manifest) = load_dataset(&plans, Some(20))?;
    println!("loaded n={} d={} k={}", manifest.n, manifest.d, manifest.k);
    assert_eq!(population.len(), 20);

    let run = RunConfig {
        dataset: Some(plans),
        agents: Some(20),
        out: Some(root.join("run")),
        ..RunConfig::default()
    };
    let report = cmd_run(&run)?;
    println!("{} exchanges, artifacts in {}", report.exchange.records.len(), root.join("run").display());
    for entry in std::fs::read_dir(root.join("run"))? {
        println!("  {}", entry?.file_name().to_string_lossy());
    }
    std::fs::remove_dir_all(&root)?;
    Ok(())
}
