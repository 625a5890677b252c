mod common;

use std::fs;

use dsm_core::exchange::{replay, write_exchange_csv};
use dsm_core::generator::SyntheticConfig;
use dsm_core::harness::{
    cmd_exchange_subsets, cmd_gen_plans, cmd_run, cmd_sweep_beta, cmd_sweep_population, replay_comfort, run_pipeline,
    RunConfig,
};
use dsm_core::io::{load_dataset, write_dataset};
use dsm_core::DsmError;

fn small(n: usize) -> RunConfig {
    RunConfig {
        synthetic: SyntheticConfig {
            n,
            d: 48,
            k: 6,
            ..SyntheticConfig::default()
        },
        iterations: 10,
        repeats: 3,
        ..RunConfig::default()
    }
}

#[test]
fn dataset_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let pop = small(25).population().unwrap();
    let files = write_dataset(&pop, dir.path()).unwrap();
    assert_eq!(files.len(), 25);

    let (loaded, manifest) = load_dataset(dir.path(), None).unwrap();
    assert_eq!((manifest.n, manifest.d, manifest.k), (25, 48, 6));
    for (a, b) in pop.agents().iter().zip(loaded.agents()) {
        assert_eq!(a.plan_set().plans(), b.plan_set().plans());
        assert_eq!(a.preferred(), b.preferred());
    }
}

#[test]
fn load_limit_takes_lowest_ids() {
    let dir = tempfile::tempdir().unwrap();
    let pop = small(12).population().unwrap();
    write_dataset(&pop, dir.path()).unwrap();
    let (loaded, manifest) = load_dataset(dir.path(), Some(5)).unwrap();
    assert_eq!(loaded.len(), 5);
    // agent_10 and agent_11 sort after agent_2 lexically but not numerically
    for (i, file) in manifest.files.iter().enumerate() {
        assert_eq!(file.file_name().unwrap().to_str().unwrap(), format!("agent_{i}.plans"));
        assert_eq!(loaded.agents()[i].preferred(), pop.agents()[i].preferred());
    }
}

#[test]
fn inconsistent_dataset_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("agent_0.plans"), "0:1,2,3\n1:2,2,2\n").unwrap();
    fs::write(dir.path().join("agent_1.plans"), "0:1,2\n").unwrap();
    assert!(matches!(load_dataset(dir.path(), None), Err(DsmError::Dataset(_))));
    let empty = tempfile::tempdir().unwrap();
    assert!(matches!(load_dataset(empty.path(), None), Err(DsmError::Dataset(_))));
}

#[test]
fn run_from_generated_dataset_matches_synthetic_run() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(40);
    cmd_gen_plans(&cfg, dir.path()).unwrap();
    let from_disk = RunConfig {
        dataset: Some(dir.path().to_path_buf()),
        ..cfg.clone()
    };
    let a = cmd_run(&cfg).unwrap();
    let b = cmd_run(&from_disk).unwrap();
    assert_eq!(a.exchange.records, b.exchange.records);
    assert_eq!(a.trace.costs(), b.trace.costs());
}

#[test]
fn saved_run_has_every_artifact() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        out: Some(dir.path().join("run")),
        ..small(60)
    };
    let report = cmd_run(&cfg).unwrap();
    let out = dir.path().join("run");
    for f in ["metrics.json", "trace.csv", "exchanges.csv", "config.json", "agents.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    let trace = fs::read_to_string(out.join("trace.csv")).unwrap();
    assert!(trace.starts_with("iteration,global_cost,avg_discomfort\n"));
    assert_eq!(trace.lines().count(), cfg.iterations + 1);

    let exchanges = fs::read_to_string(out.join("exchanges.csv")).unwrap();
    assert_eq!(exchanges.lines().count(), report.exchange.records.len() + 1);

    let metrics: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("metrics.json")).unwrap()).unwrap();
    assert_eq!(metrics["exchanges"], report.exchange.records.len());

    let reloaded = RunConfig::load(&out.join("config.json")).unwrap();
    assert_eq!(reloaded, cfg);
    let again = cmd_run(&RunConfig { out: None, ..reloaded }).unwrap();
    assert_eq!(again.exchange.records, report.exchange.records);
}

#[test]
fn no_exchanges_gives_header_only_csv() {
    let mut buf = Vec::new();
    write_exchange_csv(&[], &mut buf).unwrap();
    assert_eq!(
        String::from_utf8(buf).unwrap(),
        "initiator,acceptor,slot,initiator_gave,initiator_received,initiator_comfort_delta,acceptor_comfort_delta,sweep\n"
    );
}

#[test]
fn singleton_population_never_exchanges() {
    let report = cmd_run(&small(1)).unwrap();
    assert!(report.exchange.records.is_empty());
    assert_eq!(report.metrics.mean_comfort_gain, 0.0);
    assert_eq!(report.inefficiency_delta(), 0.0);
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = small(80);
    let a = cmd_run(&cfg).unwrap();
    let b = cmd_run(&cfg).unwrap();
    assert_eq!(a.exchange.records, b.exchange.records);
    assert_eq!(a.metrics, b.metrics);
    let c = cmd_run(&RunConfig { seed: 2, ..cfg }).unwrap();
    assert_ne!(a.exchange.records, c.exchange.records);
}

#[test]
fn full_replay_reproduces_post_state() {
    let report = run_pipeline(&small(120), small(120).population().unwrap()).unwrap();
    assert!(!report.exchange.records.is_empty());
    let mut pop = report.pre_exchange.clone();
    let stats = replay(&mut pop, &report.exchange.records);
    assert_eq!(stats.skipped, 0);
    assert_eq!(pop.selections(), report.population.selections());

    let (empty, _) = replay_comfort(&report.pre_exchange, &[]);
    assert_eq!(empty, report.metrics.mean_comfort_pre);
}

#[test]
fn subset_replay_keeps_totals_and_clamps() {
    let cfg = small(150);
    let report = run_pipeline(&cfg, cfg.population().unwrap()).unwrap();
    let totals = report.pre_exchange.global_response();
    let log = &report.exchange.records;
    for stride in [2, 3, 7] {
        let subset: Vec<_> = log.iter().step_by(stride).cloned().collect();
        let mut pop = report.pre_exchange.clone();
        let stats = replay(&mut pop, &subset);
        assert_eq!(stats.applied + stats.skipped, subset.len());
        assert_eq!(pop.global_response(), totals);
    }

    let huge = log.len() + 50;
    let analysis = cmd_exchange_subsets(&cfg, &[0, huge], 3).unwrap();
    let zero = &analysis.summary[0];
    assert_eq!(zero.min_comfort, analysis.pre_comfort);
    assert_eq!(zero.spread, 0.0);
    let full = &analysis.summary[1];
    assert_eq!(full.min_comfort, analysis.post_comfort);
    assert!(analysis.rows.iter().filter(|r| r.size == huge).all(|r| r.drawn == log.len()));
}

#[test]
fn subset_spread_grows_with_subset_size() {
    let analysis = cmd_exchange_subsets(&RunConfig::default(), &[0, 100, 900], 5).unwrap();
    let spreads: Vec<f64> = analysis.summary.iter().map(|s| s.spread).collect();
    assert_eq!(spreads[0], 0.0);
    assert!(spreads[2] > spreads[1] && spreads[1] > 0.0, "{spreads:?}");
}

#[test]
fn beta_sweep_rows_are_regenerable() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        out: Some(dir.path().to_path_buf()),
        ..small(50)
    };
    let sweep = cmd_sweep_beta(&cfg, &[0.0, 0.5]).unwrap();
    assert_eq!(sweep.runs.len(), 6);
    assert!(dir.path().join("sweep_beta.csv").is_file());
    let row = &sweep.runs[4];
    let again = cmd_run(&RunConfig {
        beta: row.beta,
        seed: row.seed,
        data_seed: row.data_seed,
        out: None,
        ..cfg
    })
    .unwrap();
    assert_eq!(again.metrics.mean_comfort_gain, row.mean_comfort_gain);
    assert!(cmd_sweep_beta(&small(5), &[1.5]).is_err());
}

#[test]
fn population_sweep_gain_grows_with_size_and_fraction() {
    let cfg = RunConfig {
        repeats: 3,
        ..RunConfig::default()
    };
    let sweep = cmd_sweep_population(&cfg, &[200, 1000], &[0.4, 0.6]).unwrap();
    let gain = |size, fraction| {
        sweep
            .summary
            .iter()
            .find(|s| s.size == size && s.fraction == fraction)
            .unwrap()
            .mean_comfort_gain
    };
    assert!(gain(1000, 0.6) > gain(1000, 0.4));
    assert!(gain(1000, 0.6) >= gain(200, 0.6));
    assert!(gain(1000, 0.4) >= gain(200, 0.4));
    assert!(cmd_sweep_population(&cfg, &[100], &[0.0]).is_err());
}

#[test]
fn population_sweep_cannot_exceed_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small(20);
    cmd_gen_plans(&cfg, dir.path()).unwrap();
    let on_disk = RunConfig {
        dataset: Some(dir.path().to_path_buf()),
        ..cfg
    };
    assert!(cmd_sweep_population(&on_disk, &[30], &[0.5]).is_err());
    let ok = cmd_sweep_population(&on_disk, &[20], &[0.5]).unwrap();
    assert!(ok.runs.iter().all(|r| r.agents == 10));
}

#[test]
fn seed_env_overrides_seed() {
    // the only test touching DSM_SEED
    std::env::set_var(dsm_core::harness::SEED_ENV, "42");
    let mut cfg = small(3);
    cfg.apply_seed_env().unwrap();
    std::env::set_var(dsm_core::harness::SEED_ENV, "nope");
    assert!(small(3).apply_seed_env().is_err());
    std::env::remove_var(dsm_core::harness::SEED_ENV);
    assert_eq!(cfg.seed, 42);
}

#[test]
fn small_instances_reach_exchange_fixed_point() {
    for seed in 0..40 {
        let pop = common::small_population(5, 3, 4, 0.0, seed);
        let cfg = RunConfig {
            iterations: 5,
            ..RunConfig::default()
        };
        let report = run_pipeline(&cfg, pop).unwrap();
        assert!(common::admissible_exchanges(&report.population, cfg.mode).is_empty());
        assert_eq!(common::energy(&report.population), common::energy(&report.pre_exchange));
    }
}
