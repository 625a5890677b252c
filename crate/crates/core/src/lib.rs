//! Decentralized demand-side management.
//!
//! Agents each hold a set of equal-energy consumption plans. A tree-based
//! collective optimisation first picks one plan per agent, trading the
//! agent's discomfort against the variance of the aggregate demand with a
//! per-agent weight `beta`. A blackboard-mediated exchange phase then lets
//! agents swap individual time-slot values with each other, which raises
//! comfort while leaving every per-slot aggregate, and therefore the
//! inefficiency cost, exactly as it was.
//!
//! ```
//! use dsm_core::generator::SyntheticConfig;
//! use dsm_core::harness::{run_pipeline, RunConfig};
//!
//! let config = RunConfig {
//!     synthetic: SyntheticConfig { n: 30, d: 24, k: 4, ..Default::default() },
//!     iterations: 5,
//!     ..Default::default()
//! };
//! let report = run_pipeline(&config, config.population().unwrap()).unwrap();
//! assert_eq!(report.metrics.inefficiency, report.metrics.inefficiency_pre);
//! ```

pub mod coordination;
pub mod error;
pub mod exchange;
pub mod generator;
pub mod harness;
pub mod io;
pub mod metrics;
pub mod plan;

/// Index of an agent within its population.
pub type AgentId = usize;

pub use coordination::{build_tree, run_coordination, select_plan, CoordinationConfig, IterationTrace, TreeTopology};
pub use error::{DsmError, ExchangeError, Result};
pub use exchange::{
    advertise, exchange_slot, find_match, run_exchange_phase, AcceptanceRule, Blackboard, ExchangeConfig,
    ExchangeRecord,
};
pub use generator::{generate_plans, PlanGenerator, SyntheticConfig};
pub use harness::{RunConfig, RunReport};
pub use io::{load_dataset, save_run};
pub use metrics::{average_discomfort, comfort_gain, unfairness, MetricsReport};
pub use plan::{comfort, discomfort, inefficiency, total_energy, AgentState, GlobalResponse, Plan, PlanSet, Population};
