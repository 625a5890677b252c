use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use dsm_core::coordination::CostScaling;
use dsm_core::exchange::AcceptanceRule;
use dsm_core::harness::{self, RunConfig};

#[derive(Parser)]
#[command(name = "dsm", about = "Demand-side management with tree coordination and slot exchange")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Coordinate, exchange and write run artifacts
    Run(Common),
    /// Repeat the pipeline over several beta values
    SweepBeta {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0,0.25,0.5,0.75")]
        betas: Vec<f64>,
    },
    /// Comfort gain over population sizes and agent fractions
    SweepPop {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "200,400,600,800,1000")]
        sizes: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "0.2,0.4,0.6,0.8")]
        fractions: Vec<f64>,
    },
    /// Replay random subsets of one run's exchange log
    ExchangeSubsets {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "100,200,300,400,500,600,700,800,900")]
        sizes: Vec<usize>,
        #[arg(long, default_value_t = 5)]
        sets: usize,
    },
    /// Write a synthetic `agent_<id>.plans` dataset
    GenPlans {
        #[command(flatten)]
        common: Common,
        /// Output directory for the plan files
        #[arg(long)]
        dir: PathBuf,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Mode {
    Literal,
    Strict,
}

#[derive(Clone, Copy, ValueEnum)]
enum Scaling {
    Raw,
    MinMax,
}

#[derive(Args)]
struct Common {
    /// Start from a saved config.json; other flags override it
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    agents: Option<usize>,
    /// Plans per agent (synthetic data)
    #[arg(long)]
    plans: Option<usize>,
    /// Slots per plan (synthetic data)
    #[arg(long)]
    slots: Option<usize>,
    #[arg(long)]
    flexibility: Option<f64>,
    #[arg(long)]
    beta: Option<f64>,
    #[arg(long)]
    iterations: Option<usize>,
    /// Overridden by DSM_SEED when set
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    data_seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long, value_enum)]
    mode: Option<Mode>,
    #[arg(long, value_enum)]
    scaling: Option<Scaling>,
    #[arg(long)]
    tolerance: Option<f64>,
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn into_config(self) -> Result<RunConfig> {
        let mut c = match &self.config {
            Some(path) => RunConfig::load(path).with_context(|| format!("reading {}", path.display()))?,
            None => RunConfig::default(),
        };
        if self.dataset.is_some() {
            c.dataset = self.dataset;
        }
        if self.agents.is_some() {
            c.agents = self.agents;
        }
        if let Some(k) = self.plans {
            c.synthetic.k = k;
        }
        if let Some(d) = self.slots {
            c.synthetic.d = d;
        }
        if let Some(f) = self.flexibility {
            c.synthetic.flexibility = f;
        }
        if let Some(b) = self.beta {
            c.beta = b;
        }
        if let Some(i) = self.iterations {
            c.iterations = i;
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(s) = self.data_seed {
            c.data_seed = s;
        }
        if let Some(r) = self.repeats {
            c.repeats = r;
        }
        if let Some(m) = self.mode {
            c.mode = match m {
                Mode::Literal => AcceptanceRule::Literal,
                Mode::Strict => AcceptanceRule::Strict,
            };
        }
        if let Some(s) = self.scaling {
            c.scaling = match s {
                Scaling::Raw => CostScaling::Raw,
                Scaling::MinMax => CostScaling::MinMax,
            };
        }
        if let Some(t) = self.tolerance {
            c.tolerance = t;
        }
        if self.out.is_some() {
            c.out = self.out;
        }
        c.apply_seed_env()?;
        Ok(c)
    }
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run(common) => {
            let config = common.into_config()?;
            let r = harness::cmd_run(&config)?;
            let m = &r.metrics;
            println!("agents               {}", m.n);
            println!("global cost          {} -> {}", r.trace.initial_cost, r.trace.final_cost());
            println!("inefficiency         {} -> {} (delta {})", m.inefficiency_pre, m.inefficiency, r.inefficiency_delta());
            println!("mean comfort         {:.4} -> {:.4}", m.mean_comfort_pre, m.mean_comfort);
            println!("unfairness           {:.4} -> {:.4}", m.unfairness_pre, m.unfairness);
            println!("exchanges            {} of {} requests ({:.4})", m.exchanges, m.requests, m.exchange_success_rate);
            println!("participation        {:.4}", m.participation_fraction);
            println!("positive gain share  {:.4}", m.positive_gain_fraction);
        }
        Command::SweepBeta { common, betas } => {
            let config = common.into_config()?;
            let sweep = harness::cmd_sweep_beta(&config, &betas)?;
            println!("beta,mean_comfort_gain,participation,positive_gain,inefficiency,unfairness_pre,unfairness_post");
            for s in &sweep.summary {
                println!(
                    "{},{:.5},{:.4},{:.4},{:.3},{:.5},{:.5}",
                    s.beta,
                    s.mean_comfort_gain,
                    s.participation_fraction,
                    s.positive_gain_fraction,
                    s.inefficiency_post,
                    s.unfairness_pre,
                    s.unfairness_post
                );
            }
        }
        Command::SweepPop { common, sizes, fractions } => {
            let config = common.into_config()?;
            let sweep = harness::cmd_sweep_population(&config, &sizes, &fractions)?;
            println!("size,fraction,mean_comfort_gain");
            for s in &sweep.summary {
                println!("{},{},{:.5}", s.size, s.fraction, s.mean_comfort_gain);
            }
        }
        Command::ExchangeSubsets { common, sizes, sets } => {
            let config = common.into_config()?;
            let a = harness::cmd_exchange_subsets(&config, &sizes, sets)?;
            println!("log length {}, comfort {:.4} -> {:.4}", a.log_len, a.pre_comfort, a.post_comfort);
            println!("size,min_comfort,max_comfort,spread");
            for s in &a.summary {
                println!("{},{:.5},{:.5},{:.5}", s.size, s.min_comfort, s.max_comfort, s.spread);
            }
        }
        Command::GenPlans { common, dir } => {
            let config = common.into_config()?;
            let files = harness::cmd_gen_plans(&config, &dir)?;
            println!("wrote {} plan files to {}", files.len(), dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
