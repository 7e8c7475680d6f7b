//! Command-line front end.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::backtest::{run_crp, run_trp, BacktestConfig, CostModel};
use crate::error::{Error, Result};
use crate::estimate::{estimate_market, EstimatorConfig};
use crate::io::{fmt_num, read_market, read_path, write_market, write_path};
use crate::market::TrpParams;
use crate::optimizer::{optimize, write_grid_csv, GridSpec, Objective};
use crate::recursion::expected_wealth;

#[derive(Debug, Parser)]
#[command(
    name = "trp",
    version,
    about = "Threshold rebalanced portfolios under transaction costs"
)]
pub struct Cli {
    /// Output directory.
    #[arg(long, global = true, default_value = ".")]
    pub out: PathBuf,
    /// Seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Grid search for (b*, ε*); writes grid.csv.
    Optimize(OptimizeArgs),
    /// E[S(n)] curve of a fixed TRP; writes expected_wealth.csv.
    Evaluate(EvaluateArgs),
    /// Adaptive TRP against a CRP on a price path; writes wealth_trp.csv, wealth_crp.csv, summary.json.
    Backtest(BacktestArgs),
    /// Quantize a price path into a market file; writes market.toml.
    Estimate(EstimateArgs),
    /// Sample a price path from a market; writes path.csv.
    Simulate(SimulateArgs),
}

/// `lo:hi:steps`
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RangeSpec {
    pub lo: f64,
    pub hi: f64,
    pub steps: usize,
}

impl FromStr for RangeSpec {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        let parts: Vec<&str> = s.split(':').collect();
        let [lo, hi, steps] = parts.as_slice() else {
            return Err(format!("expected lo:hi:steps, got `{s}`"));
        };
        let num = |v: &str| v.trim().parse::<f64>().map_err(|e| format!("`{v}`: {e}"));
        Ok(RangeSpec {
            lo: num(lo)?,
            hi: num(hi)?,
            steps: steps
                .trim()
                .parse()
                .map_err(|e| format!("`{steps}`: {e}"))?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ObjectiveArg {
    Auto,
    Eigenvalue,
    Horizon,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// b grid as lo:hi:steps.
    #[arg(long, default_value = "0.05:0.95:37")]
    pub grid_b: RangeSpec,
    /// ε grid as lo:hi:steps.
    #[arg(long, default_value = "0.01:0.49:49")]
    pub grid_eps: RangeSpec,
    #[arg(long, value_enum, default_value = "auto")]
    pub objective: ObjectiveArg,
    /// Horizon N of the finite-horizon objective.
    #[arg(long, default_value_t = 200)]
    pub horizon: usize,
    /// Recursion states kept per period by the finite-horizon objective.
    #[arg(long, default_value_t = 256)]
    pub prune: usize,
    /// Largest chain treated as feasible.
    #[arg(long, default_value_t = 2000)]
    pub max_states: usize,
}

impl GridArgs {
    fn spec(&self) -> GridSpec {
        let prune_to = Some(self.prune);
        let periods = self.horizon;
        GridSpec {
            b_range: (self.grid_b.lo, self.grid_b.hi),
            b_steps: self.grid_b.steps,
            eps_range: (self.grid_eps.lo, self.grid_eps.hi),
            eps_steps: self.grid_eps.steps,
            objective: match self.objective {
                ObjectiveArg::Auto => Objective::Auto { periods, prune_to },
                ObjectiveArg::Eigenvalue => Objective::Eigenvalue,
                ObjectiveArg::Horizon => Objective::FiniteHorizon { periods, prune_to },
            },
            max_states: self.max_states,
        }
    }
}

#[derive(Debug, Args)]
pub struct OptimizeArgs {
    /// Market file (.toml or .json).
    #[arg(long)]
    pub market: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub cost: f64,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub market: PathBuf,
    #[arg(long)]
    pub b: f64,
    #[arg(long)]
    pub eps: f64,
    #[arg(long, default_value_t = 0.0)]
    pub cost: f64,
    #[arg(long, default_value_t = 100)]
    pub periods: usize,
    /// Keep at most this many recursion states per period.
    #[arg(long)]
    pub prune: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CostModelArg {
    Approximate,
    Exact,
}

#[derive(Debug, Args)]
pub struct BacktestArgs {
    /// Price path CSV with header period,x1,x2.
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub cost: f64,
    /// Estimation window; all history when omitted.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
    /// Periods between re-estimations.
    #[arg(long, default_value_t = 1000)]
    pub block: usize,
    #[arg(long, default_value_t = 1000)]
    pub initial_window: usize,
    #[arg(long, value_enum, default_value = "approximate")]
    pub cost_model: CostModelArg,
    /// Target fraction of the CRP baseline.
    #[arg(long, default_value_t = 0.5)]
    pub crp_b: f64,
    #[command(flatten)]
    pub grid: GridArgs,
}

#[derive(Debug, Args)]
pub struct EstimateArgs {
    #[arg(long)]
    pub path: PathBuf,
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long, default_value_t = 10)]
    pub bins: usize,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[arg(long)]
    pub market: PathBuf,
    #[arg(long, default_value_t = 1000)]
    pub periods: usize,
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

/// Runs one command, writing human-readable output to `stdout`.
pub fn run<W: Write>(cli: &Cli, stdout: &mut W) -> Result<()> {
    let out = &cli.out;
    match &cli.command {
        Command::Optimize(args) => {
            let market = read_market(&args.market)?;
            let res = optimize(&market, args.cost, &args.grid.spec())?;
            let mut f = create(out, "grid.csv")?;
            write_grid_csv(&res.table, &mut f)?;
            f.flush()?;
            writeln!(
                stdout,
                "b*={} eps*={} g={}",
                fmt_num(res.b),
                fmt_num(res.eps),
                fmt_num(res.growth)
            )?;
        }
        Command::Evaluate(args) => {
            let market = read_market(&args.market)?;
            let params = TrpParams::new(args.b, args.eps, args.cost)?;
            let wealth = expected_wealth(&market, &params, args.periods, args.prune)?;
            let mut f = create(out, "expected_wealth.csv")?;
            writeln!(f, "period,expected_wealth,growth")?;
            for (i, w) in wealth.iter().enumerate() {
                let n = i + 1;
                writeln!(f, "{n},{},{}", fmt_num(*w), fmt_num(w.ln() / n as f64))?;
            }
            f.flush()?;
            let last = wealth[wealth.len() - 1];
            writeln!(
                stdout,
                "E[S({})]={} g={}",
                wealth.len(),
                fmt_num(last),
                fmt_num(last.ln() / wealth.len() as f64)
            )?;
        }
        Command::Backtest(args) => {
            let path = read_path(&args.path)?;
            let config = BacktestConfig {
                block: args.block,
                initial_window: args.initial_window,
                cost: args.cost,
                estimator: EstimatorConfig {
                    window: args.window,
                    bins: args.bins,
                },
                grid: args.grid.spec(),
                cost_model: match args.cost_model {
                    CostModelArg::Approximate => CostModel::Approximate,
                    CostModelArg::Exact => CostModel::ExactSelfFinancing,
                },
            };
            let trp = run_trp(&path, &config)?;
            let invested = path.slice(config.initial_window, path.len());
            let crp = run_crp(&invested, args.crp_b, args.cost, config.cost_model)?;
            let mut f = create(out, "wealth_trp.csv")?;
            trp.write_csv(&mut f)?;
            f.flush()?;
            let mut f = create(out, "wealth_crp.csv")?;
            crp.write_csv(&mut f)?;
            f.flush()?;
            let summary = serde_json::json!({
                "trp": trp.summary_json(),
                "crp": crp.summary_json(),
            });
            let mut f = create(out, "summary.json")?;
            serde_json::to_writer_pretty(&mut f, &summary)
                .map_err(|e| Error::Parse(e.to_string()))?;
            writeln!(f)?;
            f.flush()?;
            writeln!(
                stdout,
                "trp={} crp={} rebalances={}",
                fmt_num(trp.terminal_wealth()),
                fmt_num(crp.terminal_wealth()),
                trp.rebalance_count
            )?;
        }
        Command::Estimate(args) => {
            let path = read_path(&args.path)?;
            let market = estimate_market(
                &path,
                &EstimatorConfig {
                    window: args.window,
                    bins: args.bins,
                },
            )?;
            std::fs::create_dir_all(out)?;
            write_market(&out.join("market.toml"), &market)?;
            writeln!(stdout, "atoms={}", market.k())?;
        }
        Command::Simulate(args) => {
            let market = read_market(&args.market)?;
            let path = market.sample_path(args.periods, cli.seed);
            std::fs::create_dir_all(out)?;
            write_path(&out.join("path.csv"), &path)?;
            writeln!(stdout, "periods={}", path.len())?;
        }
    }
    Ok(())
}
