//! Running TRP and CRP strategies on a two-asset price-relative path.
//!
//! The adaptive protocol estimates the market on the leading `initial_window`
//! periods, picks (b, ε) on a grid, invests for `block` periods, then re-estimates on
//! the history seen so far and repeats.

use std::io::Write;

use crate::error::{Error, Result};
use crate::estimate::{estimate_market, EstimatorConfig};
use crate::io::fmt_num;
use crate::market::{PricePath, TrpParams};
use crate::optimizer::{optimize, GridSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CostModel {
    /// S ← S·(1 − c·|b′ − b|).
    #[default]
    Approximate,
    /// The asset being sold pays c on the sold amount and funds the purchase.
    ExactSelfFinancing,
}

impl CostModel {
    /// Wealth lost when moving from fraction `drifted` to `target` with wealth `wealth`.
    pub fn cost(self, wealth: f64, drifted: f64, target: f64, c: f64) -> f64 {
        match self {
            CostModel::Approximate => wealth * c * (drifted - target).abs(),
            CostModel::ExactSelfFinancing => {
                if drifted > target {
                    c * wealth * (drifted - target) / (1.0 - c * target)
                } else {
                    c * wealth * (target - drifted) / (1.0 - c * (1.0 - target))
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestConfig {
    /// Periods between re-estimations.
    pub block: usize,
    /// Leading periods used only for the first estimate.
    pub initial_window: usize,
    pub cost: f64,
    pub estimator: EstimatorConfig,
    pub grid: GridSpec,
    pub cost_model: CostModel,
}

impl Default for BacktestConfig {
    fn default() -> Self {
        Self {
            block: 1000,
            initial_window: 1000,
            cost: 0.0,
            estimator: EstimatorConfig::default(),
            grid: GridSpec::default(),
            cost_model: CostModel::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PeriodRecord {
    pub period: usize,
    /// Wealth after the period's trades.
    pub wealth: f64,
    /// Fraction in asset 1 held into the next period.
    pub portfolio: f64,
    pub rebalanced: bool,
    pub cost_paid: f64,
}

/// Parameters chosen for one investment block.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockChoice {
    /// First path row (0-based) invested with these parameters.
    pub start: usize,
    pub b: f64,
    pub eps: f64,
    pub growth: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BacktestResult {
    pub records: Vec<PeriodRecord>,
    pub rebalance_count: usize,
    pub total_cost: f64,
    pub blocks: Vec<BlockChoice>,
}

impl BacktestResult {
    pub fn terminal_wealth(&self) -> f64 {
        self.records.last().map_or(1.0, |r| r.wealth)
    }

    /// S(0) = 1 followed by S(1), …, S(N).
    pub fn wealth_curve(&self) -> Vec<f64> {
        std::iter::once(1.0)
            .chain(self.records.iter().map(|r| r.wealth))
            .collect()
    }

    /// CSV with header `period,wealth,portfolio,rebalanced,cost_paid`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "period,wealth,portfolio,rebalanced,cost_paid")?;
        for r in &self.records {
            writeln!(
                out,
                "{},{},{},{},{}",
                r.period,
                fmt_num(r.wealth),
                fmt_num(r.portfolio),
                r.rebalanced as u8,
                fmt_num(r.cost_paid)
            )?;
        }
        Ok(())
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "terminal_wealth": self.terminal_wealth(),
            "periods": self.records.len(),
            "rebalance_count": self.rebalance_count,
            "total_cost": self.total_cost,
            "blocks": self.blocks.iter().map(|b| serde_json::json!({
                "start": b.start,
                "b": b.b,
                "eps": b.eps,
                "growth": b.growth,
            })).collect::<Vec<_>>(),
        })
    }
}

/// Running state of a two-asset portfolio.
#[derive(Debug, Clone, Copy)]
struct Book {
    wealth: f64,
    portfolio: f64,
}

impl Book {
    /// Applies one period of price relatives; returns the drifted fraction.
    fn drift(&mut self, x1: f64, x2: f64) -> f64 {
        let growth = self.portfolio * x1 + (1.0 - self.portfolio) * x2;
        self.wealth *= growth;
        self.portfolio = self.portfolio * x1 / growth;
        self.portfolio
    }

    fn rebalance(&mut self, target: f64, c: f64, model: CostModel) -> f64 {
        let cost = model.cost(self.wealth, self.portfolio, target, c);
        self.wealth -= cost;
        self.portfolio = target;
        cost
    }
}

struct Ledger {
    records: Vec<PeriodRecord>,
    rebalance_count: usize,
    total_cost: f64,
}

impl Ledger {
    fn new(capacity: usize) -> Self {
        Self {
            records: Vec::with_capacity(capacity),
            rebalance_count: 0,
            total_cost: 0.0,
        }
    }

    fn push(&mut self, book: &Book, rebalanced: bool, cost: f64) {
        self.rebalance_count += rebalanced as usize;
        self.total_cost += cost;
        self.records.push(PeriodRecord {
            period: self.records.len() + 1,
            wealth: book.wealth,
            portfolio: book.portfolio,
            rebalanced,
            cost_paid: cost,
        });
    }

    fn finish(self, blocks: Vec<BlockChoice>) -> BacktestResult {
        BacktestResult {
            records: self.records,
            rebalance_count: self.rebalance_count,
            total_cost: self.total_cost,
            blocks,
        }
    }
}

fn trp_period(book: &mut Book, row: &[f64], params: &TrpParams, model: CostModel) -> (bool, f64) {
    let drifted = book.drift(row[0], row[1]);
    if params.contains(drifted) {
        (false, 0.0)
    } else {
        (true, book.rebalance(params.b, params.cost, model))
    }
}

/// TRP with fixed parameters over the whole path, starting at b with wealth 1.
pub fn run_fixed_trp(
    path: &PricePath,
    params: &TrpParams,
    model: CostModel,
) -> Result<BacktestResult> {
    if path.n_assets() != 2 {
        return Err(Error::WrongAssetCount {
            expected: 2,
            actual: path.n_assets(),
        });
    }
    let mut book = Book {
        wealth: 1.0,
        portfolio: params.b,
    };
    let mut ledger = Ledger::new(path.len());
    for row in path.rows() {
        let (rebalanced, cost) = trp_period(&mut book, row, params, model);
        ledger.push(&book, rebalanced, cost);
    }
    let block = BlockChoice {
        start: 0,
        b: params.b,
        eps: params.epsilon,
        growth: f64::NAN,
    };
    Ok(ledger.finish(vec![block]))
}

/// Adaptive TRP: estimate, optimize, invest for a block, repeat.
pub fn run_trp(path: &PricePath, config: &BacktestConfig) -> Result<BacktestResult> {
    if path.n_assets() != 2 {
        return Err(Error::WrongAssetCount {
            expected: 2,
            actual: path.n_assets(),
        });
    }
    if config.block == 0 || config.initial_window == 0 {
        return Err(Error::InvalidParams(
            "block and initial_window must be at least 1".into(),
        ));
    }
    if path.len() <= config.initial_window {
        return Err(Error::PathTooShort {
            len: path.len(),
            needed: config.initial_window,
        });
    }
    let mut book: Option<Book> = None;
    let mut ledger = Ledger::new(path.len() - config.initial_window);
    let mut blocks = Vec::new();
    let mut start = config.initial_window;
    while start < path.len() {
        let market = estimate_market(&path.slice(0, start), &config.estimator)?;
        let best = optimize(&market, config.cost, &config.grid)?;
        let params = TrpParams::new(best.b, best.eps, config.cost)?;
        blocks.push(BlockChoice {
            start,
            b: best.b,
            eps: best.eps,
            growth: best.growth,
        });
        let book = book.get_or_insert(Book {
            wealth: 1.0,
            portfolio: params.b,
        });
        let end = (start + config.block).min(path.len());
        for row in &path.rows()[start..end] {
            let (rebalanced, cost) = trp_period(book, row, &params, config.cost_model);
            ledger.push(book, rebalanced, cost);
        }
        start = end;
    }
    Ok(ledger.finish(blocks))
}

/// Constant rebalanced portfolio: back to b after every period.
pub fn run_crp(path: &PricePath, b: f64, cost: f64, model: CostModel) -> Result<BacktestResult> {
    if path.n_assets() != 2 {
        return Err(Error::WrongAssetCount {
            expected: 2,
            actual: path.n_assets(),
        });
    }
    if !(0.0..=1.0).contains(&b) || !(0.0..1.0).contains(&cost) {
        return Err(Error::InvalidParams(format!(
            "CRP needs b in [0, 1] and cost in [0, 1), got b = {b}, cost = {cost}"
        )));
    }
    let mut book = Book {
        wealth: 1.0,
        portfolio: b,
    };
    let mut ledger = Ledger::new(path.len());
    for row in path.rows() {
        let drifted = book.drift(row[0], row[1]);
        let rebalanced = drifted != b;
        let cost = if rebalanced {
            book.rebalance(b, cost, model)
        } else {
            0.0
        };
        ledger.push(&book, rebalanced, cost);
    }
    Ok(ledger.finish(Vec::new()))
}

/// Buy-and-hold from initial fraction b.
pub fn run_buy_and_hold(path: &PricePath, b: f64) -> Result<BacktestResult> {
    if path.n_assets() != 2 {
        return Err(Error::WrongAssetCount {
            expected: 2,
            actual: path.n_assets(),
        });
    }
    let mut book = Book {
        wealth: 1.0,
        portfolio: b,
    };
    let mut ledger = Ledger::new(path.len());
    for row in path.rows() {
        book.drift(row[0], row[1]);
        ledger.push(&book, false, 0.0);
    }
    Ok(ledger.finish(Vec::new()))
}
