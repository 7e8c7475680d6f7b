//! Brute-force grid search over (b, ε).

use std::io::Write;

use rayon::prelude::*;

use crate::chain::{build_matrices, growth_rate, perron_pair, GrowthReport, SolverConfig};
use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::market::{DiscreteMarket, TrpParams};
use crate::recursion::expected_wealth;
use crate::state_space::{
    enumerate_states, interval_bounds, lattice_step_with, technical_condition_holds, LatticeConfig,
    LogRatioAlphabet,
};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Objective {
    /// ln λ₁ of the finite chain; cells without a finite chain are infeasible.
    Eigenvalue,
    /// (1/N)·ln E[S(N)] from the recursion.
    FiniteHorizon {
        periods: usize,
        prune_to: Option<usize>,
    },
    /// Eigenvalue when the market's log-ratios share a lattice step, finite horizon otherwise.
    Auto {
        periods: usize,
        prune_to: Option<usize>,
    },
}

impl Default for Objective {
    fn default() -> Self {
        Objective::Auto {
            periods: 200,
            prune_to: Some(256),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub b_range: (f64, f64),
    pub b_steps: usize,
    pub eps_range: (f64, f64),
    pub eps_steps: usize,
    pub objective: Objective,
    /// Chains with more states than this are treated as infeasible.
    pub max_states: usize,
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            b_range: (0.05, 0.95),
            b_steps: 37,
            eps_range: (0.01, 0.49),
            eps_steps: 49,
            objective: Objective::default(),
            max_states: 2000,
        }
    }
}

fn grid_values(range: (f64, f64), steps: usize) -> Vec<f64> {
    if steps == 1 {
        return vec![range.0];
    }
    let h = (range.1 - range.0) / (steps - 1) as f64;
    (0..steps)
        .map(|i| ((range.0 + i as f64 * h) * 1e12).round() / 1e12)
        .collect()
}

impl GridSpec {
    pub fn validate(&self) -> Result<()> {
        let ok = |r: (f64, f64)| r.0.is_finite() && r.1.is_finite() && r.0 <= r.1;
        if !ok(self.b_range) || !ok(self.eps_range) || self.b_steps == 0 || self.eps_steps == 0 {
            return Err(Error::InvalidParams(
                "grid ranges must be ordered and step counts at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn b_values(&self) -> Vec<f64> {
        grid_values(self.b_range, self.b_steps)
    }

    pub fn eps_values(&self) -> Vec<f64> {
        grid_values(self.eps_range, self.eps_steps)
    }
}

/// One row of the grid table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridCell {
    pub b: f64,
    pub eps: f64,
    pub feasible: bool,
    /// Whether the objective came from a finite chain.
    pub finite: bool,
    /// Chain size, or the number of recursion states at the horizon.
    pub states: usize,
    /// Objective value in nats per period; NaN when infeasible.
    pub growth: f64,
    /// exp(growth).
    pub lambda1: f64,
}

impl GridCell {
    fn infeasible(b: f64, eps: f64) -> Self {
        Self {
            b,
            eps,
            feasible: false,
            finite: false,
            states: 0,
            growth: f64::NAN,
            lambda1: f64::NAN,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizeResult {
    pub b: f64,
    pub eps: f64,
    pub growth: f64,
    /// Full eigen report at the optimum when it came from a finite chain.
    pub report: Option<GrowthReport>,
    pub table: Vec<GridCell>,
}

/// Grid table CSV with header `b,eps,feasible,finite,states,growth,lambda1`.
pub fn write_grid_csv<W: Write>(table: &[GridCell], mut out: W) -> std::io::Result<()> {
    writeln!(out, "b,eps,feasible,finite,states,growth,lambda1")?;
    for c in table {
        let num = |x: f64| {
            if x.is_nan() {
                String::new()
            } else {
                fmt_num(x)
            }
        };
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            fmt_num(c.b),
            fmt_num(c.eps),
            c.feasible,
            c.finite,
            c.states,
            num(c.growth),
            num(c.lambda1)
        )?;
    }
    Ok(())
}

/// Resolved per-market objective.
#[derive(Debug, Clone, Copy)]
enum CellObjective {
    Eigenvalue,
    Horizon(usize, Option<usize>),
}

fn evaluate_cell(
    market: &DiscreteMarket,
    alphabet: &LogRatioAlphabet,
    b: f64,
    eps: f64,
    cost: f64,
    objective: CellObjective,
    max_states: usize,
) -> GridCell {
    let Ok(params) = TrpParams::new(b, eps, cost) else {
        return GridCell::infeasible(b, eps);
    };
    if !technical_condition_holds(alphabet, &interval_bounds(&params)) {
        return GridCell::infeasible(b, eps);
    }
    match objective {
        CellObjective::Eigenvalue => {
            let Ok(space) = enumerate_states(&params, alphabet, max_states) else {
                return GridCell::infeasible(b, eps);
            };
            if !space.is_finite() {
                return GridCell::infeasible(b, eps);
            }
            let lambda = build_matrices(&space, market, &params)
                .and_then(|chain| perron_pair(chain.q(), &SolverConfig::default()));
            match lambda {
                Ok(pair) => GridCell {
                    b,
                    eps,
                    feasible: true,
                    finite: true,
                    states: space.len(),
                    growth: pair.value.ln(),
                    lambda1: pair.value,
                },
                Err(_) => GridCell::infeasible(b, eps),
            }
        }
        CellObjective::Horizon(periods, prune_to) => {
            match horizon_growth(market, &params, periods, prune_to) {
                Ok((growth, states)) => GridCell {
                    b,
                    eps,
                    feasible: true,
                    finite: false,
                    states,
                    growth,
                    lambda1: growth.exp(),
                },
                Err(_) => GridCell::infeasible(b, eps),
            }
        }
    }
}

fn horizon_growth(
    market: &DiscreteMarket,
    params: &TrpParams,
    periods: usize,
    prune_to: Option<usize>,
) -> Result<(f64, usize)> {
    use crate::recursion::{RecursionConfig, WealthRecursion};
    let mut rec = WealthRecursion::new(
        market,
        params,
        RecursionConfig {
            prune_to,
            ..RecursionConfig::default()
        },
    )?;
    for _ in 0..periods.max(1) {
        rec.advance()?;
    }
    let w = rec.state().expected_wealth();
    Ok((w.ln() / periods.max(1) as f64, rec.state().len()))
}

/// True when `a` beats `b`: larger growth, then smaller ε, then smaller b.
fn better(a: &GridCell, b: &GridCell) -> bool {
    a.growth > b.growth
        || (a.growth == b.growth && (a.eps < b.eps || (a.eps == b.eps && a.b < b.b)))
}

pub fn optimize(market: &DiscreteMarket, cost: f64, grid: &GridSpec) -> Result<OptimizeResult> {
    grid.validate()?;
    let alphabet = LogRatioAlphabet::from_market(market)?;
    let objective = match grid.objective {
        Objective::Eigenvalue => CellObjective::Eigenvalue,
        Objective::FiniteHorizon { periods, prune_to } => CellObjective::Horizon(periods, prune_to),
        Objective::Auto { periods, prune_to } => {
            if lattice_step_with(&alphabet, &LatticeConfig::default()).is_infinite() {
                CellObjective::Horizon(periods, prune_to)
            } else {
                CellObjective::Eigenvalue
            }
        }
    };
    let cells: Vec<(f64, f64)> = grid
        .b_values()
        .into_iter()
        .flat_map(|b| grid.eps_values().into_iter().map(move |e| (b, e)))
        .collect();
    let table: Vec<GridCell> = cells
        .par_iter()
        .map(|&(b, eps)| evaluate_cell(market, &alphabet, b, eps, cost, objective, grid.max_states))
        .collect();
    let best = table
        .iter()
        .filter(|c| c.feasible && c.growth.is_finite())
        .fold(None::<&GridCell>, |acc, c| match acc {
            Some(a) if !better(c, a) => Some(a),
            _ => Some(c),
        })
        .copied()
        .ok_or(Error::NoFeasiblePoint)?;
    let report = if best.finite {
        let params = TrpParams::new(best.b, best.eps, cost)?;
        let space = enumerate_states(&params, &alphabet, grid.max_states)?;
        Some(growth_rate(&build_matrices(&space, market, &params)?)?)
    } else {
        None
    };
    Ok(OptimizeResult {
        b: best.b,
        eps: best.eps,
        growth: best.growth,
        report,
        table,
    })
}

/// (1/N)·ln E[S(N)] for one TRP.
pub fn finite_horizon_growth(
    market: &DiscreteMarket,
    params: &TrpParams,
    periods: usize,
    prune_to: Option<usize>,
) -> Result<f64> {
    let w = expected_wealth(market, params, periods, prune_to)?;
    Ok(w[w.len() - 1].ln() / periods as f64)
}
