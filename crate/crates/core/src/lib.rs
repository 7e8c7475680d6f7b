//! Threshold rebalanced portfolios in discrete i.i.d. markets with proportional costs.

pub mod backtest;
pub mod brownian;
pub mod chain;
pub mod cli;
pub mod error;
pub mod estimate;
pub mod io;
pub mod market;
pub mod optimizer;
pub mod recursion;
pub mod state_space;

pub use backtest::{run_crp, run_fixed_trp, run_trp, BacktestConfig, BacktestResult, CostModel};
pub use brownian::{brownian_chain, brownian_states, BrownianSpec};
pub use chain::{
    build_matrices, growth_rate, stationary_distribution, ChainMatrices, GrowthReport,
};
pub use error::{Error, Result};
pub use estimate::{estimate_market, mle_pmf, quantize_and_estimate, EstimatorConfig};
pub use market::{DiscreteMarket, PricePath, TrpParams};
pub use optimizer::{optimize, GridSpec, Objective, OptimizeResult};
pub use recursion::{expected_wealth, MultiAssetParams, WealthState};
pub use state_space::{enumerate_states, LogRatioAlphabet, StateSpace};
