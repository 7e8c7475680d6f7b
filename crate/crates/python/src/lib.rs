use pyo3::create_exception;
use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use trp_core::backtest::{
    run_crp as core_run_crp, run_fixed_trp as core_run_fixed_trp, BacktestResult, CostModel,
};
use trp_core::brownian::{brownian_states as core_brownian_states, BrownianSpec};
use trp_core::chain::{build_matrices, growth_rate as core_growth_rate};
use trp_core::estimate::{mle_pmf as core_mle_pmf, quantize_and_estimate, EstimatorConfig};
use trp_core::optimizer::{optimize as core_optimize, GridSpec, Objective};
use trp_core::recursion::expected_wealth as core_expected_wealth;
use trp_core::state_space::{enumerate_states, LogRatioAlphabet};
use trp_core::{DiscreteMarket, PricePath, TrpParams};

create_exception!(trp, TrpError, PyValueError);

fn err(e: trp_core::Error) -> PyErr {
    TrpError::new_err(e.to_string())
}

#[pyclass(name = "Market", frozen)]
struct PyMarket(DiscreteMarket);

#[pymethods]
impl PyMarket {
    #[new]
    fn new(samples: Vec<f64>, pmfs: Vec<Vec<f64>>) -> PyResult<Self> {
        DiscreteMarket::new(samples, pmfs).map(Self).map_err(err)
    }

    #[staticmethod]
    fn brownian(k: f64) -> PyResult<Self> {
        DiscreteMarket::brownian(k).map(Self).map_err(err)
    }

    #[staticmethod]
    #[pyo3(signature = (n_assets=2))]
    fn riskless(n_assets: usize) -> Self {
        Self(DiscreteMarket::riskless(n_assets))
    }

    #[getter]
    fn samples(&self) -> Vec<f64> {
        self.0.sample_space().to_vec()
    }

    #[getter]
    fn pmfs(&self) -> Vec<Vec<f64>> {
        self.0.pmfs().to_vec()
    }

    fn mean(&self, asset: usize) -> PyResult<f64> {
        if asset >= self.0.n_assets() {
            return Err(TrpError::new_err(format!("no asset {asset}")));
        }
        Ok(self.0.mean(asset))
    }

    /// Rows of price relatives, one per period.
    #[pyo3(signature = (periods, seed=0))]
    fn sample_path(&self, periods: usize, seed: u64) -> Vec<Vec<f64>> {
        self.0.sample_path(periods, seed).rows().to_vec()
    }

    fn __repr__(&self) -> String {
        format!(
            "Market(samples={:?}, pmfs={:?})",
            self.0.sample_space(),
            self.0.pmfs()
        )
    }
}

#[pyclass(name = "TrpParams", frozen)]
struct PyTrpParams(TrpParams);

#[pymethods]
impl PyTrpParams {
    #[new]
    #[pyo3(signature = (b, eps, cost=0.0))]
    fn new(b: f64, eps: f64, cost: f64) -> PyResult<Self> {
        TrpParams::new(b, eps, cost).map(Self).map_err(err)
    }

    #[getter]
    fn b(&self) -> f64 {
        self.0.b
    }

    #[getter]
    fn eps(&self) -> f64 {
        self.0.epsilon
    }

    #[getter]
    fn cost(&self) -> f64 {
        self.0.cost
    }

    fn __repr__(&self) -> String {
        format!(
            "TrpParams(b={}, eps={}, cost={})",
            self.0.b, self.0.epsilon, self.0.cost
        )
    }
}

/// E[S(1)], …, E[S(periods)].
#[pyfunction]
#[pyo3(signature = (market, params, periods, prune_to=None))]
fn expected_wealth(
    py: Python<'_>,
    market: &PyMarket,
    params: &PyTrpParams,
    periods: usize,
    prune_to: Option<usize>,
) -> PyResult<Vec<f64>> {
    py.detach(|| core_expected_wealth(&market.0, &params.0, periods, prune_to))
        .map_err(err)
}

/// (growth, lambda1, stationary distribution) of the finite chain.
#[pyfunction]
#[pyo3(signature = (market, params, max_states=100_000))]
fn growth_rate(
    py: Python<'_>,
    market: &PyMarket,
    params: &PyTrpParams,
    max_states: usize,
) -> PyResult<(f64, f64, Vec<f64>)> {
    py.detach(|| {
        let alphabet = LogRatioAlphabet::from_market(&market.0)?;
        let space = enumerate_states(&params.0, &alphabet, max_states)?;
        let chain = build_matrices(&space, &market.0, &params.0)?;
        core_growth_rate(&chain)
    })
    .map(|r| (r.growth, r.lambda1, r.pi))
    .map_err(err)
}

/// Grid search; returns (b*, eps*, growth).
#[pyfunction]
#[pyo3(signature = (
    market,
    cost=0.0,
    b_range=(0.05, 0.95),
    b_steps=37,
    eps_range=(0.01, 0.49),
    eps_steps=49,
    objective="auto",
    horizon=200,
    prune=256,
    max_states=2000,
))]
#[allow(clippy::too_many_arguments)]
fn optimize(
    py: Python<'_>,
    market: &PyMarket,
    cost: f64,
    b_range: (f64, f64),
    b_steps: usize,
    eps_range: (f64, f64),
    eps_steps: usize,
    objective: &str,
    horizon: usize,
    prune: Option<usize>,
    max_states: usize,
) -> PyResult<(f64, f64, f64)> {
    let objective = match objective {
        "auto" => Objective::Auto {
            periods: horizon,
            prune_to: prune,
        },
        "eigenvalue" => Objective::Eigenvalue,
        "horizon" => Objective::FiniteHorizon {
            periods: horizon,
            prune_to: prune,
        },
        other => return Err(TrpError::new_err(format!("unknown objective `{other}`"))),
    };
    let grid = GridSpec {
        b_range,
        b_steps,
        eps_range,
        eps_steps,
        objective,
        max_states,
    };
    py.detach(|| core_optimize(&market.0, cost, &grid))
        .map(|r| (r.b, r.eps, r.growth))
        .map_err(err)
}

/// Achievable portfolios of the TRP on the symmetric ±k random walk market.
#[pyfunction]
#[pyo3(signature = (k, b, eps, cost=0.0))]
fn brownian_states(k: f64, b: f64, eps: f64, cost: f64) -> PyResult<Vec<f64>> {
    let params = TrpParams::new(b, eps, cost).map_err(err)?;
    let spec = BrownianSpec::new(k, params).map_err(err)?;
    Ok(core_brownian_states(&spec).portfolios().to_vec())
}

#[pyfunction]
fn mle_pmf(observations: Vec<f64>, atoms: Vec<f64>) -> PyResult<Vec<f64>> {
    core_mle_pmf(&observations, &atoms).map_err(err)
}

/// Equal-frequency quantization; returns (atoms, pmf).
#[pyfunction]
#[pyo3(signature = (raw, bins=10, window=None))]
fn quantize(raw: Vec<f64>, bins: usize, window: Option<usize>) -> PyResult<(Vec<f64>, Vec<f64>)> {
    quantize_and_estimate(&raw, &EstimatorConfig { window, bins })
        .map(|q| (q.atoms, q.pmf))
        .map_err(err)
}

fn cost_model(exact: bool) -> CostModel {
    if exact {
        CostModel::ExactSelfFinancing
    } else {
        CostModel::Approximate
    }
}

fn summary(res: BacktestResult) -> (Vec<f64>, usize, f64) {
    (res.wealth_curve(), res.rebalance_count, res.total_cost)
}

/// Fixed-parameter TRP over price-relative rows; returns (wealth curve, rebalances, total cost).
#[pyfunction]
#[pyo3(signature = (rows, params, exact=false))]
fn run_fixed_trp(
    rows: Vec<Vec<f64>>,
    params: &PyTrpParams,
    exact: bool,
) -> PyResult<(Vec<f64>, usize, f64)> {
    let path = PricePath::new(2, rows).map_err(err)?;
    core_run_fixed_trp(&path, &params.0, cost_model(exact))
        .map(summary)
        .map_err(err)
}

/// Constant rebalanced portfolio; returns (wealth curve, rebalances, total cost).
#[pyfunction]
#[pyo3(signature = (rows, b, cost=0.0, exact=false))]
fn run_crp(
    rows: Vec<Vec<f64>>,
    b: f64,
    cost: f64,
    exact: bool,
) -> PyResult<(Vec<f64>, usize, f64)> {
    let path = PricePath::new(2, rows).map_err(err)?;
    core_run_crp(&path, b, cost, cost_model(exact))
        .map(summary)
        .map_err(err)
}

#[pymodule]
fn trp(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("TrpError", m.py().get_type::<TrpError>())?;
    m.add_class::<PyMarket>()?;
    m.add_class::<PyTrpParams>()?;
    m.add_function(wrap_pyfunction!(expected_wealth, m)?)?;
    m.add_function(wrap_pyfunction!(growth_rate, m)?)?;
    m.add_function(wrap_pyfunction!(optimize, m)?)?;
    m.add_function(wrap_pyfunction!(brownian_states, m)?)?;
    m.add_function(wrap_pyfunction!(mle_pmf, m)?)?;
    m.add_function(wrap_pyfunction!(quantize, m)?)?;
    m.add_function(wrap_pyfunction!(run_fixed_trp, m)?)?;
    m.add_function(wrap_pyfunction!(run_crp, m)?)?;
    Ok(())
}
