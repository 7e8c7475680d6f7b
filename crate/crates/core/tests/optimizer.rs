use trp_core::brownian::{brownian_chain, BrownianSpec};
use trp_core::chain::{build_matrices, growth_rate};
use trp_core::optimizer::{finite_horizon_growth, optimize, GridSpec, Objective};
use trp_core::state_space::{enumerate_states, LogRatioAlphabet};
use trp_core::{DiscreteMarket, TrpParams};

fn brownian() -> DiscreteMarket {
    DiscreteMarket::brownian(0.03).unwrap()
}

fn eigen_grid(b_steps: usize, eps_steps: usize) -> GridSpec {
    GridSpec {
        b_range: (0.1, 0.9),
        b_steps,
        eps_range: (0.05, 0.4),
        eps_steps,
        objective: Objective::Eigenvalue,
        max_states: 5000,
    }
}

fn eigen_growth(market: &DiscreteMarket, b: f64, eps: f64, c: f64) -> f64 {
    let params = TrpParams::new(b, eps, c).unwrap();
    let alphabet = LogRatioAlphabet::from_market(market).unwrap();
    let space = enumerate_states(&params, &alphabet, 100_000).unwrap();
    growth_rate(&build_matrices(&space, market, &params).unwrap())
        .unwrap()
        .growth
}

#[test]
fn repeated_runs_are_identical() {
    let grid = eigen_grid(17, 15);
    let a = optimize(&brownian(), 0.005, &grid).unwrap();
    let b = optimize(&brownian(), 0.005, &grid).unwrap();
    assert_eq!(
        (a.b, a.eps, a.growth.to_bits()),
        (b.b, b.eps, b.growth.to_bits())
    );
    assert_eq!(a.table.len(), b.table.len());
    for (x, y) in a.table.iter().zip(&b.table) {
        assert_eq!(
            (x.b, x.eps, x.feasible, x.states),
            (y.b, y.eps, y.feasible, y.states)
        );
        assert!(
            x.growth.to_bits() == y.growth.to_bits() || (x.growth.is_nan() && y.growth.is_nan())
        );
    }
}

#[test]
fn optimum_is_reproducible_and_maximal() {
    let market = brownian();
    let res = optimize(&market, 0.005, &eigen_grid(17, 15)).unwrap();
    let again = eigen_growth(&market, res.b, res.eps, 0.005);
    assert!((again - res.growth).abs() < 1e-12);
    let best = res
        .table
        .iter()
        .filter(|c| c.feasible)
        .map(|c| c.growth)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best, res.growth);
    let report = res.report.expect("finite chain at the optimum");
    assert!((report.growth - res.growth).abs() < 1e-15);
}

#[test]
fn refining_the_grid_never_lowers_the_optimum() {
    let market = brownian();
    let coarse = optimize(&market, 0.01, &eigen_grid(9, 8)).unwrap();
    let fine = optimize(&market, 0.01, &eigen_grid(17, 15)).unwrap();
    assert!(fine.growth >= coarse.growth - 1e-15);
}

#[test]
fn finite_horizon_argmax_is_near_eigenvalue_optimum() {
    let market = brownian();
    let eig = optimize(&market, 0.01, &eigen_grid(9, 9)).unwrap();
    let mut fh_grid = eigen_grid(9, 9);
    fh_grid.objective = Objective::FiniteHorizon {
        periods: 200,
        prune_to: None,
    };
    let fh = optimize(&market, 0.01, &fh_grid).unwrap();
    let at_fh = eigen_growth(&market, fh.b, fh.eps, 0.01);
    assert!(
        at_fh >= eig.growth - 0.05 * eig.growth.abs(),
        "eigen g at horizon argmax {at_fh} vs optimum {}",
        eig.growth
    );
}

#[test]
fn brownian_optimum_beats_reference_point() {
    let market = brownian();
    let grid = GridSpec {
        b_steps: 41,
        eps_steps: 29,
        objective: Objective::Eigenvalue,
        ..GridSpec::default()
    };
    let res = optimize(&market, 0.0, &grid).unwrap();
    let reference = growth_rate(&brownian_chain(
        &BrownianSpec::new(0.03, TrpParams::new(0.5, 0.05, 0.0).unwrap()).unwrap(),
    ))
    .unwrap()
    .growth;
    assert!(res.growth >= reference, "{} < {reference}", res.growth);
    assert!(res.growth > 0.0);
}

#[test]
fn auto_uses_finite_horizon_for_incommensurable_atoms() {
    let market = DiscreteMarket::two_asset(
        vec![0.97, 1.0, 1.04],
        vec![0.3, 0.4, 0.3],
        vec![0.25, 0.5, 0.25],
    )
    .unwrap();
    let grid = GridSpec {
        b_range: (0.3, 0.7),
        b_steps: 3,
        eps_range: (0.1, 0.2),
        eps_steps: 2,
        ..GridSpec::default()
    };
    let res = optimize(&market, 0.01, &grid).unwrap();
    assert!(res.table.iter().all(|c| !c.finite));
    assert!(res.report.is_none());
    let direct = finite_horizon_growth(
        &market,
        &TrpParams::new(res.b, res.eps, 0.01).unwrap(),
        200,
        Some(256),
    )
    .unwrap();
    assert_eq!(direct, res.growth);
}

#[test]
fn infeasible_cells_are_marked() {
    // ε ≥ min(b, 1 − b) is not a valid band.
    let grid = GridSpec {
        b_range: (0.1, 0.5),
        b_steps: 2,
        eps_range: (0.05, 0.2),
        eps_steps: 2,
        objective: Objective::Eigenvalue,
        max_states: 5000,
    };
    let res = optimize(&brownian(), 0.0, &grid).unwrap();
    let cell = res
        .table
        .iter()
        .find(|c| c.b == 0.1 && c.eps == 0.2)
        .unwrap();
    assert!(!cell.feasible && cell.growth.is_nan());
}
