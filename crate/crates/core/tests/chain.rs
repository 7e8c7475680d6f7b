use proptest::prelude::*;

use trp_core::brownian::{brownian_chain, BrownianSpec};
use trp_core::chain::{
    build_matrices, growth_rate, growth_rate_with, perron_pair, stationary_distribution,
    subdominant_ratio, ChainMatrices, GrowthMethod, SolverConfig, SparseMatrix,
};
use trp_core::recursion::expected_wealth;
use trp_core::state_space::{enumerate_states, interval_bounds, LogRatioAlphabet};
use trp_core::{DiscreteMarket, TrpParams};

/// Atoms e^{k·m} for integer exponents, so the log-ratio lattice is always finite.
fn lattice_market() -> impl Strategy<Value = DiscreteMarket> {
    (
        0.005f64..0.03,
        prop::collection::btree_set(-3i32..=3, 2..=4),
        prop::collection::vec(0.05f64..1.0, 4),
        prop::collection::vec(0.05f64..1.0, 4),
    )
        .prop_map(|(k, exps, w1, w2)| {
            let xs: Vec<f64> = exps.iter().map(|&m| (k * m as f64).exp()).collect();
            let n = xs.len();
            let norm = |w: &[f64]| {
                let s: f64 = w[..n].iter().sum();
                w[..n].iter().map(|v| v / s).collect::<Vec<_>>()
            };
            DiscreteMarket::two_asset(xs, norm(&w1), norm(&w2)).unwrap()
        })
}

fn chain_for(market: &DiscreteMarket, params: &TrpParams) -> Option<ChainMatrices> {
    let alphabet = LogRatioAlphabet::from_market(market).ok()?;
    let space = enumerate_states(params, &alphabet, 5000).ok()?;
    build_matrices(&space, market, params).ok()
}

fn chain_strategy() -> impl Strategy<Value = (DiscreteMarket, TrpParams, ChainMatrices)> {
    (lattice_market(), 0.2f64..0.8, 0.3f64..0.95, 0.0f64..0.05).prop_filter_map(
        "technical condition",
        |(market, b, frac, c)| {
            let params = TrpParams::new(b, frac * b.min(1.0 - b), c).ok()?;
            let chain = chain_for(&market, &params)?;
            Some((market, params, chain))
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn p_is_column_stochastic((_m, _p, chain) in chain_strategy()) {
        for s in chain.p().column_sums() {
            prop_assert!((s - 1.0).abs() < 1e-12);
        }
        for j in 0..chain.len() {
            prop_assert!(chain.p().column(j).iter().all(|&(_, v)| v >= 0.0));
        }
    }

    #[test]
    fn costless_q_columns_are_mean_growth((market, params, _chain) in chain_strategy()) {
        let params = TrpParams::new(params.b, params.epsilon, 0.0).unwrap();
        let chain = chain_for(&market, &params).unwrap();
        let (m1, m2) = (market.mean(0), market.mean(1));
        for (j, s) in chain.q().column_sums().iter().enumerate() {
            let bj = chain.states().portfolios()[j];
            prop_assert!((s - (bj * m1 + (1.0 - bj) * m2)).abs() < 1e-12);
        }
    }

    #[test]
    fn costs_only_shrink_q((market, params, chain) in chain_strategy()) {
        let free = chain_for(&market, &TrpParams::new(params.b, params.epsilon, 0.0).unwrap()).unwrap();
        for (a, b) in chain.q().column_sums().iter().zip(free.q().column_sums()) {
            prop_assert!(*a <= b + 1e-15);
        }
    }

    #[test]
    fn states_stay_inside_interval((_m, params, chain) in chain_strategy()) {
        let bounds = interval_bounds(&params);
        let states = chain.states();
        prop_assert!(states.offsets().iter().all(|&s| bounds.contains(s)));
        prop_assert!(states.offsets().windows(2).all(|w| w[0] < w[1]));
        prop_assert_eq!(states.offsets()[states.target()], 0.0);
        prop_assert!(states.portfolios().iter().all(|&b| params.contains(b)));
    }

    #[test]
    fn stationary_distribution_is_fixed_point((_m, _p, chain) in chain_strategy()) {
        let pi = stationary_distribution(&chain).unwrap();
        prop_assert!((pi.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(pi.iter().all(|&v| v >= 0.0));
        let ppi = chain.p().mul_vec(&pi);
        let resid: f64 = ppi.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        prop_assert!(resid < 1e-10);
    }

    #[test]
    fn perron_vector_is_an_eigenvector((_m, _p, chain) in chain_strategy()) {
        let pair = perron_pair(chain.q(), &SolverConfig::default()).unwrap();
        let qv = chain.q().mul_vec(&pair.vector);
        for (a, v) in qv.iter().zip(&pair.vector) {
            prop_assert!((a - pair.value * v).abs() < 1e-10 * pair.value);
        }
        prop_assert!(pair.vector.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn solvers_agree((_m, _p, chain) in chain_strategy()) {
        let noda = growth_rate(&chain).unwrap();
        let power = growth_rate_with(
            &chain,
            &SolverConfig { method: GrowthMethod::Power, ..SolverConfig::default() },
        ).unwrap();
        prop_assert!((noda.lambda1 - power.lambda1).abs() < 1e-10);
    }

    #[test]
    fn eigenvalue_matches_expected_wealth_slope((market, params, chain) in chain_strategy()) {
        prop_assume!(chain.len() <= 25);
        let g = growth_rate(&chain).unwrap().growth;
        let wealth = expected_wealth(&market, &params, 3000, None).unwrap();
        let slope = (wealth[2999].ln() - wealth[1999].ln()) / 1000.0;
        prop_assert!((slope - g).abs() < 1e-8, "slope {} vs g {}", slope, g);
    }

    #[test]
    fn matrix_powers_match_recursion((market, params, chain) in chain_strategy()) {
        let by_recursion = expected_wealth(&market, &params, 60, None).unwrap();
        for n in [1, 7, 30, 60] {
            let by_matrix: f64 = chain.propagate_wealth(n).iter().sum();
            let b = by_recursion[n - 1];
            prop_assert!((by_matrix - b).abs() <= 1e-11 * b);
        }
    }
}

#[test]
fn permuting_states_leaves_growth_unchanged() {
    let spec = BrownianSpec::new(0.03, TrpParams::new(0.45, 0.12, 0.02).unwrap()).unwrap();
    let chain = brownian_chain(&spec);
    let n = chain.len();
    let perm: Vec<usize> = (0..n).map(|i| (i * 7 + 3) % n).collect();
    assert_eq!(num_integer::gcd(7, n), 1);
    let mut q = SparseMatrix::zeros(n);
    for j in 0..n {
        for &(i, v) in chain.q().column(j) {
            q.add(perm[i], perm[j], v);
        }
    }
    let a = perron_pair(chain.q(), &SolverConfig::default()).unwrap();
    let b = perron_pair(&q, &SolverConfig::default()).unwrap();
    assert!((a.value - b.value).abs() < 1e-12);
    for (i, &pi) in perm.iter().enumerate() {
        assert!((a.vector[i] - b.vector[pi]).abs() < 1e-10);
    }
}

#[test]
fn aperiodic_chain_has_spectral_gap() {
    let k: f64 = 0.01;
    let market = DiscreteMarket::two_asset(
        vec![(-2.0 * k).exp(), 1.0, (3.0 * k).exp()],
        vec![0.3, 0.4, 0.3],
        vec![0.25, 0.5, 0.25],
    )
    .unwrap();
    let params = TrpParams::new(0.5, 0.2, 0.01).unwrap();
    let chain = chain_for(&market, &params).unwrap();
    assert!(chain.is_irreducible());
    assert_eq!(chain.period(), 1);
    let ratio = subdominant_ratio(&chain).unwrap();
    assert!(ratio < 1.0 - 1e-6, "ratio {ratio}");
}

#[test]
fn dense_eigenvalue_cross_check() {
    let spec = BrownianSpec::new(0.02, TrpParams::new(0.6, 0.15, 0.005).unwrap()).unwrap();
    let chain = brownian_chain(&spec);
    let dense = chain.q().to_dense();
    // Power iteration on the dense Q², which converges for period 1 and period 2 alike.
    let sq = &dense * &dense;
    let mut x = nalgebra::DVector::from_element(chain.len(), 1.0);
    let mut lambda_sq = 0.0;
    for _ in 0..20_000 {
        let y = &sq * &x;
        lambda_sq = y.sum() / x.sum();
        x = y / lambda_sq;
    }
    let report = growth_rate(&chain).unwrap();
    assert!((report.lambda1 - lambda_sq.sqrt()).abs() < 1e-10);
}
