use proptest::prelude::*;

use trp_core::state_space::{
    enumerate_states, interval_bounds, lattice_step, portfolio_at, rational_approximation,
    technical_condition_holds, LatticeStep, LogRatioAlphabet,
};
use trp_core::{DiscreteMarket, Error, TrpParams};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn portfolio_offset_round_trip(b in 0.01f64..0.99, s in -3.0f64..3.0) {
        let p = portfolio_at(b, s);
        prop_assert!(p > 0.0 && p < 1.0);
        let back = (b * (1.0 - p) / ((1.0 - b) * p)).ln();
        prop_assert!((back - s).abs() < 1e-9);
    }

    #[test]
    fn interval_bounds_map_to_band_edges(b in 0.05f64..0.95, frac in 0.05f64..0.99) {
        let eps = frac * b.min(1.0 - b);
        let params = TrpParams::new(b, eps, 0.0).unwrap();
        let bounds = interval_bounds(&params);
        prop_assert!((portfolio_at(b, bounds.alpha1) - (b - eps)).abs() < 1e-12);
        prop_assert!((portfolio_at(b, bounds.alpha2) - (b + eps)).abs() < 1e-12);
        prop_assert!(bounds.alpha2 < 0.0 && bounds.alpha1 > 0.0);
    }

    #[test]
    fn lattice_step_is_k_times_gcd(
        k in 0.002f64..0.05,
        exps in prop::collection::btree_set(-6i64..=6, 2..=4),
    ) {
        let xs: Vec<f64> = exps.iter().map(|&m| (k * m as f64).exp()).collect();
        let alphabet = LogRatioAlphabet::from_sample_space(&xs);
        let v: Vec<i64> = exps.iter().copied().collect();
        let g = v.windows(2).fold(0i64, |acc, w| num_integer::gcd(acc, w[1] - w[0]));
        match lattice_step(&alphabet, 1e-9) {
            LatticeStep::Finite { delta, .. } => prop_assert!((delta - k * g as f64).abs() < 1e-10),
            other => prop_assert!(false, "unexpected {:?}", other),
        }
    }

    #[test]
    fn enumerated_space_is_closed(
        k in 0.005f64..0.03,
        exps in prop::collection::btree_set(-3i64..=3, 2..=3),
        b in 0.2f64..0.8,
        frac in 0.3f64..0.95,
    ) {
        let xs: Vec<f64> = exps.iter().map(|&m| (k * m as f64).exp()).collect();
        let alphabet = LogRatioAlphabet::from_sample_space(&xs);
        let params = TrpParams::new(b, frac * b.min(1.0 - b), 0.0).unwrap();
        let bounds = interval_bounds(&params);
        prop_assume!(technical_condition_holds(&alphabet, &bounds));
        let space = enumerate_states(&params, &alphabet, 100_000).unwrap();
        prop_assert!(space.is_finite());
        for &s in space.offsets() {
            prop_assert!(bounds.contains(s));
            for &z in alphabet.values() {
                let t = s + z;
                if bounds.contains(t) {
                    prop_assert!(space.find(t).is_some(), "missing successor {} of {}", t, s);
                }
            }
        }
    }

    #[test]
    fn rational_approximation_recovers_fractions(p in -50i64..50, q in 1u64..60) {
        let x = p as f64 / q as f64;
        let (a, b) = rational_approximation(x, 1e-12, 1000).unwrap();
        prop_assert_eq!(a * q as i64, p * b as i64);
    }
}

#[test]
fn incommensurable_atoms_have_no_lattice() {
    let alphabet = LogRatioAlphabet::from_sample_space(&[0.97, 1.0, 1.04]);
    assert!(lattice_step(&alphabet, 1e-9).is_infinite());
}

#[test]
fn riskless_market_is_degenerate() {
    let market = DiscreteMarket::riskless(2);
    let alphabet = LogRatioAlphabet::from_market(&market).unwrap();
    assert_eq!(lattice_step(&alphabet, 1e-9), LatticeStep::Degenerate);
    let space = enumerate_states(&TrpParams::new(0.3, 0.1, 0.0).unwrap(), &alphabet, 10).unwrap();
    assert_eq!(space.len(), 1);
    assert_eq!(space.portfolios()[0], 0.3);
}

#[test]
fn violation_is_reported() {
    let alphabet = LogRatioAlphabet::from_sample_space(&[0.8, 1.25]);
    let params = TrpParams::new(0.5, 0.05, 0.0).unwrap();
    assert!(matches!(
        enumerate_states(&params, &alphabet, 100),
        Err(Error::TechnicalConditionViolated { .. })
    ));
}
