use proptest::prelude::*;

use trp_core::brownian::{brownian_chain, brownian_states, BrownianSpec};
use trp_core::chain::{build_matrices, growth_rate};
use trp_core::state_space::{enumerate_states, interval_bounds, LogRatioAlphabet};
use trp_core::{Error, TrpParams};

fn spec_strategy() -> impl Strategy<Value = BrownianSpec> {
    (0.005f64..0.08, 0.15f64..0.85, 0.2f64..0.95, 0.0f64..0.05).prop_filter_map(
        "technical condition",
        |(k, b, frac, c)| {
            let params = TrpParams::new(b, frac * b.min(1.0 - b), c).ok()?;
            BrownianSpec::new(k, params).ok()
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn closed_form_matches_generic_construction(spec in spec_strategy()) {
        let market = spec.equivalent_market();
        let alphabet = LogRatioAlphabet::from_market(&market).unwrap();
        let space = enumerate_states(spec.params(), &alphabet, 100_000).unwrap();
        let generic = build_matrices(&space, &market, spec.params()).unwrap();
        let closed = brownian_chain(&spec);
        prop_assert_eq!(closed.len(), generic.len());
        prop_assert_eq!(spec.state_count(), generic.len());
        for (a, b) in closed.states().offsets().iter().zip(space.offsets()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        let n = closed.len();
        for i in 0..n {
            for j in 0..n {
                prop_assert!((closed.p().get(i, j) - generic.p().get(i, j)).abs() < 1e-12);
                prop_assert!((closed.q().get(i, j) - generic.q().get(i, j)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn index_range_is_strictly_inside(spec in spec_strategy()) {
        let bounds = interval_bounds(spec.params());
        let (lo, hi) = spec.index_range();
        let k = spec.k();
        prop_assert!(bounds.contains(lo as f64 * k) && bounds.contains(hi as f64 * k));
        prop_assert!(!bounds.contains((lo - 1) as f64 * k));
        prop_assert!(!bounds.contains((hi + 1) as f64 * k));
        prop_assert_eq!(brownian_states(&spec).len(), (hi - lo + 1) as usize);
    }

    #[test]
    fn period_follows_cycle_lengths(spec in spec_strategy()) {
        // Cycles: 0 → 1 → 0, and walks to either edge followed by a reset to the target.
        let chain = brownian_chain(&spec);
        let (lo, hi) = spec.index_range();
        let expected = num_integer::gcd(2, num_integer::gcd(hi + 1, 1 - lo)) as usize;
        prop_assert!(chain.is_irreducible());
        prop_assert_eq!(chain.period(), expected);
    }

    #[test]
    fn growth_decreases_with_cost(spec in spec_strategy(), extra in 0.001f64..0.1) {
        let p = spec.params();
        let dearer = BrownianSpec::new(spec.k(), TrpParams::new(p.b, p.epsilon, p.cost + extra).unwrap()).unwrap();
        let g0 = growth_rate(&brownian_chain(&spec)).unwrap().growth;
        let g1 = growth_rate(&brownian_chain(&dearer)).unwrap().growth;
        prop_assert!(g1 < g0 + 1e-13);
    }
}

#[test]
fn costless_symmetric_chain_has_positive_growth() {
    let spec = BrownianSpec::new(0.03, TrpParams::new(0.5, 0.1, 0.0).unwrap()).unwrap();
    let g = growth_rate(&brownian_chain(&spec)).unwrap().growth;
    assert!(g > 0.0);
}

#[test]
fn rejects_invalid_step() {
    let params = TrpParams::new(0.5, 0.01, 0.0).unwrap();
    assert!(matches!(
        BrownianSpec::new(0.1, params),
        Err(Error::TechnicalConditionViolated { .. })
    ));
    assert!(BrownianSpec::new(0.0, params).is_err());
    assert!(BrownianSpec::new(-0.01, params).is_err());
}
