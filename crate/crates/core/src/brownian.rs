//! Closed forms for the sampled Brownian market X₁ = 1, X₂ = e^{kZ}, Z = ±1 equiprobable.
//!
//! The achievable offsets are i·k for i_min ≤ i ≤ i_max, where i·k must lie strictly
//! inside (α₂, α₁); from offset i·k the chain moves to (i ± 1)·k with probability ½, or
//! rebalances to the target when that step leaves the interval.

use crate::chain::{ChainMatrices, SparseMatrix};
use crate::error::{Error, Result};
use crate::market::{DiscreteMarket, TrpParams};
use crate::state_space::{interval_bounds, portfolio_at, StateSpace};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BrownianSpec {
    k: f64,
    params: TrpParams,
}

impl BrownianSpec {
    pub fn new(k: f64, params: TrpParams) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParams(format!("k must be positive, got {k}")));
        }
        let bound = interval_bounds(&params).min_magnitude();
        if k >= bound {
            return Err(Error::TechnicalConditionViolated { max_z: k, bound });
        }
        Ok(Self { k, params })
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn params(&self) -> &TrpParams {
        &self.params
    }

    /// (i_min, i_max): the extreme integers with i·k strictly inside (α₂, α₁).
    pub fn index_range(&self) -> (i64, i64) {
        let bounds = interval_bounds(&self.params);
        let i_min = (bounds.alpha2 / self.k).floor() as i64 + 1;
        let i_max = (bounds.alpha1 / self.k).ceil() as i64 - 1;
        (i_min, i_max)
    }

    /// Number of achievable portfolios, i_max − i_min + 1.
    pub fn state_count(&self) -> usize {
        let (lo, hi) = self.index_range();
        (hi - lo + 1) as usize
    }

    /// The same market as a generic 3-atom market on {e^{−k}, 1, e^{k}}.
    pub fn equivalent_market(&self) -> DiscreteMarket {
        DiscreteMarket::brownian(self.k).expect("k > 0 gives a valid market")
    }
}

pub fn brownian_states(spec: &BrownianSpec) -> StateSpace {
    let (lo, hi) = spec.index_range();
    let lattice: Vec<i64> = (lo..=hi).collect();
    let offsets = lattice.iter().map(|&i| i as f64 * spec.k).collect();
    StateSpace::from_offsets(spec.params.b, offsets, Some(spec.k), Some(lattice), true)
}

pub fn brownian_chain(spec: &BrownianSpec) -> ChainMatrices {
    let states = brownian_states(spec);
    let (lo, hi) = spec.index_range();
    let n = states.len();
    let target = states.target();
    let params = &spec.params;
    let mut p = SparseMatrix::zeros(n);
    let mut q = SparseMatrix::zeros(n);
    for j in 0..n {
        let i = lo + j as i64;
        let bj = portfolio_at(params.b, i as f64 * spec.k);
        for (step, x2) in [(1i64, spec.k.exp()), (-1, (-spec.k).exp())] {
            let growth = bj + (1.0 - bj) * x2;
            let next = i + step;
            if (lo..=hi).contains(&next) {
                let l = (next - lo) as usize;
                p.add(l, j, 0.5);
                q.add(l, j, 0.5 * growth);
            } else {
                let factor = 1.0 - params.cost * (bj / growth - params.b).abs();
                p.add(target, j, 0.5);
                q.add(target, j, 0.5 * growth * factor);
            }
        }
    }
    ChainMatrices::from_parts(states, p, q)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(b: f64, eps: f64, cost: f64) -> BrownianSpec {
        BrownianSpec::new(0.03, TrpParams::new(b, eps, cost).unwrap()).unwrap()
    }

    #[test]
    fn reference_state_count() {
        let s = spec(0.5, 0.1, 0.01);
        assert_eq!(s.index_range(), (-13, 13));
        assert_eq!(s.state_count(), 27);
        let states = brownian_states(&s);
        assert_eq!(states.target(), 13);
        assert_eq!(states.portfolios()[13], 0.5);
    }

    #[test]
    fn technical_condition_is_enforced() {
        let params = TrpParams::new(0.5, 0.01, 0.0).unwrap();
        assert!(matches!(
            BrownianSpec::new(0.05, params),
            Err(Error::TechnicalConditionViolated { .. })
        ));
    }

    #[test]
    fn zero_cost_column_sums() {
        let s = spec(0.5, 0.1, 0.0);
        let chain = brownian_chain(&s);
        let sums = chain.q().column_sums();
        for (j, &bj) in chain.states().portfolios().iter().enumerate() {
            let expected = bj + (1.0 - bj) * 0.03f64.cosh();
            assert!((sums[j] - expected).abs() < 1e-14);
        }
    }

    #[test]
    fn interior_columns_have_two_halves() {
        let chain = brownian_chain(&spec(0.4, 0.15, 0.02));
        for k in 0..chain.len() {
            let col = chain.p().column(k);
            assert!((col.iter().map(|e| e.1).sum::<f64>() - 1.0).abs() < 1e-15);
            if k != 0 && k + 1 != chain.len() {
                assert_eq!(col.len(), 2);
                assert!(col.iter().all(|e| e.1 == 0.5));
            }
        }
    }
}
