#![allow(dead_code)]

use trp_core::DiscreteMarket;

/// Expected wealth E[S(1..=n)] of the path-wise TRP rule by enumerating every sequence
/// of (X₁, X₂) outcomes. The portfolio is tracked as a fraction, never as a log-offset.
pub fn brute_force_expected_wealth(
    market: &DiscreteMarket,
    b: f64,
    eps: f64,
    c: f64,
    n: usize,
) -> Vec<f64> {
    let xs = market.sample_space();
    let (p1, p2) = (market.pmf(0), market.pmf(1));
    let mut outcomes = Vec::new();
    for (i, &x1) in xs.iter().enumerate() {
        for (j, &x2) in xs.iter().enumerate() {
            outcomes.push((x1, x2, p1[i] * p2[j]));
        }
    }
    let mut acc = vec![0.0; n];
    #[allow(clippy::too_many_arguments)]
    fn dfs(
        outcomes: &[(f64, f64, f64)],
        depth: usize,
        n: usize,
        (b, eps, c): (f64, f64, f64),
        portfolio: f64,
        wealth: f64,
        prob: f64,
        acc: &mut [f64],
    ) {
        if depth == n {
            return;
        }
        for &(x1, x2, p) in outcomes {
            let growth = portfolio * x1 + (1.0 - portfolio) * x2;
            let mut w = wealth * growth;
            let mut next = portfolio * x1 / growth;
            if !(next > b - eps && next < b + eps) {
                w *= 1.0 - c * (next - b).abs();
                next = b;
            }
            acc[depth] += prob * p * w;
            dfs(outcomes, depth + 1, n, (b, eps, c), next, w, prob * p, acc);
        }
    }
    dfs(&outcomes, 0, n, (b, eps, c), b, 1.0, 1.0, &mut acc);
    acc
}

/// Visits every sequence of `n` outcome pairs with its drifted (no-rebalance) portfolios.
pub fn for_each_drift_path<F: FnMut(&[f64], &[f64])>(xs: &[f64], b: f64, n: usize, mut f: F) {
    let pairs: Vec<(f64, f64)> = xs
        .iter()
        .flat_map(|&x1| xs.iter().map(move |&x2| (x1, x2)))
        .collect();
    let mut idx = vec![0usize; n];
    loop {
        let mut portfolio = b;
        let mut ports = Vec::with_capacity(n);
        let mut sums = Vec::with_capacity(n);
        let mut s = 0.0;
        for &k in &idx {
            let (x1, x2) = pairs[k];
            portfolio = portfolio * x1 / (portfolio * x1 + (1.0 - portfolio) * x2);
            s += (x2 / x1).ln();
            ports.push(portfolio);
            sums.push(s);
        }
        f(&ports, &sums);
        let mut pos = 0;
        loop {
            if pos == n {
                return;
            }
            idx[pos] += 1;
            if idx[pos] < pairs.len() {
                break;
            }
            idx[pos] = 0;
            pos += 1;
        }
    }
}

pub fn three_atom_market() -> DiscreteMarket {
    DiscreteMarket::two_asset(
        vec![0.85, 1.0, 1.2],
        vec![0.2, 0.5, 0.3],
        vec![0.3, 0.3, 0.4],
    )
    .unwrap()
}

pub fn two_atom_market() -> DiscreteMarket {
    DiscreteMarket::two_asset(vec![0.9, 1.15], vec![0.4, 0.6], vec![0.7, 0.3]).unwrap()
}
