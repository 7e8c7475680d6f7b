//! Discrete i.i.d. markets over price relatives, TRP parameters and price paths.

use rand::distributions::{Distribution, WeightedIndex};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Accepted deviation of a pmf's total mass from one.
pub const PMF_SUM_TOLERANCE: f64 = 1e-9;

/// Pmfs whose mass is off by more than this are rescaled during validation.
const RENORMALIZE_THRESHOLD: f64 = 1e-12;

/// A market whose assets draw i.i.d. price relatives from one shared sample space.
///
/// The sample space is strictly increasing and every asset has its own pmf over it.
/// Two-asset operations expect exactly two pmfs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMarket {
    sample_space: Vec<f64>,
    pmfs: Vec<Vec<f64>>,
}

impl DiscreteMarket {
    /// Validates and canonicalizes a market. See [`validate_market`].
    pub fn new(sample_space: Vec<f64>, pmfs: Vec<Vec<f64>>) -> Result<Self> {
        validate_market(sample_space, pmfs)
    }

    pub fn two_asset(sample_space: Vec<f64>, pmf1: Vec<f64>, pmf2: Vec<f64>) -> Result<Self> {
        validate_market(sample_space, vec![pmf1, pmf2])
    }

    /// Sampled two-asset Brownian market: X₁ = 1 and X₂ = e^{±k} with equal probability.
    pub fn brownian(k: f64) -> Result<Self> {
        if !(k > 0.0 && k.is_finite()) {
            return Err(Error::InvalidParams(format!(
                "log-step k must be positive, got {k}"
            )));
        }
        Self::two_asset(
            vec![(-k).exp(), 1.0, k.exp()],
            vec![0.0, 1.0, 0.0],
            vec![0.5, 0.0, 0.5],
        )
    }

    /// The riskless market 𝒳 = {1}.
    pub fn riskless(n_assets: usize) -> Self {
        Self {
            sample_space: vec![1.0],
            pmfs: vec![vec![1.0]; n_assets.max(1)],
        }
    }

    pub fn sample_space(&self) -> &[f64] {
        &self.sample_space
    }

    pub fn pmfs(&self) -> &[Vec<f64>] {
        &self.pmfs
    }

    pub fn pmf(&self, asset: usize) -> &[f64] {
        &self.pmfs[asset]
    }

    /// K, the size of the sample space.
    pub fn k(&self) -> usize {
        self.sample_space.len()
    }

    pub fn n_assets(&self) -> usize {
        self.pmfs.len()
    }

    pub(crate) fn require_assets(&self, expected: usize) -> Result<()> {
        if self.n_assets() != expected {
            return Err(Error::WrongAssetCount {
                expected,
                actual: self.n_assets(),
            });
        }
        Ok(())
    }

    /// Price-relative pairs `(w1, w2, p1(w1)·p2(w2))` with positive probability, in
    /// lexicographic order of atom indices.
    pub fn support_pairs(&self) -> Result<Vec<(f64, f64, f64)>> {
        self.require_assets(2)?;
        let mut out = Vec::new();
        for (i, &w1) in self.sample_space.iter().enumerate() {
            let p1 = self.pmfs[0][i];
            if p1 <= 0.0 {
                continue;
            }
            for (j, &w2) in self.sample_space.iter().enumerate() {
                let p2 = self.pmfs[1][j];
                if p2 > 0.0 {
                    out.push((w1, w2, p1 * p2));
                }
            }
        }
        Ok(out)
    }

    /// Joint outcomes `(x, Pr(X = x))` over 𝒳^m with positive probability.
    pub fn joint_outcomes(&self) -> Vec<(Vec<f64>, f64)> {
        let mut out: Vec<(Vec<f64>, f64)> = vec![(Vec::new(), 1.0)];
        for pmf in &self.pmfs {
            let mut next = Vec::with_capacity(out.len() * self.k());
            for (x, p) in &out {
                for (i, &q) in pmf.iter().enumerate() {
                    if q > 0.0 {
                        let mut x = x.clone();
                        x.push(self.sample_space[i]);
                        next.push((x, p * q));
                    }
                }
            }
            out = next;
        }
        out
    }

    /// Mean price relative of one asset.
    pub fn mean(&self, asset: usize) -> f64 {
        self.sample_space
            .iter()
            .zip(&self.pmfs[asset])
            .map(|(x, p)| x * p)
            .sum()
    }

    /// Draws `n_periods` i.i.d. price-relative vectors. Reproducible for a fixed seed.
    pub fn sample_path(&self, n_periods: usize, seed: u64) -> PricePath {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let dists: Vec<WeightedIndex<f64>> = self
            .pmfs
            .iter()
            .map(|p| WeightedIndex::new(p).expect("validated pmf has positive mass"))
            .collect();
        let rows = (0..n_periods)
            .map(|_| {
                dists
                    .iter()
                    .map(|d| self.sample_space[d.sample(&mut rng)])
                    .collect()
            })
            .collect();
        PricePath {
            n_assets: self.n_assets(),
            rows,
        }
    }
}

/// Checks positivity and pmf mass, sorts the sample space and merges duplicate atoms.
pub fn validate_market(sample_space: Vec<f64>, pmfs: Vec<Vec<f64>>) -> Result<DiscreteMarket> {
    if sample_space.is_empty() {
        return Err(Error::InvalidParams("sample space is empty".into()));
    }
    if pmfs.is_empty() {
        return Err(Error::InvalidParams("market has no assets".into()));
    }
    for (index, &value) in sample_space.iter().enumerate() {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::NonPositivePrice { index, value });
        }
    }
    for (asset, pmf) in pmfs.iter().enumerate() {
        if pmf.len() != sample_space.len() {
            return Err(Error::BadPmf {
                asset: asset + 1,
                reason: format!(
                    "has {} entries for {} samples",
                    pmf.len(),
                    sample_space.len()
                ),
            });
        }
        if let Some(p) = pmf.iter().find(|p| !(**p >= 0.0 && p.is_finite())) {
            return Err(Error::BadPmf {
                asset: asset + 1,
                reason: format!("invalid mass {p}"),
            });
        }
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > PMF_SUM_TOLERANCE {
            return Err(Error::BadPmf {
                asset: asset + 1,
                reason: format!("sums to {total}"),
            });
        }
    }

    let mut order: Vec<usize> = (0..sample_space.len()).collect();
    order.sort_by(|&a, &b| sample_space[a].total_cmp(&sample_space[b]));

    let mut samples: Vec<f64> = Vec::with_capacity(order.len());
    let mut merged: Vec<Vec<f64>> = vec![Vec::with_capacity(order.len()); pmfs.len()];
    for &i in &order {
        let x = sample_space[i];
        if samples.last() == Some(&x) {
            for (dst, src) in merged.iter_mut().zip(&pmfs) {
                *dst.last_mut().expect("nonempty") += src[i];
            }
        } else {
            samples.push(x);
            for (dst, src) in merged.iter_mut().zip(&pmfs) {
                dst.push(src[i]);
            }
        }
    }
    for pmf in &mut merged {
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > RENORMALIZE_THRESHOLD {
            pmf.iter_mut().for_each(|p| *p /= total);
        }
    }
    Ok(DiscreteMarket {
        sample_space: samples,
        pmfs: merged,
    })
}

/// Parameters of TRP(b, ε) under proportional cost c.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrpParams {
    /// Target fraction of wealth in asset 1.
    pub b: f64,
    /// Half-width of the no-trade interval around `b`.
    pub epsilon: f64,
    /// Proportional transaction cost ratio.
    pub cost: f64,
}

impl TrpParams {
    pub fn new(b: f64, epsilon: f64, cost: f64) -> Result<Self> {
        if epsilon.is_nan() || epsilon <= 0.0 {
            return Err(Error::InvalidParams(format!(
                "epsilon must be positive, got {epsilon}"
            )));
        }
        if !(b - epsilon > 0.0 && b + epsilon < 1.0) {
            return Err(Error::InvalidParams(format!(
                "interval ({}, {}) is not inside (0, 1)",
                b - epsilon,
                b + epsilon
            )));
        }
        if !(0.0..1.0).contains(&cost) {
            return Err(Error::InvalidParams(format!(
                "cost must be in [0, 1), got {cost}"
            )));
        }
        Ok(Self { b, epsilon, cost })
    }

    pub fn lower(&self) -> f64 {
        self.b - self.epsilon
    }

    pub fn upper(&self) -> f64 {
        self.b + self.epsilon
    }

    /// Whether `portfolio` lies strictly inside the no-trade interval.
    pub fn contains(&self, portfolio: f64) -> bool {
        portfolio > self.lower() && portfolio < self.upper()
    }

    /// Cost multiplier charged when rebalancing from `drifted` back to `b`.
    pub fn rebalance_factor(&self, drifted: f64) -> f64 {
        1.0 - self.cost * (drifted - self.b).abs()
    }
}

/// A sequence of price-relative vectors, one row per period.
#[derive(Debug, Clone, PartialEq)]
pub struct PricePath {
    n_assets: usize,
    rows: Vec<Vec<f64>>,
}

impl PricePath {
    pub fn new(n_assets: usize, rows: Vec<Vec<f64>>) -> Result<Self> {
        if n_assets == 0 {
            return Err(Error::InvalidParams(
                "a path needs at least one asset".into(),
            ));
        }
        for (n, row) in rows.iter().enumerate() {
            if row.len() != n_assets {
                return Err(Error::Parse(format!(
                    "period {} has {} entries, expected {n_assets}",
                    n + 1,
                    row.len()
                )));
            }
            if let Some((i, &v)) = row
                .iter()
                .enumerate()
                .find(|(_, v)| !(**v > 0.0 && v.is_finite()))
            {
                return Err(Error::NonPositivePrice {
                    index: n * n_assets + i,
                    value: v,
                });
            }
        }
        Ok(Self { n_assets, rows })
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn n_assets(&self) -> usize {
        self.n_assets
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.rows
    }

    /// All observations of one asset, in period order.
    pub fn column(&self, asset: usize) -> Vec<f64> {
        self.rows.iter().map(|r| r[asset]).collect()
    }

    /// Periods `[start, end)` as a new path.
    pub fn slice(&self, start: usize, end: usize) -> PricePath {
        PricePath {
            n_assets: self.n_assets,
            rows: self.rows[start..end].to_vec(),
        }
    }
}
