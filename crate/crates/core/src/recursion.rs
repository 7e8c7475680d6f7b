//! Exact expected-wealth recursion over achievable portfolios.
//!
//! For each achievable portfolio bₗ at period n the recursion carries
//! Pr(b(n) = bₗ) and eₗ(n) = Pr(b(n) = bₗ)·E[S(n) | b(n) = bₗ]. One step pushes
//! every state through every price-relative outcome w: the mass lands on the drifted
//! portfolio when it stays in (b−ε, b+ε) (growth factor b_k·w₁ + (1−b_k)·w₂), and on
//! the target b otherwise, paying the factor 1 − c·|b′ − b| on top of the growth.
//! E[S(n)] = Σₗ eₗ(n).

use std::collections::BTreeMap;
use std::io::Write;

use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::market::{DiscreteMarket, TrpParams};
use crate::state_space::{
    interval_bounds, log_ratio, portfolio_at, IntervalBounds, OffsetKeys, OFFSET_RESOLUTION,
};

/// Default limit on the unpruned number of states per period.
pub const DEFAULT_STATE_CAP: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecursionConfig {
    /// Keep only this many highest-probability states after each step.
    pub prune_to: Option<usize>,
    /// Fail with `StateExplosion` when a step produces more states than this.
    pub hard_cap: usize,
}

impl Default for RecursionConfig {
    fn default() -> Self {
        Self {
            prune_to: None,
            hard_cap: DEFAULT_STATE_CAP,
        }
    }
}

impl RecursionConfig {
    pub fn pruned(prune_to: usize) -> Self {
        Self {
            prune_to: Some(prune_to),
            ..Self::default()
        }
    }
}

/// Distribution of the portfolio and probability-weighted conditional wealth at one period.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthState {
    period: usize,
    offsets: Vec<f64>,
    portfolios: Vec<f64>,
    probs: Vec<f64>,
    weighted_wealth: Vec<f64>,
}

impl WealthState {
    /// Period 0: all mass on the target with wealth 1.
    pub fn initial(params: &TrpParams) -> Self {
        Self {
            period: 0,
            offsets: vec![0.0],
            portfolios: vec![params.b],
            probs: vec![1.0],
            weighted_wealth: vec![1.0],
        }
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Log-offsets ΣZ identifying the states, ascending.
    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn portfolios(&self) -> &[f64] {
        &self.portfolios
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn weighted_wealth(&self) -> &[f64] {
        &self.weighted_wealth
    }

    pub fn expected_wealth(&self) -> f64 {
        self.weighted_wealth.iter().sum()
    }

    pub fn total_probability(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// CSV rows `period,state,prob,weighted_wealth` (header included when asked).
    pub fn write_csv<W: Write>(&self, mut out: W, header: bool) -> std::io::Result<()> {
        if header {
            writeln!(out, "period,state,prob,weighted_wealth")?;
        }
        for i in 0..self.len() {
            writeln!(
                out,
                "{},{},{},{}",
                self.period,
                fmt_num(self.portfolios[i]),
                fmt_num(self.probs[i]),
                fmt_num(self.weighted_wealth[i])
            )?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
struct Move {
    w1: f64,
    w2: f64,
    prob: f64,
    z: f64,
}

/// Precomputed one-period transition kernel of a two-asset TRP.
#[derive(Debug, Clone)]
struct Kernel {
    params: TrpParams,
    bounds: IntervalBounds,
    moves: Vec<Move>,
}

impl Kernel {
    fn new(market: &DiscreteMarket, params: &TrpParams) -> Result<Self> {
        let moves = market
            .support_pairs()?
            .into_iter()
            .map(|(w1, w2, prob)| Move {
                w1,
                w2,
                prob,
                z: log_ratio(w1, w2),
            })
            .collect();
        Ok(Self {
            params: *params,
            bounds: interval_bounds(params),
            moves,
        })
    }

    fn step(&self, state: &WealthState) -> WealthState {
        let mut keys = OffsetKeys::default();
        let mut offsets: Vec<f64> = Vec::new();
        let mut probs: Vec<f64> = Vec::new();
        let mut wealth: Vec<f64> = Vec::new();
        let mut deposit = |offset: f64, p: f64, e: f64| {
            let i = match keys.get(offset) {
                Some(i) => i,
                None => {
                    let canonical = if offset.abs() <= OFFSET_RESOLUTION {
                        0.0
                    } else {
                        offset
                    };
                    keys.insert(canonical, offsets.len());
                    offsets.push(canonical);
                    probs.push(0.0);
                    wealth.push(0.0);
                    offsets.len() - 1
                }
            };
            probs[i] += p;
            wealth[i] += e;
        };

        for k in 0..state.len() {
            let (s, bk) = (state.offsets[k], state.portfolios[k]);
            let (pk, ek) = (state.probs[k], state.weighted_wealth[k]);
            for mv in &self.moves {
                let growth = bk * mv.w1 + (1.0 - bk) * mv.w2;
                let next = s + mv.z;
                if self.bounds.contains(next) {
                    deposit(next, pk * mv.prob, ek * growth * mv.prob);
                } else {
                    let drifted = bk * mv.w1 / growth;
                    let factor = self.params.rebalance_factor(drifted);
                    deposit(0.0, pk * mv.prob, ek * growth * factor * mv.prob);
                }
            }
        }

        let mut order: Vec<usize> = (0..offsets.len()).collect();
        order.sort_by(|&i, &j| offsets[i].total_cmp(&offsets[j]));
        let offsets: Vec<f64> = order.iter().map(|&i| offsets[i]).collect();
        WealthState {
            period: state.period + 1,
            portfolios: offsets
                .iter()
                .map(|&s| portfolio_at(self.params.b, s))
                .collect(),
            offsets,
            probs: order.iter().map(|&i| probs[i]).collect(),
            weighted_wealth: order.iter().map(|&i| wealth[i]).collect(),
        }
    }
}

/// Advances a wealth state by one period.
pub fn step(
    state: &WealthState,
    market: &DiscreteMarket,
    params: &TrpParams,
) -> Result<WealthState> {
    Ok(Kernel::new(market, params)?.step(state))
}

/// Keeps the `keep` most probable states and folds every other state into its nearest
/// survivor by log-offset, so total probability and total weighted wealth are preserved.
pub fn prune(state: &WealthState, keep: usize) -> WealthState {
    let keep = keep.max(1);
    if state.len() <= keep {
        return state.clone();
    }
    let mut rank: Vec<usize> = (0..state.len()).collect();
    rank.sort_by(|&i, &j| {
        state.probs[j]
            .total_cmp(&state.probs[i])
            .then(state.offsets[i].total_cmp(&state.offsets[j]))
    });
    let mut survivors: Vec<usize> = rank[..keep].to_vec();
    survivors.sort_unstable();
    let mut probs: Vec<f64> = survivors.iter().map(|&i| state.probs[i]).collect();
    let mut wealth: Vec<f64> = survivors
        .iter()
        .map(|&i| state.weighted_wealth[i])
        .collect();
    let kept_offsets: Vec<f64> = survivors.iter().map(|&i| state.offsets[i]).collect();
    for &i in &rank[keep..] {
        let s = state.offsets[i];
        let pos = kept_offsets.partition_point(|&t| t < s);
        let nearest = if pos == 0 {
            0
        } else if pos == kept_offsets.len() || s - kept_offsets[pos - 1] <= kept_offsets[pos] - s {
            pos - 1
        } else {
            pos
        };
        probs[nearest] += state.probs[i];
        wealth[nearest] += state.weighted_wealth[i];
    }
    WealthState {
        period: state.period,
        portfolios: survivors.iter().map(|&i| state.portfolios[i]).collect(),
        offsets: kept_offsets,
        probs,
        weighted_wealth: wealth,
    }
}

/// Iterates the recursion period by period.
#[derive(Debug, Clone)]
pub struct WealthRecursion {
    kernel: Kernel,
    config: RecursionConfig,
    state: WealthState,
    unpruned_len: usize,
}

impl WealthRecursion {
    pub fn new(
        market: &DiscreteMarket,
        params: &TrpParams,
        config: RecursionConfig,
    ) -> Result<Self> {
        Ok(Self {
            kernel: Kernel::new(market, params)?,
            config,
            state: WealthState::initial(params),
            unpruned_len: 1,
        })
    }

    pub fn state(&self) -> &WealthState {
        &self.state
    }

    /// Number of states produced by the last step before pruning.
    pub fn unpruned_len(&self) -> usize {
        self.unpruned_len
    }

    pub fn advance(&mut self) -> Result<&WealthState> {
        let next = self.kernel.step(&self.state);
        self.unpruned_len = next.len();
        if next.len() > self.config.hard_cap {
            return Err(Error::StateExplosion {
                period: next.period,
                states: next.len(),
                cap: self.config.hard_cap,
            });
        }
        self.state = match self.config.prune_to {
            Some(keep) => prune(&next, keep),
            None => next,
        };
        Ok(&self.state)
    }
}

/// E[S(1)], …, E[S(N)] for a two-asset TRP.
pub fn expected_wealth(
    market: &DiscreteMarket,
    params: &TrpParams,
    n_periods: usize,
    prune_to: Option<usize>,
) -> Result<Vec<f64>> {
    expected_wealth_with(
        market,
        params,
        n_periods,
        RecursionConfig {
            prune_to,
            ..RecursionConfig::default()
        },
    )
}

pub fn expected_wealth_with(
    market: &DiscreteMarket,
    params: &TrpParams,
    n_periods: usize,
    config: RecursionConfig,
) -> Result<Vec<f64>> {
    if n_periods == 0 {
        return Err(Error::InvalidParams("n_periods must be at least 1".into()));
    }
    let mut rec = WealthRecursion::new(market, params, config)?;
    (0..n_periods)
        .map(|_| rec.advance().map(WealthState::expected_wealth))
        .collect()
}

/// Upper bound C(n + K² − K, n) on the number of achievable portfolios at period n.
pub fn achievable_bound(n: usize, k: usize) -> f64 {
    let top = (n + k * k - k) as f64;
    (1..=n).fold(1.0, |acc, i| acc * (top - n as f64 + i as f64) / i as f64)
}

/// TRP(b, ε) over m assets: rebalance to `targets` when any weight leaves its box.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiAssetParams {
    pub targets: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub cost: f64,
}

impl MultiAssetParams {
    pub fn new(targets: Vec<f64>, thresholds: Vec<f64>, cost: f64) -> Result<Self> {
        if targets.len() < 2 || targets.len() != thresholds.len() {
            return Err(Error::InvalidParams(
                "need m ≥ 2 targets and one threshold per asset".into(),
            ));
        }
        if (targets.iter().sum::<f64>() - 1.0).abs() > 1e-9 || targets.iter().any(|&b| b <= 0.0) {
            return Err(Error::InvalidParams(
                "targets must lie in the open simplex".into(),
            ));
        }
        for (&b, &e) in targets.iter().zip(&thresholds) {
            if !(e > 0.0 && b - e > 0.0 && b + e < 1.0) {
                return Err(Error::InvalidParams(format!(
                    "box [{}, {}] is not inside (0, 1)",
                    b - e,
                    b + e
                )));
            }
        }
        if !(0.0..1.0).contains(&cost) {
            return Err(Error::InvalidParams(format!(
                "cost must be in [0, 1), got {cost}"
            )));
        }
        Ok(Self {
            targets,
            thresholds,
            cost,
        })
    }

    pub fn inside(&self, portfolio: &[f64]) -> bool {
        portfolio
            .iter()
            .zip(self.targets.iter().zip(&self.thresholds))
            .all(|(&p, (&b, &e))| (p - b).abs() < e)
    }

    /// 1 − c·½·Σ|b′ᵢ − bᵢ|.
    pub fn rebalance_factor(&self, drifted: &[f64]) -> f64 {
        let l1: f64 = drifted
            .iter()
            .zip(&self.targets)
            .map(|(p, b)| (p - b).abs())
            .sum();
        1.0 - self.cost * 0.5 * l1
    }

    fn portfolio_at(&self, offsets: &[f64]) -> Vec<f64> {
        let raw: Vec<f64> = self
            .targets
            .iter()
            .enumerate()
            .map(|(i, &b)| if i == 0 { b } else { b * offsets[i - 1].exp() })
            .collect();
        let total: f64 = raw.iter().sum();
        raw.into_iter().map(|w| w / total).collect()
    }
}

/// Recursion state of an m-asset TRP; offsets are ln(ΠXᵢ/ΠX₁) for i = 2..m.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiWealthState {
    period: usize,
    offsets: Vec<Vec<f64>>,
    portfolios: Vec<Vec<f64>>,
    probs: Vec<f64>,
    weighted_wealth: Vec<f64>,
}

impl MultiWealthState {
    pub fn initial(params: &MultiAssetParams) -> Self {
        Self {
            period: 0,
            offsets: vec![vec![0.0; params.targets.len() - 1]],
            portfolios: vec![params.targets.clone()],
            probs: vec![1.0],
            weighted_wealth: vec![1.0],
        }
    }

    pub fn period(&self) -> usize {
        self.period
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn portfolios(&self) -> &[Vec<f64>] {
        &self.portfolios
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn expected_wealth(&self) -> f64 {
        self.weighted_wealth.iter().sum()
    }

    pub fn total_probability(&self) -> f64 {
        self.probs.iter().sum()
    }
}

#[derive(Debug, Default)]
struct VecKeys {
    map: BTreeMap<Vec<i64>, usize>,
}

impl VecKeys {
    fn key(offsets: &[f64]) -> Vec<i64> {
        offsets
            .iter()
            .map(|s| (s / OFFSET_RESOLUTION).round() as i64)
            .collect()
    }

    fn get(&self, offsets: &[f64]) -> Option<usize> {
        let base = Self::key(offsets);
        let dims = base.len();
        let combos = 3usize.pow(dims as u32);
        (0..combos).find_map(|mut c| {
            let mut k = base.clone();
            for v in k.iter_mut() {
                *v += (c % 3) as i64 - 1;
                c /= 3;
            }
            self.map.get(&k).copied()
        })
    }

    fn insert(&mut self, offsets: &[f64], index: usize) {
        self.map.insert(Self::key(offsets), index);
    }
}

fn multi_step(
    state: &MultiWealthState,
    outcomes: &[(Vec<f64>, f64, Vec<f64>)],
    params: &MultiAssetParams,
) -> MultiWealthState {
    let dims = params.targets.len() - 1;
    let mut keys = VecKeys::default();
    let mut offsets: Vec<Vec<f64>> = Vec::new();
    let mut probs: Vec<f64> = Vec::new();
    let mut wealth: Vec<f64> = Vec::new();
    let mut deposit = |offset: Vec<f64>, p: f64, e: f64| {
        let i = match keys.get(&offset) {
            Some(i) => i,
            None => {
                let canonical: Vec<f64> = offset
                    .into_iter()
                    .map(|s| if s.abs() <= OFFSET_RESOLUTION { 0.0 } else { s })
                    .collect();
                keys.insert(&canonical, offsets.len());
                offsets.push(canonical);
                probs.push(0.0);
                wealth.push(0.0);
                offsets.len() - 1
            }
        };
        probs[i] += p;
        wealth[i] += e;
    };

    for k in 0..state.len() {
        let bk = &state.portfolios[k];
        for (x, p, z) in outcomes {
            let growth: f64 = bk.iter().zip(x).map(|(b, x)| b * x).sum();
            let drifted: Vec<f64> = bk.iter().zip(x).map(|(b, x)| b * x / growth).collect();
            let (pk, ek) = (state.probs[k] * p, state.weighted_wealth[k] * p * growth);
            if params.inside(&drifted) {
                let next = state.offsets[k].iter().zip(z).map(|(s, z)| s + z).collect();
                deposit(next, pk, ek);
            } else {
                deposit(vec![0.0; dims], pk, ek * params.rebalance_factor(&drifted));
            }
        }
    }

    let mut order: Vec<usize> = (0..offsets.len()).collect();
    order.sort_by(|&i, &j| cmp_offsets(&offsets[i], &offsets[j]));
    let offsets: Vec<Vec<f64>> = order.iter().map(|&i| offsets[i].clone()).collect();
    MultiWealthState {
        period: state.period + 1,
        portfolios: offsets.iter().map(|s| params.portfolio_at(s)).collect(),
        offsets,
        probs: order.iter().map(|&i| probs[i]).collect(),
        weighted_wealth: order.iter().map(|&i| wealth[i]).collect(),
    }
}

fn cmp_offsets(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

fn multi_prune(state: &MultiWealthState, keep: usize) -> MultiWealthState {
    let keep = keep.max(1);
    if state.len() <= keep {
        return state.clone();
    }
    let mut rank: Vec<usize> = (0..state.len()).collect();
    rank.sort_by(|&i, &j| {
        state.probs[j]
            .total_cmp(&state.probs[i])
            .then(cmp_offsets(&state.offsets[i], &state.offsets[j]))
    });
    let mut survivors: Vec<usize> = rank[..keep].to_vec();
    survivors.sort_unstable();
    let mut probs: Vec<f64> = survivors.iter().map(|&i| state.probs[i]).collect();
    let mut wealth: Vec<f64> = survivors
        .iter()
        .map(|&i| state.weighted_wealth[i])
        .collect();
    for &i in &rank[keep..] {
        let dist = |j: usize| -> f64 {
            state.offsets[i]
                .iter()
                .zip(&state.offsets[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum()
        };
        let nearest = (0..survivors.len())
            .min_by(|&a, &b| dist(survivors[a]).total_cmp(&dist(survivors[b])))
            .expect("at least one survivor");
        probs[nearest] += state.probs[i];
        wealth[nearest] += state.weighted_wealth[i];
    }
    MultiWealthState {
        period: state.period,
        offsets: survivors
            .iter()
            .map(|&i| state.offsets[i].clone())
            .collect(),
        portfolios: survivors
            .iter()
            .map(|&i| state.portfolios[i].clone())
            .collect(),
        probs,
        weighted_wealth: wealth,
    }
}

/// E[S(1)], …, E[S(N)] for an m-asset TRP.
pub fn expected_wealth_m_asset(
    market: &DiscreteMarket,
    params: &MultiAssetParams,
    n_periods: usize,
    prune_to: Option<usize>,
) -> Result<Vec<f64>> {
    Ok(multi_asset_states(
        market,
        params,
        n_periods,
        RecursionConfig {
            prune_to,
            ..RecursionConfig::default()
        },
    )?
    .iter()
    .map(MultiWealthState::expected_wealth)
    .collect())
}

/// States after periods 1..=N of the m-asset recursion.
pub fn multi_asset_states(
    market: &DiscreteMarket,
    params: &MultiAssetParams,
    n_periods: usize,
    config: RecursionConfig,
) -> Result<Vec<MultiWealthState>> {
    market.require_assets(params.targets.len())?;
    if n_periods == 0 {
        return Err(Error::InvalidParams("n_periods must be at least 1".into()));
    }
    let outcomes: Vec<(Vec<f64>, f64, Vec<f64>)> = market
        .joint_outcomes()
        .into_iter()
        .map(|(x, p)| {
            let z = x[1..].iter().map(|&xi| log_ratio(x[0], xi)).collect();
            (x, p, z)
        })
        .collect();
    let mut state = MultiWealthState::initial(params);
    let mut out = Vec::with_capacity(n_periods);
    for _ in 0..n_periods {
        let next = multi_step(&state, &outcomes, params);
        if next.len() > config.hard_cap {
            return Err(Error::StateExplosion {
                period: next.period,
                states: next.len(),
                cap: config.hard_cap,
            });
        }
        state = match config.prune_to {
            Some(keep) => multi_prune(&next, keep),
            None => next,
        };
        out.push(state.clone());
    }
    Ok(out)
}
