//! Achievable-portfolio state space of a two-asset TRP.
//!
//! Between rebalances the portfolio is a function of the running log-ratio sum
//! s = Σ ln(X₂/X₁): 1/b(s) = 1 + ((1−b)/b)·eˢ, and it stays inside (b−ε, b+ε)
//! exactly while every partial sum stays inside (α₂, α₁). States are therefore
//! identified by their log-offset s. When the positive log-ratios generate a
//! lattice δℤ the state set is the finite set of reachable lattice points in
//! (α₂, α₁); otherwise it is countably infinite and only a truncated breadth-first
//! closure can be enumerated.

use std::collections::{BTreeMap, VecDeque};
use std::io::Write;

use num_integer::Integer;

use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::market::{DiscreteMarket, TrpParams};

/// Log-ratios closer than this are the same alphabet letter / the same state.
pub const OFFSET_RESOLUTION: f64 = 1e-12;

/// Z = ln(X₂/X₁).
pub fn log_ratio(x1: f64, x2: f64) -> f64 {
    (x2 / x1).ln()
}

/// Portfolio reached from target `b` after log-offset `offset` without rebalancing.
pub fn portfolio_at(b: f64, offset: f64) -> f64 {
    1.0 / (1.0 + (1.0 - b) / b * offset.exp())
}

/// Sorted distinct log-ratios 𝒵.
#[derive(Debug, Clone, PartialEq)]
pub struct LogRatioAlphabet {
    values: Vec<f64>,
}

impl LogRatioAlphabet {
    pub fn from_values(mut values: Vec<f64>) -> Self {
        values.retain(|v| v.is_finite());
        values.sort_by(f64::total_cmp);
        let mut out: Vec<f64> = Vec::with_capacity(values.len());
        for v in values {
            match out.last() {
                Some(&last) if (v - last).abs() <= OFFSET_RESOLUTION => {}
                _ => out.push(v),
            }
        }
        // A letter within resolution of zero is zero.
        for v in &mut out {
            if v.abs() <= OFFSET_RESOLUTION {
                *v = 0.0;
            }
        }
        Self { values: out }
    }

    /// 𝒵 = {ln(u/v) : u, v ∈ 𝒳}, regardless of probabilities.
    pub fn from_sample_space(samples: &[f64]) -> Self {
        let values = samples
            .iter()
            .flat_map(|&v| samples.iter().map(move |&u| log_ratio(v, u)))
            .collect();
        Self::from_values(values)
    }

    /// Log-ratios ln(w₂/w₁) that occur with positive probability in a two-asset market.
    pub fn from_market(market: &DiscreteMarket) -> Result<Self> {
        let pairs = market.support_pairs()?;
        Ok(Self::from_values(
            pairs.iter().map(|&(w1, w2, _)| log_ratio(w1, w2)).collect(),
        ))
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// 𝒵⁺ = {z ∈ 𝒵 : z ≥ 0}.
    pub fn positive_part(&self) -> Vec<f64> {
        self.values.iter().copied().filter(|&z| z >= 0.0).collect()
    }

    /// Distinct magnitudes |z| > 0, ascending.
    fn magnitudes(&self) -> Vec<f64> {
        Self::from_values(
            self.values
                .iter()
                .map(|z| z.abs())
                .filter(|&z| z > 0.0)
                .collect(),
        )
        .values
    }
}

/// Log-sum bounds: the portfolio stays in (b−ε, b+ε) iff partial sums stay in (α₂, α₁).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalBounds {
    pub alpha1: f64,
    pub alpha2: f64,
}

impl IntervalBounds {
    pub fn contains(&self, offset: f64) -> bool {
        offset > self.alpha2 && offset < self.alpha1
    }

    pub fn min_magnitude(&self) -> f64 {
        self.alpha1.abs().min(self.alpha2.abs())
    }
}

pub fn interval_bounds(params: &TrpParams) -> IntervalBounds {
    let (b, eps) = (params.b, params.epsilon);
    IntervalBounds {
        alpha1: (b * (1.0 - b + eps) / ((1.0 - b) * (b - eps))).ln(),
        alpha2: (b * (1.0 - b - eps) / ((1.0 - b) * (b + eps))).ln(),
    }
}

/// Every z ∈ 𝒵⁺ satisfies |z| < min(|α₁|, |α₂|).
pub fn technical_condition_holds(alphabet: &LogRatioAlphabet, bounds: &IntervalBounds) -> bool {
    let limit = bounds.min_magnitude();
    alphabet.positive_part().iter().all(|z| z.abs() < limit)
}

/// Rationalization settings for the lattice step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeConfig {
    /// Relative error allowed when approximating z/z_min by a rational.
    pub rel_tolerance: f64,
    /// Largest denominator (and common denominator) accepted before δ is declared infinite.
    pub max_denominator: u64,
}

impl Default for LatticeConfig {
    fn default() -> Self {
        Self {
            rel_tolerance: 1e-9,
            max_denominator: 1000,
        }
    }
}

/// Minimum positive element of the integer span of 𝒵⁺.
#[derive(Debug, Clone, PartialEq)]
pub enum LatticeStep {
    /// 𝒵⁺ ⊆ {0}: the portfolio never moves.
    Degenerate,
    /// δ > 0 with every |z| ≈ n·δ.
    Finite { delta: f64, max_error: f64 },
    /// No common rational structure within tolerance.
    Infinite,
}

impl LatticeStep {
    pub fn delta(&self) -> Option<f64> {
        match self {
            LatticeStep::Finite { delta, .. } => Some(*delta),
            _ => None,
        }
    }

    pub fn is_infinite(&self) -> bool {
        matches!(self, LatticeStep::Infinite)
    }
}

/// First continued-fraction convergent p/q of `x` with |x − p/q| ≤ rel_tol·|x|.
pub fn rational_approximation(x: f64, rel_tol: f64, max_den: u64) -> Option<(i64, u64)> {
    let (mut h_prev, mut h) = (0i128, 1i128);
    let (mut k_prev, mut k) = (1i128, 0i128);
    let mut rem = x;
    for _ in 0..64 {
        let a = rem.floor();
        let ai = a as i128;
        let h_next = ai * h + h_prev;
        let k_next = ai * k + k_prev;
        if k_next > max_den as i128 {
            return None;
        }
        (h_prev, h, k_prev, k) = (h, h_next, k, k_next);
        let approx = h as f64 / k as f64;
        if (x - approx).abs() <= rel_tol * x.abs() {
            return Some((h as i64, k as u64));
        }
        let frac = rem - a;
        if frac <= 0.0 {
            return Some((h as i64, k as u64));
        }
        rem = 1.0 / frac;
    }
    None
}

pub fn lattice_step(alphabet: &LogRatioAlphabet, rel_tolerance: f64) -> LatticeStep {
    lattice_step_with(
        alphabet,
        &LatticeConfig {
            rel_tolerance,
            ..LatticeConfig::default()
        },
    )
}

/// δ via continued fractions: each |z| is rationalized against the smallest |z|,
/// the rationals are brought over a common denominator and δ is their gcd.
pub fn lattice_step_with(alphabet: &LogRatioAlphabet, config: &LatticeConfig) -> LatticeStep {
    let mags = alphabet.magnitudes();
    let Some(&base) = mags.first() else {
        return LatticeStep::Degenerate;
    };
    let mut fracs = Vec::with_capacity(mags.len());
    let mut common: u64 = 1;
    for &z in &mags {
        let Some((p, q)) =
            rational_approximation(z / base, config.rel_tolerance, config.max_denominator)
        else {
            return LatticeStep::Infinite;
        };
        common = common.lcm(&q);
        if common > config.max_denominator {
            return LatticeStep::Infinite;
        }
        fracs.push((p, q));
    }
    // z ≈ (base / common) · n
    let numerators: Vec<i64> = fracs
        .iter()
        .map(|&(p, q)| p * (common / q) as i64)
        .collect();
    let g = numerators.iter().fold(0i64, |acc, &n| acc.gcd(&n));
    let multiples: Vec<i64> = numerators.iter().map(|n| n / g).collect();
    // least-squares δ over all letters
    let num: f64 = mags
        .iter()
        .zip(&multiples)
        .map(|(z, &n)| z * n as f64)
        .sum();
    let den: f64 = multiples.iter().map(|&n| (n * n) as f64).sum();
    let delta = num / den;
    let max_error = mags
        .iter()
        .zip(&multiples)
        .map(|(z, &n)| (z / n as f64 - delta).abs())
        .fold(0.0, f64::max);
    LatticeStep::Finite { delta, max_error }
}

/// The achievable portfolios of a TRP, sorted by log-offset.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpace {
    b: f64,
    offsets: Vec<f64>,
    portfolios: Vec<f64>,
    lattice: Option<Vec<i64>>,
    delta: Option<f64>,
    target: usize,
    finite: bool,
}

impl StateSpace {
    pub(crate) fn from_offsets(
        b: f64,
        mut offsets: Vec<f64>,
        delta: Option<f64>,
        lattice: Option<Vec<i64>>,
        finite: bool,
    ) -> Self {
        let mut order: Vec<usize> = (0..offsets.len()).collect();
        order.sort_by(|&i, &j| offsets[i].total_cmp(&offsets[j]));
        let lattice = lattice.map(|l| order.iter().map(|&i| l[i]).collect());
        offsets = order.iter().map(|&i| offsets[i]).collect();
        let target = offsets
            .iter()
            .position(|&s| s == 0.0)
            .expect("offset 0 is always a state");
        let portfolios = offsets.iter().map(|&s| portfolio_at(b, s)).collect();
        Self {
            b,
            offsets,
            portfolios,
            lattice,
            delta,
            target,
            finite,
        }
    }

    pub fn len(&self) -> usize {
        self.offsets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.offsets.is_empty()
    }

    /// Target portfolio b.
    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn portfolios(&self) -> &[f64] {
        &self.portfolios
    }

    /// Integer lattice coordinates (offset = j·δ) when δ is finite.
    pub fn lattice_indices(&self) -> Option<&[i64]> {
        self.lattice.as_deref()
    }

    pub fn delta(&self) -> Option<f64> {
        self.delta
    }

    /// Index of the state holding the target portfolio b.
    pub fn target(&self) -> usize {
        self.target
    }

    pub fn is_finite(&self) -> bool {
        self.finite
    }

    /// Index of the state at `offset`, if any.
    pub fn find(&self, offset: f64) -> Option<usize> {
        if let (Some(delta), Some(lattice)) = (self.delta, &self.lattice) {
            let j = (offset / delta).round() as i64;
            return lattice.binary_search(&j).ok();
        }
        let i = self
            .offsets
            .partition_point(|&s| s < offset - OFFSET_RESOLUTION);
        (i < self.offsets.len() && (self.offsets[i] - offset).abs() <= OFFSET_RESOLUTION)
            .then_some(i)
    }

    /// CSV with header `index,portfolio,offset`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "index,portfolio,offset")?;
        for (i, (b, s)) in self.portfolios.iter().zip(&self.offsets).enumerate() {
            writeln!(out, "{},{},{}", i, fmt_num(*b), fmt_num(*s))?;
        }
        Ok(())
    }
}

pub fn enumerate_states(
    params: &TrpParams,
    alphabet: &LogRatioAlphabet,
    max_states: usize,
) -> Result<StateSpace> {
    enumerate_states_with(params, alphabet, max_states, &LatticeConfig::default())
}

pub fn enumerate_states_with(
    params: &TrpParams,
    alphabet: &LogRatioAlphabet,
    max_states: usize,
    config: &LatticeConfig,
) -> Result<StateSpace> {
    let bounds = interval_bounds(params);
    if !technical_condition_holds(alphabet, &bounds) {
        let max_z = alphabet.positive_part().into_iter().fold(0.0, f64::max);
        return Err(Error::TechnicalConditionViolated {
            max_z,
            bound: bounds.min_magnitude(),
        });
    }
    let max_states = max_states.max(1);
    match lattice_step_with(alphabet, config) {
        LatticeStep::Degenerate => Ok(StateSpace::from_offsets(
            params.b,
            vec![0.0],
            None,
            None,
            true,
        )),
        LatticeStep::Finite { delta, max_error } => {
            enumerate_lattice(params.b, alphabet, &bounds, delta, max_error, max_states)
        }
        LatticeStep::Infinite => Ok(enumerate_closure(params.b, alphabet, &bounds, max_states)),
    }
}

fn enumerate_lattice(
    b: f64,
    alphabet: &LogRatioAlphabet,
    bounds: &IntervalBounds,
    delta: f64,
    max_error: f64,
    max_states: usize,
) -> Result<StateSpace> {
    let mut moves: Vec<i64> = alphabet
        .values()
        .iter()
        .map(|&z| (z / delta).round() as i64)
        .filter(|&n| n != 0)
        .collect();
    moves.sort_unstable();
    moves.dedup();

    let inside = |j: i64| -> Result<bool> {
        let pos = j as f64 * delta;
        let margin = j.unsigned_abs() as f64 * max_error;
        for alpha in [bounds.alpha1, bounds.alpha2] {
            if (pos - alpha).abs() <= margin && margin > 0.0 {
                return Err(Error::ToleranceTooCoarse { index: j, margin });
            }
        }
        Ok(bounds.contains(pos))
    };

    let mut seen: BTreeMap<i64, ()> = BTreeMap::new();
    let mut queue = VecDeque::from([0i64]);
    seen.insert(0, ());
    while let Some(j) = queue.pop_front() {
        for &m in &moves {
            let next = j + m;
            if seen.contains_key(&next) || !inside(next)? {
                continue;
            }
            if seen.len() == max_states {
                let lattice: Vec<i64> = seen.keys().copied().collect();
                let offsets = lattice.iter().map(|&j| j as f64 * delta).collect();
                return Err(Error::StateCapExceeded {
                    cap: max_states,
                    partial: Box::new(StateSpace::from_offsets(
                        b,
                        offsets,
                        Some(delta),
                        Some(lattice),
                        false,
                    )),
                });
            }
            seen.insert(next, ());
            queue.push_back(next);
        }
    }
    let lattice: Vec<i64> = seen.into_keys().collect();
    let offsets = lattice.iter().map(|&j| j as f64 * delta).collect();
    Ok(StateSpace::from_offsets(
        b,
        offsets,
        Some(delta),
        Some(lattice),
        true,
    ))
}

/// Breadth-first closure over real offsets, truncated at `max_states`.
fn enumerate_closure(
    b: f64,
    alphabet: &LogRatioAlphabet,
    bounds: &IntervalBounds,
    max_states: usize,
) -> StateSpace {
    let moves: Vec<f64> = alphabet
        .values()
        .iter()
        .copied()
        .filter(|&z| z != 0.0)
        .collect();
    let mut keys = OffsetKeys::default();
    let mut offsets = vec![0.0];
    keys.insert(0.0, 0);
    let mut queue = VecDeque::from([0.0f64]);
    'bfs: while let Some(s) = queue.pop_front() {
        for &z in &moves {
            let next = s + z;
            if !bounds.contains(next) || keys.get(next).is_some() {
                continue;
            }
            if offsets.len() == max_states {
                break 'bfs;
            }
            keys.insert(next, offsets.len());
            offsets.push(next);
            queue.push_back(next);
        }
    }
    let finite = queue.is_empty() && offsets.len() < max_states;
    StateSpace::from_offsets(b, offsets, None, None, finite)
}

/// Maps offsets to indices, merging offsets closer than [`OFFSET_RESOLUTION`].
#[derive(Debug, Default, Clone)]
pub(crate) struct OffsetKeys {
    map: BTreeMap<i64, usize>,
}

impl OffsetKeys {
    fn key(offset: f64) -> i64 {
        (offset / OFFSET_RESOLUTION).round() as i64
    }

    pub(crate) fn get(&self, offset: f64) -> Option<usize> {
        let k = Self::key(offset);
        self.map
            .get(&k)
            .or_else(|| self.map.get(&(k - 1)))
            .or_else(|| self.map.get(&(k + 1)))
            .copied()
    }

    pub(crate) fn insert(&mut self, offset: f64, index: usize) {
        self.map.insert(Self::key(offset), index);
    }
}

/// Builds a step sequence realizing Σ mᵢzᵢ whose partial sums stay inside the bounds:
/// while the running sum is nonnegative take a pending negative step, otherwise a
/// pending positive one, and flush the remaining one-signed steps at the end.
///
/// `terms` holds `(zᵢ, mᵢ)` with zᵢ > 0. Returns `None` if some partial sum leaves
/// (α₂, α₁), which cannot happen when every zᵢ is below min(|α₁|, |α₂|) and the
/// target sum lies inside.
pub fn constructive_walk(terms: &[(f64, i64)], bounds: &IntervalBounds) -> Option<Vec<f64>> {
    let mut remaining: Vec<i64> = terms.iter().map(|t| t.1).collect();
    let mut steps = Vec::new();
    let mut sum = 0.0;
    loop {
        let neg = remaining.iter().position(|&m| m < 0);
        let pos = remaining.iter().position(|&m| m > 0);
        let pick = if sum >= 0.0 { neg.or(pos) } else { pos.or(neg) };
        let Some(i) = pick else { break };
        let z = terms[i].0;
        let step = if remaining[i] < 0 {
            remaining[i] += 1;
            -z
        } else {
            remaining[i] -= 1;
            z
        };
        sum += step;
        if !bounds.contains(sum) {
            return None;
        }
        steps.push(step);
    }
    Some(steps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn brownian_alphabet(k: f64) -> LogRatioAlphabet {
        LogRatioAlphabet::from_market(&DiscreteMarket::brownian(k).unwrap()).unwrap()
    }

    #[test]
    fn bounds_at_half() {
        let b = interval_bounds(&TrpParams::new(0.5, 0.1, 0.0).unwrap());
        assert!((b.alpha1 - 1.5f64.ln()).abs() < 1e-15);
        assert!((b.alpha1 - 0.4054651).abs() < 1e-7);
        assert!((b.alpha1 + b.alpha2).abs() < 1e-15);
        for eps in [0.01, 0.2, 0.45] {
            let b = interval_bounds(&TrpParams::new(0.5, eps, 0.0).unwrap());
            assert!((b.alpha1 + b.alpha2).abs() < 1e-14);
        }
        let tiny = interval_bounds(&TrpParams::new(0.5, 1e-9, 0.0).unwrap());
        assert!(tiny.alpha1 < 1e-8 && tiny.alpha2 > -1e-8);
    }

    #[test]
    fn technical_condition_cases() {
        let alpha = brownian_alphabet(0.03);
        let b = interval_bounds(&TrpParams::new(0.5, 0.1, 0.0).unwrap());
        assert!(technical_condition_holds(&alpha, &b));
        // α₁(0.5, ε) = ln((0.5+ε)/(0.5−ε)) = 0.03  ⇔  ε = 0.5·tanh(0.015)
        let eps_star = 0.5 * 0.015f64.tanh();
        let narrow = interval_bounds(&TrpParams::new(0.5, 0.9 * eps_star, 0.0).unwrap());
        assert!(narrow.alpha1 < 0.03);
        assert!(!technical_condition_holds(&alpha, &narrow));
        let singleton = LogRatioAlphabet::from_sample_space(&[1.0]);
        assert_eq!(singleton.positive_part(), vec![0.0]);
        assert!(technical_condition_holds(&singleton, &narrow));
    }

    #[test]
    fn full_alphabet_size_bound() {
        for samples in [vec![1.0], vec![0.9, 1.1], vec![0.8, 1.0, 1.3, 2.0]] {
            let a = LogRatioAlphabet::from_sample_space(&samples);
            let k = samples.len();
            assert!(a.len() <= k * k - k + 1);
            assert!(a.values().contains(&0.0));
        }
    }

    #[test]
    fn lattice_steps() {
        let single = LogRatioAlphabet::from_values(vec![-0.03, 0.03]);
        assert!((lattice_step(&single, 1e-9).delta().unwrap() - 0.03).abs() < 1e-15);
        let two = LogRatioAlphabet::from_values(vec![0.02, 0.03]);
        assert!((lattice_step(&two, 1e-9).delta().unwrap() - 0.01).abs() < 1e-15);
        let logs = LogRatioAlphabet::from_values(vec![2f64.ln(), 3f64.ln()]);
        assert!(lattice_step(&logs, 1e-12).is_infinite());
        let zero = LogRatioAlphabet::from_values(vec![0.0]);
        assert_eq!(lattice_step(&zero, 1e-9), LatticeStep::Degenerate);
    }

    #[test]
    fn continued_fraction_convergents() {
        assert_eq!(rational_approximation(1.5, 1e-12, 100), Some((3, 2)));
        assert_eq!(rational_approximation(2.0, 1e-12, 100), Some((2, 1)));
        let (p, q) = rational_approximation(std::f64::consts::PI, 1e-6, 1000).unwrap();
        assert_eq!((p, q), (355, 113));
        assert_eq!(
            rational_approximation(std::f64::consts::PI, 1e-12, 1000),
            None
        );
    }

    #[test]
    fn brownian_has_27_states() {
        let params = TrpParams::new(0.5, 0.1, 0.01).unwrap();
        let space = enumerate_states(&params, &brownian_alphabet(0.03), 10_000).unwrap();
        assert!(space.is_finite());
        assert_eq!(space.len(), 27);
        assert_eq!(space.target(), 13);
        assert_eq!(space.portfolios()[space.target()], 0.5);
        assert!(space
            .portfolios()
            .iter()
            .all(|&p| p > params.lower() && p < params.upper()));
    }

    #[test]
    fn singleton_market_has_one_state() {
        let market = DiscreteMarket::two_asset(vec![1.0], vec![1.0], vec![1.0]).unwrap();
        let alphabet = LogRatioAlphabet::from_market(&market).unwrap();
        let params = TrpParams::new(0.3, 0.1, 0.01).unwrap();
        let space = enumerate_states(&params, &alphabet, 100).unwrap();
        assert_eq!(space.len(), 1);
        assert_eq!(space.portfolios(), &[0.3]);
    }

    #[test]
    fn incommensurable_space_is_truncated() {
        let alphabet = LogRatioAlphabet::from_values(vec![
            -(1.1f64.ln()),
            -(1.07f64.ln()),
            1.07f64.ln(),
            1.1f64.ln(),
        ]);
        let params = TrpParams::new(0.5, 0.3, 0.01).unwrap();
        let space = enumerate_states(&params, &alphabet, 500).unwrap();
        assert!(!space.is_finite());
        assert_eq!(space.len(), 500);
    }

    #[test]
    fn technical_condition_violation_errors() {
        let params = TrpParams::new(0.5, 0.005, 0.01).unwrap();
        let err = enumerate_states(&params, &brownian_alphabet(0.03), 100).unwrap_err();
        assert!(matches!(err, Error::TechnicalConditionViolated { .. }));
    }

    #[test]
    fn state_cap_carries_partial() {
        let params = TrpParams::new(0.5, 0.45, 0.01).unwrap();
        match enumerate_states(&params, &brownian_alphabet(0.01), 50) {
            Err(Error::StateCapExceeded { cap, partial }) => {
                assert_eq!(cap, 50);
                assert_eq!(partial.len(), 50);
            }
            other => panic!("expected StateCapExceeded, got {other:?}"),
        }
    }

    #[test]
    fn find_by_offset() {
        let params = TrpParams::new(0.5, 0.1, 0.01).unwrap();
        let space = enumerate_states(&params, &brownian_alphabet(0.03), 100).unwrap();
        assert_eq!(space.find(0.0), Some(space.target()));
        assert_eq!(space.find(0.03 * 13.0), Some(26));
        assert_eq!(space.find(0.03 * 14.0), None);
    }

    #[test]
    fn state_csv_header() {
        let params = TrpParams::new(0.5, 0.1, 0.01).unwrap();
        let space = enumerate_states(&params, &brownian_alphabet(0.03), 100).unwrap();
        let mut buf = Vec::new();
        space.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.starts_with("index,portfolio,offset\n"));
        assert_eq!(text.lines().count(), 28);
    }
}
