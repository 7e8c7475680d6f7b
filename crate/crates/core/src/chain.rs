//! Finite-state Markov chain of a TRP and its asymptotic growth rate.
//!
//! Orientation is column-stochastic: `P[l][k]` is the probability of moving from
//! state k to state l, so π(n+1) = P π(n) and e(n+1) = Q e(n) with e(0) the unit
//! vector at the target state. Q carries κ = (b_k w₁ + (1−b_k) w₂)·p₁(w₁)p₂(w₂) on
//! every move and the extra factor 1 − c·|b′ − b| on moves that rebalance.

use std::collections::VecDeque;
use std::io::Write;

use nalgebra::DMatrix;
use num_integer::Integer;

use crate::error::{Error, Result};
use crate::io::fmt_num;
use crate::market::{DiscreteMarket, TrpParams};
use crate::state_space::{interval_bounds, log_ratio, StateSpace};

/// Square matrix stored as per-column lists of `(row, value)`, rows ascending.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseMatrix {
    n: usize,
    cols: Vec<Vec<(usize, f64)>>,
}

impl SparseMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            cols: vec![Vec::new(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Adds `value` at (row, col).
    pub fn add(&mut self, row: usize, col: usize, value: f64) {
        let column = &mut self.cols[col];
        match column.binary_search_by_key(&row, |e| e.0) {
            Ok(i) => column[i].1 += value,
            Err(i) => column.insert(i, (row, value)),
        }
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        let column = &self.cols[col];
        column
            .binary_search_by_key(&row, |e| e.0)
            .map(|i| column[i].1)
            .unwrap_or(0.0)
    }

    pub fn column(&self, col: usize) -> &[(usize, f64)] {
        &self.cols[col]
    }

    pub fn nnz(&self) -> usize {
        self.cols.iter().map(Vec::len).sum()
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n];
        self.mul_vec_into(x, &mut y);
        y
    }

    fn mul_vec_into(&self, x: &[f64], y: &mut [f64]) {
        y.iter_mut().for_each(|v| *v = 0.0);
        for (k, column) in self.cols.iter().enumerate() {
            let xk = x[k];
            if xk != 0.0 {
                for &(l, v) in column {
                    y[l] += v * xk;
                }
            }
        }
    }

    /// y = Mᵀ x.
    pub fn transpose_mul_vec(&self, x: &[f64]) -> Vec<f64> {
        self.cols
            .iter()
            .map(|column| column.iter().map(|&(l, v)| v * x[l]).sum())
            .collect()
    }

    pub fn column_sums(&self) -> Vec<f64> {
        self.cols
            .iter()
            .map(|column| column.iter().map(|e| e.1).sum())
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.n, self.n);
        for (k, column) in self.cols.iter().enumerate() {
            for &(l, v) in column {
                m[(l, k)] = v;
            }
        }
        m
    }

    /// CSV with header `row,col,value`, nonzero entries in row-major order.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "row,col,value")?;
        let mut entries: Vec<(usize, usize, f64)> = self
            .cols
            .iter()
            .enumerate()
            .flat_map(|(k, column)| column.iter().map(move |&(l, v)| (l, k, v)))
            .collect();
        entries.sort_by_key(|e| (e.0, e.1));
        for (l, k, v) in entries {
            writeln!(out, "{l},{k},{}", fmt_num(v))?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainMatrices {
    p: SparseMatrix,
    q: SparseMatrix,
    states: StateSpace,
    irreducible: bool,
}

impl ChainMatrices {
    pub(crate) fn from_parts(states: StateSpace, p: SparseMatrix, q: SparseMatrix) -> Self {
        let irreducible = strongly_connected(&p, states.target());
        Self {
            p,
            q,
            states,
            irreducible,
        }
    }

    /// State-transition matrix, column-stochastic.
    pub fn p(&self) -> &SparseMatrix {
        &self.p
    }

    /// Wealth-propagation matrix.
    pub fn q(&self) -> &SparseMatrix {
        &self.q
    }

    pub fn states(&self) -> &StateSpace {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn is_irreducible(&self) -> bool {
        self.irreducible
    }

    /// gcd of the cycle lengths through the target state's class.
    pub fn period(&self) -> usize {
        let n = self.len();
        let mut level = vec![usize::MAX; n];
        let start = self.states.target();
        level[start] = 0;
        let mut queue = VecDeque::from([start]);
        let mut g = 0usize;
        while let Some(k) = queue.pop_front() {
            for &(l, v) in self.p.column(k) {
                if v <= 0.0 {
                    continue;
                }
                if level[l] == usize::MAX {
                    level[l] = level[k] + 1;
                    queue.push_back(l);
                } else {
                    g = g.gcd(&(level[k] + 1).abs_diff(level[l]));
                }
            }
        }
        g.max(1)
    }

    /// Wealth vector e(n) after `n` steps from the target state.
    pub fn propagate_wealth(&self, n: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.len()];
        e[self.states.target()] = 1.0;
        let mut next = vec![0.0; self.len()];
        for _ in 0..n {
            self.q.mul_vec_into(&e, &mut next);
            std::mem::swap(&mut e, &mut next);
        }
        e
    }
}

fn strongly_connected(p: &SparseMatrix, root: usize) -> bool {
    let n = p.dim();
    let reach = |forward: bool| -> usize {
        let mut adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        for k in 0..n {
            for &(l, v) in p.column(k) {
                if v > 0.0 {
                    if forward {
                        adj[k].push(l);
                    } else {
                        adj[l].push(k);
                    }
                }
            }
        }
        let mut seen = vec![false; n];
        seen[root] = true;
        let mut stack = vec![root];
        let mut count = 1;
        while let Some(k) = stack.pop() {
            for &l in &adj[k] {
                if !seen[l] {
                    seen[l] = true;
                    count += 1;
                    stack.push(l);
                }
            }
        }
        count
    };
    reach(true) == n && reach(false) == n
}

/// Builds P and Q over a finite state space.
pub fn build_matrices(
    space: &StateSpace,
    market: &DiscreteMarket,
    params: &TrpParams,
) -> Result<ChainMatrices> {
    if !space.is_finite() {
        return Err(Error::NotFinite);
    }
    if (space.b() - params.b).abs() > 0.0 {
        return Err(Error::InvalidParams(format!(
            "state space built for b = {}, params have b = {}",
            space.b(),
            params.b
        )));
    }
    let bounds = interval_bounds(params);
    let n = space.len();
    let target = space.target();
    let mut p = SparseMatrix::zeros(n);
    let mut q = SparseMatrix::zeros(n);
    let moves: Vec<(f64, f64, f64, f64)> = market
        .support_pairs()?
        .into_iter()
        .map(|(w1, w2, prob)| (w1, w2, prob, log_ratio(w1, w2)))
        .collect();

    for k in 0..n {
        let bk = space.portfolios()[k];
        for &(w1, w2, prob, z) in &moves {
            let growth = bk * w1 + (1.0 - bk) * w2;
            let dest = match (space.lattice_indices(), space.delta()) {
                (Some(lattice), Some(delta)) => {
                    let j = lattice[k] + (z / delta).round() as i64;
                    if bounds.contains(j as f64 * delta) {
                        Some(lattice.binary_search(&j).map_err(|_| Error::NotFinite)?)
                    } else {
                        None
                    }
                }
                _ => {
                    let s = space.offsets()[k] + z;
                    if bounds.contains(s) {
                        Some(space.find(s).ok_or(Error::NotFinite)?)
                    } else {
                        None
                    }
                }
            };
            match dest {
                Some(l) => {
                    p.add(l, k, prob);
                    q.add(l, k, growth * prob);
                }
                None => {
                    let factor = params.rebalance_factor(bk * w1 / growth);
                    p.add(target, k, prob);
                    q.add(target, k, growth * factor * prob);
                }
            }
        }
    }
    Ok(ChainMatrices::from_parts(space.clone(), p, q))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GrowthMethod {
    /// Shifted inverse iteration with Collatz–Wielandt shift updates.
    Noda,
    /// Power iteration on Q + σI.
    Power,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverConfig {
    pub max_iterations: usize,
    pub tolerance: f64,
    pub method: GrowthMethod,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iterations: 1_000_000,
            tolerance: 1e-12,
            method: GrowthMethod::Noda,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GrowthReport {
    /// Dominant eigenvalue of Q, the per-period wealth factor.
    pub lambda1: f64,
    /// ln λ₁ in nats per period.
    pub growth: f64,
    /// Stationary distribution of P.
    pub pi: Vec<f64>,
    /// Iterations used by the eigenvalue solver.
    pub iterations: usize,
}

/// Dominant eigenpair of a nonnegative matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct PerronPair {
    pub value: f64,
    /// Positive eigenvector normalized to unit L1 norm.
    pub vector: Vec<f64>,
    pub iterations: usize,
}

fn normalize_l1(x: &mut [f64]) -> f64 {
    let s: f64 = x.iter().map(|v| v.abs()).sum();
    if s > 0.0 {
        x.iter_mut().for_each(|v| *v /= s);
    }
    s
}

/// ‖Mx − μx‖∞ / (μ‖x‖∞) with μ = ‖Mx‖₁/‖x‖₁ for a nonnegative x.
fn eigen_residual(m: &SparseMatrix, x: &[f64]) -> (f64, f64) {
    let y = m.mul_vec(x);
    let mu = y.iter().sum::<f64>() / x.iter().sum::<f64>();
    let scale = x.iter().fold(0.0f64, |a, v| a.max(v.abs())) * mu.abs();
    let r = y
        .iter()
        .zip(x)
        .fold(0.0f64, |a, (yi, xi)| a.max((yi - mu * xi).abs()));
    (
        mu,
        if scale > 0.0 {
            r / scale
        } else {
            f64::INFINITY
        },
    )
}

/// Perron root and vector of a nonnegative matrix.
pub fn perron_pair(m: &SparseMatrix, config: &SolverConfig) -> Result<PerronPair> {
    match config.method {
        GrowthMethod::Noda => noda(m, config).or_else(|_| shifted_power(m, config)),
        GrowthMethod::Power => shifted_power(m, config),
    }
}

fn noda(m: &SparseMatrix, config: &SolverConfig) -> Result<PerronPair> {
    let n = m.dim();
    let mut x = vec![1.0 / n as f64; n];
    let mut solver = ShiftSolver::new(m);
    let max_iter = config.max_iterations.min(200);
    let mut best = f64::INFINITY;
    let mut stalled = 0;
    for it in 0..max_iter {
        let (mu, residual) = eigen_residual(m, &x);
        if residual < config.tolerance {
            return Ok(PerronPair {
                value: mu,
                vector: x,
                iterations: it,
            });
        }
        if residual < best {
            best = residual;
            stalled = 0;
        } else {
            stalled += 1;
            if stalled > 5 {
                break;
            }
        }
        let y = m.mul_vec(&x);
        let shift = y
            .iter()
            .zip(&x)
            .map(|(yi, xi)| yi / xi)
            .fold(f64::NEG_INFINITY, f64::max);
        if !shift.is_finite() {
            break;
        }
        let Some(mut next) = solver.solve(m, shift, &x) else {
            break;
        };
        if next.iter().any(|v| !(v.is_finite() && *v > 0.0)) {
            break;
        }
        normalize_l1(&mut next);
        x = next;
    }
    let (mu, residual) = eigen_residual(m, &x);
    Err(Error::NoConvergence {
        iterations: max_iter,
        residual: if mu.is_finite() {
            residual
        } else {
            f64::INFINITY
        },
    })
}

/// Solves (μI − M)y = x. Uses a banded LU with a rank-one correction for the densest
/// row when the rest of M is narrowly banded, and a dense LU otherwise.
enum ShiftSolver {
    Dense(DMatrix<f64>),
    Banded { row: usize, width: usize },
}

impl ShiftSolver {
    fn new(m: &SparseMatrix) -> Self {
        let n = m.dim();
        let mut counts = vec![0usize; n];
        for k in 0..n {
            for &(l, _) in m.column(k) {
                counts[l] += 1;
            }
        }
        let row = (0..n)
            .max_by_key(|&l| (counts[l], std::cmp::Reverse(l)))
            .unwrap_or(0);
        let width = (0..n)
            .flat_map(|k| {
                m.column(k)
                    .iter()
                    .filter(|e| e.0 != row)
                    .map(move |e| e.0.abs_diff(k))
            })
            .max()
            .unwrap_or(0);
        if n > 16 && 4 * width < n {
            ShiftSolver::Banded { row, width }
        } else {
            ShiftSolver::Dense(m.to_dense())
        }
    }

    fn solve(&mut self, m: &SparseMatrix, shift: f64, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            ShiftSolver::Dense(dense) => {
                let n = m.dim();
                let a = DMatrix::from_diagonal_element(n, n, shift) - &*dense;
                let sol = a.lu().solve(&nalgebra::DVector::from_column_slice(x))?;
                Some(sol.iter().copied().collect())
            }
            ShiftSolver::Banded { row, width } => {
                let solved = banded_rank_one_solve(m, *row, *width, shift, x);
                if solved.is_none() {
                    *self = ShiftSolver::Dense(m.to_dense());
                    return self.solve(m, shift, x);
                }
                solved
            }
        }
    }
}

/// (μI − B − e_r qᵣᵀ)⁻¹x where B is M with row r removed and qᵣ is row r of M.
fn banded_rank_one_solve(
    m: &SparseMatrix,
    r: usize,
    w: usize,
    shift: f64,
    x: &[f64],
) -> Option<Vec<f64>> {
    let n = m.dim();
    let span = 2 * w + 1;
    let mut band = vec![0.0; n * span];
    let at = |i: usize, j: usize| i * span + (j + w - i);
    let mut q_row = vec![0.0; n];
    for i in 0..n {
        band[at(i, i)] = shift;
    }
    for k in 0..n {
        for &(l, v) in m.column(k) {
            if l == r {
                q_row[k] = v;
            } else {
                band[at(l, k)] -= v;
            }
        }
    }
    for k in 0..n {
        let pivot = band[at(k, k)];
        if !(pivot > 0.0 && pivot.is_finite()) {
            return None;
        }
        for i in k + 1..n.min(k + w + 1) {
            let factor = band[at(i, k)] / pivot;
            if factor == 0.0 {
                continue;
            }
            band[at(i, k)] = factor;
            for j in k + 1..n.min(k + w + 1) {
                band[at(i, j)] -= factor * band[at(k, j)];
            }
        }
    }
    let lu_solve = |rhs: &[f64]| -> Vec<f64> {
        let mut y = rhs.to_vec();
        for i in 0..n {
            let lo = i.saturating_sub(w);
            let s: f64 = (lo..i).map(|j| band[at(i, j)] * y[j]).sum();
            y[i] -= s;
        }
        for i in (0..n).rev() {
            let hi = n.min(i + w + 1);
            let s: f64 = (i + 1..hi).map(|j| band[at(i, j)] * y[j]).sum();
            y[i] = (y[i] - s) / band[at(i, i)];
        }
        y
    };
    let u = lu_solve(x);
    let mut e = vec![0.0; n];
    e[r] = 1.0;
    let v = lu_solve(&e);
    let qu: f64 = q_row.iter().zip(&u).map(|(a, b)| a * b).sum();
    let qv: f64 = q_row.iter().zip(&v).map(|(a, b)| a * b).sum();
    let denom = 1.0 - qv;
    if denom == 0.0 || !denom.is_finite() {
        return None;
    }
    Some(
        u.iter()
            .zip(&v)
            .map(|(ui, vi)| ui + vi * qu / denom)
            .collect(),
    )
}

fn shifted_power(m: &SparseMatrix, config: &SolverConfig) -> Result<PerronPair> {
    let n = m.dim();
    let sums = m.column_sums();
    let sigma = 0.5
        * sums
            .iter()
            .copied()
            .fold(0.0, f64::max)
            .max(f64::MIN_POSITIVE);
    let mut x = vec![1.0 / n as f64; n];
    let mut y = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 0..config.max_iterations {
        if it % 16 == 0 {
            let (mu, r) = eigen_residual(m, &x);
            residual = r;
            if r < config.tolerance {
                return Ok(PerronPair {
                    value: mu,
                    vector: x,
                    iterations: it,
                });
            }
        }
        m.mul_vec_into(&x, &mut y);
        for (yi, xi) in y.iter_mut().zip(&x) {
            *yi += sigma * xi;
        }
        normalize_l1(&mut y);
        std::mem::swap(&mut x, &mut y);
    }
    Err(Error::NoConvergence {
        iterations: config.max_iterations,
        residual,
    })
}

pub fn stationary_distribution(chain: &ChainMatrices) -> Result<Vec<f64>> {
    stationary_distribution_with(chain, &SolverConfig::default())
}

/// Fixed point of P: a direct solve of (P − I)π = 0, Σπ = 1, refined by lazy power
/// iteration π ← (π + Pπ)/2 until ‖Pπ − π‖₁ < tolerance.
pub fn stationary_distribution_with(
    chain: &ChainMatrices,
    config: &SolverConfig,
) -> Result<Vec<f64>> {
    let n = chain.len();
    let p = chain.p();
    let mut pi = direct_stationary(p).unwrap_or_else(|| {
        let mut e = vec![0.0; n];
        e[chain.states().target()] = 1.0;
        e
    });
    let mut next = vec![0.0; n];
    let mut residual = f64::INFINITY;
    for it in 0..=config.max_iterations {
        p.mul_vec_into(&pi, &mut next);
        residual = next.iter().zip(&pi).map(|(a, b)| (a - b).abs()).sum();
        if residual < config.tolerance {
            return Ok(pi);
        }
        if it == config.max_iterations {
            break;
        }
        for (nx, x) in next.iter_mut().zip(&pi) {
            *nx = 0.5 * (*nx + x);
        }
        normalize_l1(&mut next);
        std::mem::swap(&mut pi, &mut next);
    }
    Err(Error::NoConvergence {
        iterations: config.max_iterations,
        residual,
    })
}

fn direct_stationary(p: &SparseMatrix) -> Option<Vec<f64>> {
    let n = p.dim();
    let mut a = p.to_dense() - DMatrix::identity(n, n);
    for k in 0..n {
        a[(n - 1, k)] = 1.0;
    }
    let mut rhs = nalgebra::DVector::zeros(n);
    rhs[n - 1] = 1.0;
    let sol = a.lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite() || *v < -1e-9) {
        return None;
    }
    let mut pi: Vec<f64> = sol.iter().map(|v| v.max(0.0)).collect();
    normalize_l1(&mut pi);
    Some(pi)
}

pub fn growth_rate(chain: &ChainMatrices) -> Result<GrowthReport> {
    growth_rate_with(chain, &SolverConfig::default())
}

pub fn growth_rate_with(chain: &ChainMatrices, config: &SolverConfig) -> Result<GrowthReport> {
    let pair = perron_pair(chain.q(), config)?;
    let pi = stationary_distribution_with(chain, config)?;
    Ok(GrowthReport {
        lambda1: pair.value,
        growth: pair.value.ln(),
        pi,
        iterations: pair.iterations,
    })
}

/// |λ₂|/λ₁ of Q, estimated by power iteration on Q deflated by its Perron projector.
pub fn subdominant_ratio(chain: &ChainMatrices) -> Result<f64> {
    let q = chain.q();
    let config = SolverConfig::default();
    let right = perron_pair(q, &config)?;
    let left = {
        let mut qt = SparseMatrix::zeros(q.dim());
        for k in 0..q.dim() {
            for &(l, v) in q.column(k) {
                qt.add(k, l, v);
            }
        }
        perron_pair(&qt, &config)?
    };
    let n = q.dim();
    if n == 1 {
        return Ok(0.0);
    }
    let lambda = right.value;
    let vx: f64 = left
        .vector
        .iter()
        .zip(&right.vector)
        .map(|(a, b)| a * b)
        .sum();
    let deflated = |x: &[f64]| -> Vec<f64> {
        let mut y = q.mul_vec(x);
        let coeff = lambda * left.vector.iter().zip(x).map(|(a, b)| a * b).sum::<f64>() / vx;
        for (yi, ri) in y.iter_mut().zip(&right.vector) {
            *yi -= coeff * ri;
        }
        y
    };
    let mut x: Vec<f64> = (0..n)
        .map(|i| 1.0 + ((i * 7919) % 13) as f64 / 13.0)
        .collect();
    normalize_l1(&mut x);
    let (burn_in, window) = (2000, 2000);
    for _ in 0..burn_in {
        x = deflated(&x);
        if normalize_l1(&mut x) == 0.0 {
            return Ok(0.0);
        }
    }
    let mut log_growth = 0.0;
    for _ in 0..window {
        x = deflated(&x);
        let s = normalize_l1(&mut x);
        if s == 0.0 {
            return Ok(0.0);
        }
        log_growth += s.ln();
    }
    Ok((log_growth / window as f64).exp() / lambda)
}
