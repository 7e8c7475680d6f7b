//! Maximum-likelihood pmf estimation and quantization of observed price relatives.

use crate::error::{Error, Result};
use crate::market::{DiscreteMarket, PricePath};

const ATOM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EstimatorConfig {
    /// Use only the most recent `window` observations; `None` uses all history.
    pub window: Option<usize>,
    /// Number of quantile bins per asset.
    pub bins: usize,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            window: None,
            bins: 10,
        }
    }
}

impl EstimatorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.bins == 0 || self.window == Some(0) {
            return Err(Error::InvalidParams(
                "bins and window must be at least 1".into(),
            ));
        }
        Ok(())
    }

    fn windowed<'a, T>(&self, data: &'a [T]) -> &'a [T] {
        match self.window {
            Some(w) if w < data.len() => &data[data.len() - w..],
            _ => data,
        }
    }
}

fn atom_index(atoms: &[f64], x: f64) -> Option<usize> {
    let i = atoms.partition_point(|&a| a < x);
    [i.checked_sub(1), Some(i)]
        .into_iter()
        .flatten()
        .filter(|&j| j < atoms.len())
        .find(|&j| (atoms[j] - x).abs() <= ATOM_TOLERANCE * atoms[j].abs().max(1.0))
}

/// Occurrence counts N_j of each atom. `atoms` must be ascending.
pub fn mle_counts(observations: &[f64], atoms: &[f64]) -> Result<Vec<usize>> {
    if observations.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let mut counts = vec![0usize; atoms.len()];
    for &x in observations {
        let j = atom_index(atoms, x).ok_or(Error::UnknownAtom { value: x })?;
        counts[j] += 1;
    }
    Ok(counts)
}

/// Empirical frequencies h_j = N_j / N over an ascending list of atoms.
pub fn mle_pmf(observations: &[f64], atoms: &[f64]) -> Result<Vec<f64>> {
    let counts = mle_counts(observations, atoms)?;
    let n = observations.len() as f64;
    Ok(counts.into_iter().map(|c| c as f64 / n).collect())
}

/// Atoms, frequencies and bin edges of one quantized series.
#[derive(Debug, Clone, PartialEq)]
pub struct Quantized {
    /// Bin means, ascending.
    pub atoms: Vec<f64>,
    pub pmf: Vec<f64>,
    /// Lower edges of bins 2.., so bin(x) = number of edges ≤ x.
    pub edges: Vec<f64>,
}

/// Quantizes the windowed series into equal-frequency bins with atom = bin mean.
///
/// A series with at most `bins` distinct values keeps every value as its own atom.
pub fn quantize_and_estimate(raw: &[f64], config: &EstimatorConfig) -> Result<Quantized> {
    config.validate()?;
    let data = config.windowed(raw);
    if data.is_empty() {
        return Err(Error::EmptyObservations);
    }
    if let Some(&bad) = data.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
        return Err(Error::InvalidParams(format!(
            "price relative {bad} is not positive"
        )));
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let mut distinct = v.clone();
    distinct.dedup();
    let mut edges: Vec<f64> = if distinct.len() <= config.bins {
        distinct[1..].to_vec()
    } else {
        (1..config.bins).map(|j| v[j * n / config.bins]).collect()
    };
    edges.dedup();

    let mut members: Vec<Vec<f64>> = vec![Vec::new(); edges.len() + 1];
    for &x in &v {
        members[edges.partition_point(|&e| e <= x)].push(x);
    }
    let mut atoms = Vec::new();
    let mut pmf = Vec::new();
    for bin in members.into_iter().filter(|m| !m.is_empty()) {
        let x0 = bin[0];
        let mean = x0 + bin.iter().map(|x| x - x0).sum::<f64>() / bin.len() as f64;
        atoms.push(mean);
        pmf.push(bin.len() as f64 / n as f64);
    }
    Ok(Quantized { atoms, pmf, edges })
}

/// Quantizes every asset of a path and places all pmfs on the union of their atoms.
pub fn estimate_market(path: &PricePath, config: &EstimatorConfig) -> Result<DiscreteMarket> {
    if path.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let per_asset: Vec<Quantized> = (0..path.n_assets())
        .map(|i| quantize_and_estimate(&path.column(i), config))
        .collect::<Result<_>>()?;
    let mut union: Vec<f64> = per_asset
        .iter()
        .flat_map(|q| q.atoms.iter().copied())
        .collect();
    union.sort_by(f64::total_cmp);
    union.dedup_by(|a, b| (*a - *b).abs() <= ATOM_TOLERANCE * b.abs().max(1.0));
    let pmfs = per_asset
        .iter()
        .map(|q| {
            let mut pmf = vec![0.0; union.len()];
            for (a, p) in q.atoms.iter().zip(&q.pmf) {
                let j = atom_index(&union, *a).expect("atom is in the union");
                pmf[j] += p;
            }
            pmf
        })
        .collect();
    DiscreteMarket::new(union, pmfs)
}
