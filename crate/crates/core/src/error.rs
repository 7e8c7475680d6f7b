use thiserror::Error;

use crate::state_space::StateSpace;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("NonPositivePrice: sample {index} has value {value}")]
    NonPositivePrice { index: usize, value: f64 },

    #[error("BadPmf: pmf {asset}: {reason}")]
    BadPmf { asset: usize, reason: String },

    #[error("InvalidParams: {0}")]
    InvalidParams(String),

    #[error("WrongAssetCount: expected {expected} assets, got {actual}")]
    WrongAssetCount { expected: usize, actual: usize },

    #[error("TechnicalConditionViolated: max |z| = {max_z} is not below min(|alpha1|, |alpha2|) = {bound}")]
    TechnicalConditionViolated { max_z: f64, bound: f64 },

    #[error(
        "ToleranceTooCoarse: lattice point {index} lies within {margin:e} of an interval bound"
    )]
    ToleranceTooCoarse { index: i64, margin: f64 },

    #[error("StateCapExceeded: more than {cap} achievable portfolios")]
    StateCapExceeded {
        cap: usize,
        partial: Box<StateSpace>,
    },

    #[error("StateExplosion: {states} states at period {period} exceed the cap of {cap}")]
    StateExplosion {
        period: usize,
        states: usize,
        cap: usize,
    },

    #[error("NotFinite: operation requires a finite state space")]
    NotFinite,

    #[error("NoConvergence: no convergence after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("NoFeasiblePoint: every grid point is infeasible")]
    NoFeasiblePoint,

    #[error("EmptyObservations: no observations to estimate from")]
    EmptyObservations,

    #[error("UnknownAtom: observation {value} is not in the sample space")]
    UnknownAtom { value: f64 },

    #[error("PathTooShort: path has {len} periods, need more than {needed}")]
    PathTooShort { len: usize, needed: usize },

    #[error("Parse: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
