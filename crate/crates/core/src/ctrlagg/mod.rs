//! Controller aggregation: frequency-response composition of member
//! controllers over a common input signal, followed by a rational
//! least-squares fit that yields one equivalent controller per kind.

mod aggregate;
mod fit;
mod relations;
mod tf;

pub use aggregate::{
    aggregate_controllers, aggregate_frequency_responses, AggregationReport, PathFitSummary,
};
pub use fit::{fit_rational, FitOptions, FitReport, Weighting};
pub use relations::{swing_pe_from_omega, transform_input, RelationSet, SignalRelation};
pub use tf::{
    block_tf, evaluate_fr, linear_grid, log_grid, path_tf, FrequencyResponse, RationalTF,
};

use num_complex::Complex64;
use thiserror::Error;

use crate::model::{ControllerKind, CtrlId, GenId, SignalKind};

#[derive(Debug, Error)]
pub enum CtrlaggError {
    #[error("transfer function has a pole on the evaluation grid at {freq_hz} Hz")]
    PoleOnGrid { freq_hz: f64 },
    #[error("frequency grids are incompatible: {message}")]
    GridMismatch { message: String },
    #[error(
        "signal relation magnitude {magnitude:.3e} at {freq_hz} Hz is too small to invert"
    )]
    NearZeroH21 { freq_hz: f64, magnitude: f64 },
    #[error("cannot aggregate an empty controller list")]
    EmptyList,
    #[error(
        "least-squares system is rank deficient for orders ({}, {}); lower the orders or widen the grid",
        orders.0, orders.1
    )]
    RankDeficient { orders: (usize, usize) },
    #[error("fitted model is unstable: pole at {:.6}{:+.6}j", pole.re, pole.im)]
    UnstableFit { pole: Complex64 },
    #[error("no signal relation links input '{from}' of controller '{controller}' to common input '{to}'")]
    MissingRelation { controller: CtrlId, from: SignalKind, to: SignalKind },
    #[error("controller '{controller}' has kind {found} but the group is {expected}")]
    MixedKinds { controller: CtrlId, expected: ControllerKind, found: ControllerKind },
    #[error("generator '{generator}' has non-positive inertia H = {inertia_h}")]
    NonpositiveInertia { generator: GenId, inertia_h: f64 },
}
