//! Coherency-based dynamic equivalents for power-system models.
//!
//! The crate reduces a dynamic power-system case to a small equivalent in four
//! stages, mirroring the classic coherency workflow:
//!
//! 1. [`modal`] — linearize about the solved operating point, compute the
//!    eigenstructure, and group external generators by mode-shape angle.
//! 2. [`netred`] — build one REI mesh per coherent group and Kron-eliminate
//!    the remaining external buses, preserving boundary-port impedances.
//! 3. [`genagg`] — collapse each group's machines into one equivalent
//!    generator (summed rating, conserved kinetic energy, parallel reactance).
//! 4. [`ctrlagg`] — compose member controller frequency responses on a common
//!    input signal, aggregate them with rated-power weights, and fit a single
//!    rational transfer function by least squares.
//!
//! [`sim`] provides an RMS time-domain simulator used to validate equivalents
//! against the original model, and [`pipeline`] wires the stages together for
//! the batch CLI.

pub mod ctrlagg;
pub mod dynamics;
pub mod genagg;
pub mod modal;
pub mod model;
pub mod netred;
pub mod pipeline;
pub mod sim;

pub use model::{load_case, solve_powerflow, PowerSystemCase};
pub use pipeline::{reduce, ReducedModel, ReductionOptions};
