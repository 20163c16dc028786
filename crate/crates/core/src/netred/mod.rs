//! Static network reduction: bus admittance assembly, REI mesh construction
//! per coherent group, and Kron elimination of external buses.

mod admittance;
mod kron;
mod reduce;
mod rei;

pub use admittance::{build_admittance, build_admittance_at, AdmittanceMatrix};
pub use kron::kron_eliminate;
pub use reduce::{reduce_network, BoundaryResidual, NetworkReduction};
pub use rei::{build_rei, ReiMesh};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum NetredError {
    #[error("unknown bus id '{0}'")]
    UnknownBus(String),
    #[error("unknown generator id '{0}'")]
    UnknownGenerator(String),
    #[error("elimination submatrix Y_ee is singular; offending buses: [{}]", .buses.join(", "))]
    SingularSubmatrix { buses: Vec<String> },
    #[error(
        "coherent group [{}] has near-zero total injection ({magnitude:.3e} pu); the REI \
         construction is undefined — merge the group with a neighbor or drop REI for it",
        .group.join(", ")
    )]
    ZeroInjectionGroup { group: Vec<String>, magnitude: f64 },
    #[error("generator '{generator}' is not in the external zone")]
    GroupNotExternal { generator: String },
    #[error(
        "grouping does not cover external generators [{}]; every external generator must \
         belong to exactly one group",
        .generators.join(", ")
    )]
    GroupingIncomplete { generators: Vec<String> },
    #[error("generator '{generator}' appears in more than one coherent group")]
    DuplicateGroupMember { generator: String },
    #[error(transparent)]
    Genagg(#[from] crate::genagg::GenaggError),
    #[error("reduced case failed verification: {0}")]
    Verification(String),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}
