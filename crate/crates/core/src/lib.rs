//! Exact cluster laws and correlation inequalities for random orientations
//! and bond percolation on small finite graphs.
//!
//! Four models are supported: edge percolation `E^p`, uniform random
//! orientation `O`, directed edge percolation `D^p`, and the mixed
//! semi-directed model. Every probability is an exact [`Rational`], computed
//! by exhaustive enumeration of the model's state space or by the cluster
//! recursions in [`cluster`]. [`montecarlo`] is the only floating-point path.

pub mod cluster;
pub mod events;
pub mod exact;
pub mod graph;
pub mod models;
pub mod montecarlo;
pub mod report;
pub mod verify;

pub use cluster::{ClusterDistribution, DiffReport, JointClusterDistribution};
pub use events::{CorrelationReport, EdgeUpwardFamily, ReachPredicate, Sign, UpwardClosedFamily};
pub use exact::{Rational, RationalError};
pub use graph::{Graph, GraphError, VertexSet};
pub use models::{Caps, ClusterTable, EdgeState, ModelSpec, WorldState};
pub use verify::{InequalityReport, Relation, SignFinding};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Rational(#[from] RationalError),
    #[error("state space of {states} states exceeds the cap of {cap}")]
    CapExceeded { states: String, cap: u64 },
    #[error("invalid model `{0}`")]
    Model(String),
    #[error("invalid event `{0}`")]
    Event(String),
    #[error("conditioning event has probability zero")]
    ZeroProbabilityCondition,
    #[error("{0}")]
    Precondition(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
