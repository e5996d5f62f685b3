//! Core library for network slice placement: substrate and request
//! modelling, the exact constraint system, the power-of-two-choices
//! heuristic, the graph-convolutional actor/critic agent, and the
//! event-driven loss-system simulator.

pub mod agent;
pub mod neural;
pub mod p2c;
pub mod placement;
pub mod sim;
pub mod topology;

pub use p2c::{P2cConfig, VnfChoice};
pub use placement::{
    ConstraintId, ConstraintReport, ObjectiveWeights, Placement, PlacementError, Violation,
};
pub use topology::{DcKind, NodeId, NodeKind, Nspr, PsnGraph, PsnLink, PsnNode, TopologyError};
