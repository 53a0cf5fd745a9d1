//! Sparse, constrained stochastic predictive control of LTI plants whose
//! actuator link is an erasure channel.
//!
//! The controller periodically solves a convex QP over affine policies in
//! past saturated disturbances and past packet dropouts, with an ℓ1/ℓ∞
//! penalty that makes whole control instants vanish.

pub mod error;
pub mod linalg;
pub mod moments;
pub mod ocp;
pub mod plant;
pub mod policy;
pub mod qp;
pub mod protocol;
pub mod scenario;
pub mod sim;
pub mod stochastics;

pub use error::{Error, Result};
pub use plant::{decompose, reachability, rescale_inputs, OrthoSchurDecomposition, PlantModel, ReachabilityData};
pub use stochastics::{ChannelKind, ChannelSpec, NoiseSpec, SaturationKind, SaturationSpec};
pub use policy::{PackedDecision, PolicyParams};
pub use protocol::{ProtocolKind, ProtocolSpec};
