//! Process design of polycrystalline microstructures.
//!
//! The crate models the texture of a polycrystal as an orientation
//! distribution function (ODF) discretized over a tetrahedral mesh of the
//! Rodrigues fundamental region, and provides three layers on top of it:
//!
//! 1. a physics simulator that evolves the ODF under elementary deformation
//!    processes (tension/compression, plane-strain compression, and three
//!    shears) through a Taylor-type crystal-plasticity model ([`plasticity`],
//!    [`evolution`]),
//! 2. a per-process surrogate network that learns the one-step ODF map and
//!    keeps its outputs nonnegative and volume-normalized ([`surrogate`]),
//! 3. a restart-based exponential-weights search over sequences of processes
//!    that maximizes a weighted sum of homogenized stiffness constants
//!    ([`search`]).
//!
//! [`homogenization`] turns any ODF into a 6x6 elastic stiffness matrix,
//! [`dataset`] generates labeled training data with the simulator and owns
//! the on-disk formats.

pub mod dataset;
pub mod error;
pub mod evolution;
pub mod homogenization;
pub mod mesh;
pub mod orientation;
pub mod plasticity;
pub mod search;
pub mod surrogate;

pub use error::{Error, Result};
pub use evolution::{ProcessStepConfig, Trajectory};
pub use homogenization::{ObjectiveWeights, PropertyMatrix, StiffnessMatrix};
pub use mesh::{FundamentalMesh, Odf};
pub use orientation::RodriguesVector;
pub use plasticity::{ProcessMode, SlipSystemSet, VelocityGradient};
pub use search::{PathResult, SearchConfig};
pub use surrogate::{MlpModel, TrainConfig};
