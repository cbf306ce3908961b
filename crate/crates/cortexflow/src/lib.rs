//! 2D simulator for adhesion-independent cell migration.
//!
//! The cell cortex is a closed elastic curve on a discrete torus, driven by
//! an internal pressure force, a polarized cortical polymerization flow, a
//! compensating force that pins the center of mass in free space, and
//! confinement in flat or ratchet-shaped channels.
//!
//! Two time integrators are provided and cross-validated against each other:
//! an explicit Euler scheme with tangent-cone projection at the channel walls
//! ([`solvers::explicit_step`]) and a minimizing-movement scheme in which each
//! step minimizes the energy plus a proximal distance term, with walls
//! softened into a potential ([`solvers::mm_step`]).
//!
//! The core math is generic over the floating-point scalar via
//! [`scalar::Scalar`]; the aliases below fix `f64` for simulations and the CLI.

pub mod config;
pub mod cortex;
pub mod geometry;
pub mod output;
pub mod protocols;
pub mod scalar;
pub mod solvers;
pub mod validate;
pub mod vec2;

/// Scalar type used by the CLI and the experiment protocols.
pub type Real = f64;
/// 2D point/vector over [`Real`].
pub type Point = vec2::Vec2<Real>;
/// Cortex state over [`Real`].
pub type State = cortex::CortexState<Real>;
/// Simulation parameters over [`Real`].
pub type Params = cortex::SimParams<Real>;
/// Confinement geometry over [`Real`].
pub type Geometry = geometry::ChannelGeometry<Real>;
/// Per-frame energy report over [`Real`].
pub type Energy = cortex::EnergyReport<Real>;
