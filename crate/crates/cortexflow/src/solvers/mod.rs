//! Time integrators: the explicit projected scheme and the
//! minimizing-movement scheme, plus the tangent-cone projection they share
//! with the wall geometry.
//!
//! The two solvers treat walls differently on purpose: the explicit scheme
//! projects forces onto the tangent cone of the admissible domain inside an
//! epsilon tube around the walls, while the minimizing-movement scheme only
//! sees walls through the softened potential. They discretize the same flow
//! and are cross-validated in the acceptance suite.

mod explicit;
mod mm;

pub use explicit::{explicit_step, explicit_step_dt, AdaptiveStepper};
pub use mm::{discrete_s_flow, mm_step, MMConfig};

use thiserror::Error;

use crate::cortex::EnergyReport;
use crate::geometry::{ChannelGeometry, GeometryError};
use crate::scalar::Scalar;
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum SolverError {
    #[error(
        "unstable step at t = {time}: max displacement {max_displacement:e} exceeds {limit:e}"
    )]
    Unstable {
        time: f64,
        max_displacement: f64,
        limit: f64,
    },
    #[error("step dt = {dt:e} at t = {time} exceeds the elastic stability bound {bound:e}")]
    StiffStep { time: f64, dt: f64, bound: f64 },
    #[error("non-finite state at t = {time}")]
    NonFinite { time: f64 },
    #[error("inner minimization hit the iteration cap ({iterations}): gradient norm {gradient_norm:e}")]
    InnerIterationCap {
        iterations: usize,
        gradient_norm: f64,
    },
    #[error("broken compensation: cortical-flow mean {mean:e} exceeds 1e-10")]
    BrokenCompensation { mean: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Outcome bookkeeping for one time step.
#[derive(Clone, Debug)]
pub struct StepReport<S> {
    pub max_displacement: S,
    /// Nodes whose force was projected onto the wall tangent.
    pub projected_nodes: usize,
    pub energy_after: EnergyReport<S>,
    /// Inner iterations of the minimizing-movement solve, when applicable.
    pub inner_iterations: Option<usize>,
    /// Final gradient sup-norm of the inner solve, when applicable.
    pub final_gradient_norm: Option<S>,
}

/// Projects a force onto the tangent cone of the admissible domain at `x`:
/// within distance `epsilon` of a wall, the component along the outward
/// normal is removed if it points outward; otherwise the force is unchanged.
/// Free geometry passes everything through.
pub fn project_tangent_cone<S: Scalar>(
    force: Vec2<S>,
    x: Vec2<S>,
    geom: &ChannelGeometry<S>,
    epsilon: S,
) -> Vec2<S> {
    project_tangent_cone_flagged(force, x, geom, epsilon).0
}

/// Same as [`project_tangent_cone`], additionally reporting whether the
/// projection actually modified the force.
pub fn project_tangent_cone_flagged<S: Scalar>(
    force: Vec2<S>,
    x: Vec2<S>,
    geom: &ChannelGeometry<S>,
    epsilon: S,
) -> (Vec2<S>, bool) {
    if geom.is_free() {
        return (force, false);
    }
    let prox = match geom.wall_proximity_fast(x) {
        Ok(p) => p,
        Err(_) => return (force, false),
    };
    if prox.dist < epsilon && force.dot(prox.normal) > S::zero() {
        let tangential = prox.tangent * force.dot(prox.tangent);
        (tangential, true)
    } else {
        (force, false)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::num;

    #[test]
    fn projection_examples_on_flat_wall() {
        let w = 0.078;
        let geom = ChannelGeometry::<f64>::flat(w).unwrap();
        let eps = 0.01;
        let x = Vec2::new(0.0, w - eps / 2.0);

        // Zero stays zero.
        assert_eq!(
            project_tangent_cone(Vec2::zero(), x, &geom, eps),
            Vec2::zero()
        );
        // Outward-pointing force keeps only its tangential part.
        let f = Vec2::new(1.0, 1.0);
        let projected = project_tangent_cone(f, x, &geom, eps);
        assert!((projected.x - 1.0).abs() < 1e-12);
        assert!(projected.y.abs() < 1e-12);
        // Inward-pointing force is untouched.
        let g = Vec2::new(1.0, -1.0);
        assert_eq!(project_tangent_cone(g, x, &geom, eps), g);
        // Far from the wall nothing happens.
        let far = Vec2::new(0.0, 0.0);
        assert_eq!(project_tangent_cone(f, far, &geom, eps), f);
    }

    #[test]
    fn projection_is_idempotent_and_non_expansive() {
        let geom = ChannelGeometry::<f64>::flat(0.05).unwrap();
        let eps = num::<f64>(0.02);
        let mut seed = 0x243f6a8885a308d3u64;
        let mut rand = move || {
            seed = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
            ((seed >> 11) as f64) / ((1u64 << 53) as f64) * 2.0 - 1.0
        };
        for _ in 0..10_000 {
            let x = Vec2::new(rand() * 0.5, rand() * 0.08);
            let f = Vec2::new(rand() * 3.0, rand() * 3.0);
            let p1 = project_tangent_cone(f, x, &geom, eps);
            let p2 = project_tangent_cone(p1, x, &geom, eps);
            assert!(p1.norm() <= f.norm() + 1e-14);
            assert!((p2 - p1).norm() < 1e-12);
        }
    }

    #[test]
    fn free_geometry_passes_forces_through() {
        let geom = ChannelGeometry::<f64>::free();
        let f = Vec2::new(2.0, -3.0);
        assert_eq!(project_tangent_cone(f, Vec2::zero(), &geom, 0.1), f);
    }
}
