//! Explicit Euler scheme with tangent-cone projection at the walls.

use crate::cortex::{net_force, total_energy, CortexState, SimParams};
use crate::geometry::{ChannelGeometry, WallProximity};
use crate::scalar::{num, Scalar};
use crate::vec2::Vec2;

use super::{SolverError, StepReport};

/// Largest stable step for the current state: a spectral bound for the
/// elastic term when any segment is taut, since node displacements alone
/// reveal a high-wavenumber blowup only after the state is ruined.
///
/// Gershgorin on the elastic force Jacobian gives eigenvalues up to
/// `4 kappa / (mu ds^2)`, hence stability up to `mu ds^2 / (2 kappa)`;
/// a 0.9 safety factor is applied. Fully slack curves have no elastic
/// stiffness and are limited only by the displacement monitor.
pub fn stable_dt_bound<S: Scalar>(state: &CortexState<S>, params: &SimParams<S>) -> S {
    let ds = state.ds();
    let pos = state.positions();
    let n = pos.len();
    let any_taut = (0..n).any(|i| (pos[(i + 1) % n] - pos[i]).norm() > ds);
    if any_taut {
        num::<S>(0.45) * params.friction * ds * ds / params.stiffness
    } else {
        S::infinity()
    }
}

/// Per-step displacement limit: a node may move at most one actin step, and
/// at most half the projection tube so it cannot jump across it.
fn displacement_limit<S: Scalar>(
    state: &CortexState<S>,
    params: &SimParams<S>,
    geom: &ChannelGeometry<S>,
) -> S {
    let ds = state.ds();
    if geom.is_free() {
        ds
    } else {
        ds.min(params.epsilon / num(2.0))
    }
}

fn step_core<S: Scalar>(
    state: &CortexState<S>,
    params: &SimParams<S>,
    geom: &ChannelGeometry<S>,
    dt: S,
    pressure_mask: Option<&[bool]>,
    mut project: impl FnMut(usize, Vec2<S>, Vec2<S>) -> Result<(Vec2<S>, bool), SolverError>,
) -> Result<(CortexState<S>, StepReport<S>), SolverError> {
    let t_now = state.time().to_f64().unwrap_or(f64::NAN);
    let stable = stable_dt_bound(state, params);
    if dt > stable {
        return Err(SolverError::StiffStep {
            time: t_now,
            dt: dt.to_f64().unwrap_or(f64::NAN),
            bound: stable.to_f64().unwrap_or(f64::NAN),
        });
    }

    let n = state.n();
    let forces = net_force(state, params, pressure_mask);
    let inv_mu = S::one() / params.friction;

    let mut new_positions = Vec::with_capacity(n);
    let mut projected = 0usize;
    let mut max_disp = S::zero();
    for i in 0..n {
        let x = state.positions()[i];
        let (velocity, hit) = project(i, x, forces[i] * inv_mu)?;
        if hit {
            projected += 1;
        }
        let step = velocity * dt;
        max_disp = max_disp.max(step.norm());
        new_positions.push(x + step);
    }

    if !max_disp.is_finite() {
        return Err(SolverError::NonFinite { time: t_now });
    }
    let limit = displacement_limit(state, params, geom);
    if max_disp > limit {
        return Err(SolverError::Unstable {
            time: t_now,
            max_displacement: max_disp.to_f64().unwrap_or(f64::NAN),
            limit: limit.to_f64().unwrap_or(f64::NAN),
        });
    }

    let next = CortexState::new(new_positions, state.time() + dt)
        .map_err(|_| SolverError::NonFinite { time: t_now })?;
    let energy_after = total_energy(&next, params, None);
    Ok((
        next,
        StepReport {
            max_displacement: max_disp,
            projected_nodes: projected,
            energy_after,
            inner_iterations: None,
            final_gradient_norm: None,
        },
    ))
}

/// One explicit step of size `params.dt`.
pub fn explicit_step<S: Scalar>(
    state: &CortexState<S>,
    params: &SimParams<S>,
    geom: &ChannelGeometry<S>,
) -> Result<(CortexState<S>, StepReport<S>), SolverError> {
    explicit_step_dt(state, params, geom, params.dt, None)
}

/// One explicit step of size `dt`:
/// `X_i' = X_i + dt * P(F_i / mu)` with `F = flow + elastic + pressure + comp`.
///
/// The pressure force is switched off on `pressure_mask` nodes (channel-entry
/// push). Errors when `dt` exceeds the stability bound, when any node would
/// move farther than the displacement limit, or when the state turns
/// non-finite.
pub fn explicit_step_dt<S: Scalar>(
    state: &CortexState<S>,
    params: &SimParams<S>,
    geom: &ChannelGeometry<S>,
    dt: S,
    pressure_mask: Option<&[bool]>,
) -> Result<(CortexState<S>, StepReport<S>), SolverError> {
    if geom.is_free() {
        step_core(state, params, geom, dt, pressure_mask, |_, _, f| Ok((f, false)))
    } else {
        step_core(state, params, geom, dt, pressure_mask, |_, x, f| {
            let prox = geom.wall_proximity_fast(x)?;
            Ok(apply_cone(f, &prox, params.epsilon))
        })
    }
}

#[inline]
fn apply_cone<S: Scalar>(f: Vec2<S>, prox: &WallProximity<S>, epsilon: S) -> (Vec2<S>, bool) {
    if prox.dist < epsilon && f.dot(prox.normal) > S::zero() {
        (prox.tangent * f.dot(prox.tangent), true)
    } else {
        (f, false)
    }
}

/// Per-node cache of wall proximities. Walls are static and the step-size
/// bound keeps node motion tiny, so a proximity stays valid until the node
/// has moved a fraction of the tube width; the signed distance is corrected
/// to first order in between.
struct ProximityCache<S> {
    anchor: Vec<Vec2<S>>,
    prox: Vec<Option<WallProximity<S>>>,
    refresh_radius: S,
}

impl<S: Scalar> ProximityCache<S> {
    fn new(n: usize, epsilon: S) -> Self {
        Self {
            anchor: vec![Vec2::zero(); n],
            prox: vec![None; n],
            refresh_radius: epsilon / num(8.0),
        }
    }

    fn lookup(
        &mut self,
        i: usize,
        x: Vec2<S>,
        geom: &ChannelGeometry<S>,
    ) -> Result<WallProximity<S>, SolverError> {
        if i >= self.prox.len() {
            // Node count changed under us; rebuild lazily.
            self.anchor.resize(self.prox.len().max(i + 1), Vec2::zero());
            self.prox.resize(self.prox.len().max(i + 1), None);
        }
        let stale = match &self.prox[i] {
            Some(_) => (x - self.anchor[i]).norm() > self.refresh_radius,
            None => true,
        };
        if stale {
            self.prox[i] = Some(geom.wall_proximity_fast(x)?);
            self.anchor[i] = x;
        }
        let mut prox = self.prox[i].expect("cache was just filled");
        prox.dist = prox.dist - (x - self.anchor[i]).dot(prox.normal);
        Ok(prox)
    }
}

/// Drives [`explicit_step_dt`] with step halving on monitor rejections and
/// gradual regrowth back towards the nominal `dt`, instead of a fixed CFL
/// rule: the elastic term vanishes on slack segments, so a worst-case bound
/// would be hopelessly pessimistic there. Wall proximities are cached per
/// node between steps.
pub struct AdaptiveStepper<S> {
    dt_nominal: S,
    dt: S,
    halvings_cap: u32,
    cache: Option<ProximityCache<S>>,
}

impl<S: Scalar> AdaptiveStepper<S> {
    pub fn new(dt_nominal: S) -> Self {
        Self {
            dt_nominal,
            dt: dt_nominal,
            halvings_cap: 60,
            cache: None,
        }
    }

    pub fn current_dt(&self) -> S {
        self.dt
    }

    /// Advances by one (possibly reduced) step.
    pub fn step(
        &mut self,
        state: &CortexState<S>,
        params: &SimParams<S>,
        geom: &ChannelGeometry<S>,
        pressure_mask: Option<&[bool]>,
    ) -> Result<(CortexState<S>, StepReport<S>), SolverError> {
        let grown = (self.dt * num(1.3)).min(self.dt_nominal);
        self.dt = grown.min(stable_dt_bound(state, params));
        let needs_cache = !geom.is_free();
        if needs_cache && self.cache.is_none() {
            self.cache = Some(ProximityCache::new(state.n(), params.epsilon));
        }

        let mut halvings = 0u32;
        loop {
            let attempt = if let Some(cache) = self.cache.as_mut() {
                step_core(state, params, geom, self.dt, pressure_mask, |i, x, f| {
                    let prox = cache.lookup(i, x, geom)?;
                    Ok(apply_cone(f, &prox, params.epsilon))
                })
            } else {
                step_core(state, params, geom, self.dt, pressure_mask, |_, _, f| {
                    Ok((f, false))
                })
            };
            match attempt {
                Ok(done) => return Ok(done),
                Err(SolverError::Unstable { .. } | SolverError::StiffStep { .. })
                    if halvings < self.halvings_cap =>
                {
                    self.dt = self.dt / num(2.0);
                    halvings += 1;
                }
                Err(err) => return Err(err),
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cortex::{discrete_equilibrium_radius, make_circle};
    use crate::vec2::Vec2;

    fn free_params(v: f64) -> SimParams<f64> {
        SimParams {
            polymerization_speed: v,
            ..SimParams::default()
        }
    }

    #[test]
    fn equilibrium_circle_is_a_fixed_point() {
        let n = 200;
        let mut params = free_params(0.0);
        params.dt = 1e-5;
        let r = discrete_equilibrium_radius(n, params.pressure, params.stiffness);
        let state = make_circle(n, Vec2::zero(), r).unwrap();
        let geom = ChannelGeometry::free();
        let (next, report) = explicit_step(&state, &params, &geom).unwrap();
        for (a, b) in state.positions().iter().zip(next.positions()) {
            assert!((*a - *b).norm() < 1e-8);
        }
        assert_eq!(report.projected_nodes, 0);
    }

    #[test]
    fn step_size_scales_linearly_for_small_dt() {
        let params = free_params(0.0);
        let state = make_circle(64, Vec2::zero(), 0.36).unwrap();
        let geom = ChannelGeometry::free();
        let (a, _) = explicit_step_dt(&state, &params, &geom, 1e-4, None).unwrap();
        let (b, _) = explicit_step_dt(&state, &params, &geom, 5e-5, None).unwrap();
        let d_a = a.positions()[0].dist(state.positions()[0]);
        let d_b = b.positions()[0].dist(state.positions()[0]);
        let ratio = d_a / d_b;
        assert!((ratio - 2.0).abs() < 1e-3, "ratio {ratio}");
    }

    #[test]
    fn monitor_rejects_oversized_steps() {
        let params = free_params(0.0);
        // Strongly stretched circle: large elastic forces and stiffness.
        let state = make_circle(64, Vec2::zero(), 0.6).unwrap();
        let geom = ChannelGeometry::free();
        let err = explicit_step_dt(&state, &params, &geom, 1.0, None).unwrap_err();
        assert!(matches!(
            err,
            SolverError::Unstable { .. } | SolverError::StiffStep { .. }
        ));
        // The adaptive driver gets through by halving.
        let mut stepper = AdaptiveStepper::new(1.0);
        let (next, _) = stepper.step(&state, &params, &geom, None).unwrap();
        assert!(stepper.current_dt() < 1.0);
        assert!(next.positions().iter().all(|p| p.is_finite()));
    }

    #[test]
    fn energy_decreases_in_free_relaxation() {
        // v = 0, all segments stretched, dt under the spectral bound.
        let mut params = free_params(0.0);
        params.dt = 2e-5;
        let geom = ChannelGeometry::free();
        let mut state = make_circle(96, Vec2::zero(), 0.40).unwrap();
        assert!(params.dt < stable_dt_bound(&state, &params));
        let mut energy = total_energy(&state, &params, None).e_total;
        for _ in 0..300 {
            let (next, report) = explicit_step(&state, &params, &geom).unwrap();
            assert!(
                report.energy_after.e_total <= energy + 1e-12,
                "energy went up: {} -> {}",
                energy,
                report.energy_after.e_total
            );
            energy = report.energy_after.e_total;
            state = next;
        }
    }

    #[test]
    fn com_conserved_per_step_with_compensation() {
        let mut params = free_params(2.0);
        params.spread = 0.04;
        let geom = ChannelGeometry::free();
        let mut state = make_circle(200, Vec2::zero(), 0.33).unwrap();
        let mut stepper = AdaptiveStepper::new(params.dt);
        let com0 = state.center_of_mass();
        for _ in 0..200 {
            let (next, _) = stepper.step(&state, &params, &geom, None).unwrap();
            let drift = (next.center_of_mass() - com0).norm();
            assert!(drift < 1e-12, "COM drift {drift:e}");
            state = next;
        }
    }

    #[test]
    fn wall_contact_stays_inside_and_moves_tangentially() {
        // Circle pressed against flat walls slightly narrower than its
        // equilibrium radius: outward forces at the top/bottom get projected.
        let mut params = free_params(0.0);
        params.epsilon = 0.02;
        let w = 0.31;
        let geom = ChannelGeometry::flat(w).unwrap();
        let n = 128;
        let mut state = make_circle(n, Vec2::zero(), 0.30).unwrap();
        let mut stepper = AdaptiveStepper::new(2e-3);
        let mut saw_projection = false;
        for _ in 0..1500 {
            let before = state.clone();
            let (next, report) = stepper.step(&state, &params, &geom, None).unwrap();
            if report.projected_nodes > 0 {
                saw_projection = true;
                for i in 0..n {
                    let x = before.positions()[i];
                    let prox = geom.closest_wall_point(x).unwrap();
                    let moved = next.positions()[i] - x;
                    let f = crate::cortex::net_force(&before, &params, None)[i];
                    if prox.dist < params.epsilon && f.dot(prox.normal) > 0.0 && moved.norm() > 0.0
                    {
                        let normal_part = moved.dot(prox.normal).abs();
                        assert!(
                            normal_part <= 1e-12 + 1e-6 * moved.norm(),
                            "normal motion {normal_part:e}"
                        );
                    }
                }
            }
            for p in next.positions() {
                assert!(geom.inside(*p), "node escaped at {p:?}");
            }
            state = next;
        }
        assert!(saw_projection, "test never engaged the wall");
    }
}
