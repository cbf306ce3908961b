//! Minimizing-movement scheme: each step minimizes the energy plus a
//! proximal distance term, with the cortical flow frozen at the previous
//! state. Walls enter only through the softened obstacle potential.

use crate::cortex::{
    compensating_force, elastic_force, flow_term, leading_trailing, pressure_force, total_energy,
    CortexState, SimParams,
};
use crate::geometry::SoftObstacle;
use crate::scalar::{num, Scalar};
use crate::vec2::Vec2;

use super::{SolverError, StepReport};

/// Settings for the proximal minimization.
#[derive(Clone, Copy, Debug)]
pub struct MMConfig<S> {
    /// Time step of the minimizing movement.
    pub tau: S,
    /// Obstacle softness used when walls are present.
    pub delta: S,
    /// Termination tolerance on the sup-norm of the objective gradient.
    pub grad_tol: S,
    /// Inner iteration cap.
    pub max_inner: usize,
}

impl<S: Scalar> Default for MMConfig<S> {
    fn default() -> Self {
        Self {
            tau: num(4e-2),
            delta: num(1e-2),
            grad_tol: num(1e-8),
            max_inner: 10_000,
        }
    }
}

/// Transport terms (advective flow plus compensating force) at `state`.
fn transport_rhs<S: Scalar>(state: &CortexState<S>, params: &SimParams<S>) -> Vec<Vec2<S>> {
    let (i_lead, i_trail) = leading_trailing(state, params.polarization);
    let v = params.polymerization_speed;
    let flow = flow_term(state, v, i_lead, i_trail, params.flow_arc);
    if !params.compensation {
        return flow;
    }
    let comp = compensating_force(state, v, params.spread, i_lead, i_trail);
    flow.into_iter().zip(comp).map(|(f, c)| f + c).collect()
}

/// Staggered antiderivative of the transport terms: returns `S_{i+1/2}` with
/// `(S_{i+1/2} - S_{i-1/2})/ds = -(flow + comp)_i`, gauged to zero mean.
/// The summand must have zero discrete mean (the compensating force is built
/// for exactly that); a mean above 1e-10 is reported as an error.
pub fn discrete_s_flow<S: Scalar>(
    state: &CortexState<S>,
    params: &SimParams<S>,
) -> Result<Vec<Vec2<S>>, SolverError> {
    let q = transport_rhs(state, params);
    let ds = state.ds();
    let mut mean = Vec2::zero();
    for qi in &q {
        mean += *qi * ds;
    }
    if mean.norm().to_f64().unwrap_or(f64::NAN) > 1e-10 {
        return Err(SolverError::BrokenCompensation {
            mean: mean.norm().to_f64().unwrap_or(f64::NAN),
        });
    }
    let n = state.n();
    let mut s = Vec::with_capacity(n);
    let mut acc = Vec2::zero();
    for qi in &q {
        acc -= *qi * ds;
        s.push(acc);
    }
    let gauge = s.iter().fold(Vec2::zero(), |a, b| a + *b) / S::from_usize(n).unwrap();
    for si in s.iter_mut() {
        *si -= gauge;
    }
    Ok(s)
}

struct Objective<'a, S: Scalar> {
    old: &'a [Vec2<S>],
    params: &'a SimParams<S>,
    obstacle: Option<&'a SoftObstacle<S>>,
    transport: Vec<Vec2<S>>,
    ds: S,
    tau: S,
}

impl<'a, S: Scalar> Objective<'a, S> {
    /// Objective value; `None` when the candidate left the realm of finite
    /// floats (treated as +infinity by the line search).
    fn value(&self, y: &[Vec2<S>]) -> Option<S> {
        let state = CortexState::new(y.to_vec(), S::zero()).ok()?;
        let report = total_energy(&state, self.params, self.obstacle);
        let mut prox = S::zero();
        let mut coupling = S::zero();
        for i in 0..y.len() {
            prox += (y[i] - self.old[i]).norm_sq();
            coupling += y[i].dot(self.transport[i]);
        }
        let inv_mu = S::one() / self.params.friction;
        let phi = prox * self.ds / (self.tau + self.tau)
            + (report.e_total - coupling * self.ds) * inv_mu;
        phi.is_finite().then_some(phi)
    }

    /// Gradient with respect to the `L2(ds)` inner product.
    fn gradient(&self, y: &[Vec2<S>]) -> Option<Vec<Vec2<S>>> {
        let state = CortexState::new(y.to_vec(), S::zero()).ok()?;
        let el = elastic_force(&state, self.params.stiffness);
        let pr = pressure_force(&state, self.params.pressure);
        let inv_mu = S::one() / self.params.friction;
        let mut grad = Vec::with_capacity(y.len());
        for i in 0..y.len() {
            let mut g = (y[i] - self.old[i]) / self.tau - (el[i] + pr[i] + self.transport[i]) * inv_mu;
            if let Some(obs) = self.obstacle {
                g += obs.grad(y[i]) * inv_mu;
            }
            if !g.is_finite() {
                return None;
            }
            grad.push(g);
        }
        Some(grad)
    }
}

fn sup_norm<S: Scalar>(v: &[Vec2<S>]) -> S {
    v.iter().fold(S::zero(), |acc, g| acc.max(g.norm()))
}

fn l2_norm_sq<S: Scalar>(v: &[Vec2<S>], ds: S) -> S {
    v.iter().map(|g| g.norm_sq()).sum::<S>() * ds
}

/// One minimizing-movement step of size `cfg.tau`.
///
/// The minimizer is found by accelerated gradient descent with backtracking
/// line search and adaptive restart; iterates are accepted only on objective
/// decrease, so the objective falls monotonically and in particular the step
/// never increases the softened energy when the flow is off.
pub fn mm_step<S: Scalar>(
    state: &CortexState<S>,
    params: &SimParams<S>,
    obstacle: Option<&SoftObstacle<S>>,
    cfg: &MMConfig<S>,
) -> Result<(CortexState<S>, StepReport<S>), SolverError> {
    let t_now = state.time().to_f64().unwrap_or(f64::NAN);
    let ds = state.ds();
    let objective = Objective {
        old: state.positions(),
        params,
        obstacle,
        transport: transport_rhs(state, params),
        ds,
        tau: cfg.tau,
    };

    let armijo = num::<S>(1e-4);
    let backtrack = |base: &[Vec2<S>],
                     base_phi: S,
                     dir: &[Vec2<S>],
                     dir_norm_sq: S,
                     t0: S|
     -> Option<(Vec<Vec2<S>>, S, S)> {
        let mut t = t0;
        for _ in 0..60 {
            let cand: Vec<Vec2<S>> = base
                .iter()
                .zip(dir)
                .map(|(b, d)| *b - *d * t)
                .collect();
            if let Some(fc) = objective.value(&cand) {
                if fc <= base_phi - armijo * t * dir_norm_sq {
                    return Some((cand, fc, t));
                }
            }
            t = t / num(2.0);
        }
        None
    };

    // Monotone accelerated descent: the accelerated candidate `z` always
    // feeds the momentum sequence, while the reported iterate `x` keeps the
    // best objective seen, so the objective never increases. Momentum is
    // reset whenever it points against the gradient (adaptive restart).
    let mut x = state.positions().to_vec();
    let mut fx = objective
        .value(&x)
        .ok_or(SolverError::NonFinite { time: t_now })?;
    let mut y = x.clone();
    let mut theta = S::one();
    let mut t_step = cfg.tau;
    let mut grad_norm = S::infinity();

    for iteration in 0..cfg.max_inner {
        let gx = objective
            .gradient(&x)
            .ok_or(SolverError::NonFinite { time: t_now })?;
        grad_norm = sup_norm(&gx);
        if grad_norm < cfg.grad_tol {
            return finish(state, params, obstacle, x, cfg, iteration, grad_norm, t_now);
        }

        let mut fy = objective.value(&y);
        let mut gy = objective.gradient(&y);
        if fy.is_none() || gy.is_none() {
            // Extrapolation left the finite range; restart from x.
            y = x.clone();
            theta = S::one();
            fy = Some(fx);
            gy = Some(gx.clone());
        }
        let fy = fy.expect("checked above");
        let gy = gy.expect("checked above");
        let gy_sq = l2_norm_sq(&gy, ds);

        // Below the floating-point resolution of the objective the line
        // search can no longer measure descent; finish with damped plain
        // gradient steps driven by the gradient norm alone.
        let noise_floor = num::<S>(8.0) * S::epsilon() * (S::one() + fx.abs());
        if armijo * t_step * gy_sq < noise_floor {
            let mut current = x;
            let mut g_cur = gx;
            let mut gn_prev = grad_norm;
            let mut t_tail = t_step / num(4.0);
            for it in iteration..cfg.max_inner {
                for i in 0..current.len() {
                    current[i] -= g_cur[i] * t_tail;
                }
                g_cur = objective
                    .gradient(&current)
                    .ok_or(SolverError::NonFinite { time: t_now })?;
                let gn = sup_norm(&g_cur);
                if gn < cfg.grad_tol {
                    return finish(state, params, obstacle, current, cfg, it + 1, gn, t_now);
                }
                if gn >= gn_prev {
                    t_tail = t_tail / num(2.0);
                }
                gn_prev = gn;
            }
            return Err(SolverError::InnerIterationCap {
                iterations: cfg.max_inner,
                gradient_norm: gn_prev.to_f64().unwrap_or(f64::NAN),
            });
        }

        let Some((z, fz, t_used)) = backtrack(&y, fy, &gy, gy_sq, t_step) else {
            if y != x {
                // Retry from the monotone iterate before giving up.
                y = x.clone();
                theta = S::one();
                continue;
            }
            return Err(SolverError::InnerIterationCap {
                iterations: iteration,
                gradient_norm: grad_norm.to_f64().unwrap_or(f64::NAN),
            });
        };
        t_step = t_used * num(1.25);

        let four = num::<S>(4.0);
        let theta_next = (S::one() + (S::one() + four * theta * theta).sqrt()) / num(2.0);

        // Adaptive restart: momentum fighting the gradient.
        let mut momentum_dot = S::zero();
        for i in 0..z.len() {
            momentum_dot += gy[i].dot(z[i] - x[i]);
        }

        let (x_new, fx_new) = if fz <= fx { (z.clone(), fz) } else { (x.clone(), fx) };
        if momentum_dot > S::zero() {
            theta = S::one();
            y = x_new.clone();
        } else {
            let c1 = theta / theta_next;
            let c2 = (theta - S::one()) / theta_next;
            let mut y_next = Vec::with_capacity(z.len());
            for i in 0..z.len() {
                y_next.push(x_new[i] + (z[i] - x_new[i]) * c1 + (x_new[i] - x[i]) * c2);
            }
            y = y_next;
            theta = theta_next;
        }
        x = x_new;
        fx = fx_new;
    }

    Err(SolverError::InnerIterationCap {
        iterations: cfg.max_inner,
        gradient_norm: grad_norm.to_f64().unwrap_or(f64::NAN),
    })
}

#[allow(clippy::too_many_arguments)]
fn finish<S: Scalar>(
    state: &CortexState<S>,
    params: &SimParams<S>,
    obstacle: Option<&SoftObstacle<S>>,
    x: Vec<Vec2<S>>,
    cfg: &MMConfig<S>,
    iterations: usize,
    grad_norm: S,
    t_now: f64,
) -> Result<(CortexState<S>, StepReport<S>), SolverError> {
    let max_displacement = x
        .iter()
        .zip(state.positions())
        .fold(S::zero(), |acc, (a, b)| acc.max((*a - *b).norm()));
    let next = CortexState::new(x, state.time() + cfg.tau)
        .map_err(|_| SolverError::NonFinite { time: t_now })?;
    let energy_after = total_energy(&next, params, obstacle);
    Ok((
        next,
        StepReport {
            max_displacement,
            projected_nodes: 0,
            energy_after,
            inner_iterations: Some(iterations),
            final_gradient_norm: Some(grad_norm),
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cortex::{discrete_equilibrium_radius, make_circle, total_energy};
    use crate::geometry::ChannelGeometry;
    use crate::solvers::explicit_step_dt;

    fn params(v: f64) -> SimParams<f64> {
        SimParams {
            polymerization_speed: v,
            spread: 0.1,
            ..SimParams::default()
        }
    }

    fn perturbed_circle(n: usize) -> CortexState<f64> {
        let r0 = 1.0 / (2.0 * std::f64::consts::PI - 3.2);
        let positions = (0..n)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let r = r0 * (1.0 + 0.02 * (3.0 * th).cos() + 0.015 * (2.0 * th).sin());
                Vec2::new(r * th.cos(), r * th.sin())
            })
            .collect();
        CortexState::new(positions, 0.0).unwrap()
    }

    #[test]
    fn s_flow_inverts_transport_terms() {
        let state = perturbed_circle(200);
        let p = params(2.0);
        let s = discrete_s_flow(&state, &p).unwrap();
        let q = transport_rhs(&state, &p);
        let ds = state.ds();
        let n = state.n();
        for i in 1..n {
            let diff = (s[i] - s[i - 1]) / ds;
            assert!((diff + q[i]).norm() < 1e-12, "node {i}");
        }
        // Cyclic closure: the prefix sum returns to its start.
        let wrap = (s[0] - s[n - 1]) / ds + q[0];
        assert!(wrap.norm() < 1e-10 / ds, "wrap {:e}", wrap.norm());
        // v = 0 gives the zero array.
        let s0 = discrete_s_flow(&state, &params(0.0)).unwrap();
        assert!(s0.iter().all(|v| v.norm() == 0.0));
    }

    #[test]
    fn s_flow_rejects_broken_compensation() {
        let state = perturbed_circle(64);
        let mut p = params(2.0);
        p.compensation = false; // flow alone has nonzero mean
        assert!(matches!(
            discrete_s_flow(&state, &p),
            Err(SolverError::BrokenCompensation { .. })
        ));
    }

    #[test]
    fn tiny_tau_returns_the_previous_state() {
        let n = 200;
        let p = params(0.0);
        let r = discrete_equilibrium_radius(n, p.pressure, p.stiffness);
        let state = make_circle(n, Vec2::zero(), r).unwrap();
        let cfg = MMConfig {
            tau: 1e-8,
            ..MMConfig::default()
        };
        let (next, report) = mm_step(&state, &p, None, &cfg).unwrap();
        assert!(report.inner_iterations.unwrap() <= 2);
        for (a, b) in state.positions().iter().zip(next.positions()) {
            assert!((*a - *b).norm() < 1e-9);
        }
    }

    #[test]
    fn energy_descends_without_flow() {
        let p = params(0.0);
        let cfg = MMConfig {
            tau: 2e-3,
            ..MMConfig::default()
        };
        let mut state = perturbed_circle(96);
        let mut energy = total_energy(&state, &p, None).e_total;
        for _ in 0..30 {
            let (next, report) = mm_step(&state, &p, None, &cfg).unwrap();
            assert!(
                report.energy_after.e_total <= energy + 1e-12,
                "energy rose {} -> {}",
                energy,
                report.energy_after.e_total
            );
            energy = report.energy_after.e_total;
            state = next;
        }
    }

    #[test]
    fn single_step_agrees_with_explicit_at_second_order() {
        let p = params(2.0);
        let free = ChannelGeometry::free();
        // Coarse enough that the explicit scheme is stable at tau = 1e-3.
        let state = perturbed_circle(16);

        let diff_at = |tau: f64| -> f64 {
            let cfg = MMConfig {
                tau,
                grad_tol: 1e-11,
                ..MMConfig::default()
            };
            let (mm, _) = mm_step(&state, &p, None, &cfg).unwrap();
            let (ex, _) = explicit_step_dt(&state, &p, &free, tau, None).unwrap();
            mm.positions()
                .iter()
                .zip(ex.positions())
                .map(|(a, b)| (*a - *b).norm())
                .fold(0.0, f64::max)
        };

        let d1 = diff_at(1e-3);
        let d2 = diff_at(5e-4);
        assert!(d1 > 0.0 && d2 > 0.0);
        let ratio = d1 / d2;
        assert!(
            (3.0..5.0).contains(&ratio),
            "expected O(tau^2) one-step gap, got ratio {ratio} (d1={d1:e}, d2={d2:e})"
        );
    }
}
