//! Fast invariant suite: oracle-style checks over every module, runnable
//! from the CLI without a long simulation.

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::cortex::{
    compensating_force, elastic_force, flow_term, leading_trailing, make_circle,
    mollified_delta_weights, pressure_force, total_energy, CortexState, EnergyReport, SimParams,
};
use crate::geometry::{ChannelGeometry, RatchetSpec, SoftObstacle};
use crate::protocols::{run_channel, EntryProtocolConfig, RunOptions};
use crate::solvers::{discrete_s_flow, project_tangent_cone};
use crate::vec2::Vec2;
use crate::Real;

/// Outcome of one named invariant check.
#[derive(Clone, Debug)]
pub struct CheckResult {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl CheckResult {
    fn new(name: &'static str, passed: bool, detail: String) -> Self {
        Self {
            name,
            passed,
            detail,
        }
    }
}

fn wobbly_state(rng: &mut ChaCha8Rng, n: usize, base: Real) -> CortexState<Real> {
    let modes: Vec<(f64, f64, f64)> = (0..4)
        .map(|_| {
            (
                rng.gen_range(2.0..6.0f64).round(),
                rng.gen_range(-0.05..0.05),
                rng.gen_range(0.0..std::f64::consts::TAU),
            )
        })
        .collect();
    let positions = (0..n)
        .map(|i| {
            let th = std::f64::consts::TAU * i as f64 / n as f64;
            let mut r = base;
            for (k, amp, phase) in &modes {
                r *= 1.0 + amp * (k * th + phase).cos();
            }
            Vec2::new(r * th.cos(), r * th.sin())
        })
        .collect();
    CortexState::new(positions, 0.0).expect("valid state")
}

fn delta_normalization() -> CheckResult {
    let n = 200;
    let ds = 1.0 / n as f64;
    let mut worst: f64 = 0.0;
    for a in [0.01, 0.04, 0.1, 0.8] {
        let w = mollified_delta_weights::<Real>(a, n);
        let total: f64 = w.iter().map(|wi| wi * ds).sum();
        worst = worst.max((total - 1.0).abs());
    }
    CheckResult::new(
        "mollified delta normalization",
        worst < 1e-14,
        format!("max |sum - 1| = {worst:.2e} (tol 1e-14)"),
    )
}

fn kernel_normalization() -> CheckResult {
    // The obstacle potential plateaus exactly when its kernel has unit mass.
    let geom = ChannelGeometry::<Real>::flat(0.1).unwrap();
    let obs = SoftObstacle::build(&geom, 0.01, (-0.2, 0.2), (-0.15, 0.15)).unwrap();
    let inside = obs.value(Vec2::new(0.0, 0.0));
    let err = (inside - 1.0 / 1.01).abs();
    CheckResult::new(
        "obstacle kernel normalization",
        err < 1e-12,
        format!("interior plateau error {err:.2e} (tol 1e-12)"),
    )
}

fn gradient_consistency() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let params = SimParams::<Real>::default();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for _ in 0..10 {
        // Radius large enough that every segment stays stretched: keeps the
        // energy away from its kink where the gradient is one-sided.
        let state = wobbly_state(&mut rng, 48, 0.40);
        let ds = state.ds();
        let el = elastic_force(&state, params.stiffness);
        let pr = pressure_force(&state, params.pressure);
        for i in 0..state.n() {
            for comp in 0..2 {
                let mut plus = state.positions().to_vec();
                let mut minus = plus.clone();
                if comp == 0 {
                    plus[i].x += h;
                    minus[i].x -= h;
                } else {
                    plus[i].y += h;
                    minus[i].y -= h;
                }
                let e_plus = total_energy(
                    &CortexState::new(plus, 0.0).unwrap(),
                    &params,
                    None,
                );
                let e_minus = total_energy(
                    &CortexState::new(minus, 0.0).unwrap(),
                    &params,
                    None,
                );
                let fd_el = -(e_plus.e_el - e_minus.e_el) / (2.0 * h * ds);
                let fd_p = -(e_plus.e_p - e_minus.e_p) / (2.0 * h * ds);
                let (got_el, got_p) = if comp == 0 {
                    (el[i].x, pr[i].x)
                } else {
                    (el[i].y, pr[i].y)
                };
                worst = worst.max((got_el - fd_el).abs() / el[i].norm().max(1.0));
                worst = worst.max((got_p - fd_p).abs() / pr[i].norm().max(1.0));
            }
        }
    }
    CheckResult::new(
        "force = -energy gradient",
        worst < 1e-5,
        format!("max relative error {worst:.2e} (tol 1e-5)"),
    )
}

fn force_equivariance() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let state = wobbly_state(&mut rng, 64, 0.35);
    let angle: f64 = 0.7343;
    let (s, c) = angle.sin_cos();
    let rot = |v: Vec2<Real>| Vec2::new(c * v.x - s * v.y, s * v.x + c * v.y);
    let shift = Vec2::new(1.25, -0.75);
    let moved = CortexState::new(
        state.positions().iter().map(|p| rot(*p) + shift).collect(),
        0.0,
    )
    .unwrap();
    let f0 = elastic_force(&state, 1.0);
    let f1 = elastic_force(&moved, 1.0);
    let mut worst: f64 = 0.0;
    for i in 0..state.n() {
        worst = worst.max((rot(f0[i]) - f1[i]).norm());
    }
    CheckResult::new(
        "elastic force equivariance",
        worst < 1e-9,
        format!("max |R f - f(R x + c)| = {worst:.2e} (tol 1e-9)"),
    )
}

fn pressure_telescoping() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let state = wobbly_state(&mut rng, 157, 0.3);
        let total = pressure_force(&state, 3.2)
            .into_iter()
            .fold(Vec2::zero(), |acc, f| acc + f);
        worst = worst.max(total.norm());
    }
    CheckResult::new(
        "pressure force sums to zero",
        worst < 1e-10,
        format!("max |sum| = {worst:.2e} (tol 1e-10)"),
    )
}

fn projection_properties() -> CheckResult {
    let spec = RatchetSpec::uniform(0.16, 3, 0.05, 0.04, 0.4).unwrap();
    let geom = ChannelGeometry::ratchet(spec).unwrap();
    let eps = 0.015;
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let mut worst: f64 = 0.0;
    for _ in 0..10_000 {
        let x = Vec2::new(rng.gen_range(-0.2..0.7), rng.gen_range(-0.12..0.12));
        let f = Vec2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
        let p1 = project_tangent_cone(f, x, &geom, eps);
        let p2 = project_tangent_cone(p1, x, &geom, eps);
        worst = worst.max(p1.norm() - f.norm());
        worst = worst.max((p2 - p1).norm());
    }
    CheckResult::new(
        "projection idempotent and non-expansive",
        worst < 1e-10,
        format!("max violation {worst:.2e} (tol 1e-10)"),
    )
}

fn inside_distance_consistency() -> CheckResult {
    let spec = RatchetSpec::uniform(0.16, 3, 0.0777, 0.063, 0.4).unwrap();
    let geom = ChannelGeometry::ratchet(spec).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let mut mismatches = 0usize;
    for _ in 0..10_000 {
        let p = Vec2::new(rng.gen_range(-0.3..0.9), rng.gen_range(-0.25..0.25));
        let prox = geom.closest_wall_point(p).unwrap();
        if geom.inside(p) != (prox.dist > 0.0) {
            mismatches += 1;
        }
    }
    CheckResult::new(
        "inside() matches distance sign",
        mismatches == 0,
        format!("{mismatches} mismatches in 10000 samples"),
    )
}

fn wall_fixed_point() -> CheckResult {
    let spec = RatchetSpec::uniform(0.16, 4, 0.0777, 0.063, 0.4).unwrap();
    let mut worst_residual: f64 = 0.0;
    let mut worst_period: f64 = 0.0;
    for i in 0..500 {
        let x = -0.2 + 0.002 * i as f64;
        let g = spec.profile_shape(x).unwrap();
        // Single-section spec: the section-local coordinate is x itself.
        let phase = std::f64::consts::TAU * x / 0.16;
        worst_residual = worst_residual.max((g - (phase + 0.4 * g).sin()).abs());
        if x > 0.0 && x + 0.16 < 0.64 {
            let a = spec.wall_profile(x).unwrap();
            let b = spec.wall_profile(x + 0.16).unwrap();
            worst_period = worst_period.max((a - b).abs());
        }
    }
    // Flat limit d0 = 0 must be bit-exact.
    let flat = RatchetSpec::uniform(0.16, 4, 0.0777, 0.0, 0.4).unwrap();
    let mut flat_exact = true;
    for i in 0..200 {
        let x = -0.1 + 0.004 * i as f64;
        if flat.wall_profile(x).unwrap() != -0.0777 {
            flat_exact = false;
        }
    }
    let passed = worst_residual < 1e-12 && worst_period < 1e-10 && flat_exact;
    CheckResult::new(
        "wall profile fixed point",
        passed,
        format!(
            "residual {worst_residual:.2e} (tol 1e-12), periodicity {worst_period:.2e} (tol 1e-10), flat limit exact: {flat_exact}"
        ),
    )
}

fn transport_mean_zero() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    let mut worst: f64 = 0.0;
    for _ in 0..5 {
        let state = wobbly_state(&mut rng, 200, 0.33);
        let (i_lead, i_trail) = leading_trailing(&state, Vec2::new(-1.0, 0.0));
        let flow = flow_term(
            &state,
            2.0,
            i_lead,
            i_trail,
            crate::cortex::FlowArc::TrailToLead,
        );
        let comp = compensating_force(&state, 2.0, 0.04, i_lead, i_trail);
        let ds = state.ds();
        let mut total = Vec2::zero();
        for i in 0..state.n() {
            total += (flow[i] + comp[i]) * ds;
        }
        worst = worst.max(total.norm());
    }
    CheckResult::new(
        "compensation cancels the flow mean",
        worst < 1e-12,
        format!("max |mean| = {worst:.2e} (tol 1e-12)"),
    )
}

fn s_flow_inversion() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(29);
    let state = wobbly_state(&mut rng, 200, 0.33);
    let params = SimParams::<Real> {
        polymerization_speed: 2.0,
        spread: 0.04,
        ..SimParams::default()
    };
    match discrete_s_flow(&state, &params) {
        Ok(s) => {
            // Cyclic closure: the seam difference must reproduce the first
            // transport sample, like every interior difference does.
            let ds = state.ds();
            let (i_lead, i_trail) = leading_trailing(&state, params.polarization);
            let q0 = flow_term(
                &state,
                params.polymerization_speed,
                i_lead,
                i_trail,
                params.flow_arc,
            )[0] + compensating_force(
                &state,
                params.polymerization_speed,
                params.spread,
                i_lead,
                i_trail,
            )[0];
            let wrap = ((s[0] - s[state.n() - 1]) / ds + q0).norm() * ds;
            CheckResult::new(
                "transport antiderivative closes",
                wrap < 1e-10,
                format!("cyclic seam residual {wrap:.2e} (tol 1e-10)"),
            )
        }
        Err(e) => CheckResult::new("transport antiderivative closes", false, e.to_string()),
    }
}

fn coercivity_on_samples() -> CheckResult {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let params = SimParams::<Real>::default();
    let bound = EnergyReport::coercivity_bound(params.pressure, params.stiffness);
    let mut worst = f64::INFINITY;
    for _ in 0..50 {
        let base = rng.gen_range(0.05..0.5);
        let state = wobbly_state(&mut rng, 120, base);
        let report = total_energy(&state, &params, None);
        worst = worst.min(report.e_total - bound);
    }
    CheckResult::new(
        "energy above the coercivity bound",
        worst > -1e-6,
        format!("min (E - bound) = {worst:.3e} over random states (bound {bound:.5})"),
    )
}

fn channel_non_penetration() -> CheckResult {
    // Short channel burst: wide flat channel, quick entry, every frame
    // checked inside the protocol driver.
    let params = SimParams::<Real> {
        polarization: Vec2::new(1.0, 0.0),
        ..SimParams::default()
    };
    let geom = Arc::new(ChannelGeometry::flat_with_entrance(0.12, 0.0).unwrap());
    let entry = EntryProtocolConfig {
        relaxation_time: 0.05,
        max_push_time: 30.0,
        ..EntryProtocolConfig::default()
    };
    let opts = RunOptions {
        frame_stride: 200,
        ..RunOptions::default()
    };
    match run_channel(&params, 64, geom, &entry, 8.0, &opts) {
        Ok(traj) => CheckResult::new(
            "channel run without penetration",
            true,
            format!(
                "{} frames, entered at t = {:.2}",
                traj.frames.len(),
                traj.entered_at.unwrap_or(f64::NAN)
            ),
        ),
        Err(e) => CheckResult::new("channel run without penetration", false, e.to_string()),
    }
}

fn equilibrium_fixed_point() -> CheckResult {
    let params = SimParams::<Real> {
        polymerization_speed: 0.0,
        ..SimParams::default()
    };
    let n = 200;
    let r = crate::cortex::discrete_equilibrium_radius(n, params.pressure, params.stiffness);
    let state = make_circle(n, Vec2::zero(), r).unwrap();
    let el = elastic_force(&state, params.stiffness);
    let pr = pressure_force(&state, params.pressure);
    let mut worst: f64 = 0.0;
    for i in 0..n {
        worst = worst.max((el[i] + pr[i]).norm());
    }
    CheckResult::new(
        "discrete equilibrium force balance",
        worst < 1e-8,
        format!("max |elastic + pressure| = {worst:.2e} (tol 1e-8)"),
    )
}

/// Runs every invariant check; each result carries a pass flag and detail.
pub fn run_all() -> Vec<CheckResult> {
    vec![
        delta_normalization(),
        kernel_normalization(),
        gradient_consistency(),
        force_equivariance(),
        pressure_telescoping(),
        projection_properties(),
        inside_distance_consistency(),
        wall_fixed_point(),
        transport_mean_zero(),
        s_flow_inversion(),
        coercivity_on_samples(),
        equilibrium_fixed_point(),
        channel_non_penetration(),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_checks_pass() {
        for check in run_all() {
            assert!(check.passed, "{}: {}", check.name, check.detail);
        }
    }
}
