//! Discrete cortex state and the force/energy terms of the model.
//!
//! The cortex is a closed curve sampled at `N` nodes indexed on a discrete
//! torus; the node coordinate `s = i/N` measures actin material, normalized
//! so the total is one. Discrete energies are defined first and the forces
//! are their exact (negative) gradients with respect to the `L2(ds)` inner
//! product, so the explicit and minimizing-movement solvers share one force
//! code path:
//!
//! * elastic:   `E_el = kappa/2 * sum ds ((|X_{i+1}-X_i|/ds) - 1)_+^2`
//!   (stretching only; compression is free),
//! * pressure:  `E_p = -p * enclosed_area`,
//! * obstacle:  `E_obst = sum ds W(X_i)` for softened walls.
//!
//! Polymerization at the leading node and depolymerization at the trailing
//! node drive an advective cortical flow; a mollified compensating force at
//! both nodes keeps the discrete center of mass stationary in free space.

pub mod diagnostics;

use serde::Serialize;
use thiserror::Error;

use crate::geometry::SoftObstacle;
use crate::scalar::{num, recip_of, Scalar};
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum CortexError {
    #[error("cortex needs at least {min} nodes, got {got}")]
    TooFewNodes { min: usize, got: usize },
    #[error("non-finite coordinates in cortex state")]
    NonFinite,
    #[error("cortex curve is negatively oriented (signed area {area:e})")]
    NegativeOrientation { area: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error("energy {energy} below coercivity bound {bound} at t = {time}")]
    CoercivityViolated { energy: f64, bound: f64, time: f64 },
    #[error("diagnostic needs at least two frames")]
    NeedTwoFrames,
}

pub const MIN_NODES: usize = 8;

/// Node positions of the cortex at one instant, on a discrete torus.
#[derive(Clone, Debug)]
pub struct CortexState<S> {
    positions: Vec<Vec2<S>>,
    time: S,
}

impl<S: Scalar> CortexState<S> {
    pub fn new(positions: Vec<Vec2<S>>, time: S) -> Result<Self, CortexError> {
        if positions.len() < MIN_NODES {
            return Err(CortexError::TooFewNodes {
                min: MIN_NODES,
                got: positions.len(),
            });
        }
        if !positions.iter().all(|p| p.is_finite()) || !time.is_finite() {
            return Err(CortexError::NonFinite);
        }
        Ok(Self { positions, time })
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.positions.len()
    }

    /// Actin coordinate step `ds = 1/N`; `ds * N = 1` by construction.
    #[inline]
    pub fn ds(&self) -> S {
        recip_of(self.n())
    }

    #[inline]
    pub fn time(&self) -> S {
        self.time
    }

    #[inline]
    pub fn positions(&self) -> &[Vec2<S>] {
        &self.positions
    }

    /// Node accessor with cyclic indexing.
    #[inline]
    pub fn node(&self, i: isize) -> Vec2<S> {
        let n = self.positions.len() as isize;
        self.positions[(i.rem_euclid(n)) as usize]
    }

    /// Fails on clockwise orientation instead of silently flipping; the
    /// pressure sign convention assumes positive orientation.
    pub fn validate_orientation(&self) -> Result<(), CortexError> {
        let area = shoelace_area(self);
        if area <= S::zero() {
            return Err(CortexError::NegativeOrientation {
                area: area.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }

    /// Discrete center of mass `sum X_i ds`.
    pub fn center_of_mass(&self) -> Vec2<S> {
        let mut acc = Vec2::zero();
        for p in &self.positions {
            acc += *p;
        }
        acc * self.ds()
    }

    pub fn mean_segment_length(&self) -> S {
        let n = self.n();
        let mut total = S::zero();
        for i in 0..n {
            total += (self.node(i as isize + 1) - self.positions[i]).norm();
        }
        total / S::from_usize(n).unwrap()
    }
}

/// Which cyclic arc between the trailing and leading node carries the flow.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FlowArc {
    /// Nodes on the cyclic arc from the trailing index up to the leading one.
    TrailToLead,
    /// The complementary arc.
    LeadToTrail,
}

/// Physical and numerical parameters, in model units.
#[derive(Clone, Copy, Debug)]
pub struct SimParams<S> {
    /// Pressure excess `p`.
    pub pressure: S,
    /// Elastic stiffness `kappa_s`.
    pub stiffness: S,
    /// Friction coefficient `mu`.
    pub friction: S,
    /// Polymerization speed `v`.
    pub polymerization_speed: S,
    /// Spread `a` of the compensating force in actin coordinate.
    pub spread: S,
    /// Unit polarization vector `omega`.
    pub polarization: Vec2<S>,
    /// Time step.
    pub dt: S,
    /// Projection tube width `epsilon` for the wall projection.
    pub epsilon: S,
    /// Whether the compensating force is applied.
    pub compensation: bool,
    /// Indicator-arc convention for the flow term.
    pub flow_arc: FlowArc,
}

impl<S: Scalar> Default for SimParams<S> {
    fn default() -> Self {
        let base = Self {
            pressure: num(3.2),
            stiffness: S::one(),
            friction: S::one(),
            polymerization_speed: num(2.0),
            spread: S::zero(),
            polarization: Vec2::new(-S::one(), S::zero()),
            dt: num(4e-2),
            epsilon: num(0.1),
            compensation: true,
            flow_arc: FlowArc::TrailToLead,
        };
        base.with_spread_fraction(num(0.1))
    }
}

impl<S: Scalar> SimParams<S> {
    pub fn validate(&self) -> Result<(), CortexError> {
        let two_pi = S::PI() + S::PI();
        if !(self.pressure < two_pi * self.stiffness) {
            return Err(CortexError::InvalidParams(format!(
                "pressure must satisfy p < 2*pi*kappa_s ((A1) violated): p = {}, kappa_s = {}",
                self.pressure, self.stiffness
            )));
        }
        for (name, v) in [
            ("kappa_s", self.stiffness),
            ("mu", self.friction),
            ("dt", self.dt),
            ("epsilon", self.epsilon),
        ] {
            if !(v > S::zero()) || !v.is_finite() {
                return Err(CortexError::InvalidParams(format!(
                    "{name} must be positive, got {v}"
                )));
            }
        }
        if self.polymerization_speed < S::zero() || !self.polymerization_speed.is_finite() {
            return Err(CortexError::InvalidParams(format!(
                "v must be nonnegative, got {}",
                self.polymerization_speed
            )));
        }
        if self.spread < S::zero() || !self.spread.is_finite() {
            return Err(CortexError::InvalidParams(format!(
                "spread a must be nonnegative, got {}",
                self.spread
            )));
        }
        if ((self.polarization.norm() - S::one()).abs()) > num(1e-9) {
            return Err(CortexError::InvalidParams(
                "polarization omega must be a unit vector".into(),
            ));
        }
        Ok(())
    }

    /// Radius of the circular free-space equilibrium, `kappa/(2*pi*kappa - p)`.
    pub fn equilibrium_radius(&self) -> S {
        let two_pi = S::PI() + S::PI();
        self.stiffness / (two_pi * self.stiffness - self.pressure)
    }

    /// Circumference of the equilibrium circle; the reference length for the
    /// spread fraction `h = a / circumference`.
    pub fn equilibrium_circumference(&self) -> S {
        (S::PI() + S::PI()) * self.equilibrium_radius()
    }

    /// Spread fraction `h` corresponding to the stored spread `a`.
    pub fn spread_fraction(&self) -> S {
        self.spread / self.equilibrium_circumference()
    }

    /// Sets the spread from the fraction `h` of the equilibrium circumference.
    pub fn with_spread_fraction(mut self, h: S) -> Self {
        self.spread = h * self.equilibrium_circumference();
        self
    }
}

/// Positively oriented circle with `n` nodes.
pub fn make_circle<S: Scalar>(
    n: usize,
    center: Vec2<S>,
    radius: S,
) -> Result<CortexState<S>, CortexError> {
    if !(radius > S::zero()) {
        return Err(CortexError::InvalidParams(format!(
            "radius must be positive, got {radius}"
        )));
    }
    let two_pi = S::PI() + S::PI();
    let positions = (0..n)
        .map(|i| {
            let angle = two_pi * S::from_usize(i).unwrap() / S::from_usize(n.max(1)).unwrap();
            center + Vec2::new(angle.cos(), angle.sin()) * radius
        })
        .collect();
    CortexState::new(positions, S::zero())
}

/// Radius at which the regular `n`-gon is an exact discrete equilibrium of
/// elastic + pressure forces: `kappa / (2 kappa n sin(pi/n) - p cos(pi/n))`.
/// Tends to the continuum radius `kappa/(2 pi kappa - p)` as `O(n^-2)`.
pub fn discrete_equilibrium_radius<S: Scalar>(n: usize, pressure: S, stiffness: S) -> S {
    let n_s = S::from_usize(n).unwrap();
    let theta = S::PI() / n_s;
    stiffness / ((n_s + n_s) * stiffness * theta.sin() - pressure * theta.cos())
}

/// Tension on segment `i -> i+1`: `(|d|/ds - 1)_+ * d/|d|`, zero for
/// slack or degenerate segments.
#[inline]
fn segment_tension<S: Scalar>(a: Vec2<S>, b: Vec2<S>, ds: S) -> Vec2<S> {
    let d = b - a;
    let len = d.norm();
    if len > S::zero() {
        let stretch = len / ds - S::one();
        if stretch > S::zero() {
            return d * (stretch / len);
        }
    }
    Vec2::zero()
}

/// Elastic restoring force per node: `kappa (G_{i+1/2} - G_{i-1/2}) / ds`.
pub fn elastic_force<S: Scalar>(state: &CortexState<S>, stiffness: S) -> Vec<Vec2<S>> {
    let n = state.n();
    let ds = state.ds();
    let pos = state.positions();
    let mut tension = Vec::with_capacity(n);
    for i in 0..n {
        let next = pos[(i + 1) % n];
        tension.push(segment_tension(pos[i], next, ds));
    }
    (0..n)
        .map(|i| {
            let prev = tension[(i + n - 1) % n];
            (tension[i] - prev) * (stiffness / ds)
        })
        .collect()
}

/// Outward pressure force per node: `-p (X_{i+1} - X_{i-1})^perp / (2 ds)`.
pub fn pressure_force<S: Scalar>(state: &CortexState<S>, pressure: S) -> Vec<Vec2<S>> {
    let n = state.n();
    let two_ds = state.ds() + state.ds();
    let pos = state.positions();
    (0..n)
        .map(|i| {
            let diff = pos[(i + 1) % n] - pos[(i + n - 1) % n];
            -(diff.perp()) * (pressure / two_ds)
        })
        .collect()
}

/// Leading and trailing node indices: argmax / argmin of `omega . X_i`,
/// ties broken by the smallest index.
pub fn leading_trailing<S: Scalar>(state: &CortexState<S>, omega: Vec2<S>) -> (usize, usize) {
    let mut i_lead = 0;
    let mut i_trail = 0;
    let mut best = omega.dot(state.positions()[0]);
    let mut worst = best;
    for (i, p) in state.positions().iter().enumerate().skip(1) {
        let proj = omega.dot(*p);
        if proj > best {
            best = proj;
            i_lead = i;
        }
        if proj < worst {
            worst = proj;
            i_trail = i;
        }
    }
    (i_lead, i_trail)
}

#[inline]
fn on_cyclic_arc(i: usize, from: usize, to: usize, n: usize) -> bool {
    // Nodes from `from` to `to` walking in increasing cyclic index order,
    // endpoints included.
    ((i + n - from) % n) <= ((to + n - from) % n)
}

/// Advection of cortex material: `v * 1_arc * (X_{i+1} - X_{i-1}) / (2 ds)`.
/// Returns zeros when the state is unpolarized (`i_lead == i_trail`).
pub fn flow_term<S: Scalar>(
    state: &CortexState<S>,
    speed: S,
    i_lead: usize,
    i_trail: usize,
    arc: FlowArc,
) -> Vec<Vec2<S>> {
    let n = state.n();
    if i_lead == i_trail || speed == S::zero() {
        return vec![Vec2::zero(); n];
    }
    let two_ds = state.ds() + state.ds();
    let pos = state.positions();
    let (from, to) = match arc {
        FlowArc::TrailToLead => (i_trail, i_lead),
        FlowArc::LeadToTrail => (i_lead, i_trail),
    };
    (0..n)
        .map(|i| {
            if on_cyclic_arc(i, from, to, n) {
                (pos[(i + 1) % n] - pos[(i + n - 1) % n]) * (speed / two_ds)
            } else {
                Vec2::zero()
            }
        })
        .collect()
}

/// Discrete mollified delta: cosine-bump weights over the cyclic index
/// distance, renormalized so that `sum_i w_i * ds = 1` holds exactly.
/// Index `k` of the returned vector is the cyclic offset; `a < ds`
/// degenerates to a single-node delta of weight `n`.
pub fn mollified_delta_weights<S: Scalar>(a: S, n: usize) -> Vec<S> {
    let ds = recip_of::<S>(n);
    let mut weights = vec![S::zero(); n];
    if a < ds {
        weights[0] = S::from_usize(n).unwrap();
        return weights;
    }
    let mut total = S::zero();
    for (k, w) in weights.iter_mut().enumerate() {
        let cyc = k.min(n - k);
        let dist = ds * S::from_usize(cyc).unwrap();
        if dist <= a {
            *w = S::one() + (S::PI() * dist / a).cos();
            total += *w;
        }
    }
    let scale = S::one() / (total * ds);
    for w in weights.iter_mut() {
        *w = *w * scale;
    }
    weights
}

/// Reaction force spread around leading and trailing nodes, chosen so the
/// discrete center of mass is invariant in free space:
/// `(v/2) (mid_trail - mid_lead) (delta_a(i - i_lead) + delta_a(i - i_trail))`.
pub fn compensating_force<S: Scalar>(
    state: &CortexState<S>,
    speed: S,
    a: S,
    i_lead: usize,
    i_trail: usize,
) -> Vec<Vec2<S>> {
    let n = state.n();
    if i_lead == i_trail || speed == S::zero() {
        return vec![Vec2::zero(); n];
    }
    let mid_lead = (state.node(i_lead as isize + 1) + state.node(i_lead as isize)) / num(2.0);
    let mid_trail = (state.node(i_trail as isize - 1) + state.node(i_trail as isize)) / num(2.0);
    let pull = (mid_trail - mid_lead) * (speed / num::<S>(2.0));
    let weights = mollified_delta_weights(a, n);
    (0..n)
        .map(|i| {
            let w = weights[(i + n - i_lead) % n] + weights[(i + n - i_trail) % n];
            pull * w
        })
        .collect()
}

/// Per-term force decomposition, used by the solvers and the force audit.
#[derive(Clone, Debug)]
pub struct ForceBreakdown<S> {
    pub flow: Vec<Vec2<S>>,
    pub elastic: Vec<Vec2<S>>,
    pub pressure: Vec<Vec2<S>>,
    pub compensating: Vec<Vec2<S>>,
}

impl<S: Scalar> ForceBreakdown<S> {
    /// Sum of all terms per node (before division by the friction).
    pub fn total(&self) -> Vec<Vec2<S>> {
        (0..self.flow.len())
            .map(|i| self.flow[i] + self.elastic[i] + self.pressure[i] + self.compensating[i])
            .collect()
    }
}

/// Assembles all force terms at `state`. `pressure_mask`, when given, turns
/// the pressure force off on masked nodes (the channel-entry push); no other
/// term is affected.
pub fn force_terms<S: Scalar>(
    state: &CortexState<S>,
    params: &SimParams<S>,
    pressure_mask: Option<&[bool]>,
) -> ForceBreakdown<S> {
    let (i_lead, i_trail) = leading_trailing(state, params.polarization);
    let v = params.polymerization_speed;
    let flow = flow_term(state, v, i_lead, i_trail, params.flow_arc);
    let elastic = elastic_force(state, params.stiffness);
    let mut pressure = pressure_force(state, params.pressure);
    if let Some(mask) = pressure_mask {
        for (f, &off) in pressure.iter_mut().zip(mask) {
            if off {
                *f = Vec2::zero();
            }
        }
    }
    let compensating = if params.compensation {
        compensating_force(state, v, params.spread, i_lead, i_trail)
    } else {
        vec![Vec2::zero(); state.n()]
    };
    ForceBreakdown {
        flow,
        elastic,
        pressure,
        compensating,
    }
}

/// Net force per node (sum of all terms, before division by friction).
pub fn net_force<S: Scalar>(
    state: &CortexState<S>,
    params: &SimParams<S>,
    pressure_mask: Option<&[bool]>,
) -> Vec<Vec2<S>> {
    force_terms(state, params, pressure_mask).total()
}

/// Signed polygon area by the shoelace formula, computed relative to the
/// first node for translation robustness.
pub fn shoelace_area<S: Scalar>(state: &CortexState<S>) -> S {
    let pos = state.positions();
    let origin = pos[0];
    let n = pos.len();
    let mut twice = S::zero();
    for i in 0..n {
        let a = pos[i] - origin;
        let b = pos[(i + 1) % n] - origin;
        twice += a.cross(b);
    }
    twice / num(2.0)
}

/// Total curve length.
pub fn cortex_length<S: Scalar>(state: &CortexState<S>) -> S {
    let pos = state.positions();
    let n = pos.len();
    (0..n).map(|i| (pos[(i + 1) % n] - pos[i]).norm()).sum()
}

/// Energies and shape descriptors of one state.
#[derive(Clone, Copy, Debug, Serialize)]
pub struct EnergyReport<S> {
    pub e_el: S,
    pub e_p: S,
    pub e_obst: S,
    pub e_total: S,
    pub enclosed_area: S,
    pub cortex_length: S,
    /// `4 pi A / L^2`; 1 for a circle, below 1 otherwise.
    pub isoperimetric_ratio: S,
}

impl<S: Scalar> EnergyReport<S> {
    /// Lower bound on the total energy for `p < 2 pi kappa`:
    /// `-kappa^2 pi / (2 pi kappa - p)`.
    pub fn coercivity_bound(pressure: S, stiffness: S) -> S {
        let two_pi = S::PI() + S::PI();
        -(stiffness * stiffness * S::PI()) / (two_pi * stiffness - pressure)
    }

    /// Checks the energy lower bound (tolerance 1e-6); a violation means the
    /// discretization or a solver has gone off the rails.
    pub fn check_coercivity(&self, params: &SimParams<S>, time: S) -> Result<(), CortexError> {
        let bound = Self::coercivity_bound(params.pressure, params.stiffness);
        if self.e_total < bound - num(1e-6) {
            return Err(CortexError::CoercivityViolated {
                energy: self.e_total.to_f64().unwrap_or(f64::NAN),
                bound: bound.to_f64().unwrap_or(f64::NAN),
                time: time.to_f64().unwrap_or(f64::NAN),
            });
        }
        Ok(())
    }
}

/// Evaluates all energy terms; the obstacle term is zero unless a softened
/// obstacle is supplied.
pub fn total_energy<S: Scalar>(
    state: &CortexState<S>,
    params: &SimParams<S>,
    obstacle: Option<&SoftObstacle<S>>,
) -> EnergyReport<S> {
    let n = state.n();
    let ds = state.ds();
    let pos = state.positions();

    let mut e_el = S::zero();
    let mut length = S::zero();
    for i in 0..n {
        let seg = (pos[(i + 1) % n] - pos[i]).norm();
        length += seg;
        let stretch = seg / ds - S::one();
        if stretch > S::zero() {
            e_el += stretch * stretch;
        }
    }
    e_el = e_el * params.stiffness * ds / num(2.0);

    let area = shoelace_area(state);
    let e_p = -params.pressure * area;

    let e_obst = match obstacle {
        Some(obs) => {
            let mut acc = S::zero();
            for p in pos {
                acc += obs.value(*p);
            }
            acc * ds
        }
        None => S::zero(),
    };

    let four_pi = num::<S>(4.0) * S::PI();
    EnergyReport {
        e_el,
        e_p,
        e_obst,
        e_total: e_el + e_p + e_obst,
        enclosed_area: area,
        cortex_length: length,
        isoperimetric_ratio: four_pi * area / (length * length),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const P: f64 = 3.2;

    fn params() -> SimParams<f64> {
        SimParams::default()
    }

    #[test]
    fn make_circle_rejects_small_n() {
        assert!(matches!(
            make_circle::<f64>(4, Vec2::zero(), 0.3),
            Err(CortexError::TooFewNodes { .. })
        ));
    }

    #[test]
    fn discrete_equilibrium_balances_forces() {
        let n = 200;
        let r_n = discrete_equilibrium_radius::<f64>(n, P, 1.0);
        let state = make_circle(n, Vec2::zero(), r_n).unwrap();
        let el = elastic_force(&state, 1.0);
        let pr = pressure_force(&state, P);
        for i in 0..n {
            let net = el[i] + pr[i];
            assert!(net.norm() < 1e-8, "node {i}: residual {:e}", net.norm());
        }
        // The discrete radius converges to the continuum one at O(N^-2).
        let r_star = 1.0 / (2.0 * std::f64::consts::PI - P);
        assert!((r_n - r_star).abs() / r_star < 1e-4);
        assert!((r_star - 0.32434).abs() < 5e-6);
    }

    #[test]
    fn elastic_force_is_zero_at_rest_length() {
        let n = 64;
        // Regular polygon with every chord exactly ds long.
        let ds = 1.0 / n as f64;
        let radius = ds / (2.0 * (std::f64::consts::PI / n as f64).sin());
        let state = make_circle(n, Vec2::new(0.3, -0.2), radius).unwrap();
        for f in elastic_force(&state, 1.0) {
            assert!(f.norm() < 1e-10);
        }
    }

    #[test]
    fn elastic_force_magnitude_on_stretched_circle() {
        let n = 200;
        let r_star = 1.0 / (2.0 * std::f64::consts::PI - P);
        let state = make_circle(n, Vec2::zero(), r_star).unwrap();
        let two_pi = 2.0 * std::f64::consts::PI;
        let analytic = two_pi * (two_pi * r_star - 1.0);
        for (i, f) in elastic_force(&state, 1.0).iter().enumerate() {
            let rel = (f.norm() - analytic).abs() / analytic;
            assert!(rel < 1e-3, "node {i}: rel {rel:e}");
            // Points inward.
            let inward = -(state.positions()[i].normalized().unwrap());
            assert!(f.normalized().unwrap().dot(inward) > 0.999);
        }
    }

    #[test]
    fn pressure_balances_elastic_on_equilibrium_circle() {
        let n = 200;
        let r_star = 1.0 / (2.0 * std::f64::consts::PI - P);
        let state = make_circle(n, Vec2::zero(), r_star).unwrap();
        let el = elastic_force(&state, 1.0);
        let pr = pressure_force(&state, P);
        for i in 0..n {
            let rel = (el[i] + pr[i]).norm() / pr[i].norm();
            assert!(rel < 1e-3, "node {i}: rel {rel:e}");
            let outward = state.positions()[i].normalized().unwrap();
            assert!(pr[i].normalized().unwrap().dot(outward) > 0.999);
        }
    }

    #[test]
    fn pressure_sums_to_zero() {
        let state = make_circle(157, Vec2::new(0.4, 0.7), 0.21).unwrap();
        let total = pressure_force(&state, P)
            .into_iter()
            .fold(Vec2::zero(), |acc, f| acc + f);
        assert!(total.norm() < 1e-10, "telescoping sum {:e}", total.norm());
    }

    #[test]
    fn pressure_on_degenerate_state_is_zero() {
        let state =
            CortexState::new(vec![Vec2::new(0.1, 0.2); 16], 0.0).unwrap();
        for f in pressure_force(&state, P) {
            assert_eq!(f.norm(), 0.0);
        }
        for f in elastic_force(&state, 1.0) {
            assert_eq!(f.norm(), 0.0);
        }
    }

    fn fd_gradient(
        state: &CortexState<f64>,
        energy: impl Fn(&CortexState<f64>) -> f64,
    ) -> Vec<Vec2<f64>> {
        // Central differences w.r.t. the L2(ds) inner product.
        let h = 1e-6;
        let ds = state.ds();
        let n = state.n();
        let mut grad = Vec::with_capacity(n);
        for i in 0..n {
            let mut plus = state.clone();
            let mut minus = state.clone();
            plus.positions[i].x += h;
            minus.positions[i].x -= h;
            let gx = (energy(&plus) - energy(&minus)) / (2.0 * h * ds);
            let mut plus = state.clone();
            let mut minus = state.clone();
            plus.positions[i].y += h;
            minus.positions[i].y -= h;
            let gy = (energy(&plus) - energy(&minus)) / (2.0 * h * ds);
            grad.push(Vec2::new(gx, gy));
        }
        grad
    }

    fn wobbly_circle(n: usize, base: f64) -> CortexState<f64> {
        let positions = (0..n)
            .map(|i| {
                let th = 2.0 * std::f64::consts::PI * i as f64 / n as f64;
                let r = base * (1.0 + 0.05 * (3.0 * th).cos() + 0.03 * (2.0 * th).sin());
                Vec2::new(r * th.cos(), r * th.sin())
            })
            .collect();
        CortexState::new(positions, 0.0).unwrap()
    }

    #[test]
    fn forces_match_finite_difference_gradients() {
        // All-stretched state keeps the elastic energy away from its kink.
        let state = wobbly_circle(48, 0.4);
        let p = params();

        let el = elastic_force(&state, p.stiffness);
        let grad_el = fd_gradient(&state, |s| total_energy(s, &p, None).e_el);
        for i in 0..state.n() {
            let err = (el[i] + grad_el[i]).norm() / el[i].norm().max(1.0);
            assert!(err < 1e-5, "elastic node {i}: {err:e}");
        }

        let pr = pressure_force(&state, p.pressure);
        let grad_p = fd_gradient(&state, |s| total_energy(s, &p, None).e_p);
        for i in 0..state.n() {
            let err = (pr[i] + grad_p[i]).norm() / pr[i].norm().max(1.0);
            assert!(err < 1e-5, "pressure node {i}: {err:e}");
        }
    }

    #[test]
    fn leading_trailing_on_circle() {
        let state = make_circle(200, Vec2::zero(), 0.3).unwrap();
        let (i_lead, i_trail) = leading_trailing(&state, Vec2::new(-1.0, 0.0));
        assert_eq!((i_lead, i_trail), (100, 0));
    }

    #[test]
    fn leading_trailing_full_tie() {
        let positions: Vec<_> = (0..16).map(|i| Vec2::new(0.0, i as f64)).collect();
        let mut pts = positions;
        pts[3] = Vec2::new(0.0, -5.0); // keep it a valid list, ties on x only
        let state = CortexState::new(pts, 0.0).unwrap();
        let (i_lead, i_trail) = leading_trailing(&state, Vec2::new(1.0, 0.0));
        assert_eq!((i_lead, i_trail), (0, 0));
    }

    #[test]
    fn leading_trailing_matches_exhaustive_scan() {
        let state = wobbly_circle(97, 0.33);
        let omega = Vec2::new(0.6, 0.8);
        let (i_lead, i_trail) = leading_trailing(&state, omega);
        let mut best = (0, f64::MIN);
        let mut worst = (0, f64::MAX);
        for (i, p) in state.positions().iter().enumerate() {
            let v = omega.dot(*p);
            if v > best.1 {
                best = (i, v);
            }
            if v < worst.1 {
                worst = (i, v);
            }
        }
        assert_eq!((i_lead, i_trail), (best.0, worst.0));
    }

    #[test]
    fn flow_supported_on_arc_only() {
        let state = make_circle(200, Vec2::zero(), 0.32).unwrap();
        let (i_lead, i_trail) = leading_trailing(&state, Vec2::new(-1.0, 0.0));
        let flow = flow_term(&state, 2.0, i_lead, i_trail, FlowArc::TrailToLead);
        let expected_mag = 2.0 * 0.32 * 200.0 * (2.0 * std::f64::consts::PI / 200.0).sin();
        for (i, f) in flow.iter().enumerate() {
            let on_arc = i <= 100;
            if on_arc {
                let rel = (f.norm() - expected_mag).abs() / expected_mag;
                assert!(rel < 1e-3, "node {i}: {rel}");
            } else {
                assert_eq!(f.norm(), 0.0, "node {i} should be outside the arc");
            }
        }
        // v = 0 and unpolarized cases degenerate to zero.
        assert!(flow_term(&state, 0.0, i_lead, i_trail, FlowArc::TrailToLead)
            .iter()
            .all(|f| f.norm() == 0.0));
        assert!(flow_term(&state, 2.0, 7, 7, FlowArc::TrailToLead)
            .iter()
            .all(|f| f.norm() == 0.0));
    }

    #[test]
    fn mollified_delta_normalization() {
        let n = 200;
        let ds = 1.0 / n as f64;
        for a in [0.01, 0.04, 0.1, 0.8] {
            let w = mollified_delta_weights::<f64>(a, n);
            let total: f64 = w.iter().map(|wi| wi * ds).sum();
            assert!((total - 1.0).abs() < 1e-14, "a={a}: sum {total}");
        }
        // a = ds: single node of weight n.
        let w = mollified_delta_weights::<f64>(ds, n);
        assert!((w[0] - n as f64).abs() < 1e-9);
        assert!(w[1].abs() < 1e-12 && w[n - 1].abs() < 1e-12);
        // Symmetry in the cyclic offset.
        let w = mollified_delta_weights::<f64>(0.04, n);
        for k in 1..n {
            assert_eq!(w[k], w[n - k], "k={k}");
        }
    }

    #[test]
    fn compensation_cancels_flow_mean() {
        let state = wobbly_circle(200, 0.33);
        let (i_lead, i_trail) = leading_trailing(&state, Vec2::new(-1.0, 0.0));
        let v = 2.0;
        let a = 0.04;
        let flow = flow_term(&state, v, i_lead, i_trail, FlowArc::TrailToLead);
        let comp = compensating_force(&state, v, a, i_lead, i_trail);
        let ds = state.ds();
        let mut total = Vec2::zero();
        for i in 0..state.n() {
            total += (flow[i] + comp[i]) * ds;
        }
        assert!(total.norm() < 1e-12, "mean force {:e}", total.norm());
        // v = 0 degenerates to zero.
        assert!(compensating_force(&state, 0.0, a, i_lead, i_trail)
            .iter()
            .all(|f| f.norm() == 0.0));
    }

    #[test]
    fn circle_energies_match_closed_forms() {
        let n = 200;
        let r_star = 1.0 / (2.0 * std::f64::consts::PI - P);
        let state = make_circle(n, Vec2::zero(), r_star).unwrap();
        let report = total_energy(&state, &params(), None);

        let two_pi = 2.0 * std::f64::consts::PI;
        let e_el_cont = 0.5 * (two_pi * r_star - 1.0).powi(2);
        let e_p_cont = -P * std::f64::consts::PI * r_star * r_star;
        assert!((report.e_el - e_el_cont).abs() / e_el_cont.abs() < 5e-3);
        assert!((report.e_p - e_p_cont).abs() / e_p_cont.abs() < 5e-3);
        assert!((e_el_cont - 0.53860).abs() < 5e-5);
        assert!((e_p_cont + 1.05756).abs() < 5e-5);
        assert!((e_el_cont + e_p_cont + 0.51896).abs() < 1e-4);

        // Lemma-style lower bound.
        let bound = EnergyReport::coercivity_bound(P, 1.0);
        assert!((bound + 1.01894).abs() < 1e-5);
        assert!(report.e_total >= bound - 1e-6);

        // Exact polygon area identity.
        let poly = 0.5 * n as f64 * r_star * r_star * (two_pi / n as f64).sin();
        assert!((report.enclosed_area - poly).abs() <= 1e-12 * poly);
        assert!(report.isoperimetric_ratio <= 1.0 + 1e-12);
        assert!(report.isoperimetric_ratio > 0.999);
    }

    #[test]
    fn energy_translation_invariance() {
        let p = params();
        let state = wobbly_circle(128, 0.3);
        let base = total_energy(&state, &p, None);
        let shift = Vec2::new(17.25, -3.5);
        let moved = CortexState::new(
            state.positions().iter().map(|q| *q + shift).collect(),
            0.0,
        )
        .unwrap();
        let shifted = total_energy(&moved, &p, None);
        assert!((base.e_total - shifted.e_total).abs() < 1e-10);
        assert!((base.enclosed_area - shifted.enclosed_area).abs() < 1e-10);
    }

    #[test]
    fn orientation_validation() {
        let ccw = make_circle(32, Vec2::zero(), 0.3).unwrap();
        ccw.validate_orientation().unwrap();
        let cw = CortexState::new(
            ccw.positions().iter().rev().copied().collect(),
            0.0,
        )
        .unwrap();
        assert!(matches!(
            cw.validate_orientation(),
            Err(CortexError::NegativeOrientation { .. })
        ));
    }

    #[test]
    fn params_gate_on_pressure_bound() {
        let mut p = params();
        p.pressure = 6.4;
        assert!(p.validate().is_err());
        p.pressure = 3.2;
        p.validate().unwrap();
    }

    #[test]
    fn push_mask_only_touches_pressure() {
        let state = wobbly_circle(64, 0.35);
        let p = params();
        let mut mask = vec![false; 64];
        for m in mask.iter_mut().take(16) {
            *m = true;
        }
        let plain = force_terms(&state, &p, None);
        let masked = force_terms(&state, &p, Some(&mask));
        for i in 0..64 {
            assert_eq!(plain.flow[i], masked.flow[i]);
            assert_eq!(plain.elastic[i], masked.elastic[i]);
            assert_eq!(plain.compensating[i], masked.compensating[i]);
            if mask[i] {
                assert_eq!(masked.pressure[i], Vec2::zero());
            } else {
                assert_eq!(plain.pressure[i], masked.pressure[i]);
            }
        }
    }
}
