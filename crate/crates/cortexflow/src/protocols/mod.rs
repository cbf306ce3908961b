//! Experiment protocols: free-space relaxation, the channel-entry pushing
//! protocol, migration metrics, and the parameter sweep.

mod sweep;

pub use sweep::{sweep, SweepCell, SweepGrid, SweepProtocol, SweepResult};

use std::sync::Arc;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::cortex::{
    leading_trailing, make_circle, total_energy, CortexError, CortexState, EnergyReport, SimParams,
};
use crate::geometry::{ChannelGeometry, GeometryError, SoftObstacle};
use crate::scalar::{num, Scalar};
use crate::solvers::{mm_step, AdaptiveStepper, MMConfig, SolverError, StepReport};
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("cell failed to enter the channel within {elapsed} time units")]
    EntryFailed {
        elapsed: f64,
        partial: Box<Trajectory<f64>>,
    },
    #[error("node {node} left the admissible domain at t = {time}")]
    Penetration { node: usize, time: f64 },
    #[error("requested time window contains fewer than two frames")]
    EmptyWindow,
    #[error("protocol misuse: {0}")]
    Invalid(String),
    #[error(transparent)]
    Solver(#[from] SolverError),
    #[error(transparent)]
    Cortex(#[from] CortexError),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Protocol phase labels recorded along a trajectory.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Phase {
    Relax,
    Push,
    Run,
}

#[derive(Clone, Copy, Debug)]
pub struct PhaseMark<S> {
    pub phase: Phase,
    pub start_time: S,
}

/// Recorded run: subsampled frames plus per-frame derived quantities.
#[derive(Clone, Debug)]
pub struct Trajectory<S> {
    pub frames: Vec<CortexState<S>>,
    pub energies: Vec<EnergyReport<S>>,
    pub coms: Vec<Vec2<S>>,
    pub params: SimParams<S>,
    pub geometry: Arc<ChannelGeometry<S>>,
    pub phases: Vec<PhaseMark<S>>,
    /// Time at which the cell was first entirely inside the channel.
    pub entered_at: Option<S>,
}

impl<S: Scalar> Trajectory<S> {
    pub fn start_time(&self) -> S {
        self.frames.first().map(|f| f.time()).unwrap_or(S::zero())
    }

    pub fn end_time(&self) -> S {
        self.frames.last().map(|f| f.time()).unwrap_or(S::zero())
    }

    /// Frame index range whose times fall inside `[t0, t1]`.
    fn window_indices(&self, t0: S, t1: S) -> Option<(usize, usize)> {
        let first = self.frames.iter().position(|f| f.time() >= t0)?;
        let last = self.frames.iter().rposition(|f| f.time() <= t1)?;
        (last > first).then_some((first, last))
    }
}

/// Which integrator drives a protocol.
#[derive(Clone, Copy, Debug)]
pub enum SolverChoice<S> {
    Explicit,
    MinimizingMovement(MMConfig<S>),
}

/// Knobs shared by all protocols.
#[derive(Clone, Copy, Debug)]
pub struct RunOptions<S> {
    /// Record a frame every this many accepted steps.
    pub frame_stride: usize,
    pub solver: SolverChoice<S>,
}

impl<S: Scalar> Default for RunOptions<S> {
    fn default() -> Self {
        Self {
            frame_stride: 500,
            solver: SolverChoice::Explicit,
        }
    }
}

/// Channel-entry protocol parameters.
#[derive(Clone, Copy, Debug)]
pub struct EntryProtocolConfig<S> {
    /// Size of the pressurized cap spared around the leading node while
    /// pushing, as a fraction of all nodes; the pressure is disabled on the
    /// rest of the not-yet-entered rear region. Must lie in (0, 0.5).
    pub push_fraction: S,
    /// Channel entrance coordinate; must match the geometry's entrance.
    pub entry_x: S,
    /// Free relaxation time before pushing starts.
    pub relaxation_time: S,
    /// Give up pushing after this much time in the push phase.
    pub max_push_time: S,
    /// Initial cell center; derived from the entrance when absent.
    pub start_center: Option<Vec2<S>>,
}

impl<S: Scalar> Default for EntryProtocolConfig<S> {
    fn default() -> Self {
        Self {
            push_fraction: num(0.25),
            entry_x: S::zero(),
            relaxation_time: num(1.5),
            max_push_time: num(25.0),
            start_center: None,
        }
    }
}

impl<S: Scalar> EntryProtocolConfig<S> {
    pub fn validate(&self) -> Result<(), ProtocolError> {
        if !(self.push_fraction > S::zero() && self.push_fraction < num(0.5)) {
            return Err(ProtocolError::Invalid(
                "push_fraction must lie in (0, 0.5)".into(),
            ));
        }
        for (name, v) in [
            ("relaxation_time", self.relaxation_time),
            ("max_push_time", self.max_push_time),
        ] {
            if v < S::zero() || !v.is_finite() {
                return Err(ProtocolError::Invalid(format!(
                    "{name} must be nonnegative"
                )));
            }
        }
        Ok(())
    }
}

/// Circle with a seeded, smooth random radial perturbation.
pub fn perturbed_circle<S: Scalar>(
    n: usize,
    center: Vec2<S>,
    radius: S,
    rel_amplitude: S,
    seed: u64,
) -> Result<CortexState<S>, CortexError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let modes: Vec<(S, S)> = (2..=5)
        .map(|_| {
            let amp: f64 = rng.gen_range(-1.0..1.0);
            let phase: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
            (num::<S>(amp / 4.0), num::<S>(phase))
        })
        .collect();
    let two_pi = S::PI() + S::PI();
    let positions = (0..n)
        .map(|i| {
            let th = two_pi * S::from_usize(i).unwrap() / S::from_usize(n).unwrap();
            let mut bump = S::zero();
            for (k, (amp, phase)) in modes.iter().enumerate() {
                let freq = S::from_usize(k + 2).unwrap();
                bump += *amp * (freq * th + *phase).cos();
            }
            let r = radius * (S::one() + rel_amplitude * bump);
            center + Vec2::new(th.cos(), th.sin()) * r
        })
        .collect();
    CortexState::new(positions, S::zero())
}

enum Engine<S: Scalar> {
    Explicit(AdaptiveStepper<S>),
    Mm {
        cfg: MMConfig<S>,
        obstacle: Option<SoftObstacle<S>>,
    },
}

struct Driver<S: Scalar> {
    params: SimParams<S>,
    geom: Arc<ChannelGeometry<S>>,
    engine: Engine<S>,
    frame_stride: usize,
    steps_since_frame: usize,
    frames: Vec<CortexState<S>>,
    energies: Vec<EnergyReport<S>>,
    coms: Vec<Vec2<S>>,
    check_penetration: bool,
}

impl<S: Scalar> Driver<S> {
    fn new(
        params: SimParams<S>,
        geom: Arc<ChannelGeometry<S>>,
        opts: &RunOptions<S>,
        initial: &CortexState<S>,
    ) -> Result<Self, ProtocolError> {
        let engine = match opts.solver {
            SolverChoice::Explicit => Engine::Explicit(AdaptiveStepper::new(params.dt)),
            SolverChoice::MinimizingMovement(cfg) => {
                let obstacle = if geom.is_free() {
                    None
                } else {
                    Some(build_obstacle(&geom, cfg.delta, initial)?)
                };
                Engine::Mm { cfg, obstacle }
            }
        };
        // The hard projection only tracks walls through the epsilon tube;
        // the soft solver only through the potential.
        let check_penetration = !geom.is_free() && matches!(opts.solver, SolverChoice::Explicit);
        let mut driver = Self {
            params,
            geom,
            engine,
            frame_stride: opts.frame_stride.max(1),
            steps_since_frame: 0,
            frames: Vec::new(),
            energies: Vec::new(),
            coms: Vec::new(),
            check_penetration,
        };
        driver.record(initial)?;
        Ok(driver)
    }

    fn record(&mut self, state: &CortexState<S>) -> Result<(), ProtocolError> {
        let energy = total_energy(state, &self.params, None);
        energy.check_coercivity(&self.params, state.time())?;
        if self.check_penetration {
            for (i, p) in state.positions().iter().enumerate() {
                if !self.geom.inside(*p) {
                    return Err(ProtocolError::Penetration {
                        node: i,
                        time: state.time().to_f64().unwrap_or(f64::NAN),
                    });
                }
            }
        }
        self.frames.push(state.clone());
        self.energies.push(energy);
        self.coms.push(state.center_of_mass());
        Ok(())
    }

    fn step(
        &mut self,
        state: &CortexState<S>,
        mask: Option<&[bool]>,
    ) -> Result<(CortexState<S>, StepReport<S>), ProtocolError> {
        let out = match &mut self.engine {
            Engine::Explicit(stepper) => stepper.step(state, &self.params, &self.geom, mask)?,
            Engine::Mm { cfg, obstacle } => {
                if mask.is_some() {
                    return Err(ProtocolError::Invalid(
                        "the minimizing-movement solver does not support the pushing phase".into(),
                    ));
                }
                mm_step(state, &self.params, obstacle.as_ref(), cfg)?
            }
        };
        self.steps_since_frame += 1;
        if self.steps_since_frame >= self.frame_stride {
            self.steps_since_frame = 0;
            self.record(&out.0)?;
        }
        Ok(out)
    }

    fn finalize(
        mut self,
        last: &CortexState<S>,
        phases: Vec<PhaseMark<S>>,
        entered_at: Option<S>,
    ) -> Result<Trajectory<S>, ProtocolError> {
        if self
            .frames
            .last()
            .map(|f| f.time() < last.time())
            .unwrap_or(true)
        {
            self.record(last)?;
        }
        Ok(Trajectory {
            frames: self.frames,
            energies: self.energies,
            coms: self.coms,
            params: self.params,
            geometry: self.geom,
            phases,
            entered_at,
        })
    }
}

fn build_obstacle<S: Scalar>(
    geom: &ChannelGeometry<S>,
    delta: S,
    initial: &CortexState<S>,
) -> Result<SoftObstacle<S>, ProtocolError> {
    let mut x_lo = S::infinity();
    let mut x_hi = S::neg_infinity();
    let mut y_hi = S::zero();
    for p in initial.positions() {
        x_lo = x_lo.min(p.x);
        x_hi = x_hi.max(p.x);
        y_hi = y_hi.max(p.y.abs());
    }
    let margin = num::<S>(0.3);
    if let Some(spec) = geom.ratchet_spec() {
        x_hi = x_hi.max(geom.entrance().unwrap_or(S::zero()) + spec.span());
    }
    let y_extent = geom
        .min_half_width()
        .map(|w| w * num(3.0))
        .unwrap_or(S::zero())
        .max(y_hi + margin);
    Ok(SoftObstacle::build(
        geom,
        delta,
        (x_lo - margin, x_hi + margin),
        (-y_extent, y_extent),
    )?)
}

/// Runs the cortex from a slightly inflated circle until `t_final`, or
/// earlier once the maximal node speed falls below 1e-6.
fn relax<S: Scalar>(
    params: &SimParams<S>,
    n: usize,
    geom: Arc<ChannelGeometry<S>>,
    t_final: S,
    opts: &RunOptions<S>,
) -> Result<Trajectory<S>, ProtocolError> {
    params.validate()?;
    let r0 = params.equilibrium_radius() * num(1.05);
    let state = make_circle(n, Vec2::zero(), r0)?;
    state.validate_orientation()?;
    let phases = vec![PhaseMark {
        phase: Phase::Relax,
        start_time: S::zero(),
    }];
    let mut driver = Driver::new(*params, geom, opts, &state)?;
    let quiescent_rate = num::<S>(1e-6);
    let mut current = state;
    while current.time() < t_final {
        let t_before = current.time();
        let (next, report) = driver.step(&current, None)?;
        let dt = next.time() - t_before;
        let rate = report.max_displacement / dt;
        current = next;
        if rate < quiescent_rate {
            break;
        }
    }
    driver.finalize(&current, phases, None)
}

/// Free-space relaxation / migration protocol.
pub fn relax_free<S: Scalar>(
    params: &SimParams<S>,
    n: usize,
    t_final: S,
    opts: &RunOptions<S>,
) -> Result<Trajectory<S>, ProtocolError> {
    relax(params, n, Arc::new(ChannelGeometry::free()), t_final, opts)
}

/// Pressure mask for the pushing phase: the rear region that has not yet
/// passed the entrance loses its pressure, except for a spared cap of
/// `round(push_fraction * n)` nodes around the leading node that keeps
/// feeding material into the channel mouth. A fixed-size patch cannot
/// deflate the rear of the cell once most of its material has piled up
/// against the entrance face, which is why the region is spatial.
pub fn push_mask<S: Scalar>(
    state: &CortexState<S>,
    params: &SimParams<S>,
    entry_x: S,
    push_fraction: S,
) -> Vec<bool> {
    let n = state.n();
    let (i_lead, _) = leading_trailing(state, params.polarization);
    let spared = (push_fraction * S::from_usize(n).unwrap())
        .round()
        .to_usize()
        .unwrap_or(0)
        .clamp(1, n / 2);
    let margin = state.mean_segment_length();
    let mut mask = vec![false; n];
    for (i, p) in state.positions().iter().enumerate() {
        if p.x <= entry_x + margin {
            let d = (i as isize - i_lead as isize).rem_euclid(n as isize) as usize;
            if d.min(n - d) > spared / 2 {
                mask[i] = true;
            }
        }
    }
    mask
}

fn entirely_inside<S: Scalar>(state: &CortexState<S>, entry_x: S) -> bool {
    let margin = state.mean_segment_length();
    state.positions().iter().all(|p| p.x > entry_x + margin)
}

/// Channel protocol: relax near the opening, push the cell in by switching
/// the pressure off around the trailing end, release once every node is past
/// the entrance, then run freely until `t_final`.
///
/// Fails with [`ProtocolError::EntryFailed`] (carrying the partial
/// trajectory) when the cell is not entirely inside within `max_push_time`.
pub fn run_channel<S: Scalar>(
    params: &SimParams<S>,
    n: usize,
    geom: Arc<ChannelGeometry<S>>,
    entry: &EntryProtocolConfig<S>,
    t_final: S,
    opts: &RunOptions<S>,
) -> Result<Trajectory<S>, ProtocolError> {
    params.validate()?;
    entry.validate()?;
    if geom.is_free() {
        return Err(ProtocolError::Invalid(
            "channel protocol needs walls; geometry is free space".into(),
        ));
    }
    let Some(entrance) = geom.entrance() else {
        return Err(ProtocolError::Invalid(
            "channel protocol needs a geometry with an entrance".into(),
        ));
    };
    if (entrance - entry.entry_x).abs() > num(1e-9) {
        return Err(ProtocolError::Invalid(format!(
            "entry_x = {} does not match the geometry entrance {}",
            entry.entry_x, entrance
        )));
    }
    if !matches!(opts.solver, SolverChoice::Explicit) {
        return Err(ProtocolError::Invalid(
            "the channel protocol runs on the explicit projected solver".into(),
        ));
    }

    // Keep the projection tube well below the channel half-width, else the
    // tubes of the two walls overlap and freeze the cell width at entry.
    let mut params_run = *params;
    if let Some(w_min) = geom.min_half_width() {
        params_run.epsilon = params.epsilon.min(num::<S>(0.3) * w_min);
    }

    let r0 = params_run.equilibrium_radius() * num(1.05);
    let center = entry
        .start_center
        .unwrap_or_else(|| Vec2::new(entry.entry_x - r0 * num::<S>(1.2), S::zero()));
    let state = make_circle(n, center, r0)?;
    state.validate_orientation()?;

    let mut phases = vec![PhaseMark {
        phase: Phase::Relax,
        start_time: S::zero(),
    }];
    let mut driver = Driver::new(params_run, geom, opts, &state)?;

    // Phase 1: free relaxation in the reservoir.
    let mut current = state;
    while current.time() < entry.relaxation_time {
        let (next, _) = driver.step(&current, None)?;
        current = next;
    }

    // Phase 2: push until entirely inside. The trailing node is re-located
    // every step so the pressure-free patch follows the rear of the cell.
    phases.push(PhaseMark {
        phase: Phase::Push,
        start_time: current.time(),
    });
    let push_start = current.time();
    let entered_at;
    loop {
        if entirely_inside(&current, entry.entry_x) {
            entered_at = current.time();
            break;
        }
        if current.time() - push_start > entry.max_push_time {
            let elapsed = (current.time() - push_start).to_f64().unwrap_or(f64::NAN);
            let partial = driver.finalize(&current, phases, None)?;
            return Err(ProtocolError::EntryFailed {
                elapsed,
                partial: Box::new(demote(partial)),
            });
        }
        let mask = push_mask(&current, &params_run, entry.entry_x, entry.push_fraction);
        let (next, _) = driver.step(&current, Some(&mask))?;
        current = next;
    }

    // Phase 3: normal dynamics; pushing is never re-enabled.
    phases.push(PhaseMark {
        phase: Phase::Run,
        start_time: current.time(),
    });
    while current.time() < t_final {
        let (next, _) = driver.step(&current, None)?;
        current = next;
    }

    driver.finalize(&current, phases, Some(entered_at))
}

/// Mean x-velocity of the center of mass over `[t0, t1]`, measured between
/// the first and last recorded frames inside the window.
pub fn mean_speed<S: Scalar>(traj: &Trajectory<S>, window: (S, S)) -> Result<S, ProtocolError> {
    Ok(mean_velocity(traj, window)?.x)
}

/// Mean COM velocity vector over `[t0, t1]`.
pub fn mean_velocity<S: Scalar>(
    traj: &Trajectory<S>,
    window: (S, S),
) -> Result<Vec2<S>, ProtocolError> {
    let (first, last) = traj
        .window_indices(window.0, window.1)
        .ok_or(ProtocolError::EmptyWindow)?;
    let dt = traj.frames[last].time() - traj.frames[first].time();
    if !(dt > S::zero()) {
        return Err(ProtocolError::EmptyWindow);
    }
    Ok((traj.coms[last] - traj.coms[first]) / dt)
}

/// Instantaneous x-velocity of the COM between consecutive frames:
/// `(t_mid, vx)` pairs.
pub fn speed_series<S: Scalar>(traj: &Trajectory<S>) -> Vec<(S, S)> {
    let mut out = Vec::new();
    for k in 0..traj.frames.len().saturating_sub(1) {
        let t0 = traj.frames[k].time();
        let t1 = traj.frames[k + 1].time();
        let dt = t1 - t0;
        if dt > S::zero() {
            let vx = (traj.coms[k + 1].x - traj.coms[k].x) / dt;
            out.push(((t0 + t1) / num(2.0), vx));
        }
    }
    out
}

/// Measurement window skipping the leading fraction of the post-entry time.
pub fn post_entry_window<S: Scalar>(traj: &Trajectory<S>, skip_fraction: S) -> Option<(S, S)> {
    let t_entry = traj.entered_at?;
    let t_end = traj.end_time();
    if !(t_end > t_entry) {
        return None;
    }
    Some((t_entry + (t_end - t_entry) * skip_fraction, t_end))
}

/// Lossy downcast of a trajectory for error reporting.
fn demote<S: Scalar>(traj: Trajectory<S>) -> Trajectory<f64> {
    let f = |x: S| x.to_f64().unwrap_or(f64::NAN);
    let as64 = |v: Vec2<S>| Vec2::new(f(v.x), f(v.y));
    Trajectory {
        frames: traj
            .frames
            .iter()
            .map(|fr| {
                CortexState::new(
                    fr.positions().iter().map(|p| as64(*p)).collect(),
                    f(fr.time()),
                )
                .expect("finite frame")
            })
            .collect(),
        energies: traj
            .energies
            .iter()
            .map(|e| EnergyReport {
                e_el: f(e.e_el),
                e_p: f(e.e_p),
                e_obst: f(e.e_obst),
                e_total: f(e.e_total),
                enclosed_area: f(e.enclosed_area),
                cortex_length: f(e.cortex_length),
                isoperimetric_ratio: f(e.isoperimetric_ratio),
            })
            .collect(),
        coms: traj.coms.iter().map(|c| as64(*c)).collect(),
        params: SimParams {
            pressure: f(traj.params.pressure),
            stiffness: f(traj.params.stiffness),
            friction: f(traj.params.friction),
            polymerization_speed: f(traj.params.polymerization_speed),
            spread: f(traj.params.spread),
            polarization: as64(traj.params.polarization),
            dt: f(traj.params.dt),
            epsilon: f(traj.params.epsilon),
            compensation: traj.params.compensation,
            flow_arc: traj.params.flow_arc,
        },
        geometry: Arc::new(ChannelGeometry::free()),
        phases: traj
            .phases
            .iter()
            .map(|m| PhaseMark {
                phase: m.phase,
                start_time: f(m.start_time),
            })
            .collect(),
        entered_at: traj.entered_at.map(f),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relax_converges_to_equilibrium_circle() {
        let params = SimParams::<f64> {
            polymerization_speed: 0.0,
            ..SimParams::default()
        };
        let opts = RunOptions {
            frame_stride: 200,
            ..RunOptions::default()
        };
        let traj = relax_free(&params, 64, 10.0, &opts).unwrap();
        let last = traj.frames.last().unwrap();
        let com = last.center_of_mass();
        let r_star = params.equilibrium_radius();
        for p in last.positions() {
            let r = (*p - com).norm();
            assert!((r - r_star).abs() / r_star < 0.01, "radius {r}");
        }
        let report = traj.energies.last().unwrap();
        assert!(report.isoperimetric_ratio > 0.999);
    }

    #[test]
    fn mean_speed_examples() {
        // Hand-built frames translating uniformly.
        let params = SimParams::<f64>::default();
        let geom = Arc::new(ChannelGeometry::free());
        let mk = |t: f64, shift: f64| {
            let st = make_circle(32, Vec2::new(shift, 0.0), 0.3).unwrap();
            CortexState::new(st.positions().to_vec(), t).unwrap()
        };
        let frames = vec![mk(0.0, 0.0), mk(1.0, 0.25), mk(2.0, 0.5)];
        let coms: Vec<_> = frames.iter().map(|f| f.center_of_mass()).collect();
        let energies: Vec<_> = frames
            .iter()
            .map(|f| total_energy(f, &params, None))
            .collect();
        let traj = Trajectory {
            frames,
            energies,
            coms,
            params,
            geometry: geom,
            phases: vec![],
            entered_at: None,
        };
        let u = mean_speed(&traj, (0.0, 2.0)).unwrap();
        assert!((u - 0.25).abs() < 1e-12);

        // The window mean telescopes the per-frame increments.
        let series = speed_series(&traj);
        let telescoped: f64 = series.iter().map(|(_, v)| v).sum::<f64>() / series.len() as f64;
        assert!((telescoped - u).abs() < 1e-12);

        // Degenerate window.
        assert!(matches!(
            mean_speed(&traj, (1.5, 1.6)),
            Err(ProtocolError::EmptyWindow)
        ));
    }

    #[test]
    fn quiescent_relax_has_zero_speed_series() {
        let params = SimParams::<f64> {
            polymerization_speed: 0.0,
            ..SimParams::default()
        };
        let opts = RunOptions {
            frame_stride: 100,
            ..RunOptions::default()
        };
        let traj = relax_free(&params, 64, 8.0, &opts).unwrap();
        // After relaxation the tail of the series is numerically zero.
        let series = speed_series(&traj);
        let (_, v_last) = series.last().unwrap();
        assert!(v_last.abs() < 1e-5, "tail speed {v_last:e}");
    }

    #[test]
    fn push_mask_covers_rear_region_and_spares_the_lead_cap() {
        let params = SimParams::<f64> {
            polarization: Vec2::new(1.0, 0.0),
            ..SimParams::default()
        };
        // Circle straddling the entrance at x = 0: the leading cap has
        // passed it, the rear has not.
        let state = make_circle(200, Vec2::new(-0.1, 0.0), 0.32).unwrap();
        let mask = push_mask(&state, &params, 0.0, 0.25);
        // The leading node (index 0 here, at x = 0.22) is never masked, nor
        // are its spared neighbors.
        assert!(!mask[0] && !mask[12] && !mask[200 - 12]);
        // The trailing node and the rear region are masked.
        assert!(mask[100] && mask[80] && mask[120]);
        // Nodes already past the entrance are not masked.
        for (i, p) in state.positions().iter().enumerate() {
            if p.x > 0.0 + state.mean_segment_length() {
                assert!(!mask[i], "node {i} at {p:?} is inside but masked");
            }
        }
    }

    #[test]
    fn entry_failure_reports_partial_trajectory() {
        let params = SimParams::<f64> {
            polarization: Vec2::new(1.0, 0.0),
            ..SimParams::default()
        };
        let geom = Arc::new(ChannelGeometry::flat_with_entrance(0.05, 0.0).unwrap());
        let entry = EntryProtocolConfig {
            relaxation_time: 0.02,
            max_push_time: 0.05, // far too short to enter
            ..EntryProtocolConfig::default()
        };
        let opts = RunOptions {
            frame_stride: 100,
            ..RunOptions::default()
        };
        let err = run_channel(&params, 64, geom, &entry, 5.0, &opts).unwrap_err();
        match err {
            ProtocolError::EntryFailed { partial, .. } => {
                assert!(partial.frames.len() >= 2);
                assert!(partial.entered_at.is_none());
            }
            other => panic!("expected EntryFailed, got {other}"),
        }
    }

    #[test]
    fn channel_run_passes_through_phases_in_order() {
        let params = SimParams::<f64> {
            polarization: Vec2::new(1.0, 0.0),
            ..SimParams::default()
        };
        // Wide flat channel: easy entry, small runtime.
        let geom = Arc::new(ChannelGeometry::flat_with_entrance(0.12, 0.0).unwrap());
        let entry = EntryProtocolConfig {
            relaxation_time: 0.1,
            max_push_time: 60.0,
            ..EntryProtocolConfig::default()
        };
        let opts = RunOptions {
            frame_stride: 2000,
            ..RunOptions::default()
        };
        let traj = run_channel(&params, 64, geom.clone(), &entry, 14.0, &opts).unwrap();
        let labels: Vec<_> = traj.phases.iter().map(|m| m.phase).collect();
        assert_eq!(labels, vec![Phase::Relax, Phase::Push, Phase::Run]);
        let entered = traj.entered_at.unwrap();
        assert!(entered > 0.1 && entered < 14.0);
        for w in traj.phases.windows(2) {
            assert!(w[0].start_time <= w[1].start_time);
        }
        // Non-penetration across all recorded frames.
        for fr in &traj.frames {
            for p in fr.positions() {
                assert!(geom.inside(*p));
            }
        }
    }
}
