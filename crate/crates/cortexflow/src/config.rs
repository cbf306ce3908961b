//! Run configuration: JSON parsing, defaults, and unit conversion.
//!
//! All internal quantities are in model units: lengths scaled so the
//! relaxed cortex length is 1 (`x0 ~ 47.6 um`), times so the polymerization
//! speed 12 um/min becomes `v = 2` (`t0 ~ 8 min`). Micrometer-labeled keys
//! (`w0_um`, `v_um_per_min`, ...) may be used instead of model-unit keys;
//! giving both forms of the same quantity is rejected rather than resolved
//! silently. Unknown keys are rejected.

use std::sync::Arc;

use serde::Deserialize;
use thiserror::Error;

use crate::cortex::{FlowArc, SimParams};
use crate::geometry::{ChannelGeometry, RatchetSpec, Section};
use crate::protocols::{EntryProtocolConfig, SolverChoice, SweepGrid, SweepProtocol};
use crate::solvers::MMConfig;
use crate::vec2::Vec2;
use crate::{Geometry, Params, Real};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("{0}")]
    Invalid(String),
    #[error("conflicting keys: {0}")]
    Conflict(String),
}

/// Unit conversion constants and helpers.
pub mod units {
    /// Model length unit in micrometers (half the relaxed cortex length).
    pub const X0_UM: f64 = 47.6;
    /// Model time unit in minutes.
    pub const T0_MIN: f64 = 8.0;
    /// Physical friction coefficient in pN·min/um (model value 1).
    pub const MU_PN_MIN_PER_UM: f64 = 55.0;

    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub enum Kind {
        Length,
        Time,
        Speed,
        ForcePerLength,
    }

    #[derive(Clone, Copy, Debug, PartialEq, Eq)]
    pub enum Direction {
        ToPhysical,
        ToModel,
    }

    fn factor(kind: Kind) -> f64 {
        match kind {
            Kind::Length => X0_UM,
            Kind::Time => T0_MIN,
            Kind::Speed => X0_UM / T0_MIN,
            Kind::ForcePerLength => MU_PN_MIN_PER_UM / T0_MIN,
        }
    }

    /// Converts between model units and physical units
    /// (um, min, um/min, pN/um).
    pub fn convert(value: f64, kind: Kind, direction: Direction) -> f64 {
        match direction {
            Direction::ToPhysical => value * factor(kind),
            Direction::ToModel => value / factor(kind),
        }
    }
}

fn exclusive(
    name_a: &str,
    a: Option<f64>,
    name_b: &str,
    b: Option<f64>,
    to_model: impl Fn(f64) -> f64,
) -> Result<Option<f64>, ConfigError> {
    match (a, b) {
        (Some(_), Some(_)) => Err(ConfigError::Conflict(format!(
            "give either {name_a} or {name_b}, not both"
        ))),
        (Some(v), None) => Ok(Some(v)),
        (None, Some(v)) => Ok(Some(to_model(v))),
        (None, None) => Ok(None),
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    p: Option<f64>,
    kappa_s: Option<f64>,
    mu: Option<f64>,
    v: Option<f64>,
    v_um_per_min: Option<f64>,
    h: Option<f64>,
    a: Option<f64>,
    omega: Option<[f64; 2]>,
    dt: Option<f64>,
    n: Option<usize>,
    ds: Option<f64>,
    epsilon: Option<f64>,
    epsilon_um: Option<f64>,
    compensation: Option<bool>,
    flow_arc: Option<String>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
enum RawGeometry {
    Free,
    Flat {
        half_width: Option<f64>,
        half_width_um: Option<f64>,
        entrance: Option<f64>,
    },
    Ratchet {
        w0: Option<f64>,
        w0_um: Option<f64>,
        d0: Option<f64>,
        d0_um: Option<f64>,
        alpha: Option<f64>,
        sections: Vec<RawSection>,
        entrance: Option<f64>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSection {
    l0: Option<f64>,
    l0_um: Option<f64>,
    length: Option<f64>,
    length_um: Option<f64>,
    periods: Option<usize>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
enum RawSolver {
    Explicit,
    Mm {
        tau: Option<f64>,
        delta: Option<f64>,
        grad_tol: Option<f64>,
        max_inner: Option<usize>,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawEntry {
    push_fraction: Option<f64>,
    entry_x: Option<f64>,
    relaxation_time: Option<f64>,
    max_push_time: Option<f64>,
    start_center: Option<[f64; 2]>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
enum RawProtocol {
    Relax { t_final: Option<f64> },
    Channel { t_final: Option<f64>, entry: Option<RawEntry> },
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawOutput {
    frame_stride: Option<usize>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    params: Option<RawParams>,
    geometry: Option<RawGeometry>,
    solver: Option<RawSolver>,
    protocol: Option<RawProtocol>,
    output: Option<RawOutput>,
    seed: Option<u64>,
}

/// Which experiment a run executes.
#[derive(Clone, Debug)]
pub enum ProtocolChoice {
    Relax {
        t_final: Real,
    },
    Channel {
        entry: EntryProtocolConfig<Real>,
        t_final: Real,
    },
}

/// Fully resolved run configuration, in model units.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub params: Params,
    pub n: usize,
    pub geometry: Arc<Geometry>,
    pub solver: SolverChoice<Real>,
    pub protocol: ProtocolChoice,
    pub frame_stride: usize,
    pub seed: u64,
}

fn build_params(raw: RawParams) -> Result<(Params, usize), ConfigError> {
    use units::{convert, Direction, Kind};
    let defaults = SimParams::<Real>::default();

    let v = exclusive("v", raw.v, "v_um_per_min", raw.v_um_per_min, |x| {
        convert(x, Kind::Speed, Direction::ToModel)
    })?
    .unwrap_or(defaults.polymerization_speed);

    if raw.h.is_some() && raw.a.is_some() {
        return Err(ConfigError::Conflict("give either h or a, not both".into()));
    }

    let epsilon = exclusive(
        "epsilon",
        raw.epsilon,
        "epsilon_um",
        raw.epsilon_um,
        |x| convert(x, Kind::Length, Direction::ToModel),
    )?
    .unwrap_or(defaults.epsilon);

    let n = raw.n.unwrap_or(200);
    if let Some(ds) = raw.ds {
        if (n as f64 * ds - 1.0).abs() > 1e-9 {
            return Err(ConfigError::Invalid(format!(
                "n * ds must equal 1 (total actin is normalized): n = {n}, ds = {ds}"
            )));
        }
    }

    let omega = match raw.omega {
        Some([x, y]) => {
            let v = Vec2::new(x, y);
            v.normalized().ok_or_else(|| {
                ConfigError::Invalid("omega must be a nonzero vector".into())
            })?
        }
        None => defaults.polarization,
    };

    let flow_arc = match raw.flow_arc.as_deref() {
        None => defaults.flow_arc,
        Some("trail_to_lead") => FlowArc::TrailToLead,
        Some("lead_to_trail") => FlowArc::LeadToTrail,
        Some(other) => {
            return Err(ConfigError::Invalid(format!(
                "flow_arc must be trail_to_lead or lead_to_trail, got {other}"
            )))
        }
    };

    let mut params = SimParams {
        pressure: raw.p.unwrap_or(defaults.pressure),
        stiffness: raw.kappa_s.unwrap_or(defaults.stiffness),
        friction: raw.mu.unwrap_or(defaults.friction),
        polymerization_speed: v,
        spread: 0.0,
        polarization: omega,
        dt: raw.dt.unwrap_or(defaults.dt),
        epsilon,
        compensation: raw.compensation.unwrap_or(defaults.compensation),
        flow_arc,
    };
    // The spread fraction h is relative to the equilibrium circumference,
    // which depends on p and kappa_s, so it resolves after them.
    params = match (raw.h, raw.a) {
        (Some(h), None) => params.with_spread_fraction(h),
        (None, Some(a)) => SimParams { spread: a, ..params },
        _ => params.with_spread_fraction(0.1),
    };
    params
        .validate()
        .map_err(|e| ConfigError::Invalid(e.to_string()))?;
    Ok((params, n))
}

fn build_section(raw: &RawSection) -> Result<Section<Real>, ConfigError> {
    use units::{convert, Direction, Kind};
    let l0 = exclusive("l0", raw.l0, "l0_um", raw.l0_um, |x| {
        convert(x, Kind::Length, Direction::ToModel)
    })?
    .ok_or_else(|| ConfigError::Invalid("section needs l0 or l0_um".into()))?;
    let explicit_len = exclusive("length", raw.length, "length_um", raw.length_um, |x| {
        convert(x, Kind::Length, Direction::ToModel)
    })?;
    let length = match (explicit_len, raw.periods) {
        (Some(_), Some(_)) => {
            return Err(ConfigError::Conflict(
                "give either a section length or a period count, not both".into(),
            ))
        }
        (Some(len), None) => len,
        (None, Some(p)) => l0 * p as f64,
        (None, None) => l0,
    };
    Ok(Section {
        wavelength: l0,
        length,
    })
}

fn build_geometry(raw: Option<RawGeometry>) -> Result<Geometry, ConfigError> {
    use units::{convert, Direction, Kind};
    let to_model = |x: f64| convert(x, Kind::Length, Direction::ToModel);
    match raw {
        None | Some(RawGeometry::Free) => Ok(ChannelGeometry::free()),
        Some(RawGeometry::Flat {
            half_width,
            half_width_um,
            entrance,
        }) => {
            let w = exclusive("half_width", half_width, "half_width_um", half_width_um, to_model)?
                .ok_or_else(|| {
                    ConfigError::Invalid("flat geometry needs half_width or half_width_um".into())
                })?;
            let geom = match entrance {
                Some(x0) => ChannelGeometry::flat_with_entrance(w, x0),
                None => ChannelGeometry::flat(w),
            };
            geom.map_err(|e| ConfigError::Invalid(e.to_string()))
        }
        Some(RawGeometry::Ratchet {
            w0,
            w0_um,
            d0,
            d0_um,
            alpha,
            sections,
            entrance,
        }) => {
            let w0 = exclusive("w0", w0, "w0_um", w0_um, to_model)?
                .ok_or_else(|| ConfigError::Invalid("ratchet needs w0 or w0_um".into()))?;
            let d0 = exclusive("d0", d0, "d0_um", d0_um, to_model)?
                .ok_or_else(|| ConfigError::Invalid("ratchet needs d0 or d0_um".into()))?;
            if sections.is_empty() {
                return Err(ConfigError::Invalid("ratchet needs at least one section".into()));
            }
            let sections = sections
                .iter()
                .map(build_section)
                .collect::<Result<Vec<_>, _>>()?;
            let spec = RatchetSpec::new(sections, w0, d0, alpha.unwrap_or(0.4))
                .map_err(|e| ConfigError::Invalid(e.to_string()))?;
            let geom = match entrance {
                Some(x0) => ChannelGeometry::ratchet_with_entrance(spec, x0),
                None => ChannelGeometry::ratchet(spec),
            };
            geom.map_err(|e| ConfigError::Invalid(e.to_string()))
        }
    }
}

fn build_solver(raw: Option<RawSolver>) -> SolverChoice<Real> {
    match raw {
        None | Some(RawSolver::Explicit) => SolverChoice::Explicit,
        Some(RawSolver::Mm {
            tau,
            delta,
            grad_tol,
            max_inner,
        }) => {
            let d = MMConfig::<Real>::default();
            SolverChoice::MinimizingMovement(MMConfig {
                tau: tau.unwrap_or(d.tau),
                delta: delta.unwrap_or(d.delta),
                grad_tol: grad_tol.unwrap_or(d.grad_tol),
                max_inner: max_inner.unwrap_or(d.max_inner),
            })
        }
    }
}

fn build_entry(raw: Option<RawEntry>) -> EntryProtocolConfig<Real> {
    let d = EntryProtocolConfig::<Real>::default();
    match raw {
        None => d,
        Some(r) => EntryProtocolConfig {
            push_fraction: r.push_fraction.unwrap_or(d.push_fraction),
            entry_x: r.entry_x.unwrap_or(d.entry_x),
            relaxation_time: r.relaxation_time.unwrap_or(d.relaxation_time),
            max_push_time: r.max_push_time.unwrap_or(d.max_push_time),
            start_center: r.start_center.map(|[x, y]| Vec2::new(x, y)),
        },
    }
}

/// Parses a run configuration; an empty JSON object yields the defaults.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let raw: RawConfig = serde_json::from_str(text)?;
    let (params, n) = build_params(raw.params.unwrap_or_default())?;
    let geometry = Arc::new(build_geometry(raw.geometry)?);
    let solver = build_solver(raw.solver);
    let protocol = match raw.protocol {
        None | Some(RawProtocol::Relax { t_final: None }) => ProtocolChoice::Relax { t_final: 10.0 },
        Some(RawProtocol::Relax { t_final: Some(t) }) => ProtocolChoice::Relax { t_final: t },
        Some(RawProtocol::Channel { t_final, entry }) => ProtocolChoice::Channel {
            entry: build_entry(entry),
            t_final: t_final.unwrap_or(40.0),
        },
    };
    if matches!(protocol, ProtocolChoice::Channel { .. }) && geometry.is_free() {
        return Err(ConfigError::Invalid(
            "channel protocol requires a flat or ratchet geometry".into(),
        ));
    }
    Ok(RunConfig {
        params,
        n,
        geometry,
        solver,
        protocol,
        frame_stride: raw.output.unwrap_or_default().frame_stride.unwrap_or(500),
        seed: raw.seed.unwrap_or(0),
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawGrid {
    h: Vec<f64>,
    d0: Option<Vec<f64>>,
    d0_um: Option<Vec<f64>>,
    l0: Option<Vec<f64>>,
    l0_um: Option<Vec<f64>>,
    w0: Option<Vec<f64>>,
    w0_um: Option<Vec<f64>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSweepConfig {
    params: Option<RawParams>,
    entry: Option<RawEntry>,
    t_final: Option<f64>,
    periods: Option<usize>,
    alpha: Option<f64>,
    skip_fraction: Option<f64>,
    grid: RawGrid,
    output: Option<RawOutput>,
    jobs: Option<usize>,
}

fn grid_axis(
    name: &str,
    model: Option<Vec<f64>>,
    um: Option<Vec<f64>>,
) -> Result<Vec<f64>, ConfigError> {
    use units::{convert, Direction, Kind};
    match (model, um) {
        (Some(_), Some(_)) => Err(ConfigError::Conflict(format!(
            "give either {name} or {name}_um, not both"
        ))),
        (Some(v), None) => Ok(v),
        (None, Some(v)) => Ok(v
            .into_iter()
            .map(|x| convert(x, Kind::Length, Direction::ToModel))
            .collect()),
        (None, None) => Err(ConfigError::Invalid(format!(
            "sweep grid needs {name} or {name}_um"
        ))),
    }
}

/// Parses a sweep configuration into the protocol, the grid, and the worker
/// count.
pub fn parse_sweep_config(
    text: &str,
) -> Result<(SweepProtocol<Real>, SweepGrid<Real>, usize), ConfigError> {
    let raw: RawSweepConfig = serde_json::from_str(text)?;
    let (params, n) = build_params(raw.params.unwrap_or_default())?;
    let grid = SweepGrid {
        spread: raw.grid.h.clone(),
        amplitude: grid_axis("d0", raw.grid.d0, raw.grid.d0_um)?,
        wavelength: grid_axis("l0", raw.grid.l0, raw.grid.l0_um)?,
        half_min_width: grid_axis("w0", raw.grid.w0, raw.grid.w0_um)?,
    };
    if grid.is_empty() || grid.spread.is_empty() {
        return Err(ConfigError::Invalid("sweep grid axes must be non-empty".into()));
    }
    let proto = SweepProtocol {
        base: params,
        n,
        entry: build_entry(raw.entry),
        t_final: raw.t_final.unwrap_or(40.0),
        periods: raw.periods.unwrap_or(1),
        asymmetry: raw.alpha.unwrap_or(0.4),
        skip_fraction: raw.skip_fraction.unwrap_or(0.4),
        frame_stride: raw.output.unwrap_or_default().frame_stride.unwrap_or(500),
    };
    Ok((proto, grid, raw.jobs.unwrap_or(4)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_object_gives_table_defaults() {
        let cfg = parse_config("{}").unwrap();
        assert_eq!(cfg.params.pressure, 3.2);
        assert_eq!(cfg.params.stiffness, 1.0);
        assert_eq!(cfg.params.friction, 1.0);
        assert_eq!(cfg.params.polymerization_speed, 2.0);
        assert_eq!(cfg.params.dt, 4e-2);
        assert_eq!(cfg.params.epsilon, 0.1);
        assert_eq!(cfg.n, 200);
        assert!(cfg.geometry.is_free());
        assert!(matches!(cfg.solver, SolverChoice::Explicit));
        assert!(matches!(cfg.protocol, ProtocolChoice::Relax { .. }));
    }

    #[test]
    fn pressure_gate_cites_the_assumption() {
        let err = parse_config(r#"{"params": {"p": 6.4}}"#).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("(A1)"), "message was: {msg}");
    }

    #[test]
    fn speed_in_physical_units_converts_to_model() {
        let cfg = parse_config(r#"{"params": {"v_um_per_min": 11.9}}"#).unwrap();
        // 11.9 um/min is exactly 2 model units (x0/t0 = 5.95 um/min).
        assert_eq!(cfg.params.polymerization_speed, 2.0);
        let cfg12 = parse_config(r#"{"params": {"v_um_per_min": 12.0}}"#).unwrap();
        assert!((cfg12.params.polymerization_speed - 2.0).abs() < 0.02);
    }

    #[test]
    fn conversion_chain_matches_reported_physical_values() {
        use units::{convert, Direction, Kind};
        let speed = convert(2.0, Kind::Speed, Direction::ToPhysical);
        assert!((speed - 11.9).abs() < 1e-12);
        let p_phys = convert(3.2, Kind::ForcePerLength, Direction::ToPhysical);
        assert!((p_phys - 22.0).abs() < 1e-12);
        assert_eq!(convert(0.0, Kind::Length, Direction::ToPhysical), 0.0);
        let round_trip = convert(
            convert(1.37, Kind::Time, Direction::ToPhysical),
            Kind::Time,
            Direction::ToModel,
        );
        assert!((round_trip - 1.37).abs() < 1e-15);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(parse_config(r#"{"paramz": {}}"#).is_err());
        assert!(parse_config(r#"{"params": {"pp": 1.0}}"#).is_err());
    }

    #[test]
    fn unit_conflicts_are_rejected() {
        let err = parse_config(r#"{"params": {"v": 2.0, "v_um_per_min": 11.9}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Conflict(_)));
        let err = parse_config(r#"{"params": {"h": 0.1, "a": 0.1}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::Conflict(_)));
    }

    #[test]
    fn node_count_and_step_must_be_consistent() {
        assert!(parse_config(r#"{"params": {"n": 100, "ds": 5e-3}}"#).is_err());
        assert!(parse_config(r#"{"params": {"n": 200, "ds": 5e-3}}"#).is_ok());
    }

    #[test]
    fn ratchet_geometry_in_micrometers() {
        let cfg = parse_config(
            r#"{
                "geometry": {
                    "kind": "ratchet",
                    "w0_um": 1.4, "d0_um": 2.7,
                    "sections": [{"l0_um": 3.9, "periods": 2}],
                    "entrance": 0.0
                },
                "protocol": {"kind": "channel", "t_final": 1.0}
            }"#,
        )
        .unwrap();
        let spec = cfg.geometry.ratchet_spec().unwrap();
        assert!((spec.half_min_width - 1.4 / 47.6).abs() < 1e-12);
        assert!((spec.amplitude - 2.7 / 47.6).abs() < 1e-12);
        assert!((spec.sections[0].wavelength - 3.9 / 47.6).abs() < 1e-12);
        assert!((spec.sections[0].length - 2.0 * 3.9 / 47.6).abs() < 1e-12);
    }

    #[test]
    fn physical_and_model_keys_build_identical_params() {
        let a = parse_config(r#"{"params": {"v": 2.0}}"#).unwrap();
        let b = parse_config(r#"{"params": {"v_um_per_min": 11.9}}"#).unwrap();
        assert_eq!(
            a.params.polymerization_speed.to_bits(),
            b.params.polymerization_speed.to_bits()
        );
    }

    #[test]
    fn channel_protocol_requires_walls() {
        let err = parse_config(r#"{"protocol": {"kind": "channel"}}"#).unwrap_err();
        assert!(err.to_string().contains("geometry"));
    }

    #[test]
    fn sweep_config_parses_grid() {
        let (proto, grid, jobs) = parse_sweep_config(
            r#"{
                "grid": {
                    "h": [0.04, 0.8],
                    "d0_um": [0.78, 3.1],
                    "l0_um": [3.9, 7.6, 11.7],
                    "w0_um": [1.4, 3.7]
                },
                "jobs": 2
            }"#,
        )
        .unwrap();
        assert_eq!(grid.cell_count(), 2 * 2 * 3 * 2);
        assert_eq!(jobs, 2);
        assert_eq!(proto.n, 200);
    }
}
