//! Deterministic file output: trajectory and plot-data CSVs, wall polylines,
//! per-frame energy records, and sweep tables.
//!
//! Floats are written with Rust's shortest round-trip formatting, so a fixed
//! configuration produces byte-identical files and a read-back recovers the
//! exact values.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde_json::json;

use crate::config::units;
use crate::protocols::{SweepResult, Trajectory};
use crate::{Geometry, Real};

fn create(path: &Path) -> io::Result<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Writes `(frame, t, i, x, y)` rows, one per node per frame.
pub fn write_trajectory(traj: &Trajectory<Real>, path: &Path) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "frame,t,i,x,y")?;
    for (k, frame) in traj.frames.iter().enumerate() {
        for (i, p) in frame.positions().iter().enumerate() {
            writeln!(w, "{},{},{},{},{}", k, frame.time(), i, p.x, p.y)?;
        }
    }
    w.flush()
}

/// Reads a trajectory CSV back into `(frame, t, positions)` groups.
pub fn read_trajectory(path: &Path) -> io::Result<Vec<(usize, Real, Vec<(Real, Real)>)>> {
    let reader = BufReader::new(File::open(path)?);
    let mut out: Vec<(usize, Real, Vec<(Real, Real)>)> = Vec::new();
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        if lineno == 0 || line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let mut next = || {
            fields
                .next()
                .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidData, "short row"))
        };
        let frame: usize = next()?
            .parse()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let t: Real = next()?
            .parse()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let _i: usize = next()?
            .parse()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let x: Real = next()?
            .parse()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let y: Real = next()?
            .parse()
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        match out.last_mut() {
            Some((f, _, pts)) if *f == frame => pts.push((x, y)),
            _ => out.push((frame, t, vec![(x, y)])),
        }
    }
    Ok(out)
}

/// Writes per-frame scalars:
/// `(t, com_x, com_y, speed, e_el, e_p, e_total, isoperimetric_ratio)`.
pub fn write_plotdata(traj: &Trajectory<Real>, path: &Path) -> io::Result<()> {
    let mut w = create(path)?;
    writeln!(w, "t,com_x,com_y,speed,e_el,e_p,e_total,isoperimetric_ratio")?;
    for (k, frame) in traj.frames.iter().enumerate() {
        // COM speed of the gap ending at this frame; first frame gets 0.
        let speed = if k == 0 {
            0.0
        } else {
            let dt = frame.time() - traj.frames[k - 1].time();
            if dt > 0.0 {
                (traj.coms[k] - traj.coms[k - 1]).norm() / dt
            } else {
                0.0
            }
        };
        let e = &traj.energies[k];
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            frame.time(),
            traj.coms[k].x,
            traj.coms[k].y,
            speed,
            e.e_el,
            e.e_p,
            e.e_total,
            e.isoperimetric_ratio
        )?;
    }
    w.flush()
}

/// Writes one JSON object per frame with the full energy report.
pub fn write_energies_jsonl(traj: &Trajectory<Real>, path: &Path) -> io::Result<()> {
    let mut w = create(path)?;
    for (frame, e) in traj.frames.iter().zip(&traj.energies) {
        let record = json!({
            "t": frame.time(),
            "e_el": e.e_el,
            "e_p": e.e_p,
            "e_obst": e.e_obst,
            "e_total": e.e_total,
            "enclosed_area": e.enclosed_area,
            "cortex_length": e.cortex_length,
            "isoperimetric_ratio": e.isoperimetric_ratio,
        });
        writeln!(w, "{record}")?;
    }
    w.flush()
}

/// Writes the wall polyline `(x, y_top, y_bottom)` over `[x_lo, x_hi]`.
pub fn write_walls(
    geom: &Geometry,
    x_lo: Real,
    x_hi: Real,
    count: usize,
    path: &Path,
) -> io::Result<()> {
    let rows = geom
        .wall_polyline(x_lo, x_hi, count)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    let mut w = create(path)?;
    writeln!(w, "x,y_top,y_bottom")?;
    for (x, top, bottom) in rows {
        writeln!(w, "{x},{top},{bottom}")?;
    }
    w.flush()
}

/// Writes the sweep table with geometry in micrometers and speeds in um/min;
/// cells that never entered keep an empty speed field.
pub fn write_sweep_csv(result: &SweepResult<Real>, path: &Path) -> io::Result<()> {
    use units::{convert, Direction::ToPhysical, Kind};
    let mut w = create(path)?;
    writeln!(w, "h,d0_um,l0_um,w0_um,mean_speed_um_per_min,entered")?;
    for cell in &result.cells {
        let speed = cell
            .mean_speed
            .map(|s| convert(s, Kind::Speed, ToPhysical).to_string())
            .unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{}",
            cell.spread,
            convert(cell.amplitude, Kind::Length, ToPhysical),
            convert(cell.wavelength, Kind::Length, ToPhysical),
            convert(cell.half_min_width, Kind::Length, ToPhysical),
            speed,
            cell.entered
        )?;
    }
    w.flush()
}

/// JSON summary of a sweep: axes, counts, and run metadata.
pub fn write_sweep_summary(
    result: &SweepResult<Real>,
    jobs: usize,
    elapsed_seconds: f64,
    path: &Path,
) -> io::Result<()> {
    use units::{convert, Direction::ToPhysical, Kind};
    let to_um = |v: &[Real]| -> Vec<Real> {
        v.iter()
            .map(|x| convert(*x, Kind::Length, ToPhysical))
            .collect()
    };
    let entered = result.cells.iter().filter(|c| c.entered).count();
    let summary = json!({
        "axes": {
            "h": result.grid.spread,
            "d0_um": to_um(&result.grid.amplitude),
            "l0_um": to_um(&result.grid.wavelength),
            "w0_um": to_um(&result.grid.half_min_width),
        },
        "cells": result.cells.len(),
        "entered": entered,
        "jobs": jobs,
        "elapsed_seconds": elapsed_seconds,
        "units": {"x0_um": units::X0_UM, "t0_min": units::T0_MIN},
    });
    let mut w = create(path)?;
    writeln!(w, "{}", serde_json::to_string_pretty(&summary)?)?;
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cortex::{make_circle, total_energy, SimParams};
    use crate::geometry::ChannelGeometry;
    use crate::protocols::Trajectory;
    use crate::vec2::Vec2;
    use std::sync::Arc;

    fn tiny_trajectory() -> Trajectory<Real> {
        let params = SimParams::default();
        let frames = vec![make_circle(8, Vec2::zero(), 0.3).unwrap()];
        let energies = frames
            .iter()
            .map(|f| total_energy(f, &params, None))
            .collect();
        let coms = frames.iter().map(|f| f.center_of_mass()).collect();
        Trajectory {
            frames,
            energies,
            coms,
            params,
            geometry: Arc::new(ChannelGeometry::free()),
            phases: vec![],
            entered_at: None,
        }
    }

    #[test]
    fn single_frame_rows_and_header() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let traj = tiny_trajectory();
        write_trajectory(&traj, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 9); // header + 8 nodes
        assert_eq!(lines[0], "frame,t,i,x,y");
    }

    #[test]
    fn round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        let traj = tiny_trajectory();
        write_trajectory(&traj, &path).unwrap();
        let back = read_trajectory(&path).unwrap();
        assert_eq!(back.len(), 1);
        for (p, (x, y)) in traj.frames[0].positions().iter().zip(&back[0].2) {
            assert_eq!(p.x.to_bits(), x.to_bits());
            assert_eq!(p.y.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn wall_csv_matches_profile() {
        use crate::geometry::RatchetSpec;
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("walls.csv");
        let spec = RatchetSpec::uniform(0.16, 2, 0.0777, 0.063, 0.4).unwrap();
        let geom = ChannelGeometry::ratchet(spec).unwrap();
        write_walls(&geom, 0.0, 0.32, 65, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        for line in text.lines().skip(1) {
            let cols: Vec<f64> = line.split(',').map(|c| c.parse().unwrap()).collect();
            let h = geom.half_width_at(cols[0]).unwrap().unwrap();
            assert!((cols[1] - h).abs() < 1e-10);
            assert!((cols[2] + h).abs() < 1e-10);
        }
    }
}
