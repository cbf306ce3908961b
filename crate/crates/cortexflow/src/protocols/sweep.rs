//! Parameter sweep over compensating-force spread and ratchet geometry.

use std::sync::Arc;

use rayon::prelude::*;

use crate::cortex::SimParams;
use crate::geometry::{ChannelGeometry, RatchetSpec};
use crate::scalar::Scalar;

use super::{
    mean_speed, post_entry_window, run_channel, EntryProtocolConfig, ProtocolError, RunOptions,
};

/// Axes of the sweep; geometry in model units, spreads as fractions.
#[derive(Clone, Debug)]
pub struct SweepGrid<S> {
    /// Compensating-force spread fractions `h` (of the equilibrium
    /// circumference).
    pub spread: Vec<S>,
    /// Ratchet amplitudes `d0`.
    pub amplitude: Vec<S>,
    /// Wall wavelengths `L0`.
    pub wavelength: Vec<S>,
    /// Half minimal widths `w0`.
    pub half_min_width: Vec<S>,
}

impl<S> SweepGrid<S> {
    pub fn cell_count(&self) -> usize {
        self.spread.len() * self.amplitude.len() * self.wavelength.len() * self.half_min_width.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cell_count() == 0
    }
}

/// Fixed protocol shared by all sweep cells.
#[derive(Clone, Debug)]
pub struct SweepProtocol<S> {
    pub base: SimParams<S>,
    pub n: usize,
    pub entry: EntryProtocolConfig<S>,
    pub t_final: S,
    /// Wavelengths per channel section; the profile extends periodically.
    pub periods: usize,
    pub asymmetry: S,
    /// Leading fraction of the post-entry time excluded from the mean.
    pub skip_fraction: S,
    pub frame_stride: usize,
}

/// One sweep cell: its coordinates and the measured mean speed.
#[derive(Clone, Copy, Debug)]
pub struct SweepCell<S> {
    pub spread: S,
    pub amplitude: S,
    pub wavelength: S,
    pub half_min_width: S,
    /// Mean post-entry COM speed; absent when the cell never entered or the
    /// run failed.
    pub mean_speed: Option<S>,
    pub entered: bool,
}

/// Grid of mean speeds; cells in row-major order over
/// (spread, amplitude, wavelength, half width).
#[derive(Clone, Debug)]
pub struct SweepResult<S> {
    pub grid: SweepGrid<S>,
    pub cells: Vec<SweepCell<S>>,
}

impl<S: Scalar> SweepResult<S> {
    pub fn cell(&self, h: usize, d: usize, l: usize, w: usize) -> &SweepCell<S> {
        let (nd, nl, nw) = (
            self.grid.amplitude.len(),
            self.grid.wavelength.len(),
            self.grid.half_min_width.len(),
        );
        &self.cells[((h * nd + d) * nl + l) * nw + w]
    }
}

fn run_cell<S: Scalar>(
    proto: &SweepProtocol<S>,
    spread: S,
    amplitude: S,
    wavelength: S,
    half_min_width: S,
) -> SweepCell<S> {
    let mut cell = SweepCell {
        spread,
        amplitude,
        wavelength,
        half_min_width,
        mean_speed: None,
        entered: false,
    };
    let params = proto.base.with_spread_fraction(spread);

    let geom = RatchetSpec::uniform(
        wavelength,
        proto.periods,
        half_min_width,
        amplitude,
        proto.asymmetry,
    )
    .and_then(|spec| ChannelGeometry::ratchet_with_entrance(spec, proto.entry.entry_x));
    let Ok(geom) = geom else {
        return cell;
    };

    let opts = RunOptions {
        frame_stride: proto.frame_stride,
        ..RunOptions::default()
    };
    match run_channel(
        &params,
        proto.n,
        Arc::new(geom),
        &proto.entry,
        proto.t_final,
        &opts,
    ) {
        Ok(traj) => {
            cell.entered = true;
            cell.mean_speed = post_entry_window(&traj, proto.skip_fraction)
                .and_then(|w| mean_speed(&traj, w).ok());
        }
        Err(ProtocolError::EntryFailed { .. }) => {
            cell.entered = false;
        }
        Err(_) => {
            // Any other failure counts as an unusable cell, not a zero.
        }
    }
    cell
}

/// Runs one channel simulation per grid cell on `jobs` workers. Cells are
/// independent; the output ordering (and therefore every derived file) does
/// not depend on the worker count.
pub fn sweep<S: Scalar>(
    proto: &SweepProtocol<S>,
    grid: SweepGrid<S>,
    jobs: usize,
) -> SweepResult<S> {
    let mut coords = Vec::with_capacity(grid.cell_count());
    for &h in &grid.spread {
        for &d in &grid.amplitude {
            for &l in &grid.wavelength {
                for &w in &grid.half_min_width {
                    coords.push((h, d, l, w));
                }
            }
        }
    }

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .expect("worker pool");
    let cells = pool.install(|| {
        coords
            .par_iter()
            .map(|&(h, d, l, w)| run_cell(proto, h, d, l, w))
            .collect()
    });

    SweepResult { grid, cells }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::vec2::Vec2;

    fn tiny_protocol() -> SweepProtocol<f64> {
        SweepProtocol {
            base: SimParams {
                polarization: Vec2::new(1.0, 0.0),
                ..SimParams::default()
            },
            n: 64,
            entry: EntryProtocolConfig {
                relaxation_time: 0.05,
                max_push_time: 4.0,
                ..EntryProtocolConfig::default()
            },
            t_final: 6.0,
            periods: 1,
            asymmetry: 0.4,
            skip_fraction: 0.4,
            frame_stride: 2000,
        }
    }

    #[test]
    fn single_cell_grid_reduces_to_one_run() {
        let grid = SweepGrid {
            spread: vec![0.1],
            amplitude: vec![0.02],
            wavelength: vec![0.16],
            half_min_width: vec![0.09],
        };
        let result = sweep(&tiny_protocol(), grid, 2);
        assert_eq!(result.cells.len(), 1);
        let cell = result.cell(0, 0, 0, 0);
        assert!(cell.entered, "wide ratchet should admit the cell");
    }

    #[test]
    fn sweep_is_deterministic_across_worker_counts() {
        let grid = || SweepGrid {
            spread: vec![0.1, 0.4],
            amplitude: vec![0.02],
            wavelength: vec![0.16],
            half_min_width: vec![0.09],
        };
        let a = sweep(&tiny_protocol(), grid(), 1);
        let b = sweep(&tiny_protocol(), grid(), 4);
        assert_eq!(a.cells.len(), b.cells.len());
        for (x, y) in a.cells.iter().zip(&b.cells) {
            assert_eq!(x.entered, y.entered);
            match (x.mean_speed, y.mean_speed) {
                (Some(u), Some(v)) => assert_eq!(u.to_bits(), v.to_bits()),
                (None, None) => {}
                other => panic!("mismatched cells: {other:?}"),
            }
        }
    }
}
