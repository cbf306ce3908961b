//! Geometric and regularity diagnostics over one state or a frame sequence.

use crate::scalar::{num, Scalar};
use crate::vec2::Vec2;

use super::{CortexError, CortexState};

/// Cumulative arclength `l(s)` at the node coordinates, `n + 1` entries from
/// 0 to the total curve length.
pub fn arclength_profile<S: Scalar>(state: &CortexState<S>) -> Vec<S> {
    let pos = state.positions();
    let n = pos.len();
    let mut acc = S::zero();
    let mut out = Vec::with_capacity(n + 1);
    out.push(acc);
    for i in 0..n {
        acc += (pos[(i + 1) % n] - pos[i]).norm();
        out.push(acc);
    }
    out
}

/// Actin density per segment, `ds / |X_{i+1} - X_i|`; the reciprocal of the
/// local stretch.
pub fn density_profile<S: Scalar>(state: &CortexState<S>) -> Vec<S> {
    let pos = state.positions();
    let n = pos.len();
    let ds = state.ds();
    (0..n)
        .map(|i| ds / (pos[(i + 1) % n] - pos[i]).norm())
        .collect()
}

/// Trajectory-level diagnostics.
#[derive(Clone, Debug)]
pub struct Diagnostics<S> {
    pub com_series: Vec<Vec2<S>>,
    /// COM speed between consecutive frames; one entry per frame gap.
    pub speed_series: Vec<S>,
    /// Cumulative arclength per frame.
    pub arclength: Vec<Vec<S>>,
    /// Per-segment actin density per frame.
    pub density: Vec<Vec<S>>,
    /// Empirical modulus `sup |X(s1,t1) - X(s0,t0)| / (|ds|^1/2 + |dt|^1/4)`
    /// over sampled node/frame pairs — a regularity indicator, reported but
    /// not bounded a priori.
    pub holder_modulus: S,
}

/// Computes diagnostics over a time-ordered frame sequence. Needs at least
/// two frames for the time-dependent quantities.
pub fn diagnostics<S: Scalar>(frames: &[CortexState<S>]) -> Result<Diagnostics<S>, CortexError> {
    if frames.len() < 2 {
        return Err(CortexError::NeedTwoFrames);
    }
    let com_series: Vec<_> = frames.iter().map(|f| f.center_of_mass()).collect();
    let mut speed_series = Vec::with_capacity(frames.len() - 1);
    for k in 0..frames.len() - 1 {
        let dt = frames[k + 1].time() - frames[k].time();
        let step = (com_series[k + 1] - com_series[k]).norm();
        speed_series.push(if dt > S::zero() { step / dt } else { S::zero() });
    }
    let arclength = frames.iter().map(arclength_profile).collect();
    let density = frames.iter().map(density_profile).collect();
    let holder_modulus = holder_modulus(frames);
    Ok(Diagnostics {
        com_series,
        speed_series,
        arclength,
        density,
        holder_modulus,
    })
}

/// Empirical Hoelder-type modulus over a deterministic subsample of
/// (node, frame) pairs, with the cyclic metric in the actin coordinate.
fn holder_modulus<S: Scalar>(frames: &[CortexState<S>]) -> S {
    let n = frames[0].n();
    let node_stride = (n / 24).max(1);
    let frame_stride = (frames.len() / 12).max(1);
    let ds = frames[0].ds();

    let mut picks: Vec<(usize, usize)> = Vec::new();
    for (fi, _) in frames.iter().enumerate().step_by(frame_stride) {
        for i in (0..n).step_by(node_stride) {
            picks.push((fi, i));
        }
    }

    let quarter = num::<S>(0.25);
    let half = num::<S>(0.5);
    let mut sup = S::zero();
    for (a, &(fa, ia)) in picks.iter().enumerate() {
        for &(fb, ib) in picks.iter().skip(a + 1) {
            let di = ia.abs_diff(ib);
            let ds_dist = ds * S::from_usize(di.min(n - di)).unwrap();
            let dt_dist = (frames[fa].time() - frames[fb].time()).abs();
            let denom = ds_dist.powf(half) + dt_dist.powf(quarter);
            if denom > S::zero() {
                let jump = (frames[fa].positions()[ia] - frames[fb].positions()[ib]).norm();
                sup = sup.max(jump / denom);
            }
        }
    }
    sup
}
