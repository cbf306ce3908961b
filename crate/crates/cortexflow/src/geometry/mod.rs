//! Confinement domains: free space, flat channels, and ratchet channels.
//!
//! A channel runs along the x axis with walls at `y = ±h(x)`. For ratchet
//! channels the half-width is `h(x) = w0 + d0 * (1 - g(x))` where `g` solves
//! the fixed-point equation `g = sin(2*pi*x/L0 + alpha*g)`; `alpha < 1` makes
//! the iteration a contraction. A channel may start at an entrance
//! coordinate, in which case everything left of the entrance is an
//! unconfined reservoir and the wall end faces become part of the boundary.
//!
//! All geometry objects are immutable after construction and safe to share
//! across worker threads.

mod obstacle;

pub use obstacle::SoftObstacle;

use thiserror::Error;

use crate::scalar::{num, Scalar};
use crate::vec2::Vec2;

#[derive(Debug, Error)]
pub enum GeometryError {
    #[error("geometry has no walls")]
    NoWalls,
    #[error("wall fixed-point iteration failed to converge at x = {x}: residual {residual:e}")]
    FixedPointDiverged { x: f64, residual: f64 },
    #[error("invalid geometry spec: {0}")]
    InvalidSpec(String),
}

/// One channel section: wall wavelength and the length of channel it spans.
///
/// Wall continuity across a section junction requires the section length to
/// be an integer multiple of its wavelength; each section's phase is aligned
/// so the profile starts a fresh period at the junction.
#[derive(Clone, Copy, Debug)]
pub struct Section<S> {
    pub wavelength: S,
    pub length: S,
}

/// Ratchet channel parameters: periodic, asymmetric wall profile.
#[derive(Clone, Debug)]
pub struct RatchetSpec<S> {
    pub sections: Vec<Section<S>>,
    /// Half of the minimal channel width `w0`.
    pub half_min_width: S,
    /// Amplitude `d0` of the half-width variation; `d0 = 0` is a flat channel.
    pub amplitude: S,
    /// Asymmetry `alpha` of the wall profile, `0 <= alpha < 1`.
    pub asymmetry: S,
}

const FIXED_POINT_MAX_ITER: usize = 200;

fn fixed_point_tol<S: Scalar>() -> S {
    num::<S>(1e-12).max(S::epsilon() * num(100.0))
}

impl<S: Scalar> RatchetSpec<S> {
    pub fn new(
        sections: Vec<Section<S>>,
        half_min_width: S,
        amplitude: S,
        asymmetry: S,
    ) -> Result<Self, GeometryError> {
        let spec = Self {
            sections,
            half_min_width,
            amplitude,
            asymmetry,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Single-section ratchet spanning `periods` wavelengths.
    pub fn uniform(
        wavelength: S,
        periods: usize,
        half_min_width: S,
        amplitude: S,
        asymmetry: S,
    ) -> Result<Self, GeometryError> {
        let length = wavelength * S::from_usize(periods).unwrap();
        Self::new(
            vec![Section { wavelength, length }],
            half_min_width,
            amplitude,
            asymmetry,
        )
    }

    pub fn validate(&self) -> Result<(), GeometryError> {
        if self.sections.is_empty() {
            return Err(GeometryError::InvalidSpec("no sections".into()));
        }
        for (k, s) in self.sections.iter().enumerate() {
            if !(s.wavelength > S::zero()) || !(s.length > S::zero()) {
                return Err(GeometryError::InvalidSpec(format!(
                    "section {k}: wavelength and length must be positive"
                )));
            }
        }
        if !(self.asymmetry >= S::zero() && self.asymmetry < S::one()) {
            return Err(GeometryError::InvalidSpec(
                "asymmetry must satisfy 0 <= alpha < 1".into(),
            ));
        }
        if !(self.half_min_width > S::zero()) {
            return Err(GeometryError::InvalidSpec("w0 must be positive".into()));
        }
        if self.amplitude < S::zero() {
            return Err(GeometryError::InvalidSpec("d0 must be nonnegative".into()));
        }
        Ok(())
    }

    /// Total channel length covered by the sections.
    pub fn span(&self) -> S {
        self.sections
            .iter()
            .fold(S::zero(), |acc, s| acc + s.length)
    }

    /// Section index and section start coordinate for a position `x`
    /// (measured from the spec origin). Positions outside the section union
    /// extend the first/last section periodically.
    fn section_at(&self, x: S) -> (usize, S) {
        let mut start = S::zero();
        for (k, s) in self.sections.iter().enumerate() {
            let end = start + s.length;
            if x < end || k + 1 == self.sections.len() {
                return (k, start);
            }
            start = end;
        }
        unreachable!("sections are non-empty");
    }

    /// Solves `g = sin(2*pi*x'/L0 + alpha*g)` for the section containing `x`
    /// by plain fixed-point iteration from `g = 0`.
    pub fn profile_shape(&self, x: S) -> Result<S, GeometryError> {
        let (k, start) = self.section_at(x);
        let s = self.sections[k];
        let phase = (S::PI() + S::PI()) * (x - start) / s.wavelength;
        let tol = fixed_point_tol::<S>();
        let mut g = S::zero();
        for _ in 0..FIXED_POINT_MAX_ITER {
            let next = (phase + self.asymmetry * g).sin();
            let delta = (next - g).abs();
            g = next;
            if delta <= tol {
                return Ok(g);
            }
        }
        let residual = (g - (phase + self.asymmetry * g).sin()).abs();
        Err(GeometryError::FixedPointDiverged {
            x: x.to_f64().unwrap_or(f64::NAN),
            residual: residual.to_f64().unwrap_or(f64::NAN),
        })
    }

    /// Wall ordinate `f(x) = d0*(g(x) - 1) - w0`; walls sit at `y = ±f(x)`,
    /// and `f <= -w0` always, so the interior is `|y| < -f(x)`.
    pub fn wall_profile(&self, x: S) -> Result<S, GeometryError> {
        let g = self.profile_shape(x)?;
        Ok(self.amplitude * (g - S::one()) - self.half_min_width)
    }

    /// Channel half-width `-f(x) = w0 + d0*(1 - g(x))`.
    pub fn half_width(&self, x: S) -> Result<S, GeometryError> {
        Ok(-self.wall_profile(x)?)
    }

    /// d/dx of the half-width, from implicit differentiation of the
    /// fixed-point equation.
    pub fn half_width_slope(&self, x: S) -> Result<S, GeometryError> {
        let (k, start) = self.section_at(x);
        let s = self.sections[k];
        let g = self.profile_shape(x)?;
        let two_pi = S::PI() + S::PI();
        let c = (two_pi * (x - start) / s.wavelength + self.asymmetry * g).cos();
        let dg = two_pi / s.wavelength * c / (S::one() - self.asymmetry * c);
        Ok(-self.amplitude * dg)
    }

    fn min_wavelength(&self) -> S {
        self.sections
            .iter()
            .map(|s| s.wavelength)
            .fold(self.sections[0].wavelength, |a, b| a.min(b))
    }
}

/// Where a wall-distance query landed.
#[derive(Clone, Copy, Debug)]
pub struct WallProximity<S> {
    /// Closest point on the domain boundary.
    pub foot: Vec2<S>,
    /// Signed distance: positive inside the domain, negative outside.
    pub dist: S,
    /// Unit tangent along the boundary, `normal` rotated by +90 degrees.
    pub tangent: Vec2<S>,
    /// Unit outward normal of the domain at the foot.
    pub normal: Vec2<S>,
    /// False when the minimizer is (numerically) non-unique, e.g. on the
    /// medial axis between the two walls.
    pub unique: bool,
}

#[derive(Clone, Debug)]
enum Kind<S> {
    Free,
    Flat { half_width: S },
    Ratchet(RatchetSpec<S>),
}

/// Sampled wall curve for fast distance queries against ratchet walls.
#[derive(Clone, Debug)]
struct WallTable<S> {
    u0: S,
    du: S,
    h: Vec<S>,
    dh: Vec<S>,
}

impl<S: Scalar> WallTable<S> {
    fn build(spec: &RatchetSpec<S>, origin: S, lo: S, hi: S) -> Result<Self, GeometryError> {
        let du = spec.min_wavelength() / num(256.0);
        let n = ((hi - lo) / du).ceil().to_usize().unwrap_or(0) + 2;
        let mut h = Vec::with_capacity(n);
        let mut dh = Vec::with_capacity(n);
        for i in 0..n {
            let u = lo + du * S::from_usize(i).unwrap();
            h.push(spec.half_width(u - origin)?);
            dh.push(spec.half_width_slope(u - origin)?);
        }
        Ok(Self { u0: lo, du, h, dh })
    }

    #[inline]
    fn len(&self) -> usize {
        self.h.len()
    }

    #[inline]
    fn u_at(&self, i: usize) -> S {
        self.u0 + self.du * S::from_usize(i).unwrap()
    }

    #[inline]
    fn covers(&self, x: S) -> bool {
        x >= self.u0 && x <= self.u_at(self.len() - 1)
    }

    /// Linear interpolation of the half-width; caller must check `covers`.
    fn h_interp(&self, x: S) -> S {
        let t = ((x - self.u0) / self.du).max(S::zero());
        let i = t.floor().to_usize().unwrap_or(0).min(self.len() - 2);
        let frac = t - S::from_usize(i).unwrap();
        self.h[i] + (self.h[i + 1] - self.h[i]) * frac
    }

    fn dh_interp(&self, x: S) -> S {
        let t = ((x - self.u0) / self.du).max(S::zero());
        let i = t.floor().to_usize().unwrap_or(0).min(self.len() - 2);
        let frac = t - S::from_usize(i).unwrap();
        self.dh[i] + (self.dh[i + 1] - self.dh[i]) * frac
    }

    /// Nearest table point on the (upper) wall curve to `p`, restricted to
    /// `u >= u_min`, scanning outward from `p.x` with early exit.
    /// Returns `(u, squared distance)` of the best sample.
    fn nearest_sample(&self, p: Vec2<S>, u_min: S) -> Option<(usize, S)> {
        let last = self.len() - 1;
        let lo_idx = if u_min <= self.u0 {
            0
        } else {
            ((u_min - self.u0) / self.du).ceil().to_usize()?.min(last)
        };
        let center = ((p.x - self.u0) / self.du)
            .round()
            .max(S::zero())
            .to_usize()?
            .clamp(lo_idx, last);

        let d2_at = |i: usize| {
            let dx = self.u_at(i) - p.x;
            let dy = self.h[i] - p.y;
            dx * dx + dy * dy
        };

        let mut best = center;
        let mut best_d2 = d2_at(center);
        let mut k = 1usize;
        loop {
            let off = self.du * S::from_usize(k).unwrap();
            // Any sample at x-offset `off` is at least `off - du` away.
            let lower = (off - self.du).max(S::zero());
            if lower * lower > best_d2 {
                break;
            }
            let mut advanced = false;
            if center + k <= last {
                let d2 = d2_at(center + k);
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = center + k;
                }
                advanced = true;
            }
            if center >= k + lo_idx {
                let d2 = d2_at(center - k);
                if d2 < best_d2 {
                    best_d2 = d2;
                    best = center - k;
                }
                advanced = true;
            }
            if !advanced {
                break;
            }
            k += 1;
        }
        Some((best, best_d2))
    }
}

/// Flat or ratchet confinement with optional entrance, or free space.
#[derive(Clone, Debug)]
pub struct ChannelGeometry<S> {
    kind: Kind<S>,
    /// Walls exist for `x >= entrance`; left of it is an open reservoir.
    /// `None` means the walls extend over the whole axis.
    entrance: Option<S>,
    /// x coordinate of the wall phase origin (equals the entrance when set).
    origin: S,
    table: Option<WallTable<S>>,
}

/// How many wall samples per wavelength the exact closest-point search uses.
const SAMPLES_PER_WAVELENGTH: usize = 64;
/// Bisection steps refining the closest-point parameter.
const REFINE_BISECTIONS: usize = 30;

impl<S: Scalar> ChannelGeometry<S> {
    pub fn free() -> Self {
        Self {
            kind: Kind::Free,
            entrance: None,
            origin: S::zero(),
            table: None,
        }
    }

    pub fn flat(half_width: S) -> Result<Self, GeometryError> {
        if !(half_width > S::zero()) {
            return Err(GeometryError::InvalidSpec(
                "flat channel half-width must be positive".into(),
            ));
        }
        Ok(Self {
            kind: Kind::Flat { half_width },
            entrance: None,
            origin: S::zero(),
            table: None,
        })
    }

    pub fn flat_with_entrance(half_width: S, entrance: S) -> Result<Self, GeometryError> {
        let mut geom = Self::flat(half_width)?;
        geom.entrance = Some(entrance);
        geom.origin = entrance;
        Ok(geom)
    }

    pub fn ratchet(spec: RatchetSpec<S>) -> Result<Self, GeometryError> {
        Self::ratchet_inner(spec, None)
    }

    pub fn ratchet_with_entrance(spec: RatchetSpec<S>, entrance: S) -> Result<Self, GeometryError> {
        Self::ratchet_inner(spec, Some(entrance))
    }

    fn ratchet_inner(spec: RatchetSpec<S>, entrance: Option<S>) -> Result<Self, GeometryError> {
        spec.validate()?;
        let origin = entrance.unwrap_or_else(S::zero);
        // Generous table range: queries behind the entrance hit the face
        // candidates, queries past the end use the periodic extension.
        let lo = origin - num::<S>(3.0);
        let hi = origin + spec.span() + num::<S>(4.0);
        let table = WallTable::build(&spec, origin, lo, hi)?;
        Ok(Self {
            kind: Kind::Ratchet(spec),
            entrance,
            origin,
            table: Some(table),
        })
    }

    pub fn is_free(&self) -> bool {
        matches!(self.kind, Kind::Free)
    }

    pub fn entrance(&self) -> Option<S> {
        self.entrance
    }

    pub fn ratchet_spec(&self) -> Option<&RatchetSpec<S>> {
        match &self.kind {
            Kind::Ratchet(spec) => Some(spec),
            _ => None,
        }
    }

    /// Minimal half-width over the whole channel (`w0` for ratchets).
    pub fn min_half_width(&self) -> Option<S> {
        match &self.kind {
            Kind::Free => None,
            Kind::Flat { half_width } => Some(*half_width),
            Kind::Ratchet(spec) => Some(spec.half_min_width),
        }
    }

    /// Channel half-width at `x`; `None` in free space.
    pub fn half_width_at(&self, x: S) -> Result<Option<S>, GeometryError> {
        match &self.kind {
            Kind::Free => Ok(None),
            Kind::Flat { half_width } => Ok(Some(*half_width)),
            Kind::Ratchet(spec) => Ok(Some(spec.half_width(x - self.origin)?)),
        }
    }

    /// Whether `p` lies strictly inside the admissible domain.
    pub fn inside(&self, p: Vec2<S>) -> bool {
        match &self.kind {
            Kind::Free => true,
            _ => {
                if let Some(x0) = self.entrance {
                    if p.x < x0 {
                        return true;
                    }
                }
                match self.half_width_at(p.x) {
                    Ok(Some(h)) => p.y.abs() < h,
                    _ => true,
                }
            }
        }
    }

    /// Closest boundary point, signed distance, and boundary frame at `p`.
    ///
    /// Errors with [`GeometryError::NoWalls`] in free space. For ratchet
    /// walls the search samples the wall curve and refines the foot by
    /// bisection on the stationarity condition of the squared distance.
    pub fn closest_wall_point(&self, p: Vec2<S>) -> Result<WallProximity<S>, GeometryError> {
        match &self.kind {
            Kind::Free => Err(GeometryError::NoWalls),
            Kind::Flat { half_width } => Ok(self.closest_flat(p, *half_width)),
            Kind::Ratchet(spec) => self.closest_ratchet(p, spec),
        }
    }

    /// Fast variant used by the time-stepping hot loop: for ratchet walls the
    /// foot comes from the precomputed wall table (error well below the
    /// projection tube width); falls back to the exact search off-table.
    pub fn wall_proximity_fast(&self, p: Vec2<S>) -> Result<WallProximity<S>, GeometryError> {
        match &self.kind {
            Kind::Free => Err(GeometryError::NoWalls),
            Kind::Flat { half_width } => Ok(self.closest_flat(p, *half_width)),
            Kind::Ratchet(spec) => {
                let table = self.table.as_ref().expect("ratchet geometry has a table");
                if !table.covers(p.x) {
                    return self.closest_ratchet(p, spec);
                }
                let u_min = self.entrance.unwrap_or(table.u0);
                let mirrored = Vec2::new(p.x, p.y.abs());
                let Some((j, _)) = table.nearest_sample(mirrored, u_min) else {
                    return self.closest_ratchet(p, spec);
                };
                // Parabolic refinement of the squared distance around sample j.
                let d2 = |i: usize| {
                    let dx = table.u_at(i) - mirrored.x;
                    let dy = table.h[i] - mirrored.y;
                    dx * dx + dy * dy
                };
                let u = if j > 0 && j + 1 < table.len() {
                    let (a, b, c) = (d2(j - 1), d2(j), d2(j + 1));
                    let denom = a - b - b + c;
                    let shift = if denom > S::zero() {
                        (table.du * (a - c) / (denom + denom)).clamp(-table.du, table.du)
                    } else {
                        S::zero()
                    };
                    table.u_at(j) + shift
                } else {
                    table.u_at(j)
                };
                let u = u.max(u_min);
                let foot_half = Vec2::new(u, table.h_interp(u));
                let wall_dist = mirrored.dist(foot_half);
                let mut best = self.finish_candidate(p, foot_half, wall_dist, || {
                    Vec2::new(-table.dh_interp(u), S::one())
                });
                if let Some(face) = self.face_candidate(p, table.h_interp(self.origin)) {
                    if face.dist.abs() < best.dist.abs() {
                        best = face;
                    }
                }
                Ok(best)
            }
        }
    }

    fn closest_flat(&self, p: Vec2<S>, w: S) -> WallProximity<S> {
        let y_abs = p.y.abs();
        let mirrored = Vec2::new(p.x, y_abs);
        // Walls only exist right of the entrance; clamp the foot there.
        let foot_half = Vec2::new(self.clamp_to_walls(p.x), w);
        let wall_dist = mirrored.dist(foot_half);
        let mut prox = self.finish_candidate(p, foot_half, wall_dist, || Vec2::new(S::zero(), S::one()));
        // Equidistant from both walls: flag the ambiguity.
        if foot_half.x == p.x && y_abs < w * num(1e-9) {
            prox.unique = false;
        }
        if let Some(face) = self.face_candidate(p, w) {
            if face.dist.abs() < prox.dist.abs() {
                prox = face;
            }
        }
        prox
    }

    fn closest_ratchet(
        &self,
        p: Vec2<S>,
        spec: &RatchetSpec<S>,
    ) -> Result<WallProximity<S>, GeometryError> {
        let mirrored = Vec2::new(p.x, p.y.abs());
        let u_min = self.entrance;

        // Upper bound on the distance: the wall point straight above p.
        let h_here = spec.half_width(self.clamp_to_walls(mirrored.x) - self.origin)?;
        let mut radius = (h_here - mirrored.y).abs() + spec.min_wavelength();
        if let Some(x0) = u_min {
            radius = radius.min(mirrored.dist(Vec2::new(x0, h_here.max(mirrored.y))) + spec.min_wavelength());
        }

        let du = spec.min_wavelength() / S::from_usize(SAMPLES_PER_WAVELENGTH).unwrap();
        let lo = match u_min {
            Some(x0) => (mirrored.x - radius).max(x0),
            None => mirrored.x - radius,
        };
        let hi = mirrored.x + radius;
        let count = ((hi - lo) / du).ceil().to_usize().unwrap_or(1).max(2);

        let mut samples = Vec::with_capacity(count + 1);
        let mut best_u = lo;
        let mut best_d2 = S::infinity();
        let mut opposite_d2 = S::infinity();
        for i in 0..=count {
            let u = lo + (hi - lo) * S::from_usize(i).unwrap() / S::from_usize(count).unwrap();
            let h = spec.half_width(u - self.origin)?;
            let dx = u - mirrored.x;
            let dy = h - mirrored.y;
            let d2 = dx * dx + dy * dy;
            if d2 < best_d2 {
                best_d2 = d2;
                best_u = u;
            }
            // Mirror wall (y = -h) seen from the upper half-plane.
            let dy_op = h + mirrored.y;
            opposite_d2 = opposite_d2.min(dx * dx + dy_op * dy_op);
            samples.push((u, d2));
        }
        // Best sample well away from the global best: a second local basin.
        let exclusion = spec.min_wavelength() / num(4.0);
        let second_d2 = samples
            .iter()
            .filter(|(u, _)| (*u - best_u).abs() > exclusion)
            .map(|(_, d2)| *d2)
            .fold(S::infinity(), |a, b| a.min(b));

        // Refine by bisection on the stationarity condition
        // phi(u) = (u - px) + (h(u) - py) h'(u), falling back to a ternary
        // shrink when phi does not change sign across the bracket.
        let phi = |u: S| -> Result<S, GeometryError> {
            let h = spec.half_width(u - self.origin)?;
            let dh = spec.half_width_slope(u - self.origin)?;
            Ok((u - mirrored.x) + (h - mirrored.y) * dh)
        };
        let mut a = best_u - du;
        let mut b = best_u + du;
        if let Some(x0) = u_min {
            a = a.max(x0);
        }
        let (mut fa, fb) = (phi(a)?, phi(b)?);
        let mut u_star;
        if (fa <= S::zero()) != (fb <= S::zero()) {
            for _ in 0..REFINE_BISECTIONS {
                let mid = (a + b) / num(2.0);
                let fm = phi(mid)?;
                if (fa <= S::zero()) != (fm <= S::zero()) {
                    b = mid;
                } else {
                    a = mid;
                    fa = fm;
                }
            }
            u_star = (a + b) / num(2.0);
        } else {
            let d2_of = |u: S| -> Result<S, GeometryError> {
                let h = spec.half_width(u - self.origin)?;
                let dx = u - mirrored.x;
                let dy = h - mirrored.y;
                Ok(dx * dx + dy * dy)
            };
            for _ in 0..REFINE_BISECTIONS {
                let third = (b - a) / num(3.0);
                let (u1, u2) = (a + third, b - third);
                if d2_of(u1)? <= d2_of(u2)? {
                    b = u2;
                } else {
                    a = u1;
                }
            }
            u_star = (a + b) / num(2.0);
        }
        if let Some(x0) = u_min {
            u_star = u_star.max(x0);
        }

        let h_star = spec.half_width(u_star - self.origin)?;
        let foot_half = Vec2::new(u_star, h_star);
        let wall_dist = mirrored.dist(foot_half);
        let dh_star = spec.half_width_slope(u_star - self.origin)?;
        let mut prox = self.finish_candidate(p, foot_half, wall_dist, || Vec2::new(-dh_star, S::one()));

        if let Some(face) = self.face_candidate(p, spec.half_width(S::zero())?) {
            if face.dist.abs() < prox.dist.abs() {
                prox = face;
            }
        }

        // Non-uniqueness: a distinct wall basin, or the opposite wall,
        // at (numerically) the same distance.
        let d_best = prox.dist.abs();
        let tol = (d_best * num(1e-9)).max(num(1e-12));
        if (second_d2.sqrt() - d_best).abs() <= tol || (opposite_d2.sqrt() - d_best).abs() <= tol {
            prox.unique = false;
        }
        Ok(prox)
    }

    fn clamp_to_walls(&self, x: S) -> S {
        match self.entrance {
            Some(x0) => x.max(x0),
            None => x,
        }
    }

    /// Distance to the vertical wall end faces at the entrance, if any.
    /// The faces are the rays `{x0} x [h(x0), inf)` and its mirror image.
    fn face_candidate(&self, p: Vec2<S>, h_at_entrance: S) -> Option<WallProximity<S>> {
        let x0 = self.entrance?;
        let y_abs = p.y.abs();
        let foot_half = Vec2::new(x0, y_abs.max(h_at_entrance));
        let mirrored = Vec2::new(p.x, y_abs);
        let dist = mirrored.dist(foot_half);
        Some(self.finish_candidate(p, foot_half, dist, || Vec2::new(S::one(), S::zero())))
    }

    /// Builds the signed proximity for a candidate foot found on the upper
    /// half (y >= 0); mirrors back for points below the axis. The outward
    /// normal is taken radially between point and foot where possible, with
    /// the provided boundary-frame normal as the on-boundary fallback.
    fn finish_candidate(
        &self,
        p: Vec2<S>,
        foot_upper: Vec2<S>,
        dist: S,
        upper_normal: impl FnOnce() -> Vec2<S>,
    ) -> WallProximity<S> {
        let flip = p.y < S::zero();
        let foot = if flip {
            Vec2::new(foot_upper.x, -foot_upper.y)
        } else {
            foot_upper
        };
        let is_inside = self.inside(p);
        let tiny = num::<S>(1e-12);
        let normal = if dist > tiny {
            let radial = (foot - p) / dist;
            if is_inside {
                radial
            } else {
                -radial
            }
        } else {
            let n = upper_normal();
            let n = n.normalized().unwrap_or(Vec2::new(S::zero(), S::one()));
            if flip {
                Vec2::new(n.x, -n.y)
            } else {
                n
            }
        };
        let signed = if is_inside { dist } else { -dist };
        WallProximity {
            foot,
            dist: signed,
            tangent: normal.perp(),
            normal,
            unique: true,
        }
    }

    /// Wall polyline `(x, y_top, y_bottom)` over `[x_lo, x_hi]`, for export.
    pub fn wall_polyline(
        &self,
        x_lo: S,
        x_hi: S,
        count: usize,
    ) -> Result<Vec<(S, S, S)>, GeometryError> {
        if self.is_free() {
            return Err(GeometryError::NoWalls);
        }
        let count = count.max(2);
        let mut rows = Vec::with_capacity(count);
        for i in 0..count {
            let x = x_lo + (x_hi - x_lo) * S::from_usize(i).unwrap() / S::from_usize(count - 1).unwrap();
            let h = self
                .half_width_at(x)?
                .expect("non-free geometry has walls");
            rows.push((x, h, -h));
        }
        Ok(rows)
    }
}
