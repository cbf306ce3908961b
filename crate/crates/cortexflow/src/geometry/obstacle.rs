//! Softened obstacle potential for the minimizing-movement solver.
//!
//! The hard constraint "cortex inside the channel" is relaxed into the
//! potential `W = 1 / (delta + rho * indicator)`, where `rho` is a positive
//! smoothing kernel of unit mass. `W` plateaus at `1/(delta+1)` deep inside
//! the admissible domain and at `1/delta` deep outside; its gradient points
//! across the wall from inside to outside. `W` and its gradient are sampled
//! on a Cartesian grid once and queried by bilinear interpolation.

use std::sync::atomic::{AtomicU64, Ordering};

use crate::scalar::{num, Scalar};
use crate::vec2::Vec2;

use super::{ChannelGeometry, GeometryError};

/// Sampled softened wall potential over a bounding box.
#[derive(Debug)]
pub struct SoftObstacle<S> {
    delta: S,
    kernel_radius: S,
    spacing: S,
    x0: S,
    y0: S,
    nx: usize,
    ny: usize,
    w: Vec<S>,
    gx: Vec<S>,
    gy: Vec<S>,
    clamp_events: AtomicU64,
}

/// Radially symmetric cosine bump of the given radius, sampled on the grid
/// and normalized so the discrete taps sum to one.
fn kernel_taps<S: Scalar>(radius: S, spacing: S) -> (Vec<S>, usize) {
    let half = (radius / spacing).ceil().to_usize().unwrap_or(1);
    let size = 2 * half + 1;
    let mut taps = vec![S::zero(); size * size];
    let mut total = S::zero();
    for j in 0..size {
        for i in 0..size {
            let dx = spacing * (S::from_usize(i).unwrap() - S::from_usize(half).unwrap());
            let dy = spacing * (S::from_usize(j).unwrap() - S::from_usize(half).unwrap());
            let r = (dx * dx + dy * dy).sqrt();
            if r <= radius {
                let w = S::one() + (S::PI() * r / radius).cos();
                taps[j * size + i] = w;
                total += w;
            }
        }
    }
    for t in taps.iter_mut() {
        *t = *t / total;
    }
    (taps, half)
}

impl<S: Scalar> SoftObstacle<S> {
    /// Samples the potential for `geom` over `[x_lo, x_hi] x [y_lo, y_hi]`
    /// (automatically padded by the kernel support).
    pub fn build(
        geom: &ChannelGeometry<S>,
        delta: S,
        x_range: (S, S),
        y_range: (S, S),
    ) -> Result<Self, GeometryError> {
        if geom.is_free() {
            return Err(GeometryError::NoWalls);
        }
        if !(delta > S::zero()) {
            return Err(GeometryError::InvalidSpec(
                "obstacle softness delta must be positive".into(),
            ));
        }
        let spacing = delta / num(4.0);
        let kernel_radius = delta + delta;
        let (taps, half) = kernel_taps(kernel_radius, spacing);
        let size = 2 * half + 1;

        let pad = spacing * S::from_usize(half + 2).unwrap();
        let x0 = x_range.0 - pad;
        let y0 = y_range.0 - pad;
        let nx = ((x_range.1 + pad - x0) / spacing).ceil().to_usize().unwrap() + 1;
        let ny = ((y_range.1 + pad - y0) / spacing).ceil().to_usize().unwrap() + 1;

        // Indicator of the admissible domain on the kernel-extended grid.
        let ex = nx + 2 * half;
        let ey = ny + 2 * half;
        let mut indicator = vec![S::zero(); ex * ey];
        for j in 0..ey {
            let y = y0 + spacing * (S::from_usize(j).unwrap() - S::from_usize(half).unwrap());
            for i in 0..ex {
                let x = x0 + spacing * (S::from_usize(i).unwrap() - S::from_usize(half).unwrap());
                if geom.inside(Vec2::new(x, y)) {
                    indicator[j * ex + i] = S::one();
                }
            }
        }

        let mut w = vec![S::zero(); nx * ny];
        for j in 0..ny {
            for i in 0..nx {
                let mut conv = S::zero();
                for kj in 0..size {
                    let row = (j + kj) * ex + i;
                    let tap_row = kj * size;
                    for ki in 0..size {
                        conv += taps[tap_row + ki] * indicator[row + ki];
                    }
                }
                let conv = conv.min(S::one()).max(S::zero());
                w[j * nx + i] = S::one() / (delta + conv);
            }
        }

        // Central differences inside, one-sided at the borders.
        let mut gx = vec![S::zero(); nx * ny];
        let mut gy = vec![S::zero(); nx * ny];
        let two_h = spacing + spacing;
        for j in 0..ny {
            for i in 0..nx {
                let idx = j * nx + i;
                gx[idx] = if i == 0 {
                    (w[idx + 1] - w[idx]) / spacing
                } else if i + 1 == nx {
                    (w[idx] - w[idx - 1]) / spacing
                } else {
                    (w[idx + 1] - w[idx - 1]) / two_h
                };
                gy[idx] = if j == 0 {
                    (w[idx + nx] - w[idx]) / spacing
                } else if j + 1 == ny {
                    (w[idx] - w[idx - nx]) / spacing
                } else {
                    (w[idx + nx] - w[idx - nx]) / two_h
                };
            }
        }

        Ok(Self {
            delta,
            kernel_radius,
            spacing,
            x0,
            y0,
            nx,
            ny,
            w,
            gx,
            gy,
            clamp_events: AtomicU64::new(0),
        })
    }

    pub fn delta(&self) -> S {
        self.delta
    }

    pub fn kernel_radius(&self) -> S {
        self.kernel_radius
    }

    /// Number of queries that fell outside the sampled box and were clamped.
    pub fn clamp_events(&self) -> u64 {
        self.clamp_events.load(Ordering::Relaxed)
    }

    fn locate(&self, p: Vec2<S>) -> (usize, usize, S, S) {
        let mut tx = (p.x - self.x0) / self.spacing;
        let mut ty = (p.y - self.y0) / self.spacing;
        let max_x = S::from_usize(self.nx - 1).unwrap();
        let max_y = S::from_usize(self.ny - 1).unwrap();
        if tx < S::zero() || tx > max_x || ty < S::zero() || ty > max_y {
            self.clamp_events.fetch_add(1, Ordering::Relaxed);
            tx = tx.max(S::zero()).min(max_x);
            ty = ty.max(S::zero()).min(max_y);
        }
        let i = tx.floor().to_usize().unwrap_or(0).min(self.nx - 2);
        let j = ty.floor().to_usize().unwrap_or(0).min(self.ny - 2);
        let fx = tx - S::from_usize(i).unwrap();
        let fy = ty - S::from_usize(j).unwrap();
        (i, j, fx, fy)
    }

    fn bilinear(&self, grid: &[S], p: Vec2<S>) -> S {
        let (i, j, fx, fy) = self.locate(p);
        let idx = j * self.nx + i;
        let one = S::one();
        grid[idx] * (one - fx) * (one - fy)
            + grid[idx + 1] * fx * (one - fy)
            + grid[idx + self.nx] * (one - fx) * fy
            + grid[idx + self.nx + 1] * fx * fy
    }

    /// Potential value `W(p)`.
    pub fn value(&self, p: Vec2<S>) -> S {
        self.bilinear(&self.w, p)
    }

    /// Potential gradient at `p`, clamped to the sampled box.
    pub fn grad(&self, p: Vec2<S>) -> Vec2<S> {
        Vec2::new(self.bilinear(&self.gx, p), self.bilinear(&self.gy, p))
    }
}
