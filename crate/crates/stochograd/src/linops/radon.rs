//! Ray-driven discrete X-ray transform for a parallel-beam geometry.
//!
//! The image is a grid of `h x w` unit pixels centred at the origin. For the
//! angle `theta_a = a*pi/n_angles` the detector axis is `(cos t, sin t)` and
//! rays travel along `(-sin t, cos t)`; detector bins are unit-spaced and
//! centred. Each ray accumulates exact pixel-intersection lengths (Siddon
//! traversal), and the adjoint scatters with the very same weights, so the
//! pair is an exact transpose.

use crate::vector::Shape;

#[derive(Debug)]
pub struct RadonGeometry {
    h: usize,
    w: usize,
    n_angles: usize,
    n_det: usize,
    cos: Vec<f64>,
    sin: Vec<f64>,
}

const EPS: f64 = 1e-12;

impl RadonGeometry {
    pub fn new(h: usize, w: usize, n_angles: usize, n_det: usize) -> Self {
        let mut cos = Vec::with_capacity(n_angles);
        let mut sin = Vec::with_capacity(n_angles);
        for a in 0..n_angles {
            let theta = a as f64 * std::f64::consts::PI / n_angles as f64;
            cos.push(theta.cos());
            sin.push(theta.sin());
        }
        RadonGeometry {
            h,
            w,
            n_angles,
            n_det,
            cos,
            sin,
        }
    }

    pub fn domain(&self) -> Shape {
        Shape::Image {
            h: self.h,
            w: self.w,
        }
    }

    pub fn codomain(&self) -> Shape {
        Shape::Flat(self.n_angles * self.n_det)
    }

    pub fn n_angles(&self) -> usize {
        self.n_angles
    }

    pub fn n_det(&self) -> usize {
        self.n_det
    }

    /// Sinogram row indices belonging to the given angles, detector-major.
    pub fn rows_for_angles(&self, angles: &[usize]) -> Vec<usize> {
        let mut rows = Vec::with_capacity(angles.len() * self.n_det);
        for &a in angles {
            for k in 0..self.n_det {
                rows.push(a * self.n_det + k);
            }
        }
        rows
    }

    pub(crate) fn ray_dot(&self, ray: usize, x: &[f64]) -> f64 {
        let mut acc = 0.0;
        self.trace(ray, |p, len| acc += len * x[p]);
        acc
    }

    pub(crate) fn ray_scatter(&self, ray: usize, v: f64, out: &mut [f64]) {
        self.trace(ray, |p, len| out[p] += len * v);
    }

    /// Walk the ray through the pixel grid, emitting `(pixel, length)` pairs.
    fn trace<F: FnMut(usize, f64)>(&self, ray: usize, mut emit: F) {
        let a = ray / self.n_det;
        let k = ray % self.n_det;
        let (c, s) = (self.cos[a], self.sin[a]);
        let t = k as f64 - (self.n_det as f64 - 1.0) / 2.0;
        // base point and direction of the ray
        let (px, py) = (t * c, t * s);
        let (vx, vy) = (-s, c);

        let x0 = -(self.w as f64) / 2.0;
        let y0 = -(self.h as f64) / 2.0;
        let x1 = x0 + self.w as f64;
        let y1 = y0 + self.h as f64;

        // clip the parameter range to the image box
        let mut s_lo = f64::NEG_INFINITY;
        let mut s_hi = f64::INFINITY;
        if vx.abs() > EPS {
            let (a1, a2) = ((x0 - px) / vx, (x1 - px) / vx);
            s_lo = s_lo.max(a1.min(a2));
            s_hi = s_hi.min(a1.max(a2));
        } else if px < x0 || px > x1 {
            return;
        }
        if vy.abs() > EPS {
            let (b1, b2) = ((y0 - py) / vy, (y1 - py) / vy);
            s_lo = s_lo.max(b1.min(b2));
            s_hi = s_hi.min(b1.max(b2));
        } else if py < y0 || py > y1 {
            return;
        }
        if s_lo >= s_hi {
            return;
        }

        // entry pixel
        let ex = px + s_lo * vx;
        let ey = py + s_lo * vy;
        let mut ix = ((ex - x0).floor() as isize).clamp(0, self.w as isize - 1);
        let mut iy = ((ey - y0).floor() as isize).clamp(0, self.h as isize - 1);

        // next gridline crossings along each axis
        let (mut sx, dsx, step_x) = if vx > EPS {
            ((x0 + (ix + 1) as f64 - px) / vx, 1.0 / vx, 1isize)
        } else if vx < -EPS {
            ((x0 + ix as f64 - px) / vx, -1.0 / vx, -1isize)
        } else {
            (f64::INFINITY, f64::INFINITY, 0isize)
        };
        let (mut sy, dsy, step_y) = if vy > EPS {
            ((y0 + (iy + 1) as f64 - py) / vy, 1.0 / vy, 1isize)
        } else if vy < -EPS {
            ((y0 + iy as f64 - py) / vy, -1.0 / vy, -1isize)
        } else {
            (f64::INFINITY, f64::INFINITY, 0isize)
        };

        let mut s_cur = s_lo;
        let limit = s_hi - EPS;
        loop {
            let s_next = sx.min(sy).min(s_hi);
            let len = s_next - s_cur;
            if len > 0.0 {
                emit((iy as usize) * self.w + ix as usize, len);
            }
            if s_next >= limit {
                break;
            }
            if sx <= sy {
                ix += step_x;
                sx += dsx;
                if ix < 0 || ix >= self.w as isize {
                    break;
                }
            } else {
                iy += step_y;
                sy += dsy;
                if iy < 0 || iy >= self.h as isize {
                    break;
                }
            }
            s_cur = s_next;
        }
    }
}
