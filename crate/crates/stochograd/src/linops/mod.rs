//! Matrix-free linear operators with matched adjoints.
//!
//! Every variant implements `apply` and `adjoint` as exact transposes of one
//! another (same weights, transposed loops), so the dot-product test
//! `<Ax, y> = <x, A*y>` holds to rounding for all of them.

mod radon;

pub use radon::RadonGeometry;

use crate::error::{invalid, Error, Result};
use crate::rng::{stream, STREAM_POWER_METHOD};
use crate::vector::{DenseVector, Shape};
use rand::RngExt;
use std::sync::Arc;

/// Small row-major dense matrix, used by the `Dense` variant and by
/// `materialise`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid("matrix data length does not match dimensions"));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn at(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn at_mut(&mut self, r: usize, c: usize) -> &mut f64 {
        &mut self.data[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(x).map(|(a, b)| a * b).sum())
            .collect()
    }

    pub fn matvec_t(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.cols];
        for (r, &yr) in y.iter().enumerate().take(self.rows) {
            for (o, a) in out.iter_mut().zip(self.row(r)) {
                *o += a * yr;
            }
        }
        out
    }
}

/// Cell of a block operator grid.
#[derive(Debug, Clone)]
pub enum BlockCell {
    Op(LinearMap),
    Zero,
    Identity,
    NegIdentity,
}

#[derive(Debug, Clone)]
pub struct BlockOperator {
    grid: Vec<Vec<BlockCell>>,
    row_lens: Vec<usize>,
    col_lens: Vec<usize>,
    domain: Shape,
    codomain: Shape,
}

/// Bounded linear operator: `K`, `A`, subset blocks `A_i`, the spatial
/// gradient, and combinations of these.
#[derive(Debug, Clone)]
pub enum LinearMap {
    Identity {
        shape: Shape,
    },
    Zero {
        domain: Shape,
        codomain: Shape,
    },
    Dense {
        matrix: Arc<DenseMatrix>,
        domain: Shape,
        codomain: Shape,
    },
    /// 1-D periodic convolution with a uniform kernel of odd width, scaled so
    /// the operator norm is exactly 1.
    CirculantBlur {
        d: usize,
        width: usize,
    },
    /// Forward differences in both image axes, replicate (Neumann) boundary.
    /// Codomain layout: `[horizontal diffs (h*w), vertical diffs (h*w)]`.
    Grad2d {
        h: usize,
        w: usize,
    },
    ParallelRadon(Arc<RadonGeometry>),
    /// Selected rows of a parent operator, in the given order.
    RowSubset {
        parent: Arc<LinearMap>,
        rows: Arc<Vec<usize>>,
    },
    Block(Arc<BlockOperator>),
    Scaled {
        alpha: f64,
        inner: Arc<LinearMap>,
    },
}

impl LinearMap {
    pub fn identity(shape: Shape) -> Self {
        LinearMap::Identity { shape }
    }

    pub fn zero(domain: Shape, codomain: Shape) -> Self {
        LinearMap::Zero { domain, codomain }
    }

    pub fn dense(matrix: DenseMatrix) -> Self {
        let domain = Shape::Flat(matrix.cols());
        let codomain = Shape::Flat(matrix.rows());
        LinearMap::Dense {
            matrix: Arc::new(matrix),
            domain,
            codomain,
        }
    }

    pub fn dense_shaped(matrix: DenseMatrix, domain: Shape, codomain: Shape) -> Result<Self> {
        if matrix.cols() != domain.len() || matrix.rows() != codomain.len() {
            return Err(invalid("matrix dimensions do not match shapes"));
        }
        Ok(LinearMap::Dense {
            matrix: Arc::new(matrix),
            domain,
            codomain,
        })
    }

    pub fn scaled(alpha: f64, inner: LinearMap) -> Self {
        LinearMap::Scaled {
            alpha,
            inner: Arc::new(inner),
        }
    }

    pub fn domain(&self) -> Shape {
        match self {
            LinearMap::Identity { shape } => *shape,
            LinearMap::Zero { domain, .. } => *domain,
            LinearMap::Dense { domain, .. } => *domain,
            LinearMap::CirculantBlur { d, .. } => Shape::Flat(*d),
            LinearMap::Grad2d { h, w } => Shape::Image { h: *h, w: *w },
            LinearMap::ParallelRadon(g) => g.domain(),
            LinearMap::RowSubset { parent, .. } => parent.domain(),
            LinearMap::Block(b) => b.domain,
            LinearMap::Scaled { inner, .. } => inner.domain(),
        }
    }

    pub fn codomain(&self) -> Shape {
        match self {
            LinearMap::Identity { shape } => *shape,
            LinearMap::Zero { codomain, .. } => *codomain,
            LinearMap::Dense { codomain, .. } => *codomain,
            LinearMap::CirculantBlur { d, .. } => Shape::Flat(*d),
            LinearMap::Grad2d { h, w } => Shape::Flat(2 * h * w),
            LinearMap::ParallelRadon(g) => g.codomain(),
            LinearMap::RowSubset { rows, .. } => Shape::Flat(rows.len()),
            LinearMap::Block(b) => b.codomain,
            LinearMap::Scaled { inner, .. } => inner.codomain(),
        }
    }

    fn check_domain(&self, x: &DenseVector) -> Result<()> {
        if !x.shape().compatible(&self.domain()) {
            return Err(Error::ShapeMismatch {
                expected: self.domain(),
                got: x.shape(),
            });
        }
        Ok(())
    }

    fn check_codomain(&self, y: &DenseVector) -> Result<()> {
        if !y.shape().compatible(&self.codomain()) {
            return Err(Error::ShapeMismatch {
                expected: self.codomain(),
                got: y.shape(),
            });
        }
        Ok(())
    }

    /// `A x`
    pub fn apply(&self, x: &DenseVector) -> Result<DenseVector> {
        self.check_domain(x)?;
        let out = match self {
            LinearMap::Identity { .. } => x.as_slice().to_vec(),
            LinearMap::Zero { codomain, .. } => vec![0.0; codomain.len()],
            LinearMap::Dense { matrix, .. } => matrix.matvec(x.as_slice()),
            LinearMap::CirculantBlur { d, width } => {
                let mut out = vec![0.0; *d];
                for (i, o) in out.iter_mut().enumerate() {
                    *o = circulant_row_dot(*d, *width, i, x.as_slice());
                }
                out
            }
            LinearMap::Grad2d { h, w } => grad2d_apply(*h, *w, x.as_slice()),
            LinearMap::ParallelRadon(g) => {
                let mut out = vec![0.0; g.codomain().len()];
                for (ray, o) in out.iter_mut().enumerate() {
                    *o = g.ray_dot(ray, x.as_slice());
                }
                out
            }
            LinearMap::RowSubset { parent, rows } => {
                let mut out = vec![0.0; rows.len()];
                for (o, &r) in out.iter_mut().zip(rows.iter()) {
                    *o = parent.row_dot(r, x.as_slice())?;
                }
                out
            }
            LinearMap::Block(b) => b.apply(x.as_slice()),
            LinearMap::Scaled { alpha, inner } => {
                let mut y = inner.apply(x)?;
                y.scale(*alpha);
                return y.with_shape(self.codomain());
            }
        };
        DenseVector::new(out, self.codomain())
    }

    /// `A* y`
    pub fn adjoint(&self, y: &DenseVector) -> Result<DenseVector> {
        self.check_codomain(y)?;
        let out = match self {
            LinearMap::Identity { .. } => y.as_slice().to_vec(),
            LinearMap::Zero { domain, .. } => vec![0.0; domain.len()],
            LinearMap::Dense { matrix, .. } => matrix.matvec_t(y.as_slice()),
            LinearMap::CirculantBlur { d, width } => {
                // adjoint = convolution with the reversed kernel; the uniform
                // kernel is symmetric, so the adjoint is the operator itself
                let mut out = vec![0.0; *d];
                for (i, o) in out.iter_mut().enumerate() {
                    *o = circulant_row_dot(*d, *width, i, y.as_slice());
                }
                out
            }
            LinearMap::Grad2d { h, w } => grad2d_adjoint(*h, *w, y.as_slice()),
            LinearMap::ParallelRadon(g) => {
                let mut out = vec![0.0; g.domain().len()];
                for (ray, &v) in y.as_slice().iter().enumerate() {
                    g.ray_scatter(ray, v, &mut out);
                }
                out
            }
            LinearMap::RowSubset { parent, rows } => {
                let mut out = vec![0.0; parent.domain().len()];
                for (&r, &v) in rows.iter().zip(y.as_slice()) {
                    parent.row_scatter(r, v, &mut out)?;
                }
                out
            }
            LinearMap::Block(b) => b.adjoint(y.as_slice()),
            LinearMap::Scaled { alpha, inner } => {
                let mut x = inner.adjoint(y)?;
                x.scale(*alpha);
                return x.with_shape(self.domain());
            }
        };
        DenseVector::new(out, self.domain())
    }

    /// Dot product of one operator row with `x`. Supported for the variants
    /// subset solvers slice by rows.
    fn row_dot(&self, row: usize, x: &[f64]) -> Result<f64> {
        match self {
            LinearMap::Identity { .. } => Ok(x[row]),
            LinearMap::Dense { matrix, .. } => {
                Ok(matrix.row(row).iter().zip(x).map(|(a, b)| a * b).sum())
            }
            LinearMap::CirculantBlur { d, width } => Ok(circulant_row_dot(*d, *width, row, x)),
            LinearMap::ParallelRadon(g) => Ok(g.ray_dot(row, x)),
            LinearMap::Scaled { alpha, inner } => Ok(alpha * inner.row_dot(row, x)?),
            _ => Err(invalid("operator does not support row access")),
        }
    }

    /// `out += v * (row of A)`, the transpose of `row_dot`.
    fn row_scatter(&self, row: usize, v: f64, out: &mut [f64]) -> Result<()> {
        match self {
            LinearMap::Identity { .. } => {
                out[row] += v;
                Ok(())
            }
            LinearMap::Dense { matrix, .. } => {
                for (o, a) in out.iter_mut().zip(matrix.row(row)) {
                    *o += a * v;
                }
                Ok(())
            }
            LinearMap::CirculantBlur { d, width } => {
                circulant_row_scatter(*d, *width, row, v, out);
                Ok(())
            }
            LinearMap::ParallelRadon(g) => {
                g.ray_scatter(row, v, out);
                Ok(())
            }
            LinearMap::Scaled { alpha, inner } => inner.row_scatter(row, alpha * v, out),
            _ => Err(invalid("operator does not support row access")),
        }
    }

    /// Whether `RowSubset` can slice this operator.
    pub fn supports_rows(&self) -> bool {
        matches!(
            self,
            LinearMap::Identity { .. }
                | LinearMap::Dense { .. }
                | LinearMap::CirculantBlur { .. }
                | LinearMap::ParallelRadon(_)
        ) || matches!(self, LinearMap::Scaled { inner, .. } if inner.supports_rows())
    }

    pub fn row_subset(parent: Arc<LinearMap>, rows: Vec<usize>) -> Result<Self> {
        if !parent.supports_rows() {
            return Err(invalid("parent operator does not support row access"));
        }
        let n = parent.codomain().len();
        if let Some(&bad) = rows.iter().find(|&&r| r >= n) {
            return Err(invalid(format!("row index {bad} out of range (rows {n})")));
        }
        Ok(LinearMap::RowSubset {
            parent,
            rows: Arc::new(rows),
        })
    }

    /// Exact operator norm when a closed form is available. Used by the
    /// smoothness diagnostics; `estimate_norm` always runs the power method.
    pub fn norm_hint(&self) -> Option<f64> {
        match self {
            LinearMap::Identity { .. } => Some(1.0),
            LinearMap::Zero { .. } => Some(0.0),
            // uniform kernel scaled by 1/width: DFT peaks at frequency zero
            // where it equals exactly 1
            LinearMap::CirculantBlur { .. } => Some(1.0),
            LinearMap::RowSubset { parent, rows } if rows.len() == 1 => match parent.as_ref() {
                // a single circulant row has norm 1/sqrt(width)
                LinearMap::CirculantBlur { width, .. } => Some(1.0 / (*width as f64).sqrt()),
                LinearMap::Identity { .. } => Some(1.0),
                _ => None,
            },
            LinearMap::Scaled { alpha, inner } => inner.norm_hint().map(|n| alpha.abs() * n),
            _ => None,
        }
    }

    /// `||A||^2` from the closed form when available, otherwise a
    /// deterministic power-method estimate.
    pub fn norm_sq_auto(&self) -> f64 {
        if let Some(n) = self.norm_hint() {
            return n * n;
        }
        let n = self.estimate_norm(1e-12, 4000, 0x5eed);
        n * n
    }

    /// Power-method estimate of the operator norm (largest singular value).
    ///
    /// Starts from a seeded uniform random vector, iterates `x <- A*A x`
    /// normalised, and stops when the relative change of the Rayleigh
    /// quotient drops below `tol` or after `max_iter` iterations.
    pub fn estimate_norm(&self, tol: f64, max_iter: usize, seed: u64) -> f64 {
        let d = self.domain().len();
        if d == 0 || self.codomain().is_empty() {
            return 0.0;
        }
        let mut rng = stream(seed, STREAM_POWER_METHOD);
        let mut b = DenseVector::new(
            (0..d).map(|_| rng.random_range(0.0..1.0)).collect(),
            self.domain(),
        )
        .expect("length matches");
        let nb = b.norm();
        if nb == 0.0 {
            return 0.0;
        }
        b.scale(1.0 / nb);
        let mut q_prev = f64::NAN;
        let mut q = 0.0;
        for _ in 0..max_iter {
            let ab = self.apply(&b).expect("domain checked");
            q = ab.norm_sq(); // Rayleigh quotient of A*A at unit b
            if q == 0.0 {
                return 0.0;
            }
            let mut z = self.adjoint(&ab).expect("codomain checked");
            let nz = z.norm();
            if nz == 0.0 {
                return 0.0;
            }
            z.scale(1.0 / nz);
            b = z;
            if q_prev.is_finite() && (q - q_prev).abs() <= tol * q.abs() {
                break;
            }
            q_prev = q;
        }
        q.sqrt()
    }

    /// Dense materialisation for small shapes; test oracles only.
    pub fn materialise(&self) -> Option<DenseMatrix> {
        let d = self.domain().len();
        let s = self.codomain().len();
        if d > 4096 || s > 4096 {
            return None;
        }
        let mut m = DenseMatrix::zeros(s, d);
        let mut e = DenseVector::zeros(self.domain());
        for j in 0..d {
            e.as_mut_slice()[j] = 1.0;
            let col = self.apply(&e).expect("shape is exact");
            for i in 0..s {
                *m.at_mut(i, j) = col[i];
            }
            e.as_mut_slice()[j] = 0.0;
        }
        Some(m)
    }
}

/// 1-D periodic uniform blur, kernel width `width` (odd), scaled so the
/// operator norm is 1; every row has 2-norm `1/sqrt(width)`.
pub fn make_circulant_blur(d: usize, width: usize) -> Result<LinearMap> {
    if d == 0 {
        return Err(invalid("blur length must be positive"));
    }
    if width.is_multiple_of(2) || width == 0 || width > d {
        return Err(invalid(format!(
            "kernel width must be odd and in [1, {d}], got {width}"
        )));
    }
    Ok(LinearMap::CirculantBlur { d, width })
}

fn circulant_row_dot(d: usize, width: usize, row: usize, x: &[f64]) -> f64 {
    let half = width / 2;
    let inv = 1.0 / width as f64;
    let mut acc = 0.0;
    for o in 0..width {
        let j = (row + d + o - half) % d;
        acc += x[j];
    }
    acc * inv
}

fn circulant_row_scatter(d: usize, width: usize, row: usize, v: f64, out: &mut [f64]) {
    let half = width / 2;
    let inv = 1.0 / width as f64;
    let vi = v * inv;
    for o in 0..width {
        let j = (row + d + o - half) % d;
        out[j] += vi;
    }
}

/// Forward-difference spatial gradient with replicate boundary.
///
/// Images of 1 pixel in both axes are rejected; a single row or column is
/// allowed (the differences along the degenerate axis are identically zero),
/// which is what the 1-D TV prox is built on.
pub fn make_grad_2d(h: usize, w: usize) -> Result<LinearMap> {
    if h == 0 || w == 0 || h * w < 2 {
        return Err(invalid(format!("degenerate image shape {h}x{w}")));
    }
    Ok(LinearMap::Grad2d { h, w })
}

fn grad2d_apply(h: usize, w: usize, u: &[f64]) -> Vec<f64> {
    let hw = h * w;
    let mut out = vec![0.0; 2 * hw];
    for i in 0..h {
        for j in 0..w {
            let p = i * w + j;
            if j + 1 < w {
                out[p] = u[p + 1] - u[p];
            }
            if i + 1 < h {
                out[hw + p] = u[p + w] - u[p];
            }
        }
    }
    out
}

fn grad2d_adjoint(h: usize, w: usize, y: &[f64]) -> Vec<f64> {
    let hw = h * w;
    let (dx, dy) = y.split_at(hw);
    let mut out = vec![0.0; hw];
    for i in 0..h {
        for j in 0..w {
            let p = i * w + j;
            let mut acc = 0.0;
            if j + 1 < w {
                acc -= dx[p];
            }
            if j >= 1 {
                acc += dx[p - 1];
            }
            if i + 1 < h {
                acc -= dy[p];
            }
            if i >= 1 {
                acc += dy[p - w];
            }
            out[p] = acc;
        }
    }
    out
}

/// Discrete parallel-beam X-ray transform on `h x w` unit pixels with
/// `n_angles` equispaced angles on `[0, pi)` and `n_det` unit-spaced detector
/// bins. Ray-driven with exact pixel-intersection lengths; the adjoint is the
/// literal transpose of the same weights.
pub fn make_parallel_radon(h: usize, w: usize, n_angles: usize, n_det: usize) -> Result<LinearMap> {
    if h == 0 || w == 0 || n_angles == 0 || n_det == 0 {
        return Err(invalid("radon dimensions must be positive"));
    }
    Ok(LinearMap::ParallelRadon(Arc::new(RadonGeometry::new(
        h, w, n_angles, n_det,
    ))))
}

/// Block operator from a rows x cols grid of cells.
pub fn make_block_operator(grid: Vec<Vec<BlockCell>>) -> Result<LinearMap> {
    if grid.is_empty() || grid[0].is_empty() {
        return Err(invalid("block grid must be non-empty"));
    }
    let n_cols = grid[0].len();
    if grid.iter().any(|r| r.len() != n_cols) {
        return Err(invalid("block grid rows have differing lengths"));
    }
    let n_rows = grid.len();

    // infer row/column lengths from the operator cells, then check identity
    // cells tie equal-sized row/column pairs
    let mut col_lens = vec![None; n_cols];
    let mut row_lens = vec![None; n_rows];
    for (r, row) in grid.iter().enumerate() {
        for (c, cell) in row.iter().enumerate() {
            if let BlockCell::Op(op) = cell {
                let dlen = op.domain().len();
                let clen = op.codomain().len();
                match col_lens[c] {
                    None => col_lens[c] = Some(dlen),
                    Some(l) if l == dlen => {}
                    Some(l) => {
                        return Err(invalid(format!(
                            "column {c}: domain length {dlen} conflicts with {l}"
                        )))
                    }
                }
                match row_lens[r] {
                    None => row_lens[r] = Some(clen),
                    Some(l) if l == clen => {}
                    Some(l) => {
                        return Err(invalid(format!(
                            "row {r}: codomain length {clen} conflicts with {l}"
                        )))
                    }
                }
            }
        }
    }
    // identity cells constrain row length == column length
    for pass in 0..2 {
        let _ = pass; // two passes propagate constraints both ways
        for (r, row) in grid.iter().enumerate() {
            for (c, cell) in row.iter().enumerate() {
                if matches!(cell, BlockCell::Identity | BlockCell::NegIdentity) {
                    match (row_lens[r], col_lens[c]) {
                        (Some(a), Some(b)) if a != b => {
                            return Err(invalid(format!(
                                "identity cell ({r},{c}) ties row length {a} to column length {b}"
                            )))
                        }
                        (Some(a), None) => col_lens[c] = Some(a),
                        (None, Some(b)) => row_lens[r] = Some(b),
                        _ => {}
                    }
                }
            }
        }
    }
    let row_lens: Vec<usize> = row_lens
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| invalid("a block row has no size-determining cell"))?;
    let col_lens: Vec<usize> = col_lens
        .into_iter()
        .collect::<Option<Vec<_>>>()
        .ok_or_else(|| invalid("a block column has no size-determining cell"))?;

    let domain = Shape::Flat(col_lens.iter().sum());
    let codomain = Shape::Flat(row_lens.iter().sum());
    Ok(LinearMap::Block(Arc::new(BlockOperator {
        grid,
        row_lens,
        col_lens,
        domain,
        codomain,
    })))
}

impl BlockOperator {
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.codomain.len()];
        let mut row_off = 0;
        for (r, row) in self.grid.iter().enumerate() {
            let rl = self.row_lens[r];
            let mut col_off = 0;
            for (c, cell) in row.iter().enumerate() {
                let cl = self.col_lens[c];
                let xs = &x[col_off..col_off + cl];
                let ys = &mut out[row_off..row_off + rl];
                match cell {
                    BlockCell::Zero => {}
                    BlockCell::Identity => {
                        for (y, v) in ys.iter_mut().zip(xs) {
                            *y += v;
                        }
                    }
                    BlockCell::NegIdentity => {
                        for (y, v) in ys.iter_mut().zip(xs) {
                            *y -= v;
                        }
                    }
                    BlockCell::Op(op) => {
                        let xv = DenseVector::new(xs.to_vec(), op.domain()).expect("cell shape");
                        let yv = op.apply(&xv).expect("cell shape");
                        for (y, v) in ys.iter_mut().zip(yv.as_slice()) {
                            *y += v;
                        }
                    }
                }
                col_off += cl;
            }
            row_off += rl;
        }
        out
    }

    fn adjoint(&self, y: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.domain.len()];
        let mut row_off = 0;
        for (r, row) in self.grid.iter().enumerate() {
            let rl = self.row_lens[r];
            let ys = &y[row_off..row_off + rl];
            let mut col_off = 0;
            for (c, cell) in row.iter().enumerate() {
                let cl = self.col_lens[c];
                let xs = &mut out[col_off..col_off + cl];
                match cell {
                    BlockCell::Zero => {}
                    BlockCell::Identity => {
                        for (x, v) in xs.iter_mut().zip(ys) {
                            *x += v;
                        }
                    }
                    BlockCell::NegIdentity => {
                        for (x, v) in xs.iter_mut().zip(ys) {
                            *x -= v;
                        }
                    }
                    BlockCell::Op(op) => {
                        let yv = DenseVector::new(ys.to_vec(), op.codomain()).expect("cell shape");
                        let xv = op.adjoint(&yv).expect("cell shape");
                        for (x, v) in xs.iter_mut().zip(xv.as_slice()) {
                            *x += v;
                        }
                    }
                }
                col_off += cl;
            }
            row_off += rl;
        }
        out
    }
}

/// `(grad 0-block; -I ...; 0 grad-per-channel)` operator of second-order TV:
/// acts on `(u, w)` stacked as `[h*w | 2*h*w]` and returns
/// `(grad u - w, grad w)` stacked as `[2*h*w | 4*h*w]`.
pub fn make_tgv_operator(h: usize, w: usize) -> Result<LinearMap> {
    let g = make_grad_2d(h, w)?;
    // gradient applied channel-wise to the 2-channel field w
    let gw = make_block_operator(vec![
        vec![BlockCell::Op(g.clone()), BlockCell::Zero],
        vec![BlockCell::Zero, BlockCell::Op(g.clone())],
    ])?;
    make_block_operator(vec![
        vec![BlockCell::Op(g), BlockCell::NegIdentity],
        vec![BlockCell::Zero, BlockCell::Op(gw)],
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vec_of(vals: &[f64]) -> DenseVector {
        DenseVector::from_slice(vals)
    }

    #[test]
    fn operators_are_shareable_across_threads() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<LinearMap>();
        assert_send_sync::<crate::functionals::Functional>();
        assert_send_sync::<crate::problem::PartitionedProblem>();
    }

    #[test]
    fn identity_applies() {
        let id = LinearMap::identity(Shape::Flat(3));
        let x = vec_of(&[1.0, 2.0, 3.0]);
        assert_eq!(id.apply(&x).unwrap().as_slice(), &[1.0, 2.0, 3.0]);
    }

    #[test]
    fn shape_mismatch_is_an_error() {
        let id = LinearMap::identity(Shape::Flat(3));
        let x = vec_of(&[1.0, 2.0]);
        assert!(matches!(id.apply(&x), Err(Error::ShapeMismatch { .. })));
        assert!(matches!(id.adjoint(&x), Err(Error::ShapeMismatch { .. })));
    }

    #[test]
    fn circulant_width_one_is_identity() {
        let k = make_circulant_blur(4, 1).unwrap();
        let x = vec_of(&[1.0, 0.0, 0.0, 0.0]);
        assert_eq!(k.apply(&x).unwrap().as_slice(), x.as_slice());
    }

    #[test]
    fn circulant_direct_convolution() {
        let k = make_circulant_blur(4, 3).unwrap();
        let x = vec_of(&[1.0, 0.0, 0.0, 0.0]);
        let y = k.apply(&x).unwrap();
        let third = 1.0 / 3.0;
        assert_eq!(y.as_slice(), &[third, third, 0.0, third]);
    }

    #[test]
    fn circulant_rejects_even_or_oversized_kernels() {
        assert!(make_circulant_blur(8, 2).is_err());
        assert!(make_circulant_blur(8, 9).is_err());
    }

    #[test]
    fn circulant_row_norms_closed_form() {
        for width in [1usize, 3, 5, 99] {
            let k = make_circulant_blur(128, width).unwrap();
            let m = k.materialise().unwrap();
            for r in 0..m.rows() {
                let norm: f64 = m.row(r).iter().map(|v| v * v).sum::<f64>().sqrt();
                assert!((norm - 1.0 / (width as f64).sqrt()).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn circulant_symmetric_kernel_is_self_adjoint() {
        let k = make_circulant_blur(9, 5).unwrap();
        let y = vec_of(&[1.0, -2.0, 0.5, 0.0, 3.0, 1.0, -1.0, 0.25, 2.0]);
        assert_eq!(
            k.adjoint(&y).unwrap().as_slice(),
            k.apply(&y).unwrap().as_slice()
        );
    }

    #[test]
    fn grad2d_constant_image_maps_to_zero() {
        let g = make_grad_2d(4, 5).unwrap();
        let x = DenseVector::new(vec![3.7; 20], Shape::Image { h: 4, w: 5 }).unwrap();
        assert!(g.apply(&x).unwrap().norm() == 0.0);
    }

    #[test]
    fn grad2d_two_by_two() {
        let g = make_grad_2d(2, 2).unwrap();
        let x = DenseVector::new(vec![0.0, 1.0, 0.0, 1.0], Shape::Image { h: 2, w: 2 }).unwrap();
        let y = g.apply(&x).unwrap();
        // horizontal diffs (1, 0, 1, 0), vertical all zero
        assert_eq!(y.as_slice(), &[1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn grad2d_rejects_single_pixel() {
        assert!(make_grad_2d(1, 1).is_err());
        assert!(make_grad_2d(0, 4).is_err());
        assert!(make_grad_2d(1, 2).is_ok());
    }

    #[test]
    fn dense_explicit_transpose() {
        let m = DenseMatrix::new(2, 2, vec![0.0, 1.0, 0.0, 0.0]).unwrap();
        let a = LinearMap::dense(m);
        let y = vec_of(&[1.0, 0.0]);
        assert_eq!(a.adjoint(&y).unwrap().as_slice(), &[0.0, 1.0]);
    }

    #[test]
    fn block_identity_wrap() {
        let b = make_block_operator(vec![vec![BlockCell::Op(LinearMap::identity(Shape::Flat(
            3,
        )))]])
        .unwrap();
        let x = vec_of(&[1.0, 2.0, 3.0]);
        assert_eq!(b.apply(&x).unwrap().as_slice(), x.as_slice());
    }

    #[test]
    fn block_vertical_stack_of_identities() {
        let b = make_block_operator(vec![
            vec![BlockCell::Op(LinearMap::identity(Shape::Flat(2)))],
            vec![BlockCell::Op(LinearMap::identity(Shape::Flat(2)))],
        ])
        .unwrap();
        let x = vec_of(&[1.0, 2.0]);
        assert_eq!(b.apply(&x).unwrap().as_slice(), &[1.0, 2.0, 1.0, 2.0]);
    }

    #[test]
    fn block_rejects_inconsistent_shapes() {
        let r = make_block_operator(vec![
            vec![BlockCell::Op(LinearMap::identity(Shape::Flat(2)))],
            vec![BlockCell::Op(LinearMap::identity(Shape::Flat(3)))],
        ]);
        assert!(r.is_err());
    }

    #[test]
    fn tgv_operator_annihilates_constants() {
        let (h, w) = (3, 4);
        let a = make_tgv_operator(h, w).unwrap();
        let mut x = vec![2.5; h * w];
        x.extend(vec![0.0; 2 * h * w]);
        let x = vec_of(&x);
        assert!(a.apply(&x).unwrap().norm() == 0.0);
        assert_eq!(a.domain().len(), 3 * h * w);
        assert_eq!(a.codomain().len(), 6 * h * w);
    }

    #[test]
    fn radon_zero_image_zero_sinogram() {
        let k = make_parallel_radon(4, 4, 3, 6).unwrap();
        let x = DenseVector::zeros(Shape::Image { h: 4, w: 4 });
        assert!(k.apply(&x).unwrap().norm() == 0.0);
    }

    #[test]
    fn radon_single_angle_zero_sums_columns() {
        // materialise the one-angle transform and compare against column sums
        let (h, w, nd) = (4usize, 4usize, 4usize);
        let k = make_parallel_radon(h, w, 1, nd).unwrap();
        let ones = DenseVector::ones(Shape::Image { h, w });
        let sino = k.apply(&ones).unwrap();
        let m = k.materialise().unwrap();
        for ray in 0..nd {
            let row_sum: f64 = (0..h * w).map(|j| m.at(ray, j)).sum();
            assert!((sino[ray] - row_sum).abs() < 1e-12);
            // each ray runs straight down one column of unit pixels
            assert!((sino[ray] - h as f64).abs() < 1e-12);
        }
    }

    #[test]
    fn row_subset_matches_full_apply() {
        let k = make_circulant_blur(12, 5).unwrap();
        let rows: Vec<usize> = vec![0, 3, 7, 11];
        let sub = LinearMap::row_subset(Arc::new(k.clone()), rows.clone()).unwrap();
        let x =
            DenseVector::new((0..12).map(|i| (i as f64).sin()).collect(), Shape::Flat(12)).unwrap();
        let full = k.apply(&x).unwrap();
        let part = sub.apply(&x).unwrap();
        for (local, &r) in rows.iter().enumerate() {
            assert_eq!(part[local], full[r]);
        }
    }

    #[test]
    fn row_subset_rejects_out_of_range() {
        let k = Arc::new(make_circulant_blur(4, 3).unwrap());
        assert!(LinearMap::row_subset(k, vec![4]).is_err());
    }

    #[test]
    fn estimate_norm_known_spectrum() {
        let m = DenseMatrix::new(2, 2, vec![3.0, 0.0, 0.0, 1.0]).unwrap();
        let a = LinearMap::dense(m);
        let n = a.estimate_norm(1e-14, 500, 1);
        assert!((n - 3.0).abs() < 1e-8, "norm {n}");
    }

    #[test]
    fn estimate_norm_zero_operator() {
        let z = LinearMap::zero(Shape::Flat(5), Shape::Flat(3));
        assert_eq!(z.estimate_norm(1e-10, 100, 1), 0.0);
    }

    #[test]
    fn estimate_norm_normalised_blur_is_one() {
        let k = make_circulant_blur(64, 5).unwrap();
        let n = k.estimate_norm(1e-13, 8000, 3);
        assert!((n - 1.0).abs() < 1e-6, "norm {n}");
    }

    #[test]
    fn estimate_norm_is_deterministic() {
        let k = make_parallel_radon(8, 8, 4, 12).unwrap();
        let a = k.estimate_norm(1e-10, 200, 42);
        let b = k.estimate_norm(1e-10, 200, 42);
        assert_eq!(a, b);
    }

    #[test]
    fn scaled_operator() {
        let a = LinearMap::scaled(-2.0, LinearMap::identity(Shape::Flat(2)));
        let x = vec_of(&[1.0, -3.0]);
        assert_eq!(a.apply(&x).unwrap().as_slice(), &[-2.0, 6.0]);
        assert_eq!(a.norm_hint(), Some(2.0));
    }
}
