//! Flat real vectors with an optional 2-D image interpretation.

use crate::error::{Error, Result};
use std::fmt;

/// Logical shape of a [`DenseVector`]: a flat array or an `h x w` image.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Shape {
    Flat(usize),
    Image { h: usize, w: usize },
}

impl Shape {
    pub fn len(&self) -> usize {
        match *self {
            Shape::Flat(d) => d,
            Shape::Image { h, w } => h * w,
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Shapes are interchangeable when they describe the same number of
    /// entries; solvers only care about the flat length.
    pub fn compatible(&self, other: &Shape) -> bool {
        self.len() == other.len()
    }

    pub fn image_dims(&self) -> Option<(usize, usize)> {
        match *self {
            Shape::Image { h, w } => Some((h, w)),
            Shape::Flat(_) => None,
        }
    }
}

impl fmt::Display for Shape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Shape::Flat(d) => write!(f, "flat({d})"),
            Shape::Image { h, w } => write!(f, "image({h}x{w})"),
        }
    }
}

/// Dense vector: the iterate `x`, data `v`, duals `y`, gradient fields.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseVector {
    values: Vec<f64>,
    shape: Shape,
}

impl DenseVector {
    pub fn new(values: Vec<f64>, shape: Shape) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::Invalid(format!(
                "vector of length {} does not fit shape {shape}",
                values.len()
            )));
        }
        Ok(DenseVector { values, shape })
    }

    pub fn from_slice(values: &[f64]) -> Self {
        DenseVector {
            shape: Shape::Flat(values.len()),
            values: values.to_vec(),
        }
    }

    pub fn zeros(shape: Shape) -> Self {
        DenseVector {
            values: vec![0.0; shape.len()],
            shape,
        }
    }

    pub fn ones(shape: Shape) -> Self {
        DenseVector {
            values: vec![1.0; shape.len()],
            shape,
        }
    }

    pub fn shape(&self) -> Shape {
        self.shape
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    /// Reinterpret the same entries under a compatible shape.
    pub fn with_shape(mut self, shape: Shape) -> Result<Self> {
        if shape.len() != self.values.len() {
            return Err(Error::ShapeMismatch {
                expected: shape,
                got: self.shape,
            });
        }
        self.shape = shape;
        Ok(self)
    }

    pub fn dot(&self, other: &DenseVector) -> f64 {
        debug_assert_eq!(self.len(), other.len());
        self.values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a * b)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm_inf(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn scale(&mut self, a: f64) {
        for v in &mut self.values {
            *v *= a;
        }
    }

    pub fn scaled(&self, a: f64) -> DenseVector {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self += a * other`
    pub fn axpy(&mut self, a: f64, other: &DenseVector) {
        debug_assert_eq!(self.len(), other.len());
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += a * o;
        }
    }

    pub fn add_assign(&mut self, other: &DenseVector) {
        debug_assert_eq!(self.len(), other.len());
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += o;
        }
    }

    pub fn sub_assign(&mut self, other: &DenseVector) {
        debug_assert_eq!(self.len(), other.len());
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v -= o;
        }
    }

    pub fn add(&self, other: &DenseVector) -> DenseVector {
        let mut out = self.clone();
        out.add_assign(other);
        out
    }

    pub fn sub(&self, other: &DenseVector) -> DenseVector {
        let mut out = self.clone();
        out.sub_assign(other);
        out
    }

    pub fn copy_from(&mut self, other: &DenseVector) {
        debug_assert_eq!(self.len(), other.len());
        self.values.copy_from_slice(&other.values);
    }

    pub fn fill(&mut self, v: f64) {
        self.values.iter_mut().for_each(|x| *x = v);
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// `||self - other|| / max(||other||, floor)` with a tiny floor so the
    /// ratio is defined at the origin.
    pub fn rel_dist(&self, other: &DenseVector) -> f64 {
        let mut diff = 0.0;
        for (a, b) in self.values.iter().zip(&other.values) {
            let d = a - b;
            diff += d * d;
        }
        diff.sqrt() / other.norm().max(1e-300)
    }
}

impl std::ops::Index<usize> for DenseVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.values[i]
    }
}

impl std::ops::IndexMut<usize> for DenseVector {
    fn index_mut(&mut self, i: usize) -> &mut f64 {
        &mut self.values[i]
    }
}
