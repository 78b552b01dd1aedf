//! Finite-sum problem instances: `min g(x) + sum_i h_i(x)` with
//! `h_i = inner_i ∘ K_i` for data-fit functionals `inner_i` and operator
//! blocks `K_i`. The same blocks double as the dual blocks `(f_i, A_i)` of
//! SPDHG.

use crate::error::{invalid, Result};
use crate::functionals::Functional;
use crate::linops::LinearMap;
use crate::sampling::Partition;
use crate::vector::{DenseVector, Shape};
use std::sync::Arc;

/// One composite term `inner ∘ op`. Gradient methods require `inner` smooth;
/// SPDHG requires `inner` prox-friendly. Least squares and KL fits are both.
#[derive(Debug, Clone)]
pub struct CompositeTerm {
    pub op: LinearMap,
    pub inner: Functional,
}

impl CompositeTerm {
    pub fn new(op: LinearMap, inner: Functional) -> Result<Self> {
        if !inner.shape().compatible(&op.codomain()) {
            return Err(invalid(format!(
                "term data shape {} does not match operator codomain {}",
                inner.shape(),
                op.codomain()
            )));
        }
        Ok(CompositeTerm { op, inner })
    }

    /// `1/2 ||K x - v||^2`
    pub fn least_squares(op: LinearMap, data: DenseVector) -> Result<Self> {
        let shape = Shape::Flat(data.len());
        let inner = Functional::squared_l2(shape, 1.0, Some(data.with_shape(shape)?));
        CompositeTerm::new(op, inner)
    }

    pub fn eval(&self, x: &DenseVector) -> Result<f64> {
        self.inner.eval(&self.op.apply(x)?)
    }

    /// `K* grad_inner(K x)`
    pub fn gradient(&self, x: &DenseVector) -> Result<DenseVector> {
        let y = self.op.apply(x)?;
        let gy = self.inner.gradient(&y)?;
        self.op.adjoint(&gy)
    }

    /// `grad_inner(K x)`, the codomain-side gradient stored by the
    /// memory-efficient SAGA form.
    pub fn dual_gradient(&self, x: &DenseVector) -> Result<DenseVector> {
        let y = self.op.apply(x)?;
        self.inner.gradient(&y)
    }

    /// Chain-rule Lipschitz constant `L_inner * ||K||^2`.
    pub fn lipschitz(&self) -> Option<f64> {
        self.inner.lipschitz().map(|l| l * self.op.norm_sq_auto())
    }
}

/// Gradient Lipschitz constants of the full smooth term and its pieces.
/// The stochastic acceleration factor `upsilon = L / L_max` predicts how much
/// subset methods can gain; it lies in `[1, n]` for row splits.
#[derive(Debug, Clone)]
pub struct SmoothnessInfo {
    pub l: f64,
    pub l_i: Vec<f64>,
    pub l_max: f64,
    pub upsilon: f64,
}

impl SmoothnessInfo {
    pub fn from_terms(full: &CompositeTerm, terms: &[CompositeTerm]) -> Result<Self> {
        let l = full
            .lipschitz()
            .ok_or_else(|| invalid("full term is not smooth"))?;
        let mut l_i = Vec::with_capacity(terms.len());
        for t in terms {
            l_i.push(
                t.lipschitz()
                    .ok_or_else(|| invalid("subset term is not smooth"))?,
            );
        }
        let l_max = l_i.iter().fold(0.0f64, |m, &v| m.max(v));
        if l_max <= 0.0 {
            return Err(invalid("all subset terms have zero curvature"));
        }
        Ok(SmoothnessInfo {
            l,
            l_i,
            l_max,
            upsilon: l / l_max,
        })
    }
}

/// The finite-sum instance `{inner_i ∘ K_i}` plus `g` and smoothness info.
#[derive(Debug, Clone)]
pub struct PartitionedProblem {
    pub g: Functional,
    pub full: CompositeTerm,
    pub terms: Vec<CompositeTerm>,
    pub smoothness: SmoothnessInfo,
}

impl PartitionedProblem {
    pub fn new(g: Functional, full: CompositeTerm, terms: Vec<CompositeTerm>) -> Result<Self> {
        if terms.is_empty() {
            return Err(invalid("need at least one subset term"));
        }
        if !g.shape().compatible(&full.op.domain()) {
            return Err(invalid("g and the forward operator disagree on shape"));
        }
        let smoothness = SmoothnessInfo::from_terms(&full, &terms)?;
        Ok(PartitionedProblem {
            g,
            full,
            terms,
            smoothness,
        })
    }

    /// Split a least-squares fit `1/2 ||K x - v||^2` over the rows of `K`
    /// according to `partition`.
    pub fn least_squares_split(
        g: Functional,
        op: LinearMap,
        data: DenseVector,
        partition: &Partition,
    ) -> Result<Self> {
        if partition.n_items() != data.len() {
            return Err(invalid("partition does not cover the data rows"));
        }
        let parent = Arc::new(op.clone());
        let mut terms = Vec::with_capacity(partition.n_subsets());
        for set in partition.subsets() {
            let rows = set.to_vec();
            let vals: Vec<f64> = rows.iter().map(|&r| data[r]).collect();
            // a subset covering every row in order is the operator itself
            let sub = if rows.len() == data.len() && rows.iter().enumerate().all(|(i, &r)| i == r) {
                op.clone()
            } else {
                LinearMap::row_subset(parent.clone(), rows)?
            };
            terms.push(CompositeTerm::least_squares(
                sub,
                DenseVector::from_slice(&vals),
            )?);
        }
        let full = CompositeTerm::least_squares(op, data)?;
        PartitionedProblem::new(g, full, terms)
    }

    pub fn n(&self) -> usize {
        self.terms.len()
    }

    pub fn domain(&self) -> Shape {
        self.full.op.domain()
    }

    /// `Phi(x) = g(x) + h(x)` via the unsplit term.
    pub fn objective(&self, x: &DenseVector) -> Result<f64> {
        Ok(self.g.eval(x)? + self.full.eval(x)?)
    }

    /// The unsplit smooth term as a standalone functional, for the
    /// full-gradient baselines.
    pub fn full_as_functional(&self) -> Functional {
        Functional::composed_smooth(self.full.inner.clone(), self.full.op.clone())
            .expect("shapes validated at construction")
    }

    /// `sum_i h_i(x)`, for checking the partition identity against `full`.
    pub fn sum_of_terms(&self, x: &DenseVector) -> Result<f64> {
        let mut acc = 0.0;
        for t in &self.terms {
            acc += t.eval(x)?;
        }
        Ok(acc)
    }
}
