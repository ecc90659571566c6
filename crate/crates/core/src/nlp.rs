//! Equality-constrained NLP carrier produced by the transcriptions.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::ad::{fd_jacobian, FD_STEP};
use crate::error::Result;
use crate::metrics::norm_rel_err;

/// A named contiguous slice of the decision vector.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VarBlock {
    pub name: String,
    pub range: Range<usize>,
}

/// Evaluators of `min f(v) s.t. g(v) = 0`. Calls may update internal warm
/// starts, hence `&mut self`.
pub trait NlpEvaluator: Send {
    fn n_vars(&self) -> usize;
    fn n_eq(&self) -> usize;
    fn objective(&mut self, v: &[f64]) -> Result<f64>;
    fn gradient(&mut self, v: &[f64]) -> Result<Vec<f64>>;
    fn constraints(&mut self, v: &[f64]) -> Result<Vec<f64>>;
    /// Dense `n_eq x n_vars` constraint Jacobian.
    fn jacobian(&mut self, v: &[f64]) -> Result<DMatrix<f64>>;
    /// `d^2 (f + nu^T g) / dv^2`.
    fn lagrangian_hessian(&mut self, v: &[f64], nu: &[f64]) -> Result<DMatrix<f64>>;
    /// `d^2 f / dv^2`, the Gauss-Newton Hessian of the quadratic cost.
    fn cost_hessian(&mut self, v: &[f64]) -> Result<DMatrix<f64>>;
}

pub struct Nlp {
    pub layout: Vec<VarBlock>,
    pub initial_guess: Vec<f64>,
    pub evaluator: Box<dyn NlpEvaluator>,
}

impl std::fmt::Debug for Nlp {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Nlp")
            .field("n_vars", &self.n_vars())
            .field("n_eq", &self.n_eq())
            .field("layout", &self.layout)
            .finish()
    }
}

impl Nlp {
    pub fn n_vars(&self) -> usize {
        self.evaluator.n_vars()
    }

    pub fn n_eq(&self) -> usize {
        self.evaluator.n_eq()
    }

    pub fn block(&self, name: &str) -> Option<&VarBlock> {
        self.layout.iter().find(|b| b.name == name)
    }

    /// Slice of `v` belonging to the block named `name`.
    pub fn slice<'a>(&self, v: &'a [f64], name: &str) -> Option<&'a [f64]> {
        self.block(name).map(|b| &v[b.range.clone()])
    }

    /// Normwise relative error of the constraint Jacobian against central
    /// differences at `v`.
    pub fn check_jacobian(&mut self, v: &[f64]) -> Result<f64> {
        let jac = self.evaluator.jacobian(v)?;
        let mut failure = None;
        let n_eq = self.n_eq();
        let eval = &mut self.evaluator;
        let fd = fd_jacobian(
            |p| match eval.constraints(p) {
                Ok(g) => g,
                Err(e) => {
                    failure.get_or_insert(e);
                    vec![f64::NAN; n_eq]
                }
            },
            v,
            FD_STEP,
        );
        if let Some(e) = failure {
            return Err(e);
        }
        Ok(norm_rel_err(jac.as_slice(), fd.as_slice()))
    }
}

/// One `1/2 (y - y_ref)^T W (y - y_ref)` term on `v[offset..offset + len]`.
#[derive(Debug, Clone)]
pub struct CostTerm {
    pub offset: usize,
    pub weight: DMatrix<f64>,
    pub reference: Vec<f64>,
}

/// Sum of quadratic tracking terms.
#[derive(Debug, Clone, Default)]
pub struct QuadraticCost {
    pub terms: Vec<CostTerm>,
}

impl QuadraticCost {
    pub fn push(&mut self, offset: usize, weight: &DMatrix<f64>, reference: &[f64]) {
        self.terms.push(CostTerm {
            offset,
            weight: weight.clone(),
            reference: reference.to_vec(),
        });
    }

    pub fn value(&self, v: &[f64]) -> f64 {
        let mut f = 0.0;
        for t in &self.terms {
            let n = t.reference.len();
            for i in 0..n {
                let di = v[t.offset + i] - t.reference[i];
                for j in 0..n {
                    f += 0.5 * di * t.weight[(i, j)] * (v[t.offset + j] - t.reference[j]);
                }
            }
        }
        f
    }

    pub fn gradient(&self, v: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; v.len()];
        for t in &self.terms {
            let n = t.reference.len();
            for i in 0..n {
                let wi = t.weight.row(i);
                // symmetric part of W so that non-symmetric input still gives the exact gradient
                let mut acc = 0.0;
                for j in 0..n {
                    let wij = 0.5 * (wi[j] + t.weight[(j, i)]);
                    acc += wij * (v[t.offset + j] - t.reference[j]);
                }
                g[t.offset + i] += acc;
            }
        }
        g
    }

    pub fn add_hessian(&self, h: &mut DMatrix<f64>) {
        for t in &self.terms {
            let n = t.reference.len();
            for i in 0..n {
                for j in 0..n {
                    h[(t.offset + i, t.offset + j)] += 0.5 * (t.weight[(i, j)] + t.weight[(j, i)]);
                }
            }
        }
    }
}
