//! Full-step SQP for equality-constrained NLPs on the dense KKT system.

use std::time::{Duration, Instant};

use crate::error::{Error, Result};
use crate::linalg::DenseLu;
use crate::nlp::Nlp;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianMode {
    GaussNewton,
    Exact,
}

impl HessianMode {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "gn" | "gauss-newton" => Some(HessianMode::GaussNewton),
            "exact" => Some(HessianMode::Exact),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SqpOpts {
    pub hessian_mode: HessianMode,
    pub max_iters: usize,
    /// Bound on `max(|grad f + J^T nu|_inf, |g|_inf)`.
    pub kkt_tol: f64,
    /// Initial shift `delta I` on the Hessian block.
    pub regularization: f64,
}

impl Default for SqpOpts {
    fn default() -> Self {
        SqpOpts {
            hessian_mode: HessianMode::GaussNewton,
            max_iters: 30,
            kkt_tol: 1e-8,
            regularization: 0.0,
        }
    }
}

impl SqpOpts {
    pub fn validate(&self) -> Result<()> {
        if self.kkt_tol.is_nan() || self.kkt_tol <= 0.0 {
            return Err(Error::InvalidArgument("kkt_tol must be > 0".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("SQP max_iters must be >= 1".into()));
        }
        if self.regularization.is_nan() || self.regularization < 0.0 {
            return Err(Error::InvalidArgument("regularization must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SqpStatus {
    Converged,
    MaxIters,
    LinAlgFailure,
}

impl SqpStatus {
    pub fn name(&self) -> &'static str {
        match self {
            SqpStatus::Converged => "converged",
            SqpStatus::MaxIters => "max_iters",
            SqpStatus::LinAlgFailure => "linalg_failure",
        }
    }
}

/// Wall-clock split between NLP evaluations and KKT step computation.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SqpTimings {
    pub total: Duration,
    pub nlp_eval: Duration,
    pub step: Duration,
}

#[derive(Debug, Clone)]
pub struct SqpResult {
    pub v: Vec<f64>,
    pub nu: Vec<f64>,
    pub iters: usize,
    pub kkt_history: Vec<f64>,
    pub status: SqpStatus,
    pub timings: SqpTimings,
}

/// Shift escalations tried before giving up on a KKT factorization.
pub const MAX_ESCALATIONS: usize = 10;
/// Shift used when escalating from zero regularization.
pub const MIN_SHIFT: f64 = 1e-8;

/// Solves `min f(v) s.t. g(v) = 0` from the NLP's initial guess. Integrator or
/// model errors inside the evaluators are returned as `Err`.
pub fn solve(nlp: &mut Nlp, opts: &SqpOpts) -> Result<SqpResult> {
    opts.validate()?;
    let start = Instant::now();
    let n = nlp.n_vars();
    let m = nlp.n_eq();
    let dim = n + m;
    let mut v = nlp.initial_guess.clone();
    let mut nu = vec![0.0; m];
    let mut history = Vec::new();
    let mut timings = SqpTimings::default();
    let mut lu = DenseLu::new(dim);
    let mut rhs = vec![0.0; dim];
    let mut iters = 0;
    let status = loop {
        let t = Instant::now();
        let grad = nlp.evaluator.gradient(&v)?;
        let g = nlp.evaluator.constraints(&v)?;
        let jac = nlp.evaluator.jacobian(&v)?;
        timings.nlp_eval += t.elapsed();

        let mut stat = 0.0f64;
        for i in 0..n {
            let mut acc = grad[i];
            for (r, nr) in nu.iter().enumerate() {
                acc += jac[(r, i)] * nr;
            }
            stat = stat.max(acc.abs());
        }
        let feas = g.iter().fold(0.0f64, |a, x| a.max(x.abs()));
        let kkt = stat.max(feas);
        history.push(kkt);
        if kkt <= opts.kkt_tol {
            break SqpStatus::Converged;
        }
        if !kkt.is_finite() || iters == opts.max_iters {
            break SqpStatus::MaxIters;
        }

        let t = Instant::now();
        let hess = match opts.hessian_mode {
            HessianMode::GaussNewton => nlp.evaluator.cost_hessian(&v)?,
            HessianMode::Exact => nlp.evaluator.lagrangian_hessian(&v, &nu)?,
        };
        timings.nlp_eval += t.elapsed();

        let t = Instant::now();
        let mut delta = opts.regularization;
        let mut factored = false;
        for attempt in 0..=MAX_ESCALATIONS {
            let k = lu.matrix_mut();
            k.fill(0.0);
            for i in 0..n {
                for j in 0..n {
                    k[i * dim + j] = hess[(i, j)];
                }
                k[i * dim + i] += delta;
            }
            for r in 0..m {
                for i in 0..n {
                    let a = jac[(r, i)];
                    k[(n + r) * dim + i] = a;
                    k[i * dim + n + r] = a;
                }
            }
            match lu.factor() {
                Ok(()) => {
                    factored = true;
                    break;
                }
                Err(Error::Singular { .. }) if attempt < MAX_ESCALATIONS => {
                    delta = (10.0 * delta).max(MIN_SHIFT);
                }
                Err(Error::Singular { .. }) => break,
                Err(e) => return Err(e),
            }
        }
        if !factored {
            timings.step += t.elapsed();
            break SqpStatus::LinAlgFailure;
        }
        for i in 0..n {
            rhs[i] = -grad[i];
        }
        for r in 0..m {
            rhs[n + r] = -g[r];
        }
        lu.solve(&mut rhs);
        for i in 0..n {
            v[i] += rhs[i];
        }
        nu.copy_from_slice(&rhs[n..]);
        timings.step += t.elapsed();
        iters += 1;
    };
    timings.total = start.elapsed();
    Ok(SqpResult {
        v,
        nu,
        iters,
        kkt_history: history,
        status,
        timings,
    })
}
