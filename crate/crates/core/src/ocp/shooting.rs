//! Direct multiple shooting: one integrator per interval, gaps as constraints.

use nalgebra::DMatrix;

use super::OcpSpec;
use crate::error::Result;
use crate::integrator::Integrator;
use crate::model::Dynamics;
use crate::nlp::{Nlp, NlpEvaluator, QuadraticCost};
use crate::sim::{SensFlags, SimConfig};

struct ShootingEvaluator<M> {
    integrators: Vec<Integrator<M>>,
    cost: QuadraticCost,
    x0: Vec<f64>,
    nx: usize,
    nu: usize,
    n: usize,
    strict_reset: bool,
}

impl<M: Dynamics> ShootingEvaluator<M> {
    fn stride(&self) -> usize {
        self.nx + self.nu
    }

    fn interval<'a>(&self, v: &'a [f64], k: usize) -> (&'a [f64], &'a [f64]) {
        let o = k * self.stride();
        (&v[o..o + self.nx], &v[o + self.nx..o + self.stride()])
    }

    fn maybe_reset(&mut self) {
        if self.strict_reset {
            self.integrators.iter_mut().for_each(|i| i.reset_stage_guess());
        }
    }
}

impl<M: Dynamics> NlpEvaluator for ShootingEvaluator<M> {
    fn n_vars(&self) -> usize {
        self.n * self.stride() + self.nx
    }

    fn n_eq(&self) -> usize {
        (self.n + 1) * self.nx
    }

    fn objective(&mut self, v: &[f64]) -> Result<f64> {
        Ok(self.cost.value(v))
    }

    fn gradient(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.cost.gradient(v))
    }

    fn constraints(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        self.maybe_reset();
        let nx = self.nx;
        let mut g = vec![0.0; self.n_eq()];
        for c in 0..nx {
            g[c] = v[c] - self.x0[c];
        }
        for k in 0..self.n {
            let (x, u) = self.interval(v, k);
            let next = &v[(k + 1) * self.stride()..(k + 1) * self.stride() + nx];
            let out = self.integrators[k].simulate(x, u).map_err(|e| e.in_interval(k))?;
            for c in 0..nx {
                g[(k + 1) * nx + c] = out.x_next()[c] - next[c];
            }
        }
        Ok(g)
    }

    fn jacobian(&mut self, v: &[f64]) -> Result<DMatrix<f64>> {
        self.maybe_reset();
        let (nx, stride) = (self.nx, self.stride());
        let mut jac = DMatrix::zeros(self.n_eq(), self.n_vars());
        for c in 0..nx {
            jac[(c, c)] = 1.0;
        }
        for k in 0..self.n {
            let (x, u) = self.interval(v, k);
            let out = self.integrators[k].forward(x, u).map_err(|e| e.in_interval(k))?;
            let s = out.s_forw().expect("forward sensitivities");
            let row = (k + 1) * nx;
            jac.view_mut((row, k * stride), (nx, stride)).copy_from(s);
            for c in 0..nx {
                jac[(row + c, (k + 1) * stride + c)] = -1.0;
            }
        }
        Ok(jac)
    }

    fn lagrangian_hessian(&mut self, v: &[f64], nu: &[f64]) -> Result<DMatrix<f64>> {
        self.maybe_reset();
        let (nx, stride) = (self.nx, self.stride());
        let mut h = self.cost_hessian(v)?;
        for k in 0..self.n {
            let seed = &nu[(k + 1) * nx..(k + 2) * nx];
            if seed.iter().all(|&s| s == 0.0) {
                continue;
            }
            let (x, u) = self.interval(v, k);
            let out = self.integrators[k].hessian(x, u, seed).map_err(|e| e.in_interval(k))?;
            let hk = out.hess().expect("hessian");
            let o = k * stride;
            let mut block = h.view_mut((o, o), (stride, stride));
            block += hk;
        }
        Ok(h)
    }

    fn cost_hessian(&mut self, _v: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.n_vars();
        let mut h = DMatrix::zeros(n, n);
        self.cost.add_hessian(&mut h);
        Ok(h)
    }
}

/// `v = (x_0, u_0, ..., u_{N-1}, x_N)` with constraints `x_0 - xbar_0` and
/// `Phi_k(x_k, u_k) - x_{k+1}`.
pub fn transcribe_multiple_shooting<M: Dynamics + Clone + 'static>(spec: &OcpSpec<M>) -> Result<Nlp> {
    spec.validate()?;
    let d = spec.model.dims();
    let cfg = SimConfig::new(spec.tableau.clone(), spec.interval_length(), spec.n_steps)
        .with_newton(spec.newton)
        .with_sens(SensFlags::ALL);
    let integrators = (0..spec.n_intervals)
        .map(|_| Integrator::new(spec.model.clone(), cfg.clone()))
        .collect::<Result<Vec<_>>>()?;
    let stride = d.nx + d.nu;
    let mut guess = Vec::with_capacity(spec.n_intervals * stride + d.nx);
    for _ in 0..spec.n_intervals {
        guess.extend_from_slice(&spec.x0);
        guess.extend_from_slice(&spec.u_ref);
    }
    guess.extend_from_slice(&spec.x0);
    Ok(Nlp {
        layout: spec.layout(0),
        initial_guess: guess,
        evaluator: Box::new(ShootingEvaluator {
            integrators,
            cost: spec.cost(stride),
            x0: spec.x0.clone(),
            nx: d.nx,
            nu: d.nu,
            n: spec.n_intervals,
            strict_reset: spec.strict_reset,
        }),
    })
}
