//! Flat-buffer integrator handle for foreign callers.
//!
//! All allocation happens in [`IntegratorHandle::create`]; the four entry
//! points check buffer shapes before touching integrator state and write into
//! caller-provided row-major buffers. `hessian` recomputes the adjoint
//! gradient itself rather than caching the result of a preceding `reverse`.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::integrator::Integrator;
use crate::model::{Dims, Dynamics, Model, ModelRegistry};
use crate::sim::{SensFlags, SimConfig, SimOutput};

/// Not thread-safe: callers serialize access to one handle.
#[derive(Debug)]
pub struct IntegratorHandle {
    integ: Integrator<Model>,
    dims: Dims,
}

fn check(what: &'static str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Shape { what, expected, got });
    }
    Ok(())
}

impl IntegratorHandle {
    pub fn create(model_name: &str, params: &BTreeMap<String, f64>, cfg: SimConfig) -> Result<Self> {
        let model = ModelRegistry::build(model_name, params)?;
        let dims = model.dims();
        let integ = Integrator::new(model, cfg.with_sens(SensFlags::ALL))?;
        Ok(IntegratorHandle { integ, dims })
    }

    pub fn dims(&self) -> Dims {
        self.dims
    }

    pub fn nx(&self) -> usize {
        self.dims.nx
    }

    pub fn nu(&self) -> usize {
        self.dims.nu
    }

    pub fn nz(&self) -> usize {
        self.dims.nz
    }

    /// Access to the wrapped integrator, for comparing against direct calls.
    pub fn integrator(&self) -> &Integrator<Model> {
        &self.integ
    }

    fn check_inputs(&self, x0: &[f64], u0: &[f64], seed: Option<&[f64]>) -> Result<()> {
        check("x0", x0.len(), self.dims.nx)?;
        check("u0", u0.len(), self.dims.nu)?;
        if let Some(s) = seed {
            check("seed", s.len(), self.dims.nx)?;
        }
        Ok(())
    }

    /// `x_next` (length `nx`).
    pub fn nominal(&mut self, x0: &[f64], u0: &[f64], x_next: &mut [f64]) -> Result<()> {
        self.check_inputs(x0, u0, None)?;
        check("x_next", x_next.len(), self.dims.nx)?;
        let out = self.integ.simulate(x0, u0)?;
        x_next.copy_from_slice(out.x_next());
        Ok(())
    }

    /// `d x_next / d(x0, u0)`, row-major `nx x (nx + nu)`.
    pub fn jacobian(&mut self, x0: &[f64], u0: &[f64], jac: &mut [f64]) -> Result<()> {
        self.check_inputs(x0, u0, None)?;
        let np = self.dims.np();
        check("jacobian", jac.len(), self.dims.nx * np)?;
        let s = self.integ.forward(x0, u0)?.s_forw().expect("forward computed");
        for r in 0..self.dims.nx {
            for c in 0..np {
                jac[r * np + c] = s[(r, c)];
            }
        }
        Ok(())
    }

    /// `seed^T d x_next / d(x0, u0)` (length `nx + nu`).
    pub fn reverse(&mut self, x0: &[f64], u0: &[f64], seed: &[f64], grad: &mut [f64]) -> Result<()> {
        self.check_inputs(x0, u0, Some(seed))?;
        check("gradient", grad.len(), self.dims.np())?;
        let out = self.integ.adjoint(x0, u0, seed)?;
        grad.copy_from_slice(out.grad_adj().expect("adjoint computed"));
        Ok(())
    }

    /// Gradient as in [`IntegratorHandle::reverse`] plus the row-major
    /// `(nx + nu) x (nx + nu)` Hessian of `seed^T x_next`.
    pub fn hessian(&mut self, x0: &[f64], u0: &[f64], seed: &[f64], grad: &mut [f64], hess: &mut [f64]) -> Result<()> {
        self.check_inputs(x0, u0, Some(seed))?;
        let np = self.dims.np();
        check("gradient", grad.len(), np)?;
        check("hessian", hess.len(), np * np)?;
        let out: &SimOutput = self.integ.hessian(x0, u0, seed)?;
        grad.copy_from_slice(out.grad_adj().expect("adjoint computed"));
        let h = out.hess().expect("hessian computed");
        for r in 0..np {
            for c in 0..np {
                hess[r * np + c] = h[(r, c)];
            }
        }
        Ok(())
    }

    /// Drops the stage-value warm start.
    pub fn reset(&mut self) {
        self.integ.reset_stage_guess();
    }
}
