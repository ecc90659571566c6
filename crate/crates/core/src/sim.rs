//! Integrator configuration and output containers shared by the ERK and IRK.

use nalgebra::DMatrix;

use crate::butcher::ButcherTableau;
use crate::error::{Error, Result};
use crate::model::Dims;

/// Newton controls for the implicit stage equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NewtonOpts {
    /// Upper bound on Newton updates per step.
    pub max_iters: usize,
    /// Infinity-norm tolerance on the stacked stage residual; 0 disables the test.
    pub tol: f64,
    /// Factorize the iteration matrix once per step and reuse it.
    pub freeze_jacobian: bool,
    /// Raise an error instead of flagging non-convergence in the stats.
    pub strict: bool,
}

impl Default for NewtonOpts {
    fn default() -> Self {
        NewtonOpts {
            max_iters: 3,
            tol: 0.0,
            freeze_jacobian: true,
            strict: false,
        }
    }
}

impl NewtonOpts {
    /// Tolerance-terminated Newton with a fresh Jacobian per iteration.
    pub fn converged(tol: f64, max_iters: usize) -> Self {
        NewtonOpts {
            max_iters,
            tol,
            freeze_jacobian: false,
            strict: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::InvalidArgument("newton max_iters must be >= 1".into()));
        }
        if self.tol.is_nan() || self.tol < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "newton tol must be >= 0, got {}",
                self.tol
            )));
        }
        Ok(())
    }
}

/// Which sensitivities to compute (or, at construction, to allocate for).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SensFlags {
    pub forward: bool,
    pub adjoint: bool,
    pub hessian: bool,
}

impl SensFlags {
    pub const NONE: SensFlags = SensFlags {
        forward: false,
        adjoint: false,
        hessian: false,
    };
    pub const FORWARD: SensFlags = SensFlags {
        forward: true,
        adjoint: false,
        hessian: false,
    };
    pub const ADJOINT: SensFlags = SensFlags {
        forward: false,
        adjoint: true,
        hessian: false,
    };
    pub const ALL: SensFlags = SensFlags {
        forward: true,
        adjoint: true,
        hessian: true,
    };

    /// Whether every mode in `other` is enabled in `self`.
    pub fn covers(&self, other: SensFlags) -> bool {
        (self.forward || !other.forward)
            && (self.adjoint || !other.adjoint)
            && (self.hessian || !other.hessian)
    }

    /// Second-order sweeps need both first-order passes, so `hessian` implies them.
    pub fn closure(self) -> SensFlags {
        SensFlags {
            forward: self.forward || self.hessian,
            adjoint: self.adjoint || self.hessian,
            hessian: self.hessian,
        }
    }

    pub(crate) fn check_covers(&self, other: SensFlags) -> Result<()> {
        if other.forward && !self.forward {
            return Err(Error::NotAllocated("forward"));
        }
        if other.adjoint && !self.adjoint {
            return Err(Error::NotAllocated("adjoint"));
        }
        if other.hessian && !self.hessian {
            return Err(Error::NotAllocated("hessian"));
        }
        Ok(())
    }

    pub(crate) fn needs_seed(&self) -> bool {
        self.adjoint || self.hessian
    }
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub tableau: ButcherTableau,
    /// Integration horizon, s.
    pub t_sim: f64,
    pub n_steps: usize,
    pub newton: NewtonOpts,
    /// Sensitivity modes allocated at construction; also the initially enabled set.
    pub sens: SensFlags,
}

impl SimConfig {
    pub fn new(tableau: ButcherTableau, t_sim: f64, n_steps: usize) -> Self {
        SimConfig {
            tableau,
            t_sim,
            n_steps,
            newton: NewtonOpts::default(),
            sens: SensFlags::ALL,
        }
    }

    pub fn with_newton(mut self, newton: NewtonOpts) -> Self {
        self.newton = newton;
        self
    }

    pub fn with_sens(mut self, sens: SensFlags) -> Self {
        self.sens = sens;
        self
    }

    pub fn step_size(&self) -> f64 {
        self.t_sim / self.n_steps as f64
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_steps == 0 {
            return Err(Error::InvalidArgument("n_steps must be >= 1".into()));
        }
        if !(self.t_sim.is_finite() && self.t_sim >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "T_sim must be finite and >= 0, got {}",
                self.t_sim
            )));
        }
        self.newton.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SimStats {
    pub newton_iters_total: usize,
    /// Stage residual after the last Newton iteration of the last step.
    pub last_residual: f64,
    pub factorizations: usize,
    /// False when some step stopped at `max_iters` above a positive tolerance.
    pub converged: bool,
}

/// Result of one integrator call. Buffers are allocated once; optional parts
/// are reported only when the corresponding mode was computed.
#[derive(Debug, Clone)]
pub struct SimOutput {
    pub(crate) x_next: Vec<f64>,
    pub(crate) z_out: Vec<f64>,
    pub(crate) s_forw: DMatrix<f64>,
    pub(crate) grad_adj: Vec<f64>,
    pub(crate) hess: DMatrix<f64>,
    pub(crate) computed: SensFlags,
    pub stats: SimStats,
}

impl SimOutput {
    pub(crate) fn new(d: Dims, capacity: SensFlags) -> Self {
        let np = d.np();
        let (fr, ar, hr) = (
            capacity.forward || capacity.hessian,
            capacity.adjoint || capacity.hessian,
            capacity.hessian,
        );
        SimOutput {
            x_next: vec![0.0; d.nx],
            z_out: vec![0.0; d.nz],
            s_forw: DMatrix::zeros(if fr { d.nx } else { 0 }, if fr { np } else { 0 }),
            grad_adj: vec![0.0; if ar { np } else { 0 }],
            hess: DMatrix::zeros(if hr { np } else { 0 }, if hr { np } else { 0 }),
            computed: SensFlags::NONE,
            stats: SimStats::default(),
        }
    }

    pub fn x_next(&self) -> &[f64] {
        &self.x_next
    }

    /// Algebraic variables at the last stage of the last step.
    pub fn z_out(&self) -> &[f64] {
        &self.z_out
    }

    /// `d x_next / d(x0, u0)`, `nx x (nx + nu)`.
    pub fn s_forw(&self) -> Option<&DMatrix<f64>> {
        self.computed.forward.then_some(&self.s_forw)
    }

    /// `seed^T d x_next / d(x0, u0)`, length `nx + nu`.
    pub fn grad_adj(&self) -> Option<&[f64]> {
        (self.computed.adjoint || self.computed.hessian).then_some(&self.grad_adj[..])
    }

    /// `d^2 (seed^T x_next) / d(x0, u0)^2`, symmetric.
    pub fn hess(&self) -> Option<&DMatrix<f64>> {
        self.computed.hessian.then_some(&self.hess)
    }

    pub fn computed(&self) -> SensFlags {
        self.computed
    }
}

pub(crate) fn check_len(what: &'static str, v: &[f64], expected: usize) -> Result<()> {
    if v.len() != expected {
        return Err(Error::Shape {
            what,
            expected,
            got: v.len(),
        });
    }
    Ok(())
}
