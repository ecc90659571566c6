//! Family-dispatching wrapper over [`Erk`] and [`Irk`].

use crate::erk::Erk;
use crate::error::Result;
use crate::irk::Irk;
use crate::model::{Dims, Dynamics};
use crate::sim::{NewtonOpts, SensFlags, SimConfig, SimOutput};

#[derive(Debug, Clone)]
#[allow(clippy::large_enum_variant)]
pub enum Integrator<M> {
    Erk(Erk<M>),
    Irk(Irk<M>),
}

macro_rules! each {
    ($self:ident, $i:ident => $e:expr) => {
        match $self {
            Integrator::Erk($i) => $e,
            Integrator::Irk($i) => $e,
        }
    };
}

impl<M: Dynamics> Integrator<M> {
    /// Explicit tableaux get the ERK, implicit ones the IRK.
    pub fn new(model: M, cfg: SimConfig) -> Result<Self> {
        if cfg.tableau.is_explicit() {
            Ok(Integrator::Erk(Erk::new(model, cfg)?))
        } else {
            Ok(Integrator::Irk(Irk::new(model, cfg)?))
        }
    }

    pub fn model(&self) -> &M {
        each!(self, i => i.model())
    }

    pub fn config(&self) -> &SimConfig {
        each!(self, i => i.config())
    }

    pub fn dims(&self) -> Dims {
        each!(self, i => i.dims())
    }

    pub fn sens_options(&self) -> SensFlags {
        each!(self, i => i.sens_options())
    }

    pub fn set_sens_options(&mut self, flags: SensFlags) -> Result<()> {
        each!(self, i => i.set_sens_options(flags))
    }

    /// No effect on the ERK, which has no Newton iteration.
    pub fn set_newton_opts(&mut self, opts: NewtonOpts) -> Result<()> {
        match self {
            Integrator::Erk(_) => opts.validate(),
            Integrator::Irk(i) => i.set_newton_opts(opts),
        }
    }

    /// No effect on the ERK, which keeps no stage guesses.
    pub fn reset_stage_guess(&mut self) {
        if let Integrator::Irk(i) = self {
            i.reset_stage_guess();
        }
    }

    pub fn trajectory(&self) -> &[f64] {
        each!(self, i => i.trajectory())
    }

    /// Last-stage algebraic variables per step; empty for the ERK.
    pub fn z_trajectory(&self) -> &[f64] {
        match self {
            Integrator::Erk(_) => &[],
            Integrator::Irk(i) => i.z_trajectory(),
        }
    }

    pub fn simulate(&mut self, x0: &[f64], u0: &[f64]) -> Result<&SimOutput> {
        each!(self, i => i.simulate(x0, u0))
    }

    pub fn forward(&mut self, x0: &[f64], u0: &[f64]) -> Result<&SimOutput> {
        each!(self, i => i.forward(x0, u0))
    }

    pub fn adjoint(&mut self, x0: &[f64], u0: &[f64], seed: &[f64]) -> Result<&SimOutput> {
        each!(self, i => i.adjoint(x0, u0, seed))
    }

    pub fn hessian(&mut self, x0: &[f64], u0: &[f64], seed: &[f64]) -> Result<&SimOutput> {
        each!(self, i => i.hessian(x0, u0, seed))
    }

    pub fn run(&mut self, x0: &[f64], u0: &[f64], seed: Option<&[f64]>) -> Result<&SimOutput> {
        each!(self, i => i.run(x0, u0, seed))
    }
}
