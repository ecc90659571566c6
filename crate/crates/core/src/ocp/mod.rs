//! Optimal control problem specification and its transcriptions into an [`Nlp`].

mod collocation;
mod shooting;

use nalgebra::DMatrix;

use crate::butcher::{make_tableau, ButcherTableau, SchemeFamily};
use crate::error::{Error, Result};
use crate::model::{make_chain, make_linear_test, Chain, Dynamics, LinearTest, Model};
use crate::nlp::{Nlp, QuadraticCost, VarBlock};
use crate::sim::NewtonOpts;

pub use collocation::transcribe_collocation;
pub use shooting::transcribe_multiple_shooting;

/// Initial values of the collocation stage variables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StageInit {
    Zero,
    /// `(xdot, z)` consistent with `f_impl` at the initial state and reference control.
    #[default]
    Consistent,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Transcription {
    MultipleShooting,
    Collocation,
}

impl Transcription {
    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "shooting" | "multiple-shooting" | "ms" => Some(Transcription::MultipleShooting),
            "collocation" | "dc" => Some(Transcription::Collocation),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Transcription::MultipleShooting => "shooting",
            Transcription::Collocation => "collocation",
        }
    }
}

/// Quadratic-tracking OCP with per-interval integrator settings.
#[derive(Debug, Clone)]
pub struct OcpSpec<M> {
    pub model: M,
    pub n_intervals: usize,
    /// Horizon length, s.
    pub horizon: f64,
    pub q: DMatrix<f64>,
    pub r: DMatrix<f64>,
    pub q_terminal: DMatrix<f64>,
    pub x_ref: Vec<f64>,
    pub u_ref: Vec<f64>,
    pub x0: Vec<f64>,
    pub tableau: ButcherTableau,
    pub n_steps: usize,
    pub newton: NewtonOpts,
    pub stage_init: StageInit,
    /// Reset integrator warm starts on every evaluation, for bitwise reproducibility.
    pub strict_reset: bool,
}

/// Newton settings for integrators inside the transcription: tolerance
/// termination keeps nominal values consistent with the converged-map sensitivities.
pub fn ocp_newton() -> NewtonOpts {
    NewtonOpts {
        max_iters: 20,
        tol: 1e-10,
        freeze_jacobian: false,
        strict: true,
    }
}

impl<M: Dynamics> OcpSpec<M> {
    /// Identity weights, zero references, reference point as initial state.
    pub fn new(model: M, n_intervals: usize, horizon: f64, tableau: ButcherTableau, n_steps: usize) -> Self {
        let d = model.dims();
        let (x0, _) = model.reference_point();
        OcpSpec {
            n_intervals,
            horizon,
            q: DMatrix::identity(d.nx, d.nx),
            r: DMatrix::identity(d.nu, d.nu),
            q_terminal: DMatrix::identity(d.nx, d.nx),
            x_ref: vec![0.0; d.nx],
            u_ref: vec![0.0; d.nu],
            x0,
            tableau,
            n_steps,
            newton: ocp_newton(),
            stage_init: StageInit::default(),
            strict_reset: false,
            model,
        }
    }

    pub fn interval_length(&self) -> f64 {
        self.horizon / self.n_intervals as f64
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.model.dims();
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.n_intervals == 0 {
            return bad("OCP needs N >= 1".into());
        }
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return bad(format!("OCP horizon must be positive, got {}", self.horizon));
        }
        if self.n_steps == 0 {
            return bad("OCP needs n_steps >= 1".into());
        }
        let sq = |m: &DMatrix<f64>, n: usize, what: &'static str| -> Result<()> {
            if m.nrows() != n || m.ncols() != n {
                return Err(Error::Shape {
                    what,
                    expected: n,
                    got: m.nrows().max(m.ncols()),
                });
            }
            Ok(())
        };
        sq(&self.q, d.nx, "state weight")?;
        sq(&self.q_terminal, d.nx, "terminal weight")?;
        sq(&self.r, d.nu, "control weight")?;
        crate::sim::check_len("state reference", &self.x_ref, d.nx)?;
        crate::sim::check_len("control reference", &self.u_ref, d.nu)?;
        crate::sim::check_len("initial state", &self.x0, d.nx)?;
        self.newton.validate()
    }

    /// Stage and terminal tracking cost on a layout where `x_k` starts at
    /// `k * stride`, `u_k` at `k * stride + nx` and `x_N` at `N * stride`.
    pub(crate) fn cost(&self, stride: usize) -> QuadraticCost {
        let nx = self.model.dims().nx;
        let mut c = QuadraticCost::default();
        for k in 0..self.n_intervals {
            c.push(k * stride, &self.q, &self.x_ref);
            c.push(k * stride + nx, &self.r, &self.u_ref);
        }
        c.push(self.n_intervals * stride, &self.q_terminal, &self.x_ref);
        c
    }

    /// Layout blocks `x_k`, `u_k` (and `w_k` of length `stage_len`), then `x_N`.
    pub(crate) fn layout(&self, stage_len: usize) -> Vec<VarBlock> {
        let d = self.model.dims();
        let stride = d.nx + d.nu + stage_len;
        let mut blocks = Vec::new();
        for k in 0..self.n_intervals {
            let o = k * stride;
            blocks.push(VarBlock {
                name: format!("x{k}"),
                range: o..o + d.nx,
            });
            blocks.push(VarBlock {
                name: format!("u{k}"),
                range: o + d.nx..o + d.nx + d.nu,
            });
            if stage_len > 0 {
                blocks.push(VarBlock {
                    name: format!("w{k}"),
                    range: o + d.nx + d.nu..o + stride,
                });
            }
        }
        let o = self.n_intervals * stride;
        blocks.push(VarBlock {
            name: format!("x{}", self.n_intervals),
            range: o..o + d.nx,
        });
        blocks
    }
}

pub fn transcribe<M: Dynamics + Clone + 'static>(spec: &OcpSpec<M>, how: Transcription) -> Result<Nlp> {
    match how {
        Transcription::MultipleShooting => transcribe_multiple_shooting(spec),
        Transcription::Collocation => transcribe_collocation(spec),
    }
}

/// States and controls of a solution, `(N + 1) x nx` and `N x nu`, from either layout.
pub fn extract_trajectory<M: Dynamics>(spec: &OcpSpec<M>, nlp: &Nlp, v: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut xs = Vec::new();
    let mut us = Vec::new();
    for k in 0..=spec.n_intervals {
        xs.extend_from_slice(nlp.slice(v, &format!("x{k}")).expect("state block"));
        if k < spec.n_intervals {
            us.extend_from_slice(nlp.slice(v, &format!("u{k}")).expect("control block"));
        }
    }
    (xs, us)
}

/// Scalar regulation problem on `xdot = lambda x + u` with unit weights.
pub fn linear_ocp(lambda: f64, n_intervals: usize, horizon: f64, x0: f64, tableau: ButcherTableau) -> OcpSpec<LinearTest> {
    let mut spec = OcpSpec::new(make_linear_test(lambda), n_intervals, horizon, tableau, 1);
    spec.x0 = vec![x0];
    spec
}

/// Sampling interval of the chain benchmark, s.
pub const CHAIN_DT: f64 = 0.2;
/// Control weight of the chain benchmark; stands in for the control bounds.
pub const CHAIN_CONTROL_WEIGHT: f64 = 0.01;
/// End-mass position of the initial rest shape, m.
pub const CHAIN_START_END: [f64; 3] = [0.8, 0.2, 0.1];

/// Chain transition from the rest shape with the end at [`CHAIN_START_END`]
/// to the rest shape with the end at the model's reference position.
pub fn chain_ocp(n_mass: usize, n_intervals: usize, tableau: ButcherTableau, n_steps: usize) -> Result<OcpSpec<Model>> {
    let chain: Chain = make_chain(n_mass)?;
    let x_ref = chain.rest_state().to_vec();
    let x0 = chain.rest_state_at(CHAIN_START_END)?;
    let nu = 3;
    let mut spec = OcpSpec::new(Model::Chain(chain), n_intervals, CHAIN_DT * n_intervals as f64, tableau, n_steps);
    spec.x_ref = x_ref;
    spec.x0 = x0;
    spec.r = DMatrix::identity(nu, nu) * CHAIN_CONTROL_WEIGHT;
    Ok(spec)
}

/// Default tableau for the OCP benchmarks.
pub fn default_ocp_tableau() -> ButcherTableau {
    make_tableau(SchemeFamily::GaussLegendre, 2).expect("embedded tableau")
}
