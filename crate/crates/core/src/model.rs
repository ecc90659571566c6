//! Dynamics models in implicit DAE form `f(xdot, x, u, z) = 0`.
//!
//! Residuals are generic over [`Scalar`] so one definition serves nominal
//! evaluation and both dual-number sweeps. Explicit-capable models also
//! provide `f_expl(x, u)` and their residual is `xdot - f_expl(x, u)`.

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ad::{self, Scalar, VectorFn};
use crate::error::{Error, Result};
use crate::linalg::DenseLu;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims {
    pub nx: usize,
    pub nu: usize,
    pub nz: usize,
}

impl Dims {
    /// Number of integrator inputs `(x0, u0)`.
    pub fn np(&self) -> usize {
        self.nx + self.nu
    }
}

/// A named model constant.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: &'static str,
    pub value: f64,
    pub unit: &'static str,
}

pub trait Dynamics: Send + Sync {
    fn name(&self) -> String;

    fn dims(&self) -> Dims;

    /// Writes `f_impl(xdot, x, u, z)` (length `nx + nz`) into `out`.
    fn residual<T: Scalar>(&self, xdot: &[T], x: &[T], u: &[T], z: &[T], out: &mut [T]);

    fn is_explicit(&self) -> bool {
        false
    }

    /// Writes `f_expl(x, u)` into `out`. Only called when [`Dynamics::is_explicit`].
    fn explicit_rhs<T: Scalar>(&self, _x: &[T], _u: &[T], _out: &mut [T]) {
        panic!("model {} has no explicit form", self.name());
    }

    fn params(&self) -> Vec<Param> {
        Vec::new()
    }

    /// Reference `(x, u)` used for registration checks and default initial states.
    fn reference_point(&self) -> (Vec<f64>, Vec<f64>);
}

/// `xdot - f_expl(x, u)` for explicit models.
pub fn explicit_residual<M: Dynamics + ?Sized, T: Scalar>(
    model: &M,
    xdot: &[T],
    x: &[T],
    u: &[T],
    out: &mut [T],
) {
    model.explicit_rhs(x, u, out);
    for (o, xd) in out.iter_mut().zip(xdot) {
        *o = *xd - *o;
    }
}

/// `x -> f_impl` over the stacked input `(xdot, x, u, z)`.
pub struct ResidualFn<'a, M: ?Sized>(pub &'a M);

impl<M: Dynamics + ?Sized> VectorFn for ResidualFn<'_, M> {
    fn n_in(&self) -> usize {
        let d = self.0.dims();
        2 * d.nx + d.nu + d.nz
    }
    fn n_out(&self) -> usize {
        let d = self.0.dims();
        d.nx + d.nz
    }
    fn eval<T: Scalar>(&self, v: &[T], out: &mut [T]) {
        let d = self.0.dims();
        let (xdot, rest) = v.split_at(d.nx);
        let (x, rest) = rest.split_at(d.nx);
        let (u, z) = rest.split_at(d.nu);
        self.0.residual(xdot, x, u, z, out);
    }
}

/// `f_expl` over the stacked input `(x, u)`.
pub struct ExplicitFn<'a, M: ?Sized>(pub &'a M);

impl<M: Dynamics + ?Sized> VectorFn for ExplicitFn<'_, M> {
    fn n_in(&self) -> usize {
        self.0.dims().np()
    }
    fn n_out(&self) -> usize {
        self.0.dims().nx
    }
    fn eval<T: Scalar>(&self, v: &[T], out: &mut [T]) {
        let (x, u) = v.split_at(self.0.dims().nx);
        self.0.explicit_rhs(x, u, out);
    }
}

/// Scalar test ODE `xdot = lambda x + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearTest {
    pub lambda: f64,
}

impl LinearTest {
    /// Closed-form solution from `x0` under constant `u`.
    pub fn exact(&self, x0: f64, u: f64, t: f64) -> f64 {
        let l = self.lambda;
        if l == 0.0 {
            x0 + u * t
        } else {
            (l * t).exp() * x0 + ((l * t).exp() - 1.0) * u / l
        }
    }
}

impl Dynamics for LinearTest {
    fn name(&self) -> String {
        "linear".into()
    }
    fn dims(&self) -> Dims {
        Dims { nx: 1, nu: 1, nz: 0 }
    }
    fn residual<T: Scalar>(&self, xdot: &[T], x: &[T], u: &[T], _z: &[T], out: &mut [T]) {
        explicit_residual(self, xdot, x, u, out);
    }
    fn is_explicit(&self) -> bool {
        true
    }
    fn explicit_rhs<T: Scalar>(&self, x: &[T], u: &[T], out: &mut [T]) {
        out[0] = x[0] * self.lambda + u[0];
    }
    fn params(&self) -> Vec<Param> {
        vec![Param {
            name: "lambda",
            value: self.lambda,
            unit: "1/s",
        }]
    }
    fn reference_point(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![1.0], vec![0.0])
    }
}

pub fn make_linear_test(lambda: f64) -> LinearTest {
    LinearTest { lambda }
}

/// Index-1 test DAE `xdot + x - z - u = 0`, `z - x^2 = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DaeTest;

impl Dynamics for DaeTest {
    fn name(&self) -> String {
        "dae-test".into()
    }
    fn dims(&self) -> Dims {
        Dims { nx: 1, nu: 1, nz: 1 }
    }
    fn residual<T: Scalar>(&self, xdot: &[T], x: &[T], u: &[T], z: &[T], out: &mut [T]) {
        out[0] = xdot[0] + x[0] - z[0] - u[0];
        out[1] = z[0] - x[0] * x[0];
    }
    fn reference_point(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0], vec![0.0])
    }
}

pub fn make_algebraic_test() -> DaeTest {
    DaeTest
}

/// The ODE obtained from [`DaeTest`] by eliminating `z`: `xdot = -x + x^2 + u`.
#[derive(Debug, Clone, PartialEq)]
pub struct DaeTestReduced;

impl Dynamics for DaeTestReduced {
    fn name(&self) -> String {
        "dae-test-reduced".into()
    }
    fn dims(&self) -> Dims {
        Dims { nx: 1, nu: 1, nz: 0 }
    }
    fn residual<T: Scalar>(&self, xdot: &[T], x: &[T], u: &[T], _z: &[T], out: &mut [T]) {
        explicit_residual(self, xdot, x, u, out);
    }
    fn is_explicit(&self) -> bool {
        true
    }
    fn explicit_rhs<T: Scalar>(&self, x: &[T], u: &[T], out: &mut [T]) {
        out[0] = -x[0] + x[0] * x[0] + u[0];
    }
    fn reference_point(&self) -> (Vec<f64>, Vec<f64>) {
        (vec![0.0], vec![0.0])
    }
}

/// Hanging chain of `n_mass` point masses joined by linear springs.
///
/// Mass 0 is anchored at the origin, masses `1..n_mass-1` are free and the
/// last one is moved directly by the control (its velocity). State layout:
/// positions of the free masses, then their velocities, then the end position.
#[derive(Debug, Clone, PartialEq)]
pub struct Chain {
    pub n_mass: usize,
    /// kg
    pub mass: f64,
    /// N/m
    pub stiffness: f64,
    /// m
    pub rest_length: f64,
    /// m/s^2
    pub gravity: [f64; 3],
    /// N s/m, zero for the conservative model
    pub damping: f64,
    /// Reference end position, m.
    pub end_position: [f64; 3],
    rest: Vec<f64>,
}

impl Chain {
    pub fn n_free(&self) -> usize {
        self.n_mass - 2
    }

    fn pos<T: Scalar>(&self, x: &[T], j: usize) -> [T; 3] {
        let nf = self.n_free();
        if j == 0 {
            [T::zero(); 3]
        } else if j <= nf {
            let o = 3 * (j - 1);
            [x[o], x[o + 1], x[o + 2]]
        } else {
            let o = 6 * nf;
            [x[o], x[o + 1], x[o + 2]]
        }
    }

    // Force of spring j (between masses j and j+1) acting on mass j.
    fn spring_force<T: Scalar>(&self, x: &[T], j: usize) -> [T; 3] {
        let a = self.pos(x, j);
        let b = self.pos(x, j + 1);
        let d = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let len = (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt();
        let scale = (T::cst(1.0) - T::cst(self.rest_length) / len) * self.stiffness;
        [d[0] * scale, d[1] * scale, d[2] * scale]
    }

    /// Kinetic plus spring plus gravitational energy, J.
    pub fn energy(&self, x: &[f64]) -> f64 {
        let nf = self.n_free();
        let mut e = 0.0;
        for i in 0..nf {
            let v = &x[3 * nf + 3 * i..3 * nf + 3 * i + 3];
            e += 0.5 * self.mass * (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
            let p = &x[3 * i..3 * i + 3];
            e -= self.mass * (self.gravity[0] * p[0] + self.gravity[1] * p[1] + self.gravity[2] * p[2]);
        }
        for j in 0..=nf {
            let a = self.pos(x, j);
            let b = self.pos(x, j + 1);
            let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2) + (b[2] - a[2]).powi(2)).sqrt();
            e += 0.5 * self.stiffness * (len - self.rest_length).powi(2);
        }
        e
    }

    /// Rest shape with the end mass at [`Chain::end_position`] and `u = 0`.
    pub fn rest_state(&self) -> &[f64] {
        &self.rest
    }

    /// Rest shape for a different end position.
    pub fn rest_state_at(&self, end: [f64; 3]) -> Result<Vec<f64>> {
        let guess = self.initial_guess(end);
        steady_state(self, &[0.0; 3], &guess)
    }

    fn initial_guess(&self, end: [f64; 3]) -> Vec<f64> {
        let nf = self.n_free();
        let mut x = vec![0.0; self.dims().nx];
        for i in 1..=nf {
            let t = i as f64 / (self.n_mass - 1) as f64;
            for k in 0..3 {
                x[3 * (i - 1) + k] = t * end[k];
            }
            x[3 * (i - 1) + 2] -= 0.5 * (std::f64::consts::PI * t).sin();
        }
        x[6 * nf..6 * nf + 3].copy_from_slice(&end);
        x
    }
}

impl Dynamics for Chain {
    fn name(&self) -> String {
        format!("chain-{}", self.n_mass)
    }

    fn dims(&self) -> Dims {
        Dims {
            nx: 6 * (self.n_mass - 2) + 3,
            nu: 3,
            nz: 0,
        }
    }

    fn residual<T: Scalar>(&self, xdot: &[T], x: &[T], u: &[T], _z: &[T], out: &mut [T]) {
        explicit_residual(self, xdot, x, u, out);
    }

    fn is_explicit(&self) -> bool {
        true
    }

    fn explicit_rhs<T: Scalar>(&self, x: &[T], u: &[T], out: &mut [T]) {
        let nf = self.n_free();
        let inv_m = 1.0 / self.mass;
        let c = self.damping * inv_m;
        let mut left = self.spring_force(x, 0);
        for i in 1..=nf {
            let right = self.spring_force(x, i);
            let pv = 3 * (i - 1);
            let vv = 3 * nf + pv;
            for k in 0..3 {
                out[pv + k] = x[vv + k];
                let mut acc = (right[k] - left[k]) * inv_m + self.gravity[k];
                if c != 0.0 {
                    acc -= x[vv + k] * c;
                }
                out[vv + k] = acc;
            }
            left = right;
        }
        for k in 0..3 {
            out[6 * nf + k] = u[k];
        }
    }

    fn params(&self) -> Vec<Param> {
        vec![
            Param { name: "m", value: self.mass, unit: "kg" },
            Param { name: "D", value: self.stiffness, unit: "N/m" },
            Param { name: "L", value: self.rest_length, unit: "m" },
            Param { name: "g_z", value: self.gravity[2], unit: "m/s^2" },
            Param { name: "damping", value: self.damping, unit: "N s/m" },
        ]
    }

    fn reference_point(&self) -> (Vec<f64>, Vec<f64>) {
        (self.rest.clone(), vec![0.0; 3])
    }
}

pub fn make_chain(n_mass: usize) -> Result<Chain> {
    make_chain_with_damping(n_mass, 0.0)
}

pub fn make_chain_with_damping(n_mass: usize, damping: f64) -> Result<Chain> {
    if n_mass < 3 {
        return Err(Error::InvalidArgument(format!(
            "chain needs n_mass >= 3, got {n_mass}"
        )));
    }
    let mut chain = Chain {
        n_mass,
        mass: 0.033,
        stiffness: 1.0,
        rest_length: 0.033,
        gravity: [0.0, 0.0, -9.81],
        damping,
        end_position: [1.0, 0.0, 0.0],
        rest: Vec::new(),
    };
    chain.rest = chain.rest_state_at(chain.end_position)?;
    Ok(chain)
}

/// Registered models, dispatched by name.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Linear(LinearTest),
    DaeTest(DaeTest),
    Chain(Chain),
}

/// Names accepted by [`ModelRegistry::build`].
pub struct ModelRegistry;

impl ModelRegistry {
    pub const NAMES: [&'static str; 3] = ["linear", "dae-test", "chain-<n_mass>"];

    /// Builds a model from its registry name and hyper-parameters
    /// (`lambda` for `linear`; `n_mass`, `damping` for `chain`).
    pub fn build(name: &str, params: &BTreeMap<String, f64>) -> Result<Model> {
        let allow = |keys: &[&str]| -> Result<()> {
            match params.keys().find(|k| !keys.contains(&k.as_str())) {
                Some(k) => Err(Error::InvalidArgument(format!(
                    "model `{name}` has no hyper-parameter `{k}`"
                ))),
                None => Ok(()),
            }
        };
        let model = match name {
            "linear" => {
                allow(&["lambda"])?;
                Model::Linear(make_linear_test(params.get("lambda").copied().unwrap_or(-1.0)))
            }
            "dae-test" => {
                allow(&[])?;
                Model::DaeTest(DaeTest)
            }
            _ if name == "chain" || name.starts_with("chain-") => {
                allow(&["n_mass", "damping"])?;
                let n_mass = match name.strip_prefix("chain-") {
                    Some(n) => n
                        .parse::<usize>()
                        .map_err(|_| Error::UnknownModel(name.to_string()))?,
                    None => match params.get("n_mass") {
                        Some(&n) if n >= 0.0 && n.fract() == 0.0 => n as usize,
                        _ => return Err(Error::UnknownModel(name.to_string())),
                    },
                };
                let damping = params.get("damping").copied().unwrap_or(0.0);
                Model::Chain(make_chain_with_damping(n_mass, damping)?)
            }
            _ => return Err(Error::UnknownModel(name.to_string())),
        };
        check_registration(&model)?;
        Ok(model)
    }
}

macro_rules! dispatch {
    ($self:ident, $m:ident => $e:expr) => {
        match $self {
            Model::Linear($m) => $e,
            Model::DaeTest($m) => $e,
            Model::Chain($m) => $e,
        }
    };
}

impl Dynamics for Model {
    fn name(&self) -> String {
        dispatch!(self, m => m.name())
    }
    fn dims(&self) -> Dims {
        dispatch!(self, m => m.dims())
    }
    fn residual<T: Scalar>(&self, xdot: &[T], x: &[T], u: &[T], z: &[T], out: &mut [T]) {
        dispatch!(self, m => m.residual(xdot, x, u, z, out))
    }
    fn is_explicit(&self) -> bool {
        dispatch!(self, m => m.is_explicit())
    }
    fn explicit_rhs<T: Scalar>(&self, x: &[T], u: &[T], out: &mut [T]) {
        dispatch!(self, m => m.explicit_rhs(x, u, out))
    }
    fn params(&self) -> Vec<Param> {
        dispatch!(self, m => m.params())
    }
    fn reference_point(&self) -> (Vec<f64>, Vec<f64>) {
        dispatch!(self, m => m.reference_point())
    }
}

/// Checks residual length, explicit/implicit consistency and the index-1
/// condition at the reference point.
pub fn check_registration<M: Dynamics>(model: &M) -> Result<()> {
    let d = model.dims();
    let (x, u) = model.reference_point();
    if x.len() != d.nx || u.len() != d.nu {
        return Err(Error::Shape {
            what: "reference point",
            expected: d.np(),
            got: x.len() + u.len(),
        });
    }
    if model.is_explicit() {
        let err = explicit_consistency(model, 100, 7);
        if err > 0.0 {
            return Err(Error::InvalidArgument(format!(
                "{}: implicit and explicit forms disagree by {err:e}",
                model.name()
            )));
        }
    }
    let cond = index1_condition(model, &x, &u)?;
    if cond.is_nan() || cond >= 1e12 {
        return Err(Error::InvalidArgument(format!(
            "{}: d f / d(xdot, z) is ill-conditioned at the reference point (cond {cond:e})",
            model.name()
        )));
    }
    Ok(())
}

/// Max `|f_impl(xdot, x, u) - (xdot - f_expl(x, u))|` over random points
/// around the reference point.
pub fn explicit_consistency<M: Dynamics>(model: &M, n_points: usize, seed: u64) -> f64 {
    let d = model.dims();
    let (x_ref, u_ref) = model.reference_point();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let mut fi = vec![0.0; d.nx];
    let mut fe = vec![0.0; d.nx];
    for _ in 0..n_points {
        let x: Vec<f64> = x_ref.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
        let u: Vec<f64> = u_ref.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
        let xdot: Vec<f64> = (0..d.nx).map(|_| rng.random_range(-1.0..1.0)).collect();
        model.residual(&xdot, &x, &u, &[], &mut fi);
        model.explicit_rhs(&x, &u, &mut fe);
        for i in 0..d.nx {
            worst = worst.max((fi[i] - (xdot[i] - fe[i])).abs());
        }
    }
    worst
}

/// `d f_impl / d(xdot, z)` at `(xdot, x, u, z)`.
pub fn index1_matrix<M: Dynamics>(
    model: &M,
    xdot: &[f64],
    x: &[f64],
    u: &[f64],
    z: &[f64],
) -> Result<DMatrix<f64>> {
    let d = model.dims();
    let v: Vec<f64> = xdot.iter().chain(x).chain(u).chain(z).copied().collect();
    let f = ResidualFn(model);
    let jxd = ad::jacobian(&f, &v, 0..d.nx)?;
    let jz = ad::jacobian(&f, &v, 2 * d.nx + d.nu..v.len())?;
    let mut m = DMatrix::zeros(d.nx + d.nz, d.nx + d.nz);
    m.columns_mut(0, d.nx).copy_from(&jxd);
    m.columns_mut(d.nx, d.nz).copy_from(&jz);
    Ok(m)
}

/// 2-norm condition number of the index-1 matrix at a consistent point for `(x, u)`.
pub fn index1_condition<M: Dynamics>(model: &M, x: &[f64], u: &[f64]) -> Result<f64> {
    let (xdot, z) = algebraic_state(model, x, u)?;
    let m = index1_matrix(model, &xdot, x, u, &z)?;
    let sv = m.singular_values();
    let max = sv.max();
    let min = sv.min();
    Ok(if min == 0.0 { f64::INFINITY } else { max / min })
}

/// Solves `f_impl(xdot, x, u, z) = 0` for `(xdot, z)` by Newton's method.
pub fn algebraic_state<M: Dynamics>(model: &M, x: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let d = model.dims();
    if model.is_explicit() {
        let mut xdot = vec![0.0; d.nx];
        model.explicit_rhs(x, u, &mut xdot);
        return Ok((xdot, Vec::new()));
    }
    let n = d.nx + d.nz;
    let mut y = vec![0.0; n];
    let mut r = vec![0.0; n];
    let mut lu = DenseLu::new(n);
    for it in 0..50 {
        model.residual(&y[..d.nx], x, u, &y[d.nx..], &mut r);
        let res = r.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if !res.is_finite() {
            return Err(Error::NonFinite {
                context: "algebraic state residual".into(),
                index: it,
            });
        }
        if res < 1e-13 {
            break;
        }
        let m = index1_matrix(model, &y[..d.nx], x, u, &y[d.nx..])?;
        let buf = lu.matrix_mut();
        for i in 0..n {
            for j in 0..n {
                buf[i * n + j] = m[(i, j)];
            }
        }
        lu.factor()?;
        lu.solve(&mut r);
        for (yi, ri) in y.iter_mut().zip(&r) {
            *yi -= ri;
        }
    }
    let z = y.split_off(d.nx);
    Ok((y, z))
}

/// Equilibrium `x*` with `|f_expl(x*, u)|_inf < 1e-10`, by Levenberg-damped Newton
/// from `guess` (at most 200 iterations).
pub fn steady_state<M: Dynamics>(model: &M, u: &[f64], guess: &[f64]) -> Result<Vec<f64>> {
    const TOL: f64 = 1e-10;
    const MAX_ITERS: usize = 200;
    if !model.is_explicit() {
        return Err(Error::InvalidArgument(format!(
            "steady_state needs an explicit model, {} is implicit",
            model.name()
        )));
    }
    let d = model.dims();
    let n = d.nx;
    if guess.len() != n || u.len() != d.nu {
        return Err(Error::Shape {
            what: "steady-state guess",
            expected: d.np(),
            got: guess.len() + u.len(),
        });
    }
    let f = ExplicitFn(model);
    let eval = |x: &[f64], out: &mut [f64]| model.explicit_rhs(x, u, out);
    let norm = |r: &[f64]| r.iter().fold(0.0f64, |m, v| m.max(v.abs()));

    let mut x = guess.to_vec();
    let mut r = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut r_trial = vec![0.0; n];
    let mut step = vec![0.0; n];
    let mut lu = DenseLu::new(n);
    eval(&x, &mut r);
    let mut res = norm(&r);
    let mut mu = -1.0;
    for _ in 0..MAX_ITERS {
        if !res.is_finite() {
            return Err(Error::NonFinite {
                context: "steady-state residual".into(),
                index: 0,
            });
        }
        if res < TOL {
            return Ok(x);
        }
        let xu: Vec<f64> = x.iter().chain(u).copied().collect();
        let j = ad::jacobian(&f, &xu, 0..n)?;
        let jtj = j.transpose() * &j;
        let jtr: Vec<f64> = (0..n).map(|c| (0..n).map(|i| j[(i, c)] * r[i]).sum()).collect();
        let diag_max = (0..n).fold(0.0f64, |m, i| m.max(jtj[(i, i)]));
        if diag_max == 0.0 {
            // zero Jacobian: no direction improves the residual
            break;
        }
        if mu < 0.0 {
            mu = 1e-6 * diag_max;
        }
        let mut accepted = false;
        for _ in 0..30 {
            let buf = lu.matrix_mut();
            for a in 0..n {
                for b in 0..n {
                    buf[a * n + b] = jtj[(a, b)] + if a == b { mu } else { 0.0 };
                }
            }
            if lu.factor().is_ok() {
                step.iter_mut().zip(&jtr).for_each(|(s, g)| *s = -g);
                lu.solve(&mut step);
                for i in 0..n {
                    trial[i] = x[i] + step[i];
                }
                eval(&trial, &mut r_trial);
                let rt = norm(&r_trial);
                if rt.is_finite() && rt < res {
                    std::mem::swap(&mut x, &mut trial);
                    std::mem::swap(&mut r, &mut r_trial);
                    res = rt;
                    mu = (mu / 10.0).max(1e-14 * diag_max);
                    accepted = true;
                    break;
                }
            }
            mu *= 10.0;
        }
        if !accepted {
            break;
        }
    }
    if res < TOL {
        return Ok(x);
    }
    Err(Error::NoConvergence {
        iters: MAX_ITERS,
        residual: res,
    })
}
