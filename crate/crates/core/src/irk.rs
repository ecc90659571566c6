//! Implicit Runge-Kutta integrator for index-1 DAEs.
//!
//! Stage unknowns are `w = (k_1..k_s, z_1..z_s)` and each step solves
//! `f_impl(k_i, x0 + h sum_j a_ij k_j, u, z_i) = 0` by Newton's method.
//! Sensitivities are those of the converged map: forward by the implicit
//! function theorem, adjoint by one transposed solve per step, and the
//! Hessian by second-order sweeps of `mu^T f_impl` along the stage directions.

use crate::ad::{Dual1, Dual2, Scalar};
use crate::butcher::ButcherTableau;
use crate::error::{Error, Result};
use crate::linalg::DenseLu;
use crate::model::{Dims, Dynamics};
use crate::sim::{check_len, NewtonOpts, SensFlags, SimConfig, SimOutput, SimStats};

#[derive(Debug, Clone, Copy)]
struct Layout {
    nx: usize,
    nu: usize,
    nz: usize,
    /// residual rows per stage
    ny: usize,
    s: usize,
    nw: usize,
    /// local argument length `(xdot, x, u, z)`
    nv: usize,
    np: usize,
}

impl Layout {
    fn new(d: Dims, s: usize) -> Self {
        Layout {
            nx: d.nx,
            nu: d.nu,
            nz: d.nz,
            ny: d.nx + d.nz,
            s,
            nw: s * (d.nx + d.nz),
            nv: 2 * d.nx + d.nu + d.nz,
            np: d.nx + d.nu,
        }
    }
}

fn eval_local<M: Dynamics, T: Scalar>(model: &M, l: &Layout, v: &[T], out: &mut [T]) {
    let (xdot, rest) = v.split_at(l.nx);
    let (x, rest) = rest.split_at(l.nx);
    let (u, z) = rest.split_at(l.nu);
    model.residual(xdot, x, u, z, out);
}

/// Fills the local arguments of stage `i`.
#[allow(clippy::too_many_arguments)]
fn stage_args(l: &Layout, tab: &ButcherTableau, h: f64, x0: &[f64], u: &[f64], w: &[f64], i: usize, v: &mut [f64]) {
    let nx = l.nx;
    v[..nx].copy_from_slice(&w[i * nx..(i + 1) * nx]);
    for c in 0..nx {
        let mut acc = 0.0;
        for j in 0..l.s {
            acc += tab.a(i, j) * w[j * nx + c];
        }
        v[nx + c] = x0[c] + h * acc;
    }
    v[2 * nx..2 * nx + l.nu].copy_from_slice(u);
    let zo = l.s * nx + i * l.nz;
    v[2 * nx + l.nu..].copy_from_slice(&w[zo..zo + l.nz]);
}

/// Scratch for one stage solve.
#[derive(Debug, Clone)]
struct StageSolver {
    w: Vec<f64>,
    r: Vec<f64>,
    v: Vec<f64>,
    lu: DenseLu,
    /// Per-stage local Jacobians `d f / d(xdot, x, u, z)`, row-major `ny x nv`.
    jac: Vec<f64>,
    d1_in: Vec<Dual1>,
    d1_out: Vec<Dual1>,
}

impl StageSolver {
    fn new(l: &Layout) -> Self {
        StageSolver {
            w: vec![0.0; l.nw],
            r: vec![0.0; l.nw],
            v: vec![0.0; l.nv],
            lu: DenseLu::new(l.nw),
            jac: vec![0.0; l.s * l.ny * l.nv],
            d1_in: vec![Dual1::default(); l.nv],
            d1_out: vec![Dual1::default(); l.ny],
        }
    }

    /// Stacked stage residual into `r`; returns its infinity norm.
    #[allow(clippy::too_many_arguments)]
    fn residual<M: Dynamics>(
        &mut self,
        model: &M,
        l: &Layout,
        tab: &ButcherTableau,
        h: f64,
        x0: &[f64],
        u: &[f64],
        iter: usize,
    ) -> Result<f64> {
        let mut norm = 0.0f64;
        for i in 0..l.s {
            stage_args(l, tab, h, x0, u, &self.w, i, &mut self.v);
            let out = &mut self.r[i * l.ny..(i + 1) * l.ny];
            eval_local(model, l, &self.v, out);
            for (q, val) in out.iter().enumerate() {
                if !val.is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("stage residual at Newton iteration {iter}"),
                        index: i * l.ny + q,
                    });
                }
                norm = norm.max(val.abs());
            }
        }
        Ok(norm)
    }

    /// Local Jacobians at the current `w`, then the iteration matrix and its LU.
    fn factor_iteration_matrix<M: Dynamics>(
        &mut self,
        model: &M,
        l: &Layout,
        tab: &ButcherTableau,
        h: f64,
        x0: &[f64],
        u: &[f64],
    ) -> Result<()> {
        let (nv, ny, nx) = (l.nv, l.ny, l.nx);
        for i in 0..l.s {
            stage_args(l, tab, h, x0, u, &self.w, i, &mut self.v);
            for (d, &val) in self.d1_in.iter_mut().zip(&self.v) {
                *d = Dual1::cst(val);
            }
            let jac = &mut self.jac[i * ny * nv..(i + 1) * ny * nv];
            for c in 0..nv {
                self.d1_in[c].dot = 1.0;
                eval_local(model, l, &self.d1_in, &mut self.d1_out);
                self.d1_in[c].dot = 0.0;
                for (q, o) in self.d1_out.iter().enumerate() {
                    if !o.dot.is_finite() {
                        return Err(Error::NonFinite {
                            context: "stage Jacobian".into(),
                            index: i * ny + q,
                        });
                    }
                    jac[q * nv + c] = o.dot;
                }
            }
        }
        let nw = l.nw;
        let m = self.lu.matrix_mut();
        m.fill(0.0);
        for i in 0..l.s {
            let jac = &self.jac[i * ny * nv..(i + 1) * ny * nv];
            for q in 0..ny {
                let row = &mut m[(i * ny + q) * nw..(i * ny + q + 1) * nw];
                let fq = &jac[q * nv..(q + 1) * nv];
                for j in 0..l.s {
                    let ha = h * tab.a(i, j);
                    for c in 0..nx {
                        row[j * nx + c] = ha * fq[nx + c];
                    }
                }
                for c in 0..nx {
                    row[i * nx + c] += fq[c];
                }
                let zo = l.s * nx + i * l.nz;
                row[zo..zo + l.nz].copy_from_slice(&fq[2 * nx + l.nu..]);
            }
        }
        self.lu.factor()
    }
}

/// Implicit RK integrator with preallocated workspace.
#[derive(Debug, Clone)]
pub struct Irk<M> {
    model: M,
    cfg: SimConfig,
    l: Layout,
    capacity: SensFlags,
    enabled: SensFlags,
    solver: StageSolver,
    /// Converged stage values per step; the warm start of the next call.
    warm: Vec<f64>,
    warm_valid: bool,
    xs: Vec<f64>,
    zs: Vec<f64>,
    step_jac: Vec<f64>,
    step_lu: Vec<DenseLu>,
    /// Forward sensitivity, column-major `nx x np`.
    sens: Vec<f64>,
    /// Stage sensitivities, column-major `nw x np`.
    stage_sens: Vec<f64>,
    sens_hist: Vec<f64>,
    stage_sens_hist: Vec<f64>,
    lam: Vec<f64>,
    grad_u: Vec<f64>,
    nu: Vec<f64>,
    mu_hist: Vec<f64>,
    dirs: Vec<f64>,
    d2_in: Vec<Dual2>,
    d2_out: Vec<Dual2>,
    out: SimOutput,
}

impl<M: Dynamics> Irk<M> {
    pub fn new(model: M, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        if cfg.tableau.is_explicit() {
            return Err(Error::InvalidArgument(format!(
                "IRK needs an implicit tableau, got {}",
                cfg.tableau.family()
            )));
        }
        let d = model.dims();
        let l = Layout::new(d, cfg.tableau.stages());
        let n = cfg.n_steps;
        let cap = cfg.sens.closure();
        let need_adj = cap.adjoint || cap.hessian;
        let need_fwd = cap.forward || cap.hessian;
        let hist = cap.hessian;
        Ok(Irk {
            solver: StageSolver::new(&l),
            warm: vec![0.0; n * l.nw],
            warm_valid: false,
            xs: vec![0.0; (n + 1) * l.nx],
            zs: vec![0.0; n * l.nz],
            step_jac: vec![0.0; if need_adj { n * l.s * l.ny * l.nv } else { 0 }],
            step_lu: if need_adj {
                vec![DenseLu::new(l.nw); n]
            } else {
                Vec::new()
            },
            sens: vec![0.0; if need_fwd { l.nx * l.np } else { 0 }],
            stage_sens: vec![0.0; if need_fwd { l.nw * l.np } else { 0 }],
            sens_hist: vec![0.0; if hist { n * l.nx * l.np } else { 0 }],
            stage_sens_hist: vec![0.0; if hist { n * l.nw * l.np } else { 0 }],
            lam: vec![0.0; l.nx],
            grad_u: vec![0.0; l.nu],
            nu: vec![0.0; l.nw],
            mu_hist: vec![0.0; if hist { n * l.nw } else { 0 }],
            dirs: vec![0.0; if hist { l.nv * l.np } else { 0 }],
            d2_in: vec![Dual2::default(); if hist { l.nv } else { 0 }],
            d2_out: vec![Dual2::default(); if hist { l.ny } else { 0 }],
            out: SimOutput::new(d, cap),
            capacity: cap,
            enabled: cap,
            model,
            cfg,
            l,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn dims(&self) -> Dims {
        self.model.dims()
    }

    pub fn sens_options(&self) -> SensFlags {
        self.enabled
    }

    /// Selects the outputs computed by [`Irk::run`]; modes must have been allocated.
    pub fn set_sens_options(&mut self, flags: SensFlags) -> Result<()> {
        self.capacity.check_covers(flags)?;
        self.enabled = flags;
        Ok(())
    }

    pub fn set_newton_opts(&mut self, opts: NewtonOpts) -> Result<()> {
        opts.validate()?;
        self.cfg.newton = opts;
        Ok(())
    }

    /// Zeroes the stored stage values; the next call starts Newton from zero.
    pub fn reset_stage_guess(&mut self) {
        self.warm.fill(0.0);
        self.warm_valid = false;
    }

    /// States at the step boundaries of the last call, `(n_steps + 1) x nx`.
    pub fn trajectory(&self) -> &[f64] {
        &self.xs
    }

    /// Last-stage algebraic variables of every step of the last call, `n_steps x nz`.
    pub fn z_trajectory(&self) -> &[f64] {
        &self.zs
    }

    /// Converged stage values `w` of every step of the last call, `n_steps x nw`.
    pub fn stage_values(&self) -> &[f64] {
        &self.warm
    }

    /// Overrides the warm start for the next call.
    pub fn set_stage_values(&mut self, w: &[f64]) -> Result<()> {
        check_len("stage values", w, self.warm.len())?;
        self.warm.copy_from_slice(w);
        self.warm_valid = true;
        Ok(())
    }

    pub fn simulate(&mut self, x0: &[f64], u0: &[f64]) -> Result<&SimOutput> {
        self.compute(x0, u0, None, SensFlags::NONE)
    }

    pub fn forward(&mut self, x0: &[f64], u0: &[f64]) -> Result<&SimOutput> {
        self.compute(x0, u0, None, SensFlags::FORWARD)
    }

    pub fn adjoint(&mut self, x0: &[f64], u0: &[f64], seed: &[f64]) -> Result<&SimOutput> {
        self.compute(x0, u0, Some(seed), SensFlags::ADJOINT)
    }

    pub fn hessian(&mut self, x0: &[f64], u0: &[f64], seed: &[f64]) -> Result<&SimOutput> {
        self.compute(x0, u0, Some(seed), SensFlags::ALL)
    }

    /// Computes the outputs selected by [`Irk::set_sens_options`].
    pub fn run(&mut self, x0: &[f64], u0: &[f64], seed: Option<&[f64]>) -> Result<&SimOutput> {
        self.compute(x0, u0, seed, self.enabled)
    }

    fn compute(&mut self, x0: &[f64], u0: &[f64], seed: Option<&[f64]>, want: SensFlags) -> Result<&SimOutput> {
        let l = self.l;
        check_len("x0", x0, l.nx)?;
        check_len("u0", u0, l.nu)?;
        self.capacity.check_covers(want)?;
        let seed = if want.needs_seed() {
            let s = seed.ok_or_else(|| Error::InvalidArgument("adjoint modes need a seed".into()))?;
            check_len("seed", s, l.nx)?;
            Some(s)
        } else {
            None
        };
        let need_fwd = want.forward || want.hessian;
        let need_adj = want.adjoint || want.hessian;
        self.out.computed = SensFlags::NONE;

        if self.cfg.t_sim == 0.0 {
            self.trivial(x0, seed, want, need_fwd);
            return Ok(&self.out);
        }

        let n_steps = self.cfg.n_steps;
        let h = self.cfg.step_size();
        let opts = self.cfg.newton;
        let mut stats = SimStats {
            converged: true,
            ..SimStats::default()
        };
        self.xs[..l.nx].copy_from_slice(x0);
        if need_fwd {
            self.sens.fill(0.0);
            for c in 0..l.nx {
                self.sens[c * l.nx + c] = 1.0;
            }
        }
        for n in 0..n_steps {
            if self.warm_valid {
                self.solver.w.copy_from_slice(&self.warm[n * l.nw..(n + 1) * l.nw]);
            } else if n == 0 {
                self.solver.w.fill(0.0);
            }
            let (head, tail) = self.xs.split_at_mut((n + 1) * l.nx);
            let xn = &head[n * l.nx..];
            let tab = &self.cfg.tableau;

            let mut iters = 0;
            let mut converged = false;
            let mut res;
            loop {
                res = self.solver.residual(&self.model, &l, tab, h, xn, u0, iters)?;
                if opts.tol > 0.0 && res < opts.tol {
                    converged = true;
                    break;
                }
                if iters == opts.max_iters {
                    break;
                }
                if iters == 0 || !opts.freeze_jacobian {
                    self.solver.factor_iteration_matrix(&self.model, &l, tab, h, xn, u0)?;
                    stats.factorizations += 1;
                }
                self.solver.lu.solve(&mut self.solver.r);
                for (wi, di) in self.solver.w.iter_mut().zip(&self.solver.r) {
                    *wi -= di;
                }
                iters += 1;
            }
            converged |= opts.tol == 0.0;
            stats.newton_iters_total += iters;
            stats.last_residual = res;
            if !converged {
                if opts.strict {
                    return Err(Error::NoConvergence { iters, residual: res });
                }
                stats.converged = false;
            }

            let w = &self.solver.w;
            let xnext = &mut tail[..l.nx];
            for c in 0..l.nx {
                let mut acc = 0.0;
                for (j, bj) in tab.b().iter().enumerate() {
                    acc += bj * w[j * l.nx + c];
                }
                xnext[c] = xn[c] + h * acc;
                if !xnext[c].is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("state after step {n}"),
                        index: c,
                    });
                }
            }
            let zo = l.s * l.nx + (l.s - 1) * l.nz;
            self.zs[n * l.nz..(n + 1) * l.nz].copy_from_slice(&w[zo..zo + l.nz]);
            self.warm[n * l.nw..(n + 1) * l.nw].copy_from_slice(w);

            if need_fwd || need_adj {
                self.solver.factor_iteration_matrix(&self.model, &l, tab, h, xn, u0)?;
                stats.factorizations += 1;
            }
            if need_adj {
                let sz = l.s * l.ny * l.nv;
                self.step_jac[n * sz..(n + 1) * sz].copy_from_slice(&self.solver.jac);
                self.step_lu[n].copy_from(&self.solver.lu);
            }
            if need_fwd {
                if want.hessian {
                    let sz = l.nx * l.np;
                    self.sens_hist[n * sz..(n + 1) * sz].copy_from_slice(&self.sens);
                }
                forward_step(&l, tab, h, &self.solver, &mut self.sens, &mut self.stage_sens);
                if want.hessian {
                    let sz = l.nw * l.np;
                    self.stage_sens_hist[n * sz..(n + 1) * sz].copy_from_slice(&self.stage_sens);
                }
            }
        }
        self.warm_valid = true;

        let xend = &self.xs[n_steps * l.nx..];
        self.out.x_next.copy_from_slice(xend);
        self.out.z_out.copy_from_slice(&self.zs[(n_steps - 1) * l.nz..]);
        self.out.stats = stats;
        if want.forward {
            self.out.s_forw.as_mut_slice().copy_from_slice(&self.sens);
        }
        if need_adj {
            self.adjoint_sweep(seed.unwrap_or(&[]), want.hessian, h);
        }
        if want.hessian {
            self.hessian_sweep(h, u0)?;
        }
        self.out.computed = want;
        Ok(&self.out)
    }

    fn trivial(&mut self, x0: &[f64], seed: Option<&[f64]>, want: SensFlags, need_fwd: bool) {
        let l = self.l;
        for n in 0..=self.cfg.n_steps {
            self.xs[n * l.nx..(n + 1) * l.nx].copy_from_slice(x0);
        }
        self.out.x_next.copy_from_slice(x0);
        self.out.z_out.fill(0.0);
        self.out.stats = SimStats {
            converged: true,
            ..SimStats::default()
        };
        if need_fwd {
            let s = &mut self.out.s_forw;
            s.fill(0.0);
            for c in 0..l.nx {
                s[(c, c)] = 1.0;
            }
        }
        if let Some(seed) = seed {
            self.out.grad_adj.fill(0.0);
            self.out.grad_adj[..l.nx].copy_from_slice(seed);
        }
        if want.hessian {
            self.out.hess.fill(0.0);
        }
        self.out.computed = want;
    }

    fn adjoint_sweep(&mut self, seed: &[f64], store_mu: bool, h: f64) {
        let l = self.l;
        let tab = &self.cfg.tableau;
        let sz = l.s * l.ny * l.nv;
        self.lam.copy_from_slice(seed);
        self.grad_u.fill(0.0);
        for n in (0..self.cfg.n_steps).rev() {
            self.nu.fill(0.0);
            for (j, bj) in tab.b().iter().enumerate() {
                for c in 0..l.nx {
                    self.nu[j * l.nx + c] = h * bj * self.lam[c];
                }
            }
            self.step_lu[n].solve_transpose(&mut self.nu);
            let jac = &self.step_jac[n * sz..(n + 1) * sz];
            for i in 0..l.s {
                let ji = &jac[i * l.ny * l.nv..(i + 1) * l.ny * l.nv];
                for q in 0..l.ny {
                    let nq = self.nu[i * l.ny + q];
                    if nq == 0.0 {
                        continue;
                    }
                    let fq = &ji[q * l.nv..(q + 1) * l.nv];
                    for c in 0..l.nx {
                        self.lam[c] -= fq[l.nx + c] * nq;
                    }
                    for c in 0..l.nu {
                        self.grad_u[c] -= fq[2 * l.nx + c] * nq;
                    }
                }
            }
            if store_mu {
                for (m, v) in self.mu_hist[n * l.nw..(n + 1) * l.nw].iter_mut().zip(&self.nu) {
                    *m = -v;
                }
            }
        }
        self.out.grad_adj[..l.nx].copy_from_slice(&self.lam);
        self.out.grad_adj[l.nx..].copy_from_slice(&self.grad_u);
    }

    fn hessian_sweep(&mut self, h: f64, u0: &[f64]) -> Result<()> {
        let l = self.l;
        let tab = &self.cfg.tableau;
        let hess = &mut self.out.hess;
        hess.fill(0.0);
        for n in 0..self.cfg.n_steps {
            let xn = &self.xs[n * l.nx..(n + 1) * l.nx];
            let w = &self.warm[n * l.nw..(n + 1) * l.nw];
            let sn = &self.sens_hist[n * l.nx * l.np..(n + 1) * l.nx * l.np];
            let wn = &self.stage_sens_hist[n * l.nw * l.np..(n + 1) * l.nw * l.np];
            let mu = &self.mu_hist[n * l.nw..(n + 1) * l.nw];
            for i in 0..l.s {
                let mu_i = &mu[i * l.ny..(i + 1) * l.ny];
                if mu_i.iter().all(|&m| m == 0.0) {
                    continue;
                }
                stage_args(&l, tab, h, xn, u0, w, i, &mut self.solver.v);
                for a in 0..l.np {
                    let wa = &wn[a * l.nw..(a + 1) * l.nw];
                    let da = &mut self.dirs[a * l.nv..(a + 1) * l.nv];
                    da[..l.nx].copy_from_slice(&wa[i * l.nx..(i + 1) * l.nx]);
                    for c in 0..l.nx {
                        let mut acc = 0.0;
                        for j in 0..l.s {
                            acc += tab.a(i, j) * wa[j * l.nx + c];
                        }
                        da[l.nx + c] = sn[a * l.nx + c] + h * acc;
                    }
                    for c in 0..l.nu {
                        da[2 * l.nx + c] = if a == l.nx + c { 1.0 } else { 0.0 };
                    }
                    let zo = l.s * l.nx + i * l.nz;
                    da[2 * l.nx + l.nu..].copy_from_slice(&wa[zo..zo + l.nz]);
                }
                for a in 0..l.np {
                    for b in a..l.np {
                        for c in 0..l.nv {
                            self.d2_in[c] = Dual2::new(
                                self.solver.v[c],
                                self.dirs[a * l.nv + c],
                                self.dirs[b * l.nv + c],
                                0.0,
                            );
                        }
                        eval_local(&self.model, &l, &self.d2_in, &mut self.d2_out);
                        let mut acc = 0.0;
                        for (q, (o, m)) in self.d2_out.iter().zip(mu_i).enumerate() {
                            if !o.dot_ab.is_finite() {
                                return Err(Error::NonFinite {
                                    context: format!("Hessian sweep at step {n}"),
                                    index: i * l.ny + q,
                                });
                            }
                            acc += m * o.dot_ab;
                        }
                        hess[(a, b)] += acc;
                    }
                }
            }
        }
        for a in 0..l.np {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        crate::ad::symmetrize(hess);
        Ok(())
    }
}

/// `W = -M^{-1} (R_x S + R_u [0 I])`, then `S += h sum_j b_j W_kj`, column by column.
fn forward_step(l: &Layout, tab: &ButcherTableau, h: f64, solver: &StageSolver, sens: &mut [f64], stage_sens: &mut [f64]) {
    for a in 0..l.np {
        let sa = &mut sens[a * l.nx..(a + 1) * l.nx];
        let wa = &mut stage_sens[a * l.nw..(a + 1) * l.nw];
        for i in 0..l.s {
            let ji = &solver.jac[i * l.ny * l.nv..(i + 1) * l.ny * l.nv];
            for q in 0..l.ny {
                let fq = &ji[q * l.nv..(q + 1) * l.nv];
                let mut acc = 0.0;
                for c in 0..l.nx {
                    acc += fq[l.nx + c] * sa[c];
                }
                if a >= l.nx {
                    acc += fq[2 * l.nx + (a - l.nx)];
                }
                wa[i * l.ny + q] = -acc;
            }
        }
        solver.lu.solve(wa);
        for c in 0..l.nx {
            let mut acc = 0.0;
            for (j, bj) in tab.b().iter().enumerate() {
                acc += bj * wa[j * l.nx + c];
            }
            sa[c] += h * acc;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::butcher::{make_tableau, SchemeFamily};
    use crate::model::{make_linear_test, DaeTest, DaeTestReduced};

    fn gl(s: usize) -> ButcherTableau {
        make_tableau(SchemeFamily::GaussLegendre, s).unwrap()
    }

    #[test]
    fn midpoint_rule_amplification() {
        let cfg = SimConfig::new(gl(1), 0.1, 1);
        let mut irk = Irk::new(make_linear_test(-1.0), cfg).unwrap();
        let out = irk.forward(&[1.0], &[0.0]).unwrap();
        assert!((out.x_next()[0] - 0.95 / 1.05).abs() < 1e-15);
        assert!((out.s_forw().unwrap()[(0, 0)] - 0.95 / 1.05).abs() < 1e-15);
        assert!(out.grad_adj().is_none());
    }

    #[test]
    fn implicit_euler_amplification() {
        let tab = make_tableau(SchemeFamily::RadauIIA, 1).unwrap();
        let mut irk = Irk::new(make_linear_test(-1.0), SimConfig::new(tab, 0.1, 1)).unwrap();
        let x = irk.simulate(&[1.0], &[0.0]).unwrap().x_next()[0];
        assert!((x - 1.0 / 1.1).abs() < 1e-15);
    }

    #[test]
    fn linear_problem_converges_in_one_update() {
        let cfg = SimConfig::new(gl(1), 0.1, 1).with_newton(NewtonOpts::converged(1e-12, 5));
        let mut irk = Irk::new(make_linear_test(-1.0), cfg).unwrap();
        let out = irk.simulate(&[1.0], &[0.0]).unwrap();
        assert!(out.stats.newton_iters_total <= 2);
        assert!(out.stats.converged);
    }

    #[test]
    fn composition_of_steps() {
        let mut irk = Irk::new(make_linear_test(-1.0), SimConfig::new(gl(1), 0.2, 2)).unwrap();
        let x = irk.simulate(&[1.0], &[0.0]).unwrap().x_next()[0];
        assert!((x - (0.95f64 / 1.05).powi(2)).abs() < 1e-15);
    }

    #[test]
    fn zero_horizon_is_identity() {
        let cfg = SimConfig::new(gl(2), 0.0, 3);
        let mut irk = Irk::new(make_linear_test(-1.0), cfg).unwrap();
        let out = irk.hessian(&[0.7], &[0.2], &[2.0]).unwrap();
        assert_eq!(out.x_next(), &[0.7]);
        assert_eq!(out.stats.newton_iters_total, 0);
        assert_eq!(out.grad_adj().unwrap(), &[2.0, 0.0]);
        assert_eq!(out.hess().unwrap().iter().fold(0.0f64, |m, v| m.max(v.abs())), 0.0);
        let out = irk.forward(&[0.7], &[0.2]).unwrap();
        assert_eq!(out.s_forw().unwrap().as_slice(), &[1.0, 0.0]);
    }

    #[test]
    fn dae_matches_reduced_ode() {
        let newton = NewtonOpts::converged(1e-14, 20);
        let cfg = SimConfig::new(gl(2), 0.05, 1).with_newton(newton);
        let mut a = Irk::new(DaeTest, cfg.clone()).unwrap();
        let mut b = Irk::new(DaeTestReduced, cfg).unwrap();
        let xa = a.simulate(&[0.5], &[0.0]).unwrap().x_next()[0];
        let za = a.simulate(&[0.5], &[0.0]).unwrap().z_out()[0];
        let xb = b.simulate(&[0.5], &[0.0]).unwrap().x_next()[0];
        assert!((xa - xb).abs() < 1e-12);
        assert!(za > 0.0 && za < 0.25);
    }

    #[test]
    fn not_allocated_modes_rejected() {
        let cfg = SimConfig::new(gl(1), 0.1, 1).with_sens(SensFlags::NONE);
        let mut irk = Irk::new(make_linear_test(-1.0), cfg).unwrap();
        assert!(matches!(irk.hessian(&[1.0], &[0.0], &[1.0]), Err(Error::NotAllocated(_))));
        assert!(irk.set_sens_options(SensFlags::FORWARD).is_err());
        assert!(irk.simulate(&[1.0], &[0.0]).is_ok());
    }

    #[test]
    fn shape_errors() {
        let mut irk = Irk::new(make_linear_test(-1.0), SimConfig::new(gl(1), 0.1, 1)).unwrap();
        assert!(matches!(irk.simulate(&[1.0, 2.0], &[0.0]), Err(Error::Shape { .. })));
        assert!(matches!(irk.adjoint(&[1.0], &[0.0], &[]), Err(Error::Shape { .. })));
    }

    #[test]
    fn explicit_tableau_rejected() {
        let tab = make_tableau(SchemeFamily::ExplicitRK4, 4).unwrap();
        assert!(Irk::new(make_linear_test(-1.0), SimConfig::new(tab, 0.1, 1)).is_err());
    }
}
