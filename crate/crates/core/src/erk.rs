//! Explicit Runge-Kutta integrator for explicit-capable ODE models.
//!
//! Forward sensitivities propagate the variational equations with directional
//! sweeps of `f_expl`, the adjoint is a reverse sweep through the stored stage
//! states, and the Hessian is the second-order term of `kbar_i^T f_expl(X_i, u)`
//! along the stage-state directions. No linear system is ever solved.

use crate::ad::{Dual1, Dual2, Scalar};
use crate::butcher::ButcherTableau;
use crate::error::{Error, Result};
use crate::model::{Dims, Dynamics};
use crate::sim::{check_len, SensFlags, SimConfig, SimOutput, SimStats};

/// Explicit RK integrator with preallocated workspace.
#[derive(Debug, Clone)]
pub struct Erk<M> {
    model: M,
    cfg: SimConfig,
    d: Dims,
    s: usize,
    capacity: SensFlags,
    enabled: SensFlags,
    xs: Vec<f64>,
    /// Stage states `X_i` per step, `n_steps x s x nx`.
    stage_x: Vec<f64>,
    /// Stage slopes of the current step, `s x nx`.
    k: Vec<f64>,
    /// Current forward sensitivity, column-major `nx x np`.
    sens: Vec<f64>,
    /// Stage slope sensitivities of the current step, `s x (nx x np)`.
    k_sens: Vec<f64>,
    /// Stage state sensitivities `dX_i / dp` per step, kept for the Hessian.
    stage_sens_hist: Vec<f64>,
    stage_dir: Vec<f64>,
    /// Stage Jacobian `[f_x f_u]`, column-major `nx x np`.
    stage_jac: Vec<f64>,
    xbar: Vec<f64>,
    kbar: Vec<f64>,
    xbar_stage: Vec<f64>,
    ubar: Vec<f64>,
    kbar_hist: Vec<f64>,
    d1_in: Vec<Dual1>,
    d1_out: Vec<Dual1>,
    d2_in: Vec<Dual2>,
    d2_out: Vec<Dual2>,
    out: SimOutput,
}

impl<M: Dynamics> Erk<M> {
    pub fn new(model: M, cfg: SimConfig) -> Result<Self> {
        cfg.validate()?;
        if !cfg.tableau.is_explicit() {
            return Err(Error::InvalidArgument(format!(
                "ERK needs an explicit tableau, got {}",
                cfg.tableau.family()
            )));
        }
        if !model.is_explicit() {
            return Err(Error::InvalidArgument(format!(
                "ERK needs an explicit-capable model, {} is implicit",
                model.name()
            )));
        }
        let d = model.dims();
        let (nx, np) = (d.nx, d.np());
        let s = cfg.tableau.stages();
        let n = cfg.n_steps;
        let cap = cfg.sens.closure();
        let fwd = cap.forward || cap.hessian;
        let adj = cap.adjoint || cap.hessian;
        let hist = cap.hessian;
        Ok(Erk {
            xs: vec![0.0; (n + 1) * nx],
            stage_x: vec![0.0; n * s * nx],
            k: vec![0.0; s * nx],
            sens: vec![0.0; if fwd { nx * np } else { 0 }],
            k_sens: vec![0.0; if fwd { s * nx * np } else { 0 }],
            stage_sens_hist: vec![0.0; if hist { n * s * nx * np } else { 0 }],
            stage_dir: vec![0.0; if fwd { nx * np } else { 0 }],
            stage_jac: vec![0.0; if adj { nx * np } else { 0 }],
            xbar: vec![0.0; nx],
            kbar: vec![0.0; s * nx],
            xbar_stage: vec![0.0; nx],
            ubar: vec![0.0; d.nu],
            kbar_hist: vec![0.0; if hist { n * s * nx } else { 0 }],
            d1_in: vec![Dual1::default(); np],
            d1_out: vec![Dual1::default(); nx],
            d2_in: vec![Dual2::default(); if hist { np } else { 0 }],
            d2_out: vec![Dual2::default(); if hist { nx } else { 0 }],
            out: SimOutput::new(d, cap),
            capacity: cap,
            enabled: cap,
            model,
            cfg,
            d,
            s,
        })
    }

    pub fn model(&self) -> &M {
        &self.model
    }

    pub fn config(&self) -> &SimConfig {
        &self.cfg
    }

    pub fn dims(&self) -> Dims {
        self.d
    }

    pub fn sens_options(&self) -> SensFlags {
        self.enabled
    }

    pub fn set_sens_options(&mut self, flags: SensFlags) -> Result<()> {
        self.capacity.check_covers(flags)?;
        self.enabled = flags;
        Ok(())
    }

    /// States at the step boundaries of the last call, `(n_steps + 1) x nx`.
    pub fn trajectory(&self) -> &[f64] {
        &self.xs
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

    pub fn run(&mut self, x0: &[f64], u0: &[f64], seed: Option<&[f64]>) -> Result<&SimOutput> {
        self.compute(x0, u0, seed, self.enabled)
    }

    fn compute(&mut self, x0: &[f64], u0: &[f64], seed: Option<&[f64]>, want: SensFlags) -> Result<&SimOutput> {
        let (nx, np, s) = (self.d.nx, self.d.np(), self.s);
        check_len("x0", x0, nx)?;
        check_len("u0", u0, self.d.nu)?;
        self.capacity.check_covers(want)?;
        let seed = if want.needs_seed() {
            let sd = seed.ok_or_else(|| Error::InvalidArgument("adjoint modes need a seed".into()))?;
            check_len("seed", sd, nx)?;
            Some(sd)
        } else {
            None
        };
        let need_fwd = want.forward || want.hessian;
        let n_steps = self.cfg.n_steps;
        let h = self.cfg.step_size();
        self.out.computed = SensFlags::NONE;

        self.xs[..nx].copy_from_slice(x0);
        if need_fwd {
            self.sens.fill(0.0);
            for c in 0..nx {
                self.sens[c * nx + c] = 1.0;
            }
        }
        let tab = &self.cfg.tableau;
        for n in 0..n_steps {
            let (head, tail) = self.xs.split_at_mut((n + 1) * nx);
            let xn = &head[n * nx..];
            for i in 0..s {
                let xi = &mut self.stage_x[(n * s + i) * nx..(n * s + i + 1) * nx];
                for c in 0..nx {
                    let mut acc = 0.0;
                    for j in 0..i {
                        acc += tab.a(i, j) * self.k[j * nx + c];
                    }
                    xi[c] = xn[c] + h * acc;
                }
                self.model.explicit_rhs(xi, u0, &mut self.k[i * nx..(i + 1) * nx]);
                if need_fwd {
                    // dX_i = S + h sum_j a_ij dk_j, then dk_i = f_x dX_i + f_u [0 I]
                    let sz = nx * np;
                    for e in 0..sz {
                        let mut acc = 0.0;
                        for j in 0..i {
                            acc += tab.a(i, j) * self.k_sens[j * sz + e];
                        }
                        self.stage_dir[e] = self.sens[e] + h * acc;
                    }
                    if want.hessian {
                        self.stage_sens_hist[(n * s + i) * sz..(n * s + i + 1) * sz]
                            .copy_from_slice(&self.stage_dir);
                    }
                    for a in 0..np {
                        let dir = &self.stage_dir[a * nx..(a + 1) * nx];
                        for (slot, (&x, &dx)) in self.d1_in[..nx].iter_mut().zip(xi.iter().zip(dir)) {
                            *slot = Dual1::new(x, dx);
                        }
                        for (c, (slot, &u)) in self.d1_in[nx..].iter_mut().zip(u0).enumerate() {
                            *slot = Dual1::new(u, if a == nx + c { 1.0 } else { 0.0 });
                        }
                        let (xd, ud) = self.d1_in.split_at(nx);
                        self.model.explicit_rhs(xd, ud, &mut self.d1_out);
                        for c in 0..nx {
                            self.k_sens[i * sz + a * nx + c] = self.d1_out[c].dot;
                        }
                    }
                }
            }
            let xnext = &mut tail[..nx];
            for c in 0..nx {
                let mut acc = 0.0;
                for (j, bj) in tab.b().iter().enumerate() {
                    acc += bj * self.k[j * nx + c];
                }
                xnext[c] = xn[c] + h * acc;
                if !xnext[c].is_finite() {
                    return Err(Error::NonFinite {
                        context: format!("state after step {n}"),
                        index: c,
                    });
                }
            }
            if need_fwd {
                let sz = nx * np;
                for e in 0..sz {
                    let mut acc = 0.0;
                    for (j, bj) in tab.b().iter().enumerate() {
                        acc += bj * self.k_sens[j * sz + e];
                    }
                    self.sens[e] += h * acc;
                }
            }
        }
        self.out.x_next.copy_from_slice(&self.xs[n_steps * nx..]);
        self.out.stats = SimStats {
            converged: true,
            ..SimStats::default()
        };
        if want.forward {
            self.out.s_forw.as_mut_slice().copy_from_slice(&self.sens);
        }
        if let Some(seed) = seed {
            self.reverse_sweep(seed, u0, h, want.hessian)?;
        }
        if want.hessian {
            self.hessian_sweep(u0)?;
        }
        self.out.computed = want;
        Ok(&self.out)
    }

    /// Fills `stage_jac` with `[f_x f_u]` at `(x, u)`.
    fn stage_jacobian(&mut self, x: &[f64], u: &[f64]) -> Result<()> {
        let (nx, np) = (self.d.nx, self.d.np());
        for (d, &v) in self.d1_in.iter_mut().zip(x.iter().chain(u)) {
            *d = Dual1::cst(v);
        }
        for a in 0..np {
            self.d1_in[a].dot = 1.0;
            let (xd, ud) = self.d1_in.split_at(nx);
            self.model.explicit_rhs(xd, ud, &mut self.d1_out);
            self.d1_in[a].dot = 0.0;
            for (c, o) in self.d1_out.iter().enumerate() {
                if !o.dot.is_finite() {
                    return Err(Error::NonFinite {
                        context: "stage Jacobian".into(),
                        index: c,
                    });
                }
                self.stage_jac[a * nx + c] = o.dot;
            }
        }
        Ok(())
    }

    fn reverse_sweep(&mut self, seed: &[f64], u0: &[f64], h: f64, store: bool) -> Result<()> {
        let (nx, nu, s) = (self.d.nx, self.d.nu, self.s);
        self.xbar.copy_from_slice(seed);
        self.ubar.fill(0.0);
        for n in (0..self.cfg.n_steps).rev() {
            for i in 0..s {
                let bi = self.cfg.tableau.b()[i];
                for c in 0..nx {
                    self.kbar[i * nx + c] = h * bi * self.xbar[c];
                }
            }
            for i in (0..s).rev() {
                let off = (n * s + i) * nx;
                // stage_jacobian borrows self mutably, so copy the stage state out first
                self.xbar_stage.copy_from_slice(&self.stage_x[off..off + nx]);
                let xi = std::mem::take(&mut self.xbar_stage);
                let res = self.stage_jacobian(&xi, u0);
                self.xbar_stage = xi;
                res?;
                let kb = &self.kbar[i * nx..(i + 1) * nx];
                if store {
                    self.kbar_hist[off..off + nx].copy_from_slice(kb);
                }
                // Xbar_i = f_x^T kbar_i, ubar += f_u^T kbar_i
                for c in 0..nx {
                    let col = &self.stage_jac[c * nx..(c + 1) * nx];
                    self.xbar_stage[c] = col.iter().zip(kb).map(|(a, b)| a * b).sum();
                }
                for c in 0..nu {
                    let col = &self.stage_jac[(nx + c) * nx..(nx + c + 1) * nx];
                    self.ubar[c] += col.iter().zip(kb).map(|(a, b)| a * b).sum::<f64>();
                }
                for j in 0..i {
                    let ha = h * self.cfg.tableau.a(i, j);
                    if ha != 0.0 {
                        for c in 0..nx {
                            self.kbar[j * nx + c] += ha * self.xbar_stage[c];
                        }
                    }
                }
                for c in 0..nx {
                    self.xbar[c] += self.xbar_stage[c];
                }
            }
        }
        self.out.grad_adj[..nx].copy_from_slice(&self.xbar);
        self.out.grad_adj[nx..].copy_from_slice(&self.ubar);
        Ok(())
    }

    fn hessian_sweep(&mut self, u0: &[f64]) -> Result<()> {
        let (nx, np, s) = (self.d.nx, self.d.np(), self.s);
        let hess = &mut self.out.hess;
        hess.fill(0.0);
        let sz = nx * np;
        for n in 0..self.cfg.n_steps {
            for i in 0..s {
                let off = (n * s + i) * nx;
                let kb = &self.kbar_hist[off..off + nx];
                if kb.iter().all(|&v| v == 0.0) {
                    continue;
                }
                let xi = &self.stage_x[off..off + nx];
                let dirs = &self.stage_sens_hist[(n * s + i) * sz..(n * s + i + 1) * sz];
                for a in 0..np {
                    for b in a..np {
                        for c in 0..nx {
                            self.d2_in[c] = Dual2::new(xi[c], dirs[a * nx + c], dirs[b * nx + c], 0.0);
                        }
                        for (c, (slot, &u)) in self.d2_in[nx..].iter_mut().zip(u0).enumerate() {
                            let e = |k: usize| if k == nx + c { 1.0 } else { 0.0 };
                            *slot = Dual2::new(u, e(a), e(b), 0.0);
                        }
                        let (xd, ud) = self.d2_in.split_at(nx);
                        self.model.explicit_rhs(xd, ud, &mut self.d2_out);
                        let mut acc = 0.0;
                        for (c, (o, w)) in self.d2_out.iter().zip(kb).enumerate() {
                            if !o.dot_ab.is_finite() {
                                return Err(Error::NonFinite {
                                    context: format!("Hessian sweep at step {n}"),
                                    index: c,
                                });
                            }
                            acc += w * o.dot_ab;
                        }
                        hess[(a, b)] += acc;
                    }
                }
            }
        }
        for a in 0..np {
            for b in 0..a {
                hess[(a, b)] = hess[(b, a)];
            }
        }
        crate::ad::symmetrize(hess);
        Ok(())
    }
}

/// Tableau check used by tests: explicit tableaux have a strictly lower `A`.
pub fn is_erk_tableau(tab: &ButcherTableau) -> bool {
    tab.is_explicit() && tab.is_strictly_lower()
}
