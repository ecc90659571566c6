//! Direct collocation: stage variables of every integrator step are NLP unknowns
//! and the stage equations are NLP constraints.

use nalgebra::DMatrix;

use super::{OcpSpec, StageInit};
use crate::ad::{hessian_vec, jacobian};
use crate::error::{Error, Result};
use crate::model::{algebraic_state, Dynamics, ResidualFn};
use crate::nlp::{Nlp, NlpEvaluator, QuadraticCost};

struct CollocationEvaluator<M> {
    model: M,
    cost: QuadraticCost,
    x0: Vec<f64>,
    nx: usize,
    nu: usize,
    ny: usize,
    nw: usize,
    n: usize,
    n_steps: usize,
    s: usize,
    h: f64,
    b: Vec<f64>,
    /// Affine maps from an interval block to the local arguments of each (step, stage).
    maps: Vec<DMatrix<f64>>,
}

impl<M: Dynamics> CollocationEvaluator<M> {
    fn block_len(&self) -> usize {
        self.nx + self.nu + self.n_steps * self.nw
    }

    fn rows_per_interval(&self) -> usize {
        self.n_steps * self.nw + self.nx
    }

    fn block<'a>(&self, v: &'a [f64], k: usize) -> &'a [f64] {
        let nb = self.block_len();
        &v[k * nb..(k + 1) * nb]
    }

    fn local_args(&self, map: &DMatrix<f64>, block: &[f64]) -> Vec<f64> {
        (0..map.nrows())
            .map(|r| map.row(r).iter().zip(block).map(|(a, b)| a * b).sum())
            .collect()
    }

    fn tag(&self, k: usize, m: usize, i: usize) -> impl FnOnce(Error) -> Error {
        move |e| Error::Stage {
            interval: k,
            step: m,
            stage: i,
            source: Box::new(e),
        }
    }

    /// Offset of `k_{m, j}` (component 0) inside an interval block.
    fn slope_offset(&self, m: usize, j: usize) -> usize {
        self.nx + self.nu + m * self.nw + j * self.nx
    }
}

impl<M: Dynamics> NlpEvaluator for CollocationEvaluator<M> {
    fn n_vars(&self) -> usize {
        self.n * self.block_len() + self.nx
    }

    fn n_eq(&self) -> usize {
        self.nx + self.n * self.rows_per_interval()
    }

    fn objective(&mut self, v: &[f64]) -> Result<f64> {
        Ok(self.cost.value(v))
    }

    fn gradient(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        Ok(self.cost.gradient(v))
    }

    fn constraints(&mut self, v: &[f64]) -> Result<Vec<f64>> {
        let (nx, ny) = (self.nx, self.ny);
        let nb = self.block_len();
        let mut g = vec![0.0; self.n_eq()];
        for c in 0..nx {
            g[c] = v[c] - self.x0[c];
        }
        let f = ResidualFn(&self.model);
        let mut r = vec![0.0; ny];
        for k in 0..self.n {
            let blk = self.block(v, k);
            let row0 = nx + k * self.rows_per_interval();
            for m in 0..self.n_steps {
                for i in 0..self.s {
                    let args = self.local_args(&self.maps[m * self.s + i], blk);
                    crate::ad::VectorFn::eval(&f, &args, &mut r);
                    if let Some(q) = r.iter().position(|x| !x.is_finite()) {
                        return Err((self.tag(k, m, i))(Error::NonFinite {
                            context: "collocation residual".into(),
                            index: q,
                        }));
                    }
                    let o = row0 + m * self.nw + i * ny;
                    g[o..o + ny].copy_from_slice(&r);
                }
            }
            let cont = row0 + self.n_steps * self.nw;
            for c in 0..nx {
                let mut acc = 0.0;
                for m in 0..self.n_steps {
                    for j in 0..self.s {
                        acc += self.b[j] * blk[self.slope_offset(m, j) + c];
                    }
                }
                g[cont + c] = blk[c] + self.h * acc - v[(k + 1) * nb + c];
            }
        }
        Ok(g)
    }

    fn jacobian(&mut self, v: &[f64]) -> Result<DMatrix<f64>> {
        let (nx, ny) = (self.nx, self.ny);
        let nb = self.block_len();
        let mut jac = DMatrix::zeros(self.n_eq(), self.n_vars());
        for c in 0..nx {
            jac[(c, c)] = 1.0;
        }
        let f = ResidualFn(&self.model);
        for k in 0..self.n {
            let blk = self.block(v, k);
            let row0 = nx + k * self.rows_per_interval();
            for m in 0..self.n_steps {
                for i in 0..self.s {
                    let map = &self.maps[m * self.s + i];
                    let args = self.local_args(map, blk);
                    let floc = jacobian(&f, &args, 0..args.len()).map_err(self.tag(k, m, i))?;
                    let rows = floc * map;
                    jac.view_mut((row0 + m * self.nw + i * ny, k * nb), (ny, nb)).copy_from(&rows);
                }
            }
            let cont = row0 + self.n_steps * self.nw;
            for c in 0..nx {
                jac[(cont + c, k * nb + c)] = 1.0;
                jac[(cont + c, (k + 1) * nb + c)] = -1.0;
                for m in 0..self.n_steps {
                    for j in 0..self.s {
                        jac[(cont + c, k * nb + self.slope_offset(m, j) + c)] = self.h * self.b[j];
                    }
                }
            }
        }
        Ok(jac)
    }

    fn lagrangian_hessian(&mut self, v: &[f64], nu: &[f64]) -> Result<DMatrix<f64>> {
        let (nx, ny) = (self.nx, self.ny);
        let nb = self.block_len();
        let mut h = self.cost_hessian(v)?;
        let f = ResidualFn(&self.model);
        for k in 0..self.n {
            let blk = self.block(v, k);
            let row0 = nx + k * self.rows_per_interval();
            for m in 0..self.n_steps {
                for i in 0..self.s {
                    let o = row0 + m * self.nw + i * ny;
                    let seed = &nu[o..o + ny];
                    if seed.iter().all(|&x| x == 0.0) {
                        continue;
                    }
                    let map = &self.maps[m * self.s + i];
                    let args = self.local_args(map, blk);
                    let hloc = hessian_vec(&f, &args, seed).map_err(self.tag(k, m, i))?;
                    let contrib = map.transpose() * hloc * map;
                    let mut view = h.view_mut((k * nb, k * nb), (nb, nb));
                    view += &contrib;
                }
            }
        }
        crate::ad::symmetrize(&mut h);
        Ok(h)
    }

    fn cost_hessian(&mut self, _v: &[f64]) -> Result<DMatrix<f64>> {
        let n = self.n_vars();
        let mut h = DMatrix::zeros(n, n);
        self.cost.add_hessian(&mut h);
        Ok(h)
    }
}

/// `v = (x_0, u_0, w_0, ..., x_{N-1}, u_{N-1}, w_{N-1}, x_N)` where `w_k` holds
/// the stage values of every step of interval `k`. Constraints per interval:
/// the stage equations of each step, then continuity into `x_{k+1}`.
pub fn transcribe_collocation<M: Dynamics + Clone + 'static>(spec: &OcpSpec<M>) -> Result<Nlp> {
    spec.validate()?;
    let tab = &spec.tableau;
    if tab.is_explicit() {
        return Err(Error::InvalidArgument(format!(
            "collocation needs an implicit tableau, got {}",
            tab.family()
        )));
    }
    let d = spec.model.dims();
    let (nx, nu, nz) = (d.nx, d.nu, d.nz);
    let s = tab.stages();
    let ny = nx + nz;
    let nw = s * ny;
    let n_steps = spec.n_steps;
    let nb = nx + nu + n_steps * nw;
    let nv = 2 * nx + nu + nz;
    let h = spec.interval_length() / n_steps as f64;

    let mut maps = Vec::with_capacity(n_steps * s);
    for m in 0..n_steps {
        for i in 0..s {
            let mut a = DMatrix::zeros(nv, nb);
            let w0 = nx + nu + m * nw;
            for c in 0..nx {
                a[(c, w0 + i * nx + c)] = 1.0;
                a[(nx + c, c)] = 1.0;
                for mp in 0..m {
                    for j in 0..s {
                        a[(nx + c, nx + nu + mp * nw + j * nx + c)] += h * tab.b()[j];
                    }
                }
                for j in 0..s {
                    a[(nx + c, w0 + j * nx + c)] += h * tab.a(i, j);
                }
            }
            for c in 0..nu {
                a[(2 * nx + c, nx + c)] = 1.0;
            }
            for c in 0..nz {
                a[(2 * nx + nu + c, w0 + s * nx + i * nz + c)] = 1.0;
            }
            maps.push(a);
        }
    }

    let mut stage_guess = vec![0.0; nw];
    if spec.stage_init == StageInit::Consistent {
        let (xdot, z) = algebraic_state(&spec.model, &spec.x0, &spec.u_ref)?;
        for i in 0..s {
            stage_guess[i * nx..(i + 1) * nx].copy_from_slice(&xdot);
            stage_guess[s * nx + i * nz..s * nx + (i + 1) * nz].copy_from_slice(&z);
        }
    }
    let mut guess = Vec::with_capacity(spec.n_intervals * nb + nx);
    for _ in 0..spec.n_intervals {
        guess.extend_from_slice(&spec.x0);
        guess.extend_from_slice(&spec.u_ref);
        for _ in 0..n_steps {
            guess.extend_from_slice(&stage_guess);
        }
    }
    guess.extend_from_slice(&spec.x0);

    Ok(Nlp {
        layout: spec.layout(n_steps * nw),
        initial_guess: guess,
        evaluator: Box::new(CollocationEvaluator {
            model: spec.model.clone(),
            cost: spec.cost(nb),
            x0: spec.x0.clone(),
            nx,
            nu,
            ny,
            nw,
            n: spec.n_intervals,
            n_steps,
            s,
            h,
            b: tab.b().to_vec(),
            maps,
        }),
    })
}
