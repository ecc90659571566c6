//! Experiment drivers shared by the CLI and the acceptance suite.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::ad::{fd_jacobian, FD_STEP, FD_STEP_SECOND};
use crate::butcher::{make_tableau, ButcherTableau, SchemeFamily};
use crate::error::{Error, Result};
use crate::integrator::Integrator;
use crate::metrics::{asymmetry, fd_rel_err, norm_rel_err, seed_times};
use crate::model::{make_linear_test, Dynamics};
use crate::ocp::{chain_ocp, transcribe, Transcription};
use crate::sim::{NewtonOpts, SensFlags, SimConfig};
use crate::sqp::{solve, SqpOpts, SqpStatus};

/// Newton settings that solve the stage equations to roundoff, so that the
/// nominal map is the converged map the sensitivities differentiate.
pub fn oracle_newton() -> NewtonOpts {
    NewtonOpts {
        max_iters: 12,
        tol: 0.0,
        freeze_jacobian: false,
        strict: false,
    }
}

/// Worst-case sensitivity errors over a set of random points.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SensReport {
    /// Forward sensitivities vs central differences of the nominal map.
    pub max_rel_err_forward: f64,
    /// Adjoint gradient vs `seed^T S`.
    pub adj_consistency: f64,
    /// Hessian vs central differences of the adjoint gradient.
    pub hess_fd_err: f64,
    /// `max |H - H^T|`.
    pub hess_asym: f64,
    pub points: usize,
}

impl SensReport {
    pub const FORWARD_TOL: f64 = 1e-6;
    pub const ADJOINT_TOL: f64 = 1e-12;
    pub const HESSIAN_TOL: f64 = 1e-5;

    pub fn passes(&self) -> bool {
        self.max_rel_err_forward < Self::FORWARD_TOL
            && self.adj_consistency < Self::ADJOINT_TOL
            && self.hess_fd_err < Self::HESSIAN_TOL
            && self.hess_asym == 0.0
    }
}

/// Random `(x0, u0, seed)` around the model's reference point.
pub fn random_points<M: Dynamics>(model: &M, n: usize, seed: u64) -> Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    let (x_ref, u_ref) = model.reference_point();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let x = x_ref.iter().map(|v| v + rng.random_range(-0.1..0.1)).collect();
            let u = u_ref.iter().map(|v| v + rng.random_range(-0.5..0.5)).collect();
            let s = (0..x_ref.len()).map(|_| rng.random_range(-1.0..1.0)).collect();
            (x, u, s)
        })
        .collect()
}

/// Runs the forward, adjoint and (optionally) Hessian checks of one
/// integrator configuration at `n_points` random points. Newton settings in
/// `cfg` are replaced by [`oracle_newton`].
pub fn sens_check<M: Dynamics + Clone>(
    model: &M,
    cfg: &SimConfig,
    n_points: usize,
    seed: u64,
    with_hessian: bool,
) -> Result<SensReport> {
    let cfg = cfg.clone().with_newton(oracle_newton()).with_sens(SensFlags::ALL);
    let nx = model.dims().nx;
    let mut integ = Integrator::new(model.clone(), cfg)?;
    let mut rep = SensReport {
        points: n_points,
        ..SensReport::default()
    };
    for (x, u, sd) in random_points(model, n_points, seed) {
        let p: Vec<f64> = x.iter().chain(&u).copied().collect();
        let s = integ.forward(&x, &u)?.s_forw().expect("forward computed").clone();
        let grad = integ.adjoint(&x, &u, &sd)?.grad_adj().expect("adjoint computed").to_vec();
        rep.adj_consistency = rep.adj_consistency.max(norm_rel_err(&grad, &seed_times(&sd, &s)));

        let mut failure = None;
        let fd = fd_jacobian(
            |p| match integ.simulate(&p[..nx], &p[nx..]) {
                Ok(out) => out.x_next().to_vec(),
                Err(e) => {
                    failure.get_or_insert(e);
                    vec![f64::NAN; nx]
                }
            },
            &p,
            FD_STEP,
        );
        if let Some(e) = failure.take() {
            return Err(e);
        }
        rep.max_rel_err_forward = rep.max_rel_err_forward.max(fd_rel_err(s.as_slice(), fd.as_slice()));

        if with_hessian {
            let h = integ.hessian(&x, &u, &sd)?.hess().expect("hessian computed").clone();
            rep.hess_asym = rep.hess_asym.max(asymmetry(&h));
            let fd = fd_jacobian(
                |p| match integ.adjoint(&p[..nx], &p[nx..], &sd) {
                    Ok(out) => out.grad_adj().expect("adjoint computed").to_vec(),
                    Err(e) => {
                        failure.get_or_insert(e);
                        vec![f64::NAN; p.len()]
                    }
                },
                &p,
                FD_STEP_SECOND,
            );
            if let Some(e) = failure.take() {
                return Err(e);
            }
            rep.hess_fd_err = rep.hess_fd_err.max(norm_rel_err(h.as_slice(), fd.as_slice()));
        }
    }
    Ok(rep)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OrderRow {
    pub n_steps: usize,
    pub h: f64,
    pub error: f64,
    /// `log2(e(2h) / e(h))`; absent on the first row.
    pub estimated_order: Option<f64>,
}

/// Stage count and step count of the tight reference solution.
pub const ORDER_REFERENCE: (usize, usize) = (4, 512);

/// Final-state errors against a Gauss-Legendre 4-stage, 512-step reference at
/// `n_steps = base, 2 base, 4 base, 8 base`.
pub fn order_study<M: Dynamics + Clone>(
    model: &M,
    tableau: &ButcherTableau,
    x0: &[f64],
    u0: &[f64],
    t_sim: f64,
    base_steps: usize,
) -> Result<Vec<OrderRow>> {
    let (ref_s, ref_n) = ORDER_REFERENCE;
    let ref_tab = make_tableau(SchemeFamily::GaussLegendre, ref_s)?;
    let cfg = SimConfig::new(ref_tab, t_sim, ref_n)
        .with_newton(oracle_newton())
        .with_sens(SensFlags::NONE);
    let reference = Integrator::new(model.clone(), cfg)?.simulate(x0, u0)?.x_next().to_vec();

    let mut rows: Vec<OrderRow> = Vec::with_capacity(4);
    for level in 0..4 {
        let n = base_steps << level;
        let cfg = SimConfig::new(tableau.clone(), t_sim, n)
            .with_newton(oracle_newton())
            .with_sens(SensFlags::NONE);
        let x = Integrator::new(model.clone(), cfg)?.simulate(x0, u0)?.x_next().to_vec();
        let error = x.iter().zip(&reference).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        let estimated_order = rows.last().map(|prev| (prev.error / error).log2());
        rows.push(OrderRow {
            n_steps: n,
            h: t_sim / n as f64,
            error,
            estimated_order,
        });
    }
    Ok(rows)
}

/// One-step amplification `x1 / x0` of `tableau` on `xdot = z x` with unit step.
pub fn amplification(tableau: &ButcherTableau, z: f64) -> Result<f64> {
    let cfg = SimConfig::new(tableau.clone(), 1.0, 1)
        .with_newton(oracle_newton())
        .with_sens(SensFlags::NONE);
    let mut integ = Integrator::new(make_linear_test(z), cfg)?;
    Ok(integ.simulate(&[1.0], &[0.0])?.x_next()[0])
}

/// Integrator setting of one benchmark series.
#[derive(Debug, Clone)]
pub struct BenchConfig {
    pub tableau: ButcherTableau,
    pub n_steps: usize,
}

impl BenchConfig {
    /// Short label such as `gl2x1` (family, stages, steps).
    pub fn label(&self) -> String {
        format!("{}x{}", self.tableau.label(), self.n_steps)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n_mass: usize,
    pub transcription: Transcription,
    pub config: String,
    /// Median over repetitions of total solve time divided by SQP iterations, s.
    pub time_per_iter_s: f64,
    pub iters: usize,
    pub repetitions: usize,
    /// `converged`, `max_iters`, `linalg_failure` or an error message.
    pub status: String,
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(|a, b| a.total_cmp(b));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Solves the chain OCP for every `(config, n_mass)` pair `reps` times,
/// sequentially. Failures become rows with their status and the sweep continues.
pub fn bench(
    n_masses: &[usize],
    configs: &[BenchConfig],
    transcription: Transcription,
    n_intervals: usize,
    sqp: &SqpOpts,
    reps: usize,
) -> Result<Vec<BenchRow>> {
    if n_masses.is_empty() || configs.is_empty() {
        return Err(Error::InvalidArgument("bench sweep is empty".into()));
    }
    if reps == 0 {
        return Err(Error::InvalidArgument("bench needs at least one repetition".into()));
    }
    let mut rows = Vec::new();
    for cfg in configs {
        for &n_mass in n_masses {
            let mut times = Vec::with_capacity(reps);
            let mut iters = 0;
            let mut status = String::new();
            for _ in 0..reps {
                let run = chain_ocp(n_mass, n_intervals, cfg.tableau.clone(), cfg.n_steps)
                    .and_then(|spec| transcribe(&spec, transcription))
                    .and_then(|mut nlp| solve(&mut nlp, sqp));
                match run {
                    Ok(res) => {
                        iters = res.iters;
                        status = res.status.name().to_string();
                        times.push(res.timings.total.as_secs_f64() / res.iters.max(1) as f64);
                        if res.status != SqpStatus::Converged {
                            break;
                        }
                    }
                    Err(e) => {
                        status = format!("error: {e}");
                        break;
                    }
                }
            }
            rows.push(BenchRow {
                n_mass,
                transcription,
                config: cfg.label(),
                time_per_iter_s: if times.is_empty() { f64::NAN } else { median(times.clone()) },
                iters,
                repetitions: times.len(),
                status,
            });
        }
    }
    Ok(rows)
}
