//! Command implementations. CSV floats use 17 significant digits.

use std::path::{Path, PathBuf};
use std::time::Duration;

use rksens::experiments::{self, SensReport};
use rksens::model::algebraic_state;
use rksens::ocp::{chain_ocp, extract_trajectory, ocp_newton, transcribe, OcpSpec};
use rksens::sqp::{self, SqpOpts, SqpStatus};
use rksens::{Dynamics, Integrator, Model, NewtonOpts, SensFlags, SimConfig};
use serde_json::json;

use crate::config::Options;
use crate::CliError;

fn num(v: f64) -> String {
    format!("{v:.16e}")
}

fn row(cells: impl IntoIterator<Item = String>) -> String {
    let mut line = cells.into_iter().collect::<Vec<_>>().join(",");
    line.push('\n');
    line
}

fn emit(out: Option<&Path>, text: &str) -> Result<(), CliError> {
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| CliError::Config(format!("cannot write {}: {e}", p.display()))),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn json_text(v: &serde_json::Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Initial state and control: flags, else the model's reference point.
fn point(o: &Options, model: &Model) -> (Vec<f64>, Vec<f64>) {
    let (x, u) = model.reference_point();
    (o.x0.clone().unwrap_or(x), o.u0.clone().unwrap_or(u))
}

fn sim_config(o: &Options, default_t: f64, default_steps: usize) -> Result<SimConfig, CliError> {
    let cfg = SimConfig::new(o.tableau()?, o.t_sim.unwrap_or(default_t), o.n_steps.unwrap_or(default_steps))
        .with_newton(o.newton(NewtonOpts::default()));
    cfg.validate()?;
    Ok(cfg)
}

pub fn simulate(o: &Options) -> Result<(), CliError> {
    let model = o.build_model()?;
    let d = model.dims();
    let (x0, u0) = point(o, &model);
    let cfg = sim_config(o, 0.1, 1)?.with_sens(SensFlags::NONE);
    let h = cfg.step_size();
    let zero_horizon = cfg.t_sim == 0.0;
    let n = cfg.n_steps;
    let mut integ = Integrator::new(model.clone(), cfg)?;
    integ.simulate(&x0, &u0)?;
    let z0 = if d.nz > 0 { algebraic_state(&model, &x0, &u0)?.1 } else { Vec::new() };

    let mut text = row(std::iter::once("t".to_string())
        .chain((0..d.nx).map(|i| format!("x{i}")))
        .chain((0..d.nz).map(|i| format!("z{i}"))));
    let xs = integ.trajectory();
    let zs = integ.z_trajectory();
    let rows = if zero_horizon { 1 } else { n + 1 };
    for k in 0..rows {
        let z: &[f64] = match k {
            0 => &z0,
            _ if d.nz > 0 && !zs.is_empty() => &zs[(k - 1) * d.nz..k * d.nz],
            _ => &[],
        };
        text.push_str(&row(std::iter::once(num(k as f64 * h))
            .chain(xs[k * d.nx..(k + 1) * d.nx].iter().map(|&v| num(v)))
            .chain(z.iter().map(|&v| num(v)))));
    }
    emit(o.out.as_deref(), &text)
}

pub fn sens_check(o: &Options) -> Result<(), CliError> {
    let model = o.build_model()?;
    let cfg = sim_config(o, 0.1, 2)?;
    let with_hessian = !o.no_hessian.unwrap_or(false);
    let points = o.points.unwrap_or(20);
    let rep = experiments::sens_check(&model, &cfg, points, o.seed.unwrap_or(1), with_hessian)?;
    let checks = json!({
        "forward": rep.max_rel_err_forward < SensReport::FORWARD_TOL,
        "adjoint": rep.adj_consistency < SensReport::ADJOINT_TOL,
        "hessian_fd": !with_hessian || rep.hess_fd_err < SensReport::HESSIAN_TOL,
        "hessian_symmetry": rep.hess_asym == 0.0,
    });
    let pass = rep.passes();
    let report = json!({
        "model": model.name(),
        "tableau": cfg.tableau.label(),
        "n_steps": cfg.n_steps,
        "T": cfg.t_sim,
        "points": points,
        "max_rel_err_forward": rep.max_rel_err_forward,
        "adj_consistency": rep.adj_consistency,
        "hess_fd_err": if with_hessian { json!(rep.hess_fd_err) } else { json!(null) },
        "hess_asym": if with_hessian { json!(rep.hess_asym) } else { json!(null) },
        "thresholds": {
            "max_rel_err_forward": SensReport::FORWARD_TOL,
            "adj_consistency": SensReport::ADJOINT_TOL,
            "hess_fd_err": SensReport::HESSIAN_TOL,
            "hess_asym": 0.0,
        },
        "checks": checks,
        "pass": pass,
    });
    emit(o.out.as_deref(), &json_text(&report))?;
    if pass {
        Ok(())
    } else {
        Err(CliError::Numerical("sensitivity checks exceeded their thresholds".into()))
    }
}

pub fn order_study(o: &Options) -> Result<(), CliError> {
    let model = o.build_model()?;
    let (x0, u0) = point(o, &model);
    let tab = o.tableau()?;
    let t_sim = o.t_sim.unwrap_or(1.0);
    let rows = experiments::order_study(&model, &tab, &x0, &u0, t_sim, o.n_steps.unwrap_or(4))?;
    let mut text = row(["h", "error", "estimated_order"].map(String::from));
    for r in rows {
        text.push_str(&row([num(r.h), num(r.error), r.estimated_order.map(num).unwrap_or_default()]));
    }
    emit(o.out.as_deref(), &text)
}

fn ocp_spec(o: &Options) -> Result<OcpSpec<Model>, CliError> {
    let model = o.build_model()?;
    let n = o.n_intervals.unwrap_or(20);
    let tab = o.tableau()?;
    let n_steps = o.n_steps.unwrap_or(1);
    let mut spec = match &model {
        Model::Chain(c) => {
            let mut spec = chain_ocp(c.n_mass, n, tab, n_steps)?;
            spec.model = model.clone();
            spec
        }
        _ => OcpSpec::new(model.clone(), n, 1.0, tab, n_steps),
    };
    if let Some(t) = o.t_sim {
        spec.horizon = t;
    }
    if let Some(x0) = &o.x0 {
        spec.x0 = x0.clone();
    }
    spec.newton = o.newton(ocp_newton());
    spec.validate()?;
    Ok(spec)
}

fn sqp_opts(o: &Options) -> Result<SqpOpts, CliError> {
    let d = SqpOpts::default();
    let opts = SqpOpts {
        hessian_mode: o.hessian_mode()?,
        max_iters: o.sqp_iters.unwrap_or(d.max_iters),
        kkt_tol: o.kkt_tol.unwrap_or(d.kkt_tol),
        ..d
    };
    opts.validate()?;
    Ok(opts)
}

fn median(mut v: Vec<Duration>) -> f64 {
    v.sort();
    let n = v.len();
    let m = if n % 2 == 1 { v[n / 2] } else { (v[n / 2 - 1] + v[n / 2]) / 2 };
    m.as_secs_f64()
}

/// `<out stem>_trajectory.csv` next to the JSON output.
fn derived_trajectory_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}_trajectory.csv"))
}

pub fn solve_ocp(o: &Options) -> Result<(), CliError> {
    let spec = ocp_spec(o)?;
    let how = o.transcription()?;
    let opts = sqp_opts(o)?;
    let reps = o.reps()?;
    let (mut total, mut eval, mut step) = (Vec::new(), Vec::new(), Vec::new());
    let mut last = None;
    for _ in 0..reps {
        let mut nlp = transcribe(&spec, how)?;
        let res = sqp::solve(&mut nlp, &opts)?;
        total.push(res.timings.total);
        eval.push(res.timings.nlp_eval);
        step.push(res.timings.step);
        last = Some((nlp, res));
    }
    let (nlp, res) = last.expect("at least one repetition");
    let report = json!({
        "model": spec.model.name(),
        "transcription": how.name(),
        "hessian": o.hessian.clone().unwrap_or_else(|| "gn".into()),
        "tableau": spec.tableau.label(),
        "n_steps": spec.n_steps,
        "N": spec.n_intervals,
        "n_vars": nlp.n_vars(),
        "n_eq": nlp.n_eq(),
        "status": res.status.name(),
        "iters": res.iters,
        "kkt_history": res.kkt_history,
        "repetitions": reps,
        "timings": {
            "total": median(total),
            "nlp_function_eval": median(eval),
            "step_computation": median(step),
        },
    });
    emit(o.out.as_deref(), &json_text(&report))?;

    let traj_path = o.trajectory.clone().or_else(|| o.out.as_deref().map(derived_trajectory_path));
    if let Some(path) = traj_path {
        let d = spec.model.dims();
        let (xs, us) = extract_trajectory(&spec, &nlp, &res.v);
        let dt = spec.interval_length();
        let mut text = row(["k".to_string(), "t".to_string()]
            .into_iter()
            .chain((0..d.nx).map(|i| format!("x{i}")))
            .chain((0..d.nu).map(|i| format!("u{i}"))));
        for k in 0..=spec.n_intervals {
            let u: Vec<String> = if k < spec.n_intervals {
                us[k * d.nu..(k + 1) * d.nu].iter().map(|&v| num(v)).collect()
            } else {
                vec![String::new(); d.nu]
            };
            text.push_str(&row([k.to_string(), num(k as f64 * dt)]
                .into_iter()
                .chain(xs[k * d.nx..(k + 1) * d.nx].iter().map(|&v| num(v)))
                .chain(u)));
        }
        emit(Some(&path), &text)?;
    }
    if res.status == SqpStatus::Converged {
        Ok(())
    } else {
        Err(CliError::Numerical(format!("SQP stopped with status {}", res.status.name())))
    }
}

pub fn bench(o: &Options) -> Result<(), CliError> {
    let masses = o.masses.clone().unwrap_or_else(|| vec![3, 4, 5, 6]);
    let configs = o.bench_configs()?;
    let how = o.transcription()?;
    let rows = experiments::bench(&masses, &configs, how, o.n_intervals.unwrap_or(10), &sqp_opts(o)?, o.reps.unwrap_or(3))?;
    let mut text = row(["n_mass", "transcription", "tableau", "time_per_iter_s", "iters", "repetitions", "status"].map(String::from));
    for r in rows {
        let mut status = r.status.clone();
        if status.contains(',') {
            status = format!("\"{}\"", status.replace('"', "'"));
        }
        text.push_str(&row([
                r.n_mass.to_string(),
                r.transcription.name().to_string(),
                r.config,
                num(r.time_per_iter_s),
                r.iters.to_string(),
                r.repetitions.to_string(),
            status,
        ]));
    }
    emit(o.out.as_deref(), &text)
}
