//! Acceptance suite: one pass/fail line per criterion, nonzero exit on any failure.

use std::time::{Duration, Instant};

use rksens::experiments::{amplification, bench, order_study, sens_check, BenchConfig, SensReport};
use rksens::metrics::asymmetry;
use rksens::model::{make_algebraic_test, make_chain, make_linear_test, Dynamics};
use rksens::ocp::{chain_ocp, extract_trajectory, linear_ocp, transcribe, Transcription};
use rksens::sqp::{solve, HessianMode, SqpOpts, SqpStatus};
use rksens::{make_tableau, ButcherTableau, Integrator, Model, NewtonOpts, SchemeFamily, SensFlags, SimConfig};

struct Outcome {
    pass: bool,
    detail: String,
}

fn tab(family: SchemeFamily, s: usize) -> ButcherTableau {
    make_tableau(family, s).expect("tableau")
}

fn within_limit(out: &mut Outcome, elapsed: Duration, limit: Duration) {
    if elapsed > limit {
        out.pass = false;
        out.detail.push_str(&format!(", exceeded {limit:?}"));
    }
}

fn jacobian_agreement() -> Outcome {
    let mut worst = SensReport::default();
    let mut pass = true;
    for n_mass in [3, 5] {
        let model = make_chain(n_mass).expect("chain");
        for t in [
            tab(SchemeFamily::GaussLegendre, 1),
            tab(SchemeFamily::GaussLegendre, 2),
            tab(SchemeFamily::GaussLegendre, 4),
            tab(SchemeFamily::RadauIIA, 2),
        ] {
            let cfg = SimConfig::new(t, 0.1, 2);
            let rep = sens_check(&model, &cfg, 20, 7, false).expect("sens check");
            pass &= rep.adj_consistency < SensReport::ADJOINT_TOL && rep.max_rel_err_forward < SensReport::FORWARD_TOL;
            worst.adj_consistency = worst.adj_consistency.max(rep.adj_consistency);
            worst.max_rel_err_forward = worst.max_rel_err_forward.max(rep.max_rel_err_forward);
        }
    }
    Outcome {
        pass,
        detail: format!(
            "adjoint {:.2e} (< 1e-12), forward vs FD {:.2e} (< 1e-6)",
            worst.adj_consistency, worst.max_rel_err_forward
        ),
    }
}

fn order_study_criterion() -> Outcome {
    let linear = Model::Linear(make_linear_test(-1.0));
    let chain = make_chain(3).expect("chain");
    let chain_x0 = chain.rest_state().to_vec();
    let chain = Model::Chain(chain);
    let cases = [
        (SchemeFamily::GaussLegendre, 1, 2.0, 4, 8),
        (SchemeFamily::GaussLegendre, 2, 4.0, 2, 8),
        (SchemeFamily::RadauIIA, 2, 3.0, 8, 16),
        (SchemeFamily::ExplicitRK4, 4, 4.0, 8, 32),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (family, s, theory, lin_base, chain_base) in cases {
        let t = tab(family, s);
        for (name, model, x0, u0, t_sim, base) in [
            ("linear", &linear, vec![1.0], vec![0.5], 1.0, lin_base),
            ("chain-3", &chain, chain_x0.clone(), vec![0.1, -0.1, 0.1], 0.5, chain_base),
        ] {
            let rows = order_study(model, &t, &x0, &u0, t_sim, base).expect("order study");
            let est: Vec<f64> = rows.iter().filter_map(|r| r.estimated_order).collect();
            let ok = est.iter().all(|p| (p - theory).abs() <= 0.2);
            pass &= ok;
            let lo = est.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = est.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            parts.push(format!("{}/{name} {lo:.2}..{hi:.2}", t.label()));
        }
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn stability_character() -> Outcome {
    let z = -1e6;
    let mut pass = true;
    let mut parts = Vec::new();
    for s in 1..=4 {
        let r = amplification(&tab(SchemeFamily::RadauIIA, s), z).expect("amplification").abs();
        pass &= r < 1e-3;
        parts.push(format!("radau{s} {r:.1e}"));
    }
    let r = amplification(&tab(SchemeFamily::GaussLegendre, 1), z).expect("amplification").abs();
    pass &= r > 0.99 && r < 1.0;
    parts.push(format!("gl1 {r:.7}"));
    Outcome {
        pass,
        detail: format!("|R(-1e6)|: {}", parts.join(", ")),
    }
}

fn transcription_equivalence() -> Outcome {
    let spec = chain_ocp(3, 20, tab(SchemeFamily::GaussLegendre, 2), 1).expect("chain OCP");
    let opts = SqpOpts::default();
    let mut sols = Vec::new();
    let mut pass = true;
    let mut parts = Vec::new();
    for how in [Transcription::MultipleShooting, Transcription::Collocation] {
        let mut nlp = transcribe(&spec, how).expect("transcription");
        let res = solve(&mut nlp, &opts).expect("sqp");
        pass &= res.status == SqpStatus::Converged && res.iters <= 30;
        parts.push(format!("{} {} iters ({})", how.name(), res.iters, res.status.name()));
        let (xs, us) = extract_trajectory(&spec, &nlp, &res.v);
        sols.push([xs, us].concat());
    }
    let diff = sols[0].iter().zip(&sols[1]).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
    pass &= diff < 1e-6;
    Outcome {
        pass,
        detail: format!("max primal diff {diff:.2e} (< 1e-6), {}", parts.join(", ")),
    }
}

/// Scalar discrete Riccati recursion for `x+ = a x + b u` with unit weights.
fn riccati_oracle(a: f64, b: f64, n: usize, x0: f64) -> (Vec<f64>, Vec<f64>) {
    let mut p = 1.0;
    let mut gains = vec![0.0; n];
    for k in (0..n).rev() {
        let kk = b * p * a / (1.0 + b * b * p);
        gains[k] = kk;
        p = 1.0 + a * a * p - a * b * p * kk;
    }
    let mut xs = vec![x0];
    let mut us = Vec::new();
    for kk in gains {
        let x = *xs.last().unwrap();
        let u = -kk * x;
        us.push(u);
        xs.push(a * x + b * u);
    }
    (xs, us)
}

fn lqr_oracle() -> Outcome {
    let (lambda, n, horizon, x0) = (-1.0, 10, 1.0, 1.0);
    let h = horizon / n as f64;
    let a = (1.0 + h * lambda / 2.0) / (1.0 - h * lambda / 2.0);
    let b = h / (1.0 - h * lambda / 2.0);
    let (xs_ref, us_ref) = riccati_oracle(a, b, n, x0);
    let spec = linear_ocp(lambda, n, horizon, x0, tab(SchemeFamily::GaussLegendre, 1));
    let mut pass = true;
    let mut parts = Vec::new();
    for how in [Transcription::MultipleShooting, Transcription::Collocation] {
        let mut nlp = transcribe(&spec, how).expect("transcription");
        let res = solve(&mut nlp, &SqpOpts::default()).expect("sqp");
        let (xs, us) = extract_trajectory(&spec, &nlp, &res.v);
        let err = xs
            .iter()
            .chain(&us)
            .zip(xs_ref.iter().chain(&us_ref))
            .fold(0.0f64, |m, (p, q)| m.max((p - q).abs()));
        pass &= err < 1e-8 && res.iters == 1 && res.status == SqpStatus::Converged;
        parts.push(format!("{} err {err:.1e} in {} iter", how.name(), res.iters));
    }
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn hessian_properties() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    let gl2 = tab(SchemeFamily::GaussLegendre, 2);
    for model in [Model::Chain(make_chain(3).expect("chain")), Model::DaeTest(make_algebraic_test())] {
        let cfg = SimConfig::new(gl2.clone(), 0.1, 2);
        let rep = sens_check(&model, &cfg, 5, 11, true).expect("sens check");
        pass &= rep.hess_asym == 0.0 && rep.hess_fd_err < SensReport::HESSIAN_TOL;
        parts.push(format!("{} fd {:.1e} asym {:.0e}", model.name(), rep.hess_fd_err, rep.hess_asym));
    }
    let mut max_abs = 0.0f64;
    for t in [gl2, tab(SchemeFamily::ExplicitRK4, 4)] {
        let cfg = SimConfig::new(t, 0.1, 2).with_sens(SensFlags::ALL);
        let mut integ = Integrator::new(make_linear_test(-1.0), cfg).expect("integrator");
        let hess = integ.hessian(&[0.7], &[0.3], &[1.3]).expect("hessian").hess().expect("computed").clone();
        pass &= asymmetry(&hess) == 0.0;
        max_abs = hess.iter().fold(max_abs, |m, v| m.max(v.abs()));
    }
    pass &= max_abs == 0.0;
    parts.push(format!("linear max |H| {max_abs:.0e}"));
    Outcome {
        pass,
        detail: parts.join(", "),
    }
}

fn warm_start() -> Outcome {
    let model = make_chain(3).expect("chain");
    let x0 = model.rest_state().to_vec();
    let u0 = [0.2, -0.1, 0.1];
    let seed: Vec<f64> = (0..model.dims().nx).map(|i| 1.0 - 0.1 * i as f64).collect();
    let newton = NewtonOpts {
        max_iters: 20,
        tol: 1e-10,
        freeze_jacobian: true,
        strict: true,
    };
    let cfg = SimConfig::new(tab(SchemeFamily::GaussLegendre, 2), 0.2, 2)
        .with_newton(newton)
        .with_sens(SensFlags::ALL);
    let snapshot = |integ: &mut Integrator<_>| {
        let out = integ.run(&x0, &u0, Some(&seed)).expect("run");
        let mut bits: Vec<u64> = out.x_next().iter().map(|v| v.to_bits()).collect();
        bits.extend(out.s_forw().expect("forward").iter().map(|v| v.to_bits()));
        bits.extend(out.grad_adj().expect("adjoint").iter().map(|v| v.to_bits()));
        bits.extend(out.hess().expect("hessian").iter().map(|v| v.to_bits()));
        (bits, out.stats.newton_iters_total)
    };
    let mut integ = Integrator::new(model.clone(), cfg.clone()).expect("integrator");
    let (first, it1) = snapshot(&mut integ);
    let (_, it2) = snapshot(&mut integ);
    integ.reset_stage_guess();
    let (after_reset, _) = snapshot(&mut integ);
    let mut fresh = Integrator::new(model, cfg).expect("integrator");
    let (fresh_bits, _) = snapshot(&mut fresh);
    let bitwise = after_reset == first && after_reset == fresh_bits;
    Outcome {
        pass: it2 <= it1 && bitwise,
        detail: format!("newton iters {it1} then {it2}, bitwise after reset: {bitwise}"),
    }
}

fn scaling_shape() -> Outcome {
    let configs = [
        BenchConfig {
            tableau: tab(SchemeFamily::GaussLegendre, 2),
            n_steps: 1,
        },
        BenchConfig {
            tableau: tab(SchemeFamily::GaussLegendre, 4),
            n_steps: 4,
        },
    ];
    let opts = SqpOpts {
        hessian_mode: HessianMode::GaussNewton,
        ..SqpOpts::default()
    };
    let rows = bench(&[3, 4, 5, 6], &configs, Transcription::MultipleShooting, 10, &opts, 3).expect("bench");
    let mut pass = rows.iter().all(|r| r.status == "converged");
    let mut parts = Vec::new();
    for cfg in &configs {
        let label = cfg.label();
        let times: Vec<f64> = rows.iter().filter(|r| r.config == label).map(|r| r.time_per_iter_s).collect();
        pass &= times.windows(2).all(|w| w[1] >= w[0]);
        let ms: Vec<String> = times.iter().map(|t| format!("{:.1}", t * 1e3)).collect();
        parts.push(format!("{label} [{}] ms", ms.join(", ")));
    }
    Outcome {
        pass,
        detail: format!("time/iter over n_mass 3..6: {}", parts.join("; ")),
    }
}

type Criterion = (&'static str, fn() -> Outcome, Option<Duration>);

fn main() {
    let criteria: [Criterion; 8] = [
        ("jacobian agreement", jacobian_agreement, Some(Duration::from_secs(30))),
        ("order study", order_study_criterion, Some(Duration::from_secs(60))),
        ("stability character", stability_character, None),
        ("transcription equivalence", transcription_equivalence, Some(Duration::from_secs(120))),
        ("lqr oracle", lqr_oracle, None),
        ("hessian properties", hessian_properties, None),
        ("warm start", warm_start, None),
        ("scaling shape", scaling_shape, None),
    ];
    let mut failed = 0;
    for (name, run, limit) in criteria {
        let t = Instant::now();
        let mut out = run();
        let elapsed = t.elapsed();
        if let Some(limit) = limit {
            within_limit(&mut out, elapsed, limit);
        }
        if !out.pass {
            failed += 1;
        }
        println!(
            "{} {name}: {} [{:.2} s]",
            if out.pass { "PASS" } else { "FAIL" },
            out.detail,
            elapsed.as_secs_f64()
        );
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
