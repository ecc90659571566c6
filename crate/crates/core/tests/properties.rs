use std::collections::BTreeMap;

use proptest::prelude::*;
use rksens::ad::{fd_jacobian, hessian_vec, jacobian, Scalar, VectorFn, FD_STEP};
use rksens::butcher::check_order_conditions;
use rksens::experiments::oracle_newton;
use rksens::metrics::{asymmetry, fd_rel_err, seed_times};
use rksens::model::{check_registration, make_chain, make_chain_with_damping, DaeTestReduced, ResidualFn};
use rksens::ocp::{linear_ocp, transcribe, Transcription};
use rksens::{make_tableau, Dynamics, Integrator, Model, ModelRegistry, NewtonOpts, SchemeFamily, SensFlags, SimConfig};

/// `f(x) = (c0 x0^3 + c1 x0 x1^2 + c2 x1, c3 x0^2 x1 + c4)`.
struct Cubic([f64; 5]);

impl VectorFn for Cubic {
    fn n_in(&self) -> usize {
        2
    }
    fn n_out(&self) -> usize {
        2
    }
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]) {
        let c = &self.0;
        out[0] = x[0] * x[0] * x[0] * c[0] + x[0] * x[1] * x[1] * c[1] + x[1] * c[2];
        out[1] = x[0] * x[0] * x[1] * c[3] + T::cst(c[4]);
    }
}

fn family_and_stages() -> impl Strategy<Value = (SchemeFamily, usize)> {
    prop_oneof![
        (1usize..=4).prop_map(|s| (SchemeFamily::GaussLegendre, s)),
        (1usize..=4).prop_map(|s| (SchemeFamily::RadauIIA, s)),
        Just((SchemeFamily::ExplicitEuler, 1)),
        Just((SchemeFamily::ExplicitHeun, 2)),
        Just((SchemeFamily::ExplicitRK4, 4)),
    ]
}

fn registered_model() -> impl Strategy<Value = Model> {
    prop_oneof![
        (-3.0f64..1.0).prop_map(|l| ModelRegistry::build("linear", &BTreeMap::from([("lambda".into(), l)])).unwrap()),
        Just(ModelRegistry::build("dae-test", &BTreeMap::new()).unwrap()),
        (3usize..=5).prop_map(|n| ModelRegistry::build(&format!("chain-{n}"), &BTreeMap::new()).unwrap()),
    ]
}

fn perturb(base: &[f64], offsets: &[f64], scale: f64) -> Vec<f64> {
    base.iter().zip(offsets.iter().cycle()).map(|(b, o)| b + scale * o).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn tableaux_satisfy_order_conditions((family, s) in family_and_stages()) {
        let tab = make_tableau(family, s).unwrap();
        for r in check_order_conditions(&tab, tab.order()) {
            prop_assert!(r.residual.abs() < 1e-13, "{} {}: {}", tab.label(), r.name, r.residual);
        }
        prop_assert_eq!(tab.is_explicit(), tab.is_strictly_lower());
        let again = make_tableau(family, s).unwrap();
        let bits = |t: &rksens::ButcherTableau| {
            let mut v: Vec<u64> = t.b().iter().chain(t.c()).map(|x| x.to_bits()).collect();
            v.extend((0..t.stages()).flat_map(|i| t.a_row(i).iter().map(|x| x.to_bits()).collect::<Vec<_>>()));
            v
        };
        prop_assert_eq!(bits(&tab), bits(&again));
    }

    #[test]
    fn forward_mode_is_exact_on_cubics(c in prop::array::uniform5(-2.0f64..2.0), x in prop::array::uniform2(-2.0f64..2.0), w in prop::array::uniform2(-1.0f64..1.0)) {
        let f = Cubic(c);
        let j = jacobian(&f, &x, 0..2).unwrap();
        let (x0, x1) = (x[0], x[1]);
        let want = [
            [3.0 * c[0] * x0 * x0 + c[1] * x1 * x1, 2.0 * c[1] * x0 * x1 + c[2]],
            [2.0 * c[3] * x0 * x1, c[3] * x0 * x0],
        ];
        for r in 0..2 {
            for k in 0..2 {
                prop_assert!((j[(r, k)] - want[r][k]).abs() <= 1e-14 * (1.0 + want[r][k].abs()));
            }
        }
        let h = hessian_vec(&f, &x, &w).unwrap();
        let h00 = w[0] * 6.0 * c[0] * x0 + w[1] * 2.0 * c[3] * x1;
        let h01 = w[0] * 2.0 * c[1] * x1 + w[1] * 2.0 * c[3] * x0;
        let h11 = w[0] * 2.0 * c[1] * x0;
        for (got, want) in [(h[(0, 0)], h00), (h[(0, 1)], h01), (h[(1, 0)], h01), (h[(1, 1)], h11)] {
            prop_assert!((got - want).abs() <= 1e-14 * (1.0 + want.abs()));
        }
        prop_assert_eq!(asymmetry(&h), 0.0);
    }

    #[test]
    fn model_jacobians_match_fd(model in registered_model(), offsets in prop::collection::vec(-1.0f64..1.0, 7)) {
        let d = model.dims();
        let (x, u) = model.reference_point();
        let xdot = perturb(&vec![0.0; d.nx], &offsets, 0.5);
        let z = vec![0.3; d.nz];
        let v: Vec<f64> = xdot.iter().chain(&perturb(&x, &offsets, 0.05)).chain(&perturb(&u, &offsets, 0.3)).chain(&z).copied().collect();
        let f = ResidualFn(&model);
        let j = jacobian(&f, &v, 0..v.len()).unwrap();
        let fd = fd_jacobian(|p| {
            let mut out = vec![0.0; f.n_out()];
            f.eval(p, &mut out);
            out
        }, &v, FD_STEP);
        prop_assert!(fd_rel_err(j.as_slice(), fd.as_slice()) < 1e-6);
        let seed = perturb(&vec![0.0; f.n_out()], &offsets, 1.0);
        prop_assert_eq!(asymmetry(&hessian_vec(&f, &v, &seed).unwrap()), 0.0);
    }

    #[test]
    fn registered_models_pass_checks(model in registered_model()) {
        prop_assert!(check_registration(&model).is_ok());
    }

    #[test]
    fn chain_shift_changes_only_anchor_spring(n in 3usize..=6, shift in prop::array::uniform3(-0.2f64..0.2)) {
        let chain = make_chain(n).unwrap();
        let nf = chain.n_free();
        let x = chain.rest_state().to_vec();
        let mut y = x.clone();
        for m in 0..nf {
            for c in 0..3 {
                y[3 * m + c] += shift[c];
            }
        }
        for c in 0..3 {
            y[6 * nf + c] += shift[c];
        }
        let (mut fx, mut fy) = (vec![0.0; x.len()], vec![0.0; x.len()]);
        chain.explicit_rhs(&x, &[0.0; 3], &mut fx);
        chain.explicit_rhs(&y, &[0.0; 3], &mut fy);
        // force of the anchor spring on mass 1
        let anchor = |p: &[f64]| {
            let len = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            let s = -chain.stiffness * (1.0 - chain.rest_length / len);
            [s * p[0], s * p[1], s * p[2]]
        };
        let (a, b) = (anchor(&x[..3]), anchor(&y[..3]));
        for i in 0..x.len() {
            let expected = if i >= 3 * nf && i < 3 * nf + 3 { (b[i - 3 * nf] - a[i - 3 * nf]) / chain.mass } else { 0.0 };
            prop_assert!((fy[i] - fx[i] - expected).abs() < 1e-9, "row {}: {} vs {}", i, fy[i] - fx[i], expected);
        }
    }

    #[test]
    fn adjoint_is_dual_to_forward((family, s) in family_and_stages(), model in registered_model(), offsets in prop::collection::vec(-1.0f64..1.0, 5)) {
        prop_assume!(!family.is_explicit() || model.is_explicit());
        let tab = make_tableau(family, s).unwrap();
        let cfg = SimConfig::new(tab, 0.1, 2).with_sens(SensFlags::ALL);
        let mut integ = Integrator::new(model.clone(), cfg).unwrap();
        let (x, u) = model.reference_point();
        let (x, u) = (perturb(&x, &offsets, 0.05), perturb(&u, &offsets, 0.3));
        let seed = perturb(&vec![0.0; x.len()], &offsets, 1.0);
        let out = integ.hessian(&x, &u, &seed).unwrap();
        let grad = out.grad_adj().unwrap();
        let dual = seed_times(&seed, out.s_forw().unwrap());
        let scale = 1.0 + grad.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let err = grad.iter().zip(&dual).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        prop_assert!(err < 1e-13 * scale, "{}", err);
        prop_assert_eq!(asymmetry(out.hess().unwrap()), 0.0);
    }

    #[test]
    fn fixed_iteration_runs_are_bitwise_reproducible((family, s) in family_and_stages(), iters in 1usize..5) {
        let chain = make_chain(3).unwrap();
        let x = chain.rest_state().to_vec();
        let u = [0.3, -0.2, 0.1];
        let seed = vec![1.0; x.len()];
        let newton = NewtonOpts { max_iters: iters, tol: 0.0, freeze_jacobian: true, strict: false };
        let cfg = SimConfig::new(make_tableau(family, s).unwrap(), 0.1, 3).with_newton(newton).with_sens(SensFlags::ALL);
        let bits = |integ: &mut Integrator<_>| {
            let out = integ.hessian(&x, &u, &seed).unwrap();
            out.x_next().iter().chain(out.s_forw().unwrap().iter()).chain(out.hess().unwrap().iter()).map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        let mut a = Integrator::new(chain.clone(), cfg.clone()).unwrap();
        let first = bits(&mut a);
        a.reset_stage_guess();
        prop_assert_eq!(&first, &bits(&mut a));
        let mut b = Integrator::new(chain, cfg).unwrap();
        prop_assert_eq!(first, bits(&mut b));
    }

    #[test]
    fn explicit_forward_nominal_equals_simulate(n in 3usize..=5, s in prop_oneof![Just(1usize), Just(2), Just(4)]) {
        let family = match s { 1 => SchemeFamily::ExplicitEuler, 2 => SchemeFamily::ExplicitHeun, _ => SchemeFamily::ExplicitRK4 };
        let chain = make_chain(n).unwrap();
        let x = chain.rest_state().to_vec();
        let u = [0.1, 0.0, -0.1];
        let cfg = SimConfig::new(make_tableau(family, s).unwrap(), 0.05, 5).with_sens(SensFlags::FORWARD);
        let mut integ = Integrator::new(chain, cfg).unwrap();
        let nominal = integ.simulate(&x, &u).unwrap().x_next().to_vec();
        let out = integ.forward(&x, &u).unwrap();
        prop_assert_eq!(out.x_next(), &nominal[..]);
        prop_assert_eq!(out.stats.factorizations, 0);
    }

    #[test]
    fn dae_tracks_reduced_ode_per_step(x0 in -0.3f64..0.3, u0 in -0.5f64..0.5, s in 1usize..=3) {
        let cfg = SimConfig::new(make_tableau(SchemeFamily::RadauIIA, s).unwrap(), 0.4, 8).with_newton(oracle_newton());
        let mut dae = Integrator::new(ModelRegistry::build("dae-test", &BTreeMap::new()).unwrap(), cfg.clone()).unwrap();
        let mut ode = Integrator::new(DaeTestReduced, cfg).unwrap();
        dae.simulate(&[x0], &[u0]).unwrap();
        ode.simulate(&[x0], &[u0]).unwrap();
        for (a, b) in dae.trajectory().iter().zip(ode.trajectory()) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn collocation_has_more_variables(n in 1usize..8, s in 1usize..=3, n_steps in 1usize..3) {
        let mut spec = linear_ocp(-1.0, n, 1.0, 1.0, make_tableau(SchemeFamily::GaussLegendre, s).unwrap());
        spec.n_steps = n_steps;
        let ms = transcribe(&spec, Transcription::MultipleShooting).unwrap();
        let dc = transcribe(&spec, Transcription::Collocation).unwrap();
        prop_assert_eq!(ms.n_vars(), n * 2 + 1);
        prop_assert_eq!(dc.n_vars(), ms.n_vars() + n * n_steps * s);
    }
}

#[test]
fn damped_chain_energy_does_not_increase() {
    let chain = make_chain_with_damping(4, 0.2).unwrap();
    let mut x0 = chain.rest_state().to_vec();
    x0[0] += 0.05;
    x0[4] -= 0.04;
    let cfg = SimConfig::new(make_tableau(SchemeFamily::GaussLegendre, 4).unwrap(), 1.0, 100).with_newton(oracle_newton());
    let mut integ = Integrator::new(chain.clone(), cfg).unwrap();
    integ.simulate(&x0, &[0.0; 3]).unwrap();
    let energies: Vec<f64> = integ.trajectory().chunks(x0.len()).map(|x| chain.energy(x)).collect();
    assert!(energies.windows(2).all(|w| w[1] <= w[0] + 1e-12));
    assert!(energies.last().unwrap() < &energies[0]);
}
