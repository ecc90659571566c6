//! Steady-state calls allocate nothing after construction and one warm-up call.

use std::alloc::{GlobalAlloc, Layout, System};
use std::cell::Cell;
use std::collections::BTreeMap;

use rksens::handle::IntegratorHandle;
use rksens::model::{make_algebraic_test, make_chain};
use rksens::{make_tableau, Dynamics, Integrator, NewtonOpts, SchemeFamily, SensFlags, SimConfig};

struct Counting;

thread_local! {
    static COUNT: Cell<usize> = const { Cell::new(0) };
}

unsafe impl GlobalAlloc for Counting {
    unsafe fn alloc(&self, layout: Layout) -> *mut u8 {
        COUNT.with(|c| c.set(c.get() + 1));
        unsafe { System.alloc(layout) }
    }
    unsafe fn dealloc(&self, ptr: *mut u8, layout: Layout) {
        unsafe { System.dealloc(ptr, layout) }
    }
    unsafe fn realloc(&self, ptr: *mut u8, layout: Layout, new_size: usize) -> *mut u8 {
        COUNT.with(|c| c.set(c.get() + 1));
        unsafe { System.realloc(ptr, layout, new_size) }
    }
}

#[global_allocator]
static GLOBAL: Counting = Counting;

fn allocations<F: FnMut()>(mut f: F) -> usize {
    let before = COUNT.with(|c| c.get());
    f();
    COUNT.with(|c| c.get()) - before
}

fn exercise<M: Dynamics>(integ: &mut Integrator<M>, x0: &[f64], u0: &[f64], seed: &[f64]) -> usize {
    // warm-up
    integ.hessian(x0, u0, seed).unwrap();
    allocations(|| {
        for _ in 0..3 {
            integ.simulate(x0, u0).unwrap();
            integ.forward(x0, u0).unwrap();
            integ.adjoint(x0, u0, seed).unwrap();
            integ.hessian(x0, u0, seed).unwrap();
            integ.run(x0, u0, Some(seed)).unwrap();
            integ.reset_stage_guess();
        }
    })
}

#[test]
fn integrator_calls_do_not_allocate() {
    let chain = make_chain(3).unwrap();
    let x0 = chain.rest_state().to_vec();
    let u0 = [0.1, 0.2, -0.1];
    let seed = vec![0.5; x0.len()];
    let newton = NewtonOpts {
        max_iters: 10,
        tol: 1e-10,
        freeze_jacobian: true,
        strict: false,
    };
    for (family, s) in [
        (SchemeFamily::GaussLegendre, 2),
        (SchemeFamily::RadauIIA, 3),
        (SchemeFamily::ExplicitRK4, 4),
    ] {
        let cfg = SimConfig::new(make_tableau(family, s).unwrap(), 0.1, 3)
            .with_newton(newton)
            .with_sens(SensFlags::ALL);
        let mut integ = Integrator::new(chain.clone(), cfg).unwrap();
        assert_eq!(exercise(&mut integ, &x0, &u0, &seed), 0, "{family}{s}");
    }
    let cfg = SimConfig::new(make_tableau(SchemeFamily::GaussLegendre, 2).unwrap(), 0.1, 3).with_sens(SensFlags::ALL);
    let mut integ = Integrator::new(make_algebraic_test(), cfg).unwrap();
    assert_eq!(exercise(&mut integ, &[0.2], &[0.1], &[1.0]), 0, "dae-test");
}

#[test]
fn handle_calls_do_not_allocate() {
    let cfg = SimConfig::new(make_tableau(SchemeFamily::GaussLegendre, 2).unwrap(), 0.1, 2);
    let mut h = IntegratorHandle::create("chain-3", &BTreeMap::new(), cfg).unwrap();
    let (nx, np) = (h.nx(), h.nx() + h.nu());
    let (x0, u0) = h.integrator().model().reference_point();
    let seed = vec![1.0; nx];
    let mut x_next = vec![0.0; nx];
    let mut jac = vec![0.0; nx * np];
    let mut grad = vec![0.0; np];
    let mut hess = vec![0.0; np * np];
    h.hessian(&x0, &u0, &seed, &mut grad, &mut hess).unwrap();
    let n = allocations(|| {
        for _ in 0..3 {
            h.nominal(&x0, &u0, &mut x_next).unwrap();
            h.jacobian(&x0, &u0, &mut jac).unwrap();
            h.reverse(&x0, &u0, &seed, &mut grad).unwrap();
            h.hessian(&x0, &u0, &seed, &mut grad, &mut hess).unwrap();
            h.reset();
        }
    });
    assert_eq!(n, 0);
}
