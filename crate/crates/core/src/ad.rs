//! Forward-mode derivatives through truncated Taylor scalars.
//!
//! Model code is written once against [`Scalar`] and evaluated on `f64`,
//! [`Dual1`] (one directional derivative) or [`Dual2`] (two directions and
//! their mixed second derivative). The central finite-difference helper
//! [`fd_jacobian`] lives here too and is only used as a test oracle.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Range, Sub, SubAssign};

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Default central-difference step for first derivatives.
pub const FD_STEP: f64 = 1e-6;
/// Default step when finite-differencing gradients to get second derivatives.
pub const FD_STEP_SECOND: f64 = 1e-4;

pub trait Scalar:
    Copy
    + Debug
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;
    fn value(self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, p: f64) -> Self;

    fn zero() -> Self {
        Self::cst(0.0)
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn value(self) -> f64 {
        self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
}

/// First-order dual number `value + dot * eps`, `eps^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual1 {
    pub value: f64,
    pub dot: f64,
}

impl Dual1 {
    pub fn new(value: f64, dot: f64) -> Self {
        Dual1 { value, dot }
    }

    // g(self) given g(v) and g'(v)
    fn chain(self, g: f64, dg: f64) -> Self {
        Dual1::new(g, dg * self.dot)
    }
}

impl Add for Dual1 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual1::new(self.value + o.value, self.dot + o.dot)
    }
}

impl Sub for Dual1 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual1::new(self.value - o.value, self.dot - o.dot)
    }
}

impl Mul for Dual1 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual1::new(self.value * o.value, self.value * o.dot + self.dot * o.value)
    }
}

impl Div for Dual1 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let inv = 1.0 / o.value;
        let q = self.value * inv;
        Dual1::new(q, (self.dot - q * o.dot) * inv)
    }
}

impl Neg for Dual1 {
    type Output = Self;
    fn neg(self) -> Self {
        Dual1::new(-self.value, -self.dot)
    }
}

impl Scalar for Dual1 {
    fn cst(v: f64) -> Self {
        Dual1::new(v, 0.0)
    }
    fn value(self) -> f64 {
        self.value
    }
    fn sin(self) -> Self {
        self.chain(self.value.sin(), self.value.cos())
    }
    fn cos(self) -> Self {
        self.chain(self.value.cos(), -self.value.sin())
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e)
    }
    fn ln(self) -> Self {
        self.chain(self.value.ln(), 1.0 / self.value)
    }
    fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        self.chain(r, 0.5 / r)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual1::cst(1.0);
        }
        self.chain(self.value.powi(n), n as f64 * self.value.powi(n - 1))
    }
    fn powf(self, p: f64) -> Self {
        self.chain(self.value.powf(p), p * self.value.powf(p - 1.0))
    }
}

/// Second-order truncated Taylor scalar in two directions `a`, `b`:
/// `value + dot_a ea + dot_b eb + dot_ab ea eb` with `ea^2 = eb^2 = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual2 {
    pub value: f64,
    pub dot_a: f64,
    pub dot_b: f64,
    pub dot_ab: f64,
}

impl Dual2 {
    pub fn new(value: f64, dot_a: f64, dot_b: f64, dot_ab: f64) -> Self {
        Dual2 {
            value,
            dot_a,
            dot_b,
            dot_ab,
        }
    }

    // g(self) given g, g', g'' at the value
    fn chain(self, g: f64, dg: f64, ddg: f64) -> Self {
        Dual2::new(
            g,
            dg * self.dot_a,
            dg * self.dot_b,
            dg * self.dot_ab + ddg * self.dot_a * self.dot_b,
        )
    }
}

impl Add for Dual2 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual2::new(
            self.value + o.value,
            self.dot_a + o.dot_a,
            self.dot_b + o.dot_b,
            self.dot_ab + o.dot_ab,
        )
    }
}

impl Sub for Dual2 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual2::new(
            self.value - o.value,
            self.dot_a - o.dot_a,
            self.dot_b - o.dot_b,
            self.dot_ab - o.dot_ab,
        )
    }
}

impl Mul for Dual2 {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual2::new(
            self.value * o.value,
            self.value * o.dot_a + self.dot_a * o.value,
            self.value * o.dot_b + self.dot_b * o.value,
            self.value * o.dot_ab
                + self.dot_a * o.dot_b
                + self.dot_b * o.dot_a
                + self.dot_ab * o.value,
        )
    }
}

impl Div for Dual2 {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        // self * (1 / o)
        let v = o.value;
        let inv = o.chain(1.0 / v, -1.0 / (v * v), 2.0 / (v * v * v));
        self * inv
    }
}

impl Neg for Dual2 {
    type Output = Self;
    fn neg(self) -> Self {
        Dual2::new(-self.value, -self.dot_a, -self.dot_b, -self.dot_ab)
    }
}

impl Scalar for Dual2 {
    fn cst(v: f64) -> Self {
        Dual2::new(v, 0.0, 0.0, 0.0)
    }
    fn value(self) -> f64 {
        self.value
    }
    fn sin(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(s, c, -s)
    }
    fn cos(self) -> Self {
        let (s, c) = self.value.sin_cos();
        self.chain(c, -s, -c)
    }
    fn exp(self) -> Self {
        let e = self.value.exp();
        self.chain(e, e, e)
    }
    fn ln(self) -> Self {
        let v = self.value;
        self.chain(v.ln(), 1.0 / v, -1.0 / (v * v))
    }
    fn sqrt(self) -> Self {
        let r = self.value.sqrt();
        self.chain(r, 0.5 / r, -0.25 / (r * self.value))
    }
    fn powi(self, n: i32) -> Self {
        let v = self.value;
        let nf = n as f64;
        match n {
            0 => Dual2::cst(1.0),
            1 => self,
            _ => self.chain(v.powi(n), nf * v.powi(n - 1), nf * (nf - 1.0) * v.powi(n - 2)),
        }
    }
    fn powf(self, p: f64) -> Self {
        let v = self.value;
        self.chain(v.powf(p), p * v.powf(p - 1.0), p * (p - 1.0) * v.powf(p - 2.0))
    }
}

macro_rules! impl_f64_ops {
    ($t:ty) => {
        impl Add<f64> for $t {
            type Output = $t;
            fn add(self, o: f64) -> $t {
                self + <$t>::cst(o)
            }
        }
        impl Sub<f64> for $t {
            type Output = $t;
            fn sub(self, o: f64) -> $t {
                self - <$t>::cst(o)
            }
        }
        impl Mul<f64> for $t {
            type Output = $t;
            fn mul(self, o: f64) -> $t {
                self * <$t>::cst(o)
            }
        }
        impl Div<f64> for $t {
            type Output = $t;
            fn div(self, o: f64) -> $t {
                self / <$t>::cst(o)
            }
        }
        impl AddAssign for $t {
            fn add_assign(&mut self, o: $t) {
                *self = *self + o;
            }
        }
        impl SubAssign for $t {
            fn sub_assign(&mut self, o: $t) {
                *self = *self - o;
            }
        }
        impl MulAssign for $t {
            fn mul_assign(&mut self, o: $t) {
                *self = *self * o;
            }
        }
    };
}

impl_f64_ops!(Dual1);
impl_f64_ops!(Dual2);

/// A vector-valued function that can be evaluated on any [`Scalar`].
pub trait VectorFn {
    fn n_in(&self) -> usize;
    fn n_out(&self) -> usize;
    fn eval<T: Scalar>(&self, x: &[T], out: &mut [T]);
}

fn check_len(x: &[f64], f: &impl VectorFn) -> Result<()> {
    if x.len() != f.n_in() {
        return Err(Error::Shape {
            what: "function input",
            expected: f.n_in(),
            got: x.len(),
        });
    }
    Ok(())
}

/// Columns `block` of the Jacobian of `f` at `x`, one forward sweep per column.
pub fn jacobian<F: VectorFn>(f: &F, x: &[f64], block: Range<usize>) -> Result<DMatrix<f64>> {
    check_len(x, f)?;
    if block.end > x.len() || block.start > block.end {
        return Err(Error::InvalidArgument(format!(
            "column block {block:?} outside input of length {}",
            x.len()
        )));
    }
    let m = f.n_out();
    let mut jac = DMatrix::zeros(m, block.len());
    let mut xd: Vec<Dual1> = x.iter().map(|&v| Dual1::cst(v)).collect();
    let mut out = vec![Dual1::default(); m];
    for (col, k) in block.enumerate() {
        xd[k].dot = 1.0;
        f.eval(&xd, &mut out);
        xd[k].dot = 0.0;
        for (r, o) in out.iter().enumerate() {
            if !o.value.is_finite() || !o.dot.is_finite() {
                return Err(Error::NonFinite {
                    context: "jacobian sweep".into(),
                    index: r,
                });
            }
            jac[(r, col)] = o.dot;
        }
    }
    Ok(jac)
}

/// Hessian of `seed^T f(x)`, symmetric by construction.
pub fn hessian_vec<F: VectorFn>(f: &F, x: &[f64], seed: &[f64]) -> Result<DMatrix<f64>> {
    check_len(x, f)?;
    if seed.len() != f.n_out() {
        return Err(Error::Shape {
            what: "hessian seed",
            expected: f.n_out(),
            got: seed.len(),
        });
    }
    let n = x.len();
    let mut h = DMatrix::zeros(n, n);
    let mut xd: Vec<Dual2> = x.iter().map(|&v| Dual2::cst(v)).collect();
    let mut out = vec![Dual2::default(); f.n_out()];
    for i in 0..n {
        for j in i..n {
            xd[i].dot_a = 1.0;
            xd[j].dot_b = 1.0;
            f.eval(&xd, &mut out);
            xd[i].dot_a = 0.0;
            xd[j].dot_b = 0.0;
            let mut acc = 0.0;
            for (r, (o, w)) in out.iter().zip(seed).enumerate() {
                if !o.value.is_finite() || !o.dot_ab.is_finite() {
                    return Err(Error::NonFinite {
                        context: "hessian sweep".into(),
                        index: r,
                    });
                }
                acc += w * o.dot_ab;
            }
            h[(i, j)] = acc;
            h[(j, i)] = acc;
        }
    }
    symmetrize(&mut h);
    Ok(h)
}

/// Replaces `h` by `(h + h^T) / 2`.
pub fn symmetrize(h: &mut DMatrix<f64>) {
    let n = h.nrows();
    for i in 0..n {
        for j in (i + 1)..n {
            let m = 0.5 * (h[(i, j)] + h[(j, i)]);
            h[(i, j)] = m;
            h[(j, i)] = m;
        }
    }
}

/// Central differences `(f(x + h e_k) - f(x - h e_k)) / 2h`.
pub fn fd_jacobian<F>(mut f: F, x: &[f64], step: f64) -> DMatrix<f64>
where
    F: FnMut(&[f64]) -> Vec<f64>,
{
    assert!(step > 0.0, "finite-difference step must be positive");
    let mut xp = x.to_vec();
    let f0 = f(x);
    let mut jac = DMatrix::zeros(f0.len(), x.len());
    for k in 0..x.len() {
        xp[k] = x[k] + step;
        let fp = f(&xp);
        xp[k] = x[k] - step;
        let fm = f(&xp);
        xp[k] = x[k];
        for r in 0..f0.len() {
            jac[(r, k)] = (fp[r] - fm[r]) / (2.0 * step);
        }
    }
    jac
}
