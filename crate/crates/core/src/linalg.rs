//! Dense LU with partial pivoting on a preallocated row-major buffer.

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct DenseLu {
    n: usize,
    lu: Vec<f64>,
    piv: Vec<usize>,
    factored: bool,
}

impl DenseLu {
    pub fn new(n: usize) -> Self {
        DenseLu {
            n,
            lu: vec![0.0; n * n],
            piv: vec![0; n],
            factored: false,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    /// Row-major matrix storage to fill before [`DenseLu::factor`].
    pub fn matrix_mut(&mut self) -> &mut [f64] {
        self.factored = false;
        &mut self.lu
    }

    /// Copies another factorization of the same size without reallocating.
    pub fn copy_from(&mut self, other: &DenseLu) {
        assert_eq!(self.n, other.n, "LU size mismatch");
        self.lu.copy_from_slice(&other.lu);
        self.piv.copy_from_slice(&other.piv);
        self.factored = other.factored;
    }

    pub fn is_factored(&self) -> bool {
        self.factored
    }

    /// Factorizes in place. A pivot below `n * eps * max|A|` is treated as singular.
    pub fn factor(&mut self) -> Result<()> {
        let n = self.n;
        let a = &mut self.lu;
        if let Some(idx) = a.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                context: "matrix entry before LU".into(),
                index: idx,
            });
        }
        let scale = a.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let tiny = scale * f64::EPSILON * n as f64;
        for k in 0..n {
            let mut p = k;
            let mut best = a[k * n + k].abs();
            for i in (k + 1)..n {
                let v = a[i * n + k].abs();
                if v > best {
                    best = v;
                    p = i;
                }
            }
            self.piv[k] = p;
            if best <= tiny || best == 0.0 {
                self.factored = false;
                return Err(Error::Singular {
                    context: "LU factorization".into(),
                    column: k,
                });
            }
            if p != k {
                for j in 0..n {
                    a.swap(k * n + j, p * n + j);
                }
            }
            let inv = 1.0 / a[k * n + k];
            let (upper, lower) = a.split_at_mut((k + 1) * n);
            let row_k = &upper[k * n + k + 1..k * n + n];
            for i in 0..(n - k - 1) {
                let row_i = &mut lower[i * n..(i + 1) * n];
                let l = row_i[k] * inv;
                row_i[k] = l;
                if l != 0.0 {
                    for (x, y) in row_i[k + 1..].iter_mut().zip(row_k) {
                        *x -= l * y;
                    }
                }
            }
        }
        self.factored = true;
        Ok(())
    }

    /// Solves `A x = b` in place.
    pub fn solve(&self, b: &mut [f64]) {
        debug_assert!(self.factored);
        let n = self.n;
        let a = &self.lu;
        for k in 0..n {
            b.swap(k, self.piv[k]);
        }
        for i in 0..n {
            let mut s = b[i];
            for (l, x) in a[i * n..i * n + i].iter().zip(&b[..i]) {
                s -= l * x;
            }
            b[i] = s;
        }
        for i in (0..n).rev() {
            let mut s = b[i];
            for (u, x) in a[i * n + i + 1..(i + 1) * n].iter().zip(&b[i + 1..]) {
                s -= u * x;
            }
            b[i] = s / a[i * n + i];
        }
    }

    /// Solves `A^T x = b` in place.
    pub fn solve_transpose(&self, b: &mut [f64]) {
        debug_assert!(self.factored);
        let n = self.n;
        let a = &self.lu;
        // U^T y = b
        for i in 0..n {
            let yi = b[i] / a[i * n + i];
            b[i] = yi;
            for j in (i + 1)..n {
                b[j] -= a[i * n + j] * yi;
            }
        }
        // L^T x = y
        for i in (0..n).rev() {
            let xi = b[i];
            for j in 0..i {
                b[j] -= a[i * n + j] * xi;
            }
        }
        for k in (0..n).rev() {
            b.swap(k, self.piv[k]);
        }
    }
}
