//! Error measures used by the sensitivity checks.

use nalgebra::DMatrix;

/// Entries with `|reference|` below this are compared absolutely, scaled by it.
pub const FD_FLOOR: f64 = 1e-3;

/// `max_ij |a - b| / max(|b|, FD_FLOOR)` with `b` the finite-difference reference.
///
/// A bound of `1e-6` is therefore a relative bound with absolute floor `1e-9`.
pub fn fd_rel_err(a: &[f64], reference: &[f64]) -> f64 {
    assert_eq!(a.len(), reference.len());
    a.iter()
        .zip(reference)
        .map(|(x, r)| (x - r).abs() / r.abs().max(FD_FLOOR))
        .fold(0.0, f64::max)
}

/// `|a - b|_inf / max(|a|_inf, |b|_inf)`, zero when both vanish.
pub fn norm_rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let inf = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    let scale = inf(a).max(inf(b));
    if scale == 0.0 {
        return 0.0;
    }
    let diff = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    diff / scale
}

/// `max_ij |H_ij - H_ji|`.
pub fn asymmetry(h: &DMatrix<f64>) -> f64 {
    let n = h.nrows();
    let mut worst = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((h[(i, j)] - h[(j, i)]).abs());
        }
    }
    worst
}

/// `seed^T S` as a row.
pub fn seed_times(seed: &[f64], s: &DMatrix<f64>) -> Vec<f64> {
    (0..s.ncols())
        .map(|c| (0..s.nrows()).map(|r| seed[r] * s[(r, c)]).sum())
        .collect()
}
