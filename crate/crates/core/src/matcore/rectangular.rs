//! Helpers for small rectangular complex systems: least squares via the
//! normal equations, and rank/nullspace by elimination with full pivoting.
//! Row-major `Vec<Vec<C64>>`, sizes in the tens.

use super::matrix::CMatrix;
use crate::error::{Error, Result};
use num_complex::Complex64 as C64;

/// Minimise ||M u - b||_2. A tiny ridge keeps consistent rank-deficient
/// systems solvable; for such systems any minimiser serves the callers here.
pub fn lstsq(m: &[Vec<C64>], b: &[C64]) -> Result<Vec<C64>> {
    let rows = m.len();
    if rows == 0 || rows != b.len() {
        return Err(Error::ShapeMismatch { context: "lstsq rows".into() });
    }
    let cols = m[0].len();
    if m.iter().any(|r| r.len() != cols) {
        return Err(Error::ShapeMismatch { context: "lstsq ragged matrix".into() });
    }
    let mut normal = CMatrix::zeros(cols);
    for i in 0..cols {
        for j in 0..cols {
            let mut s = C64::new(0.0, 0.0);
            for row in m {
                s += row[i].conj() * row[j];
            }
            normal[(i, j)] = s;
        }
    }
    let ridge = 1e-13 * normal.norm_fro().max(1e-300);
    for i in 0..cols {
        normal[(i, i)] += C64::new(ridge, 0.0);
    }
    let mut rhs = vec![C64::new(0.0, 0.0); cols];
    for (row, &bi) in m.iter().zip(b.iter()) {
        for (j, rj) in rhs.iter_mut().enumerate() {
            *rj += row[j].conj() * bi;
        }
    }
    normal.solve_vec(&rhs)
}

pub fn residual_norm(m: &[Vec<C64>], u: &[C64], b: &[C64]) -> f64 {
    let mut s = 0.0;
    for (row, &bi) in m.iter().zip(b.iter()) {
        let mut v = -bi;
        for (a, x) in row.iter().zip(u.iter()) {
            v += a * x;
        }
        s += v.norm_sqr();
    }
    s.sqrt()
}

/// Rank (with relative pivot threshold) and a basis of the right nullspace.
pub fn rank_and_nullspace(m: &[Vec<C64>], rel_tol: f64) -> (usize, Vec<Vec<C64>>) {
    let rows = m.len();
    let cols = if rows > 0 { m[0].len() } else { 0 };
    if rows == 0 || cols == 0 {
        return (0, vec![]);
    }
    let mut a: Vec<Vec<C64>> = m.to_vec();
    let mut colperm: Vec<usize> = (0..cols).collect();
    let scale = a
        .iter()
        .flat_map(|r| r.iter())
        .map(|x| x.norm())
        .fold(0.0, f64::max)
        .max(1e-300);
    let tol = rel_tol * scale;

    let mut rank = 0usize;
    for step in 0..rows.min(cols) {
        let mut best = (step, step, 0.0f64);
        for r in step..rows {
            for c in step..cols {
                let v = a[r][c].norm();
                if v > best.2 {
                    best = (r, c, v);
                }
            }
        }
        if best.2 < tol {
            break;
        }
        a.swap(step, best.0);
        if best.1 != step {
            for row in a.iter_mut() {
                row.swap(step, best.1);
            }
            colperm.swap(step, best.1);
        }
        for r in (step + 1)..rows {
            let f = a[r][step] / a[step][step];
            if f.norm() == 0.0 {
                continue;
            }
            for c in step..cols {
                let v = a[step][c];
                a[r][c] -= f * v;
            }
        }
        rank += 1;
    }

    let mut nullspace = Vec::with_capacity(cols - rank);
    for free in rank..cols {
        let mut x = vec![C64::new(0.0, 0.0); cols]; // in permuted coordinates
        x[free] = C64::new(1.0, 0.0);
        for i in (0..rank).rev() {
            let mut s = a[i][free];
            for j in (i + 1)..rank {
                s += a[i][j] * x[j];
            }
            x[i] = -s / a[i][i];
        }
        let mut out = vec![C64::new(0.0, 0.0); cols];
        for (pos, &orig) in colperm.iter().enumerate() {
            out[orig] = x[pos];
        }
        nullspace.push(out);
    }
    (rank, nullspace)
}
