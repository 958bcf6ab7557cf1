//! Eigendecomposition for small dense complex matrices with distinct
//! eigenvalues, the only case the generic-connection theory needs. Roots of the
//! characteristic polynomial are located by Aberth iteration and polished by
//! Newton steps on the matrix resolvent; eigenvectors come from inverse
//! iteration. Defective or clustered spectra are rejected, not repaired.

use super::matrix::CMatrix;
use crate::error::{Error, Result};
use num_complex::Complex64 as C64;

/// Relative gap below which eigenvalues are declared colliding.
pub const DEFAULT_GAP_TOL: f64 = 1e-8;

#[derive(Clone, Debug)]
pub struct Eigen {
    /// Eigenvalues sorted lexicographically by (re, im).
    pub values: Vec<C64>,
    /// Eigenvector matrix V with M = V diag(values) V^{-1}; columns match `values`.
    pub vectors: CMatrix,
}

/// Characteristic polynomial coefficients by Faddeev-LeVerrier:
/// p(x) = x^n + c[0] x^{n-1} + ... + c[n-1].
fn char_poly(m: &CMatrix) -> Vec<C64> {
    let n = m.dim();
    let mut coeffs = Vec::with_capacity(n);
    let mut mk = m.clone();
    for k in 1..=n {
        let ck = -mk.trace() / (k as f64);
        coeffs.push(ck);
        if k < n {
            let mut shifted = mk.clone();
            for i in 0..n {
                shifted[(i, i)] += ck;
            }
            mk = m * &shifted;
        }
    }
    coeffs
}

fn poly_eval(coeffs: &[C64], x: C64) -> (C64, C64) {
    // returns (p(x), p'(x)) for monic p with given lower coefficients
    let mut p = C64::new(1.0, 0.0);
    let mut dp = C64::new(0.0, 0.0);
    for &c in coeffs {
        dp = dp * x + p;
        p = p * x + c;
    }
    (p, dp)
}

/// Aberth-Ehrlich simultaneous root finding for a monic polynomial.
fn aberth(coeffs: &[C64]) -> Vec<C64> {
    let n = coeffs.len();
    if n == 0 {
        return vec![];
    }
    // Cauchy-style radius bound plus asymmetric seeding to break symmetry.
    let radius = 1.0 + coeffs.iter().map(|c| c.norm()).fold(0.0, f64::max);
    let mut roots: Vec<C64> = (0..n)
        .map(|k| {
            let th = 2.0 * std::f64::consts::PI * (k as f64) / (n as f64) + 0.4;
            C64::from_polar(radius * (0.5 + 0.5 * (k as f64 + 1.0) / (n as f64)), th)
        })
        .collect();
    for _ in 0..200 {
        let mut max_step = 0.0f64;
        for i in 0..n {
            let (p, dp) = poly_eval(coeffs, roots[i]);
            if p.norm() == 0.0 {
                continue;
            }
            let newton = if dp.norm() > 0.0 { p / dp } else { C64::new(1e-16, 0.0) };
            let mut rep = C64::new(0.0, 0.0);
            for j in 0..n {
                if j != i {
                    let d = roots[i] - roots[j];
                    if d.norm() > 1e-300 {
                        rep += C64::new(1.0, 0.0) / d;
                    }
                }
            }
            let denom = C64::new(1.0, 0.0) - newton * rep;
            let step = if denom.norm() > 1e-300 { newton / denom } else { newton };
            roots[i] -= step;
            max_step = max_step.max(step.norm());
        }
        if max_step < 1e-14 * radius.max(1.0) {
            break;
        }
    }
    roots
}

/// Newton polish on the matrix itself: lambda += 1 / tr((M - lambda I)^{-1}).
/// Quadratic near simple eigenvalues and free of char-poly conditioning.
fn polish(m: &CMatrix, mut lambda: C64, scale: f64) -> C64 {
    let n = m.dim();
    for _ in 0..4 {
        let mut shifted = m.clone();
        for i in 0..n {
            shifted[(i, i)] -= lambda;
        }
        let inv = match shifted.inverse() {
            Ok(v) => v,
            Err(_) => break, // exactly singular: lambda is already an eigenvalue
        };
        let t = inv.trace();
        if t.norm() < 1.0 / (1e3 * scale.max(1e-300)) {
            break;
        }
        let step = C64::new(1.0, 0.0) / t;
        lambda += step;
        if step.norm() < 1e-15 * scale.max(1.0) {
            break;
        }
    }
    lambda
}

fn sort_lex(values: &mut [C64]) {
    values.sort_by(|a, b| {
        a.re.partial_cmp(&b.re)
            .unwrap()
            .then(a.im.partial_cmp(&b.im).unwrap())
    });
}

/// Eigenvector for a simple eigenvalue by inverse iteration, deterministically
/// normalised (largest entry made 1, then unit 2-norm).
fn eigenvector(m: &CMatrix, lambda: C64, scale: f64) -> Result<Vec<C64>> {
    let n = m.dim();
    let mut shifted = m.clone();
    // tiny off-eigenvalue shift keeps the LU solvable while staying within
    // the eigenvector's perturbation tolerance
    let eps = 1e-14 * scale.max(1.0);
    for i in 0..n {
        shifted[(i, i)] -= lambda + C64::new(eps, eps);
    }
    let mut v: Vec<C64> = (0..n)
        .map(|i| C64::new(1.0, 0.3 + 0.1 * i as f64))
        .collect();
    for _ in 0..3 {
        let rhs = CMatrix::from_fn(n, |i, j| if j == 0 { v[i] } else { C64::new(0.0, 0.0) });
        let sol = shifted.solve(&rhs)?;
        let mut w: Vec<C64> = (0..n).map(|i| sol[(i, 0)]).collect();
        let nrm = w.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
        if nrm == 0.0 || !nrm.is_finite() {
            return Err(Error::Singular { context: "inverse iteration".into() });
        }
        for x in w.iter_mut() {
            *x /= nrm;
        }
        v = w;
    }
    // deterministic phase: divide by the largest-modulus entry
    let (imax, _) = v
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.norm().partial_cmp(&b.1.norm()).unwrap())
        .map(|(i, x)| (i, *x))
        .unwrap();
    let pivot = v[imax];
    for x in v.iter_mut() {
        *x /= pivot;
    }
    let nrm = v.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt();
    for x in v.iter_mut() {
        *x /= nrm;
    }
    Ok(v)
}

/// Full eigendecomposition, requiring distinct eigenvalues.
///
/// Fails with `EigenvalueCollision` when the minimal pairwise gap is below
/// `gap_tol * ||M||_F`, signalling non-generic input.
pub fn eig_distinct_with_tol(m: &CMatrix, gap_tol: f64) -> Result<Eigen> {
    let n = m.dim();
    if !m.is_finite() {
        return Err(Error::Invalid("eig_distinct: non-finite entries".into()));
    }
    if n == 0 {
        return Err(Error::Invalid("eig_distinct: empty matrix".into()));
    }
    let scale = m.norm_fro().max(1e-300);
    if n == 1 {
        return Ok(Eigen { values: vec![m[(0, 0)]], vectors: CMatrix::identity(1) });
    }

    let coeffs = char_poly(m);
    let mut values = aberth(&coeffs);
    for v in values.iter_mut() {
        *v = polish(m, *v, scale);
    }
    sort_lex(&mut values);

    let mut min_gap = f64::INFINITY;
    for i in 0..n {
        for j in (i + 1)..n {
            min_gap = min_gap.min((values[i] - values[j]).norm());
        }
    }
    let tol = gap_tol * scale;
    if min_gap < tol {
        return Err(Error::EigenvalueCollision { gap: min_gap, tol });
    }

    let mut vectors = CMatrix::zeros(n);
    for (j, &lam) in values.iter().enumerate() {
        let v = eigenvector(m, lam, scale)?;
        for i in 0..n {
            vectors[(i, j)] = v[i];
        }
    }

    // residual contract: ||MV - V diag|| <= 1e-10 ||M||
    let d = CMatrix::diag(&values);
    let resid = (m * &vectors - &vectors * &d).norm_fro();
    if resid > 1e-10 * scale {
        return Err(Error::EigenvalueCollision { gap: min_gap, tol: resid });
    }
    Ok(Eigen { values, vectors })
}

pub fn eig_distinct(m: &CMatrix) -> Result<Eigen> {
    eig_distinct_with_tol(m, DEFAULT_GAP_TOL)
}
