//! Adaptive Dormand-Prince 5(4) transport of a fundamental solution frame
//! along a polyline in the complex plane: dPhi/dz = C(z) Phi. Each segment is
//! integrated in a real parameter with the complex segment direction folded
//! into the right-hand side. Local error is budgeted per unit arclength.

use super::matrix::CMatrix;
use super::path::PolylinePath;
use crate::error::{Error, Result};
use num_complex::Complex64 as C64;

const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// fifth-order weights minus the embedded fourth-order weights
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;

const SAFETY: f64 = 0.9;
const MIN_SCALE: f64 = 0.2;
const MAX_SCALE: f64 = 5.0;

/// Transport `frame0` along `path` for the linear system dPhi/dz = coeff(z) Phi.
///
/// The local truncation error per step is kept below `tol` times the step's
/// arclength (relative to the frame norm). Fails with `StepUnderflow` when the
/// controller collapses, which in practice means the path runs too close to a
/// singularity of `coeff`.
pub fn integrate_linear<F>(coeff: F, path: &PolylinePath, frame0: &CMatrix, tol: f64) -> Result<CMatrix>
where
    F: Fn(C64) -> CMatrix,
{
    if tol <= 0.0 {
        return Err(Error::Invalid("integrate_linear: tol must be positive".into()));
    }
    let mut phi = frame0.clone();
    for w in path.vertices().windows(2) {
        phi = integrate_segment(&coeff, w[0], w[1], phi, tol)?;
    }
    Ok(phi)
}

fn integrate_segment<F>(coeff: &F, z0: C64, z1: C64, mut phi: CMatrix, tol: f64) -> Result<CMatrix>
where
    F: Fn(C64) -> CMatrix,
{
    let dir = z1 - z0;
    let seg_len = dir.norm();
    let rhs = |s: f64, y: &CMatrix| -> CMatrix {
        let z = z0 + dir * s;
        (coeff(z) * y).scale(dir)
    };

    let mut s = 0.0f64;
    let mut h = 0.1f64;
    let h_min = 1e-13;
    let mut k1 = rhs(s, &phi);
    let mut rejected_in_a_row = 0usize;

    while s < 1.0 {
        if h < h_min {
            return Err(Error::StepUnderflow { at: format!("{}", z0 + dir * s) });
        }
        if s + h > 1.0 {
            h = 1.0 - s;
        }

        let mut y = phi.clone();
        y.add_scaled(C64::new(h * A21, 0.0), &k1);
        let k2 = rhs(s + C2 * h, &y);

        let mut y = phi.clone();
        y.add_scaled(C64::new(h * A31, 0.0), &k1);
        y.add_scaled(C64::new(h * A32, 0.0), &k2);
        let k3 = rhs(s + C3 * h, &y);

        let mut y = phi.clone();
        y.add_scaled(C64::new(h * A41, 0.0), &k1);
        y.add_scaled(C64::new(h * A42, 0.0), &k2);
        y.add_scaled(C64::new(h * A43, 0.0), &k3);
        let k4 = rhs(s + C4 * h, &y);

        let mut y = phi.clone();
        y.add_scaled(C64::new(h * A51, 0.0), &k1);
        y.add_scaled(C64::new(h * A52, 0.0), &k2);
        y.add_scaled(C64::new(h * A53, 0.0), &k3);
        y.add_scaled(C64::new(h * A54, 0.0), &k4);
        let k5 = rhs(s + C5 * h, &y);

        let mut y = phi.clone();
        y.add_scaled(C64::new(h * A61, 0.0), &k1);
        y.add_scaled(C64::new(h * A62, 0.0), &k2);
        y.add_scaled(C64::new(h * A63, 0.0), &k3);
        y.add_scaled(C64::new(h * A64, 0.0), &k4);
        y.add_scaled(C64::new(h * A65, 0.0), &k5);
        let k6 = rhs(s + h, &y);

        let mut y5 = phi.clone();
        y5.add_scaled(C64::new(h * B1, 0.0), &k1);
        y5.add_scaled(C64::new(h * B3, 0.0), &k3);
        y5.add_scaled(C64::new(h * B4, 0.0), &k4);
        y5.add_scaled(C64::new(h * B5, 0.0), &k5);
        y5.add_scaled(C64::new(h * B6, 0.0), &k6);
        let k7 = rhs(s + h, &y5);

        let mut err_m = k1.scale_re(E1);
        err_m.add_scaled(C64::new(E3, 0.0), &k3);
        err_m.add_scaled(C64::new(E4, 0.0), &k4);
        err_m.add_scaled(C64::new(E5, 0.0), &k5);
        err_m.add_scaled(C64::new(E6, 0.0), &k6);
        err_m.add_scaled(C64::new(E7, 0.0), &k7);
        let err = err_m.norm_fro() * h;

        // budget: tol per unit arclength, relative to the frame scale
        let budget = tol * (h * seg_len) * phi.norm_fro().max(1.0);
        if err <= budget || h <= h_min * 2.0 {
            s += h;
            phi = y5;
            k1 = k7; // FSAL
            rejected_in_a_row = 0;
            let scale = if err > 0.0 {
                SAFETY * (budget / err).powf(0.2)
            } else {
                MAX_SCALE
            };
            h *= scale.clamp(MIN_SCALE, MAX_SCALE);
        } else {
            rejected_in_a_row += 1;
            if rejected_in_a_row > 60 {
                return Err(Error::StepUnderflow { at: format!("{}", z0 + dir * s) });
            }
            let scale = SAFETY * (budget / err).powf(0.2);
            h *= scale.clamp(0.05, 0.9);
        }
        if !phi.is_finite() {
            return Err(Error::StepUnderflow { at: format!("{}", z0 + dir * s) });
        }
    }
    Ok(phi)
}

/// Line integral of the trace of the coefficient along a path (windings
/// included), by transporting the unipotent augmentation
/// d/dz [[1, I],[0, 1]] = [[0, tr coeff],[0, 0]] [[1, I],[0, 1]].
/// Used for Liouville determinant checks.
pub fn integrate_trace<F>(coeff: F, path: &PolylinePath, tol: f64) -> Result<C64>
where
    F: Fn(C64) -> CMatrix,
{
    let aug = |z: C64| {
        let mut m = CMatrix::zeros(2);
        m[(0, 1)] = coeff(z).trace();
        m
    };
    let res = integrate_linear(aug, path, &CMatrix::identity(2), tol)?;
    Ok(res[(0, 1)])
}
