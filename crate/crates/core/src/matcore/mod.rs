//! Dense complex matrix kernels for small ranks and an adaptive integrator
//! for linear matrix ODEs along polyline paths in the complex plane.

mod eigen;
mod expm;
mod matrix;
mod ode;
mod path;
mod rectangular;

pub use eigen::{eig_distinct, eig_distinct_with_tol, Eigen, DEFAULT_GAP_TOL};
pub use expm::mat_exp;
pub use matrix::CMatrix;
pub use ode::{integrate_linear, integrate_trace};
pub use path::PolylinePath;
pub use rectangular::{lstsq, rank_and_nullspace, residual_norm};

use crate::error::{Error, Result};
use num_complex::Complex64 as C64;

/// Solve [D, X] + s X = B entrywise for diagonal D:
/// X_{ab} = B_{ab} / (d_a - d_b + s).
///
/// The kernel step of formal diagonalisation. Fails with `ResonantShift` when
/// a needed denominator vanishes, which flags non-generic data (an eigenvalue
/// collision, or integer-difference eigenvalues at a simple pole).
pub fn solve_ad_shift(d: &CMatrix, b: &CMatrix, s: C64) -> Result<CMatrix> {
    let n = d.dim();
    if b.dim() != n {
        return Err(Error::ShapeMismatch { context: "solve_ad_shift".into() });
    }
    let diag = d.diagonal();
    let mut x = CMatrix::zeros(n);
    for i in 0..n {
        for j in 0..n {
            let bij = b[(i, j)];
            if bij.norm() == 0.0 {
                continue;
            }
            let denom = diag[i] - diag[j] + s;
            if denom.norm() < 1e-12 {
                return Err(Error::ResonantShift { row: i, col: j, denom: denom.norm() });
            }
            x[(i, j)] = bij / denom;
        }
    }
    Ok(x)
}
