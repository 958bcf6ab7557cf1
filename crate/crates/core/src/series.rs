//! Truncated matrix Laurent series in one local coordinate. Internal engine
//! behind formal diagonalisation, jet-group arithmetic and the deformation
//! one-form. All products are truncated to an explicit degree window; callers
//! own the window bookkeeping.

use crate::error::{Error, Result};
use crate::matcore::CMatrix;
use num_complex::Complex64 as C64;

/// Matrix-coefficient Laurent polynomial sum_{d=min_deg}^{max_deg} C_d z^d.
#[derive(Clone, Debug)]
pub struct MatSeries {
    n: usize,
    min_deg: i32,
    coeffs: Vec<CMatrix>,
}

impl MatSeries {
    pub fn zero(n: usize, min_deg: i32, max_deg: i32) -> Self {
        assert!(max_deg >= min_deg);
        let len = (max_deg - min_deg + 1) as usize;
        MatSeries { n, min_deg, coeffs: vec![CMatrix::zeros(n); len] }
    }

    pub fn constant(c: CMatrix, max_deg: i32) -> Self {
        let n = c.dim();
        let mut s = Self::zero(n, 0, max_deg.max(0));
        s.set_coeff(0, c);
        s
    }

    pub fn from_coeffs(min_deg: i32, coeffs: Vec<CMatrix>) -> Self {
        assert!(!coeffs.is_empty());
        let n = coeffs[0].dim();
        MatSeries { n, min_deg, coeffs }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn min_deg(&self) -> i32 {
        self.min_deg
    }

    pub fn max_deg(&self) -> i32 {
        self.min_deg + self.coeffs.len() as i32 - 1
    }

    pub fn coeff(&self, deg: i32) -> CMatrix {
        if deg < self.min_deg || deg > self.max_deg() {
            CMatrix::zeros(self.n)
        } else {
            self.coeffs[(deg - self.min_deg) as usize].clone()
        }
    }

    pub fn coeff_ref(&self, deg: i32) -> Option<&CMatrix> {
        if deg < self.min_deg || deg > self.max_deg() {
            None
        } else {
            Some(&self.coeffs[(deg - self.min_deg) as usize])
        }
    }

    pub fn set_coeff(&mut self, deg: i32, c: CMatrix) {
        assert!(deg >= self.min_deg && deg <= self.max_deg(), "degree out of window");
        self.coeffs[(deg - self.min_deg) as usize] = c;
    }

    pub fn add_to_coeff(&mut self, deg: i32, c: &CMatrix) {
        if deg >= self.min_deg && deg <= self.max_deg() {
            let idx = (deg - self.min_deg) as usize;
            self.coeffs[idx] = &self.coeffs[idx] + c;
        }
    }

    /// Re-window, cropping or zero-padding as needed.
    pub fn rewindow(&self, min_deg: i32, max_deg: i32) -> MatSeries {
        let mut out = MatSeries::zero(self.n, min_deg, max_deg);
        for d in min_deg.max(self.min_deg)..=max_deg.min(self.max_deg()) {
            out.set_coeff(d, self.coeff(d));
        }
        out
    }

    pub fn add(&self, other: &MatSeries) -> MatSeries {
        let lo = self.min_deg.min(other.min_deg);
        let hi = self.max_deg().max(other.max_deg());
        let mut out = MatSeries::zero(self.n, lo, hi);
        for d in lo..=hi {
            out.set_coeff(d, self.coeff(d) + other.coeff(d));
        }
        out
    }

    pub fn sub(&self, other: &MatSeries) -> MatSeries {
        self.add(&other.scale(C64::new(-1.0, 0.0)))
    }

    pub fn scale(&self, c: C64) -> MatSeries {
        MatSeries {
            n: self.n,
            min_deg: self.min_deg,
            coeffs: self.coeffs.iter().map(|m| m.scale(c)).collect(),
        }
    }

    /// Truncated product, keeping degrees <= max_deg.
    pub fn mul_trunc(&self, other: &MatSeries, max_deg: i32) -> MatSeries {
        let lo = self.min_deg + other.min_deg;
        let mut out = MatSeries::zero(self.n, lo.min(max_deg), max_deg);
        for da in self.min_deg..=self.max_deg() {
            let ca = self.coeff_ref(da).unwrap();
            if ca.norm_max() == 0.0 {
                continue;
            }
            for db in other.min_deg..=other.max_deg() {
                let d = da + db;
                if d > max_deg {
                    break;
                }
                let cb = other.coeff_ref(db).unwrap();
                if cb.norm_max() == 0.0 {
                    continue;
                }
                out.add_to_coeff(d, &(ca * cb));
            }
        }
        out
    }

    /// d/dz of the series.
    pub fn derivative(&self) -> MatSeries {
        let lo = self.min_deg - 1;
        let hi = (self.max_deg() - 1).max(lo);
        let mut out = MatSeries::zero(self.n, lo, hi);
        for d in self.min_deg..=self.max_deg() {
            if d != 0 {
                out.set_coeff(d - 1, self.coeff(d).scale(C64::new(d as f64, 0.0)));
            }
        }
        out
    }

    /// Inverse of a power series (min_deg must be 0) with invertible constant
    /// term, to degree max_deg.
    pub fn inverse_trunc(&self, max_deg: i32) -> Result<MatSeries> {
        if self.min_deg > 0 || self.coeff(0).norm_max() == 0.0 {
            return Err(Error::Invalid("series inverse needs invertible constant term".into()));
        }
        if self.min_deg < 0 && (self.min_deg..0).any(|d| self.coeff(d).norm_max() > 0.0) {
            return Err(Error::Invalid("series inverse of a Laurent series with poles".into()));
        }
        let c0_inv = self.coeff(0).inverse()?;
        let mut inv = MatSeries::zero(self.n, 0, max_deg);
        inv.set_coeff(0, c0_inv.clone());
        for m in 1..=max_deg {
            // b_m = -c0^{-1} sum_{j=1..m} c_j b_{m-j}
            let mut acc = CMatrix::zeros(self.n);
            for j in 1..=m {
                let cj = self.coeff(j);
                if cj.norm_max() == 0.0 {
                    continue;
                }
                acc = acc + cj * inv.coeff(m - j);
            }
            inv.set_coeff(m, (&c0_inv * acc).scale(C64::new(-1.0, 0.0)));
        }
        Ok(inv)
    }

    /// Gauge action u[a] = u a u^{-1} + u' u^{-1}, with u a power series with
    /// invertible constant term, truncated at max_deg.
    pub fn gauge_by(&self, u: &MatSeries, max_deg: i32) -> Result<MatSeries> {
        let u_inv = u.inverse_trunc(max_deg + self.min_deg.unsigned_abs() as i32)?;
        let conj = u.mul_trunc(self, max_deg).mul_trunc(&u_inv, max_deg);
        let du = u.derivative();
        let log_term = du.mul_trunc(&u_inv, max_deg);
        Ok(conj.add(&log_term).rewindow(self.min_deg.min(conj.min_deg()), max_deg))
    }

    /// Evaluate at z (Horner in z for the tail, in 1/z for the pole part).
    pub fn eval(&self, z: C64) -> CMatrix {
        let mut plus = CMatrix::zeros(self.n);
        for d in (0.max(self.min_deg)..=self.max_deg()).rev() {
            plus = plus.scale(z) + self.coeff(d);
        }
        let mut minus = CMatrix::zeros(self.n);
        if self.min_deg < 0 {
            let zinv = C64::new(1.0, 0.0) / z;
            for d in self.min_deg..0 {
                minus = minus.scale(zinv);
                minus = minus + self.coeff(d);
            }
            minus = minus.scale(zinv);
        }
        plus + minus
    }

    pub fn norm_max(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm_max()).fold(0.0, f64::max)
    }

    /// Principal part (strictly negative degrees).
    pub fn principal(&self) -> MatSeries {
        if self.min_deg >= 0 {
            return MatSeries::zero(self.n, -1, -1);
        }
        self.rewindow(self.min_deg, -1)
    }
}
