use crate::error::{Error, Result};
use num_complex::Complex64 as C64;
use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

/// Dense square complex matrix, row-major storage. Sized for small n
/// (rank-of-bundle scale, n <= ~8); no attempt at cache blocking.
#[derive(Clone, PartialEq)]
pub struct CMatrix {
    n: usize,
    data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(n: usize) -> Self {
        CMatrix { n, data: vec![C64::new(0.0, 0.0); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = C64::new(1.0, 0.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::ShapeMismatch { context: "from_rows: not square".into() });
        }
        let mut data = Vec::with_capacity(n * n);
        for r in rows {
            data.extend_from_slice(r);
        }
        Ok(CMatrix { n, data })
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn diag(entries: &[C64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &e) in entries.iter().enumerate() {
            m[(i, i)] = e;
        }
        m
    }

    pub fn scalar(n: usize, c: C64) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = c;
        }
        m
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn diagonal(&self) -> Vec<C64> {
        (0..self.n).map(|i| self[(i, i)]).collect()
    }

    /// Keep only the diagonal.
    pub fn diag_part(&self) -> CMatrix {
        CMatrix::diag(&self.diagonal())
    }

    /// Zero out the diagonal.
    pub fn offdiag_part(&self) -> CMatrix {
        let mut m = self.clone();
        for i in 0..self.n {
            m[(i, i)] = C64::new(0.0, 0.0);
        }
        m
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        self.offdiag_part().norm_max() <= tol
    }

    pub fn trace(&self) -> C64 {
        self.diagonal().iter().sum()
    }

    pub fn transpose(&self) -> CMatrix {
        CMatrix::from_fn(self.n, |i, j| self[(j, i)])
    }

    pub fn scale(&self, c: C64) -> CMatrix {
        CMatrix { n: self.n, data: self.data.iter().map(|x| x * c).collect() }
    }

    pub fn scale_re(&self, c: f64) -> CMatrix {
        self.scale(C64::new(c, 0.0))
    }

    pub fn norm_fro(&self) -> f64 {
        self.data.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt()
    }

    pub fn norm_max(&self) -> f64 {
        self.data.iter().map(|x| x.norm()).fold(0.0, f64::max)
    }

    /// Maximum absolute column sum.
    pub fn norm_one(&self) -> f64 {
        (0..self.n)
            .map(|j| (0..self.n).map(|i| self[(i, j)].norm()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.re.is_finite() && x.im.is_finite())
    }

    pub fn commutator(&self, other: &CMatrix) -> CMatrix {
        self * other - other * self
    }

    /// In-place axpy: self += c * other.
    pub fn add_scaled(&mut self, c: C64, other: &CMatrix) {
        debug_assert_eq!(self.n, other.n);
        for (a, b) in self.data.iter_mut().zip(other.data.iter()) {
            *a += c * b;
        }
    }

    /// LU decomposition with partial pivoting; returns (lu, perm, sign, singular_flag).
    fn lu(&self) -> (Vec<C64>, Vec<usize>, f64, bool) {
        let n = self.n;
        let mut a = self.data.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut sign = 1.0;
        let mut singular = false;
        for col in 0..n {
            let mut piv = col;
            let mut best = a[col * n + col].norm();
            for r in (col + 1)..n {
                let v = a[r * n + col].norm();
                if v > best {
                    best = v;
                    piv = r;
                }
            }
            if piv != col {
                for j in 0..n {
                    a.swap(col * n + j, piv * n + j);
                }
                perm.swap(col, piv);
                sign = -sign;
            }
            let d = a[col * n + col];
            if d.norm() == 0.0 {
                singular = true;
                continue;
            }
            for r in (col + 1)..n {
                let f = a[r * n + col] / d;
                a[r * n + col] = f;
                for j in (col + 1)..n {
                    let v = a[col * n + j];
                    a[r * n + j] -= f * v;
                }
            }
        }
        (a, perm, sign, singular)
    }

    pub fn det(&self) -> C64 {
        let (lu, _, sign, singular) = self.lu();
        if singular {
            return C64::new(0.0, 0.0);
        }
        let mut d = C64::new(sign, 0.0);
        for i in 0..self.n {
            d *= lu[i * self.n + i];
        }
        d
    }

    /// Solve self * X = B.
    pub fn solve(&self, b: &CMatrix) -> Result<CMatrix> {
        let n = self.n;
        if b.n != n {
            return Err(Error::ShapeMismatch { context: "solve: dimension mismatch".into() });
        }
        let (lu, perm, _, singular) = self.lu();
        if singular {
            return Err(Error::Singular { context: "solve".into() });
        }
        let mut x = CMatrix::zeros(n);
        for col in 0..n {
            // forward substitution on permuted rhs
            let mut y = vec![C64::new(0.0, 0.0); n];
            for i in 0..n {
                let mut s = b[(perm[i], col)];
                for j in 0..i {
                    s -= lu[i * n + j] * y[j];
                }
                y[i] = s;
            }
            // back substitution
            for i in (0..n).rev() {
                let mut s = y[i];
                for j in (i + 1)..n {
                    s -= lu[i * n + j] * x[(j, col)];
                }
                x[(i, col)] = s / lu[i * n + i];
            }
        }
        Ok(x)
    }

    pub fn inverse(&self) -> Result<CMatrix> {
        self.solve(&CMatrix::identity(self.n))
    }

    /// Solve self * x = b for a single right-hand side.
    pub fn solve_vec(&self, b: &[C64]) -> Result<Vec<C64>> {
        let n = self.n;
        if b.len() != n {
            return Err(Error::ShapeMismatch { context: "solve_vec".into() });
        }
        let (lu, perm, _, singular) = self.lu();
        if singular {
            return Err(Error::Singular { context: "solve_vec".into() });
        }
        let mut y = vec![C64::new(0.0, 0.0); n];
        for i in 0..n {
            let mut s = b[perm[i]];
            for j in 0..i {
                s -= lu[i * n + j] * y[j];
            }
            y[i] = s;
        }
        let mut x = vec![C64::new(0.0, 0.0); n];
        for i in (0..n).rev() {
            let mut s = y[i];
            for j in (i + 1)..n {
                s -= lu[i * n + j] * x[j];
            }
            x[i] = s / lu[i * n + i];
        }
        Ok(x)
    }

    /// Conjugation g * self * g^{-1}.
    pub fn conjugate_by(&self, g: &CMatrix) -> Result<CMatrix> {
        let gi = g.inverse()?;
        Ok(g * self * &gi)
    }

    pub fn max_entry_index(&self) -> (usize, usize) {
        let mut best = (0, 0);
        let mut val = -1.0;
        for i in 0..self.n {
            for j in 0..self.n {
                let v = self[(i, j)].norm();
                if v > val {
                    val = v;
                    best = (i, j);
                }
            }
        }
        best
    }
}

impl Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.n + j]
    }
}

impl IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.n + j]
    }
}

impl fmt::Debug for CMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "CMatrix {}x{} [", self.n, self.n)?;
        for i in 0..self.n {
            write!(f, "  ")?;
            for j in 0..self.n {
                let z = self[(i, j)];
                write!(f, "{:+.4e}{:+.4e}i  ", z.re, z.im)?;
            }
            writeln!(f)?;
        }
        write!(f, "]")
    }
}

macro_rules! impl_binop {
    ($trait:ident, $method:ident, $op:tt) => {
        impl $trait<&CMatrix> for &CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: &CMatrix) -> CMatrix {
                debug_assert_eq!(self.n, rhs.n);
                CMatrix {
                    n: self.n,
                    data: self.data.iter().zip(rhs.data.iter()).map(|(a, b)| a $op b).collect(),
                }
            }
        }
        impl $trait<CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: CMatrix) -> CMatrix { (&self).$method(&rhs) }
        }
        impl $trait<&CMatrix> for CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: &CMatrix) -> CMatrix { (&self).$method(rhs) }
        }
        impl $trait<CMatrix> for &CMatrix {
            type Output = CMatrix;
            fn $method(self, rhs: CMatrix) -> CMatrix { self.$method(&rhs) }
        }
    };
}

impl_binop!(Add, add, +);
impl_binop!(Sub, sub, -);

impl Mul<&CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        debug_assert_eq!(self.n, rhs.n);
        let n = self.n;
        let mut out = CMatrix::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self.data[i * n + k];
                if a.norm_sqr() == 0.0 {
                    continue;
                }
                for j in 0..n {
                    out.data[i * n + j] += a * rhs.data[k * n + j];
                }
            }
        }
        out
    }
}

impl Mul<CMatrix> for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: CMatrix) -> CMatrix {
        &self * &rhs
    }
}
impl Mul<&CMatrix> for CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: &CMatrix) -> CMatrix {
        &self * rhs
    }
}
impl Mul<CMatrix> for &CMatrix {
    type Output = CMatrix;
    fn mul(self, rhs: CMatrix) -> CMatrix {
        self * &rhs
    }
}

impl Neg for &CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_re(-1.0)
    }
}
impl Neg for CMatrix {
    type Output = CMatrix;
    fn neg(self) -> CMatrix {
        self.scale_re(-1.0)
    }
}
