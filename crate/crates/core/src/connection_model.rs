//! Data model for generic meromorphic connections on the trivial rank-n
//! bundle over the Riemann sphere, written as d - A with
//! A = sum_i sum_j  iA_j dz/(z - a_i)^j, together with the formal
//! normal-form algorithm at each pole.
//!
//! Conventions fixed here and relied on everywhere else:
//! - all poles are finite and the residues sum to zero (no pole at infinity);
//! - the local coordinate at pole i is always z_i = z - a_i;
//! - Q has zero constant term in its Laurent expansion with respect to z_i.

use crate::error::{Error, Result};
use crate::matcore::{eig_distinct, solve_ad_shift, CMatrix};
use crate::series::MatSeries;
use num_complex::Complex64 as C64;

/// Default number of gauge-series orders beyond the pole order.
pub const DEFAULT_EXTRA_ORDERS: usize = 5;

/// Effective polar divisor: positions with pole orders.
#[derive(Clone, Debug)]
pub struct PolarDivisor {
    pub poles: Vec<(C64, usize)>,
}

impl PolarDivisor {
    pub fn validate(&self) -> Result<()> {
        if self.poles.is_empty() {
            return Err(Error::Invalid("empty divisor".into()));
        }
        for (a, k) in &self.poles {
            if !a.re.is_finite() || !a.im.is_finite() {
                return Err(Error::Invalid("non-finite pole position".into()));
            }
            if *k == 0 {
                return Err(Error::Invalid("pole order must be positive".into()));
            }
        }
        for i in 0..self.poles.len() {
            for j in (i + 1)..self.poles.len() {
                let dist = (self.poles[i].0 - self.poles[j].0).norm();
                if dist < 1e-10 {
                    return Err(Error::PoleCollision { i, j, dist });
                }
            }
        }
        Ok(())
    }
}

/// Principal part at one pole: coefficients A_k, ..., A_1 of
/// dz/(z-a)^k, ..., dz/(z-a), leading coefficient first.
#[derive(Clone, Debug)]
pub struct PrincipalPart {
    coeffs: Vec<CMatrix>,
}

impl PrincipalPart {
    pub fn new(coeffs: Vec<CMatrix>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Invalid("principal part needs at least the residue".into()));
        }
        let n = coeffs[0].dim();
        if coeffs.iter().any(|c| c.dim() != n || !c.is_finite()) {
            return Err(Error::ShapeMismatch { context: "principal part coefficients".into() });
        }
        Ok(PrincipalPart { coeffs })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn rank(&self) -> usize {
        self.coeffs[0].dim()
    }

    /// Coefficient of dz/(z-a)^l for 1 <= l <= k.
    pub fn coeff_of(&self, l: usize) -> &CMatrix {
        &self.coeffs[self.order() - l]
    }

    pub fn leading(&self) -> &CMatrix {
        &self.coeffs[0]
    }

    pub fn residue(&self) -> &CMatrix {
        self.coeffs.last().unwrap()
    }

    /// Leading-first list, as stored.
    pub fn coeffs(&self) -> &[CMatrix] {
        &self.coeffs
    }

    /// As a Laurent series in the local coordinate, degrees -k..-1
    /// (A_k sits at degree -k, the residue A_1 at degree -1).
    pub fn as_series(&self) -> MatSeries {
        let k = self.order() as i32;
        MatSeries::from_coeffs(-k, self.coeffs.clone())
    }

    pub fn map(&self, f: impl Fn(&CMatrix) -> CMatrix) -> PrincipalPart {
        PrincipalPart { coeffs: self.coeffs.iter().map(f).collect() }
    }
}

/// Connection d - A on the trivial bundle with only finite poles.
#[derive(Clone, Debug)]
pub struct MeromorphicConnection {
    pub positions: Vec<C64>,
    pub parts: Vec<PrincipalPart>,
}

impl MeromorphicConnection {
    pub fn new(positions: Vec<C64>, parts: Vec<PrincipalPart>) -> Result<Self> {
        if positions.len() != parts.len() || positions.is_empty() {
            return Err(Error::ShapeMismatch { context: "poles vs principal parts".into() });
        }
        let n = parts[0].rank();
        if parts.iter().any(|p| p.rank() != n) {
            return Err(Error::ShapeMismatch { context: "mixed ranks".into() });
        }
        let conn = MeromorphicConnection { positions, parts };
        conn.divisor().validate()?;
        Ok(conn)
    }

    pub fn rank(&self) -> usize {
        self.parts[0].rank()
    }

    pub fn num_poles(&self) -> usize {
        self.positions.len()
    }

    pub fn divisor(&self) -> PolarDivisor {
        PolarDivisor {
            poles: self
                .positions
                .iter()
                .zip(self.parts.iter())
                .map(|(a, p)| (*a, p.order()))
                .collect(),
        }
    }

    pub fn residue_sum(&self) -> CMatrix {
        let mut s = CMatrix::zeros(self.rank());
        for p in &self.parts {
            s = s + p.residue().clone();
        }
        s
    }

    /// Magnitude used for relative tolerances.
    pub fn scale(&self) -> f64 {
        self.parts
            .iter()
            .flat_map(|p| p.coeffs().iter())
            .map(|c| c.norm_fro())
            .fold(0.0, f64::max)
            .max(1e-300)
    }

    /// The dz-coefficient of A at a point away from the poles.
    pub fn evaluate(&self, z: C64) -> Result<CMatrix> {
        let mut out = CMatrix::zeros(self.rank());
        for (a, part) in self.positions.iter().zip(self.parts.iter()) {
            let w = z - a;
            if w.norm() < 1e-13 {
                return Err(Error::PoleEvaluation { at: format!("{z}") });
            }
            let winv = C64::new(1.0, 0.0) / w;
            // Horner in 1/(z-a): A_k first
            let mut acc = CMatrix::zeros(self.rank());
            for c in part.coeffs() {
                acc = acc.scale(winv) + c.clone();
            }
            out = out + acc.scale(winv);
        }
        Ok(out)
    }

    /// Minimal distance between distinct poles.
    pub fn min_pole_gap(&self) -> f64 {
        let mut best = f64::INFINITY;
        for i in 0..self.positions.len() {
            for j in (i + 1)..self.positions.len() {
                best = best.min((self.positions[i] - self.positions[j]).norm());
            }
        }
        best
    }

    /// Local Laurent data of A at pole `i`: the principal part plus the Taylor
    /// tail contributed by all other poles, as a series in z_i = z - a_i with
    /// degrees -k_i .. max_deg.
    pub fn local_expansion(&self, i: usize, max_deg: i32) -> MatSeries {
        let k = self.parts[i].order() as i32;
        let a_i = self.positions[i];
        let mut out = self.parts[i].as_series().rewindow(-k, max_deg);
        for (j, (a_j, part)) in self.positions.iter().zip(self.parts.iter()).enumerate() {
            if j == i {
                continue;
            }
            let c = a_i - a_j;
            for l in 1..=part.order() {
                let coeff = part.coeff_of(l);
                // (w + c)^{-l} = sum_m (-1)^m binom(l+m-1, m) c^{-l-m} w^m
                let mut binom = 1.0f64;
                let mut cpow = c.powi(-(l as i32));
                let cinv = C64::new(1.0, 0.0) / c;
                for m in 0..=max_deg.max(0) {
                    if m > 0 {
                        binom *= (l as f64 + m as f64 - 1.0) / m as f64;
                        cpow *= cinv;
                    }
                    let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                    out.add_to_coeff(m, &coeff.scale(cpow * C64::new(sign * binom, 0.0)));
                }
            }
        }
        out
    }
}

/// Diagonal formal data at a pole: Q (polar polynomial, zero constant term)
/// and the exponent of formal monodromy Lambda.
#[derive(Clone, Debug)]
pub struct FormalNormalForm {
    /// q_coeffs[l-1] is the diagonal coefficient of z^{-l} in Q, l = 1..k-1.
    pub q_coeffs: Vec<CMatrix>,
    /// Diagonal exponent of formal monodromy.
    pub lambda: CMatrix,
}

impl FormalNormalForm {
    pub fn rank(&self) -> usize {
        self.lambda.dim()
    }

    pub fn pole_order(&self) -> usize {
        self.q_coeffs.len() + 1
    }

    /// Q evaluated at a local coordinate value (diagonal matrix).
    pub fn q_at(&self, z: C64) -> CMatrix {
        let n = self.rank();
        let zinv = C64::new(1.0, 0.0) / z;
        let mut acc = CMatrix::zeros(n);
        for q in self.q_coeffs.iter().rev() {
            acc = (acc + q.clone()).scale(zinv);
        }
        acc
    }

    /// Leading term coefficient of q_i - q_j (coefficient of z^{1-k}).
    pub fn q_leading_gap(&self, i: usize, j: usize) -> C64 {
        match self.q_coeffs.last() {
            Some(top) => top[(i, i)] - top[(j, j)],
            None => C64::new(0.0, 0.0),
        }
    }

    /// dQ + Lambda dz/z as a Laurent series (degrees -k..-1).
    pub fn as_series(&self) -> MatSeries {
        let k = self.pole_order() as i32;
        let n = self.rank();
        let mut s = MatSeries::zero(n, -k, -1);
        s.set_coeff(-1, self.lambda.clone());
        for (idx, q) in self.q_coeffs.iter().enumerate() {
            let l = (idx + 1) as i32;
            // d/dz (q z^-l) = -l q z^{-l-1}
            s.set_coeff(-l - 1, q.scale(C64::new(-(l as f64), 0.0)));
        }
        s
    }
}

/// One compatible framing per pole: g0 with g0 A_k g0^{-1} diagonal.
#[derive(Clone, Debug)]
pub struct CompatibleFraming {
    pub framings: Vec<CMatrix>,
}

impl CompatibleFraming {
    pub fn check(&self, conn: &MeromorphicConnection) -> Result<()> {
        if self.framings.len() != conn.num_poles() {
            return Err(Error::ShapeMismatch { context: "framings vs poles".into() });
        }
        for (g0, part) in self.framings.iter().zip(conn.parts.iter()) {
            let lead = part.leading();
            let d = lead.conjugate_by(g0)?;
            let off = d.offdiag_part().norm_fro();
            if off > 1e-10 * lead.norm_fro().max(1.0) {
                return Err(Error::Invalid(format!(
                    "framing does not diagonalise the leading coefficient (off-diagonal {off:.3e})"
                )));
            }
        }
        Ok(())
    }
}

/// Framings from eigenvector bases of the leading coefficients (deterministic
/// eigenvalue order).
pub fn default_framings(conn: &MeromorphicConnection) -> Result<CompatibleFraming> {
    let mut framings = Vec::with_capacity(conn.num_poles());
    for part in &conn.parts {
        let e = eig_distinct(part.leading())?;
        framings.push(e.vectors.inverse()?);
    }
    Ok(CompatibleFraming { framings })
}

/// Per-pole genericity report.
#[derive(Clone, Debug)]
pub struct PoleReport {
    pub order: usize,
    pub generic: bool,
    pub detail: String,
    pub eigenvalue_gap: f64,
}

/// Result of `validate`.
#[derive(Clone, Debug)]
pub struct ValidationReport {
    pub poles: Vec<PoleReport>,
    pub residue_sum_norm: f64,
    pub scale: f64,
    pub passes: bool,
}

/// Check genericity at every pole (distinct leading eigenvalues; distinct
/// mod Z for simple poles) and the vanishing of the residue sum.
pub fn validate(conn: &MeromorphicConnection) -> ValidationReport {
    let scale = conn.scale();
    let mut poles = Vec::new();
    for part in &conn.parts {
        let k = part.order();
        let lead = part.leading();
        let report = match eig_distinct(lead) {
            Err(e) => PoleReport {
                order: k,
                generic: false,
                detail: format!("leading coefficient not semisimple with distinct eigenvalues: {e}"),
                eigenvalue_gap: 0.0,
            },
            Ok(eig) => {
                let mut gap = f64::INFINITY;
                let mut generic = true;
                let mut detail = String::from("generic");
                let nn = eig.values.len();
                for a in 0..nn {
                    for b in (a + 1)..nn {
                        let diff = eig.values[a] - eig.values[b];
                        let g = if k == 1 {
                            // distance of the difference from the integer lattice
                            (diff - C64::new(diff.re.round(), 0.0)).norm()
                        } else {
                            diff.norm()
                        };
                        gap = gap.min(g);
                    }
                }
                if nn == 1 {
                    gap = f64::INFINITY;
                }
                let tol = 1e-8 * lead.norm_fro().max(1.0);
                if gap < tol {
                    generic = false;
                    detail = if k == 1 {
                        format!("residue eigenvalues coincide mod Z (gap {gap:.3e})")
                    } else {
                        format!("leading eigenvalues coincide (gap {gap:.3e})")
                    };
                }
                PoleReport { order: k, generic, detail, eigenvalue_gap: gap }
            }
        };
        poles.push(report);
    }
    let residue_sum_norm = conn.residue_sum().norm_fro();
    let passes = poles.iter().all(|p| p.generic) && residue_sum_norm <= 1e-10 * scale;
    ValidationReport { poles, residue_sum_norm, scale, passes }
}

/// Output of the formal diagonalisation: the gauge series
/// ghat = g0 + g1 z + ... + gN z^N (so the formal solution uses ghat^{-1}),
/// the normal form it produces, and the size of the first dropped gauge term.
#[derive(Clone, Debug)]
pub struct FormalGauge {
    pub ghat: MatSeries,
    pub normal_form: FormalNormalForm,
    pub next_term_norm: f64,
}

impl FormalGauge {
    /// Coefficients g0..gN of ghat.
    pub fn jets(&self) -> Vec<CMatrix> {
        (0..=self.ghat.max_deg()).map(|d| self.ghat.coeff(d)).collect()
    }
}

/// Formal diagonalisation of local Laurent data (principal part plus optional
/// holomorphic tail), seeded at a compatible framing g0.
///
/// Produces the unique gauge series ghat with ghat(0) = g0 and
/// ghat[A] = dQ + Lambda dz/z + O(z^{N-k}) dz, by an order-by-order sweep:
/// off-diagonal corrections are fixed against the leading coefficient through
/// `solve_ad_shift`, diagonal corrections by killing every diagonal term of
/// the transformed connection beyond Lambda dz/z.
pub fn formal_diagonalize_series(local: &MatSeries, g0: &CMatrix, n_order: usize) -> Result<FormalGauge> {
    let n = local.dim();
    let k = (-local.min_deg()) as usize;
    if k == 0 {
        return Err(Error::Invalid("local data has no pole".into()));
    }
    if n_order < k {
        return Err(Error::TruncationTooShort { n: n_order, k });
    }
    let cap = n_order as i32; // compute one extra order for the error estimate
    let window_hi = cap + 1 - k as i32;

    // conjugate by the framing; afterwards the leading coefficient is diagonal
    let g0_inv = g0.inverse()?;
    let mut current = MatSeries::zero(n, -(k as i32), window_hi);
    for d in local.min_deg()..=local.max_deg().min(window_hi) {
        current.set_coeff(d, g0 * local.coeff(d) * &g0_inv);
    }

    let lead = current.coeff(-(k as i32));
    let off = lead.offdiag_part().norm_fro();
    if off > 1e-10 * lead.norm_fro().max(1.0) {
        return Err(Error::Invalid(format!(
            "framing does not diagonalise the leading coefficient (off-diagonal {off:.3e})"
        )));
    }
    let d_lead = lead.diag_part();

    let mut u_total = MatSeries::constant(CMatrix::identity(n), cap + 1);
    let mut normal: Vec<CMatrix> = vec![CMatrix::zeros(n); k]; // N_k..N_1 by pole order index l-1
    normal[k - 1] = d_lead.clone();

    for s in 1..=(n_order + 1) {
        let s_i = s as i32;
        let deg = s_i - k as i32;
        let e_s = current.coeff(deg);
        let e_diag = e_s.diag_part();
        let e_off = e_s.offdiag_part();

        // elementary transform w = 1 + h z^s + delta z^{s-k+1}
        let mut w = MatSeries::zero(n, 0, cap + 1);
        w.set_coeff(0, CMatrix::identity(n));
        let mut used = false;

        if e_off.norm_max() > 0.0 {
            let h = if k == 1 {
                // simple pole: (ad_Lambda - s) h = E, i.e. [D, h] - s h = E
                solve_ad_shift(&d_lead, &e_off, C64::new(-(s as f64), 0.0))?
            } else {
                // irregular: [D, h] = E against the leading coefficient
                solve_ad_shift(&d_lead, &e_off, C64::new(0.0, 0.0))?
            };
            if s_i <= cap + 1 {
                w.add_to_coeff(s_i, &h);
                used = true;
            }
        }

        if s < k {
            // absorb the diagonal into the normal form (s = k-1 lands Lambda)
            normal[k - 1 - s] = e_diag;
        } else if k == 1 {
            // diagonal killed by s * h_diag = -E_diag
            let hd = e_diag.scale(C64::new(-1.0 / s as f64, 0.0));
            if hd.norm_max() > 0.0 && s_i <= cap + 1 {
                w.add_to_coeff(s_i, &hd);
                used = true;
            }
        } else {
            // kill the diagonal with a lower-order diagonal jet: the term
            // p * delta z^{p-1} of u'u^{-1} hits degree s-k at p = s-k+1,
            // and delta commutes with every already-final coefficient
            let p = (s - k + 1) as i32;
            let delta = e_diag.scale(C64::new(-1.0 / p as f64, 0.0));
            if delta.norm_max() > 0.0 {
                w.add_to_coeff(p, &delta);
                used = true;
            }
        }

        if used {
            current = current.gauge_by(&w, window_hi)?;
            u_total = w.mul_trunc(&u_total, cap + 1);
        }
    }

    // normal[l-1] is the z^{-l} coefficient of the normal form
    let lambda = normal[0].clone();
    let mut q_coeffs = Vec::with_capacity(k.saturating_sub(1));
    for l in 1..k {
        // N_{l+1} = -l q_l  =>  q_l = -N_{l+1} / l
        q_coeffs.push(normal[l].scale(C64::new(-1.0 / l as f64, 0.0)));
    }

    let ghat_full = u_total.mul_trunc(&MatSeries::constant(g0.clone(), 0), cap + 1);
    let next_term_norm = ghat_full.coeff(cap + 1).norm_fro();
    let ghat = ghat_full.rewindow(0, cap);

    Ok(FormalGauge {
        ghat,
        normal_form: FormalNormalForm { q_coeffs, lambda },
        next_term_norm,
    })
}

/// Formal diagonalisation of a bare principal part (zero holomorphic tail).
pub fn formal_diagonalize(part: &PrincipalPart, g0: &CMatrix, n_order: usize) -> Result<FormalGauge> {
    formal_diagonalize_series(&part.as_series(), g0, n_order)
}

/// Exponent of formal monodromy of a principal part seeded at g0. Cheap: only
/// the first k-1 sweep orders are needed.
pub fn formal_lambda(part: &PrincipalPart, g0: &CMatrix) -> Result<CMatrix> {
    let fg = formal_diagonalize(part, g0, part.order())?;
    Ok(fg.normal_form.lambda)
}
