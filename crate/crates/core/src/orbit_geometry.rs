//! Finite-dimensional symplectic geometry of the moduli spaces: jet groups
//! G_k = GL_n(C[zeta]/zeta^k), the trace-residue pairing on their duals,
//! coadjoint actions, extended orbits (framing, principal part) with their
//! explicit two-form, moment maps for the G and torus actions, the decoupling
//! isomorphism with T*G x O_B, and the reduced form on products of orbits.

use crate::connection_model::{formal_lambda, PrincipalPart};
use crate::error::{Error, Result};
use crate::matcore::{lstsq, residual_norm, CMatrix};
use crate::series::MatSeries;
use num_complex::Complex64 as C64;

/// Element of g_k* carried as polar coefficients, same shape as a principal part.
pub type DualElement = PrincipalPart;

/// Element of the jet group G_k: g_0 + g_1 zeta + ... + g_{k-1} zeta^{k-1},
/// g_0 invertible.
#[derive(Clone, Debug)]
pub struct JetGroupElement {
    coeffs: Vec<CMatrix>,
}

impl JetGroupElement {
    pub fn new(coeffs: Vec<CMatrix>) -> Result<Self> {
        if coeffs.is_empty() {
            return Err(Error::Invalid("jet group element needs a constant term".into()));
        }
        coeffs[0].inverse().map_err(|_| Error::Singular { context: "jet constant term".into() })?;
        Ok(JetGroupElement { coeffs })
    }

    pub fn identity(n: usize, k: usize) -> Self {
        let mut coeffs = vec![CMatrix::zeros(n); k];
        coeffs[0] = CMatrix::identity(n);
        JetGroupElement { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn rank(&self) -> usize {
        self.coeffs[0].dim()
    }

    pub fn constant_term(&self) -> &CMatrix {
        &self.coeffs[0]
    }

    pub fn coeffs(&self) -> &[CMatrix] {
        &self.coeffs
    }

    pub fn as_series(&self) -> MatSeries {
        MatSeries::from_coeffs(0, self.coeffs.clone())
    }

    pub fn inverse(&self) -> Result<JetGroupElement> {
        let k = self.order() as i32;
        let inv = self.as_series().inverse_trunc(k - 1)?;
        Ok(JetGroupElement { coeffs: (0..k).map(|d| inv.coeff(d)).collect() })
    }

    /// g(zeta)^{-1} X(zeta) truncated to the jet order.
    pub fn inverse_mul(&self, x: &JetAlgebraElement) -> Result<JetAlgebraElement> {
        let k = self.order() as i32;
        let gi = self.as_series().inverse_trunc(k - 1)?;
        let prod = gi.mul_trunc(&MatSeries::from_coeffs(0, x.coeffs.clone()), k - 1);
        Ok(JetAlgebraElement { coeffs: (0..k).map(|d| prod.coeff(d)).collect() })
    }
}

/// Element of the jet Lie algebra g_k: X_0 + X_1 zeta + ... + X_{k-1} zeta^{k-1}.
#[derive(Clone, Debug)]
pub struct JetAlgebraElement {
    pub coeffs: Vec<CMatrix>,
}

impl JetAlgebraElement {
    pub fn zero(n: usize, k: usize) -> Self {
        JetAlgebraElement { coeffs: vec![CMatrix::zeros(n); k] }
    }

    pub fn constant(x: CMatrix, k: usize) -> Self {
        let n = x.dim();
        let mut coeffs = vec![CMatrix::zeros(n); k];
        coeffs[0] = x;
        JetAlgebraElement { coeffs }
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    pub fn rank(&self) -> usize {
        self.coeffs[0].dim()
    }

    pub fn scale(&self, c: C64) -> JetAlgebraElement {
        JetAlgebraElement { coeffs: self.coeffs.iter().map(|m| m.scale(c)).collect() }
    }

    pub fn add(&self, other: &JetAlgebraElement) -> JetAlgebraElement {
        JetAlgebraElement {
            coeffs: self.coeffs.iter().zip(other.coeffs.iter()).map(|(a, b)| a + b).collect(),
        }
    }

    /// Coefficient-wise conjugation g X g^{-1} by a constant matrix.
    pub fn conj_by(&self, g: &CMatrix) -> Result<JetAlgebraElement> {
        let gi = g.inverse()?;
        Ok(JetAlgebraElement { coeffs: self.coeffs.iter().map(|x| g * x * &gi).collect() })
    }

    /// Jet commutator [X, Y], truncated to the common order.
    pub fn bracket(&self, other: &JetAlgebraElement) -> JetAlgebraElement {
        let k = self.order().min(other.order());
        let n = self.rank();
        let mut coeffs = vec![CMatrix::zeros(n); k];
        for p in 0..k {
            for q in 0..(k - p) {
                let term = self.coeffs[p].commutator(&other.coeffs[q]);
                coeffs[p + q] = &coeffs[p + q] + term;
            }
        }
        JetAlgebraElement { coeffs }
    }
}

/// <A, X> = Res_0 Tr(A(zeta) X(zeta)) = sum_{l=1..k} Tr(A_l X_{l-1}).
pub fn pairing(a: &DualElement, x: &JetAlgebraElement) -> Result<C64> {
    let k = a.order();
    if x.order() != k || x.rank() != a.rank() {
        return Err(Error::ShapeMismatch { context: "pairing".into() });
    }
    let mut s = C64::new(0.0, 0.0);
    for l in 1..=k {
        s += (a.coeff_of(l) * &x.coeffs[l - 1]).trace();
    }
    Ok(s)
}

/// Coadjoint action: the principal part of g(zeta) A(zeta) g(zeta)^{-1}.
pub fn coadjoint(g: &JetGroupElement, a: &DualElement) -> Result<DualElement> {
    let k = a.order();
    if g.rank() != a.rank() {
        return Err(Error::ShapeMismatch { context: "coadjoint".into() });
    }
    let gs = g.as_series();
    let gi = gs.inverse_trunc(k as i32 - 1)?;
    let prod = gs.mul_trunc(&a.as_series(), -1).mul_trunc(&gi, -1);
    let coeffs: Vec<CMatrix> = (1..=k).rev().map(|l| prod.coeff(-(l as i32))).collect();
    PrincipalPart::new(coeffs)
}

/// Ad_{g} X truncated to the jet algebra: g(zeta) X(zeta) g(zeta)^{-1}.
pub fn adjoint(g: &JetGroupElement, x: &JetAlgebraElement) -> Result<JetAlgebraElement> {
    let k = x.order() as i32;
    let gs = g.as_series();
    let gi = gs.inverse_trunc(k - 1)?;
    let prod = gs
        .mul_trunc(&MatSeries::from_coeffs(0, x.coeffs.clone()), k - 1)
        .mul_trunc(&gi, k - 1);
    Ok(JetAlgebraElement { coeffs: (0..k).map(|d| prod.coeff(d)).collect() })
}

/// A point (g_0, A) of an extended orbit.
#[derive(Clone, Debug)]
pub struct ExtendedOrbitPoint {
    pub g0: CMatrix,
    pub a: DualElement,
}

impl ExtendedOrbitPoint {
    pub fn rank(&self) -> usize {
        self.a.rank()
    }

    pub fn order(&self) -> usize {
        self.a.order()
    }
}

/// A tangent lift (X, Rdot): X in g_k, Rdot diagonal in t*. The ambient
/// tangent it represents is (g_0 X_0, [A, X] + g_0^{-1} Rdot g_0).
#[derive(Clone, Debug)]
pub struct TangentLift {
    pub x: JetAlgebraElement,
    pub rdot: CMatrix,
}

impl TangentLift {
    pub fn zero(n: usize, k: usize) -> Self {
        TangentLift { x: JetAlgebraElement::zero(n, k), rdot: CMatrix::zeros(n) }
    }

    pub fn scale(&self, c: C64) -> TangentLift {
        TangentLift { x: self.x.scale(c), rdot: self.rdot.scale(c) }
    }

    pub fn add(&self, other: &TangentLift) -> TangentLift {
        TangentLift { x: self.x.add(&other.x), rdot: &self.rdot + &other.rdot }
    }
}

/// Ambient tangent vector at an extended-orbit point.
#[derive(Clone, Debug)]
pub struct AmbientTangent {
    pub dg0: CMatrix,
    pub da: DualElement,
}

/// [A, X] in g_k*: coefficient of zeta^{-l} is sum_j [A_{l+j}, X_j].
pub fn coadjoint_inf(a: &DualElement, x: &JetAlgebraElement) -> Result<DualElement> {
    let k = a.order();
    if x.order() != k {
        return Err(Error::ShapeMismatch { context: "coadjoint_inf".into() });
    }
    let n = a.rank();
    let mut coeffs = Vec::with_capacity(k);
    for l in (1..=k).rev() {
        let mut acc = CMatrix::zeros(n);
        for j in 0..=(k - l) {
            acc = acc + a.coeff_of(l + j).commutator(&x.coeffs[j]);
        }
        coeffs.push(acc);
    }
    PrincipalPart::new(coeffs)
}

/// The ambient tangent of a lift at a point.
pub fn ambient_from_lift(pt: &ExtendedOrbitPoint, v: &TangentLift) -> Result<AmbientTangent> {
    let g0_inv = pt.g0.inverse()?;
    let mut da = coadjoint_inf(&pt.a, &v.x)?;
    let torus_term = &g0_inv * &v.rdot * &pt.g0;
    let k = pt.order();
    let mut coeffs: Vec<CMatrix> = da.coeffs().to_vec();
    coeffs[k - 1] = &coeffs[k - 1] + torus_term;
    da = PrincipalPart::new(coeffs)?;
    Ok(AmbientTangent { dg0: &pt.g0 * &v.x.coeffs[0], da })
}

/// Reconstruct a lift from an ambient tangent by least squares over
/// (X_1..X_{k-1}, Rdot); X_0 is forced by dg0. Fails when the ambient vector
/// is not tangent to the extended orbit within `tol` (relative).
pub fn lift_from_ambient(pt: &ExtendedOrbitPoint, amb: &AmbientTangent, tol: f64) -> Result<TangentLift> {
    let n = pt.rank();
    let k = pt.order();
    let g0_inv = pt.g0.inverse()?;
    let x0 = &g0_inv * &amb.dg0;

    // unknowns: X_1..X_{k-1} (n^2 each) then diag(Rdot) (n)
    let unknowns = (k - 1) * n * n + n;
    let mut rows: Vec<Vec<C64>> = Vec::with_capacity(k * n * n);
    let mut rhs: Vec<C64> = Vec::with_capacity(k * n * n);

    // basis responses: for each unknown, its contribution to [A,X] + g0^{-1} R g0
    let mut columns: Vec<DualElement> = Vec::with_capacity(unknowns);
    for j in 1..k {
        for r in 0..n {
            for c in 0..n {
                let mut x = JetAlgebraElement::zero(n, k);
                x.coeffs[j][(r, c)] = C64::new(1.0, 0.0);
                columns.push(coadjoint_inf(&pt.a, &x)?);
            }
        }
    }
    for d in 0..n {
        let mut rd = CMatrix::zeros(n);
        rd[(d, d)] = C64::new(1.0, 0.0);
        let term = &g0_inv * &rd * &pt.g0;
        let mut coeffs = vec![CMatrix::zeros(n); k];
        coeffs[k - 1] = term;
        columns.push(PrincipalPart::new(coeffs)?);
    }

    // target: da - [A, X0-part]
    let x0_jet = JetAlgebraElement::constant(x0.clone(), k);
    let from_x0 = coadjoint_inf(&pt.a, &x0_jet)?;
    let mut target: Vec<C64> = Vec::with_capacity(k * n * n);
    for l in (1..=k).rev() {
        let diff = amb.da.coeff_of(l) - from_x0.coeff_of(l);
        for r in 0..n {
            for c in 0..n {
                target.push(diff[(r, c)]);
            }
        }
    }
    for l_idx in 0..k {
        let l = k - l_idx; // same ordering as `target`
        for r in 0..n {
            for c in 0..n {
                let mut row = Vec::with_capacity(unknowns);
                for col in &columns {
                    row.push(col.coeff_of(l)[(r, c)]);
                }
                rows.push(row);
            }
        }
    }
    rhs.extend_from_slice(&target);

    let scale = pt.a.coeffs().iter().map(|m| m.norm_fro()).fold(1.0, f64::max)
        * (1.0 + amb.da.coeffs().iter().map(|m| m.norm_fro()).fold(0.0, f64::max));
    let sol = if unknowns > 0 { lstsq(&rows, &rhs)? } else { vec![] };
    let resid = residual_norm(&rows, &sol, &rhs);
    if resid > tol * scale.max(1.0) {
        return Err(Error::Invalid(format!(
            "ambient vector not tangent to the extended orbit (residual {resid:.3e})"
        )));
    }

    let mut x = JetAlgebraElement::zero(n, k);
    x.coeffs[0] = x0;
    let mut idx = 0usize;
    for j in 1..k {
        for r in 0..n {
            for c in 0..n {
                x.coeffs[j][(r, c)] = sol[idx];
                idx += 1;
            }
        }
    }
    let mut rdot = CMatrix::zeros(n);
    for d in 0..n {
        rdot[(d, d)] = sol[idx];
        idx += 1;
    }
    Ok(TangentLift { x, rdot })
}

/// Surjective winding map (g, R) -> (g(0), Ad*_{g^{-1}}(A0 + R)) onto the
/// extended orbit over the diagonal irregular type A0.
pub fn winding(g: &JetGroupElement, r: &CMatrix, a0: &DualElement) -> Result<ExtendedOrbitPoint> {
    let k = a0.order();
    let n = a0.rank();
    if r.dim() != n {
        return Err(Error::ShapeMismatch { context: "winding residue".into() });
    }
    let mut coeffs: Vec<CMatrix> = a0.coeffs().to_vec();
    coeffs[k - 1] = &coeffs[k - 1] + r;
    let shifted = PrincipalPart::new(coeffs)?;
    let gi = g.inverse()?;
    let a = coadjoint(&gi, &shifted)?;
    Ok(ExtendedOrbitPoint { g0: g.constant_term().clone(), a })
}

/// The explicit symplectic form on lifts:
/// omega(v1, v2) = <Rdot_1, X~_2> - <Rdot_2, X~_1> + <A, [X_1, X_2]>
/// with X~_i = g_0 X_i g_0^{-1} and <R, X~> = Tr(R X~(0)).
pub fn omega_extended(pt: &ExtendedOrbitPoint, v1: &TangentLift, v2: &TangentLift) -> Result<C64> {
    let k = pt.order();
    if v1.x.order() != k || v2.x.order() != k {
        return Err(Error::ShapeMismatch { context: "omega_extended lifts".into() });
    }
    let x1t = v1.x.conj_by(&pt.g0)?;
    let x2t = v2.x.conj_by(&pt.g0)?;
    let t1 = (&v1.rdot * &x2t.coeffs[0]).trace();
    let t2 = (&v2.rdot * &x1t.coeffs[0]).trace();
    let t3 = pairing(&pt.a, &v1.x.bracket(&v2.x))?;
    Ok(t1 - t2 + t3)
}

/// Moment maps: mu_G = residue of A, mu_T = -Lambda with Lambda the exponent
/// of formal monodromy read off through the framing.
pub fn moments(pt: &ExtendedOrbitPoint) -> Result<(CMatrix, CMatrix)> {
    let mu_g = pt.a.residue().clone();
    let lambda = if pt.order() == 1 {
        let d = pt.a.residue().conjugate_by(&pt.g0)?;
        if !d.is_diagonal(1e-8 * d.norm_fro().max(1.0)) {
            return Err(Error::Invalid(
                "simple-pole point is off the extended orbit: g0 A g0^{-1} not diagonal".into(),
            ));
        }
        d.diag_part()
    } else {
        formal_lambda(&pt.a, &pt.g0)?
    };
    Ok((mu_g, lambda.scale(C64::new(-1.0, 0.0))))
}

/// Decoupled presentation (g_0, S, B) in T*G x O_B.
#[derive(Clone, Debug)]
pub struct DecoupledPoint {
    pub g0: CMatrix,
    /// Residue component S = pi_res(A), an element of g*.
    pub s: CMatrix,
    /// Irregular component B = pi_irr(g0 A g0^{-1}): coefficients of
    /// zeta^{-k}..zeta^{-2} (leading first), residue slot zero.
    pub b: DualElement,
}

/// The decoupling isomorphism (k >= 2 only).
pub fn decouple(pt: &ExtendedOrbitPoint) -> Result<DecoupledPoint> {
    let k = pt.order();
    if k < 2 {
        return Err(Error::SimplePoleUnsupported);
    }
    let n = pt.rank();
    let mut b_coeffs = Vec::with_capacity(k);
    for l in (1..=k).rev() {
        if l == 1 {
            b_coeffs.push(CMatrix::zeros(n));
        } else {
            b_coeffs.push(pt.a.coeff_of(l).conjugate_by(&pt.g0)?);
        }
    }
    Ok(DecoupledPoint {
        g0: pt.g0.clone(),
        s: pt.a.residue().clone(),
        b: PrincipalPart::new(b_coeffs)?,
    })
}

/// Inverse of `decouple`: (g_0, S, B) -> (g_0, g_0^{-1} B g_0 + S).
pub fn recouple(dp: &DecoupledPoint) -> Result<ExtendedOrbitPoint> {
    let k = dp.b.order();
    let g0_inv = dp.g0.inverse()?;
    let mut coeffs = Vec::with_capacity(k);
    for l in (1..=k).rev() {
        if l == 1 {
            coeffs.push(dp.s.clone());
        } else {
            coeffs.push(&g0_inv * dp.b.coeff_of(l) * &dp.g0);
        }
    }
    Ok(ExtendedOrbitPoint { g0: dp.g0.clone(), a: PrincipalPart::new(coeffs)? })
}

/// Left-trivialised canonical two-form on T*G at (g, S) evaluated on
/// tangents (xi_i, Sdot_i), xi = g^{-1} g_dot:
/// omega = <Sdot_1, xi_2> - <Sdot_2, xi_1> - <S, [xi_1, xi_2]>.
pub fn omega_cotangent(
    s: &CMatrix,
    xi1: &CMatrix,
    sdot1: &CMatrix,
    xi2: &CMatrix,
    sdot2: &CMatrix,
) -> C64 {
    (sdot1 * xi2).trace() - (sdot2 * xi1).trace() - (s * xi1.commutator(xi2)).trace()
}

/// Kostant-Kirillov form on a B_k coadjoint orbit at B evaluated on
/// coadjoint tangents [B, Y_i] for Y_i in b_k (no constant term):
/// omega = <B, [Y_1, Y_2]>.
pub fn omega_orbit_b(b: &DualElement, y1: &JetAlgebraElement, y2: &JetAlgebraElement) -> Result<C64> {
    pairing(b, &y1.bracket(y2))
}

/// Membership test for an extended orbit over the reference irregular type
/// `q_ref` (the q-coefficients of the diagonal normal form): the framing must
/// diagonalise the leading term and the normal form's irregular part must
/// match the reference within `tol`.
pub fn orbit_membership(pt: &ExtendedOrbitPoint, q_ref: &[CMatrix], tol: f64) -> Result<f64> {
    if pt.order() == 1 {
        let d = pt.a.residue().conjugate_by(&pt.g0)?;
        let off = d.offdiag_part().norm_fro();
        if off > tol * d.norm_fro().max(1.0) {
            return Err(Error::Invalid(format!("k=1 membership: off-diagonal {off:.3e}")));
        }
        // eigenvalues distinct mod Z
        let vals = d.diagonal();
        for i in 0..vals.len() {
            for j in (i + 1)..vals.len() {
                let diff = vals[i] - vals[j];
                let dist = (diff - C64::new(diff.re.round(), 0.0)).norm();
                if dist < 1e-8 {
                    return Err(Error::Invalid("k=1 membership: eigenvalues collide mod Z".into()));
                }
            }
        }
        return Ok(off);
    }
    let fg = crate::connection_model::formal_diagonalize(&pt.a, &pt.g0, pt.order())?;
    let mut defect = 0.0f64;
    for (q, qr) in fg.normal_form.q_coeffs.iter().zip(q_ref.iter()) {
        defect = defect.max((q - qr).norm_fro());
    }
    if defect > tol {
        return Err(Error::Invalid(format!("irregular type differs from reference by {defect:.3e}")));
    }
    Ok(defect)
}

/// Reduced two-form on the product of extended orbits at the moment-zero
/// level over the slice `first g_0 = 1`: the sum of the per-pole forms on the
/// given lift pairs. `guard_tol` bounds the accepted violation of the level
/// and slice constraints (relative to the data scale).
pub fn moduli_form(
    points: &[ExtendedOrbitPoint],
    lifts1: &[TangentLift],
    lifts2: &[TangentLift],
    guard_tol: f64,
) -> Result<C64> {
    if points.is_empty() || points.len() != lifts1.len() || points.len() != lifts2.len() {
        return Err(Error::ShapeMismatch { context: "moduli_form arity".into() });
    }
    let n = points[0].rank();
    let scale = points
        .iter()
        .flat_map(|p| p.a.coeffs().iter())
        .map(|m| m.norm_fro())
        .fold(1.0, f64::max);

    let slice_defect = (&points[0].g0 - CMatrix::identity(n)).norm_fro();
    if slice_defect > guard_tol * scale {
        return Err(Error::OffSlice { norm: slice_defect });
    }
    let mut res_sum = CMatrix::zeros(n);
    for p in points {
        res_sum = res_sum + p.a.residue().clone();
    }
    if res_sum.norm_fro() > guard_tol * scale {
        return Err(Error::OffLevelSet { norm: res_sum.norm_fro() });
    }
    for lifts in [lifts1, lifts2] {
        let mut tangent_sum = CMatrix::zeros(n);
        for (p, v) in points.iter().zip(lifts.iter()) {
            tangent_sum = tangent_sum + ambient_from_lift(p, v)?.da.residue().clone();
        }
        if tangent_sum.norm_fro() > guard_tol * scale {
            return Err(Error::OffLevelSet { norm: tangent_sum.norm_fro() });
        }
    }

    let mut total = C64::new(0.0, 0.0);
    for ((p, v1), v2) in points.iter().zip(lifts1.iter()).zip(lifts2.iter()) {
        total += omega_extended(p, v1, v2)?;
    }
    Ok(total)
}

/// Constant lift (X = xi, Rdot = 0) generating the G action
/// h(g0, A) = (g0 h^{-1}, h A h^{-1}) along h = exp(-t xi); oriented so that
/// d<mu_G, xi>(v) = omega(v, fundamental_lift(xi)).
pub fn fundamental_lift(xi: &CMatrix, k: usize) -> TangentLift {
    TangentLift {
        x: JetAlgebraElement::constant(xi.clone(), k),
        rdot: CMatrix::zeros(xi.dim()),
    }
}

/// Rank of the lift-to-ambient-tangent map at a point; equals
/// dim O + 2n = n^2 k - n k + 2n on the extended orbit.
pub fn lift_map_rank(pt: &ExtendedOrbitPoint) -> Result<usize> {
    let (rank, _) = lift_map_rank_and_kernel(pt)?;
    Ok(rank)
}

/// Rank plus kernel directions (stabiliser lifts with zero ambient velocity).
pub fn lift_map_rank_and_kernel(pt: &ExtendedOrbitPoint) -> Result<(usize, Vec<TangentLift>)> {
    let n = pt.rank();
    let k = pt.order();
    let in_dim = k * n * n + n;
    let out_dim = n * n + k * n * n;
    let mut cols: Vec<Vec<C64>> = Vec::with_capacity(in_dim);
    let mut basis: Vec<TangentLift> = Vec::with_capacity(in_dim);
    for j in 0..k {
        for r in 0..n {
            for c in 0..n {
                let mut v = TangentLift::zero(n, k);
                v.x.coeffs[j][(r, c)] = C64::new(1.0, 0.0);
                basis.push(v);
            }
        }
    }
    for d in 0..n {
        let mut v = TangentLift::zero(n, k);
        v.rdot[(d, d)] = C64::new(1.0, 0.0);
        basis.push(v);
    }
    for v in &basis {
        let amb = ambient_from_lift(pt, v)?;
        let mut col = Vec::with_capacity(out_dim);
        for r in 0..n {
            for c in 0..n {
                col.push(amb.dg0[(r, c)]);
            }
        }
        for l in (1..=k).rev() {
            let m = amb.da.coeff_of(l);
            for r in 0..n {
                for c in 0..n {
                    col.push(m[(r, c)]);
                }
            }
        }
        cols.push(col);
    }
    // transpose into rows-of-the-map layout
    let rows: Vec<Vec<C64>> = (0..out_dim)
        .map(|r| (0..in_dim).map(|c| cols[c][r]).collect())
        .collect();
    let (rank, nullspace) = crate::matcore::rank_and_nullspace(&rows, 1e-9);
    let kernel = nullspace
        .into_iter()
        .map(|vec| {
            let mut v = TangentLift::zero(n, k);
            let mut idx = 0;
            for j in 0..k {
                for r in 0..n {
                    for c in 0..n {
                        v.x.coeffs[j][(r, c)] = vec[idx];
                        idx += 1;
                    }
                }
            }
            for d in 0..n {
                v.rdot[(d, d)] = vec[idx];
                idx += 1;
            }
            v
        })
        .collect();
    Ok((rank, kernel))
}
