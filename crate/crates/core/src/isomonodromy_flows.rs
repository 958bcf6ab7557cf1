//! Isomonodromic deformation flows: the Schlesinger system on simple-pole
//! configurations and the general deformation equations driven by the
//! rational one-form Omega, as flows on (principal parts, framings) over the
//! space of pole positions and irregular types.
//!
//! Conventions: all poles finite; the one-form is normalised with zero
//! constant term in this chart, so on the all-simple-pole stratum the
//! equations are literally Schlesinger's. Framings evolve by the gauge
//! intertwining equation d_t ghat = ghat Omega - A0_t ghat read off at
//! order zero; the first framing therefore drifts off the identity slice
//! along a flow and comparisons re-gauge by a global conjugation.

use crate::connection_model::{
    formal_diagonalize_series, validate, CompatibleFraming, MeromorphicConnection, PrincipalPart,
};
use crate::error::{Error, Result};
use crate::matcore::{eig_distinct, CMatrix};
use crate::monodromy_numeric::{MonodromyEngine, NumericParams, Tentacles};
use crate::orbit_geometry::{
    ambient_from_lift, lift_from_ambient, moduli_form, AmbientTangent, ExtendedOrbitPoint,
    TangentLift,
};
use crate::series::MatSeries;
use num_complex::Complex64 as C64;

/// A point of the bundle of extended moduli spaces: deformation parameters
/// (pole positions, irregular types) together with the moving data
/// (principal parts, compatible framings).
#[derive(Clone, Debug)]
pub struct FlowState {
    pub positions: Vec<C64>,
    /// Per pole: diagonal coefficients q_1..q_{k-1} of Q (empty for k = 1).
    pub irregular: Vec<Vec<CMatrix>>,
    pub parts: Vec<PrincipalPart>,
    pub framings: Vec<CMatrix>,
}

/// Tangent to the deformation parameters.
#[derive(Clone, Debug)]
pub struct DeformationTangent {
    pub da: Vec<C64>,
    pub dq: Vec<Vec<CMatrix>>,
}

impl DeformationTangent {
    pub fn zero_like(state: &FlowState) -> Self {
        DeformationTangent {
            da: vec![C64::new(0.0, 0.0); state.positions.len()],
            dq: state
                .irregular
                .iter()
                .map(|q| q.iter().map(|c| CMatrix::zeros(c.dim())).collect())
                .collect(),
        }
    }
}

/// Derivative of the moving data.
#[derive(Clone, Debug)]
pub struct StateDerivative {
    /// Per pole, leading-first polar coefficient velocities.
    pub parts_dot: Vec<Vec<CMatrix>>,
    pub framings_dot: Vec<CMatrix>,
}

impl FlowState {
    pub fn rank(&self) -> usize {
        self.parts[0].rank()
    }

    pub fn num_poles(&self) -> usize {
        self.positions.len()
    }

    pub fn connection(&self) -> Result<MeromorphicConnection> {
        MeromorphicConnection::new(self.positions.clone(), self.parts.clone())
    }

    pub fn framing_set(&self) -> CompatibleFraming {
        CompatibleFraming { framings: self.framings.clone() }
    }

    /// Validate: the connection is generic with zero residue sum, framings
    /// are compatible, the declared irregular types match the normal forms of
    /// the principal parts, and the first framing is the identity.
    pub fn validate(&self) -> Result<()> {
        let conn = self.connection()?;
        let report = validate(&conn);
        if !report.passes {
            return Err(Error::Invalid(format!(
                "flow state connection invalid (residue sum {:.3e})",
                report.residue_sum_norm
            )));
        }
        self.framing_set().check(&conn)?;
        for (i, part) in self.parts.iter().enumerate() {
            let fg = crate::connection_model::formal_diagonalize(part, &self.framings[i], part.order())?;
            for (q, qd) in fg.normal_form.q_coeffs.iter().zip(self.irregular[i].iter()) {
                if (q - qd).norm_fro() > 1e-8 * (1.0 + qd.norm_fro()) {
                    return Err(Error::Invalid(format!(
                        "declared irregular type at pole {i} does not match the principal part"
                    )));
                }
            }
        }
        let n = self.rank();
        let slice = (&self.framings[0] - CMatrix::identity(n)).norm_fro();
        if slice > 1e-9 {
            return Err(Error::OffSlice { norm: slice });
        }
        Ok(())
    }

    /// Apply the global gauge h(g0, A) = (g0 h^{-1}, h A h^{-1}) with
    /// h = first framing, returning to the identity slice.
    pub fn gauged_to_slice(&self) -> Result<FlowState> {
        let h = self.framings[0].clone();
        let h_inv = h.inverse()?;
        Ok(FlowState {
            positions: self.positions.clone(),
            irregular: self.irregular.clone(),
            parts: self.parts.iter().map(|p| p.map(|m| &h * m * &h_inv)).collect(),
            framings: self.framings.iter().map(|g| g * &h_inv).collect(),
        })
    }

    /// Exponents of formal monodromy at each pole (should be flow-invariant).
    /// Framings are refitted first, so slightly off-manifold flow outputs are
    /// acceptable.
    pub fn lambdas(&self) -> Result<Vec<CMatrix>> {
        let mut out = Vec::with_capacity(self.num_poles());
        for (part, g0) in self.parts.iter().zip(self.framings.iter()) {
            let g = refit_framing(g0, part.leading())?;
            out.push(crate::connection_model::formal_lambda(part, &g)?);
        }
        Ok(out)
    }

    /// The per-pole extended orbit points (framing, principal part).
    pub fn orbit_points(&self) -> Vec<ExtendedOrbitPoint> {
        self.framings
            .iter()
            .zip(self.parts.iter())
            .map(|(g0, a)| ExtendedOrbitPoint { g0: g0.clone(), a: a.clone() })
            .collect()
    }
}

fn check_pole_gaps(positions: &[C64]) -> Result<()> {
    for i in 0..positions.len() {
        for j in (i + 1)..positions.len() {
            let dist = (positions[i] - positions[j]).norm();
            if dist < 1e-10 {
                return Err(Error::PoleCollision { i, j, dist });
            }
        }
    }
    Ok(())
}

/// Schlesinger right-hand side on the all-simple-pole stratum:
/// dA_i/da_j = [A_i, A_j]/(a_i - a_j) for i != j and
/// dA_i/da_i = -sum_{j != i} [A_i, A_j]/(a_i - a_j).
pub fn schlesinger_rhs(state: &FlowState) -> Result<Vec<Vec<CMatrix>>> {
    let m = state.num_poles();
    let n = state.rank();
    if state.parts.iter().any(|p| p.order() != 1) {
        return Err(Error::Invalid("schlesinger_rhs needs all simple poles".into()));
    }
    check_pole_gaps(&state.positions)?;
    let a: Vec<&CMatrix> = state.parts.iter().map(|p| p.residue()).collect();
    let mut table = vec![vec![CMatrix::zeros(n); m]; m];
    for i in 0..m {
        for j in 0..m {
            if i == j {
                continue;
            }
            let comm = a[i].commutator(a[j]);
            let denom = state.positions[i] - state.positions[j];
            table[i][j] = comm.scale(C64::new(1.0, 0.0) / denom);
        }
        let mut self_term = CMatrix::zeros(n);
        for j in 0..m {
            if j != i {
                self_term = self_term + table[i][j].clone();
            }
        }
        table[i][i] = self_term.scale(C64::new(-1.0, 0.0));
    }
    Ok(table)
}

/// Per-pole local data recomputed at the current state.
struct PoleLocal {
    /// Gauge series with the holomorphic tail of the other poles (order N).
    ghat: MatSeries,
    ghat_inv: MatSeries,
    lambda: CMatrix,
    q_coeffs: Vec<CMatrix>,
}

/// Snap a framing onto exact compatibility with the leading coefficient,
/// preserving the current diagonal ordering. Off-manifold states (Runge-Kutta
/// stages sit O(h^2) off) are thereby handled by a smooth extension of the
/// vector field.
pub fn refit_framing(g0: &CMatrix, leading: &CMatrix) -> Result<CMatrix> {
    let b = leading.conjugate_by(g0)?;
    let off = b.offdiag_part().norm_fro();
    if off <= 1e-13 * b.norm_fro().max(1.0) {
        return Ok(g0.clone());
    }
    let n = b.dim();
    let eig = eig_distinct(&b)?;
    // assign each eigencolumn to its dominant row; near-diagonal input makes
    // this a permutation
    let mut assign = vec![usize::MAX; n];
    for j in 0..n {
        let mut best = (0usize, -1.0f64);
        for r in 0..n {
            let v = eig.vectors[(r, j)].norm();
            if v > best.1 {
                best = (r, v);
            }
        }
        assign[j] = best.0;
    }
    {
        let mut seen = vec![false; n];
        for &a in &assign {
            if seen[a] {
                return Err(Error::GenericityLost {
                    context: "framing refit: ambiguous eigenvector assignment".into(),
                });
            }
            seen[a] = true;
        }
    }
    let mut v = CMatrix::zeros(n);
    for j in 0..n {
        let target = assign[j];
        let pivot = eig.vectors[(target, j)];
        for r in 0..n {
            v[(r, target)] = eig.vectors[(r, j)] / pivot;
        }
    }
    Ok(v.inverse()? * g0)
}

/// Refit every framing of a state (no-op on exactly compatible states).
pub fn refit_framings(state: &FlowState) -> Result<CompatibleFraming> {
    let mut framings = Vec::with_capacity(state.num_poles());
    for (g0, part) in state.framings.iter().zip(state.parts.iter()) {
        framings.push(refit_framing(g0, part.leading())?);
    }
    Ok(CompatibleFraming { framings })
}

fn pole_locals(state: &FlowState, extra: usize) -> Result<Vec<PoleLocal>> {
    let conn = state.connection()?;
    let mut out = Vec::with_capacity(state.num_poles());
    for i in 0..state.num_poles() {
        let k = state.parts[i].order();
        let n_order = k + extra;
        let local = conn.local_expansion(i, n_order as i32);
        let g0 = refit_framing(&state.framings[i], state.parts[i].leading())?;
        let fg = formal_diagonalize_series(&local, &g0, n_order)?;
        let ghat_inv = fg.ghat.inverse_trunc(n_order as i32)?;
        out.push(PoleLocal {
            ghat: fg.ghat,
            ghat_inv,
            lambda: fg.normal_form.lambda,
            q_coeffs: fg.normal_form.q_coeffs,
        });
    }
    Ok(out)
}

/// Delta-component of the standard diagonal connection contracted with the
/// tangent, as a Laurent series at pole i: orders z^{-k}..z^{-1} of
/// adot (dQ/da) + Qdot - Lambda adot / z.
fn diagonal_deformation_series(
    local: &PoleLocal,
    k: usize,
    da: C64,
    dq: &[CMatrix],
) -> MatSeries {
    let n = local.lambda.dim();
    let mut s = MatSeries::zero(n, -(k as i32), -1);
    // d/da (q_l (z-a)^{-l}) = l q_l (z-a)^{-l-1}
    for (idx, q) in local.q_coeffs.iter().enumerate() {
        let l = (idx + 1) as i32;
        s.add_to_coeff(-l - 1, &q.scale(da * C64::new(l as f64, 0.0)));
    }
    for (idx, qd) in dq.iter().enumerate() {
        let l = (idx + 1) as i32;
        s.add_to_coeff(-l, qd);
    }
    s.add_to_coeff(-1, &local.lambda.scale(-da));
    s
}

/// The principal parts of Omega . t: per pole, leading-first coefficients of
/// PP_{z_i}(ghat^{-1} (A0_t) ghat). The chart normalisation puts no constant
/// term, so the sum of these rational terms is the whole one-form.
fn omega_principal_parts(
    state: &FlowState,
    locals: &[PoleLocal],
    t: &DeformationTangent,
) -> Vec<Vec<CMatrix>> {
    let m = state.num_poles();
    let mut out = Vec::with_capacity(m);
    for i in 0..m {
        let k = state.parts[i].order();
        let dts = diagonal_deformation_series(&locals[i], k, t.da[i], &t.dq[i]);
        let conj = locals[i]
            .ghat_inv
            .mul_trunc(&dts, -1)
            .mul_trunc(&locals[i].ghat, -1);
        let coeffs: Vec<CMatrix> = (1..=k).rev().map(|l| conj.coeff(-(l as i32))).collect();
        out.push(coeffs);
    }
    out
}

/// Evaluate a sum of polar parts (leading-first per pole) at a point.
fn evaluate_polar(positions: &[C64], parts: &[Vec<CMatrix>], n: usize, z: C64) -> Result<CMatrix> {
    let mut out = CMatrix::zeros(n);
    for (a, coeffs) in positions.iter().zip(parts.iter()) {
        let w = z - a;
        if w.norm() < 1e-13 {
            return Err(Error::PoleEvaluation { at: format!("{z}") });
        }
        let winv = C64::new(1.0, 0.0) / w;
        let mut acc = CMatrix::zeros(n);
        for c in coeffs {
            acc = acc.scale(winv) + c.clone();
        }
        out = out + acc.scale(winv);
    }
    Ok(out)
}

/// Local Laurent expansion at pole i of a sum of polar parts.
fn local_expand_polar(
    positions: &[C64],
    parts: &[Vec<CMatrix>],
    n: usize,
    i: usize,
    max_deg: i32,
) -> MatSeries {
    let k = parts[i].len() as i32;
    let mut out = MatSeries::zero(n, -k, max_deg);
    for (idx, c) in parts[i].iter().enumerate() {
        out.add_to_coeff(-(k - idx as i32), c);
    }
    for (j, (a_j, coeffs)) in positions.iter().zip(parts.iter()).enumerate() {
        if j == i {
            continue;
        }
        let c = positions[i] - a_j;
        let cinv = C64::new(1.0, 0.0) / c;
        for (idx, coeff) in coeffs.iter().enumerate() {
            let l = coeffs.len() - idx;
            let mut binom = 1.0f64;
            let mut cpow = c.powi(-(l as i32));
            for mdeg in 0..=max_deg.max(0) {
                if mdeg > 0 {
                    binom *= (l as f64 + mdeg as f64 - 1.0) / mdeg as f64;
                    cpow *= cinv;
                }
                let sign = if mdeg % 2 == 0 { 1.0 } else { -1.0 };
                out.add_to_coeff(mdeg, &coeff.scale(cpow * C64::new(sign * binom, 0.0)));
            }
        }
    }
    out
}

/// Omega contracted with a deformation tangent, evaluated at z.
pub fn jmu_one_form(state: &FlowState, t: &DeformationTangent, z: C64) -> Result<CMatrix> {
    let locals = pole_locals(state, 3)?;
    let pp = omega_principal_parts(state, &locals, t);
    evaluate_polar(&state.positions, &pp, state.rank(), z)
}

/// Time derivative of the framing at pole i induced by the flow. The gauge
/// intertwining d_t ghat = (A0_t) ghat - ghat (Omega . t) holds coefficient
/// by coefficient once Lambda is constant, and the z_i-motion contributes
/// ghat_1 adot to the constant term:
/// gdot_0 = ghat_1 adot + [D_t ghat - ghat Omega_loc]_0.
fn framing_velocity(
    state: &FlowState,
    locals: &[PoleLocal],
    omega_pp: &[Vec<CMatrix>],
    i: usize,
    t: &DeformationTangent,
) -> CMatrix {
    let n = state.rank();
    let k = state.parts[i].order();
    let window = locals[i].ghat.max_deg();
    let omega_loc = local_expand_polar(&state.positions, omega_pp, n, i, window);
    let dts = diagonal_deformation_series(&locals[i], k, t.da[i], &t.dq[i]);
    let term = dts
        .mul_trunc(&locals[i].ghat, 1)
        .sub(&locals[i].ghat.mul_trunc(&omega_loc, 1));
    locals[i].ghat.coeff(1).scale(t.da[i]) + term.coeff(0)
}

/// The connection d_Delta - Theta_i induced on the polar divisor, pulled to
/// the deformation base and contracted with the tangent; framings evolve by
/// gdot_0 = -g_0 Theta_i.
pub fn theta_induced(state: &FlowState, i: usize, t: &DeformationTangent) -> Result<CMatrix> {
    let locals = pole_locals(state, 3)?;
    let pp = omega_principal_parts(state, &locals, t);
    let gdot = framing_velocity(state, &locals, &pp, i, t);
    let g0_inv = state.framings[i].inverse()?;
    Ok((g0_inv * gdot).scale(C64::new(-1.0, 0.0)))
}

/// Full deformation right-hand side: polar-coefficient velocities from
/// d_t A = d_z Omega - [A, Omega] (with the pole-motion term removed) and
/// framing velocities keeping the framings good.
pub fn jmu_rhs(state: &FlowState, t: &DeformationTangent) -> Result<StateDerivative> {
    check_pole_gaps(&state.positions)?;
    let m = state.num_poles();
    let n = state.rank();
    let locals = pole_locals(state, 3)?;
    let omega_pp = omega_principal_parts(state, &locals, t);
    let conn = state.connection()?;

    let mut parts_dot = Vec::with_capacity(m);
    for i in 0..m {
        let k = state.parts[i].order();
        let window = (k as i32) + 2;
        let a_loc = conn.local_expansion(i, window);
        let omega_loc = local_expand_polar(&state.positions, &omega_pp, n, i, window);
        let d_omega = omega_loc.derivative();
        let bracket = a_loc
            .mul_trunc(&omega_loc, 0)
            .sub(&omega_loc.mul_trunc(&a_loc, 0));
        let rhs_series = d_omega.sub(&bracket);
        // coefficient of z^{-q}, minus the pole-motion term (q-1) A_{q-1} adot
        let mut coeffs = Vec::with_capacity(k);
        for l in (1..=k).rev() {
            let mut c = rhs_series.coeff(-(l as i32));
            if l >= 2 {
                c = c - state.parts[i].coeff_of(l - 1).scale(t.da[i] * C64::new((l - 1) as f64, 0.0));
            }
            coeffs.push(c);
        }
        parts_dot.push(coeffs);
    }

    let mut framings_dot = Vec::with_capacity(m);
    for i in 0..m {
        framings_dot.push(framing_velocity(state, &locals, &omega_pp, i, t));
    }
    Ok(StateDerivative { parts_dot, framings_dot })
}

/// A vertex of a deformation path: target positions and irregular types.
#[derive(Clone, Debug)]
pub struct DeformationPoint {
    pub positions: Vec<C64>,
    pub irregular: Vec<Vec<CMatrix>>,
}

impl DeformationPoint {
    pub fn of(state: &FlowState) -> Self {
        DeformationPoint {
            positions: state.positions.clone(),
            irregular: state.irregular.clone(),
        }
    }
}

fn pack(state: &FlowState) -> Vec<C64> {
    let mut v = Vec::new();
    for part in &state.parts {
        for c in part.coeffs() {
            for r in 0..c.dim() {
                for s in 0..c.dim() {
                    v.push(c[(r, s)]);
                }
            }
        }
    }
    for g in &state.framings {
        for r in 0..g.dim() {
            for s in 0..g.dim() {
                v.push(g[(r, s)]);
            }
        }
    }
    v
}

fn unpack(template: &FlowState, positions: Vec<C64>, irregular: Vec<Vec<CMatrix>>, v: &[C64]) -> FlowState {
    let n = template.rank();
    let mut idx = 0usize;
    let mut parts = Vec::with_capacity(template.num_poles());
    for part in &template.parts {
        let mut coeffs = Vec::with_capacity(part.order());
        for _ in 0..part.order() {
            let mut mtx = CMatrix::zeros(n);
            for r in 0..n {
                for s in 0..n {
                    mtx[(r, s)] = v[idx];
                    idx += 1;
                }
            }
            coeffs.push(mtx);
        }
        parts.push(PrincipalPart::new(coeffs).expect("unpack principal part"));
    }
    let mut framings = Vec::with_capacity(template.num_poles());
    for _ in 0..template.num_poles() {
        let mut mtx = CMatrix::zeros(n);
        for r in 0..n {
            for s in 0..n {
                mtx[(r, s)] = v[idx];
                idx += 1;
            }
        }
        framings.push(mtx);
    }
    FlowState { positions, irregular, parts, framings }
}

fn pack_derivative(der: &StateDerivative, n: usize) -> Vec<C64> {
    let mut v = Vec::new();
    for coeffs in &der.parts_dot {
        for c in coeffs {
            for r in 0..n {
                for s in 0..n {
                    v.push(c[(r, s)]);
                }
            }
        }
    }
    for g in &der.framings_dot {
        for r in 0..n {
            for s in 0..n {
                v.push(g[(r, s)]);
            }
        }
    }
    v
}

fn lerp_positions(p0: &DeformationPoint, p1: &DeformationPoint, s: f64) -> (Vec<C64>, Vec<Vec<CMatrix>>) {
    let w = C64::new(s, 0.0);
    let positions = p0
        .positions
        .iter()
        .zip(p1.positions.iter())
        .map(|(a, b)| a + (b - a) * w)
        .collect();
    let irregular = p0
        .irregular
        .iter()
        .zip(p1.irregular.iter())
        .map(|(qa, qb)| {
            qa.iter()
                .zip(qb.iter())
                .map(|(x, y)| x + (y - x.clone()).scale(w))
                .collect()
        })
        .collect();
    (positions, irregular)
}

/// Adaptive RK45 (Cash-Karp weights) on the packed state along one edge of
/// the deformation path.
fn flow_edge(state: &FlowState, p0: &DeformationPoint, p1: &DeformationPoint, tol: f64) -> Result<FlowState> {
    let n = state.rank();
    let tangent = DeformationTangent {
        da: p0
            .positions
            .iter()
            .zip(p1.positions.iter())
            .map(|(a, b)| b - a)
            .collect(),
        dq: p0
            .irregular
            .iter()
            .zip(p1.irregular.iter())
            .map(|(qa, qb)| qa.iter().zip(qb.iter()).map(|(x, y)| y - x.clone()).collect())
            .collect(),
    };

    let deriv = |s: f64, y: &[C64]| -> Result<Vec<C64>> {
        let (positions, irregular) = lerp_positions(p0, p1, s);
        let st = unpack(state, positions, irregular, y);
        let der = jmu_rhs(&st, &tangent)?;
        Ok(pack_derivative(&der, n))
    };

    let mut y = pack(state);
    let mut s = 0.0f64;
    let mut h = 0.05f64;
    let mut rejected = 0usize;
    while s < 1.0 {
        if h < 1e-10 {
            return Err(Error::StepUnderflow { at: format!("deformation parameter s = {s}") });
        }
        if s + h > 1.0 {
            h = 1.0 - s;
        }
        match rk45_step(&deriv, s, &y, h) {
            Ok((y5, err)) => {
                let scale: f64 = tol * (1.0 + y.iter().map(|x| x.norm_sqr()).sum::<f64>().sqrt());
                if err <= scale * h.max(1e-3) {
                    s += h;
                    y = y5;
                    rejected = 0;
                    let grow = 0.9 * (scale * h.max(1e-3) / err.max(1e-300)).powf(0.2);
                    h *= grow.clamp(0.3, 4.0);
                } else {
                    rejected += 1;
                    if rejected > 40 {
                        return Err(Error::StepUnderflow { at: format!("s = {s}") });
                    }
                    h *= 0.5;
                }
            }
            Err(e) => match e {
                Error::PoleCollision { .. } | Error::GenericityLost { .. } => return Err(e),
                _ => {
                    rejected += 1;
                    if rejected > 40 {
                        return Err(e);
                    }
                    h *= 0.5;
                }
            },
        }
    }
    let (positions, irregular) = lerp_positions(p0, p1, 1.0);
    Ok(unpack(state, positions, irregular, &y))
}

type DerivFn<'f> = dyn Fn(f64, &[C64]) -> Result<Vec<C64>> + 'f;

fn rk45_step(f: &DerivFn<'_>, s: f64, y: &[C64], h: f64) -> Result<(Vec<C64>, f64)> {
    let hx = C64::new(h, 0.0);
    let axpy = |base: &[C64], terms: &[(f64, &Vec<C64>)]| -> Vec<C64> {
        let mut out = base.to_vec();
        for (c, k) in terms {
            let cc = hx * C64::new(*c, 0.0);
            for (o, v) in out.iter_mut().zip(k.iter()) {
                *o += cc * v;
            }
        }
        out
    };
    let k1 = f(s, y)?;
    let k2 = f(s + 0.2 * h, &axpy(y, &[(0.2, &k1)]))?;
    let k3 = f(s + 0.3 * h, &axpy(y, &[(3.0 / 40.0, &k1), (9.0 / 40.0, &k2)]))?;
    let k4 = f(
        s + 0.6 * h,
        &axpy(y, &[(3.0 / 10.0, &k1), (-9.0 / 10.0, &k2), (6.0 / 5.0, &k3)]),
    )?;
    let k5 = f(
        s + h,
        &axpy(
            y,
            &[(-11.0 / 54.0, &k1), (5.0 / 2.0, &k2), (-70.0 / 27.0, &k3), (35.0 / 27.0, &k4)],
        ),
    )?;
    let k6 = f(
        s + 7.0 / 8.0 * h,
        &axpy(
            y,
            &[
                (1631.0 / 55296.0, &k1),
                (175.0 / 512.0, &k2),
                (575.0 / 13824.0, &k3),
                (44275.0 / 110592.0, &k4),
                (253.0 / 4096.0, &k5),
            ],
        ),
    )?;
    let y5 = axpy(
        y,
        &[
            (37.0 / 378.0, &k1),
            (250.0 / 621.0, &k3),
            (125.0 / 594.0, &k4),
            (512.0 / 1771.0, &k6),
        ],
    );
    let y4 = axpy(
        y,
        &[
            (2825.0 / 27648.0, &k1),
            (18575.0 / 48384.0, &k3),
            (13525.0 / 55296.0, &k4),
            (277.0 / 14336.0, &k5),
            (0.25, &k6),
        ],
    );
    let err = y5
        .iter()
        .zip(y4.iter())
        .map(|(a, b)| (a - b).norm_sqr())
        .sum::<f64>()
        .sqrt();
    Ok((y5, err))
}

/// Integrate the deformation equations along a polyline in deformation space.
pub fn integrate_flow(state: &FlowState, path: &[DeformationPoint], tol: f64) -> Result<FlowState> {
    if path.is_empty() {
        return Ok(state.clone());
    }
    let mut current = state.clone();
    let mut from = DeformationPoint::of(state);
    for target in path {
        check_pole_gaps(&target.positions)?;
        current = flow_edge(&current, &from, target, tol)?;
        // genericity watchdog at the vertices
        for part in &current.parts {
            if eig_distinct(part.leading()).is_err() {
                return Err(Error::GenericityLost {
                    context: "leading coefficient eigenvalues collided".into(),
                });
            }
        }
        from = target.clone();
    }
    Ok(current)
}

/// Finite-difference transport of a pair of fibre tangents (as per-pole
/// lifts) along a deformation path, with one Richardson refinement. Returns
/// the transported lifts at the re-gauged final state together with that
/// state.
pub fn transport_tangents(
    state: &FlowState,
    v1: &[TangentLift],
    v2: &[TangentLift],
    path: &[DeformationPoint],
    tol: f64,
    h: f64,
) -> Result<(FlowState, Vec<TangentLift>, Vec<TangentLift>)> {
    let base_final = integrate_flow(state, path, tol)?.gauged_to_slice()?;
    let transport_one = |v: &[TangentLift], step: f64| -> Result<Vec<AmbientTangent>> {
        let plus = integrate_flow(&perturb(state, v, step)?, path, tol)?.gauged_to_slice()?;
        let minus = integrate_flow(&perturb(state, v, -step)?, path, tol)?.gauged_to_slice()?;
        difference_quotient(&plus, &minus, 2.0 * step)
    };
    let richardson = |v: &[TangentLift]| -> Result<Vec<AmbientTangent>> {
        let d_h = transport_one(v, h)?;
        let d_h2 = transport_one(v, h / 2.0)?;
        let mut out = Vec::with_capacity(d_h.len());
        for (a, b) in d_h.iter().zip(d_h2.iter()) {
            // (4 D(h/2) - D(h)) / 3
            let dg0 = (b.dg0.scale(C64::new(4.0, 0.0)) - a.dg0.clone()).scale_re(1.0 / 3.0);
            let da = PrincipalPart::new(
                (1..=a.da.order())
                    .rev()
                    .map(|l| {
                        (b.da.coeff_of(l).scale(C64::new(4.0, 0.0)) - a.da.coeff_of(l))
                            .scale_re(1.0 / 3.0)
                    })
                    .collect(),
            )?;
            out.push(AmbientTangent { dg0, da });
        }
        Ok(out)
    };
    let amb1 = richardson(v1)?;
    let amb2 = richardson(v2)?;
    let points = base_final.orbit_points();
    let to_lifts = |ambs: &[AmbientTangent]| -> Result<Vec<TangentLift>> {
        points
            .iter()
            .zip(ambs.iter())
            .map(|(pt, amb)| lift_from_ambient(pt, amb, 1e-4))
            .collect()
    };
    let l1 = to_lifts(&amb1)?;
    let l2 = to_lifts(&amb2)?;
    Ok((base_final, l1, l2))
}

fn perturb(state: &FlowState, lifts: &[TangentLift], h: f64) -> Result<FlowState> {
    let mut out = state.clone();
    let hh = C64::new(h, 0.0);
    for (i, v) in lifts.iter().enumerate() {
        let pt = ExtendedOrbitPoint { g0: state.framings[i].clone(), a: state.parts[i].clone() };
        let amb = ambient_from_lift(&pt, v)?;
        out.framings[i] = &out.framings[i] + amb.dg0.scale(hh);
        let coeffs: Vec<CMatrix> = (1..=state.parts[i].order())
            .rev()
            .map(|l| state.parts[i].coeff_of(l) + amb.da.coeff_of(l).scale(hh))
            .collect();
        out.parts[i] = PrincipalPart::new(coeffs)?;
    }
    Ok(out)
}

fn difference_quotient(plus: &FlowState, minus: &FlowState, denom: f64) -> Result<Vec<AmbientTangent>> {
    let scale = C64::new(1.0 / denom, 0.0);
    let mut out = Vec::with_capacity(plus.num_poles());
    for i in 0..plus.num_poles() {
        let dg0 = (&plus.framings[i] - &minus.framings[i]).scale(scale);
        let coeffs: Vec<CMatrix> = (1..=plus.parts[i].order())
            .rev()
            .map(|l| (plus.parts[i].coeff_of(l) - minus.parts[i].coeff_of(l)).scale(scale))
            .collect();
        out.push(AmbientTangent { dg0, da: PrincipalPart::new(coeffs)? });
    }
    Ok(out)
}

/// Conjugation-invariant monodromy functions: traces of rho_i, of products
/// rho_i rho_j (i < j), and of the full ordered product of the first three.
/// A fixed tentacle system may be supplied (retargeted to the current poles);
/// otherwise default tentacles are built.
pub fn monodromy_invariants(
    state: &FlowState,
    params: &NumericParams,
    tentacles: Option<&Tentacles>,
) -> Result<Vec<C64>> {
    let conn = state.connection()?;
    let engine = MonodromyEngine::new(&conn, refit_framings(state)?, params.clone())?;
    let tent = match tentacles {
        Some(t) => t.retarget(&state.positions)?,
        None => engine.default_tentacles()?,
    };
    let md = engine.monodromy_data(&tent)?;
    let m = state.num_poles();
    let rhos: Vec<CMatrix> = (0..m).map(|i| md.rho(i)).collect();
    let mut inv = Vec::new();
    for r in &rhos {
        inv.push(r.trace());
    }
    for i in 0..m {
        for j in (i + 1)..m {
            inv.push((&rhos[i] * &rhos[j]).trace());
        }
    }
    if m >= 3 {
        inv.push((&rhos[2] * &rhos[1] * &rhos[0]).trace());
    }
    Ok(inv)
}

/// Invariance diagnostics along a deformation path.
#[derive(Clone, Debug)]
pub struct InvarianceReport {
    /// Max drift of the conjugation-invariant monodromy functions over the
    /// checkpoints, relative to their initial scale.
    pub monodromy_drift: f64,
    /// |omega(before) - omega(after)| / max(1, |omega(before)|) on
    /// finite-difference-transported tangent pairs.
    pub symplectic_drift: f64,
    /// Max drift of the exponents of formal monodromy along the path.
    pub lambda_drift: f64,
    /// Residue-sum norm at the end of the flow.
    pub moment_drift: f64,
    /// Checkpoints actually evaluated (degenerate ones are skipped).
    pub checkpoints_used: usize,
}

/// Flow along the path, sampling invariants at checkpoints, and compare the
/// reduced two-form on transported tangent pairs.
pub fn invariance_report(
    state: &FlowState,
    path: &[DeformationPoint],
    v1: &[TangentLift],
    v2: &[TangentLift],
    tol: f64,
    h: f64,
    checkpoints: usize,
    params: &NumericParams,
) -> Result<InvarianceReport> {
    let conn0 = state.connection()?;
    let engine0 = MonodromyEngine::new(&conn0, refit_framings(state)?, params.clone())?;
    let tent0 = engine0.default_tentacles()?;
    let inv0 = monodromy_invariants(state, params, Some(&tent0))?;
    let inv_scale = inv0.iter().map(|x| x.norm()).fold(1.0, f64::max);
    let lam0 = state.lambdas()?;

    // checkpoint states along the subdivided path
    let mut checklist: Vec<DeformationPoint> = Vec::new();
    let start = DeformationPoint::of(state);
    let mut prev = start.clone();
    for target in path {
        for c in 1..=checkpoints.max(1) {
            let s = c as f64 / checkpoints.max(1) as f64;
            let (positions, irregular) = lerp_positions(&prev, target, s);
            checklist.push(DeformationPoint { positions, irregular });
        }
        prev = target.clone();
    }

    let mut monodromy_drift = 0.0f64;
    let mut lambda_drift = 0.0f64;
    let mut used = 0usize;
    let mut current = state.clone();
    let mut from = start;
    for cp in &checklist {
        current = flow_edge(&current, &from, cp, tol)?;
        from = cp.clone();
        match monodromy_invariants(&current, params, Some(&tent0)) {
            Ok(inv) => {
                used += 1;
                for (a, b) in inv.iter().zip(inv0.iter()) {
                    monodromy_drift = monodromy_drift.max((a - b).norm() / inv_scale);
                }
            }
            Err(_) => {
                // near an anti-Stokes degeneration the checkpoint data is not
                // defined; skip it rather than fail the whole flow
            }
        }
        for (l, l0) in current.lambdas()?.iter().zip(lam0.iter()) {
            lambda_drift = lambda_drift.max((l - l0).norm_fro());
        }
    }
    let final_state = current.gauged_to_slice()?;
    let moment_drift = final_state.connection()?.residue_sum().norm_fro();

    // symplectic comparison on transported tangents
    let omega_before = moduli_form(&state.orbit_points(), v1, v2, 1e-6)?;
    let (final_slice, w1, w2) = transport_tangents(state, v1, v2, path, tol, h)?;
    let omega_after = moduli_form(&final_slice.orbit_points(), &w1, &w2, 1e-4)?;
    let symplectic_drift = (omega_after - omega_before).norm() / omega_before.norm().max(1.0);

    Ok(InvarianceReport {
        monodromy_drift,
        symplectic_drift,
        lambda_drift,
        moment_drift,
        checkpoints_used: used,
    })
}
