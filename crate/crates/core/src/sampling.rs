//! Seeded random generators for test data: generic normal forms, extended
//! orbit points via the winding map, tangent lifts, and moment-zero simple
//! pole connections. Deterministic given the seed.

use crate::connection_model::{
    default_framings, validate, CompatibleFraming, FormalNormalForm, MeromorphicConnection,
    PrincipalPart,
};
use crate::error::{Error, Result};
use crate::matcore::{eig_distinct, CMatrix};
use crate::orbit_geometry::{winding, DualElement, ExtendedOrbitPoint, JetGroupElement, TangentLift};
use num_complex::Complex64 as C64;
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub struct Sampler {
    rng: ChaCha8Rng,
}

impl Sampler {
    pub fn new(seed: u64) -> Self {
        Sampler { rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn c64(&mut self, scale: f64) -> C64 {
        C64::new(
            self.rng.gen_range(-scale..scale),
            self.rng.gen_range(-scale..scale),
        )
    }

    pub fn real(&mut self, lo: f64, hi: f64) -> f64 {
        self.rng.gen_range(lo..hi)
    }

    pub fn matrix(&mut self, n: usize, scale: f64) -> CMatrix {
        CMatrix::from_fn(n, |_, _| self.c64(scale))
    }

    pub fn diagonal(&mut self, n: usize, scale: f64) -> CMatrix {
        let entries: Vec<C64> = (0..n).map(|_| self.c64(scale)).collect();
        CMatrix::diag(&entries)
    }

    /// Diagonal with pairwise gaps at least `min_gap`.
    pub fn diagonal_separated(&mut self, n: usize, scale: f64, min_gap: f64) -> CMatrix {
        loop {
            let d = self.diagonal(n, scale);
            let vals = d.diagonal();
            let mut ok = true;
            for i in 0..n {
                for j in (i + 1)..n {
                    if (vals[i] - vals[j]).norm() < min_gap {
                        ok = false;
                    }
                }
            }
            if ok {
                return d;
            }
        }
    }

    /// Invertible with a crude condition guard.
    pub fn invertible(&mut self, n: usize) -> CMatrix {
        loop {
            let m = CMatrix::identity(n) + self.matrix(n, 0.6);
            if let Ok(inv) = m.inverse() {
                if m.norm_fro() * inv.norm_fro() < 40.0 * n as f64 {
                    return m;
                }
            }
        }
    }

    /// Generic diagonal normal form: well-separated leading coefficients over
    /// mild subleading data, so truncated asymptotic matching has a usable
    /// radius window.
    pub fn normal_form(&mut self, n: usize, k: usize) -> FormalNormalForm {
        let mut q_coeffs: Vec<CMatrix> = (0..k.saturating_sub(1))
            .map(|_| self.diagonal(n, 0.15))
            .collect();
        if k >= 2 {
            let top = self.diagonal_separated(n, 2.5, 2.0);
            let last = q_coeffs.len() - 1;
            q_coeffs[last] = top;
        }
        FormalNormalForm { q_coeffs, lambda: self.diagonal(n, 0.3) }
    }

    /// Reference diagonal irregular type A0 (zero residue) matching a normal
    /// form: coefficient of zeta^{-l} is -(l-1) q_{l-1}.
    pub fn irregular_dual(&mut self, nf: &FormalNormalForm) -> Result<DualElement> {
        let k = nf.pole_order();
        let n = nf.rank();
        let mut coeffs = Vec::with_capacity(k);
        for l in (1..=k).rev() {
            if l == 1 {
                coeffs.push(CMatrix::zeros(n));
            } else {
                coeffs.push(nf.q_coeffs[l - 2].scale(C64::new(-((l - 1) as f64), 0.0)));
            }
        }
        PrincipalPart::new(coeffs)
    }

    pub fn jet_group(&mut self, n: usize, k: usize) -> Result<JetGroupElement> {
        self.jet_group_scaled(n, k, 0.15)
    }

    pub fn jet_group_scaled(&mut self, n: usize, k: usize, jet_scale: f64) -> Result<JetGroupElement> {
        let mut coeffs = vec![self.invertible(n)];
        for _ in 1..k {
            coeffs.push(self.matrix(n, jet_scale));
        }
        JetGroupElement::new(coeffs)
    }

    /// Extended-orbit point through the winding map over a fresh generic
    /// irregular type; returns the point with its reference normal form.
    pub fn orbit_point(&mut self, n: usize, k: usize) -> Result<(ExtendedOrbitPoint, FormalNormalForm)> {
        let nf = self.normal_form(n, k);
        if k == 1 {
            // winding is an isomorphism: (g0, g0^{-1} R g0) with R distinct mod Z
            let g0 = self.invertible(n);
            let r = self.distinct_mod_z(n);
            let a = PrincipalPart::new(vec![g0.inverse()?.clone() * &r * &g0])?;
            return Ok((ExtendedOrbitPoint { g0, a }, FormalNormalForm {
                q_coeffs: vec![],
                lambda: r,
            }));
        }
        let a0 = self.irregular_dual(&nf)?;
        let g = self.jet_group(n, k)?;
        let r = self.diagonal(n, 0.3);
        let pt = winding(&g, &r, &a0)?;
        Ok((pt, nf))
    }

    /// Diagonal matrix with eigenvalues pairwise distinct mod Z.
    pub fn distinct_mod_z(&mut self, n: usize) -> CMatrix {
        self.distinct_mod_z_scaled(n, 0.35)
    }

    pub fn distinct_mod_z_scaled(&mut self, n: usize, scale: f64) -> CMatrix {
        loop {
            let d = self.diagonal(n, scale);
            let vals = d.diagonal();
            let mut ok = true;
            for i in 0..n {
                for j in (i + 1)..n {
                    let diff = vals[i] - vals[j];
                    if (diff - C64::new(diff.re.round(), 0.0)).norm() < 0.05 {
                        ok = false;
                    }
                }
            }
            if ok {
                return d;
            }
        }
    }

    pub fn tangent_lift(&mut self, n: usize, k: usize, scale: f64) -> TangentLift {
        let mut v = TangentLift::zero(n, k);
        for j in 0..k {
            v.x.coeffs[j] = self.matrix(n, scale);
        }
        v.rdot = self.diagonal(n, scale);
        v
    }

    /// Random moment-zero connection with m simple poles, all generic, with
    /// eigenvector framings. Residue eigenvalue scale kept moderate so that
    /// monodromies stay well-conditioned.
    pub fn simple_pole_connection(
        &mut self,
        n: usize,
        m: usize,
    ) -> Result<(MeromorphicConnection, CompatibleFraming)> {
        if m < 2 {
            return Err(Error::Invalid("need at least two poles".into()));
        }
        for _attempt in 0..200 {
            let mut positions = Vec::with_capacity(m);
            'pos: loop {
                positions.clear();
                for _ in 0..m {
                    positions.push(self.c64(2.0));
                }
                for i in 0..m {
                    for j in (i + 1)..m {
                        if (positions[i] - positions[j]).norm() < 0.7 {
                            continue 'pos;
                        }
                    }
                }
                break;
            }
            let mut parts = Vec::with_capacity(m);
            let mut sum = CMatrix::zeros(n);
            for _ in 0..(m - 1) {
                let h = self.invertible(n);
                let d = self.distinct_mod_z(n);
                let a = &h * &d * h.inverse()?;
                sum = sum + a.clone();
                parts.push(PrincipalPart::new(vec![a])?);
            }
            parts.push(PrincipalPart::new(vec![sum.scale(C64::new(-1.0, 0.0))])?);
            let conn = MeromorphicConnection::new(positions, parts)?;
            if !validate(&conn).passes {
                continue;
            }
            if let Ok(framings) = default_framings(&conn) {
                return Ok((conn, framings));
            }
        }
        Err(Error::Invalid("failed to sample a generic simple-pole connection".into()))
    }

    /// Random connection with one irregular pole (order k) at `pos0` and one
    /// simple pole balancing the residue.
    pub fn irregular_plus_simple(
        &mut self,
        n: usize,
        k: usize,
    ) -> Result<(MeromorphicConnection, CompatibleFraming)> {
        for _attempt in 0..200 {
            let nf = self.normal_form(n, k);
            let a0 = self.irregular_dual(&nf)?;
            let g = self.jet_group_scaled(n, k, 0.05)?;
            let r = self.distinct_mod_z_scaled(n, 0.22);
            let pt = winding(&g, &r, &a0)?;
            let res0 = pt.a.residue().clone();
            let other = res0.scale(C64::new(-1.0, 0.0));
            if eig_distinct(&other).is_err() {
                continue;
            }
            // the far simple pole keeps the Taylor tail at the irregular pole
            // small, preserving the asymptotic-matching radius window
            let positions = vec![C64::new(0.0, 0.0), C64::new(4.0, 0.0) + self.c64(0.4)];
            let parts = vec![pt.a.clone(), PrincipalPart::new(vec![other])?];
            let conn = MeromorphicConnection::new(positions, parts)?;
            if !validate(&conn).passes {
                continue;
            }
            let framings = match default_framings(&conn) {
                Ok(f) => f,
                Err(_) => continue,
            };
            // keep only instances whose gauge series stays tame, so truncated
            // matching has a usable radius window
            let local = conn.local_expansion(0, (k + 5) as i32);
            match crate::connection_model::formal_diagonalize_series(
                &local,
                &framings.framings[0],
                k + 5,
            ) {
                Ok(fg) if fg.next_term_norm < 3.0 => {}
                _ => continue,
            }
            return Ok((conn, framings));
        }
        Err(Error::Invalid("failed to sample an irregular configuration".into()))
    }
}

impl Sampler {
    /// Random per-pole tangent lifts whose total residue variation vanishes:
    /// poles 2..m get free random lifts, the first pole's lift is fitted by
    /// least squares to cancel the sum. Suitable for `moduli_form`.
    pub fn level_set_lifts(
        &mut self,
        points: &[ExtendedOrbitPoint],
        scale: f64,
    ) -> Result<Vec<TangentLift>> {
        use crate::matcore::{lstsq, residual_norm};
        use crate::orbit_geometry::{ambient_from_lift, coadjoint_inf, JetAlgebraElement};
        let n = points[0].rank();
        let m = points.len();
        if m < 2 {
            return Err(Error::Invalid("need at least two poles for a level set".into()));
        }
        for _attempt in 0..40 {
            let mut lifts: Vec<TangentLift> = vec![TangentLift::zero(n, points[0].order())];
            let mut target = CMatrix::zeros(n);
            for pt in points.iter().skip(1) {
                let v = self.tangent_lift(n, pt.order(), scale);
                target = target + ambient_from_lift(pt, &v)?.da.residue().clone();
                lifts.push(v);
            }
            // fit pole 1: residue of [A, X] + g0^{-1} Rdot g0 = -target
            let pt = &points[0];
            let k = pt.order();
            let g0_inv = pt.g0.inverse()?;
            let mut columns: Vec<CMatrix> = Vec::new();
            for j in 0..k {
                for r in 0..n {
                    for c in 0..n {
                        let mut x = JetAlgebraElement::zero(n, k);
                        x.coeffs[j][(r, c)] = C64::new(1.0, 0.0);
                        columns.push(coadjoint_inf(&pt.a, &x)?.residue().clone());
                    }
                }
            }
            for d in 0..n {
                let mut rd = CMatrix::zeros(n);
                rd[(d, d)] = C64::new(1.0, 0.0);
                columns.push(&g0_inv * rd * &pt.g0);
            }
            let mut rows = Vec::with_capacity(n * n);
            let mut rhs = Vec::with_capacity(n * n);
            for r in 0..n {
                for c in 0..n {
                    rows.push(columns.iter().map(|m| m[(r, c)]).collect::<Vec<_>>());
                    rhs.push(-target[(r, c)]);
                }
            }
            let sol = lstsq(&rows, &rhs)?;
            if residual_norm(&rows, &sol, &rhs) > 1e-9 * (1.0 + target.norm_fro()) {
                continue;
            }
            let mut v0 = TangentLift::zero(n, k);
            let mut idx = 0;
            for j in 0..k {
                for r in 0..n {
                    for c in 0..n {
                        v0.x.coeffs[j][(r, c)] = sol[idx];
                        idx += 1;
                    }
                }
            }
            for d in 0..n {
                v0.rdot[(d, d)] = sol[idx];
                idx += 1;
            }
            lifts[0] = v0;
            return Ok(lifts);
        }
        Err(Error::Invalid("failed to fit a level-set lift".into()))
    }
}
