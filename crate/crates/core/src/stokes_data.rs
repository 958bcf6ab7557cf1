//! Exact combinatorics and algebra of Stokes data at one pole: anti-Stokes
//! directions with their roots, half-period dominance orderings, groups of
//! Stokes factors, triangular Stokes matrices, and the formal local monodromy.
//!
//! Everything here is driven by the diagonal normal form alone; no analytic
//! continuation happens in this module.

use crate::connection_model::FormalNormalForm;
use crate::error::{Error, Result};
use crate::matcore::{mat_exp, CMatrix};
use num_complex::Complex64 as C64;
use std::f64::consts::{PI, TAU};

pub const DEFAULT_ANGLE_TOL: f64 = 1e-10;

/// One anti-Stokes direction with the ordered pairs supporting it.
#[derive(Clone, Debug)]
pub struct AntiStokesDirection {
    /// Angle in [0, 2pi).
    pub angle: f64,
    /// Ordered pairs (i, j), 0-based: e^{q_i - q_j} decays most rapidly here.
    pub roots: Vec<(usize, usize)>,
}

impl AntiStokesDirection {
    pub fn multiplicity(&self) -> usize {
        self.roots.len()
    }
}

/// All anti-Stokes directions of a normal form, sorted by angle.
#[derive(Clone, Debug)]
pub struct AntiStokesSet {
    pub n: usize,
    pub k: usize,
    pub directions: Vec<AntiStokesDirection>,
    /// Directions whose separation was within 10x the merge tolerance are
    /// reported here rather than silently decided.
    pub borderline_merges: Vec<(f64, f64)>,
}

impl AntiStokesSet {
    pub fn count(&self) -> usize {
        self.directions.len()
    }

    /// Directions per half-period: r / (2k - 2).
    pub fn half_period_len(&self) -> usize {
        if self.k < 2 || self.directions.is_empty() {
            0
        } else {
            self.count() / (2 * self.k - 2)
        }
    }

    pub fn total_multiplicity(&self) -> usize {
        self.directions.iter().map(|d| d.multiplicity()).sum()
    }
}

fn normalize_angle(mut th: f64) -> f64 {
    th %= TAU;
    if th < 0.0 {
        th += TAU;
    }
    // collapse values within machine noise of 2pi back to 0
    if (TAU - th) < 1e-14 {
        th = 0.0;
    }
    th
}

/// Anti-Stokes directions of a normal form with pole order k >= 2: for each
/// ordered pair (i,j) with leading gap c, the k-1 angles where
/// c e^{-(k-1) i theta} is negative real. Directions closer than `angle_tol`
/// are merged and their multiplicities accumulated. A pole order of 1 yields
/// the empty set (the single branch-cut direction is owned by the monodromy
/// layer, not stored here).
pub fn anti_stokes_with_tol(nf: &FormalNormalForm, angle_tol: f64) -> Result<AntiStokesSet> {
    let n = nf.rank();
    let k = nf.pole_order();
    if k < 2 || n < 2 {
        return Ok(AntiStokesSet { n, k, directions: vec![], borderline_merges: vec![] });
    }
    let km1 = (k - 1) as f64;
    let mut raw: Vec<(f64, (usize, usize))> = Vec::new();
    for i in 0..n {
        for j in 0..n {
            if i == j {
                continue;
            }
            let c = nf.q_leading_gap(i, j);
            if c.norm() < 1e-12 {
                return Err(Error::DegenerateLeadingTerm { i, j });
            }
            // c e^{-(k-1) i theta} in R_{<0}  <=>  theta = (arg c - pi + 2 pi m)/(k-1)
            for m in 0..(k - 1) {
                let th = (c.arg() - PI + TAU * m as f64) / km1;
                raw.push((normalize_angle(th), (i, j)));
            }
        }
    }
    raw.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());

    let mut directions: Vec<AntiStokesDirection> = Vec::new();
    let mut borderline = Vec::new();
    for (th, pair) in raw {
        match directions.last_mut() {
            Some(d) if (th - d.angle).abs() <= angle_tol => {
                if (th - d.angle).abs() > angle_tol / 10.0 {
                    borderline.push((d.angle, th));
                }
                d.roots.push(pair);
            }
            _ => directions.push(AntiStokesDirection { angle: th, roots: vec![pair] }),
        }
    }
    // wrap-around merge between the last and first direction
    if directions.len() > 1 {
        let first = directions.first().unwrap().angle;
        let last = directions.last().unwrap().angle;
        if (TAU - (last - first)) <= angle_tol {
            let tail = directions.pop().unwrap();
            directions[0].roots.extend(tail.roots);
        }
    }
    for d in directions.iter_mut() {
        d.roots.sort();
        d.roots.dedup();
    }
    Ok(AntiStokesSet { n, k, directions, borderline_merges: borderline })
}

pub fn anti_stokes(nf: &FormalNormalForm) -> Result<AntiStokesSet> {
    anti_stokes_with_tol(nf, DEFAULT_ANGLE_TOL)
}

/// A labelled half-period: the l consecutive directions after a base angle,
/// the dominance permutation and its matrix.
#[derive(Clone, Debug)]
pub struct HalfPeriod {
    /// Index into the AntiStokesSet of the first direction d_1.
    pub start: usize,
    /// Lifted angles of d_1..d_l (strictly increasing real numbers).
    pub lifted_angles: Vec<f64>,
    /// Roots of d_1..d_l in direction order.
    pub roots_by_direction: Vec<Vec<(usize, usize)>>,
    /// Dominance permutation pi: q_i < q_j iff pi(i) < pi(j), 0-based.
    pub perm: Vec<usize>,
    /// Permutation matrix P with P_{i, pi(i)} = 1.
    pub pmat: CMatrix,
}

pub fn permutation_matrix(perm: &[usize]) -> CMatrix {
    let n = perm.len();
    let mut p = CMatrix::zeros(n);
    for (i, &pi) in perm.iter().enumerate() {
        p[(i, pi)] = C64::new(1.0, 0.0);
    }
    p
}

/// Label the half-period starting just after `base_angle` (turning positively)
/// and compute the dominance order it defines. The base angle must not lie on
/// an anti-Stokes ray.
pub fn half_period_order(aset: &AntiStokesSet, base_angle: f64) -> Result<HalfPeriod> {
    let n = aset.n;
    if aset.directions.is_empty() {
        // rank one or simple pole: trivial order
        return Ok(HalfPeriod {
            start: 0,
            lifted_angles: vec![],
            roots_by_direction: vec![],
            perm: (0..n).collect(),
            pmat: CMatrix::identity(n),
        });
    }
    let base = normalize_angle(base_angle);
    for d in &aset.directions {
        if (d.angle - base).abs() <= DEFAULT_ANGLE_TOL
            || (TAU - (d.angle - base).abs()) <= DEFAULT_ANGLE_TOL
        {
            return Err(Error::BaseOnRay { angle: base });
        }
    }
    let r = aset.count();
    let l = aset.half_period_len();
    // first direction strictly after the base angle, with lifted angles
    let start = aset
        .directions
        .iter()
        .position(|d| d.angle > base)
        .unwrap_or(0);
    // lift each direction to the first representative after its predecessor
    let mut lifted_angles = Vec::with_capacity(l);
    let mut roots_by_direction = Vec::with_capacity(l);
    let mut prev = base;
    for t in 0..l {
        let idx = (start + t) % r;
        let d = &aset.directions[idx];
        let mut th = d.angle;
        while th <= prev {
            th += TAU;
        }
        lifted_angles.push(th);
        prev = th;
        roots_by_direction.push(d.roots.clone());
    }

    // dominance: q_i < q_j iff (i,j) is a root of some direction in the half-period
    let mut less = vec![vec![false; n]; n];
    for roots in &roots_by_direction {
        for &(i, j) in roots {
            less[i][j] = true;
        }
    }
    let mut wins = vec![0usize; n];
    for i in 0..n {
        for j in 0..n {
            if less[i][j] {
                wins[i] += 1;
            }
        }
    }
    let perm: Vec<usize> = (0..n).map(|i| n - 1 - wins[i]).collect();
    // the relation must be the total order induced by perm
    for i in 0..n {
        for j in 0..n {
            if i != j && less[i][j] != (perm[i] < perm[j]) {
                return Err(Error::Invalid(
                    "half-period roots do not define a total dominance order".into(),
                ));
            }
        }
    }

    let pmat = permutation_matrix(&perm);
    Ok(HalfPeriod { start, lifted_angles, roots_by_direction, perm, pmat })
}

/// A unipotent Stokes factor attached to one direction of a half-period.
#[derive(Clone, Debug)]
pub struct StokesFactor {
    /// Index of the direction within the half-period (0-based).
    pub direction_index: usize,
    pub matrix: CMatrix,
}

fn support_defect(m: &CMatrix, roots: &[(usize, usize)]) -> f64 {
    let n = m.dim();
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            if i == j {
                defect = defect.max((m[(i, j)] - C64::new(1.0, 0.0)).norm());
            } else if !roots.contains(&(i, j)) {
                defect = defect.max(m[(i, j)].norm());
            }
        }
    }
    defect
}

/// Product K_l ... K_2 K_1 of the factors of one half-period. Verifies each
/// factor lies in its group of Stokes factors and that the product is
/// unitriangular after conjugating by P^{-1}.
pub fn compose_factors(factors: &[StokesFactor], hp: &HalfPeriod) -> Result<CMatrix> {
    let n = hp.perm.len();
    if factors.len() != hp.roots_by_direction.len() {
        return Err(Error::ShapeMismatch { context: "factors vs half-period length".into() });
    }
    for f in factors {
        let roots = &hp.roots_by_direction[f.direction_index];
        let defect = support_defect(&f.matrix, roots);
        if defect > 1e-12 {
            return Err(Error::SupportViolation { mass: defect, tol: 1e-12 });
        }
    }
    let mut prod = CMatrix::identity(n);
    for f in factors {
        // K_l ... K_1: factor for direction d_i multiplies on the left of
        // the factors for earlier directions
        prod = &f.matrix * prod;
    }
    // sanity: P^{-1} U P unitriangular upper
    let v = conjugate_by_perm_inv(&prod, &hp.perm);
    let defect = lower_defect(&v);
    if defect > 1e-9 * prod.norm_fro().max(1.0) {
        return Err(Error::NotUnipotent { defect });
    }
    Ok(prod)
}

/// P^{-1} U P for the permutation matrix of `perm`.
fn conjugate_by_perm_inv(u: &CMatrix, perm: &[usize]) -> CMatrix {
    let n = perm.len();
    let mut inv = vec![0usize; n];
    for (i, &pi) in perm.iter().enumerate() {
        inv[pi] = i;
    }
    CMatrix::from_fn(n, |c, d| u[(inv[c], inv[d])])
}

fn conjugate_by_perm(u: &CMatrix, perm: &[usize]) -> CMatrix {
    CMatrix::from_fn(u.dim(), |a, b| u[(perm[a], perm[b])])
}

fn lower_defect(v: &CMatrix) -> f64 {
    let n = v.dim();
    let mut d = 0.0f64;
    for i in 0..n {
        d = d.max((v[(i, i)] - C64::new(1.0, 0.0)).norm());
        for j in 0..i {
            d = d.max(v[(i, j)].norm());
        }
    }
    d
}

/// Unique factorisation U = K_l ... K_1 with each K supported on its
/// direction's roots. Entries are peeled superdiagonal by superdiagonal in the
/// dominance frame.
pub fn factor_unipotent(u: &CMatrix, hp: &HalfPeriod) -> Result<Vec<StokesFactor>> {
    let n = hp.perm.len();
    let l = hp.roots_by_direction.len();
    let v = conjugate_by_perm_inv(u, &hp.perm);
    let defect = lower_defect(&v);
    if defect > 1e-9 * u.norm_fro().max(1.0) {
        return Err(Error::NotUnipotent { defect });
    }
    // owner of each strictly-upper entry in the dominance frame
    let mut owner = vec![vec![usize::MAX; n]; n];
    for (t, roots) in hp.roots_by_direction.iter().enumerate() {
        for &(a, b) in roots {
            owner[hp.perm[a]][hp.perm[b]] = t;
        }
    }
    let mut factors: Vec<CMatrix> = vec![CMatrix::identity(n); l];
    for level in 1..n {
        // current product in the dominance frame
        let mut m = CMatrix::identity(n);
        for f in &factors {
            m = f * m;
        }
        for row in 0..(n - level) {
            let col = row + level;
            let t = owner[row][col];
            let gap = v[(row, col)] - m[(row, col)];
            if t == usize::MAX {
                if gap.norm() > 1e-12 * u.norm_fro().max(1.0) {
                    return Err(Error::SupportViolation { mass: gap.norm(), tol: 1e-12 });
                }
                continue;
            }
            factors[t][(row, col)] += gap;
        }
    }
    Ok(factors
        .into_iter()
        .enumerate()
        .map(|(t, m)| StokesFactor {
            direction_index: t,
            matrix: conjugate_by_perm(&m, &hp.perm),
        })
        .collect())
}

/// Stokes matrices at one pole: S_1..S_{2k-2} alternating upper/lower
/// unitriangular, the dominance permutation, and the permuted exponent of
/// formal monodromy.
#[derive(Clone, Debug)]
pub struct StokesMatrices {
    /// S_1, ..., S_{2k-2}; empty when k = 1.
    pub s: Vec<CMatrix>,
    /// Dominance permutation pi (identity when k = 1).
    pub perm: Vec<usize>,
    /// Lambda' = P^{-1} Lambda P, diagonal.
    pub lambda_prime: CMatrix,
}

impl StokesMatrices {
    pub fn rank(&self) -> usize {
        self.lambda_prime.dim()
    }

    pub fn pmat(&self) -> CMatrix {
        permutation_matrix(&self.perm)
    }

    /// Lambda in the un-permuted frame: P Lambda' P^{-1}.
    pub fn lambda(&self) -> CMatrix {
        let p = self.pmat();
        let pt = p.transpose();
        &p * &self.lambda_prime * pt
    }

    /// Triangularity defect of the alternating pattern (0 for valid data).
    pub fn triangularity_defect(&self) -> f64 {
        let n = self.rank();
        let mut worst = 0.0f64;
        for (idx, s) in self.s.iter().enumerate() {
            for i in 0..n {
                worst = worst.max((s[(i, i)] - C64::new(1.0, 0.0)).norm());
                for j in 0..n {
                    let upper_allowed = idx % 2 == 0; // S_1 upper, S_2 lower, ...
                    let violating = if upper_allowed { i > j } else { i < j };
                    if violating {
                        worst = worst.max(s[(i, j)].norm());
                    }
                }
            }
        }
        worst
    }
}

/// Formal local monodromy P S_{2k-2} ... S_2 S_1 P^{-1} M_0 with
/// M_0 = exp(2 pi i P Lambda' P^{-1}).
pub fn local_monodromy(sm: &StokesMatrices) -> CMatrix {
    let n = sm.rank();
    let p = sm.pmat();
    let pt = p.transpose();
    let mut prod = CMatrix::identity(n);
    for s in &sm.s {
        prod = s * prod; // S_1 acts first: S_{2k-2} ... S_2 S_1
    }
    let lambda = sm.lambda();
    let m0 = mat_exp(&lambda.scale(C64::new(0.0, TAU)));
    &p * prod * pt * m0
}

/// Torus action t(S_i) = t S_i t^{-1} with Lambda' fixed.
pub fn torus_act(t: &CMatrix, sm: &StokesMatrices) -> Result<StokesMatrices> {
    let n = sm.rank();
    if t.dim() != n {
        return Err(Error::ShapeMismatch { context: "torus_act".into() });
    }
    if !t.is_diagonal(1e-12 * t.norm_fro().max(1.0)) {
        return Err(Error::Invalid("torus element must be diagonal".into()));
    }
    let tinv = t.inverse()?;
    Ok(StokesMatrices {
        s: sm.s.iter().map(|s| t * s * &tinv).collect(),
        perm: sm.perm.clone(),
        lambda_prime: sm.lambda_prime.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::connection_model::FormalNormalForm;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn nf_rank2_k2() -> FormalNormalForm {
        // Q = diag(1/z, -1/z)
        FormalNormalForm {
            q_coeffs: vec![CMatrix::diag(&[c(1.0, 0.0), c(-1.0, 0.0)])],
            lambda: CMatrix::zeros(2),
        }
    }

    /// Dense angular scan oracle: count sign changes of Re(q_ij) directly.
    fn scan_directions(nf: &FormalNormalForm, samples: usize) -> Vec<f64> {
        let n = nf.rank();
        let k = nf.pole_order();
        let km1 = (k - 1) as f64;
        let mut found = Vec::new();
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                let cij = nf.q_leading_gap(i, j);
                for s in 0..samples {
                    // offset grid so roots never land exactly on sample edges
                    let th0 = TAU * (s as f64 + 0.318) / samples as f64;
                    let th1 = TAU * (s as f64 + 1.318) / samples as f64;
                    let val = |th: f64| {
                        let w = cij * C64::from_polar(1.0, -km1 * th);
                        w.im
                    };
                    let neg = |th: f64| (cij * C64::from_polar(1.0, -km1 * th)).re < 0.0;
                    // root of the imaginary part with negative real part
                    if val(th0) * val(th1) < 0.0 {
                        let mut lo = th0;
                        let mut hi = th1;
                        for _ in 0..60 {
                            let mid = 0.5 * (lo + hi);
                            if val(lo) * val(mid) <= 0.0 {
                                hi = mid;
                            } else {
                                lo = mid;
                            }
                        }
                        let th = 0.5 * (lo + hi);
                        if neg(th) {
                            found.push(normalize_angle(th));
                        }
                    }
                }
            }
        }
        found.sort_by(|a, b| a.partial_cmp(b).unwrap());
        found.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
        found
    }

    #[test]
    fn rank2_order2_directions() {
        let aset = anti_stokes(&nf_rank2_k2()).unwrap();
        assert_eq!(aset.count(), 2);
        assert!((aset.directions[0].angle - 0.0).abs() < 1e-12);
        assert!((aset.directions[1].angle - PI).abs() < 1e-12);
        // root (2,1) at 0 and (1,2) at pi, 0-based (1,0) and (0,1)
        assert_eq!(aset.directions[0].roots, vec![(1, 0)]);
        assert_eq!(aset.directions[1].roots, vec![(0, 1)]);

        // scan oracle agrees
        let scanned = scan_directions(&nf_rank2_k2(), 400);
        assert_eq!(scanned.len(), 2);
        assert!((scanned[0] - 0.0).abs() < 1e-8 && (scanned[1] - PI).abs() < 1e-8);
    }

    #[test]
    fn rank1_is_empty() {
        let nf = FormalNormalForm {
            q_coeffs: vec![CMatrix::diag(&[c(2.0, 1.0)]), CMatrix::diag(&[c(0.5, 0.0)])],
            lambda: CMatrix::diag(&[c(0.1, 0.0)]),
        };
        let aset = anti_stokes(&nf).unwrap();
        assert_eq!(aset.count(), 0);
    }

    #[test]
    fn rank3_order2_counts() {
        let nf = FormalNormalForm {
            q_coeffs: vec![CMatrix::diag(&[c(1.0, 0.3), c(-0.8, 0.9), c(0.2, -1.1)])],
            lambda: CMatrix::zeros(3),
        };
        let aset = anti_stokes(&nf).unwrap();
        assert_eq!(aset.count() % (2 * 2 - 2), 0);
        assert_eq!(aset.total_multiplicity(), (2 * 2 - 2) * 3); // (2k-2) * n(n-1)/2
        assert_eq!(aset.count(), 6);
        let scanned = scan_directions(&nf, 800);
        assert_eq!(scanned.len(), 6);
        for (d, s) in aset.directions.iter().zip(scanned.iter()) {
            assert!((d.angle - s).abs() < 1e-7);
        }
    }

    #[test]
    fn rotational_symmetry_transposes_roots() {
        let nf = FormalNormalForm {
            q_coeffs: vec![
                CMatrix::diag(&[c(0.4, 0.0), c(-0.2, 0.5), c(0.9, -0.7)]),
                CMatrix::diag(&[c(1.3, -0.2), c(0.1, 0.8), c(-0.5, 0.4)]),
            ],
            lambda: CMatrix::zeros(3),
        };
        let k = nf.pole_order();
        let aset = anti_stokes(&nf).unwrap();
        let shift = PI / (k as f64 - 1.0);
        for d in &aset.directions {
            let target = normalize_angle(d.angle + shift);
            let partner = aset
                .directions
                .iter()
                .find(|e| (e.angle - target).abs() < 1e-9 || (TAU - (e.angle - target).abs()) < 1e-9)
                .expect("rotated direction missing");
            let mut transposed: Vec<(usize, usize)> =
                d.roots.iter().map(|&(i, j)| (j, i)).collect();
            transposed.sort();
            assert_eq!(partner.roots, transposed);
        }
    }

    #[test]
    fn half_period_upper_vs_lower_base() {
        let aset = anti_stokes(&nf_rank2_k2()).unwrap();
        let up = half_period_order(&aset, PI / 2.0).unwrap();
        // d_1 = pi, half-period { pi }, root (0,1): q_0 < q_1, identity perm
        assert_eq!(up.perm, vec![0, 1]);
        assert!((up.pmat.clone() - CMatrix::identity(2)).norm_max() < 1e-15);

        let down = half_period_order(&aset, 3.0 * PI / 2.0).unwrap();
        assert_eq!(down.perm, vec![1, 0]);

        assert!(matches!(
            half_period_order(&aset, 0.0),
            Err(Error::BaseOnRay { .. })
        ));
    }

    #[test]
    fn trivial_rank1_half_period() {
        let nf = FormalNormalForm {
            q_coeffs: vec![CMatrix::diag(&[c(1.0, 0.0)])],
            lambda: CMatrix::diag(&[c(0.3, 0.0)]),
        };
        let aset = anti_stokes(&nf).unwrap();
        let hp = half_period_order(&aset, 0.3).unwrap();
        assert_eq!(hp.perm, vec![0]);
    }

    #[test]
    fn compose_single_and_identity_factors() {
        let aset = anti_stokes(&nf_rank2_k2()).unwrap();
        let hp = half_period_order(&aset, PI / 2.0).unwrap();
        let k1 = StokesFactor {
            direction_index: 0,
            matrix: CMatrix::from_rows(&[
                vec![c(1.0, 0.0), c(2.5, -1.0)],
                vec![c(0.0, 0.0), c(1.0, 0.0)],
            ])
            .unwrap(),
        };
        let prod = compose_factors(std::slice::from_ref(&k1), &hp).unwrap();
        assert!((prod - k1.matrix.clone()).norm_max() < 1e-15);

        let id = StokesFactor { direction_index: 0, matrix: CMatrix::identity(2) };
        let prod = compose_factors(&[id], &hp).unwrap();
        assert!((prod - CMatrix::identity(2)).norm_max() < 1e-15);
    }

    fn nf_rank3_k2() -> FormalNormalForm {
        FormalNormalForm {
            q_coeffs: vec![CMatrix::diag(&[c(1.0, 0.1), c(-0.6, 0.8), c(0.3, -0.9)])],
            lambda: CMatrix::zeros(3),
        }
    }

    #[test]
    fn factor_roundtrip_rank3() {
        let aset = anti_stokes(&nf_rank3_k2()).unwrap();
        let hp = half_period_order(&aset, 0.123).unwrap();
        let l = hp.roots_by_direction.len();
        // random-ish unit-entry factors on their supports
        let mut factors = Vec::new();
        let mut seed = 0.37f64;
        for t in 0..l {
            let mut m = CMatrix::identity(3);
            for &(a, b) in &hp.roots_by_direction[t] {
                seed = (seed * 977.77).sin();
                m[(a, b)] = c(seed, (seed * 3.0).cos());
            }
            factors.push(StokesFactor { direction_index: t, matrix: m });
        }
        let u = compose_factors(&factors, &hp).unwrap();

        // direct multiplication oracle
        let mut direct = CMatrix::identity(3);
        for f in &factors {
            direct = &f.matrix * direct;
        }
        assert!((u.clone() - direct).norm_max() < 1e-14);

        // round-trip
        let recovered = factor_unipotent(&u, &hp).unwrap();
        let u2 = compose_factors(&recovered, &hp).unwrap();
        assert!((u2 - u.clone()).norm_max() < 1e-12);
        for (f, g) in factors.iter().zip(recovered.iter()) {
            assert!((f.matrix.clone() - g.matrix.clone()).norm_max() < 1e-12);
        }
    }

    #[test]
    fn factor_identity_gives_identity_factors() {
        let aset = anti_stokes(&nf_rank3_k2()).unwrap();
        let hp = half_period_order(&aset, 0.123).unwrap();
        let fs = factor_unipotent(&CMatrix::identity(3), &hp).unwrap();
        for f in fs {
            assert!((f.matrix - CMatrix::identity(3)).norm_max() < 1e-14);
        }
    }

    #[test]
    fn local_monodromy_cases() {
        // all S = I, Lambda' = 0 -> I
        let sm = StokesMatrices {
            s: vec![CMatrix::identity(2), CMatrix::identity(2)],
            perm: vec![0, 1],
            lambda_prime: CMatrix::zeros(2),
        };
        assert!((local_monodromy(&sm) - CMatrix::identity(2)).norm_max() < 1e-14);

        // k = 1: only the formal monodromy survives
        let lam = CMatrix::diag(&[c(0.3, 0.0), c(-0.1, 0.2)]);
        let sm = StokesMatrices { s: vec![], perm: vec![0, 1], lambda_prime: lam.clone() };
        let want = mat_exp(&lam.scale(c(0.0, TAU)));
        assert!((local_monodromy(&sm) - want).norm_max() < 1e-13);

        // S2 S1 with P = I, Lambda' = 0: matrix-multiply oracle
        let s1 = CMatrix::from_rows(&[vec![c(1.0, 0.0), c(2.0, 0.0)], vec![c(0.0, 0.0), c(1.0, 0.0)]])
            .unwrap();
        let s2 = CMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(3.0, 0.0), c(1.0, 0.0)]])
            .unwrap();
        let sm = StokesMatrices {
            s: vec![s1.clone(), s2.clone()],
            perm: vec![0, 1],
            lambda_prime: CMatrix::zeros(2),
        };
        let want = &s2 * &s1;
        assert!((local_monodromy(&sm) - want).norm_max() < 1e-14);
    }

    #[test]
    fn torus_action_conjugates_monodromy() {
        let s1 = CMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.7, -0.4)], vec![c(0.0, 0.0), c(1.0, 0.0)]])
            .unwrap();
        let s2 = CMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, 0.0)], vec![c(-1.2, 0.5), c(1.0, 0.0)]])
            .unwrap();
        let sm = StokesMatrices {
            s: vec![s1, s2],
            perm: vec![1, 0],
            lambda_prime: CMatrix::diag(&[c(0.2, 0.0), c(-0.2, 0.1)]),
        };
        let t = CMatrix::diag(&[c(2.0, 1.0), c(0.5, -0.3)]);
        let acted = torus_act(&t, &sm).unwrap();
        assert!(acted.triangularity_defect() < 1e-12);

        // conjugation oracle: local monodromy transforms by P t P^{-1}
        let p = sm.pmat();
        let tp = &p * &t * p.transpose();
        let want = &tp * local_monodromy(&sm) * tp.inverse().unwrap();
        assert!((local_monodromy(&acted) - want).norm_max() < 1e-12);

        // scalar torus elements act trivially
        let tsc = CMatrix::scalar(2, c(3.0, -1.0));
        let acted = torus_act(&tsc, &sm).unwrap();
        for (a, b) in acted.s.iter().zip(sm.s.iter()) {
            assert!((a.clone() - b.clone()).norm_max() < 1e-13);
        }
    }
}
