//! Property tests for the algebraic kernels.

use imd_core::connection_model::{MeromorphicConnection, PrincipalPart};
use imd_core::matcore::{solve_ad_shift, CMatrix};
use imd_core::stokes_data::{anti_stokes, compose_factors, factor_unipotent, half_period_order, StokesFactor};
use num_complex::Complex64 as C64;
use proptest::prelude::*;

fn c64(re: f64, im: f64) -> C64 {
    C64::new(re, im)
}

fn small_complex() -> impl Strategy<Value = C64> {
    (-1.0f64..1.0, -1.0f64..1.0).prop_map(|(re, im)| c64(re, im))
}

fn matrix3(entries: Vec<C64>) -> CMatrix {
    CMatrix::from_fn(3, |i, j| entries[i * 3 + j])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// solve_ad_shift returns an exact solution of [D, X] + s X = B whenever
    /// the denominators are non-resonant.
    #[test]
    fn ad_shift_defining_relation(
        d in proptest::collection::vec(small_complex(), 3),
        b in proptest::collection::vec(small_complex(), 9),
        s in small_complex(),
    ) {
        let dm = CMatrix::diag(&d);
        let bm = matrix3(b);
        // skip resonant configurations; they are the error path
        let mut resonant = false;
        for i in 0..3 {
            for j in 0..3 {
                if (d[i] - d[j] + s).norm() < 1e-6 && bm[(i, j)].norm() > 0.0 {
                    resonant = true;
                }
            }
        }
        prop_assume!(!resonant);
        let x = solve_ad_shift(&dm, &bm, s).unwrap();
        let lhs = dm.commutator(&x) + x.scale(s);
        prop_assert!((lhs - bm).norm_max() < 1e-9);
    }

    /// The connection evaluator agrees with an independently coded
    /// partial-fraction sum at random points.
    #[test]
    fn evaluate_matches_independent_sum(
        r1 in proptest::collection::vec(small_complex(), 4),
        r2 in proptest::collection::vec(small_complex(), 4),
        z_re in -4.0f64..4.0,
        z_im in 0.5f64..4.0,
    ) {
        let a1 = CMatrix::from_fn(2, |i, j| r1[i * 2 + j]);
        let a2 = CMatrix::from_fn(2, |i, j| r2[i * 2 + j]);
        let a2b = a1.scale(c64(-1.0, 0.0)); // residue balance
        let conn = MeromorphicConnection::new(
            vec![c64(0.0, 0.0), c64(1.0, 0.0)],
            vec![
                PrincipalPart::new(vec![a2.clone(), a1.clone()]).unwrap(),
                PrincipalPart::new(vec![a2b.clone()]).unwrap(),
            ],
        )
        .unwrap();
        let z = c64(z_re, z_im);
        let got = conn.evaluate(z).unwrap();
        // independent route: raw term-by-term division, no Horner
        let mut want = CMatrix::zeros(2);
        want = want + a2.scale(c64(1.0, 0.0) / (z * z));
        want = want + a1.scale(c64(1.0, 0.0) / z);
        want = want + a2b.scale(c64(1.0, 0.0) / (z - c64(1.0, 0.0)));
        prop_assert!((got - want).norm_max() < 1e-12);
    }

    /// compose_factors and factor_unipotent are mutually inverse on the
    /// half-period factor groups.
    #[test]
    fn unipotent_factorisation_roundtrip(
        entries in proptest::collection::vec(small_complex(), 3),
        lead in proptest::collection::vec(-1.5f64..1.5, 6),
        base in 0.0f64..6.28,
    ) {
        // generic rank-3 order-2 normal form
        let q = CMatrix::diag(&[
            c64(lead[0], lead[1]),
            c64(lead[2] + 3.0, lead[3]),
            c64(lead[4] - 3.0, lead[5]),
        ]);
        let nf = imd_core::connection_model::FormalNormalForm {
            q_coeffs: vec![q],
            lambda: CMatrix::zeros(3),
        };
        let aset = anti_stokes(&nf).unwrap();
        let hp = match half_period_order(&aset, base) {
            Ok(hp) => hp,
            Err(_) => return Ok(()), // base landed on a ray
        };
        let l = hp.roots_by_direction.len();
        let mut factors = Vec::new();
        let mut idx = 0usize;
        for t in 0..l {
            let mut m = CMatrix::identity(3);
            for &(a, b) in &hp.roots_by_direction[t] {
                m[(a, b)] = entries[idx % entries.len()];
                idx += 1;
            }
            factors.push(StokesFactor { direction_index: t, matrix: m });
        }
        let u = compose_factors(&factors, &hp).unwrap();
        let rec = factor_unipotent(&u, &hp).unwrap();
        let u2 = compose_factors(&rec, &hp).unwrap();
        prop_assert!((u2 - u).norm_max() < 1e-12);
    }
}
