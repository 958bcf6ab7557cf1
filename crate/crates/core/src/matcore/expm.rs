//! Matrix exponential by scaling-and-squaring with the [13/13] Pade
//! approximant (Higham 2005 constants, fixed top degree — fine at these sizes).

use super::matrix::CMatrix;
use num_complex::Complex64 as C64;

const THETA_13: f64 = 5.371920351148152;

const B13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

pub fn mat_exp(m: &CMatrix) -> CMatrix {
    let n = m.dim();
    let norm = m.norm_one();
    if norm == 0.0 {
        return CMatrix::identity(n);
    }
    let s = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let a = m.scale_re(0.5f64.powi(s));

    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a2 * &a4;
    let id = CMatrix::identity(n);

    let cb = |k: usize| C64::new(B13[k], 0.0);

    // u = A (A6 (b13 A6 + b11 A4 + b9 A2) + b7 A6 + b5 A4 + b3 A2 + b1 I)
    let mut w1 = a6.scale(cb(13));
    w1.add_scaled(cb(11), &a4);
    w1.add_scaled(cb(9), &a2);
    let mut w2 = &a6 * &w1;
    w2.add_scaled(cb(7), &a6);
    w2.add_scaled(cb(5), &a4);
    w2.add_scaled(cb(3), &a2);
    w2.add_scaled(cb(1), &id);
    let u = &a * &w2;

    // v = A6 (b12 A6 + b10 A4 + b8 A2) + b6 A6 + b4 A4 + b2 A2 + b0 I
    let mut z1 = a6.scale(cb(12));
    z1.add_scaled(cb(10), &a4);
    z1.add_scaled(cb(8), &a2);
    let mut v = &a6 * &z1;
    v.add_scaled(cb(6), &a6);
    v.add_scaled(cb(4), &a4);
    v.add_scaled(cb(2), &a2);
    v.add_scaled(cb(0), &id);

    let num = &v + &u;
    let den = &v - &u;
    let mut r = den
        .solve(&num)
        .expect("expm: Pade denominator singular (norm bound violated)");
    for _ in 0..s {
        r = &r * &r;
    }
    r
}
