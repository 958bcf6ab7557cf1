//! Acceptance suite: every numbered criterion runs at its stated tolerance
//! and prints one pass/fail line (visible with `--nocapture`). All thresholds
//! are pinned here, not configurable.

use imd_core::connection_model::{formal_diagonalize, PrincipalPart};
use imd_core::isomonodromy_flows::{
    integrate_flow, invariance_report, jmu_rhs, schlesinger_rhs, DeformationPoint,
    DeformationTangent, FlowState,
};
use imd_core::matcore::{integrate_trace, CMatrix, PolylinePath};
use imd_core::monodromy_numeric::{degree_of, MonodromyEngine, NumericParams};
use imd_core::orbit_geometry::{
    ambient_from_lift, decouple, fundamental_lift, lift_map_rank_and_kernel, moduli_form,
    omega_cotangent, omega_extended, omega_orbit_b, recouple, winding, ExtendedOrbitPoint,
    JetAlgebraElement, JetGroupElement, TangentLift,
};
use imd_core::sampling::Sampler;
use imd_core::stokes_data::{
    anti_stokes, compose_factors, factor_unipotent, half_period_order, local_monodromy,
    StokesFactor,
};
use num_complex::Complex64 as C64;
use std::f64::consts::{PI, TAU};
use std::time::Instant;

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "acceptance {}: {} ({detail})",
        criterion,
        if pass { "PASS" } else { "FAIL" }
    );
    assert!(pass, "{criterion}: {detail}");
}

#[test]
fn criterion_1_stokes_combinatorics() {
    let start = Instant::now();
    let mut smp = Sampler::new(101);
    let mut worst = String::new();
    let mut pass = true;
    for trial in 0..200 {
        let n = 2 + (trial % 4); // 2..5
        let k = 2 + (trial % 3); // 2..4
        let nf = smp.normal_form(n, k);
        let aset = anti_stokes(&nf).expect("generic normal form");
        let r = aset.count();
        if r % (2 * k - 2) != 0 {
            pass = false;
            worst = format!("trial {trial}: r = {r} not divisible by {}", 2 * k - 2);
            break;
        }
        // weighted multiplicity of an arbitrary half-period
        let base = smp.real(0.0, TAU);
        let hp = match half_period_order(&aset, base) {
            Ok(hp) => hp,
            Err(_) => half_period_order(&aset, base + 1e-3).unwrap(),
        };
        let weighted: usize = hp.roots_by_direction.iter().map(|r| r.len()).sum();
        if weighted != n * (n - 1) / 2 {
            pass = false;
            worst = format!("trial {trial}: weighted count {weighted} != {}", n * (n - 1) / 2);
            break;
        }
        // pi/(k-1) симметрия with roots transposed
        let shift = PI / (k as f64 - 1.0);
        for d in &aset.directions {
            let target = (d.angle + shift).rem_euclid(TAU);
            let partner = aset.directions.iter().find(|e| {
                (e.angle - target).abs() < 1e-8 || (TAU - (e.angle - target).abs()) < 1e-8
            });
            let Some(partner) = partner else {
                pass = false;
                worst = format!("trial {trial}: missing rotated direction");
                break;
            };
            let mut transposed: Vec<(usize, usize)> = d.roots.iter().map(|&(i, j)| (j, i)).collect();
            transposed.sort();
            if partner.roots != transposed {
                pass = false;
                worst = format!("trial {trial}: rotated roots not transposed");
                break;
            }
        }
        if !pass {
            break;
        }
    }
    let dt = start.elapsed().as_secs_f64();
    if dt > 5.0 {
        pass = false;
        worst = format!("runtime {dt:.2}s exceeds 5s");
    }
    report("criterion 1 (Stokes combinatorics)", pass, &format!("200 normal forms, {dt:.2}s {worst}"));
}

#[test]
fn criterion_2_factorisation_roundtrip() {
    let start = Instant::now();
    let mut smp = Sampler::new(202);
    let mut worst = 0.0f64;
    for trial in 0..500 {
        let n = 2 + (trial % 4);
        let k = 2 + (trial % 3);
        let nf = smp.normal_form(n, k);
        let aset = anti_stokes(&nf).unwrap();
        let hp = match half_period_order(&aset, smp.real(0.0, TAU)) {
            Ok(hp) => hp,
            Err(_) => continue,
        };
        let l = hp.roots_by_direction.len();
        let mut factors = Vec::with_capacity(l);
        for t in 0..l {
            let mut m = CMatrix::identity(n);
            for &(a, b) in &hp.roots_by_direction[t] {
                m[(a, b)] = smp.c64(1.5);
            }
            factors.push(StokesFactor { direction_index: t, matrix: m });
        }
        let u = compose_factors(&factors, &hp).unwrap();
        let recovered = factor_unipotent(&u, &hp).unwrap();
        let u2 = compose_factors(&recovered, &hp).unwrap();
        worst = worst.max((u2 - u).norm_max());
        for (f, g) in factors.iter().zip(recovered.iter()) {
            worst = worst.max((f.matrix.clone() - g.matrix.clone()).norm_max());
        }
    }
    let dt = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-12 && dt <= 5.0;
    report(
        "criterion 2 (factorisation round-trip)",
        pass,
        &format!("500 factor lists, worst {worst:.2e}, {dt:.2}s"),
    );
}

#[test]
fn criterion_3_orbit_geometry() {
    let start = Instant::now();
    let mut smp = Sampler::new(303);
    let mut skew = 0.0f64;
    let mut lift_dep = 0.0f64;
    let mut moment = 0.0f64;
    let mut roundtrip = 0.0f64;
    let mut two_form = 0.0f64;
    for trial in 0..120 {
        let n = 2 + (trial % 2);
        let k = 2 + (trial % 2);
        let (pt, _) = smp.orbit_point(n, k).unwrap();
        let v = smp.tangent_lift(n, k, 1.0);
        let w = smp.tangent_lift(n, k, 1.0);

        // skewness
        let ab = omega_extended(&pt, &v, &w).unwrap();
        let ba = omega_extended(&pt, &w, &v).unwrap();
        skew = skew.max((ab + ba).norm() / (1.0 + ab.norm()));

        // lift independence along stabiliser directions
        let (_, kernel) = lift_map_rank_and_kernel(&pt).unwrap();
        for kv in kernel.iter().take(2) {
            let shifted = v.add(kv);
            let got = omega_extended(&pt, &shifted, &w).unwrap();
            lift_dep = lift_dep.max((got - ab).norm() / (1.0 + ab.norm()));
        }

        // finite-difference moment-map identity for mu_G
        let xi = smp.matrix(n, 1.0);
        let amb = ambient_from_lift(&pt, &v).unwrap();
        let h = 1e-4;
        let mu = |s: f64| -> C64 {
            let res = pt.a.residue() + amb.da.residue().scale(C64::new(s, 0.0));
            (res * &xi).trace()
        };
        let fd = (mu(h) - mu(-h)) / C64::new(2.0 * h, 0.0);
        let om = omega_extended(&pt, &v, &fundamental_lift(&xi, k)).unwrap();
        moment = moment.max((fd - om).norm() / (1.0 + om.norm()));

        // decoupling round-trip and two-form agreement
        let dp = decouple(&pt).unwrap();
        let back = recouple(&dp).unwrap();
        for l in 1..=k {
            roundtrip = roundtrip.max((back.a.coeff_of(l) - pt.a.coeff_of(l)).norm_max());
        }
        roundtrip = roundtrip.max((back.g0 - pt.g0.clone()).norm_max());

        let push = |v: &TangentLift| {
            let amb = ambient_from_lift(&pt, v).unwrap();
            let xi = v.x.coeffs[0].clone();
            let sdot = amb.da.residue().clone();
            let xt = v.x.conj_by(&pt.g0).unwrap();
            let mut y = JetAlgebraElement::zero(n, k);
            for j in 1..k {
                y.coeffs[j] = xt.coeffs[j].clone();
            }
            (xi, sdot, y)
        };
        let (x1, s1, y1) = push(&v);
        let (x2, s2, y2) = push(&w);
        let split = omega_cotangent(&dp.s, &x1, &s1, &x2, &s2) + omega_orbit_b(&dp.b, &y1, &y2).unwrap();
        two_form = two_form.max((ab - split).norm() / (1.0 + ab.norm()));
    }
    // gauge invariance of the reduced form: shifting one lift pair by the
    // same fundamental direction at every pole is a degenerate direction
    let mut gauge_dep = 0.0f64;
    {
        let mut smp2 = Sampler::new(3031);
        for _ in 0..20 {
            let lam = smp2.distinct_mod_z(2);
            let p1 = ExtendedOrbitPoint {
                g0: CMatrix::identity(2),
                a: PrincipalPart::new(vec![lam.clone()]).unwrap(),
            };
            let p2 = ExtendedOrbitPoint {
                g0: CMatrix::identity(2),
                a: PrincipalPart::new(vec![lam.scale(C64::new(-1.0, 0.0))]).unwrap(),
            };
            let points = vec![p1, p2];
            let v = smp2.level_set_lifts(&points, 0.7).unwrap();
            let w = smp2.level_set_lifts(&points, 0.7).unwrap();
            let base = moduli_form(&points, &v, &w, 1e-6).unwrap();
            let xi = smp2.matrix(2, 0.6);
            let shifted: Vec<TangentLift> = v
                .iter()
                .map(|l| l.add(&fundamental_lift(&xi, 1)))
                .collect();
            let moved = moduli_form(&points, &shifted, &w, 1e-6).unwrap();
            gauge_dep = gauge_dep.max((moved - base).norm() / (1.0 + base.norm()));
        }
    }

    let dt = start.elapsed().as_secs_f64();
    let pass = skew <= 1e-10 && lift_dep <= 1e-10 && moment <= 1e-6 && roundtrip <= 1e-12
        && two_form <= 1e-9 && gauge_dep <= 1e-9 && dt <= 30.0;
    report(
        "criterion 3 (orbit geometry)",
        pass,
        &format!(
            "skew {skew:.1e}, lift-dep {lift_dep:.1e}, moment {moment:.1e}, roundtrip {roundtrip:.1e}, split {two_form:.1e}, gauge {gauge_dep:.1e}, {dt:.1}s"
        ),
    );
}

#[test]
fn criterion_4_monodromy_relation_and_degree() {
    let start = Instant::now();
    let mut smp = Sampler::new(404);
    let params = NumericParams::default();
    let mut worst_residual = 0.0f64;
    let mut worst_degree = 0.0f64;
    let mut worst_liouville = 0.0f64;
    for _ in 0..20 {
        let (conn, framings) = smp.simple_pole_connection(2, 3).unwrap();
        let engine = MonodromyEngine::new(&conn, framings, params.clone()).unwrap();
        let tent = engine.default_tentacles().unwrap();
        let md = engine.monodromy_data(&tent).unwrap();
        worst_residual = worst_residual.max(md.relation_residual);
        worst_degree = worst_degree.max(degree_of(&md).abs());

        // Liouville determinant cross-check of the degree:
        // sum Tr Lambda' = (1/2 pi i) sum of contour integrals of tr A
        let mut total = C64::new(0.0, 0.0);
        for (i, a) in conn.positions.iter().enumerate() {
            let circle = PolylinePath::circle(*a, tent.arms[i].radius, 0.37).unwrap();
            let coeff = |z: C64| conn.evaluate(z).unwrap();
            total += integrate_trace(coeff, &circle, 1e-11).unwrap();
        }
        let contour_degree = total / C64::new(0.0, TAU);
        worst_liouville = worst_liouville.max((contour_degree - md.degree).norm());
    }
    let dt = start.elapsed().as_secs_f64();
    let pass =
        worst_residual <= 1e-8 && worst_degree <= 1e-8 && worst_liouville <= 1e-7 && dt <= 120.0;
    report(
        "criterion 4 (monodromy relation and degree)",
        pass,
        &format!(
            "20 instances: residual {worst_residual:.1e}, degree {worst_degree:.1e}, contour {worst_liouville:.1e}, {dt:.1}s"
        ),
    );
}

#[test]
fn criterion_5_irregular_stokes_cross_check() {
    let start = Instant::now();
    let mut smp = Sampler::new(505);
    let mut worst_loop = 0.0f64;
    let mut worst_stability = 0.0f64;
    for _ in 0..5 {
        let (conn, framings) = smp.irregular_plus_simple(2, 2).unwrap();
        let params = NumericParams::default();
        let engine = MonodromyEngine::new(&conn, framings.clone(), params.clone()).unwrap();
        let tent = engine.default_tentacles().unwrap();
        let (sm, _) = engine.stokes_numeric(0, &tent.arms[0]).unwrap();
        let loop_val = engine.local_loop_transport(0, &tent.arms[0]).unwrap();
        worst_loop = worst_loop.max((loop_val - local_monodromy(&sm)).norm_max());

        // refinement: tol/2, N+2
        let refined = NumericParams {
            tol: params.tol / 2.0,
            extra_orders: params.extra_orders + 2,
            ..params.clone()
        };
        let engine2 = MonodromyEngine::new(&conn, framings, refined).unwrap();
        let (sm2, _) = engine2.stokes_numeric(0, &tent.arms[0]).unwrap();
        for (a, b) in sm.s.iter().zip(sm2.s.iter()) {
            worst_stability = worst_stability.max((a - b).norm_max());
        }
        worst_stability = worst_stability
            .max((sm.lambda_prime.clone() - sm2.lambda_prime.clone()).norm_max());
    }
    let dt = start.elapsed().as_secs_f64();
    let pass = worst_loop <= 1e-6 && worst_stability <= 1e-6 && dt <= 300.0;
    report(
        "criterion 5 (irregular Stokes cross-check)",
        pass,
        &format!("5 instances: loop {worst_loop:.1e}, refinement {worst_stability:.1e}, {dt:.1}s"),
    );
}

fn schlesinger_state(seed: u64) -> FlowState {
    let mut smp = Sampler::new(seed);
    let (conn, framings) = smp.simple_pole_connection(2, 3).unwrap();
    FlowState {
        positions: conn.positions.clone(),
        irregular: vec![vec![]; 3],
        parts: conn.parts.clone(),
        framings: framings.framings.clone(),
    }
    .gauged_to_slice()
    .unwrap()
}

/// Closed pole-position loop of total length 1: pole 2 runs around a circle
/// of circumference 1, discretised as a hexagon of chords.
fn unit_closed_loop(st: &FlowState) -> Vec<DeformationPoint> {
    let radius = 1.0 / TAU;
    let sides = 6;
    let center = st.positions[2];
    let mut path = Vec::with_capacity(sides);
    for s in 1..=sides {
        let th = TAU * s as f64 / sides as f64;
        let mut p = DeformationPoint::of(st);
        // start of the loop is the state's own position: offset the circle
        p.positions[2] = center + C64::from_polar(radius, th) - C64::new(radius, 0.0);
        path.push(p);
    }
    path
}

#[test]
fn criterion_6_isomonodromy_invariance() {
    let start = Instant::now();
    let st = schlesinger_state(606);
    // shift the starting point onto the circle so the loop closes exactly
    let path = unit_closed_loop(&st);
    let mut smp = Sampler::new(607);
    let points = st.orbit_points();
    let v1 = smp.level_set_lifts(&points, 0.6).unwrap();
    let v2 = smp.level_set_lifts(&points, 0.6).unwrap();
    let params = NumericParams::default();
    let rep = invariance_report(&st, &path, &v1, &v2, 1e-11, 1e-5, 2, &params).unwrap();
    let dt = start.elapsed().as_secs_f64();
    let pass = rep.monodromy_drift <= 1e-6 && dt <= 300.0;
    report(
        "criterion 6 (isomonodromic invariance of monodromy)",
        pass,
        &format!(
            "drift {:.1e} over {} checkpoints, {dt:.1}s",
            rep.monodromy_drift, rep.checkpoints_used
        ),
    );
}

#[test]
fn criterion_7_symplectic_invariance() {
    let start = Instant::now();
    // Schlesinger loop
    let st = schlesinger_state(707);
    let path = unit_closed_loop(&st);
    let mut smp = Sampler::new(708);
    let points = st.orbit_points();
    let v1 = smp.level_set_lifts(&points, 0.6).unwrap();
    let v2 = smp.level_set_lifts(&points, 0.6).unwrap();
    let params = NumericParams::default();
    let rep = invariance_report(&st, &path, &v1, &v2, 1e-11, 1e-5, 1, &params).unwrap();
    let schlesinger_drift = rep.symplectic_drift;

    // Dubrovin configuration: order (2,1), deforming the irregular type
    let mut smp2 = Sampler::new(709);
    let (conn, framings) = smp2.irregular_plus_simple(2, 2).unwrap();
    let fg = formal_diagonalize(&conn.parts[0], &framings.framings[0], 2).unwrap();
    let st2 = FlowState {
        positions: conn.positions.clone(),
        irregular: vec![vec![fg.normal_form.q_coeffs[0].clone()], vec![]],
        parts: conn.parts.clone(),
        framings: framings.framings.clone(),
    }
    .gauged_to_slice()
    .unwrap();
    // closed loop in the leading irregular coefficient
    let sides = 4;
    let eps = 0.08;
    let mut path2 = Vec::with_capacity(sides);
    for s in 1..=sides {
        let th = TAU * s as f64 / sides as f64;
        let mut p = DeformationPoint::of(&st2);
        let bump = C64::from_polar(eps, th) - C64::new(eps, 0.0);
        let mut q = st2.irregular[0][0].clone();
        q[(0, 0)] += bump;
        q[(1, 1)] -= bump * C64::new(0.5, 0.2);
        p.irregular[0][0] = q;
        path2.push(p);
    }
    // close the loop exactly
    path2.last_mut().unwrap().irregular = st2.irregular.clone();
    let points2 = st2.orbit_points();
    let w1 = smp2.level_set_lifts(&points2, 0.4).unwrap();
    let w2 = smp2.level_set_lifts(&points2, 0.4).unwrap();
    let rep2 = invariance_report(&st2, &path2, &w1, &w2, 1e-11, 1e-5, 1, &params).unwrap();
    let dubrovin_drift = rep2.symplectic_drift;

    let dt = start.elapsed().as_secs_f64();
    let pass = schlesinger_drift <= 1e-5 && dubrovin_drift <= 1e-5 && dt <= 600.0;
    report(
        "criterion 7 (symplectic invariance)",
        pass,
        &format!("schlesinger {schlesinger_drift:.1e}, dubrovin {dubrovin_drift:.1e}, {dt:.1}s"),
    );
}

#[test]
fn criterion_8_consistency_of_general_equations() {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut smp = Sampler::new(808);
    for seed in 0..100 {
        let st = schlesinger_state(9000 + seed);
        let da: Vec<C64> = (0..3).map(|_| smp.c64(1.0)).collect();
        let t = DeformationTangent { da: da.clone(), dq: vec![vec![], vec![], vec![]] };
        let der = jmu_rhs(&st, &t).unwrap();
        let table = schlesinger_rhs(&st).unwrap();
        for i in 0..3 {
            let mut want = CMatrix::zeros(2);
            for j in 0..3 {
                want = want + table[i][j].scale(da[j]);
            }
            worst = worst.max((&der.parts_dot[i][0] - &want).norm_max());
        }
    }

    // Lambda constant along flows: one Schlesinger edge, one irregular edge
    let mut lambda_drift = 0.0f64;
    {
        let st = schlesinger_state(606);
        let mut target = DeformationPoint::of(&st);
        target.positions[1] += C64::new(0.2, -0.15);
        let out = integrate_flow(&st, &[target], 1e-11).unwrap();
        for (a, b) in st.lambdas().unwrap().iter().zip(out.lambdas().unwrap().iter()) {
            lambda_drift = lambda_drift.max((a - b).norm_fro());
        }
    }
    {
        let mut smp2 = Sampler::new(811);
        let (conn, framings) = smp2.irregular_plus_simple(2, 2).unwrap();
        let fg = formal_diagonalize(&conn.parts[0], &framings.framings[0], 2).unwrap();
        let st2 = FlowState {
            positions: conn.positions.clone(),
            irregular: vec![vec![fg.normal_form.q_coeffs[0].clone()], vec![]],
            parts: conn.parts.clone(),
            framings: framings.framings.clone(),
        }
        .gauged_to_slice()
        .unwrap();
        let mut target = DeformationPoint::of(&st2);
        target.positions[1] += C64::new(0.15, 0.1);
        target.irregular[0][0][(0, 0)] += C64::new(0.05, -0.04);
        let out = integrate_flow(&st2, &[target], 1e-11).unwrap();
        for (a, b) in st2.lambdas().unwrap().iter().zip(out.lambdas().unwrap().iter()) {
            lambda_drift = lambda_drift.max((a - b).norm_fro());
        }
    }
    let dt = start.elapsed().as_secs_f64();
    let pass = worst <= 1e-9 && lambda_drift <= 1e-8;
    report(
        "criterion 8 (general equations reduce to Schlesinger)",
        pass,
        &format!("100 states: max deviation {worst:.1e}, lambda drift {lambda_drift:.1e}, {dt:.1}s"),
    );
}

/// Supplementary: closedness probe of the extended-orbit form in the flat
/// winding chart, by the cyclic finite-difference exterior derivative.
#[test]
fn supplementary_closedness_probe() {
    let mut smp = Sampler::new(909);
    let (n, k) = (2usize, 2usize);
    let nf = smp.normal_form(n, k);
    let a0 = smp.irregular_dual(&nf).unwrap();
    let g = smp.jet_group(n, k).unwrap();
    let r0 = smp.diagonal(n, 0.3);

    // three directions in the flat chart G_k x t*
    let dirs: Vec<(Vec<CMatrix>, CMatrix)> = (0..3)
        .map(|_| {
            let eta: Vec<CMatrix> = (0..k).map(|_| smp.matrix(n, 0.4)).collect();
            (eta, smp.diagonal(n, 0.4))
        })
        .collect();

    let chart_point = |s: &[f64]| -> (JetGroupElement, CMatrix) {
        let mut coeffs: Vec<CMatrix> = g.coeffs().to_vec();
        let mut r = r0.clone();
        for (si, (eta, rho)) in s.iter().zip(dirs.iter()) {
            for (c, e) in coeffs.iter_mut().zip(eta.iter()) {
                *c = &*c + e.scale(C64::new(*si, 0.0));
            }
            r = r + rho.scale(C64::new(*si, 0.0));
        }
        (JetGroupElement::new(coeffs).unwrap(), r)
    };

    // pulled-back two-form evaluated on chart directions (p, q) at chart point s
    let omega_chart = |s: &[f64], p: usize, q: usize| -> C64 {
        let (gj, r) = chart_point(s);
        let pt = winding(&gj, &r, &a0).unwrap();
        let lift = |d: usize| -> TangentLift {
            // curve g + s eta: the tangent lift is X = g^{-1} eta
            let eta = JetAlgebraElement { coeffs: dirs[d].0.clone() };
            TangentLift { x: gj.inverse_mul(&eta).unwrap(), rdot: dirs[d].1.clone() }
        };
        omega_extended(&pt, &lift(p), &lift(q)).unwrap()
    };

    let h = 1e-4;
    let base = [0.0f64; 3];
    let deriv = |f: &dyn Fn(&[f64]) -> C64, dir: usize, at: &[f64]| -> C64 {
        let mut plus = at.to_vec();
        plus[dir] += h;
        let mut minus = at.to_vec();
        minus[dir] -= h;
        (f(&plus) - f(&minus)) / C64::new(2.0 * h, 0.0)
    };
    // d omega (e0, e1, e2) = d_0 omega(1,2) - d_1 omega(0,2) + d_2 omega(0,1)
    let t0 = deriv(&|s: &[f64]| omega_chart(s, 1, 2), 0, &base);
    let t1 = deriv(&|s: &[f64]| omega_chart(s, 0, 2), 1, &base);
    let t2 = deriv(&|s: &[f64]| omega_chart(s, 0, 1), 2, &base);
    let d_omega = t0 - t1 + t2;
    let scale = omega_chart(&base, 0, 1).norm().max(1.0);
    let pass = d_omega.norm() <= 1e-6 * scale;
    report(
        "supplementary (closedness probe)",
        pass,
        &format!("|d omega| = {:.1e} (scale {scale:.1e})", d_omega.norm()),
    );
}
