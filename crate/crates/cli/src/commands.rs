//! The batch commands. All exit-code policy lives here: Ok(0) success,
//! 2 validation failure, 3 numerical tolerance failure, 4 config error
//! (the caller maps errors from config loading to 4).

use crate::config::{self, JobConfig};
use crate::report::{complex_json, diag_json, matrix_json, wrap, write_report};
use anyhow::{anyhow, Result};
use imd_core::connection_model::validate;
use imd_core::isomonodromy_flows::{
    integrate_flow, invariance_report, monodromy_invariants, refit_framings, DeformationPoint,
    FlowState,
};
use imd_core::matcore::CMatrix;
use imd_core::monodromy_numeric::{degree_of, Arm, MonodromyEngine, Tentacles};
use imd_core::orbit_geometry::{
    ambient_from_lift, decouple, fundamental_lift, moduli_form, omega_extended, recouple,
};
use imd_core::sampling::Sampler;
use imd_core::stokes_data::{anti_stokes, local_monodromy};
use num_complex::Complex64 as C64;
use serde_json::{json, Value};
use std::path::Path;

pub fn run(command: &str, cfg: &JobConfig, out_dir: &Path) -> Result<i32> {
    match command {
        "validate" => cmd_validate(cfg, out_dir),
        "stokes" => cmd_stokes(cfg, out_dir),
        "monodromy" => cmd_monodromy(cfg, out_dir),
        "orbit" => cmd_orbit(cfg, out_dir),
        "schlesinger" => cmd_flow(cfg, out_dir, true),
        "jmu" => cmd_flow(cfg, out_dir, false),
        "check" => cmd_check(cfg, out_dir),
        other => Err(anyhow!("unknown command {other}")),
    }
}

fn validation_body(conn: &imd_core::connection_model::MeromorphicConnection) -> (Value, bool) {
    let rep = validate(conn);
    let poles: Vec<Value> = rep
        .poles
        .iter()
        .map(|p| {
            json!({
                "order": p.order,
                "generic": p.generic,
                "detail": p.detail,
                "eigenvalue_gap": p.eigenvalue_gap,
            })
        })
        .collect();
    (
        json!({
            "passes": rep.passes,
            "residue_sum_norm": rep.residue_sum_norm,
            "scale": rep.scale,
            "poles": poles,
        }),
        rep.passes,
    )
}

fn cmd_validate(cfg: &JobConfig, out_dir: &Path) -> Result<i32> {
    let conn = config::build_connection(&cfg.connection)?;
    let (body, passes) = validation_body(&conn);
    write_report(out_dir, &wrap("validate", &cfg.params, body))?;
    Ok(if passes { 0 } else { 2 })
}

fn tentacles_for(
    engine: &MonodromyEngine<'_>,
    cfg: &JobConfig,
) -> Result<Tentacles> {
    let mut tent = engine.default_tentacles().map_err(|e| anyhow!("{e}"))?;
    if let Some(spec) = &cfg.tentacles {
        if let Some(bp) = &spec.base_point {
            tent.base_point = config::complex(bp);
        }
        if let Some(arms) = &spec.arms {
            if arms.len() != tent.arms.len() {
                return Err(anyhow!("tentacle override arity"));
            }
            for (arm, s) in tent.arms.iter_mut().zip(arms.iter()) {
                arm.angle = s.angle;
                arm.radius = s.radius;
            }
        }
        // rebuild straight arms from the (possibly moved) base point
        let positions = engine.conn.positions.clone();
        let rebuilt: Vec<Arm> = positions
            .iter()
            .zip(tent.arms.iter())
            .map(|(a, arm)| {
                let m = a + C64::from_polar(arm.radius, arm.angle);
                Ok(Arm {
                    angle: arm.angle,
                    radius: arm.radius,
                    path: imd_core::matcore::PolylinePath::segment(tent.base_point, m)
                        .map_err(|e| anyhow!("{e}"))?,
                })
            })
            .collect::<Result<_>>()?;
        tent.arms = rebuilt;
    }
    Ok(tent)
}

fn cmd_stokes(cfg: &JobConfig, out_dir: &Path) -> Result<i32> {
    let conn = config::build_connection(&cfg.connection)?;
    let (vbody, passes) = validation_body(&conn);
    if !passes {
        write_report(out_dir, &wrap("stokes", &cfg.params, json!({"validation": vbody})))?;
        return Ok(2);
    }
    let framings = config::build_framings(&cfg.connection, &conn)?;
    let engine = MonodromyEngine::new(&conn, framings, cfg.params.numeric())
        .map_err(|e| anyhow!("{e}"))?;
    let tent = tentacles_for(&engine, cfg)?;

    let mut poles = Vec::new();
    let mut numerical_ok = true;
    for i in 0..conn.num_poles() {
        let prep = &engine.preps[i];
        let aset = anti_stokes(&prep.nf).map_err(|e| anyhow!("{e}"))?;
        let directions: Vec<Value> = aset
            .directions
            .iter()
            .map(|d| {
                json!({
                    "angle": d.angle,
                    "roots": d.roots.iter().map(|&(a, b)| json!([a, b])).collect::<Vec<_>>(),
                    "multiplicity": d.multiplicity(),
                })
            })
            .collect();
        let stokes = match engine.stokes_numeric(i, &tent.arms[i]) {
            Ok((sm, defect)) => {
                json!({
                    "S": sm.s.iter().map(matrix_json).collect::<Vec<_>>(),
                    "P": sm.perm,
                    "Lambda_prime": diag_json(&sm.lambda_prime),
                    "projection_defect": defect,
                    "local_monodromy": matrix_json(&local_monodromy(&sm)),
                })
            }
            Err(e) => {
                numerical_ok = false;
                json!({ "error": format!("{e}") })
            }
        };
        poles.push(json!({
            "order": conn.parts[i].order(),
            "anti_stokes": directions,
            "q_coefficients": prep.nf.q_coeffs.iter().map(diag_json).collect::<Vec<_>>(),
            "Lambda": diag_json(&prep.nf.lambda),
            "matching_radius": tent.arms[i].radius,
            "matching_angle": tent.arms[i].angle,
            "stokes": stokes,
        }));
    }
    let body = json!({ "validation": vbody, "poles": poles });
    write_report(out_dir, &wrap("stokes", &cfg.params, body))?;
    Ok(if numerical_ok { 0 } else { 3 })
}

fn cmd_monodromy(cfg: &JobConfig, out_dir: &Path) -> Result<i32> {
    let conn = config::build_connection(&cfg.connection)?;
    let (vbody, passes) = validation_body(&conn);
    if !passes {
        write_report(out_dir, &wrap("monodromy", &cfg.params, json!({"validation": vbody})))?;
        return Ok(2);
    }
    let framings = config::build_framings(&cfg.connection, &conn)?;
    let engine = MonodromyEngine::new(&conn, framings, cfg.params.numeric())
        .map_err(|e| anyhow!("{e}"))?;
    let tent = tentacles_for(&engine, cfg)?;
    let md = engine.monodromy_data(&tent).map_err(|e| anyhow!("{e}"))?;

    let poles: Vec<Value> = md
        .poles
        .iter()
        .map(|p| {
            json!({
                "C": matrix_json(&p.connection_matrix),
                "S": p.stokes.s.iter().map(matrix_json).collect::<Vec<_>>(),
                "Lambda": diag_json(&p.stokes.lambda_prime),
                "P": p.stokes.perm,
                "projection_defect": p.projection_defect,
                "frame_error_estimate": p.frame_error_estimate,
            })
        })
        .collect();
    let body = json!({
        "validation": vbody,
        "poles": poles,
        "relation_residual": md.relation_residual,
        "degree": complex_json(md.degree),
        "base_point": complex_json(tent.base_point),
    });
    write_report(out_dir, &wrap("monodromy", &cfg.params, body))?;
    let ok = md.relation_residual <= cfg.params.residual_tol
        && degree_of(&md).abs() <= cfg.params.residual_tol;
    Ok(if ok { 0 } else { 3 })
}

fn cmd_orbit(cfg: &JobConfig, out_dir: &Path) -> Result<i32> {
    let conn = config::build_connection(&cfg.connection)?;
    let (vbody, passes) = validation_body(&conn);
    if !passes {
        write_report(out_dir, &wrap("orbit", &cfg.params, json!({"validation": vbody})))?;
        return Ok(2);
    }
    let framings = config::build_framings(&cfg.connection, &conn)?;
    let n = conn.rank();
    let mut smp = Sampler::new(cfg.params.seed);

    let state = FlowState {
        positions: conn.positions.clone(),
        irregular: {
            let mut out = Vec::new();
            for (part, g0) in conn.parts.iter().zip(framings.framings.iter()) {
                let fg = imd_core::connection_model::formal_diagonalize(part, g0, part.order())
                    .map_err(|e| anyhow!("{e}"))?;
                out.push(fg.normal_form.q_coeffs);
            }
            out
        },
        parts: conn.parts.clone(),
        framings: framings.framings.clone(),
    }
    .gauged_to_slice()
    .map_err(|e| anyhow!("{e}"))?;
    let points = state.orbit_points();

    // per-pole checks
    let mut skew = 0.0f64;
    let mut decouple_rt = 0.0f64;
    let mut moment = 0.0f64;
    for pt in &points {
        let k = pt.order();
        let v = smp.tangent_lift(n, k, 1.0);
        let w = smp.tangent_lift(n, k, 1.0);
        let ab = omega_extended(pt, &v, &w).map_err(|e| anyhow!("{e}"))?;
        let ba = omega_extended(pt, &w, &v).map_err(|e| anyhow!("{e}"))?;
        skew = skew.max((ab + ba).norm() / (1.0 + ab.norm()));
        if k >= 2 {
            let dp = decouple(pt).map_err(|e| anyhow!("{e}"))?;
            let back = recouple(&dp).map_err(|e| anyhow!("{e}"))?;
            for l in 1..=k {
                decouple_rt = decouple_rt.max((back.a.coeff_of(l) - pt.a.coeff_of(l)).norm_max());
            }
        }
        // moment identity (exact linearity of mu_G)
        let xi = smp.matrix(n, 1.0);
        let amb = ambient_from_lift(pt, &v).map_err(|e| anyhow!("{e}"))?;
        let lhs = (amb.da.residue() * &xi).trace();
        let rhs = omega_extended(pt, &v, &fundamental_lift(&xi, k)).map_err(|e| anyhow!("{e}"))?;
        moment = moment.max((lhs - rhs).norm() / (1.0 + rhs.norm()));
    }

    // reduced form on the moment-zero level
    let v1 = smp.level_set_lifts(&points, 0.6).map_err(|e| anyhow!("{e}"))?;
    let v2 = smp.level_set_lifts(&points, 0.6).map_err(|e| anyhow!("{e}"))?;
    let omega = moduli_form(&points, &v1, &v2, 1e-6).map_err(|e| anyhow!("{e}"))?;
    let omega_ba = moduli_form(&points, &v2, &v1, 1e-6).map_err(|e| anyhow!("{e}"))?;
    let moduli_skew = (omega + omega_ba).norm() / (1.0 + omega.norm());

    let ok = skew <= 1e-10 && decouple_rt <= 1e-12 && moment <= 1e-6 && moduli_skew <= 1e-10;
    let body = json!({
        "validation": vbody,
        "omega_skewness": skew,
        "decoupling_roundtrip": decouple_rt,
        "moment_map_identity": moment,
        "moduli_form_value": complex_json(omega),
        "moduli_form_skewness": moduli_skew,
        "passes": ok,
    });
    write_report(out_dir, &wrap("orbit", &cfg.params, body))?;
    Ok(if ok { 0 } else { 3 })
}

fn flow_state(cfg: &JobConfig) -> Result<FlowState> {
    let conn = config::build_connection(&cfg.connection)?;
    let framings = config::build_framings(&cfg.connection, &conn)?;
    let mut irregular = Vec::new();
    for (part, g0) in conn.parts.iter().zip(framings.framings.iter()) {
        let fg = imd_core::connection_model::formal_diagonalize(part, g0, part.order())
            .map_err(|e| anyhow!("{e}"))?;
        irregular.push(fg.normal_form.q_coeffs);
    }
    let st = FlowState {
        positions: conn.positions.clone(),
        irregular,
        parts: conn.parts.clone(),
        framings: framings.framings.clone(),
    }
    .gauged_to_slice()
    .map_err(|e| anyhow!("{e}"))?;
    st.validate().map_err(|e| anyhow!("{e}"))?;
    Ok(st)
}

fn write_trajectory(
    out_dir: &Path,
    st0: &FlowState,
    rows: &[(usize, f64, FlowState, f64, f64)],
) -> Result<()> {
    let n = st0.rank();
    let m = st0.num_poles();
    let mut header = vec!["step".to_string(), "s".to_string()];
    for i in 0..m {
        header.push(format!("a{}_re", i + 1));
        header.push(format!("a{}_im", i + 1));
    }
    for i in 0..m {
        for l in (1..=st0.parts[i].order()).rev() {
            for r in 0..n {
                for c in 0..n {
                    header.push(format!("A{}_{}_{}{}_re", i + 1, l, r, c));
                    header.push(format!("A{}_{}_{}{}_im", i + 1, l, r, c));
                }
            }
        }
    }
    header.push("monodromy_drift".into());
    header.push("lambda_drift".into());

    let mut text = header.join(",") + "\n";
    for (step, s, state, mdrift, ldrift) in rows {
        let mut cols = vec![format!("{step}"), format!("{s}")];
        for a in &state.positions {
            cols.push(format!("{}", a.re));
            cols.push(format!("{}", a.im));
        }
        for part in &state.parts {
            for l in (1..=part.order()).rev() {
                let mtx = part.coeff_of(l);
                for r in 0..n {
                    for c in 0..n {
                        cols.push(format!("{}", mtx[(r, c)].re));
                        cols.push(format!("{}", mtx[(r, c)].im));
                    }
                }
            }
        }
        cols.push(format!("{mdrift}"));
        cols.push(format!("{ldrift}"));
        text += &(cols.join(",") + "\n");
    }
    std::fs::create_dir_all(out_dir)?;
    std::fs::write(out_dir.join("trajectory.csv"), text)?;
    Ok(())
}

fn cmd_flow(cfg: &JobConfig, out_dir: &Path, schlesinger_only: bool) -> Result<i32> {
    let st = flow_state(cfg)?;
    if schlesinger_only && st.parts.iter().any(|p| p.order() != 1) {
        return Err(anyhow!("schlesinger command needs all simple poles (use jmu)"));
    }
    let conn0 = st.connection().map_err(|e| anyhow!("{e}"))?;
    let (vbody, passes) = validation_body(&conn0);
    let cmd_name = if schlesinger_only { "schlesinger" } else { "jmu" };
    if !passes {
        write_report(out_dir, &wrap(cmd_name, &cfg.params, json!({"validation": vbody})))?;
        return Ok(2);
    }
    let path = config::build_flow_path(cfg, &conn0, &st.irregular)?;
    let params = cfg.params.numeric();

    // fixed tentacles for checkpoint invariants
    let framings0 = refit_framings(&st).map_err(|e| anyhow!("{e}"))?;
    let engine0 = MonodromyEngine::new(&conn0, framings0, params.clone())
        .map_err(|e| anyhow!("{e}"))?;
    let tent0 = engine0.default_tentacles().map_err(|e| anyhow!("{e}"))?;
    let inv0 = monodromy_invariants(&st, &params, Some(&tent0)).map_err(|e| anyhow!("{e}"))?;
    let inv_scale = inv0.iter().map(|x| x.norm()).fold(1.0, f64::max);
    let lam0 = st.lambdas().map_err(|e| anyhow!("{e}"))?;

    // trajectory with per-checkpoint diagnostics
    let mut rows = Vec::new();
    let mut current = st.clone();
    let mut from = DeformationPoint::of(&st);
    let mut step = 0usize;
    let checkpoints = cfg.params.checkpoints.max(1);
    rows.push((0usize, 0.0f64, st.clone(), 0.0f64, 0.0f64));
    let mut skipped = 0usize;
    for (edge, target) in path.iter().enumerate() {
        for c in 1..=checkpoints {
            let sfrac = c as f64 / checkpoints as f64;
            let (positions, irregular) = {
                let w = C64::new(sfrac, 0.0);
                let positions: Vec<C64> = from
                    .positions
                    .iter()
                    .zip(target.positions.iter())
                    .map(|(a, b)| a + (b - a) * w)
                    .collect();
                let irregular: Vec<Vec<CMatrix>> = from
                    .irregular
                    .iter()
                    .zip(target.irregular.iter())
                    .map(|(qa, qb)| {
                        qa.iter()
                            .zip(qb.iter())
                            .map(|(x, y)| x + (y - x.clone()).scale(w))
                            .collect()
                    })
                    .collect();
                (positions, irregular)
            };
            let cp = DeformationPoint { positions, irregular };
            current = integrate_flow(&current, std::slice::from_ref(&cp), cfg.params.flow_tol)
                .map_err(|e| anyhow!("{e}"))?;
            step += 1;
            let s_total = edge as f64 + sfrac;
            let mdrift = match monodromy_invariants(&current, &params, Some(&tent0)) {
                Ok(inv) => inv
                    .iter()
                    .zip(inv0.iter())
                    .map(|(a, b)| (a - b).norm() / inv_scale)
                    .fold(0.0, f64::max),
                Err(_) => {
                    skipped += 1;
                    f64::NAN
                }
            };
            let ldrift = current
                .lambdas()
                .map_err(|e| anyhow!("{e}"))?
                .iter()
                .zip(lam0.iter())
                .map(|(a, b)| (a - b).norm_fro())
                .fold(0.0, f64::max);
            rows.push((step, s_total, current.clone(), mdrift, ldrift));
            from = cp;
        }
    }
    write_trajectory(out_dir, &st, &rows)?;

    // symplectic comparison over the whole path
    let mut smp = Sampler::new(cfg.params.seed);
    let points = st.orbit_points();
    let v1 = smp.level_set_lifts(&points, 0.6).map_err(|e| anyhow!("{e}"))?;
    let v2 = smp.level_set_lifts(&points, 0.6).map_err(|e| anyhow!("{e}"))?;
    let rep = invariance_report(
        &st,
        &path,
        &v1,
        &v2,
        cfg.params.flow_tol,
        cfg.params.fd_step,
        checkpoints,
        &params,
    )
    .map_err(|e| anyhow!("{e}"))?;

    let monodromy_drift = rows
        .iter()
        .map(|r| if r.3.is_nan() { 0.0 } else { r.3 })
        .fold(0.0, f64::max);
    let lambda_drift = rows.iter().map(|r| r.4).fold(0.0, f64::max);
    let ok = monodromy_drift <= cfg.params.monodromy_drift_tol
        && rep.symplectic_drift <= cfg.params.symplectic_drift_tol
        && lambda_drift <= 1e-8;
    let body = json!({
        "validation": vbody,
        "monodromy_drift": monodromy_drift,
        "symplectic_drift": rep.symplectic_drift,
        "lambda_drift": lambda_drift,
        "moment_drift": rep.moment_drift,
        "checkpoints": rows.len() - 1,
        "checkpoints_skipped": skipped,
        "passes": ok,
    });
    write_report(out_dir, &wrap(cmd_name, &cfg.params, body))?;
    Ok(if ok { 0 } else { 3 })
}

fn cmd_check(cfg: &JobConfig, out_dir: &Path) -> Result<i32> {
    let conn = config::build_connection(&cfg.connection)?;
    let (vbody, passes) = validation_body(&conn);
    if !passes {
        write_report(out_dir, &wrap("check", &cfg.params, json!({"validation": vbody})))?;
        return Ok(2);
    }
    let framings = config::build_framings(&cfg.connection, &conn)?;
    let engine = MonodromyEngine::new(&conn, framings, cfg.params.numeric())
        .map_err(|e| anyhow!("{e}"))?;
    let tent = tentacles_for(&engine, cfg)?;
    let md = engine.monodromy_data(&tent).map_err(|e| anyhow!("{e}"))?;
    let relation_ok = md.relation_residual <= cfg.params.residual_tol;
    let degree_ok = degree_of(&md).abs() <= cfg.params.residual_tol;

    let orbit_code = cmd_orbit(cfg, &out_dir.join("orbit_sub"))?;
    let flow_summary = if cfg.flow_path.is_some() {
        let code = cmd_flow(cfg, &out_dir.join("flow_sub"), false)?;
        json!({ "ran": true, "exit": code })
    } else {
        json!({ "ran": false })
    };

    let ok = relation_ok && degree_ok && orbit_code == 0;
    let body = json!({
        "validation": vbody,
        "relation_residual": md.relation_residual,
        "relation_ok": relation_ok,
        "degree": complex_json(md.degree),
        "degree_ok": degree_ok,
        "orbit_exit": orbit_code,
        "flow": flow_summary,
        "passes": ok,
    });
    write_report(out_dir, &wrap("check", &cfg.params, body))?;
    Ok(if ok { 0 } else { 3 })
}
