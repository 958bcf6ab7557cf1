//! JSON report building: complex scalars serialise as [re, im], matrices as
//! row-major nested arrays, permutations as 0-based image lists. Keys are
//! emitted in sorted order, so identical inputs give byte-identical bodies.

use imd_core::matcore::CMatrix;
use num_complex::Complex64 as C64;
use serde_json::{json, Map, Value};

pub fn complex_json(z: C64) -> Value {
    json!([z.re, z.im])
}

pub fn matrix_json(m: &CMatrix) -> Value {
    let n = m.dim();
    let rows: Vec<Value> = (0..n)
        .map(|i| Value::Array((0..n).map(|j| complex_json(m[(i, j)])).collect()))
        .collect();
    Value::Array(rows)
}

pub fn diag_json(m: &CMatrix) -> Value {
    Value::Array(m.diagonal().into_iter().map(complex_json).collect())
}

pub fn params_echo(p: &crate::config::ParamSpec) -> Value {
    json!({
        "tol": p.tol,
        "match_tol": p.match_tol,
        "support_tol": p.support_tol,
        "extra_orders": p.extra_orders,
        "seed": p.seed,
        "checkpoints": p.checkpoints,
        "fd_step": p.fd_step,
        "flow_tol": p.flow_tol,
        "residual_tol": p.residual_tol,
        "monodromy_drift_tol": p.monodromy_drift_tol,
        "symplectic_drift_tol": p.symplectic_drift_tol,
    })
}

pub fn wrap(command: &str, params: &crate::config::ParamSpec, body: Value) -> Value {
    let mut map = Map::new();
    map.insert("command".into(), json!(command));
    map.insert("version".into(), json!(env!("CARGO_PKG_VERSION")));
    map.insert("params".into(), params_echo(params));
    map.insert("report".into(), body);
    Value::Object(map)
}

pub fn write_report(out_dir: &std::path::Path, value: &Value) -> anyhow::Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let path = out_dir.join("report.json");
    std::fs::write(&path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}
