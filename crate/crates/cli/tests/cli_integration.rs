//! End-to-end tests of the batch interface: exit codes, report files,
//! determinism of report bodies.

use imd_core::sampling::Sampler;
use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_imd")
}

fn tmp_dir(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("imd-cli-test-{name}-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn write_config(dir: &Path, value: &Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_string_pretty(value).unwrap()).unwrap();
    path
}

fn run(cmd: &str, config: &Path, out: &Path, extra: &[&str]) -> (i32, String) {
    let output = Command::new(bin())
        .arg(cmd)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .args(extra)
        .output()
        .expect("spawn imd");
    let code = output.status.code().unwrap_or(-1);
    let text = String::from_utf8_lossy(&output.stderr).to_string()
        + &String::from_utf8_lossy(&output.stdout);
    (code, text)
}

fn scalar_two_pole_config() -> Value {
    // n = 1, residues lambda and -lambda
    json!({
        "connection": {
            "rank": 1,
            "poles": [
                { "position": [0.0, 0.0], "order": 1, "principal_part": [ [[[0.3, -0.1]]] ] },
                { "position": [1.5, 0.4], "order": 1, "principal_part": [ [[[-0.3, 0.1]]] ] }
            ]
        }
    })
}

#[test]
fn validate_scalar_example_passes() {
    let dir = tmp_dir("validate");
    let cfg = write_config(&dir, &scalar_two_pole_config());
    let (code, _) = run("validate", &cfg, &dir, &[]);
    assert_eq!(code, 0);
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["passes"], json!(true));
    let residue = report["report"]["residue_sum_norm"].as_f64().unwrap();
    assert!(residue < 1e-14);
}

#[test]
fn validate_rejects_integer_gap() {
    // residues diag(1,0) / diag(-1,0): eigenvalues coincide mod Z
    let dir = tmp_dir("invalid");
    let cfg = write_config(
        &dir,
        &json!({
            "connection": {
                "rank": 2,
                "poles": [
                    { "position": [0.0, 0.0], "order": 1,
                      "principal_part": [ [[[1.0,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0]]] ] },
                    { "position": [1.0, 0.0], "order": 1,
                      "principal_part": [ [[[-1.0,0.0],[0.0,0.0]],[[0.0,0.0],[0.0,0.0]]] ] }
                ]
            }
        }),
    );
    let (code, _) = run("validate", &cfg, &dir, &[]);
    assert_eq!(code, 2);
}

#[test]
fn config_error_is_exit_4() {
    let dir = tmp_dir("badcfg");
    let path = dir.join("config.json");
    std::fs::write(&path, "{ not json").unwrap();
    let (code, _) = run("validate", &path, &dir, &[]);
    assert_eq!(code, 4);
    // unknown key is a schema error
    let cfg = write_config(&dir, &json!({"connection": {"rank": 1, "poles": []}, "bogus": 1}));
    let (code, _) = run("validate", &cfg, &dir, &[]);
    assert_eq!(code, 4);
}

#[test]
fn monodromy_diagonal_connection_trivial_stokes() {
    let dir = tmp_dir("monodiag");
    // diagonal order-2 pole at 0 plus balancing diagonal simple pole
    let cfg = write_config(
        &dir,
        &json!({
            "connection": {
                "rank": 2,
                "poles": [
                    { "position": [0.0, 0.0], "order": 2,
                      "principal_part": [
                        [[[1.0,0.2],[0.0,0.0]],[[0.0,0.0],[-0.7,-0.4]]],
                        [[[0.21,0.0],[0.0,0.0]],[[0.0,0.0],[-0.33,0.1]]]
                      ] },
                    { "position": [2.0, 0.0], "order": 1,
                      "principal_part": [
                        [[[-0.21,0.0],[0.0,0.0]],[[0.0,0.0],[0.33,-0.1]]]
                      ] }
                ]
            }
        }),
    );
    let (code, text) = run("monodromy", &cfg, &dir, &[]);
    assert_eq!(code, 0, "{text}");
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    let s_list = report["report"]["poles"][0]["S"].as_array().unwrap();
    assert_eq!(s_list.len(), 2);
    for s in s_list {
        // unipotent with negligible off-diagonal entries
        let m = s.as_array().unwrap();
        let off01 = m[0].as_array().unwrap()[1].as_array().unwrap();
        assert!(off01[0].as_f64().unwrap().abs() < 1e-7);
    }
    let residual = report["report"]["relation_residual"].as_f64().unwrap();
    assert!(residual < 1e-8, "residual {residual}");
}

fn schlesinger_config(seed: u64) -> Value {
    let mut smp = Sampler::new(seed);
    let (conn, _) = smp.simple_pole_connection(2, 3).unwrap();
    let pole = |i: usize| {
        let a = conn.positions[i];
        let r = conn.parts[i].residue();
        json!({
            "position": [a.re, a.im],
            "order": 1,
            "principal_part": [
                [
                    [[r[(0,0)].re, r[(0,0)].im], [r[(0,1)].re, r[(0,1)].im]],
                    [[r[(1,0)].re, r[(1,0)].im], [r[(1,1)].re, r[(1,1)].im]]
                ]
            ]
        })
    };
    // short open deformation: move pole 3 slightly
    let shifted = conn.positions[2] + num_complex::Complex64::new(0.08, 0.05);
    json!({
        "connection": { "rank": 2, "poles": [pole(0), pole(1), pole(2)] },
        "flow_path": [ {
            "positions": [
                [conn.positions[0].re, conn.positions[0].im],
                [conn.positions[1].re, conn.positions[1].im],
                [shifted.re, shifted.im]
            ]
        } ],
        "params": { "checkpoints": 2, "seed": 7 }
    })
}

#[test]
fn schlesinger_flow_writes_trajectory_and_passes() {
    let dir = tmp_dir("schlesinger");
    let cfg = write_config(&dir, &schlesinger_config(23));
    let (code, text) = run("schlesinger", &cfg, &dir, &[]);
    assert_eq!(code, 0, "{text}");
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["passes"], json!(true));
    let drift = report["report"]["monodromy_drift"].as_f64().unwrap();
    assert!(drift < 1e-6, "drift {drift}");
    let csv = std::fs::read_to_string(dir.join("trajectory.csv")).unwrap();
    let mut lines = csv.lines();
    let header = lines.next().unwrap();
    assert!(header.starts_with("step,s,a1_re,a1_im"));
    assert!(header.ends_with("monodromy_drift,lambda_drift"));
    assert_eq!(lines.count(), 3); // initial row + 2 checkpoints
}

#[test]
fn reports_are_deterministic_for_fixed_seed() {
    let dir1 = tmp_dir("det1");
    let dir2 = tmp_dir("det2");
    let cfg_val = schlesinger_config(31);
    let cfg1 = write_config(&dir1, &cfg_val);
    let cfg2 = write_config(&dir2, &cfg_val);
    let (c1, t1) = run("monodromy", &cfg1, &dir1, &["--seed", "5"]);
    let (c2, t2) = run("monodromy", &cfg2, &dir2, &["--seed", "5"]);
    assert_eq!(c1, 0, "{t1}");
    assert_eq!(c2, 0, "{t2}");
    let r1 = std::fs::read(dir1.join("report.json")).unwrap();
    let r2 = std::fs::read(dir2.join("report.json")).unwrap();
    assert_eq!(r1, r2, "report bodies differ between identical runs");
}

#[test]
fn jmu_holds_irregular_type_when_vertex_omits_it() {
    // order-(2,1) configuration; the flow vertex moves only the simple pole
    // and says nothing about the irregular type, which must stay put
    let dir = tmp_dir("jmuhold");
    let mut smp = Sampler::new(71);
    let (conn, _) = smp.irregular_plus_simple(2, 2).unwrap();
    let mat = |m: &imd_core::matcore::CMatrix| -> Value {
        json!([
            [[m[(0,0)].re, m[(0,0)].im], [m[(0,1)].re, m[(0,1)].im]],
            [[m[(1,0)].re, m[(1,0)].im], [m[(1,1)].re, m[(1,1)].im]]
        ])
    };
    let shifted = conn.positions[1] + num_complex::Complex64::new(0.1, -0.05);
    let cfg = json!({
        "connection": { "rank": 2, "poles": [
            { "position": [conn.positions[0].re, conn.positions[0].im], "order": 2,
              "principal_part": [mat(conn.parts[0].coeff_of(2)), mat(conn.parts[0].coeff_of(1))] },
            { "position": [conn.positions[1].re, conn.positions[1].im], "order": 1,
              "principal_part": [mat(conn.parts[1].coeff_of(1))] }
        ]},
        "flow_path": [ { "positions": [
            [conn.positions[0].re, conn.positions[0].im],
            [shifted.re, shifted.im]
        ] } ],
        "params": { "checkpoints": 2, "seed": 3 }
    });
    let cfg = write_config(&dir, &cfg);
    let (code, text) = run("jmu", &cfg, &dir, &[]);
    assert_eq!(code, 0, "{text}");
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["passes"], json!(true));
    let ldrift = report["report"]["lambda_drift"].as_f64().unwrap();
    assert!(ldrift < 1e-8, "lambda drift {ldrift}");
}

#[test]
fn check_command_aggregates() {
    let dir = tmp_dir("check");
    let cfg = write_config(&dir, &schlesinger_config(47));
    let (code, text) = run("check", &cfg, &dir, &[]);
    assert_eq!(code, 0, "{text}");
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(dir.join("report.json")).unwrap()).unwrap();
    assert_eq!(report["report"]["passes"], json!(true));
    assert_eq!(report["report"]["relation_ok"], json!(true));
    assert_eq!(report["report"]["flow"]["ran"], json!(true));
    assert_eq!(report["report"]["flow"]["exit"], json!(0));
}
