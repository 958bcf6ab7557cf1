//! JSON job-configuration schema and conversion into core types.
//! Complex scalars are `[re, im]` pairs and matrices are row-major nested
//! arrays throughout.

use anyhow::{anyhow, bail, Context, Result};
use imd_core::connection_model::{
    default_framings, CompatibleFraming, MeromorphicConnection, PrincipalPart,
};
use imd_core::isomonodromy_flows::DeformationPoint;
use imd_core::matcore::CMatrix;
use imd_core::monodromy_numeric::NumericParams;
use num_complex::Complex64 as C64;
use serde::Deserialize;

pub type ComplexSpec = [f64; 2];
pub type MatrixSpec = Vec<Vec<ComplexSpec>>;

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    #[serde(default)]
    pub command: Option<String>,
    pub connection: ConnectionSpec,
    #[serde(default)]
    pub tentacles: Option<TentacleSpec>,
    #[serde(default)]
    pub flow_path: Option<Vec<FlowVertexSpec>>,
    #[serde(default)]
    pub params: ParamSpec,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct ConnectionSpec {
    pub rank: usize,
    pub poles: Vec<PoleSpec>,
    #[serde(default)]
    pub framings: Option<Vec<MatrixSpec>>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct PoleSpec {
    pub position: ComplexSpec,
    pub order: usize,
    /// Polar coefficients, leading (order k) first, residue last.
    pub principal_part: Vec<MatrixSpec>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct TentacleSpec {
    #[serde(default)]
    pub base_point: Option<ComplexSpec>,
    #[serde(default)]
    pub arms: Option<Vec<ArmSpec>>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct ArmSpec {
    /// Lifted matching angle (fixes the log branch at the matching point).
    pub angle: f64,
    pub radius: f64,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields)]
pub struct FlowVertexSpec {
    pub positions: Vec<ComplexSpec>,
    /// Per pole, list of diagonal q-coefficient matrices (empty for k = 1).
    #[serde(default)]
    pub irregular: Option<Vec<Vec<MatrixSpec>>>,
}

#[derive(Deserialize, Debug, Clone)]
#[serde(deny_unknown_fields, default)]
pub struct ParamSpec {
    pub tol: f64,
    pub match_tol: f64,
    pub support_tol: f64,
    pub extra_orders: usize,
    pub seed: u64,
    pub checkpoints: usize,
    pub fd_step: f64,
    pub flow_tol: f64,
    pub residual_tol: f64,
    pub monodromy_drift_tol: f64,
    pub symplectic_drift_tol: f64,
}

impl Default for ParamSpec {
    fn default() -> Self {
        let np = NumericParams::default();
        ParamSpec {
            tol: np.tol,
            match_tol: np.match_tol,
            support_tol: np.support_tol,
            extra_orders: np.extra_orders,
            seed: 1,
            checkpoints: 4,
            fd_step: 1e-5,
            flow_tol: 1e-11,
            residual_tol: 1e-8,
            monodromy_drift_tol: 1e-6,
            symplectic_drift_tol: 1e-5,
        }
    }
}

impl ParamSpec {
    pub fn numeric(&self) -> NumericParams {
        NumericParams {
            extra_orders: self.extra_orders,
            tol: self.tol,
            match_tol: self.match_tol,
            support_tol: self.support_tol,
            ..NumericParams::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("tol", self.tol),
            ("match_tol", self.match_tol),
            ("support_tol", self.support_tol),
            ("fd_step", self.fd_step),
            ("flow_tol", self.flow_tol),
            ("residual_tol", self.residual_tol),
        ] {
            if v <= 0.0 || !v.is_finite() {
                bail!("parameter {name} must be positive and finite, got {v}");
            }
        }
        Ok(())
    }
}

pub fn complex(spec: &ComplexSpec) -> C64 {
    C64::new(spec[0], spec[1])
}

pub fn matrix(spec: &MatrixSpec, n: usize) -> Result<CMatrix> {
    if spec.len() != n || spec.iter().any(|row| row.len() != n) {
        bail!("matrix is not {n} x {n}");
    }
    let rows: Vec<Vec<C64>> = spec
        .iter()
        .map(|row| row.iter().map(complex).collect())
        .collect();
    CMatrix::from_rows(&rows).map_err(|e| anyhow!("{e}"))
}

pub fn build_connection(spec: &ConnectionSpec) -> Result<MeromorphicConnection> {
    let n = spec.rank;
    let mut positions = Vec::with_capacity(spec.poles.len());
    let mut parts = Vec::with_capacity(spec.poles.len());
    for (i, pole) in spec.poles.iter().enumerate() {
        if pole.principal_part.len() != pole.order {
            bail!(
                "pole {i}: order {} but {} polar coefficients",
                pole.order,
                pole.principal_part.len()
            );
        }
        positions.push(complex(&pole.position));
        let coeffs: Result<Vec<CMatrix>> =
            pole.principal_part.iter().map(|m| matrix(m, n)).collect();
        parts.push(PrincipalPart::new(coeffs?).map_err(|e| anyhow!("pole {i}: {e}"))?);
    }
    MeromorphicConnection::new(positions, parts).map_err(|e| anyhow!("{e}"))
}

pub fn build_framings(
    spec: &ConnectionSpec,
    conn: &MeromorphicConnection,
) -> Result<CompatibleFraming> {
    match &spec.framings {
        None => default_framings(conn).map_err(|e| anyhow!("default framings: {e}")),
        Some(list) => {
            if list.len() != conn.num_poles() {
                bail!("{} framings for {} poles", list.len(), conn.num_poles());
            }
            let framings: Result<Vec<CMatrix>> =
                list.iter().map(|m| matrix(m, conn.rank())).collect();
            let f = CompatibleFraming { framings: framings? };
            f.check(conn).map_err(|e| anyhow!("{e}"))?;
            Ok(f)
        }
    }
}

pub fn build_flow_path(
    cfg: &JobConfig,
    conn: &MeromorphicConnection,
    hold_irregular: &[Vec<CMatrix>],
) -> Result<Vec<DeformationPoint>> {
    let Some(path) = &cfg.flow_path else {
        bail!("this command needs a flow_path");
    };
    let n = conn.rank();
    let m = conn.num_poles();
    let mut out = Vec::with_capacity(path.len());
    for (v, vertex) in path.iter().enumerate() {
        if vertex.positions.len() != m {
            bail!("flow_path vertex {v}: {} positions for {m} poles", vertex.positions.len());
        }
        let positions: Vec<C64> = vertex.positions.iter().map(complex).collect();
        let irregular = match &vertex.irregular {
            // omitted irregular data means: hold the irregular types fixed
            None => hold_irregular.to_vec(),
            Some(list) => {
                if list.len() != m {
                    bail!("flow_path vertex {v}: irregular data arity");
                }
                let mut per_pole = Vec::with_capacity(m);
                for (i, qs) in list.iter().enumerate() {
                    let want = conn.parts[i].order().saturating_sub(1);
                    if qs.len() != want {
                        bail!("flow_path vertex {v}, pole {i}: expected {want} q-coefficients");
                    }
                    let qs: Result<Vec<CMatrix>> = qs.iter().map(|mq| matrix(mq, n)).collect();
                    per_pole.push(qs?);
                }
                per_pole
            }
        };
        out.push(DeformationPoint { positions, irregular });
    }
    Ok(out)
}

pub fn load(path: &std::path::Path) -> Result<JobConfig> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading config {}", path.display()))?;
    let cfg: JobConfig = serde_json::from_str(&text).context("parsing config JSON")?;
    cfg.params.validate()?;
    Ok(cfg)
}
