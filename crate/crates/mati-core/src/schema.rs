//! On-disk formats: JSON system/scenario/certificate files and the CSV
//! artifacts written by the command-line tool.
//!
//! A system file describes a linear loop either directly ({A, E, C, F}) or
//! through its plant ({A_P, B_P, K}), together with a protocol block and
//! optional sweep parameters. A scenario file adds a schedule, initial
//! conditions, and an integration step. Certificate files carry the scalar
//! loop's (c4, c2, k or L, delta, gamma).

use crate::cert::PolyCertificate;
use crate::error::{Error, Result};
use crate::lmi::LinearNcs;
use crate::protocol::{ProtocolKind, ProtocolModel};
use crate::sim::{HybridTrace, NcsDynamics, Schedule, TraceEvent};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::path::Path;

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
    serde_json::from_str(&text)
        .map_err(|e| Error::Input { path: path.display().to_string(), detail: e.to_string() })
}

fn input_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::Input { path: path.display().to_string(), detail: detail.into() }
}

fn to_matrix(rows: &[Vec<f64>], name: &str, path: &Path) -> Result<DMatrix<f64>> {
    if rows.is_empty() || rows[0].is_empty() {
        return Err(input_err(path, format!("{name} must be a non-empty matrix")));
    }
    let ncols = rows[0].len();
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(input_err(path, format!("{name} has ragged rows")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    Ok(DMatrix::from_row_slice(rows.len(), ncols, &flat))
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProtocolSpec {
    kind: ProtocolKind,
    #[serde(default)]
    l: Option<usize>,
}

fn protocol_model(spec: &ProtocolSpec, path: &Path) -> Result<ProtocolModel> {
    match spec.kind {
        ProtocolKind::SampledData => Ok(ProtocolModel::sampled_data()),
        kind => {
            let l = spec
                .l
                .ok_or_else(|| input_err(path, "protocol requires a node count `l`"))?;
            match kind {
                ProtocolKind::Tod => ProtocolModel::tod(l),
                ProtocolKind::RoundRobin => ProtocolModel::round_robin(l),
                ProtocolKind::SampledData => unreachable!(),
            }
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct SystemFileRaw {
    #[serde(rename = "A", default)]
    a: Option<Vec<Vec<f64>>>,
    #[serde(rename = "E", default)]
    e: Option<Vec<Vec<f64>>>,
    #[serde(rename = "C", default)]
    c: Option<Vec<Vec<f64>>>,
    #[serde(rename = "F", default)]
    f: Option<Vec<Vec<f64>>>,
    #[serde(rename = "A_P", default)]
    a_p: Option<Vec<Vec<f64>>>,
    #[serde(rename = "B_P", default)]
    b_p: Option<Vec<Vec<f64>>>,
    #[serde(rename = "K", default)]
    k: Option<Vec<Vec<f64>>>,
    protocol: ProtocolSpec,
    #[serde(default)]
    deltas: Option<Vec<f64>>,
    #[serde(default)]
    grid_step: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct SystemConfig {
    pub sys: LinearNcs,
    pub proto: ProtocolModel,
    pub deltas: Option<Vec<f64>>,
    pub grid_step: Option<f64>,
}

fn build_linear(raw: &SystemFileRaw, path: &Path) -> Result<LinearNcs> {
    let direct = [&raw.a, &raw.e, &raw.c, &raw.f];
    let plant = [&raw.a_p, &raw.b_p, &raw.k];
    let n_direct = direct.iter().filter(|m| m.is_some()).count();
    let n_plant = plant.iter().filter(|m| m.is_some()).count();
    match (n_direct, n_plant) {
        (4, 0) => LinearNcs::new(
            to_matrix(raw.a.as_ref().unwrap(), "A", path)?,
            to_matrix(raw.e.as_ref().unwrap(), "E", path)?,
            to_matrix(raw.c.as_ref().unwrap(), "C", path)?,
            to_matrix(raw.f.as_ref().unwrap(), "F", path)?,
        ),
        (0, 3) => LinearNcs::from_plant(
            &to_matrix(raw.a_p.as_ref().unwrap(), "A_P", path)?,
            &to_matrix(raw.b_p.as_ref().unwrap(), "B_P", path)?,
            &to_matrix(raw.k.as_ref().unwrap(), "K", path)?,
        ),
        _ => Err(input_err(
            path,
            "provide either all of {A, E, C, F} or all of {A_P, B_P, K}, not a mixture",
        )),
    }
}

pub fn load_system(path: &Path) -> Result<SystemConfig> {
    let raw: SystemFileRaw = read_json(path)?;
    let sys = build_linear(&raw, path)?;
    let proto = protocol_model(&raw.protocol, path)?;
    // fail fast if the protocol cannot partition this error dimension
    proto.node_dims(sys.n_e())?;
    if let Some(step) = raw.grid_step {
        if !(step > 0.0 && step < 1.0) {
            return Err(input_err(path, format!("grid_step must lie in (0, 1), got {step}")));
        }
    }
    if let Some(deltas) = &raw.deltas {
        if deltas.iter().any(|d| !(d > &0.0)) {
            return Err(input_err(path, "all deltas must be positive"));
        }
    }
    Ok(SystemConfig { sys, proto, deltas: raw.deltas, grid_step: raw.grid_step })
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum DynamicsSpec {
    Linear {
        #[serde(rename = "A")]
        a: Vec<Vec<f64>>,
        #[serde(rename = "E")]
        e: Vec<Vec<f64>>,
        #[serde(rename = "C")]
        c: Vec<Vec<f64>>,
        #[serde(rename = "F")]
        f: Vec<Vec<f64>>,
    },
    LinearPlant {
        #[serde(rename = "A_P")]
        a_p: Vec<Vec<f64>>,
        #[serde(rename = "B_P")]
        b_p: Vec<Vec<f64>>,
        #[serde(rename = "K")]
        k: Vec<Vec<f64>>,
    },
    NonlinearExample1 {
        d: f64,
    },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
enum ScheduleSpec {
    Constant { period: f64, horizon: f64 },
    UniformRandom { eps: f64, tau_max: f64, seed: u64, horizon: f64 },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScenarioRaw {
    dynamics: DynamicsSpec,
    protocol: ProtocolSpec,
    schedule: ScheduleSpec,
    x0: Vec<f64>,
    e0: Vec<f64>,
    step: f64,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub dynamics: NcsDynamics,
    pub proto: ProtocolModel,
    pub schedule: Schedule,
    pub x0: DVector<f64>,
    pub e0: DVector<f64>,
    pub step: f64,
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    let raw: ScenarioRaw = read_json(path)?;
    let dynamics = match &raw.dynamics {
        DynamicsSpec::Linear { a, e, c, f } => NcsDynamics::Linear(LinearNcs::new(
            to_matrix(a, "A", path)?,
            to_matrix(e, "E", path)?,
            to_matrix(c, "C", path)?,
            to_matrix(f, "F", path)?,
        )?),
        DynamicsSpec::LinearPlant { a_p, b_p, k } => NcsDynamics::Linear(LinearNcs::from_plant(
            &to_matrix(a_p, "A_P", path)?,
            &to_matrix(b_p, "B_P", path)?,
            &to_matrix(k, "K", path)?,
        )?),
        DynamicsSpec::NonlinearExample1 { d } => NcsDynamics::nonlinear_example1(*d)?,
    };
    let proto = protocol_model(&raw.protocol, path)?;
    proto.node_dims(dynamics.n_e())?;
    let schedule = match raw.schedule {
        ScheduleSpec::Constant { period, horizon } => Schedule::constant(period, horizon)?,
        ScheduleSpec::UniformRandom { eps, tau_max, seed, horizon } => {
            Schedule::uniform_random(eps, tau_max, seed, horizon)?
        }
    };
    Ok(Scenario {
        dynamics,
        proto,
        schedule,
        x0: DVector::from_vec(raw.x0),
        e0: DVector::from_vec(raw.e0),
        step: raw.step,
    })
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct CertRaw {
    c4: f64,
    c2: f64,
    #[serde(default)]
    k: Option<f64>,
    #[serde(rename = "L", default)]
    l: Option<f64>,
    delta: f64,
    gamma: f64,
}

pub fn load_certificate(path: &Path) -> Result<PolyCertificate> {
    let raw: CertRaw = read_json(path)?;
    let cert = match (raw.k, raw.l) {
        (Some(k), None) => PolyCertificate::from_k(raw.c4, raw.c2, k, raw.delta, raw.gamma),
        (None, Some(l)) => PolyCertificate::from_l(raw.c4, raw.c2, l, raw.delta, raw.gamma),
        (Some(k), Some(l)) => {
            if (2.0 - l - k).abs() > 1e-12 {
                return Err(input_err(path, format!("k = {k} and L = {l} disagree (L must equal 2 − k)")));
            }
            PolyCertificate::from_k(raw.c4, raw.c2, k, raw.delta, raw.gamma)
        }
        (None, None) => return Err(input_err(path, "certificate needs k or L")),
    };
    cert.map_err(|e| input_err(path, e.to_string()))
}

/// One row of the sweep summary table.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SweepSummaryRow {
    pub delta: f64,
    pub tau_baseline: f64,
    pub tau_best: f64,
    pub k_best: f64,
    pub improvement_pct: f64,
}

/// CSV with full-precision (round-trip) numbers; the human-readable table is
/// the caller's concern.
pub fn sweep_to_csv(rows: &[SweepSummaryRow]) -> String {
    let mut out = String::from("delta,tau_baseline,tau_best,k_best,improvement_pct\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.delta, r.tau_baseline, r.tau_best, r.k_best, r.improvement_pct
        ));
    }
    out
}

pub fn trace_to_csv(trace: &HybridTrace) -> String {
    let (n_x, n_e) = trace
        .points
        .first()
        .map_or((0, 0), |p| (p.x.len(), p.e.len()));
    let mut header = String::from("t,j,tau,kappa");
    for i in 0..n_x {
        header.push_str(&format!(",x{i}"));
    }
    for i in 0..n_e {
        header.push_str(&format!(",e{i}"));
    }
    header.push_str(",event\n");
    let mut out = header;
    for p in &trace.points {
        out.push_str(&format!("{},{},{},{}", p.t, p.j, p.tau, p.kappa));
        for v in p.x.iter().chain(p.e.iter()) {
            out.push_str(&format!(",{v}"));
        }
        out.push_str(match p.event {
            TraceEvent::Flow => ",flow\n",
            TraceEvent::Jump => ",jump\n",
        });
    }
    out
}
