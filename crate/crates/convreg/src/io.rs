//! On-disk formats: dataset CSV, model / instance-sidecar / run-summary
//! JSON, per-iteration metrics CSV, and file fingerprints.
//!
//! Every floating-point value is written with 17 significant digits
//! (`{:.16e}`), enough to reproduce the exact `f64` bit pattern on
//! re-parse, so write→read round trips are lossless. Non-finite values are
//! rejected at write time (JSON has no encoding for them).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{Dataset, PrimalPoint};
use crate::error::{Error, Result};
use crate::report::MetricsLog;
use crate::synth::GroundTruth;

/// `f64` with 17 significant digits; parses back to the identical bits.
fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

// ---------------------------------------------------------------------------
// JSON plumbing with fixed-precision floats
// ---------------------------------------------------------------------------

/// `serde_json` formatter that writes every `f64` with 17 significant
/// digits and refuses non-finite values.
struct Sig17;

impl serde_json::ser::Formatter for Sig17 {
    fn write_f64<W>(&mut self, writer: &mut W, value: f64) -> std::io::Result<()>
    where
        W: ?Sized + std::io::Write,
    {
        if !value.is_finite() {
            return Err(std::io::Error::new(
                std::io::ErrorKind::InvalidData,
                format!("cannot serialize non-finite float {value}"),
            ));
        }
        write!(writer, "{value:.16e}")
    }
}

/// Serialize to JSON with 17-significant-digit floats.
pub fn to_json(value: &impl Serialize) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Sig17);
    value.serialize(&mut ser)?;
    let mut s = String::from_utf8(buf).expect("serde_json emits UTF-8");
    s.push('\n');
    Ok(s)
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    fs::write(path, to_json(value)?)?;
    Ok(())
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
}

// ---------------------------------------------------------------------------
// Dataset CSV
// ---------------------------------------------------------------------------

/// Write the dataset as CSV with header `x1,...,xn,y`, one row per
/// observation.
pub fn write_dataset(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header: Vec<String> = (1..=data.dim()).map(|j| format!("x{j}")).collect();
    header.push("y".to_string());
    w.write_record(&header)?;
    for l in 0..data.n_points() {
        let mut rec: Vec<String> = data.x(l).iter().map(|&v| fmt17(v)).collect();
        rec.push(fmt17(data.observations()[l]));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a dataset written by [`write_dataset`] (or any CSV with that
/// header shape).
pub fn read_dataset(path: &Path) -> Result<Dataset> {
    let mut r = csv::Reader::from_path(path)?;
    let header = r.headers()?.clone();
    if header.len() < 2 || header.iter().next_back() != Some("y") {
        return Err(Error::Format(format!(
            "{}: expected header x1,...,xn,y",
            path.display()
        )));
    }
    let dim = header.len() - 1;
    for (j, name) in header.iter().take(dim).enumerate() {
        let expect = format!("x{}", j + 1);
        if name != expect {
            return Err(Error::Format(format!(
                "{}: header column {} is {name:?}, expected {expect:?}",
                path.display(),
                j + 1
            )));
        }
    }
    let mut points = Vec::new();
    let mut obs = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        if rec.len() != dim + 1 {
            return Err(Error::Format(format!(
                "{}: row {} has {} fields, expected {}",
                path.display(),
                i + 2,
                rec.len(),
                dim + 1
            )));
        }
        for (c, field) in rec.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Format(format!(
                    "{}: row {} field {} is not a number: {field:?}",
                    path.display(),
                    i + 2,
                    c + 1
                ))
            })?;
            if c < dim {
                points.push(v);
            } else {
                obs.push(v);
            }
        }
    }
    Dataset::new(dim, points, obs)
}

// ---------------------------------------------------------------------------
// Fitted model JSON
// ---------------------------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct ModelFile {
    n: usize,
    #[serde(rename = "N")]
    n_points: usize,
    y: Vec<f64>,
    xi: Vec<Vec<f64>>,
}

/// Persist a fitted model `{n, N, y[], xi[][]}` (subgradients row-major,
/// one `n`-vector per point).
pub fn write_model(path: &Path, dim: usize, point: &PrimalPoint) -> Result<()> {
    let n_points = point.y.len();
    if point.xi.len() != n_points * dim {
        return Err(Error::Dimension(format!(
            "model has {} subgradient entries, expected {}·{}",
            point.xi.len(),
            n_points,
            dim
        )));
    }
    if !point.y.iter().chain(&point.xi).all(|v| v.is_finite()) {
        return Err(Error::Format("model contains non-finite values".to_string()));
    }
    let file = ModelFile {
        n: dim,
        n_points,
        y: point.y.clone(),
        xi: point.xi.chunks(dim.max(1)).map(|c| c.to_vec()).collect(),
    };
    write_json(path, &file)
}

/// Read a model written by [`write_model`]; returns `(n, point)`.
pub fn read_model(path: &Path) -> Result<(usize, PrimalPoint)> {
    let file: ModelFile = read_json(path)?;
    if file.y.len() != file.n_points
        || file.xi.len() != file.n_points
        || file.xi.iter().any(|row| row.len() != file.n)
    {
        return Err(Error::Format(format!(
            "{}: inconsistent model dimensions",
            path.display()
        )));
    }
    let xi: Vec<f64> = file.xi.into_iter().flatten().collect();
    Ok((file.n, PrimalPoint { y: file.y, xi }))
}

// ---------------------------------------------------------------------------
// Instance sidecar JSON
// ---------------------------------------------------------------------------

/// Generation metadata stored next to an instance CSV.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InstanceInfo {
    pub kind: String,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_points: usize,
    pub seed: u64,
    /// Condition number of the quadratic form (0 when not applicable).
    pub cond: f64,
    pub perturbed_indices: Vec<usize>,
}

pub fn write_sidecar(path: &Path, truth: &GroundTruth) -> Result<()> {
    let info = InstanceInfo {
        kind: truth.kind.as_str().to_string(),
        n: truth.dim,
        n_points: truth.n_points,
        seed: truth.seed,
        cond: truth.cond,
        perturbed_indices: truth.perturbed.clone(),
    };
    write_json(path, &info)
}

pub fn read_sidecar(path: &Path) -> Result<InstanceInfo> {
    read_json(path)
}

// ---------------------------------------------------------------------------
// Run summary JSON
// ---------------------------------------------------------------------------

/// Machine-readable outcome of one solve, written next to the model and
/// metrics files. `accuracy`/`subopt_reg` are present only when a
/// reference solution was available; `dualgap` only for methods that
/// produce dual bounds.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub method: String,
    /// Path of the instance CSV as given to the solver.
    pub instance: String,
    /// SHA-256 of the instance CSV bytes; `compare` refuses to mix
    /// summaries with different fingerprints.
    pub instance_sha256: String,
    pub n: usize,
    #[serde(rename = "N")]
    pub n_points: usize,
    pub gamma: f64,
    pub termination: String,
    pub iterations: usize,
    pub walltime_s: f64,
    pub preprocess_s: f64,
    /// Objective of the problem the method solves (regularized except for
    /// the ADMM baseline).
    pub objective: f64,
    /// Normalized infeasibility of the saved model.
    pub infeasibility: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dualgap: Option<f64>,
    /// `|p − p*_γ| / p*_γ` against the reference objective.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subopt_reg: Option<f64>,
    /// `‖y − y*‖₂/√N` against the reference fit.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub accuracy: Option<f64>,
}

pub fn write_summary(path: &Path, summary: &RunSummary) -> Result<()> {
    write_json(path, summary)
}

pub fn read_summary(path: &Path) -> Result<RunSummary> {
    read_json(path)
}

// ---------------------------------------------------------------------------
// Metrics CSV
// ---------------------------------------------------------------------------

/// Write per-iteration metrics with the schema of the solver family that
/// produced them. [`MetricsLog::None`] writes an empty file.
pub fn write_metrics(path: &Path, log: &MetricsLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let opt = |v: Option<f64>| v.map(fmt17).unwrap_or_default();
    match log {
        MetricsLog::Papg(rows) => {
            w.write_record([
                "k",
                "g_value",
                "gap_norm",
                "infeas_norm",
                "step",
                "stage",
                "wall_ms",
                "b_theta",
                "alpha_star",
                "L_gamma",
                "subopt_bound",
                "infeas_bound",
            ])?;
            for r in rows {
                w.write_record([
                    r.k.to_string(),
                    fmt17(r.g_value),
                    fmt17(r.gap_norm),
                    fmt17(r.infeas_norm),
                    fmt17(r.step),
                    r.stage.to_string(),
                    fmt17(r.wall_ms),
                    opt(r.b_theta),
                    opt(r.alpha_star),
                    opt(r.l_gamma),
                    opt(r.subopt_bound),
                    opt(r.infeas_bound),
                ])?;
            }
        }
        MetricsLog::Asm(rows) => {
            w.write_record(["k", "objective", "m_k", "t_step", "wall_ms"])?;
            for r in rows {
                w.write_record([
                    r.k.to_string(),
                    fmt17(r.objective),
                    r.m_k.to_string(),
                    fmt17(r.t_step),
                    fmt17(r.wall_ms),
                ])?;
            }
        }
        MetricsLog::Admm(rows) => {
            w.write_record(["k", "objective", "infeas_norm", "wall_ms"])?;
            for r in rows {
                w.write_record([
                    r.k.to_string(),
                    fmt17(r.objective),
                    fmt17(r.infeas_norm),
                    fmt17(r.wall_ms),
                ])?;
            }
        }
        MetricsLog::Ipm(rows) => {
            w.write_record(["k", "mu", "r_p", "r_d", "alpha", "wall_ms"])?;
            for r in rows {
                w.write_record([
                    r.k.to_string(),
                    fmt17(r.mu),
                    fmt17(r.r_p),
                    fmt17(r.r_d),
                    fmt17(r.alpha),
                    fmt17(r.wall_ms),
                ])?;
            }
        }
        MetricsLog::None => {}
    }
    w.flush()?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Fingerprints
// ---------------------------------------------------------------------------

/// Lowercase hex SHA-256 of a file's bytes.
pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = fs::read(path)?;
    let digest = Sha256::digest(&bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        write!(out, "{b:02x}").expect("writing to a String cannot fail");
    }
    Ok(out)
}

// ---------------------------------------------------------------------------
