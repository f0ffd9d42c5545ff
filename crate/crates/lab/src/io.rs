//! CSV point clouds, binary parameter files and sparse-layer weights.
//!
//! CSV dialect: comma separated, one header row, `.` decimal point, LF line
//! endings.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use reachdim_core::pg::{AttainedSet, StatTrace};
use reachdim_core::policy::TwoLayerParams;
use reachdim_core::sparse::SparseLayer;

use crate::error::{LabError, LabResult};

fn parse_err(path: &Path, line: u64, message: impl Into<String>) -> LabError {
    LabError::Parse {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

/// Reads a numeric CSV with a header row. Every data row must have as many
/// fields as the header and parse as finite numbers.
pub fn read_points_csv(path: &Path) -> LabResult<Vec<Vec<f64>>> {
    let file = File::open(path).map_err(|e| LabError::io(path, e))?;
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(file));
    let width = match reader.headers() {
        Ok(h) if !h.is_empty() && !(h.len() == 1 && h[0].is_empty()) => h.len(),
        Ok(_) => {
            return Err(LabError::Format {
                path: path.to_path_buf(),
                message: "empty file: expected a header row".into(),
            })
        }
        Err(e) => return Err(parse_err(path, 1, e.to_string())),
    };
    let mut points = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            parse_err(path, line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != width {
            return Err(parse_err(
                path,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let row = record
            .iter()
            .enumerate()
            .map(|(k, field)| {
                let v: f64 = field.trim().parse().map_err(|_| {
                    parse_err(
                        path,
                        line,
                        format!("field {}: `{field}` is not a number", k + 1),
                    )
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(parse_err(
                        path,
                        line,
                        format!("field {}: non-finite value", k + 1),
                    ))
                }
            })
            .collect::<LabResult<Vec<f64>>>()?;
        points.push(row);
    }
    if points.is_empty() {
        return Err(LabError::Format {
            path: path.to_path_buf(),
            message: "no data rows".into(),
        });
    }
    Ok(points)
}

fn create(path: &Path) -> LabResult<BufWriter<File>> {
    if let Some(parent) = path.parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent).map_err(|e| LabError::io(parent, e))?;
        }
    }
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| LabError::io(path, e))
}

fn write_all(path: &Path, text: &str) -> LabResult<()> {
    let mut w = create(path)?;
    w.write_all(text.as_bytes())
        .and_then(|_| w.flush())
        .map_err(|e| LabError::io(path, e))
}

pub fn write_text(path: &Path, text: &str) -> LabResult<()> {
    write_all(path, text)
}

/// Header `x1,…,xd` then one point per row.
pub fn points_to_csv(points: &[Vec<f64>]) -> String {
    let dim = points.first().map_or(0, Vec::len);
    let mut out = (1..=dim)
        .map(|k| format!("x{k}"))
        .collect::<Vec<_>>()
        .join(",");
    out.push('\n');
    for p in points {
        out.push_str(
            &p.iter()
                .map(|v| v.to_string())
                .collect::<Vec<_>>()
                .join(","),
        );
        out.push('\n');
    }
    out
}

pub fn write_points_csv(path: &Path, points: &[Vec<f64>]) -> LabResult<()> {
    write_all(path, &points_to_csv(points))
}

/// One row per point: `policy,train_steps,time,s1,…,sd`.
pub fn attained_set_to_csv(set: &AttainedSet) -> String {
    let dim = set.base_state.len();
    let mut out = String::from("policy,train_steps,time");
    for k in 1..=dim {
        out.push_str(&format!(",s{k}"));
    }
    out.push('\n');
    for (p, origin) in set.points.iter().zip(&set.provenance) {
        out.push_str(&format!(
            "{},{},{}",
            origin.policy, origin.train_steps, origin.time
        ));
        for v in p.iter() {
            out.push_str(&format!(",{v}"));
        }
        out.push('\n');
    }
    out
}

/// One row per (step, probe): `step,tau,probe,A_j…,A_{j,k}…,A_jA_j'…`.
pub fn stat_trace_to_csv(trace: &StatTrace) -> String {
    let mut out = String::new();
    let Some(first) = trace.iter().find(|r| !r.probes.is_empty()) else {
        return "step,tau,probe\n".into();
    };
    let da = first.probes[0].action.len();
    let ds = first.probes[0].jacobian.ncols();
    out.push_str("step,tau,probe");
    for j in 0..da {
        out.push_str(&format!(",a{j}"));
    }
    for j in 0..da {
        for k in 0..ds {
            out.push_str(&format!(",a{j}_{k}"));
        }
    }
    for j in 0..da {
        for jj in 0..da {
            out.push_str(&format!(",a{j}a{jj}"));
        }
    }
    out.push('\n');
    for rec in trace {
        for (i, probe) in rec.probes.iter().enumerate() {
            out.push_str(&format!("{},{},{}", rec.step, rec.tau, i));
            for v in probe.action.iter() {
                out.push_str(&format!(",{v}"));
            }
            for j in 0..da {
                for k in 0..ds {
                    out.push_str(&format!(",{}", probe.jacobian[(j, k)]));
                }
            }
            for j in 0..da {
                for jj in 0..da {
                    out.push_str(&format!(",{}", probe.products[(j, jj)]));
                }
            }
            out.push('\n');
        }
    }
    out
}

const PARAMS_MAGIC: &[u8; 8] = b"RDPARAM1";

/// Little-endian binary: magic, width, state_dim, action_dim, augment flag,
/// then `w0`, `c0` (column-major) and `w` as f64.
pub fn save_params(path: &Path, params: &TwoLayerParams) -> LabResult<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(PARAMS_MAGIC);
    for v in [params.width(), params.state_dim(), params.action_dim()] {
        buf.extend_from_slice(&(v as u64).to_le_bytes());
    }
    buf.push(params.augment_state() as u8);
    for v in params
        .w0()
        .iter()
        .chain(params.c0().iter())
        .chain(params.weights().iter())
    {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    let mut w = create(path)?;
    w.write_all(&buf)
        .and_then(|_| w.flush())
        .map_err(|e| LabError::io(path, e))
}

pub fn load_params(path: &Path) -> LabResult<TwoLayerParams> {
    let mut bytes = Vec::new();
    File::open(path)
        .and_then(|mut f| f.read_to_end(&mut bytes))
        .map_err(|e| LabError::io(path, e))?;
    let bad = |message: &str| LabError::Format {
        path: path.to_path_buf(),
        message: message.into(),
    };
    if bytes.len() < 33 || &bytes[..8] != PARAMS_MAGIC {
        return Err(bad("not a parameter file"));
    }
    let word =
        |i: usize| u64::from_le_bytes(bytes[8 + 8 * i..16 + 8 * i].try_into().unwrap()) as usize;
    let (width, state_dim, action_dim) = (word(0), word(1), word(2));
    let augment = match bytes[32] {
        0 => false,
        1 => true,
        _ => return Err(bad("invalid augment flag")),
    };
    let input_dim = state_dim + augment as usize;
    let nw = width
        .checked_mul(input_dim)
        .ok_or_else(|| bad("dimensions overflow"))?;
    let nc = width
        .checked_mul(action_dim)
        .ok_or_else(|| bad("dimensions overflow"))?;
    let floats = &bytes[33..];
    if floats.len() != 8 * (2 * nw + nc) {
        return Err(bad("payload length does not match the header"));
    }
    let vals: Vec<f64> = floats
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let w0 = DVector::from_column_slice(&vals[..nw]);
    let c0 = DMatrix::from_column_slice(action_dim, width, &vals[nw..nw + nc]);
    let w = DVector::from_column_slice(&vals[nw + nc..]);
    Ok(TwoLayerParams::from_parts(state_dim, augment, w0, c0, w)?)
}

/// Square weight matrix from a CSV with a header row, one matrix row per line.
pub fn load_sparse_layer(path: &Path, alpha: f64, lambda1: f64) -> LabResult<SparseLayer> {
    let rows = read_points_csv(path)?;
    let n = rows.len();
    if rows[0].len() != n {
        return Err(LabError::Format {
            path: path.to_path_buf(),
            message: format!("weight matrix must be square, got {n}×{}", rows[0].len()),
        });
    }
    let flat: Vec<f64> = rows.into_iter().flatten().collect();
    Ok(SparseLayer::new(
        DMatrix::from_row_slice(n, n, &flat),
        alpha,
        lambda1,
    )?)
}
