//! CSV and JSON export of trajectories, schedules, couplings and reports.
//! Numbers are written in Rust's shortest round-trip form, so equal values
//! always produce identical bytes.

use std::io::Write;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::diffusion::BackwardState;
use crate::error::Result;
use crate::localize::SLState;
use crate::polchinski::ScheduleRow;
use crate::sde::SamplePath;

fn numbered(prefix: &str, d: usize) -> impl Iterator<Item = String> + '_ {
    (1..=d).map(move |i| format!("{prefix}_{i}"))
}

fn fmt(x: f64) -> String {
    format!("{x}")
}

/// `stream_id,time,x_1..x_d`, one row per grid point of every path.
pub fn write_paths_csv<W: Write>(out: W, paths: &[SamplePath]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = paths.first().map_or(0, |p| p.dim);
    let mut header = vec!["stream_id".to_string(), "time".to_string()];
    header.extend(numbered("x", d));
    w.write_record(&header)?;
    for p in paths {
        for (k, t) in p.grid.times().iter().enumerate() {
            let mut row = vec![p.stream_id.to_string(), fmt(*t)];
            row.extend(p.row(k).iter().map(|v| fmt(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `stream_id,time,x_1..x_d`, one row per `(stream_id, time, state)`.
pub fn write_points_csv<W: Write>(out: W, rows: &[(u64, f64, DVector<f64>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = rows.first().map_or(0, |r| r.2.len());
    let mut header = vec!["stream_id".to_string(), "time".to_string()];
    header.extend(numbered("x", d));
    w.write_record(&header)?;
    for (id, t, x) in rows {
        let mut row = vec![id.to_string(), fmt(*t)];
        row.extend(x.iter().map(|v| fmt(*v)));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// `stream_id,t,c_1..c_d,m_1..m_d` for tilt-process runs.
pub fn write_trajectories_csv<W: Write>(out: W, runs: &[(u64, Vec<SLState>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = runs.first().and_then(|r| r.1.first()).map_or(0, |s| s.c.len());
    let mut header = vec!["stream_id".to_string(), "t".to_string()];
    header.extend(numbered("c", d));
    header.extend(numbered("m", d));
    w.write_record(&header)?;
    for (id, states) in runs {
        for s in states {
            let mut row = vec![id.to_string(), fmt(s.t)];
            row.extend(s.c.iter().chain(s.mean.iter()).map(|v| fmt(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `stream_id,u,x_1..x_d,c_1..c_d` for backward-diffusion runs, with the
/// rescaled tilt `c = √(u(u+1))·x`.
pub fn write_backward_csv<W: Write>(out: W, runs: &[(u64, Vec<BackwardState>)]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = runs.first().and_then(|r| r.1.first()).map_or(0, |s| s.x.len());
    let mut header = vec!["stream_id".to_string(), "u".to_string()];
    header.extend(numbered("x", d));
    header.extend(numbered("c", d));
    w.write_record(&header)?;
    for (id, states) in runs {
        for s in states {
            let (_, c) = crate::diffusion::rescale_to_tilt(s);
            let mut row = vec![id.to_string(), fmt(s.u)];
            row.extend(s.x.iter().chain(c.iter()).map(|v| fmt(*v)));
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `tau,lambda,Lambda,gamma,factor`.
pub fn write_schedule_csv<W: Write>(out: W, rows: &[ScheduleRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["tau", "lambda", "Lambda", "gamma", "factor"])?;
    for r in rows {
        w.write_record([r.tau, r.lambda, r.big_lambda, r.gamma, r.factor].map(fmt))?;
    }
    w.flush()?;
    Ok(())
}

/// Dense coupling matrix, one CSV row per source atom, no header.
pub fn write_coupling_csv<W: Write>(out: W, gamma: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(out);
    for row in gamma.row_iter() {
        w.write_record(row.iter().map(|v| fmt(*v)))?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize)]
struct TracePoint {
    iteration: usize,
    residual: f64,
}

/// `[{"iteration": 1, "residual": ...}, ...]`.
pub fn write_sinkhorn_trace_json<W: Write>(out: W, trace: &[f64]) -> Result<()> {
    let pts: Vec<TracePoint> = trace.iter().enumerate().map(|(i, r)| TracePoint { iteration: i + 1, residual: *r }).collect();
    serde_json::to_writer_pretty(out, &pts)?;
    Ok(())
}

/// `iteration,x_1..x_d,kl` with `kl` left empty when unknown.
pub fn write_chain_csv<W: Write>(out: W, states: &[Vec<f64>], kl: Option<&[f64]>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    let d = states.first().map_or(0, |s| s.len());
    let mut header = vec!["iteration".to_string()];
    header.extend(numbered("x", d));
    header.push("kl".into());
    w.write_record(&header)?;
    for (k, s) in states.iter().enumerate() {
        let mut row = vec![k.to_string()];
        row.extend(s.iter().map(|v| fmt(*v)));
        row.push(kl.and_then(|v| v.get(k)).map(|v| fmt(*v)).unwrap_or_default());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON for any serializable report.
pub fn write_json<W: Write, T: Serialize + ?Sized>(out: W, value: &T) -> Result<()> {
    serde_json::to_writer_pretty(out, value)?;
    Ok(())
}
