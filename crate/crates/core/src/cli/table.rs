//! Result rows and their CSV layout.
//!
//! Column order is fixed:
//!
//! `scheme, parameter, value, status, message, crb, total_power_used,
//! iterations, p_s_1 … p_s_K, p_c_1 … p_c_K, outage_ellipsoid,
//! outage_gaussian, outage_uniform_ellipsoid, outage_rademacher_mixture,
//! wall_time_s`
//!
//! `parameter` and `value` are empty outside sweeps. Outage columns hold the
//! largest per-UAV outage fraction under that sampler and are empty when no
//! Monte-Carlo block is configured or the run failed. `wall_time_s` is empty
//! unless timing is requested, so repeated runs give identical bytes.

use std::io::Write;

use crate::allocators::{AllocationFailure, AllocationOutcome, Scheme};
use crate::error::Error;

/// Sampler columns in CSV order.
pub const SAMPLERS: [&str; 4] = ["ellipsoid", "gaussian", "uniform-ellipsoid", "rademacher-mixture"];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub parameter: Option<String>,
    pub value: Option<f64>,
    pub status: String,
    pub message: String,
    pub crb: Option<f64>,
    pub sensing: Vec<f64>,
    pub comm: Vec<f64>,
    pub iterations: Option<usize>,
    /// Largest per-UAV outage per sampler, aligned with [`SAMPLERS`].
    pub outage: [Option<f64>; 4],
    pub wall_time: Option<f64>,
}

/// Row status string and process exit code for an allocator error.
pub fn classify(error: &Error) -> (&'static str, i32) {
    match error {
        Error::GeometryInfeasible(_)
        | Error::BudgetInfeasible(_)
        | Error::SubproblemInfeasible(_)
        | Error::RankDeficient { .. } => ("infeasible", 3),
        Error::InvalidInput(_) | Error::InvalidGeometry(_) => ("invalid-input", 2),
        Error::Numerical(_) | Error::MalformedProblem(_) => ("numerical-failure", 4),
    }
}

impl ResultRow {
    pub fn success(scheme: Scheme, outcome: &AllocationOutcome) -> Self {
        Self {
            scheme,
            parameter: None,
            value: None,
            status: "optimal".into(),
            message: String::new(),
            crb: Some(outcome.crb),
            sensing: outcome.allocation.sensing.clone(),
            comm: outcome.allocation.comm.clone(),
            iterations: Some(outcome.trace.iterations()),
            outage: [None; 4],
            wall_time: None,
        }
    }

    pub fn failure(scheme: Scheme, failure: &AllocationFailure) -> Self {
        Self {
            scheme,
            parameter: None,
            value: None,
            status: classify(&failure.error).0.into(),
            message: failure.to_string(),
            crb: None,
            sensing: Vec::new(),
            comm: Vec::new(),
            iterations: Some(failure.trace.iterations()),
            outage: [None; 4],
            wall_time: None,
        }
    }

    pub fn is_success(&self) -> bool {
        self.status == "optimal"
    }

    pub fn total_power(&self) -> Option<f64> {
        (!self.sensing.is_empty()).then(|| self.sensing.iter().chain(&self.comm).sum())
    }
}

fn num(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.9e}")).unwrap_or_default()
}

pub fn header(uav_count: usize) -> Vec<String> {
    let mut h: Vec<String> = [
        "scheme",
        "parameter",
        "value",
        "status",
        "message",
        "crb",
        "total_power_used",
        "iterations",
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    h.extend((1..=uav_count).map(|k| format!("p_s_{k}")));
    h.extend((1..=uav_count).map(|k| format!("p_c_{k}")));
    h.extend(SAMPLERS.iter().map(|s| format!("outage_{}", s.replace('-', "_"))));
    h.push("wall_time_s".into());
    h
}

/// Writes `rows` as CSV with the fixed column order for `uav_count` UAVs.
pub fn write_csv<W: Write>(out: W, uav_count: usize, rows: &[ResultRow]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(header(uav_count))?;
    for r in rows {
        let mut rec = vec![
            r.scheme.name().to_string(),
            r.parameter.clone().unwrap_or_default(),
            num(r.value),
            r.status.clone(),
            r.message.clone(),
            num(r.crb),
            num(r.total_power()),
            r.iterations.map(|n| n.to_string()).unwrap_or_default(),
        ];
        for k in 0..uav_count {
            rec.push(num(r.sensing.get(k).copied()));
        }
        for k in 0..uav_count {
            rec.push(num(r.comm.get(k).copied()));
        }
        rec.extend(r.outage.iter().map(|o| num(*o)));
        rec.push(r.wall_time.map(|t| format!("{t:.6}")).unwrap_or_default());
        w.write_record(rec)?;
    }
    w.flush()?;
    Ok(())
}
