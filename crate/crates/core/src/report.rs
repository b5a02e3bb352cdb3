//! Delimited-text exports of traces, CDFs and value tables.

use std::io::Write;

use serde::Serialize;

use crate::augmented::ValueTable;
use crate::error::Result;
use crate::finite::FiniteTraceEntry;
use crate::steady::TraceEntry;

#[derive(Serialize)]
struct SteadyRow {
    k: usize,
    lambda_k: f64,
    inner_value: f64,
    inner_iters: usize,
}

#[derive(Serialize)]
struct SteadyRowTimed {
    k: usize,
    lambda_k: f64,
    inner_value: f64,
    inner_iters: usize,
    millis: f64,
}

/// Steady-state trace; `millis` is included only when `timed`.
pub fn write_steady_trace<W: Write>(out: W, trace: &[TraceEntry], timed: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in trace {
        if timed {
            w.serialize(SteadyRowTimed {
                k: e.k,
                lambda_k: e.lambda,
                inner_value: e.inner_value,
                inner_iters: e.inner_iterations,
                millis: e.millis,
            })?;
        } else {
            w.serialize(SteadyRow {
                k: e.k,
                lambda_k: e.lambda,
                inner_value: e.inner_value,
                inner_iters: e.inner_iterations,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct FiniteRow {
    k: usize,
    lambda_k: f64,
    inner_value: f64,
}

#[derive(Serialize)]
struct FiniteRowTimed {
    k: usize,
    lambda_k: f64,
    inner_value: f64,
    millis: f64,
}

/// Finite-horizon trace; `millis` is included only when `timed`.
pub fn write_finite_trace<W: Write>(out: W, trace: &[FiniteTraceEntry], timed: bool) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for e in trace {
        if timed {
            w.serialize(FiniteRowTimed {
                k: e.k,
                lambda_k: e.lambda0,
                inner_value: e.inner_value,
                millis: e.millis,
            })?;
        } else {
            w.serialize(FiniteRow {
                k: e.k,
                lambda_k: e.lambda0,
                inner_value: e.inner_value,
            })?;
        }
    }
    w.flush()?;
    Ok(())
}

/// `(lambda, F)` pairs.
pub fn write_cdf<W: Write>(out: W, points: impl IntoIterator<Item = (f64, f64)>) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["lambda", "F"])?;
    for (lambda, f) in points {
        w.write_record([lambda.to_string(), f.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One row `(t, s, lambda, value)` per table cell.
pub fn write_value_table<W: Write>(out: W, table: &ValueTable) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "s", "lambda", "value"])?;
    for stage in &table.stages {
        for s in 0..stage.num_states {
            for (i, v) in stage.row(s).iter().enumerate() {
                let lambda = table.grid.value(stage.lo + i as i64);
                w.write_record([
                    stage.stage.to_string(),
                    s.to_string(),
                    lambda.to_string(),
                    v.to_string(),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}
