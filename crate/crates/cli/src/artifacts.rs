//! Run directories: deterministic result files plus a separate timing file.
//!
//! ```text
//! manifest.toml          effective manifest
//! results.json           per-entry values, certificates, policies and traces
//! trace_<id>.csv         k, lambda_k, inner_value[, inner_iters]
//! cdf_initial_<id>.csv   lambda, F of the initial policy (iterate runs)
//! cdf_final_<id>.csv     lambda, F of the returned policy
//! meta.json              worker count and wall-clock timings
//! ```

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use varmdp::report::write_cdf;

use crate::error::{CliError, CliResult};
use crate::manifest::{Problem, RunManifest, SolverKind};
use crate::run::{EntryRecord, Outcome};

pub const RESULTS: &str = "results.json";
pub const META: &str = "meta.json";

#[derive(Debug, Serialize, Deserialize)]
pub struct Results {
    pub problem: Problem,
    pub solver: SolverKind,
    pub entries: Vec<EntryRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct EntryTiming {
    pub id: String,
    pub millis: f64,
    pub trace_millis: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct Meta {
    pub workers: usize,
    pub total_millis: f64,
    pub entries: Vec<EntryTiming>,
}

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let text =
        fs::read_to_string(path).map_err(|_| CliError::MissingArtifact(path.to_path_buf()))?;
    Ok(serde_json::from_str(&text)?)
}

/// Writes the run directory; everything except `meta.json` depends only on
/// the manifest.
pub fn write_run(
    dir: &Path,
    manifest: &RunManifest,
    outcomes: &[Outcome],
    workers: usize,
    total_millis: f64,
) -> CliResult<()> {
    fs::create_dir_all(dir)?;
    let effective = RunManifest {
        out: None,
        ..manifest.clone()
    };
    let text = toml::to_string(&effective)
        .map_err(|e| CliError::Failed(format!("cannot serialize manifest: {e}")))?;
    fs::write(dir.join("manifest.toml"), text)?;

    for o in outcomes {
        let id = &o.record.id;
        if manifest.solver == SolverKind::Iterate {
            let mut w = csv::Writer::from_writer(create(&dir.join(format!("trace_{id}.csv")))?);
            let steady = !manifest.problem.is_finite();
            if steady {
                w.write_record(["k", "lambda_k", "inner_value", "inner_iters"])?;
            } else {
                w.write_record(["k", "lambda_k", "inner_value"])?;
            }
            for row in &o.record.trace {
                let mut fields = vec![
                    row.k.to_string(),
                    row.lambda_k.to_string(),
                    row.inner_value.to_string(),
                ];
                if let Some(it) = row.inner_iters {
                    fields.push(it.to_string());
                }
                w.write_record(&fields)?;
            }
            w.flush()?;
        }
        if let Some(points) = &o.initial_cdf {
            write_cdf(
                create(&dir.join(format!("cdf_initial_{id}.csv")))?,
                points.iter().copied(),
            )?;
        }
        write_cdf(
            create(&dir.join(format!("cdf_final_{id}.csv")))?,
            o.final_cdf.iter().copied(),
        )?;
    }

    let results = Results {
        problem: manifest.problem,
        solver: manifest.solver,
        entries: outcomes.iter().map(|o| o.record.clone()).collect(),
    };
    write_json(&dir.join(RESULTS), &results)?;
    let meta = Meta {
        workers,
        total_millis,
        entries: outcomes
            .iter()
            .map(|o| EntryTiming {
                id: o.record.id.clone(),
                millis: o.millis,
                trace_millis: o.trace_millis.clone(),
            })
            .collect(),
    };
    write_json(&dir.join(META), &meta)
}

/// Joins traces with their timings and collects the CDFs of a completed run
/// into `out`; returns the number of exported entries.
pub fn export(run_dir: &Path, out: &Path) -> CliResult<usize> {
    let results: Results = read_json(&run_dir.join(RESULTS))?;
    let meta: Meta = read_json(&run_dir.join(META))?;
    fs::create_dir_all(out)?;
    for entry in &results.entries {
        let id = &entry.id;
        let timing = meta
            .entries
            .iter()
            .find(|t| &t.id == id)
            .ok_or_else(|| CliError::MissingArtifact(run_dir.join(META)))?;
        let mut w = csv::Writer::from_writer(create(&out.join(format!("trace_{id}.csv")))?);
        w.write_record(["k", "lambda_k", "inner_value", "millis"])?;
        for (i, row) in entry.trace.iter().enumerate() {
            let millis = timing.trace_millis.get(i).copied().unwrap_or(f64::NAN);
            w.write_record([
                row.k.to_string(),
                row.lambda_k.to_string(),
                row.inner_value.to_string(),
                millis.to_string(),
            ])?;
        }
        w.flush()?;
        for kind in ["initial", "final"] {
            let name = format!("cdf_{kind}_{id}.csv");
            let src = run_dir.join(&name);
            if src.exists() {
                fs::copy(&src, out.join(&name))?;
            } else if kind == "final" || results.solver == SolverKind::Iterate {
                return Err(CliError::MissingArtifact(src));
            }
        }
    }
    Ok(results.entries.len())
}

/// Default export directory of a run.
pub fn default_export_dir(run_dir: &Path) -> PathBuf {
    run_dir.join("export")
}
