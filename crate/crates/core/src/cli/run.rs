use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::discrepancy::MetricsRecord;
use crate::error::{Error, Result};
use crate::flow::run_flow;
use crate::measure::Ensemble;

use super::config::{parse_config, RunConfig};

pub const METRICS_FILE: &str = "metrics.csv";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const ENSEMBLE_FILE: &str = "final_ensemble.csv";

/// Everything needed to reproduce and audit a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config: RunConfig,
    pub version: String,
    pub wall_time_seconds: f64,
    pub final_record: Option<MetricsRecord>,
    pub flags: Vec<String>,
    pub error: Option<String>,
    /// Solver residual when the run stopped on a convergence failure.
    pub residual: Option<f64>,
}

/// Runs the configuration at `config_path` and writes `metrics.csv`,
/// `manifest.json` and `final_ensemble.csv` into `out_dir`.
///
/// A failing flow still leaves a manifest describing the failure.
pub fn cmd_run(config_path: &Path, out_dir: &Path) -> Result<RunManifest> {
    let loaded = parse_config(config_path)?;
    fs::create_dir_all(out_dir)?;
    let start = Instant::now();
    let result = run_flow(&loaded.flow, &loaded.init, &loaded.target);
    let mut manifest = RunManifest {
        config: loaded.config,
        version: env!("CARGO_PKG_VERSION").to_string(),
        wall_time_seconds: start.elapsed().as_secs_f64(),
        final_record: None,
        flags: Vec::new(),
        error: None,
        residual: None,
    };
    match result {
        Ok(run) => {
            write_atomic(out_dir, METRICS_FILE, &metrics_csv(&run.records))?;
            write_atomic(out_dir, ENSEMBLE_FILE, &ensemble_csv(&run.final_ensemble))?;
            manifest.final_record = run.records.last().cloned();
            manifest.flags = run.flags;
            write_manifest(out_dir, &manifest)?;
            Ok(manifest)
        }
        Err(err) => {
            if let Error::Convergence { residual, .. } = err {
                manifest.residual = Some(residual);
            }
            manifest.error = Some(err.to_string());
            write_manifest(out_dir, &manifest)?;
            Err(err)
        }
    }
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut out = String::from(MetricsRecord::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.to_csv_row());
        out.push('\n');
    }
    out
}

/// `x_1,…,x_d,weight` with one row per particle.
pub fn ensemble_csv(e: &Ensemble) -> String {
    let mut out: String = (1..=e.dim()).map(|a| format!("x_{a},")).collect();
    out.push_str("weight\n");
    for (x, w) in e.positions().rows().zip(e.weights()) {
        for v in x {
            out.push_str(&format!("{v},"));
        }
        out.push_str(&format!("{w}\n"));
    }
    out
}

fn write_manifest(dir: &Path, manifest: &RunManifest) -> Result<()> {
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::Config(e.to_string()))?;
    write_atomic(dir, MANIFEST_FILE, &(json + "\n"))
}

fn write_atomic(dir: &Path, name: &str, contents: &str) -> Result<()> {
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(dir.join(name))
        .map_err(|e| Error::Io(e.error))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::points::Points;

    #[test]
    fn ensemble_csv_layout() {
        let e = Ensemble::new(
            Points::from_rows(&[[0.5, -1.0], [2.0, 0.0]]).unwrap(),
            vec![0.25, 0.75],
        )
        .unwrap();
        assert_eq!(ensemble_csv(&e), "x_1,x_2,weight\n0.5,-1,0.25\n2,0,0.75\n");
    }

    #[test]
    fn metrics_csv_has_exact_header() {
        let r = MetricsRecord {
            step: 0,
            time: 0.0,
            mmd2: 0.5,
            ksd2: None,
            mean_err: 1.0,
            cov_err: 2.0,
        };
        assert_eq!(
            metrics_csv(&[r]),
            "step,time,mmd2,ksd2,mean_err,cov_err\n0,0,0.5,,1,2\n"
        );
    }
}
