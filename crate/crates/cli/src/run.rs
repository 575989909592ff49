//! Single simulation: config in, trace CSV and key-value metrics out.

use std::fmt::Write as _;
use std::fs;
use std::io::{BufWriter, Write as _};
use std::path::{Path, PathBuf};

use phtrack::simulation::{dissipation_check, metrics, simulate, Metrics, Profile, SimTrace};

use crate::config::{Prepared, RunConfig};
use crate::CliError;

/// Result of a run before anything is written.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub config_hash: String,
    pub model: String,
    pub profile: String,
    pub metrics: Metrics,
    /// Largest step increase of the storage between recorded samples.
    pub max_storage_increase: f64,
    pub steps: usize,
}

impl RunReport {
    /// A monitor tripped: storage increase, positive rate or actuator limit.
    pub fn has_violation(&self) -> bool {
        self.metrics.lyap_violations > 0 || self.metrics.limit_exceeded.iter().any(|e| *e)
    }

    /// Flat `key=value` report, one entry per line, in a fixed order.
    pub fn to_key_value(&self, prepared: &Prepared) -> String {
        let m = &self.metrics;
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            writeln!(out, "{k}={v}").expect("writing to a String cannot fail");
        };
        kv("config_hash", self.config_hash.clone());
        kv("model", self.model.clone());
        kv("profile", self.profile.clone());
        kv("integrator", prepared.sim.integrator.name().to_string());
        kv("dt", format!("{:e}", prepared.sim.dt));
        kv("t_end", format!("{:e}", prepared.sim.t_end));
        kv("steps", self.steps.to_string());
        kv("t_settle", format!("{:e}", prepared.t_settle));
        kv("settled_error", format!("{:e}", m.settled_error));
        for (i, v) in m.settled_error_per_axis.iter().enumerate() {
            kv(&format!("settled_error_{}", i + 1), format!("{v:e}"));
        }
        for (i, v) in m.peak_control.iter().enumerate() {
            kv(&format!("peak_control_{}", i + 1), format!("{v:e}"));
        }
        for (i, v) in m.peak_stabilizer.iter().enumerate() {
            kv(&format!("peak_stabilizer_{}", i + 1), format!("{v:e}"));
        }
        for (i, v) in m.limit_exceeded.iter().enumerate() {
            kv(&format!("limit_exceeded_{}", i + 1), v.to_string());
        }
        kv("lyap_violations", m.lyap_violations.to_string());
        kv("max_storage_increase", format!("{:e}", self.max_storage_increase));
        kv("energy_drift", format!("{:e}", m.energy_drift));
        kv(
            "status",
            if self.has_violation() { "violation" } else { "ok" }.to_string(),
        );
        out
    }
}

pub fn execute(cfg: &RunConfig, prepared: &Prepared) -> Result<(SimTrace, RunReport), CliError> {
    let profile = Profile::Tracking(prepared.gains.clone());
    let mut trace = simulate(
        prepared.model.as_ref(),
        &profile,
        prepared.trajectory.as_ref(),
        &prepared.sim,
    )?;
    let hash = cfg.hash();
    trace.meta.config_hash = Some(hash.clone());
    let m = metrics(&trace, prepared.t_settle, prepared.limits.as_ref())?;
    let max_storage_increase = dissipation_check(&trace, &prepared.gains)?.max_increase;
    let report = RunReport {
        config_hash: hash,
        model: trace.meta.model.clone(),
        profile: trace.meta.label.clone(),
        metrics: m,
        max_storage_increase,
        steps: prepared.sim.steps(),
    };
    Ok((trace, report))
}

/// Output directory: the explicit flag, then the environment override, then
/// the config's own `output.dir`, then the working directory.
pub fn resolve_out_dir(cfg: &RunConfig, flag: Option<&Path>, env: Option<&Path>) -> PathBuf {
    flag.or(env)
        .map(Path::to_path_buf)
        .or_else(|| cfg.output.dir.clone())
        .unwrap_or_else(|| PathBuf::from("."))
}

/// Runs and writes the trace and metrics files. Nothing is written unless the
/// config is valid and the simulation completes.
pub fn cmd_run(cfg: &RunConfig, out_dir: &Path) -> Result<RunReport, CliError> {
    let prepared = cfg.prepare()?;
    let (trace, report) = execute(cfg, &prepared)?;
    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(format!("{}: {e}", out_dir.display())))?;
    let trace_path = out_dir.join(&cfg.output.trace);
    let metrics_path = out_dir.join(&cfg.output.metrics);
    let file = fs::File::create(&trace_path)
        .map_err(|e| CliError::Io(format!("{}: {e}", trace_path.display())))?;
    let mut writer = BufWriter::new(file);
    trace
        .write_csv(&mut writer)
        .and_then(|_| writer.flush())
        .map_err(|e| CliError::Io(format!("{}: {e}", trace_path.display())))?;
    fs::write(&metrics_path, report.to_key_value(&prepared))
        .map_err(|e| CliError::Io(format!("{}: {e}", metrics_path.display())))?;
    Ok(report)
}
