//! File formats: trajectory and sweep CSVs, JSON reports and run manifests.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use shared_cacc::metrics::SweepResult;
use shared_cacc::simulator::{CollisionEvent, ScenarioConfig, TrajectoryLog, VehicleTrace, FLAG_COLLISION};

/// Bumped whenever a CSV column set or order changes.
pub const SCHEMA_VERSION: u32 = 1;

pub const TRAJECTORY_COLUMNS: [&str; 12] = [
    "t",
    "vehicle_id",
    "position_m",
    "speed_mps",
    "accel_mps2",
    "gap_m",
    "dv_mps",
    "u_h",
    "u_m",
    "u_fused",
    "alpha_h",
    "flags",
];

#[derive(Debug, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub artifact_version: String,
    pub command: String,
    pub config: ScenarioConfig,
    pub outputs: Vec<PathBuf>,
    pub runtime_s: f64,
}

impl RunManifest {
    pub fn new(command: &str, config: &ScenarioConfig, outputs: Vec<PathBuf>, runtime_s: f64) -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            artifact_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config: config.clone(),
            outputs,
            runtime_s,
        }
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn write_trajectory(path: &Path, log: &TrajectoryLog) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    w.write_record(TRAJECTORY_COLUMNS)?;
    for (k, t) in log.time.iter().enumerate() {
        for v in &log.vehicles {
            w.write_record([
                t.to_string(),
                v.id.to_string(),
                v.position[k].to_string(),
                v.speed[k].to_string(),
                v.accel[k].to_string(),
                v.gap[k].to_string(),
                v.dv[k].to_string(),
                v.u_h[k].to_string(),
                v.u_m[k].to_string(),
                v.u_fused[k].to_string(),
                v.alpha_h[k].to_string(),
                v.flags[k].to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Rebuilds a log from a trajectory CSV; timing metadata comes from `cfg`.
pub fn read_trajectory(path: &Path, cfg: &ScenarioConfig) -> Result<TrajectoryLog> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("cannot read {}", path.display()))?;
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRAJECTORY_COLUMNS {
        bail!("{}: unexpected columns {:?}", path.display(), header);
    }
    let mut log = TrajectoryLog {
        dt: cfg.dt,
        onset: cfg.onset(),
        period: cfg.leader.period(),
        ..Default::default()
    };
    for (line, rec) in r.records().enumerate() {
        let rec = rec?;
        let f = |i: usize| -> Result<f64> {
            rec[i]
                .parse::<f64>()
                .with_context(|| format!("{} row {}: bad `{}`", path.display(), line + 2, TRAJECTORY_COLUMNS[i]))
        };
        let id: usize = rec[1]
            .parse()
            .with_context(|| format!("{} row {}: bad vehicle_id", path.display(), line + 2))?;
        let flags: u8 = rec[11]
            .parse()
            .with_context(|| format!("{} row {}: bad flags", path.display(), line + 2))?;
        if id == 0 {
            log.time.push(f(0)?);
        }
        if id == log.vehicles.len() {
            log.vehicles.push(VehicleTrace {
                id,
                ..Default::default()
            });
        } else if id > log.vehicles.len() {
            bail!(
                "{} row {}: vehicle {id} appears before its predecessor",
                path.display(),
                line + 2
            );
        }
        let v = &mut log.vehicles[id];
        v.position.push(f(2)?);
        v.speed.push(f(3)?);
        v.accel.push(f(4)?);
        v.gap.push(f(5)?);
        v.dv.push(f(6)?);
        v.u_h.push(f(7)?);
        v.u_m.push(f(8)?);
        v.u_fused.push(f(9)?);
        v.alpha_h.push(f(10)?);
        v.flags.push(flags);
        if flags & FLAG_COLLISION != 0 && v.flags.iter().filter(|&&x| x & FLAG_COLLISION != 0).count() == 1 {
            log.collisions.push(CollisionEvent {
                vehicle: id,
                time: f(0)?,
            });
        }
    }
    let n = log.time.len();
    if n == 0 || log.vehicles.iter().any(|v| v.len() != n) {
        bail!("{}: ragged or empty trajectory", path.display());
    }
    Ok(log)
}

pub fn write_sweep(path: &Path, sweep: &SweepResult) -> Result<()> {
    let n_theta = sweep.rows.iter().map(|r| r.thetas.len()).max().unwrap_or(0);
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    let mut header = vec!["alpha_h".to_string()];
    // Θ is defined from the second follower on
    header.extend((0..n_theta).map(|i| format!("theta_{}", i + 2)));
    header.extend(["max_theta", "stable", "collision"].map(String::from));
    w.write_record(&header)?;
    for row in &sweep.rows {
        let mut rec = vec![row.alpha_h.to_string()];
        rec.extend((0..n_theta).map(|i| row.thetas.get(i).map_or(String::new(), f64::to_string)));
        rec.push(row.max_theta.to_string());
        rec.push(row.stable.to_string());
        rec.push(row.collision.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub parameter: String,
    pub threshold: Option<f64>,
    pub bracket: Option<(f64, f64)>,
    pub message: String,
    pub warnings: Vec<String>,
}

impl ThresholdReport {
    pub fn from_sweep(parameter: &str, sweep: &SweepResult) -> Self {
        let message = match sweep.threshold {
            Some(t) => format!("string stability lost at {parameter} = {t:.4}"),
            None => "no threshold in range".to_string(),
        };
        Self {
            parameter: parameter.to_string(),
            threshold: sweep.threshold,
            bracket: sweep.bracket,
            message,
            warnings: sweep.warnings.clone(),
        }
    }
}
