//! Measures of effectiveness computed from trajectory logs, and the
//! authority sweep that locates the string-stability boundary.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::fusion::AuthoritySchedule;
use crate::simulator::{simulate, ScenarioConfig, TrajectoryLog};

/// Θ reported when the upstream deviation is negligible.
pub const THETA_DENOMINATOR_FLOOR: f64 = 1e-9;
pub const BISECTION_TOL: f64 = 0.005;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    /// Leader periods skipped before the Θ window opens.
    pub skip_periods: f64,
    /// Leader periods covered by the Θ window.
    pub eval_periods: f64,
    /// Speed-deviation threshold of the influence duration, m/s.
    pub influence_threshold: f64,
    /// Quiet time required when the leader has no period, s.
    pub settle_window: f64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            skip_periods: 2.0,
            eval_periods: 3.0,
            influence_threshold: 0.1,
            settle_window: 10.0,
        }
    }
}

fn check_vehicle(log: &TrajectoryLog, i: usize) -> Result<()> {
    if i == 0 || i > log.n_followers() {
        return Err(invalid(format!(
            "vehicle {i} is not a follower (1..={})",
            log.n_followers()
        )));
    }
    Ok(())
}

fn window_range(log: &TrajectoryLog, t0: f64, t1: f64) -> Result<std::ops::Range<usize>> {
    let end = log.time.last().copied().unwrap_or(f64::NEG_INFINITY);
    if !(t0 <= t1) || log.time.is_empty() || t0 < log.time[0] - 1e-9 || t1 > end + 1e-9 {
        return Err(invalid(format!(
            "window [{t0}, {t1}] outside log span [{}, {end}]",
            log.time.first().copied().unwrap_or(f64::NAN)
        )));
    }
    let r = log.window(t0, t1);
    if r.is_empty() {
        return Err(invalid(format!("window [{t0}, {t1}] holds no samples")));
    }
    Ok(r)
}

/// Index of the last sample before the disturbance onset.
fn baseline_index(log: &TrajectoryLog) -> usize {
    match log.onset {
        Some(t) => log.time.partition_point(|&s| s <= t).saturating_sub(1),
        None => 0,
    }
}

/// `‖dev‖₂ / ‖dev_prev‖₂`, or `+∞` when the upstream norm is negligible.
pub fn deviation_ratio(dev: &[f64], dev_prev: &[f64]) -> f64 {
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let den = norm(dev_prev);
    if den < THETA_DENOMINATOR_FLOOR {
        f64::INFINITY
    } else {
        norm(dev) / den
    }
}

/// Oscillation propagation rate between follower `i` and follower `i − 1`.
///
/// Gap deviations are taken from the pre-disturbance equilibrium gap.
pub fn propagation_rate(log: &TrajectoryLog, i: usize, window: (f64, f64)) -> Result<f64> {
    if i < 2 {
        return Err(invalid(format!(
            "propagation rate needs a follower predecessor, got vehicle {i}"
        )));
    }
    check_vehicle(log, i)?;
    let r = window_range(log, window.0, window.1)?;
    let b = baseline_index(log);
    let dev = |v: usize| -> Vec<f64> {
        let g = &log.vehicles[v].gap;
        g[r.clone()].iter().map(|x| x - g[b]).collect()
    };
    Ok(deviation_ratio(&dev(i), &dev(i - 1)))
}

/// Θ window: skip the first periods of the leader oscillation, then evaluate.
/// Without a period the window runs from onset to the end of the log.
pub fn theta_window(log: &TrajectoryLog, cfg: &MetricsConfig) -> (f64, f64) {
    let t_end = log.time.last().copied().unwrap_or(0.0);
    let onset = log.onset.unwrap_or(0.0).max(0.0);
    match log.period {
        Some(p) => (
            (onset + cfg.skip_periods * p).min(t_end),
            (onset + (cfg.skip_periods + cfg.eval_periods) * p).min(t_end),
        ),
        None => (onset.min(t_end), t_end),
    }
}

/// Max minus min applied acceleration of follower `i` over the window.
pub fn acceleration_range(log: &TrajectoryLog, i: usize, window: (f64, f64)) -> Result<f64> {
    check_vehicle(log, i)?;
    let r = window_range(log, window.0, window.1)?;
    let a = &log.vehicles[i].accel[r];
    let (lo, hi) = a
        .iter()
        .filter(|x| x.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    Ok(if hi >= lo { hi - lo } else { 0.0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapStats {
    pub min_gap: f64,
    pub gap_range: f64,
    pub collided: bool,
}

pub fn min_gap_and_distribution(log: &TrajectoryLog, i: usize, window: (f64, f64)) -> Result<GapStats> {
    check_vehicle(log, i)?;
    let r = window_range(log, window.0, window.1)?;
    let tr = &log.vehicles[i];
    let (lo, hi) = tr.gap[r.clone()]
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| {
            (lo.min(x), hi.max(x))
        });
    let collided = tr.flags[r].iter().any(|f| f & crate::simulator::FLAG_COLLISION != 0)
        || log
            .collisions
            .iter()
            .any(|c| c.vehicle == i && c.time >= window.0 && c.time <= window.1 + log.dt);
    Ok(GapStats {
        min_gap: if collided { lo.min(0.0) } else { lo },
        gap_range: hi - lo,
        collided,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Influence {
    pub duration: f64,
    pub censored: bool,
}

/// Time from onset until the last follower's speed deviation stays below
/// `threshold` for a full quiet window (the leader period when known).
pub fn influence_duration(log: &TrajectoryLog, threshold: f64, settle_window: f64) -> Result<Influence> {
    if !(threshold > 0.0) {
        return Err(invalid(format!(
            "influence threshold must be positive, got {threshold}"
        )));
    }
    let n = log.n_followers();
    check_vehicle(log, n)?;
    let Some(onset) = log.onset else {
        return Ok(Influence {
            duration: 0.0,
            censored: false,
        });
    };
    let speed = &log.vehicles[n].speed;
    let b = baseline_index(log);
    let reference = speed[..=b].iter().sum::<f64>() / (b + 1) as f64;
    let quiet = log.period.unwrap_or(settle_window);
    let need = (quiet / log.dt).round() as usize;
    let start = log.time.partition_point(|&t| t < onset - 1e-9);
    let mut run = 0usize;
    for k in start..speed.len() {
        if (speed[k] - reference).abs() < threshold {
            run += 1;
            if run > need {
                let settled = k - run + 1;
                return Ok(Influence {
                    duration: log.time[settled] - onset,
                    censored: false,
                });
            }
        } else {
            run = 0;
        }
    }
    let t_end = log.time.last().copied().unwrap_or(onset) + log.dt;
    Ok(Influence {
        duration: t_end - onset,
        censored: true,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleMoe {
    pub id: usize,
    /// Θ against the preceding follower; `None` for the first follower.
    pub theta: Option<f64>,
    pub accel_range: f64,
    pub gap_range: f64,
    pub min_gap: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoeReport {
    pub vehicles: Vec<VehicleMoe>,
    pub theta_window: (f64, f64),
    pub max_theta: f64,
    pub string_stable: bool,
    pub influence_duration: f64,
    pub influence_censored: bool,
    pub collision: bool,
}

pub fn moe_report(log: &TrajectoryLog, cfg: &MetricsConfig) -> Result<MoeReport> {
    let n = log.n_followers();
    if n == 0 || log.n_steps() == 0 {
        return Err(invalid("log has no followers or no samples"));
    }
    let tw = theta_window(log, cfg);
    let t_end = *log.time.last().expect("non-empty");
    let full = (log.onset.unwrap_or(0.0).clamp(0.0, t_end), t_end);
    let mut vehicles = Vec::with_capacity(n);
    for i in 1..=n {
        let theta = if i >= 2 {
            Some(propagation_rate(log, i, tw)?)
        } else {
            None
        };
        let gaps = min_gap_and_distribution(log, i, (0.0, t_end))?;
        vehicles.push(VehicleMoe {
            id: i,
            theta,
            accel_range: acceleration_range(log, i, full)?,
            gap_range: gaps.gap_range,
            min_gap: gaps.min_gap,
        });
    }
    let max_theta = vehicles.iter().filter_map(|v| v.theta).fold(f64::NEG_INFINITY, |m, t| {
        if t.is_nan() {
            f64::INFINITY
        } else {
            m.max(t)
        }
    });
    let infl = influence_duration(log, cfg.influence_threshold, cfg.settle_window)?;
    let collision = log.collided();
    Ok(MoeReport {
        vehicles,
        theta_window: tw,
        max_theta,
        string_stable: !collision && max_theta < 1.0,
        influence_duration: infl.duration,
        influence_censored: infl.censored,
        collision,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub alpha_h: f64,
    pub thetas: Vec<f64>,
    pub max_theta: f64,
    pub stable: bool,
    pub collision: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    /// Bisected stability boundary, if the grid brackets one.
    pub threshold: Option<f64>,
    pub bracket: Option<(f64, f64)>,
    pub warnings: Vec<String>,
}

/// Runs `base` with a constant human authority and evaluates string stability.
pub fn evaluate_authority(base: &ScenarioConfig, alpha_h: f64, cfg: &MetricsConfig) -> Result<SweepRow> {
    let scenario = ScenarioConfig {
        authority: AuthoritySchedule::Constant { alpha_h },
        per_vehicle: None,
        ..base.clone()
    };
    let log = simulate(&scenario)?;
    let report = moe_report(&log, cfg)?;
    Ok(SweepRow {
        alpha_h,
        thetas: report.vehicles.iter().filter_map(|v| v.theta).collect(),
        max_theta: report.max_theta,
        stable: report.string_stable,
        collision: report.collision,
    })
}

/// Sweeps constant human authority over `grid` and bisects the boundary
/// between the last stable and first unstable grid points.
pub fn odd_sweep(base: &ScenarioConfig, grid: &[f64], cfg: &MetricsConfig) -> Result<SweepResult> {
    if grid.is_empty() {
        return Err(invalid("sweep grid is empty"));
    }
    if let Some(a) = grid.iter().find(|a| !(0.0..=1.0).contains(*a)) {
        return Err(invalid(format!("grid point {a} outside [0, 1]")));
    }
    let rows = grid
        .par_iter()
        .map(|&a| evaluate_authority(base, a, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut warnings = Vec::new();
    let flips = rows.windows(2).filter(|w| w[0].stable != w[1].stable).count();
    if flips > 1 {
        warnings.push(format!(
            "stability changes {flips} times along the grid; boundary taken at the first change"
        ));
    }
    if grid.windows(2).any(|w| w[1] <= w[0]) {
        warnings.push("grid is not strictly increasing".into());
    }
    let change = rows.windows(2).find(|w| w[0].stable != w[1].stable);
    let (threshold, bracket) = match change {
        None => {
            warnings.push("no threshold in range".into());
            (None, None)
        }
        Some(w) => {
            let (mut lo, mut hi) = (w[0].alpha_h, w[1].alpha_h);
            let lo_stable = w[0].stable;
            while (hi - lo).abs() > BISECTION_TOL {
                let mid = 0.5 * (lo + hi);
                if evaluate_authority(base, mid, cfg)?.stable == lo_stable {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            (Some(0.5 * (lo + hi)), Some((lo, hi)))
        }
    };
    Ok(SweepResult {
        rows,
        threshold,
        bracket,
        warnings,
    })
}

/// `lo:step:hi` inclusive, rounded to suppress accumulation error.
pub fn parse_grid(spec: &str) -> Result<Vec<f64>> {
    let parts: Vec<&str> = spec.split(':').collect();
    let num = |s: &str| {
        s.trim()
            .parse::<f64>()
            .map_err(|_| invalid(format!("grid entry '{s}' is not a number")))
    };
    match parts.as_slice() {
        [lo, step, hi] => {
            let (lo, step, hi) = (num(lo)?, num(step)?, num(hi)?);
            if !(step > 0.0) || hi < lo {
                return Err(invalid(format!("grid '{spec}' needs step > 0 and hi >= lo")));
            }
            let n = ((hi - lo) / step + 1e-9).floor() as usize;
            Ok((0..=n).map(|k| ((lo + k as f64 * step) * 1e9).round() / 1e9).collect())
        }
        _ => spec.split(',').map(num).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::VehicleTrace;

    fn synthetic(gaps: Vec<Vec<f64>>, onset: Option<f64>) -> TrajectoryLog {
        let n = gaps[0].len();
        let mut vehicles = vec![VehicleTrace {
            id: 0,
            gap: vec![f64::NAN; n],
            speed: vec![10.0; n],
            accel: vec![0.0; n],
            flags: vec![0; n],
            ..Default::default()
        }];
        for (i, g) in gaps.into_iter().enumerate() {
            vehicles.push(VehicleTrace {
                id: i + 1,
                speed: vec![10.0; n],
                accel: vec![0.0; n],
                flags: vec![0; n],
                gap: g,
                ..Default::default()
            });
        }
        TrajectoryLog {
            dt: 1.0,
            time: (0..n).map(|k| k as f64).collect(),
            vehicles,
            onset,
            period: None,
            collisions: vec![],
        }
    }

    #[test]
    fn theta_definition_cases() {
        assert_eq!(deviation_ratio(&[1.0, 1.0], &[2.0, 2.0]), 0.5);
        assert_eq!(deviation_ratio(&[1.0, -3.0], &[1.0, -3.0]), 1.0);
        assert_eq!(deviation_ratio(&[1.0], &[0.0]), f64::INFINITY);
    }

    #[test]
    fn theta_uses_pre_onset_equilibrium_and_is_offset_invariant() {
        let log = synthetic(vec![vec![5.0, 5.0, 7.0, 3.0], vec![9.0, 9.0, 10.0, 8.0]], Some(1.0));
        let theta = propagation_rate(&log, 2, (2.0, 3.0)).unwrap();
        assert!((theta - 0.5).abs() < 1e-15);
        assert!(propagation_rate(&log, 1, (2.0, 3.0)).is_err());
        assert!(propagation_rate(&log, 2, (2.0, 9.0)).is_err());
    }

    #[test]
    fn acceleration_range_synthetic() {
        let mut log = synthetic(vec![vec![5.0; 3]], None);
        log.vehicles[1].accel = vec![-1.0, 2.0, 0.5];
        assert_eq!(acceleration_range(&log, 1, (0.0, 2.0)).unwrap(), 3.0);
        assert!(acceleration_range(&log, 1, (5.0, 6.0)).is_err());
    }

    #[test]
    fn gap_stats_and_collision_flag() {
        let mut log = synthetic(vec![vec![5.0, 4.0, 6.0]], None);
        let s = min_gap_and_distribution(&log, 1, (0.0, 2.0)).unwrap();
        assert_eq!((s.min_gap, s.gap_range, s.collided), (4.0, 2.0, false));
        log.vehicles[1].gap[2] = -0.1;
        log.vehicles[1].flags[2] = crate::simulator::FLAG_COLLISION;
        let s = min_gap_and_distribution(&log, 1, (0.0, 2.0)).unwrap();
        assert!(s.min_gap <= 0.0 && s.collided);
    }

    #[test]
    fn influence_of_a_pulse_equals_its_width() {
        let mut log = synthetic(vec![vec![5.0; 100]], Some(10.0));
        log.dt = 1.0;
        for k in 10..30 {
            log.vehicles[1].speed[k] = 11.0;
        }
        let inf = influence_duration(&log, 0.1, 20.0).unwrap();
        assert!(!inf.censored);
        assert!((inf.duration - 20.0).abs() <= 1.0, "{inf:?}");
        let quiet = synthetic(vec![vec![5.0; 10]], None);
        assert_eq!(influence_duration(&quiet, 0.1, 5.0).unwrap().duration, 0.0);
        for k in 30..100 {
            log.vehicles[1].speed[k] = 11.0;
        }
        assert!(influence_duration(&log, 0.1, 20.0).unwrap().censored);
    }

    #[test]
    fn grid_parsing() {
        let g = parse_grid("0:0.1:1").unwrap();
        assert_eq!(g.len(), 11);
        assert_eq!(g[3], 0.3);
        assert_eq!(g[10], 1.0);
        assert_eq!(parse_grid("0.2,0.4").unwrap(), vec![0.2, 0.4]);
        assert!(parse_grid("a:b").is_err());
        assert!(parse_grid("0:0:1").is_err());
    }
}
