//! Leader HV plus a follower platoon in predecessor-following topology.
//!
//! Every control step each follower observes its predecessor, plans with the
//! game MPC, lets the modelled human react, fuses both commands and applies
//! the result. All vehicles act on the same snapshot of step `k`, which is
//! the upstream-first ordering with plan sharing delayed by one step.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::dynamics::{discretize, AuthorityPair, DiscreteDynamics, VehicleState};
use crate::error::{invalid, Result};
use crate::fusion::{fuse, AuthoritySchedule};
use crate::human_model::{
    compute_feedforward, compute_gains, human_reaction, CostWeights, RefPoint, TrackingObjective,
};
use crate::machine_controller::{
    forecast_predecessor, machine_objective, plan, PlannerConfig, Predecessor, TimeGap, Violations,
};
use crate::metrics::MetricsConfig;
use crate::stacked_ops::assemble_stacked_human_law;

/// Spacing used when the controllers leave the equilibrium gap undetermined.
pub const CACC_SPACING: TimeGap = TimeGap {
    headway: 0.5,
    standstill: 2.0,
};

/// Log flag: the applied command hit the vehicle's acceleration limits.
pub const FLAG_ACTUATOR: u8 = 8;
/// Log flag: the follower has reached its predecessor.
pub const FLAG_COLLISION: u8 = 16;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LeaderProfile {
    Constant {
        v: f64,
    },
    /// `v0 + amplitude·sin(2π(t − t_start)/period)` for `cycles` periods.
    Sinusoid {
        v0: f64,
        amplitude: f64,
        period: f64,
        t_start: f64,
        #[serde(default = "default_cycles")]
        cycles: f64,
    },
    /// Constant deceleration from `v0` down to `v_final`.
    HardBrake {
        v0: f64,
        decel: f64,
        t_start: f64,
        v_final: f64,
    },
}

fn default_cycles() -> f64 {
    5.0
}

impl LeaderProfile {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Constant { v } => v >= 0.0 && v.is_finite(),
            Self::Sinusoid {
                v0,
                amplitude,
                period,
                t_start,
                cycles,
            } => v0 - amplitude.abs() >= 0.0 && period > 0.0 && cycles > 0.0 && t_start.is_finite(),
            Self::HardBrake {
                v0,
                decel,
                t_start,
                v_final,
            } => v0 >= 0.0 && decel < 0.0 && (0.0..=v0).contains(&v_final) && t_start.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(invalid(format!("invalid leader profile {self:?}")))
        }
    }

    pub fn speed(&self, t: f64) -> f64 {
        match *self {
            Self::Constant { v } => v,
            Self::Sinusoid {
                v0,
                amplitude,
                period,
                t_start,
                cycles,
            } => {
                let tau = t - t_start;
                if tau <= 0.0 || tau >= cycles * period {
                    v0
                } else {
                    v0 + amplitude * (2.0 * std::f64::consts::PI * tau / period).sin()
                }
            }
            Self::HardBrake {
                v0,
                decel,
                t_start,
                v_final,
            } => {
                if t <= t_start {
                    v0
                } else {
                    (v0 + decel * (t - t_start)).max(v_final)
                }
            }
        }
    }

    pub fn initial_speed(&self) -> f64 {
        self.speed(f64::NEG_INFINITY)
    }

    /// Start of the leader disturbance, if any.
    pub fn onset(&self) -> Option<f64> {
        match *self {
            Self::Constant { .. } => None,
            Self::Sinusoid { t_start, .. } | Self::HardBrake { t_start, .. } => Some(t_start),
        }
    }

    pub fn period(&self) -> Option<f64> {
        match *self {
            Self::Sinusoid { period, .. } => Some(period),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialGap {
    TimeGap {
        headway: f64,
        standstill: f64,
    },
    Fixed {
        gap: f64,
    },
    /// Gap at which each follower's first planned command is zero.
    Equilibrium,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HumanMode {
    /// Shared control with the modelled human.
    #[default]
    Modeled,
    /// Full human authority with delayed commands and no forecast.
    BaselineDelayed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanConfig {
    pub q_v: f64,
    pub q_g: f64,
    pub r: f64,
    /// Speed-difference reference; `None` leaves it unweighted.
    pub dv_ref: Option<f64>,
    pub time_gap: TimeGap,
}

impl Default for HumanConfig {
    fn default() -> Self {
        Self {
            q_v: 0.0,
            q_g: 1.0,
            r: 10.0,
            dv_ref: None,
            time_gap: TimeGap {
                headway: 0.5,
                standstill: 2.0,
            },
        }
    }
}

impl HumanConfig {
    pub fn objective(&self, ego_speed: f64, horizon: usize) -> TrackingObjective<f64> {
        TrackingObjective::uniform(
            CostWeights {
                q_v: self.q_v,
                q_g: self.q_g,
                r: self.r,
            },
            RefPoint::new(self.dv_ref, Some(self.time_gap.gap_at(ego_speed))),
            horizon,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub name: String,
    pub n_followers: usize,
    pub initial_gap: InitialGap,
    pub leader: LeaderProfile,
    /// Schedule shared by all followers unless `per_vehicle` is given.
    pub authority: AuthoritySchedule,
    pub per_vehicle: Option<Vec<AuthoritySchedule>>,
    pub planner: PlannerConfig,
    pub human: HumanConfig,
    pub duration: f64,
    pub dt: f64,
    pub human_mode: HumanMode,
    pub baseline_delay: f64,
    /// Hold time of a human-driven predecessor's acceleration in forecasts.
    pub forecast_hold: f64,
    pub seed: u64,
    /// Physical limits on the applied (fused) acceleration.
    pub accel_limits: AccelLimits,
    pub metrics: MetricsConfig,
}

/// Acceleration range the vehicle can realize, m/s².
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AccelLimits {
    pub min: f64,
    pub max: f64,
}

impl Default for AccelLimits {
    fn default() -> Self {
        Self { min: -6.0, max: 3.0 }
    }
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            name: "default".into(),
            n_followers: 6,
            initial_gap: InitialGap::TimeGap {
                headway: 0.5,
                standstill: 2.0,
            },
            leader: LeaderProfile::Constant { v: 10.0 },
            authority: AuthoritySchedule::default(),
            per_vehicle: None,
            planner: PlannerConfig::default(),
            human: HumanConfig::default(),
            duration: 100.0,
            dt: 0.1,
            human_mode: HumanMode::Modeled,
            baseline_delay: 0.5,
            forecast_hold: 0.5,
            seed: 0,
            accel_limits: AccelLimits::default(),
            metrics: MetricsConfig::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_followers == 0 {
            return Err(invalid("n_followers must be >= 1"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid(format!("duration must be positive, got {}", self.duration)));
        }
        if !(self.dt > 0.0) || (self.dt - self.planner.dt).abs() > 1e-12 {
            return Err(invalid(format!(
                "scenario dt {} must be positive and equal planner dt {}",
                self.dt, self.planner.dt
            )));
        }
        self.planner.validate()?;
        CostWeights::new(self.human.q_v, self.human.q_g, self.human.r)?;
        self.leader.validate()?;
        self.authority.validate()?;
        if let Some(list) = &self.per_vehicle {
            if list.len() != self.n_followers {
                return Err(invalid(format!(
                    "per_vehicle lists {} schedules for {} followers",
                    list.len(),
                    self.n_followers
                )));
            }
            for s in list {
                s.validate()?;
            }
        }
        match self.initial_gap {
            InitialGap::Fixed { gap } if !(gap > 0.0) => {
                return Err(invalid(format!("initial gap must be positive, got {gap}")))
            }
            InitialGap::TimeGap { headway, standstill } if !(headway >= 0.0 && standstill > 0.0) => {
                return Err(invalid(
                    "time-gap initial spacing needs headway >= 0 and standstill > 0",
                ))
            }
            _ => {}
        }
        if !(self.accel_limits.min < 0.0 && self.accel_limits.max > 0.0) {
            return Err(invalid(format!(
                "acceleration limits must bracket zero, got [{}, {}]",
                self.accel_limits.min, self.accel_limits.max
            )));
        }
        if !(self.baseline_delay >= 0.0 && self.forecast_hold >= 0.0) {
            return Err(invalid("delays and hold times must be non-negative"));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.duration / self.dt).round() as usize
    }

    /// Schedule of follower `i` (1-based).
    pub fn schedule(&self, i: usize) -> AuthoritySchedule {
        self.per_vehicle.as_ref().map_or(self.authority, |v| v[i - 1])
    }

    /// Start of the first disturbance: leader manoeuvre or takeover.
    pub fn onset(&self) -> Option<f64> {
        let takeover = (1..=self.n_followers)
            .filter_map(|i| self.schedule(i).onset())
            .reduce(f64::min);
        match (self.leader.onset(), takeover) {
            (Some(a), Some(b)) => Some(a.min(b)),
            (a, b) => a.or(b),
        }
    }
}

/// Per-vehicle time series; index 0 of a log is the leader.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleTrace {
    pub id: usize,
    pub position: Vec<f64>,
    pub speed: Vec<f64>,
    pub accel: Vec<f64>,
    pub gap: Vec<f64>,
    pub dv: Vec<f64>,
    pub u_h: Vec<f64>,
    pub u_m: Vec<f64>,
    pub u_fused: Vec<f64>,
    pub alpha_h: Vec<f64>,
    pub flags: Vec<u8>,
}

impl VehicleTrace {
    fn with_capacity(id: usize, n: usize) -> Self {
        let v = || Vec::with_capacity(n);
        Self {
            id,
            position: v(),
            speed: v(),
            accel: v(),
            gap: v(),
            dv: v(),
            u_h: v(),
            u_m: v(),
            u_fused: v(),
            alpha_h: v(),
            flags: Vec::with_capacity(n),
        }
    }

    pub fn len(&self) -> usize {
        self.position.len()
    }

    pub fn is_empty(&self) -> bool {
        self.position.is_empty()
    }

    pub fn collided(&self) -> bool {
        self.flags.iter().any(|f| f & FLAG_COLLISION != 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollisionEvent {
    pub vehicle: usize,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrajectoryLog {
    pub dt: f64,
    pub time: Vec<f64>,
    pub vehicles: Vec<VehicleTrace>,
    pub onset: Option<f64>,
    pub period: Option<f64>,
    pub collisions: Vec<CollisionEvent>,
}

impl TrajectoryLog {
    pub fn n_steps(&self) -> usize {
        self.time.len()
    }

    pub fn n_followers(&self) -> usize {
        self.vehicles.len().saturating_sub(1)
    }

    pub fn collided(&self) -> bool {
        !self.collisions.is_empty()
    }

    /// Index range of samples with `t0 <= t <= t1`.
    pub fn window(&self, t0: f64, t1: f64) -> std::ops::Range<usize> {
        let eps = 1e-9 * self.dt.max(1.0);
        let start = self.time.partition_point(|&t| t < t0 - eps);
        let end = self.time.partition_point(|&t| t <= t1 + eps);
        start..end.max(start)
    }
}

/// One follower's decision at one step.
#[derive(Debug, Clone, PartialEq)]
pub struct Decision {
    pub u_h: f64,
    pub u_m: f64,
    pub u_fused: f64,
    pub alpha_h: f64,
    pub violations: Violations,
    /// Fused commands along the plan, broadcast to the follower behind.
    pub published: Vec<f64>,
}

struct Controller<'a> {
    cfg: &'a ScenarioConfig,
    dynamics: DiscreteDynamics<f64>,
}

impl Controller<'_> {
    fn decide(
        &self,
        schedule: &AuthoritySchedule,
        t: f64,
        ego_speed: f64,
        x: VehicleState<f64>,
        forecast: &[f64],
        saturate: bool,
    ) -> Result<Decision> {
        let pc = &self.cfg.planner;
        let horizon = pc.horizon;
        let authority: Vec<AuthorityPair<f64>> = schedule.horizon(t, self.cfg.dt, horizon - 1);
        let human = self.cfg.human.objective(ego_speed, horizon);
        let machine = machine_objective::<f64>(pc, ego_speed);
        let gains = compute_gains(&self.dynamics, &authority, &human, horizon)?;
        let law = assemble_stacked_human_law(&gains, &human)?;
        let p = plan(&self.dynamics, &gains, &law, &machine, pc, x, forecast)?;
        let u_m = if saturate { p.u_m_first } else { p.u_m[0] };
        let mut seen = p.u_m.clone();
        seen[0] = u_m;
        let ff = compute_feedforward(&gains, &human, &seen)?;
        let u_h = human_reaction(&gains, &ff, 1, x, u_m)?;
        let auth = authority[0];
        Ok(Decision {
            u_h,
            u_m,
            u_fused: fuse(auth, u_h, u_m),
            alpha_h: auth.alpha_h(),
            violations: p.violations,
            published: p.fused(&authority),
        })
    }

    fn baseline_human(&self, ego_speed: f64, x: VehicleState<f64>) -> Result<f64> {
        let horizon = self.cfg.planner.horizon;
        let human = self.cfg.human.objective(ego_speed, horizon);
        let authority = vec![AuthorityPair::full_human(); horizon - 1];
        let gains = compute_gains(&self.dynamics, &authority, &human, horizon)?;
        let zeros = vec![0.0; horizon - 1];
        let ff = compute_feedforward(&gains, &human, &zeros)?;
        human_reaction(&gains, &ff, 1, x, 0.0)
    }
}

fn forecast_for(cfg: &ScenarioConfig, i: usize, leader_accel: f64, published: &[Option<Vec<f64>>]) -> Vec<f64> {
    let len = cfg.planner.horizon - 1;
    let pred = if i == 1 {
        Predecessor::Human { accel: leader_accel }
    } else {
        Predecessor::Cav {
            published: published[i - 1].as_deref(),
        }
    };
    forecast_predecessor(pred, len, cfg.dt, cfg.forecast_hold)
}

/// Published plan per vehicle; `None` where nothing has been broadcast.
type Plans = Vec<Option<Vec<f64>>>;

/// Equilibrium gaps and the plans each follower would broadcast there.
fn equilibrium_gaps(ctrl: &Controller<'_>, v0: f64) -> Result<(Vec<f64>, Plans)> {
    let cfg = ctrl.cfg;
    let mut gaps = vec![f64::NAN];
    let mut published: Vec<Option<Vec<f64>>> = vec![None; cfg.n_followers + 1];
    for i in 1..=cfg.n_followers {
        let forecast = forecast_for(cfg, i, 0.0, &published);
        let schedule = cfg.schedule(i);
        let f = |g: f64| ctrl.decide(&schedule, 0.0, v0, VehicleState::new(0.0, g), &forecast, false);
        let (g0, g1) = (1.0, 50.0);
        let (f0, f1) = (f(g0)?.u_fused, f(g1)?.u_fused);
        let g = if (f1 - f0).abs() < 1e-12 * (1.0 + f0.abs()) {
            if f0.abs() > 1e-9 {
                return Err(invalid(format!(
                    "follower {i} has no equilibrium gap (command {f0} at any gap)"
                )));
            }
            // every gap is an equilibrium; fall back to CACC spacing
            CACC_SPACING.gap_at(v0)
        } else {
            g0 - f0 * (g1 - g0) / (f1 - f0)
        };
        if !(g > 0.0) {
            return Err(invalid(format!(
                "follower {i} has no positive equilibrium gap (got {g})"
            )));
        }
        published[i] = Some(f(g)?.published);
        gaps.push(g);
    }
    Ok((gaps, published))
}

/// Runs the scenario in the mode it selects.
pub fn simulate(cfg: &ScenarioConfig) -> Result<TrajectoryLog> {
    match cfg.human_mode {
        HumanMode::Modeled => run(cfg),
        HumanMode::BaselineDelayed => run_baseline_human(cfg),
    }
}

pub fn run(cfg: &ScenarioConfig) -> Result<TrajectoryLog> {
    execute(cfg, false)
}

/// Full human authority, commands delayed by `baseline_delay`, no forecast.
pub fn run_baseline_human(cfg: &ScenarioConfig) -> Result<TrajectoryLog> {
    execute(cfg, true)
}

fn execute(cfg: &ScenarioConfig, baseline: bool) -> Result<TrajectoryLog> {
    cfg.validate()?;
    let ctrl = Controller {
        cfg,
        dynamics: discretize(cfg.dt)?,
    };
    let n = cfg.n_followers;
    let steps = cfg.steps();
    let dt = cfg.dt;
    let (u_min, u_max) = (cfg.accel_limits.min, cfg.accel_limits.max);
    let v0 = cfg.leader.initial_speed();

    let (init_gaps, mut published) = match cfg.initial_gap {
        InitialGap::TimeGap { headway, standstill } => (
            std::iter::once(f64::NAN)
                .chain((0..n).map(|_| TimeGap { headway, standstill }.gap_at(v0)))
                .collect(),
            vec![None; n + 1],
        ),
        InitialGap::Fixed { gap } => (
            std::iter::once(f64::NAN).chain((0..n).map(|_| gap)).collect(),
            vec![None; n + 1],
        ),
        InitialGap::Equilibrium if baseline => {
            return Err(invalid("equilibrium initial gaps are defined for shared control only"))
        }
        InitialGap::Equilibrium => equilibrium_gaps(&ctrl, v0)?,
    };

    let mut pos = vec![0.0; n + 1];
    for i in 1..=n {
        pos[i] = pos[i - 1] - init_gaps[i];
    }
    let mut speed = vec![v0; n + 1];
    let mut collided = vec![false; n + 1];
    let delay_steps = (cfg.baseline_delay / dt).round() as usize;
    let mut delay: Vec<VecDeque<f64>> = (0..=n).map(|_| VecDeque::from(vec![0.0; delay_steps])).collect();

    let mut log = TrajectoryLog {
        dt,
        time: Vec::with_capacity(steps),
        vehicles: (0..=n).map(|i| VehicleTrace::with_capacity(i, steps)).collect(),
        onset: cfg.onset(),
        period: cfg.leader.period(),
        collisions: Vec::new(),
    };

    for k in 0..steps {
        let t = k as f64 * dt;
        log.time.push(t);
        let leader_accel = (cfg.leader.speed(t + dt) - speed[0]) / dt;
        let mut accel = vec![0.0; n + 1];
        accel[0] = leader_accel;
        let mut next_published: Vec<Option<Vec<f64>>> = vec![None; n + 1];

        let lead = &mut log.vehicles[0];
        lead.position.push(pos[0]);
        lead.speed.push(speed[0]);
        lead.accel.push(leader_accel);
        lead.gap.push(f64::NAN);
        lead.dv.push(f64::NAN);
        lead.u_h.push(leader_accel);
        lead.u_m.push(f64::NAN);
        lead.u_fused.push(leader_accel);
        lead.alpha_h.push(1.0);
        lead.flags.push(0);

        for i in 1..=n {
            let gap = pos[i - 1] - pos[i];
            let dv = speed[i - 1] - speed[i];
            let x = VehicleState::new(dv, gap);
            let mut flags = 0u8;
            let (u_h, u_m, commanded, alpha_h) = if collided[i] {
                flags |= FLAG_COLLISION;
                (f64::NAN, f64::NAN, f64::NAN, f64::NAN)
            } else if baseline {
                let u_h = ctrl.baseline_human(speed[i], x)?;
                let q = &mut delay[i];
                q.push_back(u_h);
                let applied = q.pop_front().expect("buffer holds at least the new command");
                (u_h, 0.0, applied, 1.0)
            } else {
                let forecast = forecast_for(cfg, i, leader_accel, &published);
                let d = ctrl.decide(&cfg.schedule(i), t, speed[i], x, &forecast, true)?;
                flags |= d.violations.0;
                next_published[i] = Some(d.published);
                (d.u_h, d.u_m, d.u_fused, d.alpha_h)
            };
            let applied = if collided[i] {
                accel[i - 1]
            } else {
                if commanded < u_min || commanded > u_max {
                    flags |= FLAG_ACTUATOR;
                }
                commanded.clamp(u_min, u_max)
            };
            accel[i] = applied;
            let tr = &mut log.vehicles[i];
            tr.position.push(pos[i]);
            tr.speed.push(speed[i]);
            tr.gap.push(gap);
            tr.dv.push(dv);
            tr.u_h.push(u_h);
            tr.u_m.push(u_m);
            tr.u_fused.push(commanded);
            tr.alpha_h.push(alpha_h);
            tr.flags.push(flags);
        }

        // forward Euler on positions, speeds floored at zero
        let mut new_speed = speed.clone();
        new_speed[0] = cfg.leader.speed(t + dt).max(0.0);
        for i in 1..=n {
            new_speed[i] = if collided[i] {
                new_speed[i - 1]
            } else {
                (speed[i] + dt * accel[i]).max(0.0)
            };
        }
        for i in 0..=n {
            let realized = (new_speed[i] - speed[i]) / dt;
            log.vehicles[i].accel.push(realized);
            pos[i] += dt * speed[i];
        }
        for i in 1..=n {
            if collided[i] {
                pos[i] = pos[i - 1];
            } else if pos[i - 1] - pos[i] <= 0.0 {
                collided[i] = true;
                log.collisions.push(CollisionEvent {
                    vehicle: i,
                    time: t + dt,
                });
            }
        }
        speed = new_speed;
        published = next_published;
    }
    Ok(log)
}
