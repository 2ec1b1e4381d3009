//! Seeded randomized cross-checks of the controllers against [`crate::oracle`].

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dynamics::{discretize, AuthorityPair, DiscreteDynamics, VehicleState};
use crate::error::Result;
use crate::human_model::{
    closed_loop_rollout, compute_feedforward, compute_gains, CostWeights, GainSequence, RefPoint, ReferenceTrajectory,
    TrackingObjective,
};
use crate::machine_controller::{assemble_qp, plan, solve_kkt, solve_kkt_dense, PlannerConfig};
use crate::oracle::{
    finite_difference_gradient, probe_affine, solve_dense_qp, HumanProblemData, MachineOnlyData, TrackingData,
};
use crate::stacked_ops::{assemble_stacked_human_law, flatten_states};

pub const DEFAULT_SEED: u64 = 20_240_917;

/// Suite tolerances.
pub const HUMAN_LAW_TOL: f64 = 1e-8;
pub const GRADIENT_TOL: f64 = 1e-5;
pub const PSD_TOL: f64 = 1e-12;
pub const STACKED_TOL: f64 = 1e-9;
pub const KKT_RESIDUAL_TOL: f64 = 1e-8;
pub const OBJECTIVE_TOL: f64 = 1e-6;
pub const CONSISTENCY_TOL: f64 = 1e-8;
pub const LEADER_DECREASE_TOL: f64 = 1e-9;
pub const DEGENERATE_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Suite {
    HumanLaw,
    Stacked,
    Gmpc,
    LeaderOptimality,
    Degenerate,
}

impl Suite {
    pub const ALL: [Suite; 5] = [
        Suite::HumanLaw,
        Suite::Stacked,
        Suite::Gmpc,
        Suite::LeaderOptimality,
        Suite::Degenerate,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::HumanLaw => "human_law",
            Suite::Stacked => "stacked",
            Suite::Gmpc => "gmpc",
            Suite::LeaderOptimality => "leader_optimality",
            Suite::Degenerate => "degenerate",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|x| x.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationConfig {
    pub seed: u64,
    pub instances: usize,
    /// Added to the first feedback gain before it is used (negative control).
    pub gain_perturbation: Option<f64>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            seed: DEFAULT_SEED,
            instances: 200,
            gain_perturbation: None,
        }
    }
}

/// One measured quantity of a suite and its bound.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub worst: f64,
    pub tolerance: f64,
    /// Reproduction details of the worst instance.
    pub worst_instance: String,
}

impl Check {
    fn new(name: &str, tolerance: f64) -> Self {
        Self {
            name: name.to_string(),
            worst: 0.0,
            tolerance,
            worst_instance: String::new(),
        }
    }

    fn record(&mut self, value: f64, instance: impl FnOnce() -> String) {
        // NaN counts as a failure
        if !(value <= self.worst) {
            self.worst = if value.is_nan() { f64::INFINITY } else { value };
            self.worst_instance = instance();
        }
    }

    pub fn passed(&self) -> bool {
        self.worst <= self.tolerance
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub instances: usize,
    pub checks: Vec<Check>,
    /// Instances whose evaluation returned an error.
    pub errors: Vec<String>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.errors.is_empty() && self.checks.iter().all(Check::passed)
    }
}

pub fn run_suite(suite: Suite, cfg: &ValidationConfig) -> SuiteReport {
    match suite {
        Suite::HumanLaw => human_law_suite(cfg),
        Suite::Stacked => stacked_suite(cfg),
        Suite::Gmpc => gmpc_suite(cfg),
        Suite::LeaderOptimality => leader_optimality_suite(cfg),
        Suite::Degenerate => degenerate_suite(cfg),
    }
}

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let scale = b.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    if a.len() != b.len() {
        return f64::INFINITY;
    }
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// A random tracking problem as raw data plus its library form.
#[derive(Debug, Clone)]
pub struct RandomTracking {
    pub data: TrackingData,
    pub objective: TrackingObjective<f64>,
}

fn random_tracking(rng: &mut ChaCha8Rng, horizon: usize, q_v_positive: bool) -> RandomTracking {
    let mut weights = Vec::with_capacity(horizon);
    let mut points = Vec::with_capacity(horizon);
    let mut data = TrackingData {
        q_diag: Vec::with_capacity(horizon),
        r: Vec::with_capacity(horizon - 1),
        x_ref: Vec::with_capacity(horizon),
    };
    for k in 0..horizon {
        let q_v = if q_v_positive {
            rng.gen_range(0.1..5.0)
        } else {
            rng.gen_range(0.0..5.0)
        };
        let q_g = rng.gen_range(0.0..5.0);
        let r = rng.gen_range(0.1..10.0);
        let dv = (q_v_positive || rng.gen_bool(0.7)).then(|| rng.gen_range(-3.0..3.0));
        let g = rng.gen_bool(0.7).then(|| rng.gen_range(2.0..40.0));
        weights.push(CostWeights { q_v, q_g, r });
        points.push(RefPoint::new(dv, g));
        data.q_diag.push([
            if dv.is_some() { q_v } else { 0.0 },
            if g.is_some() { q_g } else { 0.0 },
        ]);
        data.x_ref.push([dv.unwrap_or(0.0), g.unwrap_or(0.0)]);
        if k + 1 < horizon {
            data.r.push(r);
        }
    }
    RandomTracking {
        data,
        objective: TrackingObjective::new(weights, ReferenceTrajectory { points }),
    }
}

/// Randomized follower instance.
#[derive(Debug, Clone)]
pub struct HumanInstance {
    pub index: usize,
    pub dt: f64,
    pub alpha_h: Vec<f64>,
    pub tracking: RandomTracking,
    pub x_1: [f64; 2],
    pub u_m: Vec<f64>,
}

impl HumanInstance {
    pub fn horizon(&self) -> usize {
        self.alpha_h.len() + 1
    }

    pub fn describe(&self, seed: u64) -> String {
        format!(
            "seed={seed} instance={} K={} dt={} alpha_h={:?} x_1={:?}",
            self.index,
            self.horizon(),
            self.dt,
            self.alpha_h,
            self.x_1
        )
    }

    pub fn authority(&self) -> Vec<AuthorityPair<f64>> {
        self.alpha_h
            .iter()
            .map(|&a| AuthorityPair::new(a).expect("sampled in range"))
            .collect()
    }

    pub fn dynamics(&self) -> DiscreteDynamics<f64> {
        discretize(self.dt).expect("positive dt")
    }

    pub fn oracle_data(&self) -> HumanProblemData {
        HumanProblemData {
            dt: self.dt,
            alpha_h: self.alpha_h.clone(),
            cost: self.tracking.data.clone(),
            x_1: self.x_1,
            u_m: self.u_m.clone(),
        }
    }
}

pub fn human_instances(seed: u64, count: usize) -> Vec<HumanInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|index| {
            let horizon = rng.gen_range(2..=8);
            let dt = [0.05, 0.1, 0.2][rng.gen_range(0..3)];
            // α_h ∈ (0, 1]
            let alpha_h = (0..horizon - 1).map(|_| 1.0 - rng.gen_range(0.0..1.0)).collect();
            let tracking = random_tracking(&mut rng, horizon, false);
            let x_1 = [rng.gen_range(-5.0..5.0), rng.gen_range(1.0..50.0)];
            let u_m = (0..horizon - 1).map(|_| rng.gen_range(-4.0..4.0)).collect();
            HumanInstance {
                index,
                dt,
                alpha_h,
                tracking,
                x_1,
                u_m,
            }
        })
        .collect()
}

fn perturb(gains: &mut GainSequence<f64>, delta: Option<f64>) {
    if let Some(d) = delta {
        gains.k[0].0[0] += d;
    }
}

/// Closed-loop human commands and states from the library path.
type HumanPath = (GainSequence<f64>, Vec<VehicleState<f64>>, Vec<f64>);

fn human_path(inst: &HumanInstance, delta: Option<f64>) -> Result<HumanPath> {
    let dynamics = inst.dynamics();
    let obj = &inst.tracking.objective;
    let mut gains = compute_gains(&dynamics, &inst.authority(), obj, inst.horizon())?;
    perturb(&mut gains, delta);
    let ff = compute_feedforward(&gains, obj, &inst.u_m)?;
    let x_1 = VehicleState::new(inst.x_1[0], inst.x_1[1]);
    let (states, u_h) = closed_loop_rollout(&dynamics, &gains, &ff, x_1, &inst.u_m, None)?;
    Ok((gains, states, u_h))
}

pub fn human_law_suite(cfg: &ValidationConfig) -> SuiteReport {
    let mut err = Check::new("max relative error vs oracle minimizer", HUMAN_LAW_TOL);
    let mut grad = Check::new("max |dJ_h/du_h| by central differences", GRADIENT_TOL);
    let mut psd = Check::new("max negative eigenvalue of D_k", PSD_TOL);
    let mut errors = Vec::new();
    let instances = human_instances(cfg.seed, cfg.instances);
    for inst in &instances {
        let describe = || inst.describe(cfg.seed);
        let outcome = (|| -> Result<()> {
            let (gains, _, u_h) = human_path(inst, cfg.gain_perturbation)?;
            let data = inst.oracle_data();
            let oracle = solve_dense_qp(&data.qp()?)?;
            err.record(rel_err(&u_h, &oracle.z), describe);
            let g = finite_difference_gradient(|u| data.objective(u), &u_h, 1e-5)?;
            grad.record(g.iter().fold(0.0f64, |m, v| m.max(v.abs())), describe);
            let worst_neg = gains
                .d
                .iter()
                .map(|d| -d.sym_eigenvalues()[0])
                .fold(f64::NEG_INFINITY, f64::max);
            psd.record(worst_neg.max(0.0), describe);
            Ok(())
        })();
        if let Err(e) = outcome {
            errors.push(format!("{}: {e}", describe()));
        }
    }
    SuiteReport {
        suite: Suite::HumanLaw,
        instances: instances.len(),
        checks: vec![err, grad, psd],
        errors,
    }
}

pub fn stacked_suite(cfg: &ValidationConfig) -> SuiteReport {
    let mut diff = Check::new("max |stacked - per-step| human command", STACKED_TOL);
    let mut errors = Vec::new();
    let instances = human_instances(cfg.seed, cfg.instances);
    for inst in &instances {
        let describe = || inst.describe(cfg.seed);
        let outcome = (|| -> Result<()> {
            let (gains, states, u_h) = human_path(inst, None)?;
            let mut law_gains = gains.clone();
            perturb(&mut law_gains, cfg.gain_perturbation);
            let law = assemble_stacked_human_law(&law_gains, &inst.tracking.objective)?;
            let stacked = law.apply(&flatten_states(&states), &inst.u_m)?;
            diff.record(max_abs_diff(&stacked, &u_h), describe);
            Ok(())
        })();
        if let Err(e) = outcome {
            errors.push(format!("{}: {e}", describe()));
        }
    }
    SuiteReport {
        suite: Suite::Stacked,
        instances: instances.len(),
        checks: vec![diff],
        errors,
    }
}

/// Randomized leader/follower game instance.
#[derive(Debug, Clone)]
pub struct GameInstance {
    pub index: usize,
    pub dt: f64,
    pub alpha_h: Vec<f64>,
    pub human: RandomTracking,
    pub machine: RandomTracking,
    pub x_1: [f64; 2],
    pub a_p: Vec<f64>,
}

impl GameInstance {
    pub fn horizon(&self) -> usize {
        self.alpha_h.len() + 1
    }

    pub fn describe(&self, seed: u64) -> String {
        format!(
            "seed={seed} instance={} K={} dt={} alpha_h={:?} x_1={:?} a_p={:?}",
            self.index,
            self.horizon(),
            self.dt,
            self.alpha_h,
            self.x_1,
            self.a_p
        )
    }

    pub fn authority(&self) -> Vec<AuthorityPair<f64>> {
        self.alpha_h
            .iter()
            .map(|&a| AuthorityPair::new(a).expect("sampled in range"))
            .collect()
    }

    pub fn x_1(&self) -> VehicleState<f64> {
        VehicleState::new(self.x_1[0], self.x_1[1])
    }
}

pub fn game_instances(seed: u64, count: usize, alpha: Option<f64>) -> Vec<GameInstance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    (0..count)
        .map(|index| {
            let horizon = rng.gen_range(2..=12);
            let dt = [0.05, 0.1, 0.2][rng.gen_range(0..3)];
            let alpha_h = (0..horizon - 1)
                .map(|_| alpha.unwrap_or_else(|| rng.gen_range(0.0..=1.0)))
                .collect();
            let human = random_tracking(&mut rng, horizon, false);
            let machine = random_tracking(&mut rng, horizon, true);
            let x_1 = [rng.gen_range(-5.0..5.0), rng.gen_range(1.0..50.0)];
            let a_p = (0..horizon - 1).map(|_| rng.gen_range(-4.0..3.0)).collect();
            GameInstance {
                index,
                dt,
                alpha_h,
                human,
                machine,
                x_1,
                a_p,
            }
        })
        .collect()
}

/// Machine cost after the follower reacts to `u_m`, with the resulting states.
pub fn leader_cost(
    inst: &GameInstance,
    dynamics: &DiscreteDynamics<f64>,
    gains: &GainSequence<f64>,
    u_m: &[f64],
) -> Result<(f64, Vec<f64>)> {
    let ff = compute_feedforward(gains, &inst.human.objective, u_m)?;
    let (states, _) = closed_loop_rollout(dynamics, gains, &ff, inst.x_1(), u_m, Some(&inst.a_p))?;
    let x = flatten_states(&states);
    Ok((inst.machine.data.cost(&x, u_m), x))
}

pub fn gmpc_suite(cfg: &ValidationConfig) -> SuiteReport {
    let mut resid = Check::new("max scaled KKT residual", KKT_RESIDUAL_TOL);
    let mut obj = Check::new("max relative objective gap vs oracle", OBJECTIVE_TOL);
    let mut cons = Check::new("max Stackelberg forward-simulation mismatch", CONSISTENCY_TOL);
    let mut dense = Check::new("max relative difference elimination vs dense KKT", CONSISTENCY_TOL);
    let mut errors = Vec::new();
    let instances = game_instances(cfg.seed, cfg.instances, None);
    for inst in &instances {
        let describe = || inst.describe(cfg.seed);
        let outcome = (|| -> Result<()> {
            let dynamics = discretize(inst.dt)?;
            let gains = compute_gains(&dynamics, &inst.authority(), &inst.human.objective, inst.horizon())?;
            let mut law_gains = gains.clone();
            perturb(&mut law_gains, cfg.gain_perturbation);
            let law = assemble_stacked_human_law(&law_gains, &inst.human.objective)?;
            let qp = assemble_qp(
                &dynamics,
                &law_gains,
                &law,
                &inst.machine.objective,
                inst.x_1(),
                &inst.a_p,
            )?;
            let sol = solve_kkt(&qp)?;
            let (s, f) = sol.diagnostics.scaled_residuals(&qp);
            resid.record(s.max(f), describe);

            let reference = solve_kkt_dense(&qp)?;
            dense.record(rel_err(&sol.z(), &reference.z()), describe);

            let (j_mine, x_roll) = leader_cost(inst, &dynamics, &gains, &sol.u_m)?;
            let scale = 1.0 + x_roll.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            cons.record(max_abs_diff(&x_roll, &sol.x) / scale, describe);

            let n = inst.horizon() - 1;
            let (g, c) = probe_affine(|u| Ok(leader_cost(inst, &dynamics, &gains, u)?.1), n)?;
            let oracle = solve_dense_qp(&inst.machine.data.reduced_qp(&g, &c)?)?;
            let (j_oracle, _) = leader_cost(inst, &dynamics, &gains, &oracle.z)?;
            obj.record((j_mine - j_oracle).abs() / j_oracle.abs().max(1.0), describe);
            Ok(())
        })();
        if let Err(e) = outcome {
            errors.push(format!("{}: {e}", describe()));
        }
    }
    SuiteReport {
        suite: Suite::Gmpc,
        instances: instances.len(),
        checks: vec![resid, obj, cons, dense],
        errors,
    }
}

pub fn leader_optimality_suite(cfg: &ValidationConfig) -> SuiteReport {
    const PERTURBATIONS: usize = 20;
    let mut dec = Check::new("max decrease of J_m under 1e-2 perturbations", LEADER_DECREASE_TOL);
    let mut errors = Vec::new();
    let count = cfg.instances.max(50);
    let instances = game_instances(cfg.seed.wrapping_add(1), count, None);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(2));
    for inst in &instances {
        let describe = || inst.describe(cfg.seed);
        let outcome = (|| -> Result<()> {
            let dynamics = discretize(inst.dt)?;
            let gains = compute_gains(&dynamics, &inst.authority(), &inst.human.objective, inst.horizon())?;
            let mut law_gains = gains.clone();
            perturb(&mut law_gains, cfg.gain_perturbation);
            let law = assemble_stacked_human_law(&law_gains, &inst.human.objective)?;
            let qp = assemble_qp(
                &dynamics,
                &law_gains,
                &law,
                &inst.machine.objective,
                inst.x_1(),
                &inst.a_p,
            )?;
            let sol = solve_kkt(&qp)?;
            let (j_opt, _) = leader_cost(inst, &dynamics, &gains, &sol.u_m)?;
            for _ in 0..PERTURBATIONS {
                let dir: Vec<f64> = sol.u_m.iter().map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = dir.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-300);
                let u: Vec<f64> = sol.u_m.iter().zip(&dir).map(|(u, d)| u + 1e-2 * d / norm).collect();
                let (j, _) = leader_cost(inst, &dynamics, &gains, &u)?;
                dec.record((j_opt - j).max(0.0), describe);
            }
            Ok(())
        })();
        if let Err(e) = outcome {
            errors.push(format!("{}: {e}", describe()));
        }
    }
    SuiteReport {
        suite: Suite::LeaderOptimality,
        instances: instances.len(),
        checks: vec![dec],
        errors,
    }
}

pub fn degenerate_suite(cfg: &ValidationConfig) -> SuiteReport {
    let mut machine_only = Check::new("alpha_h=0: max relative difference vs machine-only MPC", DEGENERATE_TOL);
    let mut pure_human = Check::new("alpha_h=1, Q_m=0: max |fused - human law|", DEGENERATE_TOL);
    let mut errors = Vec::new();
    let count = cfg.instances.max(50);

    let zero = game_instances(cfg.seed.wrapping_add(3), count, Some(0.0));
    for inst in &zero {
        let describe = || inst.describe(cfg.seed);
        let outcome = (|| -> Result<()> {
            let dynamics = discretize(inst.dt)?;
            let gains = compute_gains(&dynamics, &inst.authority(), &inst.human.objective, inst.horizon())?;
            let mut law_gains = gains.clone();
            perturb(&mut law_gains, cfg.gain_perturbation);
            let law = assemble_stacked_human_law(&law_gains, &inst.human.objective)?;
            let qp = assemble_qp(
                &dynamics,
                &law_gains,
                &law,
                &inst.machine.objective,
                inst.x_1(),
                &inst.a_p,
            )?;
            let sol = solve_kkt(&qp)?;
            let data = MachineOnlyData {
                dt: inst.dt,
                cost: inst.machine.data.clone(),
                x_1: inst.x_1,
                a_p: inst.a_p.clone(),
            };
            let oracle = solve_dense_qp(&data.qp()?)?;
            machine_only.record(rel_err(&sol.z(), &oracle.z), describe);
            Ok(())
        })();
        if let Err(e) = outcome {
            errors.push(format!("{}: {e}", describe()));
        }
    }

    let one = game_instances(cfg.seed.wrapping_add(4), count, Some(1.0));
    for inst in &one {
        let describe = || inst.describe(cfg.seed);
        let outcome = (|| -> Result<()> {
            let dynamics = discretize(inst.dt)?;
            let gains = compute_gains(&dynamics, &inst.authority(), &inst.human.objective, inst.horizon())?;
            let mut law_gains = gains.clone();
            perturb(&mut law_gains, cfg.gain_perturbation);
            let law = assemble_stacked_human_law(&law_gains, &inst.human.objective)?;
            let mut machine = inst.machine.objective.clone();
            for w in &mut machine.weights {
                w.q_v = 0.0;
                w.q_g = 0.0;
            }
            let pc = PlannerConfig {
                horizon: inst.horizon(),
                dt: inst.dt,
                ..PlannerConfig::default()
            };
            let p = plan(&dynamics, &law_gains, &law, &machine, &pc, inst.x_1(), &inst.a_p)?;
            let fused = p.fused(&inst.authority());
            let zeros = vec![0.0; inst.horizon() - 1];
            let ff = compute_feedforward(&gains, &inst.human.objective, &zeros)?;
            let (_, u_h) = closed_loop_rollout(&dynamics, &gains, &ff, inst.x_1(), &zeros, Some(&inst.a_p))?;
            pure_human.record(max_abs_diff(&fused, &u_h), describe);
            Ok(())
        })();
        if let Err(e) = outcome {
            errors.push(format!("{}: {e}", describe()));
        }
    }
    SuiteReport {
        suite: Suite::Degenerate,
        instances: zero.len() + one.len(),
        checks: vec![machine_only, pure_human],
        errors,
    }
}
