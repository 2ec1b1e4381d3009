//! Stackelberg-leader game MPC for the machine.
//!
//! The human reaction law is substituted into the plant, which turns the
//! machine problem into an equality-constrained QP over `z = (X, U_m)`:
//!
//! ```text
//! min ½ zᵀ Dm z + zᵀ Fm   s.t.   Wm z = Zm
//! ```
//!
//! solved through its KKT (saddle-point) system.

use serde::{Deserialize, Serialize};

use crate::dynamics::{AuthorityPair, DiscreteDynamics, VehicleState};
use crate::error::{invalid, Error, Result};
use crate::human_model::{compute_gains, CostWeights, GainSequence, TrackingObjective};
use crate::linalg::{backward_substitute_unit_transpose, forward_substitute_unit, norm_inf, Lu, Mat};
use crate::scalar::Scalar;
use crate::stacked_ops::{assemble_stacked_human_law, unflatten_states, StackedHumanLaw};

/// Saddle-point systems with a larger condition estimate are rejected.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, PartialEq)]
pub struct QpProblem<T> {
    pub horizon: usize,
    pub dm: Mat<T>,
    pub fm: Vec<T>,
    pub wm: Mat<T>,
    pub zm: Vec<T>,
}

impl<T: Scalar> QpProblem<T> {
    /// Number of equality constraints, equal to the number of stacked state entries.
    pub fn n_states(&self) -> usize {
        self.wm.rows()
    }

    pub fn n_controls(&self) -> usize {
        self.n_vars() - self.n_states().min(self.n_vars())
    }

    pub fn n_vars(&self) -> usize {
        self.dm.rows()
    }

    /// `½ zᵀ Dm z + zᵀ Fm`.
    pub fn objective(&self, z: &[T]) -> Result<T> {
        let dz = self.dm.mul_vec(z)?;
        let half = T::lit(0.5);
        Ok(z.iter()
            .zip(&dz)
            .zip(&self.fm)
            .map(|((&zi, &di), &fi)| half * zi * di + zi * fi)
            .sum())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum KktMethod {
    /// LU of the full saddle-point matrix.
    Dense,
    /// Elimination of the states through the unit lower-triangular state block.
    StateElimination,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktDiagnostics<T> {
    /// `‖Dm z + Fm + Wmᵀλ‖∞`.
    pub stationarity: T,
    /// `‖Wm z − Zm‖∞`.
    pub feasibility: T,
    /// 1-norm condition estimate of the factored system.
    pub condition: T,
    pub method: KktMethod,
}

impl<T: Scalar> KktDiagnostics<T> {
    /// Residuals scaled as `r / (1 + ‖rhs‖∞)`.
    pub fn scaled_residuals(&self, qp: &QpProblem<T>) -> (T, T) {
        (
            self.stationarity / (T::one() + norm_inf(&qp.fm)),
            self.feasibility / (T::one() + norm_inf(&qp.zm)),
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KktSolution<T> {
    pub x: Vec<T>,
    pub u_m: Vec<T>,
    pub lambda: Vec<T>,
    pub diagnostics: KktDiagnostics<T>,
}

impl<T: Scalar> KktSolution<T> {
    pub fn z(&self) -> Vec<T> {
        self.x.iter().chain(&self.u_m).copied().collect()
    }

    pub fn states(&self) -> Vec<VehicleState<T>> {
        unflatten_states(&self.x)
    }
}

/// Constant time-gap spacing policy `g = headway·v + standstill`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeGap {
    pub headway: f64,
    pub standstill: f64,
}

impl TimeGap {
    pub fn gap_at(&self, speed: f64) -> f64 {
        self.headway * speed.max(0.0) + self.standstill
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerConfig {
    pub horizon: usize,
    pub dt: f64,
    pub q_v: f64,
    pub q_g: f64,
    pub r: f64,
    /// Gap the machine regulates to; `None` leaves the gap unweighted.
    pub gap_reference: Option<TimeGap>,
    pub u_min: f64,
    pub u_max: f64,
    pub g_min: f64,
    pub replan_period: usize,
}

impl Default for PlannerConfig {
    fn default() -> Self {
        Self {
            horizon: 30,
            dt: 0.1,
            q_v: 1.0,
            q_g: 0.2,
            r: 0.6,
            gap_reference: Some(TimeGap {
                headway: 0.5,
                standstill: 2.0,
            }),
            u_min: -20.0,
            u_max: 10.0,
            g_min: 1.0,
            replan_period: 1,
        }
    }
}

impl PlannerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.horizon < 2 {
            return Err(invalid(format!("planner horizon must be >= 2, got {}", self.horizon)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(invalid(format!("planner dt must be positive, got {}", self.dt)));
        }
        if !(self.q_v > 0.0) {
            return Err(invalid(format!(
                "machine speed weight q_v must be positive, got {}",
                self.q_v
            )));
        }
        CostWeights::new(self.q_v, self.q_g, self.r)?;
        if !(self.u_min < self.u_max) {
            return Err(invalid(format!(
                "control bounds out of order: u_min={} u_max={}",
                self.u_min, self.u_max
            )));
        }
        if self.replan_period == 0 {
            return Err(invalid("replan period must be >= 1"));
        }
        Ok(())
    }

    pub fn weights<T: Scalar>(&self) -> CostWeights<T> {
        CostWeights {
            q_v: T::lit(self.q_v),
            q_g: T::lit(self.q_g),
            r: T::lit(self.r),
        }
    }
}

/// Builds the machine QP with the stacked human law substituted into the plant.
///
/// Constraint block row 0 pins `x_1`; block row `k` encodes
/// `x_{k+1} = A x_k + B_h(K_k x_k + P_k u_{m,k} + S_k) + B_m u_{m,k} + C aᵖ_k`.
pub fn assemble_qp<T: Scalar>(
    dynamics: &DiscreteDynamics<T>,
    gains: &GainSequence<T>,
    stacked: &StackedHumanLaw<T>,
    machine: &TrackingObjective<T>,
    x_1: VehicleState<T>,
    a_p: &[T],
) -> Result<QpProblem<T>> {
    let horizon = gains.horizon();
    if stacked.horizon != horizon {
        return Err(invalid(format!(
            "stacked law horizon {} differs from gain horizon {horizon}",
            stacked.horizon
        )));
    }
    if a_p.len() != horizon - 1 {
        return Err(invalid(format!(
            "predecessor forecast must have {} entries, got {}",
            horizon - 1,
            a_p.len()
        )));
    }
    if machine.len() < horizon {
        return Err(invalid(format!(
            "machine objective covers {} steps, horizon is {horizon}",
            machine.len()
        )));
    }
    let nx = 2 * horizon;
    let nu = horizon - 1;
    let n = nx + nu;

    let mut dm = Mat::zeros(n, n);
    let mut fm = vec![T::zero(); n];
    for k in 1..=horizon {
        let q = machine.q(k);
        let i = 2 * (k - 1);
        for a in 0..2 {
            for b in 0..2 {
                dm[(i + a, i + b)] = q.0[a][b];
            }
        }
        let qr = machine.q_ref(k);
        fm[i] = -qr[0];
        fm[i + 1] = -qr[1];
    }
    for k in 1..horizon {
        dm[(nx + k - 1, nx + k - 1)] = machine.r(k);
    }

    let sens = stacked.machine_sensitivity();
    let constant = stacked.constant_term();
    let mut wm = Mat::zeros(nx, n);
    let mut zm = vec![T::zero(); nx];
    for i in 0..nx {
        wm[(i, i)] = T::one();
    }
    zm[0] = x_1.dv;
    zm[1] = x_1.g;
    for k in 1..horizon {
        let i = k - 1;
        let row = 2 * k;
        let col = 2 * i;
        let closed = gains.a + gains.b_h[i].outer(&gains.k[i]);
        for a in 0..2 {
            for b in 0..2 {
                wm[(row + a, col + b)] = -closed.0[a][b];
            }
        }
        let b_h = gains.b_h[i];
        for c in 0..nu {
            let mut entry = b_h.scale(-sens[(i, c)]);
            if c == i {
                entry = entry - gains.b_m[i];
            }
            wm[(row, nx + c)] = entry[0];
            wm[(row + 1, nx + c)] = entry[1];
        }
        let rhs = b_h.scale(constant[i]) + dynamics.c.scale(a_p[i]);
        zm[row] = rhs[0];
        zm[row + 1] = rhs[1];
    }
    Ok(QpProblem {
        horizon,
        dm,
        fm,
        wm,
        zm,
    })
}

fn ill_posed<T: Scalar>(qp: &QpProblem<T>, condition: T) -> Error {
    let nx = qp.n_states();
    let q_zero = qp.dm.block(0, 0, nx, nx).max_abs() == T::zero();
    let r_zero = qp.dm.block(nx, nx, qp.n_controls(), qp.n_controls()).max_abs() == T::zero();
    let reason = match (q_zero, r_zero) {
        (true, true) => "all machine cost weights (Q_m and R_m) are zero".to_string(),
        (_, true) => "machine control weights R_m are zero".to_string(),
        _ => "saddle-point matrix is singular or nearly so".to_string(),
    };
    Error::IllPosed {
        reason,
        condition: condition.to_f64_lossy(),
    }
}

fn residuals<T: Scalar>(qp: &QpProblem<T>, z: &[T], lambda: &[T]) -> Result<(T, T)> {
    let dz = qp.dm.mul_vec(z)?;
    let wl = qp.wm.tr_mul_vec(lambda)?;
    let stat: Vec<T> = dz.iter().zip(&qp.fm).zip(&wl).map(|((&a, &b), &c)| a + b + c).collect();
    let wz = qp.wm.mul_vec(z)?;
    let feas: Vec<T> = wz.iter().zip(&qp.zm).map(|(&a, &b)| a - b).collect();
    Ok((norm_inf(&stat), norm_inf(&feas)))
}

fn check_shapes<T: Scalar>(qp: &QpProblem<T>) -> Result<()> {
    let n = qp.n_vars();
    let m = qp.n_states();
    if m > n || qp.dm.shape() != (n, n) || qp.fm.len() != n || qp.wm.shape() != (m, n) || qp.zm.len() != m {
        return Err(invalid(format!(
            "inconsistent QP shapes: Dm {:?}, Fm {}, Wm {:?}, Zm {}",
            qp.dm.shape(),
            qp.fm.len(),
            qp.wm.shape(),
            qp.zm.len()
        )));
    }
    Ok(())
}

/// Solves the KKT system `[[Dm, Wmᵀ], [Wm, 0]] (z, λ) = (−Fm, Zm)`.
///
/// When the state block of `Wm` is unit lower triangular (always the case for
/// problems built by [`assemble_qp`]) the states are eliminated first, which
/// yields the same solution at a fraction of the cost; otherwise the full
/// saddle-point matrix is factored.
pub fn solve_kkt<T: Scalar>(qp: &QpProblem<T>) -> Result<KktSolution<T>> {
    check_shapes(qp)?;
    let nx = qp.n_states();
    let wx = qp.wm.block(0, 0, nx, nx);
    if wx.is_unit_lower_triangular() {
        solve_by_state_elimination(qp, &wx)
    } else {
        solve_kkt_dense(qp)
    }
}

/// Factors the full saddle-point matrix with partial pivoting.
pub fn solve_kkt_dense<T: Scalar>(qp: &QpProblem<T>) -> Result<KktSolution<T>> {
    check_shapes(qp)?;
    let n = qp.n_vars();
    let m = qp.n_states();
    let mut kkt = Mat::zeros(n + m, n + m);
    kkt.set_block(0, 0, &qp.dm);
    kkt.set_block(0, n, &qp.wm.transpose());
    kkt.set_block(n, 0, &qp.wm);
    let lu = match Lu::factor(&kkt) {
        Ok(lu) => lu,
        Err(Error::Singular(_)) => return Err(ill_posed(qp, T::infinity())),
        Err(e) => return Err(e),
    };
    let condition = lu.condition_estimate();
    if !(condition <= T::lit(MAX_CONDITION)) {
        return Err(ill_posed(qp, condition));
    }
    let rhs: Vec<T> = qp.fm.iter().map(|&f| -f).chain(qp.zm.iter().copied()).collect();
    let mut sol = lu.solve(&rhs);
    // one step of iterative refinement
    let r = kkt.mul_vec(&sol)?;
    let corr: Vec<T> = rhs.iter().zip(&r).map(|(&b, &a)| b - a).collect();
    for (s, d) in sol.iter_mut().zip(lu.solve(&corr)) {
        *s += d;
    }
    let z = &sol[..n];
    let lambda = sol[n..].to_vec();
    let (stationarity, feasibility) = residuals(qp, z, &lambda)?;
    Ok(KktSolution {
        x: z[..m].to_vec(),
        u_m: z[m..].to_vec(),
        lambda,
        diagnostics: KktDiagnostics {
            stationarity,
            feasibility,
            condition,
            method: KktMethod::Dense,
        },
    })
}

fn solve_by_state_elimination<T: Scalar>(qp: &QpProblem<T>, wx: &Mat<T>) -> Result<KktSolution<T>> {
    let nx = qp.n_states();
    let nu = qp.n_controls();
    let wu = qp.wm.block(0, nx, nx, nu);

    // X = X0 + G U with X0 = Wx⁻¹ Zm and G = −Wx⁻¹ Wu
    let mut x0 = qp.zm.clone();
    forward_substitute_unit(wx, &mut x0);
    let mut g_t = Mat::zeros(nu, nx);
    for c in 0..nu {
        let mut col: Vec<T> = (0..nx).map(|i| -wu[(i, c)]).collect();
        forward_substitute_unit(wx, &mut col);
        g_t.row_mut(c).copy_from_slice(&col);
    }
    let g = g_t.transpose();

    let dxx = qp.dm.block(0, 0, nx, nx);
    let dxu = qp.dm.block(0, nx, nx, nu);
    let dux = qp.dm.block(nx, 0, nu, nx);
    let duu = qp.dm.block(nx, nx, nu, nu);
    let (fx, fu) = qp.fm.split_at(nx);

    let dxx_g = dxx.matmul(&g)?;
    let mut reduced = g_t.matmul(&dxx_g)?;
    let cross = g_t.matmul(&dxu)?;
    reduced = reduced.add(&cross)?.add(&cross.transpose())?.add(&duu)?;
    if dux.max_abs() != T::zero() || dxu.max_abs() != T::zero() {
        // Dm need not be symmetric in the off-diagonal blocks
        reduced = reduced.sub(&cross.transpose())?.add(&dux.matmul(&g)?)?;
    }

    let mut lin = dxx.mul_vec(&x0)?;
    for (l, &f) in lin.iter_mut().zip(fx) {
        *l += f;
    }
    let mut rhs = g_t.mul_vec(&lin)?;
    let dux_x0 = dux.mul_vec(&x0)?;
    for ((r, &a), &f) in rhs.iter_mut().zip(&dux_x0).zip(fu) {
        *r = -(*r + a + f);
    }

    let lu = match Lu::factor(&reduced) {
        Ok(lu) => lu,
        Err(Error::Singular(_)) => return Err(ill_posed(qp, T::infinity())),
        Err(e) => return Err(e),
    };
    let condition = lu.condition_estimate();
    if !(condition <= T::lit(MAX_CONDITION)) {
        return Err(ill_posed(qp, condition));
    }
    let u = lu.solve(&rhs);
    let gu = g.mul_vec(&u)?;
    let x: Vec<T> = x0.iter().zip(&gu).map(|(&a, &b)| a + b).collect();

    // Wxᵀ λ = −(Dxx X + Dxu U + fx)
    let dx = dxx.mul_vec(&x)?;
    let du = dxu.mul_vec(&u)?;
    let mut lambda: Vec<T> = dx.iter().zip(&du).zip(fx).map(|((&a, &b), &f)| -(a + b + f)).collect();
    backward_substitute_unit_transpose(wx, &mut lambda);

    let z: Vec<T> = x.iter().chain(&u).copied().collect();
    let (stationarity, feasibility) = residuals(qp, &z, &lambda)?;
    Ok(KktSolution {
        x,
        u_m: u,
        lambda,
        diagnostics: KktDiagnostics {
            stationarity,
            feasibility,
            condition,
            method: KktMethod::StateElimination,
        },
    })
}

/// Bound violations observed while planning (bit set).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, Serialize, Deserialize)]
pub struct Violations(pub u8);

impl Violations {
    /// Unsaturated machine command outside `[u_min, u_max]`.
    pub const MACHINE_CONTROL: u8 = 1;
    /// Some planned gap below `g_min`.
    pub const STATE: u8 = 2;
    /// Predicted human command outside `[u_min, u_max]`.
    pub const HUMAN_CONTROL: u8 = 4;

    pub fn contains(self, bit: u8) -> bool {
        self.0 & bit != 0
    }

    pub fn insert(&mut self, bit: u8) {
        self.0 |= bit;
    }

    pub fn is_empty(self) -> bool {
        self.0 == 0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Plan<T> {
    /// First machine command after saturation.
    pub u_m_first: T,
    /// Unsaturated machine commands over the horizon.
    pub u_m: Vec<T>,
    /// Human commands the machine expects in response.
    pub u_h: Vec<T>,
    pub states: Vec<VehicleState<T>>,
    pub solution: KktSolution<T>,
    pub violations: Violations,
}

impl<T: Scalar> Plan<T> {
    /// `α_h u_h + α_m u_m` along the plan.
    pub fn fused(&self, authority: &[AuthorityPair<T>]) -> Vec<T> {
        self.u_h
            .iter()
            .zip(&self.u_m)
            .zip(authority)
            .map(|((&h, &m), a)| a.alpha_h() * h + a.alpha_m() * m)
            .collect()
    }
}

/// Solves the game for one horizon and saturates the command to apply.
pub fn plan<T: Scalar>(
    dynamics: &DiscreteDynamics<T>,
    gains: &GainSequence<T>,
    stacked: &StackedHumanLaw<T>,
    machine: &TrackingObjective<T>,
    cfg: &PlannerConfig,
    x_1: VehicleState<T>,
    forecast: &[T],
) -> Result<Plan<T>> {
    let qp = assemble_qp(dynamics, gains, stacked, machine, x_1, forecast)?;
    let solution = solve_kkt(&qp)?;
    let u_h = stacked.apply(&solution.x, &solution.u_m)?;
    let states = solution.states();
    let (u_min, u_max) = (T::lit(cfg.u_min), T::lit(cfg.u_max));
    let first = solution.u_m[0];
    let mut violations = Violations::default();
    if first < u_min || first > u_max {
        violations.insert(Violations::MACHINE_CONTROL);
    }
    if states.iter().any(|s| s.g < T::lit(cfg.g_min)) {
        violations.insert(Violations::STATE);
    }
    if u_h.iter().any(|&u| u < u_min || u > u_max) {
        violations.insert(Violations::HUMAN_CONTROL);
    }
    Ok(Plan {
        u_m_first: first.max(u_min).min(u_max),
        u_m: solution.u_m.clone(),
        u_h,
        states,
        solution,
        violations,
    })
}

/// Builds the human reaction law for the horizon and plans against it.
pub fn plan_against_human<T: Scalar>(
    dynamics: &DiscreteDynamics<T>,
    authority: &[AuthorityPair<T>],
    human: &TrackingObjective<T>,
    machine: &TrackingObjective<T>,
    cfg: &PlannerConfig,
    x_1: VehicleState<T>,
    forecast: &[T],
) -> Result<(Plan<T>, GainSequence<T>)> {
    let gains = compute_gains(dynamics, authority, human, cfg.horizon)?;
    let stacked = assemble_stacked_human_law(&gains, human)?;
    let plan = plan(dynamics, &gains, &stacked, machine, cfg, x_1, forecast)?;
    Ok((plan, gains))
}

/// What the follower knows about its predecessor.
#[derive(Debug, Clone, Copy)]
pub enum Predecessor<'a, T> {
    /// Connected vehicle; `published` is the fused-command plan it broadcast
    /// at the previous control step.
    Cav { published: Option<&'a [T]> },
    /// Human-driven vehicle observed through its current acceleration.
    Human { accel: T },
}

/// Predecessor acceleration forecast of length `len`.
///
/// A CAV plan is shifted by one step and zero padded. A human-driven
/// predecessor is assumed to hold its current acceleration for `hold_time`,
/// then to relax linearly to zero by the end of the horizon.
pub fn forecast_predecessor<T: Scalar>(pred: Predecessor<'_, T>, len: usize, dt: T, hold_time: T) -> Vec<T> {
    match pred {
        Predecessor::Cav { published: None } => vec![T::zero(); len],
        Predecessor::Cav { published: Some(plan) } => (0..len)
            .map(|j| plan.get(j + 1).copied().unwrap_or_else(T::zero))
            .collect(),
        Predecessor::Human { accel } => {
            let hold = (hold_time / dt).round().to_usize().unwrap_or(0).min(len);
            let rest = len - hold;
            (0..len)
                .map(|j| {
                    if j < hold {
                        accel
                    } else {
                        let done = T::lit((j - hold + 1) as f64) / T::lit(rest as f64);
                        accel * (T::one() - done)
                    }
                })
                .collect()
        }
    }
}

/// Machine reference: zero speed difference, optional time-gap spacing.
pub fn machine_objective<T: Scalar>(cfg: &PlannerConfig, ego_speed: f64) -> TrackingObjective<T> {
    use crate::human_model::RefPoint;
    let g = cfg.gap_reference.map(|tg| T::lit(tg.gap_at(ego_speed)));
    TrackingObjective::uniform(cfg.weights(), RefPoint::new(Some(T::zero()), g), cfg.horizon)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::discretize;
    use crate::human_model::RefPoint;

    fn toy_qp(dm: &[f64], fm: &[f64], wm: &[f64], zm: &[f64], n: usize) -> QpProblem<f64> {
        // horizon-free toy problem; only shapes matter to the solvers
        let m = zm.len();
        QpProblem {
            horizon: m / 2,
            dm: Mat::from_rows(n, n, dm.to_vec()).unwrap(),
            fm: fm.to_vec(),
            wm: Mat::from_rows(m, n, wm.to_vec()).unwrap(),
            zm: zm.to_vec(),
        }
    }

    #[test]
    fn dense_kkt_minimum_norm_point_on_a_line() {
        // Dm = I, Fm = 0, Wm = [1 1], Zm = [2] -> z = (1,1), λ = -1
        let lu =
            Lu::factor(&Mat::from_rows(3, 3, vec![1.0f64, 0.0, 1.0, 0.0, 1.0, 1.0, 1.0, 1.0, 0.0]).unwrap()).unwrap();
        let sol = lu.solve(&[0.0, 0.0, 2.0]);
        assert!((sol[0] - 1.0).abs() < 1e-15 && (sol[1] - 1.0).abs() < 1e-15);
        assert!((sol[2] + 1.0).abs() < 1e-15);
    }

    #[test]
    fn ill_posed_when_all_weights_zero() {
        let dynamics = discretize(0.1).unwrap();
        let human = TrackingObjective::uniform(
            CostWeights::new(0.0, 1.0, 0.5).unwrap(),
            RefPoint::new(None, Some(10.0)),
            4,
        );
        let auth = vec![AuthorityPair::new(0.5).unwrap(); 3];
        let gains = compute_gains(&dynamics, &auth, &human, 4).unwrap();
        let stacked = assemble_stacked_human_law(&gains, &human).unwrap();
        let machine = TrackingObjective::uniform(
            CostWeights {
                q_v: 0.0,
                q_g: 0.0,
                r: 0.0,
            },
            RefPoint::new(Some(0.0), None),
            4,
        );
        let qp = assemble_qp(
            &dynamics,
            &gains,
            &stacked,
            &machine,
            VehicleState::new(0.0, 5.0),
            &[0.0; 3],
        )
        .unwrap();
        for result in [solve_kkt(&qp), solve_kkt_dense(&qp)] {
            match result {
                Err(Error::IllPosed { reason, .. }) => assert!(reason.contains("Q_m and R_m"), "{reason}"),
                other => panic!("expected ill-posed error, got {other:?}"),
            }
        }
    }

    #[test]
    fn feasible_unconstrained_optimum_has_zero_multipliers() {
        // z* = (1, 2, 3) with Wm z* = Zm; Fm = -Dm z*
        let dm = [2.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 3.0];
        let fm = [-2.0, -2.0, -9.0];
        let wm = [1.0, 0.0, 0.0, 1.0, 1.0, -1.0];
        let zm = [1.0, 0.0];
        let qp = toy_qp(&dm, &fm, &wm, &zm, 3);
        for sol in [solve_kkt(&qp).unwrap(), solve_kkt_dense(&qp).unwrap()] {
            let z = sol.z();
            for (a, b) in z.iter().zip([1.0, 2.0, 3.0]) {
                assert!((a - b).abs() < 1e-12);
            }
            assert!(norm_inf(&sol.lambda) < 1e-12);
        }
    }

    #[test]
    fn elimination_and_dense_agree_on_toy() {
        let dm = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
        let fm = [0.0, 0.0, 0.0];
        let wm = [1.0, 0.0, 1.0, 0.5, 1.0, 0.0];
        let zm = [2.0, 1.0];
        let qp = toy_qp(&dm, &fm, &wm, &zm, 3);
        let a = solve_kkt(&qp).unwrap();
        let b = solve_kkt_dense(&qp).unwrap();
        assert_eq!(a.diagnostics.method, KktMethod::StateElimination);
        assert_eq!(b.diagnostics.method, KktMethod::Dense);
        for (x, y) in a.z().iter().zip(b.z()) {
            assert!((x - y).abs() < 1e-12);
        }
        for (x, y) in a.lambda.iter().zip(&b.lambda) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn forecast_cav_shift_and_pad() {
        let published = [1.0, 1.0, 0.0, 0.0, 0.0];
        let f = forecast_predecessor(
            Predecessor::Cav {
                published: Some(&published),
            },
            5,
            0.1,
            0.5,
        );
        assert_eq!(f, vec![1.0, 0.0, 0.0, 0.0, 0.0]);
        let f = forecast_predecessor::<f64>(Predecessor::Cav { published: None }, 3, 0.1, 0.5);
        assert_eq!(f, vec![0.0; 3]);
    }

    #[test]
    fn forecast_human_hold_then_decay() {
        let f = forecast_predecessor(Predecessor::Human { accel: 0.0 }, 10, 0.1, 0.5);
        assert!(f.iter().all(|&a| a == 0.0));
        let f = forecast_predecessor(Predecessor::Human { accel: -4.0f64 }, 10, 0.1, 0.5);
        assert_eq!(&f[..5], &[-4.0; 5]);
        let expect = [-3.2, -2.4, -1.6, -0.8, 0.0];
        for (a, b) in f[5..].iter().zip(expect) {
            assert!((a - b).abs() < 1e-12, "{f:?}");
        }
        for w in f.windows(2) {
            assert!(w[1] >= w[0]);
        }
    }

    #[test]
    fn equilibrium_plan_is_zero_and_saturation_is_flagged() {
        let cfg = PlannerConfig {
            horizon: 10,
            ..PlannerConfig::default()
        };
        let dynamics = discretize(0.1).unwrap();
        let human = TrackingObjective::uniform(
            CostWeights::new(0.0, 1.0, 0.5).unwrap(),
            RefPoint::new(None, Some(7.0)),
            10,
        );
        let machine = machine_objective::<f64>(&cfg, 10.0);
        let auth = vec![AuthorityPair::full_machine(); 9];
        let (p, _) = plan_against_human(
            &dynamics,
            &auth,
            &human,
            &machine,
            &cfg,
            VehicleState::new(0.0, 7.0),
            &[0.0; 9],
        )
        .unwrap();
        assert!(p.u_m_first.abs() < 1e-12);
        assert!(p.violations.is_empty());

        let (p, _) = plan_against_human(
            &dynamics,
            &auth,
            &human,
            &machine,
            &cfg,
            VehicleState::new(15.0, 7.0),
            &[0.0; 9],
        )
        .unwrap();
        assert!(p.solution.u_m[0] > cfg.u_max);
        assert_eq!(p.u_m_first, cfg.u_max);
        assert!(p.violations.contains(Violations::MACHINE_CONTROL));
    }

    #[test]
    fn config_validation() {
        assert!(PlannerConfig::default().validate().is_ok());
        let bad = [
            PlannerConfig {
                horizon: 1,
                ..Default::default()
            },
            PlannerConfig {
                q_v: 0.0,
                ..Default::default()
            },
            PlannerConfig {
                u_min: 3.0,
                u_max: -3.0,
                ..Default::default()
            },
            PlannerConfig {
                r: 0.0,
                ..Default::default()
            },
            PlannerConfig {
                replan_period: 0,
                ..Default::default()
            },
        ];
        for cfg in bad {
            assert!(cfg.validate().is_err(), "{cfg:?}");
        }
    }
}
