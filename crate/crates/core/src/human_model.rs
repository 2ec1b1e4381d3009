//! MPC model of the human driver and its closed-form reaction law.
//!
//! The driver minimizes a finite-horizon tracking cost over its own command
//! while treating the machine command sequence as given and ignoring the
//! predecessor's future acceleration. Dynamic programming yields an affine law
//! `u_h = K_k x + P_k u_m + S_k` whose coefficients are computed backwards.
//!
//! Steps are numbered `1..=K` in the docs; vectors are indexed from zero, so
//! step `k` lives at index `k - 1`.

use crate::dynamics::{effective_input_matrices, AuthorityPair, DiscreteDynamics, VehicleState};
use crate::error::{invalid, Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::scalar::Scalar;

/// Per-step speed-error, gap-error and control-effort weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostWeights<T> {
    pub q_v: T,
    pub q_g: T,
    pub r: T,
}

impl<T: Scalar> CostWeights<T> {
    pub fn new(q_v: T, q_g: T, r: T) -> Result<Self> {
        if !(q_v >= T::zero() && q_v.is_finite() && q_g >= T::zero() && q_g.is_finite()) {
            return Err(invalid(format!(
                "state weights must be finite and >= 0, got q_v={q_v}, q_g={q_g}"
            )));
        }
        if !(r > T::zero() && r.is_finite()) {
            return Err(invalid(format!("control weight must be finite and > 0, got r={r}")));
        }
        Ok(Self { q_v, q_g, r })
    }
}

/// Desired state at one step; `None` marks a component the controller ignores.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RefPoint<T> {
    pub dv: Option<T>,
    pub g: Option<T>,
}

impl<T: Scalar> RefPoint<T> {
    pub fn new(dv: Option<T>, g: Option<T>) -> Self {
        Self { dv, g }
    }

    pub fn inactive() -> Self {
        Self { dv: None, g: None }
    }

    /// Reference vector with inactive entries set to zero.
    pub fn value(&self) -> Vec2<T> {
        Vec2::new(self.dv.unwrap_or_else(T::zero), self.g.unwrap_or_else(T::zero))
    }
}

/// Reference states for steps `1..=K`.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceTrajectory<T> {
    pub points: Vec<RefPoint<T>>,
}

impl<T: Scalar> ReferenceTrajectory<T> {
    pub fn constant(point: RefPoint<T>, len: usize) -> Self {
        Self {
            points: vec![point; len],
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Weights plus references: everything the stage cost depends on.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackingObjective<T> {
    pub weights: Vec<CostWeights<T>>,
    pub refs: ReferenceTrajectory<T>,
}

impl<T: Scalar> TrackingObjective<T> {
    pub fn new(weights: Vec<CostWeights<T>>, refs: ReferenceTrajectory<T>) -> Self {
        Self { weights, refs }
    }

    /// Same weights and reference at every step.
    pub fn uniform(weights: CostWeights<T>, point: RefPoint<T>, horizon: usize) -> Self {
        Self {
            weights: vec![weights; horizon],
            refs: ReferenceTrajectory::constant(point, horizon),
        }
    }

    /// Number of steps covered by both weights and references.
    pub fn len(&self) -> usize {
        self.weights.len().min(self.refs.len())
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `Q` at step `k` (1-based); inactive reference components get zero weight.
    pub fn q(&self, k: usize) -> Mat2<T> {
        let w = &self.weights[k - 1];
        let p = &self.refs.points[k - 1];
        Mat2::diag(
            if p.dv.is_some() { w.q_v } else { T::zero() },
            if p.g.is_some() { w.q_g } else { T::zero() },
        )
    }

    /// `Q x_ref` at step `k` (1-based).
    pub fn q_ref(&self, k: usize) -> Vec2<T> {
        self.q(k).mul_vec(&self.refs.points[k - 1].value())
    }

    pub fn r(&self, k: usize) -> T {
        self.weights[k - 1].r
    }

    /// `Σ_{k<K} ½(x_k−r_k)ᵀQ_k(x_k−r_k) + ½R_k u_k²  +  ½(x_K−r_K)ᵀQ_K(x_K−r_K)`.
    pub fn cost(&self, states: &[VehicleState<T>], controls: &[T]) -> Result<T> {
        let horizon = states.len();
        if horizon < 2 || controls.len() != horizon - 1 || self.len() < horizon {
            return Err(invalid(format!(
                "cost evaluation needs K>=2 states, K-1 controls and K weights; got {}, {}, {}",
                horizon,
                controls.len(),
                self.len()
            )));
        }
        let half = T::lit(0.5);
        let mut total = T::zero();
        for (idx, x) in states.iter().enumerate() {
            let k = idx + 1;
            let e = x.to_vec() - self.refs.points[idx].value();
            total += half * self.q(k).quad(&e);
            if k < horizon {
                total += half * self.r(k) * controls[idx] * controls[idx];
            }
        }
        Ok(total)
    }
}

/// Backward-pass coefficients of the human reaction law for one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSequence<T> {
    /// State matrix used for every step.
    pub a: Mat2<T>,
    /// `B_{h,k}` for steps `1..K`.
    pub b_h: Vec<Vec2<T>>,
    /// `B_{m,k}` for steps `1..K`.
    pub b_m: Vec<Vec2<T>>,
    /// `H_k = (R_k + B_hᵀ D_{k+1} B_h)⁻¹`.
    pub h: Vec<T>,
    /// Feedback row `K_k`, stored as a vector.
    pub k: Vec<Vec2<T>>,
    /// Machine-command gain `P_k`.
    pub p: Vec<T>,
    /// Closed-loop matrix `N_k = A + B_h K_k`.
    pub n: Vec<Mat2<T>>,
    /// `M_k = −(K_kᵀR_k + N_kᵀD_{k+1}B_h) H_k B_hᵀ`.
    pub m: Vec<Mat2<T>>,
    /// Cost-to-go Hessians `D_1..D_K`.
    pub d: Vec<Mat2<T>>,
}

impl<T: Scalar> GainSequence<T> {
    /// Horizon length `K`.
    pub fn horizon(&self) -> usize {
        self.d.len()
    }

    /// `M_k + N_kᵀ`, the propagator of the feedforward recursion (1-based `k`).
    pub fn feedforward_propagator(&self, k: usize) -> Mat2<T> {
        self.m[k - 1] + self.n[k - 1].transpose()
    }
}

pub fn compute_gains<T: Scalar>(
    dynamics: &DiscreteDynamics<T>,
    authority: &[AuthorityPair<T>],
    objective: &TrackingObjective<T>,
    horizon: usize,
) -> Result<GainSequence<T>> {
    if horizon < 2 {
        return Err(invalid(format!("horizon must be at least 2, got {horizon}")));
    }
    if authority.len() < horizon - 1 {
        return Err(invalid(format!(
            "need {} authority pairs, got {}",
            horizon - 1,
            authority.len()
        )));
    }
    if objective.len() < horizon {
        return Err(invalid(format!(
            "need {horizon} weight/reference steps, got {}",
            objective.len()
        )));
    }
    let steps = horizon - 1;
    let a = dynamics.a;
    let mut out = GainSequence {
        a,
        b_h: Vec::with_capacity(steps),
        b_m: Vec::with_capacity(steps),
        h: vec![T::zero(); steps],
        k: vec![Vec2::zero(); steps],
        p: vec![T::zero(); steps],
        n: vec![Mat2::zero(); steps],
        m: vec![Mat2::zero(); steps],
        d: vec![Mat2::zero(); horizon],
    };
    for auth in &authority[..steps] {
        let (b_h, b_m) = effective_input_matrices(dynamics, *auth);
        out.b_h.push(b_h);
        out.b_m.push(b_m);
    }
    out.d[horizon - 1] = objective.q(horizon);
    let half = T::lit(0.5);
    for k in (1..horizon).rev() {
        let i = k - 1;
        let d_next = out.d[k];
        let r = objective.r(k);
        let b_h = out.b_h[i];
        let b_m = out.b_m[i];
        let d_bh = d_next.mul_vec(&b_h);
        let denom = r + b_h.dot(&d_bh);
        if !(denom > T::zero() && denom.is_finite()) {
            return Err(Error::Internal(format!(
                "non-invertible H at step {k}: R + B_hᵀDB_h = {denom}"
            )));
        }
        let h = T::one() / denom;
        // b_hᵀ D A as a vector: Aᵀ Dᵀ b_h
        let bh_d = d_next.vec_mul(&b_h);
        let gain = a.vec_mul(&bh_d).scale(-h);
        let p = -h * bh_d.dot(&b_m);
        let n = a + b_h.outer(&gain);
        let left = gain.scale(r) + n.vec_mul(&d_bh);
        let m = left.outer(&b_h).scale(-h);
        let d = objective.q(k) + gain.outer(&gain).scale(r) + n.transpose() * d_next * n;
        // keep D exactly symmetric
        let d = (d + d.transpose()).scale(half);
        if !(d.is_finite() && n.is_finite() && gain.is_finite()) {
            return Err(Error::NumericOverflow(format!("gain recursion diverged at step {k}")));
        }
        out.h[i] = h;
        out.k[i] = gain;
        out.p[i] = p;
        out.n[i] = n;
        out.m[i] = m;
        out.d[i] = d;
    }
    Ok(out)
}

/// Feedforward terms `F_k` (steps `1..=K`) and `S_k` (steps `1..K`).
#[derive(Debug, Clone, PartialEq)]
pub struct FeedforwardSequence<T> {
    pub f: Vec<Vec2<T>>,
    pub s: Vec<T>,
}

pub fn compute_feedforward<T: Scalar>(
    gains: &GainSequence<T>,
    objective: &TrackingObjective<T>,
    u_m: &[T],
) -> Result<FeedforwardSequence<T>> {
    let horizon = gains.horizon();
    if u_m.len() != horizon - 1 {
        return Err(invalid(format!(
            "machine command sequence must have {} entries, got {}",
            horizon - 1,
            u_m.len()
        )));
    }
    if objective.len() < horizon {
        return Err(invalid(format!(
            "need {horizon} weight/reference steps, got {}",
            objective.len()
        )));
    }
    let mut f = vec![Vec2::zero(); horizon];
    f[horizon - 1] = -objective.q_ref(horizon);
    for k in (1..horizon).rev() {
        let i = k - 1;
        let drive = gains.d[k].mul_vec(&gains.b_m[i].scale(u_m[i])) + f[k];
        f[i] = -objective.q_ref(k) + gains.feedforward_propagator(k).mul_vec(&drive);
    }
    let s = (0..horizon - 1)
        .map(|i| -gains.h[i] * gains.b_h[i].dot(&f[i + 1]))
        .collect();
    Ok(FeedforwardSequence { f, s })
}

/// `u_h = K_k x + P_k u_m + S_k` at step `k` (1-based, `k < K`).
pub fn human_reaction<T: Scalar>(
    gains: &GainSequence<T>,
    ff: &FeedforwardSequence<T>,
    k: usize,
    x: VehicleState<T>,
    u_m: T,
) -> Result<T> {
    let horizon = gains.horizon();
    if k == 0 || k >= horizon || ff.s.len() != horizon - 1 {
        return Err(invalid(format!(
            "reaction step {k} outside 1..{} (or feedforward length mismatch)",
            horizon - 1
        )));
    }
    let i = k - 1;
    Ok(gains.k[i].dot(&x.to_vec()) + gains.p[i] * u_m + ff.s[i])
}

/// Closed loop `x_{k+1} = N_k x_k + O_k` of the human model.
pub fn simulate_human_closed_loop<T: Scalar>(
    gains: &GainSequence<T>,
    ff: &FeedforwardSequence<T>,
    x_1: VehicleState<T>,
    u_m: &[T],
) -> Result<Vec<VehicleState<T>>> {
    let horizon = gains.horizon();
    if u_m.len() != horizon - 1 || ff.s.len() != horizon - 1 {
        return Err(invalid("closed-loop rollout length mismatch"));
    }
    let mut states = Vec::with_capacity(horizon);
    let mut x = x_1.to_vec();
    states.push(x_1);
    for i in 0..horizon - 1 {
        let o = gains.b_h[i].scale(gains.p[i] * u_m[i] + ff.s[i]) + gains.b_m[i].scale(u_m[i]);
        x = gains.n[i].mul_vec(&x) + o;
        if !x.is_finite() {
            return Err(Error::NumericOverflow(format!(
                "closed loop diverged at step {}",
                i + 2
            )));
        }
        states.push(VehicleState::from_vec(x));
    }
    Ok(states)
}

/// Steps the plant with the human reacting at every step.
///
/// `a_p` adds the predecessor term `C aᵖ_k` to the plant (the human law itself
/// never sees it). Returns the states `x_1..x_K` and commands `u_h,1..u_h,K−1`.
pub fn closed_loop_rollout<T: Scalar>(
    dynamics: &DiscreteDynamics<T>,
    gains: &GainSequence<T>,
    ff: &FeedforwardSequence<T>,
    x_1: VehicleState<T>,
    u_m: &[T],
    a_p: Option<&[T]>,
) -> Result<(Vec<VehicleState<T>>, Vec<T>)> {
    let horizon = gains.horizon();
    if u_m.len() != horizon - 1 || a_p.is_some_and(|a| a.len() != horizon - 1) {
        return Err(invalid("rollout length mismatch"));
    }
    let mut states = Vec::with_capacity(horizon);
    let mut u_h = Vec::with_capacity(horizon - 1);
    let mut x = x_1;
    states.push(x);
    for k in 1..horizon {
        let i = k - 1;
        let uh = human_reaction(gains, ff, k, x, u_m[i])?;
        let drive = gains.b_h[i].scale(uh) + gains.b_m[i].scale(u_m[i]);
        let mut next = dynamics.a.mul_vec(&x.to_vec()) + drive;
        if let Some(a_p) = a_p {
            next += dynamics.c.scale(a_p[i]);
        }
        if !next.is_finite() {
            return Err(Error::NumericOverflow(format!("rollout diverged at step {}", k + 1)));
        }
        x = VehicleState::from_vec(next);
        u_h.push(uh);
        states.push(x);
    }
    Ok((states, u_h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::discretize;

    fn full_human(n: usize) -> Vec<AuthorityPair<f64>> {
        vec![AuthorityPair::full_human(); n]
    }

    fn gap_objective(q: f64, r: f64, g_ref: Option<f64>, horizon: usize) -> TrackingObjective<f64> {
        TrackingObjective::uniform(
            CostWeights::new(q, q, r).unwrap(),
            RefPoint::new(Some(0.0), g_ref),
            horizon,
        )
    }

    #[test]
    fn two_step_gains_by_hand() {
        // D_2 = I, B_h = (-0.1, 0): H = 1/(1 + 0.01), K = -H B_hᵀ A = (0.1/1.01, 0)
        let dynamics = discretize(0.1).unwrap();
        let obj = gap_objective(1.0, 1.0, Some(0.0), 2);
        let gains = compute_gains(&dynamics, &full_human(1), &obj, 2).unwrap();
        assert!((gains.h[0] - 1.0 / 1.01).abs() < 1e-15);
        assert!((gains.k[0][0] - 0.1 / 1.01).abs() < 1e-15);
        assert_eq!(gains.k[0][1], 0.0);

        let ff = compute_feedforward(&gains, &obj, &[0.0]).unwrap();
        let u = human_reaction(&gains, &ff, 1, VehicleState::new(1.0, 0.0), 0.0).unwrap();
        assert!((u - 0.1 / 1.01).abs() < 1e-15);
        assert!((u - 0.09901).abs() < 1e-5);
    }

    #[test]
    fn zero_terminal_weight_gives_zero_feedback() {
        let dynamics = discretize(0.1).unwrap();
        let obj = gap_objective(0.0, 2.5, Some(3.0), 2);
        let gains = compute_gains(&dynamics, &full_human(1), &obj, 2).unwrap();
        assert_eq!(gains.k[0], Vec2::zero());
        assert_eq!(gains.p[0], 0.0);
    }

    #[test]
    fn no_human_authority_means_no_feedback() {
        let dynamics = discretize(0.1).unwrap();
        let obj = TrackingObjective::new(
            (0..6)
                .map(|k| CostWeights::new(1.0, 2.0, 0.5 + k as f64).unwrap())
                .collect(),
            ReferenceTrajectory::constant(RefPoint::new(Some(0.0), Some(10.0)), 6),
        );
        let auth = vec![AuthorityPair::full_machine(); 5];
        let gains = compute_gains(&dynamics, &auth, &obj, 6).unwrap();
        for k in 0..5 {
            assert_eq!(gains.k[k], Vec2::zero());
            assert_eq!(gains.p[k], 0.0);
            assert_eq!(gains.h[k], 1.0 / (0.5 + k as f64));
        }
        let ff = compute_feedforward(&gains, &obj, &[1.0, -1.0, 2.0, 0.0, 3.0]).unwrap();
        assert!(ff.s.iter().all(|&s| s == 0.0));
        let u = human_reaction(&gains, &ff, 2, VehicleState::new(4.0, 1.0), 7.0).unwrap();
        assert_eq!(u, 0.0);
    }

    #[test]
    fn gains_reject_bad_inputs() {
        let dynamics = discretize(0.1).unwrap();
        let obj = gap_objective(1.0, 1.0, Some(0.0), 4);
        assert!(compute_gains(&dynamics, &full_human(3), &obj, 1).is_err());
        assert!(compute_gains(&dynamics, &full_human(1), &obj, 4).is_err());
        assert!(compute_gains(&dynamics, &full_human(5), &obj, 5).is_err());
        assert!(CostWeights::new(1.0, 1.0, 0.0).is_err());
        assert!(CostWeights::new(-1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn terminal_feedforward_matches_reference() {
        let dynamics = discretize(0.1).unwrap();
        let obj = TrackingObjective::uniform(
            CostWeights::new(1.0, 1.0, 1.0).unwrap(),
            RefPoint::new(Some(0.0), Some(10.0)),
            2,
        );
        let gains = compute_gains(&dynamics, &full_human(1), &obj, 2).unwrap();
        let ff = compute_feedforward(&gains, &obj, &[0.0]).unwrap();
        assert_eq!(ff.f[1], Vec2::new(0.0, -10.0));
        assert!(compute_feedforward(&gains, &obj, &[0.0, 1.0]).is_err());
    }

    #[test]
    fn inactive_refs_and_no_machine_input_give_zero_feedforward() {
        let dynamics = discretize(0.2).unwrap();
        let obj = TrackingObjective::uniform(CostWeights::new(1.0, 1.0, 1.0).unwrap(), RefPoint::inactive(), 5);
        let auth = vec![AuthorityPair::new(0.6).unwrap(); 4];
        let gains = compute_gains(&dynamics, &auth, &obj, 5).unwrap();
        let ff = compute_feedforward(&gains, &obj, &[0.0; 4]).unwrap();
        assert!(ff.f.iter().all(|f| *f == Vec2::zero()));
        assert!(ff.s.iter().all(|&s| s == 0.0));
    }

    #[test]
    fn m_coefficient_vanishes_identically() {
        // K_kᵀ H⁻¹ = −AᵀDB_h makes (KᵀR + NᵀDB_h) zero, so M_k is roundoff only.
        let dynamics = discretize(0.1).unwrap();
        let obj = gap_objective(2.0, 0.3, Some(12.0), 12);
        let auth: Vec<_> = (0..11)
            .map(|k| AuthorityPair::new(0.1 * k as f64 % 1.0).unwrap())
            .collect();
        let gains = compute_gains(&dynamics, &auth, &obj, 12).unwrap();
        for m in &gains.m {
            assert!(m.max_abs() < 1e-12, "{m:?}");
        }
    }

    #[test]
    fn closed_loop_equilibrium_is_constant() {
        let dynamics = discretize(0.1).unwrap();
        let obj = TrackingObjective::uniform(CostWeights::new(1.0, 1.0, 0.5).unwrap(), RefPoint::inactive(), 8);
        let gains = compute_gains(&dynamics, &full_human(7), &obj, 8).unwrap();
        let ff = compute_feedforward(&gains, &obj, &[0.0; 7]).unwrap();
        let x1 = VehicleState::new(0.0, 12.0);
        let states = simulate_human_closed_loop(&gains, &ff, x1, &[0.0; 7]).unwrap();
        assert!(states.iter().all(|s| *s == x1));
    }

    #[test]
    fn reaction_step_out_of_range() {
        let dynamics = discretize(0.1).unwrap();
        let obj = gap_objective(1.0, 1.0, Some(1.0), 3);
        let gains = compute_gains(&dynamics, &full_human(2), &obj, 3).unwrap();
        let ff = compute_feedforward(&gains, &obj, &[0.0; 2]).unwrap();
        let x = VehicleState::new(0.0, 1.0);
        assert!(human_reaction(&gains, &ff, 0, x, 0.0).is_err());
        assert!(human_reaction(&gains, &ff, 3, x, 0.0).is_err());
        assert!(human_reaction(&gains, &ff, 2, x, 0.0).is_ok());
    }

    #[test]
    fn cost_counts_running_and_terminal_terms() {
        let obj = TrackingObjective::uniform(
            CostWeights::new(2.0, 4.0, 3.0).unwrap(),
            RefPoint::new(None, Some(1.0)),
            2,
        );
        let states = [VehicleState::new(5.0, 2.0), VehicleState::new(-5.0, 0.0)];
        // ½·4·1 + ½·3·4 + ½·4·1
        assert_eq!(obj.cost(&states, &[2.0]).unwrap(), 2.0 + 6.0 + 2.0);
    }
}
