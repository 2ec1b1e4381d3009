//! Horizon-wide (stacked) form of the human reaction law:
//! `U_h = Kh·X + (Ph + Jh·Sh1)·U_m + Jh·Sh2`.
//!
//! Row `r` of `Sh1`/`Sh2` reconstructs `F_{r+1}`, the feedforward that step `r`
//! consumes through `S_r = −H_r B_{h,r}ᵀ F_{r+1}`. Unrolling the feedforward
//! recursion gives
//!
//! ```text
//! F_{r+1} = Σ_{c=r+1}^{K−1} (Π_{w=r+1}^{c} T_w) D_{c+1} B_{m,c} u_{m,c}
//!         − Σ_{j=r}^{K−1}   (Π_{w=r+1}^{j} T_w) Q_{j+1} x^ref_{j+1}
//! ```
//!
//! with `T_w = M_w + N_wᵀ` and empty products equal to the identity.

use crate::dynamics::VehicleState;
use crate::error::{invalid, Result};
use crate::human_model::{GainSequence, TrackingObjective};
use crate::linalg::{Mat, Mat2, Vec2};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq)]
pub struct StackedHumanLaw<T> {
    pub horizon: usize,
    /// `(K−1) × 2K`, block diagonal `K_k` with a zero last block column.
    pub kh: Mat<T>,
    /// `(K−1) × (K−1)` diagonal of `P_k`.
    pub ph: Mat<T>,
    /// `(K−1) × 2(K−1)`, block diagonal of `−H_k B_{h,k}ᵀ`.
    pub jh: Mat<T>,
    /// `2(K−1) × (K−1)`, strictly upper block triangular.
    pub sh1: Mat<T>,
    /// `2(K−1)` stacked constant feedforward contributions.
    pub sh2: Vec<T>,
}

/// Stacked trajectory vectors for one horizon.
#[derive(Debug, Clone, PartialEq)]
pub struct StackedVectors<T> {
    /// `x_1..x_K`, interleaved `(dv, g)`.
    pub x: Vec<T>,
    pub u_h: Vec<T>,
    pub u_m: Vec<T>,
}

impl<T: Scalar> StackedVectors<T> {
    pub fn new(states: &[VehicleState<T>], u_h: Vec<T>, u_m: Vec<T>) -> Result<Self> {
        if states.len() < 2 || u_h.len() != states.len() - 1 || u_m.len() != states.len() - 1 {
            return Err(invalid("stacked vectors need K states and K-1 commands of each kind"));
        }
        Ok(Self {
            x: flatten_states(states),
            u_h,
            u_m,
        })
    }

    pub fn horizon(&self) -> usize {
        self.x.len() / 2
    }

    pub fn states(&self) -> Vec<VehicleState<T>> {
        unflatten_states(&self.x)
    }
}

pub fn flatten_states<T: Scalar>(states: &[VehicleState<T>]) -> Vec<T> {
    states.iter().flat_map(|s| [s.dv, s.g]).collect()
}

pub fn unflatten_states<T: Scalar>(x: &[T]) -> Vec<VehicleState<T>> {
    x.chunks_exact(2).map(|c| VehicleState::new(c[0], c[1])).collect()
}

impl<T: Scalar> StackedHumanLaw<T> {
    /// `Ph + Jh·Sh1`, the total sensitivity of `U_h` to `U_m`.
    pub fn machine_sensitivity(&self) -> Mat<T> {
        let steps = self.horizon - 1;
        let mut out = self.ph.clone();
        for r in 0..steps {
            let j = Vec2::new(self.jh[(r, 2 * r)], self.jh[(r, 2 * r + 1)]);
            for c in 0..steps {
                let s = Vec2::new(self.sh1[(2 * r, c)], self.sh1[(2 * r + 1, c)]);
                out[(r, c)] += j.dot(&s);
            }
        }
        out
    }

    /// `Jh·Sh2`, the part of `U_h` independent of state and machine commands.
    pub fn constant_term(&self) -> Vec<T> {
        (0..self.horizon - 1)
            .map(|r| self.jh[(r, 2 * r)] * self.sh2[2 * r] + self.jh[(r, 2 * r + 1)] * self.sh2[2 * r + 1])
            .collect()
    }

    /// Evaluates `U_h` for stacked states `x` (length `2K`) and machine commands `u_m`.
    pub fn apply(&self, x: &[T], u_m: &[T]) -> Result<Vec<T>> {
        let steps = self.horizon - 1;
        if x.len() != 2 * self.horizon || u_m.len() != steps {
            return Err(invalid(format!(
                "stacked law for K={} needs |X|={} and |U_m|={}, got {} and {}",
                self.horizon,
                2 * self.horizon,
                steps,
                x.len(),
                u_m.len()
            )));
        }
        let kx = self.kh.mul_vec(x)?;
        let pu = self.machine_sensitivity().mul_vec(u_m)?;
        let c = self.constant_term();
        Ok((0..steps).map(|r| kx[r] + pu[r] + c[r]).collect())
    }
}

pub fn assemble_stacked_human_law<T: Scalar>(
    gains: &GainSequence<T>,
    objective: &TrackingObjective<T>,
) -> Result<StackedHumanLaw<T>> {
    let horizon = gains.horizon();
    if horizon < 2 || objective.len() < horizon {
        return Err(invalid(format!(
            "stacked law needs K>=2 and K weight/reference steps; K={horizon}, got {}",
            objective.len()
        )));
    }
    let steps = horizon - 1;
    let mut kh = Mat::zeros(steps, 2 * horizon);
    let mut ph = Mat::zeros(steps, steps);
    let mut jh = Mat::zeros(steps, 2 * steps);
    let mut sh1 = Mat::zeros(2 * steps, steps);
    let mut sh2 = vec![T::zero(); 2 * steps];

    let propagators: Vec<Mat2<T>> = (1..horizon).map(|w| gains.feedforward_propagator(w)).collect();
    let t = |w: usize| propagators[w - 1];

    for r in 1..=steps {
        let i = r - 1;
        kh[(i, 2 * i)] = gains.k[i][0];
        kh[(i, 2 * i + 1)] = gains.k[i][1];
        ph[(i, i)] = gains.p[i];
        let j = gains.b_h[i].scale(-gains.h[i]);
        jh[(i, 2 * i)] = j[0];
        jh[(i, 2 * i + 1)] = j[1];

        let mut prod = Mat2::identity();
        for c in r + 1..=steps {
            prod = prod * t(c);
            let block = prod.mul_vec(&gains.d[c].mul_vec(&gains.b_m[c - 1]));
            sh1[(2 * i, c - 1)] = block[0];
            sh1[(2 * i + 1, c - 1)] = block[1];
        }

        let mut prod = Mat2::identity();
        let mut acc = objective.q_ref(r + 1);
        for jj in r + 1..=steps {
            prod = prod * t(jj);
            acc += prod.mul_vec(&objective.q_ref(jj + 1));
        }
        sh2[2 * i] = -acc[0];
        sh2[2 * i + 1] = -acc[1];
    }
    Ok(StackedHumanLaw {
        horizon,
        kh,
        ph,
        jh,
        sh1,
        sh2,
    })
}
