//! Relative longitudinal kinematics of a follower with respect to its predecessor.
//!
//! The state is `(dv, g)` where `dv` is predecessor speed minus ego speed and
//! `g` is the bumper-to-bumper gap, so that `ġ = dv` and `d(dv)/dt = aᵖ − a`.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Mat2, Vec2};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct VehicleState<T> {
    /// Predecessor speed minus ego speed, m/s.
    pub dv: T,
    /// Following gap, m.
    pub g: T,
}

impl<T: Scalar> VehicleState<T> {
    pub fn new(dv: T, g: T) -> Self {
        Self { dv, g }
    }

    pub fn to_vec(self) -> Vec2<T> {
        Vec2::new(self.dv, self.g)
    }

    pub fn from_vec(v: Vec2<T>) -> Self {
        Self { dv: v[0], g: v[1] }
    }

    pub fn is_finite(&self) -> bool {
        self.dv.is_finite() && self.g.is_finite()
    }

    /// A non-positive gap means the follower has reached its predecessor.
    pub fn is_collision(&self) -> bool {
        self.g <= T::zero()
    }
}

/// Forward-Euler discretization `A = I + A'dt`, `B = B'dt`, `C = C'dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscreteDynamics<T> {
    pub a: Mat2<T>,
    pub b: Vec2<T>,
    pub c: Vec2<T>,
    pub dt: T,
}

pub fn discretize<T: Scalar>(dt: T) -> Result<DiscreteDynamics<T>> {
    if !(dt.is_finite() && dt > T::zero()) {
        return Err(invalid(format!(
            "control interval must be positive and finite, got {dt}"
        )));
    }
    let (zero, one) = (T::zero(), T::one());
    Ok(DiscreteDynamics {
        a: Mat2::new(one, zero, dt, one),
        b: Vec2::new(-dt, zero),
        c: Vec2::new(dt, zero),
        dt,
    })
}

/// Human/machine authority split; `alpha_m` is always `1 - alpha_h`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuthorityPair<T> {
    alpha_h: T,
    alpha_m: T,
}

impl<T: Scalar> AuthorityPair<T> {
    pub fn new(alpha_h: T) -> Result<Self> {
        if !(alpha_h >= T::zero() && alpha_h <= T::one()) {
            return Err(invalid(format!("human authority must lie in [0, 1], got {alpha_h}")));
        }
        Ok(Self {
            alpha_h,
            alpha_m: T::one() - alpha_h,
        })
    }

    pub fn full_human() -> Self {
        Self {
            alpha_h: T::one(),
            alpha_m: T::zero(),
        }
    }

    pub fn full_machine() -> Self {
        Self {
            alpha_h: T::zero(),
            alpha_m: T::one(),
        }
    }

    pub fn alpha_h(&self) -> T {
        self.alpha_h
    }

    pub fn alpha_m(&self) -> T {
        self.alpha_m
    }
}

/// `(B·alpha_h, B·alpha_m)`.
pub fn effective_input_matrices<T: Scalar>(
    dynamics: &DiscreteDynamics<T>,
    auth: AuthorityPair<T>,
) -> (Vec2<T>, Vec2<T>) {
    (dynamics.b.scale(auth.alpha_h()), dynamics.b.scale(auth.alpha_m()))
}

/// One step of `x⁺ = A x + B_h u_h + B_m u_m + C aᵖ`.
pub fn step<T: Scalar>(
    dynamics: &DiscreteDynamics<T>,
    x: VehicleState<T>,
    u_h: T,
    u_m: T,
    auth: AuthorityPair<T>,
    a_p: T,
) -> Result<VehicleState<T>> {
    let (b_h, b_m) = effective_input_matrices(dynamics, auth);
    let next = dynamics.a.mul_vec(&x.to_vec()) + b_h.scale(u_h) + b_m.scale(u_m) + dynamics.c.scale(a_p);
    if !next.is_finite() {
        return Err(Error::NumericOverflow(format!(
            "state update from {x:?} with u_h={u_h}, u_m={u_m}, a_p={a_p} is not finite"
        )));
    }
    Ok(VehicleState::from_vec(next))
}
