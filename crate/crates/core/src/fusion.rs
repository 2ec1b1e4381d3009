//! Authority schedules and command fusion.

use serde::{Deserialize, Serialize};

use crate::dynamics::AuthorityPair;
use crate::error::{invalid, Result};
use crate::scalar::Scalar;

/// Human authority as a function of time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AuthoritySchedule {
    Constant {
        alpha_h: f64,
    },
    /// Ramps from 0 at `t_start` to 1 at `t_start + duration`.
    LinearGradient {
        t_start: f64,
        #[serde(default = "default_ramp")]
        duration: f64,
    },
    /// Full machine control before `t_start`, full human control from then on.
    DirectTakeover {
        t_start: f64,
    },
}

fn default_ramp() -> f64 {
    10.0
}

impl Default for AuthoritySchedule {
    fn default() -> Self {
        Self::Constant { alpha_h: 0.0 }
    }
}

impl AuthoritySchedule {
    pub fn validate(&self) -> Result<()> {
        match *self {
            Self::Constant { alpha_h } if !(0.0..=1.0).contains(&alpha_h) => {
                Err(invalid(format!("constant authority must lie in [0, 1], got {alpha_h}")))
            }
            Self::LinearGradient { t_start, duration } if !(duration > 0.0) || !t_start.is_finite() => Err(invalid(
                format!("gradient schedule needs a finite start and positive duration, got {t_start}, {duration}"),
            )),
            Self::DirectTakeover { t_start } if !t_start.is_finite() => {
                Err(invalid(format!("takeover time must be finite, got {t_start}")))
            }
            _ => Ok(()),
        }
    }

    /// Human authority at time `t`.
    pub fn alpha_h(&self, t: f64) -> f64 {
        match *self {
            Self::Constant { alpha_h } => alpha_h,
            Self::LinearGradient { t_start, duration } => ((t - t_start) / duration).clamp(0.0, 1.0),
            Self::DirectTakeover { t_start } => {
                if t >= t_start {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    pub fn authority_at<T: Scalar>(&self, t: f64) -> AuthorityPair<T> {
        let a = self.alpha_h(t).clamp(0.0, 1.0);
        AuthorityPair::new(T::lit(a)).expect("clamped authority is in range")
    }

    /// Authorities for the `steps` control intervals starting at `t0`.
    pub fn horizon<T: Scalar>(&self, t0: f64, dt: f64, steps: usize) -> Vec<AuthorityPair<T>> {
        (0..steps).map(|k| self.authority_at(t0 + k as f64 * dt)).collect()
    }

    /// Time the human starts gaining authority, if ever.
    pub fn onset(&self) -> Option<f64> {
        match *self {
            Self::Constant { .. } => None,
            Self::LinearGradient { t_start, .. } | Self::DirectTakeover { t_start } => Some(t_start),
        }
    }
}

/// `α_h u_h + α_m u_m`.
pub fn fuse<T: Scalar>(auth: AuthorityPair<T>, u_h: T, u_m: T) -> T {
    auth.alpha_h() * u_h + auth.alpha_m() * u_m
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gradient_ramp_endpoints() {
        let s = AuthoritySchedule::LinearGradient {
            t_start: 20.0,
            duration: 10.0,
        };
        assert_eq!(s.alpha_h(0.0), 0.0);
        assert_eq!(s.alpha_h(20.0), 0.0);
        assert!((s.alpha_h(25.0) - 0.5).abs() < 1e-15);
        assert_eq!(s.alpha_h(30.0), 1.0);
        assert_eq!(s.alpha_h(100.0), 1.0);
    }

    #[test]
    fn direct_takeover_is_a_step() {
        let s = AuthoritySchedule::DirectTakeover { t_start: 5.0 };
        assert_eq!(s.alpha_h(4.999), 0.0);
        assert_eq!(s.alpha_h(5.0), 1.0);
        assert_eq!(s.onset(), Some(5.0));
    }

    #[test]
    fn fuse_endpoints() {
        assert_eq!(fuse(AuthorityPair::full_human(), 2.0, -1.0), 2.0);
        assert_eq!(fuse(AuthorityPair::full_machine(), 2.0, -1.0), -1.0);
        assert!((fuse(AuthorityPair::new(0.25f64).unwrap(), 2.0, -1.0) + 0.25).abs() < 1e-15);
    }

    #[test]
    fn serde_roundtrip_and_default_ramp() {
        let s: AuthoritySchedule = serde_json::from_str(r#"{"kind":"linear_gradient","t_start":3.0}"#).unwrap();
        assert_eq!(
            s,
            AuthoritySchedule::LinearGradient {
                t_start: 3.0,
                duration: 10.0
            }
        );
        let back: AuthoritySchedule = serde_json::from_str(&serde_json::to_string(&s).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn validation() {
        assert!(AuthoritySchedule::Constant { alpha_h: 1.2 }.validate().is_err());
        assert!(AuthoritySchedule::LinearGradient {
            t_start: 0.0,
            duration: 0.0
        }
        .validate()
        .is_err());
        assert!(AuthoritySchedule::Constant { alpha_h: 0.3 }.validate().is_ok());
    }
}
