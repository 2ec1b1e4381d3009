//! Minimal dense linear algebra used by the controllers.

mod dense;
mod small;

pub use dense::{backward_substitute_unit_transpose, dot, forward_substitute_unit, norm2, norm_inf, Lu, Mat};
pub use small::{Mat2, Vec2};
