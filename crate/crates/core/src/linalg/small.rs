//! Fixed 2-dimensional vectors and matrices for the relative kinematic state.

use std::ops::{Add, AddAssign, Index, IndexMut, Mul, Neg, Sub};

use crate::scalar::Scalar;

/// Column (or row, depending on context) 2-vector.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Vec2<T>(pub [T; 2]);

/// 2×2 matrix stored row-major.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Mat2<T>(pub [[T; 2]; 2]);

impl<T: Scalar> Vec2<T> {
    pub fn new(a: T, b: T) -> Self {
        Self([a, b])
    }

    pub fn zero() -> Self {
        Self([T::zero(); 2])
    }

    pub fn dot(&self, other: &Self) -> T {
        self.0[0] * other.0[0] + self.0[1] * other.0[1]
    }

    pub fn scale(&self, s: T) -> Self {
        Self([self.0[0] * s, self.0[1] * s])
    }

    /// `self · otherᵀ`.
    pub fn outer(&self, other: &Self) -> Mat2<T> {
        Mat2([
            [self.0[0] * other.0[0], self.0[0] * other.0[1]],
            [self.0[1] * other.0[0], self.0[1] * other.0[1]],
        ])
    }

    pub fn is_finite(&self) -> bool {
        self.0[0].is_finite() && self.0[1].is_finite()
    }

    pub fn max_abs(&self) -> T {
        self.0[0].abs().max(self.0[1].abs())
    }
}

impl<T: Scalar> Index<usize> for Vec2<T> {
    type Output = T;
    fn index(&self, i: usize) -> &T {
        &self.0[i]
    }
}

impl<T: Scalar> IndexMut<usize> for Vec2<T> {
    fn index_mut(&mut self, i: usize) -> &mut T {
        &mut self.0[i]
    }
}

impl<T: Scalar> Add for Vec2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self([self.0[0] + o.0[0], self.0[1] + o.0[1]])
    }
}

impl<T: Scalar> AddAssign for Vec2<T> {
    fn add_assign(&mut self, o: Self) {
        self.0[0] += o.0[0];
        self.0[1] += o.0[1];
    }
}

impl<T: Scalar> Sub for Vec2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self([self.0[0] - o.0[0], self.0[1] - o.0[1]])
    }
}

impl<T: Scalar> Neg for Vec2<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self([-self.0[0], -self.0[1]])
    }
}

impl<T: Scalar> Mat2<T> {
    pub fn new(a: T, b: T, c: T, d: T) -> Self {
        Self([[a, b], [c, d]])
    }

    pub fn zero() -> Self {
        Self([[T::zero(); 2]; 2])
    }

    pub fn identity() -> Self {
        Self::diag(T::one(), T::one())
    }

    pub fn diag(a: T, d: T) -> Self {
        Self([[a, T::zero()], [T::zero(), d]])
    }

    pub fn transpose(&self) -> Self {
        let m = &self.0;
        Self([[m[0][0], m[1][0]], [m[0][1], m[1][1]]])
    }

    pub fn scale(&self, s: T) -> Self {
        let m = &self.0;
        Self([[m[0][0] * s, m[0][1] * s], [m[1][0] * s, m[1][1] * s]])
    }

    pub fn mul_vec(&self, v: &Vec2<T>) -> Vec2<T> {
        let m = &self.0;
        Vec2([m[0][0] * v.0[0] + m[0][1] * v.0[1], m[1][0] * v.0[0] + m[1][1] * v.0[1]])
    }

    /// `vᵀ · self`, returned as a vector.
    pub fn vec_mul(&self, v: &Vec2<T>) -> Vec2<T> {
        self.transpose().mul_vec(v)
    }

    /// `vᵀ · self · v`.
    pub fn quad(&self, v: &Vec2<T>) -> T {
        v.dot(&self.mul_vec(v))
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().flatten().all(|x| x.is_finite())
    }

    /// Eigenvalues of the symmetric part, ascending.
    pub fn sym_eigenvalues(&self) -> [T; 2] {
        let two = T::lit(2.0);
        let a = self.0[0][0];
        let d = self.0[1][1];
        let b = (self.0[0][1] + self.0[1][0]) / two;
        let mean = (a + d) / two;
        let half_diff = (a - d) / two;
        let rad = (half_diff * half_diff + b * b).sqrt();
        [mean - rad, mean + rad]
    }

    pub fn max_abs(&self) -> T {
        self.0.iter().flatten().fold(T::zero(), |acc, x| acc.max(x.abs()))
    }
}

impl<T: Scalar> Add for Mat2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (a, b) = (&self.0, &o.0);
        Self([
            [a[0][0] + b[0][0], a[0][1] + b[0][1]],
            [a[1][0] + b[1][0], a[1][1] + b[1][1]],
        ])
    }
}

impl<T: Scalar> Sub for Mat2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        let (a, b) = (&self.0, &o.0);
        Self([
            [a[0][0] - b[0][0], a[0][1] - b[0][1]],
            [a[1][0] - b[1][0], a[1][1] - b[1][1]],
        ])
    }
}

impl<T: Scalar> Mul for Mat2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (a, b) = (&self.0, &o.0);
        Self([
            [
                a[0][0] * b[0][0] + a[0][1] * b[1][0],
                a[0][0] * b[0][1] + a[0][1] * b[1][1],
            ],
            [
                a[1][0] * b[0][0] + a[1][1] * b[1][0],
                a[1][0] * b[0][1] + a[1][1] * b[1][1],
            ],
        ])
    }
}

impl<T: Scalar> Mul<Vec2<T>> for Mat2<T> {
    type Output = Vec2<T>;
    fn mul(self, v: Vec2<T>) -> Vec2<T> {
        self.mul_vec(&v)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigenvalues_of_diagonal() {
        let m = Mat2::diag(3.0, -1.0);
        assert_eq!(m.sym_eigenvalues(), [-1.0, 3.0]);
    }

    #[test]
    fn outer_and_quad_agree() {
        let v = Vec2::new(1.5f64, -2.0);
        let m = v.outer(&v);
        assert!((m.quad(&Vec2::new(1.0, 1.0)) - 0.25).abs() < 1e-15);
        assert_eq!(m.transpose(), m);
    }

    #[test]
    fn vec_mul_is_transpose_product() {
        let m = Mat2::new(1.0, 2.0, 3.0, 4.0);
        let v = Vec2::new(1.0, -1.0);
        assert_eq!(m.vec_mul(&v), Vec2::new(-2.0, -2.0));
    }
}
