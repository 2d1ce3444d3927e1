//! Small-dimension symmetric tensor algebra.
//!
//! Symmetric 2x2 (default build) and 3x3 tensors with the Frobenius inner
//! product and the orthogonal splitting of the symmetric matrices into
//! deviatoric (trace-free) and spherical parts. All state fields of the
//! solvers (elastic strain, plastic strain, stress) are values of these
//! types, stored per cell.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

/// Symmetric 2x2 tensor `[[a, c], [c, b]]`. Entries are dimensionless in the
/// nondimensional unit system used throughout the crate.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor2 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

impl SymTensor2 {
    pub const ZERO: SymTensor2 = SymTensor2 { a: 0.0, b: 0.0, c: 0.0 };

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        SymTensor2 { a, b, c }
    }

    pub fn identity() -> Self {
        SymTensor2 { a: 1.0, b: 1.0, c: 0.0 }
    }

    pub fn diag(a: f64, b: f64) -> Self {
        SymTensor2 { a, b, c: 0.0 }
    }

    /// Pure shear `[[0, s], [s, 0]]`.
    pub fn shear(s: f64) -> Self {
        SymTensor2 { a: 0.0, b: 0.0, c: s }
    }

    pub fn trace(&self) -> f64 {
        self.a + self.b
    }

    /// Deviatoric part `T - tr(T)/2 I`; trace-free by construction.
    pub fn dev(&self) -> Self {
        let m = 0.5 * self.trace();
        SymTensor2 { a: self.a - m, b: self.b - m, c: self.c }
    }

    /// Frobenius inner product, off-diagonal entries counted twice.
    pub fn inner(&self, other: &Self) -> f64 {
        self.a * other.a + self.b * other.b + 2.0 * self.c * other.c
    }

    pub fn norm_sq(&self) -> f64 {
        self.inner(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// Unit tensor in the same direction, or zero for (near-)zero input.
    pub fn normalized(&self) -> Self {
        let n = self.norm();
        if n == 0.0 {
            SymTensor2::ZERO
        } else {
            *self * (1.0 / n)
        }
    }

    /// Symmetrized tensor product `(a_i b_j + a_j b_i)/2` of two vectors.
    pub fn sym_outer(u: [f64; 2], v: [f64; 2]) -> Self {
        SymTensor2 {
            a: u[0] * v[0],
            b: u[1] * v[1],
            c: 0.5 * (u[0] * v[1] + u[1] * v[0]),
        }
    }

    /// Matrix-vector product.
    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [self.a * v[0] + self.c * v[1], self.c * v[0] + self.b * v[1]]
    }
}

impl Add for SymTensor2 {
    type Output = SymTensor2;
    fn add(self, rhs: SymTensor2) -> SymTensor2 {
        SymTensor2 { a: self.a + rhs.a, b: self.b + rhs.b, c: self.c + rhs.c }
    }
}

impl Sub for SymTensor2 {
    type Output = SymTensor2;
    fn sub(self, rhs: SymTensor2) -> SymTensor2 {
        SymTensor2 { a: self.a - rhs.a, b: self.b - rhs.b, c: self.c - rhs.c }
    }
}

impl Mul<f64> for SymTensor2 {
    type Output = SymTensor2;
    fn mul(self, s: f64) -> SymTensor2 {
        SymTensor2 { a: self.a * s, b: self.b * s, c: self.c * s }
    }
}

impl Neg for SymTensor2 {
    type Output = SymTensor2;
    fn neg(self) -> SymTensor2 {
        self * -1.0
    }
}

impl AddAssign for SymTensor2 {
    fn add_assign(&mut self, rhs: SymTensor2) {
        self.a += rhs.a;
        self.b += rhs.b;
        self.c += rhs.c;
    }
}

impl SubAssign for SymTensor2 {
    fn sub_assign(&mut self, rhs: SymTensor2) {
        self.a -= rhs.a;
        self.b -= rhs.b;
        self.c -= rhs.c;
    }
}

/// Symmetric 3x3 tensor, entries `[[a, d, e], [d, b, f], [e, f, c]]`.
/// The solvers are two-dimensional; this variant exists so the pointwise
/// algebra carries over unchanged when a 3-D mesh backend is added.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SymTensor3 {
    pub a: f64,
    pub b: f64,
    pub c: f64,
    pub d: f64,
    pub e: f64,
    pub f: f64,
}

impl SymTensor3 {
    pub const ZERO: SymTensor3 = SymTensor3 { a: 0.0, b: 0.0, c: 0.0, d: 0.0, e: 0.0, f: 0.0 };

    pub fn identity() -> Self {
        SymTensor3 { a: 1.0, b: 1.0, c: 1.0, ..SymTensor3::ZERO }
    }

    pub fn trace(&self) -> f64 {
        self.a + self.b + self.c
    }

    pub fn dev(&self) -> Self {
        let m = self.trace() / 3.0;
        SymTensor3 { a: self.a - m, b: self.b - m, c: self.c - m, ..*self }
    }

    pub fn inner(&self, other: &Self) -> f64 {
        self.a * other.a
            + self.b * other.b
            + self.c * other.c
            + 2.0 * (self.d * other.d + self.e * other.e + self.f * other.f)
    }

    pub fn norm(&self) -> f64 {
        self.inner(self).sqrt()
    }

    pub fn sym_outer(u: [f64; 3], v: [f64; 3]) -> Self {
        SymTensor3 {
            a: u[0] * v[0],
            b: u[1] * v[1],
            c: u[2] * v[2],
            d: 0.5 * (u[0] * v[1] + u[1] * v[0]),
            e: 0.5 * (u[0] * v[2] + u[2] * v[0]),
            f: 0.5 * (u[1] * v[2] + u[2] * v[1]),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn dev_of_identity_is_zero() {
        let d = SymTensor2::identity().dev();
        assert_eq!(d, SymTensor2::ZERO);
    }

    #[test]
    fn dev_of_diag() {
        // diag(3,1): trace 4, mean 2 -> diag(1,-1)
        let d = SymTensor2::diag(3.0, 1.0).dev();
        assert_abs_diff_eq!(d.a, 1.0);
        assert_abs_diff_eq!(d.b, -1.0);
        assert_abs_diff_eq!(d.c, 0.0);
    }

    #[test]
    fn dev_of_pure_shear_is_itself() {
        let s = SymTensor2::shear(0.7);
        assert_eq!(s.dev(), s);
    }

    #[test]
    fn inner_products() {
        let i = SymTensor2::identity();
        assert_abs_diff_eq!(i.inner(&i), 2.0);
        assert_abs_diff_eq!(SymTensor2::diag(1.0, -1.0).inner(&i), 0.0);
        let sh = SymTensor2::shear(1.0);
        assert_abs_diff_eq!(sh.inner(&sh), 2.0);
    }

    #[test]
    fn sym_outer_examples() {
        let t = SymTensor2::sym_outer([1.0, 0.0], [0.0, 1.0]);
        assert_eq!(t, SymTensor2::shear(0.5));
        let t = SymTensor2::sym_outer([1.0, 0.0], [1.0, 0.0]);
        assert_eq!(t, SymTensor2::diag(1.0, 0.0));
    }

    #[test]
    fn sym_tensor3_split() {
        let t = SymTensor3 { a: 1.0, b: 2.0, c: 6.0, d: 0.5, e: -0.25, f: 2.0 };
        let d = t.dev();
        assert_abs_diff_eq!(d.trace(), 0.0, epsilon = 1e-14 * t.norm());
        assert_abs_diff_eq!(d.inner(&SymTensor3::identity()), 0.0, epsilon = 1e-14 * t.norm());
        let i = SymTensor3::identity();
        // |t|^2 = |dev t|^2 + tr(t)^2/3
        assert_abs_diff_eq!(
            t.inner(&t),
            d.inner(&d) + t.trace() * t.trace() / 3.0,
            epsilon = 1e-13 * t.inner(&t)
        );
        assert_abs_diff_eq!(i.inner(&i), 3.0);
    }

    fn arb_tensor() -> impl Strategy<Value = SymTensor2> {
        (-10.0..10.0f64, -10.0..10.0f64, -10.0..10.0f64)
            .prop_map(|(a, b, c)| SymTensor2::new(a, b, c))
    }

    proptest! {
        #[test]
        fn dev_plus_spherical_recovers(t in arb_tensor()) {
            let r = t.dev() + SymTensor2::identity() * (t.trace() / 2.0);
            let scale = 1.0 + t.norm();
            prop_assert!((r - t).norm() <= 1e-14 * scale);
        }

        #[test]
        fn dev_orthogonal_to_identity(t in arb_tensor()) {
            prop_assert!(t.dev().inner(&SymTensor2::identity()).abs() <= 1e-14 * (1.0 + t.norm()));
        }

        #[test]
        fn pythagoras(t in arb_tensor()) {
            let lhs = t.norm_sq();
            let rhs = t.dev().norm_sq() + t.trace() * t.trace() / 2.0;
            prop_assert!((lhs - rhs).abs() <= 1e-13 * (1.0 + lhs));
        }

        #[test]
        fn dev_idempotent(t in arb_tensor()) {
            let d = t.dev();
            prop_assert!((d.dev() - d).norm() <= 1e-14 * (1.0 + t.norm()));
        }

        #[test]
        fn trace_of_sym_outer_is_dot(ax in -5.0..5.0f64, ay in -5.0..5.0f64,
                                     bx in -5.0..5.0f64, by in -5.0..5.0f64) {
            let t = SymTensor2::sym_outer([ax, ay], [bx, by]);
            let dot = ax * bx + ay * by;
            prop_assert!((t.trace() - dot).abs() <= 1e-13 * (1.0 + dot.abs()));
        }
    }
}
