//! Symmetric 2×2 real matrices, the pointwise values of a metric field.

use std::ops::{Add, Mul, Sub};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Real 2×2 matrix stored row-major, used for Jacobians.
pub type Mat2 = [[f64; 2]; 2];

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sym2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Sym2 {
    pub const ZERO: Sym2 = Sym2 {
        xx: 0.0,
        xy: 0.0,
        yy: 0.0,
    };
    pub const IDENTITY: Sym2 = Sym2 {
        xx: 1.0,
        xy: 0.0,
        yy: 1.0,
    };

    pub const fn new(xx: f64, xy: f64, yy: f64) -> Self {
        Self { xx, xy, yy }
    }

    pub fn scalar(lambda: f64) -> Self {
        Self::new(lambda, 0.0, lambda)
    }

    pub fn diag(a: f64, b: f64) -> Self {
        Self::new(a, 0.0, b)
    }

    /// Outer product `v vᵀ`.
    pub fn outer(v: [f64; 2]) -> Self {
        Self::new(v[0] * v[0], v[0] * v[1], v[1] * v[1])
    }

    /// Symmetric part of a general matrix.
    pub fn symmetrize(m: Mat2) -> Self {
        Self::new(m[0][0], 0.5 * (m[0][1] + m[1][0]), m[1][1])
    }

    pub fn trace(&self) -> f64 {
        self.xx + self.yy
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> (f64, f64) {
        let mean = 0.5 * (self.xx + self.yy);
        let half_diff = 0.5 * (self.xx - self.yy);
        let r = half_diff.hypot(self.xy);
        (mean - r, mean + r)
    }

    /// Unit eigenvector for the larger eigenvalue.
    pub fn principal_axis(&self) -> [f64; 2] {
        let angle = 0.5 * (2.0 * self.xy).atan2(self.xx - self.yy);
        [angle.cos(), angle.sin()]
    }

    pub fn is_spd(&self) -> bool {
        self.xx.is_finite()
            && self.xy.is_finite()
            && self.yy.is_finite()
            && self.eigenvalues().0 > 0.0
    }

    pub fn frobenius(&self) -> f64 {
        (self.xx * self.xx + 2.0 * self.xy * self.xy + self.yy * self.yy).sqrt()
    }

    pub fn inverse(&self) -> Option<Sym2> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(Sym2::new(self.yy / det, -self.xy / det, self.xx / det))
    }

    pub fn quad(&self, v: [f64; 2]) -> f64 {
        self.bilinear(v, v)
    }

    pub fn bilinear(&self, v: [f64; 2], w: [f64; 2]) -> f64 {
        v[0] * (self.xx * w[0] + self.xy * w[1]) + v[1] * (self.xy * w[0] + self.yy * w[1])
    }

    pub fn apply(&self, v: [f64; 2]) -> [f64; 2] {
        [
            self.xx * v[0] + self.xy * v[1],
            self.xy * v[0] + self.yy * v[1],
        ]
    }

    /// `Jᵀ S J`; positive definite whenever `S` is and `J` is invertible.
    pub fn congruence(&self, j: Mat2) -> Sym2 {
        // columns of J
        let c0 = [j[0][0], j[1][0]];
        let c1 = [j[0][1], j[1][1]];
        Sym2::new(self.quad(c0), self.bilinear(c0, c1), self.quad(c1))
    }

    /// Clamp eigenvalues from below at `floor`, keeping eigenvectors.
    pub fn with_eigen_floor(&self, floor: f64) -> Sym2 {
        let (lo, hi) = self.eigenvalues();
        if lo >= floor {
            return *self;
        }
        let [c, s] = self.principal_axis();
        let hi = hi.max(floor);
        let lo = lo.max(floor);
        // V diag(hi, lo) Vᵀ with V = [[c, -s], [s, c]]
        Sym2::new(
            hi * c * c + lo * s * s,
            (hi - lo) * c * s,
            hi * s * s + lo * c * c,
        )
    }

    pub fn max_abs_diff(&self, other: &Sym2) -> f64 {
        (self.xx - other.xx)
            .abs()
            .max((self.xy - other.xy).abs())
            .max((self.yy - other.yy).abs())
    }
}

impl Add for Sym2 {
    type Output = Sym2;
    fn add(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)
    }
}

impl Sub for Sym2 {
    type Output = Sym2;
    fn sub(self, o: Sym2) -> Sym2 {
        Sym2::new(self.xx - o.xx, self.xy - o.xy, self.yy - o.yy)
    }
}

impl Mul<Sym2> for f64 {
    type Output = Sym2;
    fn mul(self, s: Sym2) -> Sym2 {
        Sym2::new(self * s.xx, self * s.xy, self * s.yy)
    }
}

/// Real Jacobian of multiplication by the complex number `d`:
/// `[[Re d, -Im d], [Im d, Re d]]`.
pub fn complex_jacobian(d: Complex64) -> Mat2 {
    [[d.re, -d.im], [d.im, d.re]]
}

/// Pairwise (tree) summation with a fixed layout, so the result does not
/// depend on how callers schedule the terms.
pub fn pairwise_sum(terms: &[Sym2]) -> Sym2 {
    match terms.len() {
        0 => Sym2::ZERO,
        1 => terms[0],
        2 => terms[0] + terms[1],
        n => {
            let (left, right) = terms.split_at(n / 2);
            pairwise_sum(left) + pairwise_sum(right)
        }
    }
}

/// Scalar counterpart of [`pairwise_sum`].
pub fn pairwise_sum_f64(terms: &[f64]) -> f64 {
    match terms.len() {
        0 => 0.0,
        1 => terms[0],
        2 => terms[0] + terms[1],
        n => {
            let (left, right) = terms.split_at(n / 2);
            pairwise_sum_f64(left) + pairwise_sum_f64(right)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn eigenvalues_of_diagonal() {
        let (lo, hi) = Sym2::diag(3.0, 1.0).eigenvalues();
        assert_eq!((lo, hi), (1.0, 3.0));
    }

    #[test]
    fn eigen_floor_repairs_indefinite() {
        let s = Sym2::new(1.0, 2.0, 1.0);
        assert!(!s.is_spd());
        let r = s.with_eigen_floor(1e-10);
        assert!(r.is_spd());
        assert!((r.eigenvalues().1 - 3.0).abs() < 1e-12);
    }

    #[test]
    fn pairwise_matches_naive_sum() {
        let terms: Vec<Sym2> = (0..7).map(|k| Sym2::diag(k as f64, 1.0)).collect();
        let s = pairwise_sum(&terms);
        assert_eq!(s, Sym2::diag(21.0, 7.0));
    }

    fn spd() -> impl Strategy<Value = Sym2> {
        (0.01f64..10.0, 0.01f64..10.0, -1.0f64..1.0).prop_map(|(a, b, t)| {
            let c = t * (a * b).sqrt() * 0.99;
            Sym2::new(a, c, b)
        })
    }

    proptest! {
        #[test]
        fn congruence_by_invertible_keeps_spd(s in spd(), re in -3.0f64..3.0, im in -3.0f64..3.0) {
            prop_assume!(re.hypot(im) > 1e-3);
            let p = s.congruence(complex_jacobian(Complex64::new(re, im)));
            prop_assert!(p.is_spd());
            // conformal Jacobian scales the determinant by |d|^4
            let scale = re.hypot(im).powi(4);
            prop_assert!((p.det() - s.det() * scale).abs() <= 1e-9 * s.det() * scale);
        }

        #[test]
        fn inverse_round_trip(s in spd()) {
            let inv = s.inverse().unwrap();
            let v = [0.3, -0.7];
            let back = s.apply(inv.apply(v));
            prop_assert!((back[0] - v[0]).abs() < 1e-8 && (back[1] - v[1]).abs() < 1e-8);
        }
    }
}
