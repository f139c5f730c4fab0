//! Small-matrix conventions shared by every module.
//!
//! * `iota(v) = v ⊗ e₁` places a vector in the first column of a 3×3 matrix.
//! * `axl` maps a skew matrix to its axial vector, `axl(A) = (−A₂₃, A₁₃, −A₁₂)`,
//!   and [`hat`] is its inverse, so `hat(a) v = a × v`.
//! * `section_point(x₂, x₃) = (0, x₂, x₃)` is the projection onto the cross-section.

use nalgebra::{Matrix3, Rotation3, UnitQuaternion, Vector3};

pub type Mat3 = Matrix3<f64>;
pub type Vec3 = Vector3<f64>;

/// Below this angle the trigonometric coefficients switch to Taylor series.
const SMALL_ANGLE: f64 = 0.1;

pub fn iota(v: &Vec3) -> Mat3 {
    let mut m = Mat3::zeros();
    m.set_column(0, v);
    m
}

pub fn axl(a: &Mat3) -> Vec3 {
    Vec3::new(-a[(1, 2)], a[(0, 2)], -a[(0, 1)])
}

pub fn hat(v: &Vec3) -> Mat3 {
    Mat3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

pub fn section_point(x2: f64, x3: f64) -> Vec3 {
    Vec3::new(0.0, x2, x3)
}

pub fn sym(m: &Mat3) -> Mat3 {
    (m + m.transpose()) * 0.5
}

pub fn skew(m: &Mat3) -> Mat3 {
    (m - m.transpose()) * 0.5
}

pub fn so3_exp(v: &Vec3) -> Mat3 {
    *Rotation3::new(*v).matrix()
}

/// Rotation vector of a rotation matrix (principal branch).
pub fn so3_log(r: &Mat3) -> Vec3 {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*r));
    let (mut v, mut w) = (q.imag(), q.w);
    if w < 0.0 {
        v = -v;
        w = -w;
    }
    let n = v.norm();
    if n < 1e-8 {
        v * (2.0 / w) * (1.0 - n * n / (3.0 * w * w))
    } else {
        v * (2.0 * n.atan2(w) / n)
    }
}

/// Coefficients `(1 − cos θ)/θ²` and `(θ − sin θ)/θ³`.
fn jacobian_coefficients(theta: f64) -> (f64, f64) {
    if theta < SMALL_ANGLE {
        let t2 = theta * theta;
        let a = 0.5 - t2 / 24.0 * (1.0 - t2 / 30.0 * (1.0 - t2 / 56.0 * (1.0 - t2 / 90.0)));
        let b = 1.0 / 6.0 - t2 / 120.0 * (1.0 - t2 / 42.0 * (1.0 - t2 / 72.0 * (1.0 - t2 / 110.0)));
        (a, b)
    } else {
        let t2 = theta * theta;
        ((1.0 - theta.cos()) / t2, (theta - theta.sin()) / (t2 * theta))
    }
}

/// Right Jacobian of the exponential: `exp(v + δ) ≈ exp(v) exp(J_r(v) δ)`.
pub fn right_jacobian(v: &Vec3) -> Mat3 {
    let (a, b) = jacobian_coefficients(v.norm());
    let k = hat(v);
    Mat3::identity() - k * a + k * k * b
}

/// Left Jacobian, equal to `∫₀¹ exp(t v̂) dt`.
pub fn left_jacobian(v: &Vec3) -> Mat3 {
    let (a, b) = jacobian_coefficients(v.norm());
    let k = hat(v);
    Mat3::identity() + k * a + k * k * b
}

/// Frobenius inner product `A : B`.
pub fn ddot(a: &Mat3, b: &Mat3) -> f64 {
    a.component_mul(b).sum()
}

/// Symmetric 2×2 principal-axis rotation angle: rotating coordinates by the
/// returned angle diagonalizes `[[a, c], [c, b]]` with the larger entry first.
pub fn principal_angle(a: f64, b: f64, c: f64) -> f64 {
    0.5 * (2.0 * c).atan2(a - b)
}
