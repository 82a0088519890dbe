//! Rodrigues angle-axis kinematics.
//!
//! A crystal orientation is a rotation of the crystal lattice relative to the
//! sample frame, parameterized here as `r = n * tan(theta/2)` for rotation
//! angle `theta` about unit axis `n` (active, right-handed). The module
//! provides the rotation matrix of a Rodrigues vector, the orientation-space
//! metric factor that weights volume integrals, and the rate map that turns
//! an angular velocity into a Rodrigues-coordinate velocity.

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Half-width of the cube bounding the FCC (cubic) fundamental region,
/// `tan(pi/8) = sqrt(2) - 1`.
pub const FUNDAMENTAL_HALF_WIDTH: f64 = std::f64::consts::SQRT_2 - 1.0;

/// A Rodrigues orientation vector, `r = n * tan(theta/2)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RodriguesVector(pub Vector3<f64>);

impl RodriguesVector {
    pub fn new(x: f64, y: f64, z: f64) -> Self {
        Self(Vector3::new(x, y, z))
    }

    pub fn zero() -> Self {
        Self(Vector3::zeros())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|c| c.is_finite())
    }

    /// Whether the vector lies inside the fundamental-region bounding cube,
    /// `|r_i| <= tan(pi/8) + eps`.
    pub fn in_fundamental_cube(&self, eps: f64) -> bool {
        self.0.iter().all(|c| c.abs() <= FUNDAMENTAL_HALF_WIDTH + eps)
    }
}

impl From<[f64; 3]> for RodriguesVector {
    fn from(v: [f64; 3]) -> Self {
        Self(Vector3::new(v[0], v[1], v[2]))
    }
}

impl From<RodriguesVector> for [f64; 3] {
    fn from(r: RodriguesVector) -> Self {
        [r.0.x, r.0.y, r.0.z]
    }
}

/// Skew-symmetric matrix `W` with `W x = v cross x`.
pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Axial vector of a skew-symmetric matrix (inverse of [`skew`]).
pub fn axial(w: &Matrix3<f64>) -> Vector3<f64> {
    Vector3::new(w[(2, 1)], w[(0, 2)], w[(1, 0)])
}

/// Rotation matrix of a Rodrigues vector:
/// `R = [I (1 - r.r) + 2 (r r^T + [r]x)] / (1 + r.r)`.
pub fn rotation_from_rodrigues(r: &RodriguesVector) -> Result<Matrix3<f64>> {
    if !r.is_finite() {
        return Err(Error::InvalidArgument(
            "rodrigues vector has non-finite components".into(),
        ));
    }
    let v = r.0;
    let rr = v.dot(&v);
    let m = Matrix3::identity() * (1.0 - rr) + 2.0 * (v * v.transpose() + skew(&v));
    Ok(m / (1.0 + rr))
}

/// Rodrigues vector of a rotation matrix, `r = axial(R - R^T) / (1 + tr R)`.
///
/// Returns `None` when the rotation angle is at (or numerically
/// indistinguishable from) 180 degrees, where the parameterization blows up.
pub fn rodrigues_from_rotation(rot: &Matrix3<f64>) -> Option<RodriguesVector> {
    let denom = 1.0 + rot.trace();
    if denom <= 1e-9 {
        return None;
    }
    Some(RodriguesVector(axial(&(rot - rot.transpose())) / denom))
}

/// Jacobian factor of the orientation-space volume element,
/// `1 / (1 + r.r)^2`.
pub fn metric_factor(r: &RodriguesVector) -> f64 {
    let rr = r.0.dot(&r.0);
    1.0 / ((1.0 + rr) * (1.0 + rr))
}

/// Rate of change of Rodrigues coordinates under an angular velocity `omega`
/// (the axial vector of the lattice spin):
/// `dr/dt = (omega + omega x r + (omega . r) r) / 2`.
pub fn rodrigues_rate(r: &RodriguesVector, omega: &Vector3<f64>) -> Vector3<f64> {
    0.5 * (omega + omega.cross(&r.0) + omega.dot(&r.0) * r.0)
}
