//! Taylor-type crystal plasticity for FCC polycrystals.
//!
//! A deformation process is a macroscopic velocity gradient built from five
//! elementary traceless matrices (tension/compression, plane-strain
//! compression, and xy/xz/yz shear); any nonempty on/off combination of the
//! five is one of the 31 process modes. Under the full-constraint Taylor
//! hypothesis every crystal sees the macro velocity gradient, so the
//! stretching part must be carried by slip. Slip rates follow a rate-sensitive
//! power law; the rate-independent limit is approached with a small rate
//! sensitivity and the resulting stiff nonlinear system is solved by damped
//! Newton with continuation in the rate-sensitivity exponent.
//!
//! The lattice spin is the macro spin minus the plastic spin; it drives the
//! reorientation velocity of every mesh node.

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use once_cell::sync::Lazy;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::FundamentalMesh;
use crate::orientation::{axial, rodrigues_rate, rotation_from_rodrigues, RodriguesVector};

/// Number of elementary deformation matrices.
pub const BASIS_COUNT: usize = 5;

/// Number of FCC slip systems, {111}<110>.
pub const SLIP_COUNT: usize = 12;

/// Number of distinct nonempty process modes.
pub const MODE_COUNT: usize = 31;

/// The five elementary velocity-gradient matrices (1/s at unit rate):
/// tension/compression, plane-strain compression, xy shear, xz shear,
/// yz shear. All are traceless.
pub static BASIS_MATRICES: Lazy<[Matrix3<f64>; BASIS_COUNT]> = Lazy::new(|| {
    [
        Matrix3::new(1.0, 0.0, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0, -0.5),
        Matrix3::new(0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, -1.0),
        Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
        Matrix3::new(0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0),
        Matrix3::new(0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 1.0, 0.0),
    ]
});

/// One of the 31 on/off combinations of the five elementary deformations.
///
/// The mask string reads left to right as (tension/compression, plane-strain
/// compression, xy shear, xz shear, yz shear); the mode id is the mask read
/// as a binary number, so ids run 1..=31.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ProcessMode {
    id: u8,
}

impl ProcessMode {
    pub fn from_id(id: u8) -> Result<Self> {
        if id == 0 || id > MODE_COUNT as u8 {
            return Err(Error::InvalidArgument(format!(
                "process mode id {id} outside 1..=31"
            )));
        }
        Ok(Self { id })
    }

    pub fn from_mask(mask: &str) -> Result<Self> {
        if mask.len() != 5 || !mask.chars().all(|c| c == '0' || c == '1') {
            return Err(Error::InvalidArgument(format!(
                "process mask `{mask}` is not a 5-digit binary string"
            )));
        }
        let id = u8::from_str_radix(mask, 2).expect("validated binary");
        if id == 0 {
            return Err(Error::InvalidArgument(
                "process mask 00000 selects no deformation".into(),
            ));
        }
        Ok(Self { id })
    }

    pub fn id(&self) -> u8 {
        self.id
    }

    pub fn mask(&self) -> String {
        format!("{:05b}", self.id)
    }

    /// Whether elementary deformation `k` (0-based, alpha_1..alpha_5) is on.
    pub fn is_active(&self, k: usize) -> bool {
        debug_assert!(k < BASIS_COUNT);
        self.id >> (BASIS_COUNT - 1 - k) & 1 == 1
    }

    /// All 31 modes in ascending id order.
    pub fn all() -> Vec<ProcessMode> {
        (1..=MODE_COUNT as u8).map(|id| ProcessMode { id }).collect()
    }
}

impl std::fmt::Display for ProcessMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.mask())
    }
}

impl Serialize for ProcessMode {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.serialize_str(&self.mask())
    }
}

impl<'de> Deserialize<'de> for ProcessMode {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let mask = String::deserialize(deserializer)?;
        ProcessMode::from_mask(&mask).map_err(serde::de::Error::custom)
    }
}

/// A macroscopic velocity gradient with its basis coefficients (1/s).
#[derive(Clone, Copy, Debug)]
pub struct VelocityGradient {
    pub l: Matrix3<f64>,
    pub alphas: [f64; BASIS_COUNT],
}

impl VelocityGradient {
    pub fn zero() -> Self {
        Self {
            l: Matrix3::zeros(),
            alphas: [0.0; BASIS_COUNT],
        }
    }

    pub fn stretching(&self) -> Matrix3<f64> {
        (self.l + self.l.transpose()) / 2.0
    }

    pub fn spin(&self) -> Matrix3<f64> {
        (self.l - self.l.transpose()) / 2.0
    }
}

/// Build the velocity gradient of a process mode at a given strain rate.
pub fn build_velocity_gradient(mode: ProcessMode, rate: f64) -> Result<VelocityGradient> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "strain rate must be positive and finite, got {rate}"
        )));
    }
    let mut l = Matrix3::zeros();
    let mut alphas = [0.0; BASIS_COUNT];
    for k in 0..BASIS_COUNT {
        if mode.is_active(k) {
            alphas[k] = rate;
            l += rate * BASIS_MATRICES[k];
        }
    }
    Ok(VelocityGradient { l, alphas })
}

/// The twelve FCC slip systems with the constitutive parameters of the
/// rate-sensitive power law.
#[derive(Clone, Debug)]
pub struct SlipSystemSet {
    /// Unit slip-plane normals in the crystal frame.
    pub normals: [Vector3<f64>; SLIP_COUNT],
    /// Unit slip directions in the crystal frame.
    pub directions: [Vector3<f64>; SLIP_COUNT],
    /// Schmid tensors `s x m` in the crystal frame.
    pub schmid: [Matrix3<f64>; SLIP_COUNT],
    /// Reference shearing rate (1/s).
    pub reference_rate: f64,
    /// Rate-sensitivity exponent m; the power law uses `1/m`.
    pub rate_sensitivity: f64,
    /// Slip resistance g (consistent stress units).
    pub resistance: f64,
}

impl SlipSystemSet {
    /// The {111}<110> family with the default regularization
    /// (`gamma0 = 1/s`, `m = 0.05`, `g = 1`, no hardening).
    pub fn fcc() -> Self {
        Self::fcc_with(1.0, 0.05, 1.0)
    }

    pub fn fcc_with(reference_rate: f64, rate_sensitivity: f64, resistance: f64) -> Self {
        let planes = [
            Vector3::new(1.0, 1.0, 1.0),
            Vector3::new(-1.0, 1.0, 1.0),
            Vector3::new(1.0, -1.0, 1.0),
            Vector3::new(1.0, 1.0, -1.0),
        ];
        // <110> directions with the first nonzero component positive; signed
        // slip rates cover the opposite senses.
        let candidates = [
            Vector3::new(0.0, 1.0, -1.0),
            Vector3::new(0.0, 1.0, 1.0),
            Vector3::new(1.0, -1.0, 0.0),
            Vector3::new(1.0, 0.0, -1.0),
            Vector3::new(1.0, 0.0, 1.0),
            Vector3::new(1.0, 1.0, 0.0),
        ];
        let mut normals = [Vector3::zeros(); SLIP_COUNT];
        let mut directions = [Vector3::zeros(); SLIP_COUNT];
        let mut schmid = [Matrix3::zeros(); SLIP_COUNT];
        let mut k = 0;
        for plane in planes {
            for dir in candidates {
                if plane.dot(&dir) == 0.0 {
                    let m = plane.normalize();
                    let s = dir.normalize();
                    normals[k] = m;
                    directions[k] = s;
                    schmid[k] = s * m.transpose();
                    k += 1;
                }
            }
        }
        debug_assert_eq!(k, SLIP_COUNT);
        Self {
            normals,
            directions,
            schmid,
            reference_rate,
            rate_sensitivity,
            resistance,
        }
    }
}

/// Orthonormal basis of symmetric traceless 3x3 tensors under the `:` inner
/// product; deviatoric stress and stretching live in this 5-space.
fn deviatoric_to_5(m: &Matrix3<f64>) -> SVector<f64, 5> {
    let s2 = std::f64::consts::SQRT_2;
    let s6 = 6.0_f64.sqrt();
    SVector::<f64, 5>::new(
        (m[(0, 0)] - m[(1, 1)]) / s2,
        (m[(0, 0)] + m[(1, 1)] - 2.0 * m[(2, 2)]) / s6,
        s2 * (m[(0, 1)] + m[(1, 0)]) / 2.0,
        s2 * (m[(0, 2)] + m[(2, 0)]) / 2.0,
        s2 * (m[(1, 2)] + m[(2, 1)]) / 2.0,
    )
}

fn deviatoric_from_5(v: &SVector<f64, 5>) -> Matrix3<f64> {
    let s2 = std::f64::consts::SQRT_2;
    let s6 = 6.0_f64.sqrt();
    Matrix3::new(
        v[0] / s2 + v[1] / s6,
        v[2] / s2,
        v[3] / s2,
        v[2] / s2,
        -v[0] / s2 + v[1] / s6,
        v[4] / s2,
        v[3] / s2,
        v[4] / s2,
        -2.0 * v[1] / s6,
    )
}

fn power_law_rate(tau: f64, gamma0: f64, inv_m: f64, g: f64) -> f64 {
    gamma0 * (tau.abs() / g).powf(inv_m) * tau.signum()
}

fn power_law_slope(tau: f64, gamma0: f64, inv_m: f64, g: f64) -> f64 {
    gamma0 * inv_m / g * (tau.abs() / g).powf(inv_m - 1.0)
}

struct TaylorProblem {
    /// Symmetric parts of the sample-frame Schmid tensors, as 5-vectors.
    p: [SVector<f64, 5>; SLIP_COUNT],
    d: SVector<f64, 5>,
    gamma0: f64,
    g: f64,
}

impl TaylorProblem {
    fn residual(&self, sigma: &SVector<f64, 5>, inv_m: f64) -> SVector<f64, 5> {
        let mut f = -self.d;
        for p in &self.p {
            let tau = sigma.dot(p);
            f += power_law_rate(tau, self.gamma0, inv_m, self.g) * p;
        }
        f
    }

    fn jacobian(&self, sigma: &SVector<f64, 5>, inv_m: f64) -> SMatrix<f64, 5, 5> {
        let mut j = SMatrix::<f64, 5, 5>::zeros();
        for p in &self.p {
            let tau = sigma.dot(p);
            j += power_law_slope(tau, self.gamma0, inv_m, self.g) * p * p.transpose();
        }
        j
    }

    /// Damped Newton with Levenberg-Marquardt fallback at a fixed
    /// rate-sensitivity exponent.
    ///
    /// The power-law slope spans twenty orders of magnitude near the
    /// rate-independent limit, so the Jacobian is often close to singular in
    /// the directions transverse to the active slip systems; a growing ridge
    /// keeps the step well-defined and the backtracking line search keeps it
    /// monotone.
    fn newton(&self, sigma: &mut SVector<f64, 5>, inv_m: f64, tol: f64) -> Result<()> {
        let mut f = self.residual(sigma, inv_m);
        let mut lambda = 0.0_f64;
        for _ in 0..100 {
            let norm = f.norm();
            if norm <= tol {
                return Ok(());
            }
            let jac = self.jacobian(sigma, inv_m);
            let scale = jac.trace().abs().max(1e-30) / 5.0;
            let mut improved = false;
            for _ in 0..30 {
                let damped = jac + SMatrix::<f64, 5, 5>::identity() * (lambda * scale);
                let delta = match damped.lu().solve(&(-f)) {
                    Some(d) if d.iter().all(|x| x.is_finite()) => d,
                    _ => {
                        lambda = (lambda * 10.0).max(1e-10);
                        continue;
                    }
                };
                let mut alpha = 1.0;
                for _ in 0..40 {
                    let candidate = *sigma + alpha * delta;
                    let fc = self.residual(&candidate, inv_m);
                    if fc.norm() < (1.0 - 1e-4 * alpha) * norm {
                        *sigma = candidate;
                        f = fc;
                        improved = true;
                        break;
                    }
                    alpha *= 0.5;
                }
                if improved {
                    lambda /= 4.0;
                    if lambda < 1e-12 {
                        lambda = 0.0;
                    }
                    break;
                }
                lambda = (lambda * 10.0).max(1e-10);
            }
            if !improved {
                return Err(Error::Convergence {
                    residual: norm / self.d.norm(),
                    node: None,
                });
            }
        }
        let norm = self.residual(sigma, inv_m).norm();
        if norm <= tol {
            Ok(())
        } else {
            Err(Error::Convergence {
                residual: norm / self.d.norm(),
                node: None,
            })
        }
    }

    /// Solve for the deviatoric stress: exact linear solve at `m = 1`, then
    /// continuation down to the target exponent.
    fn solve(&self, m_target: f64) -> Result<SVector<f64, 5>> {
        let mut a = SMatrix::<f64, 5, 5>::zeros();
        for p in &self.p {
            a += (self.gamma0 / self.g) * p * p.transpose();
        }
        let mut sigma = a.lu().solve(&self.d).ok_or(Error::Convergence {
            residual: f64::INFINITY,
            node: None,
        })?;

        let tol = 1e-9 * self.d.norm();
        let mut m = 1.0_f64;
        while m > m_target {
            m = (m * 0.8).max(m_target);
            self.newton(&mut sigma, 1.0 / m, tol)?;
        }
        Ok(sigma)
    }
}

/// Slip rates that accommodate the stretching part of `l` at orientation `r`
/// under the Taylor hypothesis.
///
/// Solves for the deviatoric crystal stress such that the Schmid sum of the
/// power-law slip rates reproduces `sym(L)` with relative residual below
/// 1e-9, then returns the twelve signed rates.
pub fn taylor_slip_rates(
    l: &VelocityGradient,
    r: &RodriguesVector,
    slips: &SlipSystemSet,
) -> Result<[f64; SLIP_COUNT]> {
    taylor_solve(l, r, slips).map(|(_, rates)| rates)
}

/// Full Taylor solution at one orientation: the deviatoric sample-frame
/// stress and the twelve slip rates it drives.
pub fn taylor_solve(
    l: &VelocityGradient,
    r: &RodriguesVector,
    slips: &SlipSystemSet,
) -> Result<(Matrix3<f64>, [f64; SLIP_COUNT])> {
    let rot = rotation_from_rodrigues(r)?;
    let d = deviatoric_to_5(&l.stretching());
    if d.norm() < 1e-14 {
        return Ok((Matrix3::zeros(), [0.0; SLIP_COUNT]));
    }
    let mut p = [SVector::<f64, 5>::zeros(); SLIP_COUNT];
    for (k, t) in slips.schmid.iter().enumerate() {
        p[k] = deviatoric_to_5(&(rot * t * rot.transpose()));
    }
    let problem = TaylorProblem {
        p,
        d,
        gamma0: slips.reference_rate,
        g: slips.resistance,
    };
    let sigma = problem.solve(slips.rate_sensitivity)?;
    let inv_m = 1.0 / slips.rate_sensitivity;
    let mut rates = [0.0; SLIP_COUNT];
    for k in 0..SLIP_COUNT {
        rates[k] = power_law_rate(
            sigma.dot(&problem.p[k]),
            slips.reference_rate,
            inv_m,
            slips.resistance,
        );
    }
    Ok((deviatoric_from_5(&sigma), rates))
}

/// Lattice-spin axial vector at one orientation: macro spin minus the plastic
/// spin of the solved slip rates.
pub fn lattice_spin(
    l: &VelocityGradient,
    r: &RodriguesVector,
    slips: &SlipSystemSet,
) -> Result<Vector3<f64>> {
    let rates = taylor_slip_rates(l, r, slips)?;
    let rot = rotation_from_rodrigues(r)?;
    let mut lp = Matrix3::zeros();
    for (k, t) in slips.schmid.iter().enumerate() {
        lp += rates[k] * t;
    }
    let plastic = rot * lp * rot.transpose();
    let plastic_spin = (plastic - plastic.transpose()) / 2.0;
    let spin = l.spin() - plastic_spin;
    Ok(axial(&spin))
}

/// Reorientation velocity (Rodrigues-coordinate rate) at every mesh node.
pub fn reorientation_velocity(
    mesh: &FundamentalMesh,
    l: &VelocityGradient,
    slips: &SlipSystemSet,
) -> Result<Vec<Vector3<f64>>> {
    mesh.nodes()
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let omega = lattice_spin(l, r, slips).map_err(|e| match e {
                Error::Convergence { residual, .. } => Error::Convergence {
                    residual,
                    node: Some(i),
                },
                other => other,
            })?;
            Ok(rodrigues_rate(r, &omega))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_mesh;
    use approx::assert_relative_eq;

    #[test]
    fn mode_mask_roundtrip() {
        let mode = ProcessMode::from_mask("10010").unwrap();
        assert_eq!(mode.id(), 18);
        assert_eq!(mode.mask(), "10010");
        assert!(mode.is_active(0));
        assert!(!mode.is_active(1));
        assert!(mode.is_active(3));
        assert_eq!(ProcessMode::all().len(), MODE_COUNT);
        assert!(ProcessMode::from_mask("00000").is_err());
        assert!(ProcessMode::from_mask("0101").is_err());
        assert!(ProcessMode::from_id(0).is_err());
        assert!(ProcessMode::from_id(32).is_err());
    }

    #[test]
    fn tension_mode_matrix() {
        let l = build_velocity_gradient(ProcessMode::from_mask("10000").unwrap(), 1.0).unwrap();
        let expected = Matrix3::new(1.0, 0.0, 0.0, 0.0, -0.5, 0.0, 0.0, 0.0, -0.5);
        assert_eq!(l.l, expected);
        assert_eq!(l.alphas, [1.0, 0.0, 0.0, 0.0, 0.0]);
    }

    #[test]
    fn xy_shear_mode_matrix() {
        let l = build_velocity_gradient(ProcessMode::from_mask("00100").unwrap(), 1.0).unwrap();
        let expected = Matrix3::new(0.0, 1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0);
        assert_eq!(l.l, expected);
    }

    #[test]
    fn all_modes_are_traceless_sums() {
        let l = build_velocity_gradient(ProcessMode::from_mask("11111").unwrap(), 1.0).unwrap();
        let sum: Matrix3<f64> = BASIS_MATRICES.iter().sum();
        assert_eq!(l.l, sum);
        for mode in ProcessMode::all() {
            let l = build_velocity_gradient(mode, 1.0).unwrap();
            assert!(l.l.trace().abs() < 1e-12);
            assert!(l.l.norm() > 0.0);
        }
    }

    #[test]
    fn zero_rate_rejected() {
        let mode = ProcessMode::from_mask("10000").unwrap();
        assert!(build_velocity_gradient(mode, 0.0).is_err());
    }

    #[test]
    fn slip_systems_are_orthonormal() {
        let slips = SlipSystemSet::fcc();
        for k in 0..SLIP_COUNT {
            assert_relative_eq!(slips.normals[k].norm(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(slips.directions[k].norm(), 1.0, epsilon = 1e-12);
            assert!(slips.normals[k].dot(&slips.directions[k]).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_velocity_gradient_gives_zero_rates() {
        let slips = SlipSystemSet::fcc();
        let r = RodriguesVector::new(0.1, -0.2, 0.3);
        let rates = taylor_slip_rates(&VelocityGradient::zero(), &r, &slips).unwrap();
        assert_eq!(rates, [0.0; SLIP_COUNT]);
    }

    #[test]
    fn pure_spin_gives_zero_rates() {
        let slips = SlipSystemSet::fcc();
        let l = VelocityGradient {
            l: Matrix3::new(0.0, 1.0, 0.0, -1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            alphas: [0.0; BASIS_COUNT],
        };
        let r = RodriguesVector::new(0.2, 0.1, -0.3);
        let rates = taylor_slip_rates(&l, &r, &slips).unwrap();
        assert_eq!(rates, [0.0; SLIP_COUNT]);
    }

    /// Residual-verification oracle: the returned rates reproduce the imposed
    /// stretching through the Schmid sum.
    fn check_rates_reproduce_stretching(l: &VelocityGradient, r: &RodriguesVector) {
        let slips = SlipSystemSet::fcc();
        let rates = taylor_slip_rates(l, r, &slips).unwrap();
        let rot = rotation_from_rodrigues(r).unwrap();
        let mut achieved = Matrix3::zeros();
        for (k, t) in slips.schmid.iter().enumerate() {
            let sample = rot * t * rot.transpose();
            achieved += rates[k] * (sample + sample.transpose()) / 2.0;
        }
        let d = l.stretching();
        assert!(
            (achieved - d).norm() <= 1e-9 * d.norm(),
            "residual {} too large",
            (achieved - d).norm()
        );
    }

    #[test]
    fn tension_at_origin_reproduces_stretching() {
        let l = build_velocity_gradient(ProcessMode::from_mask("10000").unwrap(), 1.0).unwrap();
        check_rates_reproduce_stretching(&l, &RodriguesVector::zero());
    }

    #[test]
    fn every_mode_converges_at_random_orientations() {
        let nodes = [
            RodriguesVector::new(0.31, -0.05, 0.22),
            RodriguesVector::new(-0.4, 0.4, -0.4),
            RodriguesVector::new(0.05, 0.12, -0.33),
        ];
        for mode in ProcessMode::all() {
            let l = build_velocity_gradient(mode, 1.0).unwrap();
            for r in &nodes {
                check_rates_reproduce_stretching(&l, r);
            }
        }
    }

    #[test]
    fn doubling_l_doubles_achieved_stretching_and_signs_match() {
        let slips = SlipSystemSet::fcc();
        let r = RodriguesVector::new(0.15, 0.25, -0.1);
        let l1 = build_velocity_gradient(ProcessMode::from_mask("10100").unwrap(), 1.0).unwrap();
        let l2 = build_velocity_gradient(ProcessMode::from_mask("10100").unwrap(), 2.0).unwrap();
        // Residual contract: both solves hit their own stretching targets.
        check_rates_reproduce_stretching(&l1, &r);
        check_rates_reproduce_stretching(&l2, &r);
        assert_relative_eq!(l2.stretching(), l1.stretching() * 2.0, epsilon = 1e-15);

        // Every slip rate's sign equals the sign of its resolved shear on the
        // solved stress.
        let (sigma, rates) = taylor_solve(&l1, &r, &slips).unwrap();
        let rot = rotation_from_rodrigues(&r).unwrap();
        for (k, t) in slips.schmid.iter().enumerate() {
            let sample = rot * t * rot.transpose();
            let tau = (sigma * sample.transpose()).trace();
            if rates[k] != 0.0 {
                assert_eq!(rates[k].signum(), tau.signum(), "system {k}");
            }
        }
    }

    #[test]
    fn zero_l_gives_zero_velocity_everywhere() {
        let mesh = build_mesh(1).unwrap();
        let slips = SlipSystemSet::fcc();
        let v = reorientation_velocity(&mesh, &VelocityGradient::zero(), &slips).unwrap();
        assert!(v.iter().all(|w| w.norm() == 0.0));
    }

    #[test]
    fn pure_macro_spin_reduces_to_rigid_rotation() {
        let mesh = build_mesh(1).unwrap();
        let slips = SlipSystemSet::fcc();
        let l = VelocityGradient {
            l: Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0),
            alphas: [0.0; BASIS_COUNT],
        };
        let omega = axial(&l.spin());
        let v = reorientation_velocity(&mesh, &l, &slips).unwrap();
        for (node, vel) in mesh.nodes().iter().zip(&v) {
            assert_relative_eq!(*vel, rodrigues_rate(node, &omega), epsilon = 1e-12);
        }
    }

    /// Small-step finite-rotation oracle: the reported velocity matches an
    /// explicit 1e-6 s rotation step of the lattice.
    #[test]
    fn velocity_matches_small_rotation_step() {
        use crate::orientation::{rodrigues_from_rotation, skew};
        let mesh = build_mesh(2).unwrap();
        let slips = SlipSystemSet::fcc();
        let l = build_velocity_gradient(ProcessMode::from_mask("10000").unwrap(), 1.0).unwrap();
        let v = reorientation_velocity(&mesh, &l, &slips).unwrap();
        let dt = 1e-6;
        for (i, node) in mesh.nodes().iter().enumerate() {
            let omega = lattice_spin(&l, node, &slips).unwrap();
            let w = skew(&omega) * dt;
            let step = Matrix3::identity() + w + w * w / 2.0;
            let rot = rotation_from_rodrigues(node).unwrap();
            let moved = rodrigues_from_rotation(&(step * rot)).unwrap();
            let fd = (moved.0 - node.0) / dt;
            if fd.norm() > 1e-12 {
                assert!(
                    (fd - v[i]).norm() / fd.norm() < 1e-4,
                    "node {i}: finite-difference {fd:?} vs velocity {:?}",
                    v[i]
                );
            }
        }
    }

    /// Symmetry-equivalent boundary nodes see the same lattice spin, so their
    /// velocities are the symmetry images of each other.
    #[test]
    fn equivariance_on_identified_boundary_nodes() {
        let mesh = build_mesh(2).unwrap();
        assert!(!mesh.dependent_map().is_empty());
        let slips = SlipSystemSet::fcc();
        for mode in ["10000", "00100", "01001"] {
            let l = build_velocity_gradient(ProcessMode::from_mask(mode).unwrap(), 1.0).unwrap();
            for (&dep, &rep) in mesh.dependent_map() {
                let w_dep = lattice_spin(&l, &mesh.nodes()[dep], &slips).unwrap();
                let w_rep = lattice_spin(&l, &mesh.nodes()[rep], &slips).unwrap();
                assert!(
                    (w_dep - w_rep).norm() < 1e-8,
                    "mode {mode}: spin differs across identified pair ({dep}, {rep})"
                );
            }
        }
    }

    #[test]
    fn every_single_mode_forces_some_node() {
        let mesh = build_mesh(2).unwrap();
        let slips = SlipSystemSet::fcc();
        for mask in ["10000", "01000", "00100", "00010", "00001"] {
            let l = build_velocity_gradient(ProcessMode::from_mask(mask).unwrap(), 1.0).unwrap();
            let v = reorientation_velocity(&mesh, &l, &slips).unwrap();
            assert!(
                v.iter().any(|w| w.norm() > 1e-6),
                "mode {mask} produced a degenerate velocity field"
            );
        }
    }
}
