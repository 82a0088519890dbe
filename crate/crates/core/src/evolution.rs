//! Physics-based ODF evolution under a fixed velocity gradient.
//!
//! The conservation equation for the ODF is advanced in Eulerian rate form,
//! `dA/dt = -grad(A) . v - A div(v)`, with the divergence taken in
//! orientation space: the flat nodal divergence plus the metric correction
//! `v . grad(rho)/rho`, which is what makes constant-spin flows (rigid
//! rotations) exactly volume preserving. Nodal gradients come from the
//! constant linear-tetrahedron shape-function gradients, volume-averaged over
//! each node's element patch.
//!
//! Time integration is explicit Euler with substeps; after every substep
//! negatives are clipped (advection can undershoot) and the ODF is
//! renormalized, keeping the two hard constraints `A >= 0` and `q . A = 1`.
//! The pre-renormalization drift `|q . A - 1|` is tracked as a conservation
//! quality measure.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homogenization::{objective, ObjectiveWeights, StiffnessMatrix};
use crate::mesh::{assemble_property_matrix, normalize_allow_negative, normalize_odf, FundamentalMesh, Odf};
use crate::plasticity::{
    build_velocity_gradient, reorientation_velocity, ProcessMode, SlipSystemSet, VelocityGradient,
};

/// Integration settings for one process step.
#[derive(Clone, Copy, Debug, Serialize, Deserialize, PartialEq)]
pub struct ProcessStepConfig {
    /// Duration of one process step in seconds.
    pub dt_total: f64,
    /// Number of explicit-Euler substeps per step.
    pub substeps: usize,
    /// Clip negative nodal values to zero after each substep.
    pub clip_negative: bool,
}

impl Default for ProcessStepConfig {
    fn default() -> Self {
        // 40 substeps (dt = 2.5 ms at the default step length) keep the
        // worst-case pre-renormalization drift under 1e-3 on desk meshes;
        // the drift scales linearly with the substep size.
        Self {
            dt_total: 0.1,
            substeps: 40,
            clip_negative: true,
        }
    }
}

impl ProcessStepConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.dt_total > 0.0) || !self.dt_total.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "dt_total must be positive, got {}",
                self.dt_total
            )));
        }
        if self.substeps == 0 {
            return Err(Error::InvalidArgument("substeps must be at least 1".into()));
        }
        Ok(())
    }
}

/// Conservation diagnostics of one `evolve` call.
#[derive(Clone, Copy, Debug, Default)]
pub struct EvolveStats {
    /// Largest `|q . A - 1|` observed before any renormalization.
    pub max_drift: f64,
    /// Most negative nodal value observed before clipping.
    pub min_pre_clip: f64,
}

/// A simulated processing path: the ODF after every step together with the
/// objective values along the way.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct Trajectory {
    pub modes: Vec<ProcessMode>,
    pub odfs: Vec<Odf>,
    pub objectives: Vec<f64>,
}

/// Advance an ODF for one process step under a fixed velocity gradient.
pub fn evolve(
    mesh: &FundamentalMesh,
    odf: &Odf,
    l: &VelocityGradient,
    cfg: &ProcessStepConfig,
    slips: &SlipSystemSet,
) -> Result<Odf> {
    evolve_with_stats(mesh, odf, l, cfg, slips).map(|(odf, _)| odf)
}

/// [`evolve`] with conservation diagnostics.
pub fn evolve_with_stats(
    mesh: &FundamentalMesh,
    odf: &Odf,
    l: &VelocityGradient,
    cfg: &ProcessStepConfig,
    slips: &SlipSystemSet,
) -> Result<(Odf, EvolveStats)> {
    cfg.validate()?;
    if odf.len() != mesh.independent_count() {
        return Err(Error::InvalidArgument(format!(
            "ODF length {} does not match mesh independent count {}",
            odf.len(),
            mesh.independent_count()
        )));
    }

    let velocity = reorientation_velocity(mesh, l, slips)?;
    let n_nodes = mesh.nodes().len();
    let n_indep = mesh.independent_count();
    let dt = cfg.dt_total / cfg.substeps as f64;

    // The velocity field is fixed over the step, so its nodal divergence can
    // be recovered once.
    let mut div_flat = vec![0.0; n_nodes];
    for (e, tet) in mesh.elements().iter().enumerate() {
        let grads = mesh.shape_gradients(e);
        let volume = mesh.element_volume(e);
        let mut div_e = 0.0;
        for (l_loc, &node) in tet.iter().enumerate() {
            div_e += grads[l_loc].dot(&velocity[node]);
        }
        for &node in tet {
            div_flat[node] += div_e * volume;
        }
    }
    let mut divergence = vec![0.0; n_nodes];
    for (g, node) in mesh.nodes().iter().enumerate() {
        let flat = div_flat[g] / mesh.patch_volume(g);
        // Orientation-space correction: grad(rho)/rho = -4 r / (1 + r.r).
        let metric_term = -4.0 * node.0.dot(&velocity[g]) / (1.0 + node.0.dot(&node.0));
        divergence[g] = flat + metric_term;
    }

    let mut current = odf.clone();
    let mut stats = EvolveStats::default();
    let mut nodal = vec![0.0; n_nodes];
    let mut grad = vec![Vector3::zeros(); n_nodes];

    for substep in 0..cfg.substeps {
        for g in 0..n_nodes {
            nodal[g] = current.values[mesh.value_slot(g)];
            grad[g] = Vector3::zeros();
        }
        for (e, tet) in mesh.elements().iter().enumerate() {
            let grads = mesh.shape_gradients(e);
            let volume = mesh.element_volume(e);
            let mut grad_e = Vector3::zeros();
            for (l_loc, &node) in tet.iter().enumerate() {
                grad_e += grads[l_loc] * nodal[node];
            }
            for &node in tet {
                grad[node] += grad_e * volume;
            }
        }

        let mut next = vec![0.0; n_indep];
        for (slot, &g) in mesh.independent_ids().iter().enumerate() {
            let gradient = grad[g] / mesh.patch_volume(g);
            let rate = -(gradient.dot(&velocity[g]) + nodal[g] * divergence[g]);
            next[slot] = current.values[slot] + dt * rate;
        }
        if next.iter().any(|v| !v.is_finite()) {
            return Err(Error::NumericalBlowup { substep });
        }

        let raw = Odf { values: next };
        let drift = (mesh.weighted_mass(&raw) - 1.0).abs();
        stats.max_drift = stats.max_drift.max(drift);

        current = if cfg.clip_negative {
            let min = raw.values.iter().cloned().fold(f64::INFINITY, f64::min);
            stats.min_pre_clip = stats.min_pre_clip.min(min);
            let clipped = Odf {
                values: raw.values.iter().map(|v| v.max(0.0)).collect(),
            };
            normalize_odf(mesh, &clipped)?
        } else {
            normalize_allow_negative(mesh, &raw)?
        };
    }

    Ok((current, stats))
}

/// Apply one process mode (at unit strain rate) for one step.
pub fn apply_process(
    mesh: &FundamentalMesh,
    odf: &Odf,
    mode: ProcessMode,
    cfg: &ProcessStepConfig,
    slips: &SlipSystemSet,
) -> Result<Odf> {
    let l = build_velocity_gradient(mode, 1.0)?;
    evolve(mesh, odf, &l, cfg, slips).map_err(|e| e.at_mode(&mode.mask()))
}

/// [`apply_process`] with conservation diagnostics.
pub fn apply_process_with_stats(
    mesh: &FundamentalMesh,
    odf: &Odf,
    mode: ProcessMode,
    cfg: &ProcessStepConfig,
    slips: &SlipSystemSet,
) -> Result<(Odf, EvolveStats)> {
    let l = build_velocity_gradient(mode, 1.0)?;
    evolve_with_stats(mesh, odf, &l, cfg, slips).map_err(|e| e.at_mode(&mode.mask()))
}

/// Fold [`apply_process`] over a mode sequence, recording the ODF and the
/// stiffness objective after every step.
pub fn simulate_path(
    mesh: &FundamentalMesh,
    initial: &Odf,
    modes: &[ProcessMode],
    cfg: &ProcessStepConfig,
    slips: &SlipSystemSet,
    c0: &StiffnessMatrix,
    weights: &ObjectiveWeights,
) -> Result<Trajectory> {
    let p = assemble_property_matrix(mesh, c0)?;
    let mut odfs = Vec::with_capacity(modes.len() + 1);
    let mut objectives = Vec::with_capacity(modes.len() + 1);
    odfs.push(initial.clone());
    objectives.push(objective(&p.homogenized(initial), weights));
    let mut current = initial.clone();
    for (step, &mode) in modes.iter().enumerate() {
        current = apply_process(mesh, &current, mode, cfg, slips).map_err(|e| e.at_step(step))?;
        objectives.push(objective(&p.homogenized(&current), weights));
        odfs.push(current.clone());
    }
    Ok(Trajectory {
        modes: modes.to_vec(),
        odfs,
        objectives,
    })
}
