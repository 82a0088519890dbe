//! Homogenized elastic stiffness of a textured polycrystal.
//!
//! Voigt convention throughout: stiffness is a symmetric 6x6 matrix in GPa
//! with component ordering (11, 22, 33, 23, 13, 12). Homogenization is the
//! metric-weighted orientation average of the rotated single-crystal
//! stiffness; because that average is linear in the ODF it can be compressed
//! into a property matrix `P` with `<C> = P^T a`.

use nalgebra::{DMatrix, DVector, Matrix3, Matrix6};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mesh::{FundamentalMesh, Odf};
use crate::orientation::{metric_factor, rotation_from_rodrigues};

/// Voigt index of the tensor pair `(i, j)`, ordering (11, 22, 33, 23, 13, 12).
const VOIGT: [[usize; 3]; 3] = [[0, 5, 4], [5, 1, 3], [4, 3, 2]];

/// Tensor index pairs of the six Voigt slots.
const VOIGT_PAIRS: [(usize, usize); 6] = [(0, 0), (1, 1), (2, 2), (1, 2), (0, 2), (0, 1)];

/// Symmetric 6x6 elastic stiffness in Voigt notation (GPa).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StiffnessMatrix {
    pub c: Matrix6<f64>,
}

impl StiffnessMatrix {
    pub fn zeros() -> Self {
        Self {
            c: Matrix6::zeros(),
        }
    }

    /// Cubic single crystal from its three independent constants.
    pub fn cubic(c11: f64, c12: f64, c44: f64) -> Self {
        let mut c = Matrix6::zeros();
        for i in 0..3 {
            c[(i, i)] = c11;
            c[(i + 3, i + 3)] = c44;
            for j in 0..3 {
                if i != j {
                    c[(i, j)] = c12;
                }
            }
        }
        Self { c }
    }

    /// Copper single-crystal constants (GPa).
    pub fn copper() -> Self {
        Self::cubic(168.0, 121.4, 75.4)
    }

    pub fn symmetry_defect(&self) -> f64 {
        let mut worst = 0.0_f64;
        for i in 0..6 {
            for j in (i + 1)..6 {
                worst = worst.max((self.c[(i, j)] - self.c[(j, i)]).abs());
            }
        }
        worst
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.symmetry_defect() <= tol
    }

    /// Eigenvalues of the Voigt matrix, ascending.
    pub fn eigenvalues(&self) -> [f64; 6] {
        let mut vals: Vec<f64> = self.c.symmetric_eigen().eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut out = [0.0; 6];
        out.copy_from_slice(&vals);
        out
    }

    /// Eigenvalues of the Kelvin (Mandel) form, ascending.
    ///
    /// Rotation acts orthogonally on the Kelvin representation (shear rows
    /// and columns scaled by sqrt(2)), so this spectrum is the rotation
    /// invariant of the stiffness tensor; the plain Voigt spectrum is not.
    pub fn kelvin_eigenvalues(&self) -> [f64; 6] {
        let mut kelvin = self.c;
        let s2 = std::f64::consts::SQRT_2;
        for i in 0..6 {
            for j in 0..6 {
                let scale = if i >= 3 { s2 } else { 1.0 } * if j >= 3 { s2 } else { 1.0 };
                kelvin[(i, j)] *= scale;
            }
        }
        let mut vals: Vec<f64> = kelvin.symmetric_eigen().eigenvalues.iter().copied().collect();
        vals.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let mut out = [0.0; 6];
        out.copy_from_slice(&vals);
        out
    }

    /// Validate a single-crystal input: symmetric and positive-definite.
    pub fn require_physical(&self) -> Result<()> {
        if !self.is_symmetric(1e-9) {
            return Err(Error::InvalidArgument(
                "stiffness matrix is not symmetric".into(),
            ));
        }
        if self.eigenvalues()[0] <= 0.0 {
            return Err(Error::InvalidArgument(
                "stiffness matrix is not positive-definite".into(),
            ));
        }
        Ok(())
    }

    /// The 21 independent entries (row-major upper triangle).
    pub fn upper_triangle_21(&self) -> [f64; 21] {
        let mut out = [0.0; 21];
        let mut k = 0;
        for i in 0..6 {
            for j in i..6 {
                out[k] = self.c[(i, j)];
                k += 1;
            }
        }
        out
    }

    /// Rebuild the symmetric matrix from its upper triangle.
    pub fn from_upper_triangle_21(entries: &[f64]) -> Self {
        let mut c = Matrix6::zeros();
        let mut k = 0;
        for i in 0..6 {
            for j in i..6 {
                c[(i, j)] = entries[k];
                c[(j, i)] = entries[k];
                k += 1;
            }
        }
        Self { c }
    }

    pub fn to_rows(&self) -> [[f64; 6]; 6] {
        let mut rows = [[0.0; 6]; 6];
        for i in 0..6 {
            for j in 0..6 {
                rows[i][j] = self.c[(i, j)];
            }
        }
        rows
    }
}

/// Weights of the composite stiffness objective: diagonal entries count with
/// `w_diag`, each distinct off-diagonal pair once with `w_offdiag`.
#[derive(Clone, Debug, Serialize, Deserialize, PartialEq)]
pub struct ObjectiveWeights {
    pub w_diag: [f64; 6],
    pub w_offdiag: f64,
}

impl Default for ObjectiveWeights {
    fn default() -> Self {
        Self {
            w_diag: [1.0; 6],
            w_offdiag: 0.5,
        }
    }
}

impl ObjectiveWeights {
    pub fn validate(&self) -> Result<()> {
        let all = self.w_diag.iter().chain(std::iter::once(&self.w_offdiag));
        for w in all {
            if !w.is_finite() || *w < 0.0 {
                return Err(Error::InvalidArgument(
                    "objective weights must be finite and nonnegative".into(),
                ));
            }
        }
        Ok(())
    }

    /// Weight of each of the 21 upper-triangle entries.
    pub fn upper_triangle_weights(&self) -> [f64; 21] {
        let mut out = [0.0; 21];
        let mut k = 0;
        for i in 0..6 {
            for j in i..6 {
                out[k] = if i == j { self.w_diag[i] } else { self.w_offdiag };
                k += 1;
            }
        }
        out
    }
}

/// Rotate a stiffness matrix into a new orientation via the full fourth-order
/// tensor transform `C'_ijkl = R_ia R_jb R_kc R_ld C_abcd`.
pub fn rotate_stiffness(c0: &StiffnessMatrix, rot: &Matrix3<f64>) -> Result<StiffnessMatrix> {
    let defect = (rot.transpose() * rot - Matrix3::identity()).norm();
    if defect > 1e-8 {
        return Err(Error::InvalidArgument(format!(
            "rotation is not orthogonal (defect {defect:.3e})"
        )));
    }

    // Expand Voigt to the full tensor; stiffness needs no shear factors.
    let mut t = [[[[0.0_f64; 3]; 3]; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    t[i][j][k][l] = c0.c[(VOIGT[i][j], VOIGT[k][l])];
                }
            }
        }
    }

    // Contract one index at a time to keep the cost at 4 * 3^5.
    let mut t1 = [[[[0.0_f64; 3]; 3]; 3]; 3];
    for a in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut acc = 0.0;
                    for i in 0..3 {
                        acc += rot[(a, i)] * t[i][j][k][l];
                    }
                    t1[a][j][k][l] = acc;
                }
            }
        }
    }
    let mut t2 = [[[[0.0_f64; 3]; 3]; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            for k in 0..3 {
                for l in 0..3 {
                    let mut acc = 0.0;
                    for j in 0..3 {
                        acc += rot[(b, j)] * t1[a][j][k][l];
                    }
                    t2[a][b][k][l] = acc;
                }
            }
        }
    }
    let mut t3 = [[[[0.0_f64; 3]; 3]; 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            for c in 0..3 {
                for l in 0..3 {
                    let mut acc = 0.0;
                    for k in 0..3 {
                        acc += rot[(c, k)] * t2[a][b][k][l];
                    }
                    t3[a][b][c][l] = acc;
                }
            }
        }
    }

    let mut out = Matrix6::zeros();
    for (vi, &(i, j)) in VOIGT_PAIRS.iter().enumerate() {
        for (vj, &(k, l)) in VOIGT_PAIRS.iter().enumerate() {
            let mut acc = 0.0;
            for d in 0..3 {
                acc += rot[(l, d)] * t3[i][j][k][d];
            }
            out[(vi, vj)] = acc;
        }
    }
    Ok(StiffnessMatrix { c: out })
}

/// Homogenized stiffness `<C>` by direct quadrature of `C(r) A(r)` over the
/// fundamental region.
pub fn homogenize(
    mesh: &FundamentalMesh,
    c0: &StiffnessMatrix,
    odf: &Odf,
) -> Result<StiffnessMatrix> {
    let mass = mesh.weighted_mass(odf);
    if (mass - 1.0).abs() > 1e-6 {
        return Err(Error::InvalidArgument(format!(
            "ODF is not normalized (q . a = {mass})"
        )));
    }
    let mut acc = Matrix6::zeros();
    for e in 0..mesh.elements().len() {
        let det = mesh.jacobian(e);
        for qp in mesh.quad_points(e) {
            let rot = rotation_from_rodrigues(&qp.position)?;
            let c = rotate_stiffness(c0, &rot)?;
            let factor =
                mesh.interpolate(odf, e, qp) * qp.weight * det * metric_factor(&qp.position);
            acc += c.c * factor;
        }
    }
    Ok(StiffnessMatrix { c: acc })
}

/// Composite stiffness objective: weighted sum of diagonal entries plus the
/// off-diagonal upper triangle, each symmetric pair counted once.
pub fn objective(c: &StiffnessMatrix, w: &ObjectiveWeights) -> f64 {
    let mut f = 0.0;
    for i in 0..6 {
        f += w.w_diag[i] * c.c[(i, i)];
    }
    for i in 0..6 {
        for j in (i + 1)..6 {
            f += w.w_offdiag * c.c[(i, j)];
        }
    }
    f
}

/// Property matrix `P` (independent nodes x 21) together with the node
/// weights of the mesh it was assembled on.
#[derive(Clone, Debug)]
pub struct PropertyMatrix {
    values: DMatrix<f64>,
    node_weights: DVector<f64>,
}

impl PropertyMatrix {
    pub fn new(values: DMatrix<f64>, node_weights: DVector<f64>) -> Self {
        Self {
            values,
            node_weights,
        }
    }

    pub fn node_count(&self) -> usize {
        self.values.nrows()
    }

    pub fn node_weights(&self) -> &DVector<f64> {
        &self.node_weights
    }

    pub fn row(&self, node: usize) -> [f64; 21] {
        let mut out = [0.0; 21];
        for k in 0..21 {
            out[k] = self.values[(node, k)];
        }
        out
    }

    /// `<C> = P^T a`.
    pub fn homogenized(&self, odf: &Odf) -> StiffnessMatrix {
        let a = odf.as_vector();
        let compressed = self.values.transpose() * a;
        StiffnessMatrix::from_upper_triangle_21(compressed.as_slice())
    }

    /// Fold the objective weights through `P`, producing the row vector `W`
    /// with `F(<C>) = W . a`.
    pub fn objective_row(&self, w: &ObjectiveWeights) -> DVector<f64> {
        let wt = w.upper_triangle_weights();
        let wt = DVector::from_column_slice(&wt);
        &self.values * wt
    }
}

/// Maximize the linear objective over the ODF simplex `{a >= 0, q . a = 1}`.
///
/// The optimum of a linear functional over a simplex sits at a vertex, i.e.
/// all volume fraction on a single node with `a_i = 1 / q_i`. Returns the
/// argmax node (independent-slot index, ties broken toward the lowest) and
/// the objective value; this is the structure-property-only upper bound.
pub fn single_crystal_bound(p: &PropertyMatrix, w: &ObjectiveWeights) -> (usize, f64) {
    let row = p.objective_row(w);
    let q = p.node_weights();
    let mut best = (0usize, f64::NEG_INFINITY);
    for i in 0..p.node_count() {
        let value = row[i] / q[i];
        if value > best.1 {
            best = (i, value);
        }
    }
    best
}
