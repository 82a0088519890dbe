//! Tetrahedral discretization of the Rodrigues fundamental region.
//!
//! The FCC fundamental region is approximated as the cube of half-width
//! `tan(pi/8)` centered at the origin. A structured grid splits the cube into
//! `subdivision^3` cells and each cell into six tetrahedra with the Kuhn
//! (Freudenthal) decomposition, which is conformal across cells and
//! deterministic. Grid nodes related by one of the 24 proper cubic rotations
//! (composed on the orientation, within 1e-9) are identified: the node with
//! the larger index becomes dependent on the smaller one and the ODF stores
//! values only for independent nodes.
//!
//! All volume integrals carry the orientation-space metric factor
//! `1/(1+r.r)^2`, evaluated with a 4-point degree-2 quadrature rule per
//! tetrahedron.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::homogenization::{rotate_stiffness, PropertyMatrix, StiffnessMatrix};
use crate::orientation::{
    metric_factor, rodrigues_from_rotation, rotation_from_rodrigues, RodriguesVector,
    FUNDAMENTAL_HALF_WIDTH,
};

/// Tolerance for matching symmetry-equivalent grid nodes.
const SYMMETRY_TOL: f64 = 1e-9;

/// One quadrature point of a tetrahedral element.
#[derive(Clone, Copy, Debug)]
pub struct QuadPoint {
    /// Global Rodrigues coordinates of the point.
    pub position: RodriguesVector,
    /// Quadrature weight (so that `sum_m weight * |J|` is the element volume).
    pub weight: f64,
    /// Linear shape-function values of the element's four nodes at the point.
    pub shape: [f64; 4],
}

/// Independent nodal ODF values over the fundamental-region mesh.
///
/// `values[k]` belongs to `mesh.independent_ids()[k]`; dependent nodes mirror
/// their representative.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Odf {
    pub values: Vec<f64>,
}

impl Odf {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn as_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.values)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Serialized form of the mesh; quadrature data is rebuilt on load.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeshFile {
    pub subdivision: u32,
    pub symmetry_tag: String,
    pub nodes: Vec<[f64; 3]>,
    pub elements: Vec<[usize; 4]>,
    pub independent_ids: Vec<usize>,
    pub dependent_map: BTreeMap<usize, usize>,
    pub node_weights: Vec<f64>,
}

/// Tetrahedral mesh of the fundamental region with quadrature data, the
/// independent/dependent node split, and per-node integration weights.
#[derive(Clone, Debug)]
pub struct FundamentalMesh {
    subdivision: u32,
    symmetry_tag: String,
    nodes: Vec<RodriguesVector>,
    elements: Vec<[usize; 4]>,
    independent_ids: Vec<usize>,
    dependent_map: BTreeMap<usize, usize>,
    /// Global node index -> slot in the independent value vector.
    value_slot: Vec<usize>,
    /// Integration weight per independent node (metric-weighted volume).
    node_weights: Vec<f64>,
    // Derived quadrature data.
    quad_points: Vec<[QuadPoint; 4]>,
    jacobians: Vec<f64>,
    elem_volumes: Vec<f64>,
    /// Constant shape-function gradients per element.
    shape_grads: Vec<[Vector3<f64>; 4]>,
    /// Sum of adjacent element volumes per global node (gradient recovery).
    patch_volumes: Vec<f64>,
}

/// Build the structured fundamental-region mesh.
///
/// `subdivision` is the number of grid cells per axis; the resulting mesh has
/// `(subdivision + 1)^3` grid nodes before symmetry identification and
/// `6 * subdivision^3` tetrahedra.
pub fn build_mesh(subdivision: u32) -> Result<FundamentalMesh> {
    if subdivision == 0 {
        return Err(Error::InvalidArgument(
            "mesh subdivision must be at least 1".into(),
        ));
    }
    let s = subdivision as usize;
    let n1 = s + 1;
    let h = FUNDAMENTAL_HALF_WIDTH;

    let coord = |i: usize| -> f64 { -h + 2.0 * h * (i as f64) / (s as f64) };
    let node_id = |ix: usize, iy: usize, iz: usize| -> usize { ix + n1 * (iy + n1 * iz) };

    let mut nodes = Vec::with_capacity(n1 * n1 * n1);
    for iz in 0..n1 {
        for iy in 0..n1 {
            for ix in 0..n1 {
                nodes.push(RodriguesVector::new(coord(ix), coord(iy), coord(iz)));
            }
        }
    }

    // Kuhn decomposition: walk from the cell's min corner to its max corner
    // adding one axis at a time; the six axis orders give six tetrahedra that
    // all share the cell's main diagonal.
    const AXIS_ORDERS: [[usize; 3]; 6] = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    let mut elements = Vec::with_capacity(6 * s * s * s);
    for cz in 0..s {
        for cy in 0..s {
            for cx in 0..s {
                for order in AXIS_ORDERS {
                    let mut corner = [cx, cy, cz];
                    let v0 = node_id(corner[0], corner[1], corner[2]);
                    corner[order[0]] += 1;
                    let v1 = node_id(corner[0], corner[1], corner[2]);
                    corner[order[1]] += 1;
                    let v2 = node_id(corner[0], corner[1], corner[2]);
                    let v3 = node_id(cx + 1, cy + 1, cz + 1);
                    let mut tet = [v0, v1, v2, v3];
                    if tet_jacobian(&nodes, &tet).determinant() < 0.0 {
                        tet.swap(2, 3);
                    }
                    elements.push(tet);
                }
            }
        }
    }

    let (independent_ids, dependent_map) = identify_symmetric_nodes(&nodes)?;
    let mut mesh = FundamentalMesh {
        subdivision,
        symmetry_tag: "FCC-cubic".into(),
        nodes,
        elements,
        independent_ids,
        dependent_map,
        value_slot: Vec::new(),
        node_weights: Vec::new(),
        quad_points: Vec::new(),
        jacobians: Vec::new(),
        elem_volumes: Vec::new(),
        shape_grads: Vec::new(),
        patch_volumes: Vec::new(),
    };
    mesh.rebuild_derived()?;
    mesh.node_weights = mesh.compute_node_weights();
    Ok(mesh)
}

fn tet_jacobian(nodes: &[RodriguesVector], tet: &[usize; 4]) -> Matrix3<f64> {
    let p0 = nodes[tet[0]].0;
    Matrix3::from_columns(&[
        nodes[tet[1]].0 - p0,
        nodes[tet[2]].0 - p0,
        nodes[tet[3]].0 - p0,
    ])
}

/// The 24 proper rotations of the cubic point group, as matrices: signed
/// permutation matrices with determinant +1, in a fixed deterministic order.
pub fn cubic_rotations() -> Vec<Matrix3<f64>> {
    let mut out = Vec::with_capacity(24);
    let perms = [
        [0, 1, 2],
        [0, 2, 1],
        [1, 0, 2],
        [1, 2, 0],
        [2, 0, 1],
        [2, 1, 0],
    ];
    for perm in perms {
        for signs in 0..8u8 {
            let mut m = Matrix3::<f64>::zeros();
            for (row, &col) in perm.iter().enumerate() {
                let sign = if signs >> row & 1 == 1 { -1.0 } else { 1.0 };
                m[(row, col)] = sign;
            }
            if (m.determinant() - 1.0).abs() < 1e-12 {
                out.push(m);
            }
        }
    }
    debug_assert_eq!(out.len(), 24);
    out
}

/// Find grid nodes related by crystal symmetry (`R' = R Q` for a cubic
/// rotation `Q`) and map the higher-indexed node of each class onto its
/// lowest-indexed representative.
fn identify_symmetric_nodes(
    nodes: &[RodriguesVector],
) -> Result<(Vec<usize>, BTreeMap<usize, usize>)> {
    let symmetry = cubic_rotations();
    let n = nodes.len();
    let mut parent: Vec<usize> = (0..n).collect();

    fn find(parent: &mut Vec<usize>, mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }

    for (j, node) in nodes.iter().enumerate() {
        let rot = rotation_from_rodrigues(node)?;
        for q in &symmetry {
            let image = match rodrigues_from_rotation(&(rot * q)) {
                Some(r) => r,
                // A 180-degree image cannot coincide with a grid node.
                None => continue,
            };
            if !image.in_fundamental_cube(SYMMETRY_TOL) {
                continue;
            }
            for (i, other) in nodes.iter().enumerate() {
                if i != j && (other.0 - image.0).norm() <= SYMMETRY_TOL {
                    let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                    if a != b {
                        let (lo, hi) = (a.min(b), a.max(b));
                        parent[hi] = lo;
                    }
                    break;
                }
            }
        }
    }

    let mut independent = Vec::new();
    let mut dependent = BTreeMap::new();
    for i in 0..n {
        let rep = find(&mut parent, i);
        if rep == i {
            independent.push(i);
        } else {
            dependent.insert(i, rep);
        }
    }
    Ok((independent, dependent))
}

impl FundamentalMesh {
    /// Rebuild quadrature data, shape gradients, and index maps from the
    /// node/element/identification lists.
    fn rebuild_derived(&mut self) -> Result<()> {
        // 4-point degree-2 rule on the reference tetrahedron.
        let a = (5.0 + 3.0 * 5.0_f64.sqrt()) / 20.0;
        let b = (5.0 - 5.0_f64.sqrt()) / 20.0;
        let bary: [[f64; 4]; 4] = [
            [a, b, b, b],
            [b, a, b, b],
            [b, b, a, b],
            [b, b, b, a],
        ];
        let point_weight = 1.0 / 24.0;

        let n_nodes = self.nodes.len();
        self.quad_points = Vec::with_capacity(self.elements.len());
        self.jacobians = Vec::with_capacity(self.elements.len());
        self.elem_volumes = Vec::with_capacity(self.elements.len());
        self.shape_grads = Vec::with_capacity(self.elements.len());
        self.patch_volumes = vec![0.0; n_nodes];

        for tet in &self.elements {
            let jac = tet_jacobian(&self.nodes, tet);
            let det = jac.determinant();
            if det <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "element {tet:?} has non-positive Jacobian determinant {det}"
                )));
            }
            let volume = det / 6.0;
            let inv_t = jac
                .try_inverse()
                .ok_or_else(|| Error::InvalidArgument("singular element Jacobian".into()))?
                .transpose();
            // Gradients of the barycentric shape functions: columns of J^-T
            // for nodes 1..3, and minus their sum for node 0.
            let g1 = inv_t.column(0).into_owned();
            let g2 = inv_t.column(1).into_owned();
            let g3 = inv_t.column(2).into_owned();
            let g0 = -(g1 + g2 + g3);
            self.shape_grads.push([g0, g1, g2, g3]);

            let mut points = [QuadPoint {
                position: RodriguesVector::zero(),
                weight: point_weight,
                shape: [0.0; 4],
            }; 4];
            for (m, lambda) in bary.iter().enumerate() {
                let mut pos = Vector3::zeros();
                for (l, &w) in lambda.iter().enumerate() {
                    pos += w * self.nodes[tet[l]].0;
                }
                points[m] = QuadPoint {
                    position: RodriguesVector(pos),
                    weight: point_weight,
                    shape: *lambda,
                };
            }
            self.quad_points.push(points);
            self.jacobians.push(det);
            self.elem_volumes.push(volume);
            for &node in tet {
                self.patch_volumes[node] += volume;
            }
        }

        self.value_slot = vec![usize::MAX; n_nodes];
        for (slot, &id) in self.independent_ids.iter().enumerate() {
            self.value_slot[id] = slot;
        }
        for (&dep, &rep) in &self.dependent_map {
            let slot = self.value_slot[rep];
            if slot == usize::MAX {
                return Err(Error::InvalidArgument(format!(
                    "dependent node {dep} maps to non-independent node {rep}"
                )));
            }
            self.value_slot[dep] = slot;
        }
        if self.value_slot.iter().any(|&s| s == usize::MAX) {
            return Err(Error::InvalidArgument(
                "node is neither independent nor dependent".into(),
            ));
        }
        Ok(())
    }

    /// Integration weight of each independent node: quadrature of its (folded)
    /// linear shape function times the metric factor.
    fn compute_node_weights(&self) -> Vec<f64> {
        let mut q = vec![0.0; self.independent_ids.len()];
        for (e, tet) in self.elements.iter().enumerate() {
            let det = self.jacobians[e];
            for qp in &self.quad_points[e] {
                let common = qp.weight * det * metric_factor(&qp.position);
                for (l, &node) in tet.iter().enumerate() {
                    q[self.value_slot[node]] += qp.shape[l] * common;
                }
            }
        }
        q
    }

    pub fn subdivision(&self) -> u32 {
        self.subdivision
    }

    pub fn symmetry_tag(&self) -> &str {
        &self.symmetry_tag
    }

    pub fn nodes(&self) -> &[RodriguesVector] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    pub fn independent_ids(&self) -> &[usize] {
        &self.independent_ids
    }

    pub fn dependent_map(&self) -> &BTreeMap<usize, usize> {
        &self.dependent_map
    }

    /// Number of independent nodes (the ODF dimension).
    pub fn independent_count(&self) -> usize {
        self.independent_ids.len()
    }

    /// Integration weights `q` over independent nodes.
    pub fn node_weights(&self) -> &[f64] {
        &self.node_weights
    }

    pub fn node_weights_vector(&self) -> DVector<f64> {
        DVector::from_column_slice(&self.node_weights)
    }

    /// Slot of a global node index in the independent value vector.
    pub fn value_slot(&self, node: usize) -> usize {
        self.value_slot[node]
    }

    pub fn quad_points(&self, element: usize) -> &[QuadPoint; 4] {
        &self.quad_points[element]
    }

    pub fn jacobian(&self, element: usize) -> f64 {
        self.jacobians[element]
    }

    pub fn element_volume(&self, element: usize) -> f64 {
        self.elem_volumes[element]
    }

    pub fn shape_gradients(&self, element: usize) -> &[Vector3<f64>; 4] {
        &self.shape_grads[element]
    }

    pub fn patch_volume(&self, node: usize) -> f64 {
        self.patch_volumes[node]
    }

    /// ODF value at a quadrature point by linear interpolation.
    pub fn interpolate(&self, odf: &Odf, element: usize, qp: &QuadPoint) -> f64 {
        let tet = &self.elements[element];
        let mut v = 0.0;
        for (l, &node) in tet.iter().enumerate() {
            v += qp.shape[l] * odf.values[self.value_slot[node]];
        }
        v
    }

    /// `q . a`, the metric-weighted volume integral of the ODF.
    pub fn weighted_mass(&self, odf: &Odf) -> f64 {
        self.node_weights
            .iter()
            .zip(&odf.values)
            .map(|(q, a)| q * a)
            .sum()
    }

    /// The uniform normalized ODF, `a_i = 1 / sum(q)`.
    pub fn uniform_odf(&self) -> Odf {
        let total: f64 = self.node_weights.iter().sum();
        Odf {
            values: vec![1.0 / total; self.independent_count()],
        }
    }

    pub fn to_file(&self) -> MeshFile {
        MeshFile {
            subdivision: self.subdivision,
            symmetry_tag: self.symmetry_tag.clone(),
            nodes: self.nodes.iter().map(|&n| n.into()).collect(),
            elements: self.elements.clone(),
            independent_ids: self.independent_ids.clone(),
            dependent_map: self.dependent_map.clone(),
            node_weights: self.node_weights.clone(),
        }
    }

    pub fn from_file(file: MeshFile) -> Result<Self> {
        let mut mesh = FundamentalMesh {
            subdivision: file.subdivision,
            symmetry_tag: file.symmetry_tag,
            nodes: file.nodes.into_iter().map(RodriguesVector::from).collect(),
            elements: file.elements,
            independent_ids: file.independent_ids,
            dependent_map: file.dependent_map,
            value_slot: Vec::new(),
            node_weights: file.node_weights,
            quad_points: Vec::new(),
            jacobians: Vec::new(),
            elem_volumes: Vec::new(),
            shape_grads: Vec::new(),
            patch_volumes: Vec::new(),
        };
        for node in &mesh.nodes {
            if !node.is_finite() || !node.in_fundamental_cube(1e-12) {
                return Err(Error::InvalidArgument(
                    "mesh node outside the fundamental-region cube".into(),
                ));
            }
        }
        mesh.rebuild_derived()?;
        let recomputed = mesh.compute_node_weights();
        if mesh.node_weights.len() != recomputed.len()
            || mesh
                .node_weights
                .iter()
                .zip(&recomputed)
                .any(|(a, b)| (a - b).abs() > 1e-10)
        {
            return Err(Error::InvalidArgument(
                "stored node weights disagree with the mesh geometry".into(),
            ));
        }
        Ok(mesh)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let bytes = serde_json::to_vec_pretty(&self.to_file())?;
        std::fs::write(path, bytes)?;
        Ok(())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path)?;
        let file: MeshFile = serde_json::from_slice(&bytes)?;
        Self::from_file(file)
    }

    /// SHA-256 of the serialized mesh, used for dataset provenance.
    pub fn content_hash(&self) -> String {
        crate::dataset::sha256_hex(&serde_json::to_vec(&self.to_file()).expect("mesh serializes"))
    }
}

/// Scale an ODF so that `q . a = 1`.
pub fn normalize_odf(mesh: &FundamentalMesh, odf: &Odf) -> Result<Odf> {
    if odf.len() != mesh.independent_count() {
        return Err(Error::InvalidArgument(format!(
            "ODF length {} does not match mesh independent count {}",
            odf.len(),
            mesh.independent_count()
        )));
    }
    if odf.values.iter().any(|&v| v < 0.0) {
        return Err(Error::InvalidArgument(
            "ODF has negative entries; clip before normalizing".into(),
        ));
    }
    let mass = mesh.weighted_mass(odf);
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::DegenerateOdf(format!(
            "weighted mass {mass} is not positive"
        )));
    }
    Ok(Odf {
        values: odf.values.iter().map(|v| v / mass).collect(),
    })
}

/// Normalization without the sign precondition, for the simulator's
/// diagnostic `clip_negative = false` mode.
pub(crate) fn normalize_allow_negative(mesh: &FundamentalMesh, odf: &Odf) -> Result<Odf> {
    let mass = mesh.weighted_mass(odf);
    if !(mass > 0.0) || !mass.is_finite() {
        return Err(Error::DegenerateOdf(format!(
            "weighted mass {mass} is not positive"
        )));
    }
    Ok(Odf {
        values: odf.values.iter().map(|v| v / mass).collect(),
    })
}

/// Assemble the property matrix `P` (independent nodes x 21) such that
/// `P^T a` reproduces the 21 independent entries of the homogenized
/// stiffness for every ODF `a`.
pub fn assemble_property_matrix(
    mesh: &FundamentalMesh,
    c0: &StiffnessMatrix,
) -> Result<PropertyMatrix> {
    c0.require_physical()?;
    let n = mesh.independent_count();
    let mut p = DMatrix::zeros(n, 21);
    for (e, tet) in mesh.elements.iter().enumerate() {
        let det = mesh.jacobians[e];
        for qp in &mesh.quad_points[e] {
            let rot = rotation_from_rodrigues(&qp.position)?;
            let c = rotate_stiffness(c0, &rot)?;
            let entries = c.upper_triangle_21();
            let common = qp.weight * det * metric_factor(&qp.position);
            for (l, &node) in tet.iter().enumerate() {
                let slot = mesh.value_slot[node];
                let factor = qp.shape[l] * common;
                for (k, &ck) in entries.iter().enumerate() {
                    p[(slot, k)] += factor * ck;
                }
            }
        }
    }
    Ok(PropertyMatrix::new(p, mesh.node_weights_vector()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::Rng;
    use rand_chacha::rand_core::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_odf(mesh: &FundamentalMesh, seed: u64) -> Odf {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let raw = Odf {
            values: (0..mesh.independent_count())
                .map(|_| rng.gen_range(0.0..1.0))
                .collect(),
        };
        normalize_odf(mesh, &raw).unwrap()
    }

    #[test]
    fn zero_subdivision_rejected() {
        assert!(matches!(build_mesh(0), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn smallest_mesh_shape() {
        let mesh = build_mesh(1).unwrap();
        assert_eq!(mesh.nodes().len(), 8);
        assert_eq!(mesh.elements().len(), 6);
        assert!(mesh.node_weights().iter().all(|&q| q > 0.0));
        for e in 0..mesh.elements().len() {
            assert!(mesh.jacobian(e) > 0.0);
        }
        // The Kuhn split is symmetric under axis permutation and central
        // inversion but singles out the main diagonal, so the two diagonal
        // corners share one weight and the other six another.
        let q = mesh.node_weights();
        assert_relative_eq!(q[0], q[7], epsilon = 1e-12);
        for &k in &[1, 2, 3, 4, 5, 6] {
            assert_relative_eq!(q[k], q[1], epsilon = 1e-12);
        }
        assert!(q[0] > q[1]);
    }

    #[test]
    fn default_mesh_independent_count_brackets_target() {
        let mesh = build_mesh(3).unwrap();
        let count = mesh.independent_count();
        assert!(
            (50..=100).contains(&count),
            "independent count {count} outside [50, 100]"
        );
    }

    #[test]
    fn even_subdivision_identifies_face_centers() {
        let mesh = build_mesh(2).unwrap();
        assert!(!mesh.dependent_map().is_empty());
        for (&dep, &rep) in mesh.dependent_map() {
            assert!(mesh.independent_ids().contains(&rep));
            assert!(!mesh.independent_ids().contains(&dep));
            // Identified pairs sit on opposite boundary faces.
            let d = mesh.nodes()[dep].0;
            let r = mesh.nodes()[rep].0;
            assert_relative_eq!(d.norm(), r.norm(), epsilon = 1e-9);
        }
        // Every identified pair's weights were folded onto the representative,
        // so each representative weight is twice the equivalent interior-style
        // share; spot-check positivity and totals instead of exact shares.
        assert!(mesh.node_weights().iter().all(|&q| q > 0.0));
    }

    /// Monte-Carlo oracle for the metric-weighted volume of the cube.
    #[test]
    fn node_weights_sum_to_metric_volume() {
        let mesh = build_mesh(2).unwrap();
        let total: f64 = mesh.node_weights().iter().sum();

        let h = FUNDAMENTAL_HALF_WIDTH;
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let samples = 1_000_000;
        let mut acc = 0.0;
        for _ in 0..samples {
            let r = RodriguesVector::new(
                rng.gen_range(-h..h),
                rng.gen_range(-h..h),
                rng.gen_range(-h..h),
            );
            acc += metric_factor(&r);
        }
        let cube_volume = (2.0 * h).powi(3);
        let mc = acc / samples as f64 * cube_volume;
        assert!(
            (total - mc).abs() / mc < 1e-3,
            "quadrature volume {total} vs Monte-Carlo {mc}"
        );
    }

    #[test]
    fn uniform_odf_has_unit_mass() {
        for s in [1, 2, 3] {
            let mesh = build_mesh(s).unwrap();
            assert_relative_eq!(mesh.weighted_mass(&mesh.uniform_odf()), 1.0, epsilon = 1e-12);
        }
    }

    /// Direct-quadrature oracle: `q . a` must equal the element-by-element
    /// quadrature of the interpolated ODF.
    #[test]
    fn node_weights_match_direct_quadrature() {
        let mesh = build_mesh(3).unwrap();
        let odf = random_odf(&mesh, 7);
        let via_q = mesh.weighted_mass(&odf);
        let mut via_quadrature = 0.0;
        for e in 0..mesh.elements().len() {
            let det = mesh.jacobian(e);
            for qp in mesh.quad_points(e) {
                via_quadrature +=
                    mesh.interpolate(&odf, e, qp) * qp.weight * det * metric_factor(&qp.position);
            }
        }
        assert!((via_q - via_quadrature).abs() < 1e-10);
    }

    #[test]
    fn normalize_is_idempotent() {
        let mesh = build_mesh(2).unwrap();
        let odf = random_odf(&mesh, 3);
        let again = normalize_odf(&mesh, &odf).unwrap();
        for (a, b) in odf.values.iter().zip(&again.values) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn normalize_all_ones() {
        let mesh = build_mesh(2).unwrap();
        let ones = Odf {
            values: vec![1.0; mesh.independent_count()],
        };
        let normalized = normalize_odf(&mesh, &ones).unwrap();
        let total: f64 = mesh.node_weights().iter().sum();
        for v in &normalized.values {
            assert_relative_eq!(*v, 1.0 / total, epsilon = 1e-12);
        }
    }

    #[test]
    fn normalize_rejects_negative_entries() {
        let mesh = build_mesh(1).unwrap();
        let mut values = vec![1.0; mesh.independent_count()];
        values[2] = -0.5;
        assert!(matches!(
            normalize_odf(&mesh, &Odf { values }),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn normalize_rejects_zero_mass() {
        let mesh = build_mesh(1).unwrap();
        let zeros = Odf {
            values: vec![0.0; mesh.independent_count()],
        };
        assert!(matches!(
            normalize_odf(&mesh, &zeros),
            Err(Error::DegenerateOdf(_))
        ));
    }

    #[test]
    fn mesh_construction_is_deterministic() {
        let a = build_mesh(3).unwrap();
        let b = build_mesh(3).unwrap();
        assert_eq!(
            serde_json::to_vec(&a.to_file()).unwrap(),
            serde_json::to_vec(&b.to_file()).unwrap()
        );
    }

    #[test]
    fn json_roundtrip_is_lossless() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("mesh.json");
        let mesh = build_mesh(2).unwrap();
        mesh.write_json(&path).unwrap();
        let back = FundamentalMesh::read_json(&path).unwrap();
        assert_eq!(
            serde_json::to_vec(&mesh.to_file()).unwrap(),
            serde_json::to_vec(&back.to_file()).unwrap()
        );
    }

    #[test]
    fn cubic_rotation_group_is_closed() {
        let rots = cubic_rotations();
        assert_eq!(rots.len(), 24);
        for a in &rots {
            assert_relative_eq!(a.determinant(), 1.0, epsilon = 1e-12);
            let product = rots.iter().filter(|b| {
                rots.iter()
                    .any(|c| (*a * **b - c).norm() < 1e-12)
            });
            assert_eq!(product.count(), 24);
        }
    }
}
