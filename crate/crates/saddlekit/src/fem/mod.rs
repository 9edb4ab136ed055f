//! Continuous P1/P2 finite element spaces (scalar and 3-vector) on box
//! meshes, and assembly of the mass, stiffness, symmetric-gradient,
//! divergence, and load forms the model problems are built from.
//!
//! Every assembled operator carries the physical dimension of its integral
//! under the convention that basis functions are dimensionless: volume
//! integrals contribute length^3 and each spatial derivative divides by one
//! length. Coefficients multiply in their own dimensions.

pub mod quadrature;

use crate::linalg::{CooBuilder, CsrMatrix};
use crate::mesh::{BoxMesh, MeshError};
use crate::units::{Dimension, Quantity};
use quadrature::{TET_DEGREE2, TET_DEGREE5, TRI_DEGREE4};
use std::collections::{BTreeMap, HashMap};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FemError {
    #[error("this form requires a 3-component vector space")]
    NeedsVectorSpace,
    #[error("this form requires a scalar space")]
    NeedsScalarSpace,
    #[error("trial and test spaces live on different meshes")]
    MeshMismatch,
    #[error(transparent)]
    Mesh(#[from] MeshError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    P1,
    P2,
}

/// Local edge ordering of a tetrahedron; P2 cell nodes append the edge nodes
/// after the four vertex nodes in this order.
const LOCAL_EDGES: [(usize, usize); 6] = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];

/// A nodal finite element space with interleaved vector components
/// (`dof = components * node + component`).
pub struct FeSpace {
    mesh: Arc<BoxMesh>,
    family: Family,
    components: usize,
    node_coords: Vec<[f64; 3]>,
    cell_nodes: Vec<usize>,
    edge_lookup: HashMap<(usize, usize), usize>,
    dirichlet: BTreeMap<usize, f64>,
    unit: Dimension,
}

impl FeSpace {
    pub fn new(mesh: Arc<BoxMesh>, family: Family, components: usize, unit: Dimension) -> FeSpace {
        assert!(components == 1 || components == 3);
        let n_vertices = mesh.vertices().len();
        let mut node_coords: Vec<[f64; 3]> = mesh.vertices().to_vec();
        let mut edge_lookup = HashMap::new();
        let stride = match family {
            Family::P1 => 4,
            Family::P2 => 10,
        };
        let mut cell_nodes = Vec::with_capacity(stride * mesh.tets().len());
        for tet in mesh.tets() {
            cell_nodes.extend_from_slice(tet);
            if family == Family::P2 {
                for (a, b) in LOCAL_EDGES {
                    let key = ordered_pair(tet[a], tet[b]);
                    let next_id = n_vertices + edge_lookup.len();
                    let id = *edge_lookup.entry(key).or_insert(next_id);
                    if id == node_coords.len() {
                        let pa = mesh.vertices()[key.0];
                        let pb = mesh.vertices()[key.1];
                        node_coords.push([
                            0.5 * (pa[0] + pb[0]),
                            0.5 * (pa[1] + pb[1]),
                            0.5 * (pa[2] + pb[2]),
                        ]);
                    }
                    cell_nodes.push(id);
                }
            }
        }
        FeSpace {
            mesh,
            family,
            components,
            node_coords,
            cell_nodes,
            edge_lookup,
            dirichlet: BTreeMap::new(),
            unit,
        }
    }

    pub fn mesh(&self) -> &BoxMesh {
        &self.mesh
    }

    pub fn mesh_arc(&self) -> Arc<BoxMesh> {
        Arc::clone(&self.mesh)
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn components(&self) -> usize {
        self.components
    }

    pub fn unit(&self) -> Dimension {
        self.unit
    }

    pub fn n_scalar_nodes(&self) -> usize {
        self.node_coords.len()
    }

    /// Full space dimension, counting constrained degrees of freedom too.
    pub fn dim(&self) -> usize {
        self.components * self.node_coords.len()
    }

    pub fn nodes_per_cell(&self) -> usize {
        match self.family {
            Family::P1 => 4,
            Family::P2 => 10,
        }
    }

    pub fn node_coord(&self, node: usize) -> [f64; 3] {
        self.node_coords[node]
    }

    pub fn cell_node_ids(&self, cell: usize) -> &[usize] {
        let s = self.nodes_per_cell();
        &self.cell_nodes[cell * s..(cell + 1) * s]
    }

    /// Nodes of the trace on a boundary facet: the three vertices followed by
    /// (for P2) the three edge nodes in local-edge order (0,1), (0,2), (1,2).
    fn facet_nodes(&self, tri: [usize; 3]) -> Vec<usize> {
        let mut nodes = tri.to_vec();
        if self.family == Family::P2 {
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                let key = ordered_pair(tri[a], tri[b]);
                nodes.push(self.edge_lookup[&key]);
            }
        }
        nodes
    }

    /// Pins the dofs on every facet tagged `tag` to the per-component values
    /// of `g` at the node coordinates. Nodes constrained earlier keep their
    /// first value.
    pub fn add_dirichlet(
        &mut self,
        tag: &str,
        g: impl Fn([f64; 3]) -> [f64; 3],
    ) -> Result<(), FemError> {
        let tag_idx = self.mesh.tag_index(tag)?;
        let facets: Vec<[usize; 3]> = self
            .mesh
            .boundary_facets()
            .iter()
            .filter(|f| f.tag == tag_idx)
            .map(|f| f.vertices)
            .collect();
        for tri in facets {
            for node in self.facet_nodes(tri) {
                let vals = g(self.node_coords[node]);
                for c in 0..self.components {
                    self.dirichlet.entry(self.components * node + c).or_insert(vals[c]);
                }
            }
        }
        Ok(())
    }

    pub fn dirichlet_dofs(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.dirichlet.iter().map(|(&d, &v)| (d, v))
    }

    pub fn partition(&self) -> DofPartition {
        let n_dofs = self.dim();
        let mut constrained = Vec::with_capacity(self.dirichlet.len());
        let mut values = Vec::with_capacity(self.dirichlet.len());
        for (&d, &v) in &self.dirichlet {
            constrained.push(d);
            values.push(v);
        }
        let mut is_constrained = vec![false; n_dofs];
        for &d in &constrained {
            is_constrained[d] = true;
        }
        let free = (0..n_dofs).filter(|&d| !is_constrained[d]).collect();
        DofPartition { n_dofs, free, constrained, values }
    }

    /// Nodal interpolant of `f`, over all dofs including constrained ones.
    pub fn interpolate(&self, f: impl Fn([f64; 3]) -> [f64; 3]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim()];
        for (n, &coord) in self.node_coords.iter().enumerate() {
            let vals = f(coord);
            for c in 0..self.components {
                out[self.components * n + c] = vals[c];
            }
        }
        out
    }

    /// Scalar space with the same mesh, family, and constrained node set
    /// (homogeneous values). Component-decoupled operators factorize through
    /// this twin.
    pub fn scalar_twin(&self) -> FeSpace {
        let mut twin = FeSpace {
            mesh: Arc::clone(&self.mesh),
            family: self.family,
            components: 1,
            node_coords: self.node_coords.clone(),
            cell_nodes: self.cell_nodes.clone(),
            edge_lookup: self.edge_lookup.clone(),
            dirichlet: BTreeMap::new(),
            unit: self.unit,
        };
        for &dof in self.dirichlet.keys() {
            twin.dirichlet.insert(dof / self.components, 0.0);
        }
        twin
    }
}

fn ordered_pair(a: usize, b: usize) -> (usize, usize) {
    if a < b {
        (a, b)
    } else {
        (b, a)
    }
}

/// Free/constrained split of a space's dofs, with prescribed values.
#[derive(Debug, Clone)]
pub struct DofPartition {
    pub n_dofs: usize,
    pub free: Vec<usize>,
    pub constrained: Vec<usize>,
    pub values: Vec<f64>,
}

impl DofPartition {
    pub fn n_free(&self) -> usize {
        self.free.len()
    }

    /// Full-length vector carrying the prescribed values on constrained dofs.
    pub fn lift_vector(&self) -> Vec<f64> {
        let mut g = vec![0.0; self.n_dofs];
        for (&d, &v) in self.constrained.iter().zip(&self.values) {
            g[d] = v;
        }
        g
    }

    /// Embeds free-dof values into a full vector, filling in the lift.
    pub fn expand(&self, free_vals: &[f64]) -> Vec<f64> {
        assert_eq!(free_vals.len(), self.free.len());
        let mut full = self.lift_vector();
        for (&d, &v) in self.free.iter().zip(free_vals) {
            full[d] = v;
        }
        full
    }

    pub fn restrict(&self, full: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&d| full[d]).collect()
    }
}

struct CellGeometry {
    /// Gradients of the four barycentric coordinates.
    grads: [[f64; 3]; 4],
    volume: f64,
}

fn cell_geometry(mesh: &BoxMesh, cell: usize) -> CellGeometry {
    let tet = mesh.tets()[cell];
    let v0 = mesh.vertices()[tet[0]];
    let mut j = [[0.0f64; 3]; 3];
    for (col, &vi) in tet[1..].iter().enumerate() {
        let v = mesh.vertices()[vi];
        for (row, jr) in j.iter_mut().enumerate() {
            jr[col] = v[row] - v0[row];
        }
    }
    let det = j[0][0] * (j[1][1] * j[2][2] - j[1][2] * j[2][1])
        - j[0][1] * (j[1][0] * j[2][2] - j[1][2] * j[2][0])
        + j[0][2] * (j[1][0] * j[2][1] - j[1][1] * j[2][0]);
    let inv = [
        [
            (j[1][1] * j[2][2] - j[1][2] * j[2][1]) / det,
            (j[0][2] * j[2][1] - j[0][1] * j[2][2]) / det,
            (j[0][1] * j[1][2] - j[0][2] * j[1][1]) / det,
        ],
        [
            (j[1][2] * j[2][0] - j[1][0] * j[2][2]) / det,
            (j[0][0] * j[2][2] - j[0][2] * j[2][0]) / det,
            (j[0][2] * j[1][0] - j[0][0] * j[1][2]) / det,
        ],
        [
            (j[1][0] * j[2][1] - j[1][1] * j[2][0]) / det,
            (j[0][1] * j[2][0] - j[0][0] * j[2][1]) / det,
            (j[0][0] * j[1][1] - j[0][1] * j[1][0]) / det,
        ],
    ];
    // grad lambda_i = row i of J^{-1} for i = 1..3; lambda_0 closes the sum.
    let g1 = inv[0];
    let g2 = inv[1];
    let g3 = inv[2];
    let g0 = [-g1[0] - g2[0] - g3[0], -g1[1] - g2[1] - g3[1], -g1[2] - g2[2] - g3[2]];
    CellGeometry { grads: [g0, g1, g2, g3], volume: det / 6.0 }
}

fn basis_values(family: Family, bary: [f64; 4], out: &mut [f64]) {
    match family {
        Family::P1 => out[..4].copy_from_slice(&bary),
        Family::P2 => {
            for i in 0..4 {
                out[i] = bary[i] * (2.0 * bary[i] - 1.0);
            }
            for (e, (a, b)) in LOCAL_EDGES.iter().enumerate() {
                out[4 + e] = 4.0 * bary[*a] * bary[*b];
            }
        }
    }
}

fn basis_gradients(family: Family, bary: [f64; 4], grads: &[[f64; 3]; 4], out: &mut [[f64; 3]]) {
    match family {
        Family::P1 => out[..4].copy_from_slice(grads),
        Family::P2 => {
            for i in 0..4 {
                let s = 4.0 * bary[i] - 1.0;
                for d in 0..3 {
                    out[i][d] = s * grads[i][d];
                }
            }
            for (e, (a, b)) in LOCAL_EDGES.iter().enumerate() {
                for d in 0..3 {
                    out[4 + e][d] = 4.0 * (bary[*b] * grads[*a][d] + bary[*a] * grads[*b][d]);
                }
            }
        }
    }
}

fn tet_rule(family: Family) -> &'static [quadrature::TetPoint] {
    match family {
        Family::P1 => &TET_DEGREE2,
        Family::P2 => &TET_DEGREE5,
    }
}

/// Scalar element mass matrix.
fn element_mass(family: Family, volume: f64, nd: usize) -> Vec<f64> {
    let rule = tet_rule(family);
    let mut m = vec![0.0; nd * nd];
    let mut phi = [0.0f64; 10];
    for p in rule {
        basis_values(family, p.bary, &mut phi);
        for a in 0..nd {
            let wa = p.weight * phi[a];
            for b in 0..nd {
                m[a * nd + b] += wa * phi[b];
            }
        }
    }
    for v in &mut m {
        *v *= volume;
    }
    m
}

/// Scalar element stiffness matrix.
fn element_stiffness(family: Family, geo: &CellGeometry, nd: usize) -> Vec<f64> {
    let rule = tet_rule(family);
    let mut k = vec![0.0; nd * nd];
    let mut g = [[0.0f64; 3]; 10];
    for p in rule {
        basis_gradients(family, p.bary, &geo.grads, &mut g);
        for a in 0..nd {
            for b in 0..nd {
                let dot = g[a][0] * g[b][0] + g[a][1] * g[b][1] + g[a][2] * g[b][2];
                k[a * nd + b] += p.weight * dot;
            }
        }
    }
    for v in &mut k {
        *v *= geo.volume;
    }
    k
}

/// Mass form `∫ u·v dx`. Dimension: length^3 (dimensionless bases).
pub fn assemble_mass(space: &FeSpace) -> CsrMatrix {
    let nd = space.nodes_per_cell();
    let comps = space.components;
    let n = space.dim();
    let mut coo = CooBuilder::new(n, n);
    for cell in 0..space.mesh.tets().len() {
        let geo = cell_geometry(&space.mesh, cell);
        let m = element_mass(space.family, geo.volume, nd);
        let nodes = space.cell_node_ids(cell);
        for a in 0..nd {
            for b in 0..nd {
                let v = m[a * nd + b];
                for c in 0..comps {
                    coo.push(comps * nodes[a] + c, comps * nodes[b] + c, v);
                }
            }
        }
    }
    coo.build().with_dimension(Dimension::METER.powi(3))
}

/// Stiffness form `c ∫ ∇u ·· ∇v dx`. Dimension: unit(c) · length.
pub fn assemble_stiffness(space: &FeSpace, coeff: Quantity) -> CsrMatrix {
    let nd = space.nodes_per_cell();
    let comps = space.components;
    let n = space.dim();
    let mut coo = CooBuilder::new(n, n);
    for cell in 0..space.mesh.tets().len() {
        let geo = cell_geometry(&space.mesh, cell);
        let k = element_stiffness(space.family, &geo, nd);
        let nodes = space.cell_node_ids(cell);
        for a in 0..nd {
            for b in 0..nd {
                let v = coeff.value * k[a * nd + b];
                for c in 0..comps {
                    coo.push(comps * nodes[a] + c, comps * nodes[b] + c, v);
                }
            }
        }
    }
    coo.build().with_dimension(coeff.dim * Dimension::METER)
}

/// Symmetric-gradient form `2 c ∫ sym∇u ·· sym∇v dx` on a 3-vector space.
/// Dimension: unit(c) · length.
pub fn assemble_strain_form(space: &FeSpace, mu: Quantity) -> Result<CsrMatrix, FemError> {
    if space.components != 3 {
        return Err(FemError::NeedsVectorSpace);
    }
    let nd = space.nodes_per_cell();
    let n = space.dim();
    let rule = tet_rule(space.family);
    let mut coo = CooBuilder::new(n, n);
    let mut g = [[0.0f64; 3]; 10];
    let mut elem = vec![0.0f64; (3 * nd) * (3 * nd)];
    for cell in 0..space.mesh.tets().len() {
        let geo = cell_geometry(&space.mesh, cell);
        elem.iter_mut().for_each(|v| *v = 0.0);
        for p in rule {
            basis_gradients(space.family, p.bary, &geo.grads, &mut g);
            for a in 0..nd {
                for b in 0..nd {
                    let grad_dot = g[a][0] * g[b][0] + g[a][1] * g[b][1] + g[a][2] * g[b][2];
                    for c in 0..3 {
                        for d in 0..3 {
                            // 2 mu * eps(phi_a e_c) : eps(phi_b e_d)
                            let val = if c == d {
                                mu.value * (grad_dot + g[a][d] * g[b][c])
                            } else {
                                mu.value * g[a][d] * g[b][c]
                            };
                            elem[(3 * a + c) * (3 * nd) + 3 * b + d] += p.weight * val;
                        }
                    }
                }
            }
        }
        let nodes = space.cell_node_ids(cell);
        for a in 0..nd {
            for b in 0..nd {
                for c in 0..3 {
                    for d in 0..3 {
                        coo.push(
                            3 * nodes[a] + c,
                            3 * nodes[b] + d,
                            geo.volume * elem[(3 * a + c) * (3 * nd) + 3 * b + d],
                        );
                    }
                }
            }
        }
    }
    Ok(coo.build().with_dimension(mu.dim * Dimension::METER))
}

/// Divergence pairing `sign · ∫ q div(u) dx` with `q` in the scalar pressure
/// space (rows) and `u` in the vector space (columns). Dimension: length^2.
pub fn assemble_divergence(
    vector_space: &FeSpace,
    pressure_space: &FeSpace,
    sign: f64,
) -> Result<CsrMatrix, FemError> {
    if vector_space.components != 3 {
        return Err(FemError::NeedsVectorSpace);
    }
    if pressure_space.components != 1 {
        return Err(FemError::NeedsScalarSpace);
    }
    if !Arc::ptr_eq(&vector_space.mesh, &pressure_space.mesh) {
        return Err(FemError::MeshMismatch);
    }
    let ndv = vector_space.nodes_per_cell();
    let ndp = pressure_space.nodes_per_cell();
    let rule = tet_rule(vector_space.family);
    let mut coo = CooBuilder::new(pressure_space.dim(), vector_space.dim());
    let mut g = [[0.0f64; 3]; 10];
    let mut psi = [0.0f64; 10];
    let mut elem = vec![0.0f64; ndp * ndv * 3];
    for cell in 0..vector_space.mesh.tets().len() {
        let geo = cell_geometry(&vector_space.mesh, cell);
        elem.iter_mut().for_each(|v| *v = 0.0);
        for p in rule {
            basis_gradients(vector_space.family, p.bary, &geo.grads, &mut g);
            basis_values(pressure_space.family, p.bary, &mut psi);
            for q in 0..ndp {
                let wq = p.weight * psi[q];
                for b in 0..ndv {
                    for c in 0..3 {
                        elem[(q * ndv + b) * 3 + c] += wq * g[b][c];
                    }
                }
            }
        }
        let pnodes = pressure_space.cell_node_ids(cell);
        let vnodes = vector_space.cell_node_ids(cell);
        for q in 0..ndp {
            for b in 0..ndv {
                for c in 0..3 {
                    coo.push(
                        pnodes[q],
                        3 * vnodes[b] + c,
                        sign * geo.volume * elem[(q * ndv + b) * 3 + c],
                    );
                }
            }
        }
    }
    Ok(coo.build().with_dimension(Dimension::METER.powi(2)))
}

/// A load functional with its dimension.
#[derive(Debug, Clone)]
pub struct LoadVector {
    pub values: Vec<f64>,
    pub dim: Dimension,
}

/// Volume load `∫ F·v dx` for a density `F` of dimension `f_dim`.
/// Dimension of the result: f_dim · length^3.
pub fn assemble_volume_load(
    space: &FeSpace,
    f: impl Fn([f64; 3]) -> [f64; 3],
    f_dim: Dimension,
) -> LoadVector {
    let nd = space.nodes_per_cell();
    let comps = space.components;
    let rule = tet_rule(space.family);
    let mut values = vec![0.0; space.dim()];
    let mut phi = [0.0f64; 10];
    for cell in 0..space.mesh.tets().len() {
        let geo = cell_geometry(&space.mesh, cell);
        let tet = space.mesh.tets()[cell];
        let nodes = space.cell_node_ids(cell);
        for p in rule {
            basis_values(space.family, p.bary, &mut phi);
            let mut x = [0.0f64; 3];
            for (i, &vi) in tet.iter().enumerate() {
                let v = space.mesh.vertices()[vi];
                for d in 0..3 {
                    x[d] += p.bary[i] * v[d];
                }
            }
            let fx = f(x);
            for a in 0..nd {
                let w = geo.volume * p.weight * phi[a];
                for c in 0..comps {
                    values[comps * nodes[a] + c] += w * fx[c];
                }
            }
        }
    }
    LoadVector { values, dim: f_dim * Dimension::METER.powi(3) }
}

/// Boundary load `∫_region F·v ds`. Dimension: f_dim · length^2.
pub fn assemble_boundary_load(
    space: &FeSpace,
    tag: &str,
    f: impl Fn([f64; 3]) -> [f64; 3],
    f_dim: Dimension,
) -> Result<LoadVector, FemError> {
    let tag_idx = space.mesh.tag_index(tag)?;
    let comps = space.components;
    let mut values = vec![0.0; space.dim()];
    let facets: Vec<[usize; 3]> = space
        .mesh
        .boundary_facets()
        .iter()
        .filter(|bf| bf.tag == tag_idx)
        .map(|bf| bf.vertices)
        .collect();
    for tri in facets {
        let area = {
            let bf = crate::mesh::BoundaryFacet { vertices: tri, tag: tag_idx };
            space.mesh.facet_area(&bf)
        };
        let nodes = space.facet_nodes(tri);
        for p in &TRI_DEGREE4 {
            let mut x = [0.0f64; 3];
            for (i, &vi) in tri.iter().enumerate() {
                let v = space.mesh.vertices()[vi];
                for d in 0..3 {
                    x[d] += p.bary[i] * v[d];
                }
            }
            let fx = f(x);
            let phi = facet_basis_values(space.family, p.bary);
            for (a, &node) in nodes.iter().enumerate() {
                let w = area * p.weight * phi[a];
                for c in 0..comps {
                    values[comps * node + c] += w * fx[c];
                }
            }
        }
    }
    Ok(LoadVector { values, dim: f_dim * Dimension::METER.powi(2) })
}

/// Trace of the element basis on a boundary triangle with barycentric `bary`.
fn facet_basis_values(family: Family, bary: [f64; 3]) -> Vec<f64> {
    match family {
        Family::P1 => bary.to_vec(),
        Family::P2 => {
            let mut out = Vec::with_capacity(6);
            for l in bary {
                out.push(l * (2.0 * l - 1.0));
            }
            for (a, b) in [(0, 1), (0, 2), (1, 2)] {
                out.push(4.0 * bary[a] * bary[b]);
            }
            out
        }
    }
}

/// Restricts a square operator to the free dofs of `part` and moves the
/// constrained-dof contribution to the right-hand side:
/// returns `(A_ff, rhs_f - A_fc g_c)`.
pub fn apply_dirichlet(a: &CsrMatrix, part: &DofPartition, rhs: &[f64]) -> (CsrMatrix, Vec<f64>) {
    assert_eq!(rhs.len(), part.n_dofs);
    let reduced = a.restricted(&part.free, &part.free);
    let lift = part.lift_vector();
    let a_g = a.matvec(&lift);
    let rhs_f: Vec<f64> = part.free.iter().map(|&d| rhs[d] - a_g[d]).collect();
    (reduced, rhs_f)
}

/// Restricts the columns of a rectangular operator to free trial dofs;
/// also returns `B g_c`, the lifting contribution to the test-side data.
pub fn reduce_columns(b: &CsrMatrix, trial_part: &DofPartition) -> (CsrMatrix, Vec<f64>) {
    let all_rows: Vec<usize> = (0..b.n_rows()).collect();
    let reduced = b.restricted(&all_rows, &trial_part.free);
    let lift = trial_part.lift_vector();
    let bg = b.matvec(&lift);
    (reduced, bg)
}

/// Restricts the rows of a rectangular operator to free test dofs.
pub fn reduce_rows(b: &CsrMatrix, test_part: &DofPartition) -> CsrMatrix {
    let all_cols: Vec<usize> = (0..b.n_cols()).collect();
    b.restricted(&test_part.free, &all_cols)
}
