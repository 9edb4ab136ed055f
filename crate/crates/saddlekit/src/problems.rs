//! The four saddle-point model problems as assembled block systems with
//! physical units attached to every space, operator block, parameter, and
//! right-hand side, plus Lagrangian evaluation and the dimensional
//! consistency check of the problem itself.

use crate::fem::{
    apply_dirichlet, assemble_boundary_load, assemble_divergence, assemble_mass,
    assemble_stiffness, assemble_strain_form, assemble_volume_load, reduce_columns, FeSpace,
    FemError, Family,
};
use crate::krylov::SaddleOperator;
use crate::linalg::{
    dot, CsrMatrix, DenseMatrix, LinalgError, SymmetricIndefiniteFactor,
};
use crate::mesh::{BoundaryRule, BoxMesh, MeshError};
use crate::units::{Dimension, Quantity, UnitVector};
use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ProblemError {
    #[error("mesh level {level} is not available for the {problem} problem (max {max})")]
    InvalidLevel { problem: &'static str, level: usize, max: usize },
    #[error("parameter `{name}` must be positive, got {value}")]
    NonPositiveParameter { name: &'static str, value: f64 },
    #[error("parameter `{name}` has dimension {got}, expected {expected}")]
    WrongParameterDimension { name: &'static str, got: String, expected: String },
    #[error("elastic moduli must satisfy mu > 0, 2 mu + 3 lambda > 0, lambda != 0")]
    InadmissibleModuli,
    #[error("vector length {got} does not match block size {expected}")]
    SizeMismatch { got: usize, expected: usize },
    #[error("system of total size {size} exceeds the dense direct-solve cap {cap}")]
    DirectSolveTooLarge { size: usize, cap: usize },
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Mesh(#[from] MeshError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ProblemKind {
    Stokes,
    Elasticity,
    PoissonControl,
    StokesControl,
}

impl ProblemKind {
    pub fn name(&self) -> &'static str {
        match self {
            ProblemKind::Stokes => "stokes",
            ProblemKind::Elasticity => "elasticity",
            ProblemKind::PoissonControl => "poisson_control",
            ProblemKind::StokesControl => "stokes_control",
        }
    }
}

/// One scalar or vector field of a (possibly product) space.
#[derive(Debug, Clone)]
pub struct FieldInfo {
    pub name: &'static str,
    /// Unit of the field variable itself.
    pub unit: Dimension,
    pub free_dim: usize,
    /// Dimension of the full discrete space, the number reported in tables.
    pub full_dim: usize,
    /// Field is determined only up to additive constants (zero-mean gauge).
    pub zero_mean_gauge: bool,
}

#[derive(Debug, Clone)]
pub struct SpaceInfo {
    pub fields: Vec<FieldInfo>,
}

impl SpaceInfo {
    pub fn free_dim(&self) -> usize {
        self.fields.iter().map(|f| f.free_dim).sum()
    }

    pub fn full_dim(&self) -> usize {
        self.fields.iter().map(|f| f.full_dim).sum()
    }

    /// Offsets of the fields inside the concatenated free vector, with both
    /// endpoints (length = fields + 1).
    pub fn offsets(&self) -> Vec<usize> {
        let mut out = Vec::with_capacity(self.fields.len() + 1);
        out.push(0);
        for f in &self.fields {
            out.push(out.last().unwrap() + f.free_dim);
        }
        out
    }

    pub fn units(&self) -> UnitVector {
        UnitVector(self.fields.iter().map(|f| f.unit).collect())
    }
}

/// Field-blocked sparse operator between two (product) spaces.
#[derive(Debug, Clone)]
pub struct BlockMatrix {
    row_offsets: Vec<usize>,
    col_offsets: Vec<usize>,
    blocks: Vec<Option<CsrMatrix>>,
}

impl BlockMatrix {
    pub fn new(row_space: &SpaceInfo, col_space: &SpaceInfo) -> BlockMatrix {
        let row_offsets = row_space.offsets();
        let col_offsets = col_space.offsets();
        let blocks = vec![None; (row_offsets.len() - 1) * (col_offsets.len() - 1)];
        BlockMatrix { row_offsets, col_offsets, blocks }
    }

    pub fn n_row_fields(&self) -> usize {
        self.row_offsets.len() - 1
    }

    pub fn n_col_fields(&self) -> usize {
        self.col_offsets.len() - 1
    }

    pub fn n_rows(&self) -> usize {
        *self.row_offsets.last().unwrap()
    }

    pub fn n_cols(&self) -> usize {
        *self.col_offsets.last().unwrap()
    }

    pub fn set_block(&mut self, i: usize, j: usize, m: CsrMatrix) {
        assert_eq!(m.n_rows(), self.row_offsets[i + 1] - self.row_offsets[i]);
        assert_eq!(m.n_cols(), self.col_offsets[j + 1] - self.col_offsets[j]);
        let nc = self.n_col_fields();
        self.blocks[i * nc + j] = Some(m);
    }

    pub fn block(&self, i: usize, j: usize) -> Option<&CsrMatrix> {
        self.blocks[i * self.n_col_fields() + j].as_ref()
    }

    pub fn block_mut(&mut self, i: usize, j: usize) -> Option<&mut CsrMatrix> {
        let nc = self.n_col_fields();
        self.blocks[i * nc + j].as_mut()
    }

    /// `y += alpha * M x`
    pub fn apply_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_cols());
        debug_assert_eq!(y.len(), self.n_rows());
        for i in 0..self.n_row_fields() {
            for j in 0..self.n_col_fields() {
                if let Some(b) = self.block(i, j) {
                    let xs = &x[self.col_offsets[j]..self.col_offsets[j + 1]];
                    let ys = &mut y[self.row_offsets[i]..self.row_offsets[i + 1]];
                    for (row, yi) in ys.iter_mut().enumerate() {
                        let (cols, vals) = b.row(row);
                        let mut acc = 0.0;
                        for (c, v) in cols.iter().zip(vals) {
                            acc += v * xs[*c];
                        }
                        *yi += alpha * acc;
                    }
                }
            }
        }
    }

    /// `y += alpha * M^T x`
    pub fn apply_transpose_add(&self, alpha: f64, x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.n_rows());
        debug_assert_eq!(y.len(), self.n_cols());
        for i in 0..self.n_row_fields() {
            for j in 0..self.n_col_fields() {
                if let Some(b) = self.block(i, j) {
                    let xs = &x[self.row_offsets[i]..self.row_offsets[i + 1]];
                    let ys = &mut y[self.col_offsets[j]..self.col_offsets[j + 1]];
                    for (row, &xi) in xs.iter().enumerate() {
                        let (cols, vals) = b.row(row);
                        let axi = alpha * xi;
                        for (c, v) in cols.iter().zip(vals) {
                            ys[*c] += v * axi;
                        }
                    }
                }
            }
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows()];
        self.apply_add(1.0, x, &mut y);
        y
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.n_rows(), self.n_cols());
        for i in 0..self.n_row_fields() {
            for j in 0..self.n_col_fields() {
                if let Some(b) = self.block(i, j) {
                    let r0 = self.row_offsets[i];
                    let c0 = self.col_offsets[j];
                    for r in 0..b.n_rows() {
                        let (cols, vals) = b.row(r);
                        for (c, v) in cols.iter().zip(vals) {
                            d[(r0 + r, c0 + c)] = *v;
                        }
                    }
                }
            }
        }
        d
    }
}

/// Extra assembled operators the preconditioners are built from.
#[derive(Debug, Clone)]
pub(crate) enum ProblemAux {
    Stokes {
        /// Reduced scalar velocity stiffness, already scaled by the viscosity.
        velocity_scalar: CsrMatrix,
        pressure_mass: CsrMatrix,
    },
    Elasticity {
        pressure_mass: CsrMatrix,
    },
    PoissonControl {
        /// Reduced, unscaled P1 mass and stiffness on the shared space.
        mass: CsrMatrix,
        stiffness: CsrMatrix,
    },
    StokesControl {
        /// Reduced, unscaled scalar P2 velocity mass and stiffness.
        scalar_mass: CsrMatrix,
        scalar_stiffness: CsrMatrix,
        /// Reduced `∫ q div u` pairing (positive sign).
        divergence: CsrMatrix,
        pressure_mass: CsrMatrix,
    },
}

/// Self-adjoint block system `[A, B^T; B, -C] (u, p) = (f, g)` with units.
#[derive(Debug)]
pub struct SaddleSystem {
    pub kind: ProblemKind,
    pub a: BlockMatrix,
    pub b: BlockMatrix,
    pub c: BlockMatrix,
    pub rhs_v: Vec<f64>,
    pub rhs_q: Vec<f64>,
    /// Units carried by the right-hand side fields, as assembled.
    pub rhs_v_units: UnitVector,
    pub rhs_q_units: UnitVector,
    pub v_space: SpaceInfo,
    pub q_space: SpaceInfo,
    pub lagrangian_unit: Dimension,
    pub params: BTreeMap<&'static str, Quantity>,
    pub(crate) aux: ProblemAux,
}

impl SaddleOperator for SaddleSystem {
    fn dim_v(&self) -> usize {
        self.v_space.free_dim()
    }

    fn dim_q(&self) -> usize {
        self.q_space.free_dim()
    }

    /// `y = [A x_v + B^T x_q; B x_v - C x_q]`
    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let nv = self.dim_v();
        y.iter_mut().for_each(|v| *v = 0.0);
        let (xv, xq) = x.split_at(nv);
        let (yv, yq) = y.split_at_mut(nv);
        self.a.apply_add(1.0, xv, yv);
        self.b.apply_transpose_add(1.0, xq, yv);
        self.b.apply_add(1.0, xv, yq);
        self.c.apply_add(-1.0, xq, yq);
    }
}

impl SaddleSystem {
    pub fn rhs(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.dim_v() + self.dim_q());
        out.extend_from_slice(&self.rhs_v);
        out.extend_from_slice(&self.rhs_q);
        out
    }

    pub fn parameter(&self, name: &str) -> Option<Quantity> {
        self.params.get(name).copied()
    }

    /// Algebraic residual `(f - A u - B^T p, g - B u + C p)`.
    pub fn residual(&self, u: &[f64], p: &[f64]) -> Result<(Vec<f64>, Vec<f64>), ProblemError> {
        self.check_sizes(u, p)?;
        let mut rv = self.rhs_v.clone();
        let mut rq = self.rhs_q.clone();
        self.a.apply_add(-1.0, u, &mut rv);
        self.b.apply_transpose_add(-1.0, p, &mut rv);
        self.b.apply_add(-1.0, u, &mut rq);
        self.c.apply_add(1.0, p, &mut rq);
        Ok((rv, rq))
    }

    /// `L(u, p) = 1/2 <A u, u> + <B u, p> - 1/2 <C p, p> - <f, u> - <g, p>`,
    /// with the Lagrangian's unit attached.
    pub fn lagrangian_value(&self, u: &[f64], p: &[f64]) -> Result<Quantity, ProblemError> {
        self.check_sizes(u, p)?;
        let au = self.a.apply(u);
        let bu = self.b.apply(u);
        let cp = self.c.apply(p);
        let value = 0.5 * dot(&au, u) + dot(&bu, p) - 0.5 * dot(&cp, p)
            - dot(&self.rhs_v, u)
            - dot(&self.rhs_q, p);
        Ok(Quantity::new(value, self.lagrangian_unit))
    }

    fn check_sizes(&self, u: &[f64], p: &[f64]) -> Result<(), ProblemError> {
        if u.len() != self.dim_v() {
            return Err(ProblemError::SizeMismatch { got: u.len(), expected: self.dim_v() });
        }
        if p.len() != self.dim_q() {
            return Err(ProblemError::SizeMismatch { got: p.len(), expected: self.dim_q() });
        }
        Ok(())
    }

    /// Projects zero-mean-gauge fields of a solution to the zero-mean
    /// representative (in the function sense, using the field's mass matrix).
    pub fn project_gauge(&self, v: &mut [f64], q: &mut [f64]) {
        let pressure_mass = match &self.aux {
            ProblemAux::StokesControl { pressure_mass, .. } => pressure_mass,
            _ => return,
        };
        let v_offsets = self.v_space.offsets();
        for (i, f) in self.v_space.fields.iter().enumerate() {
            if f.zero_mean_gauge {
                mean_zero_project(pressure_mass, &mut v[v_offsets[i]..v_offsets[i + 1]]);
            }
        }
        let q_offsets = self.q_space.offsets();
        for (i, f) in self.q_space.fields.iter().enumerate() {
            if f.zero_mean_gauge {
                mean_zero_project(pressure_mass, &mut q[q_offsets[i]..q_offsets[i + 1]]);
            }
        }
    }

    /// Dense symmetric-indefinite direct solve; the reference solution the
    /// Krylov path is checked against. Gauge fields are pinned during the
    /// factorization and projected to zero mean afterwards.
    pub fn direct_solve(&self) -> Result<(Vec<f64>, Vec<f64>), ProblemError> {
        const CAP: usize = 6000;
        let nv = self.dim_v();
        let nq = self.dim_q();
        let n = nv + nq;
        if n > CAP {
            return Err(ProblemError::DirectSolveTooLarge { size: n, cap: CAP });
        }
        let mut full = DenseMatrix::zeros(n, n);
        let ad = self.a.to_dense();
        let bd = self.b.to_dense();
        let cd = self.c.to_dense();
        for i in 0..nv {
            for j in 0..nv {
                full[(i, j)] = ad[(i, j)];
            }
        }
        for i in 0..nq {
            for j in 0..nv {
                full[(nv + i, j)] = bd[(i, j)];
                full[(j, nv + i)] = bd[(i, j)];
            }
            for j in 0..nq {
                full[(nv + i, nv + j)] = -cd[(i, j)];
            }
        }

        // Pin the first dof of each gauge field.
        let mut pinned = Vec::new();
        let v_offsets = self.v_space.offsets();
        for (i, f) in self.v_space.fields.iter().enumerate() {
            if f.zero_mean_gauge {
                pinned.push(v_offsets[i]);
            }
        }
        let q_offsets = self.q_space.offsets();
        for (i, f) in self.q_space.fields.iter().enumerate() {
            if f.zero_mean_gauge {
                pinned.push(nv + q_offsets[i]);
            }
        }
        let keep: Vec<usize> = (0..n).filter(|i| !pinned.contains(i)).collect();
        let rhs = self.rhs();
        let reduced = DenseMatrix::from_fn(keep.len(), keep.len(), |i, j| full[(keep[i], keep[j])]);
        let rhs_red: Vec<f64> = keep.iter().map(|&i| rhs[i]).collect();
        let factor = SymmetricIndefiniteFactor::new(&reduced)?;
        let x_red = factor.solve(&rhs_red);
        let mut x = vec![0.0; n];
        for (k, &i) in keep.iter().enumerate() {
            x[i] = x_red[k];
        }
        let mut v = x[..nv].to_vec();
        let mut q = x[nv..].to_vec();
        self.project_gauge(&mut v, &mut q);
        Ok((v, q))
    }
}

fn mean_zero_project(mass: &CsrMatrix, field: &mut [f64]) {
    debug_assert_eq!(mass.n_rows(), field.len());
    let ones = vec![1.0; field.len()];
    let m1 = mass.matvec(&ones);
    let volume = dot(&m1, &ones);
    let mean = dot(&m1, field) / volume;
    for f in field.iter_mut() {
        *f -= mean;
    }
}

/// One dimensional-consistency check entry.
#[derive(Debug, Clone)]
pub struct TermCheck {
    pub label: String,
    pub got: Dimension,
    pub expected: Dimension,
}

impl TermCheck {
    pub fn passes(&self) -> bool {
        self.got == self.expected
    }
}

/// Report from checking that every Lagrangian term carries the same unit and
/// that the dual-space units obey the quotient rule.
#[derive(Debug, Clone)]
pub struct ConsistencyReport {
    pub lagrangian_unit: Dimension,
    pub terms: Vec<TermCheck>,
}

impl ConsistencyReport {
    pub fn passes(&self) -> bool {
        self.terms.iter().all(TermCheck::passes)
    }

    pub fn failures(&self) -> Vec<&TermCheck> {
        self.terms.iter().filter(|t| !t.passes()).collect()
    }
}

impl fmt::Display for ConsistencyReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "lagrangian unit: {}", self.lagrangian_unit)?;
        for t in &self.terms {
            let mark = if t.passes() { "ok  " } else { "FAIL" };
            writeln!(f, "  [{mark}] {}: {} (expected {})", t.label, t.got, t.expected)?;
        }
        Ok(())
    }
}

/// Verifies that all terms of the Lagrangian share its unit: for each block
/// `X_ij` of A, B, C the product with the field units must equal the
/// Lagrangian unit, and the assembled right-hand sides must carry the dual
/// units `L / unit(field)`.
pub fn check_problem_consistency(system: &SaddleSystem) -> ConsistencyReport {
    let lag = system.lagrangian_unit;
    let mut terms = Vec::new();
    let v_units = system.v_space.units();
    let q_units = system.q_space.units();

    let check_operator = |name: &str,
                              m: &BlockMatrix,
                              row_units: &UnitVector,
                              col_units: &UnitVector,
                              terms: &mut Vec<TermCheck>| {
        for i in 0..m.n_row_fields() {
            for j in 0..m.n_col_fields() {
                if let Some(block) = m.block(i, j) {
                    if let Some(d) = block.dim() {
                        terms.push(TermCheck {
                            label: format!("<{name} x, y> block ({i},{j})"),
                            got: d * col_units.0[j] * row_units.0[i],
                            expected: lag,
                        });
                    }
                }
            }
        }
    };
    check_operator("A u, u", &system.a, &v_units, &v_units, &mut terms);
    check_operator("B u, p", &system.b, &q_units, &v_units, &mut terms);
    check_operator("C p, p", &system.c, &q_units, &q_units, &mut terms);

    for (i, (unit, field)) in system
        .rhs_v_units
        .0
        .iter()
        .zip(system.v_space.fields.iter())
        .enumerate()
    {
        terms.push(TermCheck {
            label: format!("<f, u> field {i}"),
            got: *unit * field.unit,
            expected: lag,
        });
    }
    for (i, (unit, field)) in system
        .rhs_q_units
        .0
        .iter()
        .zip(system.q_space.fields.iter())
        .enumerate()
    {
        terms.push(TermCheck {
            label: format!("<g, p> field {i}"),
            got: *unit * field.unit,
            expected: lag,
        });
    }
    ConsistencyReport { lagrangian_unit: lag, terms }
}

fn expect_dimension(
    name: &'static str,
    q: Quantity,
    expected: Dimension,
) -> Result<(), ProblemError> {
    if q.dim != expected {
        return Err(ProblemError::WrongParameterDimension {
            name,
            got: q.dim.to_string(),
            expected: expected.to_string(),
        });
    }
    if !q.value.is_finite() || q.value <= 0.0 {
        return Err(ProblemError::NonPositiveParameter { name, value: q.value });
    }
    Ok(())
}

fn dim(s: &str) -> Dimension {
    s.parse().expect("static unit strings parse")
}

fn level_subdivisions(
    problem: &'static str,
    level: usize,
    max: usize,
) -> Result<usize, ProblemError> {
    if level > max {
        return Err(ProblemError::InvalidLevel { problem, level, max });
    }
    Ok(2usize.pow(level as u32 + 1))
}

/// Mesh levels of the lid-driven channel cube `(-1, 1)^3`.
fn stokes_mesh(level: usize) -> Result<Arc<BoxMesh>, ProblemError> {
    let n = level_subdivisions("stokes", level, 3)?;
    let tol = 1e-10 * 2.0 * 3f64.sqrt();
    let mesh = BoxMesh::build([[-1.0, 1.0]; 3], [n; 3])?.tag_boundary(&[
        BoundaryRule::new("inflow", move |x| (x[0] + 1.0).abs() <= tol),
        BoundaryRule::new("outflow", move |x| (x[0] - 1.0).abs() <= tol),
        BoundaryRule::new("noslip", |_| true),
    ])?;
    Ok(Arc::new(mesh))
}

fn control_cube_mesh(
    problem: &'static str,
    level: usize,
    max: usize,
) -> Result<Arc<BoxMesh>, ProblemError> {
    let n = level_subdivisions(problem, level, max)?;
    let mesh = BoxMesh::build([[0.0, 1.0]; 3], [n; 3])?
        .tag_boundary(&[BoundaryRule::new("walls", |_| true)])?;
    Ok(Arc::new(mesh))
}

fn rod_mesh(level: usize) -> Result<Arc<BoxMesh>, ProblemError> {
    if level > 3 {
        return Err(ProblemError::InvalidLevel { problem: "elasticity", level, max: 3 });
    }
    let k = 2usize.pow(level as u32);
    let tol = 1e-10 * (100.0f64 * 100.0 + 200.0).sqrt();
    let mesh = BoxMesh::build([[0.0, 100.0], [0.0, 10.0], [0.0, 10.0]], [10 * k, k, k])?
        .tag_boundary(&[
            BoundaryRule::new("clamped", move |x| x[0].abs() <= tol),
            BoundaryRule::new("loaded", move |x| (x[0] - 100.0).abs() <= tol),
            BoundaryRule::new("traction_free", |_| true),
        ])?;
    Ok(Arc::new(mesh))
}

/// Stokes channel flow: Taylor-Hood discretization of the cube `(-1, 1)^3`
/// with a parabolic inflow profile, no-slip walls, and a natural outflow.
pub fn build_stokes(level: usize, mu: Quantity) -> Result<SaddleSystem, ProblemError> {
    build_stokes_with_inflow(level, mu, 1.0)
}

pub(crate) fn build_stokes_with_inflow(
    level: usize,
    mu: Quantity,
    inflow_amplitude: f64,
) -> Result<SaddleSystem, ProblemError> {
    expect_dimension("mu", mu, dim("N*s/m^2"))?;
    let mesh = stokes_mesh(level)?;
    let mut velocity = FeSpace::new(Arc::clone(&mesh), Family::P2, 3, dim("m/s"));
    velocity.add_dirichlet("inflow", move |x| {
        [inflow_amplitude * (1.0 - x[1] * x[1]) * (1.0 - x[2] * x[2]), 0.0, 0.0]
    })?;
    velocity.add_dirichlet("noslip", |_| [0.0; 3])?;
    let pressure = FeSpace::new(Arc::clone(&mesh), Family::P1, 1, dim("N/m^2"));

    let scalar = velocity.scalar_twin();
    let stiffness_full = assemble_stiffness(&scalar, mu).expand_components(3);
    let part = velocity.partition();
    let zero = vec![0.0; velocity.dim()];
    let (a_red, rhs_v) = apply_dirichlet(&stiffness_full, &part, &zero);

    let div_full = assemble_divergence(&velocity, &pressure, -1.0)?;
    let (b_red, b_lift) = reduce_columns(&div_full, &part);
    let rhs_q: Vec<f64> = b_lift.iter().map(|v| -v).collect();

    let scalar_part = scalar.partition();
    let scalar_red = {
        let scalar_full = assemble_stiffness(&scalar, mu);
        scalar_full.restricted(&scalar_part.free, &scalar_part.free)
    };
    let pressure_mass = assemble_mass(&pressure);

    let v_space = SpaceInfo {
        fields: vec![FieldInfo {
            name: "velocity",
            unit: dim("m/s"),
            free_dim: part.n_free(),
            full_dim: velocity.dim(),
            zero_mean_gauge: false,
        }],
    };
    let q_space = SpaceInfo {
        fields: vec![FieldInfo {
            name: "pressure",
            unit: dim("N/m^2"),
            free_dim: pressure.dim(),
            full_dim: pressure.dim(),
            zero_mean_gauge: false,
        }],
    };

    let mut a = BlockMatrix::new(&v_space, &v_space);
    a.set_block(0, 0, a_red);
    let mut b = BlockMatrix::new(&q_space, &v_space);
    b.set_block(0, 0, b_red);
    let c = BlockMatrix::new(&q_space, &q_space);

    let a_dim = stiffness_full.dim().unwrap();
    let b_dim = div_full.dim().unwrap();
    Ok(SaddleSystem {
        kind: ProblemKind::Stokes,
        a,
        b,
        c,
        rhs_v,
        rhs_q,
        rhs_v_units: UnitVector(vec![a_dim * dim("m/s")]),
        rhs_q_units: UnitVector(vec![b_dim * dim("m/s")]),
        v_space,
        q_space,
        lagrangian_unit: Dimension::WATT,
        params: BTreeMap::from([("mu", mu)]),
        aux: ProblemAux::Stokes { velocity_scalar: scalar_red, pressure_mass },
    })
}

/// Nearly incompressible elasticity: rod clamped at one end with a uniform
/// traction on the far face, in the mixed displacement/pressure form.
pub fn build_elasticity(
    level: usize,
    mu: Quantity,
    lambda: Quantity,
) -> Result<SaddleSystem, ProblemError> {
    let npm2 = dim("N/m^2");
    expect_dimension("mu", mu, npm2)?;
    if lambda.dim != npm2 {
        return Err(ProblemError::WrongParameterDimension {
            name: "lambda",
            got: lambda.dim.to_string(),
            expected: npm2.to_string(),
        });
    }
    if !mu.value.is_finite()
        || !lambda.value.is_finite()
        || mu.value <= 0.0
        || 2.0 * mu.value + 3.0 * lambda.value <= 0.0
        || lambda.value == 0.0
    {
        return Err(ProblemError::InadmissibleModuli);
    }

    let mesh = rod_mesh(level)?;
    let mut displacement = FeSpace::new(Arc::clone(&mesh), Family::P2, 3, Dimension::METER);
    displacement.add_dirichlet("clamped", |_| [0.0; 3])?;
    let pressure = FeSpace::new(Arc::clone(&mesh), Family::P1, 1, npm2);

    let strain_full = assemble_strain_form(&displacement, mu)?;
    let traction = assemble_boundary_load(&displacement, "loaded", |_| [1.0, 0.0, 0.0], npm2)?;
    let part = displacement.partition();
    let (a_red, rhs_v) = apply_dirichlet(&strain_full, &part, &traction.values);

    let div_full = assemble_divergence(&displacement, &pressure, 1.0)?;
    let (b_red, b_lift) = reduce_columns(&div_full, &part);
    let rhs_q: Vec<f64> = b_lift.iter().map(|v| -v).collect();

    let pressure_mass = assemble_mass(&pressure);
    let c_block = pressure_mass.scaled_dim(1.0 / lambda.value, lambda.dim.recip());

    let v_space = SpaceInfo {
        fields: vec![FieldInfo {
            name: "displacement",
            unit: Dimension::METER,
            free_dim: part.n_free(),
            full_dim: displacement.dim(),
            zero_mean_gauge: false,
        }],
    };
    let q_space = SpaceInfo {
        fields: vec![FieldInfo {
            name: "pressure",
            unit: npm2,
            free_dim: pressure.dim(),
            full_dim: pressure.dim(),
            zero_mean_gauge: false,
        }],
    };

    let mut a = BlockMatrix::new(&v_space, &v_space);
    a.set_block(0, 0, a_red);
    let mut b = BlockMatrix::new(&q_space, &v_space);
    b.set_block(0, 0, b_red);
    let mut c = BlockMatrix::new(&q_space, &q_space);
    c.set_block(0, 0, c_block);

    Ok(SaddleSystem {
        kind: ProblemKind::Elasticity,
        a,
        b,
        c,
        rhs_v,
        rhs_q,
        rhs_v_units: UnitVector(vec![traction.dim]),
        rhs_q_units: UnitVector(vec![div_full.dim().unwrap() * Dimension::METER]),
        v_space,
        q_space,
        lagrangian_unit: Dimension::JOULE,
        params: BTreeMap::from([("mu", mu), ("lambda", lambda)]),
        aux: ProblemAux::Elasticity { pressure_mass },
    })
}

/// Distributed optimal control of stationary heat conduction on the unit
/// cube, with the control eliminated: `A = beta M`, `B = kappa K`,
/// `C = alpha^{-1} M` on the shared P1 space with homogeneous Dirichlet data.
pub fn build_poisson_control(
    level: usize,
    alpha: Quantity,
    beta: Quantity,
    kappa: Quantity,
) -> Result<SaddleSystem, ProblemError> {
    expect_dimension("alpha", alpha, dim("obj*m^3/W^2"))?;
    expect_dimension("beta", beta, dim("obj/K^2/m^3"))?;
    expect_dimension("kappa", kappa, dim("W/m/K"))?;
    let mesh = control_cube_mesh("poisson_control", level, 4)?;
    let mut state = FeSpace::new(Arc::clone(&mesh), Family::P1, 1, Dimension::KELVIN);
    state.add_dirichlet("walls", |_| [0.0; 3])?;
    let part = state.partition();

    let mass_full = assemble_mass(&state);
    let stiffness_full = assemble_stiffness(&state, Quantity::dimensionless(1.0));
    let mass = mass_full.restricted(&part.free, &part.free);
    let stiffness = stiffness_full.restricted(&part.free, &part.free);

    let a_block = mass.scaled_dim(beta.value, beta.dim);
    let b_block = stiffness.scaled_dim(kappa.value, kappa.dim);
    let c_block = mass.scaled_dim(1.0 / alpha.value, alpha.dim.recip());

    // f(v) = beta * int u_d v with desired state u_d(x) = x_1
    let load = assemble_volume_load(
        &state,
        |x| [beta.value * x[0], 0.0, 0.0],
        beta.dim * Dimension::KELVIN,
    );
    let rhs_v = part.restrict(&load.values);
    let nq = part.n_free();
    let rhs_q = vec![0.0; nq];

    let v_space = SpaceInfo {
        fields: vec![FieldInfo {
            name: "state",
            unit: Dimension::KELVIN,
            free_dim: part.n_free(),
            full_dim: state.dim(),
            zero_mean_gauge: false,
        }],
    };
    let q_space = SpaceInfo {
        fields: vec![FieldInfo {
            name: "adjoint",
            unit: dim("obj/W"),
            free_dim: nq,
            full_dim: state.dim(),
            zero_mean_gauge: false,
        }],
    };

    let mut a = BlockMatrix::new(&v_space, &v_space);
    a.set_block(0, 0, a_block);
    let mut b = BlockMatrix::new(&q_space, &v_space);
    b.set_block(0, 0, b_block);
    let mut c = BlockMatrix::new(&q_space, &q_space);
    c.set_block(0, 0, c_block);

    let g_unit = Dimension::OBJECTIVE / dim("obj/W");
    Ok(SaddleSystem {
        kind: ProblemKind::PoissonControl,
        a,
        b,
        c,
        rhs_v,
        rhs_q,
        rhs_v_units: UnitVector(vec![load.dim]),
        rhs_q_units: UnitVector(vec![g_unit]),
        v_space,
        q_space,
        lagrangian_unit: Dimension::OBJECTIVE,
        params: BTreeMap::from([("alpha", alpha), ("beta", beta), ("kappa", kappa)]),
        aux: ProblemAux::PoissonControl { mass, stiffness },
    })
}

/// Distributed optimal control of the Stokes equations on the unit cube,
/// with the control eliminated. State and adjoint live in the same
/// Taylor-Hood space; the operator blocks are themselves 2x2 over
/// (velocity, pressure) fields.
pub fn build_stokes_control(
    level: usize,
    alpha: Quantity,
    beta: Quantity,
    mu: Quantity,
) -> Result<SaddleSystem, ProblemError> {
    expect_dimension("alpha", alpha, dim("obj*m^3/N^2"))?;
    expect_dimension("beta", beta, dim("obj*s^2/m^5"))?;
    expect_dimension("mu", mu, dim("N*s/m^2"))?;
    let mesh = control_cube_mesh("stokes_control", level, 3)?;
    let mut velocity = FeSpace::new(Arc::clone(&mesh), Family::P2, 3, dim("m/s"));
    velocity.add_dirichlet("walls", |_| [0.0; 3])?;
    let pressure = FeSpace::new(Arc::clone(&mesh), Family::P1, 1, dim("N/m^2"));
    let scalar = velocity.scalar_twin();
    let scalar_part = scalar.partition();
    let vec_part = velocity.partition();

    let scalar_mass =
        assemble_mass(&scalar).restricted(&scalar_part.free, &scalar_part.free);
    let scalar_stiffness = assemble_stiffness(&scalar, Quantity::dimensionless(1.0))
        .restricted(&scalar_part.free, &scalar_part.free);
    let div_full = assemble_divergence(&velocity, &pressure, 1.0)?;
    let (divergence, _) = reduce_columns(&div_full, &vec_part);

    let mass_vec = scalar_mass.expand_components(3);
    let stiffness_vec = scalar_stiffness.expand_components(3);

    let nvel = 3 * scalar_part.n_free();
    let npre = pressure.dim();

    let v_space = SpaceInfo {
        fields: vec![
            FieldInfo {
                name: "state_velocity",
                unit: dim("m/s"),
                free_dim: nvel,
                full_dim: velocity.dim(),
                zero_mean_gauge: false,
            },
            FieldInfo {
                name: "state_pressure",
                unit: dim("N/m^2"),
                free_dim: npre,
                full_dim: npre,
                zero_mean_gauge: true,
            },
        ],
    };
    let q_space = SpaceInfo {
        fields: vec![
            FieldInfo {
                name: "adjoint_velocity",
                unit: dim("obj/N"),
                free_dim: nvel,
                full_dim: velocity.dim(),
                zero_mean_gauge: false,
            },
            FieldInfo {
                name: "adjoint_pressure",
                unit: dim("obj*s/m^3"),
                free_dim: npre,
                full_dim: npre,
                zero_mean_gauge: true,
            },
        ],
    };

    let mut a = BlockMatrix::new(&v_space, &v_space);
    a.set_block(0, 0, mass_vec.scaled_dim(beta.value, beta.dim));
    let mut b = BlockMatrix::new(&q_space, &v_space);
    b.set_block(0, 0, stiffness_vec.scaled_dim(mu.value, mu.dim));
    b.set_block(0, 1, divergence.transpose().scaled(-1.0));
    b.set_block(1, 0, divergence.scaled(-1.0));
    let mut c = BlockMatrix::new(&q_space, &q_space);
    c.set_block(0, 0, mass_vec.scaled_dim(1.0 / alpha.value, alpha.dim.recip()));

    // f((v, q)) = beta * int u_d . v with u_d(x) = (x_1, 0, 0)
    let load = assemble_volume_load(
        &velocity,
        |x| [beta.value * x[0], 0.0, 0.0],
        beta.dim * dim("m/s"),
    );
    let mut rhs_v = vec_part.restrict(&load.values);
    rhs_v.extend(std::iter::repeat_n(0.0, npre));
    let rhs_q = vec![0.0; nvel + npre];

    let pressure_mass = assemble_mass(&pressure);
    let lag = Dimension::OBJECTIVE;
    Ok(SaddleSystem {
        kind: ProblemKind::StokesControl,
        a,
        b,
        c,
        rhs_v,
        rhs_q,
        rhs_v_units: UnitVector(vec![load.dim, lag / dim("N/m^2")]),
        rhs_q_units: UnitVector(vec![lag / dim("obj/N"), lag / dim("obj*s/m^3")]),
        v_space,
        q_space,
        lagrangian_unit: lag,
        params: BTreeMap::from([("alpha", alpha), ("beta", beta), ("mu", mu)]),
        aux: ProblemAux::StokesControl {
            scalar_mass,
            scalar_stiffness,
            divergence,
            pressure_mass,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::norm2;

    fn q(v: f64, s: &str) -> Quantity {
        Quantity::new(v, s.parse().unwrap())
    }

    fn operator_symmetry_probe(system: &SaddleSystem, seed: u64) -> f64 {
        let n = system.dim();
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(11);
        let mut rand = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
        };
        let x: Vec<f64> = (0..n).map(|_| rand()).collect();
        let y: Vec<f64> = (0..n).map(|_| rand()).collect();
        let mut kx = vec![0.0; n];
        let mut ky = vec![0.0; n];
        system.apply(&x, &mut kx);
        system.apply(&y, &mut ky);
        let xky = dot(&x, &ky);
        let ykx = dot(&y, &kx);
        (xky - ykx).abs() / xky.abs().max(ykx.abs()).max(f64::MIN_POSITIVE)
    }

    #[test]
    fn stokes_level1_dimensions_and_units() {
        let system = build_stokes(1, q(1.0, "N*s/m^2")).unwrap();
        assert_eq!(system.v_space.fields[0].full_dim, 2187);
        assert_eq!(system.q_space.fields[0].full_dim, 125);
        // unit(A) * unit(V) = N, the dual-space unit
        let a_dim = system.a.block(0, 0).unwrap().dim().unwrap();
        assert_eq!(a_dim * "m/s".parse::<Dimension>().unwrap(), Dimension::NEWTON);
        assert_eq!(system.lagrangian_unit, Dimension::WATT);
        assert!(check_problem_consistency(&system).passes());
        assert!(operator_symmetry_probe(&system, 1) < 1e-12);
    }

    #[test]
    fn stokes_zero_inflow_means_zero_rhs() {
        let system = build_stokes_with_inflow(0, q(2.0, "N*s/m^2"), 0.0).unwrap();
        assert!(norm2(&system.rhs_v) == 0.0);
        assert!(norm2(&system.rhs_q) == 0.0);
    }

    #[test]
    fn stokes_parameter_scaling_is_linear() {
        let s1 = build_stokes(0, q(1.0, "N*s/m^2")).unwrap();
        let s2 = build_stokes(0, q(2.0, "N*s/m^2")).unwrap();
        let a1 = s1.a.block(0, 0).unwrap();
        let a2 = s2.a.block(0, 0).unwrap();
        assert!(a2.max_relative_difference(&a1.scaled(2.0)) < 1e-15);
        // B is viscosity-independent
        assert!(s2.b.block(0, 0).unwrap().max_relative_difference(s1.b.block(0, 0).unwrap()) == 0.0);
    }

    #[test]
    fn elasticity_level1_dimensions_lagrangian_and_compressibility_scaling() {
        let system = build_elasticity(1, q(1.0, "N/m^2"), q(1.0, "N/m^2")).unwrap();
        assert_eq!(system.v_space.fields[0].full_dim, 3075);
        assert_eq!(system.q_space.fields[0].full_dim, 189);
        assert_eq!(system.lagrangian_unit, Dimension::JOULE);
        assert!(check_problem_consistency(&system).passes());
        assert!(operator_symmetry_probe(&system, 2) < 1e-12);

        let c1 = build_elasticity(0, q(1.0, "N/m^2"), q(1.0, "N/m^2")).unwrap();
        let c2 = build_elasticity(0, q(1.0, "N/m^2"), q(1e3, "N/m^2")).unwrap();
        let ratio = c1.c.block(0, 0).unwrap();
        assert!(c2.c.block(0, 0).unwrap().max_relative_difference(&ratio.scaled(1e-3)) < 1e-15);

        assert!(build_elasticity(0, q(1.0, "N/m^2"), q(0.0, "N/m^2")).is_err());
        assert!(build_elasticity(0, q(-1.0, "N/m^2"), q(1.0, "N/m^2")).is_err());
        // admissible negative lambda: 2*1 + 3*(-0.1) > 0
        assert!(build_elasticity(0, q(1.0, "N/m^2"), q(-0.1, "N/m^2")).is_ok());
    }

    #[test]
    fn poisson_control_blocks_and_units() {
        let system =
            build_poisson_control(1, q(1.0, "obj*m^3/W^2"), q(1.0, "obj/K^2/m^3"), q(1.0, "W/m/K"))
                .unwrap();
        assert_eq!(system.v_space.fields[0].full_dim, 125);
        assert_eq!(system.q_space.fields[0].full_dim, 125);
        assert!(check_problem_consistency(&system).passes());

        // C carries unit W^2/obj
        let c_dim = system.c.block(0, 0).unwrap().dim().unwrap();
        assert_eq!(c_dim, "W^2/obj".parse::<Dimension>().unwrap());

        // B is exactly kappa times the reduced stiffness
        let kappa = 3.25;
        let sys2 = build_poisson_control(
            1,
            q(1.0, "obj*m^3/W^2"),
            q(1.0, "obj/K^2/m^3"),
            q(kappa, "W/m/K"),
        )
        .unwrap();
        let ProblemAux::PoissonControl { stiffness, .. } = &sys2.aux else { unreachable!() };
        assert!(
            sys2.b.block(0, 0).unwrap().max_relative_difference(&stiffness.scaled(kappa)) < 1e-15
        );
        assert!(operator_symmetry_probe(&system, 3) < 1e-12);
    }

    #[test]
    fn stokes_control_blocks_and_units() {
        let system = build_stokes_control(
            1,
            q(1.0, "obj*m^3/N^2"),
            q(1.0, "obj*s^2/m^5"),
            q(1.0, "N*s/m^2"),
        )
        .unwrap();
        assert_eq!(system.v_space.fields[0].full_dim, 2187);
        assert_eq!(system.v_space.fields[1].full_dim, 125);
        assert_eq!(system.q_space.fields[0].full_dim, 2187);
        assert!(check_problem_consistency(&system).passes());
        assert!(operator_symmetry_probe(&system, 4) < 1e-12);

        // C = (alpha beta)^{-1} A entrywise
        let alpha = 3.0;
        let beta = 7.0;
        let sys = build_stokes_control(
            0,
            q(alpha, "obj*m^3/N^2"),
            q(beta, "obj*s^2/m^5"),
            q(2.0, "N*s/m^2"),
        )
        .unwrap();
        let a00 = sys.a.block(0, 0).unwrap();
        let c00 = sys.c.block(0, 0).unwrap();
        assert!(c00.max_relative_difference(&a00.scaled(1.0 / (alpha * beta))) < 1e-14);

        // block units of V and Q per the tables
        assert_eq!(sys.v_space.fields[0].unit, "m/s".parse().unwrap());
        assert_eq!(sys.v_space.fields[1].unit, "N/m^2".parse().unwrap());
        assert_eq!(sys.q_space.fields[0].unit, "obj/N".parse().unwrap());
        assert_eq!(sys.q_space.fields[1].unit, "obj*s/m^3".parse().unwrap());
    }

    #[test]
    fn stokes_lifted_rhs_touches_only_dofs_coupled_to_the_inflow() {
        let system = build_stokes(1, q(1.0, "N*s/m^2")).unwrap();

        // rebuild the full stiffness on the same spaces to inspect coupling
        let mesh = stokes_mesh(1).unwrap();
        let mut velocity = FeSpace::new(Arc::clone(&mesh), Family::P2, 3, dim("m/s"));
        velocity
            .add_dirichlet("inflow", |x| {
                [(1.0 - x[1] * x[1]) * (1.0 - x[2] * x[2]), 0.0, 0.0]
            })
            .unwrap();
        velocity.add_dirichlet("noslip", |_| [0.0; 3]).unwrap();
        let full = assemble_stiffness(&velocity.scalar_twin(), q(1.0, "N*s/m^2"))
            .expand_components(3);
        let part = velocity.partition();
        let lift = part.lift_vector();

        let mut nonzero_rows = 0usize;
        for (i, &dof) in part.free.iter().enumerate() {
            if system.rhs_v[i] != 0.0 {
                nonzero_rows += 1;
                let (cols, _) = full.row(dof);
                let coupled =
                    cols.iter().any(|&c| lift[c] != 0.0);
                assert!(coupled, "free dof {dof} has lifted load but no inflow coupling");
            }
        }
        assert!(nonzero_rows > 0);
        assert!(nonzero_rows < part.n_free() / 4, "the lift is localized near the inflow");
    }

    #[test]
    fn lagrangian_zero_at_origin_and_stationary_at_solution() {
        let system = build_stokes(0, q(1.0, "N*s/m^2")).unwrap();
        let zero_v = vec![0.0; system.dim_v()];
        let zero_q = vec![0.0; system.dim_q()];
        let l0 = system.lagrangian_value(&zero_v, &zero_q).unwrap();
        assert_eq!(l0.value, 0.0);
        assert_eq!(l0.dim, Dimension::WATT);

        let (u, p) = system.direct_solve().unwrap();
        let (rv, rq) = system.residual(&u, &p).unwrap();
        let grad_norm = (norm2(&rv).powi(2) + norm2(&rq).powi(2)).sqrt();
        let rhs_norm = norm2(&system.rhs());
        assert!(grad_norm <= 1e-8 * rhs_norm, "{grad_norm} vs {rhs_norm}");
    }

    #[test]
    fn direct_solves_satisfy_the_equations() {
        let systems = vec![
            build_stokes(0, q(1.0, "N*s/m^2")).unwrap(),
            build_elasticity(0, q(1.0, "N/m^2"), q(10.0, "N/m^2")).unwrap(),
            build_poisson_control(1, q(1.0, "obj*m^3/W^2"), q(1.0, "obj/K^2/m^3"), q(1.0, "W/m/K"))
                .unwrap(),
            build_stokes_control(
                0,
                q(1.0, "obj*m^3/N^2"),
                q(1.0, "obj*s^2/m^5"),
                q(1.0, "N*s/m^2"),
            )
            .unwrap(),
        ];
        for system in &systems {
            let (u, p) = system.direct_solve().unwrap();
            let (rv, rq) = system.residual(&u, &p).unwrap();
            let res = (norm2(&rv).powi(2) + norm2(&rq).powi(2)).sqrt();
            let rhs = norm2(&system.rhs()).max(f64::MIN_POSITIVE);
            assert!(res <= 1e-9 * rhs, "{}: residual {res}, rhs {rhs}", system.kind.name());
        }
    }

    #[test]
    fn consistency_detects_a_tampered_block() {
        let mut system = build_stokes(0, q(1.0, "N*s/m^2")).unwrap();
        assert!(check_problem_consistency(&system).passes());
        // strip the volume factor from B's recorded dimension
        let b = system.b.block_mut(0, 0).unwrap();
        let bad = b.dim().unwrap() / Dimension::METER.powi(3);
        b.set_dimension(Some(bad));
        let report = check_problem_consistency(&system);
        assert!(!report.passes());
        assert_eq!(report.failures().len(), 1);
        let diff = report.failures()[0].got / report.failures()[0].expected;
        assert_eq!(diff, Dimension::METER.powi(-3));
    }

    #[test]
    fn dimensionless_toy_problem_passes_vacuously() {
        let field = |n: usize| FieldInfo {
            name: "toy",
            unit: Dimension::DIMENSIONLESS,
            free_dim: n,
            full_dim: n,
            zero_mean_gauge: false,
        };
        let v_space = SpaceInfo { fields: vec![field(2)] };
        let q_space = SpaceInfo { fields: vec![field(1)] };
        let mut a = BlockMatrix::new(&v_space, &v_space);
        a.set_block(0, 0, CsrMatrix::identity(2).with_dimension(Dimension::DIMENSIONLESS));
        let b = BlockMatrix::new(&q_space, &v_space);
        let c = BlockMatrix::new(&q_space, &q_space);
        let system = SaddleSystem {
            kind: ProblemKind::Stokes,
            a,
            b,
            c,
            rhs_v: vec![0.0; 2],
            rhs_q: vec![0.0; 1],
            rhs_v_units: UnitVector(vec![Dimension::DIMENSIONLESS]),
            rhs_q_units: UnitVector(vec![Dimension::DIMENSIONLESS]),
            v_space,
            q_space,
            lagrangian_unit: Dimension::DIMENSIONLESS,
            params: BTreeMap::new(),
            aux: ProblemAux::Elasticity { pressure_mass: CsrMatrix::identity(1) },
        };
        assert!(check_problem_consistency(&system).passes());
    }

    #[test]
    fn wrong_parameter_dimension_is_rejected() {
        let err = build_stokes(0, q(1.0, "N/m^2")).unwrap_err();
        assert!(matches!(err, ProblemError::WrongParameterDimension { name: "mu", .. }));
        let err = build_stokes(9, q(1.0, "N*s/m^2")).unwrap_err();
        assert!(matches!(err, ProblemError::InvalidLevel { .. }));
    }
}
