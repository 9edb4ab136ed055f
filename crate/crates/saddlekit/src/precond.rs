//! The dimensionally consistent block-diagonal preconditioners for the four
//! model problems, the consistency checker for preconditioners, and the
//! estimator for the continuity/inf-sup constants in the preconditioner
//! norms.

use crate::krylov::{cg, BlockPreconditioner, KrylovError, SaddleOperator};
use crate::linalg::{
    cholesky, dot, gen_sym_eig, norm2, spd_interpolate, sym_eig, CholeskyFactor, CooBuilder,
    CsrMatrix, DenseMatrix, LinalgError, Ordering, SymmetricIndefiniteFactor,
};
use crate::problems::{
    check_problem_consistency, ConsistencyReport, ProblemAux, ProblemKind, SaddleSystem,
    SpaceInfo, TermCheck,
};
use crate::units::Dimension;
use std::sync::atomic::{AtomicU64, Ordering as AtomicOrdering};
use std::sync::Arc;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum PrecondError {
    #[error("this preconditioner is for the {expected} problem, got {got}")]
    WrongProblemKind { expected: &'static str, got: &'static str },
    #[error("interpolation parameter theta={0} outside [0, 1]")]
    ThetaOutOfRange(f64),
    #[error("general-theta construction is dense-only: size {size} exceeds cap {cap}")]
    GeneralThetaTooLarge { size: usize, cap: usize },
    #[error("problem size {size} exceeds cap {cap} for {context}")]
    SizeCap { size: usize, cap: usize, context: &'static str },
    #[error("constants estimation above the dense cap needs factorization-backed gauge-free blocks")]
    UnsupportedSparseRoute,
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Krylov(#[from] KrylovError),
}

/// Inner conjugate-gradient settings for nested Schur-complement blocks.
#[derive(Debug, Clone, Copy)]
pub struct InnerCgConfig {
    pub rel_tol: f64,
    pub max_iterations: usize,
}

impl Default for InnerCgConfig {
    fn default() -> Self {
        InnerCgConfig { rel_tol: 1e-8, max_iterations: 500 }
    }
}

/// Accumulated statistics of nested inner solves.
#[derive(Debug, Default)]
pub struct InnerStats {
    calls: AtomicU64,
    iterations: AtomicU64,
    max_iterations: AtomicU64,
}

impl InnerStats {
    fn record(&self, iterations: usize) {
        self.calls.fetch_add(1, AtomicOrdering::Relaxed);
        self.iterations.fetch_add(iterations as u64, AtomicOrdering::Relaxed);
        self.max_iterations.fetch_max(iterations as u64, AtomicOrdering::Relaxed);
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(AtomicOrdering::Relaxed)
    }

    pub fn total_iterations(&self) -> u64 {
        self.iterations.load(AtomicOrdering::Relaxed)
    }

    pub fn max_iterations(&self) -> u64 {
        self.max_iterations.load(AtomicOrdering::Relaxed)
    }
}

/// The invertible action behind one diagonal field block.
enum FieldSolverKind {
    /// Explicit SPD matrix with its own factorization.
    Direct { factor: CholeskyFactor },
    /// Interleaved vector operator `diag(S, ..., S)`; one scalar
    /// factorization serves all components.
    Components { scalar_factor: Arc<CholeskyFactor>, components: usize },
    /// Schur complement `scale * D H^{-1} D^T`, applied inversely by inner CG
    /// whose matrix-vector product reuses the factorization of `H`.
    SchurCg {
        divergence: CsrMatrix,
        divergence_t: CsrMatrix,
        h_factor: Arc<CholeskyFactor>,
        h_components: usize,
        scale: f64,
        config: InnerCgConfig,
        project_constants: bool,
        stats: InnerStats,
    },
}

/// One SPD diagonal block: its action, unit, and (when available) its
/// explicit matrix.
struct FieldSolver {
    kind: FieldSolverKind,
    /// Explicit matrix of the block; `None` for Schur blocks.
    matrix: Option<CsrMatrix>,
    unit: Dimension,
    dim: usize,
}

impl FieldSolver {
    fn apply_inverse(&self, r: &[f64], z: &mut [f64]) -> Result<(), KrylovError> {
        match &self.kind {
            FieldSolverKind::Direct { factor } => factor.solve_into(r, z),
            FieldSolverKind::Components { scalar_factor, components } => {
                solve_components(scalar_factor, *components, r, z);
            }
            FieldSolverKind::SchurCg {
                divergence,
                divergence_t,
                h_factor,
                h_components,
                scale,
                config,
                project_constants,
                stats,
            } => {
                let mut rhs = r.to_vec();
                if *project_constants {
                    project_against_ones(&mut rhs);
                }
                let nvel = divergence_t.n_rows();
                let mut h_rhs = vec![0.0; nvel];
                let mut h_sol = vec![0.0; nvel];
                let mut matvec = |p: &[f64], out: &mut [f64]| {
                    divergence_t.matvec_into(p, &mut h_rhs);
                    solve_components(h_factor, *h_components, &h_rhs, &mut h_sol);
                    divergence.matvec_into(&h_sol, out);
                    for o in out.iter_mut() {
                        *o *= *scale;
                    }
                };
                let cell = std::cell::RefCell::new(&mut matvec);
                let (sol, iterations) = cg(
                    |p, out| (cell.borrow_mut())(p, out),
                    &rhs,
                    config.rel_tol,
                    config.max_iterations,
                )?;
                stats.record(iterations);
                z.copy_from_slice(&sol);
            }
        }
        Ok(())
    }

    /// Forward application `y = P_field x`, for energy norms and dense
    /// materialization.
    fn apply_forward(&self, x: &[f64], y: &mut [f64]) {
        match &self.kind {
            FieldSolverKind::SchurCg {
                divergence,
                divergence_t,
                h_factor,
                h_components,
                scale,
                ..
            } => {
                let nvel = divergence_t.n_rows();
                let mut h_rhs = vec![0.0; nvel];
                let mut h_sol = vec![0.0; nvel];
                divergence_t.matvec_into(x, &mut h_rhs);
                solve_components(h_factor, *h_components, &h_rhs, &mut h_sol);
                divergence.matvec_into(&h_sol, y);
                for o in y.iter_mut() {
                    *o *= *scale;
                }
            }
            _ => {
                let m = self.matrix.as_ref().expect("factor-backed blocks store their matrix");
                m.matvec_into(x, y);
            }
        }
    }

    /// Dense matrix of the block; Schur blocks are materialized by applying
    /// the forward action to unit vectors.
    fn to_dense(&self) -> DenseMatrix {
        match &self.matrix {
            Some(m) => m.to_dense(),
            None => {
                let n = self.dim;
                let mut out = DenseMatrix::zeros(n, n);
                let mut e = vec![0.0; n];
                let mut col = vec![0.0; n];
                for j in 0..n {
                    e[j] = 1.0;
                    self.apply_forward(&e, &mut col);
                    e[j] = 0.0;
                    for i in 0..n {
                        out[(i, j)] = col[i];
                    }
                }
                out.symmetrize();
                out
            }
        }
    }
}

fn solve_components(factor: &CholeskyFactor, components: usize, r: &[f64], z: &mut [f64]) {
    let n = factor.n();
    debug_assert_eq!(r.len(), n * components);
    if components == 1 {
        factor.solve_into(r, z);
        return;
    }
    let mut rc = vec![0.0; n];
    for c in 0..components {
        for i in 0..n {
            rc[i] = r[components * i + c];
        }
        let xc = factor.solve(&rc);
        for i in 0..n {
            z[components * i + c] = xc[i];
        }
    }
}

fn project_against_ones(v: &mut [f64]) {
    let mean = v.iter().sum::<f64>() / v.len() as f64;
    for x in v.iter_mut() {
        *x -= mean;
    }
}

/// A scaled reference to a field solver; the dual-side blocks of the control
/// problems reuse the primal machinery through `matrix_scale`.
struct ScaledField {
    solver: Arc<FieldSolver>,
    matrix_scale: f64,
    unit: Dimension,
}

impl ScaledField {
    fn plain(solver: FieldSolver) -> ScaledField {
        let unit = solver.unit;
        ScaledField { solver: Arc::new(solver), matrix_scale: 1.0, unit }
    }

    fn shared(solver: &Arc<FieldSolver>, matrix_scale: f64, unit: Dimension) -> ScaledField {
        ScaledField { solver: Arc::clone(solver), matrix_scale, unit }
    }

    fn dim(&self) -> usize {
        self.solver.dim
    }

    fn apply_inverse(&self, r: &[f64], z: &mut [f64]) -> Result<(), KrylovError> {
        self.solver.apply_inverse(r, z)?;
        if self.matrix_scale != 1.0 {
            let inv = 1.0 / self.matrix_scale;
            for zi in z.iter_mut() {
                *zi *= inv;
            }
        }
        Ok(())
    }

    fn apply_forward(&self, x: &[f64], y: &mut [f64]) {
        self.solver.apply_forward(x, y);
        if self.matrix_scale != 1.0 {
            for yi in y.iter_mut() {
                *yi *= self.matrix_scale;
            }
        }
    }

    fn to_dense(&self) -> DenseMatrix {
        let d = self.solver.to_dense();
        if self.matrix_scale != 1.0 {
            d.scaled(self.matrix_scale)
        } else {
            d
        }
    }

    fn matrix(&self) -> Option<CsrMatrix> {
        self.solver.matrix.as_ref().map(|m| {
            let mut out = m.scaled(self.matrix_scale);
            out.set_dimension(Some(self.unit));
            out
        })
    }
}

/// Block-diagonal SPD preconditioner `diag(P_V, P_Q)` with one solver per
/// field, each carrying the physical unit of its block as an operator.
pub struct BlockDiagPreconditioner {
    v_fields: Vec<ScaledField>,
    q_fields: Vec<ScaledField>,
}

impl BlockDiagPreconditioner {
    /// General constructor from explicit SPD field matrices; each is
    /// factorized on its own. Units are taken from the matrices.
    pub fn from_matrices(
        v_blocks: Vec<CsrMatrix>,
        q_blocks: Vec<CsrMatrix>,
    ) -> Result<Self, PrecondError> {
        let build = |blocks: Vec<CsrMatrix>| -> Result<Vec<ScaledField>, PrecondError> {
            blocks
                .into_iter()
                .map(|m| {
                    let unit = m.dim().unwrap_or(Dimension::DIMENSIONLESS);
                    let factor = cholesky(&m, Ordering::ReverseCuthillMcKee)?;
                    Ok(ScaledField::plain(FieldSolver {
                        kind: FieldSolverKind::Direct { factor },
                        dim: m.n_rows(),
                        matrix: Some(m),
                        unit,
                    }))
                })
                .collect()
        };
        Ok(BlockDiagPreconditioner { v_fields: build(v_blocks)?, q_fields: build(q_blocks)? })
    }

    /// Units of the primal blocks as operators, field-wise.
    pub fn unit_v(&self) -> Vec<Dimension> {
        self.v_fields.iter().map(|f| f.unit).collect()
    }

    pub fn unit_q(&self) -> Vec<Dimension> {
        self.q_fields.iter().map(|f| f.unit).collect()
    }

    /// Explicit matrix of a primal field block, when one is stored.
    pub fn v_block_matrix(&self, field: usize) -> Option<CsrMatrix> {
        self.v_fields[field].matrix()
    }

    pub fn q_block_matrix(&self, field: usize) -> Option<CsrMatrix> {
        self.q_fields[field].matrix()
    }

    /// Statistics of the nested inner solves, if any block runs them.
    pub fn inner_stats(&self) -> Option<&InnerStats> {
        self.v_fields
            .iter()
            .chain(self.q_fields.iter())
            .find_map(|f| match &f.solver.kind {
                FieldSolverKind::SchurCg { stats, .. } => Some(stats),
                _ => None,
            })
    }

    fn offsets(fields: &[ScaledField]) -> Vec<usize> {
        let mut out = Vec::with_capacity(fields.len() + 1);
        out.push(0);
        for f in fields {
            out.push(out.last().unwrap() + f.dim());
        }
        out
    }

    fn apply_fields(fields: &[ScaledField], r: &[f64], z: &mut [f64]) -> Result<(), KrylovError> {
        let mut start = 0;
        for f in fields {
            let end = start + f.dim();
            f.apply_inverse(&r[start..end], &mut z[start..end])?;
            start = end;
        }
        Ok(())
    }

    /// Inverse action on the primal block only.
    pub fn apply_v_inverse(&self, r: &[f64], z: &mut [f64]) -> Result<(), KrylovError> {
        Self::apply_fields(&self.v_fields, r, z)
    }

    /// Inverse action on the dual block only.
    pub fn apply_q_inverse(&self, r: &[f64], z: &mut [f64]) -> Result<(), KrylovError> {
        Self::apply_fields(&self.q_fields, r, z)
    }

    /// Forward energy product `v^T P_V v + q^T P_Q q`, the squared
    /// preconditioner norm of a block vector.
    pub fn energy_norm_squared(&self, v: &[f64], q: &[f64]) -> f64 {
        let mut total = 0.0;
        for (fields, x) in [(&self.v_fields, v), (&self.q_fields, q)] {
            let mut start = 0;
            for f in fields {
                let end = start + f.dim();
                let mut y = vec![0.0; f.dim()];
                f.apply_forward(&x[start..end], &mut y);
                total += dot(&x[start..end], &y);
                start = end;
            }
        }
        total
    }

    /// Dense matrices of the two diagonal blocks (Schur blocks are
    /// materialized column-by-column).
    pub fn to_dense(&self) -> (DenseMatrix, DenseMatrix) {
        (dense_of(&self.v_fields), dense_of(&self.q_fields))
    }
}

fn dense_of(fields: &[ScaledField]) -> DenseMatrix {
    let n: usize = fields.iter().map(|f| f.dim()).sum();
    let mut out = DenseMatrix::zeros(n, n);
    let mut start = 0;
    for f in fields {
        let d = f.to_dense();
        for i in 0..f.dim() {
            for j in 0..f.dim() {
                out[(start + i, start + j)] = d[(i, j)];
            }
        }
        start += f.dim();
    }
    out
}

impl BlockPreconditioner for BlockDiagPreconditioner {
    fn dim_v(&self) -> usize {
        self.v_fields.iter().map(|f| f.dim()).sum()
    }

    fn dim_q(&self) -> usize {
        self.q_fields.iter().map(|f| f.dim()).sum()
    }

    fn apply_inverse(&self, r: &[f64], z: &mut [f64]) -> Result<(), KrylovError> {
        let nv = self.dim_v();
        let (rv, rq) = r.split_at(nv);
        let (zv, zq) = z.split_at_mut(nv);
        Self::apply_fields(&self.v_fields, rv, zv)?;
        Self::apply_fields(&self.q_fields, rq, zq)?;
        Ok(())
    }

    fn v_field_offsets(&self) -> Vec<usize> {
        Self::offsets(&self.v_fields)
    }

    fn q_field_offsets(&self) -> Vec<usize> {
        Self::offsets(&self.q_fields)
    }
}

fn expect_kind(system: &SaddleSystem, expected: ProblemKind) -> Result<(), PrecondError> {
    if system.kind != expected {
        return Err(PrecondError::WrongProblemKind {
            expected: expected.name(),
            got: system.kind.name(),
        });
    }
    Ok(())
}

/// Stokes preconditioner: `P_V = a(.,.)` (the viscous block itself) and
/// `P_Q = mu^{-1} *` pressure mass.
pub fn stokes_precond(system: &SaddleSystem) -> Result<BlockDiagPreconditioner, PrecondError> {
    expect_kind(system, ProblemKind::Stokes)?;
    let ProblemAux::Stokes { velocity_scalar, pressure_mass } = &system.aux else {
        unreachable!("aux data matches the problem kind");
    };
    let mu = system.parameter("mu").expect("stokes systems carry mu");
    let a_block = system.a.block(0, 0).expect("stokes A block").clone();
    let v = FieldSolver {
        kind: FieldSolverKind::Components {
            scalar_factor: Arc::new(cholesky(velocity_scalar, Ordering::ReverseCuthillMcKee)?),
            components: 3,
        },
        dim: a_block.n_rows(),
        unit: a_block.dim().unwrap(),
        matrix: Some(a_block),
    };
    let q_matrix = pressure_mass.scaled_dim(1.0 / mu.value, mu.dim.recip());
    let q = FieldSolver {
        kind: FieldSolverKind::Direct {
            factor: cholesky(&q_matrix, Ordering::ReverseCuthillMcKee)?,
        },
        dim: q_matrix.n_rows(),
        unit: q_matrix.dim().unwrap(),
        matrix: Some(q_matrix),
    };
    Ok(BlockDiagPreconditioner {
        v_fields: vec![ScaledField::plain(v)],
        q_fields: vec![ScaledField::plain(q)],
    })
}

/// Elasticity preconditioner: `P_V = a(.,.)` and
/// `P_Q = (2 mu)^{-1} *` pressure mass.
pub fn elasticity_precond(system: &SaddleSystem) -> Result<BlockDiagPreconditioner, PrecondError> {
    expect_kind(system, ProblemKind::Elasticity)?;
    let ProblemAux::Elasticity { pressure_mass } = &system.aux else {
        unreachable!("aux data matches the problem kind");
    };
    let mu = system.parameter("mu").expect("elasticity systems carry mu");
    let a_block = system.a.block(0, 0).expect("elasticity A block").clone();
    let v = FieldSolver {
        kind: FieldSolverKind::Direct {
            factor: cholesky(&a_block, Ordering::ReverseCuthillMcKee)?,
        },
        dim: a_block.n_rows(),
        unit: a_block.dim().unwrap(),
        matrix: Some(a_block),
    };
    let q_matrix = pressure_mass.scaled_dim(1.0 / (2.0 * mu.value), mu.dim.recip());
    let q = FieldSolver {
        kind: FieldSolverKind::Direct {
            factor: cholesky(&q_matrix, Ordering::ReverseCuthillMcKee)?,
        },
        dim: q_matrix.n_rows(),
        unit: q_matrix.dim().unwrap(),
        matrix: Some(q_matrix),
    };
    Ok(BlockDiagPreconditioner {
        v_fields: vec![ScaledField::plain(v)],
        q_fields: vec![ScaledField::plain(q)],
    })
}

/// Dense-size cap for the general-theta interpolation construction.
const GENERAL_THETA_CAP: usize = 1500;

/// Robust preconditioner for the Poisson control problem. For `theta = 1/2`
/// the blocks take the sparse form `P_V = beta M + sqrt(alpha beta) kappa K`
/// and `P_Q = (alpha beta)^{-1} P_V`, sharing one factorization; other theta
/// values go through the dense interpolated construction.
pub fn poisson_control_precond(
    system: &SaddleSystem,
    theta: f64,
) -> Result<BlockDiagPreconditioner, PrecondError> {
    expect_kind(system, ProblemKind::PoissonControl)?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(PrecondError::ThetaOutOfRange(theta));
    }
    if theta != 0.5 {
        return poisson_control_precond_interpolated(system, theta);
    }
    let ProblemAux::PoissonControl { mass, stiffness } = &system.aux else {
        unreachable!("aux data matches the problem kind");
    };
    let alpha = system.parameter("alpha").unwrap();
    let beta = system.parameter("beta").unwrap();
    let kappa = system.parameter("kappa").unwrap();
    let ab = alpha.value * beta.value;
    let ab_dim = alpha.dim * beta.dim;
    let pv_unit = system.a.block(0, 0).unwrap().dim().unwrap();
    let pq_unit = pv_unit / ab_dim;

    let mut pv = mass.linear_combination(beta.value, ab.sqrt() * kappa.value, stiffness);
    pv.set_dimension(Some(pv_unit));
    let solver = Arc::new(FieldSolver {
        kind: FieldSolverKind::Direct { factor: cholesky(&pv, Ordering::ReverseCuthillMcKee)? },
        dim: pv.n_rows(),
        unit: pv_unit,
        matrix: Some(pv),
    });
    Ok(BlockDiagPreconditioner {
        v_fields: vec![ScaledField::shared(&solver, 1.0, pv_unit)],
        q_fields: vec![ScaledField::shared(&solver, 1.0 / ab, pq_unit)],
    })
}

/// The interpolated-operator construction
/// `P_V = A + [A, B^T C^{-1} B]_theta`, `P_Q = C + [C, B A^{-1} B^T]_{1-theta}`,
/// built densely. Verification-only: sizes are capped.
pub fn poisson_control_precond_interpolated(
    system: &SaddleSystem,
    theta: f64,
) -> Result<BlockDiagPreconditioner, PrecondError> {
    expect_kind(system, ProblemKind::PoissonControl)?;
    if !(0.0..=1.0).contains(&theta) {
        return Err(PrecondError::ThetaOutOfRange(theta));
    }
    let ProblemAux::PoissonControl { mass, stiffness } = &system.aux else {
        unreachable!("aux data matches the problem kind");
    };
    let n = mass.n_rows();
    if n > GENERAL_THETA_CAP {
        return Err(PrecondError::GeneralThetaTooLarge { size: n, cap: GENERAL_THETA_CAP });
    }
    let alpha = system.parameter("alpha").unwrap();
    let beta = system.parameter("beta").unwrap();
    let kappa = system.parameter("kappa").unwrap();
    let ab_dim = alpha.dim * beta.dim;
    let pv_unit = system.a.block(0, 0).unwrap().dim().unwrap();
    let pq_unit = pv_unit / ab_dim;

    let m_dense = mass.to_dense();
    let k_dense = stiffness.to_dense();
    let a_dense = m_dense.scaled(beta.value);
    let c_dense = m_dense.scaled(1.0 / alpha.value);
    let b_dense = k_dense.scaled(kappa.value);

    let a_inv_bt = dense_spd_solve_matrix(&a_dense, &b_dense.transpose())?;
    let mut b_ainv_bt = b_dense.matmul(&a_inv_bt);
    b_ainv_bt.symmetrize();
    let c_inv_b = dense_spd_solve_matrix(&c_dense, &b_dense)?;
    let mut bt_cinv_b = b_dense.transpose().matmul(&c_inv_b);
    bt_cinv_b.symmetrize();

    let pv_dense = a_dense.add_scaled(1.0, &spd_interpolate(&a_dense, &bt_cinv_b, theta)?);
    let pq_dense = c_dense.add_scaled(1.0, &spd_interpolate(&c_dense, &b_ainv_bt, 1.0 - theta)?);

    let pv = dense_to_csr(&pv_dense).with_dimension(pv_unit);
    let pq = dense_to_csr(&pq_dense).with_dimension(pq_unit);
    BlockDiagPreconditioner::from_matrices(vec![pv], vec![pq])
}

/// Robust preconditioner for the Stokes control problem: velocity blocks
/// factor `H = beta M + sqrt(alpha beta) mu K` (componentwise, one scalar
/// factorization); pressure blocks apply `(alpha beta D H^{-1} D^T)^{-1}` by
/// inner CG whose matrix-vector product reuses the factorization of `H`.
/// `P_Q = (alpha beta)^{-1} P_V` by scaled reuse of the same machinery.
pub fn stokes_control_precond(
    system: &SaddleSystem,
    inner: InnerCgConfig,
) -> Result<BlockDiagPreconditioner, PrecondError> {
    expect_kind(system, ProblemKind::StokesControl)?;
    let ProblemAux::StokesControl { scalar_mass, scalar_stiffness, divergence, .. } = &system.aux
    else {
        unreachable!("aux data matches the problem kind");
    };
    let alpha = system.parameter("alpha").unwrap();
    let beta = system.parameter("beta").unwrap();
    let mu = system.parameter("mu").unwrap();
    let ab = alpha.value * beta.value;
    let ab_dim = alpha.dim * beta.dim;

    let h_unit = beta.dim * Dimension::METER.powi(3);
    let mut h_scalar =
        scalar_mass.linear_combination(beta.value, ab.sqrt() * mu.value, scalar_stiffness);
    h_scalar.set_dimension(Some(h_unit));
    let h_factor = Arc::new(cholesky(&h_scalar, Ordering::ReverseCuthillMcKee)?);

    let mut h_vec = h_scalar.expand_components(3);
    h_vec.set_dimension(Some(h_unit));
    let velocity = Arc::new(FieldSolver {
        kind: FieldSolverKind::Components { scalar_factor: Arc::clone(&h_factor), components: 3 },
        dim: h_vec.n_rows(),
        unit: h_unit,
        matrix: Some(h_vec),
    });

    let schur_unit = ab_dim * Dimension::METER.powi(4) / h_unit;
    let pressure = Arc::new(FieldSolver {
        kind: FieldSolverKind::SchurCg {
            divergence: divergence.clone(),
            divergence_t: divergence.transpose(),
            h_factor,
            h_components: 3,
            scale: ab,
            config: inner,
            project_constants: true,
            stats: InnerStats::default(),
        },
        dim: divergence.n_rows(),
        unit: schur_unit,
        matrix: None,
    });

    Ok(BlockDiagPreconditioner {
        v_fields: vec![
            ScaledField::shared(&velocity, 1.0, h_unit),
            ScaledField::shared(&pressure, 1.0, schur_unit),
        ],
        q_fields: vec![
            ScaledField::shared(&velocity, 1.0 / ab, h_unit / ab_dim),
            ScaledField::shared(&pressure, 1.0 / ab, schur_unit / ab_dim),
        ],
    })
}

fn dense_spd_solve_matrix(a: &DenseMatrix, b: &DenseMatrix) -> Result<DenseMatrix, LinalgError> {
    let l = a.cholesky_lower()?;
    let n = a.n_rows();
    let mut out = DenseMatrix::zeros(n, b.n_cols());
    for j in 0..b.n_cols() {
        let col: Vec<f64> = (0..n).map(|i| b[(i, j)]).collect();
        let y = l.forward_solve(&col);
        let x = l.backward_solve_transpose(&y);
        for i in 0..n {
            out[(i, j)] = x[i];
        }
    }
    Ok(out)
}

fn dense_to_csr(d: &DenseMatrix) -> CsrMatrix {
    let mut coo = CooBuilder::new(d.n_rows(), d.n_cols());
    for i in 0..d.n_rows() {
        for j in 0..d.n_cols() {
            let v = d[(i, j)];
            if v != 0.0 {
                coo.push(i, j, v);
            }
        }
    }
    coo.build()
}

/// Checks `unit(P_V) = unit(V*) / unit(V)` and `unit(P_Q) = unit(Q*) / unit(Q)`
/// field-wise, reporting both the operator form and the equivalent energy
/// form `unit(<P x, x>) = unit(L)`.
pub fn check_precond_consistency(
    system: &SaddleSystem,
    precond: &BlockDiagPreconditioner,
) -> ConsistencyReport {
    let lag = system.lagrangian_unit;
    let mut terms = Vec::new();
    let mut side = |name: &str, units: &[Dimension], space: &SpaceInfo| {
        for (i, (unit, field)) in units.iter().zip(space.fields.iter()).enumerate() {
            let dual = lag / field.unit;
            terms.push(TermCheck {
                label: format!("unit({name} {}) vs dual unit, field {i}", field.name),
                got: *unit,
                expected: dual / field.unit,
            });
            terms.push(TermCheck {
                label: format!("unit(<{name} x, x>) vs unit(L), field {i}"),
                got: *unit * field.unit * field.unit,
                expected: lag,
            });
        }
    };
    side("P_V", &precond.unit_v(), &system.v_space);
    side("P_Q", &precond.unit_q(), &system.q_space);
    ConsistencyReport { lagrangian_unit: lag, terms }
}

/// The continuity and inf-sup constants of the preconditioned system,
/// measured in the norms induced by `P_V` and `P_Q`. All four are
/// dimensionless.
#[derive(Debug, Clone, Copy)]
pub struct ConstantsReport {
    pub norm_a: f64,
    pub coercivity_alpha: f64,
    pub norm_b: f64,
    pub infsup_beta: f64,
}

/// Options for [`estimate_constants`].
#[derive(Debug, Clone, Copy)]
pub struct ConstantsOptions {
    /// Largest primal dimension handled by the dense eigensolver route.
    pub dense_cap: usize,
    /// Largest primal dimension for the factorization-backed route.
    pub sparse_cap: usize,
    /// Largest dual dimension (always handled densely).
    pub dual_cap: usize,
}

impl Default for ConstantsOptions {
    fn default() -> Self {
        ConstantsOptions { dense_cap: 1200, sparse_cap: 40000, dual_cap: 1500 }
    }
}

/// Estimates `norm_a = sup <Au,u>/||u||_{P_V}^2` and `coercivity_alpha`
/// (the same infimum over ker B, or over the whole space when B has a
/// trivial kernel), plus the extreme singular values `norm_b`,
/// `infsup_beta` of `P_Q^{-1/2} B P_V^{-1/2}` (gauge nullspaces excluded).
pub fn estimate_constants(
    system: &SaddleSystem,
    precond: &BlockDiagPreconditioner,
    options: ConstantsOptions,
) -> Result<ConstantsReport, PrecondError> {
    let nv = system.dim_v();
    let nq = system.dim_q();
    if nq > options.dual_cap {
        return Err(PrecondError::SizeCap {
            size: nq,
            cap: options.dual_cap,
            context: "constants estimation (dual side)",
        });
    }
    let has_gauge = system
        .v_space
        .fields
        .iter()
        .chain(system.q_space.fields.iter())
        .any(|f| f.zero_mean_gauge);

    // Dual side: generalized eigenvalues of (B P_V^{-1} B^T, P_Q).
    let mut s_b = DenseMatrix::zeros(nq, nq);
    {
        let mut e = vec![0.0; nq];
        let mut bt_e = vec![0.0; nv];
        let mut z = vec![0.0; nv];
        for j in 0..nq {
            e[j] = 1.0;
            bt_e.iter_mut().for_each(|x| *x = 0.0);
            system.b.apply_transpose_add(1.0, &e, &mut bt_e);
            precond.apply_v_inverse(&bt_e, &mut z)?;
            let col = system.b.apply(&z);
            e[j] = 0.0;
            for i in 0..nq {
                s_b[(i, j)] = col[i];
            }
        }
        s_b.symmetrize();
    }
    let pq_dense = dense_of(&precond.q_fields);
    let (sing_sq, _) = gen_sym_eig(&s_b, &pq_dense)?;
    let max_sq = sing_sq.last().copied().unwrap_or(0.0).max(0.0);
    let smallest = if has_gauge {
        sing_sq.iter().copied().find(|&l| l > 1e-10 * max_sq).unwrap_or(0.0)
    } else {
        sing_sq.first().copied().unwrap_or(0.0)
    };
    let norm_b = max_sq.sqrt();
    let infsup_beta = smallest.max(0.0).sqrt();

    // Primal side.
    let (norm_a, coercivity_alpha) = if nv <= options.dense_cap {
        dense_primal_constants(system, precond, nv)?
    } else if nv <= options.sparse_cap && !has_gauge {
        sparse_primal_constants(system, precond, &s_b)?
    } else {
        return Err(PrecondError::SizeCap {
            size: nv,
            cap: options.sparse_cap,
            context: "constants estimation (primal side)",
        });
    };

    Ok(ConstantsReport { norm_a, coercivity_alpha, norm_b, infsup_beta })
}

fn dense_primal_constants(
    system: &SaddleSystem,
    precond: &BlockDiagPreconditioner,
    nv: usize,
) -> Result<(f64, f64), PrecondError> {
    let a_dense = system.a.to_dense();
    let pv_dense = dense_of(&precond.v_fields);
    let (vals, _) = gen_sym_eig(&a_dense, &pv_dense)?;
    let norm_a = vals.last().copied().unwrap_or(0.0);

    // Kernel of B via the spectral decomposition of B^T B.
    let b_dense = system.b.to_dense();
    let mut btb = b_dense.transpose().matmul(&b_dense);
    btb.symmetrize();
    let (btb_vals, btb_vecs) = sym_eig(&btb)?;
    let scale = btb_vals.last().copied().unwrap_or(0.0).max(f64::MIN_POSITIVE);
    let kernel_cols: Vec<usize> = (0..nv).filter(|&i| btb_vals[i] <= 1e-10 * scale).collect();

    let coercivity = if kernel_cols.is_empty() {
        // trivial kernel: infimum taken over the whole space
        vals.first().copied().unwrap_or(0.0)
    } else {
        let k = kernel_cols.len();
        let z = DenseMatrix::from_fn(nv, k, |i, j| btb_vecs[(i, kernel_cols[j])]);
        let az = a_dense.matmul(&z);
        let pz = pv_dense.matmul(&z);
        let mut zaz = z.transpose().matmul(&az);
        let mut zpz = z.transpose().matmul(&pz);
        zaz.symmetrize();
        zpz.symmetrize();
        let (kvals, _) = gen_sym_eig(&zaz, &zpz)?;
        kvals.first().copied().unwrap_or(0.0)
    };
    Ok((norm_a, coercivity))
}

/// Factorization-backed route for large primal spaces: Lanczos with full
/// reorthogonalization on the congruence operator `L^{-1} A L^{-T}`
/// (`P_V = L L^T`), and on its restriction to the kernel of `B L^{-T}` for
/// the coercivity constant.
fn sparse_primal_constants(
    system: &SaddleSystem,
    precond: &BlockDiagPreconditioner,
    s_b: &DenseMatrix,
) -> Result<(f64, f64), PrecondError> {
    let nv = system.dim_v();
    let nq = system.dim_q();
    if precond.v_fields.len() != 1 || precond.v_fields[0].matrix_scale != 1.0 {
        return Err(PrecondError::UnsupportedSparseRoute);
    }
    let (factor, components): (&CholeskyFactor, usize) = match &precond.v_fields[0].solver.kind {
        FieldSolverKind::Direct { factor } => (factor, 1),
        FieldSolverKind::Components { scalar_factor, components } => (scalar_factor, *components),
        FieldSolverKind::SchurCg { .. } => return Err(PrecondError::UnsupportedSparseRoute),
    };

    let per_component = |y: &[f64], half: &dyn Fn(&[f64]) -> Vec<f64>| -> Vec<f64> {
        let n = factor.n();
        if components == 1 {
            return half(y);
        }
        let mut out = vec![0.0; nv];
        let mut yc = vec![0.0; n];
        for c in 0..components {
            for i in 0..n {
                yc[i] = y[components * i + c];
            }
            let xc = half(&yc);
            for i in 0..n {
                out[components * i + c] = xc[i];
            }
        }
        out
    };
    let half_backward = |y: &[f64]| per_component(y, &|v| factor.half_backward(v));
    let half_forward = |b: &[f64]| per_component(b, &|v| factor.half_forward(v));

    // F y = L^{-1} A L^{-T} y: Rayleigh quotients <A u, u> / ||u||_{P_V}^2.
    let apply_f = |y: &[f64]| -> Vec<f64> {
        let u = half_backward(y);
        let mut au = vec![0.0; nv];
        system.a.apply_add(1.0, &u, &mut au);
        half_forward(&au)
    };
    let (min_all, max_all) = lanczos_extremes(&apply_f, nv, None, 160)?;
    let norm_a = max_all;

    let coercivity = if nq >= nv {
        // the constraint operator is (at least) square: treat ker B as trivial
        min_all
    } else {
        // Pi = I - G^T (G G^T)^{-1} G with G = B L^{-T}; G G^T = B P_V^{-1} B^T.
        let s_factor = SymmetricIndefiniteFactor::new(s_b)?;
        let apply_pi = |y: &[f64]| -> Vec<f64> {
            let u = half_backward(y);
            let w = system.b.apply(&u);
            let t = s_factor.solve(&w);
            let mut bt_t = vec![0.0; nv];
            system.b.apply_transpose_add(1.0, &t, &mut bt_t);
            let corr = half_forward(&bt_t);
            y.iter().zip(&corr).map(|(a, b)| a - b).collect()
        };
        let apply_projected = |y: &[f64]| -> Vec<f64> { apply_pi(&apply_f(&apply_pi(y))) };
        let (min_ker, _) = lanczos_extremes(&apply_projected, nv, Some(&apply_pi), 160)?;
        min_ker
    };
    Ok((norm_a, coercivity))
}

/// Extreme eigenvalues of a symmetric operator by Lanczos with full
/// reorthogonalization; `project` confines the starting vector (and hence
/// the Krylov space) to an invariant subspace.
fn lanczos_extremes(
    apply: &dyn Fn(&[f64]) -> Vec<f64>,
    n: usize,
    project: Option<&dyn Fn(&[f64]) -> Vec<f64>>,
    max_steps: usize,
) -> Result<(f64, f64), PrecondError> {
    let mut v0: Vec<f64> = {
        let mut state = 0x853c49e6748fea9bu64;
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
            })
            .collect()
    };
    if let Some(p) = project {
        v0 = p(&v0);
    }
    let norm = norm2(&v0);
    if norm == 0.0 {
        return Ok((0.0, 0.0));
    }
    for x in v0.iter_mut() {
        *x /= norm;
    }

    let mut basis: Vec<Vec<f64>> = vec![v0];
    let mut alphas: Vec<f64> = Vec::new();
    let mut betas: Vec<f64> = Vec::new();
    let mut prev = (f64::NAN, f64::NAN);
    let tridiag_extremes = |alphas: &[f64], betas: &[f64]| -> Result<(f64, f64), PrecondError> {
        let m = alphas.len();
        let mut tri = DenseMatrix::zeros(m, m);
        for i in 0..m {
            tri[(i, i)] = alphas[i];
            if i + 1 < m {
                tri[(i, i + 1)] = betas[i];
                tri[(i + 1, i)] = betas[i];
            }
        }
        let (vals, _) = sym_eig(&tri)?;
        Ok((vals[0], vals[m - 1]))
    };

    for k in 0..max_steps.min(n) {
        let vk = basis[k].clone();
        let mut w = apply(&vk);
        if k > 0 {
            let beta = betas[k - 1];
            for (wi, pi) in w.iter_mut().zip(&basis[k - 1]) {
                *wi -= beta * pi;
            }
        }
        let alpha = dot(&w, &vk);
        alphas.push(alpha);
        for (wi, pi) in w.iter_mut().zip(&vk) {
            *wi -= alpha * pi;
        }
        // keep the recurrence inside the invariant subspace: without this,
        // roundoff noise leaks into the projector's nullspace and its
        // spurious zero eigenvalues contaminate the Ritz extremes
        if let Some(p) = project {
            w = p(&w);
        }
        for b in &basis {
            let c = dot(&w, b);
            for (wi, bi) in w.iter_mut().zip(b) {
                *wi -= c * bi;
            }
        }
        let beta = norm2(&w);

        let current = tridiag_extremes(&alphas, &betas)?;
        let span = (current.1 - current.0).abs().max(current.1.abs()).max(1e-300);
        let stable = (current.0 - prev.0).abs() <= 1e-13 * span
            && (current.1 - prev.1).abs() <= 1e-13 * span;
        if beta <= 1e-14 * span || (k >= 8 && stable) {
            return Ok(current);
        }
        prev = current;
        betas.push(beta);
        let mut next = w;
        for x in next.iter_mut() {
            *x /= beta;
        }
        basis.push(next);
    }
    tridiag_extremes(&alphas, &betas)
}

/// Generalized eigenvalues of the preconditioned saddle operator
/// `[A, B^T; B, -C] x = lambda diag(P_V, P_Q) x`, ascending. Dense; intended
/// for the small meshes used in robustness checks.
pub fn preconditioned_spectrum(
    system: &SaddleSystem,
    precond: &BlockDiagPreconditioner,
    cap: usize,
) -> Result<Vec<f64>, PrecondError> {
    let n = system.dim();
    if n > cap {
        return Err(PrecondError::SizeCap { size: n, cap, context: "preconditioned spectrum" });
    }
    let nv = system.dim_v();
    let nq = system.dim_q();
    let mut k_full = DenseMatrix::zeros(n, n);
    let a = system.a.to_dense();
    let b = system.b.to_dense();
    let c = system.c.to_dense();
    for i in 0..nv {
        for j in 0..nv {
            k_full[(i, j)] = a[(i, j)];
        }
    }
    for i in 0..nq {
        for j in 0..nv {
            k_full[(nv + i, j)] = b[(i, j)];
            k_full[(j, nv + i)] = b[(i, j)];
        }
        for j in 0..nq {
            k_full[(nv + i, nv + j)] = -c[(i, j)];
        }
    }
    let (pv, pq) = precond.to_dense();
    let mut p_full = DenseMatrix::zeros(n, n);
    for i in 0..nv {
        for j in 0..nv {
            p_full[(i, j)] = pv[(i, j)];
        }
    }
    for i in 0..nq {
        for j in 0..nq {
            p_full[(nv + i, nv + j)] = pq[(i, j)];
        }
    }
    let (vals, _) = gen_sym_eig(&k_full, &p_full)?;
    Ok(vals)
}

/// The problem's own consistency check next to the preconditioner check.
pub fn check_system_and_precond(
    system: &SaddleSystem,
    precond: &BlockDiagPreconditioner,
) -> (ConsistencyReport, ConsistencyReport) {
    (check_problem_consistency(system), check_precond_consistency(system, precond))
}
