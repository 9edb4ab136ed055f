//! Preconditioned MINRES for self-adjoint saddle-point systems, with the
//! residual monitored block-by-block in the preconditioner-induced norms,
//! and unpreconditioned CG for nested inner solves.

use crate::linalg::{axpy, dot, ensure_finite, norm2, LinalgError};
use std::time::{Duration, Instant};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum KrylovError {
    #[error("preconditioner is not positive definite: <z, r> = {inner} at iteration {iteration}")]
    IndefinitePreconditioner { inner: f64, iteration: usize },
    #[error("non-finite values encountered at iteration {iteration}")]
    Divergence { iteration: usize },
    #[error("conjugate gradient hit the iteration cap {max_iterations} (relative residual {relative_residual:.3e})")]
    CgMaxIterations { max_iterations: usize, relative_residual: f64 },
    #[error("conjugate gradient direction of non-positive curvature: p^T A p = {curvature}")]
    CgIndefiniteOperator { curvature: f64 },
    #[error(transparent)]
    Linalg(#[from] LinalgError),
}

/// Symmetric block operator `[A, B^T; B, -C]` acting on concatenated
/// `[v; q]` coefficient vectors.
pub trait SaddleOperator {
    fn dim_v(&self) -> usize;
    fn dim_q(&self) -> usize;
    fn apply(&self, x: &[f64], y: &mut [f64]);

    fn dim(&self) -> usize {
        self.dim_v() + self.dim_q()
    }
}

/// SPD block-diagonal preconditioner action `z = P^{-1} r`, with the
/// per-field split of each block exposed for residual monitoring.
pub trait BlockPreconditioner {
    fn dim_v(&self) -> usize;
    fn dim_q(&self) -> usize;
    fn apply_inverse(&self, r: &[f64], z: &mut [f64]) -> Result<(), KrylovError>;

    /// Field boundaries inside the first block, as offsets including both
    /// endpoints (e.g. `[0, n]` for a single field).
    fn v_field_offsets(&self) -> Vec<usize> {
        vec![0, self.dim_v()]
    }

    fn q_field_offsets(&self) -> Vec<usize> {
        vec![0, self.dim_q()]
    }
}

/// Stopping rule: relative reduction of the total preconditioned residual
/// norm from its initial value, with an iteration cap.
#[derive(Debug, Clone, Copy)]
pub struct StoppingRule {
    pub relative_reduction: f64,
    pub max_iterations: usize,
}

impl Default for StoppingRule {
    fn default() -> Self {
        StoppingRule { relative_reduction: 1e-6, max_iterations: 500 }
    }
}

impl StoppingRule {
    pub fn new(relative_reduction: f64, max_iterations: usize) -> Self {
        assert!(relative_reduction > 0.0 && relative_reduction < 1.0);
        StoppingRule { relative_reduction, max_iterations }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
    Breakdown,
}

/// One residual record; index 0 is the initial residual.
#[derive(Debug, Clone)]
pub struct SolveRecord {
    /// ||r_1||_{P_V^{-1}} from the recomputed true residual
    pub r1_norm: f64,
    /// ||r_2||_{P_Q^{-1}}
    pub r2_norm: f64,
    /// total norm, sqrt(r1^2 + r2^2)
    pub total_norm: f64,
    /// per-field splits of the block norms
    pub r1_fields: Vec<f64>,
    pub r2_fields: Vec<f64>,
    /// residual norm carried by the MINRES recurrence
    pub recurred_norm: f64,
}

#[derive(Debug, Clone)]
pub struct SolveHistory {
    pub records: Vec<SolveRecord>,
    pub status: SolveStatus,
    /// Number of MINRES steps taken (excludes the initial residual record).
    pub iterations: usize,
    pub wall_time: Duration,
}

impl SolveHistory {
    /// Iteration count in the reporting convention of the experiment tables:
    /// the number of preconditioned residual evaluations up to and including
    /// the first one meeting `rule`, i.e. the 1-based index of that record.
    pub fn reported_count(&self, rule: &StoppingRule) -> Option<usize> {
        let initial = self.records.first()?.total_norm;
        if initial == 0.0 {
            return Some(1);
        }
        self.records
            .iter()
            .position(|r| r.total_norm <= rule.relative_reduction * initial)
            .map(|i| i + 1)
    }

    pub fn final_total_norm(&self) -> f64 {
        self.records.last().map_or(0.0, |r| r.total_norm)
    }

    pub fn initial_total_norm(&self) -> f64 {
        self.records.first().map_or(0.0, |r| r.total_norm)
    }

    /// History as CSV. Scalar-field problems emit
    /// `iter,r1_norm,r2_norm,total_norm`; product spaces emit one column per
    /// field instead of the block columns.
    pub fn to_csv(&self) -> String {
        let multi = self
            .records
            .first()
            .map(|r| r.r1_fields.len().max(r.r2_fields.len()) > 1)
            .unwrap_or(false);
        let mut out = String::new();
        if multi {
            let nf1 = self.records[0].r1_fields.len();
            let nf2 = self.records[0].r2_fields.len();
            out.push_str("iter");
            for i in 0..nf1 {
                out.push_str(&format!(",r1_{}", i + 1));
            }
            for i in 0..nf2 {
                out.push_str(&format!(",r2_{}", i + 1));
            }
            out.push_str(",total_norm\n");
            for (i, r) in self.records.iter().enumerate() {
                out.push_str(&i.to_string());
                for v in r.r1_fields.iter().chain(r.r2_fields.iter()) {
                    out.push_str(&format!(",{v:.17e}"));
                }
                out.push_str(&format!(",{:.17e}\n", r.total_norm));
            }
        } else {
            out.push_str("iter,r1_norm,r2_norm,total_norm\n");
            for (i, r) in self.records.iter().enumerate() {
                out.push_str(&format!(
                    "{i},{:.17e},{:.17e},{:.17e}\n",
                    r.r1_norm, r.r2_norm, r.total_norm
                ));
            }
        }
        out
    }
}

/// Solution of a saddle-point solve, split into the two block components.
#[derive(Debug, Clone)]
pub struct BlockSolution {
    pub v: Vec<f64>,
    pub q: Vec<f64>,
}

fn split_record(
    r: &[f64],
    z: &[f64],
    dim_v: usize,
    v_offsets: &[usize],
    q_offsets: &[usize],
    recurred: f64,
) -> SolveRecord {
    let field_norms = |offsets: &[usize], base: usize| -> Vec<f64> {
        offsets
            .windows(2)
            .map(|w| {
                let lo = base + w[0];
                let hi = base + w[1];
                dot(&r[lo..hi], &z[lo..hi]).max(0.0).sqrt()
            })
            .collect()
    };
    let r1_fields = field_norms(v_offsets, 0);
    let r2_fields = field_norms(q_offsets, dim_v);
    let r1 = r1_fields.iter().map(|x| x * x).sum::<f64>().sqrt();
    let r2 = r2_fields.iter().map(|x| x * x).sum::<f64>().sqrt();
    SolveRecord {
        r1_norm: r1,
        r2_norm: r2,
        total_norm: (r1 * r1 + r2 * r2).sqrt(),
        r1_fields,
        r2_fields,
        recurred_norm: recurred,
    }
}

/// Preconditioned MINRES with a zero initial guess.
///
/// Every iteration recomputes the true residual `b - K x` and applies the
/// preconditioner to it once more, so the recorded per-block norms are
/// measurements rather than recurrences; the recurrence value is kept
/// alongside as a consistency guard. The stopping test uses the measured
/// total norm.
pub fn minres<O: SaddleOperator + ?Sized, P: BlockPreconditioner + ?Sized>(
    operator: &O,
    precond: &P,
    rhs: &[f64],
    rule: &StoppingRule,
) -> Result<(BlockSolution, SolveHistory), KrylovError> {
    let start = Instant::now();
    let n = operator.dim();
    assert_eq!(rhs.len(), n, "right-hand side does not match operator size");
    assert_eq!(precond.dim_v(), operator.dim_v());
    assert_eq!(precond.dim_q(), operator.dim_q());
    ensure_finite(rhs, "minres right-hand side")?;
    let dim_v = operator.dim_v();
    let v_offsets = precond.v_field_offsets();
    let q_offsets = precond.q_field_offsets();

    let mut x = vec![0.0; n];
    let mut v_prev = vec![0.0; n];
    let mut v = rhs.to_vec();
    let mut z = vec![0.0; n];
    precond.apply_inverse(&v, &mut z)?;
    let zv = dot(&z, &v);
    if zv < 0.0 {
        return Err(KrylovError::IndefinitePreconditioner { inner: zv, iteration: 0 });
    }
    let mut gamma = zv.sqrt();

    let mut records = Vec::with_capacity(32);
    records.push(split_record(&v, &z, dim_v, &v_offsets, &q_offsets, gamma));
    let initial_norm = records[0].total_norm;

    if gamma == 0.0 || initial_norm == 0.0 {
        let history = SolveHistory {
            records,
            status: SolveStatus::Converged,
            iterations: 0,
            wall_time: start.elapsed(),
        };
        return Ok((BlockSolution { v: x[..dim_v].to_vec(), q: x[dim_v..].to_vec() }, history));
    }

    let target = rule.relative_reduction * initial_norm;
    let mut gamma_prev = 1.0f64;
    let mut eta = gamma;
    let (mut c_prev, mut c_cur) = (1.0f64, 1.0f64);
    let (mut s_prev, mut s_cur) = (0.0f64, 0.0f64);
    let mut w_prev = vec![0.0; n];
    let mut w_cur = vec![0.0; n];
    let mut kz = vec![0.0; n];
    let mut true_r = vec![0.0; n];
    let mut true_z = vec![0.0; n];

    let mut status = SolveStatus::MaxIterations;
    let mut iterations = 0usize;

    for j in 1..=rule.max_iterations {
        // Lanczos step in the P^{-1} inner product
        for zi in z.iter_mut() {
            *zi /= gamma;
        }
        operator.apply(&z, &mut kz);
        let delta = dot(&kz, &z);
        let mut v_next = kz.clone();
        axpy(-delta / gamma, &v, &mut v_next);
        if j > 1 {
            axpy(-gamma / gamma_prev, &v_prev, &mut v_next);
        }
        let mut z_next = vec![0.0; n];
        precond.apply_inverse(&v_next, &mut z_next)?;
        let zv_next = dot(&z_next, &v_next);
        if zv_next < -1e-13 * initial_norm * initial_norm {
            return Err(KrylovError::IndefinitePreconditioner { inner: zv_next, iteration: j });
        }
        let gamma_next = zv_next.max(0.0).sqrt();

        // Givens rotations on the tridiagonal column
        let alpha0 = c_cur * delta - c_prev * s_cur * gamma;
        let alpha1 = (alpha0 * alpha0 + gamma_next * gamma_next).sqrt();
        let alpha2 = s_cur * delta + c_prev * c_cur * gamma;
        let alpha3 = s_prev * gamma;
        if alpha1 == 0.0 || !alpha1.is_finite() {
            status = SolveStatus::Breakdown;
            break;
        }
        let c_next = alpha0 / alpha1;
        let s_next = gamma_next / alpha1;

        let mut w_next = z.clone();
        axpy(-alpha3, &w_prev, &mut w_next);
        axpy(-alpha2, &w_cur, &mut w_next);
        for wi in w_next.iter_mut() {
            *wi /= alpha1;
        }
        axpy(c_next * eta, &w_next, &mut x);
        eta *= -s_next;
        iterations = j;

        // measured residual
        operator.apply(&x, &mut true_r);
        for (ri, bi) in true_r.iter_mut().zip(rhs) {
            *ri = bi - *ri;
        }
        precond.apply_inverse(&true_r, &mut true_z)?;
        let record = split_record(&true_r, &true_z, dim_v, &v_offsets, &q_offsets, eta.abs());
        if !record.total_norm.is_finite() {
            return Err(KrylovError::Divergence { iteration: j });
        }
        let reached = record.total_norm <= target;
        records.push(record);
        if reached {
            status = SolveStatus::Converged;
            break;
        }
        if gamma_next == 0.0 {
            // Lanczos terminated: the Krylov space is exhausted.
            status = SolveStatus::Breakdown;
            break;
        }

        v_prev = std::mem::take(&mut v);
        v = v_next;
        z = z_next;
        gamma_prev = gamma;
        gamma = gamma_next;
        w_prev = std::mem::take(&mut w_cur);
        w_cur = w_next;
        c_prev = c_cur;
        c_cur = c_next;
        s_prev = s_cur;
        s_cur = s_next;
    }

    let history = SolveHistory { records, status, iterations, wall_time: start.elapsed() };
    Ok((BlockSolution { v: x[..dim_v].to_vec(), q: x[dim_v..].to_vec() }, history))
}

/// Plain conjugate gradients for an SPD operator given as a matrix-vector
/// closure. Stops at `||rhs - A x||_2 <= rel_tol * ||rhs||_2`.
pub fn cg(
    matvec: impl Fn(&[f64], &mut [f64]),
    rhs: &[f64],
    rel_tol: f64,
    max_iterations: usize,
) -> Result<(Vec<f64>, usize), KrylovError> {
    let n = rhs.len();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let rhs_norm = norm2(rhs);
    if rhs_norm == 0.0 {
        return Ok((x, 0));
    }
    let target = rel_tol * rhs_norm;
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    for iteration in 1..=max_iterations {
        matvec(&p, &mut ap);
        let curvature = dot(&p, &ap);
        if curvature <= 0.0 {
            return Err(KrylovError::CgIndefiniteOperator { curvature });
        }
        let alpha = rr / curvature;
        axpy(alpha, &p, &mut x);
        axpy(-alpha, &ap, &mut r);
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() <= target {
            return Ok((x, iteration));
        }
        let beta = rr_next / rr;
        rr = rr_next;
        for (pi, ri) in p.iter_mut().zip(&r) {
            *pi = ri + beta * *pi;
        }
    }
    Err(KrylovError::CgMaxIterations {
        max_iterations,
        relative_residual: norm2(&r) / rhs_norm,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::DenseMatrix;

    struct DenseOperator {
        m: DenseMatrix,
        dim_v: usize,
    }

    impl SaddleOperator for DenseOperator {
        fn dim_v(&self) -> usize {
            self.dim_v
        }
        fn dim_q(&self) -> usize {
            self.m.n_rows() - self.dim_v
        }
        fn apply(&self, x: &[f64], y: &mut [f64]) {
            y.copy_from_slice(&self.m.matvec(x));
        }
    }

    struct IdentityPrecond {
        dim_v: usize,
        dim_q: usize,
    }

    impl BlockPreconditioner for IdentityPrecond {
        fn dim_v(&self) -> usize {
            self.dim_v
        }
        fn dim_q(&self) -> usize {
            self.dim_q
        }
        fn apply_inverse(&self, r: &[f64], z: &mut [f64]) -> Result<(), KrylovError> {
            z.copy_from_slice(r);
            Ok(())
        }
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(3);
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn identity_system_converges_immediately() {
        let op = DenseOperator { m: DenseMatrix::identity(6), dim_v: 4 };
        let pre = IdentityPrecond { dim_v: 4, dim_q: 2 };
        let rhs = pseudo_random(6, 1);
        let rule = StoppingRule::default();
        let (sol, hist) = minres(&op, &pre, &rhs, &rule).unwrap();
        assert_eq!(hist.status, SolveStatus::Converged);
        assert_eq!(hist.iterations, 1);
        assert_eq!(hist.reported_count(&rule), Some(2));
        for (a, b) in sol.v.iter().chain(sol.q.iter()).zip(&rhs) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn two_by_two_indefinite_solves_exactly() {
        let mut m = DenseMatrix::zeros(2, 2);
        m[(0, 0)] = 2.0;
        m[(1, 1)] = -1.0;
        let op = DenseOperator { m, dim_v: 1 };
        let pre = IdentityPrecond { dim_v: 1, dim_q: 1 };
        let (sol, hist) = minres(&op, &pre, &[2.0, 1.0], &StoppingRule::new(1e-12, 10)).unwrap();
        assert!(hist.iterations <= 2);
        assert!((sol.v[0] - 1.0).abs() < 1e-12);
        assert!((sol.q[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn n_step_exactness_on_dense_symmetric_systems() {
        for n in [5usize, 12, 20] {
            let vals = pseudo_random(n * n, n as u64);
            let mut m = DenseMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v = vals[i * n + j];
                    m[(i, j)] = v;
                    m[(j, i)] = v;
                }
                m[(i, i)] += if i % 2 == 0 { 2.0 } else { -2.0 };
            }
            let op = DenseOperator { m, dim_v: n };
            let pre = IdentityPrecond { dim_v: n, dim_q: 0 };
            let rhs = pseudo_random(n, 7 + n as u64);
            let rule = StoppingRule::new(1e-9, n + 3);
            let (_, hist) = minres(&op, &pre, &rhs, &rule).unwrap();
            assert_eq!(hist.status, SolveStatus::Converged, "n={n}");
            assert!(hist.iterations <= n + 1, "n={n}, iters={}", hist.iterations);
        }
    }

    #[test]
    fn history_norms_are_monotone_and_consistent() {
        let n = 16;
        let vals = pseudo_random(n * n, 5);
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                m[(i, j)] = vals[i * n + j];
                m[(j, i)] = vals[i * n + j];
            }
            m[(i, i)] += 4.0;
        }
        let op = DenseOperator { m, dim_v: 10 };
        let pre = IdentityPrecond { dim_v: 10, dim_q: 6 };
        let rhs = pseudo_random(n, 23);
        let (_, hist) = minres(&op, &pre, &rhs, &StoppingRule::new(1e-10, 60)).unwrap();
        let initial = hist.initial_total_norm();
        for w in hist.records.windows(2) {
            assert!(w[1].total_norm <= w[0].total_norm + 1e-10 * initial);
        }
        for r in &hist.records {
            let total = (r.r1_norm.powi(2) + r.r2_norm.powi(2)).sqrt();
            assert!((total - r.total_norm).abs() <= 1e-12 * total.max(1e-300));
            if r.total_norm > 1e-9 * initial {
                assert!((r.recurred_norm - r.total_norm).abs() <= 1e-6 * r.total_norm.max(1e-300));
            }
        }
    }

    #[test]
    fn zero_rhs_is_immediately_converged() {
        let op = DenseOperator { m: DenseMatrix::identity(4), dim_v: 2 };
        let pre = IdentityPrecond { dim_v: 2, dim_q: 2 };
        let rule = StoppingRule::default();
        let (sol, hist) = minres(&op, &pre, &[0.0; 4], &rule).unwrap();
        assert_eq!(hist.status, SolveStatus::Converged);
        assert_eq!(hist.iterations, 0);
        assert_eq!(hist.reported_count(&rule), Some(1));
        assert!(sol.v.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn cg_identity_and_diagonal() {
        let (x, it) = cg(|p, out| out.copy_from_slice(p), &[3.0, -1.0], 1e-12, 10).unwrap();
        assert_eq!(it, 1);
        assert_eq!(x, vec![3.0, -1.0]);

        let d: Vec<f64> = (1..=10).map(|i| i as f64).collect();
        let (x, it) = cg(
            |p, out| {
                for (o, (pi, di)) in out.iter_mut().zip(p.iter().zip(&d)) {
                    *o = pi * di;
                }
            },
            &[1.0; 10],
            1e-12,
            12,
        )
        .unwrap();
        assert!(it <= 10);
        for (i, xi) in x.iter().enumerate() {
            assert!((xi - 1.0 / (i as f64 + 1.0)).abs() < 1e-10);
        }
    }

    #[test]
    fn indefinite_preconditioner_is_reported() {
        struct NegatingPrecond;
        impl BlockPreconditioner for NegatingPrecond {
            fn dim_v(&self) -> usize {
                2
            }
            fn dim_q(&self) -> usize {
                0
            }
            fn apply_inverse(&self, r: &[f64], z: &mut [f64]) -> Result<(), KrylovError> {
                for (zi, ri) in z.iter_mut().zip(r) {
                    *zi = -ri;
                }
                Ok(())
            }
        }
        let op = DenseOperator { m: DenseMatrix::identity(2), dim_v: 2 };
        let err = minres(&op, &NegatingPrecond, &[1.0, 2.0], &StoppingRule::default()).unwrap_err();
        assert!(matches!(err, KrylovError::IndefinitePreconditioner { iteration: 0, .. }));
    }

    #[test]
    fn cg_rejects_indefinite_directions() {
        let err = cg(
            |p, out| {
                out[0] = -p[0];
            },
            &[1.0],
            1e-10,
            5,
        )
        .unwrap_err();
        assert!(matches!(err, KrylovError::CgIndefiniteOperator { .. }));
    }

    #[test]
    fn csv_export_shapes() {
        let op = DenseOperator { m: DenseMatrix::identity(3), dim_v: 2 };
        let pre = IdentityPrecond { dim_v: 2, dim_q: 1 };
        let (_, hist) = minres(&op, &pre, &[1.0, 2.0, 3.0], &StoppingRule::default()).unwrap();
        let csv = hist.to_csv();
        assert!(csv.starts_with("iter,r1_norm,r2_norm,total_norm\n"));
        assert_eq!(csv.lines().count(), 1 + hist.records.len());
    }
}
