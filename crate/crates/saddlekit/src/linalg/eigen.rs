//! Dense symmetric eigenvalue solver (cyclic Jacobi), the generalized form
//! for SPD pencils, and interpolation between SPD matrices.

use super::{DenseMatrix, LinalgError};

const MAX_SWEEPS: usize = 64;

/// Eigenvalues (ascending) and orthonormal eigenvectors (columns) of a
/// symmetric matrix, by cyclic Jacobi rotations.
pub fn sym_eig(m: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix), LinalgError> {
    if m.n_rows() != m.n_cols() {
        return Err(LinalgError::ShapeMismatch { context: "sym_eig needs a square matrix".into() });
    }
    if !m.is_symmetric(1e-12) {
        return Err(LinalgError::NotSymmetric);
    }
    let n = m.n_rows();
    let mut a = m.clone();
    a.symmetrize();
    let mut v = DenseMatrix::identity(n);
    if n <= 1 {
        let vals = (0..n).map(|i| a[(i, i)]).collect();
        return Ok((vals, v));
    }

    let norm = a.frobenius_norm().max(f64::MIN_POSITIVE);
    let tol = 1e-15 * norm;
    for _ in 0..MAX_SWEEPS {
        let mut off = 0.0f64;
        for i in 0..n {
            for j in i + 1..n {
                off += a[(i, j)] * a[(i, j)];
            }
        }
        if (2.0 * off).sqrt() <= tol {
            let mut pairs: Vec<(f64, usize)> = (0..n).map(|i| (a[(i, i)], i)).collect();
            pairs.sort_by(|x, y| x.0.partial_cmp(&y.0).unwrap());
            let vals: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let vecs = DenseMatrix::from_fn(n, n, |i, j| v[(i, pairs[j].1)]);
            return Ok((vals, vecs));
        }
        for p in 0..n - 1 {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq.abs() <= 0.1 * tol / (n as f64) {
                    continue;
                }
                let app = a[(p, p)];
                let aqq = a[(q, q)];
                let tau = (aqq - app) / (2.0 * apq);
                let t = if tau >= 0.0 {
                    1.0 / (tau + (1.0 + tau * tau).sqrt())
                } else {
                    -1.0 / (-tau + (1.0 + tau * tau).sqrt())
                };
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
                for k in 0..n {
                    let vkp = v[(k, p)];
                    let vkq = v[(k, q)];
                    v[(k, p)] = c * vkp - s * vkq;
                    v[(k, q)] = s * vkp + c * vkq;
                }
            }
        }
    }
    Err(LinalgError::EigenNoConvergence { sweeps: MAX_SWEEPS })
}

/// Generalized pairs of `a x = lambda b x` for symmetric `a` and SPD `b`.
/// Eigenvalues ascend; eigenvector columns are `b`-orthonormal.
pub fn gen_sym_eig(a: &DenseMatrix, b: &DenseMatrix) -> Result<(Vec<f64>, DenseMatrix), LinalgError> {
    if a.n_rows() != b.n_rows() || a.n_cols() != b.n_cols() {
        return Err(LinalgError::ShapeMismatch { context: "gen_sym_eig operands differ in size".into() });
    }
    let l = b.cholesky_lower()?;
    let f = l.congruence_from_cholesky(a);
    let (vals, y) = sym_eig(&f)?;
    let n = a.n_rows();
    let mut x = DenseMatrix::zeros(n, n);
    for j in 0..n {
        let col: Vec<f64> = (0..n).map(|i| y[(i, j)]).collect();
        let sol = l.backward_solve_transpose(&col);
        for i in 0..n {
            x[(i, j)] = sol[i];
        }
    }
    Ok((vals, x))
}

/// Fractional power of an SPD matrix through its eigendecomposition.
fn spd_power(m: &DenseMatrix, exponent: f64) -> Result<DenseMatrix, LinalgError> {
    let (vals, vecs) = sym_eig(m)?;
    let scale = vals.iter().fold(0.0f64, |mx, v| mx.max(v.abs()));
    if let Some(pivot) = vals.iter().position(|&v| v <= 1e-14 * scale) {
        return Err(LinalgError::NotPositiveDefinite { pivot });
    }
    let n = m.n_rows();
    let mut out = DenseMatrix::zeros(n, n);
    for k in 0..n {
        let w = vals[k].powf(exponent);
        for i in 0..n {
            let vik = vecs[(i, k)] * w;
            for j in 0..=i {
                out[(i, j)] += vik * vecs[(j, k)];
            }
        }
    }
    for i in 0..n {
        for j in 0..i {
            out[(j, i)] = out[(i, j)];
        }
    }
    Ok(out)
}

/// Interpolation `[v, w]_theta = v^{1/2} (v^{-1/2} w v^{-1/2})^theta v^{1/2}`
/// between SPD matrices of equal size.
pub fn spd_interpolate(
    v: &DenseMatrix,
    w: &DenseMatrix,
    theta: f64,
) -> Result<DenseMatrix, LinalgError> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(LinalgError::ThetaOutOfRange(theta));
    }
    if v.n_rows() != w.n_rows() || v.n_cols() != w.n_cols() {
        return Err(LinalgError::ShapeMismatch { context: "spd_interpolate operands differ in size".into() });
    }
    let v_half = spd_power(v, 0.5)?;
    let v_inv_half = spd_power(v, -0.5)?;
    let mut inner = v_inv_half.matmul(w).matmul(&v_inv_half);
    inner.symmetrize();
    let inner_pow = spd_power(&inner, theta)?;
    let mut out = v_half.matmul(&inner_pow).matmul(&v_half);
    out.symmetrize();
    Ok(out)
}
