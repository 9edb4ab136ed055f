//! Row-major dense matrices, dense Cholesky, and a pivoted symmetric
//! indefinite factorization used as the direct-solve reference for the
//! saddle-point systems.

use super::LinalgError;
use std::ops::{Index, IndexMut};

#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    n_rows: usize,
    n_cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(n_rows: usize, n_cols: usize) -> DenseMatrix {
        DenseMatrix { n_rows, n_cols, data: vec![0.0; n_rows * n_cols] }
    }

    pub fn identity(n: usize) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_fn(n_rows: usize, n_cols: usize, f: impl Fn(usize, usize) -> f64) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(n_rows, n_cols);
        for i in 0..n_rows {
            for j in 0..n_cols {
                m[(i, j)] = f(i, j);
            }
        }
        m
    }

    pub fn diagonal(d: &[f64]) -> DenseMatrix {
        let mut m = DenseMatrix::zeros(d.len(), d.len());
        for (i, v) in d.iter().enumerate() {
            m[(i, i)] = *v;
        }
        m
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.n_cols);
        (0..self.n_rows).map(|i| super::dot(self.row(i), x)).collect()
    }

    pub fn matmul(&self, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n_cols, other.n_rows);
        let mut out = DenseMatrix::zeros(self.n_rows, other.n_cols);
        for i in 0..self.n_rows {
            for k in 0..self.n_cols {
                let aik = self[(i, k)];
                if aik == 0.0 {
                    continue;
                }
                let orow = other.row(k);
                let out_row = &mut out.data[i * out.n_cols..(i + 1) * out.n_cols];
                for (o, v) in out_row.iter_mut().zip(orow) {
                    *o += aik * v;
                }
            }
        }
        out
    }

    pub fn transpose(&self) -> DenseMatrix {
        DenseMatrix::from_fn(self.n_cols, self.n_rows, |i, j| self[(j, i)])
    }

    pub fn scaled(&self, alpha: f64) -> DenseMatrix {
        let mut m = self.clone();
        for v in &mut m.data {
            *v *= alpha;
        }
        m
    }

    pub fn add_scaled(&self, alpha: f64, other: &DenseMatrix) -> DenseMatrix {
        assert_eq!(self.n_rows, other.n_rows);
        assert_eq!(self.n_cols, other.n_cols);
        let mut m = self.clone();
        for (v, o) in m.data.iter_mut().zip(&other.data) {
            *v += alpha * o;
        }
        m
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    pub fn is_symmetric(&self, rel_tol: f64) -> bool {
        if self.n_rows != self.n_cols {
            return false;
        }
        let scale = self.max_abs().max(f64::MIN_POSITIVE);
        for i in 0..self.n_rows {
            for j in 0..i {
                if (self[(i, j)] - self[(j, i)]).abs() > rel_tol * scale {
                    return false;
                }
            }
        }
        true
    }

    /// Replaces the matrix by its symmetric part.
    pub fn symmetrize(&mut self) {
        assert_eq!(self.n_rows, self.n_cols);
        for i in 0..self.n_rows {
            for j in 0..i {
                let avg = 0.5 * (self[(i, j)] + self[(j, i)]);
                self[(i, j)] = avg;
                self[(j, i)] = avg;
            }
        }
    }

    /// Lower Cholesky factor of an SPD matrix.
    pub fn cholesky_lower(&self) -> Result<DenseMatrix, LinalgError> {
        assert_eq!(self.n_rows, self.n_cols);
        let n = self.n_rows;
        let mut l = DenseMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut sum = self[(i, j)];
                for k in 0..j {
                    sum -= l[(i, k)] * l[(j, k)];
                }
                if i == j {
                    if sum <= 0.0 || !sum.is_finite() {
                        return Err(LinalgError::NotPositiveDefinite { pivot: i });
                    }
                    l[(i, i)] = sum.sqrt();
                } else {
                    l[(i, j)] = sum / l[(j, j)];
                }
            }
        }
        Ok(l)
    }

    /// Solves `L y = b` for lower-triangular `L`.
    pub fn forward_solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n_rows;
        let mut y = b.to_vec();
        for i in 0..n {
            let mut acc = y[i];
            for k in 0..i {
                acc -= self[(i, k)] * y[k];
            }
            y[i] = acc / self[(i, i)];
        }
        y
    }

    /// Solves `L^T x = b` for lower-triangular `L`.
    pub fn backward_solve_transpose(&self, b: &[f64]) -> Vec<f64> {
        let n = self.n_rows;
        let mut x = b.to_vec();
        for i in (0..n).rev() {
            let mut acc = x[i];
            for k in i + 1..n {
                acc -= self[(k, i)] * x[k];
            }
            x[i] = acc / self[(i, i)];
        }
        x
    }

    /// Congruence `L^{-1} A L^{-T}` for lower-triangular `self = L`.
    pub fn congruence_from_cholesky(&self, a: &DenseMatrix) -> DenseMatrix {
        let n = self.n_rows;
        assert_eq!(a.n_rows, n);
        // Solve L X = A column-wise, then L Y = X^T.
        let mut x = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let col: Vec<f64> = (0..n).map(|i| a[(i, j)]).collect();
            let sol = self.forward_solve(&col);
            for i in 0..n {
                x[(i, j)] = sol[i];
            }
        }
        let xt = x.transpose();
        let mut out = DenseMatrix::zeros(n, n);
        for j in 0..n {
            let col: Vec<f64> = (0..n).map(|i| xt[(i, j)]).collect();
            let sol = self.forward_solve(&col);
            for i in 0..n {
                out[(i, j)] = sol[i];
            }
        }
        out.symmetrize();
        out
    }
}

impl Index<(usize, usize)> for DenseMatrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.n_cols + j]
    }
}

impl IndexMut<(usize, usize)> for DenseMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.n_cols + j]
    }
}

/// Pivoted `L D L^T` factorization of a dense symmetric (possibly indefinite)
/// matrix, with 1x1 and 2x2 diagonal blocks.
#[derive(Debug, Clone)]
pub struct SymmetricIndefiniteFactor {
    fac: DenseMatrix,
    ipiv: Vec<i64>,
}

const PIVOT_ALPHA: f64 = 0.6403882032022076; // (1 + sqrt(17)) / 8

impl SymmetricIndefiniteFactor {
    pub fn new(a: &DenseMatrix) -> Result<Self, LinalgError> {
        assert_eq!(a.n_rows(), a.n_cols());
        let n = a.n_rows();
        let mut m = a.clone();
        m.symmetrize();
        let mut ipiv = vec![0i64; n];
        let mut k = 0usize;
        while k < n {
            let absakk = m[(k, k)].abs();
            let (imax, colmax) = {
                let mut imax = k;
                let mut colmax = 0.0f64;
                for i in k + 1..n {
                    let v = m[(i, k)].abs();
                    if v > colmax {
                        colmax = v;
                        imax = i;
                    }
                }
                (imax, colmax)
            };
            if absakk.max(colmax) == 0.0 {
                return Err(LinalgError::Singular { step: k });
            }
            let (kstep, kp);
            if absakk >= PIVOT_ALPHA * colmax {
                kstep = 1;
                kp = k;
            } else {
                let mut rowmax = 0.0f64;
                for j in k..imax {
                    rowmax = rowmax.max(m[(imax, j)].abs());
                }
                for i in imax + 1..n {
                    rowmax = rowmax.max(m[(i, imax)].abs());
                }
                if absakk * rowmax >= PIVOT_ALPHA * colmax * colmax {
                    kstep = 1;
                    kp = k;
                } else if m[(imax, imax)].abs() >= PIVOT_ALPHA * rowmax {
                    kstep = 1;
                    kp = imax;
                } else {
                    kstep = 2;
                    kp = imax;
                }
            }
            let kk = k + kstep - 1;
            if kp != kk {
                // Interchange only within the trailing submatrix; columns
                // holding finalized multipliers must stay in place.
                symmetric_swap_trailing(&mut m, k, kk, kp);
            }
            if kstep == 1 {
                let d = m[(k, k)];
                if d == 0.0 {
                    return Err(LinalgError::Singular { step: k });
                }
                let col: Vec<f64> = (k + 1..n).map(|i| m[(i, k)]).collect();
                for i in k + 1..n {
                    let l = col[i - k - 1] / d;
                    for j in k + 1..=i {
                        m[(i, j)] -= l * col[j - k - 1];
                        if i != j {
                            m[(j, i)] = m[(i, j)];
                        }
                    }
                    m[(i, k)] = l;
                }
                ipiv[k] = kp as i64;
                k += 1;
            } else {
                let d11 = m[(k, k)];
                let d21 = m[(k + 1, k)];
                let d22 = m[(k + 1, k + 1)];
                let det = d11 * d22 - d21 * d21;
                if det == 0.0 {
                    return Err(LinalgError::Singular { step: k });
                }
                let col1: Vec<f64> = (k + 2..n).map(|i| m[(i, k)]).collect();
                let col2: Vec<f64> = (k + 2..n).map(|i| m[(i, k + 1)]).collect();
                for i in k + 2..n {
                    let b1 = col1[i - k - 2];
                    let b2 = col2[i - k - 2];
                    let l1 = (d22 * b1 - d21 * b2) / det;
                    let l2 = (d11 * b2 - d21 * b1) / det;
                    for j in k + 2..=i {
                        m[(i, j)] -= l1 * col1[j - k - 2] + l2 * col2[j - k - 2];
                        if i != j {
                            m[(j, i)] = m[(i, j)];
                        }
                    }
                    m[(i, k)] = l1;
                    m[(i, k + 1)] = l2;
                }
                ipiv[k] = -(kp as i64) - 1;
                ipiv[k + 1] = ipiv[k];
                k += 2;
            }
        }
        Ok(SymmetricIndefiniteFactor { fac: m, ipiv })
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let n = self.ipiv.len();
        assert_eq!(b.len(), n);
        let mut x = b.to_vec();
        let fac = &self.fac;

        // Forward: x <- L^{-1} (P-interleaved) x
        let mut k = 0usize;
        while k < n {
            if self.ipiv[k] >= 0 {
                let kp = self.ipiv[k] as usize;
                if kp != k {
                    x.swap(k, kp);
                }
                let xk = x[k];
                for i in k + 1..n {
                    x[i] -= fac[(i, k)] * xk;
                }
                k += 1;
            } else {
                let kp = (-self.ipiv[k] - 1) as usize;
                if kp != k + 1 {
                    x.swap(k + 1, kp);
                }
                let xk = x[k];
                let xk1 = x[k + 1];
                for i in k + 2..n {
                    x[i] -= fac[(i, k)] * xk + fac[(i, k + 1)] * xk1;
                }
                k += 2;
            }
        }

        // Diagonal blocks
        let mut k = 0usize;
        while k < n {
            if self.ipiv[k] >= 0 {
                x[k] /= fac[(k, k)];
                k += 1;
            } else {
                let d11 = fac[(k, k)];
                let d21 = fac[(k + 1, k)];
                let d22 = fac[(k + 1, k + 1)];
                let det = d11 * d22 - d21 * d21;
                let b1 = x[k];
                let b2 = x[k + 1];
                x[k] = (d22 * b1 - d21 * b2) / det;
                x[k + 1] = (d11 * b2 - d21 * b1) / det;
                k += 2;
            }
        }

        // Backward: x <- P^T L^{-T} x, replaying steps in reverse
        let mut k = n as i64 - 1;
        while k >= 0 {
            let ku = k as usize;
            if self.ipiv[ku] >= 0 {
                let mut acc = x[ku];
                for i in ku + 1..n {
                    acc -= fac[(i, ku)] * x[i];
                }
                x[ku] = acc;
                let kp = self.ipiv[ku] as usize;
                if kp != ku {
                    x.swap(ku, kp);
                }
                k -= 1;
            } else {
                let ks = ku - 1;
                let mut acc0 = x[ks];
                let mut acc1 = x[ku];
                for i in ku + 1..n {
                    acc0 -= fac[(i, ks)] * x[i];
                    acc1 -= fac[(i, ku)] * x[i];
                }
                x[ks] = acc0;
                x[ku] = acc1;
                let kp = (-self.ipiv[ku] - 1) as usize;
                if kp != ku {
                    x.swap(ku, kp);
                }
                k -= 2;
            }
        }
        x
    }
}

/// Symmetric interchange of rows/columns `i1` and `i2`, restricted to the
/// trailing submatrix starting at row/column `k`.
fn symmetric_swap_trailing(m: &mut DenseMatrix, k: usize, i1: usize, i2: usize) {
    let n = m.n_rows();
    for j in k..n {
        let a = m[(i1, j)];
        let b = m[(i2, j)];
        m[(i1, j)] = b;
        m[(i2, j)] = a;
    }
    for i in k..n {
        let a = m[(i, i1)];
        let b = m[(i, i2)];
        m[(i, i1)] = b;
        m[(i, i2)] = a;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn residual(a: &DenseMatrix, x: &[f64], b: &[f64]) -> f64 {
        let ax = a.matvec(x);
        let num: f64 = ax.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>().sqrt();
        let den: f64 = b.iter().map(|q| q * q).sum::<f64>().sqrt();
        num / den.max(f64::MIN_POSITIVE)
    }

    fn pseudo_random(n: usize, seed: u64) -> Vec<f64> {
        let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
        (0..n)
            .map(|_| {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                ((state >> 11) as f64) / ((1u64 << 53) as f64) - 0.5
            })
            .collect()
    }

    #[test]
    fn cholesky_small() {
        let a = DenseMatrix::from_fn(2, 2, |i, j| [[4.0, 2.0], [2.0, 3.0]][i][j]);
        let l = a.cholesky_lower().unwrap();
        assert!((l[(0, 0)] - 2.0).abs() < 1e-15);
        assert!((l[(1, 0)] - 1.0).abs() < 1e-15);
        assert!((l[(1, 1)] - 2.0f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = DenseMatrix::from_fn(2, 2, |i, j| [[1.0, 2.0], [2.0, 1.0]][i][j]);
        match a.cholesky_lower() {
            Err(LinalgError::NotPositiveDefinite { pivot }) => assert_eq!(pivot, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn indefinite_factor_solves_zero_diagonal() {
        // Forces a 2x2 pivot immediately.
        let a = DenseMatrix::from_fn(2, 2, |i, j| [[0.0, 1.0], [1.0, 0.0]][i][j]);
        let f = SymmetricIndefiniteFactor::new(&a).unwrap();
        let x = f.solve(&[3.0, 5.0]);
        assert!((x[0] - 5.0).abs() < 1e-14);
        assert!((x[1] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn indefinite_factor_random_and_saddle() {
        for n in [1usize, 2, 3, 7, 25, 60] {
            let vals = pseudo_random(n * n, n as u64);
            let mut a = DenseMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..=i {
                    let v = vals[i * n + j];
                    a[(i, j)] = v;
                    a[(j, i)] = v;
                }
                // push some diagonals negative to force indefiniteness
                if i % 3 == 0 {
                    a[(i, i)] -= 2.0;
                }
            }
            let b = pseudo_random(n, 17 + n as u64);
            let f = SymmetricIndefiniteFactor::new(&a).unwrap();
            let x = f.solve(&b);
            assert!(residual(&a, &x, &b) < 1e-10, "n={n}");
        }

        // Saddle structure [I, B^T; B, 0]
        let nv = 8;
        let nq = 3;
        let n = nv + nq;
        let bvals = pseudo_random(nq * nv, 99);
        let mut a = DenseMatrix::zeros(n, n);
        for i in 0..nv {
            a[(i, i)] = 1.0;
        }
        for i in 0..nq {
            for j in 0..nv {
                a[(nv + i, j)] = bvals[i * nv + j];
                a[(j, nv + i)] = bvals[i * nv + j];
            }
        }
        let b = pseudo_random(n, 7);
        let f = SymmetricIndefiniteFactor::new(&a).unwrap();
        let x = f.solve(&b);
        assert!(residual(&a, &x, &b) < 1e-10);
    }

    #[test]
    fn congruence_reproduces_identity() {
        let a = DenseMatrix::from_fn(3, 3, |i, j| if i == j { 2.0 + i as f64 } else { 0.5 });
        let l = a.cholesky_lower().unwrap();
        let f = l.congruence_from_cholesky(&a);
        for i in 0..3 {
            for j in 0..3 {
                let expect = if i == j { 1.0 } else { 0.0 };
                assert!((f[(i, j)] - expect).abs() < 1e-14);
            }
        }
    }
}
