//! Envelope (profile) sparse Cholesky with a reverse Cuthill–McKee
//! fill-reducing ordering.

use super::{CsrMatrix, LinalgError};
use crate::units::Dimension;

/// Row permutation applied before factorization. Orderings are pluggable;
/// reverse Cuthill–McKee keeps the profile small on the structured meshes
/// used here.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Ordering {
    Natural,
    #[default]
    ReverseCuthillMcKee,
}

/// `P A P^T = L L^T` factor stored by envelope rows.
#[derive(Debug, Clone)]
pub struct CholeskyFactor {
    n: usize,
    /// perm[new] = old
    perm: Vec<usize>,
    /// first column of the envelope of each row
    first: Vec<usize>,
    /// start of each row's envelope slice in `env`
    row_start: Vec<usize>,
    env: Vec<f64>,
    dim: Option<Dimension>,
    ordering: Ordering,
}

/// Reverse Cuthill–McKee ordering of a symmetric sparsity pattern.
/// Returns `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(m: &CsrMatrix) -> Vec<usize> {
    let n = m.n_rows();
    let degree: Vec<usize> = (0..n).map(|i| m.row(i).0.len()).collect();
    let mut visited = vec![false; n];
    let mut order: Vec<usize> = Vec::with_capacity(n);

    while order.len() < n {
        // Pseudo-peripheral start: lowest-degree unvisited node, pushed to the
        // far end of its component by repeated BFS.
        let mut start = (0..n)
            .filter(|&i| !visited[i])
            .min_by_key(|&i| degree[i])
            .unwrap();
        loop {
            let levels = bfs_levels(m, start, &visited);
            let last_level = *levels.iter().filter(|&&l| l != usize::MAX).max().unwrap();
            let candidate = (0..n)
                .filter(|&i| levels[i] == last_level)
                .min_by_key(|&i| degree[i])
                .unwrap();
            if candidate == start {
                break;
            }
            let cand_levels = bfs_levels(m, candidate, &visited);
            let cand_ecc = *cand_levels.iter().filter(|&&l| l != usize::MAX).max().unwrap();
            if cand_ecc > last_level {
                start = candidate;
            } else {
                start = candidate;
                break;
            }
        }

        // Cuthill–McKee BFS with neighbors in ascending degree order.
        let component_begin = order.len();
        visited[start] = true;
        order.push(start);
        let mut head = component_begin;
        while head < order.len() {
            let u = order[head];
            head += 1;
            let mut neighbors: Vec<usize> = m.row(u).0.iter().copied().filter(|&v| !visited[v]).collect();
            neighbors.sort_unstable_by_key(|&v| (degree[v], v));
            for v in neighbors {
                visited[v] = true;
                order.push(v);
            }
        }
        order[component_begin..].reverse();
    }
    order
}

fn bfs_levels(m: &CsrMatrix, start: usize, excluded: &[bool]) -> Vec<usize> {
    let n = m.n_rows();
    let mut level = vec![usize::MAX; n];
    level[start] = 0;
    let mut queue = std::collections::VecDeque::from([start]);
    while let Some(u) = queue.pop_front() {
        for &v in m.row(u).0 {
            if !excluded[v] && level[v] == usize::MAX {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    level
}

/// Cholesky factorization of a symmetric positive definite CSR matrix.
pub fn cholesky(m: &CsrMatrix, ordering: Ordering) -> Result<CholeskyFactor, LinalgError> {
    if m.n_rows() != m.n_cols() {
        return Err(LinalgError::ShapeMismatch { context: "cholesky needs a square matrix".into() });
    }
    m.ensure_symmetric(1e-12)?;
    let n = m.n_rows();
    let perm = match ordering {
        Ordering::Natural => (0..n).collect::<Vec<_>>(),
        Ordering::ReverseCuthillMcKee => reverse_cuthill_mckee(m),
    };
    let mut iperm = vec![0usize; n];
    for (new, &old) in perm.iter().enumerate() {
        iperm[old] = new;
    }

    // Envelope of the permuted lower triangle.
    let mut first: Vec<usize> = (0..n).collect();
    for new_row in 0..n {
        let old_row = perm[new_row];
        for &old_col in m.row(old_row).0 {
            let new_col = iperm[old_col];
            if new_col < first[new_row] {
                first[new_row] = new_col;
            }
        }
    }
    let mut row_start = Vec::with_capacity(n + 1);
    row_start.push(0usize);
    for i in 0..n {
        row_start.push(row_start[i] + (i - first[i] + 1));
    }
    let mut env = vec![0.0f64; row_start[n]];
    for new_row in 0..n {
        let old_row = perm[new_row];
        let (cols, vals) = m.row(old_row);
        for (&old_col, &v) in cols.iter().zip(vals) {
            let new_col = iperm[old_col];
            if new_col <= new_row {
                env[row_start[new_row] + (new_col - first[new_row])] = v;
            }
        }
    }

    // In-place envelope factorization.
    for i in 0..n {
        let fi = first[i];
        let (lower, row_i) = env.split_at_mut(row_start[i]);
        let row_i = &mut row_i[..(i - fi + 1)];
        for j in fi..i {
            let fj = first[j];
            let row_j = &lower[row_start[j]..row_start[j + 1]];
            let begin = fi.max(fj);
            let mut sum = row_i[j - fi];
            // dot of overlapping envelope segments [begin, j)
            let seg_i = &row_i[(begin - fi)..(j - fi)];
            let seg_j = &row_j[(begin - fj)..(j - fj)];
            for (a, b) in seg_i.iter().zip(seg_j) {
                sum -= a * b;
            }
            row_i[j - fi] = sum / row_j[j - fj];
        }
        let mut d = row_i[i - fi];
        for k in 0..(i - fi) {
            d -= row_i[k] * row_i[k];
        }
        if d <= 0.0 || !d.is_finite() {
            return Err(LinalgError::NotPositiveDefinite { pivot: perm[i] });
        }
        row_i[i - fi] = d.sqrt();
    }

    Ok(CholeskyFactor { n, perm, first, row_start, env, dim: m.dim(), ordering })
}

impl CholeskyFactor {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn ordering(&self) -> Ordering {
        self.ordering
    }

    /// Dimension of the factored matrix, if one was attached.
    pub fn dim(&self) -> Option<Dimension> {
        self.dim
    }

    /// Dimension of `A^{-1} rhs` when the right-hand side carries `rhs_dim`.
    pub fn solution_dimension(&self, rhs_dim: Dimension) -> Option<Dimension> {
        self.dim.map(|d| rhs_dim / d)
    }

    /// Number of stored envelope entries (diagnostic).
    pub fn profile(&self) -> usize {
        self.env.len()
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = vec![0.0; self.n];
        self.solve_into(b, &mut x);
        x
    }

    /// Forward half-solve `y = L^{-1} (P b)`, left in permuted coordinates.
    /// Together with [`Self::half_backward`] this exposes the congruence
    /// `L^{-1} (P A P^T) L^{-T}` whose spectrum matches the pencil `(A, M)`.
    pub fn half_forward(&self, b: &[f64]) -> Vec<f64> {
        assert_eq!(b.len(), self.n);
        let mut y: Vec<f64> = (0..self.n).map(|i| b[self.perm[i]]).collect();
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.env[self.row_start[i]..self.row_start[i + 1]];
            let mut acc = y[i];
            for (k, l) in row[..row.len() - 1].iter().enumerate() {
                acc -= l * y[fi + k];
            }
            y[i] = acc / row[row.len() - 1];
        }
        y
    }

    /// Backward half-solve `x = P^T L^{-T} y` for `y` in permuted coordinates.
    pub fn half_backward(&self, y: &[f64]) -> Vec<f64> {
        assert_eq!(y.len(), self.n);
        let mut t = y.to_vec();
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.env[self.row_start[i]..self.row_start[i + 1]];
            let ti = t[i] / row[row.len() - 1];
            t[i] = ti;
            for (k, l) in row[..row.len() - 1].iter().enumerate() {
                t[fi + k] -= l * ti;
            }
        }
        let mut x = vec![0.0; self.n];
        for i in 0..self.n {
            x[self.perm[i]] = t[i];
        }
        x
    }

    pub fn solve_into(&self, b: &[f64], x: &mut [f64]) {
        assert_eq!(b.len(), self.n);
        assert_eq!(x.len(), self.n);
        let mut y = vec![0.0f64; self.n];
        for i in 0..self.n {
            y[i] = b[self.perm[i]];
        }
        // forward: L y' = y
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.env[self.row_start[i]..self.row_start[i + 1]];
            let mut acc = y[i];
            for (k, l) in row[..row.len() - 1].iter().enumerate() {
                acc -= l * y[fi + k];
            }
            y[i] = acc / row[row.len() - 1];
        }
        // backward: L^T x' = y'
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.env[self.row_start[i]..self.row_start[i + 1]];
            let xi = y[i] / row[row.len() - 1];
            y[i] = xi;
            for (k, l) in row[..row.len() - 1].iter().enumerate() {
                y[fi + k] -= l * xi;
            }
        }
        for i in 0..self.n {
            x[self.perm[i]] = y[i];
        }
    }
}
