//! Sparse symmetric storage, preconditioned conjugate gradients and a
//! profile (envelope) Cholesky factorization.

use crate::error::{Error, Result};

/// Compressed sparse row matrix.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    n: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    /// Builds an `n × n` matrix from triplets, summing duplicates. Duplicates
    /// are summed in input order, so identical inputs give identical bits.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut counts = vec![0usize; n + 1];
        for &(i, _, _) in triplets {
            counts[i + 1] += 1;
        }
        for i in 0..n {
            counts[i + 1] += counts[i];
        }
        let mut order = vec![0usize; triplets.len()];
        let mut next = counts.clone();
        for (k, &(i, _, _)) in triplets.iter().enumerate() {
            order[next[i]] = k;
            next[i] += 1;
        }
        let mut row_ptr = vec![0usize; n + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut vals = Vec::with_capacity(triplets.len());
        let mut row: Vec<(usize, f64)> = Vec::new();
        for i in 0..n {
            row.clear();
            row.extend(order[counts[i]..counts[i + 1]].iter().map(|&k| (triplets[k].1, triplets[k].2)));
            // Stable sort keeps the summation order of duplicates.
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in &row {
                if last == Some(j) {
                    *vals.last_mut().expect("non-empty") += v;
                } else {
                    cols.push(j);
                    vals.push(v);
                    last = Some(j);
                }
            }
            row_ptr[i + 1] = cols.len();
        }
        Self { n, row_ptr, cols, vals }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let r = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[r.clone()].iter().copied().zip(self.vals[r].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.n).map(|i| self.get(i, i)).collect()
    }

    pub fn mul_vec(&self, x: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = self.row(i).map(|(j, v)| v * x[j]).sum();
        }
    }

    /// `(Σ_i x_i (Ax)_i) / 2`.
    pub fn half_quadratic(&self, x: &[f64]) -> f64 {
        let mut ax = vec![0.0; self.n];
        self.mul_vec(x, &mut ax);
        0.5 * dot(x, &ax)
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Linear operator for [`pcg`].
pub trait LinearOperator {
    fn dim(&self) -> usize;
    fn apply(&self, x: &[f64], out: &mut [f64]);
}

impl LinearOperator for CsrMatrix {
    fn dim(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64], out: &mut [f64]) {
        self.mul_vec(x, out)
    }
}

#[derive(Debug, Clone)]
pub struct PcgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Jacobi-preconditioned conjugate gradients from a zero start. Stops when
/// `‖b − Ax‖ ≤ rel_tol ‖b‖`.
pub fn pcg<A: LinearOperator>(
    a: &A,
    diag: &[f64],
    b: &[f64],
    rel_tol: f64,
    max_iter: usize,
) -> Result<PcgOutcome> {
    let n = a.dim();
    let bnorm = norm(b);
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Ok(PcgOutcome { x, iterations: 0, history: vec![0.0] });
    }
    let inv: Vec<f64> = diag.iter().map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv).map(|(r, m)| r * m).collect();
    let mut p = z.clone();
    let mut ap = vec![0.0; n];
    let mut rz = dot(&r, &z);
    let mut history = vec![1.0];
    for it in 1..=max_iter {
        a.apply(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::LinearSolve { iterations: it, history });
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        let rel = norm(&r) / bnorm;
        history.push(rel);
        if rel <= rel_tol {
            return Ok(PcgOutcome { x, iterations: it, history });
        }
        for i in 0..n {
            z[i] = r[i] * inv[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(Error::LinearSolve { iterations: max_iter, history })
}

/// Cholesky factor `L` of a symmetric positive definite matrix stored by
/// rows inside the envelope (first nonzero column of each row onward).
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    n: usize,
    first: Vec<usize>,
    start: Vec<usize>,
    data: Vec<f64>,
}

impl EnvelopeCholesky {
    /// Factors the lower triangle of `a`.
    pub fn factor(a: &CsrMatrix) -> Result<Self> {
        let n = a.dim();
        let mut first: Vec<usize> = (0..n).collect();
        for i in 0..n {
            for (j, _) in a.row(i) {
                if j < i {
                    first[i] = first[i].min(j);
                } else if j > i {
                    first[j] = first[j].min(i);
                }
            }
        }
        let mut start = vec![0usize; n + 1];
        for i in 0..n {
            start[i + 1] = start[i] + (i - first[i] + 1);
        }
        let mut data = vec![0.0; start[n]];
        for i in 0..n {
            for (j, v) in a.row(i) {
                if j <= i {
                    data[start[i] + j - first[i]] = v;
                }
            }
        }
        for i in 0..n {
            let fi = first[i];
            for j in fi..=i {
                let fj = first[j];
                let k0 = fi.max(fj);
                let mut s = data[start[i] + j - fi];
                let ri = &data[start[i] + k0 - fi..start[i] + j - fi];
                let rj = &data[start[j] + k0 - fj..start[j] + j - fj];
                s -= dot(ri, rj);
                if j == i {
                    if !(s > 0.0) {
                        return Err(Error::NotPositiveDefinite { index: i, pivot: s });
                    }
                    data[start[i] + i - fi] = s.sqrt();
                } else {
                    data[start[i] + j - fi] = s / data[start[j] + j - fj];
                }
            }
        }
        Ok(Self { n, first, start, data })
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn envelope_size(&self) -> usize {
        self.data.len()
    }

    /// Solves `L Lᵀ x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        for i in 0..self.n {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            let s = x[i] - dot(&row[..i - fi], &x[fi..i]);
            x[i] = s / row[i - fi];
        }
        for i in (0..self.n).rev() {
            let fi = self.first[i];
            let row = &self.data[self.start[i]..self.start[i + 1]];
            x[i] /= row[i - fi];
            let xi = x[i];
            for (k, l) in (fi..i).zip(row) {
                x[k] -= l * xi;
            }
        }
    }
}

/// Reverse Cuthill–McKee ordering of a symmetric sparsity pattern. Returns
/// `perm` with `perm[new] = old`.
pub fn reverse_cuthill_mckee(adj: &[Vec<usize>]) -> Vec<usize> {
    let n = adj.len();
    let degree: Vec<usize> = adj.iter().map(Vec::len).collect();
    let mut visited = vec![false; n];
    let mut order = Vec::with_capacity(n);
    while order.len() < n {
        let seed = (0..n)
            .filter(|&v| !visited[v])
            .min_by_key(|&v| (degree[v], v))
            .expect("unvisited vertex exists");
        visited[seed] = true;
        let mut head = order.len();
        order.push(seed);
        while head < order.len() {
            let v = order[head];
            head += 1;
            let mut nbrs: Vec<usize> = adj[v].iter().copied().filter(|&u| !visited[u]).collect();
            nbrs.sort_by_key(|&u| (degree[u], u));
            for u in nbrs {
                if !visited[u] {
                    visited[u] = true;
                    order.push(u);
                }
            }
        }
    }
    order.reverse();
    order
}

#[cfg(test)]
mod tests {
    use super::*;

    fn laplacian_1d(n: usize) -> CsrMatrix {
        let mut t = Vec::new();
        for i in 0..n {
            t.push((i, i, 2.0));
            if i + 1 < n {
                t.push((i, i + 1, -1.0));
                t.push((i + 1, i, -1.0));
            }
        }
        CsrMatrix::from_triplets(n, &t)
    }

    #[test]
    fn triplets_sum_duplicates() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (1, 0, 2.0), (0, 0, 3.0), (0, 1, -1.0)]);
        assert_eq!(a.get(0, 0), 4.0);
        assert_eq!(a.get(1, 0), 2.0);
        assert_eq!(a.get(1, 1), 0.0);
        assert_eq!(a.nnz(), 3);
    }

    #[test]
    fn pcg_and_cholesky_agree() {
        let n = 50;
        let a = laplacian_1d(n);
        let b: Vec<f64> = (0..n).map(|i| (i as f64 * 0.37).sin()).collect();
        let sol = pcg(&a, &a.diagonal(), &b, 1e-12, 500).unwrap();
        let chol = EnvelopeCholesky::factor(&a).unwrap();
        let mut x = b.clone();
        chol.solve_in_place(&mut x);
        let diff: f64 = x.iter().zip(&sol.x).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
        assert!(diff < 1e-8, "{diff}");
        let mut ax = vec![0.0; n];
        a.mul_vec(&x, &mut ax);
        assert!(ax.iter().zip(&b).all(|(p, q)| (p - q).abs() < 1e-12));
    }

    #[test]
    fn cholesky_rejects_indefinite() {
        let a = CsrMatrix::from_triplets(2, &[(0, 0, 1.0), (0, 1, 2.0), (1, 0, 2.0), (1, 1, 1.0)]);
        assert!(matches!(EnvelopeCholesky::factor(&a), Err(Error::NotPositiveDefinite { index: 1, .. })));
    }

    #[test]
    fn pcg_reports_history_on_failure() {
        let a = laplacian_1d(40);
        let b = vec![1.0; 40];
        match pcg(&a, &a.diagonal(), &b, 1e-14, 3) {
            Err(Error::LinearSolve { iterations, history }) => {
                assert_eq!(iterations, 3);
                assert_eq!(history.len(), 4);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn rcm_is_a_permutation() {
        let adj = vec![vec![3], vec![2, 4], vec![1], vec![0, 4], vec![1, 3]];
        let mut p = reverse_cuthill_mckee(&adj);
        p.sort();
        assert_eq!(p, vec![0, 1, 2, 3, 4]);
    }
}
