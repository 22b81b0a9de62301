//! Block Cholesky factorization of a sparse symmetric positive-definite
//! matrix made of 3×3 blocks, in natural order. Row patterns of the factor
//! come from the elimination tree; the numeric phase is up-looking.

use nalgebra::{Matrix3, Vector3};
use std::collections::BTreeMap;

/// Lower triangle of a block-sparse symmetric matrix, stored by block row.
#[derive(Debug, Clone, Default)]
pub struct BlockMatrix {
    rows: Vec<BTreeMap<usize, Matrix3<f64>>>,
}

impl BlockMatrix {
    pub fn new(n: usize) -> Self {
        Self {
            rows: vec![BTreeMap::new(); n],
        }
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Adds `m` at block `(i, j)`; blocks above the diagonal are folded
    /// into their transposed position.
    pub fn add(&mut self, i: usize, j: usize, m: &Matrix3<f64>) {
        if i >= j {
            *self.rows[i].entry(j).or_insert_with(Matrix3::zeros) += m;
        } else {
            *self.rows[j].entry(i).or_insert_with(Matrix3::zeros) += m.transpose();
        }
    }

    pub fn get(&self, i: usize, j: usize) -> Matrix3<f64> {
        let (r, c, t) = if i >= j { (i, j, false) } else { (j, i, true) };
        let m = self.rows[r].get(&c).copied().unwrap_or_else(Matrix3::zeros);
        if t {
            m.transpose()
        } else {
            m
        }
    }

    pub fn add_to_diagonal(&mut self, lambda: f64) {
        for (k, row) in self.rows.iter_mut().enumerate() {
            *row.entry(k).or_insert_with(Matrix3::zeros) += Matrix3::identity() * lambda;
        }
    }
}

/// `L` with `A = L Lᵀ`.
#[derive(Debug, Clone)]
pub struct BlockCholesky {
    /// Off-diagonal blocks of each row, ascending column.
    rows: Vec<Vec<(usize, Matrix3<f64>)>>,
    diag: Vec<Matrix3<f64>>,
}

fn elimination_tree(a: &BlockMatrix) -> Vec<Option<usize>> {
    let n = a.dim();
    let mut parent = vec![None; n];
    let mut ancestor: Vec<Option<usize>> = vec![None; n];
    for k in 0..n {
        for &j in a.rows[k].keys().filter(|&&j| j < k) {
            let mut i = j;
            while let Some(next) = ancestor[i] {
                if next == k {
                    break;
                }
                ancestor[i] = Some(k);
                i = next;
            }
            if ancestor[i].is_none() {
                ancestor[i] = Some(k);
                parent[i] = Some(k);
            }
        }
    }
    parent
}

impl BlockCholesky {
    /// Returns `None` when the matrix is not positive definite.
    pub fn factor(a: &BlockMatrix) -> Option<Self> {
        let n = a.dim();
        let parent = elimination_tree(a);
        let mut rows: Vec<Vec<(usize, Matrix3<f64>)>> = Vec::with_capacity(n);
        let mut cols: Vec<Vec<(usize, Matrix3<f64>)>> = vec![Vec::new(); n];
        let mut diag: Vec<Matrix3<f64>> = Vec::with_capacity(n);
        let mut mark = vec![usize::MAX; n];
        let mut work = vec![Matrix3::zeros(); n];
        for k in 0..n {
            // pattern of L row k: union of etree paths from each A(k, j)
            let mut pattern = Vec::new();
            mark[k] = k;
            for &j in a.rows[k].keys().filter(|&&j| j < k) {
                let mut i = j;
                while mark[i] != k {
                    mark[i] = k;
                    pattern.push(i);
                    work[i] = Matrix3::zeros();
                    i = match parent[i] {
                        Some(p) => p,
                        None => break,
                    };
                }
            }
            pattern.sort_unstable();
            for (&j, m) in a.rows[k].range(..k) {
                work[j] = *m;
            }
            let mut row = Vec::with_capacity(pattern.len());
            let mut d = a.rows[k].get(&k).copied().unwrap_or_else(Matrix3::zeros);
            for &j in &pattern {
                // L_kj Lᵀ_jj = x_j
                let ljj = diag[j];
                let x: Matrix3<f64> = work[j];
                let lkj = ljj.solve_lower_triangular(&x.transpose())?.transpose();
                for &(i, lij) in &cols[j] {
                    if i < k {
                        work[i] -= lkj * lij.transpose();
                    }
                }
                d -= lkj * lkj.transpose();
                row.push((j, lkj));
            }
            let lkk = d.cholesky()?.l();
            for &(j, lkj) in &row {
                cols[j].push((k, lkj));
            }
            rows.push(row);
            diag.push(lkk);
        }
        Some(Self { rows, diag })
    }

    #[cfg(test)]
    pub fn nonzero_blocks(&self) -> usize {
        self.rows.iter().map(Vec::len).sum::<usize>() + self.diag.len()
    }

    pub fn solve(&self, b: &[Vector3<f64>]) -> Vec<Vector3<f64>> {
        let n = self.diag.len();
        let mut y = b.to_vec();
        for k in 0..n {
            let mut acc = y[k];
            for (j, lkj) in &self.rows[k] {
                acc -= lkj * y[*j];
            }
            y[k] = self.diag[k].solve_lower_triangular(&acc).expect("nonsingular diagonal");
        }
        for k in (0..n).rev() {
            let xk = self.diag[k].transpose().solve_upper_triangular(&y[k]).expect("nonsingular diagonal");
            y[k] = xk;
            for (j, lkj) in &self.rows[k] {
                y[*j] -= lkj.transpose() * xk;
            }
        }
        y
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_graph_matrix(n: usize, extra: usize, rng: &mut ChaCha8Rng) -> BlockMatrix {
        let mut a = BlockMatrix::new(n);
        let edge = |a: &mut BlockMatrix, i: usize, j: usize, rng: &mut ChaCha8Rng| {
            let m = Matrix3::from_fn(|_, _| rng.random_range(-1.0..1.0));
            let info = m * m.transpose() + Matrix3::identity();
            a.add(i, i, &info);
            a.add(j, j, &info);
            a.add(i, j, &(-info));
        };
        for i in 1..n {
            edge(&mut a, i - 1, i, rng);
        }
        for _ in 0..extra {
            let i = rng.random_range(0..n);
            let j = rng.random_range(0..n);
            if i != j {
                edge(&mut a, i, j, rng);
            }
        }
        a.add_to_diagonal(1.0);
        a
    }

    fn dense(a: &BlockMatrix) -> DMatrix<f64> {
        let n = a.dim();
        DMatrix::from_fn(3 * n, 3 * n, |r, c| a.get(r / 3, c / 3)[(r % 3, c % 3)])
    }

    #[test]
    fn matches_dense_solve() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for &(n, extra) in &[(1, 0), (5, 2), (40, 10), (120, 30)] {
            let a = random_graph_matrix(n, extra, &mut rng);
            let b: Vec<Vector3<f64>> = (0..n).map(|_| Vector3::from_fn(|_, _| rng.random_range(-1.0..1.0))).collect();
            let x = BlockCholesky::factor(&a).unwrap().solve(&b);
            let bd = nalgebra::DVector::from_iterator(3 * n, b.iter().flat_map(|v| v.iter().copied()));
            let xd = dense(&a).cholesky().unwrap().solve(&bd);
            for k in 0..n {
                for r in 0..3 {
                    assert!((x[k][r] - xd[3 * k + r]).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn chain_has_no_fill() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_graph_matrix(50, 0, &mut rng);
        assert_eq!(BlockCholesky::factor(&a).unwrap().nonzero_blocks(), 50 + 49);
    }

    #[test]
    fn indefinite_rejected() {
        let mut a = BlockMatrix::new(2);
        a.add(0, 0, &Matrix3::identity());
        a.add(1, 1, &(-Matrix3::identity()));
        assert!(BlockCholesky::factor(&a).is_none());
    }
}
