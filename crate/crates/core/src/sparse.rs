//! Compressed-row storage for Galerkin operators on periodic tensor spaces.
//!
//! All operators on one [`TensorSpace`] share a single [`SparsityPattern`]
//! (held behind an `Arc`). Columns inside a row are stored in coupling-slot
//! order rather than ascending order: the slot of a coupling depends only on
//! the relative offset between the two basis functions, which is the same
//! for every row of a periodic uniform space.

use std::sync::Arc;

use crate::space::TensorSpace;

#[derive(Debug, PartialEq)]
pub struct SparsityPattern {
    pub n_rows: usize,
    pub n_cols: usize,
    pub row_offsets: Vec<usize>,
    pub col_indices: Vec<usize>,
}

impl SparsityPattern {
    /// Pattern coupling every pair of basis functions with overlapping support.
    pub fn for_space(space: &TensorSpace) -> Self {
        let reference = space.reference();
        let row_len = reference.row_len();
        let n = space.n_dof();
        let shape = space.shape();
        let dim = space.dim();
        let mut col_indices = Vec::with_capacity(n * row_len);
        for row in 0..n {
            let rm = space.unflatten(row);
            for s in 0..row_len {
                let mut rest = s;
                let mut cm = [0; 3];
                for k in 0..dim {
                    let offsets = &reference.slot_offsets[k];
                    let sk = rest % offsets.len();
                    rest /= offsets.len();
                    cm[k] = (rm[k] + offsets[sk]) % shape[k];
                }
                col_indices.push(space.flatten(cm));
            }
        }
        Self {
            n_rows: n,
            n_cols: n,
            row_offsets: (0..=n).map(|i| i * row_len).collect(),
            col_indices,
        }
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Storage position of entry `(i, j)`, if it is in the pattern.
    pub fn position(&self, i: usize, j: usize) -> Option<usize> {
        self.row(i)
            .iter()
            .position(|&c| c == j)
            .map(|p| p + self.row_offsets[i])
    }
}

/// A compressed-row matrix over a shared pattern.
#[derive(Clone, Debug)]
pub struct SparseMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl SparseMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn n_rows(&self) -> usize {
        self.pattern.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.pattern.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.position(i, j).map_or(0.0, |p| self.values[p])
    }

    /// `y = A x`
    pub fn mul_vec(&self, x: &[f64], y: &mut [f64]) {
        self.mul_vec_scaled(1.0, x, 0.0, y);
    }

    /// `y = alpha A x + beta y`
    pub fn mul_vec_scaled(&self, alpha: f64, x: &[f64], beta: f64, y: &mut [f64]) {
        assert_eq!(x.len(), self.n_cols());
        assert_eq!(y.len(), self.n_rows());
        let p = &*self.pattern;
        for (i, yi) in y.iter_mut().enumerate() {
            let range = p.row_offsets[i]..p.row_offsets[i + 1];
            let mut acc = 0.0;
            for (c, v) in p.col_indices[range.clone()].iter().zip(&self.values[range]) {
                acc += v * x[*c];
            }
            *yi = if beta == 0.0 {
                alpha * acc
            } else {
                alpha * acc + beta * *yi
            };
        }
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = vec![0.0; self.n_rows()];
        self.mul_vec(x, &mut y);
        y
    }

    /// `Σ c_k A_k` over matrices sharing this pattern.
    pub fn combination(terms: &[(f64, &SparseMatrix)]) -> Self {
        let pattern = terms[0].1.pattern.clone();
        let mut values = vec![0.0; pattern.nnz()];
        for (c, m) in terms {
            assert!(Arc::ptr_eq(&pattern, &m.pattern), "patterns differ");
            for (v, mv) in values.iter_mut().zip(&m.values) {
                *v += c * mv;
            }
        }
        Self { pattern, values }
    }

    /// `self += c B` for `B` on the same pattern.
    pub fn add_scaled(&mut self, c: f64, other: &SparseMatrix) {
        assert!(Arc::ptr_eq(&self.pattern, &other.pattern), "patterns differ");
        for (v, o) in self.values.iter_mut().zip(&other.values) {
            *v += c * o;
        }
    }

    pub fn row_sums(&self) -> Vec<f64> {
        let p = &*self.pattern;
        (0..self.n_rows())
            .map(|i| self.values[p.row_offsets[i]..p.row_offsets[i + 1]].iter().sum())
            .collect()
    }

    /// Largest `|A_ij - A_ji|` relative to the largest entry.
    pub fn asymmetry(&self) -> f64 {
        let p = &*self.pattern;
        let scale = self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let mut worst = 0.0f64;
        for i in 0..self.n_rows() {
            for pos in p.row_offsets[i]..p.row_offsets[i + 1] {
                let j = p.col_indices[pos];
                worst = worst.max((self.values[pos] - self.get(j, i)).abs());
            }
        }
        if scale == 0.0 {
            worst
        } else {
            worst / scale
        }
    }

    /// Row-major dense copy; for tests and small problems.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let p = &*self.pattern;
        let mut out = vec![vec![0.0; self.n_cols()]; self.n_rows()];
        for (i, row) in out.iter_mut().enumerate() {
            for pos in p.row_offsets[i]..p.row_offsets[i + 1] {
                row[p.col_indices[pos]] += self.values[pos];
            }
        }
        out
    }

    /// Iterates `(row, col, value)` over stored entries.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        let p = &*self.pattern;
        (0..self.n_rows()).flat_map(move |i| {
            (p.row_offsets[i]..p.row_offsets[i + 1]).map(move |pos| (i, p.col_indices[pos], self.values[pos]))
        })
    }
}
