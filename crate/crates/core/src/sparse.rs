//! Compressed sparse storage for symmetric nodal matrices and an envelope
//! (profile) Cholesky factorization used for the per-step network solves.

use std::fmt::Write as _;

/// Symmetric matrix in compressed sparse row form.
///
/// Both triangles are stored so row access and matrix-vector products are
/// direct. Column indices within a row are sorted.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseSym {
    n: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

impl SparseSym {
    /// Assemble from `(row, col, value)` triplets. Duplicates are summed and
    /// each off-diagonal triplet is mirrored, so callers pass one triangle.
    pub fn from_triplets(n: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut rows: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        for &(i, j, v) in triplets {
            rows[i].push((j, v));
            if i != j {
                rows[j].push((i, v));
            }
        }
        let mut row_ptr = Vec::with_capacity(n + 1);
        let mut col_idx = Vec::new();
        let mut values = Vec::new();
        row_ptr.push(0);
        for row in &mut rows {
            row.sort_by_key(|&(j, _)| j);
            let mut last: Option<usize> = None;
            for &(j, v) in row.iter() {
                if last == Some(j) {
                    *values.last_mut().expect("entry exists") += v;
                } else {
                    col_idx.push(j);
                    values.push(v);
                    last = Some(j);
                }
            }
            row_ptr.push(col_idx.len());
        }
        Self {
            n,
            row_ptr,
            col_idx,
            values,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.col_idx[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.col_idx[span.clone()].binary_search(&j) {
            Ok(k) => self.values[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn mul_vec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|i| self.row(i).map(|(j, v)| v * x[j]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.n]; self.n];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row(i) {
                row[j] = v;
            }
        }
        out
    }

    /// Copy with row and column `k` removed.
    pub fn without_index(&self, k: usize) -> Self {
        let shift = |j: usize| if j > k { j - 1 } else { j };
        let mut triplets = Vec::with_capacity(self.nnz());
        for i in (0..self.n).filter(|&i| i != k) {
            for (j, v) in self.row(i) {
                if j != k && j <= i {
                    triplets.push((shift(i), shift(j), v));
                }
            }
        }
        Self::from_triplets(self.n - 1, &triplets)
    }

    /// Dense CSV dump, one matrix row per line, with a header of column labels.
    pub fn to_csv(&self, labels: &[String]) -> String {
        let mut out = String::from("row");
        for l in labels {
            out.push(',');
            out.push_str(l);
        }
        out.push('\n');
        for (i, row) in self.to_dense().iter().enumerate() {
            out.push_str(&labels[i]);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// Pivot smaller than this fraction of the largest diagonal entry is treated
/// as a zero pivot.
const PIVOT_REL_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, thiserror::Error)]
#[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
pub struct SingularPivot {
    pub index: usize,
    pub pivot: f64,
}

/// Lower-triangular Cholesky factor stored by rows over the matrix envelope.
///
/// Row `i` holds `L[i][first[i]..=i]`; fill-in never leaves the envelope.
#[derive(Debug, Clone)]
pub struct EnvelopeCholesky {
    first: Vec<usize>,
    rows: Vec<Vec<f64>>,
}

impl EnvelopeCholesky {
    pub fn factor(a: &SparseSym) -> Result<Self, SingularPivot> {
        let n = a.dim();
        let first: Vec<usize> = (0..n)
            .map(|i| a.row(i).map(|(j, _)| j).min().unwrap_or(i).min(i))
            .collect();
        let max_diag = (0..n).map(|i| a.get(i, i).abs()).fold(0.0, f64::max);
        let tol = PIVOT_REL_TOL * max_diag.max(f64::MIN_POSITIVE);

        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(n);
        for i in 0..n {
            let fi = first[i];
            let mut row = vec![0.0; i - fi + 1];
            for (j, v) in a.row(i) {
                if j <= i {
                    row[j - fi] = v;
                }
            }
            for j in fi..i {
                let fj = first[j];
                let start = fi.max(fj);
                let lj = &rows[j];
                let mut s = row[j - fi];
                for k in start..j {
                    s -= row[k - fi] * lj[k - fj];
                }
                row[j - fi] = s / lj[j - fj];
            }
            let mut d = row[i - fi];
            for k in fi..i {
                d -= row[k - fi] * row[k - fi];
            }
            if !(d > tol) {
                return Err(SingularPivot { index: i, pivot: d });
            }
            row[i - fi] = d.sqrt();
            rows.push(row);
        }
        Ok(Self { first, rows })
    }

    pub fn dim(&self) -> usize {
        self.rows.len()
    }

    /// Solve `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [f64]) {
        let n = self.dim();
        debug_assert_eq!(x.len(), n);
        for i in 0..n {
            let fi = self.first[i];
            let row = &self.rows[i];
            let mut s = x[i];
            for k in fi..i {
                s -= row[k - fi] * x[k];
            }
            x[i] = s / row[i - fi];
        }
        for i in (0..n).rev() {
            let fi = self.first[i];
            let row = &self.rows[i];
            x[i] /= row[i - fi];
            let xi = x[i];
            for k in fi..i {
                x[k] -= row[k - fi] * xi;
            }
        }
    }

    pub fn solve(&self, b: &[f64]) -> Vec<f64> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
