use std::collections::BTreeSet;
use std::sync::Arc;

use rayon::prelude::*;

use super::LinalgError;
use crate::geometry::Triangle;

/// Rows shorter than this are not worth splitting across threads.
const PAR_MIN_ROWS: usize = 512;

/// Row offsets and sorted column indices of a compressed-row matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SparsityPattern {
    nrows: usize,
    ncols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<usize>,
}

impl SparsityPattern {
    pub fn try_new(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
    ) -> Result<Self, LinalgError> {
        if row_offsets.len() != nrows + 1 || row_offsets[0] != 0 || row_offsets[nrows] != col_indices.len() {
            return Err(LinalgError::InvalidPattern("row offsets do not cover the column indices".into()));
        }
        for i in 0..nrows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if hi < lo {
                return Err(LinalgError::InvalidPattern(format!("row {i} has decreasing offsets")));
            }
            let cols = &col_indices[lo..hi];
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(LinalgError::InvalidPattern(format!("row {i} columns not sorted and unique")));
            }
            if cols.last().is_some_and(|&c| c >= ncols) {
                return Err(LinalgError::InvalidPattern(format!("row {i} has a column past {ncols}")));
            }
        }
        Ok(Self {
            nrows,
            ncols,
            row_offsets,
            col_indices,
        })
    }

    /// Vertex adjacency of a triangulation, diagonal included. This is the
    /// pattern of every P1 operator on the mesh.
    pub fn from_triangles(vertex_count: usize, triangles: &[Triangle]) -> Self {
        let mut rows: Vec<BTreeSet<usize>> = (0..vertex_count).map(|i| BTreeSet::from([i])).collect();
        for tri in triangles {
            for &a in tri {
                for &b in tri {
                    rows[a].insert(b);
                }
            }
        }
        let mut row_offsets = Vec::with_capacity(vertex_count + 1);
        let mut col_indices = Vec::new();
        row_offsets.push(0);
        for row in rows {
            col_indices.extend(row);
            row_offsets.push(col_indices.len());
        }
        Self {
            nrows: vertex_count,
            ncols: vertex_count,
            row_offsets,
            col_indices,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.col_indices.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[usize] {
        &self.col_indices
    }

    pub fn row(&self, i: usize) -> &[usize] {
        &self.col_indices[self.row_offsets[i]..self.row_offsets[i + 1]]
    }

    /// Position of entry `(i, j)` in the value array.
    pub fn find(&self, i: usize, j: usize) -> Option<usize> {
        let lo = self.row_offsets[i];
        self.row(i).binary_search(&j).ok().map(|k| lo + k)
    }
}

/// Compressed-row matrix whose pattern may be shared between operators.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    pattern: Arc<SparsityPattern>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn zeros(pattern: Arc<SparsityPattern>) -> Self {
        let values = vec![0.0; pattern.nnz()];
        Self { pattern, values }
    }

    pub fn try_from_parts(
        nrows: usize,
        ncols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<usize>,
        values: Vec<f64>,
    ) -> Result<Self, LinalgError> {
        let pattern = SparsityPattern::try_new(nrows, ncols, row_offsets, col_indices)?;
        Self::with_values(Arc::new(pattern), values)
    }

    pub fn with_values(pattern: Arc<SparsityPattern>, values: Vec<f64>) -> Result<Self, LinalgError> {
        if values.len() != pattern.nnz() {
            return Err(LinalgError::InvalidPattern(format!(
                "{} values for {} pattern entries",
                values.len(),
                pattern.nnz()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(LinalgError::NonFinite(format!("matrix value at position {k}")));
        }
        Ok(Self { pattern, values })
    }

    /// Sums duplicate entries.
    pub fn from_triplets(nrows: usize, ncols: usize, triplets: &[(usize, usize, f64)]) -> Self {
        let mut sorted: Vec<(usize, usize, f64)> = triplets.to_vec();
        sorted.sort_by_key(|t| (t.0, t.1));
        let mut row_offsets = vec![0; nrows + 1];
        let mut col_indices = Vec::with_capacity(sorted.len());
        let mut values: Vec<f64> = Vec::with_capacity(sorted.len());
        let mut last: Option<(usize, usize)> = None;
        for (i, j, v) in sorted {
            assert!(i < nrows && j < ncols, "triplet ({i}, {j}) outside {nrows}x{ncols}");
            if last == Some((i, j)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(j);
                values.push(v);
                row_offsets[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..nrows {
            row_offsets[i + 1] += row_offsets[i];
        }
        Self {
            pattern: Arc::new(SparsityPattern {
                nrows,
                ncols,
                row_offsets,
                col_indices,
            }),
            values,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_triplets(n, n, &(0..n).map(|i| (i, i, 1.0)).collect::<Vec<_>>())
    }

    /// Keeps the non-zero entries of a dense row-major matrix.
    pub fn from_dense(rows: &[Vec<f64>]) -> Self {
        let ncols = rows.first().map_or(0, Vec::len);
        let triplets: Vec<_> = rows
            .iter()
            .enumerate()
            .flat_map(|(i, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, v)| **v != 0.0)
                    .map(move |(j, &v)| (i, j, v))
            })
            .collect();
        Self::from_triplets(rows.len(), ncols, &triplets)
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; self.ncols()]; self.nrows()];
        for (i, row) in out.iter_mut().enumerate() {
            for (j, v) in self.row_entries(i) {
                row[j] = v;
            }
        }
        out
    }

    pub fn nrows(&self) -> usize {
        self.pattern.nrows
    }

    pub fn ncols(&self) -> usize {
        self.pattern.ncols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn pattern(&self) -> &Arc<SparsityPattern> {
        &self.pattern
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn row_entries(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let range = self.pattern.row_offsets[i]..self.pattern.row_offsets[i + 1];
        self.pattern.col_indices[range.clone()]
            .iter()
            .copied()
            .zip(self.values[range].iter().copied())
    }

    /// Entry `(i, j)`, zero outside the pattern.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.pattern.find(i, j).map_or(0.0, |k| self.values[k])
    }

    /// Adds `v` to entry `(i, j)`, which must be part of the pattern.
    pub fn add_at(&mut self, i: usize, j: usize, v: f64) -> Result<(), LinalgError> {
        let k = self.pattern.find(i, j).ok_or(LinalgError::OutsidePattern { row: i, col: j })?;
        self.values[k] += v;
        Ok(())
    }

    pub fn diagonal(&self) -> Vec<f64> {
        (0..self.nrows().min(self.ncols())).map(|i| self.get(i, i)).collect()
    }

    /// `y = A x`.
    pub fn spmv(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        let mut y = vec![0.0; self.nrows()];
        self.spmv_into(x, &mut y)?;
        Ok(y)
    }

    pub fn spmv_into(&self, x: &[f64], y: &mut [f64]) -> Result<(), LinalgError> {
        if x.len() != self.ncols() || y.len() != self.nrows() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.ncols(),
                found: x.len(),
            });
        }
        let offsets = &self.pattern.row_offsets;
        let cols = &self.pattern.col_indices;
        let vals = &self.values;
        let row_dot = |i: usize| -> f64 {
            let mut acc = 0.0;
            for k in offsets[i]..offsets[i + 1] {
                acc += vals[k] * x[cols[k]];
            }
            acc
        };
        if y.len() >= 2 * PAR_MIN_ROWS {
            y.par_iter_mut()
                .with_min_len(PAR_MIN_ROWS)
                .enumerate()
                .for_each(|(i, yi)| *yi = row_dot(i));
        } else {
            for (i, yi) in y.iter_mut().enumerate() {
                *yi = row_dot(i);
            }
        }
        Ok(())
    }

    /// `y = Aᵀ x`.
    pub fn transpose_spmv(&self, x: &[f64]) -> Result<Vec<f64>, LinalgError> {
        if x.len() != self.nrows() {
            return Err(LinalgError::DimensionMismatch {
                expected: self.nrows(),
                found: x.len(),
            });
        }
        let mut y = vec![0.0; self.ncols()];
        for (i, xi) in x.iter().enumerate() {
            for (j, v) in self.row_entries(i) {
                y[j] += v * xi;
            }
        }
        Ok(y)
    }

    /// `self += alpha * other`; both must share a pattern.
    pub fn axpy(&mut self, alpha: f64, other: &CsrMatrix) -> Result<(), LinalgError> {
        if !Arc::ptr_eq(&self.pattern, &other.pattern) && self.pattern != other.pattern {
            return Err(LinalgError::PatternMismatch);
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += alpha * b;
        }
        Ok(())
    }

    pub fn scale(&mut self, s: f64) {
        self.values.iter_mut().for_each(|v| *v *= s);
    }

    /// Largest absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        (0..self.nrows())
            .map(|i| self.row_entries(i).map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}
