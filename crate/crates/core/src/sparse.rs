//! Compressed sparse-row and dense row-major matrices plus the kernels the
//! rest of the crate is built on.
//!
//! All reductions run in ascending column order so results are bit-stable
//! regardless of how many threads rayon uses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Compressed sparse-row matrix with `f64` values.
///
/// Invariants (checked by every constructor): `row_offsets[0] == 0`,
/// `row_offsets[rows] == nnz`, offsets non-decreasing, column indices strictly
/// increasing within a row and `< cols`, and no stored zeros.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SparseRowMatrix {
    rows: usize,
    cols: usize,
    row_offsets: Vec<usize>,
    col_indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseRowMatrix {
    /// Builds a matrix from raw CSR arrays. Stored zeros are compacted away.
    pub fn new(
        rows: usize,
        cols: usize,
        row_offsets: Vec<usize>,
        col_indices: Vec<u32>,
        values: Vec<f64>,
    ) -> Result<Self> {
        if cols > u32::MAX as usize {
            return Err(Error::invalid(format!(
                "{cols} columns exceed u32 index range"
            )));
        }
        if row_offsets.len() != rows + 1 {
            return Err(Error::DimensionMismatch {
                op: "csr row_offsets",
                expected: rows + 1,
                actual: row_offsets.len(),
            });
        }
        if col_indices.len() != values.len() {
            return Err(Error::DimensionMismatch {
                op: "csr values",
                expected: col_indices.len(),
                actual: values.len(),
            });
        }
        if row_offsets[0] != 0 || row_offsets[rows] != col_indices.len() {
            return Err(Error::invalid("row_offsets must start at 0 and end at nnz"));
        }
        for i in 0..rows {
            let (lo, hi) = (row_offsets[i], row_offsets[i + 1]);
            if lo > hi {
                return Err(Error::invalid(format!("row_offsets decrease at row {i}")));
            }
            let cols_i = &col_indices[lo..hi];
            if cols_i.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::invalid(format!(
                    "column indices not strictly increasing in row {i}"
                )));
            }
            if let Some(&last) = cols_i.last() {
                if last as usize >= cols {
                    return Err(Error::invalid(format!(
                        "column index {last} out of range in row {i}"
                    )));
                }
            }
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite value in sparse matrix"));
        }
        let mut m = SparseRowMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        };
        m.compact_zeros();
        Ok(m)
    }

    /// All-zero matrix.
    pub fn zeros(rows: usize, cols: usize) -> Self {
        SparseRowMatrix {
            rows,
            cols,
            row_offsets: vec![0; rows + 1],
            col_indices: Vec::new(),
            values: Vec::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        SparseRowMatrix {
            rows: n,
            cols: n,
            row_offsets: (0..=n).collect(),
            col_indices: (0..n as u32).collect(),
            values: vec![1.0; n],
        }
    }

    /// Builds a matrix from `(row, col, value)` triplets in any order.
    /// Duplicate coordinates are summed; resulting zeros are dropped.
    pub fn from_triplets(
        rows: usize,
        cols: usize,
        mut triplets: Vec<(usize, usize, f64)>,
    ) -> Result<Self> {
        for &(r, c, v) in &triplets {
            if r >= rows || c >= cols {
                return Err(Error::invalid(format!(
                    "triplet ({r}, {c}) outside {rows}x{cols}"
                )));
            }
            if !v.is_finite() {
                return Err(Error::invalid("non-finite triplet value"));
            }
        }
        triplets.sort_unstable_by_key(|&(r, c, _)| (r, c));
        let mut row_offsets = vec![0usize; rows + 1];
        let mut col_indices: Vec<u32> = Vec::with_capacity(triplets.len());
        let mut values: Vec<f64> = Vec::with_capacity(triplets.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in triplets {
            if last == Some((r, c)) {
                *values.last_mut().unwrap() += v;
            } else {
                col_indices.push(c as u32);
                values.push(v);
                row_offsets[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for i in 0..rows {
            row_offsets[i + 1] += row_offsets[i];
        }
        let mut m = SparseRowMatrix {
            rows,
            cols,
            row_offsets,
            col_indices,
            values,
        };
        m.compact_zeros();
        Ok(m)
    }

    /// Builds a matrix from per-row `(col, value)` lists. Entries within a row
    /// may be unsorted; duplicates are summed.
    pub fn from_rows<I>(cols: usize, rows_iter: I) -> Result<Self>
    where
        I: IntoIterator<Item = Vec<(u32, f64)>>,
    {
        let mut row_offsets = vec![0usize];
        let mut col_indices = Vec::new();
        let mut values = Vec::new();
        for mut row in rows_iter {
            row.sort_unstable_by_key(|&(c, _)| c);
            let start = col_indices.len();
            for (c, v) in row {
                if c as usize >= cols {
                    return Err(Error::invalid(format!("column {c} out of range {cols}")));
                }
                if !v.is_finite() {
                    return Err(Error::invalid("non-finite value in sparse row"));
                }
                if col_indices.len() > start && *col_indices.last().unwrap() == c {
                    *values.last_mut().unwrap() += v;
                } else {
                    col_indices.push(c);
                    values.push(v);
                }
            }
            row_offsets.push(col_indices.len());
        }
        let mut m = SparseRowMatrix {
            rows: row_offsets.len() - 1,
            cols,
            row_offsets,
            col_indices,
            values,
        };
        m.compact_zeros();
        Ok(m)
    }

    /// Sparse copy of a dense matrix (exact zeros dropped).
    pub fn from_dense(d: &DenseMatrix) -> Self {
        let rows = (0..d.rows()).map(|i| {
            d.row(i)
                .iter()
                .enumerate()
                .filter(|(_, &v)| v != 0.0)
                .map(|(j, &v)| (j as u32, v))
                .collect()
        });
        SparseRowMatrix::from_rows(d.cols(), rows).expect("dense matrix rows are valid")
    }

    fn compact_zeros(&mut self) {
        if !self.values.contains(&0.0) {
            return;
        }
        let mut w = 0;
        let mut new_offsets = Vec::with_capacity(self.rows + 1);
        new_offsets.push(0);
        for i in 0..self.rows {
            for k in self.row_offsets[i]..self.row_offsets[i + 1] {
                if self.values[k] != 0.0 {
                    self.col_indices[w] = self.col_indices[k];
                    self.values[w] = self.values[k];
                    w += 1;
                }
            }
            new_offsets.push(w);
        }
        self.col_indices.truncate(w);
        self.values.truncate(w);
        self.row_offsets = new_offsets;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row_offsets(&self) -> &[usize] {
        &self.row_offsets
    }

    pub fn col_indices(&self) -> &[u32] {
        &self.col_indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Column indices and values of row `i`.
    #[inline]
    pub fn row(&self, i: usize) -> (&[u32], &[f64]) {
        let (lo, hi) = (self.row_offsets[i], self.row_offsets[i + 1]);
        (&self.col_indices[lo..hi], &self.values[lo..hi])
    }

    #[inline]
    pub fn row_nnz(&self, i: usize) -> usize {
        self.row_offsets[i + 1] - self.row_offsets[i]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (cols, vals) = self.row(i);
        match cols.binary_search(&(j as u32)) {
            Ok(k) => vals[k],
            Err(_) => 0.0,
        }
    }

    /// Dot product of row `i` with a dense vector of length `cols`.
    #[inline]
    pub fn row_dot(&self, i: usize, dense: &[f64]) -> f64 {
        let (cols, vals) = self.row(i);
        cols.iter()
            .zip(vals)
            .map(|(&c, &v)| v * dense[c as usize])
            .sum()
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        self.row(i).1.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn to_dense(&self) -> DenseMatrix {
        let mut d = DenseMatrix::zeros(self.rows, self.cols);
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            let out = d.row_mut(i);
            for (&c, &v) in cols.iter().zip(vals) {
                out[c as usize] = v;
            }
        }
        d
    }

    pub fn transpose(&self) -> SparseRowMatrix {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.col_indices {
            counts[c as usize + 1] += 1;
        }
        for j in 0..self.cols {
            counts[j + 1] += counts[j];
        }
        let row_offsets = counts.clone();
        let mut next = counts;
        let mut col_indices = vec![0u32; self.nnz()];
        let mut values = vec![0.0; self.nnz()];
        // Visiting source rows in ascending order keeps each output row sorted.
        for i in 0..self.rows {
            let (cols, vals) = self.row(i);
            for (&c, &v) in cols.iter().zip(vals) {
                let slot = next[c as usize];
                col_indices[slot] = i as u32;
                values[slot] = v;
                next[c as usize] += 1;
            }
        }
        SparseRowMatrix {
            rows: self.cols,
            cols: self.rows,
            row_offsets,
            col_indices,
            values,
        }
    }

    /// Row `i` of the output is row `indices[i]` of `self`.
    pub fn gather_rows(&self, indices: &[usize]) -> Result<SparseRowMatrix> {
        let mut row_offsets = Vec::with_capacity(indices.len() + 1);
        row_offsets.push(0);
        let total: usize = indices
            .iter()
            .map(|&r| {
                if r >= self.rows {
                    Err(Error::invalid(format!(
                        "row index {r} out of range for {} rows",
                        self.rows
                    )))
                } else {
                    Ok(self.row_nnz(r))
                }
            })
            .sum::<Result<usize>>()?;
        let mut col_indices = Vec::with_capacity(total);
        let mut values = Vec::with_capacity(total);
        for &r in indices {
            let (c, v) = self.row(r);
            col_indices.extend_from_slice(c);
            values.extend_from_slice(v);
            row_offsets.push(col_indices.len());
        }
        Ok(SparseRowMatrix {
            rows: indices.len(),
            cols: self.cols,
            row_offsets,
            col_indices,
            values,
        })
    }

    /// Row-scaled copy: row `i` multiplied by `scale[i]`.
    pub fn scale_rows(&self, scale: &[f64]) -> SparseRowMatrix {
        let mut out = self.clone();
        for (i, &s) in scale.iter().enumerate().take(self.rows) {
            let (lo, hi) = (out.row_offsets[i], out.row_offsets[i + 1]);
            out.values[lo..hi].iter_mut().for_each(|v| *v *= s);
        }
        out.compact_zeros();
        out
    }

    /// Same sparsity pattern with every stored value replaced by `value`.
    pub fn with_values(&self, value: f64) -> SparseRowMatrix {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v = value);
        out.compact_zeros();
        out
    }

    /// Returns true when the matrix equals its transpose exactly.
    pub fn is_symmetric(&self) -> bool {
        self.rows == self.cols && *self == self.transpose()
    }
}

/// Dense row-major `f64` matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DenseMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl DenseMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch {
                op: "dense data",
                expected: rows * cols,
                actual: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("non-finite entry in dense matrix"));
        }
        Ok(DenseMatrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        DenseMatrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = DenseMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, 1.0);
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(Error::DimensionMismatch {
                op: "dense from_rows",
                expected: cols,
                actual: bad.len(),
            });
        }
        DenseMatrix::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn transpose(&self) -> DenseMatrix {
        let mut t = DenseMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.data[j * self.rows + i] = self.data[i * self.cols + j];
            }
        }
        t
    }

    /// Plain triple-loop product, used for small matrices and as a reference.
    pub fn matmul(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.cols != other.rows {
            return Err(Error::DimensionMismatch {
                op: "matmul",
                expected: self.cols,
                actual: other.rows,
            });
        }
        let mut out = DenseMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let a = self.row(i);
            let o = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &av) in a.iter().enumerate() {
                if av != 0.0 {
                    axpy(av, other.row(k), o);
                }
            }
        }
        Ok(out)
    }

    pub fn gather_rows(&self, indices: &[usize]) -> Result<DenseMatrix> {
        let mut data = Vec::with_capacity(indices.len() * self.cols);
        for &r in indices {
            if r >= self.rows {
                return Err(Error::invalid(format!(
                    "row index {r} out of range for {} rows",
                    self.rows
                )));
            }
            data.extend_from_slice(self.row(r));
        }
        Ok(DenseMatrix {
            rows: indices.len(),
            cols: self.cols,
            data,
        })
    }

    /// Horizontal concatenation `[self | other]`.
    pub fn hstack(&self, other: &DenseMatrix) -> Result<DenseMatrix> {
        if self.rows != other.rows {
            return Err(Error::DimensionMismatch {
                op: "hstack",
                expected: self.rows,
                actual: other.rows,
            });
        }
        let cols = self.cols + other.cols;
        let mut data = Vec::with_capacity(self.rows * cols);
        for i in 0..self.rows {
            data.extend_from_slice(self.row(i));
            data.extend_from_slice(other.row(i));
        }
        Ok(DenseMatrix {
            rows: self.rows,
            cols,
            data,
        })
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }
}

/// Either storage layout, for operations that accept both.
#[derive(Clone, Debug, PartialEq)]
pub enum FeatureMatrix {
    Dense(DenseMatrix),
    Sparse(SparseRowMatrix),
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        match self {
            FeatureMatrix::Dense(d) => d.rows(),
            FeatureMatrix::Sparse(s) => s.rows(),
        }
    }

    pub fn cols(&self) -> usize {
        match self {
            FeatureMatrix::Dense(d) => d.cols(),
            FeatureMatrix::Sparse(s) => s.cols(),
        }
    }

    #[inline]
    pub fn row_dot(&self, i: usize, dense: &[f64]) -> f64 {
        match self {
            FeatureMatrix::Dense(d) => dot(d.row(i), dense),
            FeatureMatrix::Sparse(s) => s.row_dot(i, dense),
        }
    }

    /// Calls `f(column, value)` for every nonzero entry of row `i`.
    #[inline]
    pub fn for_each_nonzero(&self, i: usize, mut f: impl FnMut(usize, f64)) {
        match self {
            FeatureMatrix::Dense(d) => {
                for (j, &v) in d.row(i).iter().enumerate() {
                    if v != 0.0 {
                        f(j, v);
                    }
                }
            }
            FeatureMatrix::Sparse(s) => {
                let (cols, vals) = s.row(i);
                for (&j, &v) in cols.iter().zip(vals) {
                    f(j as usize, v);
                }
            }
        }
    }

    /// `acc += scale * row_i`.
    #[inline]
    pub fn add_row_to(&self, i: usize, scale: f64, acc: &mut [f64]) {
        match self {
            FeatureMatrix::Dense(d) => axpy(scale, d.row(i), acc),
            FeatureMatrix::Sparse(s) => {
                let (cols, vals) = s.row(i);
                for (&c, &v) in cols.iter().zip(vals) {
                    acc[c as usize] += scale * v;
                }
            }
        }
    }

    pub fn row_norm(&self, i: usize) -> f64 {
        match self {
            FeatureMatrix::Dense(d) => dot(d.row(i), d.row(i)).sqrt(),
            FeatureMatrix::Sparse(s) => s.row_norm(i),
        }
    }

    pub fn to_dense(&self) -> DenseMatrix {
        match self {
            FeatureMatrix::Dense(d) => d.clone(),
            FeatureMatrix::Sparse(s) => s.to_dense(),
        }
    }

    pub fn to_sparse(&self) -> SparseRowMatrix {
        match self {
            FeatureMatrix::Dense(d) => SparseRowMatrix::from_dense(d),
            FeatureMatrix::Sparse(s) => s.clone(),
        }
    }

    pub fn row_l2_normalize(&self) -> FeatureMatrix {
        match self {
            FeatureMatrix::Dense(d) => FeatureMatrix::Dense(row_l2_normalize_dense(d)),
            FeatureMatrix::Sparse(s) => FeatureMatrix::Sparse(row_l2_normalize_sparse(s)),
        }
    }
}

impl From<DenseMatrix> for FeatureMatrix {
    fn from(d: DenseMatrix) -> Self {
        FeatureMatrix::Dense(d)
    }
}

impl From<SparseRowMatrix> for FeatureMatrix {
    fn from(s: SparseRowMatrix) -> Self {
        FeatureMatrix::Sparse(s)
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// `y += alpha * x`.
#[inline]
pub fn axpy(alpha: f64, x: &[f64], y: &mut [f64]) {
    y.iter_mut().zip(x).for_each(|(yi, xi)| *yi += alpha * xi);
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Normalizes `v` in place; a zero vector is left untouched. Returns the
/// original norm.
#[inline]
pub fn normalize_in_place(v: &mut [f64]) -> f64 {
    let n = norm2(v);
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    n
}

/// Sparse × dense product. Each output entry is accumulated in ascending
/// column order of the sparse row.
pub fn spmm(s: &SparseRowMatrix, d: &DenseMatrix) -> Result<DenseMatrix> {
    if s.cols() != d.rows() {
        return Err(Error::DimensionMismatch {
            op: "spmm",
            expected: s.cols(),
            actual: d.rows(),
        });
    }
    let k = d.cols();
    let mut out = DenseMatrix::zeros(s.rows(), k);
    if k == 0 {
        return Ok(out);
    }
    out.data.par_chunks_mut(k).enumerate().for_each(|(i, o)| {
        let (cols, vals) = s.row(i);
        for (&c, &v) in cols.iter().zip(vals) {
            axpy(v, d.row(c as usize), o);
        }
    });
    Ok(out)
}

/// Sparse × sparse product (row-wise Gustavson with a dense accumulator).
pub fn spgemm(a: &SparseRowMatrix, b: &SparseRowMatrix) -> Result<SparseRowMatrix> {
    if a.cols() != b.rows() {
        return Err(Error::DimensionMismatch {
            op: "spgemm",
            expected: a.cols(),
            actual: b.rows(),
        });
    }
    let n_out = b.cols();
    let rows: Vec<Vec<(u32, f64)>> = (0..a.rows())
        .into_par_iter()
        .map_init(
            || (vec![0.0f64; n_out], vec![false; n_out]),
            |(acc, seen), i| {
                let mut touched: Vec<u32> = Vec::new();
                let (acols, avals) = a.row(i);
                for (&k, &av) in acols.iter().zip(avals) {
                    let (bcols, bvals) = b.row(k as usize);
                    for (&j, &bv) in bcols.iter().zip(bvals) {
                        let ju = j as usize;
                        if !seen[ju] {
                            seen[ju] = true;
                            touched.push(j);
                        }
                        acc[ju] += av * bv;
                    }
                }
                touched.sort_unstable();
                touched
                    .into_iter()
                    .map(|j| {
                        let ju = j as usize;
                        let v = acc[ju];
                        acc[ju] = 0.0;
                        seen[ju] = false;
                        (j, v)
                    })
                    .collect()
            },
        )
        .collect();
    SparseRowMatrix::from_rows(n_out, rows)
}

/// Scales every nonzero row to unit L2 norm; zero rows stay zero.
pub fn row_l2_normalize_dense(m: &DenseMatrix) -> DenseMatrix {
    let mut out = m.clone();
    if out.cols == 0 {
        return out;
    }
    let cols = out.cols;
    out.data.par_chunks_mut(cols).for_each(|row| {
        normalize_in_place(row);
    });
    out
}

/// Sparse counterpart of [`row_l2_normalize_dense`].
pub fn row_l2_normalize_sparse(m: &SparseRowMatrix) -> SparseRowMatrix {
    let mut out = m.clone();
    for i in 0..out.rows {
        let (lo, hi) = (out.row_offsets[i], out.row_offsets[i + 1]);
        let n = m.row_norm(i);
        if n > 0.0 {
            out.values[lo..hi].iter_mut().for_each(|v| *v /= n);
        }
    }
    out
}
