//! Sparse matrix storage: interleaved index-pair layout and CSR.
//!
//! Two layouts are supported:
//!
//! - [`SparseTensorMatrix`] keeps one flat `ids` array of interleaved
//!   `(row, col)` pairs plus a parallel `values` array. Entries may appear in
//!   any order; nothing is sorted on construction.
//! - [`CsrMatrix`] keeps a row-pointer array `rpt` (length `rows + 1`),
//!   column indices, and values. The canonical form produced by
//!   [`coo_to_csr`] sorts column indices within each row so equality and
//!   diffing are deterministic.
//!
//! Construction validates every structural invariant (bounds, lengths,
//! duplicate coordinates) and returns [`Error::Format`] on violation, so the
//! kernels can rely on well-formed inputs.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Sparse matrix with interleaved `(row, col)` index pairs.
///
/// `ids[2k]` is the row index of nonzero `k`, `ids[2k + 1]` its column
/// index, `values[k]` its value. Entry order is arbitrary.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseTensorMatrix<T: Scalar> {
    rows: usize,
    cols: usize,
    ids: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> SparseTensorMatrix<T> {
    pub fn new(rows: usize, cols: usize, ids: Vec<usize>, values: Vec<T>) -> Result<Self> {
        if ids.len() != 2 * values.len() {
            return Err(Error::format(format!(
                "ids length {} != 2 x values length {}",
                ids.len(),
                values.len()
            )));
        }
        let mut seen = HashSet::with_capacity(values.len());
        for k in 0..values.len() {
            let (r, c) = (ids[2 * k], ids[2 * k + 1]);
            if r >= rows || c >= cols {
                return Err(Error::format(format!(
                    "entry ({r}, {c}) out of bounds for {rows}x{cols}"
                )));
            }
            if !seen.insert((r, c)) {
                return Err(Error::format(format!("duplicate entry at ({r}, {c})")));
            }
        }
        Ok(Self {
            rows,
            cols,
            ids,
            values,
        })
    }

    /// Builds from `(row, col, value)` triples, kept in the given order.
    pub fn from_triples(rows: usize, cols: usize, triples: &[(usize, usize, T)]) -> Result<Self> {
        let mut ids = Vec::with_capacity(2 * triples.len());
        let mut values = Vec::with_capacity(triples.len());
        for &(r, c, v) in triples {
            ids.push(r);
            ids.push(c);
            values.push(v);
        }
        Self::new(rows, cols, ids, values)
    }

    /// Square identity matrix in index-pair layout.
    pub fn identity(n: usize) -> Self {
        let triples: Vec<_> = (0..n).map(|i| (i, i, T::from_f64(1.0))).collect();
        Self::from_triples(n, n, &triples).expect("identity is always valid")
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

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// The `k`-th stored entry as `(row, col, value)`.
    pub fn entry(&self, k: usize) -> (usize, usize, T) {
        (self.ids[2 * k], self.ids[2 * k + 1], self.values[k])
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.nnz()).map(move |k| self.entry(k))
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.iter() {
            out[(r, c)] = v;
        }
        out
    }

    /// Transpose; entries keep their storage order with swapped indices.
    pub fn transpose(&self) -> Self {
        let mut ids = Vec::with_capacity(self.ids.len());
        for k in 0..self.nnz() {
            ids.push(self.ids[2 * k + 1]);
            ids.push(self.ids[2 * k]);
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            ids,
            values: self.values.clone(),
        }
    }
}

/// Compressed sparse row matrix.
///
/// `rpt[r]..rpt[r + 1]` indexes the entries of row `r` in `colids`/`values`.
/// Canonical form keeps column indices strictly increasing within each row.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix<T: Scalar> {
    rows: usize,
    cols: usize,
    rpt: Vec<usize>,
    colids: Vec<usize>,
    values: Vec<T>,
}

impl<T: Scalar> CsrMatrix<T> {
    pub fn new(
        rows: usize,
        cols: usize,
        rpt: Vec<usize>,
        colids: Vec<usize>,
        values: Vec<T>,
    ) -> Result<Self> {
        if rpt.len() != rows + 1 {
            return Err(Error::format(format!(
                "rpt length {} != rows + 1 = {}",
                rpt.len(),
                rows + 1
            )));
        }
        if rpt[0] != 0 {
            return Err(Error::format("rpt[0] must be 0"));
        }
        if rpt.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::format("rpt must be non-decreasing"));
        }
        if rpt[rows] != values.len() || colids.len() != values.len() {
            return Err(Error::format(format!(
                "rpt[rows] = {} must equal nnz = {} = colids length {}",
                rpt[rows],
                values.len(),
                colids.len()
            )));
        }
        for r in 0..rows {
            let row = &colids[rpt[r]..rpt[r + 1]];
            if row.iter().any(|&c| c >= cols) {
                return Err(Error::format(format!(
                    "column index out of bounds in row {r} (cols = {cols})"
                )));
            }
            if row.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::format(format!(
                    "column indices in row {r} must be strictly increasing"
                )));
            }
        }
        Ok(Self {
            rows,
            cols,
            rpt,
            colids,
            values,
        })
    }

    pub fn identity(n: usize) -> Self {
        Self {
            rows: n,
            cols: n,
            rpt: (0..=n).collect(),
            colids: (0..n).collect(),
            values: vec![T::from_f64(1.0); n],
        }
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

    pub fn rpt(&self) -> &[usize] {
        &self.rpt
    }

    pub fn colids(&self) -> &[usize] {
        &self.colids
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    /// `(col, value)` pairs of row `r` in storage order.
    pub fn row_entries(&self, r: usize) -> impl Iterator<Item = (usize, T)> + '_ {
        let range = self.rpt[r]..self.rpt[r + 1];
        range.map(move |k| (self.colids[k], self.values[k]))
    }

    /// All `(row, col, value)` triples in row-major storage order.
    pub fn iter(&self) -> impl Iterator<Item = (usize, usize, T)> + '_ {
        (0..self.rows).flat_map(move |r| self.row_entries(r).map(move |(c, v)| (r, c, v)))
    }

    pub fn to_dense(&self) -> DenseMatrix<T> {
        let mut out = DenseMatrix::zeros(self.rows, self.cols);
        for (r, c, v) in self.iter() {
            out[(r, c)] = v;
        }
        out
    }

    /// Canonical-form transpose via counting sort over columns.
    pub fn transpose(&self) -> Self {
        let mut counts = vec![0usize; self.cols + 1];
        for &c in &self.colids {
            counts[c + 1] += 1;
        }
        for i in 0..self.cols {
            counts[i + 1] += counts[i];
        }
        let rpt = counts.clone();
        let mut colids = vec![0usize; self.nnz()];
        let mut values = vec![T::default(); self.nnz()];
        let mut cursor = counts;
        for (r, c, v) in self.iter() {
            let slot = cursor[c];
            colids[slot] = r;
            values[slot] = v;
            cursor[c] += 1;
        }
        Self {
            rows: self.cols,
            cols: self.rows,
            rpt,
            colids,
            values,
        }
    }
}

/// Converts index-pair storage to canonical CSR (column indices sorted within
/// each row). Lossless: the entry multiset is preserved.
pub fn coo_to_csr<T: Scalar>(a: &SparseTensorMatrix<T>) -> CsrMatrix<T> {
    let mut counts = vec![0usize; a.rows() + 1];
    for k in 0..a.nnz() {
        counts[a.ids()[2 * k] + 1] += 1;
    }
    for i in 0..a.rows() {
        counts[i + 1] += counts[i];
    }
    let rpt = counts.clone();
    let mut colids = vec![0usize; a.nnz()];
    let mut values = vec![T::default(); a.nnz()];
    let mut cursor = counts;
    for (r, c, v) in a.iter() {
        let slot = cursor[r];
        colids[slot] = c;
        values[slot] = v;
        cursor[r] += 1;
    }
    // Sort each row by column index for the canonical form.
    for r in 0..a.rows() {
        let range = rpt[r]..rpt[r + 1];
        let mut row: Vec<(usize, T)> = range.clone().map(|k| (colids[k], values[k])).collect();
        row.sort_by_key(|&(c, _)| c);
        for (k, (c, v)) in range.zip(row) {
            colids[k] = c;
            values[k] = v;
        }
    }
    CsrMatrix {
        rows: a.rows(),
        cols: a.cols(),
        rpt,
        colids,
        values,
    }
}

/// Converts CSR to index-pair storage, emitting entries in row-major order.
pub fn csr_to_coo<T: Scalar>(a: &CsrMatrix<T>) -> SparseTensorMatrix<T> {
    let mut ids = Vec::with_capacity(2 * a.nnz());
    let mut values = Vec::with_capacity(a.nnz());
    for (r, c, v) in a.iter() {
        ids.push(r);
        ids.push(c);
        values.push(v);
    }
    SparseTensorMatrix {
        rows: a.rows(),
        cols: a.cols(),
        ids,
        values,
    }
}

/// Generates a square `dim x dim` matrix with exactly `nnz_per_row` distinct
/// column indices per row (sampled without replacement) and values uniform in
/// `[0, 1)`. With `shuffle` the global entry order is permuted, otherwise
/// entries appear row by row. Deterministic for fixed parameters.
pub fn random_sparse<T: Scalar>(
    dim: usize,
    nnz_per_row: usize,
    seed: u64,
    shuffle: bool,
) -> Result<SparseTensorMatrix<T>> {
    if nnz_per_row > dim {
        return Err(Error::parameter(format!(
            "nnz_per_row {nnz_per_row} > dim {dim}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut triples = Vec::with_capacity(dim * nnz_per_row);
    for r in 0..dim {
        for c in sample(&mut rng, dim, nnz_per_row) {
            triples.push((r, c, T::sample_unit(&mut rng)));
        }
    }
    if shuffle {
        triples.shuffle(&mut rng);
    }
    SparseTensorMatrix::from_triples(dim, dim, &triples)
}

/// Generates a square adjacency matrix with unit self-loops on every node
/// plus `edges_per_row` off-diagonal unit entries per row. Used by the
/// graph-convolution tests, where the diagonal convention matters.
pub fn random_adjacency<T: Scalar>(
    dim: usize,
    edges_per_row: usize,
    seed: u64,
) -> Result<SparseTensorMatrix<T>> {
    if dim == 0 {
        return Err(Error::parameter("adjacency requires at least one node"));
    }
    if edges_per_row > dim - 1 {
        return Err(Error::parameter(format!(
            "edges_per_row {edges_per_row} > dim - 1 = {}",
            dim - 1
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let one = T::from_f64(1.0);
    let mut triples = Vec::with_capacity(dim * (edges_per_row + 1));
    for r in 0..dim {
        triples.push((r, r, one));
        // Sample from dim - 1 slots and skip over the diagonal.
        for c in sample(&mut rng, dim - 1, edges_per_row) {
            let c = if c >= r { c + 1 } else { c };
            triples.push((r, c, one));
        }
    }
    SparseTensorMatrix::from_triples(dim, dim, &triples)
}

/// Borrowed batch of sparse matrices sharing one layout and one dense column
/// count `n_B`.
#[derive(Debug, Clone)]
pub struct SparseBatch<'a, T: Scalar> {
    items: SparseItems<'a, T>,
    uniform_dense_cols: usize,
}

/// The per-item matrices of a batch, all in the same layout.
#[derive(Debug, Clone)]
pub enum SparseItems<'a, T: Scalar> {
    SparseTensor(Vec<&'a SparseTensorMatrix<T>>),
    Csr(Vec<&'a CsrMatrix<T>>),
}

impl<'a, T: Scalar> SparseBatch<'a, T> {
    pub fn from_sparse_tensor(
        items: Vec<&'a SparseTensorMatrix<T>>,
        uniform_dense_cols: usize,
    ) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::parameter("batch must be nonempty"));
        }
        Ok(Self {
            items: SparseItems::SparseTensor(items),
            uniform_dense_cols,
        })
    }

    pub fn from_csr(items: Vec<&'a CsrMatrix<T>>, uniform_dense_cols: usize) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::parameter("batch must be nonempty"));
        }
        Ok(Self {
            items: SparseItems::Csr(items),
            uniform_dense_cols,
        })
    }

    pub fn items(&self) -> &SparseItems<'a, T> {
        &self.items
    }

    pub fn len(&self) -> usize {
        match &self.items {
            SparseItems::SparseTensor(v) => v.len(),
            SparseItems::Csr(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dense_cols(&self) -> usize {
        self.uniform_dense_cols
    }

    /// Row count of every item, in batch order.
    pub fn item_rows(&self) -> Vec<usize> {
        match &self.items {
            SparseItems::SparseTensor(v) => v.iter().map(|m| m.rows()).collect(),
            SparseItems::Csr(v) => v.iter().map(|m| m.rows()).collect(),
        }
    }

    /// Column count of every item, in batch order.
    pub fn item_cols(&self) -> Vec<usize> {
        match &self.items {
            SparseItems::SparseTensor(v) => v.iter().map(|m| m.cols()).collect(),
            SparseItems::Csr(v) => v.iter().map(|m| m.cols()).collect(),
        }
    }

    pub fn total_nnz(&self) -> usize {
        match &self.items {
            SparseItems::SparseTensor(v) => v.iter().map(|m| m.nnz()).sum(),
            SparseItems::Csr(v) => v.iter().map(|m| m.nnz()).sum(),
        }
    }
}
