//! Single-matrix SpMM kernels and their backward operations.
//!
//! All kernels emulate a GPU thread model on the CPU: a [`LaneGroup`] stands
//! in for the group of up to 32 hardware lanes assigned to one nonzero
//! (index-pair layout) or one row (CSR layout), and a [`Scratchpad`] stands
//! in for per-block shared memory. The emulation is deterministic: where
//! hardware would resolve concurrent atomic adds in arbitrary order, these
//! kernels serialize accumulation in ascending nonzero order, so repeated
//! runs are bit-identical.
//!
//! Three forward kernels are provided:
//!
//! - [`spmm_baseline`]: one multiply-add per (nonzero, column), looping
//!   nonzeros outer and columns inner.
//! - [`spmm_swa_st`]: lane groups assigned per nonzero; lane `l` covers
//!   columns `l, l + w, l + 2w, ...` for group width `w`. Distinct groups may
//!   target the same output row, which on hardware requires atomics; the
//!   emulation serializes instead.
//! - [`spmm_swa_csr`]: lane groups assigned per row. Each output row is
//!   written by exactly one group, so the algorithm is race-free by
//!   construction ([`swa_csr_writer_groups`] lets tests assert it).
//!
//! [`gemm_oracle`] is the independent ground truth: a dense triple loop
//! accumulating in `f64` and rounding once at the end.

use serde::{Deserialize, Serialize};

use crate::dense::DenseMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sparse::{CsrMatrix, SparseTensorMatrix};

/// Width of the lane group assigned to one nonzero or one row: a power of
/// two, at most 32 (one full warp).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct LaneGroup {
    width: usize,
}

impl LaneGroup {
    pub fn new(width: usize) -> Result<Self> {
        if !width.is_power_of_two() || width > 32 {
            return Err(Error::parameter(format!(
                "lane group width must be a power of two <= 32, got {width}"
            )));
        }
        Ok(Self { width })
    }

    pub fn width(self) -> usize {
        self.width
    }

    /// Column indices lane `lane` visits in `[start, end)`: `start + lane`,
    /// then strides of the group width.
    pub fn lane_columns(
        self,
        lane: usize,
        start: usize,
        end: usize,
    ) -> impl Iterator<Item = usize> {
        (start + lane..end).step_by(self.width)
    }
}

impl TryFrom<usize> for LaneGroup {
    type Error = Error;

    fn try_from(width: usize) -> Result<Self> {
        LaneGroup::new(width)
    }
}

impl From<LaneGroup> for usize {
    fn from(g: LaneGroup) -> usize {
        g.width
    }
}

/// Fixed-capacity zero-initialized buffer scoped to one work unit, emulating
/// per-block shared memory. Default budget is 32 KiB.
#[derive(Debug)]
pub struct Scratchpad<T: Scalar> {
    capacity_bytes: usize,
    buffer: Vec<T>,
}

pub const DEFAULT_SCRATCHPAD_BYTES: usize = 32 * 1024;

impl<T: Scalar> Default for Scratchpad<T> {
    fn default() -> Self {
        Self::new(DEFAULT_SCRATCHPAD_BYTES)
    }
}

impl<T: Scalar> Scratchpad<T> {
    pub fn new(capacity_bytes: usize) -> Self {
        Self {
            capacity_bytes,
            buffer: Vec::new(),
        }
    }

    pub fn capacity_bytes(&self) -> usize {
        self.capacity_bytes
    }

    /// Zero-fills and returns a buffer of `elems` elements.
    ///
    /// Panics if the request exceeds the capacity: the planner guarantees
    /// every scratchpad-backed work unit fits, so an overflow here is an
    /// internal bug, not a user error.
    pub fn acquire(&mut self, elems: usize) -> &mut [T] {
        let bytes = elems * std::mem::size_of::<T>();
        assert!(
            bytes <= self.capacity_bytes,
            "scratchpad overflow: {bytes} bytes requested, capacity {}",
            self.capacity_bytes
        );
        self.buffer.clear();
        self.buffer.resize(elems, T::default());
        &mut self.buffer
    }

    /// Surrenders the buffer, e.g. to hand a computed block to the write-back
    /// phase without copying.
    pub fn into_vec(self) -> Vec<T> {
        self.buffer
    }
}

fn check_spmm_shapes(a_cols: usize, b_rows: usize) -> Result<()> {
    if a_cols != b_rows {
        return Err(Error::shape(format!(
            "sparse cols {a_cols} != dense rows {b_rows}"
        )));
    }
    Ok(())
}

/// Reference SpMM over index-pair storage: for each nonzero `k` in storage
/// order, for each column `j` ascending, `C[rid][j] += val * B[cid][j]`.
pub fn spmm_baseline<T: Scalar>(
    a: &SparseTensorMatrix<T>,
    b: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    check_spmm_shapes(a.cols(), b.rows())?;
    let mut c = DenseMatrix::zeros(a.rows(), b.cols());
    let n_b = b.cols();
    for (rid, cid, val) in a.iter() {
        let src = b.row(cid);
        for j in 0..n_b {
            c[(rid, j)] += val * src[j];
        }
    }
    Ok(c)
}

/// Lane-group SpMM over index-pair storage. One group of `subwarp.width()`
/// lanes is assigned to each nonzero; lane `l` covers columns `l, l + w,
/// l + 2w, ...`. Cross-group adds to shared output entries are serialized in
/// ascending nonzero order, which makes the result bit-identical to
/// [`spmm_baseline`].
pub fn spmm_swa_st<T: Scalar>(
    a: &SparseTensorMatrix<T>,
    b: &DenseMatrix<T>,
    subwarp: LaneGroup,
) -> Result<DenseMatrix<T>> {
    check_spmm_shapes(a.cols(), b.rows())?;
    let mut c = DenseMatrix::zeros(a.rows(), b.cols());
    let n_b = b.cols();
    for (rid, cid, val) in a.iter() {
        let src = b.row(cid);
        for lane in 0..subwarp.width() {
            for j in subwarp.lane_columns(lane, 0, n_b) {
                c[(rid, j)] += val * src[j];
            }
        }
    }
    Ok(c)
}

/// Lane-group SpMM over CSR. One group per row; within a row, nonzeros
/// accumulate in storage order. No two groups write the same output entry.
pub fn spmm_swa_csr<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &DenseMatrix<T>,
    subwarp: LaneGroup,
) -> Result<DenseMatrix<T>> {
    check_spmm_shapes(a.cols(), b.rows())?;
    let mut c = DenseMatrix::zeros(a.rows(), b.cols());
    let n_b = b.cols();
    for rid in 0..a.rows() {
        for (cid, val) in a.row_entries(rid) {
            let src = b.row(cid);
            for lane in 0..subwarp.width() {
                for j in subwarp.lane_columns(lane, 0, n_b) {
                    c[(rid, j)] += val * src[j];
                }
            }
        }
    }
    Ok(c)
}

/// Instrumented run of the CSR kernel's write pattern: for every output
/// entry, the set of lane-group ids (= row ids here) that wrote it. Row
/// ownership makes each set a singleton or empty; tests assert that.
pub fn swa_csr_writer_groups<T: Scalar>(
    a: &CsrMatrix<T>,
    b: &DenseMatrix<T>,
    subwarp: LaneGroup,
) -> Result<Vec<Vec<usize>>> {
    check_spmm_shapes(a.cols(), b.rows())?;
    let n_b = b.cols();
    let mut writers: Vec<Vec<usize>> = vec![Vec::new(); a.rows() * n_b];
    for rid in 0..a.rows() {
        let group_id = rid;
        for (_cid, _val) in a.row_entries(rid) {
            for lane in 0..subwarp.width() {
                for j in subwarp.lane_columns(lane, 0, n_b) {
                    let w = &mut writers[rid * n_b + j];
                    if !w.contains(&group_id) {
                        w.push(group_id);
                    }
                }
            }
        }
    }
    Ok(writers)
}

/// Dense ground-truth product: triple loop accumulating in `f64`, rounded to
/// the working precision once per entry. Every equivalence test in the crate
/// compares against this routine.
pub fn gemm_oracle<T: Scalar>(
    a_dense: &DenseMatrix<T>,
    b: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    if a_dense.cols() != b.rows() {
        return Err(Error::shape(format!(
            "gemm: {}x{} vs {}x{}",
            a_dense.rows(),
            a_dense.cols(),
            b.rows(),
            b.cols()
        )));
    }
    let (m, k, n) = (a_dense.rows(), a_dense.cols(), b.cols());
    let mut c = DenseMatrix::zeros(m, n);
    for i in 0..m {
        for j in 0..n {
            let mut acc = 0.0f64;
            for l in 0..k {
                acc += a_dense[(i, l)].to_f64() * b[(l, j)].to_f64();
            }
            c[(i, j)] = T::from_f64(acc);
        }
    }
    Ok(c)
}

/// Gradient of `C = A * B` with respect to the dense input: `A^T * grad_C`.
pub fn spmm_grad_dense<T: Scalar>(
    a: &CsrMatrix<T>,
    grad_c: &DenseMatrix<T>,
) -> Result<DenseMatrix<T>> {
    if a.rows() != grad_c.rows() {
        return Err(Error::shape(format!(
            "grad_dense: sparse rows {} != grad rows {}",
            a.rows(),
            grad_c.rows()
        )));
    }
    let n = grad_c.cols();
    let mut grad_b = DenseMatrix::zeros(a.cols(), n);
    for (rid, cid, val) in a.iter() {
        let src = grad_c.row(rid);
        for j in 0..n {
            grad_b[(cid, j)] += val * src[j];
        }
    }
    Ok(grad_b)
}

/// Gradient of `C = A * B` with respect to the stored values: for nonzero
/// `k` at `(r, c)`, `grad[k] = grad_C[r] . B[c]`, in CSR storage order.
pub fn spmm_grad_values<T: Scalar>(
    a_pattern: &CsrMatrix<T>,
    b: &DenseMatrix<T>,
    grad_c: &DenseMatrix<T>,
) -> Result<Vec<T>> {
    check_spmm_shapes(a_pattern.cols(), b.rows())?;
    if grad_c.rows() != a_pattern.rows() || grad_c.cols() != b.cols() {
        return Err(Error::shape(format!(
            "grad_values: grad is {}x{}, expected {}x{}",
            grad_c.rows(),
            grad_c.cols(),
            a_pattern.rows(),
            b.cols()
        )));
    }
    let mut out = Vec::with_capacity(a_pattern.nnz());
    for (rid, cid, _) in a_pattern.iter() {
        let mut acc = T::default();
        for (&g, &x) in grad_c.row(rid).iter().zip(b.row(cid)) {
            acc += g * x;
        }
        out.push(acc);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dense::{bitwise_eq, max_rel_error};
    use crate::sparse::{coo_to_csr, csr_to_coo, random_sparse};

    #[test]
    fn lane_group_rejects_bad_widths() {
        assert!(LaneGroup::new(0).is_err());
        assert!(LaneGroup::new(3).is_err());
        assert!(LaneGroup::new(64).is_err());
        assert!(LaneGroup::new(32).is_ok());
    }

    #[test]
    fn lane_columns_cover_range_once() {
        let g = LaneGroup::new(4).unwrap();
        let mut seen = [0usize; 10];
        for lane in 0..4 {
            for j in g.lane_columns(lane, 0, 10) {
                seen[j] += 1;
            }
        }
        assert!(seen.iter().all(|&n| n == 1));
    }

    #[test]
    #[should_panic(expected = "scratchpad overflow")]
    fn scratchpad_checks_capacity() {
        let mut pad = Scratchpad::<f32>::new(16);
        pad.acquire(5);
    }

    #[test]
    fn baseline_identity_returns_b() {
        let a = SparseTensorMatrix::<f32>::identity(3);
        let b = DenseMatrix::random(3, 2, 1);
        let c = spmm_baseline(&a, &b).unwrap();
        assert!(bitwise_eq(&c, &b));
    }

    #[test]
    fn baseline_single_entry() {
        let a = SparseTensorMatrix::from_triples(2, 2, &[(0, 1, 2.0f32)]).unwrap();
        let b = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let c = spmm_baseline(&a, &b).unwrap();
        let expected = gemm_oracle(&a.to_dense(), &b).unwrap();
        assert!(bitwise_eq(&c, &expected));
        assert_eq!(c.row(0), &[6.0, 8.0]);
        assert_eq!(c.row(1), &[0.0, 0.0]);
    }

    #[test]
    fn baseline_matches_oracle_on_random_input() {
        let a = random_sparse::<f32>(50, 3, 7, true).unwrap();
        let b = DenseMatrix::random(50, 64, 8);
        let c = spmm_baseline(&a, &b).unwrap();
        let oracle = gemm_oracle(&a.to_dense(), &b).unwrap();
        assert!(max_rel_error(&c, &oracle) <= 1e-5);
    }

    #[test]
    fn swa_st_identity_returns_b() {
        let a = SparseTensorMatrix::<f32>::identity(3);
        let b = DenseMatrix::random(3, 2, 2);
        let c = spmm_swa_st(&a, &b, LaneGroup::new(2).unwrap()).unwrap();
        assert!(bitwise_eq(&c, &b));
    }

    #[test]
    fn swa_st_bit_matches_baseline() {
        for (dim, nnz, n_b, w) in [(16, 2, 5, 8), (50, 3, 64, 32), (8, 1, 1, 1)] {
            let a = random_sparse::<f32>(dim, nnz, 3, true).unwrap();
            let b = DenseMatrix::random(dim, n_b, 4);
            let swa = spmm_swa_st(&a, &b, LaneGroup::new(w).unwrap()).unwrap();
            let base = spmm_baseline(&a, &b).unwrap();
            assert!(bitwise_eq(&swa, &base), "dim={dim} n_b={n_b} w={w}");
        }
    }

    #[test]
    fn swa_st_matches_oracle_wide() {
        let a = random_sparse::<f32>(64, 3, 1, true).unwrap();
        let b = DenseMatrix::random(64, 512, 2);
        let c = spmm_swa_st(&a, &b, LaneGroup::new(32).unwrap()).unwrap();
        let oracle = gemm_oracle(&a.to_dense(), &b).unwrap();
        assert!(max_rel_error(&c, &oracle) <= 1e-5);
    }

    #[test]
    fn swa_csr_identity_returns_b() {
        let a = CsrMatrix::<f32>::identity(3);
        let b = DenseMatrix::random(3, 5, 3);
        let c = spmm_swa_csr(&a, &b, LaneGroup::new(8).unwrap()).unwrap();
        assert!(bitwise_eq(&c, &b));
    }

    #[test]
    fn swa_csr_close_to_baseline() {
        let a = random_sparse::<f32>(40, 4, 5, true).unwrap();
        let b = DenseMatrix::random(40, 24, 6);
        let csr = coo_to_csr(&a);
        let c = spmm_swa_csr(&csr, &b, LaneGroup::new(32).unwrap()).unwrap();
        let base = spmm_baseline(&csr_to_coo(&csr), &b).unwrap();
        assert!(max_rel_error(&c, &base) <= 1e-6);
    }

    #[test]
    fn swa_csr_empty_row_outputs_zeros() {
        // Row 1 empty.
        let a = CsrMatrix::new(3, 3, vec![0, 1, 1, 2], vec![0, 2], vec![1.0f32, 2.0]).unwrap();
        let b = DenseMatrix::random(3, 4, 7);
        let c = spmm_swa_csr(&a, &b, LaneGroup::new(4).unwrap()).unwrap();
        assert!(c.row(1).iter().all(|&x| x == 0.0));
    }

    #[test]
    fn swa_csr_single_writer_per_entry() {
        let a = coo_to_csr(&random_sparse::<f32>(20, 3, 9, true).unwrap());
        let b = DenseMatrix::random(20, 10, 10);
        let writers = swa_csr_writer_groups(&a, &b, LaneGroup::new(8).unwrap()).unwrap();
        assert!(writers.iter().all(|w| w.len() <= 1));
    }

    #[test]
    fn oracle_trivial_cases() {
        let b = DenseMatrix::random(2, 3, 1);
        assert!(bitwise_eq(
            &gemm_oracle(&DenseMatrix::<f32>::identity(2), &b).unwrap(),
            &b
        ));
        let z = DenseMatrix::<f32>::zeros(2, 2);
        assert!(bitwise_eq(
            &gemm_oracle(&z, &b.row_view(0..2).to_owned_matrix()).unwrap(),
            &DenseMatrix::zeros(2, 3)
        ));
        let a = DenseMatrix::from_vec(1, 1, vec![2.0f32]).unwrap();
        let b1 = DenseMatrix::from_vec(1, 1, vec![3.0f32]).unwrap();
        assert_eq!(gemm_oracle(&a, &b1).unwrap()[(0, 0)], 6.0);
    }

    #[test]
    fn grad_dense_identity_passes_through() {
        let a = CsrMatrix::<f32>::identity(4);
        let g = DenseMatrix::random(4, 3, 2);
        let out = spmm_grad_dense(&a, &g).unwrap();
        assert!(bitwise_eq(&out, &g));
    }

    #[test]
    fn grad_dense_single_entry() {
        let a = coo_to_csr(&SparseTensorMatrix::from_triples(2, 2, &[(0, 1, 2.0f32)]).unwrap());
        let g = DenseMatrix::from_vec(2, 2, vec![1.0, 1.0, 0.0, 0.0]).unwrap();
        let out = spmm_grad_dense(&a, &g).unwrap();
        assert_eq!(out.row(0), &[0.0, 0.0]);
        assert_eq!(out.row(1), &[2.0, 2.0]);
    }

    #[test]
    fn grad_values_identity_case() {
        let a = CsrMatrix::<f32>::identity(2);
        let b = DenseMatrix::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let g = DenseMatrix::identity(2);
        let out = spmm_grad_values(&a, &b, &g).unwrap();
        assert_eq!(out, vec![1.0, 4.0]);
    }

    #[test]
    fn grad_values_zero_grad() {
        let a = coo_to_csr(&random_sparse::<f32>(5, 2, 3, false).unwrap());
        let b = DenseMatrix::random(5, 3, 4);
        let g = DenseMatrix::zeros(5, 3);
        let out = spmm_grad_values(&a, &b, &g).unwrap();
        assert!(out.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let a = random_sparse::<f32>(4, 1, 0, false).unwrap();
        let b = DenseMatrix::random(5, 2, 0);
        assert!(matches!(spmm_baseline(&a, &b), Err(Error::Shape(_))));
    }
}
