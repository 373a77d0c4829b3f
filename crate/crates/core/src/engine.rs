//! Batched execution: a whole batch of SpMM tasks under one launch plan.
//!
//! [`batched_spmm`] runs every work unit of a [`LaunchPlan`] as a single
//! logical launch. Work units may execute concurrently (each one owns its
//! scratchpad and a disjoint region of one item's output) and results are
//! written back in plan order, so repeated runs are bit-identical no matter
//! how the pool schedules them.
//!
//! [`sequential_spmm`] is the non-batched reference path: one kernel call per
//! item (plus a zero-fill launch per item for the baseline algorithm), with
//! the launch counter recording the difference.

use rayon::prelude::*;
use serde::Serialize;

use crate::dense::{DenseMatrix, DenseView};
use crate::error::{Error, Result};
use crate::kernels::Scratchpad;
use crate::planner::{LaunchPlan, Layout, PlanCase, PlanInput, WorkUnit};
use crate::scalar::Scalar;
use crate::sparse::{CsrMatrix, SparseBatch, SparseItems, SparseTensorMatrix};

/// Kernel selection for a batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Baseline,
    SwaSt,
    SwaCsr,
}

impl Algorithm {
    pub fn layout(self) -> Layout {
        match self {
            Algorithm::Baseline | Algorithm::SwaSt => Layout::SparseTensor,
            Algorithm::SwaCsr => Layout::Csr,
        }
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Algorithm::Baseline => write!(f, "baseline"),
            Algorithm::SwaSt => write!(f, "swa-st"),
            Algorithm::SwaCsr => write!(f, "swa-csr"),
        }
    }
}

/// Dense inputs for a batch: either one stacked matrix viewed in per-item row
/// slices (no copies), or separate per-item matrices.
#[derive(Debug, Clone)]
pub enum DenseInput<'a, T: Scalar> {
    Stacked(&'a DenseMatrix<T>),
    PerItem(Vec<&'a DenseMatrix<T>>),
}

/// One batch of SpMM tasks: sparse items, their dense inputs, and the kernel
/// to run.
#[derive(Debug, Clone)]
pub struct BatchedSpmmRequest<'a, T: Scalar> {
    pub batch: SparseBatch<'a, T>,
    pub dense: DenseInput<'a, T>,
    pub algorithm: Algorithm,
}

impl<'a, T: Scalar> BatchedSpmmRequest<'a, T> {
    /// Planner input for this request's shapes, with default budget and
    /// thread-block size and the element size of `T`.
    pub fn plan_input(&self) -> Result<PlanInput> {
        PlanInput::new(
            self.algorithm.layout(),
            self.batch.item_rows(),
            self.batch.dense_cols(),
        )?
        .with_element_bytes(std::mem::size_of::<T>())
    }
}

/// Counts logical launches (engine entry points, the stand-in for kernel
/// launches) and executed work units.
#[derive(Debug, Default, Clone, Copy, PartialEq, Eq)]
pub struct LaunchCounter {
    logical_launches: u64,
    work_units_executed: u64,
}

impl LaunchCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn logical_launches(&self) -> u64 {
        self.logical_launches
    }

    pub fn work_units_executed(&self) -> u64 {
        self.work_units_executed
    }

    pub fn record_launches(&mut self, n: u64) {
        self.logical_launches += n;
    }

    pub fn record_work_units(&mut self, n: u64) {
        self.work_units_executed += n;
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// Per-item descriptor in the contiguous table the engine materializes
/// before execution, emulating the pointer-array transfer a batched launch
/// performs up front.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ItemDescriptor {
    pub rows: usize,
    pub cols: usize,
    pub nnz: usize,
    /// Cumulative nonzero count before this item (index storage offset).
    pub index_offset: usize,
    /// Cumulative nonzero count before this item (value storage offset).
    pub value_offset: usize,
    /// Cumulative dense rows before this item (stacked-input row offset).
    pub dense_row_offset: usize,
    /// Cumulative output elements before this item.
    pub output_offset: usize,
}

/// Contiguous descriptor table for one batch.
#[derive(Debug, Clone, Serialize)]
pub struct PointerTable {
    entries: Vec<ItemDescriptor>,
    dense_cols: usize,
}

impl PointerTable {
    pub fn entries(&self) -> &[ItemDescriptor] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Checks that offsets are monotone and consistent with the per-item
    /// sizes. A failure is an engine bug.
    pub fn validate(&self) -> Result<()> {
        let mut nnz_acc = 0usize;
        let mut dense_acc = 0usize;
        let mut out_acc = 0usize;
        for (i, e) in self.entries.iter().enumerate() {
            if e.index_offset != nnz_acc || e.value_offset != nnz_acc {
                return Err(Error::plan(format!("descriptor {i}: bad index offset")));
            }
            if e.dense_row_offset != dense_acc || e.output_offset != out_acc {
                return Err(Error::plan(format!("descriptor {i}: bad data offset")));
            }
            nnz_acc += e.nnz;
            dense_acc += e.cols;
            out_acc += e.rows * self.dense_cols;
        }
        Ok(())
    }
}

/// Materializes the per-item descriptor table for a request. The batched
/// path builds this table before executing work units, and its construction
/// cost is part of batched timing.
pub fn copy_pointer_table<T: Scalar>(req: &BatchedSpmmRequest<'_, T>) -> PointerTable {
    let n_b = req.batch.dense_cols();
    let shapes: Vec<(usize, usize, usize)> = match req.batch.items() {
        SparseItems::SparseTensor(items) => items
            .iter()
            .map(|m| (m.rows(), m.cols(), m.nnz()))
            .collect(),
        SparseItems::Csr(items) => items
            .iter()
            .map(|m| (m.rows(), m.cols(), m.nnz()))
            .collect(),
    };
    let mut entries = Vec::with_capacity(shapes.len());
    let (mut nnz_acc, mut dense_acc, mut out_acc) = (0usize, 0usize, 0usize);
    for (rows, cols, nnz) in shapes {
        entries.push(ItemDescriptor {
            rows,
            cols,
            nnz,
            index_offset: nnz_acc,
            value_offset: nnz_acc,
            dense_row_offset: dense_acc,
            output_offset: out_acc,
        });
        nnz_acc += nnz;
        dense_acc += cols;
        out_acc += rows * n_b;
    }
    PointerTable {
        entries,
        dense_cols: n_b,
    }
}

/// Executes the whole batch as one logical launch under `plan`.
///
/// Every work unit zero-fills its scratchpad (or a plain buffer in the
/// no-scratchpad case), computes its column block with the requested
/// algorithm, and the engine copies blocks back in plan order. Outputs are
/// freshly zero-allocated per call.
pub fn batched_spmm<T: Scalar>(
    req: &BatchedSpmmRequest<'_, T>,
    plan: &LaunchPlan,
    counter: &mut LaunchCounter,
) -> Result<Vec<DenseMatrix<T>>> {
    run_batched(req, plan, counter, None)
}

/// Per-item write counts: one `u32` per output entry.
pub type WriteCounts = Vec<Vec<u32>>;

/// As [`batched_spmm`], additionally returning per-item write counts so
/// tests can assert that no two work units touch the same entry.
pub fn batched_spmm_instrumented<T: Scalar>(
    req: &BatchedSpmmRequest<'_, T>,
    plan: &LaunchPlan,
    counter: &mut LaunchCounter,
) -> Result<(Vec<DenseMatrix<T>>, WriteCounts)> {
    let rows = req.batch.item_rows();
    let n_b = req.batch.dense_cols();
    let mut counts: WriteCounts = rows.iter().map(|&r| vec![0u32; r * n_b]).collect();
    let outputs = run_batched(req, plan, counter, Some(&mut counts))?;
    Ok((outputs, counts))
}

fn run_batched<T: Scalar>(
    req: &BatchedSpmmRequest<'_, T>,
    plan: &LaunchPlan,
    counter: &mut LaunchCounter,
    mut write_counts: Option<&mut WriteCounts>,
) -> Result<Vec<DenseMatrix<T>>> {
    validate_request(req)?;
    validate_plan(req, plan)?;

    // The descriptor table rides along with every batched launch.
    let table = copy_pointer_table(req);
    table
        .validate()
        .expect("engine built an inconsistent table");

    let dense = item_dense_views(req)?;
    let item_rows = req.batch.item_rows();
    let n_b = req.batch.dense_cols();

    let mut outputs: Vec<DenseMatrix<T>> = item_rows
        .iter()
        .map(|&r| DenseMatrix::zeros(r, n_b))
        .collect();

    // Compute all blocks in parallel; each unit owns its buffer. Collect
    // preserves plan order, so write-back is deterministic. Small units
    // (CSR row blocks) are chunked to amortize task overhead.
    let blocks: Vec<Vec<T>> = plan
        .work_units
        .par_iter()
        .with_min_len(plan.work_units.len().div_ceil(4 * rayon::current_num_threads()).max(1))
        .map(|unit| compute_unit_block(req, plan, unit, &dense))
        .collect();

    for (unit, block) in plan.work_units.iter().zip(&blocks) {
        let rows = clamped_rows(unit, item_rows[unit.item]);
        let width = unit.cols();
        let out = &mut outputs[unit.item];
        for (slot, rid) in rows.enumerate() {
            let dst_base = rid * n_b + unit.col_start;
            let src = &block[slot * width..(slot + 1) * width];
            out.as_mut_slice()[dst_base..dst_base + width].copy_from_slice(src);
            if let Some(counts) = write_counts.as_deref_mut() {
                for c in &mut counts[unit.item][dst_base..dst_base + width] {
                    *c += 1;
                }
            }
        }
    }

    counter.record_launches(1);
    counter.record_work_units(plan.work_units.len() as u64);
    Ok(outputs)
}

/// Rows of the unit actually present in the item (CSR units are enumerated
/// against the batch-wide maximum; surplus lane groups terminate at once).
fn clamped_rows(unit: &WorkUnit, item_rows: usize) -> std::ops::Range<usize> {
    unit.row_start.min(item_rows)..unit.row_end.min(item_rows)
}

fn compute_unit_block<T: Scalar>(
    req: &BatchedSpmmRequest<'_, T>,
    plan: &LaunchPlan,
    unit: &WorkUnit,
    dense: &[DenseView<'_, T>],
) -> Vec<T> {
    let item_rows = plan.batch_rows[unit.item];
    let rows = clamped_rows(unit, item_rows);
    let width = unit.cols();
    let block_rows = match plan.layout {
        Layout::SparseTensor => item_rows,
        Layout::Csr => rows.len(),
    };
    let elems = block_rows * width;

    let mut buffer = if plan.case == PlanCase::NoScratchpad {
        // Direct accumulation buffer; deliberately not budget-checked.
        vec![T::default(); elems]
    } else {
        let mut pad = Scratchpad::new(plan.scratchpad_budget_bytes);
        pad.acquire(elems);
        pad.into_vec()
    };

    let b = dense[unit.item];
    match req.batch.items() {
        SparseItems::SparseTensor(items) => {
            let a = items[unit.item];
            match req.algorithm {
                Algorithm::Baseline => st_block_baseline(a, b, unit, &mut buffer),
                Algorithm::SwaSt => st_block_swa(a, b, plan, unit, &mut buffer),
                Algorithm::SwaCsr => unreachable!("validated: CSR algorithm with ST items"),
            }
        }
        SparseItems::Csr(items) => {
            csr_block_swa(items[unit.item], b, plan, unit, rows, &mut buffer)
        }
    }
    buffer
}

/// Baseline order restricted to a column block: nonzeros outer (storage
/// order), columns inner ascending. Per-entry accumulation order matches the
/// single-matrix kernel, so blocks are bit-identical to its restriction.
fn st_block_baseline<T: Scalar>(
    a: &SparseTensorMatrix<T>,
    b: DenseView<'_, T>,
    unit: &WorkUnit,
    buffer: &mut [T],
) {
    let width = unit.cols();
    for (rid, cid, val) in a.iter() {
        let src = &b.row(cid)[unit.col_start..unit.col_end];
        let dst = &mut buffer[rid * width..(rid + 1) * width];
        for (d, &s) in dst.iter_mut().zip(src) {
            *d += val * s;
        }
    }
}

/// Lane-group order restricted to a column block: per nonzero, lane `l`
/// strides the block's columns.
fn st_block_swa<T: Scalar>(
    a: &SparseTensorMatrix<T>,
    b: DenseView<'_, T>,
    plan: &LaunchPlan,
    unit: &WorkUnit,
    buffer: &mut [T],
) {
    let width = unit.cols();
    let subwarp = plan.subwarp;
    for (rid, cid, val) in a.iter() {
        let src = b.row(cid);
        let base = rid * width;
        for lane in 0..subwarp.width() {
            for j in subwarp.lane_columns(lane, unit.col_start, unit.col_end) {
                buffer[base + (j - unit.col_start)] += val * src[j];
            }
        }
    }
}

/// CSR lane-group order restricted to a row/column block: each row of the
/// block belongs to one lane group; nonzeros accumulate in storage order.
fn csr_block_swa<T: Scalar>(
    a: &CsrMatrix<T>,
    b: DenseView<'_, T>,
    plan: &LaunchPlan,
    unit: &WorkUnit,
    rows: std::ops::Range<usize>,
    buffer: &mut [T],
) {
    let width = unit.cols();
    let subwarp = plan.subwarp;
    for (slot, rid) in rows.enumerate() {
        let base = slot * width;
        for (cid, val) in a.row_entries(rid) {
            let src = b.row(cid);
            for lane in 0..subwarp.width() {
                for j in subwarp.lane_columns(lane, unit.col_start, unit.col_end) {
                    buffer[base + (j - unit.col_start)] += val * src[j];
                }
            }
        }
    }
}

/// Non-batched reference path: one kernel call per item. The launch counter
/// advances by the batch size for the lane-group kernels and by twice the
/// batch size for the baseline kernel, whose output zero-fill is a separate
/// launch.
pub fn sequential_spmm<T: Scalar>(
    req: &BatchedSpmmRequest<'_, T>,
    counter: &mut LaunchCounter,
) -> Result<Vec<DenseMatrix<T>>> {
    validate_request(req)?;
    let dense = item_dense_views(req)?;
    let n_b = req.batch.dense_cols();
    let subwarp = crate::planner::compute_subwarp(n_b)?;

    let mut outputs = Vec::with_capacity(req.batch.len());
    match req.batch.items() {
        SparseItems::SparseTensor(items) => {
            for (a, &b) in items.iter().zip(&dense) {
                let mut c = DenseMatrix::zeros(a.rows(), n_b);
                match req.algorithm {
                    Algorithm::Baseline => {
                        // Zero-fill counts as its own launch on this path.
                        counter.record_launches(2);
                        for (rid, cid, val) in a.iter() {
                            let src = b.row(cid);
                            for j in 0..n_b {
                                c[(rid, j)] += val * src[j];
                            }
                        }
                    }
                    Algorithm::SwaSt => {
                        counter.record_launches(1);
                        for (rid, cid, val) in a.iter() {
                            let src = b.row(cid);
                            for lane in 0..subwarp.width() {
                                for j in subwarp.lane_columns(lane, 0, n_b) {
                                    c[(rid, j)] += val * src[j];
                                }
                            }
                        }
                    }
                    Algorithm::SwaCsr => unreachable!("validated"),
                }
                outputs.push(c);
            }
        }
        SparseItems::Csr(items) => {
            for (a, &b) in items.iter().zip(&dense) {
                counter.record_launches(1);
                let mut c = DenseMatrix::zeros(a.rows(), n_b);
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
                outputs.push(c);
            }
        }
    }
    Ok(outputs)
}

fn validate_request<T: Scalar>(req: &BatchedSpmmRequest<'_, T>) -> Result<()> {
    let layout = match req.batch.items() {
        SparseItems::SparseTensor(_) => Layout::SparseTensor,
        SparseItems::Csr(_) => Layout::Csr,
    };
    if layout != req.algorithm.layout() {
        return Err(Error::plan(format!(
            "algorithm {} requires {:?} items, batch holds {:?}",
            req.algorithm,
            req.algorithm.layout(),
            layout
        )));
    }
    Ok(())
}

fn validate_plan<T: Scalar>(req: &BatchedSpmmRequest<'_, T>, plan: &LaunchPlan) -> Result<()> {
    if plan.layout != req.algorithm.layout() {
        return Err(Error::plan(format!(
            "plan targets {:?}, request needs {:?}",
            plan.layout,
            req.algorithm.layout()
        )));
    }
    if plan.dense_cols != req.batch.dense_cols() {
        return Err(Error::plan(format!(
            "plan n_B {} != batch n_B {}",
            plan.dense_cols,
            req.batch.dense_cols()
        )));
    }
    if plan.batch_rows != req.batch.item_rows() {
        return Err(Error::plan("plan row counts do not match the batch"));
    }
    Ok(())
}

/// Resolves the per-item dense views, checking the pairing invariant: each
/// item's column count equals its dense input's row count, and all dense
/// inputs share the batch's `n_B`.
fn item_dense_views<'a, T: Scalar>(
    req: &'a BatchedSpmmRequest<'a, T>,
) -> Result<Vec<DenseView<'a, T>>> {
    let item_cols = req.batch.item_cols();
    let n_b = req.batch.dense_cols();
    match &req.dense {
        DenseInput::PerItem(mats) => {
            if mats.len() != item_cols.len() {
                return Err(Error::shape(format!(
                    "{} dense inputs for {} items",
                    mats.len(),
                    item_cols.len()
                )));
            }
            mats.iter()
                .zip(&item_cols)
                .enumerate()
                .map(|(i, (m, &k))| {
                    if m.rows() != k {
                        return Err(Error::shape(format!(
                            "item {i}: sparse cols {k} != dense rows {}",
                            m.rows()
                        )));
                    }
                    if m.cols() != n_b {
                        return Err(Error::shape(format!(
                            "item {i}: dense cols {} != batch n_B {n_b}",
                            m.cols()
                        )));
                    }
                    Ok(m.view())
                })
                .collect()
        }
        DenseInput::Stacked(m) => {
            if m.cols() != n_b {
                return Err(Error::shape(format!(
                    "stacked dense cols {} != batch n_B {n_b}",
                    m.cols()
                )));
            }
            let total: usize = item_cols.iter().sum();
            if m.rows() != total {
                return Err(Error::shape(format!(
                    "stacked dense rows {} != sum of item cols {total}",
                    m.rows()
                )));
            }
            let mut offset = 0;
            Ok(item_cols
                .iter()
                .map(|&k| {
                    let v = m.row_view(offset..offset + k);
                    offset += k;
                    v
                })
                .collect())
        }
    }
}
