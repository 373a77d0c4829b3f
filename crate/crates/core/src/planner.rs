//! Launch planning: lane-group width, cache-blocking classification, and
//! work-unit enumeration with exact thread/block accounting.
//!
//! A batch of SpMM tasks executes as one logical launch. The planner decides,
//! from shapes alone, how that launch is carved into work units:
//!
//! - **fits_whole**: the largest output matrix in the batch fits the
//!   scratchpad, so each item gets one work unit covering all of its output.
//! - **column_blocked**: outputs are too wide; every item's output is split
//!   into `p` column blocks sized so one block fits the scratchpad. The
//!   blocking factor is uniform across the batch.
//! - **no_scratchpad**: a single output column for the largest item already
//!   exceeds the scratchpad, so work units accumulate directly into the
//!   output buffer. With the default 32 KiB budget and 4-byte elements this
//!   only happens above 8192 rows.
//!
//! Planning is a pure function of [`PlanInput`]: identical inputs produce
//! identical [`LaunchPlan`]s.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{LaneGroup, DEFAULT_SCRATCHPAD_BYTES};

/// Storage layout a plan targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Layout {
    SparseTensor,
    Csr,
}

/// Default thread-block size: four full warps.
pub const DEFAULT_THREADS_PER_BLOCK: usize = 128;

/// Shapes and budgets the planner works from.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanInput {
    pub layout: Layout,
    /// Row count of each sparse item in the batch.
    pub batch_rows: Vec<usize>,
    /// Shared dense column count `n_B`.
    pub dense_cols: usize,
    /// Bytes per matrix element (4 for single precision).
    pub element_bytes: usize,
    pub scratchpad_budget_bytes: usize,
    pub threads_per_block: usize,
}

impl PlanInput {
    /// Validates the invariants: nonempty batch, `dense_cols >= 1`, and a
    /// thread-block size that is a multiple of the 32-lane warp.
    pub fn new(layout: Layout, batch_rows: Vec<usize>, dense_cols: usize) -> Result<Self> {
        let input = Self {
            layout,
            batch_rows,
            dense_cols,
            element_bytes: 4,
            scratchpad_budget_bytes: DEFAULT_SCRATCHPAD_BYTES,
            threads_per_block: DEFAULT_THREADS_PER_BLOCK,
        };
        input.validate()?;
        Ok(input)
    }

    pub fn with_element_bytes(mut self, element_bytes: usize) -> Result<Self> {
        self.element_bytes = element_bytes;
        self.validate()?;
        Ok(self)
    }

    pub fn with_budget(mut self, scratchpad_budget_bytes: usize) -> Result<Self> {
        self.scratchpad_budget_bytes = scratchpad_budget_bytes;
        self.validate()?;
        Ok(self)
    }

    pub fn with_threads_per_block(mut self, threads_per_block: usize) -> Result<Self> {
        self.threads_per_block = threads_per_block;
        self.validate()?;
        Ok(self)
    }

    fn validate(&self) -> Result<()> {
        if self.batch_rows.is_empty() {
            return Err(Error::parameter("batch must be nonempty"));
        }
        if self.dense_cols == 0 {
            return Err(Error::parameter("dense_cols must be >= 1"));
        }
        if self.threads_per_block == 0 || !self.threads_per_block.is_multiple_of(32) {
            return Err(Error::parameter(format!(
                "threads_per_block must be a positive multiple of 32, got {}",
                self.threads_per_block
            )));
        }
        if self.element_bytes == 0 {
            return Err(Error::parameter("element_bytes must be >= 1"));
        }
        Ok(())
    }
}

/// How the plan uses the scratchpad.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PlanCase {
    /// Whole per-item output fits the scratchpad.
    FitsWhole,
    /// Output split into `p` column blocks, each fitting the scratchpad.
    ColumnBlocked,
    /// Scratchpad unusable; work units accumulate directly into the output.
    NoScratchpad,
}

impl PlanCase {
    /// Stable lowercase name, matching the serialized form.
    pub fn name(self) -> &'static str {
        match self {
            PlanCase::FitsWhole => "fits_whole",
            PlanCase::ColumnBlocked => "column_blocked",
            PlanCase::NoScratchpad => "no_scratchpad",
        }
    }
}

/// One thread block's worth of work: a column block (and, for CSR, a row
/// block) of one item's output.
///
/// CSR row ranges are enumerated against the batch-wide maximum row count, so
/// items with fewer rows carry nominally oversized units; execution clamps
/// the range and the surplus lane groups terminate immediately.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct WorkUnit {
    pub item: usize,
    pub row_start: usize,
    pub row_end: usize,
    pub col_start: usize,
    pub col_end: usize,
}

impl WorkUnit {
    pub fn cols(&self) -> usize {
        self.col_end - self.col_start
    }
}

/// The planner's decision record for one batched launch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LaunchPlan {
    pub layout: Layout,
    pub subwarp: LaneGroup,
    pub case: PlanCase,
    /// Number of column blocks per item, uniform across the batch.
    pub p: usize,
    /// Columns per sub-matrix (equals `dense_cols` when `p = 1`).
    pub block_width: usize,
    pub work_units: Vec<WorkUnit>,
    pub total_threads: usize,
    pub total_blocks: usize,
    /// A batched plan always executes as one logical launch.
    pub launches: usize,
    /// Lane groups per thread block (`threads_per_block / subwarp`).
    pub groups_per_block: usize,
    pub dense_cols: usize,
    pub element_bytes: usize,
    pub scratchpad_budget_bytes: usize,
    pub threads_per_block: usize,
    pub batch_rows: Vec<usize>,
}

impl LaunchPlan {
    pub fn batch_size(&self) -> usize {
        self.batch_rows.len()
    }

    /// Plan serialized for `--explain`: decision summary plus the work-unit
    /// table.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("plan serializes")
    }
}

/// Lane-group width for a dense input of `n_b` columns: 32 once `n_b`
/// exceeds 16, otherwise the smallest power of two that covers `n_b`.
pub fn compute_subwarp(n_b: usize) -> Result<LaneGroup> {
    if n_b == 0 {
        return Err(Error::parameter("n_b must be >= 1"));
    }
    let width = if n_b > 16 {
        32
    } else {
        n_b.next_power_of_two()
    };
    LaneGroup::new(width)
}

/// Plans a batch, dispatching on the input layout.
pub fn plan_batch(input: &PlanInput) -> LaunchPlan {
    match input.layout {
        Layout::SparseTensor => plan_batch_st(input),
        Layout::Csr => plan_batch_csr(input),
    }
}

/// Plans a batch of index-pair-layout SpMM tasks: one thread block per item
/// per column block.
///
/// Panics if the input layout is not [`Layout::SparseTensor`].
pub fn plan_batch_st(input: &PlanInput) -> LaunchPlan {
    assert_eq!(
        input.layout,
        Layout::SparseTensor,
        "plan_batch_st requires the sparse-tensor layout"
    );
    let subwarp = compute_subwarp(input.dense_cols).expect("dense_cols >= 1 validated");
    let max_rows = input.batch_rows.iter().copied().max().unwrap_or(0);
    let budget = input.scratchpad_budget_bytes;
    let eb = input.element_bytes;
    let n_b = input.dense_cols;

    let (case, p, block_width) = if max_rows * n_b * eb <= budget {
        (PlanCase::FitsWhole, 1, n_b)
    } else if max_rows * eb <= budget {
        // Widest block that fits, rounded down to a multiple of the lane-group
        // width so lane striding stays aligned; at least one column.
        let fit = budget / (max_rows * eb);
        let aligned = fit - fit % subwarp.width();
        let width = aligned.max(1);
        (PlanCase::ColumnBlocked, n_b.div_ceil(width), width)
    } else {
        (PlanCase::NoScratchpad, 1, n_b)
    };

    let mut work_units = Vec::with_capacity(input.batch_rows.len() * p);
    for (item, &rows) in input.batch_rows.iter().enumerate() {
        for block in 0..p {
            let col_start = block * block_width;
            let col_end = ((block + 1) * block_width).min(n_b);
            work_units.push(WorkUnit {
                item,
                row_start: 0,
                row_end: rows,
                col_start,
                col_end,
            });
        }
    }

    let total_blocks = input.batch_rows.len() * p;
    LaunchPlan {
        layout: Layout::SparseTensor,
        subwarp,
        case,
        p,
        block_width,
        work_units,
        total_threads: total_blocks * input.threads_per_block,
        total_blocks,
        launches: 1,
        groups_per_block: input.threads_per_block / subwarp.width(),
        dense_cols: n_b,
        element_bytes: eb,
        scratchpad_budget_bytes: budget,
        threads_per_block: input.threads_per_block,
        batch_rows: input.batch_rows.clone(),
    }
}

/// Plans a batch of CSR SpMM tasks: `subwarp * m_A` threads per item, blocks
/// of `threads_per_block / subwarp` rows, column blocking only when the
/// per-block scratchpad demand exceeds the budget.
///
/// Panics if the input layout is not [`Layout::Csr`].
pub fn plan_batch_csr(input: &PlanInput) -> LaunchPlan {
    assert_eq!(
        input.layout,
        Layout::Csr,
        "plan_batch_csr requires the CSR layout"
    );
    let subwarp = compute_subwarp(input.dense_cols).expect("dense_cols >= 1 validated");
    let groups_per_block = input.threads_per_block / subwarp.width();
    let budget = input.scratchpad_budget_bytes;
    let eb = input.element_bytes;
    let n_b = input.dense_cols;
    let max_rows = input.batch_rows.iter().copied().max().unwrap_or(0);

    let scratch_per_block = groups_per_block * n_b * eb;
    let (case, p, block_width) = if scratch_per_block <= budget {
        (PlanCase::FitsWhole, 1, n_b)
    } else if groups_per_block * eb > budget {
        // Even a single column per lane group does not fit; fall back to
        // accumulating directly into the output.
        (PlanCase::NoScratchpad, 1, n_b)
    } else {
        let mut p = scratch_per_block.div_ceil(budget);
        // ceil(n_b / p) can overshoot the budget when groups_per_block is not
        // a power of two; widen the split until a block fits.
        while groups_per_block * n_b.div_ceil(p) * eb > budget {
            p += 1;
        }
        (PlanCase::ColumnBlocked, p, n_b.div_ceil(p))
    };

    let row_blocks_per_item = max_rows.div_ceil(groups_per_block);
    let mut work_units = Vec::with_capacity(input.batch_rows.len() * row_blocks_per_item * p);
    for (item, _) in input.batch_rows.iter().enumerate() {
        for row_block in 0..row_blocks_per_item {
            let row_start = row_block * groups_per_block;
            let row_end = ((row_block + 1) * groups_per_block).min(max_rows);
            for block in 0..p {
                let col_start = block * block_width;
                let col_end = ((block + 1) * block_width).min(n_b);
                work_units.push(WorkUnit {
                    item,
                    row_start,
                    row_end,
                    col_start,
                    col_end,
                });
            }
        }
    }

    let batch = input.batch_rows.len();
    LaunchPlan {
        layout: Layout::Csr,
        subwarp,
        case,
        p,
        block_width,
        work_units,
        total_threads: max_rows * subwarp.width() * batch * p,
        total_blocks: batch * row_blocks_per_item * p,
        launches: 1,
        groups_per_block,
        dense_cols: n_b,
        element_bytes: eb,
        scratchpad_budget_bytes: budget,
        threads_per_block: input.threads_per_block,
        batch_rows: input.batch_rows.clone(),
    }
}

/// Scratchpad bytes one work unit needs under `plan`.
///
/// Index-pair layout stages the item's full row range; CSR stages one row
/// per lane group. The no-scratchpad case uses none.
pub fn scratch_bytes(unit: &WorkUnit, plan: &LaunchPlan) -> usize {
    if plan.case == PlanCase::NoScratchpad {
        return 0;
    }
    match plan.layout {
        Layout::SparseTensor => plan.batch_rows[unit.item] * unit.cols() * plan.element_bytes,
        Layout::Csr => plan.groups_per_block * unit.cols() * plan.element_bytes,
    }
}
