//! Batched sparse-dense matrix multiplication (SpMM) on deterministic
//! lane-group emulation, with a cache-blocking launch planner, a
//! graph-convolution layer, and a benchmark harness.
//!
//! Many workloads, graph neural networks above all, multiply *small* sparse
//! matrices (tens to hundreds of rows) by dense feature matrices, one
//! multiplication per item in a mini-batch. Issuing each product as its own
//! kernel launch wastes most of the machine on launch overhead. This crate
//! executes the whole batch as **one logical launch**: a [`planner`] sizes
//! lane groups and column blocks against a fixed scratchpad budget, and the
//! [`engine`] runs the resulting work units (in parallel, deterministically)
//! over the kernels in [`kernels`].
//!
//! # Quick example
//!
//! ```
//! use spmm_batch::dense::DenseMatrix;
//! use spmm_batch::engine::{batched_spmm, Algorithm, BatchedSpmmRequest, DenseInput, LaunchCounter};
//! use spmm_batch::planner::plan_batch;
//! use spmm_batch::sparse::{random_sparse, SparseBatch};
//!
//! let items: Vec<_> = (0..4)
//!     .map(|seed| random_sparse::<f32>(50, 3, seed, true).unwrap())
//!     .collect();
//! let dense: Vec<_> = (0..4).map(|s| DenseMatrix::<f32>::random(50, 64, s)).collect();
//!
//! let req = BatchedSpmmRequest {
//!     batch: SparseBatch::from_sparse_tensor(items.iter().collect(), 64).unwrap(),
//!     dense: DenseInput::PerItem(dense.iter().collect()),
//!     algorithm: Algorithm::SwaSt,
//! };
//! let plan = plan_batch(&req.plan_input().unwrap());
//! let mut counter = LaunchCounter::new();
//! let outputs = batched_spmm(&req, &plan, &mut counter).unwrap();
//!
//! assert_eq!(outputs.len(), 4);
//! assert_eq!(counter.logical_launches(), 1); // the whole batch, one launch
//! ```
//!
//! The `spmm-bench` binary drives the same machinery from the command line;
//! see the guide in `book/` for a chapter-by-chapter walkthrough.

pub mod bench;
pub mod dense;
pub mod engine;
pub mod error;
pub mod gcn;
pub mod io;
pub mod kernels;
pub mod planner;
pub mod scalar;
pub mod sparse;

pub use error::{Error, Result};
pub use scalar::{Precision, Scalar};
