//! mdbook cannot run a book's code blocks against crate dependencies, so the
//! chapters are included here as doc comments and `cargo test --doc` checks
//! every snippet. One module per chapter keeps failures attributable.

#[doc = include_str!("../../../book/src/introduction.md")]
pub mod introduction {}

#[doc = include_str!("../../../book/src/sparse-formats.md")]
pub mod sparse_formats {}

#[doc = include_str!("../../../book/src/spmm-kernels.md")]
pub mod spmm_kernels {}

#[doc = include_str!("../../../book/src/launch-planning.md")]
pub mod launch_planning {}

#[doc = include_str!("../../../book/src/batched-execution.md")]
pub mod batched_execution {}

#[doc = include_str!("../../../book/src/graph-convolution.md")]
pub mod graph_convolution {}

#[doc = include_str!("../../../book/src/benchmarking.md")]
pub mod benchmarking {}
