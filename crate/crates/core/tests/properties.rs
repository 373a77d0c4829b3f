//! Property tests for the format layer and the planner.

use proptest::prelude::*;

use spmm_batch::io::{parse_matrix_market, to_matrix_market};
use spmm_batch::planner::{
    compute_subwarp, plan_batch, scratch_bytes, LaunchPlan, Layout, PlanCase, PlanInput,
};
use spmm_batch::sparse::{coo_to_csr, csr_to_coo, random_sparse, SparseTensorMatrix};

fn arb_sparse() -> impl Strategy<Value = SparseTensorMatrix<f32>> {
    (1usize..20, 1usize..20)
        .prop_flat_map(|(rows, cols)| {
            let entries = prop::collection::btree_map(
                (0..rows, 0..cols),
                0.0f32..1.0,
                0..=(rows * cols).min(48),
            );
            (Just(rows), Just(cols), entries)
        })
        .prop_flat_map(|(rows, cols, entries)| {
            let triples: Vec<(usize, usize, f32)> =
                entries.into_iter().map(|((r, c), v)| (r, c, v)).collect();
            (Just(rows), Just(cols), Just(triples).prop_shuffle())
        })
        .prop_map(|(rows, cols, triples)| {
            SparseTensorMatrix::from_triples(rows, cols, &triples).expect("valid by construction")
        })
}

fn multiset(m: &SparseTensorMatrix<f32>) -> Vec<(usize, usize, u32)> {
    let mut v: Vec<_> = m.iter().map(|(r, c, x)| (r, c, x.to_bits())).collect();
    v.sort_unstable();
    v
}

proptest! {
    #[test]
    fn csr_round_trip_preserves_multiset(a in arb_sparse()) {
        let back = csr_to_coo(&coo_to_csr(&a));
        prop_assert_eq!(multiset(&a), multiset(&back));
        prop_assert_eq!(a.rows(), back.rows());
        prop_assert_eq!(a.cols(), back.cols());
    }

    #[test]
    fn csr_form_is_canonical(a in arb_sparse()) {
        let csr = coo_to_csr(&a);
        for r in 0..csr.rows() {
            let row: Vec<usize> = csr.row_entries(r).map(|(c, _)| c).collect();
            prop_assert!(row.windows(2).all(|w| w[0] < w[1]));
        }
    }

    #[test]
    fn matrix_market_emit_parse_identity(a in arb_sparse()) {
        let text = to_matrix_market(&a);
        let parsed = parse_matrix_market::<f32>(&text).unwrap();
        prop_assert_eq!(&a, &parsed);
        prop_assert_eq!(text, to_matrix_market(&parsed));
    }

    #[test]
    fn random_sparse_density_and_determinism(
        dim in 1usize..48,
        nnz_frac in 0usize..=100,
        seed in any::<u64>(),
        shuffle in any::<bool>(),
    ) {
        let nnz_per_row = (nnz_frac * dim / 100).min(dim);
        let a = random_sparse::<f32>(dim, nnz_per_row, seed, shuffle).unwrap();
        prop_assert_eq!(a.nnz(), dim * nnz_per_row);
        let b = random_sparse::<f32>(dim, nnz_per_row, seed, shuffle).unwrap();
        prop_assert_eq!(a, b);
    }
}

fn arb_plan_input() -> impl Strategy<Value = PlanInput> {
    (
        prop_oneof![Just(Layout::SparseTensor), Just(Layout::Csr)],
        prop::collection::vec(0usize..3000, 1..16),
        1usize..2048,
        prop_oneof![Just(4usize), Just(8usize)],
        512usize..65536,
        prop_oneof![Just(32usize), Just(64), Just(96), Just(128), Just(256)],
    )
        .prop_map(|(layout, rows, n_b, eb, budget, tb)| {
            PlanInput::new(layout, rows, n_b)
                .unwrap()
                .with_element_bytes(eb)
                .unwrap()
                .with_budget(budget)
                .unwrap()
                .with_threads_per_block(tb)
                .unwrap()
        })
}

/// Distinct column ranges of one item partition `[0, dense_cols)`.
fn check_column_partition(plan: &LaunchPlan) {
    for item in 0..plan.batch_size() {
        let mut ranges: Vec<(usize, usize)> = plan
            .work_units
            .iter()
            .filter(|u| u.item == item)
            .map(|u| (u.col_start, u.col_end))
            .collect();
        if ranges.is_empty() {
            // Only possible for CSR batches whose max row count is zero.
            assert_eq!(plan.layout, Layout::Csr);
            assert!(plan.batch_rows.iter().all(|&r| r == 0));
            continue;
        }
        ranges.sort_unstable();
        ranges.dedup();
        assert_eq!(ranges.first().unwrap().0, 0);
        assert_eq!(ranges.last().unwrap().1, plan.dense_cols);
        for w in ranges.windows(2) {
            assert_eq!(w[0].1, w[1].0, "column ranges must tile exactly: {w:?}");
        }
        assert_eq!(ranges.len(), plan.p, "p must equal the column block count");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn subwarp_is_a_capped_power_of_two(n_b in 1usize..4096) {
        let w = compute_subwarp(n_b).unwrap().width();
        prop_assert!(w.is_power_of_two() && w <= 32);
        if n_b > 16 {
            prop_assert_eq!(w, 32);
        }
        let w_next = compute_subwarp(n_b + 1).unwrap().width();
        prop_assert!(w_next >= w, "must be monotone non-decreasing");
    }

    #[test]
    fn plans_satisfy_structural_invariants(input in arb_plan_input()) {
        let plan = plan_batch(&input);
        prop_assert_eq!(plan.launches, 1);
        check_column_partition(&plan);

        // Scratchpad demand never exceeds the budget outside the
        // no-scratchpad case.
        if plan.case != PlanCase::NoScratchpad {
            for unit in &plan.work_units {
                prop_assert!(scratch_bytes(unit, &plan) <= plan.scratchpad_budget_bytes);
            }
        } else {
            prop_assert_eq!(plan.p, 1);
        }

        let batch = input.batch_rows.len();
        let max_rows = input.batch_rows.iter().copied().max().unwrap();
        match input.layout {
            Layout::SparseTensor => {
                prop_assert_eq!(plan.total_blocks, batch * plan.p);
                prop_assert_eq!(plan.work_units.len(), batch * plan.p);
            }
            Layout::Csr => {
                prop_assert_eq!(
                    plan.total_threads,
                    max_rows * plan.subwarp.width() * batch * plan.p
                );
            }
        }

        // Pure function.
        prop_assert_eq!(plan, plan_batch(&input));
    }

    #[test]
    fn shrinking_budget_never_decreases_p(input in arb_plan_input(), shrink in 2usize..8) {
        let plan = plan_batch(&input);
        let smaller = input
            .clone()
            .with_budget((input.scratchpad_budget_bytes / shrink).max(512))
            .unwrap();
        let shrunk = plan_batch(&smaller);
        // The comparison is meaningful while both plans still use the
        // scratchpad; the direct-to-output fallback resets p to 1.
        if plan.case != PlanCase::NoScratchpad && shrunk.case != PlanCase::NoScratchpad {
            prop_assert!(shrunk.p >= plan.p, "p {} -> {}", plan.p, shrunk.p);
        }
    }

    #[test]
    fn doubling_dense_cols_never_decreases_p(input in arb_plan_input()) {
        let plan = plan_batch(&input);
        let mut wider = input.clone();
        wider.dense_cols = input.dense_cols * 2;
        let wide_plan = plan_batch(&wider);
        if plan.case != PlanCase::NoScratchpad && wide_plan.case != PlanCase::NoScratchpad {
            prop_assert!(wide_plan.p >= plan.p, "p {} -> {}", plan.p, wide_plan.p);
        }
    }
}
