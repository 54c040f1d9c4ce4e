use mixsparse::bench::{core_splits, generate_poisson2d, run_comm_sweep};
use mixsparse::comm::{gather_owned, LocalOperator, RankGroup};
use mixsparse::exec::{Exec, ThreadingPolicy};
use mixsparse::kernels;
use mixsparse::layout::{
    build_scatter_plan, chunk_ranges, ghost_volume, partition_rows, split_dist,
};
use mixsparse::sparse::{
    bandwidth, permute, rcm_order, read_matrix_market, write_matrix_market, CsrMatrix,
};
use proptest::prelude::*;

fn triplets(max_n: usize) -> impl Strategy<Value = (usize, Vec<(usize, usize, f64)>)> {
    (1..=max_n).prop_flat_map(|n| {
        let entry = (0..n, 0..n, -10.0f64..10.0);
        (Just(n), proptest::collection::vec(entry, 0..4 * n))
    })
}

fn matrix(max_n: usize) -> impl Strategy<Value = CsrMatrix> {
    triplets(max_n).prop_map(|(n, t)| CsrMatrix::from_triplets(n, n, t).unwrap())
}

/// Pattern-symmetric matrix with a full diagonal.
fn sym_pattern(max_n: usize) -> impl Strategy<Value = CsrMatrix> {
    triplets(max_n).prop_map(|(n, t)| {
        let mut all: Vec<_> = (0..n).map(|i| (i, i, 1.0)).collect();
        for (i, j, v) in t {
            all.push((i, j, v));
            all.push((j, i, v));
        }
        CsrMatrix::from_triplets(n, n, all).unwrap()
    })
}

proptest! {
    #[test]
    fn csr_rows_sorted_and_sums_kept((n, t) in triplets(20)) {
        let m = CsrMatrix::from_triplets(n, n, t.clone()).unwrap();
        for i in 0..n {
            let (cols, _) = m.row(i);
            prop_assert!(cols.windows(2).all(|w| w[0] < w[1]));
        }
        let mut dense = vec![vec![0.0; n]; n];
        for (i, j, v) in &t {
            dense[*i][*j] += v;
        }
        for (i, row) in dense.iter().enumerate() {
            for (j, &v) in row.iter().enumerate() {
                prop_assert_eq!(m.get(i, j).unwrap_or(0.0), v);
            }
        }
    }

    #[test]
    fn matrix_market_round_trip_is_bitwise(m in matrix(16)) {
        let mut buf = Vec::new();
        write_matrix_market(&m, &mut buf).unwrap();
        let back = read_matrix_market(buf.as_slice(), std::path::Path::new("mem"), false).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn chunk_ranges_follow_the_static_rule(n in 0usize..200, k in 1usize..17) {
        let c = chunk_ranges(n, k).unwrap();
        prop_assert_eq!(c.n_chunks(), k);
        let (q, r) = (n / k, n % k);
        let mut start = 0;
        for (i, range) in c.ranges().enumerate() {
            prop_assert_eq!(range.start, start);
            prop_assert_eq!(range.len(), if i < r { q + 1 } else { q });
            start = range.end;
        }
        prop_assert_eq!(start, n);
    }

    #[test]
    fn rcm_is_a_relabelling(m in sym_pattern(30)) {
        let p = rcm_order(&m).unwrap();
        let mut seen = p.as_slice().to_vec();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..m.n_rows()).collect::<Vec<_>>());
        let pm = permute(&m, &p).unwrap();
        prop_assert_eq!(pm.nnz(), m.nnz());
        let back = permute(&pm, &p.inverse()).unwrap();
        prop_assert_eq!(back, m);
    }

    #[test]
    fn split_plan_and_ghosts_agree(m in matrix(40), r in 1usize..6, t in 1usize..4) {
        let dm = split_dist(&m, &partition_rows(m.n_rows(), r).unwrap(), t).unwrap();
        prop_assert_eq!(dm.reconstruct().unwrap(), m.clone());
        let plan = build_scatter_plan(&dm);
        let gv = ghost_volume(&dm);
        prop_assert_eq!(plan.ghost_len.iter().sum::<usize>(), gv.total);
        prop_assert_eq!(plan.n_messages(), gv.messages);
        for (rank, block) in dm.blocks.iter().enumerate() {
            prop_assert!(block.ghost_cols.windows(2).all(|w| w[0] < w[1]));
            prop_assert!(block.ghost_cols.iter().all(|c| !block.rows.contains(c)));
            prop_assert_eq!(block.ghost_cols.len(), gv.per_rank[rank]);
        }
    }

    #[test]
    fn dist_spmv_matches_dense(m in matrix(40), r in 1usize..5, t in 1usize..4, seed in 0u64..1000) {
        let n = m.n_rows();
        let x: Vec<f64> = (0..n).map(|i| ((i as u64 * 2654435761 + seed) % 1000) as f64 / 500.0 - 1.0).collect();
        let dm = split_dist(&m, &partition_rows(n, r).unwrap(), t).unwrap();
        let plan = build_scatter_plan(&dm);
        let parts = RankGroup::new(r, t).unwrap().run(|ctx| {
            let op = LocalOperator::new(&dm, &plan, ctx.rank());
            let mut xv = ctx.vector_from_global(&op, &x)?;
            let mut y = ctx.create_vector(&op);
            ctx.spmv(&op, &mut xv, &mut y)?;
            Ok(y)
        }).unwrap();
        let y = gather_owned(&parts);
        for (i, row) in m.to_dense().iter().enumerate() {
            let exact: f64 = row.iter().zip(&x).map(|(a, b)| a * b).sum();
            let scale: f64 = row.iter().zip(&x).map(|(a, b)| (a * b).abs()).sum();
            prop_assert!((y[i] - exact).abs() <= 1e-13 * scale.max(f64::MIN_POSITIVE));
        }
    }

    #[test]
    fn threaded_kernels_match_sequential(v in proptest::collection::vec(-1e3f64..1e3, 0..300), k in 1usize..9) {
        let seq = Exec::sequential(ThreadingPolicy::new(k).unwrap());
        let par = Exec::threaded(ThreadingPolicy::new(k).unwrap()).unwrap();
        let a = kernels::ChunkedVector::from_slice(&seq, &v);
        let b = kernels::ChunkedVector::from_slice(&par, &v);
        prop_assert_eq!(kernels::dot(&seq, &a, &a).unwrap().to_bits(), kernels::dot(&par, &b, &b).unwrap().to_bits());
        let mut ya = kernels::alloc_zeroed(&seq, v.len());
        let mut yb = kernels::alloc_zeroed(&par, v.len());
        kernels::axpy(&seq, 1.5, &a, &mut ya).unwrap();
        kernels::axpy(&par, 1.5, &b, &mut yb).unwrap();
        prop_assert_eq!(ya.as_slice(), yb.as_slice());
    }
}

#[test]
fn sweeps_are_monotone_for_nested_splits() {
    for k in [4, 8, 16] {
        let m = generate_poisson2d(k).unwrap();
        for cores in [1, 2, 4, 8, 16] {
            let rows = run_comm_sweep(&m, cores).unwrap();
            assert_eq!(rows.len(), core_splits(cores).unwrap().len());
            assert!(rows
                .windows(2)
                .all(|w| w[1].ghost_volume <= w[0].ghost_volume));
            assert_eq!(rows.last().unwrap().ghost_volume, 0);
        }
    }
}

#[test]
fn rcm_never_widens_a_shuffled_grid() {
    use mixsparse::bench::shuffle_permutation;
    for seed in 0..5 {
        let m = generate_poisson2d(12).unwrap();
        let s = permute(&m, &shuffle_permutation(m.n_rows(), seed)).unwrap();
        let r = permute(&s, &rcm_order(&s).unwrap()).unwrap();
        assert!(bandwidth(&r).unwrap() <= bandwidth(&m).unwrap());
    }
}
