use nalgebra::DMatrix;
use proptest::prelude::*;
use rapopt::generators::{gen_compressed_sensing, gen_scad_ls, GenSpec};
use rapopt::io::{dense_to_string, parse_dense, parse_sparse, parse_vector, sparse_to_string, vector_to_string};
use rapopt::metrics::{mean_trajectory, ncone_distance_sq, read_csv, strong_gap_from_gradient, write_csv, RecordRow};
use rapopt::rapgrad::{rapgrad_run, RapGradConfig};
use rapopt::{BoxSet, FeasibleSet};

fn finite() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, -1.0..1.0f64, Just(0.0), Just(-0.0), Just(f64::MIN_POSITIVE), Just(1e300)]
}

fn boxed(n: usize) -> impl Strategy<Value = (FeasibleSet, Vec<f64>, Vec<f64>)> {
    (
        prop::collection::vec((-5.0..0.0f64, 0.0..5.0f64), n),
        prop::collection::vec(0.0..1.0f64, n),
        prop::collection::vec(-10.0..10.0f64, n),
        prop::collection::vec(0..3u8, n),
    )
        .prop_map(|(bounds, t, g, pin)| {
            let lo: Vec<f64> = bounds.iter().map(|b| b.0).collect();
            let hi: Vec<f64> = bounds.iter().map(|b| b.1).collect();
            // Pin some coordinates to a face so the normal cone is nontrivial.
            let x = (0..lo.len())
                .map(|i| match pin[i] {
                    0 => lo[i],
                    1 => hi[i],
                    _ => lo[i] + t[i] * (hi[i] - lo[i]),
                })
                .collect();
            (FeasibleSet::Box(BoxSet::new(lo, hi).unwrap()), x, g)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn dense_round_trip(rows in 1usize..6, cols in 1usize..6, vals in prop::collection::vec(finite(), 36)) {
        let m = DMatrix::from_fn(rows, cols, |i, j| vals[i * 6 + j]);
        prop_assert_eq!(parse_dense(&dense_to_string(&m)).unwrap(), m);
    }

    #[test]
    fn sparse_round_trip(rows in 1usize..6, cols in 1usize..6, vals in prop::collection::vec(finite(), 36), mask in prop::collection::vec(any::<bool>(), 36)) {
        let m = DMatrix::from_fn(rows, cols, |i, j| if mask[i * 6 + j] { vals[i * 6 + j] } else { 0.0 });
        let back = parse_sparse(&sparse_to_string(&m)).unwrap();
        prop_assert_eq!(back.shape(), m.shape());
        for (a, b) in back.iter().zip(m.iter()) {
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn vector_round_trip(v in prop::collection::vec(finite(), 0..20)) {
        let back = parse_vector(&vector_to_string(&v)).unwrap();
        prop_assert_eq!(back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    }

    #[test]
    fn ncone_whole_space_is_norm(g in prop::collection::vec(-1e3..1e3f64, 1..10)) {
        let x = vec![0.0; g.len()];
        let d = ncone_distance_sq(&g, &FeasibleSet::WholeSpace, &x).unwrap();
        prop_assert_eq!(d, g.iter().map(|v| v * v).sum::<f64>());
    }

    #[test]
    fn ncone_and_gap_are_consistent((set, x, g) in (1usize..8).prop_flat_map(boxed)) {
        let d = ncone_distance_sq(&g, &set, &x).unwrap();
        let gap = strong_gap_from_gradient(&g, &set, &x).unwrap();
        prop_assert!(d >= 0.0);
        prop_assert!(gap >= 0.0);
        prop_assert!(d <= g.iter().map(|v| v * v).sum::<f64>() + 1e-12);
        prop_assert_eq!(d == 0.0, gap == 0.0);
    }

    #[test]
    fn scad_ls_generator_is_deterministic(m in 2usize..12, n in 1usize..8, seed in any::<u64>()) {
        let spec = GenSpec::scad_ls(m, n, seed);
        let a = gen_scad_ls(&spec).unwrap();
        let b = gen_scad_ls(&spec).unwrap();
        prop_assert_eq!(&a.matrix, &b.matrix);
        prop_assert_eq!(&a.rhs, &b.rhs);
        prop_assert_eq!(&a.ground_truth, &b.ground_truth);
        prop_assert!(a.ground_truth.iter().filter(|v| **v != 0.0).count() <= n.min(20));
    }

    #[test]
    fn compressed_sensing_generator_is_deterministic(m in 2usize..5, n in 2usize..6, seed in any::<u64>()) {
        let spec = GenSpec::compressed_sensing(m, n, seed);
        let a = gen_compressed_sensing(&spec).unwrap();
        let b = gen_compressed_sensing(&spec).unwrap();
        prop_assert_eq!(&a.blocks, &b.blocks);
        prop_assert_eq!(&a.rhs, &b.rhs);
        prop_assert_eq!(a.redrawn_columns, b.redrawn_columns);
        for blk in &a.blocks {
            for c in blk.column_iter() {
                prop_assert!(c.iter().any(|v| *v != 0.0));
            }
        }
    }

    #[test]
    fn rapgrad_gradient_accounting(m in 2usize..10, k in 1usize..5, s in 1usize..20, seed in any::<u64>()) {
        let inst = gen_scad_ls(&GenSpec::scad_ls(m, 3, seed)).unwrap();
        let cfg = RapGradConfig { k, s_override: Some(s), seed, ..Default::default() };
        let out = rapgrad_run(&inst.problem, &cfg).unwrap();
        prop_assert_eq!(out.record.counters.gradient_evals, (m + k * s) as u64);
        prop_assert!(out.record.pass_column_consistent());
    }

    #[test]
    fn mean_trajectory_stays_within_bounds(runs in prop::collection::vec(prop::collection::vec((0.01..2.0f64, -5.0..5.0f64), 1..8), 1..5)) {
        let rows: Vec<Vec<RecordRow>> = runs
            .iter()
            .map(|r| {
                let mut pass = 0.0;
                r.iter()
                    .map(|&(dp, v)| {
                        let row = RecordRow { pass, objective: v, grad_norm_sq: v * v, feasibility_sq: None, wall_ms: 0, work: 0 };
                        pass += dp;
                        row
                    })
                    .collect()
            })
            .collect();
        let refs: Vec<&[RecordRow]> = rows.iter().map(|r| r.as_slice()).collect();
        let mean = mean_trajectory(&refs);
        let lo = runs.iter().flatten().map(|p| p.1).fold(f64::INFINITY, f64::min);
        let hi = runs.iter().flatten().map(|p| p.1).fold(f64::NEG_INFINITY, f64::max);
        let end = rows.iter().map(|r| r.last().unwrap().pass).fold(f64::INFINITY, f64::min);
        prop_assert!(!mean.is_empty());
        for w in mean.windows(2) {
            prop_assert!(w[0].pass < w[1].pass);
        }
        for row in &mean {
            prop_assert!(row.pass <= end);
            prop_assert!(row.objective >= lo - 1e-9 && row.objective <= hi + 1e-9);
        }
        let mut buf = Vec::new();
        write_csv(&mean, &mut buf).unwrap();
        prop_assert_eq!(read_csv(buf.as_slice()).unwrap(), mean);
    }
}
