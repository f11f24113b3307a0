use proptest::prelude::*;

use parashard_core::collectives::{data_moved_per_device, CollectiveKind};
use parashard_core::config::{ParallelConfig, Shape};
use parashard_core::mamba::{ssd_flops, ScanMode};
use parashard_core::oracle::{enumerate_brute, TinyMamba, TinyTransformer};
use parashard_core::planner::{bubble_fraction, enumerate_configs, Constraints};
use parashard_core::recurrence::{max_relative_error, run_recurrence_chunked, run_recurrence_direct, RecurrenceTrace};
use parashard_core::transformer::{gqa_flops_per_device, gqa_flops_total, mlp_flops_total};
use parashard_core::verify::{tiny_mamba_model, tiny_transformer_model};
use parashard_core::Exact;

fn pow2() -> impl Strategy<Value = u32> {
    prop::sample::select(vec![1u32, 2, 4, 8, 16])
}

proptest! {
    #[test]
    fn all_reduce_is_two_rings(n in 1u64..200, size in 0u128..1_000_000_000) {
        let x = Exact::from_integer(size);
        let ar = data_moved_per_device(CollectiveKind::AllReduce, n, x).unwrap();
        let rs = data_moved_per_device(CollectiveKind::RingReduceScatter, n, x).unwrap();
        let ag = data_moved_per_device(CollectiveKind::RingAllGather, n, x).unwrap();
        prop_assert_eq!(ar, rs + ag);
        prop_assert!(ar < Exact::from_integer(2) * x || size == 0);
    }

    #[test]
    fn volume_is_linear(n in 1u64..64, size in 0u128..1_000_000, k in 1u128..16) {
        for kind in CollectiveKind::ALL {
            let one = data_moved_per_device(kind, n, Exact::from_integer(size)).unwrap();
            let many = data_moved_per_device(kind, n, Exact::from_integer(size * k)).unwrap();
            prop_assert_eq!(many, one * Exact::from_integer(k));
        }
    }

    #[test]
    fn gqa_split_is_exact(
        a in 1u64..65, d_h in 1u64..129, b in 1u64..5, s in 1u64..4097,
        dp in pow2(), tp in pow2(), cp in pow2(),
    ) {
        let k = a;
        let m = tiny_transformer_model(TinyTransformer {
            b: b as usize, s: s as usize, a: a as usize, k: k as usize, d_h: d_h as usize, i: 64,
        });
        let shape = Shape::new(b, s);
        let total = gqa_flops_total(&m, shape).unwrap();
        let per = gqa_flops_per_device(&m, shape, &ParallelConfig::new(dp, 1, tp, cp)).unwrap();
        let deg = Exact::from_integer((dp * tp * cp) as u128);
        prop_assert_eq!(per.cube * deg, Exact::from_integer(total.cube));
        prop_assert_eq!(per.vector * deg, Exact::from_integer(total.vector));
    }

    #[test]
    fn flops_scale_with_batch(b in 1u64..16, s in 1u64..512) {
        let m = tiny_transformer_model(TinyTransformer { b: 1, s: 1, a: 4, k: 2, d_h: 2, i: 8 });
        let one = mlp_flops_total(&m, Shape::new(1, s)).unwrap();
        let many = mlp_flops_total(&m, Shape::new(b, s)).unwrap();
        prop_assert_eq!(many.cube, one.cube * b as u128);
        prop_assert_eq!(many.vector, one.vector * b as u128);
    }

    #[test]
    fn naive_scan_costs_more(b in 1usize..4, h in 1usize..8, c in 1usize..32, l in 1usize..16, n in 1usize..16, p in 1usize..16) {
        let m = tiny_mamba_model(TinyMamba { b, s: c * l, d: 4, expand: 2, ngroups: 1, n, h, p, l });
        let shape = Shape::new(b as u64, (c * l) as u64);
        let naive = ssd_flops(&m, shape, ScanMode::Naive).unwrap();
        let scan = ssd_flops(&m, shape, ScanMode::ParallelScan).unwrap();
        prop_assert_eq!(
            naive.five_step_total() - scan.five_step_total(),
            2 * (b * h * p * n) as u128 * (c * c) as u128
        );
        prop_assert_eq!(naive.cube_total, scan.cube_total);
    }

    #[test]
    fn chunked_matches_direct(seed in any::<u64>(), chunks in 1usize..32, l in prop::sample::select(vec![1usize, 2, 4, 8])) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let trace = RecurrenceTrace::random(&mut rng, chunks * l).with_h0(0.5);
        let direct = run_recurrence_direct(&trace).unwrap();
        let chunked = run_recurrence_chunked(&trace, l).unwrap();
        prop_assert!(max_relative_error(&direct, &chunked) <= 1e-9);
    }

    #[test]
    fn bubble_shrinks_with_microbatches(pp in 2u64..16, m in 1u64..256) {
        let b = bubble_fraction(pp, m);
        prop_assert!(b > 0.0 && b < 1.0);
        prop_assert!(bubble_fraction(pp, m + 1) < b);
        prop_assert!(bubble_fraction(pp + 1, m) > b);
    }
}

#[test]
fn enumeration_matches_brute_force() {
    let open = Constraints {
        devices_per_node: 8,
        ..Constraints::default()
    };
    for world in 1..=48u64 {
        let mut got: Vec<_> = enumerate_configs(world, &open)
            .iter()
            .map(|c| (c.dp as u64, c.pp as u64, c.tp as u64, c.cp as u64))
            .collect();
        got.sort();
        assert_eq!(got, enumerate_brute(world), "world {world}");
        assert!(got.iter().all(|&(a, b, c, d)| a * b * c * d == world));
    }
}
