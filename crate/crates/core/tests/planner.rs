use std::path::PathBuf;

use parashard_core::config::{load_config, ConfigSet, Mode, ParallelConfig};
use parashard_core::planner::{analyze, evaluate_all, plan, Axis, PlanOptions, RankKey};
use parashard_core::Error;

fn config(name: &str) -> ConfigSet {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"));
    load_config(p).unwrap()
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
}

#[test]
fn pure_dp_without_link_cost_is_compute_bound_time() {
    let mut set = config("llama1b");
    set.cluster.intra_bw = 1e300;
    set.cluster.inter_bw = 1e300;
    let r = analyze(&set, ParallelConfig::new(8, 1, 1, 1), &PlanOptions::default()).unwrap();
    assert_eq!(r.bubble_fraction, 0.0);
    assert!(r.comm_time < 1e-200);
    assert!(rel(r.step_time, r.compute_time) < 1e-12);
    let c = &set.cluster;
    let expected = r.flops_cube_per_device / c.cube_peak + r.flops_vector_per_device / c.vector_peak;
    assert!(rel(r.compute_time, expected) < 1e-12);
    // Every FLOP is useful under pure DP, so utilization is the cube share
    // of the ideal time.
    let ideal = (r.flops_cube_per_device + r.flops_vector_per_device) / c.cube_peak;
    assert!(rel(r.mfu, 100.0 * ideal / r.step_time) < 1e-9, "{}", r.mfu);
}

#[test]
fn sweep_is_complete_and_ordered() {
    for name in ["llama7b", "llama1b", "mamba7b", "mamba1b"] {
        let set = config(name);
        let reports = evaluate_all(&set, &PlanOptions::default()).unwrap();
        assert_eq!(reports.len(), 20);
        for key in [RankKey::Mfu, RankKey::Throughput, RankKey::StepTime, RankKey::Memory] {
            let p = plan(&set, &PlanOptions::default(), key).unwrap();
            assert_eq!(p.feasible.len() + p.infeasible.len(), 20);
            let scores: Vec<f64> = p.feasible.iter().map(|e| e.score).collect();
            let sorted = scores.windows(2).all(|w| match key {
                RankKey::Mfu | RankKey::Throughput => w[0] >= w[1],
                _ => w[0] <= w[1],
            });
            assert!(sorted, "{name} {key:?}");
            for r in &p.infeasible {
                assert!(!r.feasible && !r.reason.is_empty());
            }
            for c in reports.iter().map(|r| r.parallel()) {
                assert_eq!(c.product(), 8);
            }
        }
    }
}

#[test]
fn more_bandwidth_or_memory_never_hurts() {
    for name in ["llama7b", "mamba7b"] {
        let base = config(name);
        let opts = PlanOptions::default();
        let before = evaluate_all(&base, &opts).unwrap();
        for tweak in 0..3 {
            let mut set = base.clone();
            match tweak {
                0 => set.cluster.intra_bw *= 4.0,
                1 => set.cluster.inter_bw *= 4.0,
                _ => set.cluster.mem_capacity *= 2,
            }
            let after = evaluate_all(&set, &opts).unwrap();
            for (a, b) in before.iter().zip(&after) {
                assert_eq!(a.parallel(), b.parallel());
                assert!(b.mfu >= a.mfu, "{name} tweak {tweak} {:?}", a.parallel().tuple());
                assert!(!(a.feasible && !b.feasible));
            }
        }
    }
}

#[test]
fn bubble_grows_with_pipeline_depth() {
    let set = config("llama7b");
    let opts = PlanOptions::default();
    let b = |pp| {
        analyze(&set, ParallelConfig::new(8 / pp, pp, 1, 1), &opts)
            .unwrap()
            .bubble_fraction
    };
    assert_eq!(b(1), 0.0);
    assert!(b(2) < b(4) && b(4) < b(8));
    // (4,2,1,1): 256 micro-batches over two stages.
    assert!((b(2) - 1.0 / 257.0).abs() < 1e-15);
}

#[test]
fn ordering_of_best_and_worst_llama7b() {
    let set = config("llama7b");
    let opts = PlanOptions::default();
    let best = analyze(&set, ParallelConfig::new(4, 2, 1, 1), &opts).unwrap();
    let worst = analyze(&set, ParallelConfig::new(1, 1, 4, 2), &opts).unwrap();
    assert!(best.feasible && worst.feasible);
    assert!(best.mfu > worst.mfu);
    assert!(worst.comm.iter().any(|c| c.axis == Axis::Tp));
    assert!(worst.comm.iter().any(|c| c.axis == Axis::Cp));
}

#[test]
fn mamba_7b_pure_dp_does_not_fit() {
    let r = analyze(&config("mamba7b"), ParallelConfig::new(8, 1, 1, 1), &PlanOptions::default()).unwrap();
    assert!(!r.feasible);
    assert_eq!(r.reason, "memory");
    assert!(r.memory_bytes() > 60_000_000_000);
    assert!(r.comm.iter().all(|c| c.axis == Axis::Dp));
}

#[test]
fn microbatch_mismatch_is_infeasible() {
    let mut set = config("llama1b");
    set.workload.global_batch = 12;
    let r = analyze(&set, ParallelConfig::new(8, 1, 1, 1), &PlanOptions::default()).unwrap();
    assert!(!r.feasible);
    assert_eq!(r.reason, "microbatch");
    let ok = analyze(&set, ParallelConfig::new(4, 2, 1, 1), &PlanOptions::default()).unwrap();
    assert!(ok.feasible);
}

#[test]
fn uneven_stages_use_the_busiest_stage() {
    let mut set = config("llama1b");
    set.model.layers = 15;
    let r = analyze(&set, ParallelConfig::new(1, 8, 1, 1), &PlanOptions::default()).unwrap();
    assert!(r.uneven_stages);
    assert_eq!(r.layers_per_stage, 2);
    assert!(r.notes.iter().any(|n| n.contains("busiest stage")));
}

#[test]
fn prefill_skips_gradients_and_training_state() {
    let mut set = config("llama7b");
    set.cluster.training_state_bytes_per_param = 16;
    let opts = PlanOptions {
        mode: Some(Mode::Prefill),
        ..PlanOptions::default()
    };
    let r = analyze(&set, ParallelConfig::new(8, 1, 1, 1), &opts).unwrap();
    assert_eq!(r.training_state_bytes, 0);
    assert!(r.comm.is_empty());
    let t = analyze(&set, ParallelConfig::new(8, 1, 1, 1), &PlanOptions::default()).unwrap();
    assert!(rel(t.flops_cube_per_device, 3.0 * r.flops_cube_per_device) < 1e-12);
    assert!(t.training_state_bytes > 0);
}

#[test]
fn embeddings_add_weights_on_request() {
    let set = config("llama1b");
    let cfg = ParallelConfig::new(8, 1, 1, 1);
    let plain = analyze(&set, cfg, &PlanOptions::default()).unwrap();
    let opts = PlanOptions {
        include_embeddings: true,
        ..PlanOptions::default()
    };
    let with = analyze(&set, cfg, &opts).unwrap();
    assert_eq!(with.weight_bytes - plain.weight_bytes, 2 * 32_000 * 2048 * 2);
    let piped = analyze(&set, ParallelConfig::new(4, 2, 1, 1), &opts).unwrap();
    let piped_plain = analyze(&set, ParallelConfig::new(4, 2, 1, 1), &PlanOptions::default()).unwrap();
    assert_eq!(piped.weight_bytes - piped_plain.weight_bytes, 32_000 * 2048 * 2);

    let mut no_vocab = set.clone();
    no_vocab.model.v = None;
    assert!(matches!(analyze(&no_vocab, cfg, &opts), Err(Error::Invariant { .. })));
}

#[test]
fn overlap_hides_communication() {
    let set = config("llama7b");
    let cfg = ParallelConfig::new(1, 1, 8, 1);
    let none = analyze(&set, cfg, &PlanOptions::default()).unwrap();
    let half = analyze(&set, cfg, &PlanOptions { overlap_eff: 0.5, ..PlanOptions::default() }).unwrap();
    let full = analyze(&set, cfg, &PlanOptions { overlap_eff: 1.0, ..PlanOptions::default() }).unwrap();
    assert!(rel(half.comm_time, none.comm_time / 2.0) < 1e-12);
    assert_eq!(full.comm_time, 0.0);
    assert!(full.mfu > half.mfu && half.mfu > none.mfu);
}

#[test]
fn slo_moves_configs_to_infeasible() {
    let mut set = config("llama1b");
    let all = plan(&set, &PlanOptions::default(), RankKey::Throughput).unwrap();
    let median = all.feasible[all.feasible.len() / 2].report.throughput;
    set.slo.min_throughput = Some(median);
    let cut = plan(&set, &PlanOptions::default(), RankKey::Throughput).unwrap();
    assert!(cut.feasible.iter().all(|e| e.report.throughput >= median));
    assert!(cut.infeasible.iter().any(|r| r.reason == "slo"));
    assert_eq!(cut.feasible.len() + cut.infeasible.len(), 20);
}

#[test]
fn mamba_rejects_plain_tensor_parallelism() {
    let set = config("mamba1b");
    let opts = PlanOptions {
        tp_flavor: Some(parashard_core::config::TpFlavor::Plain),
        ..PlanOptions::default()
    };
    assert!(matches!(
        analyze(&set, ParallelConfig::new(4, 1, 2, 1), &opts),
        Err(Error::UnsupportedFlavor { .. })
    ));
    assert!(analyze(&set, ParallelConfig::new(8, 1, 1, 1), &opts).is_ok());
}
