//! Strategy search: enumerate every `(dp, pp, tp, cp)` factorization of the
//! world size, assemble a whole-model per-device cost report for each, and
//! rank the feasible ones.
//!
//! Per-layer costs come from the block modules evaluated on one micro-batch
//! with data parallelism factored out (each data-parallel replica runs its
//! own micro-batches). Step time is additive: compute, then communication,
//! stretched by the pipeline bubble.

use std::cmp::Ordering;
use std::fmt;

use rayon::prelude::*;
use serde::Serialize;

use crate::collectives::{collective_time, CollectiveKind, DEFAULT_FIXED_COST_PER_STEP};
use crate::config::{
    BlockKind, BoundConfig, ClusterSpec, ConfigSet, Mode, ModelSpec, ParallelConfig, Shape, Sharding, SloSpec,
    TpFlavor, WorkloadSpec,
};
use crate::error::{Error, Result};
use crate::mamba::{self, ScanMode};
use crate::metrics::{self, RooflineVerdict};
use crate::transformer;
use crate::{ceil_u64, exact, to_f64, DeviceFlops, Exact};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Constraints {
    /// Keep every tensor-parallel group inside one node.
    pub strict_tp_intra_node: bool,
    /// Upper bound on pipeline depth, normally the layer count.
    pub max_pp: Option<u64>,
    pub devices_per_node: u64,
}

/// All ordered `(dp, pp, tp, cp)` with product `world`, in ascending
/// lexicographic order, filtered by `constraints`.
pub fn enumerate_configs(world: u64, constraints: &Constraints) -> Vec<ParallelConfig> {
    let divisors: Vec<u64> = (1..=world).filter(|d| world.is_multiple_of(*d)).collect();
    let mut out = Vec::new();
    for &dp in &divisors {
        for &pp in divisors.iter().filter(|&&pp| (world / dp).is_multiple_of(pp)) {
            let rest = world / dp / pp;
            for &tp in divisors.iter().filter(|&&tp| rest.is_multiple_of(tp)) {
                let cp = rest / tp;
                if constraints.strict_tp_intra_node && tp > constraints.devices_per_node.max(1) {
                    continue;
                }
                if constraints.max_pp.is_some_and(|max| pp > max) {
                    continue;
                }
                out.push(ParallelConfig::new(dp as u32, pp as u32, tp as u32, cp as u32));
            }
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq)]
pub struct PlanOptions {
    /// Overrides the workload's mode when set.
    pub mode: Option<Mode>,
    /// Fraction of communication hidden behind compute.
    pub overlap_eff: f64,
    pub include_embeddings: bool,
    /// Tensor-parallel flavor; defaults to plain for transformers and TPSP
    /// for Mamba-2.
    pub tp_flavor: Option<TpFlavor>,
    pub scan_mode: ScanMode,
    pub fixed_cost_per_step: f64,
    pub strict_tp_intra_node: bool,
    /// Drop configurations with more pipeline stages than layers.
    pub limit_pp_to_layers: bool,
}

impl Default for PlanOptions {
    fn default() -> Self {
        PlanOptions {
            mode: None,
            overlap_eff: 0.0,
            include_embeddings: false,
            tp_flavor: None,
            scan_mode: ScanMode::ParallelScan,
            fixed_cost_per_step: DEFAULT_FIXED_COST_PER_STEP,
            strict_tp_intra_node: false,
            limit_pp_to_layers: false,
        }
    }
}

impl PlanOptions {
    fn flavor_for(&self, kind: BlockKind) -> TpFlavor {
        self.tp_flavor.unwrap_or(match kind {
            BlockKind::Transformer => TpFlavor::Plain,
            BlockKind::Mamba2 => TpFlavor::Tpsp,
        })
    }

    fn constraints(&self, model: &ModelSpec, cluster: &ClusterSpec) -> Constraints {
        Constraints {
            strict_tp_intra_node: self.strict_tp_intra_node,
            max_pp: self.limit_pp_to_layers.then_some(model.layers),
            devices_per_node: cluster.devices_per_node,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Dp,
    Pp,
    Tp,
    Cp,
}

impl Axis {
    pub fn as_str(self) -> &'static str {
        match self {
            Axis::Dp => "dp",
            Axis::Pp => "pp",
            Axis::Tp => "tp",
            Axis::Cp => "cp",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Fabric {
    Intra,
    Inter,
}

/// Whether every group of `axis` keeps its members on one node under the
/// rank layout with `tp` innermost, then `cp`, `pp`, and `dp` outermost.
pub fn group_fabric(cfg: &ParallelConfig, axis: Axis, devices_per_node: u64) -> Fabric {
    let (tp, cp, pp, dp) = (cfg.tp as u64, cfg.cp as u64, cfg.pp as u64, cfg.dp as u64);
    let (stride, degree) = match axis {
        Axis::Tp => (1, tp),
        Axis::Cp => (tp, cp),
        Axis::Pp => (tp * cp, pp),
        Axis::Dp => (tp * cp * pp, dp),
    };
    if degree <= 1 {
        return Fabric::Intra;
    }
    if degree > devices_per_node {
        return Fabric::Inter;
    }
    let world = tp * cp * pp * dp;
    for rank in 0..world {
        // Rank's position along the axis, and the first member of its group.
        let pos = (rank / stride) % degree;
        let first = rank - pos * stride;
        let node = first / devices_per_node;
        if (0..degree).any(|i| (first + i * stride) / devices_per_node != node) {
            return Fabric::Inter;
        }
    }
    Fabric::Intra
}

/// Traffic of one parallel axis over a step.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CommEntry {
    pub axis: Axis,
    pub kind: CollectiveKind,
    pub fabric: Fabric,
    pub bytes: u64,
    pub seconds: f64,
    /// The volume is an order-of-magnitude estimate rather than an exact count.
    pub scaling_estimate: bool,
}

/// Per-layer, per-micro-batch cost of one block on one device.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct BlockLine {
    pub name: &'static str,
    pub cube_flops: f64,
    pub vector_flops: f64,
    pub activation_bytes: u64,
    pub weight_bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CostReport {
    pub config: ParallelConfigView,
    pub mode: Mode,
    pub flops_cube_per_device: f64,
    pub flops_vector_per_device: f64,
    pub weight_bytes: u64,
    pub activation_bytes: u64,
    pub training_state_bytes: u64,
    pub comm_bytes_intra: u64,
    pub comm_bytes_inter: u64,
    pub compute_time: f64,
    pub comm_time: f64,
    pub bubble_fraction: f64,
    pub step_time: f64,
    pub throughput: f64,
    pub mfu: f64,
    pub ttft: f64,
    pub num_microbatches: u64,
    pub layers_per_stage: u64,
    pub uneven_stages: bool,
    pub feasible: bool,
    pub reason: String,
    pub blocks: Vec<BlockLine>,
    pub comm: Vec<CommEntry>,
    pub roofline: RooflineVerdict,
    pub notes: Vec<String>,
}

impl CostReport {
    pub fn parallel(&self) -> ParallelConfig {
        self.config.into()
    }

    pub fn memory_bytes(&self) -> u64 {
        self.weight_bytes + self.activation_bytes + self.training_state_bytes
    }

    pub fn comm_bytes(&self) -> u64 {
        self.comm_bytes_intra + self.comm_bytes_inter
    }
}

/// Serializable mirror of [`ParallelConfig`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct ParallelConfigView {
    pub dp: u32,
    pub pp: u32,
    pub tp: u32,
    pub cp: u32,
    pub tp_flavor: TpFlavor,
}

impl From<ParallelConfig> for ParallelConfigView {
    fn from(c: ParallelConfig) -> Self {
        ParallelConfigView {
            dp: c.dp,
            pp: c.pp,
            tp: c.tp,
            cp: c.cp,
            tp_flavor: c.tp_flavor,
        }
    }
}

impl From<ParallelConfigView> for ParallelConfig {
    fn from(c: ParallelConfigView) -> Self {
        ParallelConfig::new(c.dp, c.pp, c.tp, c.cp).with_flavor(c.tp_flavor)
    }
}

pub fn bubble_fraction(pp: u64, microbatches: u64) -> f64 {
    if pp <= 1 {
        return 0.0;
    }
    (pp - 1) as f64 / (microbatches + pp - 1) as f64
}

/// Forward and backward passes that carry tensor/context traffic.
fn comm_passes(mode: Mode) -> u128 {
    match mode {
        Mode::Training => 2,
        Mode::Prefill => 1,
    }
}

struct LayerCost {
    flops: DeviceFlops,
    full_flops: u128,
    act: Exact,
    weight: Exact,
    params: Exact,
    blocks: Vec<BlockLine>,
    comm: Vec<(Axis, Exact, CollectiveKind, bool)>,
    notes: Vec<String>,
}

fn line(name: &'static str, flops: DeviceFlops, act: Exact, weight: Exact) -> BlockLine {
    BlockLine {
        name,
        cube_flops: to_f64(&flops.cube),
        vector_flops: to_f64(&flops.vector),
        activation_bytes: ceil_u64(&act),
        weight_bytes: ceil_u64(&weight),
    }
}

/// One layer on one device for one micro-batch; `local` has `dp == 1`.
fn layer_cost(m: &ModelSpec, shape: Shape, local: &ParallelConfig, scan: ScanMode) -> Result<LayerCost> {
    let mut comm = Vec::new();
    match m.kind() {
        BlockKind::Transformer => {
            let gqa_f = transformer::gqa_flops_per_device(m, shape, local)?;
            let mlp_f = transformer::mlp_flops_per_device(m, shape, local)?;
            let gqa_a = transformer::gqa_activation_bytes(m, shape, local)?;
            let mlp_a = transformer::mlp_activation_bytes(m, shape, local)?;
            let gqa_w = transformer::gqa_weight_bytes(m, local)?;
            let mlp_w = transformer::mlp_weight_bytes(m, local)?;
            let full = transformer::gqa_flops_total(m, shape)?.total() + transformer::mlp_flops_total(m, shape)?.total();
            if local.tp > 1 {
                let (e, k) = transformer::attn_comm_elements(m, shape, Sharding::Tp(local.tp, local.tp_flavor))?;
                comm.push((Axis::Tp, e, k, false));
            }
            if local.cp > 1 {
                let (e, k) = transformer::attn_comm_elements(m, shape, Sharding::Cp(local.cp))?;
                comm.push((Axis::Cp, e, k, false));
            }
            Ok(LayerCost {
                flops: gqa_f + mlp_f,
                full_flops: full,
                act: gqa_a + mlp_a,
                weight: gqa_w + mlp_w,
                params: transformer::layer_params_per_device(m, local)?,
                blocks: vec![line("attention", gqa_f, gqa_a, gqa_w), line("mlp", mlp_f, mlp_a, mlp_w)],
                comm,
                notes: Vec::new(),
            })
        }
        BlockKind::Mamba2 => {
            let flops = mamba::mamba_flops_per_device(m, shape, scan, local)?;
            let mem = mamba::ssd_memory_per_device(m, shape, local)?;
            if local.tp > 1 {
                let (e, k) = mamba::mamba_comm_elements(m, shape, Sharding::Tp(local.tp, local.tp_flavor))?;
                comm.push((Axis::Tp, e, k, true));
            }
            if local.cp > 1 {
                let (e, k) = mamba::mamba_comm_elements(m, shape, Sharding::Cp(local.cp))?;
                comm.push((Axis::Cp, e, k, true));
            }
            let (inp, out) = mamba::mamba_proj_flops(m, shape)?;
            let ssd = mamba::ssd_flops(m, shape, scan)?;
            let deg = exact(local.tp as u128 * local.cp as u128);
            let proj = DeviceFlops {
                cube: exact(inp + out) / deg,
                vector: exact(0),
            };
            let ssd_f = DeviceFlops {
                cube: exact(ssd.cube_total) / deg,
                vector: exact(ssd.vector_total) / deg,
            };
            Ok(LayerCost {
                flops,
                full_flops: mamba::mamba_flops_total(m, shape, scan)?.total(),
                act: mem.activation_bytes(),
                weight: mem.weight_bytes(),
                params: mamba::mamba_layer_params_per_device(m, local)?,
                blocks: vec![
                    line(
                        "in/out projection",
                        proj,
                        mem.in_proj_act + mem.out_proj_act,
                        mem.weight_bytes(),
                    ),
                    line("ssd", ssd_f, mem.ssd_total(), exact(0)),
                ],
                comm,
                notes: vec![
                    "mamba communication volumes are scaling estimates with unit constant".into(),
                    "ssd memory term 1 carries a head-count term without batch or sequence factors".into(),
                ],
            })
        }
    }
}

/// Whole-model per-device cost of `bound` for one training or prefill step.
pub fn model_cost(
    m: &ModelSpec,
    w: &WorkloadSpec,
    cluster: &ClusterSpec,
    slo: &SloSpec,
    bound: &BoundConfig,
    opts: &PlanOptions,
) -> Result<CostReport> {
    let mut cfg = *bound.config();
    cfg.tp_flavor = opts.flavor_for(m.kind());
    let mode = opts.mode.unwrap_or(w.mode);
    for peak in [cluster.cube_peak, cluster.vector_peak] {
        if !(peak > 0.0) {
            return Err(Error::InvalidPeak(peak));
        }
    }

    let (dp, pp) = (cfg.dp as u64, cfg.pp as u64);
    let mut reasons = Vec::new();
    let replica_batch = w.b * dp;
    let microbatch_even = w.global_batch.is_multiple_of(replica_batch);
    if !microbatch_even {
        reasons.push("microbatch".to_string());
    }
    let m_count = (w.global_batch / replica_batch).max(1);
    let layers_per_stage = m.layers.div_ceil(pp);
    let uneven_stages = !m.layers.is_multiple_of(pp);

    let local = ParallelConfig { dp: 1, ..cfg };
    let shape = w.micro_shape();
    let layer = layer_cost(m, shape, &local, opts.scan_mode)?;

    let lps = exact(layers_per_stage as u128);
    let mult = exact(mode.flops_multiplier());
    let micro = exact(m_count as u128);

    let mut weight = layer.weight * lps;
    let mut params = layer.params * lps;
    let mut notes = layer.notes.clone();
    if opts.include_embeddings {
        let v = m
            .v
            .ok_or_else(|| Error::invariant("model.v", "required when embeddings are included"))?;
        let tables = if pp == 1 { 2 } else { 1 };
        let emb = exact(tables * v as u128 * m.d as u128);
        params += emb;
        weight += emb * exact(m.w_byte as u128);
    }
    if uneven_stages {
        notes.push(format!(
            "{} layers over {} stages: the busiest stage holds {}",
            m.layers, pp, layers_per_stage
        ));
    }
    let in_flight = exact(pp.min(m_count) as u128);
    let activations = layer.act * lps * in_flight;
    let training_state = match mode {
        Mode::Training => params * exact(cluster.training_state_bytes_per_param as u128),
        Mode::Prefill => exact(0),
    };

    let cube = layer.flops.cube * lps * micro * mult;
    let vector = layer.flops.vector * lps * micro * mult;
    let compute_time = to_f64(&cube) / cluster.cube_peak + to_f64(&vector) / cluster.vector_peak;

    // Communication.
    let a_byte = exact(m.a_byte as u128);
    let passes = exact(comm_passes(mode));
    let mut comm = Vec::new();
    let bw = |fabric: Fabric| match fabric {
        Fabric::Intra => cluster.intra_bw,
        Fabric::Inter => cluster.inter_bw,
    };
    let mut push = |axis: Axis, kind: CollectiveKind, bytes: Exact, estimate: bool| -> Result<()> {
        let fabric = group_fabric(&cfg, axis, cluster.devices_per_node);
        let b = to_f64(&bytes);
        comm.push(CommEntry {
            axis,
            kind,
            fabric,
            bytes: ceil_u64(&bytes),
            seconds: collective_time(b, bw(fabric), opts.overlap_eff)?,
            scaling_estimate: estimate,
        });
        Ok(())
    };
    for (axis, elements, kind, estimate) in &layer.comm {
        push(*axis, *kind, *elements * a_byte * lps * micro * passes, *estimate)?;
    }
    if pp > 1 {
        let boundary = exact(shape.b as u128 * shape.s as u128 * m.d as u128) * a_byte;
        push(Axis::Pp, CollectiveKind::P2pSendRecv, boundary * micro * passes, false)?;
    }
    if mode == Mode::Training && dp > 1 {
        let grad = transformer::dp_gradient_sync_bytes(params, m, cfg.dp)?;
        push(Axis::Dp, CollectiveKind::AllReduce, grad, false)?;
    }
    let mut comm_time: f64 = comm.iter().map(|c| c.seconds).sum();
    if comm.iter().any(|c| c.bytes > 0) {
        comm_time += opts.fixed_cost_per_step;
    }
    let (intra, inter) = comm.iter().fold((0u64, 0u64), |(i, o), c| match c.fabric {
        Fabric::Intra => (i + c.bytes, o),
        Fabric::Inter => (i, o + c.bytes),
    });

    let bubble = bubble_fraction(pp, m_count);
    let step_time = (compute_time + comm_time) / (1.0 - bubble);
    let tokens = w.tokens_per_step() as f64;
    let throughput = metrics::throughput(tokens, step_time)?;
    let total_model_flops =
        layer.full_flops as f64 * m.layers as f64 * (w.global_batch / w.b) as f64 * mode.flops_multiplier() as f64;
    let mfu = metrics::mfu(total_model_flops / step_time, cluster.world as f64 * cluster.cube_peak)?;

    // Prefill latency of one micro-batch through every stage.
    let fwd_layer_time = to_f64(&layer.flops.cube) / cluster.cube_peak
        + to_f64(&layer.flops.vector) / cluster.vector_peak
        + layer
            .comm
            .iter()
            .map(|(axis, e, _, _)| to_f64(&(*e * a_byte)) / bw(group_fabric(&cfg, *axis, cluster.devices_per_node)))
            .sum::<f64>();
    let ttft = fwd_layer_time * (layers_per_stage * pp) as f64 + slo.ttft_system_overhead;

    let per_layer_flops = to_f64(&(layer.flops.cube + layer.flops.vector));
    let per_layer_bytes = to_f64(&(layer.act + layer.weight));
    let roofline = metrics::classify(
        metrics::arithmetic_intensity(per_layer_flops, per_layer_bytes).unwrap_or(0.0),
        cluster,
    );

    let memory = weight + activations + training_state;
    if memory > exact(cluster.mem_capacity as u128) {
        reasons.push("memory".to_string());
    }

    Ok(CostReport {
        config: cfg.into(),
        mode,
        flops_cube_per_device: to_f64(&cube),
        flops_vector_per_device: to_f64(&vector),
        weight_bytes: ceil_u64(&weight),
        activation_bytes: ceil_u64(&activations),
        training_state_bytes: ceil_u64(&training_state),
        comm_bytes_intra: intra,
        comm_bytes_inter: inter,
        compute_time,
        comm_time,
        bubble_fraction: bubble,
        step_time,
        throughput,
        mfu,
        ttft,
        num_microbatches: if microbatch_even { m_count } else { 0 },
        layers_per_stage,
        uneven_stages,
        feasible: reasons.is_empty(),
        reason: reasons.join(","),
        blocks: layer.blocks,
        comm,
        roofline,
        notes,
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RankKey {
    #[default]
    Mfu,
    Throughput,
    StepTime,
    Memory,
}

impl RankKey {
    pub fn score(self, r: &CostReport) -> f64 {
        match self {
            RankKey::Mfu => r.mfu,
            RankKey::Throughput => r.throughput,
            RankKey::StepTime => r.step_time,
            RankKey::Memory => r.memory_bytes() as f64,
        }
    }

    fn descending(self) -> bool {
        matches!(self, RankKey::Mfu | RankKey::Throughput)
    }
}

impl fmt::Display for RankKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RankKey::Mfu => "mfu",
            RankKey::Throughput => "throughput",
            RankKey::StepTime => "step_time",
            RankKey::Memory => "memory",
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedEntry {
    pub score: f64,
    pub report: CostReport,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RankedPlan {
    pub ranking_key: RankKey,
    pub feasible: Vec<RankedEntry>,
    pub infeasible: Vec<CostReport>,
}

impl RankedPlan {
    pub fn position(&self, cfg: (u32, u32, u32, u32)) -> Option<usize> {
        self.feasible.iter().position(|e| e.report.parallel().tuple() == cfg)
    }
}

fn tie_break(a: &CostReport, b: &CostReport) -> Ordering {
    b.parallel().tuple().cmp(&a.parallel().tuple())
}

/// Apply SLO filters and sort the survivors by `key`.
pub fn rank(reports: Vec<CostReport>, slo: &SloSpec, key: RankKey) -> RankedPlan {
    let mut feasible = Vec::new();
    let mut infeasible = Vec::new();
    for mut r in reports {
        if r.feasible {
            let slow = slo.min_throughput.is_some_and(|min| r.throughput < min);
            let late = slo.max_ttft.is_some_and(|max| r.ttft > max);
            if slow || late {
                r.feasible = false;
                r.reason = "slo".into();
            }
        }
        if r.feasible {
            feasible.push(RankedEntry {
                score: key.score(&r),
                report: r,
            });
        } else {
            infeasible.push(r);
        }
    }
    feasible.sort_by(|x, y| {
        let primary = if key.descending() {
            y.score.total_cmp(&x.score)
        } else {
            x.score.total_cmp(&y.score)
        };
        primary.then_with(|| tie_break(&x.report, &y.report))
    });
    infeasible.sort_by(tie_break);
    RankedPlan {
        ranking_key: key,
        feasible,
        infeasible,
    }
}

/// Cost reports for every enumerated configuration, in enumeration order.
pub fn evaluate_all(set: &ConfigSet, opts: &PlanOptions) -> Result<Vec<CostReport>> {
    let configs = enumerate_configs(set.cluster.world, &opts.constraints(&set.model, &set.cluster));
    configs
        .par_iter()
        .map(|cfg| {
            let bound = cfg.bind(&set.cluster)?;
            model_cost(&set.model, &set.workload, &set.cluster, &set.slo, &bound, opts)
        })
        .collect()
}

/// Full sweep and ranking.
pub fn plan(set: &ConfigSet, opts: &PlanOptions, key: RankKey) -> Result<RankedPlan> {
    Ok(rank(evaluate_all(set, opts)?, &set.slo, key))
}

/// Cost report of one configuration.
pub fn analyze(set: &ConfigSet, cfg: ParallelConfig, opts: &PlanOptions) -> Result<CostReport> {
    let bound = cfg.bind(&set.cluster)?;
    model_cost(&set.model, &set.workload, &set.cluster, &set.slo, &bound, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{enumerate_brute, simulate_1f1b_bubble};

    fn unconstrained() -> Constraints {
        Constraints {
            devices_per_node: 8,
            ..Constraints::default()
        }
    }

    #[test]
    fn enumeration_matches_brute_force() {
        for world in [1, 2, 6, 8, 12, 16, 32] {
            let mut got: Vec<_> = enumerate_configs(world, &unconstrained())
                .iter()
                .map(|c| {
                    let (a, b, c, d) = c.tuple();
                    (a as u64, b as u64, c as u64, d as u64)
                })
                .collect();
            got.sort();
            assert_eq!(got, enumerate_brute(world), "world={world}");
        }
        assert_eq!(enumerate_configs(8, &unconstrained()).len(), 20);
        assert_eq!(enumerate_configs(16, &unconstrained()).len(), 35);
    }

    #[test]
    fn enumeration_filters() {
        let shallow = Constraints {
            max_pp: Some(2),
            ..unconstrained()
        };
        let configs = enumerate_configs(8, &shallow);
        assert!(configs.iter().all(|c| c.pp <= 2));
        assert_eq!(configs.len(), 20 - 3 - 1);
        let strict = Constraints {
            strict_tp_intra_node: true,
            devices_per_node: 4,
            ..Constraints::default()
        };
        assert!(enumerate_configs(8, &strict).iter().all(|c| c.tp <= 4));
    }

    #[test]
    fn fabric_layout() {
        let cfg = ParallelConfig::new(2, 1, 4, 2);
        assert_eq!(group_fabric(&cfg, Axis::Tp, 8), Fabric::Intra);
        assert_eq!(group_fabric(&cfg, Axis::Cp, 8), Fabric::Intra);
        assert_eq!(group_fabric(&cfg, Axis::Dp, 8), Fabric::Inter);
        // cp=2 with stride 4 spans ranks 0 and 4 on four-device nodes.
        assert_eq!(group_fabric(&cfg, Axis::Cp, 4), Fabric::Inter);
        assert_eq!(group_fabric(&cfg, Axis::Tp, 4), Fabric::Intra);
        assert_eq!(group_fabric(&ParallelConfig::new(1, 1, 16, 1), Axis::Tp, 8), Fabric::Inter);
    }

    #[test]
    fn bubble_model_matches_schedule() {
        assert_eq!(bubble_fraction(1, 7), 0.0);
        for pp in 2..=6u64 {
            for m in [1u64, 2, 4, 8, 16] {
                let sim = simulate_1f1b_bubble(pp as usize, m as usize, 1.0, 2.0);
                assert!((sim - bubble_fraction(pp, m)).abs() < 1e-12, "pp={pp} m={m} sim={sim}");
            }
        }
        for m in [1u64, 4, 32] {
            let mut prev = 0.0;
            for pp in 2..=8u64 {
                let b = bubble_fraction(pp, m);
                assert!(b > prev);
                prev = b;
            }
        }
    }
}
