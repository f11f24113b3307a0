//! Domain records: model architecture, workload shape, cluster description,
//! parallel layout and service-level objectives.
//!
//! Records are validated once on construction from a config document and are
//! immutable afterwards. The on-disk form is a flat JSON document with the
//! top-level keys `model`, `workload`, `cluster` and `slo`; unknown keys are
//! rejected.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    #[default]
    Transformer,
    Mamba2,
}

impl BlockKind {
    pub fn as_str(self) -> &'static str {
        match self {
            BlockKind::Transformer => "transformer",
            BlockKind::Mamba2 => "mamba2",
        }
    }
}

impl fmt::Display for BlockKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// GQA attention + SwiGLU MLP dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct AttentionDims {
    /// Query heads.
    pub a: u64,
    /// KV heads.
    pub k: u64,
    /// Head dimension.
    pub d_h: u64,
    /// FFN intermediate dimension.
    pub i: u64,
}

/// Mamba-2 mixer dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MambaDims {
    /// SSM state dimension.
    pub n: u64,
    pub expand: u64,
    pub d_inner: u64,
    pub ngroups: u64,
    /// Mamba heads.
    pub h: u64,
    /// Mamba head dimension.
    pub p: u64,
    /// SSD chunk size.
    pub l: u64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Block {
    Transformer(AttentionDims),
    Mamba2(MambaDims),
}

impl Block {
    pub fn kind(&self) -> BlockKind {
        match self {
            Block::Transformer(_) => BlockKind::Transformer,
            Block::Mamba2(_) => BlockKind::Mamba2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ModelSpec {
    pub name: String,
    pub layers: u64,
    /// Hidden dimension.
    pub d: u64,
    /// Vocabulary size; only consumed by the optional embedding weight term.
    pub v: Option<u64>,
    pub a_byte: u64,
    pub w_byte: u64,
    pub block: Block,
}

impl ModelSpec {
    pub fn kind(&self) -> BlockKind {
        self.block.kind()
    }

    pub fn attention(&self) -> Result<&AttentionDims> {
        match &self.block {
            Block::Transformer(dims) => Ok(dims),
            Block::Mamba2(_) => Err(Error::UnsupportedBlock {
                expected: "transformer",
                actual: "mamba2",
            }),
        }
    }

    pub fn mamba(&self) -> Result<&MambaDims> {
        match &self.block {
            Block::Mamba2(dims) => Ok(dims),
            Block::Transformer(_) => Err(Error::UnsupportedBlock {
                expected: "mamba2",
                actual: "transformer",
            }),
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("model.layers", self.layers)?;
        positive("model.d", self.d)?;
        positive("model.a_byte", self.a_byte)?;
        positive("model.w_byte", self.w_byte)?;
        if let Some(v) = self.v {
            positive("model.v", v)?;
        }
        match &self.block {
            Block::Transformer(t) => {
                positive("model.a", t.a)?;
                positive("model.k", t.k)?;
                positive("model.d_h", t.d_h)?;
                positive("model.i", t.i)?;
                if t.a % t.k != 0 {
                    return Err(Error::invariant(
                        "model.k",
                        format!("k must divide a (a={}, k={})", t.a, t.k),
                    ));
                }
                if t.a * t.d_h != self.d {
                    return Err(Error::invariant(
                        "model.d",
                        format!(
                            "d must equal a * d_h ({} * {} = {} != {})",
                            t.a,
                            t.d_h,
                            t.a * t.d_h,
                            self.d
                        ),
                    ));
                }
            }
            Block::Mamba2(m) => {
                positive("model.n", m.n)?;
                positive("model.expand_mamba", m.expand)?;
                positive("model.ngroups_ssm", m.ngroups)?;
                positive("model.h", m.h)?;
                positive("model.p", m.p)?;
                positive("model.l", m.l)?;
                if m.d_inner != m.expand * self.d {
                    return Err(Error::invariant(
                        "model.d_inner",
                        format!(
                            "d_inner must equal expand_mamba * d ({} * {} != {})",
                            m.expand, self.d, m.d_inner
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

/// Mamba-2 widths derived from the model dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DerivedDims {
    pub d_inner: u64,
    /// Width of the fused input projection: the SSD and gate branches, the
    /// B and C parameters for every group, and one A parameter per head.
    pub d_inproj: u64,
}

pub fn derive_dims(model: &ModelSpec) -> Result<DerivedDims> {
    let m = model.mamba()?;
    positive("model.expand_mamba", m.expand)?;
    positive("model.ngroups_ssm", m.ngroups)?;
    positive("model.n", m.n)?;
    positive("model.h", m.h)?;
    let d_inner = m.expand * model.d;
    Ok(DerivedDims {
        d_inner,
        d_inproj: 2 * d_inner + 2 * m.ngroups * m.n + m.h,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Training,
    Prefill,
}

impl Mode {
    /// Forward-pass multiples per step: one forward plus a backward pass
    /// costing twice the forward.
    pub fn flops_multiplier(self) -> u128 {
        match self {
            Mode::Training => 3,
            Mode::Prefill => 1,
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Training => "training",
            Mode::Prefill => "prefill",
        })
    }
}

/// Batch and sequence extent of a single tensor pass.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Shape {
    pub b: u64,
    pub s: u64,
}

impl Shape {
    pub const fn new(b: u64, s: u64) -> Self {
        Shape { b, s }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct WorkloadSpec {
    /// Micro-batch size in sequences.
    pub b: u64,
    pub global_batch: u64,
    /// Sequence length in tokens.
    pub s: u64,
    pub mode: Mode,
    /// Generated tokens per request, used only by latency metrics.
    pub out_tokens: u64,
}

impl WorkloadSpec {
    pub fn micro_shape(&self) -> Shape {
        Shape::new(self.b, self.s)
    }

    pub fn tokens_per_step(&self) -> u64 {
        self.global_batch * self.s
    }

    pub fn validate(&self) -> Result<()> {
        positive("workload.b", self.b)?;
        positive("workload.global_batch", self.global_batch)?;
        positive("workload.s", self.s)?;
        positive("workload.out_tokens", self.out_tokens)?;
        if self.global_batch < self.b {
            return Err(Error::invariant(
                "workload.global_batch",
                format!("global_batch ({}) must be >= b ({})", self.global_batch, self.b),
            ));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusterSpec {
    pub world: u64,
    pub devices_per_node: u64,
    /// Bytes per device.
    pub mem_capacity: u64,
    /// Matrix-unit FLOPs/s per device.
    pub cube_peak: f64,
    /// Elementwise-unit FLOPs/s per device.
    pub vector_peak: f64,
    /// HBM bytes/s per device.
    pub mem_bandwidth: f64,
    /// Bytes/s per device inside a node.
    pub intra_bw: f64,
    /// Bytes/s per device across nodes.
    pub inter_bw: f64,
    /// Gradient + optimizer bytes held per parameter; 0 ignores optimizer state.
    pub training_state_bytes_per_param: u64,
}

impl ClusterSpec {
    pub fn validate(&self) -> Result<()> {
        positive("cluster.world", self.world)?;
        positive("cluster.devices_per_node", self.devices_per_node)?;
        positive("cluster.mem_capacity", self.mem_capacity)?;
        if !self.world.is_multiple_of(self.devices_per_node) {
            return Err(Error::invariant(
                "cluster.world",
                format!(
                    "world ({}) must be a multiple of devices_per_node ({})",
                    self.world, self.devices_per_node
                ),
            ));
        }
        for (field, value) in [
            ("cluster.cube_peak", self.cube_peak),
            ("cluster.vector_peak", self.vector_peak),
            ("cluster.mem_bandwidth", self.mem_bandwidth),
            ("cluster.intra_bw", self.intra_bw),
            ("cluster.inter_bw", self.inter_bw),
        ] {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::invariant(field, format!("must be positive, got {value}")));
            }
        }
        if self.cube_peak < self.vector_peak {
            return Err(Error::invariant(
                "cluster.vector_peak",
                format!(
                    "cube_peak ({}) must be >= vector_peak ({})",
                    self.cube_peak, self.vector_peak
                ),
            ));
        }
        Ok(())
    }

    /// Ridge point of the roofline in FLOPs per byte.
    pub fn ridge_point(&self) -> f64 {
        self.cube_peak / self.mem_bandwidth
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TpFlavor {
    /// Megatron-style tensor parallelism with ring all-reduce.
    #[default]
    Plain,
    /// Tensor parallelism with sequence parallelism (all-gather / reduce-scatter).
    Tpsp,
    /// Ulysses-style head/sequence exchange via all-to-all.
    Tpup,
}

impl TpFlavor {
    pub fn as_str(self) -> &'static str {
        match self {
            TpFlavor::Plain => "plain",
            TpFlavor::Tpsp => "tpsp",
            TpFlavor::Tpup => "tpup",
        }
    }
}

impl fmt::Display for TpFlavor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A single parallel dimension with its degree, for formulas that are
/// defined per strategy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Sharding {
    Dp(u32),
    Tp(u32, TpFlavor),
    Cp(u32),
}

/// Degrees of the four orthogonal parallel dimensions.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParallelConfig {
    pub dp: u32,
    pub pp: u32,
    pub tp: u32,
    pub cp: u32,
    pub tp_flavor: TpFlavor,
}

impl ParallelConfig {
    pub const fn new(dp: u32, pp: u32, tp: u32, cp: u32) -> Self {
        ParallelConfig {
            dp,
            pp,
            tp,
            cp,
            tp_flavor: TpFlavor::Plain,
        }
    }

    pub const fn single() -> Self {
        Self::new(1, 1, 1, 1)
    }

    pub const fn with_flavor(mut self, flavor: TpFlavor) -> Self {
        self.tp_flavor = flavor;
        self
    }

    pub fn tuple(&self) -> (u32, u32, u32, u32) {
        (self.dp, self.pp, self.tp, self.cp)
    }

    pub fn product(&self) -> u64 {
        self.dp as u64 * self.pp as u64 * self.tp as u64 * self.cp as u64
    }

    pub fn validate(&self) -> Result<()> {
        for (field, v) in [
            ("parallel.dp", self.dp),
            ("parallel.pp", self.pp),
            ("parallel.tp", self.tp),
            ("parallel.cp", self.cp),
        ] {
            positive(field, v as u64)?;
        }
        Ok(())
    }

    /// Attach the configuration to a cluster, enforcing dp*pp*tp*cp == world.
    pub fn bind(self, cluster: &ClusterSpec) -> Result<BoundConfig> {
        self.validate()?;
        let product = self.product();
        if product != cluster.world {
            return Err(Error::Binding {
                dp: self.dp,
                pp: self.pp,
                tp: self.tp,
                cp: self.cp,
                product,
                world: cluster.world,
            });
        }
        Ok(BoundConfig {
            cfg: self,
            world: cluster.world,
        })
    }

    /// Parse `dp,pp,tp,cp`.
    pub fn parse_tuple(text: &str) -> Result<Self> {
        let parts: Vec<&str> = text.split(',').map(str::trim).collect();
        if parts.len() != 4 {
            return Err(Error::invariant(
                "parallel",
                format!("expected four comma-separated degrees dp,pp,tp,cp, got {text:?}"),
            ));
        }
        let mut degrees = [0u32; 4];
        for (slot, part) in degrees.iter_mut().zip(&parts) {
            *slot = part.parse().map_err(|_| {
                Error::invariant("parallel", format!("{part:?} is not a positive integer"))
            })?;
        }
        let cfg = ParallelConfig::new(degrees[0], degrees[1], degrees[2], degrees[3]);
        cfg.validate()?;
        Ok(cfg)
    }
}

impl fmt::Display for ParallelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{},{},{})", self.dp, self.pp, self.tp, self.cp)
    }
}

/// A [`ParallelConfig`] whose degrees multiply to the world size of a cluster.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BoundConfig {
    cfg: ParallelConfig,
    world: u64,
}

impl BoundConfig {
    pub fn config(&self) -> &ParallelConfig {
        &self.cfg
    }

    pub fn world(&self) -> u64 {
        self.world
    }

    pub fn unbind(self) -> ParallelConfig {
        self.cfg
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SloSpec {
    /// Throughput floor in tokens/s.
    pub min_throughput: Option<f64>,
    /// Time-to-first-token cap in seconds.
    pub max_ttft: Option<f64>,
    /// Percentile the TTFT cap refers to; reporting metadata only.
    pub percentile_q: Option<f64>,
    /// Constant added to prefill time when estimating TTFT.
    pub ttft_system_overhead: f64,
}

impl SloSpec {
    pub fn validate(&self) -> Result<()> {
        for (field, value) in [
            ("slo.min_throughput", self.min_throughput),
            ("slo.max_ttft", self.max_ttft),
        ] {
            if let Some(v) = value {
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::invariant(field, format!("must be positive, got {v}")));
                }
            }
        }
        if let Some(q) = self.percentile_q {
            if !(q > 0.0 && q <= 1.0) {
                return Err(Error::invariant(
                    "slo.percentile_q",
                    format!("must lie in (0, 1], got {q}"),
                ));
            }
        }
        if !(self.ttft_system_overhead.is_finite() && self.ttft_system_overhead >= 0.0) {
            return Err(Error::invariant(
                "slo.ttft_system_overhead",
                format!("must be non-negative, got {}", self.ttft_system_overhead),
            ));
        }
        Ok(())
    }
}

/// The validated contents of one config document.
#[derive(Clone, Debug, PartialEq)]
pub struct ConfigSet {
    pub model: ModelSpec,
    pub workload: WorkloadSpec,
    pub cluster: ClusterSpec,
    pub slo: SloSpec,
}

pub fn load_config(path: impl AsRef<Path>) -> Result<ConfigSet> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_config(&text).map_err(|e| match e {
        Error::Parse {
            line,
            column,
            message,
            ..
        } => Error::Parse {
            path: path.to_path_buf(),
            line,
            column,
            message,
        },
        other => other,
    })
}

pub fn parse_config(text: &str) -> Result<ConfigSet> {
    let file: ConfigFile = serde_json::from_str(text).map_err(|e| Error::Parse {
        path: "<inline>".into(),
        line: e.line(),
        column: e.column(),
        message: e.to_string(),
    })?;
    file.into_validated()
}

impl ConfigSet {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&ConfigFile::from(self)).expect("config serializes")
    }
}

fn positive(field: &'static str, value: u64) -> Result<()> {
    if value == 0 {
        Err(Error::invariant(field, "must be >= 1"))
    } else {
        Ok(())
    }
}

fn required(field: &'static str, value: Option<u64>) -> Result<u64> {
    value.ok_or_else(|| Error::invariant(field, "required for this block kind"))
}

// On-disk representation.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ConfigFile {
    model: ModelFile,
    workload: WorkloadFile,
    cluster: ClusterFile,
    #[serde(default)]
    slo: SloFile,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    name: String,
    block_kind: BlockKind,
    layers: u64,
    d: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    a: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    k: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d_h: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    i: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    v: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    expand_mamba: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    d_inner: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    ngroups_ssm: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    h: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    p: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    l: Option<u64>,
    a_byte: u64,
    w_byte: u64,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WorkloadFile {
    b: u64,
    global_batch: u64,
    s: u64,
    mode: Mode,
    #[serde(default = "one")]
    out_tokens: u64,
}

fn one() -> u64 {
    1
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterFile {
    world: u64,
    devices_per_node: u64,
    mem_capacity: u64,
    cube_peak: f64,
    vector_peak: f64,
    mem_bandwidth: f64,
    intra_bw: f64,
    inter_bw: f64,
    #[serde(default)]
    training_state_bytes_per_param: u64,
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SloFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    min_throughput: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    max_ttft: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    percentile_q: Option<f64>,
    #[serde(default)]
    ttft_system_overhead: f64,
}

impl ConfigFile {
    fn into_validated(self) -> Result<ConfigSet> {
        let model = self.model.into_spec()?;
        model.validate()?;
        let w = self.workload;
        let workload = WorkloadSpec {
            b: w.b,
            global_batch: w.global_batch,
            s: w.s,
            mode: w.mode,
            out_tokens: w.out_tokens,
        };
        workload.validate()?;
        let c = self.cluster;
        let cluster = ClusterSpec {
            world: c.world,
            devices_per_node: c.devices_per_node,
            mem_capacity: c.mem_capacity,
            cube_peak: c.cube_peak,
            vector_peak: c.vector_peak,
            mem_bandwidth: c.mem_bandwidth,
            intra_bw: c.intra_bw,
            inter_bw: c.inter_bw,
            training_state_bytes_per_param: c.training_state_bytes_per_param,
        };
        cluster.validate()?;
        let slo = SloSpec {
            min_throughput: self.slo.min_throughput,
            max_ttft: self.slo.max_ttft,
            percentile_q: self.slo.percentile_q,
            ttft_system_overhead: self.slo.ttft_system_overhead,
        };
        slo.validate()?;
        Ok(ConfigSet {
            model,
            workload,
            cluster,
            slo,
        })
    }
}

impl ModelFile {
    fn into_spec(self) -> Result<ModelSpec> {
        let block = match self.block_kind {
            BlockKind::Transformer => Block::Transformer(AttentionDims {
                a: required("model.a", self.a)?,
                k: required("model.k", self.k)?,
                d_h: required("model.d_h", self.d_h)?,
                i: required("model.i", self.i)?,
            }),
            BlockKind::Mamba2 => {
                let expand = required("model.expand_mamba", self.expand_mamba)?;
                Block::Mamba2(MambaDims {
                    n: required("model.n", self.n)?,
                    expand,
                    d_inner: self.d_inner.unwrap_or(expand * self.d),
                    ngroups: required("model.ngroups_ssm", self.ngroups_ssm)?,
                    h: required("model.h", self.h)?,
                    p: required("model.p", self.p)?,
                    l: required("model.l", self.l)?,
                })
            }
        };
        Ok(ModelSpec {
            name: self.name,
            layers: self.layers,
            d: self.d,
            v: self.v,
            a_byte: self.a_byte,
            w_byte: self.w_byte,
            block,
        })
    }
}

impl From<&ConfigSet> for ConfigFile {
    fn from(set: &ConfigSet) -> Self {
        let m = &set.model;
        let mut model = ModelFile {
            name: m.name.clone(),
            block_kind: m.kind(),
            layers: m.layers,
            d: m.d,
            v: m.v,
            a_byte: m.a_byte,
            w_byte: m.w_byte,
            ..ModelFile::default()
        };
        match m.block {
            Block::Transformer(t) => {
                model.a = Some(t.a);
                model.k = Some(t.k);
                model.d_h = Some(t.d_h);
                model.i = Some(t.i);
            }
            Block::Mamba2(x) => {
                model.n = Some(x.n);
                model.expand_mamba = Some(x.expand);
                model.d_inner = Some(x.d_inner);
                model.ngroups_ssm = Some(x.ngroups);
                model.h = Some(x.h);
                model.p = Some(x.p);
                model.l = Some(x.l);
            }
        }
        let w = &set.workload;
        let c = &set.cluster;
        ConfigFile {
            model,
            workload: WorkloadFile {
                b: w.b,
                global_batch: w.global_batch,
                s: w.s,
                mode: w.mode,
                out_tokens: w.out_tokens,
            },
            cluster: ClusterFile {
                world: c.world,
                devices_per_node: c.devices_per_node,
                mem_capacity: c.mem_capacity,
                cube_peak: c.cube_peak,
                vector_peak: c.vector_peak,
                mem_bandwidth: c.mem_bandwidth,
                intra_bw: c.intra_bw,
                inter_bw: c.inter_bw,
                training_state_bytes_per_param: c.training_state_bytes_per_param,
            },
            slo: SloFile {
                min_throughput: set.slo.min_throughput,
                max_ttft: set.slo.max_ttft,
                percentile_q: set.slo.percentile_q,
                ttft_system_overhead: set.slo.ttft_system_overhead,
            },
        }
    }
}
