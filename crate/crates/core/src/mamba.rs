//! Mamba-2 block costs: in/out projections, the five-step chunked SSD and its
//! memory, and communication scaling estimates.
//!
//! `c = s / l` is the number of chunks. Steps 1, 2, 3 and 5 are batched
//! GEMMs and run on the matrix unit; the inter-chunk state pass (step 4) and
//! the decay applications are elementwise.

use std::fmt;

use serde::Serialize;

use crate::collectives::CollectiveKind;
use crate::config::{derive_dims, ModelSpec, ParallelConfig, Shape, Sharding, TpFlavor};
use crate::error::{Error, Result};
use crate::{exact, frac, DeviceFlops, Exact, Flops};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScanMode {
    /// Every chunk state summed explicitly over all earlier chunks.
    Naive,
    #[default]
    ParallelScan,
}

impl fmt::Display for ScanMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScanMode::Naive => "naive",
            ScanMode::ParallelScan => "parallel_scan",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct SsdBreakdown {
    /// Steps 1..=5: diagonal-block scores, diagonal-block outputs,
    /// intra-chunk states, inter-chunk states, off-diagonal outputs.
    pub flops: [u128; 5],
    /// Elementwise decay multiplications folded into steps 1, 3 and 5.
    pub decay_flops: u128,
    pub scan_mode: ScanMode,
    pub cube_total: u128,
    pub vector_total: u128,
}

impl SsdBreakdown {
    /// Sum of the five contraction steps.
    pub fn five_step_total(&self) -> u128 {
        self.flops.iter().sum()
    }
}

fn chunks(m: &ModelSpec, s: u64) -> Result<u128> {
    let l = m.mamba()?.l;
    if l == 0 || !s.is_multiple_of(l) {
        return Err(Error::Chunking { seq: s, chunk: l });
    }
    Ok((s / l) as u128)
}

/// `(in_proj, out_proj)` FLOPs; both cube.
pub fn mamba_proj_flops(m: &ModelSpec, shape: Shape) -> Result<(u128, u128)> {
    let dims = derive_dims(m)?;
    let (b, s, d) = (shape.b as u128, shape.s as u128, m.d as u128);
    Ok((
        2 * b * s * d * dims.d_inproj as u128,
        2 * b * s * dims.d_inner as u128 * d,
    ))
}

pub fn ssd_flops(m: &ModelSpec, shape: Shape, mode: ScanMode) -> Result<SsdBreakdown> {
    let x = m.mamba()?;
    let c = chunks(m, shape.s)?;
    let b = shape.b as u128;
    let (h, n, p, l) = (x.h as u128, x.n as u128, x.p as u128, x.l as u128);
    let step4 = match mode {
        ScanMode::ParallelScan => h * c * p * n,
        ScanMode::Naive => h * c * (c + 1) * p * n,
    };
    let flops = [
        2 * b * c * h * l * l * n,
        2 * b * c * h * l * l * p,
        2 * b * c * h * l * p * n,
        2 * b * step4,
        2 * b * c * h * p * n * l,
    ];
    let decay_flops = b * shape.s as u128 * h * (l + n + p);
    Ok(SsdBreakdown {
        flops,
        decay_flops,
        scan_mode: mode,
        cube_total: flops[0] + flops[1] + flops[2] + flops[4],
        vector_total: flops[3] + decay_flops,
    })
}

pub fn mamba_flops_total(m: &ModelSpec, shape: Shape, mode: ScanMode) -> Result<Flops> {
    let (inp, out) = mamba_proj_flops(m, shape)?;
    let ssd = ssd_flops(m, shape, mode)?;
    Ok(Flops {
        cube: inp + out + ssd.cube_total,
        vector: ssd.vector_total,
    })
}

pub fn mamba_flops_per_device(
    m: &ModelSpec,
    shape: Shape,
    mode: ScanMode,
    cfg: &ParallelConfig,
) -> Result<DeviceFlops> {
    let degree = cfg.dp as u128 * cfg.tp as u128 * cfg.cp as u128;
    Ok(mamba_flops_total(m, shape, mode)?.per_device(degree))
}

/// Per-GEMM memory of one Mamba-2 layer on one device, in bytes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SsdMemory {
    pub in_proj_act: Exact,
    pub in_proj_weight: Exact,
    pub out_proj_act: Exact,
    pub out_proj_weight: Exact,
    /// Operand and output tensors of SSD steps 1..=5.
    pub terms: [Exact; 5],
}

impl SsdMemory {
    pub fn in_proj(&self) -> Exact {
        self.in_proj_act + self.in_proj_weight
    }

    pub fn out_proj(&self) -> Exact {
        self.out_proj_act + self.out_proj_weight
    }

    pub fn ssd_total(&self) -> Exact {
        self.terms.iter().fold(exact(0), |acc, t| acc + t)
    }

    pub fn weight_bytes(&self) -> Exact {
        self.in_proj_weight + self.out_proj_weight
    }

    pub fn activation_bytes(&self) -> Exact {
        self.in_proj_act + self.out_proj_act + self.ssd_total()
    }

    pub fn total(&self) -> Exact {
        self.weight_bytes() + self.activation_bytes()
    }
}

/// Unsharded per-GEMM memory.
pub fn ssd_memory_bytes(m: &ModelSpec, shape: Shape) -> Result<SsdMemory> {
    ssd_memory_per_device(m, shape, &ParallelConfig::single())
}

/// Per-GEMM memory with batch divided by `dp`, sequence (and so the chunk
/// count) by `cp`, and heads plus the projection widths by `tp`.
pub fn ssd_memory_per_device(m: &ModelSpec, shape: Shape, cfg: &ParallelConfig) -> Result<SsdMemory> {
    let x = m.mamba()?;
    let dims = derive_dims(m)?;
    let c_total = chunks(m, shape.s)?;
    let tp = exact(cfg.tp as u128);
    let b = frac(shape.b as u128, cfg.dp as u128);
    let s = frac(shape.s as u128, cfg.cp as u128);
    let c = frac(c_total, cfg.cp as u128);
    let h = exact(x.h as u128) / tp;
    let (n, p, l) = (exact(x.n as u128), exact(x.p as u128), exact(x.l as u128));
    let d = exact(m.d as u128);
    let one = exact(1);
    let d_inproj = exact(dims.d_inproj as u128) / tp;
    let d_inner = exact(dims.d_inner as u128) / tp;
    let a_byte = exact(m.a_byte as u128);
    let w_byte = exact(m.w_byte as u128);
    let (in_w, out_w) = match cfg.tp_flavor {
        TpFlavor::Tpup => (
            exact(m.d as u128 * dims.d_inproj as u128),
            exact(m.d as u128 * dims.d_inner as u128),
        ),
        TpFlavor::Plain | TpFlavor::Tpsp => (d * d_inproj, d * d_inner),
    };

    let terms = [
        (b * l * c * n * h + b * h * c * n + h + b * c * h * l * l) * a_byte,
        (b * c * h * l * l + b * c * l * h * p + b * c * l * h * p) * a_byte,
        (b * c * h * p * l + b * c * l * h * n + b * c * h * p * n) * a_byte,
        (b * h * (c + one) * c + b * c * h * p * n + b * (c + one) * h * p * n) * a_byte,
        (b * c * h * p * n + b * c * l * h * n + b * c * h * p * l) * a_byte,
    ];
    Ok(SsdMemory {
        in_proj_act: (b * s * d + b * s * d_inproj) * a_byte,
        in_proj_weight: in_w * w_byte,
        out_proj_act: (b * s * d_inner + b * s * d) * a_byte,
        out_proj_weight: out_w * w_byte,
        terms,
    })
}

/// Parameters of one Mamba-2 layer (in and out projections) per device.
pub fn mamba_layer_params_per_device(m: &ModelSpec, cfg: &ParallelConfig) -> Result<Exact> {
    let dims = derive_dims(m)?;
    let full = exact(m.d as u128 * (dims.d_inproj + dims.d_inner) as u128);
    Ok(match cfg.tp_flavor {
        TpFlavor::Tpup => full,
        TpFlavor::Plain | TpFlavor::Tpsp => full / exact(cfg.tp as u128),
    })
}

/// Scaling estimate of per-layer traffic with the constant factor fixed at one
/// element: `d * n * s` for TPSP, `d * n * cp` for CP, none for DP.
pub fn mamba_comm_elements(m: &ModelSpec, shape: Shape, sharding: Sharding) -> Result<(Exact, CollectiveKind)> {
    let x = m.mamba()?;
    let dn = m.d as u128 * x.n as u128;
    Ok(match sharding {
        Sharding::Dp(_) => (exact(0), CollectiveKind::AllReduce),
        Sharding::Tp(_, flavor @ (TpFlavor::Plain | TpFlavor::Tpup)) => {
            return Err(Error::UnsupportedFlavor {
                flavor: flavor.as_str(),
                block: "mamba2",
            })
        }
        Sharding::Tp(1, TpFlavor::Tpsp) => (exact(0), CollectiveKind::AllReduce),
        Sharding::Tp(_, TpFlavor::Tpsp) => (exact(dn * shape.s as u128), CollectiveKind::AllReduce),
        Sharding::Cp(1) => (exact(0), CollectiveKind::RingAllGather),
        Sharding::Cp(cp) => (exact(dn * cp as u128), CollectiveKind::RingAllGather),
    })
}
