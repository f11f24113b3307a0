//! FLOPs, memory and communication of one GQA attention layer and one SwiGLU
//! MLP layer.
//!
//! All functions take the tensor shape `(b, s)` the layer sees before any
//! sharding. Data parallelism divides `b`, context parallelism divides `s`
//! and tensor parallelism divides heads or the FFN width. Multiply-adds count
//! as two FLOPs.

use crate::collectives::{data_moved_per_device, CollectiveKind};
use crate::config::{ModelSpec, ParallelConfig, Shape, Sharding, TpFlavor};
use crate::error::Result;
use crate::{exact, frac, DeviceFlops, Exact, Flops};

fn split_degree(cfg: &ParallelConfig) -> u128 {
    cfg.dp as u128 * cfg.tp as u128 * cfg.cp as u128
}

/// Attention FLOPs over the whole shape: Q/O projections, K/V projections,
/// QK^T and PV as cube work; softmax (max, subtract, exp, sum, divide) as
/// five vector FLOPs per score.
pub fn gqa_flops_total(m: &ModelSpec, shape: Shape) -> Result<Flops> {
    let t = m.attention()?;
    let (b, s, d) = (shape.b as u128, shape.s as u128, m.d as u128);
    let (a, k, d_h) = (t.a as u128, t.k as u128, t.d_h as u128);
    Ok(Flops {
        cube: 4 * b * s * d * d + 4 * b * s * k * d_h * d + 4 * b * s * s * d,
        vector: 5 * b * s * s * a,
    })
}

pub fn gqa_flops_per_device(m: &ModelSpec, shape: Shape, cfg: &ParallelConfig) -> Result<DeviceFlops> {
    Ok(gqa_flops_total(m, shape)?.per_device(split_degree(cfg)))
}

/// Activation bytes held per device. Scores and softmax outputs are not
/// materialized (fused attention). The layer input stays whole under plain
/// tensor parallelism; the sequence-sharded flavors split it too.
pub fn gqa_activation_bytes(m: &ModelSpec, shape: Shape, cfg: &ParallelConfig) -> Result<Exact> {
    let t = m.attention()?;
    let bsd = exact(shape.b as u128 * shape.s as u128 * m.d as u128);
    let unsharded = bsd;
    let sharded = exact(2) * bsd + exact(2) * bsd * frac(t.k as u128, t.a as u128);
    Ok(shard_activations(unsharded, sharded, cfg) * exact(m.a_byte as u128))
}

/// Q/O plus K/V projection weights per device.
pub fn gqa_weight_bytes(m: &ModelSpec, cfg: &ParallelConfig) -> Result<Exact> {
    let t = m.attention()?;
    let d = m.d as u128;
    let params = exact(2 * d * d) * (exact(1) + frac(t.k as u128, t.a as u128));
    Ok(shard_weights(params, cfg) * exact(m.w_byte as u128))
}

/// SwiGLU MLP: gate, up and down projections as cube work; the SiLU gate
/// (four ops) and the elementwise product as vector work.
pub fn mlp_flops_total(m: &ModelSpec, shape: Shape) -> Result<Flops> {
    let t = m.attention()?;
    let (b, s, d, i) = (shape.b as u128, shape.s as u128, m.d as u128, t.i as u128);
    Ok(Flops {
        cube: 6 * b * s * d * i,
        vector: 5 * b * s * i,
    })
}

pub fn mlp_flops_per_device(m: &ModelSpec, shape: Shape, cfg: &ParallelConfig) -> Result<DeviceFlops> {
    Ok(mlp_flops_total(m, shape)?.per_device(split_degree(cfg)))
}

pub fn mlp_activation_bytes(m: &ModelSpec, shape: Shape, cfg: &ParallelConfig) -> Result<Exact> {
    let t = m.attention()?;
    let bs = shape.b as u128 * shape.s as u128;
    let unsharded = exact(2 * bs * m.d as u128);
    let sharded = exact(4 * bs * t.i as u128);
    Ok(shard_activations(unsharded, sharded, cfg) * exact(m.a_byte as u128))
}

pub fn mlp_weight_bytes(m: &ModelSpec, cfg: &ParallelConfig) -> Result<Exact> {
    let t = m.attention()?;
    let params = exact(3 * m.d as u128 * t.i as u128);
    Ok(shard_weights(params, cfg) * exact(m.w_byte as u128))
}

/// Parameters of one attention + MLP layer held by a device.
pub fn layer_params_per_device(m: &ModelSpec, cfg: &ParallelConfig) -> Result<Exact> {
    let t = m.attention()?;
    let d = m.d as u128;
    let params = exact(2 * d * d) * (exact(1) + frac(t.k as u128, t.a as u128)) + exact(3 * d * t.i as u128);
    Ok(shard_weights(params, cfg))
}

fn shard_activations(unsharded: Exact, sharded: Exact, cfg: &ParallelConfig) -> Exact {
    let tp = exact(cfg.tp as u128);
    let outer = exact(cfg.dp as u128 * cfg.cp as u128);
    let local = match cfg.tp_flavor {
        TpFlavor::Plain => unsharded + sharded / tp,
        TpFlavor::Tpsp | TpFlavor::Tpup => (unsharded + sharded) / tp,
    };
    local / outer
}

fn shard_weights(params: Exact, cfg: &ParallelConfig) -> Exact {
    match cfg.tp_flavor {
        TpFlavor::Plain | TpFlavor::Tpsp => params / exact(cfg.tp as u128),
        // Head/sequence exchange keeps full weights on every rank.
        TpFlavor::Tpup => params,
    }
}

/// Elements each device sends per attention + MLP layer in the forward pass
/// for one parallel dimension, and the collective carrying them.
///
/// Data parallelism has no forward traffic; its gradient all-reduce is
/// accounted separately by [`dp_gradient_sync_bytes`].
pub fn attn_comm_elements(m: &ModelSpec, shape: Shape, sharding: Sharding) -> Result<(Exact, CollectiveKind)> {
    let t = m.attention()?;
    let bs = shape.b as u128 * shape.s as u128;
    let bsd = bs * m.d as u128;
    Ok(match sharding {
        Sharding::Dp(_) => (exact(0), CollectiveKind::AllReduce),
        Sharding::Tp(tp, flavor) => {
            let tp = tp as u128;
            match flavor {
                TpFlavor::Plain => (frac(4 * (tp - 1), tp) * exact(bsd), CollectiveKind::AllReduce),
                TpFlavor::Tpsp => (frac(4 * (tp - 1), tp) * exact(bsd), CollectiveKind::RingAllGather),
                // Four exchanges: Q and K/V in, output back, over a + k heads.
                TpFlavor::Tpup => (
                    frac(4 * (tp - 1), tp * tp) * exact(bs * t.d_h as u128 * (t.a + t.k) as u128),
                    CollectiveKind::AllToAll,
                ),
            }
        }
        Sharding::Cp(cp) => {
            let cp = cp as u128;
            (
                frac(4 * (cp - 1), cp) * exact(bs * t.k as u128 * t.d_h as u128),
                CollectiveKind::P2pSendRecv,
            )
        }
    })
}

/// Gradient all-reduce bytes per device for one training step.
pub fn dp_gradient_sync_bytes(params_per_device: Exact, m: &ModelSpec, dp: u32) -> Result<Exact> {
    data_moved_per_device(
        CollectiveKind::AllReduce,
        dp as u64,
        params_per_device * exact(m.w_byte as u128),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::{AttentionDims, Block};

    fn tiny(i: u64) -> ModelSpec {
        ModelSpec {
            name: "tiny".into(),
            layers: 1,
            d: 4,
            v: None,
            a_byte: 2,
            w_byte: 2,
            block: Block::Transformer(AttentionDims { a: 2, k: 1, d_h: 2, i }),
        }
    }

    const SHAPE: Shape = Shape::new(1, 2);

    fn tp(t: u32) -> ParallelConfig {
        ParallelConfig::new(1, 1, t, 1)
    }

    fn cp(c: u32) -> ParallelConfig {
        ParallelConfig::new(1, 1, 1, c)
    }

    fn dp(c: u32) -> ParallelConfig {
        ParallelConfig::new(c, 1, 1, 1)
    }

    #[test]
    fn gqa_flops_small_case() {
        let f = gqa_flops_total(&tiny(8), SHAPE).unwrap();
        assert_eq!((f.cube, f.vector, f.total()), (256, 40, 296));
        let per = gqa_flops_per_device(&tiny(8), SHAPE, &tp(2)).unwrap();
        assert_eq!((per.cube, per.vector), (exact(128), exact(20)));
        assert_eq!(gqa_flops_total(&tiny(8), Shape::new(0, 2)).unwrap(), Flops::default());
        let doubled = gqa_flops_total(&tiny(8), Shape::new(2, 2)).unwrap();
        assert_eq!((doubled.cube, doubled.vector), (512, 80));
    }

    #[test]
    fn gqa_memory_small_case() {
        let m = tiny(8);
        let one = ParallelConfig::single();
        assert_eq!(gqa_activation_bytes(&m, SHAPE, &one).unwrap(), exact(64));
        assert_eq!(gqa_activation_bytes(&m, SHAPE, &tp(2)).unwrap(), exact(40));
        assert_eq!(gqa_activation_bytes(&m, SHAPE, &cp(2)).unwrap(), exact(32));
        assert_eq!(gqa_weight_bytes(&m, &one).unwrap(), exact(96));
        assert_eq!(gqa_weight_bytes(&m, &tp(2)).unwrap(), exact(48));
        assert_eq!(gqa_weight_bytes(&m, &cp(8)).unwrap(), exact(96));
    }

    #[test]
    fn mlp_small_case() {
        let m = tiny(8);
        let f = mlp_flops_total(&m, SHAPE).unwrap();
        assert_eq!((f.cube, f.vector), (384, 80));
        assert_eq!(mlp_flops_total(&tiny(0), SHAPE).unwrap(), Flops::default());
        let half = mlp_flops_per_device(&m, SHAPE, &dp(2)).unwrap();
        assert_eq!((half.cube, half.vector), (exact(192), exact(40)));
        let one = ParallelConfig::single();
        assert_eq!(mlp_activation_bytes(&m, SHAPE, &one).unwrap(), exact(160));
        assert_eq!(mlp_activation_bytes(&m, SHAPE, &tp(2)).unwrap(), exact(96));
        assert_eq!(mlp_activation_bytes(&m, SHAPE, &cp(2)).unwrap(), exact(80));
        assert_eq!(mlp_weight_bytes(&m, &one).unwrap(), exact(192));
        assert_eq!(mlp_weight_bytes(&m, &tp(4)).unwrap(), exact(48));
        assert_eq!(mlp_weight_bytes(&m, &dp(8)).unwrap(), exact(192));
    }

    #[test]
    fn comm_small_case() {
        let m = tiny(8);
        assert_eq!(
            attn_comm_elements(&m, SHAPE, Sharding::Tp(2, TpFlavor::Plain)).unwrap(),
            (exact(16), CollectiveKind::AllReduce)
        );
        assert_eq!(
            attn_comm_elements(&m, SHAPE, Sharding::Cp(2)).unwrap(),
            (exact(8), CollectiveKind::P2pSendRecv)
        );
        assert_eq!(attn_comm_elements(&m, SHAPE, Sharding::Dp(8)).unwrap().0, exact(0));
        let (tpup, kind) = attn_comm_elements(&m, SHAPE, Sharding::Tp(2, TpFlavor::Tpup)).unwrap();
        // 4 * 1/4 * b*s*d_h*(a+k) = 1 * 2 * 2 * 3
        assert_eq!((tpup, kind), (exact(12), CollectiveKind::AllToAll));
    }

    #[test]
    fn gradient_sync() {
        let m = tiny(8);
        assert_eq!(dp_gradient_sync_bytes(exact(1000), &m, 1).unwrap(), exact(0));
        assert_eq!(dp_gradient_sync_bytes(exact(1000), &m, 4).unwrap(), exact(3000));
        assert_eq!(dp_gradient_sync_bytes(exact(1000), &m, 2).unwrap(), exact(2000));
    }

    #[test]
    fn memory_ordering_at_equal_degree() {
        let m = ModelSpec {
            block: Block::Transformer(AttentionDims { a: 8, k: 2, d_h: 4, i: 64 }),
            d: 32,
            ..tiny(8)
        };
        let shape = Shape::new(4, 16);
        for g in [2, 4, 8] {
            let w_tp = gqa_weight_bytes(&m, &tp(g)).unwrap() + mlp_weight_bytes(&m, &tp(g)).unwrap();
            let w_cp = gqa_weight_bytes(&m, &cp(g)).unwrap() + mlp_weight_bytes(&m, &cp(g)).unwrap();
            let w_dp = gqa_weight_bytes(&m, &dp(g)).unwrap() + mlp_weight_bytes(&m, &dp(g)).unwrap();
            assert!(w_tp < w_cp && w_cp == w_dp);
            for act in [gqa_activation_bytes, mlp_activation_bytes] {
                let a_tp = act(&m, shape, &tp(g)).unwrap();
                let a_cp = act(&m, shape, &cp(g)).unwrap();
                let a_dp = act(&m, shape, &dp(g)).unwrap();
                assert!(a_tp > a_cp && a_cp == a_dp);
            }
            let comm_tp = attn_comm_elements(&m, shape, Sharding::Tp(g, TpFlavor::Plain)).unwrap().0;
            let comm_cp = attn_comm_elements(&m, shape, Sharding::Cp(g)).unwrap().0;
            assert!(comm_cp < comm_tp);
        }
    }
}
