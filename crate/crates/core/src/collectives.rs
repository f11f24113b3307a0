//! Data moved per device by each collective primitive, and the time it takes
//! on a link of given bandwidth.

use std::fmt;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::{exact, frac, Exact};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum CollectiveKind {
    Reduce,
    Gather,
    RingAllGather,
    RingReduceScatter,
    AllToAll,
    /// Ring reduce-scatter followed by ring all-gather.
    AllReduce,
    P2pSendRecv,
}

impl CollectiveKind {
    pub const ALL: [CollectiveKind; 7] = [
        CollectiveKind::Reduce,
        CollectiveKind::Gather,
        CollectiveKind::RingAllGather,
        CollectiveKind::RingReduceScatter,
        CollectiveKind::AllToAll,
        CollectiveKind::AllReduce,
        CollectiveKind::P2pSendRecv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CollectiveKind::Reduce => "reduce",
            CollectiveKind::Gather => "gather",
            CollectiveKind::RingAllGather => "ring_all_gather",
            CollectiveKind::RingReduceScatter => "ring_reduce_scatter",
            CollectiveKind::AllToAll => "all_to_all",
            CollectiveKind::AllReduce => "all_reduce",
            CollectiveKind::P2pSendRecv => "p2p_send_recv",
        }
    }
}

impl fmt::Display for CollectiveKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Bytes sent by each device of an `n`-member group for a tensor of
/// `tensor_bytes`.
pub fn data_moved_per_device(kind: CollectiveKind, n: u64, tensor_bytes: Exact) -> Result<Exact> {
    if n == 0 {
        return Err(Error::InvalidGroup);
    }
    let n = n as u128;
    let ring = frac(n - 1, n);
    Ok(match kind {
        CollectiveKind::Reduce | CollectiveKind::Gather => exact(n - 1) * tensor_bytes,
        CollectiveKind::RingAllGather
        | CollectiveKind::RingReduceScatter
        | CollectiveKind::AllToAll => ring * tensor_bytes,
        CollectiveKind::AllReduce => {
            let rs = data_moved_per_device(CollectiveKind::RingReduceScatter, n as u64, tensor_bytes)?;
            let ag = data_moved_per_device(CollectiveKind::RingAllGather, n as u64, tensor_bytes)?;
            rs + ag
        }
        CollectiveKind::P2pSendRecv => tensor_bytes,
    })
}

/// Per-message latency added once per step when any traffic is present.
/// Volume-only modeling leaves it at zero.
pub const DEFAULT_FIXED_COST_PER_STEP: f64 = 0.0;

/// Seconds to move `bytes` over a link of `bw` bytes/s when a fraction
/// `overlap_eff` of the transfer hides behind compute.
pub fn collective_time(bytes: f64, bw: f64, overlap_eff: f64) -> Result<f64> {
    if !(bw > 0.0) || !bw.is_finite() {
        return Err(Error::InvalidBandwidth(bw));
    }
    if !(0.0..=1.0).contains(&overlap_eff) {
        return Err(Error::InvalidOverlap(overlap_eff));
    }
    Ok(bytes * (1.0 - overlap_eff) / bw)
}
