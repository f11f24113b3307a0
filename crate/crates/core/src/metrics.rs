//! Roofline classification and serving/training metrics.

use serde::Serialize;

use crate::config::ClusterSpec;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    ComputeBound,
    MemoryBound,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RooflineVerdict {
    pub arithmetic_intensity: f64,
    pub ridge_point: f64,
    pub bound: Bound,
    /// Intensity sits exactly on the ridge.
    pub on_boundary: bool,
}

/// FLOPs per byte moved.
pub fn arithmetic_intensity(flops: f64, bytes_moved: f64) -> Result<f64> {
    if !(bytes_moved > 0.0) {
        return Err(Error::UndefinedIntensity);
    }
    Ok(flops / bytes_moved)
}

pub fn classify(ai: f64, cluster: &ClusterSpec) -> RooflineVerdict {
    let ridge = cluster.ridge_point();
    RooflineVerdict {
        arithmetic_intensity: ai,
        ridge_point: ridge,
        bound: if ai > ridge {
            Bound::ComputeBound
        } else {
            Bound::MemoryBound
        },
        on_boundary: ai == ridge,
    }
}

/// Model FLOPs utilization in percent.
pub fn mfu(achieved_flops_rate: f64, peak_flops_rate: f64) -> Result<f64> {
    if !(peak_flops_rate > 0.0) {
        return Err(Error::InvalidPeak(peak_flops_rate));
    }
    Ok(100.0 * achieved_flops_rate / peak_flops_rate)
}

/// End-to-end latency of a request producing `out_tokens` tokens.
pub fn latency_metrics(ttft: f64, tpot: f64, out_tokens: u64) -> Result<f64> {
    if out_tokens == 0 {
        return Err(Error::NoOutputTokens);
    }
    Ok(ttft + tpot * (out_tokens - 1) as f64)
}

/// Time per output token recovered from end-to-end latency.
pub fn tpot_from_e2e(e2e: f64, ttft: f64, out_tokens: u64) -> Result<f64> {
    if out_tokens < 2 {
        return Err(Error::NoOutputTokens);
    }
    Ok((e2e - ttft) / (out_tokens - 1) as f64)
}

pub fn throughput(tokens: f64, seconds: f64) -> Result<f64> {
    if !(seconds > 0.0) {
        return Err(Error::InvalidDuration(seconds));
    }
    Ok(tokens / seconds)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cluster() -> ClusterSpec {
        ClusterSpec {
            world: 8,
            devices_per_node: 8,
            mem_capacity: 60_000_000_000,
            cube_peak: 378.88e12,
            vector_peak: 23.68e12,
            mem_bandwidth: 1.6e12,
            intra_bw: 56e9,
            inter_bw: 25e9,
            training_state_bytes_per_param: 0,
        }
    }

    #[test]
    fn intensity() {
        assert!((arithmetic_intensity(296.0, 160.0).unwrap() - 1.85).abs() < 1e-12);
        assert_eq!(arithmetic_intensity(7.0, 7.0).unwrap(), 1.0);
        assert_eq!(arithmetic_intensity(0.0, 3.0).unwrap(), 0.0);
        assert!(matches!(arithmetic_intensity(1.0, 0.0), Err(Error::UndefinedIntensity)));
    }

    #[test]
    fn roofline() {
        let c = cluster();
        assert!((c.ridge_point() - 236.8).abs() < 1e-9);
        let v = classify(1.85, &c);
        assert_eq!((v.bound, v.on_boundary), (Bound::MemoryBound, false));
        let ridge = c.ridge_point();
        assert_eq!(classify(ridge * (1.0 + 1e-12), &c).bound, Bound::ComputeBound);
        let tie = classify(ridge, &c);
        assert_eq!((tie.bound, tie.on_boundary), (Bound::MemoryBound, true));
    }

    #[test]
    fn scaling_keeps_verdict() {
        let c = cluster();
        for (flops, bytes) in [(296.0, 160.0), (1e6, 10.0), (5e5, 5e3)] {
            let base = classify(arithmetic_intensity(flops, bytes).unwrap(), &c).bound;
            for k in [2.0, 1024.0] {
                let ai = arithmetic_intensity(flops * k, bytes * k).unwrap();
                assert_eq!(classify(ai, &c).bound, base);
            }
        }
    }

    #[test]
    fn utilization() {
        assert_eq!(mfu(5.0, 5.0).unwrap(), 100.0);
        assert_eq!(mfu(0.0, 5.0).unwrap(), 0.0);
        assert!(matches!(mfu(1.0, 0.0), Err(Error::InvalidPeak(_))));
    }

    #[test]
    fn latency() {
        assert!((latency_metrics(0.2, 0.05, 101).unwrap() - 5.2).abs() < 1e-12);
        assert_eq!(latency_metrics(0.2, 9.0, 1).unwrap(), 0.2);
        assert!(matches!(latency_metrics(0.2, 0.05, 0), Err(Error::NoOutputTokens)));
        assert!((tpot_from_e2e(5.2, 0.2, 101).unwrap() - 0.05).abs() < 1e-12);
        let e2e = latency_metrics(0.31, 0.0125, 64).unwrap();
        assert!((tpot_from_e2e(e2e, 0.31, 64).unwrap() - 0.0125).abs() < 1e-15);
    }

    #[test]
    fn token_rate() {
        // Published rates are rounded from unrounded step times.
        for (seconds, ktok) in [(101.8, 41.2), (28.3, 148.4)] {
            let rate = throughput(4_194_304.0, seconds).unwrap() / 1e3;
            assert!((rate - ktok).abs() / ktok < 2.5e-3, "{rate}");
        }
        assert_eq!(throughput(0.0, 3.0).unwrap(), 0.0);
        assert!(matches!(throughput(1.0, 0.0), Err(Error::InvalidDuration(_))));
    }
}
