//! Analytical cost model and parallelization planner for transformer
//! (GQA attention + SwiGLU MLP) and Mamba-2 models.
//!
//! The crate computes per-device FLOPs, memory and communication volume
//! under hybrid data, pipeline, tensor and context parallelism, ranks every
//! factorization of a cluster, and checks its formulas against brute-force
//! oracles.

// `!(x > 0.0)` is used on purpose so NaN inputs are rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod collectives;
pub mod config;
pub mod error;
pub mod mamba;
pub mod metrics;
pub mod oracle;
pub mod planner;
pub mod recurrence;
pub mod reference;
pub mod report;
pub mod transformer;
pub mod verify;

pub use error::{Error, Result};

use num_rational::Ratio;
use num_traits::ToPrimitive;

/// Exact non-negative rational used for every count, byte and FLOP quantity
/// that may carry a fractional sharding factor.
pub type Exact = Ratio<u128>;

pub(crate) fn exact(n: u128) -> Exact {
    Exact::from_integer(n)
}

pub(crate) fn frac(n: u128, d: u128) -> Exact {
    Exact::new(n, d)
}

pub fn to_f64(x: &Exact) -> f64 {
    // Numerator and denominator can both exceed f64 range only in contrived
    // inputs; fall back to integer division in that case.
    match (x.numer().to_f64(), x.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => (x.numer() / x.denom()) as f64,
    }
}

pub fn ceil_u64(x: &Exact) -> u64 {
    let c = x.ceil().to_integer();
    u64::try_from(c).unwrap_or(u64::MAX)
}

/// Whole-model FLOPs split by execution unit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Flops {
    /// Matrix-unit (GEMM) FLOPs.
    pub cube: u128,
    /// Elementwise-unit FLOPs.
    pub vector: u128,
}

impl Flops {
    pub fn total(&self) -> u128 {
        self.cube + self.vector
    }

    pub fn per_device(&self, degree: u128) -> DeviceFlops {
        DeviceFlops {
            cube: frac(self.cube, degree),
            vector: frac(self.vector, degree),
        }
    }
}

impl std::ops::Add for Flops {
    type Output = Flops;
    fn add(self, o: Flops) -> Flops {
        Flops {
            cube: self.cube + o.cube,
            vector: self.vector + o.vector,
        }
    }
}

/// FLOPs landing on one device; fractional when a degree does not divide
/// the total.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct DeviceFlops {
    pub cube: Exact,
    pub vector: Exact,
}

impl Default for DeviceFlops {
    fn default() -> Self {
        DeviceFlops {
            cube: exact(0),
            vector: exact(0),
        }
    }
}

impl std::ops::Add for DeviceFlops {
    type Output = DeviceFlops;
    fn add(self, o: DeviceFlops) -> DeviceFlops {
        DeviceFlops {
            cube: self.cube + o.cube,
            vector: self.vector + o.vector,
        }
    }
}
