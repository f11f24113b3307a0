//! Runs the closed-form formulas against the brute-force oracles and
//! collects one pass/fail line per check.
//!
//! The formulas under test come from a [`FormulaSet`] so a deliberately
//! broken implementation can be swapped in to confirm the suite catches it.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::collectives::{data_moved_per_device, CollectiveKind};
use crate::config::{AttentionDims, Block, MambaDims, ModelSpec, ParallelConfig, Shape};
use crate::error::Result;
use crate::mamba::{self, ScanMode, SsdBreakdown};
use crate::oracle::{self, TinyMamba, TinyTransformer};
use crate::planner::{self, Constraints};
use crate::recurrence::{self, RecurrenceTrace};
use crate::{exact, transformer, DeviceFlops, Exact, Flops};

pub type TotalFn = fn(&ModelSpec, Shape) -> Result<Flops>;
pub type PerDeviceFn = fn(&ModelSpec, Shape, &ParallelConfig) -> Result<DeviceFlops>;

/// The formula implementations checked by [`run`].
#[derive(Clone, Copy)]
pub struct FormulaSet {
    pub gqa_flops_total: TotalFn,
    pub gqa_flops_per_device: PerDeviceFn,
    pub mlp_flops_total: TotalFn,
    pub mlp_flops_per_device: PerDeviceFn,
    pub mamba_proj_flops: fn(&ModelSpec, Shape) -> Result<(u128, u128)>,
    pub ssd_flops: fn(&ModelSpec, Shape, ScanMode) -> Result<SsdBreakdown>,
    pub mamba_flops_total: fn(&ModelSpec, Shape, ScanMode) -> Result<Flops>,
    pub mamba_flops_per_device: fn(&ModelSpec, Shape, ScanMode, &ParallelConfig) -> Result<DeviceFlops>,
    pub data_moved_per_device: fn(CollectiveKind, u64, Exact) -> Result<Exact>,
    pub enumerate_configs: fn(u64, &Constraints) -> Vec<ParallelConfig>,
    pub bubble_fraction: fn(u64, u64) -> f64,
    pub run_recurrence_chunked: fn(&RecurrenceTrace, usize) -> Result<Vec<f64>>,
}

impl Default for FormulaSet {
    fn default() -> Self {
        FormulaSet {
            gqa_flops_total: transformer::gqa_flops_total,
            gqa_flops_per_device: transformer::gqa_flops_per_device,
            mlp_flops_total: transformer::mlp_flops_total,
            mlp_flops_per_device: transformer::mlp_flops_per_device,
            mamba_proj_flops: mamba::mamba_proj_flops,
            ssd_flops: mamba::ssd_flops,
            mamba_flops_total: mamba::mamba_flops_total,
            mamba_flops_per_device: mamba::mamba_flops_per_device,
            data_moved_per_device,
            enumerate_configs: planner::enumerate_configs,
            bubble_fraction: planner::bubble_fraction,
            run_recurrence_chunked: recurrence::run_recurrence_chunked,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OracleResult {
    pub name: &'static str,
    pub passed: bool,
    pub cases: usize,
    /// Largest absolute (exact checks) or relative (floating checks) error.
    pub max_error: f64,
    /// First failing term and case.
    pub failure: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct VerifyReport {
    pub results: Vec<OracleResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.results.iter().all(|r| r.passed)
    }

    pub fn get(&self, name: &str) -> Option<&OracleResult> {
        self.results.iter().find(|r| r.name == name)
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for r in &self.results {
            let _ = write!(
                out,
                "{} {:<24} cases={:<6} max_err={:.3e}",
                if r.passed { "PASS" } else { "FAIL" },
                r.name,
                r.cases,
                r.max_error
            );
            if let Some(f) = &r.failure {
                let _ = write!(out, "  {f}");
            }
            out.push('\n');
        }
        let failed = self.results.iter().filter(|r| !r.passed).count();
        let _ = writeln!(out, "{} oracles, {} failed", self.results.len(), failed);
        out
    }
}

/// Number of random tiny configurations per block type.
pub const RANDOM_CASES: usize = 60;
/// Number of random recurrence traces.
pub const RECURRENCE_TRACES: usize = 200;
pub const RECURRENCE_TOLERANCE: f64 = 1e-9;

struct Tally {
    name: &'static str,
    cases: usize,
    max_error: f64,
    failure: Option<String>,
}

impl Tally {
    fn new(name: &'static str) -> Self {
        Tally {
            name,
            cases: 0,
            max_error: 0.0,
            failure: None,
        }
    }

    fn exact(&mut self, term: &str, case: impl std::fmt::Debug, got: u128, want: u128) {
        let err = got.abs_diff(want) as f64;
        self.max_error = self.max_error.max(err);
        if err != 0.0 && self.failure.is_none() {
            self.failure = Some(format!("{term}: formula {got} != oracle {want} at {case:?}"));
        }
    }

    fn ratio(&mut self, term: &str, case: impl std::fmt::Debug, got: Exact, want: Exact) {
        if got != want {
            let diff = if got > want { got - want } else { want - got };
            self.max_error = self.max_error.max(crate::to_f64(&diff));
            if self.failure.is_none() {
                self.failure = Some(format!("{term}: {got} != {want} at {case:?}"));
            }
        }
    }

    fn error(&mut self, term: &str, e: crate::Error) {
        if self.failure.is_none() {
            self.failure = Some(format!("{term}: {e}"));
        }
        self.max_error = f64::INFINITY;
    }

    fn finish(self) -> OracleResult {
        OracleResult {
            name: self.name,
            passed: self.failure.is_none(),
            cases: self.cases,
            max_error: self.max_error,
            failure: self.failure,
        }
    }
}

pub fn tiny_transformer_model(t: TinyTransformer) -> ModelSpec {
    ModelSpec {
        name: "tiny".into(),
        layers: 1,
        d: t.d() as u64,
        v: None,
        a_byte: 2,
        w_byte: 2,
        block: Block::Transformer(AttentionDims {
            a: t.a as u64,
            k: t.k as u64,
            d_h: t.d_h as u64,
            i: t.i as u64,
        }),
    }
}

pub fn tiny_mamba_model(t: TinyMamba) -> ModelSpec {
    ModelSpec {
        name: "tiny-mamba".into(),
        layers: 1,
        d: t.d as u64,
        v: None,
        a_byte: 2,
        w_byte: 2,
        block: Block::Mamba2(MambaDims {
            n: t.n as u64,
            expand: t.expand as u64,
            d_inner: t.d_inner() as u64,
            ngroups: t.ngroups as u64,
            h: t.h as u64,
            p: t.p as u64,
            l: t.l as u64,
        }),
    }
}

fn transformer_counts(f: &FormulaSet, seed: u64) -> [OracleResult; 2] {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut gqa = Tally::new("gqa_flops");
    let mut mlp = Tally::new("mlp_flops");
    for _ in 0..RANDOM_CASES {
        let t = TinyTransformer::random(&mut rng);
        let m = tiny_transformer_model(t);
        let shape = Shape::new(t.b as u64, t.s as u64);
        let counted = oracle::gqa_forward_count(t, &mut rng);
        gqa.cases += 1;
        match (f.gqa_flops_total)(&m, shape) {
            Ok(x) => {
                gqa.exact("gqa cube flops", t, x.cube, counted.cube_flops());
                gqa.exact("gqa vector flops", t, x.vector, counted.vector_ops);
            }
            Err(e) => gqa.error("gqa flops", e),
        }
        let counted = oracle::mlp_forward_count(t, &mut rng);
        mlp.cases += 1;
        match (f.mlp_flops_total)(&m, shape) {
            Ok(x) => {
                mlp.exact("mlp cube flops", t, x.cube, counted.cube_flops());
                mlp.exact("mlp vector flops", t, x.vector, counted.vector_ops);
            }
            Err(e) => mlp.error("mlp flops", e),
        }
    }
    [gqa.finish(), mlp.finish()]
}

const STEP_NAMES: [&str; 5] = [
    "ssd step 1 (diagonal scores)",
    "ssd step 2 (diagonal outputs)",
    "ssd step 3 (chunk states)",
    "ssd step 4 (state passing)",
    "ssd step 5 (off-diagonal outputs)",
];

fn mamba_counts(f: &FormulaSet, seed: u64) -> OracleResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("mamba_flops");
    for case in 0..RANDOM_CASES {
        let t = TinyMamba::random(&mut rng);
        let m = tiny_mamba_model(t);
        let shape = Shape::new(t.b as u64, t.s as u64);
        // Alternate the scan variant; both are exercised over the run.
        let (mode, naive) = if case % 2 == 0 {
            (ScanMode::ParallelScan, false)
        } else {
            (ScanMode::Naive, true)
        };
        let counted = oracle::mamba_forward_count(t, naive, &mut rng);
        tally.cases += 1;
        match (f.mamba_proj_flops)(&m, shape) {
            Ok((inp, out)) => {
                tally.exact("mamba in_proj flops", t, inp, counted.in_proj.cube_flops());
                tally.exact("mamba out_proj flops", t, out, counted.out_proj.cube_flops());
            }
            Err(e) => tally.error("mamba projections", e),
        }
        match (f.ssd_flops)(&m, shape, mode) {
            Ok(ssd) => {
                let steps = counted.ssd_cube_flops();
                for (i, name) in STEP_NAMES.iter().enumerate() {
                    tally.exact(name, (t, mode), ssd.flops[i], steps[i]);
                }
                tally.exact("ssd decay flops", t, ssd.decay_flops, counted.decay_ops());
            }
            Err(e) => tally.error("ssd flops", e),
        }
    }
    tally.finish()
}

fn invariance(f: &FormulaSet) -> OracleResult {
    let mut tally = Tally::new("flops_invariance");
    let t = TinyTransformer {
        b: 3,
        s: 5,
        a: 4,
        k: 2,
        d_h: 2,
        i: 7,
    };
    let tm = tiny_transformer_model(t);
    let tshape = Shape::new(3, 5);
    let mm = tiny_mamba_model(TinyMamba {
        b: 3,
        s: 6,
        d: 5,
        expand: 2,
        ngroups: 1,
        n: 3,
        h: 2,
        p: 5,
        l: 3,
    });
    let mshape = Shape::new(3, 6);
    let degrees = [1u32, 2, 4, 8];
    for &dp in &degrees {
        for &tp in &degrees {
            for &cp in &degrees {
                let cfg = ParallelConfig::new(dp, 1, tp, cp);
                let degree = exact(dp as u128 * tp as u128 * cp as u128);
                let mut check = |term: &str, total: Result<Flops>, per: Result<DeviceFlops>| {
                    tally.cases += 1;
                    match (total, per) {
                        (Ok(total), Ok(per)) => {
                            tally.ratio(term, cfg.tuple(), per.cube * degree, exact(total.cube));
                            tally.ratio(term, cfg.tuple(), per.vector * degree, exact(total.vector));
                        }
                        (Err(e), _) | (_, Err(e)) => tally.error(term, e),
                    }
                };
                check(
                    "gqa per-device flops",
                    (f.gqa_flops_total)(&tm, tshape),
                    (f.gqa_flops_per_device)(&tm, tshape, &cfg),
                );
                check(
                    "mlp per-device flops",
                    (f.mlp_flops_total)(&tm, tshape),
                    (f.mlp_flops_per_device)(&tm, tshape, &cfg),
                );
                for mode in [ScanMode::ParallelScan, ScanMode::Naive] {
                    check(
                        "mamba per-device flops",
                        (f.mamba_flops_total)(&mm, mshape, mode),
                        (f.mamba_flops_per_device)(&mm, mshape, mode, &cfg),
                    );
                }
            }
        }
    }
    tally.finish()
}

fn scan_difference(f: &FormulaSet) -> OracleResult {
    let mut tally = Tally::new("ssd_scan_difference");
    for b in 1..=3u64 {
        for h in 1..=3u64 {
            for (s, l) in [(4u64, 2u64), (8, 2), (8, 4), (12, 3), (16, 4), (64, 8)] {
                for (n, p) in [(1u64, 1u64), (2, 2), (3, 5)] {
                    let m = tiny_mamba_model(TinyMamba {
                        b: b as usize,
                        s: s as usize,
                        d: 4,
                        expand: 2,
                        ngroups: 1,
                        n: n as usize,
                        h: h as usize,
                        p: p as usize,
                        l: l as usize,
                    });
                    let shape = Shape::new(b, s);
                    tally.cases += 1;
                    let naive = (f.ssd_flops)(&m, shape, ScanMode::Naive);
                    let scan = (f.ssd_flops)(&m, shape, ScanMode::ParallelScan);
                    match (naive, scan) {
                        (Ok(naive), Ok(scan)) => {
                            let c = (s / l) as u128;
                            let want = 2 * (b * h * p * n) as u128 * c * c;
                            let got = naive.five_step_total().saturating_sub(scan.five_step_total());
                            tally.exact("naive minus scan flops", (b, h, s, l, n, p), got, want);
                        }
                        (Err(e), _) | (_, Err(e)) => tally.error("ssd flops", e),
                    }
                }
            }
        }
    }
    tally.finish()
}

fn recurrence_check(f: &FormulaSet, seed: u64) -> OracleResult {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tally = Tally::new("recurrence_equivalence");
    let mut traces: Vec<(RecurrenceTrace, usize)> = Vec::with_capacity(RECURRENCE_TRACES + 1);
    traces.push((RecurrenceTrace::random(&mut rng, 16), 4));
    while traces.len() < RECURRENCE_TRACES + 1 {
        let l = [2usize, 4, 8][rng.gen_range(0..3)];
        let s = l * rng.gen_range(1..=256 / l);
        let h0 = rng.gen_range(-1.0..=1.0);
        traces.push((RecurrenceTrace::random(&mut rng, s).with_h0(h0), l));
    }
    for (trace, l) in &traces {
        tally.cases += 1;
        let direct = match recurrence::run_recurrence_direct(trace) {
            Ok(v) => v,
            Err(e) => {
                tally.error("direct recurrence", e);
                continue;
            }
        };
        match (f.run_recurrence_chunked)(trace, *l) {
            Ok(chunked) => {
                let err = if chunked.len() == direct.len() {
                    recurrence::max_relative_error(&direct, &chunked)
                } else {
                    f64::INFINITY
                };
                tally.max_error = tally.max_error.max(err);
                if !(err <= RECURRENCE_TOLERANCE) && tally.failure.is_none() {
                    tally.failure = Some(format!(
                        "chunked recurrence: relative error {err:.3e} at s={}, l={l}",
                        trace.len()
                    ));
                }
            }
            Err(e) => tally.error("chunked recurrence", e),
        }
    }
    tally.finish()
}

fn collectives_check(f: &FormulaSet) -> OracleResult {
    let mut tally = Tally::new("collective_identities");
    let moved = |kind, n, size: u128| (f.data_moved_per_device)(kind, n, exact(size));
    for n in 1..=64u64 {
        for size in [1u128, 7, 1024, 1 << 20] {
            tally.cases += 1;
            let ar = moved(CollectiveKind::AllReduce, n, size);
            let rs = moved(CollectiveKind::RingReduceScatter, n, size);
            let ag = moved(CollectiveKind::RingAllGather, n, size);
            match (ar, rs, ag) {
                (Ok(ar), Ok(rs), Ok(ag)) => {
                    tally.ratio("all-reduce vs reduce-scatter + all-gather", (n, size), ar, rs + ag);
                    if n == 1 {
                        tally.ratio("all-reduce at one device", size, ar, exact(0));
                    }
                }
                (Err(e), _, _) | (_, Err(e), _) | (_, _, Err(e)) => tally.error("data moved", e),
            }
        }
    }
    for kind in CollectiveKind::ALL.into_iter().filter(|k| *k != CollectiveKind::P2pSendRecv) {
        tally.cases += 1;
        match moved(kind, 1, 4096) {
            Ok(v) => tally.ratio("single-device collective", kind, v, exact(0)),
            Err(e) => tally.error("data moved", e),
        }
    }
    for (kind, want) in [(CollectiveKind::RingAllGather, 768), (CollectiveKind::AllReduce, 1536)] {
        tally.cases += 1;
        match moved(kind, 4, 1024) {
            Ok(v) => tally.ratio("ring volume at n=4 of 1024 bytes", kind, v, exact(want)),
            Err(e) => tally.error("data moved", e),
        }
    }
    tally.finish()
}

fn enumeration_check(f: &FormulaSet) -> OracleResult {
    let mut tally = Tally::new("enumeration");
    let open = Constraints {
        devices_per_node: u64::MAX,
        ..Constraints::default()
    };
    for world in [1u64, 2, 6, 8, 12, 16, 24, 32, 64] {
        tally.cases += 1;
        let mut got: Vec<(u64, u64, u64, u64)> = (f.enumerate_configs)(world, &open)
            .iter()
            .map(|c| (c.dp as u64, c.pp as u64, c.tp as u64, c.cp as u64))
            .collect();
        got.sort();
        let want = oracle::enumerate_brute(world);
        tally.exact("configuration count", world, got.len() as u128, want.len() as u128);
        if got != want && tally.failure.is_none() {
            tally.failure = Some(format!("configuration set differs at world={world}"));
        }
    }
    for (world, count) in [(8u64, 20u128), (16, 35)] {
        tally.cases += 1;
        tally.exact("configuration count", world, (f.enumerate_configs)(world, &open).len() as u128, count);
    }
    tally.finish()
}

fn bubble_check(f: &FormulaSet) -> OracleResult {
    let mut tally = Tally::new("pipeline_bubble");
    for pp in 1..=8u64 {
        for m in [1u64, 2, 3, 4, 8, 16, 64] {
            tally.cases += 1;
            let sim = oracle::simulate_1f1b_bubble(pp as usize, m as usize, 1.0, 2.0);
            let got = (f.bubble_fraction)(pp, m);
            let err = (got - sim).abs();
            tally.max_error = tally.max_error.max(err);
            if !(err <= 1e-12) && tally.failure.is_none() {
                tally.failure = Some(format!("bubble fraction: {got} != simulated {sim} at pp={pp}, m={m}"));
            }
        }
    }
    tally.finish()
}

/// Runs every oracle with a fixed seed.
pub fn run(f: &FormulaSet) -> VerifyReport {
    run_seeded(f, 0x5eed)
}

pub fn run_seeded(f: &FormulaSet, seed: u64) -> VerifyReport {
    let mut results = Vec::new();
    results.extend(transformer_counts(f, seed));
    results.push(mamba_counts(f, seed ^ 1));
    results.push(invariance(f));
    results.push(scan_difference(f));
    results.push(recurrence_check(f, seed ^ 2));
    results.push(collectives_check(f));
    results.push(enumeration_check(f));
    results.push(bubble_check(f));
    VerifyReport { results }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_formulas_pass() {
        let report = run(&FormulaSet::default());
        assert!(report.passed(), "{}", report.render());
        let rec = report.get("recurrence_equivalence").unwrap();
        assert!(rec.max_error <= RECURRENCE_TOLERANCE);
        assert_eq!(rec.cases, RECURRENCE_TRACES + 1);
    }

    fn doubled_gqa_cube(m: &ModelSpec, shape: Shape) -> Result<Flops> {
        let mut x = transformer::gqa_flops_total(m, shape)?;
        x.cube *= 2;
        Ok(x)
    }

    #[test]
    fn broken_gqa_cube_is_named() {
        let broken = FormulaSet {
            gqa_flops_total: doubled_gqa_cube,
            ..FormulaSet::default()
        };
        let report = run(&broken);
        assert!(!report.passed());
        let gqa = report.get("gqa_flops").unwrap();
        assert!(!gqa.passed);
        assert!(gqa.failure.as_deref().unwrap().starts_with("gqa cube flops"));
        assert!(report.get("mlp_flops").unwrap().passed);
    }
}
