//! C ABI over the parashard cost model.
//!
//! Every fallible function returns a [`PsStatus`]; on failure a message is
//! kept per thread and can be read with [`parashard_last_error_message`].
//! Configurations are passed around as opaque [`PsConfig`] handles.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use parashard_core::collectives::{data_moved_per_device, CollectiveKind};
use parashard_core::config::{load_config, parse_config, ConfigSet, Mode, ParallelConfig};
use parashard_core::planner::{self, CostReport, PlanOptions, RankKey};
use parashard_core::report::{render_plan, Format};
use parashard_core::{to_f64, Error, Exact};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    Parse = 4,
    InvalidConfig = 5,
    /// Parallel degrees do not multiply to the world size.
    Binding = 6,
    Unsupported = 7,
    InvalidArgument = 8,
    /// The plan has no feasible configuration.
    EmptyPlan = 9,
    Panic = 10,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsMode {
    /// Use the mode stored in the configuration.
    Default = 0,
    Training = 1,
    Prefill = 2,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsRankKey {
    Mfu = 0,
    Throughput = 1,
    StepTime = 2,
    Memory = 3,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PsCollective {
    Reduce = 0,
    Gather = 1,
    RingAllGather = 2,
    RingReduceScatter = 3,
    AllToAll = 4,
    AllReduce = 5,
    P2pSendRecv = 6,
}

/// Bits of [`PsCostReport::infeasible_reasons`].
pub const PS_REASON_MICROBATCH: u32 = 1;
pub const PS_REASON_MEMORY: u32 = 2;
pub const PS_REASON_SLO: u32 = 4;

/// Flat summary of one configuration's cost estimate.
#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct PsCostReport {
    pub dp: u32,
    pub pp: u32,
    pub tp: u32,
    pub cp: u32,
    pub feasible: bool,
    /// Zero when feasible; otherwise a mask of `PS_REASON_*` bits.
    pub infeasible_reasons: u32,
    pub flops_cube_per_device: f64,
    pub flops_vector_per_device: f64,
    pub weight_bytes: u64,
    pub activation_bytes: u64,
    pub training_state_bytes: u64,
    pub comm_bytes_intra: u64,
    pub comm_bytes_inter: u64,
    pub compute_time_s: f64,
    pub comm_time_s: f64,
    pub bubble_fraction: f64,
    pub step_time_s: f64,
    pub throughput_tok_s: f64,
    pub mfu_pct: f64,
    pub ttft_s: f64,
    pub num_microbatches: u64,
    pub layers_per_stage: u64,
}

/// Opaque loaded configuration.
pub struct PsConfig {
    set: ConfigSet,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = CString::new(msg.into().replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(msg));
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn status_of(e: &Error) -> PsStatus {
    match e {
        Error::Io { .. } => PsStatus::Io,
        Error::Parse { .. } => PsStatus::Parse,
        Error::Binding { .. } => PsStatus::Binding,
        Error::UnsupportedBlock { .. } | Error::UnsupportedFlavor { .. } => PsStatus::Unsupported,
        Error::UnknownReference(_) | Error::Reference { .. } => PsStatus::InvalidArgument,
        _ => PsStatus::InvalidConfig,
    }
}

fn fail(e: Error) -> PsStatus {
    set_error(e.to_string());
    status_of(&e)
}

/// Runs `f`, turning panics into [`PsStatus::Panic`].
fn guard(f: impl FnOnce() -> PsStatus) -> PsStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => {
            set_error("internal panic");
            PsStatus::Panic
        }
    }
}

unsafe fn read_str<'a>(p: *const c_char) -> Result<&'a str, PsStatus> {
    if p.is_null() {
        set_error("null string argument");
        return Err(PsStatus::NullArgument);
    }
    CStr::from_ptr(p).to_str().map_err(|_| {
        set_error("argument is not valid UTF-8");
        PsStatus::InvalidUtf8
    })
}

fn null_arg(what: &str) -> PsStatus {
    set_error(format!("null {what}"));
    PsStatus::NullArgument
}

fn report_to_c(r: &CostReport) -> PsCostReport {
    let mut reasons = 0;
    for part in r.reason.split(',') {
        reasons |= match part {
            "microbatch" => PS_REASON_MICROBATCH,
            "memory" => PS_REASON_MEMORY,
            "slo" => PS_REASON_SLO,
            _ => 0,
        };
    }
    PsCostReport {
        dp: r.config.dp,
        pp: r.config.pp,
        tp: r.config.tp,
        cp: r.config.cp,
        feasible: r.feasible,
        infeasible_reasons: reasons,
        flops_cube_per_device: r.flops_cube_per_device,
        flops_vector_per_device: r.flops_vector_per_device,
        weight_bytes: r.weight_bytes,
        activation_bytes: r.activation_bytes,
        training_state_bytes: r.training_state_bytes,
        comm_bytes_intra: r.comm_bytes_intra,
        comm_bytes_inter: r.comm_bytes_inter,
        compute_time_s: r.compute_time,
        comm_time_s: r.comm_time,
        bubble_fraction: r.bubble_fraction,
        step_time_s: r.step_time,
        throughput_tok_s: r.throughput,
        mfu_pct: r.mfu,
        ttft_s: r.ttft,
        num_microbatches: r.num_microbatches,
        layers_per_stage: r.layers_per_stage,
    }
}

fn options(mode: PsMode) -> PlanOptions {
    PlanOptions {
        mode: match mode {
            PsMode::Default => None,
            PsMode::Training => Some(Mode::Training),
            PsMode::Prefill => Some(Mode::Prefill),
        },
        ..PlanOptions::default()
    }
}

fn store_handle(out: *mut *mut PsConfig, set: ConfigSet) -> PsStatus {
    unsafe { *out = Box::into_raw(Box::new(PsConfig { set })) };
    PsStatus::Ok
}

/// Loads a JSON configuration file into a new handle.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn parashard_config_load(path: *const c_char, out: *mut *mut PsConfig) -> PsStatus {
    guard(|| {
        if out.is_null() {
            return null_arg("output handle pointer");
        }
        let path = match read_str(path) {
            Ok(p) => p,
            Err(s) => return s,
        };
        match load_config(path) {
            Ok(set) => store_handle(out, set),
            Err(e) => fail(e),
        }
    })
}

/// Parses a JSON configuration held in memory into a new handle.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn parashard_config_parse(json: *const c_char, out: *mut *mut PsConfig) -> PsStatus {
    guard(|| {
        if out.is_null() {
            return null_arg("output handle pointer");
        }
        let text = match read_str(json) {
            Ok(t) => t,
            Err(s) => return s,
        };
        match parse_config(text) {
            Ok(set) => store_handle(out, set),
            Err(e) => fail(e),
        }
    })
}

/// Releases a handle. Null is ignored.
///
/// # Safety
/// `config` must come from a load/parse call and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn parashard_config_free(config: *mut PsConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Number of devices the configuration describes.
///
/// # Safety
/// `config` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn parashard_config_world(config: *const PsConfig) -> u64 {
    config.as_ref().map_or(0, |c| c.set.cluster.world)
}

/// Cost estimate of one (dp, pp, tp, cp) configuration. An infeasible
/// configuration still returns [`PsStatus::Ok`] with `feasible` false.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn parashard_analyze(
    config: *const PsConfig,
    dp: u32,
    pp: u32,
    tp: u32,
    cp: u32,
    mode: PsMode,
    out: *mut PsCostReport,
) -> PsStatus {
    guard(|| {
        let Some(config) = config.as_ref() else {
            return null_arg("config handle");
        };
        if out.is_null() {
            return null_arg("output report pointer");
        }
        let cfg = ParallelConfig::new(dp, pp, tp, cp);
        match planner::analyze(&config.set, cfg, &options(mode)) {
            Ok(r) => {
                *out = report_to_c(&r);
                PsStatus::Ok
            }
            Err(e) => fail(e),
        }
    })
}

/// Sweeps every configuration and writes the ranked plan as CSV. `top` of
/// zero keeps every row. The string must be released with
/// [`parashard_string_free`]. Returns [`PsStatus::EmptyPlan`] (with the CSV
/// still written) when nothing is feasible.
///
/// # Safety
/// `config` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn parashard_plan_csv(
    config: *const PsConfig,
    key: PsRankKey,
    top: usize,
    mode: PsMode,
    out: *mut *mut c_char,
) -> PsStatus {
    guard(|| {
        let Some(config) = config.as_ref() else {
            return null_arg("config handle");
        };
        if out.is_null() {
            return null_arg("output string pointer");
        }
        let key = match key {
            PsRankKey::Mfu => RankKey::Mfu,
            PsRankKey::Throughput => RankKey::Throughput,
            PsRankKey::StepTime => RankKey::StepTime,
            PsRankKey::Memory => RankKey::Memory,
        };
        let plan = match planner::plan(&config.set, &options(mode), key) {
            Ok(p) => p,
            Err(e) => return fail(e),
        };
        let text = match render_plan(&plan, (top > 0).then_some(top), Format::Csv) {
            Ok(t) => t,
            Err(e) => return fail(e),
        };
        *out = CString::new(text).expect("csv has no nul bytes").into_raw();
        if plan.feasible.is_empty() {
            set_error("no feasible configuration");
            PsStatus::EmptyPlan
        } else {
            PsStatus::Ok
        }
    })
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` must come from this library and not be freed twice.
#[no_mangle]
pub unsafe extern "C" fn parashard_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Bytes each device sends for one collective over `n` ranks.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn parashard_data_moved_per_device(
    kind: PsCollective,
    n: u64,
    tensor_bytes: u64,
    out: *mut f64,
) -> PsStatus {
    guard(|| {
        if out.is_null() {
            return null_arg("output pointer");
        }
        let kind = match kind {
            PsCollective::Reduce => CollectiveKind::Reduce,
            PsCollective::Gather => CollectiveKind::Gather,
            PsCollective::RingAllGather => CollectiveKind::RingAllGather,
            PsCollective::RingReduceScatter => CollectiveKind::RingReduceScatter,
            PsCollective::AllToAll => CollectiveKind::AllToAll,
            PsCollective::AllReduce => CollectiveKind::AllReduce,
            PsCollective::P2pSendRecv => CollectiveKind::P2pSendRecv,
        };
        match data_moved_per_device(kind, n, Exact::from_integer(tensor_bytes as u128)) {
            Ok(v) => {
                *out = to_f64(&v);
                PsStatus::Ok
            }
            Err(e) => {
                set_error(e.to_string());
                PsStatus::InvalidArgument
            }
        }
    })
}

/// Message describing the last failure on this thread, or null. Valid
/// until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn parashard_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn parashard_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}
