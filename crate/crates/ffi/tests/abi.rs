use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::ptr;

use parashard::*;

fn config_path(name: &str) -> CString {
    let p = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(format!("{name}.json"));
    CString::new(p.to_string_lossy().into_owned()).unwrap()
}

fn load(name: &str) -> *mut PsConfig {
    let mut handle = ptr::null_mut();
    let status = unsafe { parashard_config_load(config_path(name).as_ptr(), &mut handle) };
    assert_eq!(status, PsStatus::Ok);
    assert!(!handle.is_null());
    handle
}

fn last_error() -> String {
    let p = parashard_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

#[test]
fn analyze_round_trip() {
    let cfg = load("llama7b");
    assert_eq!(unsafe { parashard_config_world(cfg) }, 8);
    let mut r = PsCostReport::default();
    let status = unsafe { parashard_analyze(cfg, 4, 2, 1, 1, PsMode::Training, &mut r) };
    assert_eq!(status, PsStatus::Ok);
    assert!(r.feasible);
    assert_eq!((r.dp, r.pp, r.tp, r.cp), (4, 2, 1, 1));
    assert_eq!(r.infeasible_reasons, 0);
    assert_eq!(r.num_microbatches, 256);
    assert_eq!(r.layers_per_stage, 16);
    assert!(r.mfu_pct > 0.0 && r.step_time_s > 0.0);
    unsafe { parashard_config_free(cfg) };
}

#[test]
fn infeasible_is_not_an_error() {
    let cfg = load("mamba7b");
    let mut r = PsCostReport::default();
    let status = unsafe { parashard_analyze(cfg, 8, 1, 1, 1, PsMode::Default, &mut r) };
    assert_eq!(status, PsStatus::Ok);
    assert!(!r.feasible);
    assert_eq!(r.infeasible_reasons, PS_REASON_MEMORY);
    unsafe { parashard_config_free(cfg) };
}

#[test]
fn binding_error_sets_message() {
    let cfg = load("llama7b");
    let mut r = PsCostReport::default();
    let status = unsafe { parashard_analyze(cfg, 3, 1, 1, 1, PsMode::Default, &mut r) };
    assert_eq!(status, PsStatus::Binding);
    assert!(last_error().contains("product 3 != world 8"));
    unsafe { parashard_config_free(cfg) };
}

#[test]
fn plan_csv_string() {
    let cfg = load("llama1b");
    let mut s = ptr::null_mut();
    let status = unsafe { parashard_plan_csv(cfg, PsRankKey::Mfu, 5, PsMode::Default, &mut s) };
    assert_eq!(status, PsStatus::Ok);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    unsafe { parashard_string_free(s) };
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 6);
    assert!(lines[1].starts_with("8,1,1,1,true"));
    unsafe { parashard_config_free(cfg) };
}

#[test]
fn empty_plan_status() {
    let text = std::fs::read_to_string(PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs/llama1b.json"))
        .unwrap()
        .replacen('{', "{\n  \"slo\": { \"min_throughput\": 1e12 },", 1);
    let json = CString::new(text).unwrap();
    let mut cfg = ptr::null_mut();
    assert_eq!(unsafe { parashard_config_parse(json.as_ptr(), &mut cfg) }, PsStatus::Ok);
    let mut s = ptr::null_mut();
    let status = unsafe { parashard_plan_csv(cfg, PsRankKey::Throughput, 0, PsMode::Default, &mut s) };
    assert_eq!(status, PsStatus::EmptyPlan);
    let text = unsafe { CStr::from_ptr(s) }.to_str().unwrap().to_owned();
    assert_eq!(text.lines().count(), 21);
    unsafe {
        parashard_string_free(s);
        parashard_config_free(cfg);
    }
}

#[test]
fn load_errors() {
    let mut cfg = ptr::null_mut();
    let missing = CString::new("/nonexistent/x.json").unwrap();
    assert_eq!(unsafe { parashard_config_load(missing.as_ptr(), &mut cfg) }, PsStatus::Io);
    assert!(cfg.is_null());
    let bad = CString::new("{ \"model\": 3 }").unwrap();
    assert_eq!(unsafe { parashard_config_parse(bad.as_ptr(), &mut cfg) }, PsStatus::Parse);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { parashard_config_load(ptr::null(), &mut cfg) }, PsStatus::NullArgument);
    assert_eq!(
        unsafe { parashard_config_load(missing.as_ptr(), ptr::null_mut()) },
        PsStatus::NullArgument
    );
    let mut r = PsCostReport::default();
    assert_eq!(
        unsafe { parashard_analyze(ptr::null(), 1, 1, 1, 1, PsMode::Default, &mut r) },
        PsStatus::NullArgument
    );
    unsafe {
        parashard_config_free(ptr::null_mut());
        parashard_string_free(ptr::null_mut());
    }
}

#[test]
fn collective_volumes() {
    let mut v = 0.0;
    let status = unsafe { parashard_data_moved_per_device(PsCollective::RingAllGather, 4, 1024, &mut v) };
    assert_eq!((status, v), (PsStatus::Ok, 768.0));
    unsafe { parashard_data_moved_per_device(PsCollective::AllReduce, 4, 1024, &mut v) };
    assert_eq!(v, 1536.0);
    let status = unsafe { parashard_data_moved_per_device(PsCollective::Reduce, 0, 1024, &mut v) };
    assert_eq!(status, PsStatus::InvalidArgument);
    assert!(!parashard_last_error_message().is_null());
}

#[test]
fn success_clears_error() {
    let mut v = 0.0;
    unsafe { parashard_data_moved_per_device(PsCollective::Reduce, 0, 1, &mut v) };
    assert!(!parashard_last_error_message().is_null());
    unsafe { parashard_data_moved_per_device(PsCollective::Reduce, 2, 1, &mut v) };
    assert!(parashard_last_error_message().is_null());
    let version = unsafe { CStr::from_ptr(parashard_version()) }.to_str().unwrap();
    assert_eq!(version, env!("CARGO_PKG_VERSION"));
}
