use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use roundbuy::catalog::Catalog;
use roundbuy::cli;
use roundbuy::dataset::{build_all_tasks, synth_matches};
use roundbuy_ffi::*;

fn last_error() -> String {
    let p = rb_last_error_message();
    assert!(!p.is_null());
    unsafe { CStr::from_ptr(p) }.to_string_lossy().into_owned()
}

fn default_catalog() -> *mut RbCatalog {
    let mut cat = ptr::null_mut();
    assert_eq!(unsafe { rb_catalog_default(&mut cat) }, RbStatus::Ok);
    assert!(!cat.is_null());
    cat
}

#[test]
fn catalog_queries() {
    let cat = default_catalog();
    let mut n = 0usize;
    assert_eq!(unsafe { rb_catalog_len(cat, &mut n) }, RbStatus::Ok);
    assert_eq!(n, 44);
    let mut end = 0usize;
    assert_eq!(unsafe { rb_catalog_end_action(cat, &mut end) }, RbStatus::Ok);
    assert_eq!(end, 44);
    let mut price = 0i64;
    assert_eq!(unsafe { rb_catalog_price(cat, 0, &mut price) }, RbStatus::Ok);
    assert_eq!(price, Catalog::default_fixture().price(0));
    assert_eq!(unsafe { rb_catalog_price(cat, 99, &mut price) }, RbStatus::InvalidArgument);
    assert!(last_error().contains("99"));
    unsafe { rb_catalog_free(cat) };
    unsafe { rb_catalog_free(ptr::null_mut()) };
}

#[test]
fn catalog_from_json_reports_errors() {
    let good = CString::new(Catalog::default_fixture().to_json_string()).unwrap();
    let mut cat = ptr::null_mut();
    assert_eq!(unsafe { rb_catalog_from_json(good.as_ptr(), &mut cat) }, RbStatus::Ok);
    unsafe { rb_catalog_free(cat) };
    let bad = CString::new("{\"weapons\": []}").unwrap();
    assert_eq!(unsafe { rb_catalog_from_json(bad.as_ptr(), &mut cat) }, RbStatus::DataError);
    assert!(!last_error().is_empty());
    assert_eq!(unsafe { rb_catalog_from_json(ptr::null(), &mut cat) }, RbStatus::NullPointer);
}

#[test]
fn greedy_matches_library_and_buffer_protocol() {
    let cat = default_catalog();
    let lib = roundbuy::baseline::greedy_purchase(&Catalog::default_fixture(), 5000, &Default::default());
    let mut len = 0usize;
    let status = unsafe { rb_greedy_purchase(cat, 5000, ptr::null(), 0, ptr::null_mut(), 0, &mut len) };
    assert_eq!(status, RbStatus::BufferTooSmall);
    assert_eq!(len, lib.actions().len());
    let mut buf = vec![0usize; len];
    let status = unsafe { rb_greedy_purchase(cat, 5000, ptr::null(), 0, buf.as_mut_ptr(), buf.len(), &mut len) };
    assert_eq!(status, RbStatus::Ok);
    assert_eq!(buf, lib.actions());
    assert_eq!(
        unsafe { rb_greedy_purchase(cat, -1, ptr::null(), 0, buf.as_mut_ptr(), buf.len(), &mut len) },
        RbStatus::InvalidArgument
    );
    assert_eq!(
        unsafe { rb_greedy_purchase(ptr::null(), 1, ptr::null(), 0, buf.as_mut_ptr(), buf.len(), &mut len) },
        RbStatus::NullPointer
    );
    unsafe { rb_catalog_free(cat) };
}

#[test]
fn f1_values() {
    let mut f = -1.0;
    let a = [1usize, 2];
    let b = [2usize, 3];
    assert_eq!(unsafe { rb_f1(a.as_ptr(), 2, b.as_ptr(), 2, false, &mut f) }, RbStatus::Ok);
    assert!((f - 0.5).abs() < 1e-15);
    assert_eq!(unsafe { rb_f1(ptr::null(), 0, ptr::null(), 0, false, &mut f) }, RbStatus::Ok);
    assert_eq!(f, 1.0);
    assert_eq!(unsafe { rb_f1(ptr::null(), 3, b.as_ptr(), 2, false, &mut f) }, RbStatus::NullPointer);
}

#[test]
fn policy_load_and_generate() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    let run = dir.path().join("run");
    let args = |v: &[&str]| {
        let mut out = Vec::new();
        let mut err = Vec::new();
        let code = cli::run(std::iter::once("roundbuy").chain(v.iter().copied()), &mut out, &mut err);
        assert_eq!(code, 0, "{}", String::from_utf8_lossy(&err));
    };
    args(&["synth", "--out", data.to_str().unwrap(), "--matches", "2"]);
    args(&["train", "--data", data.to_str().unwrap(), "--out", run.to_str().unwrap(), "--iterations", "1"]);

    let missing = CString::new(dir.path().join("nope.ckpt").to_str().unwrap()).unwrap();
    let mut policy = ptr::null_mut();
    assert_eq!(unsafe { rb_policy_load(missing.as_ptr(), &mut policy) }, RbStatus::NotFound);

    let path = CString::new(run.join("model.ckpt").to_str().unwrap()).unwrap();
    assert_eq!(unsafe { rb_policy_load(path.as_ptr(), &mut policy) }, RbStatus::Ok);
    let cat = Catalog::default_fixture();
    let (tasks, _) = build_all_tasks(&synth_matches(1, 1, &cat, 4), 5, &cat);
    let state = &tasks[0].target[0].state;
    let json = CString::new(serde_json::to_string(state).unwrap()).unwrap();
    let mut buf = [0usize; 32];
    let mut len = 0usize;
    let status = unsafe { rb_policy_generate(policy, json.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut len) };
    assert_eq!(status, RbStatus::Ok, "{}", last_error());
    assert!(len >= 1);
    assert_eq!(buf[len - 1], cat.end_action());
    let cost: i64 = buf[..len - 1].iter().map(|&id| cat.price(id)).sum();
    assert!(cost <= state.budget);

    let junk = CString::new("{}").unwrap();
    let status = unsafe { rb_policy_generate(policy, junk.as_ptr(), buf.as_mut_ptr(), buf.len(), &mut len) };
    assert_eq!(status, RbStatus::InvalidArgument);
    unsafe { rb_policy_free(policy) };
}

#[test]
fn version_is_a_c_string() {
    let v = unsafe { CStr::from_ptr(rb_version()) };
    assert_eq!(v.to_str().unwrap(), env!("CARGO_PKG_VERSION"));
}

#[test]
fn header_compiles_as_c() {
    let header = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include").join("roundbuy.h");
    let text = std::fs::read_to_string(&header).unwrap();
    for name in ["rb_catalog_default", "rb_greedy_purchase", "rb_f1", "rb_policy_generate", "RB_STATUS_OK"] {
        assert!(text.contains(name), "{name} missing from header");
    }
    let Ok(status) = Command::new("cc").args(["-fsyntax-only", "-x", "c"]).arg(&header).status() else {
        eprintln!("no C compiler; header syntax not checked");
        return;
    };
    assert!(status.success());
}
