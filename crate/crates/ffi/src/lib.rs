//! C ABI for catalog queries, the greedy baseline, the F1 metric and
//! greedy generation from a trained checkpoint.
//!
//! Every fallible function returns an [`RbStatus`]. On failure the message
//! is kept per thread and can be read with [`rb_last_error_message`].
//! Handles are opaque, created by `*_new`/`*_load` style functions and
//! released with the matching `*_free`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use roundbuy::autodiff::ParamStore;
use roundbuy::baseline::greedy_purchase;
use roundbuy::catalog::{Catalog, Inventory};
use roundbuy::cli::{load_checkpoint, CliError, LoadedCheckpoint};
use roundbuy::eval::{f1_score, F1Mode};
use roundbuy::model::{DecodeMode, PolicyModel};
use roundbuy::state::StateInput;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    NotFound = 4,
    DataError = 5,
    Panic = 6,
}

/// Opaque weapon catalog.
pub struct RbCatalog {
    inner: Catalog,
}

/// Opaque trained policy.
pub struct RbPolicy {
    model: PolicyModel,
    params: ParamStore,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: impl Into<String>) {
    let text = message.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(text).ok());
}

fn clear_error() {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
}

fn fail(status: RbStatus, message: impl Into<String>) -> RbStatus {
    set_error(message);
    status
}

/// Runs `body`, turning a panic into [`RbStatus::Panic`].
fn guard(body: impl FnOnce() -> RbStatus) -> RbStatus {
    clear_error();
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(status) => status,
        Err(_) => fail(RbStatus::Panic, "internal panic"),
    }
}

unsafe fn slice<'a, T>(ptr: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if ptr.is_null() {
        None
    } else {
        // SAFETY: the caller guarantees `len` readable elements at `ptr`.
        Some(unsafe { std::slice::from_raw_parts(ptr, len) })
    }
}

unsafe fn c_str<'a>(ptr: *const c_char) -> Result<&'a str, RbStatus> {
    if ptr.is_null() {
        return Err(fail(RbStatus::NullPointer, "string argument is null"));
    }
    // SAFETY: the caller guarantees a NUL-terminated string.
    unsafe { CStr::from_ptr(ptr) }
        .to_str()
        .map_err(|_| fail(RbStatus::InvalidArgument, "string argument is not UTF-8"))
}

/// Copies `values` into the caller's buffer, always reporting the needed
/// length through `out_len`.
unsafe fn write_out(values: &[usize], out: *mut usize, capacity: usize, out_len: *mut usize) -> RbStatus {
    if out_len.is_null() {
        return fail(RbStatus::NullPointer, "out_len is null");
    }
    // SAFETY: checked non-null; the caller owns the location.
    unsafe { *out_len = values.len() };
    if values.len() > capacity {
        return fail(
            RbStatus::BufferTooSmall,
            format!("need room for {} actions, buffer holds {capacity}", values.len()),
        );
    }
    if values.is_empty() {
        return RbStatus::Ok;
    }
    if out.is_null() {
        return fail(RbStatus::NullPointer, "output buffer is null");
    }
    // SAFETY: the caller guarantees `capacity` writable elements at `out`.
    unsafe { std::ptr::copy_nonoverlapping(values.as_ptr(), out, values.len()) };
    RbStatus::Ok
}

/// Message of the last failed call on this thread, or NULL. The pointer
/// stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn rb_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn rb_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Creates a handle to the bundled 44-weapon catalog.
///
/// # Safety
/// `out` must be a valid location for one pointer.
#[no_mangle]
pub unsafe extern "C" fn rb_catalog_default(out: *mut *mut RbCatalog) -> RbStatus {
    guard(|| {
        if out.is_null() {
            return fail(RbStatus::NullPointer, "out is null");
        }
        let handle = Box::new(RbCatalog {
            inner: Catalog::default_fixture(),
        });
        // SAFETY: checked non-null.
        unsafe { *out = Box::into_raw(handle) };
        RbStatus::Ok
    })
}

/// Parses a JSON catalog document.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid location for
/// one pointer.
#[no_mangle]
pub unsafe extern "C" fn rb_catalog_from_json(json: *const c_char, out: *mut *mut RbCatalog) -> RbStatus {
    guard(|| {
        if out.is_null() {
            return fail(RbStatus::NullPointer, "out is null");
        }
        // SAFETY: forwarded caller guarantee.
        let doc = match unsafe { c_str(json) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        match Catalog::from_json_str(doc) {
            Ok(inner) => {
                // SAFETY: checked non-null.
                unsafe { *out = Box::into_raw(Box::new(RbCatalog { inner })) };
                RbStatus::Ok
            }
            Err(e) => fail(RbStatus::DataError, e.to_string()),
        }
    })
}

/// Number of weapons; the action vocabulary adds End and Start after them.
///
/// # Safety
/// `catalog` must be a live handle and `out_len` a valid location.
#[no_mangle]
pub unsafe extern "C" fn rb_catalog_len(catalog: *const RbCatalog, out_len: *mut usize) -> RbStatus {
    guard(|| {
        if catalog.is_null() || out_len.is_null() {
            return fail(RbStatus::NullPointer, "catalog or out_len is null");
        }
        // SAFETY: checked non-null, caller guarantees liveness.
        unsafe { *out_len = (*catalog).inner.len() };
        RbStatus::Ok
    })
}

/// Price of weapon `id`.
///
/// # Safety
/// `catalog` must be a live handle and `out_price` a valid location.
#[no_mangle]
pub unsafe extern "C" fn rb_catalog_price(catalog: *const RbCatalog, id: usize, out_price: *mut i64) -> RbStatus {
    guard(|| {
        if catalog.is_null() || out_price.is_null() {
            return fail(RbStatus::NullPointer, "catalog or out_price is null");
        }
        // SAFETY: checked non-null, caller guarantees liveness.
        match unsafe { &(*catalog).inner }.get(id) {
            Some(w) => {
                // SAFETY: checked non-null.
                unsafe { *out_price = w.price };
                RbStatus::Ok
            }
            None => fail(RbStatus::InvalidArgument, format!("unknown weapon id {id}")),
        }
    })
}

/// Action id of End for this catalog.
///
/// # Safety
/// `catalog` must be a live handle and `out_id` a valid location.
#[no_mangle]
pub unsafe extern "C" fn rb_catalog_end_action(catalog: *const RbCatalog, out_id: *mut usize) -> RbStatus {
    guard(|| {
        if catalog.is_null() || out_id.is_null() {
            return fail(RbStatus::NullPointer, "catalog or out_id is null");
        }
        // SAFETY: checked non-null, caller guarantees liveness.
        unsafe { *out_id = (*catalog).inner.end_action() };
        RbStatus::Ok
    })
}

/// Releases a catalog handle. NULL is ignored.
///
/// # Safety
/// `catalog` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rb_catalog_free(catalog: *mut RbCatalog) {
    if !catalog.is_null() {
        // SAFETY: the handle came from Box::into_raw and is freed once.
        drop(unsafe { Box::from_raw(catalog) });
    }
}

/// Greedy purchase for `cash` and the held weapons `inventory`. Writes the
/// action ids, End included, to `out_actions`; `out_len` always receives
/// the required length.
///
/// # Safety
/// `catalog` must be a live handle, `inventory` must hold `inventory_len`
/// ids, `out_actions` must have room for `capacity` ids and `out_len` must
/// be a valid location.
#[no_mangle]
pub unsafe extern "C" fn rb_greedy_purchase(
    catalog: *const RbCatalog,
    cash: i64,
    inventory: *const usize,
    inventory_len: usize,
    out_actions: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> RbStatus {
    guard(|| {
        if catalog.is_null() {
            return fail(RbStatus::NullPointer, "catalog is null");
        }
        // SAFETY: checked non-null, caller guarantees liveness.
        let cat = unsafe { &(*catalog).inner };
        // SAFETY: forwarded caller guarantee.
        let Some(held) = (unsafe { slice(inventory, inventory_len) }) else {
            return fail(RbStatus::NullPointer, "inventory is null");
        };
        if cash < 0 {
            return fail(RbStatus::InvalidArgument, "cash is negative");
        }
        let inv = Inventory::from_ids(held);
        if let Err(e) = cat.check_inventory(&inv) {
            return fail(RbStatus::InvalidArgument, e.to_string());
        }
        let seq = greedy_purchase(cat, cash, &inv);
        // SAFETY: forwarded caller guarantee.
        unsafe { write_out(seq.actions(), out_actions, capacity, out_len) }
    })
}

/// F1 between two purchase lists of weapon ids. `multiset` counts
/// duplicates; otherwise duplicates collapse.
///
/// # Safety
/// `pred` and `truth` must hold `pred_len` and `truth_len` ids and `out`
/// must be a valid location.
#[no_mangle]
pub unsafe extern "C" fn rb_f1(
    pred: *const usize,
    pred_len: usize,
    truth: *const usize,
    truth_len: usize,
    multiset: bool,
    out: *mut f64,
) -> RbStatus {
    guard(|| {
        // SAFETY: forwarded caller guarantee.
        let (Some(p), Some(t)) = (unsafe { slice(pred, pred_len) }, unsafe { slice(truth, truth_len) }) else {
            return fail(RbStatus::NullPointer, "pred or truth is null");
        };
        if out.is_null() {
            return fail(RbStatus::NullPointer, "out is null");
        }
        let mode = if multiset { F1Mode::Multiset } else { F1Mode::Set };
        // SAFETY: checked non-null.
        unsafe { *out = f1_score(p, t, mode) };
        RbStatus::Ok
    })
}

/// Loads a checkpoint written by `roundbuy train`, with its sidecar.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid location for
/// one pointer.
#[no_mangle]
pub unsafe extern "C" fn rb_policy_load(path: *const c_char, out: *mut *mut RbPolicy) -> RbStatus {
    guard(|| {
        if out.is_null() {
            return fail(RbStatus::NullPointer, "out is null");
        }
        // SAFETY: forwarded caller guarantee.
        let path = match unsafe { c_str(path) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        match load_checkpoint(Path::new(path)) {
            Ok(LoadedCheckpoint { model, params, .. }) => {
                // SAFETY: checked non-null.
                unsafe { *out = Box::into_raw(Box::new(RbPolicy { model, params })) };
                RbStatus::Ok
            }
            Err(CliError::Usage(m)) => fail(RbStatus::NotFound, m),
            Err(e) => fail(RbStatus::DataError, e.to_string()),
        }
    })
}

/// Greedy purchase sequence for one state given as a JSON document with
/// fields `own_weapons`, `team_weapons`, `opp_weapons`, `money`, `history`
/// and `budget`.
///
/// # Safety
/// `policy` must be a live handle, `state_json` a NUL-terminated string,
/// `out_actions` must have room for `capacity` ids and `out_len` must be a
/// valid location.
#[no_mangle]
pub unsafe extern "C" fn rb_policy_generate(
    policy: *const RbPolicy,
    state_json: *const c_char,
    out_actions: *mut usize,
    capacity: usize,
    out_len: *mut usize,
) -> RbStatus {
    guard(|| {
        if policy.is_null() {
            return fail(RbStatus::NullPointer, "policy is null");
        }
        // SAFETY: checked non-null, caller guarantees liveness.
        let policy = unsafe { &*policy };
        // SAFETY: forwarded caller guarantee.
        let doc = match unsafe { c_str(state_json) } {
            Ok(s) => s,
            Err(status) => return status,
        };
        let state: StateInput = match serde_json::from_str(doc) {
            Ok(s) => s,
            Err(e) => return fail(RbStatus::InvalidArgument, format!("state: {e}")),
        };
        match policy.model.generate(&policy.params, &state, &mut DecodeMode::Greedy) {
            // SAFETY: forwarded caller guarantee.
            Ok(seq) => unsafe { write_out(seq.actions(), out_actions, capacity, out_len) },
            Err(e) => fail(RbStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Releases a policy handle. NULL is ignored.
///
/// # Safety
/// `policy` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn rb_policy_free(policy: *mut RbPolicy) {
    if !policy.is_null() {
        // SAFETY: the handle came from Box::into_raw and is freed once.
        drop(unsafe { Box::from_raw(policy) });
    }
}
