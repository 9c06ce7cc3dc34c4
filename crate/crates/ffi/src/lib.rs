//! C ABI over the layoutgraph engine.
//!
//! Conventions:
//! - every fallible call returns an [`LgStatus`]; on failure a message is
//!   available from [`lg_last_error_message`] on the same thread;
//! - strings in are NUL-terminated UTF-8; strings out are allocated here and
//!   must be released with [`lg_string_free`];
//! - handles (`LgModel`, `LgLayout`) are opaque and released with their
//!   `_free` function. A model may be shared across threads for reading; a
//!   layout must not be used from two threads at once.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use layoutgraph::autocomplete::{accept, Suggester};
use layoutgraph::error::LayoutError;
use layoutgraph::extract::{extract_placed, ExtractionConfig};
use layoutgraph::model::{constraints_to_json, gui_from_json, gui_to_json, BBox, Gui};
use layoutgraph::network::Network;
use layoutgraph::tasks::classify;

/// Result of every fallible call.
#[allow(non_camel_case_types)]
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LgStatus {
    LG_OK = 0,
    /// A required pointer argument was NULL.
    LG_ERR_NULL = 1,
    /// A string argument was not valid UTF-8.
    LG_ERR_UTF8 = 2,
    /// Malformed JSON or an unknown option value.
    LG_ERR_PARSE = 3,
    /// Well-formed input that breaks a rule (unknown element, out-of-canvas box, ...).
    LG_ERR_VALIDATION = 4,
    LG_ERR_IO = 5,
    /// Unreadable checkpoint or a model unfit for the request.
    LG_ERR_MODEL = 6,
    /// A bug: a panic or an unexpected internal failure.
    LG_ERR_INTERNAL = 7,
}

/// A loaded checkpoint.
pub struct LgModel {
    net: Network,
}

/// A GUI being completed.
pub struct LgLayout {
    gui: Gui,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

struct Fail(LgStatus, String);

impl From<LayoutError> for Fail {
    fn from(e: LayoutError) -> Self {
        let status = match &e {
            LayoutError::Parse(_) => LgStatus::LG_ERR_PARSE,
            LayoutError::Io(_) => LgStatus::LG_ERR_IO,
            LayoutError::Checkpoint(_) | LayoutError::Shape(_) => LgStatus::LG_ERR_MODEL,
            LayoutError::NonFinite(_) => LgStatus::LG_ERR_INTERNAL,
            _ => LgStatus::LG_ERR_VALIDATION,
        };
        Fail(status, e.to_string())
    }
}

/// Runs `f`, converting errors and panics into a status plus message.
fn guard(f: impl FnOnce() -> Result<(), Fail>) -> LgStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            LgStatus::LG_OK
        }
        Ok(Err(Fail(s, m))) => {
            set_error(&m);
            s
        }
        Err(p) => {
            let m = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(&format!("internal error: {m}"));
            LgStatus::LG_ERR_INTERNAL
        }
    }
}

fn null(what: &str) -> Fail {
    Fail(LgStatus::LG_ERR_NULL, format!("`{what}` is NULL"))
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|e| Fail(LgStatus::LG_ERR_UTF8, format!("`{what}`: {e}")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Fail> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, what).map(Some)
    }
}

unsafe fn out_string(out: *mut *mut c_char, s: String) -> Result<(), Fail> {
    let c = CString::new(s).map_err(|e| Fail(LgStatus::LG_ERR_INTERNAL, e.to_string()))?;
    *out = c.into_raw();
    Ok(())
}

fn json<T: serde::Serialize>(v: &T) -> Result<String, Fail> {
    serde_json::to_string(v).map_err(|e| Fail(LgStatus::LG_ERR_INTERNAL, e.to_string()))
}

/// Library version, a static string.
#[no_mangle]
pub extern "C" fn lg_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread ("" after a success).
/// Valid until the next call on this thread.
#[no_mangle]
pub extern "C" fn lg_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. NULL is ignored.
///
/// # Safety
/// `s` must come from this library and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lg_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a checkpoint file.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_model_load(path: *const c_char, out: *mut *mut LgModel) -> LgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = str_arg(path, "path")?;
        let net = Network::load(Path::new(p)).map_err(|e| match e {
            LayoutError::Io(_) => Fail::from(e),
            other => Fail(LgStatus::LG_ERR_MODEL, other.to_string()),
        })?;
        *out = Box::into_raw(Box::new(LgModel { net }));
        Ok(())
    })
}

/// Checkpoint metadata as JSON.
///
/// # Safety
/// `model` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_model_info(model: *const LgModel, out_json: *mut *mut c_char) -> LgStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        out_string(out_json, m.net.info().to_string())
    })
}

/// Releases a model. NULL is ignored.
///
/// # Safety
/// `model` must come from [`lg_model_load`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lg_model_free(model: *mut LgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Parses and validates a GUI.
///
/// # Safety
/// `gui_json` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_layout_new(gui_json: *const c_char, out: *mut *mut LgLayout) -> LgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let gui = gui_from_json(str_arg(gui_json, "gui_json")?.as_bytes())?;
        *out = Box::into_raw(Box::new(LgLayout { gui }));
        Ok(())
    })
}

/// Places an unplaced element at the given box (inside the canvas).
///
/// # Safety
/// `layout` must be a live handle; `element_id` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn lg_layout_accept(
    layout: *mut LgLayout,
    element_id: *const c_char,
    x: i64,
    y: i64,
    w: i64,
    h: i64,
) -> LgStatus {
    guard(|| {
        let l = layout.as_mut().ok_or_else(|| null("layout"))?;
        let id = str_arg(element_id, "element_id")?;
        l.gui = accept(&l.gui, id, BBox::new(x, y, w, h)?)?;
        Ok(())
    })
}

/// The layout's canonical JSON.
///
/// # Safety
/// `layout` must be a live handle; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_layout_to_json(layout: *const LgLayout, out_json: *mut *mut c_char) -> LgStatus {
    guard(|| {
        let l = layout.as_ref().ok_or_else(|| null("layout"))?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        out_string(out_json, String::from_utf8(gui_to_json(&l.gui)).expect("utf-8 json"))
    })
}

/// Releases a layout. NULL is ignored.
///
/// # Safety
/// `layout` must come from [`lg_layout_new`] and not have been freed.
#[no_mangle]
pub unsafe extern "C" fn lg_layout_free(layout: *mut LgLayout) {
    if !layout.is_null() {
        drop(Box::from_raw(layout));
    }
}

/// Constraints among a GUI's placed elements, as a JSON array. `tol < 0`
/// uses the default tolerance.
///
/// # Safety
/// `gui_json` must be a NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_extract_constraints(gui_json: *const c_char, tol: i64, out_json: *mut *mut c_char) -> LgStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let gui = gui_from_json(str_arg(gui_json, "gui_json")?.as_bytes())?;
        let mut cfg = ExtractionConfig::default();
        if tol >= 0 {
            cfg.tol = tol;
        }
        let cs = extract_placed(&gui, &cfg)?;
        out_string(out_json, String::from_utf8(constraints_to_json(&cs)).expect("utf-8 json"))
    })
}

/// Suggestions as a JSON array. `mode` is "single", "group" or "all"
/// (NULL = "single"); `target` (may be NULL) forces the element in
/// single mode.
///
/// # Safety
/// `model` and `layout` must be live handles; strings NUL-terminated or
/// NULL where allowed; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_suggest(
    model: *const LgModel,
    layout: *const LgLayout,
    mode: *const c_char,
    target: *const c_char,
    out_json: *mut *mut c_char,
) -> LgStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let l = layout.as_ref().ok_or_else(|| null("layout"))?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let mode = opt_str_arg(mode, "mode")?.unwrap_or("single");
        let target = opt_str_arg(target, "target")?;
        let sg = Suggester::new(&m.net);
        let out = match (mode, target) {
            ("single", Some(t)) => vec![sg.suggest_for(&l.gui, t)?],
            ("single", None) => vec![sg.suggest_one(&l.gui)?],
            ("group" | "all", Some(_)) => {
                return Err(Fail(
                    LgStatus::LG_ERR_VALIDATION,
                    "`target` only applies to mode \"single\"".into(),
                ))
            }
            ("group", None) => sg.suggest_group(&l.gui)?,
            ("all", None) => sg.suggest_all(&l.gui)?,
            (other, _) => return Err(Fail(LgStatus::LG_ERR_PARSE, format!("unknown mode `{other}`"))),
        };
        out_string(out_json, json(&out)?)
    })
}

/// Topic prediction as JSON `{"topic": ..., "probabilities": [...]}`.
///
/// # Safety
/// `model` and `layout` must be live handles; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_classify(model: *const LgModel, layout: *const LgLayout, out_json: *mut *mut c_char) -> LgStatus {
    guard(|| {
        let m = model.as_ref().ok_or_else(|| null("model"))?;
        let l = layout.as_ref().ok_or_else(|| null("layout"))?;
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let c = classify(&m.net, &l.gui, &ExtractionConfig::default()).map_err(|e| match e {
            LayoutError::Validation(msg) => Fail(LgStatus::LG_ERR_MODEL, msg),
            other => other.into(),
        })?;
        out_string(out_json, json(&c)?)
    })
}

/// Validates a GUI and re-serialises it canonically (sorted keys, no
/// whitespace).
///
/// # Safety
/// `gui_json` must be a NUL-terminated string; `out_json` must be writable.
#[no_mangle]
pub unsafe extern "C" fn lg_gui_canonicalize(gui_json: *const c_char, out_json: *mut *mut c_char) -> LgStatus {
    guard(|| {
        if out_json.is_null() {
            return Err(null("out_json"));
        }
        let gui = gui_from_json(str_arg(gui_json, "gui_json")?.as_bytes())?;
        out_string(out_json, String::from_utf8(gui_to_json(&gui)).expect("utf-8 json"))
    })
}
