//! C ABI over the artic toolkit.
//!
//! Models and objects are opaque handles created by `*_load` functions and
//! released with the matching `*_free`. Every fallible call returns an
//! [`ArticStatus`]; on failure, [`artic_last_error`] describes the problem.
//! Strings returned through out-parameters are owned by the caller and must
//! be released with [`artic_string_free`]. Structured inputs and outputs are
//! JSON in the same shapes the HTTP service uses.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use serde_json::Value;

use artic::conditioning::load_feature_file;
use artic::dataset::{load_object, object_to_json, parse_object, ObjectRecord};
use artic::diffusion::{load_checkpoint, Denoiser, NoiseSchedule};
use artic::kinematics::{pose_parts, ArticulationState, ConnectivityGraph};
use artic::metrics::{aor, report, EvalConfig};
use artic::pipeline::{eval_object, generate, resolve_category, GenerateParams};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArticStatus {
    Ok = 0,
    /// A required pointer argument was null.
    NullArgument = 1,
    /// A string argument was not valid UTF-8.
    InvalidUtf8 = 2,
    /// A file could not be read.
    Io = 3,
    /// JSON or file contents could not be parsed.
    Parse = 4,
    /// Inputs parsed but violate a precondition.
    Invalid = 5,
    /// An output buffer is too small.
    BufferTooSmall = 6,
    /// An internal error that should not happen.
    Internal = 7,
}

/// A loaded denoiser checkpoint.
pub struct ArticModel {
    model: Denoiser,
    schedule: NoiseSchedule,
}

/// An articulated object with its mesh references.
pub struct ArticObject {
    rec: ObjectRecord,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(ArticStatus, String);

fn fail<T>(status: ArticStatus, msg: impl ToString) -> Result<T, Failure> {
    Err(Failure(status, msg.to_string()))
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).expect("nul bytes removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ArticStatus {
    set_error("");
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ArticStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            ArticStatus::Internal
        }
    }
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return fail(ArticStatus::NullArgument, format!("{name} is null"));
    }
    CStr::from_ptr(p)
        .to_str()
        .or_else(|_| fail(ArticStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

/// # Safety
/// `p` is null or a valid NUL-terminated string.
unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

/// # Safety
/// `p` is null or points to a live `T`.
unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure(ArticStatus::NullArgument, format!("{name} is null")))
}

fn check_out<T>(out: *mut T, name: &str) -> Result<(), Failure> {
    if out.is_null() {
        fail(ArticStatus::NullArgument, format!("{name} is null"))
    } else {
        Ok(())
    }
}

/// # Safety
/// `out` is non-null and writable.
unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).or_else(|_| fail(ArticStatus::Internal, "output contains a nul byte"))?;
    *out = c.into_raw();
    Ok(())
}

fn parse_json(text: &str, what: &str) -> Result<Value, Failure> {
    serde_json::from_str(text).or_else(|e| fail(ArticStatus::Parse, format!("{what}: {e}")))
}

fn aoj_value(rec: &ObjectRecord) -> Value {
    serde_json::from_str(&object_to_json(rec)).expect("serializer emits JSON")
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn artic_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn artic_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Releases a string returned by this library. Null is ignored.
///
/// # Safety
/// `s` is null or came from this library and was not freed before.
#[no_mangle]
pub unsafe extern "C" fn artic_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a safetensors checkpoint.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn artic_model_load(path: *const c_char, out: *mut *mut ArticModel) -> ArticStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        check_out(out, "out")?;
        if !Path::new(path).is_file() {
            return fail(ArticStatus::Io, format!("{path}: no such file"));
        }
        let model = load_checkpoint(Path::new(path)).or_else(|e| fail(ArticStatus::Parse, e))?;
        let schedule = model.config().schedule().or_else(|e| fail(ArticStatus::Invalid, e))?;
        *out = Box::into_raw(Box::new(ArticModel { model, schedule }));
        Ok(())
    })
}

/// # Safety
/// `m` is null or a handle from [`artic_model_load`] not freed before.
#[no_mangle]
pub unsafe extern "C" fn artic_model_free(m: *mut ArticModel) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// Reads, validates and normalizes an AOJ file.
///
/// # Safety
/// `path` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn artic_object_load(path: *const c_char, out: *mut *mut ArticObject) -> ArticStatus {
    guard(|| {
        let path = str_arg(path, "path")?;
        check_out(out, "out")?;
        if !Path::new(path).is_file() {
            return fail(ArticStatus::Io, format!("{path}: no such file"));
        }
        let rec = load_object(Path::new(path)).or_else(|e| fail(ArticStatus::Invalid, e))?;
        *out = Box::into_raw(Box::new(ArticObject { rec }));
        Ok(())
    })
}

/// Parses and validates AOJ text without renormalizing it. Relative mesh
/// paths resolve against the working directory.
///
/// # Safety
/// `json` is a NUL-terminated string; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn artic_object_from_json(json: *const c_char, out: *mut *mut ArticObject) -> ArticStatus {
    guard(|| {
        let json = str_arg(json, "json")?;
        check_out(out, "out")?;
        let rec = parse_object(json, Path::new(".")).or_else(|e| fail(ArticStatus::Parse, e))?;
        rec.object.validate().or_else(|e| fail(ArticStatus::Invalid, e))?;
        *out = Box::into_raw(Box::new(ArticObject { rec }));
        Ok(())
    })
}

/// # Safety
/// `o` is null or a live object handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn artic_object_free(o: *mut ArticObject) {
    if !o.is_null() {
        drop(Box::from_raw(o));
    }
}

/// Number of parts, or 0 for a null handle.
///
/// # Safety
/// `o` is null or a live object handle.
#[no_mangle]
pub unsafe extern "C" fn artic_object_part_count(o: *const ArticObject) -> usize {
    o.as_ref().map_or(0, |o| o.rec.object.len())
}

/// AOJ text of the object.
///
/// # Safety
/// `o` is a live object handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn artic_object_to_json(o: *const ArticObject, out: *mut *mut c_char) -> ArticStatus {
    guard(|| {
        let o = handle(o, "object")?;
        check_out(out, "out")?;
        write_string(out, object_to_json(&o.rec))
    })
}

/// World poses with every joint at normalized coordinate `q`: one row-major
/// 4x4 matrix per part, in part order, so `out` needs `16 * part_count`
/// doubles.
///
/// # Safety
/// `o` is a live object handle; `out` points to `capacity` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn artic_object_pose(o: *const ArticObject, q: f64, out: *mut f64, capacity: usize) -> ArticStatus {
    guard(|| {
        let o = handle(o, "object")?;
        check_out(out, "out")?;
        let obj = &o.rec.object;
        let need = 16 * obj.len();
        if capacity < need {
            return fail(ArticStatus::BufferTooSmall, format!("need {need} doubles, got {capacity}"));
        }
        let poses = pose_parts(obj, &ArticulationState::uniform(obj, q)).or_else(|e| fail(ArticStatus::Invalid, e))?;
        let buf = std::slice::from_raw_parts_mut(out, need);
        for (k, p) in obj.parts.iter().enumerate() {
            let m = poses[&p.id].to_homogeneous();
            for r in 0..4 {
                for c in 0..4 {
                    buf[16 * k + 4 * r + c] = m[(r, c)];
                }
            }
        }
        Ok(())
    })
}

/// Articulation overlap ratio in [0, 1].
///
/// # Safety
/// `o` is a live object handle; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn artic_object_aor(o: *const ArticObject, out: *mut f64) -> ArticStatus {
    guard(|| {
        let o = handle(o, "object")?;
        check_out(out, "out")?;
        *out = aor(&o.rec.object).or_else(|e| fail(ArticStatus::Invalid, e))?;
        Ok(())
    })
}

/// Metric report JSON comparing `gen` with `gt`. `config_json` may be null
/// for the default evaluation settings.
///
/// # Safety
/// Handles are live; `config_json` is null or NUL-terminated; `out` is
/// writable.
#[no_mangle]
pub unsafe extern "C" fn artic_evaluate(
    gen: *const ArticObject,
    gt: *const ArticObject,
    config_json: *const c_char,
    out: *mut *mut c_char,
) -> ArticStatus {
    guard(|| {
        let (gen, gt) = (handle(gen, "gen")?, handle(gt, "gt")?);
        check_out(out, "out")?;
        let cfg: EvalConfig = match opt_str_arg(config_json, "config_json")? {
            Some(text) => serde_json::from_value(parse_json(text, "config_json")?)
                .or_else(|e| fail(ArticStatus::Parse, format!("config_json: {e}")))?,
            None => EvalConfig::default(),
        };
        let load = |r: &ObjectRecord| eval_object(r.clone()).or_else(|e| fail(ArticStatus::Invalid, e));
        let rep = report(&gt.rec.id, &load(&gen.rec)?, &load(&gt.rec)?, &cfg).or_else(|e| fail(ArticStatus::Invalid, e))?;
        write_string(out, serde_json::to_string(&rep).expect("serializable"))
    })
}

/// Samples objects. `request_json` holds `graph` (required), optional
/// `features` (path to a feature file) and `category`, and the generation
/// parameters `omega`, `num_samples`, `seed` and `pins`. The result is a JSON
/// array of `{seed, object, rows}`.
///
/// # Safety
/// `model` is live; `request_json` is NUL-terminated; `out` is writable.
#[no_mangle]
pub unsafe extern "C" fn artic_generate(
    model: *const ArticModel,
    request_json: *const c_char,
    out: *mut *mut c_char,
) -> ArticStatus {
    guard(|| {
        let m = handle(model, "model")?;
        check_out(out, "out")?;
        let req = parse_json(str_arg(request_json, "request_json")?, "request_json")?;
        let graph: ConnectivityGraph = match req.get("graph") {
            Some(g) => serde_json::from_value(g.clone()).or_else(|e| fail(ArticStatus::Parse, format!("graph: {e}")))?,
            None => return fail(ArticStatus::Invalid, "request has no graph"),
        };
        let params: GenerateParams =
            serde_json::from_value(req.clone()).or_else(|e| fail(ArticStatus::Parse, format!("params: {e}")))?;
        let features = match req.get("features").and_then(Value::as_str) {
            Some(p) => Some(load_feature_file(Path::new(p)).or_else(|e| fail(ArticStatus::Io, e))?),
            None => None,
        };
        let category = resolve_category(req.get("category").and_then(Value::as_str))
            .or_else(|e| fail(ArticStatus::Invalid, e))?;
        let samples = generate(&m.model, &m.schedule, &graph, features, category, &params)
            .or_else(|e| fail(ArticStatus::Invalid, e))?;
        let body: Vec<Value> = samples
            .into_iter()
            .map(|s| {
                let rec = ObjectRecord::new(format!("sample-{}", s.seed), s.object);
                serde_json::json!({"seed": s.seed, "object": aoj_value(&rec), "rows": s.rows})
            })
            .collect();
        write_string(out, Value::Array(body).to_string())
    })
}
