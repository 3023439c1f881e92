//! C interface.
//!
//! Scenes and sessions are opaque handles created and freed here.
//! Functions that can fail return a status code (`TMPM_OK` on success)
//! and leave a message for `tmpm_last_error`, which is per thread and
//! valid until the next failing call on that thread. Constructors return
//! NULL on failure.
//!
//! The header `include/tactile_mpm.h` is generated at build time.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::{Path, PathBuf};
use std::ptr;

use tactile_mpm::bridge::{CommandMode, Session, SessionSpec, StepCommand, TerminalCondition};
use tactile_mpm::{dataset, Error, SceneConfig};

pub const TMPM_OK: i32 = 0;
/// Null pointer, invalid UTF-8 or an out-of-range enum value.
pub const TMPM_ERR_ARGUMENT: i32 = 1;
pub const TMPM_ERR_GRID_TOO_SMALL: i32 = 2;
pub const TMPM_ERR_EMPTY_SCENE: i32 = 3;
pub const TMPM_ERR_OUT_OF_GRID: i32 = 4;
pub const TMPM_ERR_DEGENERATE_F: i32 = 5;
pub const TMPM_ERR_PARSE: i32 = 6;
pub const TMPM_ERR_EMPTY_CLOUD: i32 = 7;
pub const TMPM_ERR_NO_SURFACE: i32 = 8;
pub const TMPM_ERR_CROP_OUT_OF_BOUNDS: i32 = 9;
pub const TMPM_ERR_SHAPE_MISMATCH: i32 = 10;
pub const TMPM_ERR_SESSION_NOT_INITIALIZED: i32 = 11;
pub const TMPM_ERR_NON_MONOTONIC_TIME: i32 = 12;
pub const TMPM_ERR_PROTOCOL: i32 = 13;
pub const TMPM_ERR_MANIFEST_MISMATCH: i32 = 14;
pub const TMPM_ERR_CONFIG: i32 = 15;
pub const TMPM_ERR_IO: i32 = 16;
/// A Rust panic was caught at the boundary.
pub const TMPM_ERR_PANIC: i32 = 17;

/// `vector` is the indenter velocity, m/s.
pub const TMPM_MODE_VELOCITY: i32 = 0;
/// `vector` is the target indenter centroid, m.
pub const TMPM_MODE_POSITION: i32 = 1;

/// A scene configuration and the directory its relative paths resolve
/// against.
pub struct TmpmScene {
    config: SceneConfig,
    base: PathBuf,
}

pub struct TmpmSession {
    inner: Session,
    last_image: Option<CString>,
}

#[repr(C)]
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct TmpmStepResult {
    pub step: u64,
    pub sim_time: f64,
    /// Indentation below the rest surface, m.
    pub depth: f64,
    /// Indenter centroid, m.
    pub position: [f64; 3],
    pub terminal: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(message: String) {
    let text = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(text));
}

struct Failure(i32, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure(e.code(), e.to_string())
    }
}

fn argument(message: &str) -> Failure {
    Failure(TMPM_ERR_ARGUMENT, message.to_string())
}

/// Runs `f`, recording any failure or panic.
fn guard<T>(f: impl FnOnce() -> Result<T, Failure>) -> Result<T, i32> {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(v)) => Ok(v),
        Ok(Err(Failure(code, message))) => {
            set_error(message);
            Err(code)
        }
        Err(panic) => {
            let message = panic
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| panic.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {message}"));
            Err(TMPM_ERR_PANIC)
        }
    }
}

fn status(r: Result<(), i32>) -> i32 {
    r.err().unwrap_or(TMPM_OK)
}

unsafe fn text<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(argument(&format!("{what} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| argument(&format!("{what} is not UTF-8")))
}

unsafe fn optional_text<'a>(p: *const c_char, what: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        text(p, what).map(Some)
    }
}

fn boxed<T>(r: Result<T, i32>) -> *mut T {
    r.map_or(ptr::null_mut(), |v| Box::into_raw(Box::new(v)))
}

/// Message of the last failure on this thread, or NULL. Owned by the
/// library.
#[no_mangle]
pub extern "C" fn tmpm_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |s| s.as_ptr()))
}

/// Built-in scene: "default", "desk" or "tiny".
///
/// # Safety
/// `name` must be NULL or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tmpm_scene_preset(name: *const c_char) -> *mut TmpmScene {
    boxed(guard(|| {
        let config = match text(name, "name")? {
            "default" => SceneConfig::default(),
            "desk" => SceneConfig::desk(),
            "tiny" => SceneConfig::tiny(),
            other => return Err(argument(&format!("unknown preset {other:?}"))),
        };
        Ok(TmpmScene {
            config,
            base: PathBuf::from("."),
        })
    }))
}

/// Scene from a TOML file; relative paths in it resolve against the
/// file's directory.
///
/// # Safety
/// `path` must be NULL or a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tmpm_scene_load(path: *const c_char) -> *mut TmpmScene {
    boxed(guard(|| {
        let path = Path::new(text(path, "path")?);
        let config = SceneConfig::load(path)?;
        config.validate()?;
        Ok(TmpmScene {
            config,
            base: path.parent().map(Path::to_path_buf).unwrap_or_default(),
        })
    }))
}

/// Sets the output directory of sessions and datasets.
///
/// # Safety
/// `scene` must come from this library; `dir` must be NULL or a
/// NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn tmpm_scene_set_output_dir(scene: *mut TmpmScene, dir: *const c_char) -> i32 {
    status(guard(|| {
        let scene = scene.as_mut().ok_or_else(|| argument("scene is null"))?;
        scene.config.output_dir = PathBuf::from(text(dir, "dir")?);
        Ok(())
    }))
}

/// Runs the press-grid dataset of the scene and returns the number of
/// manifest rows through `rows`.
///
/// # Safety
/// `scene` must come from this library; `rows` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn tmpm_scene_run_dataset(scene: *const TmpmScene, rows: *mut usize) -> i32 {
    status(guard(|| {
        let scene = scene.as_ref().ok_or_else(|| argument("scene is null"))?;
        let summary = dataset::run_press_dataset(&scene.config, &scene.base)?;
        if let Some(r) = rows.as_mut() {
            *r = summary.rows.len();
        }
        Ok(())
    }))
}

/// # Safety
/// `scene` must be NULL or come from this library, and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn tmpm_scene_free(scene: *mut TmpmScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Starts a coupling session. `object` NULL picks the scene's first
/// indenter; `session_dir` NULL uses `<output_dir>/session`. A negative
/// `max_depth` or a zero `max_steps` disables that terminal condition;
/// `substeps` 0 picks the count from the scene's timestep. The scene may
/// be freed while the session lives.
///
/// # Safety
/// `scene` must come from this library; strings must be NULL or
/// NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn tmpm_session_new(
    scene: *const TmpmScene,
    object: *const c_char,
    offset_x: f64,
    offset_y: f64,
    control_dt: f64,
    substeps: usize,
    max_depth: f64,
    max_steps: u64,
    session_dir: *const c_char,
) -> *mut TmpmSession {
    boxed(guard(|| {
        let scene = scene.as_ref().ok_or_else(|| argument("scene is null"))?;
        let spec = SessionSpec {
            object: optional_text(object, "object")?.map(str::to_string),
            offset: [offset_x, offset_y],
            control_dt,
            substeps: (substeps > 0).then_some(substeps),
            terminal: TerminalCondition {
                max_depth: (max_depth >= 0.0).then_some(max_depth),
                max_steps: (max_steps > 0).then_some(max_steps),
            },
            session_dir: optional_text(session_dir, "session_dir")?.map(PathBuf::from),
        };
        let default_dir = scene.config.output_dir.join("session");
        let inner = Session::new(&scene.config, &spec, &scene.base, &default_dir)?;
        Ok(TmpmSession {
            inner,
            last_image: None,
        })
    }))
}

/// Applies one control step. With `request_image` set, the frame is
/// written as a PNG under the session directory; see
/// `tmpm_session_last_image`.
///
/// # Safety
/// `session` must come from this library; `vector` must point to three
/// doubles; `out` may be NULL.
#[no_mangle]
pub unsafe extern "C" fn tmpm_session_step(
    session: *mut TmpmSession,
    mode: i32,
    vector: *const f64,
    sim_time: f64,
    request_image: bool,
    out: *mut TmpmStepResult,
) -> i32 {
    status(guard(|| {
        let session = session.as_mut().ok_or_else(|| argument("session is null"))?;
        if vector.is_null() {
            return Err(argument("vector is null"));
        }
        let mode = match mode {
            TMPM_MODE_VELOCITY => CommandMode::Velocity,
            TMPM_MODE_POSITION => CommandMode::Position,
            m => return Err(argument(&format!("unknown mode {m}"))),
        };
        let v = std::slice::from_raw_parts(vector, 3);
        let reply = session.inner.handle_command(&StepCommand {
            mode,
            vector: [v[0], v[1], v[2]],
            sim_time,
            request_image,
        })?;
        session.last_image = reply
            .image
            .as_ref()
            .and_then(|p| CString::new(p.to_string_lossy().into_owned()).ok());
        if let Some(o) = out.as_mut() {
            *o = TmpmStepResult {
                step: reply.step,
                sim_time: reply.sim_time,
                depth: reply.depth,
                position: reply.position,
                terminal: reply.terminal,
            };
        }
        Ok(())
    }))
}

/// Current indentation below the rest surface, m; NaN for a null
/// session.
///
/// # Safety
/// `session` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn tmpm_session_depth(session: *const TmpmSession) -> f64 {
    session.as_ref().map_or(f64::NAN, |s| s.inner.depth())
}

/// Physics timestep of the session, s; NaN for a null session.
///
/// # Safety
/// `session` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn tmpm_session_dt(session: *const TmpmSession) -> f64 {
    session.as_ref().map_or(f64::NAN, |s| s.inner.dt())
}

/// Path of the image written by the last step, or NULL. Valid until the
/// next step or free.
///
/// # Safety
/// `session` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn tmpm_session_last_image(session: *const TmpmSession) -> *const c_char {
    session
        .as_ref()
        .and_then(|s| s.last_image.as_ref())
        .map_or(ptr::null(), |p| p.as_ptr())
}

/// # Safety
/// `session` must be NULL or come from this library, and not be used
/// afterwards.
#[no_mangle]
pub unsafe extern "C" fn tmpm_session_free(session: *mut TmpmSession) {
    if !session.is_null() {
        drop(Box::from_raw(session));
    }
}
