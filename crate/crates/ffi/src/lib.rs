//! C ABI for the nudgeloc localization engine.
//!
//! All objects are opaque handles created by `nl_*_new`/`nl_*_load`
//! functions and released with the matching `nl_*_free`. Every fallible
//! function returns an [`NlStatus`]; on failure a message is available from
//! [`nl_last_error`] on the same thread.
//!
//! Poses are 12 doubles: the rotation matrix row by row, then the
//! translation. Images are interleaved RGB floats in `[0, 1]`, row-major
//! from the top-left pixel.

use nudgeloc::filter::{Filter, FilterConfig, Mode, ParticleSet};
use nudgeloc::geometry::Pose;
use nudgeloc::harness::stream_rng;
use nudgeloc::image::{CameraIntrinsics, Image};
use nudgeloc::scene::{Renderer, SceneModel};
use nudgeloc::vpr::{build_anchor_db, AnchorDatabase, GridSpec};
use rand_chacha::ChaCha8Rng;
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

/// Result codes.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Config = 3,
    Io = 4,
    Format = 5,
    Filter = 6,
    /// The filter has no particles yet; call an init function first.
    NotInitialized = 7,
    BufferTooSmall = 8,
    Panic = 99,
}

/// Filter mode reported in [`NlFrame`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NlMode {
    Global = 0,
    Tracking = 1,
}

impl From<Mode> for NlMode {
    fn from(m: Mode) -> Self {
        match m {
            Mode::Global => NlMode::Global,
            Mode::Tracking => NlMode::Tracking,
        }
    }
}

/// Camera intrinsics.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NlIntrinsics {
    pub width: usize,
    pub height: usize,
    /// Horizontal field of view in radians.
    pub horizontal_fov: f64,
}

impl From<NlIntrinsics> for CameraIntrinsics {
    fn from(k: NlIntrinsics) -> Self {
        CameraIntrinsics {
            width: k.width,
            height: k.height,
            horizontal_fov: k.horizontal_fov,
        }
    }
}

/// Per-frame filter output.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct NlFrame {
    pub frame: usize,
    pub mode: NlMode,
    pub next_mode: NlMode,
    pub estimate: [f64; 12],
    pub sigma2: f64,
    pub nudge_accepted: usize,
    pub kidnap: bool,
    pub wall_ms: f64,
}

/// Opaque scene handle.
pub struct NlScene(SceneModel);

/// Opaque anchor database handle.
pub struct NlDatabase(AnchorDatabase);

/// Opaque filter handle. Owns copies of the scene and database.
pub struct NlFilter {
    cfg: FilterConfig,
    scene: SceneModel,
    db: Option<AnchorDatabase>,
    set: Option<ParticleSet>,
    rng: ChaCha8Rng,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(msg).unwrap_or_default());
}

fn fail(status: NlStatus, msg: impl Into<String>) -> NlStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> NlStatus) -> NlStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(_) => fail(NlStatus::Panic, "internal panic"),
    }
}

unsafe fn c_str<'a>(p: *const c_char) -> Result<&'a str, NlStatus> {
    if p.is_null() {
        return Err(fail(NlStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(NlStatus::InvalidArgument, "string is not UTF-8"))
}

unsafe fn pose_in(p: *const f64) -> Result<Pose, NlStatus> {
    if p.is_null() {
        return Err(fail(NlStatus::NullPointer, "null pose"));
    }
    let v: [f64; 12] = std::slice::from_raw_parts(p, 12).try_into().unwrap();
    let pose = Pose::from_row_major(&v);
    if !pose.is_valid(1e-6) {
        return Err(fail(NlStatus::InvalidArgument, "pose rotation is not orthonormal"));
    }
    Ok(pose)
}

fn intrinsics(k: NlIntrinsics) -> Result<CameraIntrinsics, NlStatus> {
    let k: CameraIntrinsics = k.into();
    k.validate().map_err(|e| fail(NlStatus::InvalidArgument, e.to_string()))?;
    Ok(k)
}

unsafe fn out_ptr<T>(out: *mut *mut T, value: T) -> NlStatus {
    *out = Box::into_raw(Box::new(value));
    NlStatus::Ok
}

macro_rules! try_status {
    ($e:expr) => {
        match $e {
            Ok(v) => v,
            Err(s) => return s,
        }
    };
}

macro_rules! non_null {
    ($($p:ident),+) => {
        $(if $p.is_null() {
            return fail(NlStatus::NullPointer, concat!("null ", stringify!($p)));
        })+
    };
}

/// Copies the last error message of this thread into `buf` (NUL
/// terminated, truncated to `len`). Returns the full message length.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn nl_last_error(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let bytes = e.borrow();
        let bytes = bytes.as_bytes();
        if !buf.is_null() && len > 0 {
            let n = bytes.len().min(len - 1);
            std::ptr::copy_nonoverlapping(bytes.as_ptr() as *const c_char, buf, n);
            *buf.add(n) = 0;
        }
        bytes.len()
    })
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn nl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr() as *const c_char
}

/// The reference room with texture seed `seed`.
///
/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nl_scene_default(seed: u64, out: *mut *mut NlScene) -> NlStatus {
    guard(|| {
        non_null!(out);
        out_ptr(out, NlScene(SceneModel::default_room(seed)))
    })
}

/// Scene from its JSON description.
///
/// # Safety
/// `json` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nl_scene_from_json(json: *const c_char, out: *mut *mut NlScene) -> NlStatus {
    guard(|| {
        non_null!(out);
        let text = try_status!(c_str(json));
        match SceneModel::from_json(text) {
            Ok(s) => out_ptr(out, NlScene(s)),
            Err(e) => fail(NlStatus::Format, e.to_string()),
        }
    })
}

/// # Safety
/// `scene` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nl_scene_free(scene: *mut NlScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

/// Renders `scene` from `pose` into `rgb`, which must hold
/// `3 * width * height` floats.
///
/// # Safety
/// Pointers must be valid; `rgb` must be writable for `rgb_len` floats.
#[no_mangle]
pub unsafe extern "C" fn nl_render(
    scene: *const NlScene,
    pose: *const f64,
    k: NlIntrinsics,
    with_artifacts: bool,
    rgb: *mut f32,
    rgb_len: usize,
) -> NlStatus {
    guard(|| {
        non_null!(scene, rgb);
        let pose = try_status!(pose_in(pose));
        let k = try_status!(intrinsics(k));
        if rgb_len < 3 * k.pixel_count() {
            return fail(NlStatus::BufferTooSmall, format!("need {} floats", 3 * k.pixel_count()));
        }
        let spec = nudgeloc::scene::ArtifactSpec::default();
        let renderer = Renderer::new(&(*scene).0, with_artifacts.then_some(&spec));
        let img = renderer.render(&pose, &k);
        std::ptr::copy_nonoverlapping(img.data().as_ptr(), rgb, img.data().len());
        NlStatus::Ok
    })
}

/// Builds an anchor database. `dense` selects the 2502-anchor grid,
/// otherwise the 504-anchor grid. Floaters follow the default filter
/// configuration.
///
/// # Safety
/// `scene` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn nl_database_build(
    scene: *const NlScene,
    dense: bool,
    k: NlIntrinsics,
    out: *mut *mut NlDatabase,
) -> NlStatus {
    guard(|| {
        non_null!(scene, out);
        let k = try_status!(intrinsics(k));
        let grid = if dense { GridSpec::anchors_2502() } else { GridSpec::anchors_504() };
        let artifacts = FilterConfig::default().artifacts;
        match build_anchor_db(&(*scene).0, &grid, &k, artifacts.as_ref()) {
            Ok(db) => out_ptr(out, NlDatabase(db)),
            Err(e) => fail(NlStatus::Config, e.to_string()),
        }
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn nl_database_load(path: *const c_char, out: *mut *mut NlDatabase) -> NlStatus {
    guard(|| {
        non_null!(out);
        let path = try_status!(c_str(path));
        match AnchorDatabase::load(Path::new(path)) {
            Ok(db) => out_ptr(out, NlDatabase(db)),
            Err(nudgeloc::vpr::VprError::Io(e)) => fail(NlStatus::Io, e.to_string()),
            Err(e) => fail(NlStatus::Format, e.to_string()),
        }
    })
}

/// # Safety
/// `db` must be a valid handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn nl_database_save(db: *const NlDatabase, path: *const c_char) -> NlStatus {
    guard(|| {
        non_null!(db);
        let path = try_status!(c_str(path));
        match (*db).0.save(Path::new(path)) {
            Ok(()) => NlStatus::Ok,
            Err(e) => fail(NlStatus::Io, e.to_string()),
        }
    })
}

/// Number of anchors, or 0 for a null handle.
///
/// # Safety
/// `db` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn nl_database_len(db: *const NlDatabase) -> usize {
    if db.is_null() {
        0
    } else {
        (*db).0.len()
    }
}

/// # Safety
/// `db` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nl_database_free(db: *mut NlDatabase) {
    if !db.is_null() {
        drop(Box::from_raw(db));
    }
}

/// Creates a filter. `config_json` may be null for defaults; `db` may be
/// null to run without nudging. The scene and database are copied.
///
/// # Safety
/// Pointers must be null where allowed or valid otherwise.
#[no_mangle]
pub unsafe extern "C" fn nl_filter_new(
    scene: *const NlScene,
    db: *const NlDatabase,
    config_json: *const c_char,
    seed: u64,
    out: *mut *mut NlFilter,
) -> NlStatus {
    guard(|| {
        non_null!(scene, out);
        let cfg = if config_json.is_null() {
            FilterConfig::default()
        } else {
            let text = try_status!(c_str(config_json));
            match serde_json::from_str::<FilterConfig>(text) {
                Ok(c) => c,
                Err(e) => return fail(NlStatus::Config, e.to_string()),
            }
        };
        if let Err(e) = cfg.validate() {
            return fail(NlStatus::Config, e);
        }
        let db = (!db.is_null()).then(|| (*db).0.clone());
        out_ptr(
            out,
            NlFilter {
                cfg,
                scene: (*scene).0.clone(),
                db,
                set: None,
                rng: stream_rng(seed, 0),
            },
        )
    })
}

/// # Safety
/// `filter` must be null or a handle from this library, not used afterwards.
#[no_mangle]
pub unsafe extern "C" fn nl_filter_free(filter: *mut NlFilter) {
    if !filter.is_null() {
        drop(Box::from_raw(filter));
    }
}

fn make_filter<'a>(
    cfg: &FilterConfig,
    scene: &'a SceneModel,
    db: &'a Option<AnchorDatabase>,
) -> Result<Filter<'a>, NlStatus> {
    Filter::new(cfg.clone(), scene, db.as_ref()).map_err(|e| fail(NlStatus::Config, e.to_string()))
}

/// Spreads particles uniformly over the room.
///
/// # Safety
/// `filter` must be a valid handle.
#[no_mangle]
pub unsafe extern "C" fn nl_filter_init_global(filter: *mut NlFilter) -> NlStatus {
    guard(|| {
        non_null!(filter);
        let f = &mut *filter;
        let set = try_status!(make_filter(&f.cfg, &f.scene, &f.db)).init_global(&mut f.rng);
        f.set = Some(set);
        NlStatus::Ok
    })
}

/// Draws particles from the tracking prior around `pose`.
///
/// # Safety
/// `filter` must be a valid handle and `pose` point to 12 doubles.
#[no_mangle]
pub unsafe extern "C" fn nl_filter_init_tracking(filter: *mut NlFilter, pose: *const f64) -> NlStatus {
    guard(|| {
        non_null!(filter);
        let center = try_status!(pose_in(pose));
        let f = &mut *filter;
        let set = try_status!(make_filter(&f.cfg, &f.scene, &f.db)).init_tracking(&center, &mut f.rng);
        f.set = Some(set);
        NlStatus::Ok
    })
}

/// Runs one filter iteration on the camera image `rgb` (intrinsics `k`)
/// after the relative motion `odom`, writing the result to `out`.
///
/// # Safety
/// Pointers must be valid; `rgb` must hold `3 * k.width * k.height` floats.
#[no_mangle]
pub unsafe extern "C" fn nl_filter_step(
    filter: *mut NlFilter,
    rgb: *const f32,
    k: NlIntrinsics,
    odom: *const f64,
    out: *mut NlFrame,
) -> NlStatus {
    guard(|| {
        non_null!(filter, rgb, out);
        let k = try_status!(intrinsics(k));
        let odom = try_status!(pose_in(odom));
        let data = std::slice::from_raw_parts(rgb, 3 * k.pixel_count()).to_vec();
        let img = match Image::from_raw(k.width, k.height, data) {
            Ok(i) => i,
            Err(e) => return fail(NlStatus::InvalidArgument, e.to_string()),
        };
        let f = &mut *filter;
        let Some(mut set) = f.set.take() else {
            return fail(NlStatus::NotInitialized, "filter has no particles");
        };
        let result = {
            let filter = match make_filter(&f.cfg, &f.scene, &f.db) {
                Ok(x) => x,
                Err(s) => {
                    f.set = Some(set);
                    return s;
                }
            };
            filter.step(&mut set, &img, &k, &odom, &mut f.rng)
        };
        f.set = Some(set);
        match result {
            Ok(step) => {
                let r = step.record;
                *out = NlFrame {
                    frame: r.frame,
                    mode: r.mode.into(),
                    next_mode: r.next_mode.into(),
                    estimate: r.estimate.to_row_major(),
                    sigma2: r.sigma2,
                    nudge_accepted: r.nudge_accepted,
                    kidnap: r.kidnap,
                    wall_ms: r.wall_ms,
                };
                NlStatus::Ok
            }
            Err(e) => fail(NlStatus::Filter, e.to_string()),
        }
    })
}

/// Number of particles, or 0 before initialization.
///
/// # Safety
/// `filter` must be null or a valid handle.
#[no_mangle]
pub unsafe extern "C" fn nl_filter_particle_count(filter: *const NlFilter) -> usize {
    if filter.is_null() {
        return 0;
    }
    (*filter).set.as_ref().map_or(0, |s| s.len())
}
