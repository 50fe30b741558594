//! C ABI over the `canopy` library.
//!
//! Every function returns an `int32_t` status (`CANOPY_OK` or one of the
//! `CANOPY_ERR_*` codes; the numeric values match the CLI exit codes) and
//! writes results through out-pointers. After a failure,
//! `canopy_last_error_message` returns a description for the calling thread.
//!
//! Objects are opaque handles created by `*_new`/`*_read`/... and released
//! with the matching `*_free`. Freeing NULL is a no-op.

use canopy::aos::{self, ReferenceCamera, View, ViewSet, Weighting};
use canopy::camera::{Intrinsics, Pose, WorldPlane};
use canopy::cli::{CliError, ErrorKind};
use canopy::fusion::FusionConfig;
use canopy::imgcore::{self, BBoxPx, Channel, ImagePlane};
use canopy::scenegen::{self, SceneDescription, SceneParams};
use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};

pub const CANOPY_OK: i32 = 0;
/// A required pointer argument was NULL.
pub const CANOPY_ERR_NULL: i32 = 1;
/// Invalid argument or configuration.
pub const CANOPY_ERR_CONFIG: i32 = 2;
pub const CANOPY_ERR_IO: i32 = 3;
/// Numerical or geometric degeneracy.
pub const CANOPY_ERR_NUMERICAL: i32 = 4;
/// Internal failure; the library caught a panic.
pub const CANOPY_ERR_INTERNAL: i32 = 5;

pub const CANOPY_CHANNEL_VISIBLE: i32 = 0;
pub const CANOPY_CHANNEL_THERMAL: i32 = 1;
pub const CANOPY_CHANNEL_FUSED: i32 = 2;
pub const CANOPY_CHANNEL_WEIGHT: i32 = 3;

/// Grayscale image handle.
pub struct CanopyImage(ImagePlane);

/// Scene description handle.
pub struct CanopyScene(SceneDescription);

/// Growable list of posed views, all of one channel.
pub struct CanopyViewSet(Vec<View>);

/// Pinhole camera: intrinsics plus world-to-camera pose `X_c = R X_w + t`.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CanopyCamera {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Row-major 3x3 rotation.
    pub rotation: [f64; 9],
    pub translation: [f64; 3],
}

#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CanopyFusionConfig {
    pub depth: u32,
    pub patch_size: u32,
    pub stride: u32,
    pub atoms_per_dim: u32,
    pub max_atoms: u32,
    pub tol: f64,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn null(what: &str) -> Self {
        Failure {
            code: CANOPY_ERR_NULL,
            message: format!("{what} is NULL"),
        }
    }

    fn config(message: impl Into<String>) -> Self {
        Failure {
            code: CANOPY_ERR_CONFIG,
            message: message.into(),
        }
    }
}

impl<E: Into<CliError>> From<E> for Failure {
    fn from(e: E) -> Self {
        let e: CliError = e.into();
        let code = match e.kind {
            ErrorKind::Config => CANOPY_ERR_CONFIG,
            ErrorKind::Io => CANOPY_ERR_IO,
            ErrorKind::Numerical => CANOPY_ERR_NUMERICAL,
        };
        Failure {
            code,
            message: e.message,
        }
    }
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|l| *l.borrow_mut() = c);
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> i32 {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_last_error("");
            CANOPY_OK
        }
        Ok(Err(e)) => {
            set_last_error(&e.message);
            e.code
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into());
            set_last_error(&format!("internal error: {msg}"));
            CANOPY_ERR_INTERNAL
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| Failure::null(what))
}

unsafe fn deref_mut<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or_else(|| Failure::null(what))
}

unsafe fn out<T>(p: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    p.write(value);
    Ok(())
}

unsafe fn string_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::config(format!("{what} is not valid UTF-8")))
}

fn channel(code: i32) -> Result<Channel, Failure> {
    match code {
        CANOPY_CHANNEL_VISIBLE => Ok(Channel::Visible),
        CANOPY_CHANNEL_THERMAL => Ok(Channel::Thermal),
        CANOPY_CHANNEL_FUSED => Ok(Channel::Fused),
        CANOPY_CHANNEL_WEIGHT => Ok(Channel::Weight),
        _ => Err(Failure::config(format!("unknown channel code {code}"))),
    }
}

fn code_of(c: Channel) -> i32 {
    match c {
        Channel::Visible => CANOPY_CHANNEL_VISIBLE,
        Channel::Thermal => CANOPY_CHANNEL_THERMAL,
        Channel::Fused => CANOPY_CHANNEL_FUSED,
        Channel::Weight => CANOPY_CHANNEL_WEIGHT,
    }
}

fn camera(c: &CanopyCamera) -> Result<(Intrinsics, Pose), Failure> {
    let intr = Intrinsics::new(c.fx, c.fy, c.cx, c.cy, c.width as usize, c.height as usize)?;
    let pose = Pose::from_slices(&c.rotation, &c.translation)?;
    Ok((intr, pose))
}

/// Box from 4 doubles: x_min, y_min, x_max, y_max.
unsafe fn bbox(p: *const f64, what: &str) -> Result<BBoxPx, Failure> {
    if p.is_null() {
        return Err(Failure::null(what));
    }
    let b = std::slice::from_raw_parts(p, 4);
    Ok(BBoxPx::new(b[0], b[1], b[2], b[3])?)
}

fn boxed<T>(value: T) -> *mut T {
    Box::into_raw(Box::new(value))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn canopy_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message for the last failed call on this thread; empty after a success.
/// Valid until the next call into the library from the same thread.
#[no_mangle]
pub extern "C" fn canopy_last_error_message() -> *const c_char {
    LAST_ERROR.with(|l| l.borrow().as_ptr())
}

// ---------------------------------------------------------------- images

/// Image of `width x height` zeros.
///
/// # Safety
/// `out` must be a valid pointer to write a handle to.
#[no_mangle]
pub unsafe extern "C" fn canopy_image_new(
    width: u32,
    height: u32,
    channel_code: i32,
    out: *mut *mut CanopyImage,
) -> i32 {
    guard(|| {
        let img = ImagePlane::new(width as usize, height as usize, channel(channel_code)?)?;
        unsafe { self::out(out, boxed(CanopyImage(img)), "out") }
    })
}

/// Image copied from `width * height` row-major values.
///
/// # Safety
/// `data` must point to `width * height` readable doubles.
#[no_mangle]
pub unsafe extern "C" fn canopy_image_from_data(
    width: u32,
    height: u32,
    channel_code: i32,
    data: *const f64,
    out: *mut *mut CanopyImage,
) -> i32 {
    guard(|| {
        if data.is_null() {
            return Err(Failure::null("data"));
        }
        let n = (width as usize)
            .checked_mul(height as usize)
            .ok_or_else(|| Failure::config("image dimensions overflow"))?;
        let values = unsafe { std::slice::from_raw_parts(data, n) }.to_vec();
        let img = ImagePlane::from_vec(width as usize, height as usize, channel(channel_code)?, values)?;
        unsafe { self::out(out, boxed(CanopyImage(img)), "out") }
    })
}

/// Read a PNG or PGM file; the channel is guessed from the file name suffix.
///
/// # Safety
/// `path` must be a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn canopy_image_read(path: *const c_char, out: *mut *mut CanopyImage) -> i32 {
    guard(|| {
        let path = unsafe { string_arg(path, "path")? };
        let img = imgcore::read_image(path)?;
        unsafe { self::out(out, boxed(CanopyImage(img)), "out") }
    })
}

/// Write as PNG or PGM by extension, clamping to `[0, 1]`.
///
/// # Safety
/// `img` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn canopy_image_write(img: *const CanopyImage, path: *const c_char) -> i32 {
    guard(|| {
        let img = unsafe { deref(img, "img")? };
        let path = unsafe { string_arg(path, "path")? };
        Ok(imgcore::write_image(&img.0, path)?)
    })
}

/// # Safety
/// `img` must be a live handle; out-pointers may be NULL to skip a field.
#[no_mangle]
pub unsafe extern "C" fn canopy_image_info(
    img: *const CanopyImage,
    width: *mut u32,
    height: *mut u32,
    channel_code: *mut i32,
) -> i32 {
    guard(|| {
        let img = unsafe { deref(img, "img")? };
        unsafe {
            if let Some(w) = width.as_mut() {
                *w = img.0.width() as u32;
            }
            if let Some(h) = height.as_mut() {
                *h = img.0.height() as u32;
            }
            if let Some(c) = channel_code.as_mut() {
                *c = code_of(img.0.channel());
            }
        }
        Ok(())
    })
}

/// Row-major pixel values, valid while the handle lives; NULL for a NULL handle.
///
/// # Safety
/// `img` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn canopy_image_data(img: *const CanopyImage) -> *const f64 {
    img.as_ref().map_or(std::ptr::null(), |i| i.0.data().as_ptr())
}

/// # Safety
/// `img` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn canopy_image_free(img: *mut CanopyImage) {
    if !img.is_null() {
        drop(Box::from_raw(img));
    }
}

// ---------------------------------------------------------------- scenes

/// Generate a scene. `params_json` is a JSON object of scene parameters
/// (missing keys take defaults); NULL means all defaults.
///
/// # Safety
/// `params_json` must be NULL or NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn canopy_scene_generate(
    params_json: *const c_char,
    seed: u64,
    out: *mut *mut CanopyScene,
) -> i32 {
    guard(|| {
        let params: SceneParams = if params_json.is_null() {
            SceneParams::default()
        } else {
            let text = unsafe { string_arg(params_json, "params_json")? };
            serde_json::from_str(text).map_err(|e| Failure::config(format!("scene parameters: {e}")))?
        };
        let scene = scenegen::generate_scene(&params, seed)?;
        unsafe { self::out(out, boxed(CanopyScene(scene)), "out") }
    })
}

/// # Safety
/// `path` must be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn canopy_scene_load(path: *const c_char, out: *mut *mut CanopyScene) -> i32 {
    guard(|| {
        let path = unsafe { string_arg(path, "path")? };
        let scene = SceneDescription::load(path)?;
        unsafe { self::out(out, boxed(CanopyScene(scene)), "out") }
    })
}

/// # Safety
/// `scene` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn canopy_scene_save(scene: *const CanopyScene, path: *const c_char) -> i32 {
    guard(|| {
        let scene = unsafe { deref(scene, "scene")? };
        let path = unsafe { string_arg(path, "path")? };
        Ok(scene.0.save(path)?)
    })
}

/// Render one view of `scene` in the visible or thermal channel.
///
/// # Safety
/// `scene` must be a live handle and `cam` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn canopy_scene_render(
    scene: *const CanopyScene,
    cam: *const CanopyCamera,
    channel_code: i32,
    noise_seed: u64,
    out: *mut *mut CanopyImage,
) -> i32 {
    guard(|| {
        let scene = unsafe { deref(scene, "scene")? };
        let (intr, pose) = camera(unsafe { deref(cam, "cam")? })?;
        let img = scenegen::render_view(&scene.0, &intr, &pose, channel(channel_code)?, noise_seed)?;
        unsafe { self::out(out, boxed(CanopyImage(img)), "out") }
    })
}

/// # Safety
/// `scene` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn canopy_scene_free(scene: *mut CanopyScene) {
    if !scene.is_null() {
        drop(Box::from_raw(scene));
    }
}

// ---------------------------------------------------------------- refocusing

/// # Safety
/// `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn canopy_viewset_new(out: *mut *mut CanopyViewSet) -> i32 {
    guard(|| unsafe { self::out(out, boxed(CanopyViewSet(Vec::new())), "out") })
}

/// Append a copy of `img` taken by `cam`.
///
/// # Safety
/// All pointers must be valid; `views` and `img` live handles.
#[no_mangle]
pub unsafe extern "C" fn canopy_viewset_push(
    views: *mut CanopyViewSet,
    cam: *const CanopyCamera,
    img: *const CanopyImage,
) -> i32 {
    guard(|| {
        let views = unsafe { deref_mut(views, "views")? };
        let (intrinsics, pose) = camera(unsafe { deref(cam, "cam")? })?;
        let image = unsafe { deref(img, "img")? }.0.clone();
        views.0.push(View {
            intrinsics,
            pose,
            image,
        });
        Ok(())
    })
}

/// # Safety
/// `views` must be NULL or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn canopy_viewset_free(views: *mut CanopyViewSet) {
    if !views.is_null() {
        drop(Box::from_raw(views));
    }
}

/// Integral image on the horizontal plane `z = plane_height`, seen from
/// `reference`. `coverage_out` may be NULL; otherwise it receives the
/// per-pixel count of contributing views.
///
/// # Safety
/// `views` must be a live handle, `reference` and `out` valid pointers.
#[no_mangle]
pub unsafe extern "C" fn canopy_integrate(
    views: *const CanopyViewSet,
    plane_height: f64,
    reference: *const CanopyCamera,
    out: *mut *mut CanopyImage,
    coverage_out: *mut *mut CanopyImage,
) -> i32 {
    guard(|| {
        let views = unsafe { deref(views, "views")? };
        let (intrinsics, pose) = camera(unsafe { deref(reference, "reference")? })?;
        if out.is_null() {
            return Err(Failure::null("out"));
        }
        if !plane_height.is_finite() {
            return Err(Failure::config("plane_height must be finite"));
        }
        let set = ViewSet::new(views.0.clone())?;
        let result = aos::integrate(
            &set,
            &WorldPlane::horizontal(plane_height),
            &ReferenceCamera { intrinsics, pose },
            &Weighting::Uniform,
        )?;
        unsafe {
            if !coverage_out.is_null() {
                coverage_out.write(boxed(CanopyImage(result.coverage)));
            }
            out.write(boxed(CanopyImage(result.image)));
        }
        Ok(())
    })
}

/// Visibility of `target` against `background` (boxes as x_min, y_min, x_max, y_max).
///
/// # Safety
/// `img` must be a live handle; `target` and `background` must each point to 4 doubles.
#[no_mangle]
pub unsafe extern "C" fn canopy_visibility_score(
    img: *const CanopyImage,
    target: *const f64,
    background: *const f64,
    out: *mut f64,
) -> i32 {
    guard(|| {
        let img = unsafe { deref(img, "img")? };
        let t = unsafe { bbox(target, "target")? };
        let b = unsafe { bbox(background, "background")? };
        let score = aos::visibility_score(&img.0, &t, &b)?;
        unsafe { self::out(out, score, "out") }
    })
}

// ---------------------------------------------------------------- fusion

/// Fill `cfg` with the default fusion settings.
///
/// # Safety
/// `cfg` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn canopy_fusion_config_default(cfg: *mut CanopyFusionConfig) -> i32 {
    guard(|| {
        let d = FusionConfig::default();
        let c = CanopyFusionConfig {
            depth: d.depth as u32,
            patch_size: d.patch_size as u32,
            stride: d.stride as u32,
            atoms_per_dim: d.atoms_per_dim as u32,
            max_atoms: d.max_atoms as u32,
            tol: d.tol,
        };
        unsafe { out(cfg, c, "cfg") }
    })
}

/// Fuse a visible and a thermal image of equal size. `cfg` may be NULL for defaults.
///
/// # Safety
/// `visible` and `thermal` must be live handles; `cfg` NULL or valid.
#[no_mangle]
pub unsafe extern "C" fn canopy_fuse(
    visible: *const CanopyImage,
    thermal: *const CanopyImage,
    cfg: *const CanopyFusionConfig,
    out: *mut *mut CanopyImage,
) -> i32 {
    guard(|| {
        let v = unsafe { deref(visible, "visible")? };
        let t = unsafe { deref(thermal, "thermal")? };
        let cfg = match unsafe { cfg.as_ref() } {
            None => FusionConfig::default(),
            Some(c) => FusionConfig {
                depth: c.depth as usize,
                patch_size: c.patch_size as usize,
                stride: c.stride as usize,
                atoms_per_dim: c.atoms_per_dim as usize,
                max_atoms: c.max_atoms as usize,
                tol: c.tol,
            },
        };
        let fused = canopy::fusion::mst_sr_fuse(&v.0, &t.0, &cfg)?;
        unsafe { self::out(out, boxed(CanopyImage(fused)), "out") }
    })
}

// ---------------------------------------------------------------- evaluation

/// Intersection over union of two boxes.
///
/// # Safety
/// `a` and `b` must reference 4 doubles; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn canopy_iou(a: *const f64, b: *const f64, out: *mut f64) -> i32 {
    guard(|| {
        let a = unsafe { bbox(a, "a")? };
        let b = unsafe { bbox(b, "b")? };
        unsafe { self::out(out, canopy::deteval::iou(&a, &b), "out") }
    })
}

/// mAP of a detections file against a ground-truth file (both JSON).
/// `top_k == 0` averages over every class with ground truth.
///
/// # Safety
/// Paths must be NUL-terminated; `map_out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn canopy_evaluate_files(
    detections_path: *const c_char,
    ground_truth_path: *const c_char,
    iou_threshold: f64,
    top_k: u32,
    map_out: *mut f64,
) -> i32 {
    guard(|| {
        let dets = canopy::deteval::load_detections(unsafe { string_arg(detections_path, "detections_path")? })?;
        let gts = canopy::deteval::load_ground_truth(unsafe { string_arg(ground_truth_path, "ground_truth_path")? })?;
        let top_k = (top_k > 0).then_some(top_k as usize);
        let report = canopy::deteval::evaluate(&dets, &gts, iou_threshold, top_k)?;
        unsafe { out(map_out, report.map, "map_out") }
    })
}
