//! C ABI over `objimg`: opaque handles for pattern stacks and trained models,
//! status codes for every call, and a per-thread last-error message.
//!
//! Every function returns an [`ObjimgStatus`]; outputs go through pointers.
//! Buffers are caller-owned and sized as documented. Handles are freed with
//! the matching `*_free` function; passing null to `*_free` is a no-op.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use objimg::analysis::{mutual_coherence, psnr, ssim};
use objimg::camsim::{acquire, NoiseConfig};
use objimg::image::ImageGrid;
use objimg::sampler::{measure, read_spip, write_spip, MeasurementVector, PatternStack};
use objimg::train::{read_checkpoint, Model};
use objimg::Error;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObjimgStatus {
    Ok = 0,
    NullPointer = 1,
    Dimension = 2,
    Numerical = 3,
    Parameter = 4,
    Format = 5,
    Placement = 6,
    Io = 7,
    InvalidUtf8 = 8,
    Panic = 9,
}

/// A binary ±1 pattern stack.
pub struct ObjimgPatterns(PatternStack);

/// A trained sampling + reconstruction model.
pub struct ObjimgModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).expect("interior nul removed");
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn clear_last_error() {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
}

fn status_of(e: &Error) -> ObjimgStatus {
    match e {
        Error::Dimension(_) => ObjimgStatus::Dimension,
        Error::Numerical(_) => ObjimgStatus::Numerical,
        Error::Parameter(_) => ObjimgStatus::Parameter,
        Error::Format { .. } => ObjimgStatus::Format,
        Error::Placement(_) => ObjimgStatus::Placement,
        Error::Io { .. } => ObjimgStatus::Io,
    }
}

struct Fail(ObjimgStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(ObjimgStatus::NullPointer, format!("{what} is null"))
}

/// Run `body`, converting errors and panics into a status plus last-error text.
fn guard(body: impl FnOnce() -> Result<(), Fail>) -> ObjimgStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => {
            clear_last_error();
            ObjimgStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_last_error(msg);
            status
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            ObjimgStatus::Panic
        }
    }
}

unsafe fn path_arg(path: *const c_char) -> Result<String, Fail> {
    if path.is_null() {
        return Err(null("path"));
    }
    CStr::from_ptr(path)
        .to_str()
        .map(str::to_owned)
        .map_err(|_| Fail(ObjimgStatus::InvalidUtf8, "path is not valid UTF-8".into()))
}

unsafe fn slice_arg<'a>(data: *const f64, len: usize, what: &str) -> Result<&'a [f64], Fail> {
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn out_slice<'a>(data: *mut f64, len: usize, what: &str) -> Result<&'a mut [f64], Fail> {
    if data.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts_mut(data, len))
}

unsafe fn handle<'a, T>(h: *const T, what: &str) -> Result<&'a T, Fail> {
    h.as_ref().ok_or_else(|| null(what))
}

fn square(side: usize, values: &[f64]) -> Result<ImageGrid, Fail> {
    if values.len() != side * side {
        return Err(Fail(
            ObjimgStatus::Dimension,
            format!("{} values for a {side}×{side} image", values.len()),
        ));
    }
    Ok(ImageGrid::square(side, values.to_vec())?)
}

fn copy_out(dst: &mut [f64], src: &[f64], what: &str) -> Result<(), Fail> {
    if dst.len() != src.len() {
        return Err(Fail(
            ObjimgStatus::Dimension,
            format!("{what} buffer holds {} values, {} needed", dst.len(), src.len()),
        ));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Message of the last failed call on this thread, or null after a success.
/// The pointer stays valid until the next call on the same thread.
#[no_mangle]
pub extern "C" fn objimg_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Uniform random ±1 patterns: `m` patterns of `n`×`n`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn objimg_patterns_random(
    m: usize,
    n: usize,
    seed: u64,
    out: *mut *mut ObjimgPatterns,
) -> ObjimgStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if m == 0 || n == 0 {
            return Err(Fail(
                ObjimgStatus::Parameter,
                format!("pattern stack {m}×{n}² is empty"),
            ));
        }
        let stack = PatternStack::random(m, n, &mut ChaCha8Rng::seed_from_u64(seed));
        *out = Box::into_raw(Box::new(ObjimgPatterns(stack)));
        Ok(())
    })
}

/// Load an SPIP pattern file.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn objimg_patterns_read(path: *const c_char, out: *mut *mut ObjimgPatterns) -> ObjimgStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(ObjimgPatterns(read_spip(path)?)));
        Ok(())
    })
}

/// Save as an SPIP pattern file.
///
/// # Safety
/// `patterns` must be a live handle; `path` a nul-terminated string.
#[no_mangle]
pub unsafe extern "C" fn objimg_patterns_write(patterns: *const ObjimgPatterns, path: *const c_char) -> ObjimgStatus {
    guard(|| {
        let p = handle(patterns, "patterns")?;
        write_spip(path_arg(path)?, &p.0)?;
        Ok(())
    })
}

/// # Safety
/// `patterns` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn objimg_patterns_free(patterns: *mut ObjimgPatterns) {
    if !patterns.is_null() {
        drop(Box::from_raw(patterns));
    }
}

/// Pattern count `m` and side `n`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn objimg_patterns_dims(
    patterns: *const ObjimgPatterns,
    m: *mut usize,
    n: *mut usize,
) -> ObjimgStatus {
    guard(|| {
        let p = handle(patterns, "patterns")?;
        if m.is_null() || n.is_null() {
            return Err(null("dims output"));
        }
        *m = p.0.m();
        *n = p.0.n();
        Ok(())
    })
}

/// Mutual coherence of the column-normalized pattern matrix and its Welch bound.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn objimg_patterns_coherence(
    patterns: *const ObjimgPatterns,
    mu: *mut f64,
    welch: *mut f64,
) -> ObjimgStatus {
    guard(|| {
        let p = handle(patterns, "patterns")?;
        if mu.is_null() || welch.is_null() {
            return Err(null("coherence output"));
        }
        let r = mutual_coherence(&p.0)?;
        *mu = r.mu;
        *welch = r.welch_lower;
        Ok(())
    })
}

/// Noise-free single-pixel measurement `y = Φ·x` of an `n`×`n` row-major scene into `m` values.
///
/// # Safety
/// `scene` must hold `n*n` values and `y` room for `m`.
#[no_mangle]
pub unsafe extern "C" fn objimg_measure(
    patterns: *const ObjimgPatterns,
    scene: *const f64,
    scene_len: usize,
    y: *mut f64,
    y_len: usize,
) -> ObjimgStatus {
    guard(|| {
        let p = handle(patterns, "patterns")?;
        let img = square(p.0.n(), slice_arg(scene, scene_len, "scene")?)?;
        let meas = measure(&p.0, &img)?;
        copy_out(out_slice(y, y_len, "y")?, meas.values(), "measurement")
    })
}

/// Simulated differential acquisition with reading noise `sigma` (relative to
/// mean |y|) and `bits`-bit quantization (0 disables it).
///
/// # Safety
/// `scene` must hold `scene_len` values and `y` room for `y_len`.
#[no_mangle]
pub unsafe extern "C" fn objimg_acquire(
    patterns: *const ObjimgPatterns,
    scene: *const f64,
    scene_len: usize,
    sigma: f64,
    bits: u32,
    seed: u64,
    y: *mut f64,
    y_len: usize,
) -> ObjimgStatus {
    guard(|| {
        let p = handle(patterns, "patterns")?;
        let img = square(p.0.n(), slice_arg(scene, scene_len, "scene")?)?;
        let noise = NoiseConfig {
            gaussian_sigma: sigma,
            quantization_bits: (bits > 0).then_some(bits),
            seed,
            ..NoiseConfig::off()
        };
        let meas = acquire(&img, &p.0, &noise)?;
        copy_out(out_slice(y, y_len, "y")?, meas.values(), "measurement")
    })
}

/// Load a model from an SPCK checkpoint.
///
/// # Safety
/// `path` must be a nul-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn objimg_model_read(path: *const c_char, out: *mut *mut ObjimgModel) -> ObjimgStatus {
    guard(|| {
        let path = path_arg(path)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(ObjimgModel(read_checkpoint(path)?.model)));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn objimg_model_free(model: *mut ObjimgModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Image side `n` and measurement count `m`.
///
/// # Safety
/// All pointers must be valid.
#[no_mangle]
pub unsafe extern "C" fn objimg_model_dims(model: *const ObjimgModel, n: *mut usize, m: *mut usize) -> ObjimgStatus {
    guard(|| {
        let md = handle(model, "model")?;
        if m.is_null() || n.is_null() {
            return Err(null("dims output"));
        }
        *n = md.0.n();
        *m = md.0.m();
        Ok(())
    })
}

/// The model's binarized patterns as a new handle.
///
/// # Safety
/// `model` must be live and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn objimg_model_patterns(
    model: *const ObjimgModel,
    out: *mut *mut ObjimgPatterns,
) -> ObjimgStatus {
    guard(|| {
        let md = handle(model, "model")?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = Box::into_raw(Box::new(ObjimgPatterns(md.0.patterns()?)));
        Ok(())
    })
}

/// Reconstruct an `n`×`n` image from `m` measurements.
///
/// # Safety
/// `y` must hold `y_len` values and `image` room for `image_len`.
#[no_mangle]
pub unsafe extern "C" fn objimg_model_reconstruct(
    model: *const ObjimgModel,
    y: *const f64,
    y_len: usize,
    image: *mut f64,
    image_len: usize,
) -> ObjimgStatus {
    guard(|| {
        let md = handle(model, "model")?;
        let meas = MeasurementVector(slice_arg(y, y_len, "y")?.to_vec());
        let img = md.0.recon.reconstruct(&meas)?;
        copy_out(out_slice(image, image_len, "image")?, img.data(), "image")
    })
}

/// Measure a scene with the model's patterns and reconstruct it.
///
/// # Safety
/// `scene` must hold `scene_len` values and `image` room for `image_len`.
#[no_mangle]
pub unsafe extern "C" fn objimg_model_predict(
    model: *const ObjimgModel,
    scene: *const f64,
    scene_len: usize,
    image: *mut f64,
    image_len: usize,
) -> ObjimgStatus {
    guard(|| {
        let md = handle(model, "model")?;
        let img = square(md.0.n(), slice_arg(scene, scene_len, "scene")?)?;
        let pred = md.0.predict(&img)?;
        copy_out(out_slice(image, image_len, "image")?, pred.data(), "image")
    })
}

/// PSNR in dB of two `side`×`side` images (99 dB when identical).
///
/// # Safety
/// `a` and `b` must hold `side*side` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn objimg_psnr(
    a: *const f64,
    b: *const f64,
    side: usize,
    peak: f64,
    out: *mut f64,
) -> ObjimgStatus {
    guard(|| {
        let ia = square(side, slice_arg(a, side * side, "a")?)?;
        let ib = square(side, slice_arg(b, side * side, "b")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = psnr(&ia, &ib, peak)?;
        Ok(())
    })
}

/// Mean SSIM over 8×8 windows of two `side`×`side` images.
///
/// # Safety
/// `a` and `b` must hold `side*side` values; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn objimg_ssim(a: *const f64, b: *const f64, side: usize, out: *mut f64) -> ObjimgStatus {
    guard(|| {
        let ia = square(side, slice_arg(a, side * side, "a")?)?;
        let ib = square(side, slice_arg(b, side * side, "b")?)?;
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ssim(&ia, &ib)?;
        Ok(())
    })
}
