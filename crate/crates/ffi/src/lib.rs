//! C ABI over `binkit`.
//!
//! Every object crosses the boundary as an opaque pointer created by a
//! constructor such as `bk_image_load` and released by the matching `bk_*_free`.
//! Fallible functions return a [`BkStatus`] and write their result through an
//! out-pointer; on failure the out-pointer is left untouched and
//! [`bk_last_error`] describes what went wrong on the calling thread.
//! Panics never unwind into C: they are reported as `BK_STATUS_PANIC`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use binkit::classical::{self, Method};
use binkit::evaluation::confusion;
use binkit::imagery::{decode_gray, load_gray, load_mask, mask_levels, save_mask};
use binkit::sae::{binarize_document, load_checkpoint, read_checkpoint, Model};
use binkit::{BinaryMask, Error, GrayImage};

/// Result code of every fallible call.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BkStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    Format = 4,
    Unsupported = 5,
    DimensionMismatch = 6,
    Checkpoint = 7,
    Panic = 8,
    Other = 9,
}

/// Classical thresholding method.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum BkMethod {
    Otsu = 0,
    Niblack = 1,
    Sauvola = 2,
    Wolf = 3,
}

/// Parameters of the local methods. `r` is only read by Sauvola; Otsu
/// ignores all three.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BkClassicalParams {
    pub window: usize,
    pub k: f64,
    pub r: f64,
}

/// Grayscale page.
pub struct BkImage(GrayImage);

/// Binary mask, ink = foreground.
pub struct BkMask(BinaryMask);

/// Trained selectional auto-encoder.
pub struct BkModel(Model);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> BkStatus {
    match e {
        Error::Io { .. } => BkStatus::Io,
        Error::Format(_) | Error::EmptyImage => BkStatus::Format,
        Error::UnsupportedFormat(_) => BkStatus::Unsupported,
        Error::DimensionMismatch { .. } => BkStatus::DimensionMismatch,
        Error::InvalidArgument(_) | Error::Shape(_) => BkStatus::InvalidArgument,
        Error::Checkpoint(_) => BkStatus::Checkpoint,
        _ => BkStatus::Other,
    }
}

enum Failure {
    Null(&'static str),
    Invalid(String),
    Core(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

/// Runs `f`, translating errors and panics into a status code.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> BkStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => BkStatus::Ok,
        Ok(Err(Failure::Null(what))) => {
            set_last_error(format!("null pointer: {what}"));
            BkStatus::NullPointer
        }
        Ok(Err(Failure::Invalid(msg))) => {
            set_last_error(format!("invalid argument: {msg}"));
            BkStatus::InvalidArgument
        }
        Ok(Err(Failure::Core(e))) => {
            set_last_error(e.to_string());
            status_of(&e)
        }
        Err(payload) => {
            let msg = payload
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| payload.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "unknown panic".into());
            set_last_error(format!("panic: {msg}"));
            BkStatus::Panic
        }
    }
}

unsafe fn deref<'a, T>(p: *const T, what: &'static str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or(Failure::Null(what))
}

unsafe fn out<'a, T>(p: *mut T, what: &'static str) -> Result<&'a mut T, Failure> {
    p.as_mut().ok_or(Failure::Null(what))
}

unsafe fn path<'a>(p: *const c_char) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::Null("path"));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::Invalid("path is not valid UTF-8".into()))
}

unsafe fn bytes<'a>(p: *const u8, len: usize, what: &'static str) -> Result<&'a [u8], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(Failure::Null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Message for the last failed call on this thread, or null if none. The
/// pointer stays valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn bk_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn bk_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an image from `width * height` row-major 8-bit levels.
///
/// # Safety
/// `levels` must point to `width * height` readable bytes and `out` must be
/// writable.
#[no_mangle]
pub unsafe extern "C" fn bk_image_from_gray8(
    width: usize,
    height: usize,
    levels: *const u8,
    out_image: *mut *mut BkImage,
) -> BkStatus {
    guard(|| {
        let dst = out(out_image, "out_image")?;
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Failure::Invalid("width * height overflows".into()))?;
        if n == 0 {
            return Err(Error::EmptyImage.into());
        }
        let src = bytes(levels, n, "levels")?;
        *dst = boxed(BkImage(GrayImage::from_u8(width, height, src)?));
        Ok(())
    })
}

/// Decodes a PGM or PNG file held in memory.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out_image` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bk_image_decode(data: *const u8, len: usize, out_image: *mut *mut BkImage) -> BkStatus {
    guard(|| {
        let dst = out(out_image, "out_image")?;
        let img = decode_gray(bytes(data, len, "data")?)?;
        *dst = boxed(BkImage(img));
        Ok(())
    })
}

/// Loads a PGM or PNG file.
///
/// # Safety
/// `file` must be a NUL-terminated UTF-8 path and `out_image` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bk_image_load(file: *const c_char, out_image: *mut *mut BkImage) -> BkStatus {
    guard(|| {
        let dst = out(out_image, "out_image")?;
        *dst = boxed(BkImage(load_gray(path(file)?)?));
        Ok(())
    })
}

/// # Safety
/// `image` must be null or a pointer returned by this library.
#[no_mangle]
pub unsafe extern "C" fn bk_image_width(image: *const BkImage) -> usize {
    image.as_ref().map_or(0, |i| i.0.width())
}

/// # Safety
/// `image` must be null or a pointer returned by this library.
#[no_mangle]
pub unsafe extern "C" fn bk_image_height(image: *const BkImage) -> usize {
    image.as_ref().map_or(0, |i| i.0.height())
}

/// # Safety
/// `image` must be null or a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bk_image_free(image: *mut BkImage) {
    if !image.is_null() {
        drop(Box::from_raw(image));
    }
}

/// Default parameters for `method`.
#[no_mangle]
pub extern "C" fn bk_classical_defaults(method: BkMethod) -> BkClassicalParams {
    let window = classical::DEFAULT_WINDOW;
    match method {
        BkMethod::Otsu => BkClassicalParams { window, k: 0.0, r: 0.0 },
        BkMethod::Niblack => BkClassicalParams {
            window,
            k: classical::DEFAULT_NIBLACK_K,
            r: 0.0,
        },
        BkMethod::Sauvola => BkClassicalParams {
            window,
            k: classical::DEFAULT_SAUVOLA_K,
            r: classical::DEFAULT_SAUVOLA_R,
        },
        BkMethod::Wolf => BkClassicalParams {
            window,
            k: classical::DEFAULT_WOLF_K,
            r: 0.0,
        },
    }
}

fn method_from(method: BkMethod, p: BkClassicalParams) -> Method {
    match method {
        BkMethod::Otsu => Method::Otsu,
        BkMethod::Niblack => Method::Niblack {
            window: p.window,
            k: p.k,
        },
        BkMethod::Sauvola => Method::Sauvola {
            window: p.window,
            k: p.k,
            r: p.r,
        },
        BkMethod::Wolf => Method::Wolf {
            window: p.window,
            k: p.k,
        },
    }
}

/// Binarizes with a classical method. A null `params` selects the defaults.
///
/// # Safety
/// `image` must be a live image, `params` null or readable, `out_mask` writable.
#[no_mangle]
pub unsafe extern "C" fn bk_binarize_classical(
    image: *const BkImage,
    method: BkMethod,
    params: *const BkClassicalParams,
    out_mask: *mut *mut BkMask,
) -> BkStatus {
    guard(|| {
        let img = deref(image, "image")?;
        let dst = out(out_mask, "out_mask")?;
        let p = params
            .as_ref()
            .copied()
            .unwrap_or_else(|| bk_classical_defaults(method));
        let mask = method_from(method, p).binarize(&img.0)?;
        *dst = boxed(BkMask(mask));
        Ok(())
    })
}

/// Parses a model checkpoint held in memory.
///
/// # Safety
/// `data` must point to `len` readable bytes and `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bk_model_from_bytes(data: *const u8, len: usize, out_model: *mut *mut BkModel) -> BkStatus {
    guard(|| {
        let dst = out(out_model, "out_model")?;
        let model = load_checkpoint(bytes(data, len, "data")?)?;
        *dst = boxed(BkModel(model));
        Ok(())
    })
}

/// Reads a model checkpoint file.
///
/// # Safety
/// `file` must be a NUL-terminated UTF-8 path and `out_model` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bk_model_load(file: *const c_char, out_model: *mut *mut BkModel) -> BkStatus {
    guard(|| {
        let dst = out(out_model, "out_model")?;
        *dst = boxed(BkModel(read_checkpoint(path(file)?)?));
        Ok(())
    })
}

/// Side of the square window the model was trained on, 0 for null.
///
/// # Safety
/// `model` must be null or a pointer returned by this library.
#[no_mangle]
pub unsafe extern "C" fn bk_model_window_side(model: *const BkModel) -> usize {
    model.as_ref().map_or(0, |m| m.0.window_side())
}

/// Binarizes a page with a model, labelling ink where the activation is at
/// least `tau`.
///
/// # Safety
/// `model` and `image` must be live and `out_mask` writable.
#[no_mangle]
pub unsafe extern "C" fn bk_model_binarize(
    model: *const BkModel,
    image: *const BkImage,
    tau: f32,
    out_mask: *mut *mut BkMask,
) -> BkStatus {
    guard(|| {
        let m = deref(model, "model")?;
        let img = deref(image, "image")?;
        let dst = out(out_mask, "out_mask")?;
        *dst = boxed(BkMask(binarize_document(&m.0, &img.0, tau)?));
        Ok(())
    })
}

/// # Safety
/// `model` must be null or a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bk_model_free(model: *mut BkModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Builds a mask from row-major 8-bit levels; levels below 128 are ink.
///
/// # Safety
/// `levels` must point to `width * height` readable bytes and `out_mask`
/// must be writable.
#[no_mangle]
pub unsafe extern "C" fn bk_mask_from_levels(
    width: usize,
    height: usize,
    levels: *const u8,
    out_mask: *mut *mut BkMask,
) -> BkStatus {
    guard(|| {
        let dst = out(out_mask, "out_mask")?;
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Failure::Invalid("width * height overflows".into()))?;
        if n == 0 {
            return Err(Error::EmptyImage.into());
        }
        let src = bytes(levels, n, "levels")?;
        let mask = BinaryMask::from_vec(width, height, src.iter().map(|&v| v < 128).collect())?;
        *dst = boxed(BkMask(mask));
        Ok(())
    })
}

/// Loads a ground-truth mask; levels below 128 are ink.
///
/// # Safety
/// `file` must be a NUL-terminated UTF-8 path and `out_mask` must be writable.
#[no_mangle]
pub unsafe extern "C" fn bk_mask_load(file: *const c_char, out_mask: *mut *mut BkMask) -> BkStatus {
    guard(|| {
        let dst = out(out_mask, "out_mask")?;
        *dst = boxed(BkMask(load_mask(path(file)?)?));
        Ok(())
    })
}

/// # Safety
/// `mask` must be null or a pointer returned by this library.
#[no_mangle]
pub unsafe extern "C" fn bk_mask_width(mask: *const BkMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.width())
}

/// # Safety
/// `mask` must be null or a pointer returned by this library.
#[no_mangle]
pub unsafe extern "C" fn bk_mask_height(mask: *const BkMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.height())
}

/// Number of ink pixels.
///
/// # Safety
/// `mask` must be null or a pointer returned by this library.
#[no_mangle]
pub unsafe extern "C" fn bk_mask_count_foreground(mask: *const BkMask) -> usize {
    mask.as_ref().map_or(0, |m| m.0.count_foreground())
}

/// Copies the mask as row-major 8-bit levels, 0 for ink and 255 for
/// background. `len` must equal width * height.
///
/// # Safety
/// `mask` must be live and `levels` must point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn bk_mask_copy_levels(mask: *const BkMask, levels: *mut u8, len: usize) -> BkStatus {
    guard(|| {
        let m = deref(mask, "mask")?;
        if len != m.0.len() {
            return Err(Failure::Invalid(format!(
                "buffer holds {len} bytes, mask has {}",
                m.0.len()
            )));
        }
        if levels.is_null() {
            return Err(Failure::Null("levels"));
        }
        std::slice::from_raw_parts_mut(levels, len).copy_from_slice(&mask_levels(&m.0));
        Ok(())
    })
}

/// Writes the mask as a binary PGM file, ink black.
///
/// # Safety
/// `mask` must be live and `file` a NUL-terminated UTF-8 path.
#[no_mangle]
pub unsafe extern "C" fn bk_mask_save(mask: *const BkMask, file: *const c_char) -> BkStatus {
    guard(|| {
        let m = deref(mask, "mask")?;
        save_mask(&m.0, path(file)?)?;
        Ok(())
    })
}

/// # Safety
/// `mask` must be null or a pointer returned by this library and not yet freed.
#[no_mangle]
pub unsafe extern "C" fn bk_mask_free(mask: *mut BkMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}

/// F-measure of `predicted` against `ground_truth`, both with ink as the
/// positive class.
///
/// # Safety
/// Both masks must be live and `out_fm` writable.
#[no_mangle]
pub unsafe extern "C" fn bk_f_measure(
    predicted: *const BkMask,
    ground_truth: *const BkMask,
    out_fm: *mut f64,
) -> BkStatus {
    guard(|| {
        let p = deref(predicted, "predicted")?;
        let g = deref(ground_truth, "ground_truth")?;
        let dst = out(out_fm, "out_fm")?;
        *dst = confusion(&p.0, &g.0)?.f_measure();
        Ok(())
    })
}
