//! C ABI over the `cishmap` library.
//!
//! Every fallible function returns a [`CishmapStatus`]. On anything other than
//! `CISHMAP_STATUS_OK` a message is stored per thread and can be read with
//! [`cishmap_last_error`]. Objects are opaque handles released with their
//! matching `_free` function. Output buffers are caller-allocated; their
//! length is passed in and checked.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use cishmap::config::arch_for_side;
use cishmap::fcm::{fcm_fit, FcmConfig, Matrix};
use cishmap::image::{GrayImage, Mask};
use cishmap::masking::{build_mask, MaskParams};
use cishmap::model::{load_model, save_model, Autoencoder};
use cishmap::nn::Tensor;
use cishmap::Error;

/// Result codes shared by every function in this interface.
#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CishmapStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    BadFormat = 4,
    NumericFault = 5,
    NoTissue = 6,
    BufferSize = 7,
    Internal = 8,
}

/// A trained or freshly built autoencoder.
pub struct CishmapModel(Autoencoder<f32>);

/// A binary tissue mask at slide resolution.
pub struct CishmapMask(Mask);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("NULs were replaced");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(CishmapStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => CishmapStatus::Io,
            Error::ModelFormat(_)
            | Error::TileFormat(_)
            | Error::Image(_)
            | Error::Json(_)
            | Error::Csv(_) => CishmapStatus::BadFormat,
            Error::NumericFault { .. }
            | Error::NonFiniteLoss { .. }
            | Error::DegenerateCluster(_) => CishmapStatus::NumericFault,
            Error::NoTissue => CishmapStatus::NoTissue,
            _ => CishmapStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: CishmapStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

/// Runs `f`, turning errors and panics into a status plus a stored message.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> CishmapStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            CishmapStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            CishmapStatus::Internal
        }
    }
}

unsafe fn path_arg(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(CishmapStatus::NullPointer, "path is NULL"));
    }
    let s = CStr::from_ptr(p)
        .to_str()
        .map_err(|_| fail(CishmapStatus::InvalidArgument, "path is not UTF-8"))?;
    Ok(PathBuf::from(s))
}

unsafe fn slice_arg<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if p.is_null() {
        return Err(fail(CishmapStatus::NullPointer, format!("{what} is NULL")));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn out_slice<'a, T>(
    p: *mut T,
    len: usize,
    need: usize,
    what: &str,
) -> Result<&'a mut [T], Failure> {
    if p.is_null() {
        return Err(fail(CishmapStatus::NullPointer, format!("{what} is NULL")));
    }
    if len != need {
        return Err(fail(
            CishmapStatus::BufferSize,
            format!("{what} holds {len} values, {need} needed"),
        ));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| fail(CishmapStatus::NullPointer, "handle is NULL"))
}

unsafe fn store<T>(out: *mut *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(
            CishmapStatus::NullPointer,
            "output handle pointer is NULL",
        ));
    }
    *out = Box::into_raw(Box::new(value));
    Ok(())
}

/// Message for the last failed call on this thread, or NULL after a success.
/// The pointer stays valid until the next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn cishmap_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn cishmap_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds an untrained model for square tiles of `side` pixels (300 gives
/// the full-size layout).
///
/// # Safety
/// `out` must be a valid pointer to writable handle storage.
#[no_mangle]
pub unsafe extern "C" fn cishmap_model_build(
    side: u32,
    seed: u64,
    out: *mut *mut CishmapModel,
) -> CishmapStatus {
    guard(|| {
        let arch = arch_for_side(side as usize)?;
        store(out, CishmapModel(Autoencoder::build(&arch, seed)?))
    })
}

/// # Safety
/// `path` must be a NUL-terminated string and `out` valid handle storage.
#[no_mangle]
pub unsafe extern "C" fn cishmap_model_load(
    path: *const c_char,
    out: *mut *mut CishmapModel,
) -> CishmapStatus {
    guard(|| {
        let model = load_model(path_arg(path)?)?;
        store(out, CishmapModel(model))
    })
}

/// # Safety
/// `model` must come from this library and `path` be NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn cishmap_model_save(
    model: *const CishmapModel,
    path: *const c_char,
) -> CishmapStatus {
    guard(|| {
        let m = handle(model)?;
        save_model(&m.0, path_arg(path)?)?;
        Ok(())
    })
}

/// Tile side the model expects, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cishmap_model_input_side(model: *const CishmapModel) -> u32 {
    model.as_ref().map_or(0, |m| m.0.input_shape[1] as u32)
}

/// Length of a latent code, or 0 for a NULL handle.
///
/// # Safety
/// `model` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cishmap_model_code_size(model: *const CishmapModel) -> u32 {
    model.as_ref().map_or(0, |m| m.0.code_size() as u32)
}

/// Encodes one row-major `side × side` tile with values in [0, 1].
///
/// # Safety
/// `pixels` must hold `n_pixels` floats and `code` room for `code_len` floats.
#[no_mangle]
pub unsafe extern "C" fn cishmap_model_encode(
    model: *const CishmapModel,
    pixels: *const f32,
    n_pixels: usize,
    code: *mut f32,
    code_len: usize,
) -> CishmapStatus {
    guard(|| {
        let m = &handle(model)?.0;
        let data = slice_arg(pixels, n_pixels, "pixels")?;
        let tile = Tensor::new(m.input_shape.clone(), data.to_vec())?;
        let z = m.encode(&tile)?;
        out_slice(code, code_len, z.len(), "code")?.copy_from_slice(z.data());
        Ok(())
    })
}

/// Decodes a latent code into a row-major `side × side` tile.
///
/// # Safety
/// `code` must hold `code_len` floats and `pixels` room for `n_pixels` floats.
#[no_mangle]
pub unsafe extern "C" fn cishmap_model_decode(
    model: *const CishmapModel,
    code: *const f32,
    code_len: usize,
    pixels: *mut f32,
    n_pixels: usize,
) -> CishmapStatus {
    guard(|| {
        let m = &handle(model)?.0;
        let z = Tensor::new(vec![code_len], slice_arg(code, code_len, "code")?.to_vec())?;
        let tile = m.decode(&z)?;
        out_slice(pixels, n_pixels, tile.len(), "pixels")?.copy_from_slice(tile.data());
        Ok(())
    })
}

/// # Safety
/// `model` must be NULL or a handle from this library not already freed.
#[no_mangle]
pub unsafe extern "C" fn cishmap_model_free(model: *mut CishmapModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Fuzzy c-means on `n` points of dimension `d` (row-major).
///
/// Writes `n × c` memberships and `c × d` centroids, both row-major. Any of
/// `iterations` and `fpc` may be NULL.
///
/// # Safety
/// Every non-NULL pointer must reference a buffer of the stated size.
#[no_mangle]
pub unsafe extern "C" fn cishmap_fcm_fit(
    points: *const f64,
    n: usize,
    d: usize,
    c: u32,
    m: f64,
    tol: f64,
    max_iter: u32,
    seed: u64,
    memberships: *mut f64,
    memberships_len: usize,
    centroids: *mut f64,
    centroids_len: usize,
    iterations: *mut u32,
    fpc: *mut f64,
) -> CishmapStatus {
    guard(|| {
        let len = n
            .checked_mul(d)
            .ok_or_else(|| fail(CishmapStatus::InvalidArgument, "n × d overflows"))?;
        let x = Matrix::new(n, d, slice_arg(points, len, "points")?.to_vec())?;
        let cfg = FcmConfig {
            c: c as usize,
            m,
            tol,
            max_iter: max_iter as usize,
            seed,
        };
        let fit = fcm_fit(&x, &cfg)?;
        out_slice(memberships, memberships_len, n * cfg.c, "memberships")?
            .copy_from_slice(fit.memberships.data());
        out_slice(centroids, centroids_len, cfg.c * d, "centroids")?
            .copy_from_slice(fit.centroids.data());
        if !iterations.is_null() {
            *iterations = fit.iterations as u32;
        }
        if !fpc.is_null() {
            *fpc = fit.fpc;
        }
        Ok(())
    })
}

/// Builds a tissue mask from an 8-bit gray or RGB PNG.
///
/// # Safety
/// `path` must be NUL-terminated and `out` valid handle storage.
#[no_mangle]
pub unsafe extern "C" fn cishmap_mask_from_png(
    path: *const c_char,
    scale_um_per_px: f64,
    downscale: u32,
    blur_sigma: f64,
    erosion_radius: u32,
    invert: bool,
    out: *mut *mut CishmapMask,
) -> CishmapStatus {
    guard(|| {
        let slide = GrayImage::load_png(path_arg(path)?, scale_um_per_px)?;
        let params = MaskParams {
            downscale: downscale as usize,
            blur_sigma,
            seed_radius: erosion_radius as usize,
            invert,
        };
        let result = build_mask(&slide, &params)?;
        store(out, CishmapMask(result.mask))
    })
}

/// # Safety
/// `mask` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cishmap_mask_width(mask: *const CishmapMask) -> u32 {
    mask.as_ref().map_or(0, |m| m.0.width as u32)
}

/// # Safety
/// `mask` must be NULL or come from this library.
#[no_mangle]
pub unsafe extern "C" fn cishmap_mask_height(mask: *const CishmapMask) -> u32 {
    mask.as_ref().map_or(0, |m| m.0.height as u32)
}

/// Copies the mask as row-major bytes, 1 for tissue and 0 for background.
///
/// # Safety
/// `out` must have room for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cishmap_mask_copy(
    mask: *const CishmapMask,
    out: *mut u8,
    len: usize,
) -> CishmapStatus {
    guard(|| {
        let m = &handle(mask)?.0;
        for (o, &b) in out_slice(out, len, m.bits.len(), "mask buffer")?
            .iter_mut()
            .zip(&m.bits)
        {
            *o = b as u8;
        }
        Ok(())
    })
}

/// # Safety
/// `mask` must be NULL or a handle from this library not already freed.
#[no_mangle]
pub unsafe extern "C" fn cishmap_mask_free(mask: *mut CishmapMask) {
    if !mask.is_null() {
        drop(Box::from_raw(mask));
    }
}
