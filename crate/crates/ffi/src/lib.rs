//! C ABI over the sparseseg engine.
//!
//! Objects cross the boundary as opaque handles created by `*_new`/`*_from_*`
//! functions and released with the matching `*_free`. Every fallible call
//! returns an [`SpsStatus`]; on failure [`sps_last_error`] describes the
//! problem for the calling thread. Output buffers are caller-owned: when a
//! buffer is too small the call returns `SPS_STATUS_BUFFER_TOO_SMALL` and
//! writes the required length.

#![allow(clippy::missing_safety_doc)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use sparseseg::geometry::{iou, nms, BBox};
use sparseseg::metrics::{boundary_iou, BinaryMask};
use sparseseg::tensor::{CellCoord, DenseTensor, SpsTensor};
use sparseseg::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpsStatus {
    Ok = 0,
    NullPointer = 1,
    /// Malformed input data.
    InvalidInput = 2,
    /// A contract of the engine was violated.
    Contract = 3,
    Dimension = 4,
    OutOfBounds = 5,
    BufferTooSmall = 6,
    Io = 7,
    Panic = 8,
}

/// Opaque SPS tensor.
pub struct SpsTensorHandle(SpsTensor);

/// Opaque run-length encoded binary mask.
pub struct SpsMaskHandle(BinaryMask);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).expect("interior NULs removed");
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

struct Failure(SpsStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Bounds { .. } => SpsStatus::OutOfBounds,
            Error::Dimension(_) => SpsStatus::Dimension,
            Error::Contract(_) => SpsStatus::Contract,
            Error::Io(_) => SpsStatus::Io,
            Error::Format(_) | Error::Missing(_) | Error::Json(_) => SpsStatus::InvalidInput,
        };
        Failure(status, e.to_string())
    }
}

fn null(what: &str) -> Failure {
    Failure(SpsStatus::NullPointer, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> SpsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => SpsStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            SpsStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn write_out<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(null(what));
    }
    out.write(value);
    Ok(())
}

/// Copies `src` into a caller buffer of `cap` elements, reporting the full
/// length through `len_out` either way.
unsafe fn copy_out<T: Copy>(src: &[T], buf: *mut T, cap: usize, len_out: *mut usize) -> Result<(), Failure> {
    write_out(len_out, src.len(), "length output")?;
    if src.len() > cap {
        return Err(Failure(
            SpsStatus::BufferTooSmall,
            format!("buffer holds {cap} elements, {} needed", src.len()),
        ));
    }
    if !src.is_empty() {
        if buf.is_null() {
            return Err(null("output buffer"));
        }
        ptr::copy_nonoverlapping(src.as_ptr(), buf, src.len());
    }
    Ok(())
}

unsafe fn tensor<'a>(t: *const SpsTensorHandle) -> Result<&'a SpsTensor, Failure> {
    t.as_ref().map(|h| &h.0).ok_or_else(|| null("tensor"))
}

unsafe fn mask<'a>(m: *const SpsMaskHandle) -> Result<&'a BinaryMask, Failure> {
    m.as_ref().map(|h| &h.0).ok_or_else(|| null("mask"))
}

unsafe fn bbox(p: *const f64) -> Result<BBox, Failure> {
    let v = slice(p, 4, "box")?;
    Ok(BBox::new(v[0], v[1], v[2], v[3])?)
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next failing call on the same thread.
#[no_mangle]
pub extern "C" fn sps_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn sps_version() -> *const c_char {
    static VERSION: &CStr = match CStr::from_bytes_with_nul(concat!(env!("CARGO_PKG_VERSION"), "\0").as_bytes()) {
        Ok(v) => v,
        Err(_) => panic!("version string"),
    };
    VERSION.as_ptr()
}

/// Builds a tensor from a channel-major `features x height x width` array,
/// keeping the `n_active` cells given as `(y, x)` pairs active.
#[no_mangle]
pub unsafe extern "C" fn sps_tensor_from_dense(
    features: usize,
    height: usize,
    width: usize,
    data: *const f32,
    active_yx: *const u32,
    n_active: usize,
    out: *mut *mut SpsTensorHandle,
) -> SpsStatus {
    guard(|| {
        let len = features
            .checked_mul(height)
            .and_then(|v| v.checked_mul(width))
            .ok_or_else(|| Failure(SpsStatus::Dimension, "tensor size overflows".into()))?;
        let data = slice(data, len, "data")?;
        let yx = slice(active_yx, 2 * n_active, "active cells")?;
        let dense = DenseTensor::new(features, height, width, data.to_vec())?;
        let cells: Vec<CellCoord> = yx
            .chunks(2)
            .map(|c| CellCoord::new(c[0] as usize, c[1] as usize))
            .collect();
        let t = SpsTensor::from_dense(&dense, &cells)?;
        write_out(out, Box::into_raw(Box::new(SpsTensorHandle(t))), "output handle")
    })
}

/// Parses the binary tensor dump.
#[no_mangle]
pub unsafe extern "C" fn sps_tensor_read_binary(
    bytes: *const u8,
    len: usize,
    out: *mut *mut SpsTensorHandle,
) -> SpsStatus {
    guard(|| {
        let b = slice(bytes, len, "bytes")?;
        let t = SpsTensor::read_binary(b)?;
        write_out(out, Box::into_raw(Box::new(SpsTensorHandle(t))), "output handle")
    })
}

/// Writes the binary tensor dump into `buf`.
#[no_mangle]
pub unsafe extern "C" fn sps_tensor_write_binary(
    t: *const SpsTensorHandle,
    buf: *mut u8,
    cap: usize,
    len_out: *mut usize,
) -> SpsStatus {
    guard(|| copy_out(&tensor(t)?.to_binary(), buf, cap, len_out))
}

/// Feature size, grid height and width, active and passive row counts.
#[no_mangle]
pub unsafe extern "C" fn sps_tensor_shape(t: *const SpsTensorHandle, dims_out: *mut usize) -> SpsStatus {
    guard(|| {
        let t = tensor(t)?;
        if dims_out.is_null() {
            return Err(null("dims output"));
        }
        let dims = [t.features(), t.height(), t.width(), t.num_active(), t.num_passive()];
        ptr::copy_nonoverlapping(dims.as_ptr(), dims_out, dims.len());
        Ok(())
    })
}

/// Scatters the tensor back to a channel-major dense array.
#[no_mangle]
pub unsafe extern "C" fn sps_tensor_to_dense(
    t: *const SpsTensorHandle,
    buf: *mut f32,
    cap: usize,
    len_out: *mut usize,
) -> SpsStatus {
    guard(|| copy_out(tensor(t)?.to_dense().as_slice(), buf, cap, len_out))
}

/// The row-major index map.
#[no_mangle]
pub unsafe extern "C" fn sps_tensor_index_map(
    t: *const SpsTensorHandle,
    buf: *mut u32,
    cap: usize,
    len_out: *mut usize,
) -> SpsStatus {
    guard(|| copy_out(tensor(t)?.index_map(), buf, cap, len_out))
}

#[no_mangle]
pub unsafe extern "C" fn sps_tensor_free(t: *mut SpsTensorHandle) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

/// Encodes a row-major bitmap (nonzero bytes are foreground).
#[no_mangle]
pub unsafe extern "C" fn sps_mask_from_bitmap(
    width: usize,
    height: usize,
    pixels: *const u8,
    out: *mut *mut SpsMaskHandle,
) -> SpsStatus {
    guard(|| {
        let len = width
            .checked_mul(height)
            .ok_or_else(|| Failure(SpsStatus::Dimension, "mask size overflows".into()))?;
        let px: Vec<bool> = slice(pixels, len, "pixels")?.iter().map(|&v| v != 0).collect();
        let m = BinaryMask::from_bitmap(width, height, &px)?;
        write_out(out, Box::into_raw(Box::new(SpsMaskHandle(m))), "output handle")
    })
}

/// Wraps column-major run lengths starting with a background run.
#[no_mangle]
pub unsafe extern "C" fn sps_mask_from_counts(
    width: usize,
    height: usize,
    counts: *const u32,
    n_counts: usize,
    out: *mut *mut SpsMaskHandle,
) -> SpsStatus {
    guard(|| {
        let c = slice(counts, n_counts, "counts")?;
        let m = BinaryMask::from_counts(width, height, c.to_vec())?;
        write_out(out, Box::into_raw(Box::new(SpsMaskHandle(m))), "output handle")
    })
}

/// The normalized run lengths.
#[no_mangle]
pub unsafe extern "C" fn sps_mask_counts(
    m: *const SpsMaskHandle,
    buf: *mut u32,
    cap: usize,
    len_out: *mut usize,
) -> SpsStatus {
    guard(|| copy_out(mask(m)?.counts(), buf, cap, len_out))
}

#[no_mangle]
pub unsafe extern "C" fn sps_mask_area(m: *const SpsMaskHandle, out: *mut u64) -> SpsStatus {
    guard(|| write_out(out, mask(m)?.area(), "area output"))
}

#[no_mangle]
pub unsafe extern "C" fn sps_mask_iou(a: *const SpsMaskHandle, b: *const SpsMaskHandle, out: *mut f64) -> SpsStatus {
    guard(|| write_out(out, mask(a)?.iou(mask(b)?)?, "iou output"))
}

/// Boundary IoU with band width `d_frac` of the image diagonal.
#[no_mangle]
pub unsafe extern "C" fn sps_mask_boundary_iou(
    a: *const SpsMaskHandle,
    b: *const SpsMaskHandle,
    d_frac: f64,
    out: *mut f64,
) -> SpsStatus {
    guard(|| write_out(out, boundary_iou(mask(a)?, mask(b)?, d_frac)?, "iou output"))
}

#[no_mangle]
pub unsafe extern "C" fn sps_mask_free(m: *mut SpsMaskHandle) {
    if !m.is_null() {
        drop(Box::from_raw(m));
    }
}

/// IoU of two `[x0, y0, x1, y1]` boxes.
#[no_mangle]
pub unsafe extern "C" fn sps_box_iou(a: *const f64, b: *const f64, out: *mut f64) -> SpsStatus {
    guard(|| write_out(out, iou(&bbox(a)?, &bbox(b)?), "iou output"))
}

/// Greedy NMS over `n` boxes (`4 * n` coordinates). Kept indices are
/// written in score order.
#[no_mangle]
pub unsafe extern "C" fn sps_nms(
    boxes: *const f64,
    scores: *const f64,
    n: usize,
    iou_thresh: f64,
    keep: *mut usize,
    cap: usize,
    kept_out: *mut usize,
) -> SpsStatus {
    guard(|| {
        let coords = slice(boxes, 4 * n, "boxes")?;
        let scores = slice(scores, n, "scores")?;
        let dets = coords
            .chunks(4)
            .zip(scores)
            .map(|(c, &s)| Ok((BBox::new(c[0], c[1], c[2], c[3])?, s)))
            .collect::<Result<Vec<_>, Error>>()?;
        copy_out(&nms(&dets, iou_thresh), keep, cap, kept_out)
    })
}
