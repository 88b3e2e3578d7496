//! C ABI over `cogcode`: load a trained model, extract per-frame contexts,
//! and Δ-modulate feature matrices into `HCCQ` bitstreams.
//!
//! Every fallible function returns an [`HccStatus`]. On failure the
//! message is kept per thread and read back with [`hcc_last_error`].
//! Matrices are row-major `f32`, frames by dimensions. Output buffers are
//! caller-owned; a too-small buffer gives `HCC_STATUS_BUFFER_TOO_SMALL`
//! with the needed element count written to the length out-parameter.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use cogcode::dataset::AudioWindow;
use cogcode::model::{window_features, Model};
use cogcode::numerics::Tensor;
use cogcode::quantizer::{bitrate, calibrate_steps, dm_decode, dm_encode, FeatureBitstream, StepTable};
use cogcode::Error;

#[repr(C)]
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum HccStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Shape = 4,
    NonFinite = 5,
    /// Malformed, truncated or unsupported file contents.
    Format = 6,
    Checksum = 7,
    Io = 8,
    Panic = 9,
}

/// A loaded model. Free with [`hcc_model_free`].
pub struct HccModel(Model<f32>);

/// Per-dimension Δ-modulation steps. Free with [`hcc_step_table_free`].
pub struct HccStepTable(StepTable);

/// A coded feature matrix. Free with [`hcc_bitstream_free`].
pub struct HccBitstream(FeatureBitstream);

#[repr(C)]
#[derive(Clone, Copy, Debug, Default)]
pub struct HccModelInfo {
    pub window_len: usize,
    pub context_dim: usize,
    pub short_frames: usize,
    /// Zero for the single-stage baseline.
    pub long_frames: usize,
    /// Samples per short frame.
    pub short_hop: usize,
    pub long_hop: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<CString> = RefCell::new(CString::default());
}

struct Failure(HccStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Shape(_) => HccStatus::Shape,
            Error::NonFinite(_) => HccStatus::NonFinite,
            Error::MalformedHeader(_)
            | Error::UnsupportedEncoding(_)
            | Error::VersionMismatch { .. }
            | Error::Corrupt(_)
            | Error::Truncated(_)
            | Error::Json(_) => HccStatus::Format,
            Error::Checksum { .. } => HccStatus::Checksum,
            Error::Io(_) => HccStatus::Io,
            _ => HccStatus::InvalidArgument,
        };
        Failure(status, e.to_string())
    }
}

fn fail(status: HccStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: String) {
    let msg = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn guard(body: impl FnOnce() -> Result<(), Failure>) -> HccStatus {
    match catch_unwind(AssertUnwindSafe(body)) {
        Ok(Ok(())) => HccStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            HccStatus::Panic
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, what: &str) -> Result<&'a T, Failure> {
    p.as_ref().ok_or_else(|| fail(HccStatus::NullPointer, format!("{what} is null")))
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    non_null(p, what)?;
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn put<T>(out: *mut T, value: T, what: &str) -> Result<(), Failure> {
    if out.is_null() {
        return Err(fail(HccStatus::NullPointer, format!("{what} is null")));
    }
    out.write(value);
    Ok(())
}

/// Copies `src` into `dst[..cap]` and reports the length through `len_out`.
unsafe fn copy_out<T: Copy>(src: &[T], dst: *mut T, cap: usize, len_out: *mut usize) -> Result<(), Failure> {
    if !len_out.is_null() {
        len_out.write(src.len());
    }
    if cap < src.len() {
        return Err(fail(HccStatus::BufferTooSmall, format!("buffer holds {cap}, needs {}", src.len())));
    }
    if !src.is_empty() {
        non_null(dst, "output buffer")?;
        ptr::copy_nonoverlapping(src.as_ptr(), dst, src.len());
    }
    Ok(())
}

unsafe fn matrix(data: *const f32, n_frames: usize, n_dims: usize) -> Result<Tensor<f32>, Failure> {
    let len = n_frames
        .checked_mul(n_dims)
        .ok_or_else(|| fail(HccStatus::InvalidArgument, "matrix size overflows"))?;
    Ok(Tensor::new([n_frames, n_dims], slice(data, len, "features")?.to_vec())?)
}

/// Message of the last failed call on this thread. The pointer stays
/// valid until the next failing call on the same thread.
#[no_mangle]
pub extern "C" fn hcc_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ptr())
}

/// Loads an `HCCK` model or training checkpoint.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn hcc_model_load(path: *const c_char, out: *mut *mut HccModel) -> HccStatus {
    guard(|| {
        non_null(path, "path")?;
        let path = CStr::from_ptr(path)
            .to_str()
            .map_err(|_| fail(HccStatus::InvalidArgument, "path is not UTF-8"))?;
        let model = Model::<f32>::load(path)?;
        put(out, Box::into_raw(Box::new(HccModel(model))), "out")
    })
}

/// # Safety
/// `model` must come from [`hcc_model_load`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hcc_model_free(model: *mut HccModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// # Safety
/// `model` must be a live handle and `info` writable.
#[no_mangle]
pub unsafe extern "C" fn hcc_model_info(model: *const HccModel, info: *mut HccModelInfo) -> HccStatus {
    guard(|| {
        let cfg = non_null(model, "model")?.0.config();
        let cognitive = cfg.is_cognitive();
        let value = HccModelInfo {
            window_len: cfg.window_len,
            context_dim: cfg.context_dim,
            short_frames: cfg.short_frames(),
            long_frames: if cognitive { cfg.long_frames() } else { 0 },
            short_hop: cfg.short_hop(),
            long_hop: if cognitive { cfg.long_hop() } else { 0 },
        };
        put(info, value, "info")
    })
}

/// Runs one window of `window_len` samples through the model and writes
/// `c_s` (`short_frames x context_dim`) and, for the two-stage model, `c_l`
/// (`long_frames x context_dim`). `c_l` may be null to skip it.
///
/// # Safety
/// Pointers must be valid for the stated lengths.
#[no_mangle]
pub unsafe extern "C" fn hcc_model_contexts(
    model: *const HccModel,
    samples: *const f32,
    n_samples: usize,
    c_s: *mut f32,
    c_s_cap: usize,
    c_s_len: *mut usize,
    c_l: *mut f32,
    c_l_cap: usize,
    c_l_len: *mut usize,
) -> HccStatus {
    guard(|| {
        let model = &non_null(model, "model")?.0;
        let x = AudioWindow { samples: slice(samples, n_samples, "samples")?.to_vec(), sample_rate: 16000 };
        let f = window_features(model, &x)?;
        copy_out(f.c_s.frames.data(), c_s, c_s_cap, c_s_len)?;
        match (&f.c_l, c_l.is_null()) {
            (Some(l), false) => copy_out(l.frames.data(), c_l, c_l_cap, c_l_len),
            _ => {
                if !c_l_len.is_null() {
                    c_l_len.write(0);
                }
                Ok(())
            }
        }
    })
}

/// Calibrates steps (median absolute frame difference per dimension) and
/// initial-value ranges on one feature matrix.
///
/// # Safety
/// `features` must hold `n_frames * n_dims` values and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn hcc_step_table_calibrate(
    features: *const f32,
    n_frames: usize,
    n_dims: usize,
    out: *mut *mut HccStepTable,
) -> HccStatus {
    guard(|| {
        let table = calibrate_steps(&[matrix(features, n_frames, n_dims)?])?;
        put(out, Box::into_raw(Box::new(HccStepTable(table))), "out")
    })
}

/// # Safety
/// `table` must come from [`hcc_step_table_calibrate`] and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hcc_step_table_free(table: *mut HccStepTable) {
    if !table.is_null() {
        drop(Box::from_raw(table));
    }
}

/// Δ-modulates a feature matrix, one bit per frame transition and dimension.
///
/// # Safety
/// `features` must hold `n_frames * n_dims` values; `table` must be live.
#[no_mangle]
pub unsafe extern "C" fn hcc_dm_encode(
    table: *const HccStepTable,
    features: *const f32,
    n_frames: usize,
    n_dims: usize,
    out: *mut *mut HccBitstream,
) -> HccStatus {
    guard(|| {
        let table = &non_null(table, "table")?.0;
        let bs = dm_encode(&matrix(features, n_frames, n_dims)?, table)?;
        put(out, Box::into_raw(Box::new(HccBitstream(bs))), "out")
    })
}

/// Writes the decoder's reconstruction, `n_frames x n_dims` values.
///
/// # Safety
/// `out` must hold `cap` values; `bs` must be live.
#[no_mangle]
pub unsafe extern "C" fn hcc_dm_decode(bs: *const HccBitstream, out: *mut f32, cap: usize, len: *mut usize) -> HccStatus {
    guard(|| {
        let recon = dm_decode(&non_null(bs, "bitstream")?.0)?;
        let values: Vec<f32> = recon.data().iter().map(|&v| v as f32).collect();
        copy_out(&values, out, cap, len)
    })
}

/// # Safety
/// `n_frames` and `n_dims` must be writable or null.
#[no_mangle]
pub unsafe extern "C" fn hcc_bitstream_shape(bs: *const HccBitstream, n_frames: *mut usize, n_dims: *mut usize) -> HccStatus {
    guard(|| {
        let bs = &non_null(bs, "bitstream")?.0;
        put(n_frames, bs.n_frames, "n_frames")?;
        put(n_dims, bs.n_dims(), "n_dims")
    })
}

/// Serializes to the `HCCQ` byte layout.
///
/// # Safety
/// `out` must hold `cap` bytes; `bs` must be live.
#[no_mangle]
pub unsafe extern "C" fn hcc_bitstream_to_bytes(bs: *const HccBitstream, out: *mut u8, cap: usize, len: *mut usize) -> HccStatus {
    guard(|| {
        let bytes = non_null(bs, "bitstream")?.0.to_bytes()?;
        copy_out(&bytes, out, cap, len)
    })
}

/// Parses `HCCQ` bytes, checking the length fields and checksum.
///
/// # Safety
/// `bytes` must hold `len` bytes and `out` be writable.
#[no_mangle]
pub unsafe extern "C" fn hcc_bitstream_from_bytes(bytes: *const u8, len: usize, out: *mut *mut HccBitstream) -> HccStatus {
    guard(|| {
        let bs = FeatureBitstream::from_bytes(slice(bytes, len, "bytes")?)?;
        put(out, Box::into_raw(Box::new(HccBitstream(bs))), "out")
    })
}

/// # Safety
/// `bs` must come from this library and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn hcc_bitstream_free(bs: *mut HccBitstream) {
    if !bs.is_null() {
        drop(Box::from_raw(bs));
    }
}

/// Payload bits per second for `n_dims` dimensions at one frame per
/// `frame_period_s` seconds; with `n_frames > 0` the stream header is
/// amortized over that many frames.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn hcc_bitrate(n_dims: usize, frame_period_s: f64, n_frames: usize, out: *mut f64) -> HccStatus {
    guard(|| put(out, bitrate(n_dims, frame_period_s, n_frames > 0, n_frames)?, "out"))
}
