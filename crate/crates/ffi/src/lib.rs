//! C ABI over the `pfan` toolkit.
//!
//! Every fallible call returns a [`PfanStatus`]; on failure the message is
//! available from [`pfan_last_error`] on the same thread. Objects cross the
//! boundary as opaque handles that the caller releases with the matching
//! `*_free` function. Panics are caught and reported as
//! [`PfanStatus::Internal`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;
use std::slice;

use pfan::codec::{decode_layers, encode_layers, CodecId, CodecParams, LayeredBitstream};
use pfan::metrics::{self, BBox, PlateAnnotation, PredictedPlate, Predictions};
use pfan::scoring::{self, ChannelScore, Partition, PrivacyFanConfig};
use pfan::tensor::FeatureTensor;
use pfan::{Error, ErrorKind};

/// Result of a call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PfanStatus {
    Ok = 0,
    /// Bad argument, including a null pointer.
    Usage = 1,
    /// Malformed data.
    Data = 2,
    /// Missing or failing external tooling.
    Environment = 3,
    Io = 4,
    /// A panic inside the library.
    Internal = 5,
}

/// Feature tensor, `height x width x channels`, channel-major `f32`.
pub struct PfanTensor(FeatureTensor);

/// Serialized layered container.
pub struct PfanBitstream(Vec<u8>);

/// One plate for [`pfan_cra`]. `text` is a NUL-terminated UTF-8 string.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PfanPlate {
    pub x: u32,
    pub y: u32,
    pub w: u32,
    pub h: u32,
    pub text: *const c_char,
    /// Ignored for predictions.
    pub readable: bool,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn status_of(e: &Error) -> PfanStatus {
    match e.kind() {
        ErrorKind::Usage => PfanStatus::Usage,
        ErrorKind::Data => PfanStatus::Data,
        ErrorKind::Environment => PfanStatus::Environment,
        ErrorKind::Io => PfanStatus::Io,
    }
}

fn guard<F: FnOnce() -> pfan::Result<()>>(f: F) -> PfanStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PfanStatus::Ok,
        Ok(Err(e)) => {
            set_error(e.to_string());
            status_of(&e)
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("internal error: {msg}"));
            PfanStatus::Internal
        }
    }
}

fn null(what: &str) -> Error {
    Error::Argument(format!("{what} is null"))
}

unsafe fn slice_in<'a, T>(p: *const T, n: usize, what: &str) -> pfan::Result<&'a [T]> {
    if n == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(what));
    }
    Ok(slice::from_raw_parts(p, n))
}

unsafe fn str_in<'a>(p: *const c_char, what: &str) -> pfan::Result<&'a str> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Error::Argument(format!("{what} is not UTF-8")))
}

unsafe fn out<'a, T>(p: *mut T, what: &str) -> pfan::Result<&'a mut T> {
    p.as_mut().ok_or_else(|| null(what))
}

/// Message of the last failed call on this thread, or null. The pointer is
/// valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn pfan_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Builds a tensor from `height * width * channels` channel-major values.
///
/// # Safety
/// `data` must point to that many floats; `out_tensor` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pfan_tensor_new(
    height: usize,
    width: usize,
    channels: usize,
    data: *const f32,
    out_tensor: *mut *mut PfanTensor,
) -> PfanStatus {
    guard(|| {
        let o = out(out_tensor, "out_tensor")?;
        let n = height
            .checked_mul(width)
            .and_then(|v| v.checked_mul(channels))
            .ok_or_else(|| Error::Argument("tensor size overflows".into()))?;
        let values = slice_in(data, n, "data")?.to_vec();
        let t = FeatureTensor::new(height, width, channels, values)?;
        *o = Box::into_raw(Box::new(PfanTensor(t)));
        Ok(())
    })
}

/// Parses a tensor in the native array format.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out_tensor` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pfan_tensor_from_bytes(
    bytes: *const u8,
    len: usize,
    out_tensor: *mut *mut PfanTensor,
) -> PfanStatus {
    guard(|| {
        let o = out(out_tensor, "out_tensor")?;
        let t = FeatureTensor::from_bytes(slice_in(bytes, len, "bytes")?)?;
        *o = Box::into_raw(Box::new(PfanTensor(t)));
        Ok(())
    })
}

/// Writes the tensor shape.
///
/// # Safety
/// `tensor` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn pfan_tensor_shape(
    tensor: *const PfanTensor,
    height: *mut usize,
    width: *mut usize,
    channels: *mut usize,
) -> PfanStatus {
    guard(|| {
        let t = &tensor.as_ref().ok_or_else(|| null("tensor"))?.0;
        *out(height, "height")? = t.height();
        *out(width, "width")? = t.width();
        *out(channels, "channels")? = t.channels();
        Ok(())
    })
}

/// Borrowed pointer to the channel-major values, or null for a null handle.
/// Valid while the handle lives.
///
/// # Safety
/// `tensor` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pfan_tensor_data(tensor: *const PfanTensor) -> *const f32 {
    tensor.as_ref().map_or(ptr::null(), |t| t.0.data().as_ptr())
}

/// # Safety
/// `tensor` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pfan_tensor_free(tensor: *mut PfanTensor) {
    if !tensor.is_null() {
        drop(Box::from_raw(tensor));
    }
}

/// Edit distance between two UTF-8 strings, counted in characters.
///
/// # Safety
/// `a` and `b` must be NUL-terminated; `distance` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pfan_levenshtein(a: *const c_char, b: *const c_char, distance: *mut usize) -> PfanStatus {
    guard(|| {
        let d = out(distance, "distance")?;
        *d = metrics::levenshtein(str_in(a, "a")?, str_in(b, "b")?);
        Ok(())
    })
}

/// Character recognition accuracy of `predicted` against `ground`, both on
/// one image. The value is a percentage and may be negative.
///
/// # Safety
/// The arrays must hold the given number of plates with valid strings;
/// `cra` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pfan_cra(
    ground: *const PfanPlate,
    ground_len: usize,
    predicted: *const PfanPlate,
    predicted_len: usize,
    cra: *mut f64,
) -> PfanStatus {
    guard(|| {
        let o = out(cra, "cra")?;
        let image = "image".to_string();
        let truth = slice_in(ground, ground_len, "ground")?
            .iter()
            .map(|p| {
                Ok(PlateAnnotation {
                    image_id: image.clone(),
                    bbox: BBox::new(p.x, p.y, p.w, p.h),
                    text: str_in(p.text, "plate text")?.to_string(),
                    readable: p.readable,
                })
            })
            .collect::<pfan::Result<Vec<_>>>()?;
        let preds = slice_in(predicted, predicted_len, "predicted")?
            .iter()
            .map(|p| {
                Ok(PredictedPlate {
                    bbox: BBox::new(p.x, p.y, p.w, p.h),
                    text: str_in(p.text, "plate text")?.to_string(),
                })
            })
            .collect::<pfan::Result<Vec<_>>>()?;
        let mut by_image = Predictions::new();
        by_image.insert(image, preds);
        *o = metrics::cra(&truth, &by_image)?.cra;
        Ok(())
    })
}

/// Per-channel objective: reconstruction loss minus `beta` times the
/// information about the public tasks.
#[no_mangle]
pub extern "C" fn pfan_lagrangian(delta_mse: f64, mi_seg: f64, mi_disp: f64, beta: f64) -> f64 {
    scoring::lagrangian(delta_mse, mi_seg, mi_disp, beta)
}

/// Splits `channels` channels by their Lagrangian values: the `base_size`
/// lowest go to the base set. `base` receives `base_size` indices and
/// `enhancement` the rest, each in ascending order.
///
/// # Safety
/// `lagrangians` must hold `channels` values; `base` and `enhancement` must
/// have room for `base_size` and `channels - base_size` entries.
#[no_mangle]
pub unsafe extern "C" fn pfan_partition(
    lagrangians: *const f64,
    channels: usize,
    base_size: usize,
    base: *mut usize,
    enhancement: *mut usize,
) -> PfanStatus {
    guard(|| {
        let p = partition_of(slice_in(lagrangians, channels, "lagrangians")?, base_size)?;
        copy_out(&p.base, base, "base")?;
        copy_out(&p.enhancement, enhancement, "enhancement")
    })
}

fn partition_of(lagrangians: &[f64], base_size: usize) -> pfan::Result<Partition> {
    let scores: Vec<ChannelScore> = lagrangians
        .iter()
        .enumerate()
        .map(|(i, &l)| ChannelScore {
            channel: i,
            mi_seg: 0.0,
            mi_disp: 0.0,
            delta_mse: l,
            lagrangian: l,
        })
        .collect();
    let cfg = PrivacyFanConfig {
        base_size,
        ..PrivacyFanConfig::default()
    };
    scoring::partition(&scores, &cfg)
}

unsafe fn copy_out(values: &[usize], dst: *mut usize, what: &str) -> pfan::Result<()> {
    if values.is_empty() {
        return Ok(());
    }
    if dst.is_null() {
        return Err(null(what));
    }
    ptr::copy_nonoverlapping(values.as_ptr(), dst, values.len());
    Ok(())
}

/// Encodes `tensor` with the internal codec: channels in `base` at
/// `base_qp`, channels in `enhancement` at `enhancement_qp`. The two lists
/// must cover every channel exactly once.
///
/// # Safety
/// `tensor` must be a live handle, the index arrays must hold the given
/// counts, and `out_stream` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pfan_encode(
    tensor: *const PfanTensor,
    base: *const usize,
    base_len: usize,
    enhancement: *const usize,
    enhancement_len: usize,
    base_qp: u8,
    enhancement_qp: u8,
    out_stream: *mut *mut PfanBitstream,
) -> PfanStatus {
    guard(|| {
        let o = out(out_stream, "out_stream")?;
        let t = &tensor.as_ref().ok_or_else(|| null("tensor"))?.0;
        let split = Partition {
            base: slice_in(base, base_len, "base")?.to_vec(),
            enhancement: slice_in(enhancement, enhancement_len, "enhancement")?.to_vec(),
        };
        let bs = encode_layers(
            t,
            &split,
            &CodecParams::internal(base_qp),
            &CodecParams::internal(enhancement_qp),
            None,
        )?;
        *o = Box::into_raw(Box::new(PfanBitstream(bs.to_bytes()?)));
        Ok(())
    })
}

/// Wraps serialized container bytes after checking that they parse.
///
/// # Safety
/// `bytes` must point to `len` readable bytes; `out_stream` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pfan_bitstream_from_bytes(
    bytes: *const u8,
    len: usize,
    out_stream: *mut *mut PfanBitstream,
) -> PfanStatus {
    guard(|| {
        let o = out(out_stream, "out_stream")?;
        let raw = slice_in(bytes, len, "bytes")?;
        LayeredBitstream::from_bytes(raw)?;
        *o = Box::into_raw(Box::new(PfanBitstream(raw.to_vec())));
        Ok(())
    })
}

/// Borrowed view of the container bytes, valid while the handle lives.
///
/// # Safety
/// `stream` must be a live handle; `bytes` and `len` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pfan_bitstream_bytes(
    stream: *const PfanBitstream,
    bytes: *mut *const u8,
    len: *mut usize,
) -> PfanStatus {
    guard(|| {
        let s = &stream.as_ref().ok_or_else(|| null("stream"))?.0;
        *out(bytes, "bytes")? = s.as_ptr();
        *out(len, "len")? = s.len();
        Ok(())
    })
}

/// Decodes a container produced by the internal codec.
///
/// # Safety
/// `stream` must be a live handle; `out_tensor` must be writable.
#[no_mangle]
pub unsafe extern "C" fn pfan_decode(stream: *const PfanBitstream, out_tensor: *mut *mut PfanTensor) -> PfanStatus {
    guard(|| {
        let o = out(out_tensor, "out_tensor")?;
        let s = &stream.as_ref().ok_or_else(|| null("stream"))?.0;
        let bs = LayeredBitstream::from_bytes(s)?;
        if [bs.base.codec.codec, bs.enhancement.codec.codec].contains(&CodecId::External) {
            return Err(Error::Argument("external-codec streams are not supported here".into()));
        }
        *o = Box::into_raw(Box::new(PfanTensor(decode_layers(&bs, None)?)));
        Ok(())
    })
}

/// # Safety
/// `stream` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pfan_bitstream_free(stream: *mut PfanBitstream) {
    if !stream.is_null() {
        drop(Box::from_raw(stream));
    }
}
