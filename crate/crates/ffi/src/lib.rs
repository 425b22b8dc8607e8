//! C ABI over the ramix pipeline: opaque model handles, status codes and a
//! thread-local last-error message. Every entry point catches panics.

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use ramix::mdnn::{self, Model};
use ramix::metrics::{EvalBatch, MetricsReport};
use ramix::spectrum::MixtureLabel;
use ramix::tf::{ImagePipeline, ScaleImage, TfKind, TransformConfig, TransformKind};
use ramix::{Error, ErrorCategory};

/// Result of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RamixStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidInput = 2,
    Config = 3,
    Io = 4,
    Format = 5,
    Training = 6,
    BufferTooSmall = 7,
    Panic = 8,
}

/// Time-frequency transform used to build a scale image.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RamixTransform {
    Stft = 0,
    Wvd = 1,
    Cwt = 2,
}

/// Summary metrics of a scored batch.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct RamixMetrics {
    pub n_samples: usize,
    pub hamming_loss: f64,
    pub one_error: f64,
    pub coverage: f64,
    pub ranking_loss: f64,
    pub average_precision: f64,
    pub f1_macro: f64,
    pub f1_micro: f64,
}

/// Opaque trained model.
pub struct RamixModel {
    model: Model,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: String) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg);
}

fn status_of(e: &Error) -> RamixStatus {
    match e.category() {
        ErrorCategory::InvalidInput => RamixStatus::InvalidInput,
        ErrorCategory::Config => RamixStatus::Config,
        ErrorCategory::Io => RamixStatus::Io,
        ErrorCategory::Format => RamixStatus::Format,
        ErrorCategory::Training => RamixStatus::Training,
    }
}

struct Fail(RamixStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(name: &str) -> Fail {
    Fail(RamixStatus::NullPointer, format!("{name} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> RamixStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error(String::new());
            RamixStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            RamixStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, name: &str) -> Result<&'a [T], Fail> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts(p, len))
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, name: &str) -> Result<&'a mut [T], Fail> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(null(name));
    }
    Ok(std::slice::from_raw_parts_mut(p, len))
}

unsafe fn model_ref<'a>(m: *const RamixModel) -> Result<&'a RamixModel, Fail> {
    m.as_ref().ok_or_else(|| null("model"))
}

fn write_prediction(model: &Model, image: &ScaleImage, threshold: f64, scores: &mut [f64], bits: &mut u32) -> Result<(), Fail> {
    let q = model.config().n_labels;
    if scores.len() < q {
        return Err(Fail(RamixStatus::BufferTooSmall, format!("scores buffer holds {}, model has {q} labels", scores.len())));
    }
    let p = mdnn::predict_labels(model, image, threshold)?;
    scores[..q].copy_from_slice(&p.scores);
    *bits = p.bits.iter().enumerate().filter(|(_, &b)| b).fold(0, |acc, (j, _)| acc | (1 << j));
    Ok(())
}

fn pipeline(kind: RamixTransform, n: usize, height: usize, width: usize) -> Result<ImagePipeline, Fail> {
    let kind = match kind {
        RamixTransform::Stft => TransformKind::Stft,
        RamixTransform::Wvd => TransformKind::Wvd,
        RamixTransform::Cwt => TransformKind::Cwt,
    };
    Ok(ImagePipeline::new(TransformConfig { kind, height, width, ..TransformConfig::default() }, n)?)
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn ramix_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length excluding the NUL.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn ramix_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Loads a checkpoint file. On success `*out` owns a model to release with `ramix_model_free`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn ramix_model_load(path: *const c_char, out: *mut *mut RamixModel) -> RamixStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = ptr::null_mut();
        if path.is_null() {
            return Err(null("path"));
        }
        let path = CStr::from_ptr(path).to_str().map_err(|_| Fail(RamixStatus::InvalidInput, "path is not UTF-8".into()))?;
        let model = mdnn::load_checkpoint(path)?;
        *out = Box::into_raw(Box::new(RamixModel { model }));
        Ok(())
    })
}

/// Releases a model; null is a no-op.
///
/// # Safety
/// `model` must come from `ramix_model_load` and not be used afterwards.
#[no_mangle]
pub unsafe extern "C" fn ramix_model_free(model: *mut RamixModel) {
    if !model.is_null() {
        drop(Box::from_raw(model));
    }
}

/// Reports the expected image size and label count.
///
/// # Safety
/// All pointers must be valid; output pointers may be null to skip.
#[no_mangle]
pub unsafe extern "C" fn ramix_model_shape(
    model: *const RamixModel,
    height: *mut usize,
    width: *mut usize,
    n_labels: *mut usize,
) -> RamixStatus {
    guard(|| {
        let cfg = model_ref(model)?.model.config();
        for (p, v) in [(height, cfg.input_hw.0), (width, cfg.input_hw.1), (n_labels, cfg.n_labels)] {
            if let Some(p) = p.as_mut() {
                *p = v;
            }
        }
        Ok(())
    })
}

/// Scores one row-major image in [0,1] of the model's input size. Writes
/// `n_labels` sigmoid scores and a bit mask (bit j = label j at or above threshold).
///
/// # Safety
/// `pixels` must hold `n_pixels` floats, `scores` `n_scores` doubles, `label_bits` one u32.
#[no_mangle]
pub unsafe extern "C" fn ramix_model_predict_image(
    model: *const RamixModel,
    pixels: *const f32,
    n_pixels: usize,
    threshold: f64,
    scores: *mut f64,
    n_scores: usize,
    label_bits: *mut u32,
) -> RamixStatus {
    guard(|| {
        let m = &model_ref(model)?.model;
        let (h, w) = m.config().input_hw;
        if n_pixels != h * w {
            return Err(Fail(RamixStatus::InvalidInput, format!("expected {} pixels ({h}x{w}), got {n_pixels}", h * w)));
        }
        let px = slice(pixels, n_pixels, "pixels")?.to_vec();
        let image = ScaleImage::new(h, w, px, TfKind::CwtMagnitude, MixtureLabel::single(0))?;
        let bits = label_bits.as_mut().ok_or_else(|| null("label_bits"))?;
        write_prediction(m, &image, threshold, slice_mut(scores, n_scores, "scores")?, bits)
    })
}

/// Transforms a raw spectrum with `transform` at the model's input size and scores it.
///
/// # Safety
/// `signal` must hold `n` doubles, `scores` `n_scores` doubles, `label_bits` one u32.
#[no_mangle]
pub unsafe extern "C" fn ramix_model_predict_spectrum(
    model: *const RamixModel,
    signal: *const f64,
    n: usize,
    transform: RamixTransform,
    threshold: f64,
    scores: *mut f64,
    n_scores: usize,
    label_bits: *mut u32,
) -> RamixStatus {
    guard(|| {
        let m = &model_ref(model)?.model;
        let (h, w) = m.config().input_hw;
        let image = pipeline(transform, n, h, w)?.image(slice(signal, n, "signal")?, MixtureLabel::single(0))?;
        let bits = label_bits.as_mut().ok_or_else(|| null("label_bits"))?;
        write_prediction(m, &image, threshold, slice_mut(scores, n_scores, "scores")?, bits)
    })
}

/// Writes the `height`×`width` normalized scale image of `signal` into `out` (row-major).
///
/// # Safety
/// `signal` must hold `n` doubles and `out` `out_len` floats.
#[no_mangle]
pub unsafe extern "C" fn ramix_scale_image(
    signal: *const f64,
    n: usize,
    transform: RamixTransform,
    height: usize,
    width: usize,
    out: *mut f32,
    out_len: usize,
) -> RamixStatus {
    guard(|| {
        let pipe = pipeline(transform, n, height, width)?;
        let need = height * width;
        if out_len < need {
            return Err(Fail(RamixStatus::BufferTooSmall, format!("output holds {out_len}, image needs {need}")));
        }
        let image = pipe.image(slice(signal, n, "signal")?, MixtureLabel::single(0))?;
        slice_mut(out, out_len, "out")?[..need].copy_from_slice(&image.pixels);
        Ok(())
    })
}

/// Multi-label metrics of `n`×`q` row-major scores against 0/1 truths.
/// Optional `auc` receives `q` values, NaN where a label has one class only.
///
/// # Safety
/// `scores` and `truths` must hold `n*q` elements; `out` must be writable;
/// `auc` may be null or hold `q` doubles.
#[no_mangle]
pub unsafe extern "C" fn ramix_metrics(
    scores: *const f64,
    truths: *const u8,
    n: usize,
    q: usize,
    threshold: f64,
    out: *mut RamixMetrics,
    auc: *mut f64,
) -> RamixStatus {
    guard(|| {
        let out = out.as_mut().ok_or_else(|| null("out"))?;
        let len = n.checked_mul(q).ok_or_else(|| Fail(RamixStatus::InvalidInput, "n*q overflows".into()))?;
        let s = slice(scores, len, "scores")?.to_vec();
        let t = slice(truths, len, "truths")?.iter().map(|&v| v != 0).collect();
        let r = MetricsReport::compute(&EvalBatch::from_scores(n, q, s, t, threshold)?);
        *out = RamixMetrics {
            n_samples: r.n_samples,
            hamming_loss: r.hamming_loss,
            one_error: r.one_error,
            coverage: r.coverage,
            ranking_loss: r.ranking_loss,
            average_precision: r.average_precision,
            f1_macro: r.f1_macro,
            f1_micro: r.f1_micro,
        };
        if !auc.is_null() {
            let dst = std::slice::from_raw_parts_mut(auc, q);
            for (d, a) in dst.iter_mut().zip(&r.auc) {
                *d = a.unwrap_or(f64::NAN);
            }
        }
        Ok(())
    })
}
