//! C ABI over the `fsl` crate.
//!
//! Every fallible function returns an [`FslStatus`]; on failure a message is
//! available from [`fsl_last_error`] on the same thread. Datasets and encoders
//! are opaque handles owned by the caller and released with the matching
//! `_free` function. Matrices are dense row-major `double` buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{self, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use fsl::checkpoint::Checkpoint;
use fsl::config::DatasetManifest;
use fsl::encoder::{EncoderConfig, EncoderState};
use fsl::episodes::{make_synthetic_dataset, SplitRole, SplitSet, SyntheticParams};
use fsl::eval::evaluate;
use fsl::losses::{self, InterDenominator, PredictionMatrix};
use fsl::prototypes::class_prototypes;
use fsl::{rng, Error};
use ndarray::{ArrayView2, ShapeError};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FslStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Shape = 3,
    Io = 4,
    Format = 5,
    Numeric = 6,
    Data = 7,
    Panic = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FslSplit {
    Base = 0,
    Val = 1,
    Novel = 2,
}

impl From<FslSplit> for SplitRole {
    fn from(s: FslSplit) -> Self {
        match s {
            FslSplit::Base => SplitRole::Base,
            FslSplit::Val => SplitRole::Val,
            FslSplit::Novel => SplitRole::Novel,
        }
    }
}

/// Base, validation and novel splits.
pub struct FslDataset(SplitSet);

/// Encoder parameters and configuration.
pub struct FslEncoder(EncoderState);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(FslStatus, String);

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::InvalidArgument(_) | Error::AlphaOutOfRange(_) | Error::LabelOutOfRange { .. } | Error::Config(_) => {
                FslStatus::InvalidArgument
            }
            Error::Shape(_) | Error::LabelCount { .. } | Error::ZeroVector => FslStatus::Shape,
            Error::MissingPath(_) | Error::Io(_) => FslStatus::Io,
            Error::Json(_) | Error::Checkpoint(_) | Error::Image(_) | Error::UndecodableImage { .. } => FslStatus::Format,
            Error::NonFinite(_) | Error::Divergence(_) | Error::NonFiniteLoss { .. } => FslStatus::Numeric,
            _ => FslStatus::Data,
        };
        Failure(status, e.to_string())
    }
}

impl From<ShapeError> for Failure {
    fn from(e: ShapeError) -> Self {
        Failure(FslStatus::Shape, e.to_string())
    }
}

fn fail(status: FslStatus, msg: impl Into<String>) -> Failure {
    Failure(status, msg.into())
}

fn set_error(msg: &str) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> FslStatus {
    match panic::catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            LAST_ERROR.with(|e| *e.borrow_mut() = None);
            FslStatus::Ok
        }
        Ok(Err(Failure(status, msg))) => {
            set_error(&msg);
            status
        }
        Err(_) => {
            set_error("internal panic");
            FslStatus::Panic
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize, what: &str) -> Result<&'a [T], Failure> {
    if len == 0 {
        return Ok(&[]);
    }
    if p.is_null() {
        return Err(fail(FslStatus::NullPointer, format!("{what} is null")));
    }
    Ok(unsafe { std::slice::from_raw_parts(p, len) })
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize, what: &str) -> Result<&'a mut [T], Failure> {
    if len == 0 {
        return Ok(&mut []);
    }
    if p.is_null() {
        return Err(fail(FslStatus::NullPointer, format!("{what} is null")));
    }
    Ok(unsafe { std::slice::from_raw_parts_mut(p, len) })
}

unsafe fn matrix<'a>(p: *const f64, rows: usize, cols: usize, what: &str) -> Result<ArrayView2<'a, f64>, Failure> {
    let len = rows.checked_mul(cols).ok_or_else(|| fail(FslStatus::Shape, format!("{what} is too large")))?;
    let data = unsafe { slice(p, len, what)? };
    Ok(ArrayView2::from_shape((rows, cols), data)?)
}

unsafe fn labels(p: *const u32, len: usize) -> Result<Vec<usize>, Failure> {
    Ok(unsafe { slice(p, len, "labels")? }.iter().map(|&l| l as usize).collect())
}

unsafe fn out_ref<'a, T>(p: *mut T, what: &str) -> Result<&'a mut T, Failure> {
    unsafe { p.as_mut() }.ok_or_else(|| fail(FslStatus::NullPointer, format!("{what} is null")))
}

unsafe fn path(p: *const c_char) -> Result<PathBuf, Failure> {
    if p.is_null() {
        return Err(fail(FslStatus::NullPointer, "path is null"));
    }
    let s = unsafe { CStr::from_ptr(p) }
        .to_str()
        .map_err(|_| fail(FslStatus::InvalidArgument, "path is not valid UTF-8"))?;
    Ok(PathBuf::from(s))
}

fn copy_out(src: &[f64], dst: &mut [f64]) -> Result<(), Failure> {
    if src.len() != dst.len() {
        return Err(fail(FslStatus::Shape, format!("output holds {} values, result has {}", dst.len(), src.len())));
    }
    dst.copy_from_slice(src);
    Ok(())
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call into this library on the same thread.
#[no_mangle]
pub extern "C" fn fsl_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn fsl_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Builds a synthetic dataset (gaussian blobs) and partitions its classes into
/// base, validation and novel splits.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn fsl_dataset_synthetic(
    base_classes: usize,
    val_classes: usize,
    novel_classes: usize,
    dim: usize,
    per_class: usize,
    class_sep: f64,
    intra_std: f64,
    seed: u64,
    out: *mut *mut FslDataset,
) -> FslStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out")? };
        let params = SyntheticParams {
            num_classes: base_classes + val_classes + novel_classes,
            dim,
            per_class,
            class_sep,
            intra_std,
            seed,
        };
        let full = make_synthetic_dataset(&params)?;
        let splits = SplitSet::partition(&full, [base_classes, val_classes, novel_classes])?;
        *out = Box::into_raw(Box::new(FslDataset(splits)));
        Ok(())
    })
}

/// Loads a dataset directory written by `fsl synth-data`.
///
/// # Safety
/// `dir` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsl_dataset_load(dir: *const c_char, out: *mut *mut FslDataset) -> FslStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out")? };
        let dir = unsafe { path(dir)? };
        let splits = DatasetManifest::load(&dir)?.load_splits(&dir)?;
        *out = Box::into_raw(Box::new(FslDataset(splits)));
        Ok(())
    })
}

/// Releases a dataset handle. Null is ignored.
///
/// # Safety
/// `ds` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fsl_dataset_free(ds: *mut FslDataset) {
    if !ds.is_null() {
        drop(unsafe { Box::from_raw(ds) });
    }
}

/// Class count, item count and flattened sample width of one split.
///
/// # Safety
/// `ds` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsl_dataset_split_info(
    ds: *const FslDataset,
    split: FslSplit,
    num_classes: *mut usize,
    num_items: *mut usize,
    sample_dim: *mut usize,
) -> FslStatus {
    guard(|| {
        let ds = unsafe { ds.as_ref() }.ok_or_else(|| fail(FslStatus::NullPointer, "dataset is null"))?;
        let s = ds.0.get(split.into());
        *unsafe { out_ref(num_classes, "num_classes")? } = s.num_classes();
        *unsafe { out_ref(num_items, "num_items")? } = s.len();
        *unsafe { out_ref(sample_dim, "sample_dim")? } = s.sample_dim();
        Ok(())
    })
}

/// Fresh two-layer perceptron encoder.
///
/// # Safety
/// `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsl_encoder_new_mlp(
    input_dim: usize,
    hidden: usize,
    embed_dim: usize,
    seed: u64,
    out: *mut *mut FslEncoder,
) -> FslStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out")? };
        let state = EncoderState::new(EncoderConfig::mlp2(input_dim, hidden, embed_dim, seed))?;
        *out = Box::into_raw(Box::new(FslEncoder(state)));
        Ok(())
    })
}

/// Loads the encoder stored in a checkpoint file.
///
/// # Safety
/// `file` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsl_encoder_load(file: *const c_char, out: *mut *mut FslEncoder) -> FslStatus {
    guard(|| {
        let out = unsafe { out_ref(out, "out")? };
        let ckpt = Checkpoint::load(&unsafe { path(file)? }, None)?;
        *out = Box::into_raw(Box::new(FslEncoder(ckpt.encoder)));
        Ok(())
    })
}

/// Writes an encoder-only checkpoint.
///
/// # Safety
/// `enc` must be a live handle; `file` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn fsl_encoder_save(enc: *const FslEncoder, file: *const c_char) -> FslStatus {
    guard(|| {
        let enc = unsafe { enc.as_ref() }.ok_or_else(|| fail(FslStatus::NullPointer, "encoder is null"))?;
        Checkpoint::encoder_only(enc.0.clone()).save(&unsafe { path(file)? })?;
        Ok(())
    })
}

/// Releases an encoder handle. Null is ignored.
///
/// # Safety
/// `enc` must be null or a handle from this library not yet freed.
#[no_mangle]
pub unsafe extern "C" fn fsl_encoder_free(enc: *mut FslEncoder) {
    if !enc.is_null() {
        drop(unsafe { Box::from_raw(enc) });
    }
}

/// Flattened input width and embedding width of an encoder.
///
/// # Safety
/// `enc` must be a live handle; the out pointers must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsl_encoder_dims(enc: *const FslEncoder, input_dim: *mut usize, embed_dim: *mut usize) -> FslStatus {
    guard(|| {
        let enc = unsafe { enc.as_ref() }.ok_or_else(|| fail(FslStatus::NullPointer, "encoder is null"))?;
        *unsafe { out_ref(input_dim, "input_dim")? } = enc.0.config.input_dim();
        *unsafe { out_ref(embed_dim, "embed_dim")? } = enc.0.embed_dim();
        Ok(())
    })
}

/// Embeds `rows` samples (`rows x input_dim`) into `out` (`rows x embed_dim`).
///
/// # Safety
/// Buffers must hold the stated number of doubles.
#[no_mangle]
pub unsafe extern "C" fn fsl_encoder_encode(
    enc: *const FslEncoder,
    input: *const f64,
    rows: usize,
    cols: usize,
    out: *mut f64,
    out_len: usize,
) -> FslStatus {
    guard(|| {
        let enc = unsafe { enc.as_ref() }.ok_or_else(|| fail(FslStatus::NullPointer, "encoder is null"))?;
        let x = unsafe { matrix(input, rows, cols, "input")? };
        let emb = enc.0.encode(x)?;
        copy_out(emb.as_standard_layout().as_slice().unwrap_or_default(), unsafe { slice_mut(out, out_len, "out")? })
    })
}

/// N-way K-shot nearest-prototype evaluation over `episodes` episodes drawn
/// from `split` with the evaluation stream of `seed`. Writes the mean
/// accuracy and its 95% confidence half-width.
///
/// # Safety
/// Handles must be live; the out pointers writable.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn fsl_evaluate(
    enc: *const FslEncoder,
    ds: *const FslDataset,
    split: FslSplit,
    n_way: usize,
    k_shot: usize,
    q_query: usize,
    episodes: usize,
    seed: u64,
    mean_accuracy: *mut f64,
    ci95: *mut f64,
) -> FslStatus {
    guard(|| {
        let enc = unsafe { enc.as_ref() }.ok_or_else(|| fail(FslStatus::NullPointer, "encoder is null"))?;
        let ds = unsafe { ds.as_ref() }.ok_or_else(|| fail(FslStatus::NullPointer, "dataset is null"))?;
        let report = evaluate(&enc.0, ds.0.get(split.into()), n_way, k_shot, q_query, episodes, &mut rng::stream(seed, "eval", 0))?;
        *unsafe { out_ref(mean_accuracy, "mean_accuracy")? } = report.mean_accuracy;
        *unsafe { out_ref(ci95, "ci95")? } = report.ci95;
        Ok(())
    })
}

/// Class means of `support` (`rows x dim`, `k_shot` rows per label) into
/// `out` (`n_way x dim`).
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn fsl_class_prototypes(
    support: *const f64,
    labels_ptr: *const u32,
    rows: usize,
    dim: usize,
    n_way: usize,
    k_shot: usize,
    out: *mut f64,
    out_len: usize,
) -> FslStatus {
    guard(|| {
        let s = unsafe { matrix(support, rows, dim, "support")? };
        let l = unsafe { labels(labels_ptr, rows)? };
        let p = class_prototypes(s, &l, n_way, k_shot)?;
        copy_out(p.as_slice().unwrap_or_default(), unsafe { slice_mut(out, out_len, "out")? })
    })
}

/// Contrast between the per-view prototype matrices `p1`, `p2` (`n x dim`).
/// A nonzero `include_positive` adds the matching pair to the denominator.
///
/// # Safety
/// Buffers must hold `n * dim` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsl_inter_class_loss(
    p1: *const f64,
    p2: *const f64,
    n: usize,
    dim: usize,
    kappa: f64,
    include_positive: bool,
    out: *mut f64,
) -> FslStatus {
    guard(|| {
        let (a, b) = unsafe { (matrix(p1, n, dim, "p1")?, matrix(p2, n, dim, "p2")?) };
        let denominator = if include_positive { InterDenominator::WithPositive } else { InterDenominator::NegativesOnly };
        *unsafe { out_ref(out, "out")? } = losses::inter_class_loss_grad(a, b, kappa, denominator)?.value;
        Ok(())
    })
}

/// Mean cosine-softmax loss of queries (`rows x dim`) against hybrid
/// prototypes (`n x dim`).
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn fsl_intra_class_loss(
    query: *const f64,
    labels_ptr: *const u32,
    rows: usize,
    hybrid: *const f64,
    n: usize,
    dim: usize,
    tau: f64,
    out: *mut f64,
) -> FslStatus {
    guard(|| {
        let q = unsafe { matrix(query, rows, dim, "query")? };
        let h = unsafe { matrix(hybrid, n, dim, "hybrid")? };
        let l = unsafe { labels(labels_ptr, rows)? };
        *unsafe { out_ref(out, "out")? } = losses::intra_class_loss(q, &l, h, tau)?;
        Ok(())
    })
}

/// Mean cross-entropy of the squared-euclidean softmax classifier.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn fsl_episode_ce_loss(
    query: *const f64,
    labels_ptr: *const u32,
    rows: usize,
    protos: *const f64,
    n: usize,
    dim: usize,
    out: *mut f64,
) -> FslStatus {
    guard(|| {
        let q = unsafe { matrix(query, rows, dim, "query")? };
        let p = unsafe { matrix(protos, n, dim, "protos")? };
        let l = unsafe { labels(labels_ptr, rows)? };
        *unsafe { out_ref(out, "out")? } = losses::episode_ce_loss(q, &l, p)?;
        Ok(())
    })
}

/// True-class probabilities as an `n x (rows / n)` matrix; column `j` of row
/// `c` is the `j`-th query labelled `c`.
///
/// # Safety
/// Buffers must hold the stated number of elements.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn fsl_prediction_matrix(
    query: *const f64,
    labels_ptr: *const u32,
    rows: usize,
    protos: *const f64,
    n: usize,
    dim: usize,
    out: *mut f64,
    out_len: usize,
) -> FslStatus {
    guard(|| {
        let q = unsafe { matrix(query, rows, dim, "query")? };
        let p = unsafe { matrix(protos, n, dim, "protos")? };
        let l = unsafe { labels(labels_ptr, rows)? };
        let a = losses::prediction_matrix(q, &l, p)?;
        copy_out(a.values().as_standard_layout().as_slice().unwrap_or_default(), unsafe {
            slice_mut(out, out_len, "out")?
        })
    })
}

/// Forgetting penalty between current and historical prediction matrices
/// (`n x q`, entries in [0, 1]).
///
/// # Safety
/// Buffers must hold `n * q` doubles; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn fsl_forget_loss(
    current: *const f64,
    history: *const f64,
    n: usize,
    q: usize,
    delta: f64,
    cos_floor: f64,
    out: *mut f64,
) -> FslStatus {
    guard(|| {
        let a = PredictionMatrix::new(unsafe { matrix(current, n, q, "current")? }.to_owned())?;
        let h = PredictionMatrix::new(unsafe { matrix(history, n, q, "history")? }.to_owned())?;
        *unsafe { out_ref(out, "out")? } = losses::forget_loss(&a, &h, delta, cos_floor)?;
        Ok(())
    })
}
