//! C ABI over the comvint library.
//!
//! Every fallible function returns a [`ComvintStatus`]. On failure the
//! message is available from [`comvint_last_error`] on the same thread.
//! Strings handed out by this library must be released with
//! [`comvint_string_free`]; handles with their matching `_free` function.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use comvint::annotations::Corpus;
use comvint::config::{load_config, CorpusFormat, CorpusSource};
use comvint::dataset::{self, MixTarget, OptionStyle};
use comvint::eval;
use comvint::pipeline::{self, PipelineError, RunOptions};
use comvint::record::InstructionRecord;
use comvint::selection;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ComvintStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidArgument = 2,
    Io = 3,
    Config = 4,
    Pipeline = 5,
    Halted = 6,
    Insufficient = 7,
    NotFound = 8,
    Panic = 99,
}

/// Opaque annotated-image corpus.
pub struct ComvintCorpus {
    inner: Corpus,
}

/// Opaque list of instruction records.
pub struct ComvintDataset {
    inner: Vec<InstructionRecord>,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(ComvintStatus, String);

impl Failure {
    fn new(status: ComvintStatus, msg: impl std::fmt::Display) -> Self {
        Failure(status, msg.to_string())
    }
}

impl From<PipelineError> for Failure {
    fn from(e: PipelineError) -> Self {
        let status = match &e {
            PipelineError::Config(_) => ComvintStatus::Config,
            PipelineError::Halted { .. } => ComvintStatus::Halted,
            PipelineError::RunNotFound(_) => ComvintStatus::NotFound,
            PipelineError::Io { .. } => ComvintStatus::Io,
            _ => ComvintStatus::Pipeline,
        };
        Failure::new(status, e)
    }
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> ComvintStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => ComvintStatus::Ok,
        Ok(Err(Failure(status, msg))) => {
            set_error(msg);
            status
        }
        Err(_) => {
            set_error("internal panic".into());
            ComvintStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(ComvintStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(ComvintStatus::InvalidArgument, format!("{name} is not UTF-8")))
}

unsafe fn opt_str_arg<'a>(p: *const c_char, name: &str) -> Result<Option<&'a str>, Failure> {
    if p.is_null() {
        Ok(None)
    } else {
        str_arg(p, name).map(Some)
    }
}

unsafe fn handle<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(ComvintStatus::NullArgument, format!("{name} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(ComvintStatus::NullArgument, format!("{name} is null")))
}

fn to_c_string(s: String) -> Result<*mut c_char, Failure> {
    CString::new(s)
        .map(CString::into_raw)
        .map_err(|_| Failure::new(ComvintStatus::InvalidArgument, "string contains NUL"))
}

fn json<T: serde::Serialize + ?Sized>(value: &T) -> Result<*mut c_char, Failure> {
    let s = serde_json::to_string(value).map_err(|e| Failure::new(ComvintStatus::Pipeline, e))?;
    to_c_string(s)
}

fn parse_format(name: &str) -> Result<CorpusFormat, Failure> {
    serde_json::from_value(serde_json::Value::String(name.to_string())).map_err(|_| {
        Failure::new(
            ComvintStatus::InvalidArgument,
            format!("unknown corpus format {name:?}; expected flickr30k_entities, visual_genome or canonical"),
        )
    })
}

/// Message for the most recent failure on this thread, or null.
/// The pointer stays valid until the next call into this library.
#[no_mangle]
pub extern "C" fn comvint_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Library version as a static string.
#[no_mangle]
pub extern "C" fn comvint_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// # Safety
/// `s` must be null or a string returned by this library.
#[no_mangle]
pub unsafe extern "C" fn comvint_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Loads a corpus. `format` is one of `flickr30k_entities`, `visual_genome`
/// or `canonical`.
///
/// # Safety
/// `path` and `format` must be NUL-terminated strings; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn comvint_corpus_load(
    path: *const c_char,
    format: *const c_char,
    out: *mut *mut ComvintCorpus,
) -> ComvintStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let source = CorpusSource {
            path: PathBuf::from(str_arg(path, "path")?),
            format: parse_format(str_arg(format, "format")?)?,
        };
        let inner = pipeline::load_corpus(&source).map_err(|e| Failure::new(ComvintStatus::Io, e))?;
        *out = Box::into_raw(Box::new(ComvintCorpus { inner }));
        Ok(())
    })
}

/// # Safety
/// `corpus` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn comvint_corpus_free(corpus: *mut ComvintCorpus) {
    if !corpus.is_null() {
        drop(Box::from_raw(corpus));
    }
}

/// Number of images; 0 for a null handle.
///
/// # Safety
/// `corpus` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn comvint_corpus_len(corpus: *const ComvintCorpus) -> usize {
    corpus.as_ref().map_or(0, |c| c.inner.len())
}

/// New corpus holding images whose caption richness is at least `min_chars`.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn comvint_corpus_filter_caption_richness(
    corpus: *const ComvintCorpus,
    min_chars: usize,
    out: *mut *mut ComvintCorpus,
) -> ComvintStatus {
    guard(|| {
        let c = handle(corpus, "corpus")?;
        let out = out_ptr(out, "out")?;
        let (kept, _) = selection::filter_by_caption_richness(&c.inner, min_chars);
        *out = Box::into_raw(Box::new(ComvintCorpus { inner: kept }));
        Ok(())
    })
}

/// New corpus holding images with at most `max_objects` objects.
///
/// # Safety
/// `corpus` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn comvint_corpus_filter_object_count(
    corpus: *const ComvintCorpus,
    max_objects: usize,
    out: *mut *mut ComvintCorpus,
) -> ComvintStatus {
    guard(|| {
        let c = handle(corpus, "corpus")?;
        let out = out_ptr(out, "out")?;
        let (kept, _) = selection::filter_by_object_count(&c.inner, max_objects);
        *out = Box::into_raw(Box::new(ComvintCorpus { inner: kept }));
        Ok(())
    })
}

/// Name of the rarest object in `image_id`, by document frequency over the corpus.
///
/// # Safety
/// `corpus` must be a live handle, `image_id` a NUL-terminated string and
/// `out` writable. Free the result with `comvint_string_free`.
#[no_mangle]
pub unsafe extern "C" fn comvint_corpus_topic_entity(
    corpus: *const ComvintCorpus,
    image_id: *const c_char,
    out: *mut *mut c_char,
) -> ComvintStatus {
    guard(|| {
        let c = handle(corpus, "corpus")?;
        let id = str_arg(image_id, "image_id")?;
        let out = out_ptr(out, "out")?;
        let image = c
            .inner
            .get(id)
            .ok_or_else(|| Failure::new(ComvintStatus::NotFound, format!("no image {id:?}")))?;
        let stats = selection::compute_corpus_stats(&c.inner);
        let entity = selection::select_topic_entity(image, &stats)
            .map_err(|e| Failure::new(ComvintStatus::InvalidArgument, e))?;
        *out = to_c_string(entity.name.clone())?;
        Ok(())
    })
}

/// Reads a JSON-lines dataset.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn comvint_dataset_read(path: *const c_char, out: *mut *mut ComvintDataset) -> ComvintStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let inner = dataset::read_records(PathBuf::from(str_arg(path, "path")?).as_path())
            .map_err(|e| Failure::new(ComvintStatus::Io, e))?;
        *out = Box::into_raw(Box::new(ComvintDataset { inner }));
        Ok(())
    })
}

/// # Safety
/// `dataset` must be null or a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn comvint_dataset_free(dataset: *mut ComvintDataset) {
    if !dataset.is_null() {
        drop(Box::from_raw(dataset));
    }
}

/// Number of records; 0 for a null handle.
///
/// # Safety
/// `dataset` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn comvint_dataset_len(dataset: *const ComvintDataset) -> usize {
    dataset.as_ref().map_or(0, |d| d.inner.len())
}

/// Writes the dataset as JSON lines.
///
/// # Safety
/// `dataset` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn comvint_dataset_write(dataset: *const ComvintDataset, path: *const c_char) -> ComvintStatus {
    guard(|| {
        let d = handle(dataset, "dataset")?;
        dataset::write_records(&d.inner, PathBuf::from(str_arg(path, "path")?).as_path())
            .map_err(|e| Failure::new(ComvintStatus::Io, e))
    })
}

/// Records from complication rounds `0..=max_round`.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn comvint_dataset_subset_by_round(
    dataset: *const ComvintDataset,
    max_round: u32,
    out: *mut *mut ComvintDataset,
) -> ComvintStatus {
    guard(|| {
        let d = handle(dataset, "dataset")?;
        let out = out_ptr(out, "out")?;
        let inner = dataset::subset_by_round(&d.inner, max_round);
        *out = Box::into_raw(Box::new(ComvintDataset { inner }));
        Ok(())
    })
}

/// Seeded sample of `total` records split `cross_modal : outside_knowledge`.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn comvint_dataset_mix(
    dataset: *const ComvintDataset,
    cross_modal: u64,
    outside_knowledge: u64,
    total: usize,
    seed: u64,
    out: *mut *mut ComvintDataset,
) -> ComvintStatus {
    guard(|| {
        let d = handle(dataset, "dataset")?;
        let out = out_ptr(out, "out")?;
        let target = MixTarget {
            cross_modal,
            outside_knowledge,
        };
        let inner = dataset::mix(&d.inner, target, total, seed)
            .map_err(|e| Failure::new(ComvintStatus::Insufficient, e))?;
        *out = Box::into_raw(Box::new(ComvintDataset { inner }));
        Ok(())
    })
}

/// Writes the conversation-format export. `paren_options` selects `(A) text`
/// over `A. text`.
///
/// # Safety
/// `dataset` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn comvint_dataset_export(
    dataset: *const ComvintDataset,
    path: *const c_char,
    paren_options: bool,
) -> ComvintStatus {
    guard(|| {
        let d = handle(dataset, "dataset")?;
        let style = if paren_options { OptionStyle::Paren } else { OptionStyle::Dot };
        dataset::export_conversation_format(&d.inner, PathBuf::from(str_arg(path, "path")?).as_path(), style)
            .map(|_| ())
            .map_err(|e| Failure::new(ComvintStatus::Io, e))
    })
}

/// Composition and length statistics as a JSON object.
///
/// # Safety
/// `dataset` must be a live handle; `out` must be writable. Free the result
/// with `comvint_string_free`.
#[no_mangle]
pub unsafe extern "C" fn comvint_dataset_stats_json(
    dataset: *const ComvintDataset,
    out: *mut *mut c_char,
) -> ComvintStatus {
    guard(|| {
        let d = handle(dataset, "dataset")?;
        let out = out_ptr(out, "out")?;
        *out = json(&dataset::stats(&d.inner))?;
        Ok(())
    })
}

fn run_options(out_dir: &str, halt_after: usize) -> RunOptions {
    RunOptions {
        out_dir: PathBuf::from(out_dir),
        halt_after: (halt_after > 0).then_some(halt_after),
    }
}

/// Runs the full pipeline from a TOML config. With a non-null
/// `mock_script` the scripted provider is used instead of HTTP.
/// `halt_after` > 0 stops after that many checkpoints with
/// `COMVINT_STATUS_HALTED`. On success `out_dataset_path` (if non-null)
/// receives the path of the written dataset.
///
/// # Safety
/// String arguments must be NUL-terminated (`mock_script` may be null);
/// `out_dataset_path` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn comvint_run(
    config_path: *const c_char,
    mock_script: *const c_char,
    out_dir: *const c_char,
    halt_after: usize,
    out_dataset_path: *mut *mut c_char,
) -> ComvintStatus {
    guard(|| {
        let config = load_config(PathBuf::from(str_arg(config_path, "config_path")?).as_path())
            .map_err(|e| Failure::new(ComvintStatus::Config, e))?;
        let mock = opt_str_arg(mock_script, "mock_script")?.map(PathBuf::from);
        let provider = comvint::cli::build_provider(&config, mock.as_deref())
            .map_err(|e| Failure::new(ComvintStatus::InvalidArgument, e))?;
        let options = run_options(str_arg(out_dir, "out_dir")?, halt_after);
        let outcome = pipeline::run(&config, provider.as_ref(), &options)?;
        if let Some(out) = out_dataset_path.as_mut() {
            *out = to_c_string(outcome.dataset_path.display().to_string())?;
        }
        Ok(())
    })
}

/// Resumes run `run_id` under `out_dir` from its last checkpoint.
///
/// # Safety
/// Same contract as `comvint_run`.
#[no_mangle]
pub unsafe extern "C" fn comvint_resume(
    run_id: *const c_char,
    mock_script: *const c_char,
    out_dir: *const c_char,
    halt_after: usize,
    out_dataset_path: *mut *mut c_char,
) -> ComvintStatus {
    guard(|| {
        let run_id = str_arg(run_id, "run_id")?;
        let options = run_options(str_arg(out_dir, "out_dir")?, halt_after);
        let config = pipeline::run_config(&options.out_dir.join(run_id))?;
        let mock = opt_str_arg(mock_script, "mock_script")?.map(PathBuf::from);
        let provider = comvint::cli::build_provider(&config, mock.as_deref())
            .map_err(|e| Failure::new(ComvintStatus::InvalidArgument, e))?;
        let outcome = pipeline::resume(run_id, provider.as_ref(), &options)?;
        if let Some(out) = out_dataset_path.as_mut() {
            *out = to_c_string(outcome.dataset_path.display().to_string())?;
        }
        Ok(())
    })
}

/// Evaluates a predictions file. `kind` is `yes_no` or `choice`; the
/// report is returned as JSON.
///
/// # Safety
/// `kind` and `predictions_path` must be NUL-terminated; `out` must be
/// writable. Free the result with `comvint_string_free`.
#[no_mangle]
pub unsafe extern "C" fn comvint_eval_json(
    kind: *const c_char,
    predictions_path: *const c_char,
    out: *mut *mut c_char,
) -> ComvintStatus {
    guard(|| {
        let kind = str_arg(kind, "kind")?;
        let path = PathBuf::from(str_arg(predictions_path, "predictions_path")?);
        let out = out_ptr(out, "out")?;
        let fail = |e: eval::EvalError| Failure::new(ComvintStatus::InvalidArgument, e);
        let report = match kind {
            "yes_no" => eval::yes_no_report(&eval::read_yes_no_predictions(&path).map_err(fail)?).map_err(fail)?,
            "choice" => eval::choice_report(&eval::read_choice_predictions(&path).map_err(fail)?).map_err(fail)?,
            other => {
                return Err(Failure::new(
                    ComvintStatus::InvalidArgument,
                    format!("unknown eval kind {other:?}; expected yes_no or choice"),
                ))
            }
        };
        *out = json(&report)?;
        Ok(())
    })
}
