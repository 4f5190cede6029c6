//! C ABI over the earlock library.
//!
//! Objects cross the boundary as opaque handles created by `*_new`,
//! `*_load`, `*_open` or `*_build` functions and released by the matching
//! `*_free`. Every fallible call returns an `EarlockStatus`; on failure the
//! message is available from `earlock_last_error` on the same thread.
//! Panics never unwind into the caller and are reported as
//! `EARLOCK_STATUS_INTERNAL`.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;

use earlock::config::RunConfig;
use earlock::dataset::load_ear;
use earlock::evaluation::{identify, verify};
use earlock::pipeline::{build_template, score, threshold, Metric, Rule};
use earlock::template::{Template, TemplateStore};
use earlock::Error;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlockStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    Io = 3,
    InvalidInput = 4,
    Protocol = 5,
    UnknownSubject = 6,
    BufferTooSmall = 7,
    Internal = 8,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlockRule {
    Whole = 0,
    Concat = 1,
    Ds = 2,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EarlockMetric {
    Euclid = 0,
    Nn = 1,
}

impl From<EarlockRule> for Rule {
    fn from(r: EarlockRule) -> Self {
        match r {
            EarlockRule::Whole => Rule::Whole,
            EarlockRule::Concat => Rule::Concat,
            EarlockRule::Ds => Rule::Ds,
        }
    }
}

impl From<EarlockMetric> for Metric {
    fn from(m: EarlockMetric) -> Self {
        match m {
            EarlockMetric::Euclid => Metric::Euclid,
            EarlockMetric::Nn => Metric::Nn,
        }
    }
}

/// Run configuration.
pub struct EarlockConfig(RunConfig);

/// One enrolled or probe template.
pub struct EarlockTemplate(Template);

/// Every template of a store, in subject order.
pub struct EarlockGallery(Vec<Template>);

struct Failure {
    status: EarlockStatus,
    message: String,
}

impl Failure {
    fn new(status: EarlockStatus, message: impl Into<String>) -> Self {
        Self {
            status,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let status = match &e {
            Error::Io { .. } => EarlockStatus::Io,
            Error::Protocol(_) => EarlockStatus::Protocol,
            Error::UnknownSubject(_) => EarlockStatus::UnknownSubject,
            _ => EarlockStatus::InvalidInput,
        };
        Failure::new(status, e.to_string())
    }
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_last_error(message: &str) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> EarlockStatus {
    LAST_ERROR.with(|e| *e.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => EarlockStatus::Ok,
        Ok(Err(fail)) => {
            set_last_error(&fail.message);
            fail.status
        }
        Err(_) => {
            set_last_error("internal panic");
            EarlockStatus::Internal
        }
    }
}

unsafe fn non_null<'a, T>(p: *const T, name: &str) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or_else(|| Failure::new(EarlockStatus::NullArgument, format!("{name} is null")))
}

unsafe fn out_ptr<'a, T>(p: *mut T, name: &str) -> Result<&'a mut T, Failure> {
    p.as_mut()
        .ok_or_else(|| Failure::new(EarlockStatus::NullArgument, format!("{name} is null")))
}

unsafe fn string<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure::new(EarlockStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p)
        .to_str()
        .map_err(|_| Failure::new(EarlockStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

/// Copies `s` NUL-terminated into `buf`. `needed` receives the full size
/// including the terminator even when the buffer is too small.
unsafe fn copy_out(s: &str, buf: *mut c_char, len: usize, needed: *mut usize) -> Result<(), Failure> {
    let bytes = s.as_bytes();
    if let Some(n) = needed.as_mut() {
        *n = bytes.len() + 1;
    }
    if buf.is_null() || len < bytes.len() + 1 {
        return Err(Failure::new(EarlockStatus::BufferTooSmall, "output buffer too small"));
    }
    ptr::copy_nonoverlapping(bytes.as_ptr(), buf.cast::<u8>(), bytes.len());
    *buf.add(bytes.len()) = 0;
    Ok(())
}

fn boxed<T>(v: T) -> *mut T {
    Box::into_raw(Box::new(v))
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn earlock_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Message of the last failed call on this thread, or null. The pointer
/// stays valid until the next call into the library on this thread.
#[no_mangle]
pub extern "C" fn earlock_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn earlock_config_new(out: *mut *mut EarlockConfig) -> EarlockStatus {
    guard(|| {
        *out_ptr(out, "out")? = boxed(EarlockConfig(RunConfig::default()));
        Ok(())
    })
}

/// # Safety
/// `path` must be a NUL-terminated string; `out` as in `earlock_config_new`.
#[no_mangle]
pub unsafe extern "C" fn earlock_config_load(path: *const c_char, out: *mut *mut EarlockConfig) -> EarlockStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = RunConfig::load(string(path, "path")?)?;
        *out = boxed(EarlockConfig(cfg));
        Ok(())
    })
}

/// Sets the acceptance thresholds for concatenated (`psi`) and fused
/// (`phi`) distances.
///
/// # Safety
/// `config` must be a live handle.
#[no_mangle]
pub unsafe extern "C" fn earlock_config_set_thresholds(config: *mut EarlockConfig, psi: f64, phi: f64) -> EarlockStatus {
    guard(|| {
        let cfg = out_ptr(config, "config")?;
        let updated = RunConfig {
            psi,
            phi,
            ..cfg.0.clone()
        };
        updated.validate()?;
        cfg.0 = updated;
        Ok(())
    })
}

/// # Safety
/// `config` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn earlock_config_free(config: *mut EarlockConfig) {
    if !config.is_null() {
        drop(Box::from_raw(config));
    }
}

/// Segments and describes an image (PNG or PPM, with an optional
/// `{stem}.mask.png` beside it) into a template.
///
/// # Safety
/// Strings must be NUL-terminated, `config` a live handle, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn earlock_template_build(
    image_path: *const c_char,
    subject_id: *const c_char,
    config: *const EarlockConfig,
    out: *mut *mut EarlockTemplate,
) -> EarlockStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let cfg = &non_null(config, "config")?.0;
        let path = PathBuf::from(string(image_path, "image_path")?);
        let ear = load_ear(&path, string(subject_id, "subject_id")?)?;
        *out = boxed(EarlockTemplate(build_template(&ear, cfg)?.template));
        Ok(())
    })
}

/// # Safety
/// `path` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn earlock_template_load(path: *const c_char, out: *mut *mut EarlockTemplate) -> EarlockStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        *out = boxed(EarlockTemplate(Template::load(string(path, "path")?)?));
        Ok(())
    })
}

/// # Safety
/// `template` must be a live handle and `path` NUL-terminated.
#[no_mangle]
pub unsafe extern "C" fn earlock_template_save(template: *const EarlockTemplate, path: *const c_char) -> EarlockStatus {
    guard(|| {
        non_null(template, "template")?.0.save(string(path, "path")?)?;
        Ok(())
    })
}

/// Copies the subject id into `buf`; see `earlock_gallery_subject`.
///
/// # Safety
/// `template` must be a live handle; `buf` must hold `len` bytes; `needed`
/// may be null.
#[no_mangle]
pub unsafe extern "C" fn earlock_template_subject(
    template: *const EarlockTemplate,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> EarlockStatus {
    guard(|| copy_out(&non_null(template, "template")?.0.subject_id, buf, len, needed))
}

/// Number of keypoints the template carries for a rule (`DS` counts the
/// augmented slice set).
///
/// # Safety
/// `template` must be a live handle and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn earlock_template_feature_count(
    template: *const EarlockTemplate,
    rule: EarlockRule,
    out: *mut usize,
) -> EarlockStatus {
    guard(|| {
        let t = &non_null(template, "template")?.0;
        *out_ptr(out, "out")? = match rule {
            EarlockRule::Whole => t.whole_features.len(),
            EarlockRule::Concat | EarlockRule::Ds => t.concat_features.len(),
        };
        Ok(())
    })
}

/// # Safety
/// `template` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn earlock_template_free(template: *mut EarlockTemplate) {
    if !template.is_null() {
        drop(Box::from_raw(template));
    }
}

/// Loads every template of an enrolled store directory.
///
/// # Safety
/// `store_dir` must be NUL-terminated and `out` writable.
#[no_mangle]
pub unsafe extern "C" fn earlock_gallery_open(store_dir: *const c_char, out: *mut *mut EarlockGallery) -> EarlockStatus {
    guard(|| {
        let out = out_ptr(out, "out")?;
        let templates = TemplateStore::open(string(store_dir, "store_dir")?)?.load_all()?;
        *out = boxed(EarlockGallery(templates));
        Ok(())
    })
}

/// Number of templates; 0 for a null handle.
///
/// # Safety
/// `gallery` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn earlock_gallery_len(gallery: *const EarlockGallery) -> usize {
    gallery.as_ref().map_or(0, |g| g.0.len())
}

/// Copies the id of entry `index` NUL-terminated into `buf` of `len`
/// bytes. `needed` (nullable) receives the required size.
///
/// # Safety
/// `gallery` must be a live handle; `buf` must hold `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn earlock_gallery_subject(
    gallery: *const EarlockGallery,
    index: usize,
    buf: *mut c_char,
    len: usize,
    needed: *mut usize,
) -> EarlockStatus {
    guard(|| {
        let g = &non_null(gallery, "gallery")?.0;
        let t = g
            .get(index)
            .ok_or_else(|| Failure::new(EarlockStatus::InvalidInput, format!("index {index} out of range")))?;
        copy_out(&t.subject_id, buf, len, needed)
    })
}

/// # Safety
/// `gallery` must be null or a handle not yet freed.
#[no_mangle]
pub unsafe extern "C" fn earlock_gallery_free(gallery: *mut EarlockGallery) {
    if !gallery.is_null() {
        drop(Box::from_raw(gallery));
    }
}

/// Dissimilarity of `probe` to `reference`; lower is better and infinity
/// marks a comparison that cannot succeed.
///
/// # Safety
/// Handles must be live and `out_score` writable.
#[no_mangle]
pub unsafe extern "C" fn earlock_score(
    probe: *const EarlockTemplate,
    reference: *const EarlockTemplate,
    rule: EarlockRule,
    metric: EarlockMetric,
    config: *const EarlockConfig,
    out_score: *mut f64,
) -> EarlockStatus {
    guard(|| {
        let (p, r) = (&non_null(probe, "probe")?.0, &non_null(reference, "reference")?.0);
        let cfg = &non_null(config, "config")?.0;
        *out_ptr(out_score, "out_score")? = score(p, r, rule.into(), metric.into(), cfg);
        Ok(())
    })
}

/// Writes up to `k` best gallery indices and scores, best first, and the
/// count written to `out_written`.
///
/// # Safety
/// Handles must be live; `out_indices` and `out_scores` must hold `k`
/// elements; `out_written` must be writable.
#[no_mangle]
pub unsafe extern "C" fn earlock_identify(
    probe: *const EarlockTemplate,
    gallery: *const EarlockGallery,
    rule: EarlockRule,
    metric: EarlockMetric,
    config: *const EarlockConfig,
    k: usize,
    out_indices: *mut usize,
    out_scores: *mut f64,
    out_written: *mut usize,
) -> EarlockStatus {
    guard(|| {
        let p = &non_null(probe, "probe")?.0;
        let g = &non_null(gallery, "gallery")?.0;
        let cfg = &non_null(config, "config")?.0;
        let written = out_ptr(out_written, "out_written")?;
        if out_indices.is_null() || out_scores.is_null() {
            return Err(Failure::new(EarlockStatus::NullArgument, "output arrays are null"));
        }
        let ranking = identify(p, g, k, rule.into(), metric.into(), cfg)?;
        for (i, r) in ranking.iter().enumerate() {
            let index = g.iter().position(|t| t.subject_id == r.gallery_id).expect("ranked id is in gallery");
            *out_indices.add(i) = index;
            *out_scores.add(i) = r.score;
        }
        *written = ranking.len();
        Ok(())
    })
}

/// Accepts iff the score against the claimed subject does not exceed the
/// configured threshold for the rule and metric.
///
/// # Safety
/// Handles must be live, `claimed_id` NUL-terminated and the outputs
/// writable.
#[no_mangle]
pub unsafe extern "C" fn earlock_verify(
    probe: *const EarlockTemplate,
    gallery: *const EarlockGallery,
    claimed_id: *const c_char,
    rule: EarlockRule,
    metric: EarlockMetric,
    config: *const EarlockConfig,
    out_accept: *mut bool,
    out_score: *mut f64,
) -> EarlockStatus {
    guard(|| {
        let p = &non_null(probe, "probe")?.0;
        let g = &non_null(gallery, "gallery")?.0;
        let cfg = &non_null(config, "config")?.0;
        let claimed = string(claimed_id, "claimed_id")?;
        let accept = out_ptr(out_accept, "out_accept")?;
        let score_out = out_ptr(out_score, "out_score")?;
        let t = g
            .iter()
            .find(|t| t.subject_id == claimed)
            .ok_or_else(|| Failure::from(Error::UnknownSubject(claimed.to_string())))?;
        let (rule, metric) = (rule.into(), metric.into());
        let v = verify(p, t, threshold(rule, metric, cfg), rule, metric, cfg);
        *accept = v.accept;
        *score_out = v.score;
        Ok(())
    })
}
