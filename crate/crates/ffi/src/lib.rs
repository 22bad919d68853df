//! C ABI over `pnrstat`.
//!
//! Objects cross the boundary as opaque handles created by `*_new` / producing calls
//! and released with the matching `*_free`. Every fallible call returns a
//! [`PnrStatus`]; on failure a description is available from
//! [`pnr_last_error_message`] on the same thread. Arrays are passed as pointer plus
//! length, and outputs are written into caller-owned buffers.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::ptr;

use pnrstat::detector::{self, ClickDistribution, DetectorConfig, ResponseMatrix};
use pnrstat::diagnostics;
use pnrstat::retrieval::{self, Algorithm, RetrievalReport, RetrievalSettings};
use pnrstat::{Error, PhotonDistribution, SourceSpec};

/// Status codes. Library error classes share their values with the CLI exit codes.
#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnrStatus {
    Ok = 0,
    InvalidParameter = 2,
    InvalidDistribution = 3,
    DimensionMismatch = 4,
    ModelSupport = 5,
    UndefinedStatistic = 6,
    Singular = 7,
    MalformedInput = 8,
    UnknownVariant = 9,
    Io = 10,
    NullPointer = 20,
    BufferTooSmall = 21,
    Panic = 22,
}

impl PnrStatus {
    fn from_error(e: &Error) -> Self {
        match e.exit_code() {
            2 => PnrStatus::InvalidParameter,
            3 => PnrStatus::InvalidDistribution,
            4 => PnrStatus::DimensionMismatch,
            5 => PnrStatus::ModelSupport,
            6 => PnrStatus::UndefinedStatistic,
            7 => PnrStatus::Singular,
            8 => PnrStatus::MalformedInput,
            9 => PnrStatus::UnknownVariant,
            _ => PnrStatus::Io,
        }
    }
}

#[repr(i32)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PnrAlgorithm {
    Eme = 0,
    Em = 1,
    DirectInverse = 2,
}

/// Iterative retrieval parameters. Obtain defaults from [`pnr_settings_default`].
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PnrSettings {
    /// One of the [`PnrAlgorithm`] values.
    pub algorithm: i32,
    pub lambda: f64,
    pub epsilon: f64,
    pub max_iterations: u64,
}

/// Moments and nonclassicality indicators; undefined entries are NaN.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct PnrDiagnostics {
    pub mean: f64,
    pub variance: f64,
    pub g2: f64,
    pub mandel_q: f64,
    pub parity: f64,
    pub wigner_origin: f64,
}

/// Opaque response matrix.
pub struct PnrResponseMatrix(ResponseMatrix);

/// Opaque result of an iterative retrieval.
pub struct PnrReport(RetrievalReport);

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: String) {
    let c = CString::new(msg.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|e| *e.borrow_mut() = Some(c));
}

enum Failure {
    Lib(Error),
    Status(PnrStatus, &'static str),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

/// Runs `f`, converting errors and panics into a status and the thread's last error.
fn guard(f: impl FnOnce() -> Result<(), Failure>) -> PnrStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => PnrStatus::Ok,
        Ok(Err(Failure::Lib(e))) => {
            set_error(e.to_string());
            PnrStatus::from_error(&e)
        }
        Ok(Err(Failure::Status(s, msg))) => {
            set_error(msg.to_string());
            s
        }
        Err(_) => {
            set_error("internal panic".to_string());
            PnrStatus::Panic
        }
    }
}

unsafe fn slice<'a>(data: *const f64, len: usize) -> Result<&'a [f64], Failure> {
    if data.is_null() {
        return Err(Failure::Status(PnrStatus::NullPointer, "null input array"));
    }
    Ok(std::slice::from_raw_parts(data, len))
}

unsafe fn slice_mut<'a>(
    data: *mut f64,
    len: usize,
    needed: usize,
) -> Result<&'a mut [f64], Failure> {
    if data.is_null() {
        return Err(Failure::Status(PnrStatus::NullPointer, "null output array"));
    }
    if len < needed {
        return Err(Failure::Status(
            PnrStatus::BufferTooSmall,
            "output buffer too small",
        ));
    }
    Ok(std::slice::from_raw_parts_mut(data, len))
}

unsafe fn handle<'a, T>(p: *const T) -> Result<&'a T, Failure> {
    p.as_ref()
        .ok_or(Failure::Status(PnrStatus::NullPointer, "null handle"))
}

/// Message of the most recent failure on this thread, or NULL. Valid until the next
/// failing call on the same thread.
#[no_mangle]
pub extern "C" fn pnr_last_error_message() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

#[no_mangle]
pub extern "C" fn pnr_settings_default() -> PnrSettings {
    PnrSettings {
        algorithm: PnrAlgorithm::Eme as i32,
        lambda: retrieval::DEFAULT_LAMBDA,
        epsilon: retrieval::DEFAULT_EPSILON,
        max_iterations: retrieval::DEFAULT_MAX_ITERATIONS,
    }
}

/// Builds the response matrix of `channels` channels at `efficiency` for photon numbers
/// `0..=cutoff`.
///
/// # Safety
/// `out` must be a valid pointer to writable storage for one handle.
#[no_mangle]
pub unsafe extern "C" fn pnr_response_matrix_new(
    channels: usize,
    efficiency: f64,
    cutoff: usize,
    out: *mut *mut PnrResponseMatrix,
) -> PnrStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Status(PnrStatus::NullPointer, "null out pointer"));
        }
        let config = DetectorConfig::new(channels, efficiency)?;
        let m = ResponseMatrix::new(config, cutoff)?;
        *out = Box::into_raw(Box::new(PnrResponseMatrix(m)));
        Ok(())
    })
}

/// # Safety
/// `matrix` must be NULL or a handle from [`pnr_response_matrix_new`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pnr_response_matrix_free(matrix: *mut PnrResponseMatrix) {
    if !matrix.is_null() {
        drop(Box::from_raw(matrix));
    }
}

/// Number of rows (`channels + 1`), or 0 for NULL.
///
/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pnr_response_matrix_rows(matrix: *const PnrResponseMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.0.rows())
}

/// Number of columns (`cutoff + 1`), or 0 for NULL.
///
/// # Safety
/// `matrix` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pnr_response_matrix_cols(matrix: *const PnrResponseMatrix) -> usize {
    matrix.as_ref().map_or(0, |m| m.0.cols())
}

/// Copies the entries row-major into `out`, which must hold `rows * cols` values.
///
/// # Safety
/// `matrix` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pnr_response_matrix_copy(
    matrix: *const PnrResponseMatrix,
    out: *mut f64,
    len: usize,
) -> PnrStatus {
    guard(|| {
        let m = &handle(matrix)?.0;
        let src = m.as_slice();
        slice_mut(out, len, src.len())?[..src.len()].copy_from_slice(src);
        Ok(())
    })
}

/// Click probabilities `C p` of a photon distribution of length `cols`.
///
/// # Safety
/// `p` must point to `p_len` doubles and `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pnr_forward(
    matrix: *const PnrResponseMatrix,
    p: *const f64,
    p_len: usize,
    out: *mut f64,
    out_len: usize,
) -> PnrStatus {
    guard(|| {
        let m = &handle(matrix)?.0;
        let p = PhotonDistribution::from_weights(slice(p, p_len)?.to_vec())?;
        let c = detector::forward(m, &p)?;
        slice_mut(out, out_len, m.rows())?[..m.rows()].copy_from_slice(c.values());
        Ok(())
    })
}

/// Runs EM or EME on click data (counts or unnormalized frequencies of length `rows`).
///
/// # Safety
/// `clicks` must point to `len` doubles; `settings` may be NULL for defaults; `out`
/// must be valid for writing one handle.
#[no_mangle]
pub unsafe extern "C" fn pnr_retrieve(
    matrix: *const PnrResponseMatrix,
    clicks: *const f64,
    len: usize,
    settings: *const PnrSettings,
    out: *mut *mut PnrReport,
) -> PnrStatus {
    guard(|| {
        let m = &handle(matrix)?.0;
        if out.is_null() {
            return Err(Failure::Status(PnrStatus::NullPointer, "null out pointer"));
        }
        let s = settings
            .as_ref()
            .copied()
            .unwrap_or_else(|| pnr_settings_default());
        let algorithm = match s.algorithm {
            a if a == PnrAlgorithm::Eme as i32 => Algorithm::Eme,
            a if a == PnrAlgorithm::Em as i32 => Algorithm::Em,
            a if a == PnrAlgorithm::DirectInverse as i32 => {
                return Err(Failure::Status(
                    PnrStatus::InvalidParameter,
                    "use pnr_direct_inverse for direct inversion",
                ))
            }
            _ => {
                return Err(Failure::Status(
                    PnrStatus::UnknownVariant,
                    "unknown algorithm code",
                ))
            }
        };
        let settings = RetrievalSettings {
            algorithm,
            lambda: s.lambda,
            epsilon: s.epsilon,
            max_iterations: s.max_iterations,
            cutoff: m.cutoff(),
            ..RetrievalSettings::default()
        };
        let d = ClickDistribution::unnormalized(slice(clicks, len)?.to_vec())?;
        let report = retrieval::retrieve(&d, m, &settings)?;
        *out = Box::into_raw(Box::new(PnrReport(report)));
        Ok(())
    })
}

/// # Safety
/// `report` must be NULL or a handle from [`pnr_retrieve`] not yet freed.
#[no_mangle]
pub unsafe extern "C" fn pnr_report_free(report: *mut PnrReport) {
    if !report.is_null() {
        drop(Box::from_raw(report));
    }
}

/// Length of the retrieved distribution, or 0 for NULL.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pnr_report_len(report: *const PnrReport) -> usize {
    report.as_ref().map_or(0, |r| r.0.estimate.len())
}

/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pnr_report_iterations(report: *const PnrReport) -> u64 {
    report.as_ref().map_or(0, |r| r.0.iterations)
}

/// Whether the stop distance was reached before the iteration cap.
///
/// # Safety
/// `report` must be NULL or a live handle.
#[no_mangle]
pub unsafe extern "C" fn pnr_report_converged(report: *const PnrReport) -> bool {
    report.as_ref().is_some_and(|r| r.0.converged())
}

/// Copies the retrieved distribution into `out`.
///
/// # Safety
/// `report` must be a live handle; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pnr_report_estimate(
    report: *const PnrReport,
    out: *mut f64,
    len: usize,
) -> PnrStatus {
    guard(|| {
        let p = handle(report)?.0.estimate.probs();
        slice_mut(out, len, p.len())?[..p.len()].copy_from_slice(p);
        Ok(())
    })
}

/// Direct (pseudo)inverse solution; entries may be negative.
///
/// # Safety
/// `clicks` must point to `len` doubles and `out` to `out_len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pnr_direct_inverse(
    matrix: *const PnrResponseMatrix,
    clicks: *const f64,
    len: usize,
    out: *mut f64,
    out_len: usize,
) -> PnrStatus {
    guard(|| {
        let m = &handle(matrix)?.0;
        let d = ClickDistribution::unnormalized(slice(clicks, len)?.to_vec())?;
        let x = retrieval::direct_inverse(&d, m)?;
        slice_mut(out, out_len, x.len())?[..x.len()].copy_from_slice(&x);
        Ok(())
    })
}

/// Evaluates a source given in compact form (e.g. `"thermal:5"`) on `0..=cutoff`.
/// `out` must hold `cutoff + 1` values.
///
/// # Safety
/// `spec` must be a NUL-terminated string; `out` must point to `len` writable doubles.
#[no_mangle]
pub unsafe extern "C" fn pnr_source_distribution(
    spec: *const c_char,
    cutoff: usize,
    out: *mut f64,
    len: usize,
) -> PnrStatus {
    guard(|| {
        if spec.is_null() {
            return Err(Failure::Status(PnrStatus::NullPointer, "null source spec"));
        }
        let text = CStr::from_ptr(spec)
            .to_str()
            .map_err(|_| Error::Parse("source spec is not UTF-8".into()))?;
        let spec: SourceSpec = text.parse()?;
        let p = spec.distribution(cutoff)?;
        slice_mut(out, len, p.len())?[..p.len()].copy_from_slice(p.probs());
        Ok(())
    })
}

/// Diagnostics of a (renormalized) photon distribution.
///
/// # Safety
/// `p` must point to `len` doubles and `out` must be valid for writing.
#[no_mangle]
pub unsafe extern "C" fn pnr_diagnostics(
    p: *const f64,
    len: usize,
    out: *mut PnrDiagnostics,
) -> PnrStatus {
    guard(|| {
        if out.is_null() {
            return Err(Failure::Status(PnrStatus::NullPointer, "null out pointer"));
        }
        let p = PhotonDistribution::from_weights(slice(p, len)?.to_vec())?;
        let parity = diagnostics::parity(&p);
        *out = PnrDiagnostics {
            mean: p.mean(),
            variance: p.variance(),
            g2: diagnostics::g2(&p).unwrap_or(f64::NAN),
            mandel_q: diagnostics::mandel_q(&p).unwrap_or(f64::NAN),
            parity,
            wigner_origin: diagnostics::wigner_origin(&p),
        };
        Ok(())
    })
}

/// Fidelity and total variation distance between two distributions (the shorter is
/// zero-padded).
///
/// # Safety
/// `p` and `q` must point to `p_len` and `q_len` doubles; the outputs must be writable.
#[no_mangle]
pub unsafe extern "C" fn pnr_compare(
    p: *const f64,
    p_len: usize,
    q: *const f64,
    q_len: usize,
    fidelity: *mut f64,
    tvd: *mut f64,
) -> PnrStatus {
    guard(|| {
        if fidelity.is_null() || tvd.is_null() {
            return Err(Failure::Status(PnrStatus::NullPointer, "null out pointer"));
        }
        let p = PhotonDistribution::from_weights(slice(p, p_len)?.to_vec())?;
        let q = PhotonDistribution::from_weights(slice(q, q_len)?.to_vec())?;
        *fidelity = diagnostics::fidelity(&p, &q);
        *tvd = diagnostics::tvd(&p, &q);
        Ok(())
    })
}
