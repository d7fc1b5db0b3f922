//! C ABI over the `cvqkd` library.
//!
//! Every function returns a [`CvqkdStatus`]. On failure a message is kept in
//! thread-local storage and can be read with [`cvqkd_last_error`]. Handles are
//! opaque and owned by the caller once returned; release them with the
//! matching `_free` function. Buffers are always caller-allocated.

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::Arc;

use cvqkd::bits::BitString;
use cvqkd::config::RunConfig;
use cvqkd::crypto::pa::{privacy_amplify, seed_len};
use cvqkd::discretize::BinningSpec;
use cvqkd::finitekey::{secret_key_length, KeyLengthModel};
use cvqkd::ldpc::{decode, Codebook, ParityCheckMatrix, SymbolPrior};
use cvqkd::session::{run_loopback, PartyOutcome};

/// Result of every call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CvqkdStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    Io = 3,
    BufferTooSmall = 4,
    /// A session ended without a key; see `cvqkd_session_abort_code`.
    Aborted = 5,
    Panic = 6,
}

/// Loaded set of parity-check matrices.
pub struct CvqkdCodebook(Arc<Codebook>);

/// One parity-check matrix.
pub struct CvqkdCode(ParityCheckMatrix);

/// Both parties' outcomes of one loopback session.
pub struct CvqkdSession {
    alice: PartyOutcome,
    bob: PartyOutcome,
}

/// Summary of one decoding run.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct CvqkdDecodeInfo {
    pub iterations: usize,
    pub converged: bool,
    pub syndrome_matched: bool,
}

/// Inputs of a key-length evaluation.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct CvqkdKeyLengthParams {
    pub n_minus_k: usize,
    pub k: usize,
    pub alpha: f64,
    pub d: u32,
    pub d1: u32,
    pub epsilon: f64,
    /// False selects the stub γ/μ pair, true the reference pair.
    pub reference_model: bool,
    /// Constant of the stub μ; ignored by the reference model.
    pub mu_c: f64,
    pub d_pe0: f64,
    pub leak_bits: u64,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let s = msg.into().replace('\0', " ");
    LAST_ERROR.with(|e| *e.borrow_mut() = CString::new(s).ok());
}

fn fail(status: CvqkdStatus, msg: impl Into<String>) -> CvqkdStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> CvqkdStatus) -> CvqkdStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(s) => s,
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            fail(CvqkdStatus::Panic, msg)
        }
    }
}

unsafe fn slice<'a, T>(p: *const T, len: usize) -> Option<&'a [T]> {
    if len == 0 {
        Some(&[])
    } else if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts(p, len))
    }
}

unsafe fn slice_mut<'a, T>(p: *mut T, len: usize) -> Option<&'a mut [T]> {
    if len == 0 {
        Some(&mut [])
    } else if p.is_null() {
        None
    } else {
        Some(std::slice::from_raw_parts_mut(p, len))
    }
}

unsafe fn c_str<'a>(p: *const c_char) -> Result<&'a str, CvqkdStatus> {
    if p.is_null() {
        return Err(fail(CvqkdStatus::NullPointer, "null string"));
    }
    CStr::from_ptr(p).to_str().map_err(|_| fail(CvqkdStatus::InvalidArgument, "string is not UTF-8"))
}

macro_rules! null_check {
    ($($p:expr),+) => {
        $(if $p.is_null() {
            return fail(CvqkdStatus::NullPointer, concat!(stringify!($p), " is null"));
        })+
    };
}

/// Message of the last failed call on this thread, or null. Valid until the
/// next call on the same thread.
#[no_mangle]
pub extern "C" fn cvqkd_last_error() -> *const c_char {
    LAST_ERROR.with(|e| e.borrow().as_ref().map_or(std::ptr::null(), |s| s.as_ptr()))
}

/// Loads every code file in `dir`.
///
/// # Safety
/// `dir` must be a NUL-terminated string and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_codebook_load(dir: *const c_char, out: *mut *mut CvqkdCodebook) -> CvqkdStatus {
    guard(|| {
        null_check!(out);
        let dir = match c_str(dir) {
            Ok(d) => d,
            Err(s) => return s,
        };
        match Codebook::load(Path::new(dir)) {
            Ok(b) => {
                *out = Box::into_raw(Box::new(CvqkdCodebook(Arc::new(b))));
                CvqkdStatus::Ok
            }
            Err(e) => fail(CvqkdStatus::Io, e.to_string()),
        }
    })
}

/// # Safety
/// `book` must come from `cvqkd_codebook_load` or be null.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_codebook_free(book: *mut CvqkdCodebook) {
    if !book.is_null() {
        drop(Box::from_raw(book));
    }
}

/// Number of codes in the codebook, or 0 for a null handle.
///
/// # Safety
/// `book` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_codebook_len(book: *const CvqkdCodebook) -> usize {
    book.as_ref().map_or(0, |b| b.0.len())
}

/// Copies the code for field order `order` and rate `rate_percent` out of
/// the codebook.
///
/// # Safety
/// `book` must be a live handle and `out` a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_codebook_get(
    book: *const CvqkdCodebook,
    order: usize,
    rate_percent: u16,
    out: *mut *mut CvqkdCode,
) -> CvqkdStatus {
    guard(|| {
        null_check!(book, out);
        match (*book).0.get(order, rate_percent) {
            Some(h) => {
                *out = Box::into_raw(Box::new(CvqkdCode(h.clone())));
                CvqkdStatus::Ok
            }
            None => fail(CvqkdStatus::InvalidArgument, format!("no code for GF({order}) at {rate_percent}%")),
        }
    })
}

/// # Safety
/// `code` must come from `cvqkd_codebook_get` or be null.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_code_free(code: *mut CvqkdCode) {
    if !code.is_null() {
        drop(Box::from_raw(code));
    }
}

/// Block length, or 0 for a null handle.
///
/// # Safety
/// `code` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_code_n(code: *const CvqkdCode) -> usize {
    code.as_ref().map_or(0, |c| c.0.n())
}

/// Number of checks, or 0 for a null handle.
///
/// # Safety
/// `code` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_code_n_checks(code: *const CvqkdCode) -> usize {
    code.as_ref().map_or(0, |c| c.0.n_checks())
}

/// Field order, or 0 for a null handle.
///
/// # Safety
/// `code` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_code_order(code: *const CvqkdCode) -> usize {
    code.as_ref().map_or(0, |c| c.0.field().order())
}

/// Writes `H·x` into `out`, which must hold `cvqkd_code_n_checks` symbols.
///
/// # Safety
/// `x` must point to `x_len` bytes and `out` to `out_len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_syndrome(
    code: *const CvqkdCode,
    x: *const u8,
    x_len: usize,
    out: *mut u8,
    out_len: usize,
) -> CvqkdStatus {
    guard(|| {
        null_check!(code);
        let h = &(*code).0;
        let (Some(x), Some(out)) = (slice(x, x_len), slice_mut(out, out_len)) else {
            return fail(CvqkdStatus::NullPointer, "null buffer");
        };
        if out.len() < h.n_checks() {
            return fail(CvqkdStatus::BufferTooSmall, format!("need {} symbols", h.n_checks()));
        }
        match h.syndrome(x) {
            Ok(s) => {
                out[..s.len()].copy_from_slice(&s);
                CvqkdStatus::Ok
            }
            Err(e) => fail(CvqkdStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Belief-propagation decoding against `syndrome`.
///
/// `priors` holds `n·q` probabilities, position-major. The estimate is
/// written to `out` (at least `n` bytes) even when decoding does not
/// converge; check `info.syndrome_matched`.
///
/// # Safety
/// Pointers must cover the stated lengths; `info` may be null.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_decode(
    code: *const CvqkdCode,
    syndrome: *const u8,
    syndrome_len: usize,
    priors: *const f64,
    priors_len: usize,
    max_iters: usize,
    out: *mut u8,
    out_len: usize,
    info: *mut CvqkdDecodeInfo,
) -> CvqkdStatus {
    guard(|| {
        null_check!(code);
        let h = &(*code).0;
        let (Some(s), Some(p), Some(out)) =
            (slice(syndrome, syndrome_len), slice(priors, priors_len), slice_mut(out, out_len))
        else {
            return fail(CvqkdStatus::NullPointer, "null buffer");
        };
        if out.len() < h.n() {
            return fail(CvqkdStatus::BufferTooSmall, format!("need {} symbols", h.n()));
        }
        let prior = match SymbolPrior::new(h.field().order(), p.to_vec()) {
            Ok(p) => p,
            Err(e) => return fail(CvqkdStatus::InvalidArgument, e.to_string()),
        };
        match decode(h, s, &prior, max_iters) {
            Ok(r) => {
                out[..r.estimate.len()].copy_from_slice(&r.estimate);
                if let Some(info) = info.as_mut() {
                    *info = CvqkdDecodeInfo {
                        iterations: r.iterations,
                        converged: r.converged,
                        syndrome_matched: r.syndrome_matched,
                    };
                }
                CvqkdStatus::Ok
            }
            Err(e) => fail(CvqkdStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Evaluates the finite-size key length. `out` receives ℓ, which may be
/// zero or negative.
///
/// # Safety
/// `params` and `out` must be valid pointers.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_key_length(params: *const CvqkdKeyLengthParams, out: *mut i64) -> CvqkdStatus {
    guard(|| {
        null_check!(params, out);
        let p = &*params;
        let spec = match BinningSpec::new(p.alpha, p.d, p.d1) {
            Ok(s) => s,
            Err(e) => return fail(CvqkdStatus::InvalidArgument, e.to_string()),
        };
        let model = if p.reference_model {
            KeyLengthModel::reference(p.epsilon)
        } else {
            KeyLengthModel::stub(p.epsilon, &spec, p.mu_c)
        };
        match secret_key_length(p.n_minus_k, p.k, &spec, &model, p.d_pe0, p.leak_bits) {
            Ok(r) => {
                *out = r.length;
                CvqkdStatus::Ok
            }
            Err(e) => fail(CvqkdStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Seed length in bits for an `n`-bit input and `ell`-bit output.
#[no_mangle]
pub extern "C" fn cvqkd_pa_seed_bits(n: usize, ell: usize) -> usize {
    if n == 0 || ell == 0 {
        0
    } else {
        seed_len(n, ell)
    }
}

/// Toeplitz hashing of `input_bits` bits down to `ell` bits. Bits are packed
/// least-significant first within each byte.
///
/// # Safety
/// Byte buffers must hold at least `ceil(bits/8)` bytes.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_privacy_amplify(
    input: *const u8,
    input_bits: usize,
    seed: *const u8,
    seed_bits: usize,
    ell: usize,
    out: *mut u8,
    out_len: usize,
) -> CvqkdStatus {
    guard(|| {
        let (Some(inp), Some(sd), Some(out)) =
            (slice(input, input_bits.div_ceil(8)), slice(seed, seed_bits.div_ceil(8)), slice_mut(out, out_len))
        else {
            return fail(CvqkdStatus::NullPointer, "null buffer");
        };
        if out.len() < ell.div_ceil(8) {
            return fail(CvqkdStatus::BufferTooSmall, format!("need {} bytes", ell.div_ceil(8)));
        }
        let x = BitString::from_bytes(inp, input_bits);
        let t = BitString::from_bytes(sd, seed_bits);
        match privacy_amplify(&x, ell as i64, &t) {
            Ok(k) => {
                let bytes = k.to_bytes();
                out[..bytes.len()].copy_from_slice(&bytes);
                CvqkdStatus::Ok
            }
            Err(e) => fail(CvqkdStatus::InvalidArgument, e.to_string()),
        }
    })
}

/// Runs both parties in process over an in-memory link.
///
/// `config_toml` uses the CLI configuration format. `book` may be null, in
/// which case the codebook directory named by the configuration is loaded.
/// Returns `Aborted` with a valid handle in `out` when the session ends
/// without a key.
///
/// # Safety
/// `config_toml` must be NUL-terminated; `book` live or null; `out` valid.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_session_run(
    config_toml: *const c_char,
    book: *const CvqkdCodebook,
    out: *mut *mut CvqkdSession,
) -> CvqkdStatus {
    guard(|| {
        null_check!(out);
        let text = match c_str(config_toml) {
            Ok(t) => t,
            Err(s) => return s,
        };
        let cfg = match RunConfig::from_toml(text) {
            Ok(c) => c,
            Err(e) => return fail(CvqkdStatus::InvalidArgument, e.to_string()),
        };
        let codebook = match book.as_ref() {
            Some(b) => b.0.clone(),
            None => match cfg.load_codebook() {
                Ok(b) => Arc::new(b),
                Err(e) => return fail(CvqkdStatus::Io, e.to_string()),
            },
        };
        let (alice, bob) = match cfg.parties(codebook) {
            Ok(p) => p,
            Err(e) => return fail(CvqkdStatus::InvalidArgument, e.to_string()),
        };
        let (a, b) = run_loopback(&alice, &bob, cfg.sample_source());
        let aborted = a.abort().or(b.abort()).map(|x| x.to_string());
        *out = Box::into_raw(Box::new(CvqkdSession { alice: a, bob: b }));
        match aborted {
            Some(msg) => fail(CvqkdStatus::Aborted, msg),
            None => CvqkdStatus::Ok,
        }
    })
}

/// # Safety
/// `s` must come from `cvqkd_session_run` or be null.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_session_free(s: *mut CvqkdSession) {
    if !s.is_null() {
        drop(Box::from_raw(s));
    }
}

unsafe fn party(s: *const CvqkdSession, bob: bool) -> Option<&'static PartyOutcome> {
    s.as_ref().map(|s| if bob { &s.bob } else { &s.alice })
}

/// Abort code for one party (Alice if `bob` is false), or 0 when it holds a
/// key.
///
/// # Safety
/// `s` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_session_abort_code(s: *const CvqkdSession, bob: bool) -> u8 {
    party(s, bob).and_then(|p| p.abort()).map_or(0, |a| a.code as u8)
}

/// Key length in bits for one party, or 0.
///
/// # Safety
/// `s` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_session_key_bits(s: *const CvqkdSession, bob: bool) -> usize {
    party(s, bob).and_then(|p| p.key()).map_or(0, |k| k.bits.len())
}

/// Copies one party's key, packed least-significant bit first.
///
/// # Safety
/// `s` must be a live handle and `out` hold `out_len` bytes.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_session_copy_key(
    s: *const CvqkdSession,
    bob: bool,
    out: *mut u8,
    out_len: usize,
) -> CvqkdStatus {
    guard(|| {
        null_check!(s);
        let Some(key) = party(s, bob).and_then(|p| p.key()) else {
            return fail(CvqkdStatus::Aborted, "party holds no key");
        };
        let bytes = key.bits.to_bytes();
        let Some(out) = slice_mut(out, out_len) else {
            return fail(CvqkdStatus::NullPointer, "null buffer");
        };
        if out.len() < bytes.len() {
            return fail(CvqkdStatus::BufferTooSmall, format!("need {} bytes", bytes.len()));
        }
        out[..bytes.len()].copy_from_slice(&bytes);
        CvqkdStatus::Ok
    })
}

/// SHA-256 of one party's transcript into a 32-byte buffer.
///
/// # Safety
/// `s` must be a live handle and `out` hold 32 bytes.
#[no_mangle]
pub unsafe extern "C" fn cvqkd_session_transcript_sha256(
    s: *const CvqkdSession,
    bob: bool,
    out: *mut u8,
) -> CvqkdStatus {
    guard(|| {
        null_check!(s, out);
        let d = party(s, bob).expect("checked").transcript.digest();
        std::ptr::copy_nonoverlapping(d.as_ptr(), out, 32);
        CvqkdStatus::Ok
    })
}
