//! C ABI for the proof-of-work primitives, the token ledger and the campaign
//! calculator.
//!
//! Every fallible function returns a [`PgStatus`]. Output parameters are only
//! written on `PG_STATUS_OK` unless noted. Byte arrays are fixed length: salts and ids are
//! 16 bytes, digests 32. Panics are caught at the boundary and reported as
//! `PG_STATUS_INTERNAL`.

use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use powgate::ledger::{MintError, RedeemError, SessionId, TokenId, TokenLedger};
use powgate::pow::{
    self, ChallengeId, PowChallenge, PowVerdict, RejectReason, Salt, Sha256Hasher, SolveOutcome, Verifier,
};
use powgate::sim::{self, CampaignSpec};

pub const PG_SALT_LEN: usize = 16;
pub const PG_ID_LEN: usize = 16;
pub const PG_DIGEST_LEN: usize = 32;

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PgStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidArgument = 2,
    BufferTooSmall = 3,
    Expired = 4,
    InsufficientZeroBits = 5,
    MalformedNonce = 6,
    Exhausted = 7,
    UnknownToken = 8,
    AlreadyRedeemed = 9,
    SessionMismatch = 10,
    AlreadyConsumed = 11,
    Io = 12,
    Internal = 13,
}

/// Opaque token ledger.
pub struct PgLedger {
    inner: TokenLedger,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PgCampaignReport {
    pub expected_hashes_per_captcha: f64,
    pub expected_total_hashes: f64,
    pub expected_seconds: f64,
    pub expected_days: f64,
    pub reference_hashes: f64,
    pub ratio_to_reference: f64,
    pub implied_hash_rate_for_reference_days: f64,
}

fn guard(f: impl FnOnce() -> PgStatus) -> PgStatus {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or(PgStatus::Internal)
}

unsafe fn array<'a, const N: usize>(p: *const u8) -> Option<&'a [u8; N]> {
    (!p.is_null()).then(|| &*(p as *const [u8; N]))
}

unsafe fn challenge(
    salt: *const u8,
    difficulty_bits: u32,
    issued_at: u64,
    ttl_ms: u64,
) -> Result<PowChallenge, PgStatus> {
    let salt = array::<PG_SALT_LEN>(salt).ok_or(PgStatus::NullPointer)?;
    PowChallenge::from_parts(
        ChallengeId([0; PG_ID_LEN]),
        Salt(*salt),
        difficulty_bits,
        issued_at,
        ttl_ms,
    )
    .map_err(|_| PgStatus::InvalidArgument)
}

fn verdict_status(v: PowVerdict) -> PgStatus {
    match v {
        PowVerdict::Accept => PgStatus::Ok,
        PowVerdict::Reject(RejectReason::Expired) => PgStatus::Expired,
        PowVerdict::Reject(RejectReason::InsufficientZeroBits) => PgStatus::InsufficientZeroBits,
        PowVerdict::Reject(RejectReason::MalformedNonce) => PgStatus::MalformedNonce,
    }
}

/// Static, NUL-terminated description of a status code. Takes the raw value
/// so out-of-range codes from C are safe.
#[no_mangle]
pub extern "C" fn pg_status_message(status: u32) -> *const c_char {
    let s: &'static CStr = match status {
        0 => c"ok",
        1 => c"null pointer argument",
        2 => c"invalid argument",
        3 => c"output buffer too small",
        4 => c"challenge or token expired",
        5 => c"digest lacks the required leading zero bits",
        6 => c"malformed nonce",
        7 => c"search budget exhausted",
        8 => c"unknown token",
        9 => c"token already redeemed",
        10 => c"token belongs to another session",
        11 => c"challenge already consumed",
        12 => c"journal i/o error",
        13 => c"internal error",
        _ => c"unknown status",
    };
    s.as_ptr()
}

/// Writes the hash preimage into `out`. `*out_len` receives the length, and is
/// also set when the buffer is too small.
///
/// # Safety
/// `salt` must point to 16 readable bytes, `out` to `cap` writable bytes and
/// `out_len` to a writable `size_t`.
#[no_mangle]
pub unsafe extern "C" fn pg_preimage(
    salt: *const u8,
    nonce: u64,
    out: *mut u8,
    cap: usize,
    out_len: *mut usize,
) -> PgStatus {
    guard(|| {
        let Some(salt) = array::<PG_SALT_LEN>(salt) else {
            return PgStatus::NullPointer;
        };
        if out_len.is_null() {
            return PgStatus::NullPointer;
        }
        let bytes = pow::pow_preimage(&Salt(*salt), nonce);
        *out_len = bytes.len();
        if out.is_null() || cap < bytes.len() {
            return PgStatus::BufferTooSmall;
        }
        std::ptr::copy_nonoverlapping(bytes.as_ptr(), out, bytes.len());
        PgStatus::Ok
    })
}

/// # Safety
/// `salt` must point to 16 readable bytes and `out` to 32 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pg_digest(salt: *const u8, nonce: u64, out: *mut u8) -> PgStatus {
    guard(|| {
        let Some(salt) = array::<PG_SALT_LEN>(salt) else {
            return PgStatus::NullPointer;
        };
        if out.is_null() {
            return PgStatus::NullPointer;
        }
        let d = pow::pow_digest(&Salt(*salt), nonce);
        std::ptr::copy_nonoverlapping(d.0.as_ptr(), out, PG_DIGEST_LEN);
        PgStatus::Ok
    })
}

/// Leading zero bits of a 32-byte digest; 0 for a null pointer.
///
/// # Safety
/// `digest` must be null or point to 32 readable bytes.
#[no_mangle]
pub unsafe extern "C" fn pg_leading_zero_bits(digest: *const u8) -> u32 {
    match array::<PG_DIGEST_LEN>(digest) {
        Some(d) => pow::leading_zero_bits(&pow::Digest32(*d)),
        None => 0,
    }
}

/// `PG_STATUS_OK` means the nonce is accepted at time `now`.
///
/// # Safety
/// `salt` must point to 16 readable bytes.
#[no_mangle]
pub unsafe extern "C" fn pg_check(
    salt: *const u8,
    difficulty_bits: u32,
    issued_at: u64,
    ttl_ms: u64,
    nonce: u64,
    now: u64,
) -> PgStatus {
    guard(|| match challenge(salt, difficulty_bits, issued_at, ttl_ms) {
        Ok(c) => verdict_status(pow::check_solution(&c, nonce, now)),
        Err(s) => s,
    })
}

/// Same as [`pg_check`] with the nonce as a NUL-terminated decimal string.
///
/// # Safety
/// `salt` must point to 16 readable bytes and `nonce` to a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn pg_check_str(
    salt: *const u8,
    difficulty_bits: u32,
    issued_at: u64,
    ttl_ms: u64,
    nonce: *const c_char,
    now: u64,
) -> PgStatus {
    guard(|| {
        if nonce.is_null() {
            return PgStatus::NullPointer;
        }
        let c = match challenge(salt, difficulty_bits, issued_at, ttl_ms) {
            Ok(c) => c,
            Err(s) => return s,
        };
        let Ok(text) = CStr::from_ptr(nonce).to_str() else {
            return PgStatus::MalformedNonce;
        };
        verdict_status(Verifier::new(Sha256Hasher).check_str(&c, text, now))
    })
}

/// Smallest accepting nonce in `[start, start + max_iterations)`.
///
/// # Safety
/// `salt` must point to 16 readable bytes and `out_nonce` to a writable `uint64_t`.
#[no_mangle]
pub unsafe extern "C" fn pg_solve(
    salt: *const u8,
    difficulty_bits: u32,
    start: u64,
    max_iterations: u64,
    out_nonce: *mut u64,
) -> PgStatus {
    guard(|| {
        if out_nonce.is_null() {
            return PgStatus::NullPointer;
        }
        let c = match challenge(salt, difficulty_bits, 0, 1) {
            Ok(c) => c,
            Err(s) => return s,
        };
        match pow::solve(&c, start, max_iterations) {
            SolveOutcome::Found(n) => {
                *out_nonce = n;
                PgStatus::Ok
            }
            SolveOutcome::Exhausted => PgStatus::Exhausted,
        }
    })
}

/// # Safety
/// `out` must point to a writable `double`.
#[no_mangle]
pub unsafe extern "C" fn pg_expected_trials(difficulty_bits: u32, out: *mut f64) -> PgStatus {
    guard(|| {
        if out.is_null() {
            return PgStatus::NullPointer;
        }
        match pow::expected_trials(difficulty_bits) {
            Ok(v) => {
                *out = v;
                PgStatus::Ok
            }
            Err(_) => PgStatus::InvalidArgument,
        }
    })
}

/// In-memory ledger. Release with [`pg_ledger_free`].
#[no_mangle]
pub extern "C" fn pg_ledger_new() -> *mut PgLedger {
    Box::into_raw(Box::new(PgLedger {
        inner: TokenLedger::new(),
    }))
}

/// Ledger backed by an append-only journal, replayed on open. Returns null on
/// failure.
///
/// # Safety
/// `path` must be a NUL-terminated UTF-8 path.
#[no_mangle]
pub unsafe extern "C" fn pg_ledger_open(path: *const c_char, retention_ms: u64) -> *mut PgLedger {
    if path.is_null() {
        return std::ptr::null_mut();
    }
    let Ok(path) = CStr::from_ptr(path).to_str() else {
        return std::ptr::null_mut();
    };
    match catch_unwind(|| TokenLedger::open_journal(std::path::Path::new(path), retention_ms)) {
        Ok(Ok(inner)) => Box::into_raw(Box::new(PgLedger { inner })),
        _ => std::ptr::null_mut(),
    }
}

/// # Safety
/// `ledger` must be null or a pointer from `pg_ledger_new`/`pg_ledger_open`
/// that has not been freed.
#[no_mangle]
pub unsafe extern "C" fn pg_ledger_free(ledger: *mut PgLedger) {
    if !ledger.is_null() {
        drop(Box::from_raw(ledger));
    }
}

/// Mints a token for a verified challenge and writes its 16-byte id.
///
/// # Safety
/// `ledger` must be live; `challenge_id` and `session_id` must point to 16
/// readable bytes and `out_token` to 16 writable bytes.
#[no_mangle]
pub unsafe extern "C" fn pg_ledger_mint(
    ledger: *const PgLedger,
    challenge_id: *const u8,
    session_id: *const u8,
    now: u64,
    ttl_ms: u64,
    out_token: *mut u8,
) -> PgStatus {
    guard(|| {
        let (Some(l), Some(cid), Some(sid)) = (
            ledger.as_ref(),
            array::<PG_ID_LEN>(challenge_id),
            array::<PG_ID_LEN>(session_id),
        ) else {
            return PgStatus::NullPointer;
        };
        if out_token.is_null() {
            return PgStatus::NullPointer;
        }
        match l.inner.mint(ChallengeId(*cid), SessionId(*sid), now, ttl_ms) {
            Ok(t) => {
                std::ptr::copy_nonoverlapping(t.token_id.0.as_ptr(), out_token, PG_ID_LEN);
                PgStatus::Ok
            }
            Err(MintError::AlreadyConsumed(_)) => PgStatus::AlreadyConsumed,
            Err(MintError::NonPositiveTtl) => PgStatus::InvalidArgument,
            Err(MintError::Journal(_)) => PgStatus::Io,
        }
    })
}

/// # Safety
/// `ledger` must be live; `token_id` and `session_id` must point to 16 readable bytes.
#[no_mangle]
pub unsafe extern "C" fn pg_ledger_redeem(
    ledger: *const PgLedger,
    token_id: *const u8,
    session_id: *const u8,
    now: u64,
) -> PgStatus {
    guard(|| {
        let (Some(l), Some(tid), Some(sid)) = (
            ledger.as_ref(),
            array::<PG_ID_LEN>(token_id),
            array::<PG_ID_LEN>(session_id),
        ) else {
            return PgStatus::NullPointer;
        };
        match l.inner.redeem(TokenId(*tid), SessionId(*sid), now) {
            Ok(_) => PgStatus::Ok,
            Err(RedeemError::Unknown) => PgStatus::UnknownToken,
            Err(RedeemError::AlreadyRedeemed) => PgStatus::AlreadyRedeemed,
            Err(RedeemError::Expired) => PgStatus::Expired,
            Err(RedeemError::SessionMismatch) => PgStatus::SessionMismatch,
            Err(RedeemError::Journal(_)) => PgStatus::Io,
        }
    })
}

/// Drops terminal entries past the retention horizon; `*out_removed` may be null.
///
/// # Safety
/// `ledger` must be live; `out_removed` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn pg_ledger_purge(ledger: *const PgLedger, now: u64, out_removed: *mut usize) -> PgStatus {
    guard(|| {
        let Some(l) = ledger.as_ref() else {
            return PgStatus::NullPointer;
        };
        let n = l.inner.purge_expired(now);
        if !out_removed.is_null() {
            *out_removed = n;
        }
        PgStatus::Ok
    })
}

/// Closed-form cost of solving `num_captchas` puzzles at `hash_rate` H/s.
///
/// # Safety
/// `out` must point to a writable `PgCampaignReport`.
#[no_mangle]
pub unsafe extern "C" fn pg_simulate_campaign(
    difficulty_bits: u32,
    num_captchas: u64,
    hash_rate: f64,
    out: *mut PgCampaignReport,
) -> PgStatus {
    guard(|| {
        if out.is_null() {
            return PgStatus::NullPointer;
        }
        let spec = CampaignSpec {
            difficulty_bits,
            num_captchas,
            hash_rate,
            solver_price_per_1000: None,
        };
        match sim::simulate_campaign(&spec) {
            Ok(r) => {
                *out = PgCampaignReport {
                    expected_hashes_per_captcha: r.expected_hashes_per_captcha,
                    expected_total_hashes: r.expected_total_hashes,
                    expected_seconds: r.expected_seconds,
                    expected_days: r.expected_days,
                    reference_hashes: r.reference_hashes,
                    ratio_to_reference: r.ratio_to_reference,
                    implied_hash_rate_for_reference_days: r.implied_hash_rate_for_reference_days,
                };
                PgStatus::Ok
            }
            Err(_) => PgStatus::InvalidArgument,
        }
    })
}
