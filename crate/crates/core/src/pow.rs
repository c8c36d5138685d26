//! Hash-based proof-of-work puzzles.
//!
//! A puzzle is a random 16-byte salt plus a difficulty measured in leading
//! zero bits. The client searches for a nonce such that
//! `SHA-256(hex(salt) ++ decimal(nonce))` starts with at least that many zero
//! bits; the server verifies with a single hash recomputation.

use std::fmt;
use std::sync::atomic::{AtomicU64, Ordering};

use rand::Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub const SALT_LEN: usize = 16;
pub const MAX_DIFFICULTY_BITS: u32 = 256;
/// Nonces live below 2^53 so browser clients can use plain numbers.
pub const NONCE_LIMIT: u64 = 1 << 53;
pub const DEFAULT_DIFFICULTY_BITS: u32 = 16;
pub const HARDENED_DIFFICULTY_BITS: u32 = 20;
pub const DEFAULT_TTL_MS: u64 = 120_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("difficulty of {0} bits is outside [0, {max}]", max = MAX_DIFFICULTY_BITS)]
    DifficultyOutOfRange(u32),
    #[error("ttl must be positive")]
    NonPositiveTtl,
}

/// Converts the hex-digit convenience unit into bits (one hex digit is four bits).
pub fn hex_digits_to_bits(digits: u32) -> Result<u32, ConfigError> {
    let bits = digits.saturating_mul(4);
    if bits > MAX_DIFFICULTY_BITS {
        return Err(ConfigError::DifficultyOutOfRange(bits));
    }
    Ok(bits)
}

hex_newtype!(ChallengeId, 16);
hex_newtype!(Salt, SALT_LEN);
hex_newtype!(Digest32, 32);

/// A server-minted puzzle.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PowChallenge {
    challenge_id: ChallengeId,
    salt: Salt,
    difficulty_bits: u32,
    issued_at: u64,
    ttl_ms: u64,
}

impl PowChallenge {
    pub fn from_parts(
        challenge_id: ChallengeId,
        salt: Salt,
        difficulty_bits: u32,
        issued_at: u64,
        ttl_ms: u64,
    ) -> Result<Self, ConfigError> {
        validate(difficulty_bits, ttl_ms)?;
        Ok(Self {
            challenge_id,
            salt,
            difficulty_bits,
            issued_at,
            ttl_ms,
        })
    }

    pub fn challenge_id(&self) -> ChallengeId {
        self.challenge_id
    }

    pub fn salt(&self) -> &Salt {
        &self.salt
    }

    pub fn difficulty_bits(&self) -> u32 {
        self.difficulty_bits
    }

    pub fn issued_at(&self) -> u64 {
        self.issued_at
    }

    pub fn ttl_ms(&self) -> u64 {
        self.ttl_ms
    }

    /// First instant at which the challenge is no longer valid.
    pub fn expires_at(&self) -> u64 {
        self.issued_at.saturating_add(self.ttl_ms)
    }

    pub fn is_expired(&self, now: u64) -> bool {
        now >= self.expires_at()
    }

    pub fn remaining_ms(&self, now: u64) -> u64 {
        self.expires_at().saturating_sub(now)
    }
}

fn validate(difficulty_bits: u32, ttl_ms: u64) -> Result<(), ConfigError> {
    if difficulty_bits > MAX_DIFFICULTY_BITS {
        return Err(ConfigError::DifficultyOutOfRange(difficulty_bits));
    }
    if ttl_ms == 0 {
        return Err(ConfigError::NonPositiveTtl);
    }
    Ok(())
}

pub fn new_challenge<R: Rng + ?Sized>(
    difficulty_bits: u32,
    ttl_ms: u64,
    now: u64,
    rng: &mut R,
) -> Result<PowChallenge, ConfigError> {
    validate(difficulty_bits, ttl_ms)?;
    Ok(PowChallenge {
        challenge_id: ChallengeId::random(rng),
        salt: Salt::random(rng),
        difficulty_bits,
        issued_at: now,
        ttl_ms,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Expired,
    InsufficientZeroBits,
    MalformedNonce,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RejectReason::Expired => "expired",
            RejectReason::InsufficientZeroBits => "insufficient_zero_bits",
            RejectReason::MalformedNonce => "malformed_nonce",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PowVerdict {
    Accept,
    Reject(RejectReason),
}

impl PowVerdict {
    pub fn is_accept(&self) -> bool {
        matches!(self, PowVerdict::Accept)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveOutcome {
    Found(u64),
    /// The iteration budget ran out before an accepting nonce turned up.
    Exhausted,
}

impl SolveOutcome {
    pub fn nonce(self) -> Option<u64> {
        match self {
            SolveOutcome::Found(n) => Some(n),
            SolveOutcome::Exhausted => None,
        }
    }
}

/// The hash primitive behind every digest. Swappable so callers can count invocations.
pub trait PowHasher: Send + Sync {
    fn digest(&self, preimage: &[u8]) -> Digest32;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sha256Hasher;

impl PowHasher for Sha256Hasher {
    fn digest(&self, preimage: &[u8]) -> Digest32 {
        Digest32(Sha256::digest(preimage).into())
    }
}

/// Wraps a hasher and counts how many digests it has produced.
#[derive(Debug, Default)]
pub struct CountingHasher<H = Sha256Hasher> {
    inner: H,
    count: AtomicU64,
}

impl<H: PowHasher> CountingHasher<H> {
    pub fn new(inner: H) -> Self {
        Self {
            inner,
            count: AtomicU64::new(0),
        }
    }

    pub fn count(&self) -> u64 {
        self.count.load(Ordering::Relaxed)
    }

    pub fn reset(&self) -> u64 {
        self.count.swap(0, Ordering::Relaxed)
    }
}

impl<H: PowHasher> PowHasher for CountingHasher<H> {
    fn digest(&self, preimage: &[u8]) -> Digest32 {
        self.count.fetch_add(1, Ordering::Relaxed);
        self.inner.digest(preimage)
    }
}

impl<T: PowHasher + ?Sized> PowHasher for &T {
    fn digest(&self, preimage: &[u8]) -> Digest32 {
        (**self).digest(preimage)
    }
}

impl<T: PowHasher + ?Sized> PowHasher for std::sync::Arc<T> {
    fn digest(&self, preimage: &[u8]) -> Digest32 {
        (**self).digest(preimage)
    }
}

fn push_decimal(buf: &mut Vec<u8>, mut n: u64) {
    let mut digits = [0u8; 20];
    let mut i = digits.len();
    loop {
        i -= 1;
        digits[i] = b'0' + (n % 10) as u8;
        n /= 10;
        if n == 0 {
            break;
        }
    }
    buf.extend_from_slice(&digits[i..]);
}

/// Canonical preimage: UTF-8 of lowercase-hex(salt) followed by decimal(nonce).
pub fn pow_preimage(salt: &Salt, nonce: u64) -> Vec<u8> {
    let mut buf = Vec::with_capacity(SALT_LEN * 2 + 20);
    buf.extend_from_slice(salt.to_hex().as_bytes());
    push_decimal(&mut buf, nonce);
    buf
}

pub fn pow_digest(salt: &Salt, nonce: u64) -> Digest32 {
    Sha256Hasher.digest(&pow_preimage(salt, nonce))
}

pub fn leading_zero_bits(digest: &Digest32) -> u32 {
    let mut bits = 0;
    for &byte in &digest.0 {
        if byte == 0 {
            bits += 8;
        } else {
            return bits + byte.leading_zeros();
        }
    }
    bits
}

/// Parses a submitted nonce. Anything other than a plain decimal below 2^53 is rejected.
pub fn parse_nonce(raw: &str) -> Option<u64> {
    if raw.is_empty() || raw.len() > 16 || !raw.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    raw.parse::<u64>().ok().filter(|n| *n < NONCE_LIMIT)
}

pub fn expected_trials(difficulty_bits: u32) -> Result<f64, ConfigError> {
    if difficulty_bits > MAX_DIFFICULTY_BITS {
        return Err(ConfigError::DifficultyOutOfRange(difficulty_bits));
    }
    Ok(2f64.powi(difficulty_bits as i32))
}

/// Verification and solving against a particular hash primitive.
#[derive(Debug, Clone, Default)]
pub struct Verifier<H = Sha256Hasher> {
    hasher: H,
}

impl<H: PowHasher> Verifier<H> {
    pub fn new(hasher: H) -> Self {
        Self { hasher }
    }

    pub fn hasher(&self) -> &H {
        &self.hasher
    }

    pub fn check(&self, challenge: &PowChallenge, nonce: u64, now: u64) -> PowVerdict {
        if challenge.is_expired(now) {
            return PowVerdict::Reject(RejectReason::Expired);
        }
        if nonce >= NONCE_LIMIT {
            return PowVerdict::Reject(RejectReason::MalformedNonce);
        }
        let digest = self.hasher.digest(&pow_preimage(&challenge.salt, nonce));
        if leading_zero_bits(&digest) >= challenge.difficulty_bits {
            PowVerdict::Accept
        } else {
            PowVerdict::Reject(RejectReason::InsufficientZeroBits)
        }
    }

    pub fn check_str(&self, challenge: &PowChallenge, nonce: &str, now: u64) -> PowVerdict {
        if challenge.is_expired(now) {
            return PowVerdict::Reject(RejectReason::Expired);
        }
        match parse_nonce(nonce) {
            Some(n) => self.check(challenge, n, now),
            None => PowVerdict::Reject(RejectReason::MalformedNonce),
        }
    }

    /// Scans `[start_nonce, start_nonce + max_iterations)` and returns the first accepting nonce.
    pub fn solve(&self, challenge: &PowChallenge, start_nonce: u64, max_iterations: u64) -> SolveOutcome {
        let end = start_nonce.saturating_add(max_iterations).min(NONCE_LIMIT);
        let mut buf = Vec::with_capacity(SALT_LEN * 2 + 20);
        buf.extend_from_slice(challenge.salt.to_hex().as_bytes());
        let prefix_len = buf.len();
        let mut nonce = start_nonce;
        while nonce < end {
            buf.truncate(prefix_len);
            push_decimal(&mut buf, nonce);
            if leading_zero_bits(&self.hasher.digest(&buf)) >= challenge.difficulty_bits {
                return SolveOutcome::Found(nonce);
            }
            nonce += 1;
        }
        SolveOutcome::Exhausted
    }
}

pub fn check_solution(challenge: &PowChallenge, nonce: u64, now: u64) -> PowVerdict {
    Verifier::new(Sha256Hasher).check(challenge, nonce, now)
}

pub fn solve(challenge: &PowChallenge, start_nonce: u64, max_iterations: u64) -> SolveOutcome {
    Verifier::new(Sha256Hasher).solve(challenge, start_nonce, max_iterations)
}
