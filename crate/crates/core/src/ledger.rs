//! Single-use PoW tokens.
//!
//! A token is minted once per solved challenge, bound to the session that
//! solved it, and redeemed at most once. All state sits behind one mutex, so
//! every operation is linearizable per token and per challenge.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::Serialize;
use thiserror::Error;

use crate::pow::ChallengeId;

hex_newtype!(TokenId, 16);
hex_newtype!(SessionId, 16);

pub const DEFAULT_TOKEN_TTL_MS: u64 = 120_000;
/// How long terminal entries are kept around for audit before purge drops them.
pub const DEFAULT_RETENTION_MS: u64 = 10 * 60 * 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TokenState {
    Live,
    Redeemed,
    Expired,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct PowToken {
    pub token_id: TokenId,
    pub session_id: SessionId,
    pub minted_at: u64,
    pub ttl_ms: u64,
    pub state: TokenState,
}

impl PowToken {
    pub fn expires_at(&self) -> u64 {
        self.minted_at.saturating_add(self.ttl_ms)
    }
}

#[derive(Debug, Clone)]
struct LedgerEntry {
    challenge_id: ChallengeId,
    token: PowToken,
    redeemed_at: Option<u64>,
}

impl LedgerEntry {
    /// Time the entry became terminal, if it has.
    fn terminal_at(&self, now: u64) -> Option<u64> {
        match self.redeemed_at {
            Some(t) => Some(t),
            None if now >= self.token.expires_at() => Some(self.token.expires_at()),
            None => None,
        }
    }

    fn observe(&mut self, now: u64) {
        if self.token.state == TokenState::Live && now >= self.token.expires_at() {
            self.token.state = TokenState::Expired;
        }
    }
}

#[derive(Debug, Error)]
pub enum MintError {
    #[error("challenge {0} already minted a token")]
    AlreadyConsumed(ChallengeId),
    #[error("token ttl must be positive")]
    NonPositiveTtl,
    #[error("journal write failed: {0}")]
    Journal(#[from] io::Error),
}

#[derive(Debug, Error)]
pub enum RedeemError {
    #[error("unknown token")]
    Unknown,
    #[error("token already redeemed")]
    AlreadyRedeemed,
    #[error("token expired")]
    Expired,
    #[error("token bound to another session")]
    SessionMismatch,
    #[error("journal write failed: {0}")]
    Journal(#[from] io::Error),
}

impl RedeemError {
    /// Short label for structured logs.
    pub fn reason(&self) -> &'static str {
        match self {
            RedeemError::Unknown => "unknown_token",
            RedeemError::AlreadyRedeemed => "already_redeemed",
            RedeemError::Expired => "token_expired",
            RedeemError::SessionMismatch => "session_mismatch",
            RedeemError::Journal(_) => "journal_error",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Redeemed {
    pub token_id: TokenId,
    pub session_id: SessionId,
    pub redeemed_at: u64,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct LedgerStats {
    pub minted: u64,
    pub redeemed: u64,
    pub live_entries: usize,
}

#[derive(Default)]
struct Inner {
    tokens: HashMap<TokenId, LedgerEntry>,
    consumed: HashMap<ChallengeId, TokenId>,
    journal: Option<BufWriter<File>>,
    minted: u64,
    redeemed: u64,
}

impl Inner {
    fn journal(&mut self, line: std::fmt::Arguments<'_>) -> io::Result<()> {
        if let Some(j) = self.journal.as_mut() {
            j.write_fmt(line)?;
            j.write_all(b"\n")?;
            j.flush()?;
        }
        Ok(())
    }

    fn insert(&mut self, challenge_id: ChallengeId, token: PowToken) {
        self.consumed.insert(challenge_id, token.token_id);
        self.tokens.insert(
            token.token_id,
            LedgerEntry {
                challenge_id,
                token,
                redeemed_at: None,
            },
        );
        self.minted += 1;
    }
}

pub struct TokenLedger {
    inner: Mutex<Inner>,
    retention_ms: u64,
}

impl Default for TokenLedger {
    fn default() -> Self {
        Self::new()
    }
}

impl TokenLedger {
    pub fn new() -> Self {
        Self::with_retention(DEFAULT_RETENTION_MS)
    }

    pub fn with_retention(retention_ms: u64) -> Self {
        Self {
            inner: Mutex::new(Inner::default()),
            retention_ms,
        }
    }

    /// Opens (or creates) an append-only journal, replaying any existing records first.
    pub fn open_journal(path: &Path, retention_ms: u64) -> io::Result<Self> {
        let mut inner = Inner::default();
        if path.exists() {
            replay(&mut inner, BufReader::new(File::open(path)?))?;
            drop_torn_tail(path)?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        inner.journal = Some(BufWriter::new(file));
        Ok(Self {
            inner: Mutex::new(inner),
            retention_ms,
        })
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Inner> {
        // A panic while holding the lock cannot leave a half-applied entry, so poison is ignored.
        self.inner.lock().unwrap_or_else(|e| e.into_inner())
    }

    pub fn mint(
        &self,
        challenge_id: ChallengeId,
        session_id: SessionId,
        now: u64,
        ttl_ms: u64,
    ) -> Result<PowToken, MintError> {
        if ttl_ms == 0 {
            return Err(MintError::NonPositiveTtl);
        }
        let mut rng = rand::rng();
        let mut inner = self.lock();
        if inner.consumed.contains_key(&challenge_id) {
            return Err(MintError::AlreadyConsumed(challenge_id));
        }
        let token_id = loop {
            let id = TokenId::random(&mut rng);
            if !inner.tokens.contains_key(&id) {
                break id;
            }
        };
        inner.journal(format_args!(
            "mint {challenge_id} {token_id} {session_id} {now} {ttl_ms}"
        ))?;
        let token = PowToken {
            token_id,
            session_id,
            minted_at: now,
            ttl_ms,
            state: TokenState::Live,
        };
        inner.insert(challenge_id, token.clone());
        Ok(token)
    }

    pub fn redeem(&self, token_id: TokenId, session_id: SessionId, now: u64) -> Result<Redeemed, RedeemError> {
        let mut inner = self.lock();
        let entry = inner.tokens.get_mut(&token_id).ok_or(RedeemError::Unknown)?;
        entry.observe(now);
        match entry.token.state {
            TokenState::Redeemed => return Err(RedeemError::AlreadyRedeemed),
            TokenState::Expired => return Err(RedeemError::Expired),
            TokenState::Live => {}
        }
        if entry.token.session_id != session_id {
            return Err(RedeemError::SessionMismatch);
        }
        inner.journal(format_args!("redeem {token_id} {now}"))?;
        let entry = inner.tokens.get_mut(&token_id).expect("entry checked above");
        entry.token.state = TokenState::Redeemed;
        entry.redeemed_at = Some(now);
        inner.redeemed += 1;
        Ok(Redeemed {
            token_id,
            session_id,
            redeemed_at: now,
        })
    }

    /// Current view of a token, with lazy expiry applied.
    pub fn token(&self, token_id: TokenId, now: u64) -> Option<PowToken> {
        let mut inner = self.lock();
        let entry = inner.tokens.get_mut(&token_id)?;
        entry.observe(now);
        Some(entry.token.clone())
    }

    pub fn is_consumed(&self, challenge_id: ChallengeId) -> bool {
        self.lock().consumed.contains_key(&challenge_id)
    }

    /// Drops terminal entries whose terminal time is older than the retention horizon.
    pub fn purge_expired(&self, now: u64) -> usize {
        let retention = self.retention_ms;
        let mut inner = self.lock();
        let doomed: Vec<(TokenId, ChallengeId)> = inner
            .tokens
            .values_mut()
            .filter_map(|e| {
                e.observe(now);
                let t = e.terminal_at(now)?;
                (now >= t.saturating_add(retention)).then_some((e.token.token_id, e.challenge_id))
            })
            .collect();
        for (token_id, challenge_id) in &doomed {
            inner.tokens.remove(token_id);
            inner.consumed.remove(challenge_id);
        }
        doomed.len()
    }

    pub fn stats(&self) -> LedgerStats {
        let inner = self.lock();
        LedgerStats {
            minted: inner.minted,
            redeemed: inner.redeemed,
            live_entries: inner.tokens.len(),
        }
    }
}

/// Truncates a trailing partial record so new appends start on a fresh line.
fn drop_torn_tail(path: &Path) -> io::Result<()> {
    let bytes = std::fs::read(path)?;
    if bytes.is_empty() || bytes.ends_with(b"\n") {
        return Ok(());
    }
    let keep = bytes.iter().rposition(|b| *b == b'\n').map_or(0, |i| i + 1);
    OpenOptions::new().write(true).open(path)?.set_len(keep as u64)
}

fn bad_record(lineno: usize, line: &str) -> io::Error {
    io::Error::new(
        io::ErrorKind::InvalidData,
        format!("journal line {lineno}: malformed record {line:?}"),
    )
}

fn replay<R: BufRead>(inner: &mut Inner, reader: R) -> io::Result<()> {
    let lines: Vec<String> = reader.lines().collect::<Result<_, _>>()?;
    let last = lines.len();
    for (i, line) in lines.iter().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        match apply_record(inner, line) {
            Some(()) => {}
            // A torn final write from a crash is dropped; anything earlier is corruption.
            None if lineno == last => {}
            None => return Err(bad_record(lineno, line)),
        }
    }
    Ok(())
}

fn apply_record(inner: &mut Inner, line: &str) -> Option<()> {
    let fields: Vec<&str> = line.split_ascii_whitespace().collect();
    match fields.as_slice() {
        ["mint", challenge, token, session, minted_at, ttl] => {
            let token = PowToken {
                token_id: token.parse().ok()?,
                session_id: session.parse().ok()?,
                minted_at: minted_at.parse().ok()?,
                ttl_ms: ttl.parse().ok().filter(|t| *t > 0)?,
                state: TokenState::Live,
            };
            inner.insert(challenge.parse().ok()?, token);
            Some(())
        }
        ["redeem", token, at] => {
            let token_id: TokenId = token.parse().ok()?;
            let at: u64 = at.parse().ok()?;
            let entry = inner.tokens.get_mut(&token_id)?;
            entry.token.state = TokenState::Redeemed;
            entry.redeemed_at = Some(at);
            inner.redeemed += 1;
            Some(())
        }
        _ => None,
    }
}
