//! Service configuration, loaded from a JSON file.

use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use thiserror::Error;

use crate::pow::{self, DEFAULT_DIFFICULTY_BITS, HARDENED_DIFFICULTY_BITS};

/// Highest difficulty the server will hand out; larger values are simulator-only.
pub const MAX_SERVING_DIFFICULTY_BITS: u32 = 32;

pub const ENV_BIND: &str = "POWGATE_BIND";
pub const ENV_MANIFEST: &str = "POWGATE_MANIFEST";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("config {path}: {source}")]
    Parse { path: PathBuf, source: serde_json::Error },
    #[error("invalid config: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ApiConfig {
    pub bind: String,
    pub difficulty_bits: Option<u32>,
    /// Convenience unit: one hex digit is four bits.
    pub difficulty_hex_digits: Option<u32>,
    /// Shorthand for the 20-bit preset.
    pub hardened: bool,
    pub pow_ttl_ms: u64,
    pub token_ttl_ms: u64,
    pub challenge_ttl_ms: u64,
    pub manifest_path: Option<PathBuf>,
    pub journal_path: Option<PathBuf>,
    pub static_prefix: String,
    pub static_dir: Option<PathBuf>,
    /// Origins allowed to call the API cross-origin. Empty means same-origin only.
    pub allowed_origins: Vec<String>,
    pub max_pending_challenges: usize,
    pub secure_cookie: bool,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            difficulty_bits: None,
            difficulty_hex_digits: None,
            hardened: false,
            pow_ttl_ms: pow::DEFAULT_TTL_MS,
            token_ttl_ms: crate::ledger::DEFAULT_TOKEN_TTL_MS,
            challenge_ttl_ms: crate::images::DEFAULT_CHALLENGE_TTL_MS,
            manifest_path: None,
            journal_path: None,
            static_prefix: "/static".into(),
            static_dir: None,
            allowed_origins: Vec::new(),
            max_pending_challenges: 100_000,
            secure_cookie: false,
        }
    }
}

impl ApiConfig {
    /// Reads a config file. Relative paths inside it resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: ApiConfig = serde_json::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.manifest_path, &mut cfg.journal_path, &mut cfg.static_dir]
            .into_iter()
            .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Applies `POWGATE_BIND` / `POWGATE_MANIFEST` style overrides from `lookup`.
    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) {
        if let Some(bind) = lookup(ENV_BIND) {
            self.bind = bind;
        }
        if let Some(manifest) = lookup(ENV_MANIFEST) {
            self.manifest_path = Some(PathBuf::from(manifest));
        }
    }

    pub fn difficulty(&self) -> Result<u32, ConfigError> {
        let from_hex = self
            .difficulty_hex_digits
            .map(pow::hex_digits_to_bits)
            .transpose()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        let explicit = match (self.difficulty_bits, from_hex) {
            (Some(b), Some(h)) if b != h => {
                return Err(ConfigError::Invalid(format!(
                    "difficulty_bits={b} disagrees with difficulty_hex_digits ({h} bits)"
                )))
            }
            (b, h) => b.or(h),
        };
        let bits = match (self.hardened, explicit) {
            (true, Some(b)) if b != HARDENED_DIFFICULTY_BITS => {
                return Err(ConfigError::Invalid(format!(
                    "hardened preset is {HARDENED_DIFFICULTY_BITS} bits but difficulty is set to {b}"
                )))
            }
            (true, _) => HARDENED_DIFFICULTY_BITS,
            (false, b) => b.unwrap_or(DEFAULT_DIFFICULTY_BITS),
        };
        if bits > MAX_SERVING_DIFFICULTY_BITS {
            return Err(ConfigError::Invalid(format!(
                "difficulty {bits} exceeds the serving limit of {MAX_SERVING_DIFFICULTY_BITS} bits"
            )));
        }
        Ok(bits)
    }

    pub fn bind_addr(&self) -> Result<SocketAddr, ConfigError> {
        self.bind
            .parse()
            .map_err(|e| ConfigError::Invalid(format!("bind address {:?}: {e}", self.bind)))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.difficulty()?;
        self.bind_addr()?;
        for (name, v) in [
            ("pow_ttl_ms", self.pow_ttl_ms),
            ("token_ttl_ms", self.token_ttl_ms),
            ("challenge_ttl_ms", self.challenge_ttl_ms),
        ] {
            if v == 0 {
                return Err(ConfigError::Invalid(format!("{name} must be positive")));
            }
        }
        if self.max_pending_challenges == 0 {
            return Err(ConfigError::Invalid("max_pending_challenges must be positive".into()));
        }
        if !self.static_prefix.starts_with('/')
            || self.static_prefix.len() < 2
            || ["/api", "/img"].iter().any(|r| self.static_prefix.starts_with(r))
        {
            return Err(ConfigError::Invalid(format!(
                "static_prefix {:?} must be a path like /static outside /api and /img",
                self.static_prefix
            )));
        }
        if self.allowed_origins.iter().any(|o| o == "*") {
            return Err(ConfigError::Invalid("wildcard origins are not allowed".into()));
        }
        // The image bank must never be reachable through the static route.
        if let (Some(dir), Some(manifest)) = (&self.static_dir, &self.manifest_path) {
            let canon = |p: &Path| std::fs::canonicalize(p).unwrap_or_else(|_| p.to_path_buf());
            let images = canon(manifest.parent().unwrap_or(Path::new(".")));
            if images.starts_with(canon(dir)) {
                return Err(ConfigError::Invalid(
                    "static_dir must not contain the image catalog".into(),
                ));
            }
        }
        Ok(())
    }
}
