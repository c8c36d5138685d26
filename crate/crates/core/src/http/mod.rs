//! HTTP surface of the two-phase protocol.
//!
//! | route | purpose |
//! |---|---|
//! | `GET /api/pow-challenge` | issue a puzzle, set the session cookie |
//! | `POST /api/pow-verify` | check a nonce, mint a single-use token |
//! | `GET /api/challenge?token=` | redeem the token, assemble a six-tile grid |
//! | `GET /img/{captcha_id}/{tile}` | tile bytes, only while that grid is live |
//! | `POST /api/answer` | grade the selection |
//!
//! Nothing about a grid exists on the wire before a token is redeemed. Every
//! failed check collapses into the same opaque 403 body.

mod config;
mod events;

use std::collections::HashMap;
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::body::{Body, Bytes};
use axum::extract::{Path as UrlPath, Query, State};
use axum::http::{header, HeaderMap, HeaderValue, Method, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::Router;
use serde::Serialize;
use serde_json::Value;
use tower_http::cors::{AllowOrigin, CorsLayer};
use tower_http::services::ServeDir;

pub use config::{ApiConfig, ConfigError, ENV_BIND, ENV_MANIFEST, MAX_SERVING_DIFFICULTY_BITS};
pub use events::{to_json_line, Event, EventSink, MemorySink, NullSink, StderrSink};

use crate::images::{self, CaptchaId, Catalog, ChallengeBook, TILE_COUNT};
use crate::ledger::{MintError, SessionId, TokenId, TokenLedger};
use crate::pow::{self, ChallengeId, CountingHasher, PowChallenge, PowVerdict, Sha256Hasher, Verifier};
use crate::{Clock, SystemClock};

pub const SESSION_COOKIE: &str = "pg_sid";
pub const DENIED_BODY: &str = r#"{"error":"denied"}"#;
pub const BAD_REQUEST_BODY: &str = r#"{"error":"bad_request"}"#;
pub const NOT_FOUND_BODY: &str = r#"{"error":"not_found"}"#;
pub const UNAVAILABLE_BODY: &str = r#"{"error":"unavailable"}"#;

struct PendingPow {
    challenge: PowChallenge,
    session: SessionId,
}

struct AppState {
    difficulty_bits: u32,
    pow_ttl_ms: u64,
    token_ttl_ms: u64,
    challenge_ttl_ms: u64,
    max_pending: usize,
    secure_cookie: bool,
    catalog: Arc<Catalog>,
    pending: Mutex<HashMap<ChallengeId, PendingPow>>,
    ledger: TokenLedger,
    book: ChallengeBook,
    verifier: Verifier<CountingHasher<Sha256Hasher>>,
    clock: Arc<dyn Clock>,
    events: Arc<dyn EventSink>,
}

impl AppState {
    fn now(&self) -> u64 {
        self.clock.now_ms()
    }

    fn emit(&self, event: Event) {
        self.events.emit(self.now(), event);
    }

    fn deny(&self, stage: &'static str, reason: &'static str) -> Response {
        self.emit(Event::Denied { stage, reason });
        json_response(StatusCode::FORBIDDEN, DENIED_BODY)
    }

    fn pending(&self) -> std::sync::MutexGuard<'_, HashMap<ChallengeId, PendingPow>> {
        self.pending.lock().unwrap_or_else(|e| e.into_inner())
    }
}

/// The service: shared state plus the router built over it.
#[derive(Clone)]
pub struct App {
    state: Arc<AppState>,
    static_route: Option<(String, std::path::PathBuf)>,
    allowed_origins: Vec<String>,
}

impl App {
    pub fn new(config: &ApiConfig, catalog: Catalog, ledger: TokenLedger) -> Result<Self, ConfigError> {
        Self::with_parts(config, catalog, ledger, Arc::new(SystemClock), Arc::new(StderrSink))
    }

    pub fn with_parts(
        config: &ApiConfig,
        catalog: Catalog,
        ledger: TokenLedger,
        clock: Arc<dyn Clock>,
        events: Arc<dyn EventSink>,
    ) -> Result<Self, ConfigError> {
        config.validate()?;
        let state = AppState {
            difficulty_bits: config.difficulty()?,
            pow_ttl_ms: config.pow_ttl_ms,
            token_ttl_ms: config.token_ttl_ms,
            challenge_ttl_ms: config.challenge_ttl_ms,
            max_pending: config.max_pending_challenges,
            secure_cookie: config.secure_cookie,
            catalog: Arc::new(catalog),
            pending: Mutex::new(HashMap::new()),
            ledger,
            book: ChallengeBook::new(),
            verifier: Verifier::new(CountingHasher::new(Sha256Hasher)),
            clock,
            events,
        };
        Ok(Self {
            state: Arc::new(state),
            static_route: config.static_dir.clone().map(|d| (config.static_prefix.clone(), d)),
            allowed_origins: config.allowed_origins.clone(),
        })
    }

    pub fn router(&self) -> Router {
        let mut router = Router::new()
            .route("/api/pow-challenge", get(pow_challenge))
            .route("/api/pow-verify", post(pow_verify))
            .route("/api/challenge", get(fetch_challenge))
            .route("/api/answer", post(answer))
            .route("/img/{captcha_id}/{tile}", get(tile))
            .fallback(|| async { json_response(StatusCode::NOT_FOUND, NOT_FOUND_BODY) })
            .with_state(Arc::clone(&self.state));
        if let Some((prefix, dir)) = &self.static_route {
            router = router.nest_service(prefix, ServeDir::new(dir));
        }
        if !self.allowed_origins.is_empty() {
            let origins: Vec<HeaderValue> = self
                .allowed_origins
                .iter()
                .filter_map(|o| HeaderValue::from_str(o).ok())
                .collect();
            router = router.layer(
                CorsLayer::new()
                    .allow_origin(AllowOrigin::list(origins))
                    .allow_methods([Method::GET, Method::POST])
                    .allow_headers([header::CONTENT_TYPE])
                    .allow_credentials(true),
            );
        }
        router
    }

    /// Total SHA-256 invocations performed by request handlers.
    pub fn hash_count(&self) -> u64 {
        self.state.verifier.hasher().count()
    }

    pub fn ledger(&self) -> &TokenLedger {
        &self.state.ledger
    }

    pub fn difficulty_bits(&self) -> u32 {
        self.state.difficulty_bits
    }

    pub fn pending_challenges(&self) -> usize {
        self.state.pending().len()
    }

    pub fn live_captchas(&self) -> usize {
        self.state.book.len()
    }

    /// Drops expired puzzles, grids and ledger entries; returns how many went.
    pub fn purge(&self) -> usize {
        let now = self.state.now();
        let mut pending = self.state.pending();
        let before = pending.len();
        pending.retain(|_, p| !p.challenge.is_expired(now));
        let dropped = before - pending.len();
        drop(pending);
        dropped + self.state.book.purge_expired(now) + self.state.ledger.purge_expired(now)
    }
}

fn json_response(status: StatusCode, body: &'static str) -> Response {
    (
        status,
        [
            (header::CONTENT_TYPE, "application/json"),
            (header::CACHE_CONTROL, "no-store"),
        ],
        body,
    )
        .into_response()
}

fn json_value<T: Serialize>(value: &T) -> Response {
    let body = serde_json::to_vec(value).expect("views serialize");
    (
        StatusCode::OK,
        [
            (header::CONTENT_TYPE, "application/json"),
            (header::CACHE_CONTROL, "no-store"),
        ],
        body,
    )
        .into_response()
}

fn session_from(headers: &HeaderMap) -> Option<SessionId> {
    headers
        .get_all(header::COOKIE)
        .iter()
        .filter_map(|v| v.to_str().ok())
        .flat_map(|v| v.split(';'))
        .filter_map(|kv| kv.trim().split_once('='))
        .find(|(k, _)| *k == SESSION_COOKIE)
        .and_then(|(_, v)| v.parse().ok())
}

fn parse_json_body(body: &Bytes) -> Option<Value> {
    serde_json::from_slice(body).ok()
}

#[derive(Serialize)]
struct PowChallengeView {
    challenge_id: ChallengeId,
    salt: String,
    difficulty_bits: u32,
    expires_in_ms: u64,
}

async fn pow_challenge(State(st): State<Arc<AppState>>, headers: HeaderMap) -> Response {
    let now = st.now();
    let (session, fresh) = match session_from(&headers) {
        Some(s) => (s, false),
        None => (SessionId::random(&mut rand::rng()), true),
    };
    let challenge = pow::new_challenge(st.difficulty_bits, st.pow_ttl_ms, now, &mut rand::rng())
        .expect("difficulty and ttl validated at startup");
    {
        let mut pending = st.pending();
        if pending.len() >= st.max_pending {
            pending.retain(|_, p| !p.challenge.is_expired(now));
        }
        if pending.len() >= st.max_pending {
            drop(pending);
            st.emit(Event::Denied {
                stage: "pow_challenge",
                reason: "pending_full",
            });
            return json_response(StatusCode::SERVICE_UNAVAILABLE, UNAVAILABLE_BODY);
        }
        pending.insert(
            challenge.challenge_id(),
            PendingPow {
                challenge: challenge.clone(),
                session,
            },
        );
    }
    st.emit(Event::Issued {
        challenge_id: challenge.challenge_id().to_hex(),
        difficulty_bits: challenge.difficulty_bits(),
    });
    let mut resp = json_value(&PowChallengeView {
        challenge_id: challenge.challenge_id(),
        salt: challenge.salt().to_hex(),
        difficulty_bits: challenge.difficulty_bits(),
        expires_in_ms: challenge.remaining_ms(now),
    });
    if fresh {
        let secure = if st.secure_cookie { "; Secure" } else { "" };
        let cookie = format!("{SESSION_COOKIE}={session}; Path=/; HttpOnly; SameSite=Lax{secure}");
        resp.headers_mut().insert(
            header::SET_COOKIE,
            HeaderValue::from_str(&cookie).expect("ascii cookie"),
        );
    }
    resp
}

#[derive(Serialize)]
struct TokenView {
    token: TokenId,
}

async fn pow_verify(State(st): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    const STAGE: &str = "pow_verify";
    let Some(body) = parse_json_body(&body) else {
        return json_response(StatusCode::BAD_REQUEST, BAD_REQUEST_BODY);
    };
    let Some(session) = session_from(&headers) else {
        return st.deny(STAGE, "no_session");
    };
    let Some(challenge_id) = body
        .get("challenge_id")
        .and_then(Value::as_str)
        .and_then(|s| s.parse::<ChallengeId>().ok())
    else {
        return st.deny(STAGE, "malformed_challenge_id");
    };
    let challenge = {
        let pending = st.pending();
        match pending.get(&challenge_id) {
            None => None,
            Some(p) if p.session != session => {
                drop(pending);
                return st.deny(STAGE, "session_mismatch");
            }
            Some(p) => Some(p.challenge.clone()),
        }
    };
    let Some(challenge) = challenge else {
        return st.deny(STAGE, "unknown_challenge");
    };

    let now = st.now();
    let verdict = match body.get("nonce") {
        Some(Value::Number(n)) => match n.as_u64() {
            Some(n) => st.verifier.check(&challenge, n, now),
            None => st.verifier.check_str(&challenge, "", now),
        },
        Some(Value::String(s)) => st.verifier.check_str(&challenge, s, now),
        _ => st.verifier.check_str(&challenge, "", now),
    };
    match verdict {
        PowVerdict::Accept => {}
        PowVerdict::Reject(pow::RejectReason::Expired) => {
            st.pending().remove(&challenge_id);
            return st.deny(STAGE, "expired");
        }
        PowVerdict::Reject(pow::RejectReason::MalformedNonce) => return st.deny(STAGE, "malformed_nonce"),
        PowVerdict::Reject(pow::RejectReason::InsufficientZeroBits) => return st.deny(STAGE, "insufficient_zero_bits"),
    }
    st.pending().remove(&challenge_id);
    st.emit(Event::Verified {
        challenge_id: challenge_id.to_hex(),
    });
    match st.ledger.mint(challenge_id, session, now, st.token_ttl_ms) {
        Ok(token) => {
            st.emit(Event::Minted {
                challenge_id: challenge_id.to_hex(),
                token_id: token.token_id.to_hex(),
            });
            json_value(&TokenView { token: token.token_id })
        }
        Err(MintError::AlreadyConsumed(_)) => st.deny(STAGE, "already_consumed"),
        Err(_) => st.deny(STAGE, "ledger_error"),
    }
}

#[derive(Serialize)]
struct ChallengeView {
    captcha_id: CaptchaId,
    prompt: String,
    tiles: Vec<String>,
    expires_in_ms: u64,
}

async fn fetch_challenge(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    Query(query): Query<HashMap<String, String>>,
) -> Response {
    const STAGE: &str = "challenge";
    let Some(token) = query.get("token").and_then(|t| t.parse::<TokenId>().ok()) else {
        return st.deny(STAGE, "missing_token");
    };
    let Some(session) = session_from(&headers) else {
        return st.deny(STAGE, "no_session");
    };
    let now = st.now();
    if let Err(e) = st.ledger.redeem(token, session, now) {
        return st.deny(STAGE, e.reason());
    }
    st.emit(Event::Redeemed {
        token_id: token.to_hex(),
    });
    let challenge = match images::assemble_challenge(&st.catalog, &mut rand::rng(), now, st.challenge_ttl_ms) {
        Ok(c) => c,
        Err(_) => {
            st.emit(Event::Denied {
                stage: STAGE,
                reason: "catalog_exhausted",
            });
            return json_response(StatusCode::SERVICE_UNAVAILABLE, UNAVAILABLE_BODY);
        }
    };
    let view = ChallengeView {
        captcha_id: challenge.captcha_id,
        prompt: challenge.prompt(),
        tiles: (0..TILE_COUNT)
            .map(|i| format!("/img/{}/{i}", challenge.captcha_id))
            .collect(),
        expires_in_ms: challenge.expires_at().saturating_sub(now),
    };
    st.emit(Event::Assembled {
        captcha_id: challenge.captcha_id.to_hex(),
    });
    st.book.insert(challenge, session);
    json_value(&view)
}

async fn tile(
    State(st): State<Arc<AppState>>,
    headers: HeaderMap,
    UrlPath((captcha_id, index)): UrlPath<(String, String)>,
) -> Response {
    const STAGE: &str = "tile";
    let (Ok(captcha_id), Ok(index)) = (captcha_id.parse::<CaptchaId>(), index.parse::<usize>()) else {
        return st.deny(STAGE, "malformed_tile_url");
    };
    let Some(session) = session_from(&headers) else {
        return st.deny(STAGE, "no_session");
    };
    let Some(at) = st.book.tile(captcha_id, session, index, st.now()) else {
        return st.deny(STAGE, "tile_not_live");
    };
    let asset = st.catalog.asset(at).clone();
    let bytes = match asset.source {
        images::AssetSource::Memory(b) => b.to_vec(),
        images::AssetSource::File(path) => match tokio::fs::read(&path).await {
            Ok(b) => b,
            Err(_) => return st.deny(STAGE, "asset_unreadable"),
        },
    };
    Response::builder()
        .status(StatusCode::OK)
        .header(header::CONTENT_TYPE, asset.format.content_type())
        .header(header::CACHE_CONTROL, "no-store")
        .body(Body::from(bytes))
        .expect("static headers")
}

#[derive(Serialize)]
struct AnswerView {
    pass: bool,
}

async fn answer(State(st): State<Arc<AppState>>, headers: HeaderMap, body: Bytes) -> Response {
    let Some(body) = parse_json_body(&body) else {
        return json_response(StatusCode::BAD_REQUEST, BAD_REQUEST_BODY);
    };
    let captcha_id = body
        .get("captcha_id")
        .and_then(Value::as_str)
        .and_then(|s| s.parse::<CaptchaId>().ok());
    let selections: Option<Vec<usize>> = body.get("selections").and_then(Value::as_array).and_then(|a| {
        a.iter()
            .map(|v| v.as_u64().and_then(|n| usize::try_from(n).ok()))
            .collect()
    });
    let pass = match (captcha_id, selections, session_from(&headers)) {
        (Some(id), Some(sel), Some(session)) => {
            let pass = st.book.grade(id, session, &sel, st.now()).passed();
            st.emit(Event::Graded {
                captcha_id: id.to_hex(),
                pass,
            });
            pass
        }
        _ => {
            st.emit(Event::Denied {
                stage: "answer",
                reason: "malformed_answer",
            });
            false
        }
    };
    json_value(&AnswerView { pass })
}

/// Loads everything named in `config` and serves until Ctrl-C.
pub async fn serve(config: ApiConfig) -> anyhow::Result<()> {
    config.validate()?;
    let manifest = config
        .manifest_path
        .as_deref()
        .ok_or_else(|| anyhow::anyhow!("manifest_path is required to serve"))?;
    let catalog = images::load_catalog(manifest)?;
    let ledger = match &config.journal_path {
        Some(p) => TokenLedger::open_journal(p, crate::ledger::DEFAULT_RETENTION_MS)?,
        None => TokenLedger::new(),
    };
    let app = App::new(&config, catalog, ledger)?;
    let addr = config.bind_addr()?;
    let listener = tokio::net::TcpListener::bind(addr).await?;
    eprintln!(
        "{}",
        serde_json::json!({
            "event": "listening",
            "addr": listener.local_addr()?.to_string(),
            "difficulty_bits": app.difficulty_bits(),
        })
    );

    let janitor = app.clone();
    tokio::spawn(async move {
        let mut tick = tokio::time::interval(Duration::from_secs(30));
        loop {
            tick.tick().await;
            janitor.purge();
        }
    });

    axum::serve(listener, app.router())
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}
