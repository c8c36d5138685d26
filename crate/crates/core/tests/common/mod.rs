#![allow(dead_code)]

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use powgate::http::{ApiConfig, App, MemorySink};
use powgate::images::Catalog;
use powgate::ledger::TokenLedger;
use powgate::pow::{self, ChallengeId, PowChallenge, Salt};
use powgate::ManualClock;
use serde_json::Value;
use tower::ServiceExt;

pub const T0: u64 = 1_700_000_000_000;

pub struct Captured {
    pub status: StatusCode,
    pub content_type: Option<String>,
    pub set_cookie: Option<String>,
    pub body: Vec<u8>,
}

impl Captured {
    pub fn json(&self) -> Value {
        serde_json::from_slice(&self.body).expect("json body")
    }
}

pub struct Harness {
    pub app: App,
    pub router: Router,
    pub clock: Arc<ManualClock>,
    pub events: Arc<MemorySink>,
}

impl Harness {
    pub fn new(config: ApiConfig) -> Self {
        let catalog = Catalog::synthetic(&["cat", "dog", "car"], 5).unwrap();
        Self::with_catalog(config, catalog)
    }

    pub fn with_catalog(config: ApiConfig, catalog: Catalog) -> Self {
        let clock = Arc::new(ManualClock::new(T0));
        let events = Arc::new(MemorySink::default());
        let app = App::with_parts(&config, catalog, TokenLedger::new(), clock.clone(), events.clone()).unwrap();
        let router = app.router();
        Self {
            app,
            router,
            clock,
            events,
        }
    }

    pub fn at_bits(bits: u32) -> Self {
        Self::new(ApiConfig {
            difficulty_bits: Some(bits),
            ..ApiConfig::default()
        })
    }

    pub fn client(&self) -> Client {
        Client {
            router: self.router.clone(),
            cookie: None,
            log: Vec::new(),
        }
    }
}

/// A cookie-keeping client that records every response it sees.
pub struct Client {
    router: Router,
    pub cookie: Option<String>,
    pub log: Vec<Captured>,
}

impl Client {
    pub async fn send(&mut self, method: &str, uri: &str, body: Option<Vec<u8>>) -> &Captured {
        let mut req = Request::builder().method(method).uri(uri);
        if let Some(c) = &self.cookie {
            req = req.header(header::COOKIE, c.as_str());
        }
        if body.is_some() {
            req = req.header(header::CONTENT_TYPE, "application/json");
        }
        let req = req.body(body.map(Body::from).unwrap_or_else(Body::empty)).unwrap();
        let resp = self.router.clone().oneshot(req).await.unwrap();
        let status = resp.status();
        let header_str = |h| {
            resp.headers()
                .get(h)
                .map(|v: &header::HeaderValue| v.to_str().unwrap().to_string())
        };
        let content_type = header_str(header::CONTENT_TYPE);
        let set_cookie = header_str(header::SET_COOKIE);
        if let Some(sc) = &set_cookie {
            self.cookie = Some(sc.split(';').next().unwrap().to_string());
        }
        let body = resp.into_body().collect().await.unwrap().to_bytes().to_vec();
        self.log.push(Captured {
            status,
            content_type,
            set_cookie,
            body,
        });
        self.log.last().unwrap()
    }

    pub async fn get(&mut self, uri: &str) -> &Captured {
        self.send("GET", uri, None).await
    }

    pub async fn post_json(&mut self, uri: &str, v: Value) -> &Captured {
        self.send("POST", uri, Some(serde_json::to_vec(&v).unwrap())).await
    }

    /// Full PoW phase; returns (challenge json, token).
    pub async fn obtain_token(&mut self) -> (Value, String) {
        let ch = self.get("/api/pow-challenge").await.json();
        let nonce = solve_view(&ch);
        let id = ch["challenge_id"].as_str().unwrap().to_string();
        let resp = self
            .post_json(
                "/api/pow-verify",
                serde_json::json!({ "challenge_id": id, "nonce": nonce }),
            )
            .await;
        assert_eq!(
            resp.status,
            StatusCode::OK,
            "verify failed: {}",
            String::from_utf8_lossy(&resp.body)
        );
        let token = resp.json()["token"].as_str().unwrap().to_string();
        (ch, token)
    }
}

/// Solves a challenge view natively, the way any client would.
pub fn solve_view(view: &Value) -> u64 {
    let salt: Salt = view["salt"].as_str().unwrap().parse().unwrap();
    let bits = view["difficulty_bits"].as_u64().unwrap() as u32;
    let c = PowChallenge::from_parts(ChallengeId([0; 16]), salt, bits, 0, 1).unwrap();
    pow::solve(&c, 0, pow::NONCE_LIMIT).nonce().unwrap()
}

/// Smallest nonce in `start..` failing the bit test, for building bad submissions.
pub fn failing_nonce(view: &Value) -> u64 {
    let salt: Salt = view["salt"].as_str().unwrap().parse().unwrap();
    let bits = view["difficulty_bits"].as_u64().unwrap() as u32;
    (0..)
        .find(|n| pow::leading_zero_bits(&pow::pow_digest(&salt, *n)) < bits)
        .unwrap()
}

/// Reads the category label the placeholder renderer stamps into each PNG.
pub fn tile_label(png_bytes: &[u8]) -> String {
    let reader = png::Decoder::new(std::io::Cursor::new(png_bytes.to_vec()))
        .read_info()
        .unwrap();
    reader
        .info()
        .uncompressed_latin1_text
        .iter()
        .find(|t| t.keyword == "category")
        .map(|t| t.text.clone())
        .unwrap()
}

impl Client {
    /// Looks at every tile the way a person would and picks the matching ones.
    pub async fn honest_selection(&mut self, view: &Value) -> Vec<usize> {
        let prompt = view["prompt"].as_str().unwrap();
        let category = prompt
            .strip_prefix("Select all images containing ")
            .unwrap()
            .to_string();
        let mut picks = Vec::new();
        for (i, url) in view["tiles"].as_array().unwrap().iter().enumerate() {
            let resp = self.get(url.as_str().unwrap()).await;
            assert_eq!(resp.status, StatusCode::OK);
            assert_eq!(resp.content_type.as_deref(), Some("image/png"));
            if tile_label(&resp.body) == category {
                picks.push(i);
            }
        }
        picks
    }

    /// challenge -> solve -> verify -> fetch -> answer correctly. Returns the verdict.
    pub async fn honest_run(&mut self) -> bool {
        let (_, token) = self.obtain_token().await;
        let resp = self.get(&format!("/api/challenge?token={token}")).await;
        assert_eq!(resp.status, StatusCode::OK);
        let view = resp.json();
        let picks = self.honest_selection(&view).await;
        let resp = self
            .post_json(
                "/api/answer",
                serde_json::json!({ "captcha_id": view["captcha_id"], "selections": picks }),
            )
            .await;
        resp.json()["pass"].as_bool().unwrap()
    }
}
