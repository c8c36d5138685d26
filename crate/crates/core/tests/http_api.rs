mod common;

use axum::http::StatusCode;
use common::{failing_nonce, solve_view, Harness};
use powgate::http::{ApiConfig, Event, DENIED_BODY};
use serde_json::json;

#[tokio::test]
async fn pow_challenge_defaults_and_freshness() {
    let h = Harness::new(ApiConfig::default());
    let mut c = h.client();
    let first = c.get("/api/pow-challenge").await;
    assert_eq!(first.status, StatusCode::OK);
    let cookie = first.set_cookie.clone().unwrap();
    assert!(cookie.starts_with("pg_sid=") && cookie.contains("HttpOnly"));
    let a = first.json();
    assert_eq!(a["difficulty_bits"], 16);
    assert_eq!(a["expires_in_ms"], 120_000);
    assert_eq!(a["salt"].as_str().unwrap().len(), 32);
    assert_eq!(a["challenge_id"].as_str().unwrap().len(), 32);

    let second = c.get("/api/pow-challenge").await;
    assert!(second.set_cookie.is_none(), "cookie only set on first contact");
    let b = second.json();
    assert_ne!(a["challenge_id"], b["challenge_id"]);
    assert_ne!(a["salt"], b["salt"]);
}

#[tokio::test]
async fn hardened_preset_serves_twenty_bits() {
    let h = Harness::new(ApiConfig {
        hardened: true,
        ..ApiConfig::default()
    });
    let mut c = h.client();
    assert_eq!(c.get("/api/pow-challenge").await.json()["difficulty_bits"], 20);
}

#[tokio::test]
async fn verify_round_trip_and_replay() {
    let h = Harness::at_bits(8);
    let mut c = h.client();
    let ch = c.get("/api/pow-challenge").await.json();
    let body = json!({ "challenge_id": ch["challenge_id"], "nonce": solve_view(&ch) });
    let ok = c.post_json("/api/pow-verify", body.clone()).await;
    assert_eq!(ok.status, StatusCode::OK);
    assert_eq!(ok.json()["token"].as_str().unwrap().len(), 32);

    let replay = c.post_json("/api/pow-verify", body).await;
    assert_eq!(replay.status, StatusCode::FORBIDDEN);
    assert_eq!(replay.body, DENIED_BODY.as_bytes());
}

#[tokio::test]
async fn verify_accepts_string_nonces() {
    let h = Harness::at_bits(4);
    let mut c = h.client();
    let ch = c.get("/api/pow-challenge").await.json();
    let body = json!({ "challenge_id": ch["challenge_id"], "nonce": solve_view(&ch).to_string() });
    assert_eq!(c.post_json("/api/pow-verify", body).await.status, StatusCode::OK);
}

#[tokio::test]
async fn verify_denials_are_uniform() {
    let h = Harness::at_bits(8);
    let mut c = h.client();
    let ch = c.get("/api/pow-challenge").await.json();
    let id = ch["challenge_id"].clone();
    let bad = [
        json!({ "challenge_id": id, "nonce": failing_nonce(&ch) }),
        json!({ "challenge_id": id, "nonce": -1 }),
        json!({ "challenge_id": id, "nonce": 1.5 }),
        json!({ "challenge_id": id, "nonce": "0x1f" }),
        json!({ "challenge_id": id }),
        json!({ "challenge_id": "00", "nonce": 1 }),
        json!({ "challenge_id": "0".repeat(32), "nonce": 1 }),
        json!([1, 2, 3]),
    ];
    for body in bad {
        let r = c.post_json("/api/pow-verify", body.clone()).await;
        assert_eq!(r.status, StatusCode::FORBIDDEN, "{body}");
        assert_eq!(r.body, DENIED_BODY.as_bytes(), "{body}");
    }

    // Another browser cannot spend this session's challenge.
    let mut other = h.client();
    other.get("/api/pow-challenge").await;
    let r = other
        .post_json(
            "/api/pow-verify",
            json!({ "challenge_id": id, "nonce": solve_view(&ch) }),
        )
        .await;
    assert_eq!(r.body, DENIED_BODY.as_bytes());

    // The challenge is still usable by its owner after all that noise.
    let r = c
        .post_json(
            "/api/pow-verify",
            json!({ "challenge_id": id, "nonce": solve_view(&ch) }),
        )
        .await;
    assert_eq!(r.status, StatusCode::OK);
}

#[tokio::test]
async fn non_json_bodies_are_bad_requests() {
    let h = Harness::at_bits(4);
    let mut c = h.client();
    c.get("/api/pow-challenge").await;
    for uri in ["/api/pow-verify", "/api/answer"] {
        let r = c.send("POST", uri, Some(b"challenge_id=1&nonce=2".to_vec())).await;
        assert_eq!(r.status, StatusCode::BAD_REQUEST, "{uri}");
    }
}

#[tokio::test]
async fn expired_challenge_is_denied_without_hashing() {
    let h = Harness::at_bits(8);
    let mut c = h.client();
    let ch = c.get("/api/pow-challenge").await.json();
    h.clock.advance(120_000);
    let before = h.app.hash_count();
    let r = c
        .post_json(
            "/api/pow-verify",
            json!({ "challenge_id": ch["challenge_id"], "nonce": solve_view(&ch) }),
        )
        .await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
    assert_eq!(h.app.hash_count(), before);
}

#[tokio::test]
async fn challenge_fetch_is_single_use() {
    let h = Harness::at_bits(4);
    let mut c = h.client();
    let (_, token) = c.obtain_token().await;
    let uri = format!("/api/challenge?token={token}");
    let first = c.get(&uri).await;
    assert_eq!(first.status, StatusCode::OK);
    let view = first.json();
    assert_eq!(view["tiles"].as_array().unwrap().len(), 6);
    assert!(view["prompt"]
        .as_str()
        .unwrap()
        .starts_with("Select all images containing "));
    assert!(view.get("target_indices").is_none());
    let text = String::from_utf8(first.body.clone()).unwrap();
    assert!(!text.contains("target"));

    let second = c.get(&uri).await;
    assert_eq!(second.status, StatusCode::FORBIDDEN);
    assert_eq!(second.body, DENIED_BODY.as_bytes());
}

#[tokio::test]
async fn token_is_bound_to_session() {
    let h = Harness::at_bits(4);
    let mut c = h.client();
    let (_, token) = c.obtain_token().await;
    let mut thief = h.client();
    thief.get("/api/pow-challenge").await;
    let r = thief.get(&format!("/api/challenge?token={token}")).await;
    assert_eq!(r.body, DENIED_BODY.as_bytes());
    // The mismatch did not burn the owner's token.
    assert_eq!(
        c.get(&format!("/api/challenge?token={token}")).await.status,
        StatusCode::OK
    );
}

#[tokio::test]
async fn expired_token_is_denied() {
    let h = Harness::at_bits(4);
    let mut c = h.client();
    let (_, token) = c.obtain_token().await;
    h.clock.advance(120_000);
    let r = c.get(&format!("/api/challenge?token={token}")).await;
    assert_eq!(r.body, DENIED_BODY.as_bytes());
}

#[tokio::test]
async fn answer_is_one_shot() {
    let h = Harness::at_bits(4);
    let mut c = h.client();
    let (_, token) = c.obtain_token().await;
    let view = c.get(&format!("/api/challenge?token={token}")).await.json();
    let picks = c.honest_selection(&view).await;
    assert!((2..=3).contains(&picks.len()));
    let body = json!({ "captcha_id": view["captcha_id"], "selections": picks });
    assert_eq!(
        c.post_json("/api/answer", body.clone()).await.json(),
        json!({ "pass": true })
    );
    assert_eq!(c.post_json("/api/answer", body).await.json(), json!({ "pass": false }));
    // Tiles stop resolving once the grid is graded.
    let r = c.get(view["tiles"][0].as_str().unwrap()).await;
    assert_eq!(r.status, StatusCode::FORBIDDEN);
}

#[tokio::test]
async fn wrong_answer_consumes_the_attempt() {
    let h = Harness::at_bits(4);
    let mut c = h.client();
    let (_, token) = c.obtain_token().await;
    let view = c.get(&format!("/api/challenge?token={token}")).await.json();
    let picks = c.honest_selection(&view).await;
    let wrong: Vec<usize> = (0..6).filter(|i| !picks.contains(i)).take(2).collect();
    let id = view["captcha_id"].clone();
    assert_eq!(
        c.post_json("/api/answer", json!({ "captcha_id": id, "selections": wrong }))
            .await
            .json()["pass"],
        false
    );
    assert_eq!(
        c.post_json("/api/answer", json!({ "captcha_id": id, "selections": picks }))
            .await
            .json()["pass"],
        false
    );
}

#[tokio::test]
async fn malformed_answers_fail_quietly() {
    let h = Harness::at_bits(4);
    let mut c = h.client();
    for body in [
        json!({}),
        json!({ "captcha_id": "zz", "selections": [0, 1] }),
        json!({ "captcha_id": "0".repeat(32), "selections": [0, 1] }),
        json!({ "captcha_id": "0".repeat(32), "selections": "0,1" }),
        json!({ "captcha_id": "0".repeat(32), "selections": [-1, 1] }),
    ] {
        let r = c.post_json("/api/answer", body).await;
        assert_eq!(r.status, StatusCode::OK);
        assert_eq!(r.json(), json!({ "pass": false }));
    }
}

#[tokio::test]
async fn tiles_expire_with_the_challenge() {
    let h = Harness::at_bits(4);
    let mut c = h.client();
    let (_, token) = c.obtain_token().await;
    let view = c.get(&format!("/api/challenge?token={token}")).await.json();
    let url = view["tiles"][3].as_str().unwrap().to_string();
    assert_eq!(c.get(&url).await.status, StatusCode::OK);
    h.clock.advance(120_000);
    assert_eq!(c.get(&url).await.status, StatusCode::FORBIDDEN);
    assert!(h.app.purge() >= 1);
    assert_eq!(h.app.live_captchas(), 0);
}

#[tokio::test]
async fn structured_events_record_internal_reasons() {
    let h = Harness::at_bits(4);
    let mut c = h.client();
    assert!(c.honest_run().await);
    c.get("/api/challenge").await;
    let events = h.events.events();
    for kind in ["issued", "verified", "minted", "redeemed", "assembled", "graded"] {
        assert!(
            events.iter().any(|e| serde_json::to_value(e).unwrap()["event"] == kind),
            "missing {kind}"
        );
    }
    assert!(events.contains(&Event::Denied {
        stage: "challenge",
        reason: "missing_token"
    }));
}

#[tokio::test]
async fn pending_challenges_are_capped() {
    let h = Harness::new(ApiConfig {
        difficulty_bits: Some(4),
        max_pending_challenges: 3,
        ..ApiConfig::default()
    });
    let mut c = h.client();
    for _ in 0..3 {
        assert_eq!(c.get("/api/pow-challenge").await.status, StatusCode::OK);
    }
    assert_eq!(
        c.get("/api/pow-challenge").await.status,
        StatusCode::SERVICE_UNAVAILABLE
    );
    h.clock.advance(120_000);
    assert_eq!(c.get("/api/pow-challenge").await.status, StatusCode::OK);
    assert_eq!(h.app.pending_challenges(), 1);
}

#[tokio::test]
async fn static_assets_are_served_under_the_prefix() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("widget.js"), "console.log('hi')").unwrap();
    let h = Harness::new(ApiConfig {
        static_dir: Some(dir.path().to_path_buf()),
        ..ApiConfig::default()
    });
    let mut c = h.client();
    let r = c.get("/static/widget.js").await;
    assert_eq!(r.status, StatusCode::OK);
    assert_eq!(r.body, b"console.log('hi')");
    assert_eq!(c.get("/nope").await.status, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn serves_catalog_loaded_from_disk() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = powgate::fixtures::write_placeholder_catalog(dir.path(), &["cat", "dog"], 4).unwrap();
    let catalog = powgate::images::load_catalog(&manifest).unwrap();
    let h = Harness::with_catalog(
        ApiConfig {
            difficulty_bits: Some(4),
            ..ApiConfig::default()
        },
        catalog,
    );
    assert!(h.client().honest_run().await);
}

#[tokio::test]
async fn real_socket_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = powgate::fixtures::write_placeholder_catalog(dir.path(), &["cat", "dog"], 4).unwrap();
    let catalog = powgate::images::load_catalog(&manifest).unwrap();
    let app = powgate::http::App::with_parts(
        &ApiConfig {
            difficulty_bits: Some(4),
            ..ApiConfig::default()
        },
        catalog,
        powgate::ledger::TokenLedger::new(),
        std::sync::Arc::new(powgate::SystemClock),
        std::sync::Arc::new(powgate::http::NullSink),
    )
    .unwrap();
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let addr = listener.local_addr().unwrap();
    tokio::spawn(async move { axum::serve(listener, app.router()).await });

    use tokio::io::{AsyncReadExt, AsyncWriteExt};
    let mut sock = tokio::net::TcpStream::connect(addr).await.unwrap();
    sock.write_all(b"GET /api/pow-challenge HTTP/1.1\r\nHost: x\r\nConnection: close\r\n\r\n")
        .await
        .unwrap();
    let mut raw = String::new();
    sock.read_to_string(&mut raw).await.unwrap();
    assert!(raw.starts_with("HTTP/1.1 200"));
    assert!(raw.to_ascii_lowercase().contains("set-cookie: pg_sid="));
    assert!(raw.contains("\"difficulty_bits\":4"));
}

#[test]
fn example_config_loads() {
    let path = std::path::Path::new(concat!(env!("CARGO_MANIFEST_DIR"), "/../../config.example.json"));
    let cfg = ApiConfig::load(path).unwrap();
    cfg.validate().unwrap();
    assert_eq!(cfg.difficulty().unwrap(), 16);
    assert!(cfg.manifest_path.unwrap().ends_with("catalog/manifest.json"));
}
