//! Structured log events, one JSON object per line.

use std::io::Write;
use std::sync::Mutex;

use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum Event {
    Issued {
        challenge_id: String,
        difficulty_bits: u32,
    },
    Verified {
        challenge_id: String,
    },
    Minted {
        challenge_id: String,
        token_id: String,
    },
    Redeemed {
        token_id: String,
    },
    Assembled {
        captcha_id: String,
    },
    Graded {
        captcha_id: String,
        pass: bool,
    },
    /// Internal reason only; the wire response is always the same opaque denial.
    Denied {
        stage: &'static str,
        reason: &'static str,
    },
}

pub trait EventSink: Send + Sync {
    fn emit(&self, ts_ms: u64, event: Event);
}

#[derive(Serialize)]
struct Line<'a> {
    ts: u64,
    #[serde(flatten)]
    event: &'a Event,
}

/// Writes JSON lines to stderr.
#[derive(Debug, Default)]
pub struct StderrSink;

impl EventSink for StderrSink {
    fn emit(&self, ts_ms: u64, event: Event) {
        if let Ok(line) = serde_json::to_string(&Line {
            ts: ts_ms,
            event: &event,
        }) {
            let _ = writeln!(std::io::stderr().lock(), "{line}");
        }
    }
}

#[derive(Debug, Default)]
pub struct NullSink;

impl EventSink for NullSink {
    fn emit(&self, _: u64, _: Event) {}
}

/// Keeps events in memory; handy for tests and embedding.
#[derive(Debug, Default)]
pub struct MemorySink(Mutex<Vec<Event>>);

impl MemorySink {
    pub fn events(&self) -> Vec<Event> {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn count(&self, pred: impl Fn(&Event) -> bool) -> usize {
        self.events().iter().filter(|e| pred(e)).count()
    }
}

impl EventSink for MemorySink {
    fn emit(&self, _: u64, event: Event) {
        self.0.lock().unwrap_or_else(|e| e.into_inner()).push(event);
    }
}

pub fn to_json_line(ts_ms: u64, event: &Event) -> String {
    serde_json::to_string(&Line { ts: ts_ms, event }).expect("events serialize")
}
