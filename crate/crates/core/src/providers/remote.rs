//! HTTP scoring client.
//!
//! `POST {endpoint}/score` with `{"video_id", "tool", "query"}`; the response
//! body is a score file v1. Non-2xx responses carry `{"error": string}`.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::{json, Value};

use super::files::ScoreFile;
use super::Scorer;
use crate::error::{Error, Result};
use crate::plan::ToolKind;
use crate::timeline::FrameTimeline;

/// A JSON-over-HTTP round trip. Tests substitute fakes.
pub trait Transport: Send + Sync {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value>;
}

pub struct HttpTransport {
    base: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpTransport {
    pub fn new(base: impl Into<String>, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            base: base.into().trim_end_matches('/').to_string(),
            api_key,
            agent,
        }
    }
}

impl Transport for HttpTransport {
    fn post_json(&self, path: &str, body: &Value) -> Result<Value> {
        let url = format!("{}{}", self.base, path);
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req
            .send_json(body)
            .map_err(|e| Error::Provider(format!("POST {url}: {e}")))?;
        let status = resp.status();
        let value: Value = resp
            .body_mut()
            .read_json()
            .map_err(|e| Error::Provider(format!("POST {url}: unreadable body: {e}")))?;
        if !status.is_success() {
            let msg = value
                .get("error")
                .and_then(Value::as_str)
                .unwrap_or("no error message");
            return Err(Error::Provider(format!("POST {url}: {status}: {msg}")));
        }
        Ok(value)
    }
}

/// Counting semaphore bounding in-flight requests.
#[derive(Debug)]
pub struct Limiter {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct Permit<'a>(&'a Limiter);

impl Limiter {
    pub fn new(max: usize) -> Self {
        Self {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.in_flight.lock().expect("limiter poisoned");
        while *n >= self.max {
            n = self.freed.wait(n).expect("limiter poisoned");
        }
        *n += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        let mut n = self.0.in_flight.lock().expect("limiter poisoned");
        *n -= 1;
        self.0.freed.notify_one();
    }
}

/// Calls `f` up to `1 + retries` times, returning the last error.
pub fn with_retries<T>(retries: u32, mut f: impl FnMut() -> Result<T>) -> Result<T> {
    let mut attempt = 0;
    loop {
        match f() {
            Ok(v) => return Ok(v),
            Err(e) if attempt < retries => {
                log::debug!("attempt {} failed: {e}", attempt + 1);
                attempt += 1;
            }
            Err(e) => return Err(e),
        }
    }
}

pub struct RemoteScorer {
    transport: Arc<dyn Transport>,
    limiter: Limiter,
    retries: u32,
}

impl RemoteScorer {
    pub fn new(transport: Arc<dyn Transport>, max_concurrent: usize, retries: u32) -> Self {
        Self {
            transport,
            limiter: Limiter::new(max_concurrent),
            retries,
        }
    }
}

impl Scorer for RemoteScorer {
    fn score(
        &self,
        video_id: &str,
        tool: ToolKind,
        query: &str,
        timeline: &FrameTimeline,
    ) -> Result<Vec<f64>> {
        let body = json!({"video_id": video_id, "tool": tool.wire_name(), "query": query});
        let value = with_retries(self.retries, || {
            let _permit = self.limiter.acquire();
            self.transport.post_json("/score", &body)
        })?;
        let file: ScoreFile = serde_json::from_value(value)
            .map_err(|e| Error::Provider(format!("malformed score response: {e}")))?;
        if file.video_id != video_id || file.tool != tool || file.query != query {
            return Err(Error::Provider(format!(
                "score response is for ({}, {}, {:?})",
                file.video_id, file.tool, file.query
            )));
        }
        file.validate(timeline)?;
        Ok(file.scores)
    }
}
