//! Chat-completion client used by the planner, OCR judge and answerer.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::remote::{with_retries, Limiter, Transport};
use crate::error::{Error, Result};
use crate::ocr::Judge;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    pub fn user(content: impl Into<String>) -> Self {
        Self {
            role: "user".into(),
            content: content.into(),
        }
    }
}

pub trait ChatClient: Send + Sync {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String>;
}

/// Sends `{"model", "messages", "temperature": 0}` and reads back either an
/// OpenAI-style `choices[0].message.content` or a top-level `text` field.
pub struct HttpChatClient {
    transport: Arc<dyn Transport>,
    model: String,
    path: String,
    limiter: Limiter,
    retries: u32,
}

impl HttpChatClient {
    pub fn new(
        transport: Arc<dyn Transport>,
        model: impl Into<String>,
        max_concurrent: usize,
        retries: u32,
    ) -> Self {
        Self {
            transport,
            model: model.into(),
            path: "/v1/chat/completions".into(),
            limiter: Limiter::new(max_concurrent),
            retries,
        }
    }

    pub fn with_path(mut self, path: impl Into<String>) -> Self {
        self.path = path.into();
        self
    }
}

fn response_text(v: &Value) -> Option<String> {
    if let Some(s) = v.as_str() {
        return Some(s.to_string());
    }
    v.pointer("/choices/0/message/content")
        .or_else(|| v.get("text"))
        .and_then(Value::as_str)
        .map(str::to_string)
}

impl ChatClient for HttpChatClient {
    fn complete(&self, messages: &[ChatMessage]) -> Result<String> {
        let body = json!({"model": self.model, "messages": messages, "temperature": 0});
        let v = with_retries(self.retries, || {
            let _permit = self.limiter.acquire();
            self.transport.post_json(&self.path, &body)
        })?;
        response_text(&v).ok_or_else(|| Error::Provider("chat response has no text".into()))
    }
}

/// Relevance judge backed by a chat model. One request per question.
pub struct ChatJudge {
    client: Arc<dyn ChatClient>,
}

impl ChatJudge {
    pub fn new(client: Arc<dyn ChatClient>) -> Self {
        Self { client }
    }

    pub fn prompt(query: &str, texts: &[String]) -> String {
        let mut p = format!(
            "Query: {query}\n\nBelow are numbered pieces of on-screen text read from video frames. \
             For each one, decide whether it helps answer the query. Reply with only a JSON array \
             of {} booleans, in order.\n\n",
            texts.len()
        );
        for (i, t) in texts.iter().enumerate() {
            p.push_str(&format!("{}. {}\n", i + 1, t.replace('\n', " ")));
        }
        p
    }
}

fn parse_bool_array(reply: &str) -> Result<Vec<bool>> {
    let start = reply.find('[');
    let end = reply.rfind(']');
    match (start, end) {
        (Some(s), Some(e)) if e > s => serde_json::from_str(&reply[s..=e])
            .map_err(|err| Error::Provider(format!("judge reply is not a boolean array: {err}"))),
        _ => Err(Error::Provider("judge reply has no JSON array".into())),
    }
}

impl Judge for ChatJudge {
    fn judge(&self, query: &str, texts: &[String]) -> Result<Vec<bool>> {
        let reply = self
            .client
            .complete(&[ChatMessage::user(Self::prompt(query, texts))])?;
        parse_bool_array(&reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Mutex;

    struct Canned(Mutex<Vec<Value>>, Value);

    impl Transport for Canned {
        fn post_json(&self, path: &str, body: &Value) -> Result<Value> {
            assert_eq!(path, "/v1/chat/completions");
            assert_eq!(body["temperature"], 0);
            self.0.lock().unwrap().push(body.clone());
            Ok(self.1.clone())
        }
    }

    #[test]
    fn reads_openai_shape() {
        let t = Arc::new(Canned(
            Mutex::new(vec![]),
            json!({"choices": [{"message": {"content": "B"}}]}),
        ));
        let c = HttpChatClient::new(t.clone(), "m", 1, 0);
        assert_eq!(c.complete(&[ChatMessage::user("hi")]).unwrap(), "B");
        let sent = &t.0.lock().unwrap()[0];
        assert_eq!(sent["model"], "m");
        assert_eq!(sent["messages"][0]["role"], "user");
    }

    #[test]
    fn reads_text_shape() {
        let t = Arc::new(Canned(Mutex::new(vec![]), json!({"text": "[true, false]"})));
        let judge = ChatJudge::new(Arc::new(HttpChatClient::new(t, "m", 1, 0)));
        assert_eq!(
            judge.judge("q", &["a".into(), "b".into()]).unwrap(),
            vec![true, false]
        );
    }

    #[test]
    fn bool_array_parsing() {
        assert_eq!(
            parse_bool_array("Sure: [true,false,true]").unwrap(),
            vec![true, false, true]
        );
        assert!(parse_bool_array("yes").is_err());
        assert!(parse_bool_array("[1, 2]").is_err());
    }
}
