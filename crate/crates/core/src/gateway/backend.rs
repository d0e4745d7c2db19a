use std::collections::{BTreeMap, VecDeque};
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use super::{CompletionBackend, CompletionRequest, CompletionResult, GatewayError};

/// Hex SHA-256 of a prompt; the file stem of its replay fixture.
pub fn prompt_digest(prompt: &str) -> String {
    hex::encode(Sha256::digest(prompt.as_bytes()))
}

/// Wraps a closure as a backend.
pub struct ResponderBackend<F>(F);

impl<F> ResponderBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<CompletionResult, GatewayError> + Send + Sync,
{
    pub fn new(f: F) -> Self {
        Self(f)
    }
}

impl<F> CompletionBackend for ResponderBackend<F>
where
    F: Fn(&CompletionRequest) -> Result<CompletionResult, GatewayError> + Send + Sync,
{
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        (self.0)(request)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
enum OneOrMany {
    One(String),
    Many(Vec<String>),
}

/// Reply used whenever a prompt contains every one of `contains`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(with = "one_or_many")]
    pub contains: Vec<String>,
    pub reply: String,
}

mod one_or_many {
    use super::OneOrMany;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &[String], s: S) -> Result<S::Ok, S::Error> {
        OneOrMany::Many(v.to_vec()).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<String>, D::Error> {
        Ok(match OneOrMany::deserialize(d)? {
            OneOrMany::One(s) => vec![s],
            OneOrMany::Many(v) => v,
        })
    }
}

/// A scripted conversation: pattern rules first, then a FIFO queue.
///
/// On disk either a bare JSON array of replies or an object with optional
/// `rules` and `queue` arrays.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Script {
    #[serde(default)]
    pub rules: Vec<ScriptRule>,
    #[serde(default)]
    pub queue: Vec<String>,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ScriptFile {
    Queue(Vec<String>),
    Full(Script),
}

impl Script {
    pub fn parse(text: &str) -> Result<Self, GatewayError> {
        let file: ScriptFile = serde_json::from_str(text)
            .map_err(|e| GatewayError::Config(format!("script is not a reply array or rules object: {e}")))?;
        Ok(match file {
            ScriptFile::Queue(queue) => Script {
                rules: Vec::new(),
                queue,
            },
            ScriptFile::Full(s) => s,
        })
    }

    pub fn rule(mut self, contains: &[&str], reply: impl Into<String>) -> Self {
        self.rules.push(ScriptRule {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            reply: reply.into(),
        });
        self
    }
}

/// Deterministic backend driven by a [`Script`]. Every prompt it sees is logged.
pub struct ScriptedBackend {
    rules: Vec<ScriptRule>,
    queue: Mutex<VecDeque<String>>,
    seen: Mutex<Vec<String>>,
}

impl ScriptedBackend {
    pub fn new<I, S>(replies: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self::from_script(Script {
            rules: Vec::new(),
            queue: replies.into_iter().map(Into::into).collect(),
        })
    }

    pub fn from_script(script: Script) -> Self {
        Self {
            rules: script.rules,
            queue: Mutex::new(script.queue.into()),
            seen: Mutex::new(Vec::new()),
        }
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self, GatewayError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| GatewayError::Config(format!("cannot read script {}: {e}", path.display())))?;
        Ok(Self::from_script(Script::parse(&text)?))
    }

    pub fn prompts(&self) -> Vec<String> {
        self.seen.lock().expect("script log poisoned").clone()
    }

    pub fn remaining(&self) -> usize {
        self.queue.lock().expect("script queue poisoned").len()
    }
}

impl CompletionBackend for ScriptedBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        self.seen
            .lock()
            .expect("script log poisoned")
            .push(request.prompt.clone());
        if let Some(rule) = self
            .rules
            .iter()
            .find(|r| r.contains.iter().all(|needle| request.prompt.contains(needle.as_str())))
        {
            return Ok(CompletionResult::text(rule.reply.clone()));
        }
        self.queue
            .lock()
            .expect("script queue poisoned")
            .pop_front()
            .map(CompletionResult::text)
            .ok_or(GatewayError::ScriptExhausted)
    }
}

/// One recorded exchange, stored as `<digest>.json`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReplayFixture {
    pub digest: String,
    pub prompt: String,
    pub completion: String,
}

pub fn record_fixture(dir: impl AsRef<Path>, prompt: &str, completion: &str) -> Result<PathBuf, GatewayError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| GatewayError::Io(e.to_string()))?;
    let fixture = ReplayFixture {
        digest: prompt_digest(prompt),
        prompt: prompt.to_string(),
        completion: completion.to_string(),
    };
    let path = dir.join(format!("{}.json", fixture.digest));
    let mut body = serde_json::to_string_pretty(&fixture).expect("fixtures serialize");
    body.push('\n');
    fs::write(&path, body).map_err(|e| GatewayError::Io(e.to_string()))?;
    Ok(path)
}

/// Serves recorded completions keyed by prompt digest.
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn open(dir: impl Into<PathBuf>) -> Result<Self, GatewayError> {
        let dir = dir.into();
        if !dir.is_dir() {
            return Err(GatewayError::Config(format!(
                "replay fixture directory {} does not exist",
                dir.display()
            )));
        }
        Ok(Self { dir })
    }
}

impl CompletionBackend for ReplayBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        let digest = prompt_digest(&request.prompt);
        let path = self.dir.join(format!("{digest}.json"));
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(GatewayError::FixtureMissing { digest }),
            Err(e) => return Err(GatewayError::Io(e.to_string())),
        };
        let fixture: ReplayFixture = serde_json::from_str(&text)
            .map_err(|e| GatewayError::Config(format!("bad fixture {}: {e}", path.display())))?;
        let mut result = CompletionResult::text(fixture.completion);
        result.provider_meta.insert("replay_digest".into(), digest);
        Ok(result)
    }
}

/// Passes calls through to `inner` and writes each exchange as a replay fixture.
pub struct RecordingBackend {
    inner: Box<dyn CompletionBackend>,
    dir: PathBuf,
}

impl RecordingBackend {
    pub fn new(inner: Box<dyn CompletionBackend>, dir: impl Into<PathBuf>) -> Self {
        Self { inner, dir: dir.into() }
    }
}

impl CompletionBackend for RecordingBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        let result = self.inner.complete(request)?;
        record_fixture(&self.dir, &request.prompt, &result.text)?;
        Ok(result)
    }
}

/// OpenAI-compatible chat-completions client.
pub struct HttpBackend {
    endpoint: String,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl HttpBackend {
    pub fn new(endpoint: impl Into<String>, api_key: Option<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            api_key,
            agent: Self::agent(Duration::from_secs(60)),
        }
    }

    fn agent(timeout: Duration) -> ureq::Agent {
        ureq::AgentBuilder::new().timeout(timeout).build()
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.agent = Self::agent(timeout);
        self
    }
}

impl CompletionBackend for HttpBackend {
    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, GatewayError> {
        let body = json!({
            "model": request.model_id,
            "messages": [{"role": "user", "content": request.prompt}],
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let mut call = self.agent.post(&self.endpoint);
        if let Some(key) = &self.api_key {
            call = call.set("Authorization", &format!("Bearer {key}"));
        }
        let response = match call.send_json(body) {
            Ok(r) => r,
            Err(ureq::Error::Status(status, r)) => {
                let body = r.into_string().unwrap_or_default();
                return Err(if status == 429 || status >= 500 {
                    GatewayError::Transport(format!("status {status}: {body}"))
                } else {
                    GatewayError::Provider { status, body }
                });
            }
            Err(ureq::Error::Transport(t)) => return Err(GatewayError::Transport(t.to_string())),
        };
        let value: Value = response
            .into_json()
            .map_err(|e| GatewayError::Transport(format!("unreadable provider response: {e}")))?;
        let choice = &value["choices"][0];
        let text = choice["message"]["content"]
            .as_str()
            .ok_or_else(|| GatewayError::Provider {
                status: 200,
                body: format!("response has no choices[0].message.content: {value}"),
            })?
            .to_string();
        let mut provider_meta = BTreeMap::new();
        for (key, v) in [
            ("id", &value["id"]),
            ("model", &value["model"]),
            ("finish_reason", &choice["finish_reason"]),
        ] {
            if let Some(s) = v.as_str() {
                provider_meta.insert(key.to_string(), s.to_string());
            }
        }
        Ok(CompletionResult {
            text,
            provider_meta,
            from_cache: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::ModelParams;
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpListener;

    fn req(prompt: &str) -> CompletionRequest {
        CompletionRequest::new(prompt, &ModelParams::default()).unwrap()
    }

    #[test]
    fn script_file_accepts_both_shapes() {
        let q = Script::parse(r#"["A","B"]"#).unwrap();
        assert_eq!(q.queue, ["A", "B"]);
        let full = Script::parse(r#"{"rules":[{"contains":"x","reply":"R"}],"queue":["Q"]}"#).unwrap();
        assert_eq!(full.rules[0].contains, ["x"]);
        assert!(Script::parse("42").is_err());
    }

    #[test]
    fn rules_take_precedence_over_the_queue() {
        let b = ScriptedBackend::from_script(
            Script {
                queue: vec!["Q".into()],
                ..Default::default()
            }
            .rule(&["needle", "hay"], "R"),
        );
        assert_eq!(b.complete(&req("hay needle")).unwrap().text, "R");
        assert_eq!(b.complete(&req("only needle")).unwrap().text, "Q");
        assert_eq!(b.complete(&req("hay needle")).unwrap().text, "R");
        assert_eq!(b.complete(&req("other")), Err(GatewayError::ScriptExhausted));
        assert_eq!(b.prompts().len(), 4);
    }

    #[test]
    fn replay_round_trips_recorded_fixtures() {
        let dir = tempfile::tempdir().unwrap();
        record_fixture(dir.path(), "the prompt", "the answer").unwrap();
        let b = ReplayBackend::open(dir.path()).unwrap();
        assert_eq!(b.complete(&req("the prompt")).unwrap().text, "the answer");
        assert!(matches!(
            b.complete(&req("unknown")),
            Err(GatewayError::FixtureMissing { .. })
        ));
    }

    #[test]
    fn recording_backend_writes_fixtures() {
        let dir = tempfile::tempdir().unwrap();
        let rec = RecordingBackend::new(Box::new(ScriptedBackend::new(["live"])), dir.path());
        rec.complete(&req("p1")).unwrap();
        let replay = ReplayBackend::open(dir.path()).unwrap();
        assert_eq!(replay.complete(&req("p1")).unwrap().text, "live");
    }

    /// Serves the canned `(status, body)` responses in order, one per connection.
    fn serve(responses: Vec<(u16, String)>) -> (String, std::thread::JoinHandle<Vec<String>>) {
        let listener = TcpListener::bind("127.0.0.1:0").unwrap();
        let addr = listener.local_addr().unwrap();
        let handle = std::thread::spawn(move || {
            let mut bodies = Vec::new();
            for (status, body) in responses {
                let (mut stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut len = 0usize;
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    if line == "\r\n" || line.is_empty() {
                        break;
                    }
                    if let Some(v) = line.to_ascii_lowercase().strip_prefix("content-length:") {
                        len = v.trim().parse().unwrap();
                    }
                }
                let mut buf = vec![0; len];
                reader.read_exact(&mut buf).unwrap();
                bodies.push(String::from_utf8(buf).unwrap());
                write!(
                    stream,
                    "HTTP/1.1 {status} X\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
            }
            bodies
        });
        (format!("http://{addr}/v1/chat/completions"), handle)
    }

    #[test]
    fn http_backend_parses_chat_completions() {
        let ok = r#"{"id":"cmpl-1","model":"m","choices":[{"message":{"content":"hello"},"finish_reason":"stop"}]}"#;
        let (url, server) = serve(vec![(200, ok.to_string())]);
        let b = HttpBackend::new(url, Some("k".into()));
        let r = b.complete(&req("say hi")).unwrap();
        assert_eq!(r.text, "hello");
        assert_eq!(r.provider_meta["finish_reason"], "stop");
        let sent: Value = serde_json::from_str(&server.join().unwrap()[0]).unwrap();
        assert_eq!(sent["messages"][0]["content"], "say hi");
        assert_eq!(sent["temperature"], 0.0);
    }

    #[test]
    fn http_status_classification() {
        let (url, server) = serve(vec![(503, "busy".into()), (400, "bad".into())]);
        let b = HttpBackend::new(url, None);
        assert!(matches!(b.complete(&req("p")), Err(GatewayError::Transport(_))));
        assert!(matches!(
            b.complete(&req("p")),
            Err(GatewayError::Provider { status: 400, .. })
        ));
        server.join().unwrap();
    }

    #[test]
    fn gateway_retries_a_503_over_http() {
        let ok = r#"{"choices":[{"message":{"content":"recovered"}}]}"#;
        let (url, server) = serve(vec![(503, "busy".into()), (200, ok.into())]);
        let gw = crate::gateway::Gateway::new(Box::new(HttpBackend::new(url, None))).with_retry(
            crate::gateway::RetryPolicy {
                max_retries: 2,
                base_delay: Duration::from_millis(1),
                max_delay: Duration::from_millis(1),
            },
        );
        assert_eq!(gw.complete(&req("p")).unwrap().text, "recovered");
        assert_eq!(gw.provider_calls(), 2);
        server.join().unwrap();
    }
}
