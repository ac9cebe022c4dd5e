#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::Duration;

use comvint::config::{load_config, PipelineConfig};
use comvint::llm::{ChatProvider, ChatRequest, ChatResponse, MockProvider, MockReply, MockScript, ProviderError};

pub fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/golden-10")
}

pub fn golden_config() -> PipelineConfig {
    load_config(&golden_dir().join("config.toml")).expect("fixture config loads")
}

pub fn golden_provider() -> MockProvider {
    MockProvider::new(MockScript::load(&golden_dir().join("mock_script.json")).expect("fixture script loads"))
}

pub fn golden_dataset() -> String {
    std::fs::read_to_string(golden_dir().join("golden_dataset.jsonl")).expect("golden dataset present")
}

fn line_after<'a>(text: &'a str, prefix: &str) -> Option<&'a str> {
    text.lines().find_map(|l| l.strip_prefix(prefix)).map(str::trim)
}

fn cap(s: &str) -> String {
    let mut c = s.chars();
    c.next().map(|f| f.to_uppercase().collect::<String>() + c.as_str()).unwrap_or_default()
}

/// Writes plausible replies for each prompt family and fails two planted
/// verifications. Used once to produce the frozen golden script.
pub struct Author;

const DEEPER: &str = "Looking closer: ";

impl Author {
    pub fn reply(prompt: &str) -> String {
        if prompt.starts_with("You are given the annotations of an image: several captions") {
            let objects: Vec<&str> = line_after(prompt, "Objects:").unwrap().split(", ").collect();
            let count: usize = prompt.split("Please design ").nth(1).unwrap().split(' ').next().unwrap().parse().unwrap();
            (1..=count)
                .map(|k| {
                    let a = objects[(k - 1) % objects.len()];
                    let b = objects[k % objects.len()];
                    format!(
                        "Question {k}: In this image, how does {a} relate to {b}, and what detail in the scene shows it?\n\
                         Answer {k}: {} and {b} appear in the same moment; the captions place them together, which shows how they relate.",
                        cap(a)
                    )
                })
                .collect::<Vec<_>>()
                .join("\n")
        } else if prompt.starts_with("You are given the annotations of an image and one topic entity") {
            let topic = line_after(prompt, "Topic entity:").unwrap();
            let name = topic.split(" (").next().unwrap();
            let cats = prompt.split("these categories: ").nth(1).unwrap().lines().next().unwrap().trim_end_matches('.');
            let first = cats.split("; ").next().unwrap();
            format!(
                "Question 1: Considering the {name} in this image, what knowledge from {first} explains its role in the scene?\n\
                 Answer 1: The {name} is central to the scene; knowledge from {first} tells us what it is usually used for, so it explains what the people around it are doing."
            )
        } else if prompt.starts_with("You are a Prompt Rewriter") {
            let instr = line_after(prompt, "Given instruction:").unwrap();
            let resp = line_after(prompt, "Given response:").unwrap();
            format!(
                "Question 1: {DEEPER}{}, and which annotated object would change the answer if it were removed?\n\
                 Answer 1: {resp} Removing the first object named in the question would change the answer.",
                instr.trim_end_matches('?')
            )
        } else if prompt.starts_with("You are a Prompt Judge") {
            let instr = line_after(prompt, "Instruction:").unwrap();
            let round1 = instr.starts_with(DEEPER) && !instr[DEEPER.len()..].starts_with(DEEPER);
            let planted_ok = instr.starts_with("Considering the accordion");
            let planted_cm = round1 && instr.contains("relate to pierced ears");
            if planted_ok || planted_cm {
                "The response mentions details that the annotations do not support.\nVerdict: no".into()
            } else {
                "The instruction is grounded in the annotations and the response follows from them.\nVerdict: yes".into()
            }
        } else if prompt.starts_with("Convert the open-ended question and answer below into a bool") {
            let q = line_after(prompt, "Question:").unwrap().trim_end_matches('?');
            if q.len().is_multiple_of(2) {
                format!("Question 1: Is the following supported by the image: {q}?\nAnswer 1: Yes")
            } else {
                format!("Question 1: Does the image contradict the premise of this question: {q}?\nAnswer 1: No")
            }
        } else if prompt.starts_with("Convert the open-ended question and answer below into a multi-choice") {
            let q = line_after(prompt, "Question:").unwrap();
            let a = line_after(prompt, "Answer:").unwrap();
            let correct = a.split("; ").next().unwrap().trim_end_matches('.').to_string();
            let mut options = vec![
                "The objects never appear together in the scene".to_string(),
                "The image does not show enough to tell".to_string(),
                "Only the background is relevant to the question".to_string(),
            ];
            let idx = q.len() % 4;
            options.insert(idx, correct);
            let letters = ['A', 'B', 'C', 'D'];
            let mut out = format!("Question: {q}\n");
            for (l, o) in letters.iter().zip(&options) {
                out.push_str(&format!("{l}. {o}\n"));
            }
            out + &format!("Answer: {}", letters[idx])
        } else {
            panic!("author does not recognise prompt: {prompt}")
        }
    }
}

/// Answers with [`Author`] and remembers every fingerprint it served.
#[derive(Default)]
pub struct RecordingAuthor {
    pub seen: Mutex<BTreeMap<String, MockReply>>,
}

impl ChatProvider for RecordingAuthor {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, ProviderError> {
        let content = Author::reply(request.last_user_content());
        self.seen
            .lock()
            .unwrap()
            .insert(request.request_id().to_string(), MockReply::Text(content.clone()));
        Ok(ChatResponse {
            prompt_tokens: request.messages.iter().map(|m| m.content.split_whitespace().count() as u64).sum(),
            completion_tokens: content.split_whitespace().count() as u64,
            content,
            latency: Duration::ZERO,
            provider: "author".into(),
        })
    }

    fn name(&self) -> &str {
        "author"
    }
}

/// A request captured by [`StubServer`].
#[derive(Debug, Clone)]
pub struct Captured {
    pub request_line: String,
    pub headers: Vec<(String, String)>,
    pub body: serde_json::Value,
}

/// Minimal HTTP/1.1 server answering each connection with the next scripted
/// `(status, body)` and recording what it received.
pub struct StubServer {
    pub base_url: String,
    pub captured: std::sync::Arc<Mutex<Vec<Captured>>>,
    handle: Option<std::thread::JoinHandle<()>>,
}

impl StubServer {
    pub fn start(replies: Vec<(u16, String)>) -> Self {
        use std::io::{BufRead, BufReader, Read, Write};
        let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
        let base_url = format!("http://{}", listener.local_addr().unwrap());
        let captured = std::sync::Arc::new(Mutex::new(Vec::new()));
        let sink = captured.clone();
        let handle = std::thread::spawn(move || {
            for (status, body) in replies {
                let (stream, _) = listener.accept().unwrap();
                let mut reader = BufReader::new(stream.try_clone().unwrap());
                let mut request_line = String::new();
                reader.read_line(&mut request_line).unwrap();
                let mut headers = Vec::new();
                loop {
                    let mut line = String::new();
                    reader.read_line(&mut line).unwrap();
                    let line = line.trim_end();
                    if line.is_empty() {
                        break;
                    }
                    let (k, v) = line.split_once(':').unwrap();
                    headers.push((k.trim().to_ascii_lowercase(), v.trim().to_string()));
                }
                let len: usize = headers
                    .iter()
                    .find(|(k, _)| k == "content-length")
                    .map(|(_, v)| v.parse().unwrap())
                    .unwrap_or(0);
                let mut raw = vec![0; len];
                reader.read_exact(&mut raw).unwrap();
                sink.lock().unwrap().push(Captured {
                    request_line: request_line.trim_end().to_string(),
                    headers,
                    body: serde_json::from_slice(&raw).unwrap_or(serde_json::Value::Null),
                });
                let mut stream = stream;
                let reason = if status == 200 { "OK" } else { "Error" };
                write!(
                    stream,
                    "HTTP/1.1 {status} {reason}\r\nContent-Type: application/json\r\nContent-Length: {}\r\nConnection: close\r\n\r\n{body}",
                    body.len()
                )
                .unwrap();
                stream.flush().unwrap();
            }
        });
        StubServer {
            base_url,
            captured,
            handle: Some(handle),
        }
    }

    pub fn ok_body(content: &str) -> String {
        serde_json::json!({
            "choices": [{"message": {"role": "assistant", "content": content}}],
            "usage": {"prompt_tokens": 11, "completion_tokens": 3}
        })
        .to_string()
    }

    pub fn calls(&self) -> usize {
        self.captured.lock().unwrap().len()
    }

    pub fn captured(&self) -> Vec<Captured> {
        self.captured.lock().unwrap().clone()
    }

    /// Waits for the scripted replies to be consumed.
    pub fn join(mut self) {
        if let Some(h) = self.handle.take() {
            h.join().unwrap();
        }
    }
}
