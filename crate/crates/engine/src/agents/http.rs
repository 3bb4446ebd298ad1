use std::time::Duration;

use async_trait::async_trait;
use futures::{Stream, StreamExt};
use serde::Deserialize;
use zeroize::Zeroizing;

use super::provider::{ChatChunk, ChatProvider, ChatRequest, ChunkStream};
use crate::error::ProviderError;

/// Authentication convention of the upstream endpoint. Both speak the same
/// JSON-lines body.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HttpStyle {
    /// `Authorization: Bearer <key>`
    OpenAi,
    /// `x-api-key: <key>`
    Anthropic,
}

impl HttpStyle {
    pub fn registry_name(self) -> &'static str {
        match self {
            HttpStyle::OpenAi => "http-openai-style",
            HttpStyle::Anthropic => "http-anthropic-style",
        }
    }
}

/// Chat provider speaking the streamed JSON-lines contract:
/// request `{system, messages, max_chars}`, reply lines `{"delta": ..}`
/// followed by `{"done": true, "persona": {..}}`.
pub struct HttpChatProvider {
    style: HttpStyle,
    endpoint: String,
    api_key: Option<Zeroizing<String>>,
    client: reqwest::Client,
}

impl std::fmt::Debug for HttpChatProvider {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpChatProvider")
            .field("style", &self.style)
            .field("endpoint", &self.endpoint)
            .field("api_key", &self.api_key.as_ref().map(|_| "<redacted>"))
            .finish()
    }
}

impl HttpChatProvider {
    pub fn new(style: HttpStyle, endpoint: impl Into<String>, api_key: Option<String>) -> Result<Self, ProviderError> {
        let client = reqwest::Client::builder()
            .connect_timeout(Duration::from_secs(10))
            .timeout(Duration::from_secs(120))
            .build()
            .map_err(|e| ProviderError::failed(style.registry_name(), e))?;
        Ok(Self { style, endpoint: endpoint.into(), api_key: api_key.map(Zeroizing::new), client })
    }

    /// Reads the endpoint (required) and key (optional) from the named
    /// environment variables.
    pub fn from_env(style: HttpStyle, endpoint_var: &str, key_var: Option<&str>) -> Result<Self, ProviderError> {
        let endpoint = std::env::var(endpoint_var).map_err(|_| ProviderError::MissingEnv(endpoint_var.into()))?;
        let key = match key_var {
            Some(var) => Some(std::env::var(var).map_err(|_| ProviderError::MissingEnv(var.into()))?),
            None => None,
        };
        Self::new(style, endpoint, key)
    }
}

#[derive(Deserialize)]
struct WireChunk {
    #[serde(default)]
    delta: Option<String>,
    #[serde(default)]
    done: bool,
    #[serde(default)]
    persona: serde_json::Value,
}

/// Regroups a byte stream into newline-terminated lines; a trailing
/// unterminated line is flushed at the end.
pub(crate) fn json_lines<S, B, E>(bytes: S) -> impl Stream<Item = Result<String, E>>
where
    S: Stream<Item = Result<B, E>> + Unpin,
    B: AsRef<[u8]>,
{
    futures::stream::unfold((bytes, Vec::<u8>::new(), false), |(mut bytes, mut buf, mut ended)| async move {
        loop {
            if let Some(pos) = buf.iter().position(|&b| b == b'\n') {
                let line: Vec<u8> = buf.drain(..=pos).collect();
                return Some((Ok(String::from_utf8_lossy(&line).trim().to_string()), (bytes, buf, ended)));
            }
            if ended {
                if buf.is_empty() {
                    return None;
                }
                let line = String::from_utf8_lossy(&buf).trim().to_string();
                buf.clear();
                return Some((Ok(line), (bytes, buf, ended)));
            }
            match bytes.next().await {
                Some(Ok(chunk)) => buf.extend_from_slice(chunk.as_ref()),
                Some(Err(e)) => return Some((Err(e), (bytes, buf, true))),
                None => ended = true,
            }
        }
    })
    .filter(|line| futures::future::ready(!matches!(line, Ok(l) if l.is_empty())))
}

pub(crate) fn parse_wire_line(provider: &str, line: &str) -> Result<ChatChunk, ProviderError> {
    let chunk: WireChunk = serde_json::from_str(line).map_err(|e| ProviderError::malformed(provider, e))?;
    if chunk.done {
        Ok(ChatChunk::Done { persona: chunk.persona })
    } else if let Some(delta) = chunk.delta {
        Ok(ChatChunk::Delta(delta))
    } else {
        Err(ProviderError::malformed(provider, "line has neither delta nor done"))
    }
}

#[async_trait]
impl ChatProvider for HttpChatProvider {
    fn name(&self) -> &str {
        self.style.registry_name()
    }

    async fn chat(&self, request: ChatRequest) -> Result<ChunkStream, ProviderError> {
        let name = self.name().to_string();
        let mut builder = self.client.post(&self.endpoint).json(&request);
        if let Some(key) = &self.api_key {
            builder = match self.style {
                HttpStyle::OpenAi => builder.bearer_auth(key.as_str()),
                HttpStyle::Anthropic => builder.header("x-api-key", key.as_str()),
            };
        }
        let response = builder.send().await.map_err(|e| ProviderError::failed(&name, e.without_url()))?;
        let status = response.status();
        if !status.is_success() {
            return Err(ProviderError::failed(&name, format!("HTTP {status}")));
        }
        let lines = json_lines(response.bytes_stream().boxed());
        let stream = lines.map(move |line| match line {
            Ok(line) => parse_wire_line(&name, &line),
            Err(e) => Err(ProviderError::failed(&name, e.without_url())),
        });
        Ok(stream.boxed())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[tokio::test]
    async fn lines_split_across_chunks() {
        let parts: Vec<Result<&[u8], ()>> = vec![Ok(b"{\"delta\":\"a\"}\n{\"del"), Ok(b"ta\":\"b\"}\n\n{\"done\":true}")];
        let lines: Vec<_> = json_lines(futures::stream::iter(parts)).collect().await;
        let lines: Vec<String> = lines.into_iter().map(Result::unwrap).collect();
        assert_eq!(lines, vec![r#"{"delta":"a"}"#, r#"{"delta":"b"}"#, r#"{"done":true}"#]);
    }

    #[test]
    fn wire_lines_parse() {
        assert_eq!(parse_wire_line("p", r#"{"delta":"hi "}"#).unwrap(), ChatChunk::Delta("hi ".into()));
        match parse_wire_line("p", r#"{"done":true,"persona":{"voice_id":"x"}}"#).unwrap() {
            ChatChunk::Done { persona } => assert_eq!(persona["voice_id"], "x"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse_wire_line("p", "{}"), Err(ProviderError::Malformed { .. })));
        assert!(matches!(parse_wire_line("p", "nope"), Err(ProviderError::Malformed { .. })));
    }

    #[test]
    fn debug_redacts_key() {
        let p = HttpChatProvider::new(HttpStyle::OpenAi, "http://127.0.0.1:9", Some("sk-secret".into())).unwrap();
        assert!(!format!("{p:?}").contains("sk-secret"));
    }
}
