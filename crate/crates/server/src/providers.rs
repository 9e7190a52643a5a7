//! HTTP-backed embedding and completion providers, plus secret redaction.

use std::time::Duration;

use cnd_core::angles::{AngleError, AngleProvider, GenerationParams};
use cnd_core::relevance::{EmbeddingProvider, EmbeddingVector, RelevanceError};
use reqwest::blocking::Client;
use serde::{Deserialize, Serialize};

const REDACTED: &str = "[redacted]";
const EMBED_BATCH: usize = 64;
const TIMEOUT: Duration = Duration::from_secs(60);

/// Replaces every occurrence of each nonempty secret in `message`.
pub fn redact(message: &str, secrets: &[String]) -> String {
    let mut out = message.to_string();
    for s in secrets.iter().filter(|s| !s.is_empty()) {
        out = out.replace(s.as_str(), REDACTED);
    }
    out
}

/// Appends `path` to `base` unless the base already ends with it.
fn endpoint(base: &str, path: &str) -> String {
    let base = base.trim_end_matches('/');
    if base.ends_with(path) {
        base.to_string()
    } else {
        format!("{base}{path}")
    }
}

fn client() -> Result<Client, String> {
    Client::builder().timeout(TIMEOUT).build().map_err(|e| e.to_string())
}

fn post_json<Req: Serialize, Resp: for<'de> Deserialize<'de>>(
    client: &Client,
    url: &str,
    key: Option<&str>,
    body: &Req,
) -> Result<Resp, String> {
    let mut req = client.post(url).json(body);
    if let Some(key) = key {
        req = req.bearer_auth(key);
    }
    let resp = req.send().map_err(|e| e.without_url().to_string())?;
    let status = resp.status();
    if !status.is_success() {
        let text = resp.text().unwrap_or_default();
        let snippet: String = text.chars().take(300).collect();
        return Err(format!("{url} returned {status}: {snippet}"));
    }
    resp.json::<Resp>().map_err(|e| format!("{url}: bad response body: {}", e.without_url()))
}

#[derive(Serialize)]
struct EmbedRequest<'a> {
    texts: &'a [String],
}

#[derive(Deserialize)]
struct EmbedResponse {
    vectors: Vec<Vec<f64>>,
}

/// Embedding service reached with `POST <base>/embed`.
pub struct HttpEmbedder {
    url: String,
    key: Option<String>,
    dim: usize,
    client: Client,
}

impl HttpEmbedder {
    pub fn new(base_url: &str, key: Option<String>, dim: usize) -> Result<Self, String> {
        Ok(HttpEmbedder {
            url: endpoint(base_url, "/embed"),
            key,
            dim,
            client: client()?,
        })
    }

    fn secrets(&self) -> Vec<String> {
        self.key.iter().cloned().collect()
    }
}

impl EmbeddingProvider for HttpEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, RelevanceError> {
        let fail = |m: String| RelevanceError::Provider(redact(&m, &self.secrets()));
        let mut out = Vec::with_capacity(texts.len());
        for batch in texts.chunks(EMBED_BATCH) {
            let resp: EmbedResponse =
                post_json(&self.client, &self.url, self.key.as_deref(), &EmbedRequest { texts: batch }).map_err(fail)?;
            if resp.vectors.len() != batch.len() {
                return Err(fail(format!(
                    "asked for {} vectors, got {}",
                    batch.len(),
                    resp.vectors.len()
                )));
            }
            for v in resp.vectors {
                if v.len() != self.dim {
                    return Err(RelevanceError::DimMismatch(v.len(), self.dim));
                }
                out.push(EmbeddingVector::new(v)?);
            }
        }
        Ok(out)
    }

    fn name(&self) -> &str {
        "http"
    }
}

#[derive(Serialize)]
struct CompleteRequest<'a> {
    model: &'a str,
    prompt: &'a str,
    temperature: f64,
    frequency_penalty: f64,
    presence_penalty: f64,
}

#[derive(Deserialize)]
struct CompleteResponse {
    text: String,
}

/// Text generation service reached with `POST <base>/complete`.
pub struct HttpCompleter {
    url: String,
    key: Option<String>,
    client: Client,
}

impl HttpCompleter {
    pub fn new(base_url: &str, key: Option<String>) -> Result<Self, String> {
        Ok(HttpCompleter {
            url: endpoint(base_url, "/complete"),
            key,
            client: client()?,
        })
    }
}

impl AngleProvider for HttpCompleter {
    fn complete(&self, prompt: &str, params: &GenerationParams) -> Result<String, AngleError> {
        let body = CompleteRequest {
            model: &params.model_name,
            prompt,
            temperature: params.temperature,
            frequency_penalty: params.frequency_penalty,
            presence_penalty: params.presence_penalty,
        };
        let resp: CompleteResponse = post_json(&self.client, &self.url, self.key.as_deref(), &body)
            .map_err(|m| AngleError::Provider(redact(&m, &self.key.iter().cloned().collect::<Vec<_>>())))?;
        Ok(resp.text)
    }

    fn name(&self) -> &str {
        "http"
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn redaction() {
        let secrets = vec!["sk-123".to_string(), String::new()];
        assert_eq!(redact("bad key sk-123 (sk-123)", &secrets), "bad key [redacted] ([redacted])");
        assert_eq!(redact("nothing", &secrets), "nothing");
    }

    #[test]
    fn endpoint_join() {
        assert_eq!(endpoint("http://h:1/", "/embed"), "http://h:1/embed");
        assert_eq!(endpoint("http://h:1/v1/embed", "/embed"), "http://h:1/v1/embed");
    }
}
