use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::{BackendError, DetectRequest, Detector, DetectorOutput, Reviser};
use crate::annotation::{render_annotated, render_sentence_prefix, AnnotatedText};
use crate::model::{tokenize, AnnotationMode, Intent};

#[derive(Serialize)]
struct DetectBody<'a> {
    text: &'a str,
    #[serde(skip_serializing_if = "Option::is_none")]
    context_before: Option<&'a str>,
    #[serde(skip_serializing_if = "Option::is_none")]
    context_after: Option<&'a str>,
    multi_task: bool,
}

#[derive(Deserialize)]
struct DetectReply {
    tokens: Vec<String>,
    labels: Vec<String>,
    #[serde(default)]
    needs_edit: Option<bool>,
}

#[derive(Serialize)]
struct ReviseBody<'a> {
    annotated: &'a str,
}

#[derive(Deserialize)]
struct ReviseReply {
    revised: String,
}

#[derive(Deserialize)]
struct ErrorReply {
    error: String,
    #[serde(default)]
    offset: Option<usize>,
}

#[derive(Deserialize)]
struct HealthReply {
    status: String,
}

/// Client for a model server exposing `/v1/detect`, `/v1/revise` and
/// `/v1/health`.
#[derive(Debug, Clone)]
pub struct RemoteBackend {
    base: String,
    agent: ureq::Agent,
}

impl RemoteBackend {
    pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

    pub fn new(endpoint: &str) -> Self {
        Self::with_timeout(endpoint, Self::DEFAULT_TIMEOUT)
    }

    pub fn with_timeout(endpoint: &str, timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        RemoteBackend {
            base: endpoint.trim_end_matches('/').to_string(),
            agent,
        }
    }

    pub fn endpoint(&self) -> &str {
        &self.base
    }

    pub fn health(&self) -> Result<(), BackendError> {
        let url = format!("{}/v1/health", self.base);
        let resp = self
            .agent
            .get(&url)
            .call()
            .map_err(|e| BackendError::BackendUnavailable(format!("{url}: {e}")))?;
        let reply: HealthReply = read_reply(resp, &url)?;
        if reply.status == "ok" {
            Ok(())
        } else {
            Err(BackendError::BackendUnavailable(format!("{url}: status {:?}", reply.status)))
        }
    }

    fn post<T: for<'de> Deserialize<'de>>(&self, path: &str, body: &impl Serialize) -> Result<T, BackendError> {
        let url = format!("{}{}", self.base, path);
        let bytes = serde_json::to_vec(body).map_err(|e| BackendError::protocol(e.to_string()))?;
        let resp = self
            .agent
            .post(&url)
            .header("Content-Type", "application/json")
            .send(&bytes[..])
            .map_err(|e| BackendError::BackendUnavailable(format!("{url}: {e}")))?;
        read_reply(resp, &url)
    }
}

fn read_reply<T: for<'de> Deserialize<'de>>(
    resp: ureq::http::Response<ureq::Body>,
    url: &str,
) -> Result<T, BackendError> {
    let status = resp.status().as_u16();
    let text = resp
        .into_body()
        .read_to_string()
        .map_err(|e| BackendError::BackendUnavailable(format!("{url}: {e}")))?;
    match status {
        200..=299 => serde_json::from_str(&text)
            .map_err(|e| BackendError::protocol(format!("{url}: malformed response: {e}"))),
        422 => match serde_json::from_str::<ErrorReply>(&text) {
            Ok(err) => Err(BackendError::ProtocolError {
                message: err.error,
                offset: err.offset,
            }),
            Err(_) => Err(BackendError::protocol(format!("{url}: status 422: {text}"))),
        },
        502..=504 => Err(BackendError::BackendUnavailable(format!("{url}: status {status}"))),
        _ => Err(BackendError::protocol(format!("{url}: unexpected status {status}"))),
    }
}

impl Detector for RemoteBackend {
    fn detect(&self, request: &DetectRequest<'_>) -> Result<DetectorOutput, BackendError> {
        let body = DetectBody {
            text: request.text,
            context_before: request.context_before,
            context_after: request.context_after,
            multi_task: request.multi_task,
        };
        let reply: DetectReply = self.post("/v1/detect", &body)?;
        if reply.tokens.len() != reply.labels.len() {
            return Err(BackendError::protocol(format!(
                "{} tokens but {} labels",
                reply.tokens.len(),
                reply.labels.len()
            )));
        }
        let expected = tokenize(request.text).len();
        if reply.labels.len() != expected {
            return Err(BackendError::LengthMismatch {
                expected,
                got: reply.labels.len(),
            });
        }
        let labels = reply
            .labels
            .iter()
            .map(|l| {
                l.parse::<Intent>()
                    .map_err(|_| BackendError::protocol(format!("unknown label {l:?}")))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(DetectorOutput {
            labels,
            needs_edit: reply.needs_edit,
        })
    }
}

impl Reviser for RemoteBackend {
    fn revise(&self, annotated: &AnnotatedText, mode: AnnotationMode) -> Result<String, BackendError> {
        if annotated.spans.is_empty() {
            return Ok(annotated.plain.clone());
        }
        let wire = match mode {
            AnnotationMode::SpanTags => render_annotated(annotated)?,
            AnnotationMode::SentencePrefix => render_sentence_prefix(&annotated.plain, annotated.spans[0].intent),
        };
        let reply: ReviseReply = self.post("/v1/revise", &ReviseBody { annotated: &wire })?;
        Ok(reply.revised)
    }
}
