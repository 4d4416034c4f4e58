//! Detector and reviser contracts, with a deterministic rule-table
//! realization and an HTTP client for a model server.

mod remote;
mod rules;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use remote::RemoteBackend;
pub use rules::{load_rule_table, parse_rule_table, DetectRule, ReviseRule, RuleDetector, RuleError, RuleReviser, RuleTable};

use crate::annotation::{AnnotatedText, AnnotationError};
use crate::model::{AnnotationMode, Intent};

#[derive(Debug, Error)]
pub enum BackendError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("protocol error: {message}{}", offset.map(|o| format!(" (offset {o})")).unwrap_or_default())]
    ProtocolError { message: String, offset: Option<usize> },
    #[error("backend returned {got} labels for {expected} tokens")]
    LengthMismatch { expected: usize, got: usize },
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
}

impl BackendError {
    pub(crate) fn protocol(message: impl Into<String>) -> Self {
        BackendError::ProtocolError {
            message: message.into(),
            offset: None,
        }
    }
}

/// Text to classify plus optional neighbouring sentences.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DetectRequest<'a> {
    pub text: &'a str,
    pub context_before: Option<&'a str>,
    pub context_after: Option<&'a str>,
    /// Ask for the sentence-level `needs_edit` head as well.
    pub multi_task: bool,
}

impl<'a> DetectRequest<'a> {
    pub fn new(text: &'a str) -> Self {
        DetectRequest {
            text,
            context_before: None,
            context_after: None,
            multi_task: false,
        }
    }
}

/// One label per token of the classified text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DetectorOutput {
    pub labels: Vec<Intent>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub needs_edit: Option<bool>,
}

pub trait Detector: Send + Sync {
    fn detect(&self, request: &DetectRequest<'_>) -> Result<DetectorOutput, BackendError>;
}

pub trait Reviser: Send + Sync {
    /// Returns the full revised plain text. In sentence-prefix mode the input
    /// carries a single span over the whole text.
    fn revise(&self, annotated: &AnnotatedText, mode: AnnotationMode) -> Result<String, BackendError>;
}

impl<T: Detector + ?Sized> Detector for &T {
    fn detect(&self, request: &DetectRequest<'_>) -> Result<DetectorOutput, BackendError> {
        (**self).detect(request)
    }
}

impl<T: Reviser + ?Sized> Reviser for &T {
    fn revise(&self, annotated: &AnnotatedText, mode: AnnotationMode) -> Result<String, BackendError> {
        (**self).revise(annotated, mode)
    }
}

impl<T: Detector + ?Sized> Detector for Box<T> {
    fn detect(&self, request: &DetectRequest<'_>) -> Result<DetectorOutput, BackendError> {
        (**self).detect(request)
    }
}

impl<T: Reviser + ?Sized> Reviser for Box<T> {
    fn revise(&self, annotated: &AnnotatedText, mode: AnnotationMode) -> Result<String, BackendError> {
        (**self).revise(annotated, mode)
    }
}
