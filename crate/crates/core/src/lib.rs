//! Delineate-edit-iterate text revision.
//!
//! A detector marks editable spans with an edit intent, a reviser rewrites
//! only those spans, and the engine repeats until no further edit is made or
//! a stopping criterion fires. Around that loop sit the corpus tooling used to
//! build training data, the evaluation metrics, and intent-trajectory analysis.

pub mod analysis;
pub mod annotation;
pub mod backends;
pub mod corpus;
pub mod editops;
pub mod engine;
pub mod metrics;
pub mod model;

pub use annotation::{AnnotatedText, IntentSpan};
pub use editops::{Edit, RevisionStep, RevisionTrace, StopReason};
pub use model::{Document, EngineConfig, Intent, Token};
