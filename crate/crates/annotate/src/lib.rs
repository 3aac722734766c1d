//! Annotation backend: a task queue that hands messages to human
//! annotators, validates their 1-10 ratings and persists them to an
//! append-only journal, exposed over a small JSON HTTP API.

mod error;
mod http;
mod store;

pub use error::{AnnotateError, Result};
pub use http::{router, Submission};
pub use store::{
    records_from_csv, records_from_jsonl, records_to_csv, records_to_jsonl, AnnotationStore,
    AnnotationTask, EnqueueOutcome, Progress, StoreOptions, TaskInput, TaskStatus,
};
