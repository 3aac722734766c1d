//! Routes:
//!
//! * `GET /api/tasks/next?annotator=ID` -> 200 task, 204 when exhausted
//! * `POST /api/annotations` -> 201, 400 validation, 404 unknown task,
//!   409 duplicate or unassigned
//! * `GET /api/export?format=csv|jsonl` -> 200
//! * `GET /api/progress` -> 200 counts by status

use std::collections::BTreeMap;
use std::str::FromStr;
use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::Deserialize;
use serde_json::json;
use traitgen_core::evaluation::{AnnotationRecord, RATING_MAX, RATING_MIN};
use traitgen_core::personas::TraitDimension;

use crate::error::AnnotateError;
use crate::store::{records_to_csv, records_to_jsonl, AnnotationStore};

/// POST body. Scores arrive as plain integers keyed by trait code so that
/// out-of-range and misspelled entries are reported per field instead of
/// failing deserialization wholesale.
#[derive(Debug, Clone, Deserialize)]
pub struct Submission {
    pub annotator_id: String,
    pub message_id: String,
    pub ratings: BTreeMap<String, i64>,
    pub difficulty: BTreeMap<String, i64>,
    #[serde(default)]
    pub submitted_at: Option<DateTime<Utc>>,
}

impl Submission {
    pub fn into_record(self, now: DateTime<Utc>) -> Result<AnnotationRecord, AnnotateError> {
        let mut errors = Vec::new();
        let mut scale = |field: &str, raw: BTreeMap<String, i64>| {
            let mut out = BTreeMap::new();
            for (key, v) in raw {
                let Ok(t) = TraitDimension::from_str(&key) else {
                    errors.push(format!("{field}.{key}: unknown trait"));
                    continue;
                };
                match u8::try_from(v) {
                    Ok(v) if (RATING_MIN..=RATING_MAX).contains(&v) => {
                        out.insert(t, v);
                    }
                    _ => errors.push(format!(
                        "{field}.{t}: {v} is outside {RATING_MIN}..={RATING_MAX}"
                    )),
                }
            }
            for t in TraitDimension::ALL {
                if !out.contains_key(&t)
                    && !errors
                        .iter()
                        .any(|e| e.starts_with(&format!("{field}.{t}:")))
                {
                    errors.push(format!("{field}.{t}: missing"));
                }
            }
            out
        };
        let ratings = scale("ratings", self.ratings);
        let difficulty = scale("difficulty", self.difficulty);
        let record = AnnotationRecord {
            annotator_id: self.annotator_id,
            message_id: self.message_id,
            ratings,
            difficulty,
            submitted_at: self.submitted_at.unwrap_or(now),
        };
        errors.extend(
            record
                .validation_errors()
                .into_iter()
                .filter(|e| !e.starts_with("ratings.") && !e.starts_with("difficulty.")),
        );
        if errors.is_empty() {
            Ok(record)
        } else {
            Err(AnnotateError::Validation(errors))
        }
    }
}

impl IntoResponse for AnnotateError {
    fn into_response(self) -> Response {
        let status = match &self {
            AnnotateError::Validation(_) => StatusCode::BAD_REQUEST,
            AnnotateError::UnknownTask(_) => StatusCode::NOT_FOUND,
            AnnotateError::UnknownAnnotator(_) => StatusCode::FORBIDDEN,
            AnnotateError::NotAssigned { .. } | AnnotateError::Duplicate { .. } => {
                StatusCode::CONFLICT
            }
            _ => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let fields = match &self {
            AnnotateError::Validation(errors) => errors.clone(),
            _ => Vec::new(),
        };
        (
            status,
            Json(json!({ "error": self.to_string(), "fields": fields })),
        )
            .into_response()
    }
}

#[derive(Debug, Deserialize)]
struct NextQuery {
    annotator: String,
}

#[derive(Debug, Deserialize)]
struct ExportQuery {
    #[serde(default)]
    format: Option<String>,
}

async fn next_task(
    State(store): State<Arc<AnnotationStore>>,
    Query(q): Query<NextQuery>,
) -> Result<Response, AnnotateError> {
    Ok(match store.next_task(&q.annotator)? {
        Some(task) => (StatusCode::OK, Json(task)).into_response(),
        None => StatusCode::NO_CONTENT.into_response(),
    })
}

async fn submit(
    State(store): State<Arc<AnnotationStore>>,
    body: Result<Json<Submission>, JsonRejection>,
) -> Result<Response, AnnotateError> {
    let Json(submission) = body.map_err(|e| AnnotateError::Validation(vec![e.body_text()]))?;
    let record = submission.into_record(Utc::now())?;
    // the journal fsync blocks, so keep it off the async workers
    let ack = record.clone();
    tokio::task::spawn_blocking(move || store.submit(record))
        .await
        .map_err(|e| AnnotateError::Journal(format!("submit task failed: {e}")))??;
    Ok((StatusCode::CREATED, Json(ack)).into_response())
}

async fn export(
    State(store): State<Arc<AnnotationStore>>,
    Query(q): Query<ExportQuery>,
) -> Result<Response, AnnotateError> {
    let records = store.export();
    match q.format.as_deref().unwrap_or("jsonl") {
        "csv" => Ok((
            [(header::CONTENT_TYPE, "text/csv; charset=utf-8")],
            records_to_csv(&records)?,
        )
            .into_response()),
        "jsonl" => Ok((
            [(header::CONTENT_TYPE, "application/x-ndjson; charset=utf-8")],
            records_to_jsonl(&records)?,
        )
            .into_response()),
        other => Err(AnnotateError::Validation(vec![format!(
            "format: `{other}` is not csv or jsonl"
        )])),
    }
}

async fn progress(State(store): State<Arc<AnnotationStore>>) -> Response {
    Json(store.progress()).into_response()
}

pub fn router(store: Arc<AnnotationStore>) -> Router {
    Router::new()
        .route("/api/tasks/next", get(next_task))
        .route("/api/annotations", post(submit))
        .route("/api/export", get(export))
        .route("/api/progress", get(progress))
        .with_state(store)
}
