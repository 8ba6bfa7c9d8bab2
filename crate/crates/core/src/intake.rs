//! Reader issue reports: an append-only store with snippet deduplication and
//! a small HTTP API in front of it.
//!
//! Routes:
//! - `POST /reports` with `{paperId, snippet?, description}` answers
//!   `201 {reportId, duplicateOf?}` or `400 {error}`.
//! - `GET /reports/{paperId}` answers the non-duplicate reports for that
//!   paper, newest first.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use axum::extract::{Path as UrlPath, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;
use tower_http::cors::CorsLayer;

pub type ReportId = u64;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct IssueReport {
    pub report_id: ReportId,
    pub paper_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet: Option<String>,
    pub description: String,
    pub created_at: DateTime<Utc>,
    pub dedup_key: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<ReportId>,
}

impl IssueReport {
    pub fn is_duplicate(&self) -> bool {
        self.duplicate_of.is_some()
    }
}

/// Body of `POST /reports`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Submission {
    pub paper_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub snippet: Option<String>,
    pub description: String,
}

impl Submission {
    pub fn new(paper_id: impl Into<String>, snippet: Option<&str>, description: impl Into<String>) -> Self {
        Submission {
            paper_id: paper_id.into(),
            snippet: snippet.map(str::to_string),
            description: description.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Receipt {
    pub report_id: ReportId,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duplicate_of: Option<ReportId>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ValidationError {
    #[error("paperId must not be empty")]
    EmptyPaperId,
    #[error("description must not be empty")]
    EmptyDescription,
}

#[derive(Debug, Error)]
pub enum StoreError {
    #[error(transparent)]
    Invalid(#[from] ValidationError),
    #[error("report store {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("report store {path} line {line} is not a valid record: {message}")]
    Corrupt { path: PathBuf, line: usize, message: String },
}

/// Trim, collapse internal whitespace runs to one space, casefold.
pub fn normalize_snippet(snippet: &str) -> String {
    snippet.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// Hex SHA-256 over the paper id and the normalized snippet.
pub fn dedup_key(paper_id: &str, snippet: Option<&str>) -> String {
    let mut hasher = Sha256::new();
    hasher.update(paper_id.as_bytes());
    hasher.update([0u8]);
    hasher.update(normalize_snippet(snippet.unwrap_or("")).as_bytes());
    format!("{:x}", hasher.finalize())
}

struct Inner {
    file: Option<File>,
    reports: Vec<IssueReport>,
    /// dedup key to the earliest report carrying it
    primaries: HashMap<String, ReportId>,
}

impl Inner {
    fn index(&mut self, report: IssueReport) {
        if report.snippet.is_some() && !report.is_duplicate() {
            self.primaries.entry(report.dedup_key.clone()).or_insert(report.report_id);
        }
        self.reports.push(report);
    }
}

/// Thread-safe report store. Writes are serialized, reads run concurrently.
pub struct IssueStore {
    path: Option<PathBuf>,
    inner: RwLock<Inner>,
}

impl IssueStore {
    /// A store that keeps nothing on disk.
    pub fn in_memory() -> Self {
        IssueStore {
            path: None,
            inner: RwLock::new(Inner {
                file: None,
                reports: Vec::new(),
                primaries: HashMap::new(),
            }),
        }
    }

    /// Open (or create) a newline-delimited JSON store and rebuild the index.
    pub fn open(path: impl AsRef<Path>) -> Result<Self, StoreError> {
        let path = path.as_ref().to_path_buf();
        let io = |source| StoreError::Io { path: path.clone(), source };
        let mut inner = Inner {
            file: None,
            reports: Vec::new(),
            primaries: HashMap::new(),
        };
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(io)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(io)?;
                if line.trim().is_empty() {
                    continue;
                }
                let report: IssueReport = serde_json::from_str(&line).map_err(|e| StoreError::Corrupt {
                    path: path.clone(),
                    line: n + 1,
                    message: e.to_string(),
                })?;
                inner.index(report);
            }
        }
        inner.file = Some(OpenOptions::new().create(true).append(true).open(&path).map_err(io)?);
        Ok(IssueStore {
            path: Some(path),
            inner: RwLock::new(inner),
        })
    }

    pub fn path(&self) -> Option<&Path> {
        self.path.as_deref()
    }

    pub fn submit(&self, submission: Submission) -> Result<Receipt, StoreError> {
        self.submit_at(submission, Utc::now())
    }

    /// Submit with an explicit creation time.
    pub fn submit_at(&self, submission: Submission, created_at: DateTime<Utc>) -> Result<Receipt, StoreError> {
        let paper_id = submission.paper_id.trim().to_string();
        if paper_id.is_empty() {
            return Err(ValidationError::EmptyPaperId.into());
        }
        if submission.description.trim().is_empty() {
            return Err(ValidationError::EmptyDescription.into());
        }
        let snippet = submission.snippet.filter(|s| !normalize_snippet(s).is_empty());
        let key = dedup_key(&paper_id, snippet.as_deref());

        let mut inner = self.inner.write().unwrap_or_else(|p| p.into_inner());
        let report_id = inner.reports.last().map_or(1, |r| r.report_id + 1);
        let duplicate_of = if snippet.is_some() { inner.primaries.get(&key).copied() } else { None };
        let report = IssueReport {
            report_id,
            paper_id,
            snippet,
            description: submission.description,
            created_at,
            dedup_key: key,
            duplicate_of,
        };
        if let Some(file) = inner.file.as_mut() {
            let mut line = serde_json::to_string(&report).expect("report is always serializable");
            line.push('\n');
            let path = self.path.clone().unwrap_or_default();
            file.write_all(line.as_bytes())
                .and_then(|_| file.flush())
                .map_err(|source| StoreError::Io { path, source })?;
        }
        inner.index(report);
        Ok(Receipt { report_id, duplicate_of })
    }

    /// Non-duplicate reports for `paper_id`, newest first.
    pub fn list(&self, paper_id: &str) -> Vec<IssueReport> {
        let inner = self.inner.read().unwrap_or_else(|p| p.into_inner());
        let mut out: Vec<IssueReport> = inner
            .reports
            .iter()
            .filter(|r| r.paper_id == paper_id && !r.is_duplicate())
            .cloned()
            .collect();
        out.sort_by(|a, b| b.created_at.cmp(&a.created_at).then(b.report_id.cmp(&a.report_id)));
        out
    }

    /// Every stored report in submission order, duplicates included.
    pub fn all(&self) -> Vec<IssueReport> {
        self.inner.read().unwrap_or_else(|p| p.into_inner()).reports.clone()
    }

    pub fn len(&self) -> usize {
        self.inner.read().unwrap_or_else(|p| p.into_inner()).reports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Serialize)]
struct ErrorBody {
    error: String,
}

fn error_response(status: StatusCode, message: String) -> Response {
    (status, Json(ErrorBody { error: message })).into_response()
}

async fn post_report(State(store): State<Arc<IssueStore>>, Json(submission): Json<Submission>) -> Response {
    let result = tokio::task::spawn_blocking(move || store.submit(submission)).await;
    match result {
        Ok(Ok(receipt)) => (StatusCode::CREATED, Json(receipt)).into_response(),
        Ok(Err(StoreError::Invalid(e))) => error_response(StatusCode::BAD_REQUEST, e.to_string()),
        Ok(Err(e)) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
        Err(e) => error_response(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()),
    }
}

async fn list_reports(State(store): State<Arc<IssueStore>>, UrlPath(paper_id): UrlPath<String>) -> Json<Vec<IssueReport>> {
    Json(store.list(&paper_id))
}

/// The HTTP API with permissive cross-origin headers.
pub fn router(store: Arc<IssueStore>) -> Router {
    Router::new()
        .route("/reports", post(post_report))
        .route("/reports/{paper_id}", get(list_reports))
        .layer(CorsLayer::permissive())
        .with_state(store)
}

/// Serve until ctrl-c.
pub async fn serve(store: Arc<IssueStore>, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(store))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::TimeZone;

    fn at(sec: i64) -> DateTime<Utc> {
        Utc.timestamp_opt(1_700_000_000 + sec, 0).unwrap()
    }

    #[test]
    fn normalization() {
        assert_eq!(normalize_snippet("  The   Lemma\n holds "), "the lemma holds");
        assert_eq!(dedup_key("P", Some("a  B")), dedup_key("P", Some(" A b")));
        assert_ne!(dedup_key("P", Some("a b")), dedup_key("Q", Some("a b")));
        assert_eq!(dedup_key("P", None).len(), 64);
    }

    #[test]
    fn first_report_is_primary() {
        let s = IssueStore::in_memory();
        let r = s.submit(Submission::new("P", Some("x"), "broken")).unwrap();
        assert_eq!(r, Receipt { report_id: 1, duplicate_of: None });
    }

    #[test]
    fn whitespace_and_case_variant_is_duplicate() {
        let s = IssueStore::in_memory();
        let a = s.submit(Submission::new("P", Some("Equation 3 is wrong"), "d")).unwrap();
        let b = s.submit(Submission::new("P", Some("  equation 3\tIS  wrong "), "d2")).unwrap();
        assert_eq!(b.duplicate_of, Some(a.report_id));
        let c = s.submit(Submission::new("Q", Some("Equation 3 is wrong"), "d")).unwrap();
        assert_eq!(c.duplicate_of, None);
    }

    #[test]
    fn duplicates_point_at_earliest() {
        let s = IssueStore::in_memory();
        for _ in 0..4 {
            s.submit(Submission::new("P", Some("same"), "d")).unwrap();
        }
        let all = s.all();
        assert_eq!(all.iter().filter(|r| r.duplicate_of == Some(1)).count(), 3);
    }

    #[test]
    fn missing_snippet_never_duplicates() {
        let s = IssueStore::in_memory();
        s.submit(Submission::new("P", None, "a")).unwrap();
        let r = s.submit(Submission::new("P", Some("   "), "b")).unwrap();
        assert_eq!(r.duplicate_of, None);
        assert_eq!(s.list("P").len(), 2);
    }

    #[test]
    fn validation() {
        let s = IssueStore::in_memory();
        assert!(matches!(
            s.submit(Submission::new(" ", None, "d")),
            Err(StoreError::Invalid(ValidationError::EmptyPaperId))
        ));
        assert!(matches!(
            s.submit(Submission::new("P", None, "")),
            Err(StoreError::Invalid(ValidationError::EmptyDescription))
        ));
        assert!(s.is_empty());
    }

    #[test]
    fn list_filters_and_orders() {
        let s = IssueStore::in_memory();
        assert!(s.list("nobody").is_empty());
        s.submit_at(Submission::new("P", Some("one"), "d"), at(0)).unwrap();
        s.submit_at(Submission::new("P", Some("two"), "d"), at(10)).unwrap();
        s.submit_at(Submission::new("P", Some("ONE"), "d"), at(20)).unwrap();
        let listed: Vec<ReportId> = s.list("P").iter().map(|r| r.report_id).collect();
        assert_eq!(listed, vec![2, 1]);
    }

    #[test]
    fn reopen_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("reports.ndjson");
        let store = IssueStore::open(&path).unwrap();
        store.submit(Submission::new("P", Some("α  β"), "unicode")).unwrap();
        store.submit(Submission::new("P", Some("α β"), "dup")).unwrap();
        let before = store.all();
        let bytes = std::fs::read(&path).unwrap();
        drop(store);
        let reopened = IssueStore::open(&path).unwrap();
        assert_eq!(reopened.all(), before);
        let next = reopened.submit(Submission::new("P", Some("a b"), "x")).unwrap();
        assert_eq!(next.report_id, 3);
        assert!(std::fs::read(&path).unwrap().starts_with(&bytes));
    }

    #[test]
    fn corrupt_line_is_reported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("r.ndjson");
        std::fs::write(&path, "{not json}\n").unwrap();
        assert!(matches!(IssueStore::open(&path), Err(StoreError::Corrupt { line: 1, .. })));
    }
}
