//! Thin async client for the annotation service HTTP API.

use reqwest::StatusCode;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("request failed: {0}")]
    Http(#[from] reqwest::Error),

    #[error("server returned {status}: {message}")]
    Api { status: u16, message: String, offending: Vec<String> },
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct Task {
    pub cluster_id: u32,
    pub members: Vec<String>,
    pub remaining: Vec<String>,
    pub round: usize,
    pub previews: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
pub struct SubmitOutcome {
    pub cluster_id: u32,
    pub round: usize,
    pub remaining: Vec<String>,
    pub terminal: bool,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct AnnotatorProgress {
    pub annotator: String,
    pub completed: usize,
    pub total: usize,
    pub edges_labeled: u64,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct PairConsistency {
    pub a: String,
    pub b: String,
    pub consistency: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Deserialize)]
pub struct Progress {
    pub annotators: Vec<AnnotatorProgress>,
    pub consistency: Vec<PairConsistency>,
}

#[derive(Serialize)]
struct RoundBody<'a> {
    annotator: &'a str,
    checked: &'a [String],
    #[serde(skip_serializing_if = "Option::is_none")]
    round: Option<usize>,
}

#[derive(Deserialize)]
struct ErrorBody {
    error: String,
    #[serde(default)]
    offending: Vec<String>,
}

/// Client bound to one service and one annotator token.
#[derive(Clone, Debug)]
pub struct Client {
    http: reqwest::Client,
    base: String,
    token: String,
}

impl Client {
    pub fn new(base_url: impl Into<String>, token: impl Into<String>) -> Self {
        Client { http: reqwest::Client::new(), base: base_url.into().trim_end_matches('/').to_string(), token: token.into() }
    }

    fn url(&self, path: &str) -> String {
        format!("{}{}", self.base, path)
    }

    async fn check(resp: reqwest::Response) -> Result<reqwest::Response, ClientError> {
        let status = resp.status();
        if status.is_success() {
            return Ok(resp);
        }
        let text = resp.text().await?;
        let (message, offending) = match serde_json::from_str::<ErrorBody>(&text) {
            Ok(b) => (b.error, b.offending),
            Err(_) => (text, Vec::new()),
        };
        Err(ClientError::Api { status: status.as_u16(), message, offending })
    }

    pub async fn health(&self) -> Result<bool, ClientError> {
        let resp = Self::check(self.http.get(self.url("/api/health")).send().await?).await?;
        let v: serde_json::Value = resp.json().await?;
        Ok(v.get("status").and_then(|s| s.as_str()) == Some("ok"))
    }

    /// The next cluster to annotate, or `None` when everything is done.
    pub async fn next_cluster(&self) -> Result<Option<Task>, ClientError> {
        let resp = self.http.get(self.url("/api/clusters/next")).query(&[("annotator", &self.token)]).send().await?;
        let resp = Self::check(resp).await?;
        if resp.status() == StatusCode::NO_CONTENT {
            return Ok(None);
        }
        Ok(Some(resp.json().await?))
    }

    pub async fn submit_round(&self, cluster: u32, checked: &[String], round: Option<usize>) -> Result<SubmitOutcome, ClientError> {
        let body = RoundBody { annotator: &self.token, checked, round };
        let resp = self.http.post(self.url(&format!("/api/clusters/{cluster}/rounds"))).json(&body).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    /// The annotator's edge set in TSV form.
    pub async fn export(&self) -> Result<String, ClientError> {
        let resp = self.http.get(self.url("/api/export")).query(&[("annotator", &self.token)]).send().await?;
        Ok(Self::check(resp).await?.text().await?)
    }

    pub async fn progress(&self) -> Result<Progress, ClientError> {
        let resp = self.http.get(self.url("/api/progress")).send().await?;
        Ok(Self::check(resp).await?.json().await?)
    }

    /// Fetches a preview by the URL path the service put in a [`Task`].
    pub async fn preview(&self, preview_path: &str) -> Result<String, ClientError> {
        let resp = self.http.get(self.url(preview_path)).send().await?;
        Ok(Self::check(resp).await?.text().await?)
    }
}
