//! Thin typed wrapper over the service's HTTP/JSON routes.

use hmpf_proto::{
    CreateSession, ErrorBody, ErrorCategory, Evaluation, EvaluateRequest, ExperimentRun, ExtractRequest,
    ExtractResponse, Health, MatchResult, QueryId, QueryRequest, RunRequest, SessionInfo, SweepRequest,
    SweepResponse, SynthRequest, SyntheticSummary,
};
use reqwest::{Method, StatusCode};
use serde::de::DeserializeOwned;
use serde::Serialize;
use uuid::Uuid;

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    /// The service answered with an error body.
    #[error("{message}")]
    Api {
        status: u16,
        category: ErrorCategory,
        message: String,
    },
    /// The service could not be reached, or answered with something that is
    /// not part of the protocol.
    #[error("server {url}: {message}")]
    Server { url: String, message: String },
}

impl ClientError {
    /// Category of a service-side error; `None` for transport failures.
    pub fn category(&self) -> Option<ErrorCategory> {
        match self {
            ClientError::Api { category, .. } => Some(*category),
            ClientError::Server { .. } => None,
        }
    }
}

pub type Result<T> = std::result::Result<T, ClientError>;

#[derive(Debug, Clone)]
pub struct Client {
    base: String,
    http: reqwest::Client,
}

impl Client {
    /// `base` is e.g. `http://127.0.0.1:8080`; a trailing slash is ignored.
    pub fn new(base: impl Into<String>) -> Self {
        Client {
            base: base.into().trim_end_matches('/').to_string(),
            http: reqwest::Client::new(),
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    async fn call<B: Serialize, T: DeserializeOwned>(&self, method: Method, path: &str, body: Option<&B>) -> Result<T> {
        let url = format!("{}{path}", self.base);
        let server = |message: String| ClientError::Server {
            url: url.clone(),
            message,
        };
        let mut req = self.http.request(method, &url);
        if let Some(b) = body {
            req = req.json(b);
        }
        let resp = req.send().await.map_err(|e| server(describe(&e)))?;
        let status = resp.status();
        let bytes = resp.bytes().await.map_err(|e| server(describe(&e)))?;
        if status.is_success() {
            let bytes = if status == StatusCode::NO_CONTENT { &b"null"[..] } else { &bytes[..] };
            return serde_json::from_slice(bytes).map_err(|e| server(format!("undecodable response: {e}")));
        }
        match serde_json::from_slice::<ErrorBody>(&bytes) {
            Ok(body) => Err(ClientError::Api {
                status: status.as_u16(),
                category: body.category,
                message: body.message,
            }),
            Err(_) => Err(server(format!("HTTP {status}: {}", String::from_utf8_lossy(&bytes).trim()))),
        }
    }

    async fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T> {
        self.call(Method::POST, path, Some(body)).await
    }

    pub async fn health(&self) -> Result<Health> {
        self.call::<(), _>(Method::GET, "/health", None).await
    }

    pub async fn create_session(&self, req: &CreateSession) -> Result<SessionInfo> {
        self.post("/v1/sessions", req).await
    }

    pub async fn delete_session(&self, id: Uuid) -> Result<()> {
        self.call::<(), ()>(Method::DELETE, &format!("/v1/sessions/{id}"), None).await
    }

    pub async fn query(&self, id: Uuid, query: QueryId) -> Result<MatchResult> {
        self.post(&format!("/v1/sessions/{id}/query"), &QueryRequest { query }).await
    }

    pub async fn run(&self, id: Uuid, req: &RunRequest) -> Result<ExperimentRun> {
        self.post(&format!("/v1/sessions/{id}/run"), req).await
    }

    pub async fn evaluate(&self, id: Uuid, req: &EvaluateRequest) -> Result<Evaluation> {
        self.post(&format!("/v1/sessions/{id}/evaluate"), req).await
    }

    pub async fn sweep(&self, id: Uuid, req: &SweepRequest) -> Result<SweepResponse> {
        self.post(&format!("/v1/sessions/{id}/sweep"), req).await
    }

    pub async fn extract(&self, req: &ExtractRequest) -> Result<ExtractResponse> {
        self.post("/v1/extract", req).await
    }

    pub async fn synth(&self, req: &SynthRequest) -> Result<SyntheticSummary> {
        self.post("/v1/synth", req).await
    }
}

// reqwest's Display drops the underlying cause, which is usually the useful part.
fn describe(e: &reqwest::Error) -> String {
    let mut msg = e.to_string();
    let mut src = std::error::Error::source(e);
    while let Some(s) = src {
        msg.push_str(": ");
        msg.push_str(&s.to_string());
        src = s.source();
    }
    msg
}
