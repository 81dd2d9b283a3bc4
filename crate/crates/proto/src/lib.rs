//! Request and response bodies shared by the service and its clients.
//!
//! All paths are interpreted on the server's filesystem; clients should send
//! absolute paths.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use uuid::Uuid;

pub use hmpf_core::evaluation::{
    ExperimentReport, ExperimentRun, MethodCurve, MethodRecall, QueryOutcome, RecallCurve,
    SyntheticSpec, SyntheticSummary, TierRecall,
};
pub use hmpf_core::{ErrorCategory, KOut, ListKind, MatchResult, MethodKind, QueryId, RefId};

/// Body of every non-2xx response.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorBody {
    pub category: ErrorCategory,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    pub version: String,
}

/// Binds a pipeline config to a dataset. Heavy: image methods compute
/// their descriptors here.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CreateSession {
    pub manifest: PathBuf,
    pub config: PathBuf,
    /// Replaces the config's per-tier `k_out`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub schedule: Option<Vec<KOut>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierInfo {
    pub k_out: KOut,
    pub weight: f64,
    pub methods: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionInfo {
    pub session: Uuid,
    pub num_references: usize,
    pub num_queries: usize,
    pub combined: bool,
    pub tiers: Vec<TierInfo>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRequest {
    pub query: QueryId,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    /// Query worker threads; 0 picks a default.
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateRequest {
    #[serde(default)]
    pub workers: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    /// N values for each method's Recall@N curve.
    pub n_values: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub run: ExperimentRun,
    pub curves: Vec<MethodCurve>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    pub schedules: Vec<Vec<KOut>>,
    #[serde(default)]
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResponse {
    pub reports: Vec<ExperimentReport>,
}

/// Computes global descriptors for one image list and writes them as an
/// HMPF1 file at `out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractRequest {
    pub manifest: PathBuf,
    pub list: ListKind,
    pub method: MethodKind,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractResponse {
    pub out: PathBuf,
    pub count: usize,
    pub dim: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthRequest {
    #[serde(default)]
    pub spec: SyntheticSpec,
    pub out_dir: PathBuf,
}

#[cfg(test)]
mod tests {
    use super::*;
    use hmpf_core::Metric;

    #[test]
    fn match_result_round_trips_through_json() {
        let mut scores = std::collections::BTreeMap::new();
        scores.insert(RefId(3), 0.25);
        scores.insert(RefId(12), 1.0);
        let result = MatchResult {
            query: QueryId(4),
            final_tier_best: RefId(12),
            final_scores: scores,
            combined_best: None,
            combined_scores: None,
            tier_records: Vec::new(),
            timings: vec![0.5],
        };
        let text = serde_json::to_string(&result).unwrap();
        assert!(text.contains("\"12\":1.0"), "{text}");
        let back: MatchResult = serde_json::from_str(&text).unwrap();
        assert_eq!(back, result);
    }

    #[test]
    fn schedules_use_all_keyword() {
        let req = SweepRequest {
            schedules: vec![vec![KOut::All, KOut::Count(10)]],
            workers: 0,
        };
        let text = serde_json::to_string(&req).unwrap();
        assert_eq!(text, r#"{"schedules":[["all",10]],"workers":0}"#);
        assert_eq!(serde_json::from_str::<SweepRequest>(&text).unwrap(), req);
        assert!(serde_json::from_str::<SweepRequest>(r#"{"schedules":[[0]]}"#).is_err());
    }

    #[test]
    fn extract_request_shape() {
        let req: ExtractRequest = serde_json::from_str(
            r#"{"manifest":"/d/m.toml","list":"query","method":{"kind":"hog","cell_px":20},"out":"/d/q.hmpf"}"#,
        )
        .unwrap();
        assert_eq!(req.list, ListKind::Query);
        assert_eq!(req.method, MethodKind::Hog { cell_px: 20, metric: Metric::Euclidean });
    }

    #[test]
    fn error_body_category_is_kebab_case() {
        let body = ErrorBody {
            category: ErrorCategory::Mismatch,
            message: "3 vs 4".into(),
        };
        assert_eq!(serde_json::to_string(&body).unwrap(), r#"{"category":"mismatch","message":"3 vs 4"}"#);
    }
}
