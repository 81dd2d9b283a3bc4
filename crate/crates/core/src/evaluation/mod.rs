//! Ground truth, Recall@N and the experiment harness.

mod experiment;
mod report;
mod synthetic;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::dataset::{Dataset, GroundTruthSpec};
use crate::error::{Error, Result};
use crate::model::{QueryId, RefId};

pub use experiment::{
    method_recall_curves, run_experiment, sweep, ExperimentReport, ExperimentRun, MethodCurve,
    MethodRecall, QueryOutcome, TierRecall,
};
pub use report::{write_plot_data_csv, write_report_csv, write_results_csv};
pub use synthetic::{
    build_synthetic, generate_synthetic_benchmark, SyntheticBenchmark, SyntheticSpec,
    SyntheticSummary,
};

/// Per-query sets of in-tolerance references, resolved once per dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthOracle {
    num_references: usize,
    matches: Vec<BTreeSet<RefId>>,
}

impl GroundTruthOracle {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let n_refs = dataset.num_references();
        let n_queries = dataset.num_queries();
        match &dataset.ground_truth {
            GroundTruthSpec::FrameOffset { tolerance } => {
                Ok(Self::frame_offset(n_refs, n_queries, *tolerance))
            }
            GroundTruthSpec::Metric {
                tolerance_m,
                reference_coords,
                query_coords,
            } => {
                if reference_coords.len() != n_refs || query_coords.len() != n_queries {
                    return Err(Error::invalid(
                        "ground truth",
                        format!(
                            "coordinates for {} references and {} queries, dataset has {n_refs} and {n_queries}",
                            reference_coords.len(),
                            query_coords.len()
                        ),
                    ));
                }
                Ok(Self::metric(reference_coords, query_coords, *tolerance_m))
            }
        }
    }

    /// Query `q` matches every reference within `tolerance` frames of `q`.
    pub fn frame_offset(num_references: usize, num_queries: usize, tolerance: usize) -> Self {
        let matches = (0..num_queries)
            .map(|q| {
                let lo = q.saturating_sub(tolerance);
                let hi = q.saturating_add(tolerance).min(num_references.saturating_sub(1));
                (lo..=hi).filter(|&r| r < num_references).map(RefId).collect()
            })
            .collect();
        GroundTruthOracle {
            num_references,
            matches,
        }
    }

    /// Planar coordinates in meters; a match lies within `tolerance_m`.
    pub fn metric(reference_coords: &[(f64, f64)], query_coords: &[(f64, f64)], tolerance_m: f64) -> Self {
        let matches = query_coords
            .iter()
            .map(|&(qx, qy)| {
                reference_coords
                    .iter()
                    .enumerate()
                    .filter(|(_, &(rx, ry))| (qx - rx).hypot(qy - ry) <= tolerance_m)
                    .map(|(r, _)| RefId(r))
                    .collect()
            })
            .collect();
        GroundTruthOracle {
            num_references: reference_coords.len(),
            matches,
        }
    }

    pub fn num_queries(&self) -> usize {
        self.matches.len()
    }

    pub fn num_references(&self) -> usize {
        self.num_references
    }

    /// References accepted as correct for `query`.
    pub fn matches(&self, query: QueryId) -> Result<&BTreeSet<RefId>> {
        self.matches.get(query.0).ok_or_else(|| {
            Error::Usage(format!("query {query} out of range for {} queries", self.matches.len()))
        })
    }

    pub fn is_correct(&self, query: QueryId, matched: RefId) -> Result<bool> {
        if matched.0 >= self.num_references {
            return Err(Error::Usage(format!(
                "reference {matched} out of range for {} references",
                self.num_references
            )));
        }
        Ok(self.matches(query)?.contains(&matched))
    }
}

/// Recall at each requested N.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallCurve {
    pub n_values: Vec<usize>,
    pub recall: Vec<f64>,
    /// Set when some N exceeded a ranked list's length and was clamped.
    pub clamped: bool,
}

impl RecallCurve {
    pub fn at(&self, n: usize) -> Option<f64> {
        self.n_values.iter().position(|&v| v == n).map(|i| self.recall[i])
    }
}

/// Fraction of queries whose top-`n` ranked references include a correct
/// one, for each `n` in `n_values`.
pub fn recall_at_n(
    ranked_lists: &[Vec<RefId>],
    oracle: &GroundTruthOracle,
    n_values: &[usize],
) -> Result<RecallCurve> {
    if n_values.is_empty() {
        return Err(Error::invalid("recall", "no N values requested"));
    }
    if n_values[0] == 0 || n_values.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("recall", "N values must be positive and strictly ascending"));
    }
    if ranked_lists.len() != oracle.num_queries() {
        return Err(Error::Mismatch(format!(
            "{} ranked lists for {} queries",
            ranked_lists.len(),
            oracle.num_queries()
        )));
    }
    let max_n = *n_values.last().expect("non-empty");
    let mut clamped = false;
    // first correct rank per query, 1-based
    let mut first_hit = Vec::with_capacity(ranked_lists.len());
    for (q, list) in ranked_lists.iter().enumerate() {
        let mut seen = BTreeSet::new();
        if !list.iter().all(|id| seen.insert(*id)) {
            return Err(Error::invalid("recall", format!("ranked list for query {q} repeats an id")));
        }
        if list.len() < max_n {
            clamped = true;
        }
        let truth = oracle.matches(QueryId(q))?;
        first_hit.push(list.iter().position(|id| truth.contains(id)).map(|p| p + 1));
    }
    let total = ranked_lists.len().max(1) as f64;
    let recall = n_values
        .iter()
        .map(|&n| first_hit.iter().filter(|h| matches!(h, Some(r) if *r <= n)).count() as f64 / total)
        .collect();
    Ok(RecallCurve {
        n_values: n_values.to_vec(),
        recall,
        clamped,
    })
}
