use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{recall_at_n, GroundTruthOracle, RecallCurve};
use crate::config::{check_schedule, KOut};
use crate::error::{Error, Result};
use crate::model::{argmax, ranking, CandidateSet, QueryId, RefId};
use crate::pipeline::{final_tier_decision, Pipeline};
use crate::scoring::min_max_normalize;

/// What one query produced, with correctness already resolved.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub query: QueryId,
    pub final_best: RefId,
    pub combined_best: Option<RefId>,
    pub final_correct: bool,
    pub combined_correct: Option<bool>,
    /// Candidates each tier forwarded.
    pub selected_sizes: Vec<usize>,
    pub tier_ms: Vec<f64>,
    /// `[tier][method]`: whether the method's own best candidate within the
    /// tier's evaluated set is correct.
    pub method_correct: Vec<Vec<bool>>,
    /// Per tier: whether the best candidate by the mean of the tier's
    /// methods is correct.
    pub tier_mean_correct: Vec<bool>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodRecall {
    /// 1-based.
    pub tier: usize,
    pub method: String,
    pub recall_at_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierRecall {
    /// 1-based.
    pub tier: usize,
    pub recall_at_1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub name: String,
    pub schedule: Vec<KOut>,
    pub num_queries: usize,
    pub per_method: Vec<MethodRecall>,
    /// Recall@1 of each tier's mean-score decision.
    pub per_tier: Vec<TierRecall>,
    pub final_recall_at_1: f64,
    pub combined_recall_at_1: Option<f64>,
    pub mean_seconds_per_frame: f64,
    /// The pipeline config the run used, as TOML.
    pub config_toml: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentRun {
    pub report: ExperimentReport,
    pub outcomes: Vec<QueryOutcome>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodCurve {
    pub method: String,
    pub curve: RecallCurve,
}

fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Internal(format!("worker pool: {e}")))?;
    Ok(pool.install(f))
}

fn check_sizes(pipeline: &Pipeline, oracle: &GroundTruthOracle) -> Result<()> {
    if pipeline.num_queries() != oracle.num_queries() || pipeline.num_references() != oracle.num_references() {
        return Err(Error::Mismatch(format!(
            "pipeline covers {} queries x {} references, ground truth covers {} x {}",
            pipeline.num_queries(),
            pipeline.num_references(),
            oracle.num_queries(),
            oracle.num_references()
        )));
    }
    Ok(())
}

fn run_one(pipeline: &Pipeline, oracle: &GroundTruthOracle, q: QueryId) -> Result<QueryOutcome> {
    let start = Instant::now();
    let result = pipeline.run_query(q)?;
    let seconds = start.elapsed().as_secs_f64();
    let method_correct = result
        .tier_records
        .iter()
        .map(|rec| {
            rec.per_method_scores
                .iter()
                .map(|s| {
                    let best = argmax(s.as_map()).ok_or_else(|| Error::Internal("empty tier".into()))?;
                    oracle.is_correct(q, best)
                })
                .collect::<Result<Vec<_>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    let tier_mean_correct = result
        .tier_records
        .iter()
        .map(|rec| oracle.is_correct(q, final_tier_decision(rec)?.0))
        .collect::<Result<Vec<_>>>()?;
    Ok(QueryOutcome {
        query: q,
        final_best: result.final_tier_best,
        combined_best: result.combined_best,
        final_correct: oracle.is_correct(q, result.final_tier_best)?,
        combined_correct: result.combined_best.map(|b| oracle.is_correct(q, b)).transpose()?,
        selected_sizes: result.tier_records.iter().map(|r| r.selected.len()).collect(),
        tier_ms: result.timings.iter().map(|s| s * 1e3).collect(),
        method_correct,
        tier_mean_correct,
        seconds,
    })
}

fn fraction(hits: impl Iterator<Item = bool>, total: usize) -> f64 {
    hits.filter(|&h| h).count() as f64 / total.max(1) as f64
}

/// Runs every query through `pipeline` on up to `workers` threads (0 picks
/// a default) and aggregates Recall@1 per tier and method.
pub fn run_experiment(
    pipeline: &Pipeline,
    oracle: &GroundTruthOracle,
    name: &str,
    workers: usize,
) -> Result<ExperimentRun> {
    check_sizes(pipeline, oracle)?;
    let n = pipeline.num_queries();
    let outcomes = with_workers(workers, || {
        (0..n)
            .into_par_iter()
            .map(|q| run_one(pipeline, oracle, QueryId(q)))
            .collect::<Result<Vec<_>>>()
    })??;

    let config = pipeline.config();
    let mut per_method = Vec::new();
    for (t, tier) in config.tiers.iter().enumerate() {
        for (m, spec) in tier.methods.iter().enumerate() {
            per_method.push(MethodRecall {
                tier: t + 1,
                method: spec.name.clone(),
                recall_at_1: fraction(outcomes.iter().map(|o| o.method_correct[t][m]), n),
            });
        }
    }
    let per_tier = (0..config.tiers.len())
        .map(|t| TierRecall {
            tier: t + 1,
            recall_at_1: fraction(outcomes.iter().map(|o| o.tier_mean_correct[t]), n),
        })
        .collect();
    let report = ExperimentReport {
        name: name.to_string(),
        schedule: config.schedule(),
        num_queries: n,
        per_method,
        per_tier,
        final_recall_at_1: fraction(outcomes.iter().map(|o| o.final_correct), n),
        combined_recall_at_1: config
            .combined
            .then(|| fraction(outcomes.iter().map(|o| o.combined_correct == Some(true)), n)),
        mean_seconds_per_frame: outcomes.iter().map(|o| o.seconds).sum::<f64>() / n.max(1) as f64,
        config_toml: config.to_toml_string()?,
    };
    Ok(ExperimentRun { report, outcomes })
}

/// One experiment per `k_out` schedule over the same bound methods.
pub fn sweep(
    pipeline: &Pipeline,
    oracle: &GroundTruthOracle,
    schedules: &[Vec<KOut>],
    workers: usize,
) -> Result<Vec<ExperimentReport>> {
    if schedules.is_empty() {
        return Err(Error::Usage("no schedules to sweep".into()));
    }
    let mut reports = Vec::with_capacity(schedules.len());
    for schedule in schedules {
        let name = schedule.iter().map(|k| k.to_string()).collect::<Vec<_>>().join(",");
        check_schedule(schedule).map_err(|e| Error::Usage(format!("schedule {name}: {e}")))?;
        let p = pipeline.with_schedule(schedule)?;
        reports.push(run_experiment(&p, oracle, &name, workers)?.report);
    }
    Ok(reports)
}

/// Recall@N of each distinct method ranking the whole reference database.
pub fn method_recall_curves(
    pipeline: &Pipeline,
    oracle: &GroundTruthOracle,
    n_values: &[usize],
    workers: usize,
) -> Result<Vec<MethodCurve>> {
    check_sizes(pipeline, oracle)?;
    let all = CandidateSet::full(pipeline.num_references());
    let mut seen: Vec<&str> = Vec::new();
    let mut curves = Vec::new();
    for (tier, methods) in pipeline.config().tiers.iter().zip(pipeline.methods()) {
        for (spec, method) in tier.methods.iter().zip(methods) {
            if seen.contains(&spec.name.as_str()) {
                continue;
            }
            seen.push(&spec.name);
            let ranked = with_workers(workers, || {
                (0..pipeline.num_queries())
                    .into_par_iter()
                    .map(|q| {
                        let raw = method.score(QueryId(q), &all)?;
                        Ok(ranking(min_max_normalize(&raw)?.as_map()))
                    })
                    .collect::<Result<Vec<_>>>()
            })?
            .map_err(|e| Error::Method {
                method: spec.name.clone(),
                source: Box::new(e),
            })?;
            curves.push(MethodCurve {
                method: spec.name.clone(),
                curve: recall_at_n(&ranked, oracle, n_values)?,
            });
        }
    }
    Ok(curves)
}
