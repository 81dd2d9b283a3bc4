//! Tier-by-tier execution of the hierarchy for one query.
//!
//! Tier 1 scores the whole reference database. Every method of a tier
//! forwards its own top `k_out`, and the tier forwards the union. The final
//! tier averages its methods' scores and picks the best candidate; the
//! combined decision additionally folds in earlier tiers' scores for the
//! final candidates.

mod method;

use std::sync::Arc;
use std::time::Instant;

pub use method::{
    bind_method, extract_features, extract_global, hog_descriptor, load_score_matrix, FeatureMethod,
    LocalFeatureMethod, ScoreMatrixMethod, ScoringMethod,
};

use crate::config::{KOut, MethodKind, PipelineConfig, TierSpec};
use crate::dataset::Dataset;
use crate::error::{Error, Result};
use crate::model::{
    argmax, CandidateSet, MatchResult, NormalizedScores, QueryId, RefId, ScoreMap,
    StandardizedScores, TierRecord,
};
use crate::scoring::{min_max_normalize, renormalize_map, standardize, tier_max_across_methods};

/// Ids of the `k` highest scores; ties go to the lower id.
pub fn top_k(scores: &NormalizedScores, k: usize) -> CandidateSet {
    if k >= scores.len() {
        return scores.candidates();
    }
    CandidateSet::from_ids(crate::model::ranking(scores.as_map()).into_iter().take(k))
}

/// Scores `candidates_in` with every method of a tier and selects the union
/// of each method's top `k_out`.
pub fn run_tier(
    tier_index: usize,
    tier: &TierSpec,
    methods: &[Arc<dyn ScoringMethod>],
    query: QueryId,
    candidates_in: &CandidateSet,
) -> Result<TierRecord> {
    if candidates_in.is_empty() {
        return Err(Error::Internal(format!("tier {} received no candidates", tier_index + 1)));
    }
    if methods.len() != tier.methods.len() {
        return Err(Error::Internal(format!(
            "tier {} has {} specs but {} bound methods",
            tier_index + 1,
            tier.methods.len(),
            methods.len()
        )));
    }
    let k = match tier.k_out {
        KOut::All => candidates_in.len(),
        KOut::Count(k) => k,
    };
    let mut per_method = Vec::with_capacity(methods.len());
    let mut selected = Vec::with_capacity(methods.len());
    for (spec, method) in tier.methods.iter().zip(methods) {
        let wrap = |e: Error| Error::Method {
            method: spec.name.clone(),
            source: Box::new(e),
        };
        let raw = method.score(query, candidates_in).map_err(wrap)?;
        if !raw.as_map().keys().copied().eq(candidates_in.iter()) {
            return Err(wrap(Error::Internal(
                "method did not score exactly the requested candidates".into(),
            )));
        }
        let normalized = min_max_normalize(&raw).map_err(wrap)?;
        selected.push(top_k(&normalized, k));
        per_method.push(normalized);
    }
    let record = TierRecord {
        tier_index,
        method_names: tier.methods.iter().map(|m| m.name.clone()).collect(),
        per_method_scores: per_method,
        selected: CandidateSet::union(&selected),
    };
    record.validate()?;
    Ok(record)
}

/// Per-candidate mean of the final tier's method scores, and its argmax.
pub fn final_tier_decision(record: &TierRecord) -> Result<(RefId, ScoreMap)> {
    let n = record.per_method_scores.len();
    if n == 0 {
        return Err(Error::invalid("tier record", "final tier has no methods"));
    }
    record.validate()?;
    let mut mean = record.per_method_scores[0].as_map().clone();
    for scores in &record.per_method_scores[1..] {
        for (id, v) in scores.iter() {
            *mean.get_mut(&id).expect("validated key sets") += v;
        }
    }
    for v in mean.values_mut() {
        *v /= n as f64;
    }
    let best = argmax(&mean).ok_or_else(|| Error::invalid("tier record", "no candidates"))?;
    Ok((best, mean))
}

/// Weighted fusion across tiers over the final tier's candidates, then
/// standardized. Earlier tiers contribute their per-candidate best method,
/// restricted to the final candidates and rescaled to `[0, 1]`; the final
/// tier contributes its mean score.
pub fn combined_score(records: &[TierRecord], weights: &[f64]) -> Result<(RefId, StandardizedScores)> {
    let (last, earlier) = records
        .split_last()
        .ok_or_else(|| Error::invalid("tier records", "no tiers"))?;
    if weights.len() != records.len() {
        return Err(Error::invalid(
            "weights",
            format!("{} weights for {} tiers", weights.len(), records.len()),
        ));
    }
    let (_, final_mean) = final_tier_decision(last)?;
    let w_last = weights[records.len() - 1];
    let mut fused: ScoreMap = final_mean.iter().map(|(&id, &v)| (id, w_last * v)).collect();

    for (record, &w) in earlier.iter().zip(weights) {
        let best_method = tier_max_across_methods(&record.per_method_scores)?;
        let restricted = fused
            .keys()
            .map(|&id| {
                best_method.get(id).map(|v| (id, v)).ok_or_else(|| {
                    Error::Internal(format!(
                        "final candidate {id} was never scored by tier {}",
                        record.tier_index + 1
                    ))
                })
            })
            .collect::<Result<ScoreMap>>()?;
        let rescaled = renormalize_map(&restricted)?;
        for (id, v) in rescaled {
            *fused.get_mut(&id).expect("same key set") += w * v;
        }
    }
    let standardized = standardize(&fused)?;
    let best = standardized
        .argmax()
        .ok_or_else(|| Error::Internal("empty combined score".into()))?;
    Ok((best, standardized))
}

/// A configuration with its methods bound to one dataset.
pub struct Pipeline {
    config: PipelineConfig,
    methods: Vec<Vec<Arc<dyn ScoringMethod>>>,
    num_references: usize,
    num_queries: usize,
}

impl std::fmt::Debug for Pipeline {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Pipeline")
            .field("config", &self.config)
            .field("num_references", &self.num_references)
            .field("num_queries", &self.num_queries)
            .finish()
    }
}

impl Pipeline {
    /// Binds every method of `config` against `dataset`. Identical method
    /// settings appearing in several tiers are bound once.
    pub fn bind(config: PipelineConfig, dataset: &Dataset) -> Result<Self> {
        config.validate()?;
        let mut cache: Vec<(MethodKind, Arc<dyn ScoringMethod>)> = Vec::new();
        let mut methods = Vec::with_capacity(config.tiers.len());
        for tier in &config.tiers {
            let mut bound = Vec::with_capacity(tier.methods.len());
            for spec in &tier.methods {
                let method = match cache.iter().find(|(k, _)| *k == spec.kind) {
                    Some((_, m)) => Arc::clone(m),
                    None => {
                        let m = bind_method(spec, dataset)?;
                        cache.push((spec.kind.clone(), Arc::clone(&m)));
                        m
                    }
                };
                bound.push(method);
            }
            methods.push(bound);
        }
        Ok(Pipeline {
            config,
            methods,
            num_references: dataset.num_references(),
            num_queries: dataset.num_queries(),
        })
    }

    /// Assembles a pipeline from already-bound methods, one list per tier.
    pub fn from_methods(
        config: PipelineConfig,
        methods: Vec<Vec<Arc<dyn ScoringMethod>>>,
        num_references: usize,
        num_queries: usize,
    ) -> Result<Self> {
        config.validate()?;
        if methods.len() != config.tiers.len()
            || methods.iter().zip(&config.tiers).any(|(m, t)| m.len() != t.methods.len())
        {
            return Err(Error::invalid("pipeline", "bound methods do not match the config layout"));
        }
        if num_references == 0 {
            return Err(Error::invalid("pipeline", "no reference images"));
        }
        Ok(Pipeline {
            config,
            methods,
            num_references,
            num_queries,
        })
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn num_references(&self) -> usize {
        self.num_references
    }

    pub fn num_queries(&self) -> usize {
        self.num_queries
    }

    /// Bound methods, one list per tier, parallel to `config().tiers`.
    pub fn methods(&self) -> &[Vec<Arc<dyn ScoringMethod>>] {
        &self.methods
    }

    /// Same bound methods under a different per-tier `k_out` schedule.
    pub fn with_schedule(&self, schedule: &[KOut]) -> Result<Pipeline> {
        Ok(Pipeline {
            config: self.config.with_schedule(schedule)?,
            methods: self.methods.clone(),
            num_references: self.num_references,
            num_queries: self.num_queries,
        })
    }

    pub fn run_query(&self, query: QueryId) -> Result<MatchResult> {
        if query.0 >= self.num_queries {
            return Err(Error::Usage(format!(
                "query {query} out of range for {} queries",
                self.num_queries
            )));
        }
        let mut candidates = CandidateSet::full(self.num_references);
        let mut records = Vec::with_capacity(self.config.tiers.len());
        let mut timings = Vec::with_capacity(self.config.tiers.len());
        for (t, (tier, methods)) in self.config.tiers.iter().zip(&self.methods).enumerate() {
            let start = Instant::now();
            let record = run_tier(t, tier, methods, query, &candidates)?;
            timings.push(start.elapsed().as_secs_f64());
            candidates = record.selected.clone();
            records.push(record);
        }
        let last = records.last().expect("at least one tier");
        let (final_tier_best, final_scores) = final_tier_decision(last)?;
        let (combined_best, combined_scores) = if self.config.combined {
            let (best, scores) = combined_score(&records, &self.config.weights())?;
            (Some(best), Some(scores))
        } else {
            (None, None)
        };
        Ok(MatchResult {
            query,
            final_tier_best,
            final_scores,
            combined_best,
            combined_scores,
            tier_records: records,
            timings,
        })
    }
}

#[cfg(test)]
mod tests;
