//! Seeded feature-space benchmark with method-specific perceptual aliasing.
//!
//! Every method embeds references as Gaussian vectors and places each query
//! close to its true reference. A few queries per method are instead pulled
//! most of the way towards a distractor reference, so that method ranks the
//! distractor first and the true match second. Aliased queries and
//! distractors are disjoint across methods, and a distractor never reaches
//! another method's top 10, so the methods disagree about which places
//! look alike.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::config::{KOut, Metric, MethodKind, MethodSpec, PipelineConfig, TierSpec, default_weight};
use crate::dataset::{Manifest, ManifestGroundTruth};
use crate::error::{Error, Result};
use crate::hmpf::write_feature_file;
use crate::model::{QueryId, RefId};

const MAX_ATTEMPTS: usize = 100;
/// Depth within which a distractor must stay out of other methods' rankings.
const RETENTION_DEPTH: usize = 10;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub n_refs: usize,
    pub n_queries: usize,
    pub methods: usize,
    /// Aliased queries per method.
    pub distractors: usize,
    pub dim: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            n_refs: 50,
            n_queries: 50,
            methods: 3,
            distractors: 5,
            dim: 16,
            seed: 42,
        }
    }
}

impl SyntheticSpec {
    fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid("synthetic benchmark", m));
        if self.n_queries == 0 || self.n_refs < self.n_queries {
            return bad(format!(
                "need n_refs >= n_queries >= 1, got {} references and {} queries",
                self.n_refs, self.n_queries
            ));
        }
        if self.methods == 0 || self.dim == 0 {
            return bad("methods and dim must be positive".into());
        }
        let aliased = self.methods * self.distractors;
        if aliased > self.n_queries || aliased >= self.n_refs {
            return bad(format!(
                "{} methods x {} distractors do not fit {} queries and {} references",
                self.methods, self.distractors, self.n_queries, self.n_refs
            ));
        }
        Ok(())
    }
}

/// Feature vectors per method plus the aliasing that was injected.
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticBenchmark {
    pub spec: SyntheticSpec,
    /// `[method][reference]`
    pub references: Vec<Vec<Vec<f32>>>,
    /// `[method][query]`
    pub queries: Vec<Vec<Vec<f32>>>,
    /// `[method]` -> (aliased query, its distractor)
    pub aliasing: Vec<Vec<(QueryId, RefId)>>,
    pub attempts: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSummary {
    pub attempts: usize,
    pub manifest: PathBuf,
    pub pipeline: PathBuf,
    pub files: Vec<PathBuf>,
    /// Recall@1 of each method ranking all references on its own.
    pub method_recall_at_1: Vec<f64>,
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize, sigma: f64) -> Vec<f64> {
    (0..dim).map(|_| sigma * rng.sample::<f64, _>(StandardNormal)).collect()
}

fn dist2(a: &[f32], b: &[f32]) -> f64 {
    a.iter().zip(b).map(|(&x, &y)| (x as f64 - y as f64).powi(2)).sum()
}

/// References ordered by distance to `query`, ties to the lower id.
fn rank(query: &[f32], refs: &[Vec<f32>]) -> Vec<usize> {
    let mut d: Vec<(f64, usize)> = refs.iter().enumerate().map(|(i, r)| (dist2(query, r), i)).collect();
    d.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    d.into_iter().map(|(_, i)| i).collect()
}

type Instance = (Vec<Vec<Vec<f32>>>, Vec<Vec<Vec<f32>>>, Vec<Vec<(QueryId, RefId)>>);

fn to_f32(v: &[f64]) -> Vec<f32> {
    v.iter().map(|&x| x as f32).collect()
}

fn attempt(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Option<Instance> {
    let refs: Vec<Vec<Vec<f64>>> = (0..spec.methods)
        .map(|_| (0..spec.n_refs).map(|_| gaussian(rng, spec.dim, 1.0)).collect())
        .collect();
    let references: Vec<Vec<Vec<f32>>> = refs.iter().map(|r| r.iter().map(|v| to_f32(v)).collect()).collect();
    let mut queries: Vec<Vec<Vec<f32>>> = refs
        .iter()
        .map(|r| {
            (0..spec.n_queries)
                .map(|q| {
                    let noise = gaussian(rng, spec.dim, 0.05);
                    to_f32(&r[q].iter().zip(&noise).map(|(a, b)| a + b).collect::<Vec<_>>())
                })
                .collect()
        })
        .collect();

    let mut query_order: Vec<usize> = (0..spec.n_queries).collect();
    query_order.shuffle(rng);
    let mut ref_order: Vec<usize> = (0..spec.n_refs).collect();
    ref_order.shuffle(rng);

    let mut used = vec![false; spec.n_refs];
    let mut aliasing = Vec::with_capacity(spec.methods);
    for m in 0..spec.methods {
        let mut pairs = Vec::with_capacity(spec.distractors);
        for &q in &query_order[m * spec.distractors..(m + 1) * spec.distractors] {
            // other methods must not already see the distractor near q
            let near: Vec<usize> = (0..spec.methods)
                .filter(|&o| o != m)
                .flat_map(|o| rank(&queries[o][q], &references[o]).into_iter().take(RETENTION_DEPTH))
                .collect();
            let noise = gaussian(rng, spec.dim, 0.02);
            let base = &refs[m][q];
            let pulled = |d: usize| -> Vec<f32> {
                (0..spec.dim)
                    .map(|i| (base[i] + 0.6 * (refs[m][d][i] - base[i]) + noise[i]) as f32)
                    .collect()
            };
            let (d, vector) = ref_order
                .iter()
                .filter(|&&r| r != q && !used[r] && !near.contains(&r))
                .map(|&d| (d, pulled(d)))
                .find(|(d, v)| rank(v, &references[m])[..2] == [*d, q])?;
            used[d] = true;
            queries[m][q] = vector;
            pairs.push((QueryId(q), RefId(d)));
        }
        pairs.sort();
        aliasing.push(pairs);
    }
    Some((references, queries, aliasing))
}

// q indexes every method's query list at once
#[allow(clippy::needless_range_loop)]
fn structure_holds(
    spec: &SyntheticSpec,
    references: &[Vec<Vec<f32>>],
    queries: &[Vec<Vec<f32>>],
    aliasing: &[Vec<(QueryId, RefId)>],
) -> bool {
    for q in 0..spec.n_queries {
        let ranks: Vec<Vec<usize>> = (0..spec.methods).map(|m| rank(&queries[m][q], &references[m])).collect();
        for m in 0..spec.methods {
            match aliasing[m].iter().find(|(a, _)| a.0 == q) {
                Some(&(_, d)) => {
                    if ranks[m][0] != d.0 || ranks[m][1] != q {
                        return false;
                    }
                    let leaks = (0..spec.methods)
                        .filter(|&o| o != m)
                        .any(|o| ranks[o].iter().take(RETENTION_DEPTH).any(|&r| r == d.0));
                    if leaks {
                        return false;
                    }
                }
                None => {
                    if ranks[m][0] != q {
                        return false;
                    }
                }
            }
        }
    }
    true
}

/// Draws instances from the seeded stream until the aliasing structure
/// holds exactly: every method ranks its own distractor first and the true
/// match second for its aliased queries, ranks the true match first for
/// all other queries, and never ranks another method's distractor within
/// its top 10 for that distractor's query.
pub fn build_synthetic(spec: &SyntheticSpec) -> Result<SyntheticBenchmark> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for attempts in 1..=MAX_ATTEMPTS {
        let Some((references, queries, aliasing)) = attempt(spec, &mut rng) else {
            continue;
        };
        if structure_holds(spec, &references, &queries, &aliasing) {
            return Ok(SyntheticBenchmark {
                spec: spec.clone(),
                references,
                queries,
                aliasing,
                attempts,
            });
        }
    }
    Err(Error::invalid(
        "synthetic benchmark",
        format!("no instance with the requested aliasing after {MAX_ATTEMPTS} attempts"),
    ))
}

impl SyntheticBenchmark {
    pub fn method_recall_at_1(&self) -> Vec<f64> {
        (0..self.spec.methods)
            .map(|m| {
                let hits = (0..self.spec.n_queries)
                    .filter(|&q| rank(&self.queries[m][q], &self.references[m])[0] == q)
                    .count();
                hits as f64 / self.spec.n_queries as f64
            })
            .collect()
    }

    /// One method per tier in method order; forwards every reference from
    /// the first tier, then 10, then 1.
    pub fn pipeline_config(&self) -> Result<PipelineConfig> {
        let n = self.spec.methods;
        let tiers = (0..n)
            .map(|t| {
                let k_out = if t + 1 == n {
                    KOut::Count(1)
                } else if t + 2 == n {
                    KOut::Count(RETENTION_DEPTH)
                } else if t == 0 && self.spec.n_refs > RETENTION_DEPTH {
                    KOut::Count(self.spec.n_refs)
                } else {
                    KOut::All
                };
                TierSpec {
                    k_out,
                    weight: default_weight(t, n),
                    methods: vec![MethodSpec {
                        name: format!("method{}", t + 1),
                        kind: MethodKind::PrecomputedFeatures {
                            query_features: format!("method{}_queries.hmpf", t + 1).into(),
                            reference_features: format!("method{}_references.hmpf", t + 1).into(),
                            metric: Metric::Euclidean,
                        },
                    }],
                }
            })
            .collect();
        PipelineConfig::new(true, tiers)
    }

    pub fn manifest(&self) -> Manifest {
        Manifest {
            reference_count: Some(self.spec.n_refs),
            query_count: Some(self.spec.n_queries),
            ground_truth: ManifestGroundTruth {
                mode: "frame-offset".into(),
                frame_tolerance: Some(0),
                index_aligned: (self.spec.n_refs != self.spec.n_queries).then_some(true),
                ..Default::default()
            },
            ..Default::default()
        }
    }
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

/// Builds the benchmark and writes it to `out_dir`: per-method HMPF1
/// feature files, `manifest.toml`, `pipeline.toml` and `aliasing.csv`.
pub fn generate_synthetic_benchmark(spec: &SyntheticSpec, out_dir: &Path) -> Result<SyntheticSummary> {
    let bench = build_synthetic(spec)?;
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut files = Vec::new();
    for m in 0..spec.methods {
        for (which, rows) in [("queries", &bench.queries[m]), ("references", &bench.references[m])] {
            let path = out_dir.join(format!("method{}_{which}.hmpf", m + 1));
            write_feature_file(&path, spec.dim, rows)?;
            files.push(path);
        }
    }

    let manifest = out_dir.join("manifest.toml");
    let text = toml::to_string(&bench.manifest())
        .map_err(|e| Error::Internal(format!("serializing manifest: {e}")))?;
    write_text(&manifest, &text)?;

    let pipeline = out_dir.join("pipeline.toml");
    write_text(&pipeline, &bench.pipeline_config()?.to_toml_string()?)?;

    let aliasing = out_dir.join("aliasing.csv");
    let mut csv_text = String::from("method,query,distractor\n");
    for (m, pairs) in bench.aliasing.iter().enumerate() {
        for (q, d) in pairs {
            csv_text.push_str(&format!("method{},{q},{d}\n", m + 1));
        }
    }
    write_text(&aliasing, &csv_text)?;
    files.push(aliasing);

    Ok(SyntheticSummary {
        attempts: bench.attempts,
        manifest,
        pipeline,
        files,
        method_recall_at_1: bench.method_recall_at_1(),
    })
}
