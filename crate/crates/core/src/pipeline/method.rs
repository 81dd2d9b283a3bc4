//! Scoring methods bound to a dataset.

use std::path::Path;
use std::sync::Arc;

use rayon::prelude::*;

use crate::config::{Metric, MethodKind, MethodSpec, HOG_INPUT_PX};
use crate::dataset::{Dataset, ImageList, ListKind};
use crate::descriptors::{
    compute_gist, compute_hog, detect_keypoints, match_distance, score_by_features, GrayImage,
    Keypoint, MatchFilterParams,
};
use crate::error::{Error, Result};
use crate::hmpf::{load_feature_file, FeatureFile};
use crate::model::{CandidateSet, FeatureVector, QueryId, RawDistances, ScoreMap};

/// Produces raw distances between a query and a set of references.
/// Implementations are immutable once bound and shared across threads.
pub trait ScoringMethod: Send + Sync {
    fn score(&self, query: QueryId, candidates: &CandidateSet) -> Result<RawDistances>;
}

/// Global descriptors compared by a vector metric.
pub struct FeatureMethod {
    queries: Vec<FeatureVector>,
    references: Vec<FeatureVector>,
    metric: Metric,
}

impl FeatureMethod {
    pub fn new(queries: Vec<FeatureVector>, references: Vec<FeatureVector>, metric: Metric) -> Self {
        FeatureMethod {
            queries,
            references,
            metric,
        }
    }
}

impl ScoringMethod for FeatureMethod {
    fn score(&self, query: QueryId, candidates: &CandidateSet) -> Result<RawDistances> {
        let q = self
            .queries
            .get(query.0)
            .ok_or_else(|| Error::Mismatch(format!("query {query} out of range")))?;
        score_by_features(q, &self.references, candidates, self.metric)
    }
}

pub struct LocalFeatureMethod {
    queries: Vec<Vec<Keypoint>>,
    references: Vec<Vec<Keypoint>>,
    params: MatchFilterParams,
}

impl ScoringMethod for LocalFeatureMethod {
    fn score(&self, query: QueryId, candidates: &CandidateSet) -> Result<RawDistances> {
        let q = self
            .queries
            .get(query.0)
            .ok_or_else(|| Error::Mismatch(format!("query {query} out of range")))?;
        let mut out = ScoreMap::new();
        for id in candidates.iter() {
            let r = self.references.get(id.0).ok_or_else(|| {
                Error::Mismatch(format!("candidate {id} out of range"))
            })?;
            out.insert(id, match_distance(q, r, &self.params));
        }
        RawDistances::new(out)
    }
}

/// A dense query x reference matrix of raw distances.
pub struct ScoreMatrixMethod {
    rows: Vec<Vec<f64>>,
}

impl ScoreMatrixMethod {
    pub fn new(rows: Vec<Vec<f64>>) -> Self {
        ScoreMatrixMethod { rows }
    }
}

impl ScoringMethod for ScoreMatrixMethod {
    fn score(&self, query: QueryId, candidates: &CandidateSet) -> Result<RawDistances> {
        let row = self
            .rows
            .get(query.0)
            .ok_or_else(|| Error::Mismatch(format!("query {query} out of range")))?;
        let mut out = ScoreMap::new();
        for id in candidates.iter() {
            let d = *row
                .get(id.0)
                .ok_or_else(|| Error::Mismatch(format!("candidate {id} out of range")))?;
            out.insert(id, d);
        }
        RawDistances::new(out)
    }
}

/// Reads a headerless CSV with one row per query and one column per reference.
pub fn load_score_matrix(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Error::parse(path, e))?;
    let mut rows = Vec::new();
    for (r, record) in reader.records().enumerate() {
        let record = record.map_err(|e| Error::parse(path, e))?;
        let row = record
            .iter()
            .enumerate()
            .map(|(c, field)| {
                let v: f64 = field
                    .parse()
                    .map_err(|_| Error::parse(path, format!("row {r}, column {c}: `{field}` is not a number")))?;
                if !(v.is_finite() && v >= 0.0) {
                    return Err(Error::parse(
                        path,
                        format!("row {r}, column {c}: distance {v} must be finite and non-negative"),
                    ));
                }
                Ok(v)
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn image_files<'a>(list: &'a ImageList, which: &str, method: &str) -> Result<&'a [std::path::PathBuf]> {
    list.files().ok_or_else(|| {
        Error::Usage(format!(
            "method `{method}` needs images but the {which} list has none (feature-only dataset)"
        ))
    })
}

fn check_count(method: &str, which: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(Error::Mismatch(format!(
            "method `{method}`: {got} {which} entries but the dataset has {expected} {which} images"
        )));
    }
    Ok(())
}

/// Computes one global descriptor per image in list order.
pub fn extract_global(
    files: &[std::path::PathBuf],
    descriptor: impl Fn(&GrayImage) -> Result<FeatureVector> + Sync,
) -> Result<Vec<FeatureVector>> {
    files
        .par_iter()
        .map(|path| descriptor(&GrayImage::load(path)?))
        .collect()
}

/// HOG over the fixed 300x300 resample.
pub fn hog_descriptor(cell_px: usize) -> impl Fn(&GrayImage) -> Result<FeatureVector> + Sync {
    move |img| compute_hog(&img.resize_bilinear(HOG_INPUT_PX, HOG_INPUT_PX), cell_px)
}

/// Global descriptors for every image of one list, in list order. Only
/// `hog` and `gist` produce feature vectors.
pub fn extract_features(dataset: &Dataset, list: ListKind, kind: &MethodKind) -> Result<FeatureFile> {
    kind.validate()?;
    let label = kind.label();
    let files = image_files(dataset.list(list), &list.to_string(), label)?;
    if files.is_empty() {
        return Err(Error::Usage(format!("the {list} list is empty")));
    }
    let vectors = match kind {
        MethodKind::Hog { cell_px, .. } => extract_global(files, hog_descriptor(*cell_px))?,
        MethodKind::Gist { .. } => extract_global(files, compute_gist)?,
        _ => {
            return Err(Error::Usage(format!(
                "`{label}` does not produce feature vectors; extract supports hog and gist"
            )))
        }
    };
    Ok(FeatureFile {
        dim: vectors[0].dim(),
        vectors,
    })
}

fn bind_inner(kind: &MethodKind, name: &str, dataset: &Dataset) -> Result<Arc<dyn ScoringMethod>> {
    let n_refs = dataset.num_references();
    let n_queries = dataset.num_queries();
    Ok(match kind {
        MethodKind::Hog { cell_px, metric } => {
            let refs = image_files(&dataset.references, "reference", name)?;
            let queries = image_files(&dataset.queries, "query", name)?;
            let f = hog_descriptor(*cell_px);
            Arc::new(FeatureMethod::new(extract_global(queries, &f)?, extract_global(refs, &f)?, *metric))
        }
        MethodKind::Gist { metric } => {
            let refs = image_files(&dataset.references, "reference", name)?;
            let queries = image_files(&dataset.queries, "query", name)?;
            Arc::new(FeatureMethod::new(
                extract_global(queries, compute_gist)?,
                extract_global(refs, compute_gist)?,
                *metric,
            ))
        }
        MethodKind::LocalFeatures {
            match_threshold,
            max_ratio,
            top_n,
        } => {
            let params = MatchFilterParams::new(*match_threshold, *max_ratio, *top_n)?;
            let detect = |files: &[std::path::PathBuf]| -> Result<Vec<Vec<Keypoint>>> {
                files
                    .par_iter()
                    .map(|p| Ok(detect_keypoints(&GrayImage::load(p)?)))
                    .collect()
            };
            let refs = image_files(&dataset.references, "reference", name)?;
            let queries = image_files(&dataset.queries, "query", name)?;
            Arc::new(LocalFeatureMethod {
                queries: detect(queries)?,
                references: detect(refs)?,
                params,
            })
        }
        MethodKind::PrecomputedFeatures {
            query_features,
            reference_features,
            metric,
        } => {
            let q = load_feature_file(query_features)?;
            let r = load_feature_file(reference_features)?;
            check_count(name, "reference", r.len(), n_refs)?;
            check_count(name, "query", q.len(), n_queries)?;
            if q.dim != r.dim {
                return Err(Error::Mismatch(format!(
                    "method `{name}`: query features have dim {} but reference features have dim {}",
                    q.dim, r.dim
                )));
            }
            Arc::new(FeatureMethod::new(q.vectors, r.vectors, *metric))
        }
        MethodKind::PrecomputedScores { path } => {
            let rows = load_score_matrix(path)?;
            check_count(name, "query", rows.len(), n_queries)?;
            if let Some((i, row)) = rows.iter().enumerate().find(|(_, r)| r.len() != n_refs) {
                return Err(Error::Mismatch(format!(
                    "method `{name}`: score row {i} has {} columns but the dataset has {n_refs} reference images",
                    row.len()
                )));
            }
            Arc::new(ScoreMatrixMethod::new(rows))
        }
    })
}

/// Binds a method to a dataset, loading or computing everything it needs.
pub fn bind_method(spec: &MethodSpec, dataset: &Dataset) -> Result<Arc<dyn ScoringMethod>> {
    bind_inner(&spec.kind, &spec.name, dataset).map_err(|e| Error::Method {
        method: spec.name.clone(),
        source: Box::new(e),
    })
}
