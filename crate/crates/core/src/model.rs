//! Identifiers, candidate sets and score vectors shared by every stage.
//!
//! Query and reference images live in separate index spaces, so they get
//! separate newtypes. Score vectors are ordered maps keyed by [`RefId`]; the
//! ordering gives deterministic iteration and makes "lowest id wins" tie
//! breaking a plain forward scan.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Position of an image in the ordered query list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct QueryId(pub usize);

/// Position of an image in the ordered reference list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RefId(pub usize);

impl fmt::Display for QueryId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl fmt::Display for RefId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Strictly ascending, duplicate-free set of reference ids.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "Vec<RefId>", into = "Vec<RefId>")]
pub struct CandidateSet(Vec<RefId>);

impl CandidateSet {
    /// Every reference in a database of `n` images.
    pub fn full(n: usize) -> Self {
        CandidateSet((0..n).map(RefId).collect())
    }

    /// Builds a set from ids in any order, dropping duplicates.
    pub fn from_ids(ids: impl IntoIterator<Item = RefId>) -> Self {
        let mut ids: Vec<RefId> = ids.into_iter().collect();
        ids.sort_unstable();
        ids.dedup();
        CandidateSet(ids)
    }

    pub fn union<'a>(sets: impl IntoIterator<Item = &'a CandidateSet>) -> Self {
        CandidateSet::from_ids(sets.into_iter().flat_map(|s| s.0.iter().copied()))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, id: RefId) -> bool {
        self.0.binary_search(&id).is_ok()
    }

    pub fn is_subset_of(&self, other: &CandidateSet) -> bool {
        self.0.iter().all(|&id| other.contains(id))
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = RefId> + '_ {
        self.0.iter().copied()
    }

    pub fn as_slice(&self) -> &[RefId] {
        &self.0
    }

    pub fn max_id(&self) -> Option<RefId> {
        self.0.last().copied()
    }
}

impl TryFrom<Vec<RefId>> for CandidateSet {
    type Error = Error;

    fn try_from(ids: Vec<RefId>) -> Result<Self> {
        if ids.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::invalid(
                "candidate set",
                "ids must be strictly ascending",
            ));
        }
        Ok(CandidateSet(ids))
    }
}

impl From<CandidateSet> for Vec<RefId> {
    fn from(set: CandidateSet) -> Self {
        set.0
    }
}

impl FromIterator<RefId> for CandidateSet {
    fn from_iter<I: IntoIterator<Item = RefId>>(iter: I) -> Self {
        CandidateSet::from_ids(iter)
    }
}

pub type ScoreMap = BTreeMap<RefId, f64>;

/// Id of the largest value; ties go to the lowest id.
pub fn argmax(scores: &ScoreMap) -> Option<RefId> {
    let mut best: Option<(RefId, f64)> = None;
    for (&id, &v) in scores {
        match best {
            Some((_, b)) if v <= b => {}
            _ => best = Some((id, v)),
        }
    }
    best.map(|(id, _)| id)
}

/// Candidate ids ordered best-first (descending score, ascending id on ties).
pub fn ranking(scores: &ScoreMap) -> Vec<RefId> {
    let mut entries: Vec<(RefId, f64)> = scores.iter().map(|(&k, &v)| (k, v)).collect();
    entries.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    entries.into_iter().map(|(id, _)| id).collect()
}

macro_rules! score_vector {
    ($(#[$meta:meta])* $name:ident, $what:literal, $check:expr) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
        #[serde(try_from = "ScoreMap", into = "ScoreMap")]
        pub struct $name(ScoreMap);

        impl $name {
            pub fn new(entries: ScoreMap) -> Result<Self> {
                let check: fn(f64) -> bool = $check;
                if let Some((id, v)) = entries.iter().find(|(_, &v)| !check(v)) {
                    return Err(Error::invalid(
                        $what,
                        format!("entry {} has out-of-range value {}", id, v),
                    ));
                }
                Ok($name(entries))
            }

            pub fn as_map(&self) -> &ScoreMap {
                &self.0
            }

            pub fn into_map(self) -> ScoreMap {
                self.0
            }

            pub fn get(&self, id: RefId) -> Option<f64> {
                self.0.get(&id).copied()
            }

            pub fn len(&self) -> usize {
                self.0.len()
            }

            pub fn is_empty(&self) -> bool {
                self.0.is_empty()
            }

            pub fn iter(&self) -> impl Iterator<Item = (RefId, f64)> + '_ {
                self.0.iter().map(|(&k, &v)| (k, v))
            }

            /// The key set as a candidate set.
            pub fn candidates(&self) -> CandidateSet {
                CandidateSet(self.0.keys().copied().collect())
            }

            pub fn argmax(&self) -> Option<RefId> {
                argmax(&self.0)
            }
        }

        impl TryFrom<ScoreMap> for $name {
            type Error = Error;

            fn try_from(entries: ScoreMap) -> Result<Self> {
                $name::new(entries)
            }
        }

        impl From<$name> for ScoreMap {
            fn from(v: $name) -> Self {
                v.0
            }
        }
    };
}

score_vector!(
    /// Raw per-candidate difference scores from one method (lower is more similar).
    RawDistances,
    "raw distances",
    |v| v.is_finite() && v >= 0.0
);

score_vector!(
    /// Goodness scores in `[0, 1]`, 1 being the best match.
    NormalizedScores,
    "normalized scores",
    |v| (0.0..=1.0).contains(&v)
);

score_vector!(
    /// Zero-mean, unit-variance scores (unbounded).
    StandardizedScores,
    "standardized scores",
    |v: f64| v.is_finite()
);

/// A finite, non-empty feature vector held at working precision.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector(Vec<f64>);

impl FeatureVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("feature vector", "dimension must be positive"));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(
                "feature vector",
                format!("non-finite value at position {i}"),
            ));
        }
        Ok(FeatureVector(values))
    }

    pub fn from_f32(values: &[f32]) -> Result<Self> {
        Self::new(values.iter().map(|&v| f64::from(v)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn into_values(self) -> Vec<f64> {
        self.0
    }
}

/// Everything one tier produced for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierRecord {
    pub tier_index: usize,
    pub method_names: Vec<String>,
    /// One vector per method, all keyed by the candidates this tier evaluated.
    pub per_method_scores: Vec<NormalizedScores>,
    /// Candidates forwarded to the next tier.
    pub selected: CandidateSet,
}

impl TierRecord {
    /// The candidate set this tier scored.
    pub fn evaluated(&self) -> CandidateSet {
        self.per_method_scores
            .first()
            .map(NormalizedScores::candidates)
            .unwrap_or_default()
    }

    /// Checks key-set equality across methods and `selected ⊆ evaluated`.
    pub fn validate(&self) -> Result<()> {
        let Some(first) = self.per_method_scores.first() else {
            return Err(Error::invalid("tier record", "no method scores"));
        };
        if self.method_names.len() != self.per_method_scores.len() {
            return Err(Error::invalid(
                "tier record",
                format!(
                    "{} method names for {} score vectors",
                    self.method_names.len(),
                    self.per_method_scores.len()
                ),
            ));
        }
        for (i, scores) in self.per_method_scores.iter().enumerate().skip(1) {
            if !scores.as_map().keys().eq(first.as_map().keys()) {
                return Err(Error::invalid(
                    "tier record",
                    format!(
                        "tier {}: method {} scored a different candidate set than method 0",
                        self.tier_index, i
                    ),
                ));
            }
        }
        if let Some(id) = self.selected.iter().find(|id| first.get(*id).is_none()) {
            return Err(Error::invalid(
                "tier record",
                format!(
                    "tier {}: selected candidate {} was never evaluated",
                    self.tier_index, id
                ),
            ));
        }
        Ok(())
    }
}

/// Outcome of running the whole hierarchy for one query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchResult {
    pub query: QueryId,
    /// Argmax of the final tier's mean score.
    pub final_tier_best: RefId,
    /// Mean normalized score over the final tier's methods.
    pub final_scores: ScoreMap,
    pub combined_best: Option<RefId>,
    pub combined_scores: Option<StandardizedScores>,
    pub tier_records: Vec<TierRecord>,
    /// Wall-clock seconds spent in each tier.
    pub timings: Vec<f64>,
}
