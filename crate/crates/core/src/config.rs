//! Pipeline configuration: tiers, their methods, candidate counts and
//! cross-tier weights, read from TOML.
//!
//! ```toml
//! combined = true
//!
//! [[tiers]]
//! k_out = 100
//! weight = 0.5
//! [[tiers.methods]]
//! kind = "precomputed-features"
//! name = "netvlad"
//! query_features = "netvlad.queries.hmpf"
//! reference_features = "netvlad.references.hmpf"
//! metric = "euclidean"
//! ```
//!
//! Relative paths resolve against the directory holding the config file.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Side length every image is resized to before HOG extraction.
pub const HOG_INPUT_PX: usize = 300;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Metric {
    #[default]
    Euclidean,
    CosineDistance,
}

/// How many candidates each method of a tier forwards.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KOut {
    /// Forward every candidate the tier received.
    All,
    Count(usize),
}

impl KOut {
    pub fn resolve(self, available: usize) -> usize {
        match self {
            KOut::All => available,
            KOut::Count(k) => k.min(available),
        }
    }
}

impl fmt::Display for KOut {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KOut::All => f.write_str("all"),
            KOut::Count(k) => write!(f, "{k}"),
        }
    }
}

impl FromStr for KOut {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s.eq_ignore_ascii_case("all") {
            return Ok(KOut::All);
        }
        match s.parse::<usize>() {
            Ok(0) | Err(_) => Err(Error::Usage(format!(
                "k_out must be a positive integer or `all`, got `{s}`"
            ))),
            Ok(k) => Ok(KOut::Count(k)),
        }
    }
}

impl Serialize for KOut {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            KOut::All => s.serialize_str("all"),
            KOut::Count(k) => s.serialize_u64(*k as u64),
        }
    }
}

impl<'de> Deserialize<'de> for KOut {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Int(i64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Int(k) if k >= 1 => Ok(KOut::Count(k as usize)),
            Repr::Int(k) => Err(serde::de::Error::custom(format!(
                "k_out must be at least 1, got {k}"
            ))),
            Repr::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// Parses a comma-separated schedule such as `50,10,all`.
pub fn parse_schedule(s: &str) -> Result<Vec<KOut>> {
    s.split(',').map(KOut::from_str).collect()
}

fn default_cell_px() -> usize {
    30
}
fn default_match_threshold() -> f64 {
    20.0
}
fn default_max_ratio() -> f64 {
    0.7
}
fn default_top_n() -> usize {
    20
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MethodKind {
    Hog {
        #[serde(default = "default_cell_px")]
        cell_px: usize,
        #[serde(default)]
        metric: Metric,
    },
    Gist {
        #[serde(default)]
        metric: Metric,
    },
    LocalFeatures {
        #[serde(default = "default_match_threshold")]
        match_threshold: f64,
        #[serde(default = "default_max_ratio")]
        max_ratio: f64,
        #[serde(default = "default_top_n")]
        top_n: usize,
    },
    PrecomputedFeatures {
        query_features: PathBuf,
        reference_features: PathBuf,
        #[serde(default)]
        metric: Metric,
    },
    PrecomputedScores {
        path: PathBuf,
    },
}

impl MethodKind {
    pub fn label(&self) -> &'static str {
        match self {
            MethodKind::Hog { .. } => "hog",
            MethodKind::Gist { .. } => "gist",
            MethodKind::LocalFeatures { .. } => "local-features",
            MethodKind::PrecomputedFeatures { .. } => "precomputed-features",
            MethodKind::PrecomputedScores { .. } => "precomputed-scores",
        }
    }

    pub(crate) fn validate(&self) -> Result<()> {
        match *self {
            MethodKind::Hog { cell_px, .. } => {
                if cell_px == 0 || !HOG_INPUT_PX.is_multiple_of(cell_px) || HOG_INPUT_PX / cell_px < 2 {
                    return Err(Error::invalid(
                        "method",
                        format!(
                            "hog cell_px {cell_px} must divide {HOG_INPUT_PX} into at least 2 cells"
                        ),
                    ));
                }
            }
            MethodKind::LocalFeatures {
                match_threshold,
                max_ratio,
                top_n,
            } => {
                if !(match_threshold > 0.0 && match_threshold <= 100.0) {
                    return Err(Error::invalid(
                        "method",
                        format!("match_threshold {match_threshold} outside (0, 100]"),
                    ));
                }
                if !(max_ratio > 0.0 && max_ratio <= 1.0) {
                    return Err(Error::invalid(
                        "method",
                        format!("max_ratio {max_ratio} outside (0, 1]"),
                    ));
                }
                if top_n == 0 {
                    return Err(Error::invalid("method", "top_n must be positive"));
                }
            }
            _ => {}
        }
        Ok(())
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        match self {
            MethodKind::PrecomputedFeatures {
                query_features,
                reference_features,
                ..
            } => {
                join(query_features);
                join(reference_features);
            }
            MethodKind::PrecomputedScores { path } => join(path),
            _ => {}
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: MethodKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TierSpec {
    pub k_out: KOut,
    pub weight: f64,
    pub methods: Vec<MethodSpec>,
}

/// A validated pipeline. Construct through [`PipelineConfig::new`] or the
/// loaders so the invariants hold.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PipelineConfig {
    pub combined: bool,
    pub tiers: Vec<TierSpec>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default = "default_true")]
    combined: bool,
    #[serde(default)]
    tiers: Vec<RawTier>,
}

fn default_true() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTier {
    k_out: KOut,
    weight: Option<f64>,
    #[serde(default)]
    methods: Vec<RawMethod>,
}

#[derive(Deserialize)]
struct RawMethod {
    name: Option<String>,
    #[serde(flatten)]
    kind: MethodKind,
}

/// Default cross-tier weight: 1 for the final tier, 0.25 less for each tier
/// before it, never below zero.
pub fn default_weight(tier: usize, tier_count: usize) -> f64 {
    (1.0 - 0.25 * (tier_count - 1 - tier) as f64).max(0.0)
}

impl PipelineConfig {
    pub fn new(combined: bool, tiers: Vec<TierSpec>) -> Result<Self> {
        let config = PipelineConfig { combined, tiers };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tiers.is_empty() {
            return Err(Error::invalid("pipeline", "at least one tier is required"));
        }
        for (t, tier) in self.tiers.iter().enumerate() {
            if tier.methods.is_empty() {
                return Err(Error::invalid("pipeline", format!("tier {} has no methods", t + 1)));
            }
            if let KOut::Count(0) = tier.k_out {
                return Err(Error::invalid("pipeline", format!("tier {} has k_out 0", t + 1)));
            }
            if !(tier.weight.is_finite() && tier.weight >= 0.0) {
                return Err(Error::invalid(
                    "pipeline",
                    format!("tier {} weight {} must be finite and non-negative", t + 1, tier.weight),
                ));
            }
            for m in &tier.methods {
                m.kind.validate()?;
            }
        }
        check_schedule(&self.schedule())?;
        Ok(())
    }

    pub fn schedule(&self) -> Vec<KOut> {
        self.tiers.iter().map(|t| t.k_out).collect()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.tiers.iter().map(|t| t.weight).collect()
    }

    /// A copy of this config with each tier's `k_out` replaced.
    pub fn with_schedule(&self, schedule: &[KOut]) -> Result<Self> {
        if schedule.len() != self.tiers.len() {
            return Err(Error::Usage(format!(
                "schedule has {} entries for {} tiers",
                schedule.len(),
                self.tiers.len()
            )));
        }
        let mut out = self.clone();
        for (tier, &k) in out.tiers.iter_mut().zip(schedule) {
            tier.k_out = k;
        }
        out.validate()?;
        Ok(out)
    }

    pub fn from_toml_str(text: &str, base_dir: &Path, origin: &Path) -> Result<Self> {
        let raw: RawConfig = toml::from_str(text).map_err(|e| Error::parse(origin, e))?;
        let tier_count = raw.tiers.len();
        let mut used_names: Vec<String> = Vec::new();
        let mut tiers = Vec::with_capacity(tier_count);
        for (t, rt) in raw.tiers.into_iter().enumerate() {
            let mut methods = Vec::with_capacity(rt.methods.len());
            for rm in rt.methods {
                let mut kind = rm.kind;
                kind.resolve_paths(base_dir);
                let base = rm.name.unwrap_or_else(|| kind.label().to_string());
                let mut name = base.clone();
                let mut n = 2;
                while used_names.contains(&name) {
                    name = format!("{base}-{n}");
                    n += 1;
                }
                used_names.push(name.clone());
                methods.push(MethodSpec { name, kind });
            }
            tiers.push(TierSpec {
                k_out: rt.k_out,
                weight: rt.weight.unwrap_or_else(|| default_weight(t, tier_count)),
                methods,
            });
        }
        PipelineConfig::new(raw.combined, tiers)
    }

    pub fn to_toml_string(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Internal(format!("serializing config: {e}")))
    }
}

/// Explicit counts must strictly shrink from one tier to the next. `all`
/// never grows the pool, so it may appear anywhere.
pub fn check_schedule(schedule: &[KOut]) -> Result<()> {
    for (t, pair) in schedule.windows(2).enumerate() {
        if let (KOut::Count(a), KOut::Count(b)) = (pair[0], pair[1]) {
            if b >= a {
                return Err(Error::invalid(
                    "pipeline",
                    format!(
                        "k_out must shrink between tiers: tier {} forwards {a}, tier {} forwards {b}",
                        t + 1,
                        t + 2
                    ),
                ));
            }
        }
    }
    Ok(())
}

pub fn load_config(path: impl AsRef<Path>) -> Result<PipelineConfig> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().unwrap_or_else(|| Path::new("."));
    PipelineConfig::from_toml_str(&text, base, path)
}
