//! Score-space transforms.
//!
//! Every transform works over exactly the candidates it is handed: the full
//! database in the first tier, the forwarded subset later on.

use crate::error::{Error, Result};
use crate::model::{NormalizedScores, RawDistances, ScoreMap, StandardizedScores};

fn extrema(values: impl Iterator<Item = f64>) -> (f64, f64) {
    values.fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)))
}

/// Maps distances to goodness in `[0, 1]`: the smallest distance becomes 1,
/// the largest 0. If every distance is equal, every candidate scores 1.
pub fn min_max_normalize(raw: &RawDistances) -> Result<NormalizedScores> {
    if raw.is_empty() {
        return Err(Error::invalid("raw distances", "cannot normalize an empty vector"));
    }
    let (min, max) = extrema(raw.iter().map(|(_, v)| v));
    let out: ScoreMap = if min == max {
        raw.iter().map(|(id, _)| (id, 1.0)).collect()
    } else {
        raw.iter()
            .map(|(id, d)| (id, ((d - max) / (min - max)).clamp(0.0, 1.0)))
            .collect()
    };
    NormalizedScores::new(out)
}

/// Rescales goodness scores so the best is 1 and the worst 0. If every score
/// is equal, every candidate scores 1.
pub fn renormalize_01(scores: &NormalizedScores) -> Result<NormalizedScores> {
    renormalize_map(scores.as_map()).and_then(NormalizedScores::new)
}

pub(crate) fn renormalize_map(scores: &ScoreMap) -> Result<ScoreMap> {
    if scores.is_empty() {
        return Err(Error::invalid("scores", "cannot renormalize an empty vector"));
    }
    let (min, max) = extrema(scores.values().copied());
    Ok(if min == max {
        scores.keys().map(|&id| (id, 1.0)).collect()
    } else {
        scores
            .iter()
            .map(|(&id, &s)| (id, ((s - min) / (max - min)).clamp(0.0, 1.0)))
            .collect()
    })
}

/// Subtracts the mean and divides by the sample (n - 1) standard deviation.
/// With one entry or zero spread the mean-subtracted vector is returned.
pub fn standardize(scores: &ScoreMap) -> Result<StandardizedScores> {
    if scores.is_empty() {
        return Err(Error::invalid("scores", "cannot standardize an empty vector"));
    }
    let n = scores.len() as f64;
    let mean = scores.values().sum::<f64>() / n;
    let sigma = if scores.len() > 1 {
        (scores.values().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    let out: ScoreMap = if sigma > 0.0 {
        scores.iter().map(|(&id, &v)| (id, (v - mean) / sigma)).collect()
    } else {
        scores.iter().map(|(&id, &v)| (id, v - mean)).collect()
    };
    StandardizedScores::new(out)
}

/// Per-candidate maximum across a tier's methods.
pub fn tier_max_across_methods(per_method: &[NormalizedScores]) -> Result<NormalizedScores> {
    let (first, rest) = per_method
        .split_first()
        .ok_or_else(|| Error::invalid("scores", "no method scores to combine"))?;
    let mut out = first.as_map().clone();
    for (i, scores) in rest.iter().enumerate() {
        if !scores.as_map().keys().eq(out.keys()) {
            return Err(Error::Mismatch(format!(
                "method {} scored a different candidate set than method 0",
                i + 1
            )));
        }
        for (id, v) in scores.iter() {
            let slot = out.get_mut(&id).expect("key sets checked equal");
            *slot = slot.max(v);
        }
    }
    NormalizedScores::new(out)
}
