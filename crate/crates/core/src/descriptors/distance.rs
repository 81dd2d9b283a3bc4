use crate::config::Metric;
use crate::error::{Error, Result};
use crate::model::{CandidateSet, FeatureVector, RawDistances, ScoreMap};

fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

fn cosine_distance(a: &[f64], b: &[f64], norm_a: f64, norm_b: f64) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    // sqrt(na * nb) rather than sqrt(na) * sqrt(nb): identical vectors then
    // give a cosine of exactly 1.
    (1.0 - dot / (norm_a * norm_b).sqrt()).clamp(0.0, 2.0)
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// Distance from `query` to each candidate reference vector.
pub fn score_by_features(
    query: &FeatureVector,
    references: &[FeatureVector],
    candidates: &CandidateSet,
    metric: Metric,
) -> Result<RawDistances> {
    let q = query.values();
    let q_norm = sq_norm(q);
    if metric == Metric::CosineDistance && q_norm == 0.0 {
        return Err(Error::invalid("feature vector", "zero query vector under cosine distance"));
    }
    let mut out = ScoreMap::new();
    for id in candidates.iter() {
        let r = references.get(id.0).ok_or_else(|| {
            Error::Mismatch(format!(
                "candidate {} out of range for {} reference vectors",
                id,
                references.len()
            ))
        })?;
        if r.dim() != query.dim() {
            return Err(Error::Mismatch(format!(
                "reference {} has dim {}, query has dim {}",
                id,
                r.dim(),
                query.dim()
            )));
        }
        let d = match metric {
            Metric::Euclidean => euclidean(q, r.values()),
            Metric::CosineDistance => {
                let r_norm = sq_norm(r.values());
                if r_norm == 0.0 {
                    return Err(Error::invalid(
                        "feature vector",
                        format!("zero reference vector {id} under cosine distance"),
                    ));
                }
                cosine_distance(q, r.values(), q_norm, r_norm)
            }
        };
        out.insert(id, d);
    }
    RawDistances::new(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::RefId;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn fv(v: &[f64]) -> FeatureVector {
        FeatureVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn euclidean_example() {
        let refs = vec![fv(&[3.0, 4.0]), fv(&[1.0, 0.0]), fv(&[0.0, 0.0])];
        let d = score_by_features(&fv(&[0.0, 0.0]), &refs, &CandidateSet::full(3), Metric::Euclidean)
            .unwrap();
        assert_eq!(d.get(RefId(0)), Some(5.0));
        assert_eq!(d.get(RefId(1)), Some(1.0));
        assert_eq!(d.get(RefId(2)), Some(0.0));
    }

    #[test]
    fn identity_is_zero_under_both_metrics() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..200 {
            let v: Vec<f64> = (0..16).map(|_| rng.random_range(-5.0..5.0)).collect();
            let refs = vec![fv(&v)];
            for metric in [Metric::Euclidean, Metric::CosineDistance] {
                let d = score_by_features(&fv(&v), &refs, &CandidateSet::full(1), metric).unwrap();
                assert_eq!(d.get(RefId(0)), Some(0.0), "{metric:?}");
            }
        }
    }

    #[test]
    fn cosine_range_and_errors() {
        let refs = vec![fv(&[1.0, 0.0]), fv(&[-1.0, 0.0]), fv(&[0.0, 0.0])];
        let d = score_by_features(
            &fv(&[2.0, 0.0]),
            &refs,
            &CandidateSet::from_ids([RefId(0), RefId(1)]),
            Metric::CosineDistance,
        )
        .unwrap();
        assert_eq!(d.get(RefId(1)), Some(2.0));
        assert!(score_by_features(&fv(&[1.0, 0.0]), &refs, &CandidateSet::full(3), Metric::CosineDistance).is_err());
        assert!(score_by_features(&fv(&[0.0, 0.0]), &refs, &CandidateSet::full(1), Metric::CosineDistance).is_err());
        assert!(score_by_features(&fv(&[1.0]), &refs, &CandidateSet::full(1), Metric::Euclidean).is_err());
        assert!(score_by_features(&fv(&[1.0, 0.0]), &refs, &CandidateSet::full(4), Metric::Euclidean).is_err());
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let refs: Vec<Vec<f64>> = (0..10)
            .map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect())
            .collect();
        let query: Vec<f64> = (0..16).map(|_| rng.random_range(-1.0..1.0)).collect();
        let ref_vecs: Vec<FeatureVector> = refs.iter().map(|r| fv(r)).collect();
        let d = score_by_features(&fv(&query), &ref_vecs, &CandidateSet::full(10), Metric::Euclidean).unwrap();
        for (i, r) in refs.iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..16 {
                let diff = query[j] - r[j];
                acc += diff * diff;
            }
            assert!((d.get(RefId(i)).unwrap() - acc.sqrt()).abs() <= 1e-12);
        }
        let c = score_by_features(&fv(&query), &ref_vecs, &CandidateSet::full(10), Metric::CosineDistance).unwrap();
        for (i, r) in refs.iter().enumerate() {
            let (mut dot, mut nq, mut nr) = (0.0, 0.0, 0.0);
            for j in 0..16 {
                dot += query[j] * r[j];
                nq += query[j] * query[j];
                nr += r[j] * r[j];
            }
            let expected = 1.0 - dot / (nq.sqrt() * nr.sqrt());
            assert!((c.get(RefId(i)).unwrap() - expected).abs() <= 1e-12);
        }
    }

    proptest! {
        #[test]
        fn permutation_equivariant(seed in any::<u64>(), n in 2usize..12) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let refs: Vec<FeatureVector> = (0..n)
                .map(|_| fv(&(0..4).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>()))
                .collect();
            let q = fv(&(0..4).map(|_| rng.random_range(-1.0..1.0)).collect::<Vec<_>>());
            let mut perm: Vec<usize> = (0..n).collect();
            for i in (1..n).rev() {
                perm.swap(i, rng.random_range(0..=i));
            }
            // permuted[perm[i]] = refs[i]
            let mut permuted = refs.clone();
            for (i, &p) in perm.iter().enumerate() {
                permuted[p] = refs[i].clone();
            }
            let subset: Vec<usize> = (0..n).filter(|i| i % 2 == 0).collect();
            let cand = CandidateSet::from_ids(subset.iter().map(|&i| RefId(i)));
            let cand_perm = CandidateSet::from_ids(subset.iter().map(|&i| RefId(perm[i])));
            let a = score_by_features(&q, &refs, &cand, Metric::Euclidean).unwrap();
            let b = score_by_features(&q, &permuted, &cand_perm, Metric::Euclidean).unwrap();
            for &i in &subset {
                prop_assert_eq!(a.get(RefId(i)), b.get(RefId(perm[i])));
            }
        }
    }
}
