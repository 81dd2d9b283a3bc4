use super::*;
use crate::config::{MethodSpec, Metric};
use crate::model::FeatureVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn ids(v: &[usize]) -> Vec<RefId> {
    v.iter().copied().map(RefId).collect()
}

fn norm(pairs: &[(usize, f64)]) -> NormalizedScores {
    NormalizedScores::new(pairs.iter().map(|&(k, v)| (RefId(k), v)).collect()).unwrap()
}

fn scores_spec(name: &str) -> MethodSpec {
    MethodSpec {
        name: name.into(),
        kind: MethodKind::PrecomputedScores {
            path: format!("{name}.csv").into(),
        },
    }
}

fn tier_spec(k: KOut, n_methods: usize) -> TierSpec {
    TierSpec {
        k_out: k,
        weight: 1.0,
        methods: (0..n_methods).map(|i| scores_spec(&format!("m{i}"))).collect(),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> Arc<dyn ScoringMethod> {
    Arc::new(ScoreMatrixMethod::new(rows))
}

#[test]
fn top_k_examples() {
    let s = norm(&[(0, 0.1), (1, 1.0), (2, 0.5), (3, 0.8), (4, 0.3)]);
    assert_eq!(top_k(&s, 2).as_slice(), ids(&[1, 3]).as_slice());
    assert_eq!(top_k(&s, 10).len(), 5);
    let tie = norm(&[(0, 0.7), (1, 0.7), (2, 0.1)]);
    assert_eq!(top_k(&tie, 1).as_slice(), ids(&[0]).as_slice());
}

#[test]
fn run_tier_single_method() {
    let m = matrix(vec![vec![0.9, 0.1, 0.5, 0.3, 0.7]]);
    let rec = run_tier(0, &tier_spec(KOut::Count(2), 1), &[m], QueryId(0), &CandidateSet::full(5)).unwrap();
    // normalized: {0: 0, 1: 1, 2: 0.5, 3: 0.75, 4: 0.25}
    assert_eq!(rec.selected.as_slice(), ids(&[1, 3]).as_slice());
    assert!((rec.per_method_scores[0].get(RefId(3)).unwrap() - 0.75).abs() < 1e-12);
}

#[test]
fn run_tier_union_of_methods() {
    let a = matrix(vec![vec![0.9, 0.1, 0.8, 0.2, 0.7]]); // top-2 {1, 3}
    let b = matrix(vec![vec![0.9, 0.8, 0.7, 0.1, 0.2]]); // top-2 {3, 4}
    let rec = run_tier(0, &tier_spec(KOut::Count(2), 2), &[a, b], QueryId(0), &CandidateSet::full(5)).unwrap();
    assert_eq!(rec.selected.as_slice(), ids(&[1, 3, 4]).as_slice());
}

#[test]
fn run_tier_forwards_everything_when_k_covers_input() {
    let a = matrix(vec![vec![0.9, 0.1, 0.8, 0.2, 0.7]]);
    let input = CandidateSet::from_ids(ids(&[0, 2, 4]));
    for k in [KOut::Count(3), KOut::Count(50), KOut::All] {
        let rec = run_tier(1, &tier_spec(k, 1), &[Arc::clone(&a)], QueryId(0), &input).unwrap();
        assert_eq!(rec.selected, input);
    }
}

#[test]
fn run_tier_names_failing_method() {
    let short = matrix(vec![vec![0.1, 0.2]]);
    let err = run_tier(0, &tier_spec(KOut::Count(1), 1), &[short], QueryId(0), &CandidateSet::full(5)).unwrap_err();
    assert!(err.to_string().contains("m0"), "{err}");
}

fn record(tier_index: usize, methods: Vec<NormalizedScores>, selected: &[usize]) -> TierRecord {
    TierRecord {
        tier_index,
        method_names: (0..methods.len()).map(|i| format!("m{i}")).collect(),
        per_method_scores: methods,
        selected: CandidateSet::from_ids(ids(selected)),
    }
}

#[test]
fn final_tier_mean_and_argmax() {
    let rec = record(
        2,
        vec![norm(&[(2, 1.0), (5, 0.0), (9, 0.5)]), norm(&[(2, 0.4), (5, 1.0), (9, 0.0)])],
        &[2],
    );
    let (best, mean) = final_tier_decision(&rec).unwrap();
    assert_eq!(best, RefId(2));
    assert!((mean[&RefId(2)] - 0.7).abs() < 1e-12);
    assert!((mean[&RefId(5)] - 0.5).abs() < 1e-12);
    assert!((mean[&RefId(9)] - 0.25).abs() < 1e-12);

    let single = norm(&[(1, 0.3), (4, 0.9)]);
    let (_, mean) = final_tier_decision(&record(0, vec![single.clone()], &[4])).unwrap();
    assert_eq!(&mean, single.as_map());

    let flat = record(0, vec![norm(&[(3, 0.5), (6, 0.5), (8, 0.5)])], &[3]);
    assert_eq!(final_tier_decision(&flat).unwrap().0, RefId(3));
}

fn hand_built_records() -> Vec<TierRecord> {
    vec![
        record(
            0,
            vec![
                norm(&[(0, 1.0), (1, 0.2), (2, 0.0), (3, 0.6), (4, 0.5)]),
                norm(&[(0, 0.0), (1, 0.8), (2, 1.0), (3, 0.3), (4, 0.4)]),
            ],
            &[1, 2, 3, 4],
        ),
        record(1, vec![norm(&[(1, 0.0), (2, 1.0), (3, 0.5), (4, 0.9)])], &[1, 3, 4]),
        record(
            2,
            vec![norm(&[(1, 1.0), (3, 0.0), (4, 0.5)]), norm(&[(1, 0.0), (3, 1.0), (4, 0.6)])],
            &[4],
        ),
    ]
}

#[test]
fn combined_matches_hand_evaluation() {
    // Worked by hand:
    //   tier 1 best-method {1: .8, 3: .6, 4: .5} -> rescaled {1, 1/3, 0}
    //   tier 2 {1: 0, 3: .5, 4: .9}              -> rescaled {0, 5/9, 1}
    //   tier 3 mean {1: .5, 3: .5, 4: .55}
    //   fused = 1*t3 + .75*t2 + .5*t1 = {1: 1.0, 3: 1.08333.., 4: 1.3}
    let (best, z) = combined_score(&hand_built_records(), &[0.5, 0.75, 1.0]).unwrap();
    assert_eq!(best, RefId(4));
    let expected = [(1, -0.8251204038343012), (3, -0.28699840133367044), (4, 1.1121188051679716)];
    for (id, v) in expected {
        assert!((z.get(RefId(id)).unwrap() - v).abs() < 1e-12);
    }
}

#[test]
fn combined_with_only_final_weight_equals_final_decision() {
    let records = hand_built_records();
    let (best, _) = combined_score(&records, &[0.0, 0.0, 1.0]).unwrap();
    assert_eq!(best, final_tier_decision(&records[2]).unwrap().0);
}

#[test]
fn combined_detects_nesting_violation() {
    let mut records = hand_built_records();
    records[1] = record(1, vec![norm(&[(1, 0.0), (2, 1.0)])], &[1]);
    let err = combined_score(&records, &[0.5, 0.75, 1.0]).unwrap_err();
    assert_eq!(err.category(), crate::ErrorCategory::Internal);
    assert!(combined_score(&records, &[1.0]).is_err());
}

/// Random nested records: tier t evaluates a shrinking subset.
pub(crate) fn random_records(rng: &mut ChaCha8Rng, n_tiers: usize, n_final: usize) -> Vec<TierRecord> {
    let mut sizes: Vec<usize> = (0..n_tiers).map(|t| n_final + (n_tiers - 1 - t) * rng.random_range(0..4)).collect();
    sizes[n_tiers - 1] = n_final;
    let mut records = Vec::new();
    for (t, &size) in sizes.iter().enumerate() {
        let n_methods = rng.random_range(1..=3);
        let methods = (0..n_methods)
            .map(|_| NormalizedScores::new((0..size).map(|i| (RefId(i), rng.random::<f64>())).collect()).unwrap())
            .collect();
        let next = sizes.get(t + 1).copied().unwrap_or(1);
        records.push(record(t, methods, &(0..next).collect::<Vec<_>>()));
    }
    records
}

#[test]
fn doubling_weights_keeps_argmax() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..500 {
        let n_final = rng.random_range(2..8);
        let records = random_records(&mut rng, 3, n_final);
        let w: Vec<f64> = (0..3).map(|_| rng.random_range(0.0..2.0)).collect();
        let w2: Vec<f64> = w.iter().map(|x| 2.0 * x).collect();
        assert_eq!(combined_score(&records, &w).unwrap().0, combined_score(&records, &w2).unwrap().0);
    }
}

fn euclid_pipeline(
    tiers: Vec<TierSpec>,
    queries: &[Vec<f64>],
    refs: &[Vec<f64>],
) -> Pipeline {
    let fv = |v: &Vec<f64>| FeatureVector::new(v.clone()).unwrap();
    let method: Arc<dyn ScoringMethod> = Arc::new(FeatureMethod::new(
        queries.iter().map(fv).collect(),
        refs.iter().map(fv).collect(),
        Metric::Euclidean,
    ));
    let bound = tiers.iter().map(|t| vec![Arc::clone(&method); t.methods.len()]).collect();
    let config = PipelineConfig::new(true, tiers).unwrap();
    Pipeline::from_methods(config, bound, refs.len(), queries.len()).unwrap()
}

fn random_vectors(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

#[test]
fn single_tier_is_global_nearest_neighbour() {
    let mut rng = ChaCha8Rng::seed_from_u64(50);
    let refs = random_vectors(&mut rng, 50, 16);
    let queries = random_vectors(&mut rng, 50, 16);
    let p = euclid_pipeline(vec![tier_spec(KOut::Count(1), 1)], &queries, &refs);
    for (qi, q) in queries.iter().enumerate() {
        let mut best = (0, f64::INFINITY);
        for (ri, r) in refs.iter().enumerate() {
            let d: f64 = q.iter().zip(r).map(|(a, b)| (a - b).powi(2)).sum();
            if d < best.1 {
                best = (ri, d);
            }
        }
        let res = p.run_query(QueryId(qi)).unwrap();
        assert_eq!(res.final_tier_best, RefId(best.0));
        assert_eq!(res.combined_best, Some(RefId(best.0)));
        assert_eq!(res.timings.len(), 1);
    }
}

#[test]
fn replicated_method_keeps_global_best() {
    let mut rng = ChaCha8Rng::seed_from_u64(51);
    let refs = random_vectors(&mut rng, 60, 8);
    let queries = random_vectors(&mut rng, 20, 8);
    let flat = euclid_pipeline(vec![tier_spec(KOut::Count(1), 1)], &queries, &refs);
    let deep = euclid_pipeline(
        vec![tier_spec(KOut::Count(20), 1), tier_spec(KOut::Count(5), 1), tier_spec(KOut::Count(1), 1)],
        &queries,
        &refs,
    );
    for q in 0..20 {
        let a = flat.run_query(QueryId(q)).unwrap();
        let b = deep.run_query(QueryId(q)).unwrap();
        assert_eq!(a.final_tier_best, b.final_tier_best);
        // nesting
        for w in b.tier_records.windows(2) {
            assert!(w[1].evaluated().is_subset_of(&w[0].evaluated()));
            assert_eq!(w[1].evaluated(), w[0].selected);
        }
        assert_eq!(b.tier_records[1].evaluated().len(), 20);
        assert_eq!(b.tier_records[2].evaluated().len(), 5);
    }
}

#[test]
fn combined_flag_off_leaves_combined_empty() {
    let mut rng = ChaCha8Rng::seed_from_u64(52);
    let refs = random_vectors(&mut rng, 10, 4);
    let queries = random_vectors(&mut rng, 2, 4);
    let p = euclid_pipeline(vec![tier_spec(KOut::Count(3), 1), tier_spec(KOut::Count(1), 1)], &queries, &refs);
    let cfg = PipelineConfig::new(false, p.config().tiers.clone()).unwrap();
    let p = Pipeline::from_methods(cfg, p.methods.clone(), 10, 2).unwrap();
    let res = p.run_query(QueryId(1)).unwrap();
    assert!(res.combined_best.is_none() && res.combined_scores.is_none());
    assert!(p.run_query(QueryId(2)).is_err());
}

#[test]
fn runs_are_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(53);
    let refs = random_vectors(&mut rng, 30, 6);
    let queries = random_vectors(&mut rng, 5, 6);
    let p = euclid_pipeline(vec![tier_spec(KOut::Count(10), 2), tier_spec(KOut::Count(1), 1)], &queries, &refs);
    for q in 0..5 {
        let mut a = p.run_query(QueryId(q)).unwrap();
        let mut b = p.run_query(QueryId(q)).unwrap();
        a.timings.clear();
        b.timings.clear();
        assert_eq!(a, b);
    }
}

fn random_matrix(rng: &mut ChaCha8Rng, n_queries: usize, n_refs: usize) -> Arc<dyn ScoringMethod> {
    matrix((0..n_queries).map(|_| (0..n_refs).map(|_| rng.random_range(0.0..10.0)).collect()).collect())
}

#[test]
fn default_shape_bounds_tier_inputs() {
    let mut rng = ChaCha8Rng::seed_from_u64(54);
    let (n_refs, n_queries) = (400, 10);
    let tiers = vec![
        tier_spec(KOut::Count(100), 2),
        tier_spec(KOut::Count(10), 2),
        tier_spec(KOut::Count(1), 1),
    ];
    let methods = tiers
        .iter()
        .map(|t| (0..t.methods.len()).map(|_| random_matrix(&mut rng, n_queries, n_refs)).collect())
        .collect();
    let p = Pipeline::from_methods(PipelineConfig::new(true, tiers).unwrap(), methods, n_refs, n_queries).unwrap();
    for q in 0..n_queries {
        let res = p.run_query(QueryId(q)).unwrap();
        let inputs: Vec<usize> = res.tier_records.iter().map(|r| r.evaluated().len()).collect();
        assert_eq!(inputs[0], n_refs);
        assert!((100..=200).contains(&inputs[1]), "{inputs:?}");
        assert!((10..=20).contains(&inputs[2]), "{inputs:?}");
    }
}

/// Fusion over the whole database, computed directly from raw distances.
fn parallel_fusion(raw: &[Vec<Vec<f64>>], weights: &[f64]) -> usize {
    let n = raw[0][0].len();
    let goodness = |d: &Vec<f64>| -> Vec<f64> {
        let (lo, hi) = d.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
        d.iter().map(|&x| if hi == lo { 1.0 } else { (x - hi) / (lo - hi) }).collect()
    };
    let mut fused = vec![0.0; n];
    let last = raw.len() - 1;
    for (t, tier) in raw.iter().enumerate() {
        let g: Vec<Vec<f64>> = tier.iter().map(goodness).collect();
        let col: Vec<f64> = if t == last {
            (0..n).map(|i| g.iter().map(|m| m[i]).sum::<f64>() / g.len() as f64).collect()
        } else {
            let best: Vec<f64> = (0..n).map(|i| g.iter().map(|m| m[i]).fold(f64::NEG_INFINITY, f64::max)).collect();
            let (lo, hi) = best.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &x| (a.min(x), b.max(x)));
            best.iter().map(|&x| if hi == lo { 1.0 } else { (x - lo) / (hi - lo) }).collect()
        };
        for i in 0..n {
            fused[i] += weights[t] * col[i];
        }
    }
    let mut best = 0;
    for i in 1..n {
        if fused[i] > fused[best] {
            best = i;
        }
    }
    best
}

#[test]
fn all_schedule_equals_parallel_fusion() {
    let mut rng = ChaCha8Rng::seed_from_u64(55);
    let (n_refs, n_queries) = (30, 40);
    let layout = [2, 1, 2];
    let raw: Vec<Vec<Vec<Vec<f64>>>> = layout
        .iter()
        .map(|&m| {
            (0..m)
                .map(|_| (0..n_queries).map(|_| (0..n_refs).map(|_| rng.random_range(0.0..5.0)).collect()).collect())
                .collect()
        })
        .collect();
    let tiers: Vec<TierSpec> = layout.iter().map(|&m| tier_spec(KOut::All, m)).collect();
    let methods = raw
        .iter()
        .map(|tier| tier.iter().map(|m| matrix(m.clone())).collect())
        .collect();
    let config = PipelineConfig::new(true, tiers).unwrap();
    let weights = vec![0.5, 0.75, 1.0];
    let config = PipelineConfig {
        tiers: config
            .tiers
            .into_iter()
            .zip(&weights)
            .map(|(t, &w)| TierSpec { weight: w, ..t })
            .collect(),
        ..config
    };
    let p = Pipeline::from_methods(config, methods, n_refs, n_queries).unwrap();
    for q in 0..n_queries {
        let per_query: Vec<Vec<Vec<f64>>> =
            raw.iter().map(|tier| tier.iter().map(|m| m[q].clone()).collect()).collect();
        let res = p.run_query(QueryId(q)).unwrap();
        assert!(res.tier_records.iter().all(|r| r.evaluated().len() == n_refs));
        assert_eq!(res.combined_best, Some(RefId(parallel_fusion(&per_query, &weights))));
    }
}

#[test]
fn affine_change_of_one_method_keeps_final_best() {
    let mut rng = ChaCha8Rng::seed_from_u64(56);
    let (n_refs, n_queries) = (25, 10);
    let rows: Vec<Vec<Vec<f64>>> = (0..3)
        .map(|_| (0..n_queries).map(|_| (0..n_refs).map(|_| rng.random_range(0.0..5.0)).collect()).collect())
        .collect();
    let scaled: Vec<Vec<f64>> = rows[1].iter().map(|r| r.iter().map(|x| 3.5 * x + 2.0).collect()).collect();
    let build = |second: Vec<Vec<f64>>| {
        let tiers = vec![tier_spec(KOut::Count(8), 2), tier_spec(KOut::Count(1), 1)];
        let methods = vec![vec![matrix(rows[0].clone()), matrix(second)], vec![matrix(rows[2].clone())]];
        Pipeline::from_methods(PipelineConfig::new(true, tiers).unwrap(), methods, n_refs, n_queries).unwrap()
    };
    let a = build(rows[1].clone());
    let b = build(scaled);
    for q in 0..n_queries {
        assert_eq!(
            a.run_query(QueryId(q)).unwrap().final_tier_best,
            b.run_query(QueryId(q)).unwrap().final_tier_best
        );
    }
}
