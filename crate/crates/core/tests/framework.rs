use std::collections::BTreeSet;

use predsub_core::baseline::{eager_greedy, lazy_greedy};
use predsub_core::engine::{Engine, EngineParams};
use predsub_core::generate::{coverage, gen_stream, CoverageParams, Corruption, FunctionFamily, Lifetime, StreamParams};
use predsub_core::robust::robust1_from_dynamic;
use predsub_core::scheduler::{precompute, run_framework, FrameworkConfig, Precomputed, Variant};
use predsub_core::{CountingOracle, CoverageOracle, ElementId, Oracle, Phase, Tag};

const TAG: Tag = Tag::new(Phase::Stream, "test");

fn instance(seed: u64, corrupt: usize, w: usize) -> (CountingOracle<CoverageOracle>, predsub_core::generate::GeneratedStream) {
    let cov = CoverageParams {
        elements: 24,
        items: 40,
        min_degree: 1,
        max_degree: 5,
        family: FunctionFamily::Coverage,
        seed,
    };
    let f = CountingOracle::new(coverage(&cov).unwrap()).unwrap();
    let g = gen_stream(&StreamParams {
        universe: 24,
        n: 44,
        target_active: 9,
        lifetime: Lifetime::Uniform,
        corrupt,
        corruption: Corruption::Mixed,
        jitter: w,
        w,
        seed: seed ^ 0xABC,
    })
    .unwrap();
    (f, g)
}

#[test]
fn every_variant_is_feasible() {
    for seed in 0..6 {
        for (eta, w) in [(0, 0), (2, 2), (5, 1)] {
            let (f, g) = instance(seed, eta, w);
            for variant in Variant::ALL {
                let cfg = FrameworkConfig { k: 3, eps: 0.2, variant, known_eta: Some(eta), gamma: None, seed };
                let out = run_framework(&f, &g.stream, &g.pred, &cfg).unwrap();
                assert_eq!(out.steps.len(), g.stream.len());
                for s in &out.steps {
                    let active: BTreeSet<ElementId> = g.stream.active_set(s.t).unwrap().into_iter().collect();
                    assert!(s.solution.len() <= 3, "{variant} t={}", s.t);
                    assert!(s.solution.iter().all(|a| active.contains(a)), "{variant} t={}", s.t);
                }
                let r = f.report();
                assert_eq!(r.precompute + r.stream, r.total);
            }
        }
    }
}

#[test]
fn predicted_but_inactive_is_bounded() {
    for seed in 0..20 {
        for (eta, w) in [(0, 0), (3, 2), (8, 4)] {
            let (_, g) = instance(seed, eta, w);
            for t in 1..=g.stream.len() {
                let active: BTreeSet<ElementId> = g.stream.active_set(t).unwrap().into_iter().collect();
                let extra = g.pred.predicted_set(t).into_iter().filter(|a| !active.contains(a)).count();
                assert!(extra <= eta + 4 * w + 1, "seed={seed} t={t}: {extra} > {eta} + 4*{w} + 1");
            }
        }
    }
}

// Correct predictions can still leave more than 2w predicted elements inactive:
// two elements deleted just before t and two inserted just after, all within w = 1.
#[test]
fn two_w_bound_counterexample() {
    use predsub_core::stream::{prediction_error, Op, Prediction, PredictionTable, UpdateEvent, UpdateStream};
    let ev = |t, op, a| UpdateEvent { t, op, elem: ElementId(a) };
    let s = UpdateStream::new(vec![
        ev(1, Op::Insert, 0),
        ev(2, Op::Insert, 1),
        ev(3, Op::Delete, 0),
        ev(4, Op::Delete, 1),
        ev(5, Op::Insert, 2),
        ev(6, Op::Insert, 3),
    ])
    .unwrap();
    let p = |i, d| Prediction { t_ins_hat: i, t_del_hat: d };
    let pred = PredictionTable::new(
        [(0, p(1, 4)), (1, p(2, 4)), (2, p(4, 7)), (3, p(5, 7))].into_iter().map(|(a, q)| (ElementId(a), q)).collect(),
        1,
    )
    .unwrap();
    assert_eq!(prediction_error(&s, &pred).unwrap(), 0);
    assert!(s.active_set(4).unwrap().is_empty());
    assert_eq!(pred.predicted_set(4).len(), 4);
}

#[test]
fn warmup_dynamic_insertions_at_most_two_eta() {
    for seed in 0..10 {
        for eta in [0, 2, 5, 9] {
            let (f, g) = instance(seed, eta, 1);
            let cfg = FrameworkConfig { k: 3, eps: 0.2, variant: Variant::Warmup, known_eta: Some(eta), gamma: None, seed };
            let out = run_framework(&f, &g.stream, &g.pred, &cfg).unwrap();
            assert!(out.v2_insertions <= 2 * eta as u64, "seed={seed}: {} > 2*{eta}", out.v2_insertions);
        }
    }
}

#[test]
fn extraction_is_query_free() {
    let f = CountingOracle::new(CoverageOracle::modular((0..200).map(|i| (ElementId(i), 1.0 + (i % 7) as f64))).unwrap())
        .unwrap();
    let params = EngineParams { k: 6, gamma: 30.0, eps: 0.25, capacity_hint: 0, seed: 9, tag: TAG };
    let mut e = Engine::new(&f, params).unwrap();
    for i in 0..150 {
        e.insert(&f, ElementId(i)).unwrap();
    }
    e.end_init_batch(&f).unwrap();
    for i in 150..200 {
        e.insert(&f, ElementId(i)).unwrap();
    }
    for d in [0, 3, 40] {
        let before = f.total();
        let pair = robust1_from_dynamic(&e.inspect_grid(), 6, d, 0.25);
        assert_eq!(f.total(), before);
        assert!(pair.q.len() <= 6);
    }
}

#[test]
fn stored_pairs_have_valid_cores() {
    for seed in 0..4 {
        let (f, g) = instance(seed, 3, 2);
        let k = 3;
        let cfg = FrameworkConfig { k, eps: 0.2, variant: Variant::Full, known_eta: None, gamma: None, seed };
        let Precomputed::Full { grids, store } = precompute(&f, g.stream.len(), &g.pred, &cfg).unwrap() else {
            panic!("full precomputation expected");
        };
        let mut checked = 0;
        for (gi, gs) in store.per_gamma.iter().enumerate() {
            let Some(gs) = gs else { continue };
            for (hi, log) in gs.logs.iter().enumerate() {
                for entry in log.entries() {
                    let Some(pair) = store.lookup(gi, hi, entry.t) else { continue };
                    assert!(pair.q.len() <= k);
                    let fq = f.evaluate(&pair.q, TAG).unwrap();
                    assert!(fq >= pair.q.len() as f64 * grids.gammas[gi] / (2.0 * k as f64) - 1e-9);
                    checked += 1;
                }
            }
        }
        assert!(checked > 0);
    }
}

#[test]
fn lazy_matches_eager_greedy() {
    for seed in 0..100 {
        let family = [FunctionFamily::Coverage, FunctionFamily::Weighted][seed as usize % 2];
        let f = coverage(&CoverageParams { elements: 30, items: 60, min_degree: 1, max_degree: 8, family, seed }).unwrap();
        let f = CountingOracle::new(f).unwrap();
        let v: Vec<ElementId> = f.universe().to_vec();
        for k in [1, 4, 9] {
            let (_, lazy) = lazy_greedy(&f, &v, k, TAG).unwrap();
            let (_, eager) = eager_greedy(&f, &v, k, TAG).unwrap();
            assert!((lazy - eager).abs() <= 1e-9 * eager.max(1.0), "seed={seed} k={k}: {lazy} vs {eager}");
        }
    }
}

// A pick at level 0 is uniform over the eligible bucket: chi-square over 8 equal elements.
#[test]
fn peeling_picks_uniformly() {
    let f = CountingOracle::new(CoverageOracle::modular((0..8).map(|i| (ElementId(i), 1.0))).unwrap()).unwrap();
    let trials = 4000;
    let mut counts = [0usize; 8];
    for seed in 0..trials {
        let params = EngineParams { k: 1, gamma: 1.0, eps: 0.2, capacity_hint: 8, seed, tag: TAG };
        let mut e = Engine::new(&f, params).unwrap();
        for i in 0..8 {
            e.insert(&f, ElementId(i)).unwrap();
        }
        e.end_init_batch(&f).unwrap();
        let g = e.inspect_grid();
        assert_eq!(g.selected(0).len(), 1);
        counts[g.selected(0)[0].elem.0 as usize] += 1;
    }
    let expected = trials as f64 / 8.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 0.999 quantile of chi-square with 7 degrees of freedom
    assert!(chi2 < 24.32, "chi2={chi2} counts={counts:?}");
}
