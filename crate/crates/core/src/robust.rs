//! Strongly robust `(Q, R)` pairs.
//!
//! A pair is `(d, ε, γ)`-strongly robust when `|Q| ≤ k`, `f(Q) ≥ |Q|γ/(2k)`, every set
//! outside `R` adds little on top of `Q` whenever `|Q| < k`, and `Q` keeps a
//! `(1 − ε)` fraction of its value in expectation under any `d` deletions.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::baseline::lazy_greedy_from;
use crate::engine::{Engine, EngineParams, GridRef};
use crate::error::Result;
use crate::oracle::{ElementId, Oracle, Tag};
use crate::util::{log_base, mix_seed, rng, EPS_CMP};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StronglyRobustPair {
    #[serde(rename = "Q")]
    pub q: Vec<ElementId>,
    #[serde(rename = "R")]
    pub r: Vec<ElementId>,
    pub d: usize,
    pub eps: f64,
    pub gamma: f64,
    pub k: usize,
}

impl StronglyRobustPair {
    pub fn empty(d: usize, eps: f64, gamma: f64, k: usize) -> Self {
        StronglyRobustPair { q: Vec::new(), r: Vec::new(), d, eps, gamma, k }
    }

    /// `8 ε⁻² (d + k) log₂(k + 1)`.
    pub fn reserve_bound(&self) -> f64 {
        8.0 / (self.eps * self.eps) * (self.d + self.k) as f64 * libm::log2(self.k as f64 + 1.0)
    }
}

/// First level whose capacity does not exceed `d/ε + k`, or the level count if none.
pub fn cutoff_level(grid: &GridRef<'_>, k: usize, d: usize, eps: f64) -> usize {
    let bar = d as f64 / eps + k as f64;
    (0..grid.levels()).find(|&l| grid.capacity(l) as f64 <= bar).unwrap_or(grid.levels())
}

/// Reads a pair off an engine snapshot without querying: selections of levels with
/// capacity above `d/ε + k` form `Q`; the pools and buffers of the other levels form `R`.
pub fn robust1_from_dynamic(grid: &GridRef<'_>, k: usize, d: usize, eps: f64) -> StronglyRobustPair {
    let cut = cutoff_level(grid, k, d, eps);
    let q: Vec<ElementId> = (0..cut).flat_map(|l| grid.selected(l).iter().map(|s| s.elem)).collect();
    let mut r = BTreeSet::new();
    for l in cut..grid.levels() {
        r.extend(grid.pool(l).iter().copied());
        r.extend(grid.buffer(l).iter().copied());
    }
    StronglyRobustPair { q, r: r.into_iter().collect(), d, eps, gamma: grid.gamma(), k }
}

/// Builds a fresh engine over `v` (one initialization batch) and extracts a pair.
pub fn pair_from_batch<O: Oracle>(
    f: &O,
    v: &[ElementId],
    k: usize,
    d: usize,
    eps: f64,
    gamma: f64,
    seed: u64,
    tag: Tag,
) -> Result<StronglyRobustPair> {
    let params = EngineParams { k, gamma, eps, capacity_hint: v.len(), seed, tag };
    let mut engine = Engine::new(f, params)?;
    for &a in v {
        engine.insert(f, a)?;
    }
    engine.end_init_batch(f)?;
    Ok(robust1_from_dynamic(&engine.inspect_grid(), k, d, eps))
}

/// Stand-alone first stage: a lazy-greedy value `g` anchors a grid `g(1+ε)^j` covering
/// `[g(1 − 1/e), g/(1 − 1/e)]`, and every grid point gets its own engine and pair.
pub fn robust1_standalone<O: Oracle>(
    f: &O,
    v: &[ElementId],
    k: usize,
    d: usize,
    eps: f64,
    seed: u64,
    tag: Tag,
) -> Result<Vec<StronglyRobustPair>> {
    if v.is_empty() {
        return Ok(Vec::new());
    }
    let (_, g) = lazy_greedy_from(f, &[], v, k, tag)?;
    if !(g > 0.0) {
        return Ok(Vec::new());
    }
    let shrink = 1.0 - 1.0 / core::f64::consts::E;
    let lo = libm::floor(log_base(shrink, 1.0 + eps)) as i64;
    let hi = libm::ceil(log_base(1.0 / shrink, 1.0 + eps)) as i64;
    let mut pairs = Vec::new();
    for j in lo..=hi {
        let gamma = g * libm::pow(1.0 + eps, j as f64);
        pairs.push(pair_from_batch(f, v, k, d, eps, gamma, mix_seed(seed, j as u64), tag)?);
    }
    Ok(pairs)
}

/// Second stage: for each pair, keep `Q \ D` and greedily complete it from `R \ D`;
/// return the best completion and its value.
pub fn robust2<O: Oracle>(
    f: &O,
    pairs: &[StronglyRobustPair],
    deleted: &BTreeSet<ElementId>,
    k: usize,
    tag: Tag,
) -> Result<(Vec<ElementId>, f64)> {
    let mut best: (Vec<ElementId>, f64) = (Vec::new(), 0.0);
    for p in pairs {
        let mut seed: Vec<ElementId> = p.q.iter().copied().filter(|a| !deleted.contains(a)).collect();
        seed.truncate(k);
        let pool: Vec<ElementId> = p.r.iter().copied().filter(|a| !deleted.contains(a)).collect();
        let candidate = lazy_greedy_from(f, &seed, &pool, k, tag)?;
        if candidate.1 > best.1 {
            best = candidate;
        }
    }
    Ok(best)
}

/// Outcome of [`verify_strongly_robust`].
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RobustSummary {
    pub builds: usize,
    pub size_ok: bool,
    pub value_ok: bool,
    /// `None` when never applicable (every build had `|Q| = k`).
    pub exhaustive_ok: Option<bool>,
    pub robustness_ok: bool,
    /// Largest `|R| / (ε⁻²(d + k) log₂(k + 1))` observed.
    pub max_reserve_constant: f64,
    pub mean_q_value: f64,
    /// `(deleted set, mean f(Q \ D))` for the adversarial set and each random set.
    pub robustness: Vec<(Vec<ElementId>, f64)>,
    /// Smallest `mean f(Q \ D) / mean f(Q)` over the tested deletion sets.
    pub worst_ratio: f64,
}

impl RobustSummary {
    pub fn passed(&self) -> bool {
        self.size_ok && self.value_ok && self.exhaustive_ok != Some(false) && self.robustness_ok
    }
}

/// Settings for [`verify_strongly_robust`].
#[derive(Clone, Debug, PartialEq)]
pub struct VerifyParams {
    pub k: usize,
    pub d: usize,
    pub eps: f64,
    pub gamma: f64,
    pub trials: usize,
    pub random_sets: usize,
    pub delta_stat: f64,
    pub seed: u64,
}

/// Checks the strong-robustness definition over `trials` independent builds.
///
/// `build(seed)` must rerun the randomized construction. Robustness is tested against
/// the `d` elements of largest singleton value and `random_sets` fixed random `D`.
pub fn verify_strongly_robust<O: Oracle>(
    f: &O,
    v: &[ElementId],
    p: &VerifyParams,
    tag: Tag,
    mut build: impl FnMut(u64) -> Result<StronglyRobustPair>,
) -> Result<RobustSummary> {
    let mut universe = v.to_vec();
    universe.sort_unstable();
    universe.dedup();
    let mut deletion_sets: Vec<Vec<ElementId>> = Vec::new();
    let mut by_value = Vec::with_capacity(universe.len());
    for &a in &universe {
        by_value.push((f.evaluate(&[a], tag)?, a));
    }
    by_value.sort_by(|x, y| y.0.total_cmp(&x.0).then(x.1.cmp(&y.1)));
    deletion_sets.push(by_value.iter().take(p.d).map(|&(_, a)| a).collect());
    let mut r = rng(mix_seed(p.seed, 0xD5));
    for _ in 0..p.random_sets {
        let mut s: Vec<ElementId> = universe.choose_multiple(&mut r, p.d.min(universe.len())).copied().collect();
        s.sort_unstable();
        deletion_sets.push(s);
    }

    let slack = p.eps * (1.0 + p.eps) / (1.0 - p.eps) * p.gamma;
    let unit = p.gamma / (2.0 * p.k as f64);
    let mut summary = RobustSummary { size_ok: true, value_ok: true, robustness_ok: true, ..Default::default() };
    let mut q_total = 0.0;
    let mut kept = alloc::vec![0.0; deletion_sets.len()];
    for trial in 0..p.trials {
        let pair = build(mix_seed(p.seed, trial as u64))?;
        summary.builds += 1;
        let bound = pair.reserve_bound();
        if pair.q.len() > p.k || pair.r.len() as f64 > bound {
            summary.size_ok = false;
        }
        summary.max_reserve_constant = summary.max_reserve_constant.max(pair.r.len() as f64 / (bound / 8.0));
        let fq = f.evaluate(&pair.q, tag)?;
        if fq < pair.q.len() as f64 * unit - EPS_CMP {
            summary.value_ok = false;
        }
        q_total += fq;
        if pair.q.len() < p.k {
            let ok = exhaustive_clause(f, &universe, &pair, p.k, unit, slack, fq, tag)?;
            summary.exhaustive_ok = Some(summary.exhaustive_ok.unwrap_or(true) && ok);
        }
        for (slot, dset) in kept.iter_mut().zip(&deletion_sets) {
            let survivors: Vec<ElementId> = pair.q.iter().copied().filter(|a| !dset.contains(a)).collect();
            *slot += f.evaluate(&survivors, tag)?;
        }
    }
    let trials = p.trials.max(1) as f64;
    summary.mean_q_value = q_total / trials;
    summary.worst_ratio = 1.0;
    for (dset, total) in deletion_sets.into_iter().zip(kept) {
        let mean = total / trials;
        if mean < (1.0 - p.eps - p.delta_stat) * summary.mean_q_value - EPS_CMP {
            summary.robustness_ok = false;
        }
        if summary.mean_q_value > 0.0 {
            summary.worst_ratio = summary.worst_ratio.min(mean / summary.mean_q_value);
        }
        summary.robustness.push((dset, mean));
    }
    Ok(summary)
}

/// `f_Q(S) < |S|γ/(2k) + slack` for every `S ⊆ V \ R` with `|S| ≤ k`.
#[allow(clippy::too_many_arguments)]
fn exhaustive_clause<O: Oracle>(
    f: &O,
    universe: &[ElementId],
    pair: &StronglyRobustPair,
    k: usize,
    unit: f64,
    slack: f64,
    fq: f64,
    tag: Tag,
) -> Result<bool> {
    let outside: Vec<ElementId> = universe.iter().copied().filter(|a| !pair.r.contains(a)).collect();
    let mut ok = true;
    let mut stack: Vec<usize> = Vec::new();
    // depth-first enumeration of index combinations of size 1..=k
    let mut next = 0usize;
    loop {
        if stack.len() < k && next < outside.len() {
            stack.push(next);
            next += 1;
            let mut set = pair.q.clone();
            set.extend(stack.iter().map(|&i| outside[i]));
            let gain = f.evaluate(&set, tag)? - fq;
            if gain >= stack.len() as f64 * unit + slack + EPS_CMP {
                ok = false;
            }
            continue;
        }
        match stack.pop() {
            Some(i) => next = i + 1,
            None => break,
        }
    }
    Ok(ok)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{CountingOracle, CoverageOracle, Phase};
    use alloc::vec;

    const T: Tag = Tag::new(Phase::Precompute, "robust");

    fn modular(n: u32) -> CountingOracle<CoverageOracle> {
        CountingOracle::new(CoverageOracle::modular((0..n).map(|i| (ElementId(i), 1.0 + (i % 3) as f64))).unwrap())
            .unwrap()
    }

    #[test]
    fn extraction_is_query_free() {
        let f = modular(12);
        let params = EngineParams { k: 3, gamma: 6.0, eps: 0.3, capacity_hint: 12, seed: 1, tag: T };
        let mut e = Engine::new(&f, params).unwrap();
        for i in 0..12 {
            e.insert(&f, ElementId(i)).unwrap();
        }
        e.end_init_batch(&f).unwrap();
        let before = f.total();
        let pair = robust1_from_dynamic(&e.inspect_grid(), 3, 1, 0.3);
        assert_eq!(f.total(), before);
        assert!(pair.q.len() <= 3);
        assert!(pair.q.iter().all(|a| !pair.r.contains(a)));
    }

    #[test]
    fn cutoff_arithmetic() {
        let f = modular(4);
        let params = EngineParams { k: 5, gamma: 1.0, eps: 0.4, capacity_hint: 1024, seed: 1, tag: T };
        let e = Engine::new(&f, params).unwrap();
        let g = e.inspect_grid();
        // d/ε + k = 10/0.5 + 5 = 25; capacities 1024, 512, …, 32 feed Q
        assert_eq!(cutoff_level(&g, 5, 10, 0.5), 6);
        assert_eq!(g.capacity(5), 32);
        assert_eq!(g.capacity(6), 16);
    }

    #[test]
    fn robust2_edge_cases() {
        let f = modular(6);
        let pair = StronglyRobustPair {
            q: vec![ElementId(0), ElementId(1)],
            r: vec![ElementId(2), ElementId(3)],
            d: 1,
            eps: 0.3,
            gamma: 4.0,
            k: 2,
        };
        let (s, _) = robust2(&f, &[pair.clone()], &BTreeSet::new(), 2, T).unwrap();
        assert_eq!(s, pair.q);
        let all: BTreeSet<ElementId> = (0..4).map(ElementId).collect();
        assert_eq!(robust2(&f, &[pair], &all, 2, T).unwrap(), (Vec::new(), 0.0));
        assert_eq!(robust2(&f, &[], &all, 2, T).unwrap(), (Vec::new(), 0.0));
    }

    #[test]
    fn standalone_on_empty() {
        let f = modular(3);
        assert!(robust1_standalone(&f, &[], 2, 0, 0.3, 0, T).unwrap().is_empty());
    }

    #[test]
    fn modular_closed_form_deletions() {
        // f(Q \ D) = f(Q) − Σ_{a ∈ Q ∩ D} f(a) for modular f
        let f = modular(10);
        let q: Vec<ElementId> = (0..5).map(ElementId).collect();
        let d: Vec<ElementId> = vec![ElementId(1), ElementId(4), ElementId(7)];
        let survivors: Vec<ElementId> = q.iter().copied().filter(|a| !d.contains(a)).collect();
        let lhs = f.evaluate(&survivors, T).unwrap();
        let mut rhs = f.evaluate(&q, T).unwrap();
        for a in q.iter().filter(|a| d.contains(a)) {
            rhs -= f.evaluate(&[*a], T).unwrap();
        }
        assert_eq!(lhs, rhs);
    }
}
