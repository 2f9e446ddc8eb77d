//! Threshold-based fully dynamic algorithm for monotone submodular maximization
//! under a cardinality constraint.
//!
//! The structure has levels `ℓ = 0..=T` with capacities `c_ℓ = ⌈C / 2^ℓ⌉` (so
//! `c_T = 1`) and a ladder of thresholds `τ_0 = γ/2 > τ_1 > … > τ_R = γ/(2k)` spaced
//! by factors of `1 + ε`. Level `ℓ` owns a candidate pool and a buffer of elements
//! inserted since the level was last rebuilt. Rebuilding level `ℓ` works on the
//! solution prefix `P` chosen by the levels above it: for each threshold `τ_i` it
//! repeatedly computes the eligible set `E_i = {e : f(e | B ∪ P) ≥ τ_i}` and, while
//! `|E_i| ≥ c_ℓ`, moves a uniformly random member of `E_i` into the solution. The
//! elements still clearing `τ_R` afterwards are handed to level `ℓ + 1`; the rest stay.
//!
//! Consequences used elsewhere:
//! * every solution element had marginal at least `γ/(2k)` when it was chosen;
//! * while the solution has fewer than `k` elements, every other active element has
//!   marginal below `γ/(2k)` with respect to it;
//! * an element selected at level `ℓ` was drawn uniformly from at least `c_ℓ`
//!   candidates.
//!
//! The engine optimizes the contracted function `f_B(S) = f(B ∪ S) − f(B)` for a
//! fixed base set `B` (empty by default).

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{ElementId, Oracle, Tag};
use crate::util::rng;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EngineParams {
    pub k: usize,
    pub gamma: f64,
    pub eps: f64,
    /// Expected peak number of active elements; the level capacities start at
    /// `max(capacity_hint, 2k)` and double whenever the active set outgrows them.
    pub capacity_hint: usize,
    pub seed: u64,
    /// Attribution for every query the engine issues.
    pub tag: Tag,
}

impl EngineParams {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.gamma > 0.0) || !self.gamma.is_finite() {
            return Err(Error::invalid(format!("gamma must be positive and finite, got {}", self.gamma)));
        }
        // the engine alone only needs 1 − ε > 0; the framework keeps ε < 1/2
        if !(self.eps > 0.0 && self.eps < 1.0) {
            return Err(Error::invalid(format!("eps must lie in (0, 1), got {}", self.eps)));
        }
        Ok(())
    }
}

/// `τ_0 = γ/2`, `τ_{i+1} = τ_i/(1+ε)`, with `R = ⌈log_{1+ε} k⌉` and `τ_R = γ/(2k)`.
pub fn threshold_ladder(gamma: f64, eps: f64, k: usize) -> Vec<f64> {
    let mut r = 0;
    while libm::pow(1.0 + eps, r as f64) < k as f64 {
        r += 1;
    }
    let mut ladder = Vec::with_capacity(r + 1);
    let mut tau = gamma / 2.0;
    for _ in 0..r {
        ladder.push(tau);
        tau /= 1.0 + eps;
    }
    ladder.push(gamma / (2.0 * k as f64));
    ladder
}

/// One solution entry: the element, the threshold index it cleared and the size of
/// the eligible set it was drawn from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub elem: ElementId,
    pub threshold: usize,
    pub pool_size: usize,
}

#[derive(Clone, Debug, Default)]
struct Level {
    capacity: usize,
    /// Every element assigned to this level at its last rebuild, selected ones included.
    pool: Vec<ElementId>,
    buffer: Vec<ElementId>,
    selected: Vec<Selection>,
    /// First threshold index at which a pool member was eligible; `R + 1` if never.
    bucket: BTreeMap<ElementId, usize>,
}

#[derive(Clone, Copy, Debug)]
struct Cached {
    /// `f(B ∪ P ∪ {e})` for the prefix `P` of length `len`.
    value: f64,
    marginal: f64,
    len: usize,
    version: u64,
}

#[derive(Clone, Debug)]
pub struct Engine {
    params: EngineParams,
    ladder: Vec<f64>,
    base: Vec<ElementId>,
    capacity_base: usize,
    levels: Vec<Level>,
    active: BTreeSet<ElementId>,
    sol: Vec<ElementId>,
    /// `prefix_values[j] = f(B ∪ sol[..j])`.
    prefix_values: Vec<f64>,
    /// Identity of each prefix; a cached marginal taken against `sol[..len]` is an
    /// upper bound on the current one iff that prefix is still in place.
    prefix_versions: Vec<u64>,
    next_version: u64,
    cache: BTreeMap<ElementId, Cached>,
    rng: ChaCha8Rng,
    ops_total: u64,
    ops_star: u64,
    batch_open: bool,
}

impl Engine {
    /// Empty engine over `f` with an open initialization batch.
    pub fn new<O: Oracle>(f: &O, params: EngineParams) -> Result<Self> {
        Self::with_base(f, params, Vec::new())
    }

    /// Empty engine over the contraction `f_B`; costs one query when `B` is nonempty.
    pub fn with_base<O: Oracle>(f: &O, params: EngineParams, mut base: Vec<ElementId>) -> Result<Self> {
        params.validate()?;
        base.sort_unstable();
        base.dedup();
        let base_value = if base.is_empty() { 0.0 } else { f.evaluate(&base, params.tag)? };
        let ladder = threshold_ladder(params.gamma, params.eps, params.k);
        let mut engine = Engine {
            params,
            ladder,
            base,
            capacity_base: 0,
            levels: Vec::new(),
            active: BTreeSet::new(),
            sol: Vec::new(),
            prefix_values: alloc::vec![base_value],
            prefix_versions: alloc::vec![0],
            next_version: 1,
            cache: BTreeMap::new(),
            rng: rng(params.seed),
            ops_total: 0,
            ops_star: 0,
            batch_open: true,
        };
        engine.reset_levels(params.capacity_hint.max(2 * params.k));
        Ok(engine)
    }

    fn reset_levels(&mut self, capacity: usize) {
        self.capacity_base = capacity.max(1);
        let depth = ceil_log2(self.capacity_base);
        self.levels = (0..=depth)
            .map(|l| Level { capacity: self.capacity_base.div_ceil(1 << l), ..Level::default() })
            .collect();
    }

    pub fn params(&self) -> &EngineParams {
        &self.params
    }

    pub fn thresholds(&self) -> &[f64] {
        &self.ladder
    }

    pub fn base(&self) -> &[ElementId] {
        &self.base
    }

    pub fn capacity_base(&self) -> usize {
        self.capacity_base
    }

    /// `V(A)`.
    pub fn active(&self) -> &BTreeSet<ElementId> {
        &self.active
    }

    pub fn contains(&self, a: ElementId) -> bool {
        self.active.contains(&a)
    }

    /// The current solution in selection order (level-major). Query-free.
    pub fn solution(&self) -> &[ElementId] {
        &self.sol
    }

    /// `f(B ∪ SOL)`, known without querying.
    pub fn solution_value(&self) -> f64 {
        *self.prefix_values.last().expect("prefix values start with f(B)")
    }

    /// `f(B)`.
    pub fn base_value(&self) -> f64 {
        self.prefix_values[0]
    }

    /// `f_B(SOL)`.
    pub fn solution_gain(&self) -> f64 {
        self.solution_value() - self.base_value()
    }

    pub fn ops_total(&self) -> u64 {
        self.ops_total
    }

    /// Updates performed after the initialization batch was closed.
    pub fn ops_star(&self) -> u64 {
        self.ops_star
    }

    pub fn batch_open(&self) -> bool {
        self.batch_open
    }

    /// Closes the initialization batch and builds the structure over everything
    /// inserted so far. Later calls are no-ops.
    pub fn end_init_batch<O: Oracle>(&mut self, f: &O) -> Result<()> {
        if !self.batch_open {
            return Ok(());
        }
        self.batch_open = false;
        let mut capacity = self.capacity_base;
        while capacity < self.active.len() {
            capacity *= 2;
        }
        if capacity != self.capacity_base {
            let pending = core::mem::take(&mut self.levels[0].buffer);
            self.reset_levels(capacity);
            self.levels[0].buffer = pending;
        }
        self.construct(f, 0)
    }

    pub fn insert<O: Oracle>(&mut self, f: &O, a: ElementId) -> Result<()> {
        if self.active.contains(&a) {
            return Err(Error::State(format!("{a} is already active")));
        }
        if f.universe().binary_search(&a).is_err() {
            return Err(Error::UnknownElement(a));
        }
        self.active.insert(a);
        self.ops_total += 1;
        if self.batch_open {
            self.levels[0].buffer.push(a);
            return Ok(());
        }
        self.ops_star += 1;
        for level in &mut self.levels {
            level.buffer.push(a);
        }
        if self.active.len() > self.capacity_base {
            return self.grow(f);
        }
        if let Some(l) = self.levels.iter().position(|lv| lv.buffer.len() > lv.capacity) {
            return self.construct(f, l);
        }
        if self.sol.len() < self.params.k {
            let floor = *self.ladder.last().expect("ladder is nonempty");
            let c = self.exact(f, a)?;
            if c.marginal >= floor {
                let threshold = self.ladder.iter().position(|&tau| c.marginal >= tau).expect("clears floor");
                let deepest = self.levels.len() - 1;
                self.select(deepest, a, threshold, 1, c.value);
            }
        }
        Ok(())
    }

    pub fn delete<O: Oracle>(&mut self, f: &O, a: ElementId) -> Result<()> {
        if !self.active.remove(&a) {
            return Err(Error::State(format!("{a} is not active")));
        }
        self.ops_total += 1;
        if !self.batch_open {
            self.ops_star += 1;
        }
        self.cache.remove(&a);
        let mut hit = None;
        for (l, level) in self.levels.iter_mut().enumerate() {
            level.pool.retain(|&x| x != a);
            level.buffer.retain(|&x| x != a);
            level.bucket.remove(&a);
            if hit.is_none() && level.selected.iter().any(|s| s.elem == a) {
                hit = Some(l);
            }
        }
        match hit {
            Some(l) if !self.batch_open => self.construct(f, l),
            _ => Ok(()),
        }
    }

    fn grow<O: Oracle>(&mut self, f: &O) -> Result<()> {
        let mut capacity = self.capacity_base;
        while capacity < self.active.len() {
            capacity *= 2;
        }
        self.reset_levels(capacity);
        self.levels[0].buffer = self.active.iter().copied().collect();
        self.construct(f, 0)
    }

    /// Rebuilds levels `start..=T` on top of the untouched prefix chosen by the levels above.
    fn construct<O: Oracle>(&mut self, f: &O, start: usize) -> Result<()> {
        let keep: usize = self.levels[..start].iter().map(|lv| lv.selected.len()).sum();
        self.sol.truncate(keep);
        self.prefix_values.truncate(keep + 1);
        self.prefix_versions.truncate(keep + 1);
        let incoming = core::mem::take(&mut self.levels[start].buffer);
        self.levels[start].pool.extend(incoming);
        for (l, level) in self.levels.iter_mut().enumerate().skip(start) {
            level.selected.clear();
            level.bucket.clear();
            level.buffer.clear();
            if l > start {
                level.pool.clear();
            }
        }
        let deepest = self.levels.len() - 1;
        for l in start..=deepest {
            let passed = self.build_level(f, l)?;
            if l < deepest {
                self.levels[l + 1].pool = passed;
            }
        }
        Ok(())
    }

    fn build_level<O: Oracle>(&mut self, f: &O, l: usize) -> Result<Vec<ElementId>> {
        let capacity = self.levels[l].capacity;
        let below = self.ladder.len();
        let mut remaining = self.levels[l].pool.clone();
        let mut eligible = Vec::new();
        for i in 0..self.ladder.len() {
            if self.sol.len() >= self.params.k {
                break;
            }
            let tau = self.ladder[i];
            loop {
                eligible = self.eligible(f, &remaining, tau)?;
                for &e in &eligible {
                    self.levels[l].bucket.entry(e).or_insert(i);
                }
                if eligible.is_empty() || eligible.len() < capacity || self.sol.len() >= self.params.k {
                    break;
                }
                let pick = eligible[self.rng.gen_range(0..eligible.len())];
                let value = self.cache[&pick].value;
                self.select(l, pick, i, eligible.len(), value);
                remaining.retain(|&x| x != pick);
            }
        }
        for &e in &remaining {
            self.levels[l].bucket.entry(e).or_insert(below);
        }
        if self.sol.len() >= self.params.k {
            return Ok(Vec::new());
        }
        // `eligible` holds E_R against the final prefix
        Ok(eligible)
    }

    fn select(&mut self, l: usize, elem: ElementId, threshold: usize, pool_size: usize, value: f64) {
        self.levels[l].selected.push(Selection { elem, threshold, pool_size });
        self.levels[l].bucket.entry(elem).or_insert(threshold);
        self.sol.push(elem);
        self.prefix_values.push(value);
        self.prefix_versions.push(self.next_version);
        self.next_version += 1;
    }

    /// Members of `candidates` whose marginal to the current prefix is at least `tau`.
    fn eligible<O: Oracle>(&mut self, f: &O, candidates: &[ElementId], tau: f64) -> Result<Vec<ElementId>> {
        let mut out = Vec::new();
        for &e in candidates {
            if let Some(c) = self.cache.get(&e) {
                if self.is_upper_bound(c) && c.marginal < tau {
                    continue;
                }
            }
            if self.exact(f, e)?.marginal >= tau {
                out.push(e);
            }
        }
        Ok(out)
    }

    fn is_upper_bound(&self, c: &Cached) -> bool {
        c.len <= self.sol.len() && self.prefix_versions[c.len] == c.version
    }

    /// Marginal of `e` to `B ∪ SOL`, reusing the cache when it is current.
    fn exact<O: Oracle>(&mut self, f: &O, e: ElementId) -> Result<Cached> {
        let len = self.sol.len();
        let version = self.prefix_versions[len];
        if let Some(c) = self.cache.get(&e) {
            if c.len == len && c.version == version {
                return Ok(*c);
            }
        }
        let mut set = Vec::with_capacity(self.base.len() + len + 1);
        set.extend_from_slice(&self.base);
        set.extend_from_slice(&self.sol);
        set.push(e);
        let value = f.evaluate(&set, self.params.tag)?;
        let c = Cached { value, marginal: value - self.prefix_values[len], len, version };
        self.cache.insert(e, c);
        Ok(c)
    }

    /// Read-only view of the level structure. Query-free.
    pub fn inspect_grid(&self) -> GridRef<'_> {
        GridRef { engine: self }
    }
}

fn ceil_log2(x: usize) -> usize {
    if x <= 1 {
        0
    } else {
        (usize::BITS - (x - 1).leading_zeros()) as usize
    }
}

/// Borrowed snapshot of an engine's levels.
#[derive(Clone, Copy)]
pub struct GridRef<'a> {
    engine: &'a Engine,
}

impl<'a> GridRef<'a> {
    pub fn k(&self) -> usize {
        self.engine.params.k
    }

    pub fn gamma(&self) -> f64 {
        self.engine.params.gamma
    }

    pub fn eps(&self) -> f64 {
        self.engine.params.eps
    }

    pub fn capacity_base(&self) -> usize {
        self.engine.capacity_base
    }

    pub fn levels(&self) -> usize {
        self.engine.levels.len()
    }

    pub fn capacity(&self, l: usize) -> usize {
        self.engine.levels[l].capacity
    }

    pub fn selected(&self, l: usize) -> &'a [Selection] {
        &self.engine.levels[l].selected
    }

    pub fn pool(&self, l: usize) -> &'a [ElementId] {
        &self.engine.levels[l].pool
    }

    pub fn buffer(&self, l: usize) -> &'a [ElementId] {
        &self.engine.levels[l].buffer
    }

    /// Members of bucket `A_{i,ℓ}`; index `R + 1` holds pool members that never cleared `τ_R`.
    pub fn bucket(&self, l: usize, i: usize) -> Vec<ElementId> {
        self.engine.levels[l].bucket.iter().filter(|(_, &b)| b == i).map(|(&e, _)| e).collect()
    }

    pub fn thresholds(&self) -> &'a [f64] {
        &self.engine.ladder
    }

    pub fn solution(&self) -> &'a [ElementId] {
        &self.engine.sol
    }

    pub fn to_view(&self) -> GridView {
        let levels = (0..self.levels())
            .map(|l| LevelView {
                capacity: self.capacity(l),
                selected: self.selected(l).to_vec(),
                buckets: (0..=self.thresholds().len()).map(|i| self.bucket(l, i)).collect(),
                buffer: self.buffer(l).to_vec(),
            })
            .collect();
        GridView {
            k: self.k(),
            gamma: self.gamma(),
            eps: self.eps(),
            capacity_base: self.capacity_base(),
            thresholds: self.thresholds().to_vec(),
            levels,
            solution: self.solution().to_vec(),
        }
    }
}

/// Owned debug dump of the level structure.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridView {
    pub k: usize,
    pub gamma: f64,
    pub eps: f64,
    pub capacity_base: usize,
    pub thresholds: Vec<f64>,
    pub levels: Vec<LevelView>,
    pub solution: Vec<ElementId>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LevelView {
    pub capacity: usize,
    pub selected: Vec<Selection>,
    /// `buckets[i]` for threshold `i`; the last entry collects elements below the floor.
    pub buckets: Vec<Vec<ElementId>>,
    pub buffer: Vec<ElementId>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{CountingOracle, CoverageOracle, Phase};
    use alloc::vec;

    const TAG: Tag = Tag::new(Phase::Stream, "engine");

    fn params(k: usize, gamma: f64) -> EngineParams {
        EngineParams { k, gamma, eps: 0.2, capacity_hint: 0, seed: 5, tag: TAG }
    }

    fn modular(n: u32, w: f64) -> CountingOracle<CoverageOracle> {
        CountingOracle::new(CoverageOracle::modular((0..n).map(|i| (ElementId(i), w))).unwrap()).unwrap()
    }

    #[test]
    fn ladder_shape() {
        let l = threshold_ladder(32.0, 0.2, 16);
        assert_eq!(l[0], 16.0);
        assert_eq!(*l.last().unwrap(), 1.0);
        assert!(l.windows(2).all(|w| w[0] > w[1]));
        assert!(l[l.len() - 2] > 1.0);
        assert!(l[l.len() - 2] / 1.2 <= 1.0 + 1e-12);
        assert_eq!(threshold_ladder(4.0, 0.2, 1), vec![2.0]);
    }

    #[test]
    fn zero_k_rejected() {
        let f = modular(3, 1.0);
        assert!(Engine::new(&f, params(0, 1.0)).is_err());
    }

    #[test]
    fn batch_counters() {
        let f = modular(6, 1.0);
        let mut e = Engine::new(&f, params(2, 2.0)).unwrap();
        for i in 0..5 {
            e.insert(&f, ElementId(i)).unwrap();
        }
        e.end_init_batch(&f).unwrap();
        e.end_init_batch(&f).unwrap();
        assert_eq!((e.ops_total(), e.ops_star()), (5, 0));
        e.insert(&f, ElementId(5)).unwrap();
        assert_eq!((e.ops_total(), e.ops_star()), (6, 1));
    }

    #[test]
    fn single_heavy_element_is_taken() {
        let f = modular(1, 5.0);
        let mut e = Engine::new(&f, params(3, 10.0)).unwrap();
        e.end_init_batch(&f).unwrap();
        assert!(e.solution().is_empty());
        e.insert(&f, ElementId(0)).unwrap();
        assert_eq!(e.solution(), &[ElementId(0)]);
        e.delete(&f, ElementId(0)).unwrap();
        assert!(e.solution().is_empty());
        assert!(e.active().is_empty());
    }

    #[test]
    fn precondition_errors_leave_state() {
        let f = modular(2, 1.0);
        let mut e = Engine::new(&f, params(1, 1.0)).unwrap();
        e.end_init_batch(&f).unwrap();
        e.insert(&f, ElementId(0)).unwrap();
        let before = (e.ops_total(), e.solution().to_vec());
        assert!(matches!(e.insert(&f, ElementId(0)), Err(Error::State(_))));
        assert!(matches!(e.delete(&f, ElementId(1)), Err(Error::State(_))));
        assert!(matches!(e.insert(&f, ElementId(9)), Err(Error::UnknownElement(_))));
        assert_eq!(before, (e.ops_total(), e.solution().to_vec()));
    }

    #[test]
    fn modular_fills_to_k() {
        let k = 4;
        let f = modular(k as u32 + 5, 1.0);
        let mut e = Engine::new(&f, params(k, k as f64)).unwrap();
        e.end_init_batch(&f).unwrap();
        for i in 0..k as u32 + 5 {
            e.insert(&f, ElementId(i)).unwrap();
            assert!(e.solution().len() <= k);
        }
        assert_eq!(e.solution().len(), k);
    }

    #[test]
    fn grid_view_is_query_free_and_consistent() {
        let f = modular(40, 1.0);
        let mut e = Engine::new(&f, params(5, 5.0)).unwrap();
        for i in 0..30 {
            e.insert(&f, ElementId(i)).unwrap();
        }
        e.end_init_batch(&f).unwrap();
        for i in 30..40 {
            e.insert(&f, ElementId(i)).unwrap();
        }
        let before = f.total();
        let g = e.inspect_grid();
        let mut from_levels: Vec<ElementId> = (0..g.levels()).flat_map(|l| g.selected(l).iter().map(|s| s.elem)).collect();
        assert_eq!(from_levels, e.solution());
        from_levels.sort();
        let buffered: usize = (0..g.levels()).map(|l| g.buffer(l).len()).sum();
        let capacity: usize = (0..g.levels()).map(|l| g.capacity(l)).sum();
        assert!(buffered <= capacity);
        let view = g.to_view();
        assert_eq!(view.solution, e.solution());
        assert_eq!(f.total(), before);
    }

    #[test]
    fn capacity_doubles() {
        let f = modular(50, 1.0);
        let mut e = Engine::new(&f, params(2, 2.0)).unwrap();
        e.end_init_batch(&f).unwrap();
        for i in 0..50 {
            e.insert(&f, ElementId(i)).unwrap();
        }
        assert!(e.capacity_base() >= 50);
        assert_eq!(e.solution().len(), 2);
    }

    #[test]
    fn base_contraction() {
        let inner = CoverageOracle::new(
            vec![(ElementId(0), vec![1, 2]), (ElementId(1), vec![2, 3]), (ElementId(2), vec![1, 2])],
            &BTreeMap::new(),
        )
        .unwrap();
        let f = CountingOracle::new(inner).unwrap();
        let mut e = Engine::with_base(&f, params(2, 1.0), vec![ElementId(0)]).unwrap();
        e.insert(&f, ElementId(1)).unwrap();
        e.insert(&f, ElementId(2)).unwrap();
        e.end_init_batch(&f).unwrap();
        // element 2 adds nothing on top of the base
        assert_eq!(e.solution(), &[ElementId(1)]);
        assert_eq!(e.solution_gain(), 1.0);
        assert_eq!(e.solution_value(), 3.0);
    }
}
