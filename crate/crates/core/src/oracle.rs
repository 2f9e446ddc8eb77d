//! Value oracles and query accounting.
//!
//! A [`SetFunction`] is a plain monotone submodular set function. Algorithms never
//! call it directly: they go through an [`Oracle`], whose canonical implementation
//! [`CountingOracle`] normalizes `f(∅) = 0` and meters every evaluation under a
//! [`Tag`] naming the phase (precompute or stream) and the caller.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::cell::RefCell;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Opaque identifier of a ground element.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ElementId(pub u32);

impl fmt::Display for ElementId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "#{}", self.0)
    }
}

/// A set function `f : 2^V → R≥0` over a finite universe.
///
/// Implementations must be deterministic: the same set always evaluates to the
/// same bits. Duplicate ids in `set` are ignored.
pub trait SetFunction {
    /// Sorted universe.
    fn universe(&self) -> &[ElementId];

    fn contains(&self, a: ElementId) -> bool {
        self.universe().binary_search(&a).is_ok()
    }

    fn value(&self, set: &[ElementId]) -> Result<f64>;
}

impl<F: SetFunction + ?Sized> SetFunction for &F {
    fn universe(&self) -> &[ElementId] {
        (**self).universe()
    }
    fn contains(&self, a: ElementId) -> bool {
        (**self).contains(a)
    }
    fn value(&self, set: &[ElementId]) -> Result<f64> {
        (**self).value(set)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Precompute,
    Stream,
}

/// Attribution of a query: which phase it was spent in and which routine asked.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Tag {
    pub phase: Phase,
    pub caller: &'static str,
}

impl Tag {
    pub const fn new(phase: Phase, caller: &'static str) -> Self {
        Tag { phase, caller }
    }
}

/// Metered access to a normalized monotone submodular function.
pub trait Oracle {
    fn universe(&self) -> &[ElementId];

    /// `f(S)`; one query.
    fn evaluate(&self, set: &[ElementId], tag: Tag) -> Result<f64>;

    /// `f(S ∪ {a}) − f(S)`; two queries.
    fn marginal(&self, a: ElementId, set: &[ElementId], tag: Tag) -> Result<f64> {
        let base = self.evaluate(set, tag)?;
        let mut with = Vec::with_capacity(set.len() + 1);
        with.extend_from_slice(set);
        with.push(a);
        Ok(self.evaluate(&with, tag)? - base)
    }
}

/// Snapshot of query counters.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct QueryReport {
    /// `(phase, caller, count)`, sorted by phase then caller.
    pub by_tag: Vec<(Phase, alloc::string::String, u64)>,
    pub precompute: u64,
    pub stream: u64,
    pub total: u64,
}

impl QueryReport {
    pub fn caller(&self, phase: Phase, caller: &str) -> u64 {
        self.by_tag
            .iter()
            .filter(|(p, c, _)| *p == phase && c == caller)
            .map(|(_, _, n)| n)
            .sum()
    }
}

/// Wraps a [`SetFunction`], subtracts `f(∅)` and counts every evaluation per tag.
///
/// Not `Sync`: one instance per experiment replica.
pub struct CountingOracle<F> {
    inner: F,
    offset: f64,
    counts: RefCell<BTreeMap<Tag, u64>>,
}

impl<F: SetFunction> CountingOracle<F> {
    /// Evaluates `f(∅)` once (uncounted) to normalize.
    pub fn new(inner: F) -> Result<Self> {
        let offset = inner.value(&[])?;
        Ok(CountingOracle { inner, offset, counts: RefCell::new(BTreeMap::new()) })
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }

    pub fn report(&self) -> QueryReport {
        let counts = self.counts.borrow();
        let mut report = QueryReport::default();
        for (tag, &n) in counts.iter() {
            report.by_tag.push((tag.phase, tag.caller.into(), n));
            match tag.phase {
                Phase::Precompute => report.precompute += n,
                Phase::Stream => report.stream += n,
            }
            report.total += n;
        }
        report
    }

    pub fn total(&self) -> u64 {
        self.counts.borrow().values().sum()
    }

    pub fn phase_total(&self, phase: Phase) -> u64 {
        self.counts.borrow().iter().filter(|(t, _)| t.phase == phase).map(|(_, n)| n).sum()
    }
}

impl<F: SetFunction> Oracle for CountingOracle<F> {
    fn universe(&self) -> &[ElementId] {
        self.inner.universe()
    }

    fn evaluate(&self, set: &[ElementId], tag: Tag) -> Result<f64> {
        let v = self.inner.value(set)? - self.offset;
        *self.counts.borrow_mut().entry(tag).or_insert(0) += 1;
        Ok(v)
    }
}

impl<O: Oracle + ?Sized> Oracle for &O {
    fn universe(&self) -> &[ElementId] {
        (**self).universe()
    }
    fn evaluate(&self, set: &[ElementId], tag: Tag) -> Result<f64> {
        (**self).evaluate(set, tag)
    }
    fn marginal(&self, a: ElementId, set: &[ElementId], tag: Tag) -> Result<f64> {
        (**self).marginal(a, set, tag)
    }
}

/// Weighted coverage: `f(S)` is the total weight of the items covered by `S`.
///
/// Modular functions are the special case where every element owns a private item.
#[derive(Clone, Debug)]
pub struct CoverageOracle {
    universe: Vec<ElementId>,
    /// Dense item indices per element, aligned with `universe`.
    items: Vec<Vec<u32>>,
    weights: Vec<f64>,
    /// Per-item epoch stamps used to deduplicate during evaluation.
    marks: RefCell<(Vec<u32>, u32)>,
}

impl CoverageOracle {
    /// Builds an instance from `(element, items)` pairs and an optional per-item weight map.
    /// Items missing from the weight map weigh 1.
    pub fn new(
        elements: impl IntoIterator<Item = (ElementId, Vec<u64>)>,
        item_weights: &BTreeMap<u64, f64>,
    ) -> Result<Self> {
        let mut rows: Vec<(ElementId, Vec<u64>)> = elements.into_iter().collect();
        rows.sort_by_key(|(id, _)| *id);
        for pair in rows.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(Error::invalid(alloc::format!("duplicate element id {}", pair[0].0)));
            }
        }
        for (item, w) in item_weights {
            if !(*w >= 0.0) || !w.is_finite() {
                return Err(Error::invalid(alloc::format!("item {item} has invalid weight {w}")));
            }
        }
        let mut dense: BTreeMap<u64, u32> = BTreeMap::new();
        let mut weights = Vec::new();
        let mut universe = Vec::with_capacity(rows.len());
        let mut items = Vec::with_capacity(rows.len());
        for (id, raw) in rows {
            let mut mapped: Vec<u32> = raw
                .into_iter()
                .map(|item| {
                    *dense.entry(item).or_insert_with(|| {
                        weights.push(item_weights.get(&item).copied().unwrap_or(1.0));
                        (weights.len() - 1) as u32
                    })
                })
                .collect();
            mapped.sort_unstable();
            mapped.dedup();
            universe.push(id);
            items.push(mapped);
        }
        let n_items = weights.len();
        Ok(CoverageOracle { universe, items, weights, marks: RefCell::new((alloc::vec![0; n_items], 0)) })
    }

    /// Modular function `f(S) = Σ_{a∈S} weight(a)`.
    pub fn modular(weights: impl IntoIterator<Item = (ElementId, f64)>) -> Result<Self> {
        let mut item_weights = BTreeMap::new();
        let mut elements = Vec::new();
        for (id, w) in weights {
            let item = u64::from(id.0);
            item_weights.insert(item, w);
            elements.push((id, alloc::vec![item]));
        }
        Self::new(elements, &item_weights)
    }

    fn index(&self, a: ElementId) -> Result<usize> {
        self.universe.binary_search(&a).map_err(|_| Error::UnknownElement(a))
    }

    /// Items covered by `a`, as dense indices.
    pub fn items_of(&self, a: ElementId) -> Result<&[u32]> {
        Ok(&self.items[self.index(a)?])
    }

    pub fn item_count(&self) -> usize {
        self.weights.len()
    }
}

impl SetFunction for CoverageOracle {
    fn universe(&self) -> &[ElementId] {
        &self.universe
    }

    fn value(&self, set: &[ElementId]) -> Result<f64> {
        let mut guard = self.marks.borrow_mut();
        let (marks, epoch) = &mut *guard;
        *epoch = epoch.wrapping_add(1);
        if *epoch == 0 {
            marks.iter_mut().for_each(|m| *m = 0);
            *epoch = 1;
        }
        let mut total = 0.0;
        for &a in set {
            for &item in &self.items[self.index(a)?] {
                let slot = &mut marks[item as usize];
                if *slot != *epoch {
                    *slot = *epoch;
                    total += self.weights[item as usize];
                }
            }
        }
        Ok(total)
    }
}
