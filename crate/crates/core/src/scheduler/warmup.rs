//! The warm-up variant: a deletion-robust summary of every predicted set, completed at
//! stream time by a dynamic algorithm over the unpredicted elements.

use alloc::collections::BTreeSet;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::Result;
use crate::oracle::{ElementId, Oracle, Tag};
use crate::robust::{robust1_standalone, robust2, StronglyRobustPair};
use crate::stream::PredictedTimeline;
use crate::util::mix_seed;

/// `P_t` as change points: `points[i]` holds from its time until the next point.
#[derive(Clone, Debug, PartialEq)]
pub struct WarmupStore {
    pub d: usize,
    pub points: Vec<(usize, Arc<Vec<StronglyRobustPair>>)>,
}

impl WarmupStore {
    /// Index of the change point in force at `t`.
    pub fn index_at(&self, t: usize) -> Option<usize> {
        self.points.partition_point(|(from, _)| *from <= t).checked_sub(1)
    }

    pub fn at(&self, t: usize) -> Option<&Arc<Vec<StronglyRobustPair>>> {
        self.index_at(t).map(|i| &self.points[i].1)
    }
}

/// `P_t = Robust1(f, V̂_t, k, d = η + 2w)`, recomputed only when `V̂_t` changes.
#[allow(clippy::too_many_arguments)]
pub fn warmup_precomputations<O: Oracle>(
    f: &O,
    k: usize,
    eps: f64,
    eta: usize,
    w: usize,
    timeline: &PredictedTimeline,
    seed: u64,
    tag: Tag,
) -> Result<WarmupStore> {
    let d = eta + 2 * w;
    let mut predicted: BTreeSet<ElementId> = BTreeSet::new();
    let mut points = Vec::new();
    for t in 1..=timeline.n {
        if t > 1 && timeline.entering[t].is_empty() && timeline.leaving[t].is_empty() {
            continue;
        }
        for a in &timeline.leaving[t] {
            predicted.remove(a);
        }
        predicted.extend(timeline.entering[t].iter().copied());
        let v: Vec<ElementId> = predicted.iter().copied().collect();
        let pairs = robust1_standalone(f, &v, k, d, eps, mix_seed(seed, t as u64), tag)?;
        points.push((t, Arc::new(pairs)));
    }
    Ok(WarmupStore { d, points })
}

/// Memo of the last second-stage answer, keyed by change point and deleted set.
#[derive(Clone, Debug, Default)]
pub struct Robust2Memo {
    key: Option<(usize, Vec<ElementId>)>,
    answer: (Vec<ElementId>, f64),
}

impl Robust2Memo {
    /// `Robust2(f, P_t, V̂_t \ V_t, k)`; only the deleted elements that occur in `P_t`
    /// matter, and an unchanged question is answered from the memo.
    pub fn solve<O: Oracle>(
        &mut self,
        f: &O,
        store: &WarmupStore,
        t: usize,
        k: usize,
        is_active: impl Fn(ElementId) -> bool,
        tag: Tag,
    ) -> Result<(Vec<ElementId>, f64)> {
        let Some(idx) = store.index_at(t) else { return Ok((Vec::new(), 0.0)) };
        let pairs = &store.points[idx].1;
        let mut members: BTreeSet<ElementId> = BTreeSet::new();
        for p in pairs.iter() {
            members.extend(p.q.iter().copied());
            members.extend(p.r.iter().copied());
        }
        let deleted: Vec<ElementId> = members.into_iter().filter(|&a| !is_active(a)).collect();
        let key = (idx, deleted);
        if self.key.as_ref() != Some(&key) {
            let d: BTreeSet<ElementId> = key.1.iter().copied().collect();
            self.answer = robust2(f, pairs, &d, k, tag)?;
            self.key = Some(key);
        }
        Ok(self.answer.clone())
    }
}
