//! Update streams, predictions and prediction error.
//!
//! Time is discrete: the stream has exactly one event per step `t = 1..=n`, and
//! `V_0 = ∅`. An element that is never deleted has true deletion time `n + 1`, and
//! a predicted element that is never inserted has true insertion time `n + 1`.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::ElementId;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Op {
    #[serde(rename = "ins")]
    Insert,
    #[serde(rename = "del")]
    Delete,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct UpdateEvent {
    pub t: usize,
    pub op: Op,
    pub elem: ElementId,
}

/// A validated stream: consecutive times from 1, inserts only of inactive elements
/// that were never inserted before, deletes only of active elements.
#[derive(Clone, Debug, PartialEq)]
pub struct UpdateStream {
    events: Vec<UpdateEvent>,
    inserted_at: BTreeMap<ElementId, usize>,
    deleted_at: BTreeMap<ElementId, usize>,
}

impl UpdateStream {
    pub fn new(events: Vec<UpdateEvent>) -> Result<Self> {
        let mut inserted_at = BTreeMap::new();
        let mut deleted_at = BTreeMap::new();
        for (i, ev) in events.iter().enumerate() {
            let t = i + 1;
            if ev.t != t {
                return Err(Error::MalformedStream { t, reason: format!("expected time {t}, found {}", ev.t) });
            }
            match ev.op {
                Op::Insert => {
                    if inserted_at.insert(ev.elem, t).is_some() {
                        return Err(Error::MalformedStream {
                            t,
                            reason: format!("element {} inserted twice", ev.elem),
                        });
                    }
                }
                Op::Delete => {
                    if !inserted_at.contains_key(&ev.elem) || deleted_at.contains_key(&ev.elem) {
                        return Err(Error::MalformedStream {
                            t,
                            reason: format!("element {} deleted while inactive", ev.elem),
                        });
                    }
                    deleted_at.insert(ev.elem, t);
                }
            }
        }
        Ok(UpdateStream { events, inserted_at, deleted_at })
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> &[UpdateEvent] {
        &self.events
    }

    /// Event at time `t` (1-based).
    pub fn event(&self, t: usize) -> Option<&UpdateEvent> {
        t.checked_sub(1).and_then(|i| self.events.get(i))
    }

    /// Elements that are inserted at some point, sorted.
    pub fn elements(&self) -> impl Iterator<Item = ElementId> + '_ {
        self.inserted_at.keys().copied()
    }

    pub fn insertion_time(&self, a: ElementId) -> Option<usize> {
        self.inserted_at.get(&a).copied()
    }

    pub fn deletion_time(&self, a: ElementId) -> Option<usize> {
        self.deleted_at.get(&a).copied()
    }

    /// True insertion time with the `n + 1` convention for elements never inserted.
    pub fn t_ins(&self, a: ElementId) -> i64 {
        self.insertion_time(a).unwrap_or(self.len() + 1) as i64
    }

    /// True deletion time with the `n + 1` convention for elements never deleted.
    pub fn t_del(&self, a: ElementId) -> i64 {
        self.deletion_time(a).unwrap_or(self.len() + 1) as i64
    }

    /// `V_t`, sorted.
    pub fn active_set(&self, t: usize) -> Result<Vec<ElementId>> {
        if t > self.len() {
            return Err(Error::invalid(format!("time {t} beyond stream length {}", self.len())));
        }
        let mut active = BTreeSet::new();
        for ev in &self.events[..t] {
            match ev.op {
                Op::Insert => active.insert(ev.elem),
                Op::Delete => active.remove(&ev.elem),
            };
        }
        Ok(active.into_iter().collect())
    }

    pub fn is_active(&self, a: ElementId, t: usize) -> bool {
        match self.insertion_time(a) {
            Some(ins) => ins <= t && self.deletion_time(a).map_or(true, |del| del > t),
            None => false,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prediction {
    pub t_ins_hat: i64,
    pub t_del_hat: i64,
}

/// Predicted insertion and deletion times plus the window tolerance `w`.
#[derive(Clone, Debug, PartialEq)]
pub struct PredictionTable {
    entries: BTreeMap<ElementId, Prediction>,
    w: usize,
}

impl PredictionTable {
    pub fn new(entries: BTreeMap<ElementId, Prediction>, w: usize) -> Result<Self> {
        for (a, p) in &entries {
            if p.t_ins_hat > p.t_del_hat {
                return Err(Error::invalid(format!(
                    "prediction for {a} has insertion {} after deletion {}",
                    p.t_ins_hat, p.t_del_hat
                )));
            }
        }
        Ok(PredictionTable { entries, w })
    }

    /// Exact predictions for every element of the stream.
    pub fn exact(stream: &UpdateStream, w: usize) -> Self {
        let entries = stream
            .elements()
            .map(|a| (a, Prediction { t_ins_hat: stream.t_ins(a), t_del_hat: stream.t_del(a) }))
            .collect();
        PredictionTable { entries, w }
    }

    pub fn w(&self) -> usize {
        self.w
    }

    pub fn get(&self, a: ElementId) -> Option<Prediction> {
        self.entries.get(&a).copied()
    }

    pub fn entries(&self) -> &BTreeMap<ElementId, Prediction> {
        &self.entries
    }

    pub fn with_w(&self, w: usize) -> Self {
        PredictionTable { entries: self.entries.clone(), w }
    }

    /// Inclusive window `[t̂⁺ − w, t̂⁻ + w]` during which `a` is predicted.
    pub fn window(&self, a: ElementId) -> Option<(i64, i64)> {
        let w = self.w as i64;
        self.get(a).map(|p| (p.t_ins_hat - w, p.t_del_hat + w))
    }

    pub fn is_predicted(&self, a: ElementId, t: usize) -> bool {
        self.window(a).map_or(false, |(lo, hi)| lo <= t as i64 && t as i64 <= hi)
    }

    /// `V̂_t = {a : t̂⁺_a ≤ t + w and t̂⁻_a ≥ t − w}`, sorted.
    pub fn predicted_set(&self, t: usize) -> Vec<ElementId> {
        self.entries.keys().copied().filter(|&a| self.is_predicted(a, t)).collect()
    }

    /// Checks that every element of the stream has a prediction.
    pub fn covers(&self, stream: &UpdateStream) -> Result<()> {
        match stream.elements().find(|a| !self.entries.contains_key(a)) {
            Some(a) => Err(Error::MissingPrediction(a)),
            None => Ok(()),
        }
    }
}

fn violates(pred: Prediction, t_ins: i64, t_del: i64, w: usize) -> bool {
    let w = w as i64;
    (pred.t_ins_hat - t_ins).abs() > w || (pred.t_del_hat - t_del).abs() > w
}

/// Number of elements whose insertion or deletion time is mispredicted by more than `w`.
///
/// Elements in neither the stream nor the table count as correctly predicted.
pub fn prediction_error(stream: &UpdateStream, pred: &PredictionTable) -> Result<usize> {
    pred.covers(stream)?;
    Ok(pred
        .entries
        .iter()
        .filter(|(&a, &p)| violates(p, stream.t_ins(a), stream.t_del(a), pred.w))
        .count())
}

/// `(V¹_t, V²_t) = (V_t ∩ V̂_t, V_t \ V̂_t)`.
pub fn partition(
    stream: &UpdateStream,
    pred: &PredictionTable,
    t: usize,
) -> Result<(Vec<ElementId>, Vec<ElementId>)> {
    let active = stream.active_set(t)?;
    Ok(active.into_iter().partition(|&a| pred.is_predicted(a, t)))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Check {
    NotInserted,
    NotDeleted,
}

/// Online estimate `η_t` of the prediction error.
///
/// An element is flagged as soon as a violation is certain: it was inserted or deleted
/// more than `w` away from its prediction, or its predicted insertion (deletion) window
/// has closed without the insertion (deletion) happening. At `t = n` the remaining
/// elements are settled against the `n + 1` convention, so `η_n = η`.
#[derive(Clone, Debug)]
pub struct OnlineError<'a> {
    pred: &'a PredictionTable,
    n: usize,
    t: usize,
    checks: BTreeMap<usize, Vec<(ElementId, Check)>>,
    inserted: BTreeMap<ElementId, usize>,
    deleted: BTreeSet<ElementId>,
    flagged: BTreeSet<ElementId>,
}

impl<'a> OnlineError<'a> {
    pub fn new(pred: &'a PredictionTable, n: usize) -> Self {
        let w = pred.w as i64;
        let mut checks: BTreeMap<usize, Vec<(ElementId, Check)>> = BTreeMap::new();
        for (&a, p) in &pred.entries {
            for (time, kind) in [(p.t_ins_hat, Check::NotInserted), (p.t_del_hat, Check::NotDeleted)] {
                let due = (time + w + 1).max(1);
                if due <= n as i64 {
                    checks.entry(due as usize).or_default().push((a, kind));
                }
            }
        }
        OnlineError {
            pred,
            n,
            t: 0,
            checks,
            inserted: BTreeMap::new(),
            deleted: BTreeSet::new(),
            flagged: BTreeSet::new(),
        }
    }

    pub fn current(&self) -> usize {
        self.flagged.len()
    }

    pub fn time(&self) -> usize {
        self.t
    }

    /// Consumes the event at the next time step and returns `η_t`.
    pub fn step(&mut self, ev: &UpdateEvent) -> Result<usize> {
        let t = self.t + 1;
        if ev.t != t || t > self.n {
            return Err(Error::MalformedStream { t, reason: format!("online error tracker expected step {t}") });
        }
        self.t = t;
        let w = self.pred.w as i64;
        let p = self.pred.get(ev.elem).ok_or(Error::MissingPrediction(ev.elem))?;
        match ev.op {
            Op::Insert => {
                self.inserted.insert(ev.elem, t);
                if (p.t_ins_hat - t as i64).abs() > w {
                    self.flagged.insert(ev.elem);
                }
            }
            Op::Delete => {
                self.deleted.insert(ev.elem);
                if (p.t_del_hat - t as i64).abs() > w {
                    self.flagged.insert(ev.elem);
                }
            }
        }
        if let Some(due) = self.checks.remove(&t) {
            for (a, kind) in due {
                let late = match kind {
                    Check::NotInserted => !self.inserted.contains_key(&a),
                    Check::NotDeleted => self.inserted.contains_key(&a) && !self.deleted.contains(&a),
                };
                if late {
                    self.flagged.insert(a);
                }
            }
        }
        if t == self.n {
            let end = self.n as i64 + 1;
            for (&a, &p) in &self.pred.entries {
                if self.flagged.contains(&a) {
                    continue;
                }
                let t_ins = self.inserted.get(&a).map_or(end, |&x| x as i64);
                let t_del = if self.deleted.contains(&a) { None } else { Some(end) };
                // deleted elements were checked exactly when the deletion happened
                let bad_del = t_del.map_or(false, |td| (p.t_del_hat - td).abs() > w);
                if (p.t_ins_hat - t_ins).abs() > w || bad_del {
                    self.flagged.insert(a);
                }
            }
        }
        Ok(self.flagged.len())
    }
}

/// `η_t` obtained by replaying the first `t` events.
pub fn online_error(stream: &UpdateStream, pred: &PredictionTable, t: usize) -> Result<usize> {
    pred.covers(stream)?;
    if t == 0 || t > stream.len() {
        return Err(Error::invalid(format!("time {t} outside 1..={}", stream.len())));
    }
    let mut tracker = OnlineError::new(pred, stream.len());
    let mut eta = 0;
    for ev in &stream.events()[..t] {
        eta = tracker.step(ev)?;
    }
    Ok(eta)
}

/// Per-step changes of `V̂_t`: `entering[t]` holds the elements of `V̂_t \ V̂_{t−1}` and
/// `leaving[t]` those of `V̂_{t−1} \ V̂_t`, for `t = 1..=n` (`V̂_0 = ∅`).
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PredictedTimeline {
    pub n: usize,
    pub entering: Vec<Vec<ElementId>>,
    pub leaving: Vec<Vec<ElementId>>,
}

impl PredictedTimeline {
    pub fn new(pred: &PredictionTable, n: usize) -> Self {
        Self::filtered(pred, n, |_| true)
    }

    /// Timeline of `{a ∈ V̂_t : keep(a)}`.
    pub fn filtered(pred: &PredictionTable, n: usize, mut keep: impl FnMut(ElementId) -> bool) -> Self {
        let mut entering = vec![Vec::new(); n + 1];
        let mut leaving = vec![Vec::new(); n + 1];
        for &a in pred.entries.keys() {
            let (lo, hi) = pred.window(a).expect("key present");
            let lo = lo.max(1);
            let hi = hi.min(n as i64);
            if lo > hi || !keep(a) {
                continue;
            }
            entering[lo as usize].push(a);
            if hi < n as i64 {
                leaving[hi as usize + 1].push(a);
            }
        }
        PredictedTimeline { n, entering, leaving }
    }

    /// Largest `|V̂_t|` over `t`.
    pub fn peak(&self) -> usize {
        let mut size = 0usize;
        let mut peak = 0;
        for t in 1..=self.n {
            size = size + self.entering[t].len() - self.leaving[t].len();
            peak = peak.max(size);
        }
        peak
    }

    /// `Σ_t |V̂_t Δ V̂_{t−1}|`.
    pub fn churn(&self) -> usize {
        (1..=self.n).map(|t| self.entering[t].len() + self.leaving[t].len()).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(t: usize, op: Op, e: u32) -> UpdateEvent {
        UpdateEvent { t, op, elem: ElementId(e) }
    }

    fn table(rows: &[(u32, i64, i64)], w: usize) -> PredictionTable {
        let entries = rows
            .iter()
            .map(|&(a, i, d)| (ElementId(a), Prediction { t_ins_hat: i, t_del_hat: d }))
            .collect();
        PredictionTable::new(entries, w).unwrap()
    }

    #[test]
    fn active_set_basic() {
        let s = UpdateStream::new(vec![ev(1, Op::Insert, 0), ev(2, Op::Insert, 1), ev(3, Op::Delete, 0)]).unwrap();
        assert_eq!(s.active_set(3).unwrap(), vec![ElementId(1)]);
        assert!(s.active_set(0).unwrap().is_empty());
        assert!(s.active_set(4).is_err());
    }

    #[test]
    fn malformed_streams_rejected() {
        let double = UpdateStream::new(vec![ev(1, Op::Insert, 0), ev(2, Op::Delete, 0), ev(3, Op::Insert, 0)]);
        assert!(matches!(double, Err(Error::MalformedStream { t: 3, .. })));
        let inactive = UpdateStream::new(vec![ev(1, Op::Delete, 4)]);
        assert!(matches!(inactive, Err(Error::MalformedStream { t: 1, .. })));
        let gap = UpdateStream::new(vec![ev(2, Op::Insert, 4)]);
        assert!(matches!(gap, Err(Error::MalformedStream { t: 1, .. })));
    }

    #[test]
    fn predicted_window() {
        let p = table(&[(0, 5, 10)], 2);
        let times: Vec<usize> = (1..20).filter(|&t| p.is_predicted(ElementId(0), t)).collect();
        assert_eq!(times, (3..=12).collect::<Vec<_>>());
        let p0 = p.with_w(0);
        assert!(!p0.is_predicted(ElementId(0), 11));
    }

    #[test]
    fn inverted_prediction_rejected() {
        let mut entries = BTreeMap::new();
        entries.insert(ElementId(0), Prediction { t_ins_hat: 4, t_del_hat: 3 });
        assert!(PredictionTable::new(entries, 0).is_err());
    }

    #[test]
    fn error_of_single_shift() {
        let s = UpdateStream::new(vec![ev(1, Op::Insert, 0), ev(2, Op::Insert, 1), ev(3, Op::Delete, 0)]).unwrap();
        let mut p = PredictionTable::exact(&s, 1);
        assert_eq!(prediction_error(&s, &p).unwrap(), 0);
        p.entries.get_mut(&ElementId(1)).unwrap().t_ins_hat = 4;
        p.entries.get_mut(&ElementId(1)).unwrap().t_del_hat = 4;
        assert_eq!(prediction_error(&s, &p).unwrap(), 1);
    }

    #[test]
    fn missing_prediction_is_an_error() {
        let s = UpdateStream::new(vec![ev(1, Op::Insert, 0)]).unwrap();
        let p = table(&[], 0);
        assert_eq!(prediction_error(&s, &p), Err(Error::MissingPrediction(ElementId(0))));
    }

    #[test]
    fn online_late_insertion() {
        // predicted (5, 10), actually inserted at 9, w = 2: flagged at t = 8
        let mut events: Vec<UpdateEvent> = (1..=8).map(|t| ev(t, Op::Insert, 100 + t as u32)).collect();
        events.push(ev(9, Op::Insert, 0));
        events.push(ev(10, Op::Insert, 200));
        let s = UpdateStream::new(events).unwrap();
        let mut rows: Vec<(u32, i64, i64)> = s
            .elements()
            .filter(|a| a.0 != 0)
            .map(|a| (a.0, s.t_ins(a), s.t_del(a)))
            .collect();
        rows.push((0, 5, 10));
        let p = table(&rows, 2);
        let trace: Vec<usize> = (1..=10).map(|t| online_error(&s, &p, t).unwrap()).collect();
        assert_eq!(trace, vec![0, 0, 0, 0, 0, 0, 0, 1, 1, 1]);
        assert_eq!(prediction_error(&s, &p).unwrap(), 1);
    }

    #[test]
    fn online_finalizes_far_future_predictions() {
        // never deleted, but predicted to leave far after the end
        let s = UpdateStream::new(vec![ev(1, Op::Insert, 0), ev(2, Op::Insert, 1)]).unwrap();
        let p = table(&[(0, 1, 50), (1, 2, 3)], 0);
        assert_eq!(online_error(&s, &p, 1).unwrap(), 0);
        assert_eq!(online_error(&s, &p, 2).unwrap(), 1);
        assert_eq!(prediction_error(&s, &p).unwrap(), 1);
    }

    #[test]
    fn timeline_matches_predicted_sets() {
        let p = table(&[(0, 1, 3), (1, 4, 9), (2, -5, -1), (3, 8, 30)], 1);
        let n = 10;
        let tl = PredictedTimeline::new(&p, n);
        let mut cur: BTreeSet<ElementId> = BTreeSet::new();
        for t in 1..=n {
            for a in &tl.leaving[t] {
                assert!(cur.remove(a));
            }
            for a in &tl.entering[t] {
                assert!(cur.insert(*a));
            }
            assert_eq!(cur.iter().copied().collect::<Vec<_>>(), p.predicted_set(t), "t={t}");
        }
    }

    #[test]
    fn partition_exact_predictions() {
        let s = UpdateStream::new(vec![ev(1, Op::Insert, 0), ev(2, Op::Insert, 1), ev(3, Op::Delete, 0)]).unwrap();
        let p = PredictionTable::exact(&s, 0);
        for t in 1..=3 {
            let (v1, v2) = partition(&s, &p, t).unwrap();
            assert!(v2.is_empty());
            assert_eq!(v1, s.active_set(t).unwrap());
        }
    }
}
