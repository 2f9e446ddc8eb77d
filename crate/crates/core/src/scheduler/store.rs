//! Precomputed pairs indexed by time, guess `γ` and error guess `h`.
//!
//! Consecutive pairs of one engine share most of `R`, so a [`PairLog`] stores each
//! change as a delta against the previous pair, with a full snapshot every
//! [`SNAPSHOT_EVERY`] entries to bound reconstruction work.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::ElementId;
use crate::robust::StronglyRobustPair;

pub const SNAPSHOT_EVERY: usize = 64;

/// A change point: from time `t` on (until the next entry) the stored pair is this one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    pub t: usize,
    /// `false` when the engine was empty, i.e. no pair exists.
    pub present: bool,
    pub q: Vec<ElementId>,
    pub r_add: Vec<ElementId>,
    pub r_del: Vec<ElementId>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PairLog {
    entries: Vec<LogEntry>,
    snapshots: Vec<Vec<ElementId>>,
    last_r: Vec<ElementId>,
}

fn sorted_diff(old: &[ElementId], new: &[ElementId]) -> (Vec<ElementId>, Vec<ElementId>) {
    let (mut add, mut del) = (Vec::new(), Vec::new());
    let (mut i, mut j) = (0, 0);
    while i < old.len() || j < new.len() {
        match (old.get(i), new.get(j)) {
            (Some(a), Some(b)) if a == b => {
                i += 1;
                j += 1;
            }
            (Some(a), Some(b)) if a < b => {
                del.push(*a);
                i += 1;
            }
            (Some(_), Some(b)) => {
                add.push(*b);
                j += 1;
            }
            (Some(a), None) => {
                del.push(*a);
                i += 1;
            }
            (None, Some(b)) => {
                add.push(*b);
                j += 1;
            }
            (None, None) => unreachable!(),
        }
    }
    (add, del)
}

impl PairLog {
    pub fn entries(&self) -> &[LogEntry] {
        &self.entries
    }

    /// Records the state from time `t` on; `r` must be sorted. Unchanged states are skipped.
    pub fn push(&mut self, t: usize, state: Option<(&[ElementId], &[ElementId])>) {
        let (present, q, r) = match state {
            Some((q, r)) => (true, q, r),
            None => (false, &[][..], &[][..]),
        };
        if let Some(last) = self.entries.last() {
            if last.present == present && last.q == q && self.last_r == r {
                return;
            }
        }
        let (r_add, r_del) = sorted_diff(&self.last_r, r);
        self.entries.push(LogEntry { t, present, q: q.to_vec(), r_add, r_del });
        self.last_r = r.to_vec();
        if (self.entries.len() - 1) % SNAPSHOT_EVERY == 0 {
            self.snapshots.push(self.last_r.clone());
        }
    }

    /// Rebuilds a log from its entries (as read back from disk).
    pub fn from_entries(entries: Vec<LogEntry>) -> Result<Self> {
        let mut log = PairLog::default();
        let mut r: BTreeSet<ElementId> = BTreeSet::new();
        for (i, e) in entries.into_iter().enumerate() {
            if log.entries.last().map_or(false, |l: &LogEntry| l.t >= e.t) {
                return Err(Error::invalid(alloc::format!("log entry {i} is not in time order")));
            }
            for a in &e.r_del {
                r.remove(a);
            }
            r.extend(e.r_add.iter().copied());
            log.entries.push(e);
            log.last_r = r.iter().copied().collect();
            if i % SNAPSHOT_EVERY == 0 {
                log.snapshots.push(log.last_r.clone());
            }
        }
        Ok(log)
    }

    /// `(Q, R)` in force at time `t`, if any.
    pub fn at(&self, t: usize) -> Option<(Vec<ElementId>, Vec<ElementId>)> {
        let idx = self.entries.partition_point(|e| e.t <= t).checked_sub(1)?;
        let entry = &self.entries[idx];
        if !entry.present {
            return None;
        }
        let snap = idx / SNAPSHOT_EVERY;
        let mut r: BTreeSet<ElementId> = self.snapshots[snap].iter().copied().collect();
        for e in &self.entries[snap * SNAPSHOT_EVERY + 1..=idx] {
            for a in &e.r_del {
                r.remove(a);
            }
            r.extend(e.r_add.iter().copied());
        }
        Some((entry.q.clone(), r.into_iter().collect()))
    }
}

/// Pairs of one guess `γ`, one log per error guess.
#[derive(Clone, Debug, PartialEq)]
pub struct GammaStore {
    pub gamma: f64,
    /// Error guesses `h`, aligned with `logs`.
    pub h_values: Vec<usize>,
    pub logs: Vec<PairLog>,
}

/// Everything the stream phase needs from the precomputation phase.
#[derive(Clone, Debug, PartialEq)]
pub struct PrecomputationStore {
    pub k: usize,
    pub eps: f64,
    pub w: usize,
    pub n: usize,
    /// Indexed like the value grid; `None` where no predicted element is relevant.
    pub per_gamma: Vec<Option<GammaStore>>,
}

impl PrecomputationStore {
    /// `d = 2(h + 2w)`.
    pub fn deletions_for(&self, h: usize) -> usize {
        2 * (h + 2 * self.w)
    }

    /// `(Q_t, R_t)` for guess `γ` and error guess `h`; `None` when nothing was stored.
    pub fn lookup(&self, gamma_index: usize, h_index: usize, t: usize) -> Option<StronglyRobustPair> {
        let gs = self.per_gamma.get(gamma_index)?.as_ref()?;
        let h = *gs.h_values.get(h_index)?;
        let (q, r) = gs.logs[h_index].at(t)?;
        Some(StronglyRobustPair { q, r, d: self.deletions_for(h), eps: self.eps, gamma: gs.gamma, k: self.k })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(v: &[u32]) -> Vec<ElementId> {
        v.iter().map(|&i| ElementId(i)).collect()
    }

    #[test]
    fn log_reconstructs_every_state() {
        let mut log = PairLog::default();
        let mut states = Vec::new();
        for t in 1..=300u32 {
            if t % 7 == 0 {
                log.push(t as usize, None);
                states.push((t, None));
                continue;
            }
            let q = ids(&[t % 5]);
            let r: Vec<ElementId> = ids(&(t / 3..t / 3 + 10 + t % 4).collect::<Vec<_>>());
            log.push(t as usize, Some((&q, &r)));
            states.push((t, Some((q, r))));
        }
        for (t, s) in &states {
            assert_eq!(&log.at(*t as usize), s, "t={t}");
        }
        assert_eq!(log.at(0), None);
        let rebuilt = PairLog::from_entries(log.entries().to_vec()).unwrap();
        for (t, s) in &states {
            assert_eq!(&rebuilt.at(*t as usize), s);
        }
    }

    #[test]
    fn unchanged_states_are_skipped() {
        let mut log = PairLog::default();
        let q = ids(&[1]);
        let r = ids(&[2, 3]);
        log.push(1, Some((&q, &r)));
        log.push(2, Some((&q, &r)));
        assert_eq!(log.entries().len(), 1);
        assert_eq!(log.at(5), Some((q, r)));
    }
}
