//! The main variant: precomputations for a fixed guess `(γ, h)` and the phase-based
//! solution update that warm-starts from a precomputed pair.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;

use crate::engine::{Engine, EngineParams};
use crate::error::{Error, Result};
use crate::oracle::{ElementId, Oracle, Tag};
use crate::robust::{cutoff_level, robust1_from_dynamic, StronglyRobustPair};
use crate::scheduler::store::{GammaStore, PairLog};
use crate::stream::{Op, PredictedTimeline, UpdateEvent};
use crate::util::mix_seed;

/// Drives one engine over the predicted sets of `timeline` and records, for every
/// error guess `h`, the pair extracted with `d = 2(h + 2w)` at every step where the
/// engine changed. The engine does not depend on `h`, so all guesses share it.
#[allow(clippy::too_many_arguments)]
pub fn precomputations_main<O: Oracle>(
    f: &O,
    k: usize,
    eps: f64,
    w: usize,
    timeline: &PredictedTimeline,
    gamma: f64,
    h_values: &[usize],
    seed: u64,
    tag: Tag,
) -> Result<GammaStore> {
    let params = EngineParams { k, gamma, eps, capacity_hint: timeline.peak(), seed, tag };
    let mut engine = Engine::new(f, params)?;
    let mut logs = alloc::vec![PairLog::default(); h_values.len()];
    let deletions: Vec<usize> = h_values.iter().map(|h| 2 * (h + 2 * w)).collect();
    for t in 1..=timeline.n {
        let mut changed = t == 1;
        for &a in &timeline.leaving[t] {
            engine.delete(f, a)?;
            changed = true;
        }
        for &a in &timeline.entering[t] {
            engine.insert(f, a)?;
            changed = true;
        }
        if t == 1 {
            engine.end_init_batch(f)?;
        }
        if !changed {
            continue;
        }
        if engine.active().is_empty() {
            for log in &mut logs {
                log.push(t, None);
            }
            continue;
        }
        let grid = engine.inspect_grid();
        let mut extracted: Vec<(usize, StronglyRobustPair)> = Vec::new();
        for (log, &d) in logs.iter_mut().zip(&deletions) {
            let cut = cutoff_level(&grid, k, d, eps);
            if !extracted.iter().any(|(c, _)| *c == cut) {
                extracted.push((cut, robust1_from_dynamic(&grid, k, d, eps)));
            }
            let pair = &extracted.iter().find(|(c, _)| *c == cut).expect("just inserted").1;
            log.push(t, Some((&pair.q, &pair.r)));
        }
    }
    Ok(GammaStore { gamma, h_values: h_values.to_vec(), logs })
}

/// Engine of a phase; degenerate when the base set already has `k` elements.
#[derive(Clone, Debug)]
pub enum PhaseEngine {
    Trivial { active: BTreeSet<ElementId>, ops_star: u64 },
    Dynamic(Engine),
}

impl PhaseEngine {
    pub fn ops_star(&self) -> u64 {
        match self {
            PhaseEngine::Trivial { ops_star, .. } => *ops_star,
            PhaseEngine::Dynamic(e) => e.ops_star(),
        }
    }

    fn contains(&self, a: ElementId) -> bool {
        match self {
            PhaseEngine::Trivial { active, .. } => active.contains(&a),
            PhaseEngine::Dynamic(e) => e.contains(a),
        }
    }

    fn insert<O: Oracle>(&mut self, f: &O, a: ElementId) -> Result<()> {
        match self {
            PhaseEngine::Trivial { active, ops_star } => {
                active.insert(a);
                *ops_star += 1;
                Ok(())
            }
            PhaseEngine::Dynamic(e) => e.insert(f, a),
        }
    }

    fn delete<O: Oracle>(&mut self, f: &O, a: ElementId) -> Result<()> {
        match self {
            PhaseEngine::Trivial { active, ops_star } => {
                active.remove(&a);
                *ops_star += 1;
                Ok(())
            }
            PhaseEngine::Dynamic(e) => e.delete(f, a),
        }
    }

    fn solution(&self) -> &[ElementId] {
        match self {
            PhaseEngine::Trivial { .. } => &[],
            PhaseEngine::Dynamic(e) => e.solution(),
        }
    }
}

/// `(B, A, η_old)` plus bookkeeping.
#[derive(Clone, Debug)]
pub struct PhaseState {
    pub base: Vec<ElementId>,
    pub engine: PhaseEngine,
    pub eta_old: usize,
    pub started: usize,
    /// Deletion parameter of the pair the phase started from.
    pub d: usize,
    pub batch_len: usize,
}

impl PhaseState {
    /// `|Ops*(A)| > η_old/2 + w`.
    pub fn expired(&self, w: usize) -> bool {
        2 * self.engine.ops_star() > (self.eta_old + 2 * w) as u64
    }
}

/// Record of one phase, for diagnostics.
#[derive(Clone, Debug, PartialEq)]
pub struct PhaseRecord {
    pub gamma_index: usize,
    pub started: usize,
    pub eta_old: usize,
    pub d: usize,
    pub base_len: usize,
    pub batch_len: usize,
    /// `|Ops*(A)|` when the phase ended (or at the end of the stream).
    pub ops_star: u64,
}

/// Per-guess slot: the current phase and a memo of the last evaluated solution.
#[derive(Clone, Debug, Default)]
pub struct MainSlot {
    pub phase: Option<PhaseState>,
    memo: Option<(Vec<ElementId>, f64)>,
}

/// Fixed inputs of [`updatesol_main`].
#[derive(Clone, Copy, Debug)]
pub struct MainParams {
    pub k: usize,
    pub eps: f64,
    pub w: usize,
    pub gamma: f64,
    pub gamma_index: usize,
    pub seed: u64,
    pub tag: Tag,
}

/// What the current step looks like to one slot.
pub struct StepView<'a> {
    pub t: usize,
    /// `η'_t`.
    pub eta_prime: usize,
    /// The event, if it concerns this slot's elements.
    pub event: Option<&'a UpdateEvent>,
    /// `V_t` restricted to this slot's elements, sorted.
    pub active: &'a dyn Fn() -> Vec<ElementId>,
    /// Membership in `V_t`.
    pub is_active: &'a dyn Fn(ElementId) -> bool,
    /// Membership in `V̂_t`.
    pub is_predicted: &'a dyn Fn(ElementId) -> bool,
}

/// One step of the phase-based update. Starts a new phase when there is none or the
/// current one has absorbed more than `η_old/2 + w` updates; the new phase takes
/// `B = Q_t` and batch-inserts `(R_t ∩ V¹_t) ∪ V²_t` into an engine over `f_B` with
/// constraint `k − |B|` and guess `γ(k − |B|)/k`. Returns `S = (B ∪ SOL) ∩ V_t` and,
/// whether a phase started. Finished phases are appended to `ended`.
pub fn updatesol_main<O: Oracle>(
    f: &O,
    slot: &mut MainSlot,
    p: &MainParams,
    step: &StepView<'_>,
    pair: impl FnOnce() -> Option<StronglyRobustPair>,
    ended: &mut Vec<PhaseRecord>,
) -> Result<(Vec<ElementId>, bool)> {
    let start = slot.phase.as_ref().map_or(true, |ph| ph.expired(p.w));
    if start {
        if let Some(old) = slot.phase.take() {
            ended.push(record(p.gamma_index, &old));
        }
        let d = 2 * (step.eta_prime + 2 * p.w);
        let pair = pair().unwrap_or_else(|| StronglyRobustPair::empty(d, p.eps, p.gamma, p.k));
        if pair.d != d {
            return Err(Error::State(format!("pair built with d={} used where d={d} is required", pair.d)));
        }
        let mut base = pair.q.clone();
        base.sort_unstable();
        let reserve: BTreeSet<ElementId> = pair.r.iter().copied().collect();
        let batch: Vec<ElementId> = (step.active)()
            .into_iter()
            .filter(|&a| reserve.contains(&a) || !(step.is_predicted)(a))
            .filter(|a| base.binary_search(a).is_err())
            .collect();
        let engine = if base.len() >= p.k {
            PhaseEngine::Trivial { active: batch.iter().copied().collect(), ops_star: 0 }
        } else {
            let kk = p.k - base.len();
            let params = EngineParams {
                k: kk,
                gamma: p.gamma * kk as f64 / p.k as f64,
                eps: p.eps,
                capacity_hint: batch.len() + step.eta_prime / 2 + p.w + 1,
                seed: mix_seed(p.seed, step.t as u64),
                tag: p.tag,
            };
            let mut e = Engine::with_base(f, params, base.clone())?;
            for &a in &batch {
                e.insert(f, a)?;
            }
            e.end_init_batch(f)?;
            PhaseEngine::Dynamic(e)
        };
        let batch_len = batch.len();
        slot.phase = Some(PhaseState { base, engine, eta_old: step.eta_prime, started: step.t, d, batch_len });
    } else if let Some(ev) = step.event {
        let ph = slot.phase.as_mut().expect("phase exists when not starting");
        match ev.op {
            Op::Insert if !ph.engine.contains(ev.elem) => ph.engine.insert(f, ev.elem)?,
            Op::Delete if ph.engine.contains(ev.elem) => ph.engine.delete(f, ev.elem)?,
            _ => {}
        }
    }
    let ph = slot.phase.as_ref().expect("phase exists");
    let mut s: Vec<ElementId> = ph.base.iter().copied().filter(|&a| (step.is_active)(a)).collect();
    s.extend(ph.engine.solution().iter().copied().filter(|&a| (step.is_active)(a)));
    Ok((s, start))
}

fn record(gamma_index: usize, ph: &PhaseState) -> PhaseRecord {
    PhaseRecord {
        gamma_index,
        started: ph.started,
        eta_old: ph.eta_old,
        d: ph.d,
        base_len: ph.base.len(),
        batch_len: ph.batch_len,
        ops_star: ph.engine.ops_star(),
    }
}

impl MainSlot {
    /// `f(S)` for the solution just returned by [`updatesol_main`]. Free when the whole
    /// base is active (the engine tracks `f(B ∪ SOL)`); otherwise one query, skipped
    /// when `S` is unchanged since the last evaluation.
    pub fn value<O: Oracle>(&mut self, f: &O, s: &[ElementId], tag: Tag) -> Result<f64> {
        if let Some(ph) = &self.phase {
            if let PhaseEngine::Dynamic(e) = &ph.engine {
                if s.len() == ph.base.len() + e.solution().len() {
                    return Ok(e.solution_value());
                }
            }
        }
        if let Some((memo, v)) = &self.memo {
            if memo == s {
                return Ok(*v);
            }
        }
        let v = if s.is_empty() { 0.0 } else { f.evaluate(s, tag)? };
        self.memo = Some((s.to_vec(), v));
        Ok(v)
    }

    /// Ends the slot's phase, e.g. when the slot's restricted active set empties or the
    /// stream is over.
    pub fn reset(&mut self, ended: &mut Vec<PhaseRecord>, gamma_index: usize) {
        if let Some(old) = self.phase.take() {
            ended.push(record(gamma_index, &old));
        }
    }
}
