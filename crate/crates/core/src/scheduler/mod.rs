//! The precompute/stream framework.
//!
//! Before the stream, only the predictions are used to precompute summaries of the
//! predicted sets `V̂_t`. During the stream, each step splits the active set into the
//! predicted part `V¹_t` and the rest `V²_t`, updates the variant's state and
//! returns a feasible solution `S_t ⊆ V_t`, `|S_t| ≤ k`.
//!
//! Variants:
//! * `warmup`: known error `η`; a deletion-robust summary of each `V̂_t` plus a
//!   dynamic algorithm on `V²_t`.
//! * `main`: fixed guesses `(γ, h)`; phases warm-started from precomputed pairs.
//! * `full`: the main variant for every `γ ∈ Γ` with the error guess `h` taken from the
//!   online error estimate.
//! * `baseline-dynamic`: the dynamic algorithm on `V_t`, ignoring predictions.

pub mod full;
pub mod grids;
pub mod phase;
pub mod store;
pub mod warmup;

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baseline::lazy_greedy;
use crate::error::{Error, Result};
use crate::multi::DynamicMax;
use crate::oracle::{ElementId, Oracle, Phase, Tag};
use crate::stream::{Op, OnlineError, PredictedTimeline, PredictionTable, UpdateStream};
use crate::util::mix_seed;

use self::full::precomputations_full;
use self::grids::{error_grid, error_guess, GuessGrids};
use self::phase::{precomputations_main, updatesol_main, MainParams, MainSlot, PhaseRecord, StepView};
use self::store::PrecomputationStore;
use self::warmup::{warmup_precomputations, Robust2Memo, WarmupStore};

pub const TAG_GRIDS: Tag = Tag::new(Phase::Precompute, "grids");
pub const TAG_PRE_ENGINE: Tag = Tag::new(Phase::Precompute, "precompute_engine");
pub const TAG_ROBUST1: Tag = Tag::new(Phase::Precompute, "robust1");
pub const TAG_MAIN_GAMMA: Tag = Tag::new(Phase::Precompute, "main_gamma");
pub const TAG_PHASE_ENGINE: Tag = Tag::new(Phase::Stream, "phase_engine");
pub const TAG_ARGMAX: Tag = Tag::new(Phase::Stream, "argmax");
pub const TAG_ROBUST2: Tag = Tag::new(Phase::Stream, "robust2");
pub const TAG_DYNAMIC: Tag = Tag::new(Phase::Stream, "dynamic");
pub const TAG_DYNAMIC_SINGLETON: Tag = Tag::new(Phase::Stream, "dynamic_singleton");

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    Warmup,
    Main,
    Full,
    BaselineDynamic,
}

impl Variant {
    pub const ALL: [Variant; 4] = [Variant::Warmup, Variant::Main, Variant::Full, Variant::BaselineDynamic];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Warmup => "warmup",
            Variant::Main => "main",
            Variant::Full => "full",
            Variant::BaselineDynamic => "baseline-dynamic",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown variant {s:?}")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameworkConfig {
    pub k: usize,
    pub eps: f64,
    pub variant: Variant,
    /// The true error `η`; required by `warmup`, used by `main` to pick `h`.
    pub known_eta: Option<usize>,
    /// Fixed guess for `main`; defaults to the lazy-greedy value of all predicted elements.
    pub gamma: Option<f64>,
    pub seed: u64,
}

impl FrameworkConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(self.eps > 0.0 && self.eps < 0.5) {
            return Err(Error::invalid(format!("eps must lie in (0, 1/2), got {}", self.eps)));
        }
        if self.variant == Variant::Warmup && self.known_eta.is_none() {
            return Err(Error::invalid("the warm-up variant needs the prediction error"));
        }
        if let Some(g) = self.gamma {
            if !(g > 0.0) || !g.is_finite() {
                return Err(Error::invalid(format!("gamma must be positive, got {g}")));
            }
        }
        Ok(())
    }
}

/// Output of the precomputation phase.
#[derive(Clone, Debug, PartialEq)]
pub enum Precomputed {
    None,
    Warmup(WarmupStore),
    Main { gamma: f64, h_index: usize, h: Vec<usize>, store: PrecomputationStore },
    Full { grids: GuessGrids, store: PrecomputationStore },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepOutput {
    pub t: usize,
    pub solution: Vec<ElementId>,
    /// Online error estimate `η_t`.
    pub eta_t: usize,
    /// Number of phases (over all guesses) that started at this step.
    pub restarts: usize,
    /// `η_t` exceeded every error guess.
    pub overflow: bool,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunOutput {
    pub steps: Vec<StepOutput>,
    pub phases: Vec<PhaseRecord>,
    /// Insert calls received by the warm-up variant's dynamic algorithm on `V²`.
    pub v2_insertions: u64,
}

fn check_universe<O: Oracle>(f: &O, elems: impl IntoIterator<Item = ElementId>) -> Result<()> {
    for a in elems {
        if f.universe().binary_search(&a).is_err() {
            return Err(Error::UnknownElement(a));
        }
    }
    Ok(())
}

/// Input validation shared by both phases; performs no queries.
pub fn validate_inputs<O: Oracle>(f: &O, stream: &UpdateStream, pred: &PredictionTable, config: &FrameworkConfig) -> Result<()> {
    config.validate()?;
    check_universe(f, stream.elements())?;
    if config.variant != Variant::BaselineDynamic {
        check_universe(f, pred.entries().keys().copied())?;
        pred.covers(stream)?;
    }
    Ok(())
}

/// The precomputation phase; sees only the predictions and the stream length `n`.
pub fn precompute<O: Oracle>(f: &O, n: usize, pred: &PredictionTable, config: &FrameworkConfig) -> Result<Precomputed> {
    config.validate()?;
    let (k, eps, w) = (config.k, config.eps, pred.w());
    let seed = mix_seed(config.seed, 0x9E);
    match config.variant {
        Variant::BaselineDynamic => Ok(Precomputed::None),
        Variant::Warmup => {
            let eta = config.known_eta.expect("validated");
            let timeline = PredictedTimeline::new(pred, n);
            Ok(Precomputed::Warmup(warmup_precomputations(f, k, eps, eta, w, &timeline, seed, TAG_ROBUST1)?))
        }
        Variant::Main => {
            let h = error_grid(n, k, w);
            let h_index = config.known_eta.map_or(0, |eta| error_guess(&h, eta).0);
            let gamma = match config.gamma {
                Some(g) => g,
                None => {
                    let predicted: Vec<ElementId> = pred.entries().keys().copied().collect();
                    let (_, g) = lazy_greedy(f, &predicted, k, TAG_MAIN_GAMMA)?;
                    if g > 0.0 {
                        g
                    } else {
                        1.0
                    }
                }
            };
            let timeline = PredictedTimeline::new(pred, n);
            let gs = precomputations_main(f, k, eps, w, &timeline, gamma, &h[h_index..=h_index], seed, TAG_PRE_ENGINE)?;
            let store = PrecomputationStore { k, eps, w, n, per_gamma: alloc::vec![Some(gs)] };
            Ok(Precomputed::Main { gamma, h_index, h, store })
        }
        Variant::Full => {
            let grids = GuessGrids::build(f, k, eps, n, w, TAG_GRIDS)?;
            let store = precomputations_full(f, k, eps, w, n, pred, &grids, seed, TAG_PRE_ENGINE)?;
            Ok(Precomputed::Full { grids, store })
        }
    }
}

/// Precomputation followed by the stream phase.
pub fn run_framework<O: Oracle>(
    f: &O,
    stream: &UpdateStream,
    pred: &PredictionTable,
    config: &FrameworkConfig,
) -> Result<RunOutput> {
    validate_inputs(f, stream, pred, config)?;
    let pre = precompute(f, stream.len(), pred, config)?;
    run_stream(f, stream, pred, config, &pre)
}

/// The stream phase.
pub fn run_stream<O: Oracle>(
    f: &O,
    stream: &UpdateStream,
    pred: &PredictionTable,
    config: &FrameworkConfig,
    pre: &Precomputed,
) -> Result<RunOutput> {
    run_stream_with(f, stream, pred, config, pre, |_| {})
}

/// [`run_stream`] with a callback invoked after every step.
pub fn run_stream_with<O: Oracle>(
    f: &O,
    stream: &UpdateStream,
    pred: &PredictionTable,
    config: &FrameworkConfig,
    pre: &Precomputed,
    mut on_step: impl FnMut(&StepOutput),
) -> Result<RunOutput> {
    validate_inputs(f, stream, pred, config)?;
    let n = stream.len();
    let (k, eps, w) = (config.k, config.eps, pred.w());
    let seed = mix_seed(config.seed, 0x5E);
    let mut out = RunOutput::default();
    let mut active: BTreeSet<ElementId> = BTreeSet::new();
    let mut tracker = OnlineError::new(pred, n);
    let track_error = config.variant != Variant::BaselineDynamic;

    let mut dynamic = DynamicMax::new(k, eps, 0, seed, TAG_DYNAMIC, TAG_DYNAMIC_SINGLETON)?;
    let timeline = match config.variant {
        Variant::Warmup => Some(PredictedTimeline::new(pred, n)),
        _ => None,
    };
    let mut memo = Robust2Memo::default();
    let slot_count = match pre {
        Precomputed::Full { grids, .. } => grids.gammas.len(),
        Precomputed::Main { .. } => 1,
        _ => 0,
    };
    let mut slots: Vec<MainSlot> = (0..slot_count).map(|_| MainSlot::default()).collect();
    let mut counts: Vec<usize> = alloc::vec![0; slot_count];

    for ev in stream.events() {
        let t = ev.t;
        match ev.op {
            Op::Insert => active.insert(ev.elem),
            Op::Delete => active.remove(&ev.elem),
        };
        let eta_t = if track_error { tracker.step(ev)? } else { 0 };
        let is_active = |a: ElementId| active.contains(&a);
        let is_predicted = |a: ElementId| pred.is_predicted(a, t);
        let mut step = StepOutput { t, solution: Vec::new(), eta_t, restarts: 0, overflow: false };
        match (config.variant, pre) {
            (Variant::BaselineDynamic, _) => {
                match ev.op {
                    Op::Insert => dynamic.insert(f, ev.elem)?,
                    Op::Delete => dynamic.delete(f, ev.elem)?,
                }
                step.solution = dynamic.solution().0;
            }
            (Variant::Warmup, Precomputed::Warmup(store)) => {
                let tl = timeline.as_ref().expect("built for warm-up");
                let mut touched: Vec<ElementId> = alloc::vec![ev.elem];
                touched.extend(tl.entering[t].iter().copied());
                touched.extend(tl.leaving[t].iter().copied());
                for a in touched {
                    let want = active.contains(&a) && !pred.is_predicted(a, t);
                    match (want, dynamic.contains(a)) {
                        (true, false) => dynamic.insert(f, a)?,
                        (false, true) => dynamic.delete(f, a)?,
                        _ => {}
                    }
                }
                let (s1, v1) = memo.solve(f, store, t, k, is_active, TAG_ROBUST2)?;
                let (s2, v2) = dynamic.solution();
                step.solution = if v1 >= v2 { s1 } else { s2 };
            }
            (Variant::Main, Precomputed::Main { gamma, h_index, h, store }) => {
                let p = MainParams { k, eps, w, gamma: *gamma, gamma_index: 0, seed, tag: TAG_PHASE_ENGINE };
                let all_active = || active.iter().copied().collect::<Vec<_>>();
                let view = StepView {
                    t,
                    eta_prime: h[*h_index],
                    event: Some(ev),
                    active: &all_active,
                    is_active: &is_active,
                    is_predicted: &is_predicted,
                };
                let (s, started) =
                    updatesol_main(f, &mut slots[0], &p, &view, || store.lookup(0, 0, t), &mut out.phases)?;
                step.restarts = started as usize;
                step.solution = s;
            }
            (Variant::Full, Precomputed::Full { grids, store }) => {
                let range = grids.gamma_range(ev.elem);
                for gi in range.clone() {
                    match ev.op {
                        Op::Insert => counts[gi] += 1,
                        Op::Delete => counts[gi] -= 1,
                    }
                }
                let (hi, overflow) = error_guess(&grids.h, eta_t);
                step.overflow = overflow;
                let mut candidates: Vec<(usize, Vec<ElementId>)> = Vec::new();
                for gi in 0..slot_count {
                    if counts[gi] == 0 {
                        slots[gi].reset(&mut out.phases, gi);
                        continue;
                    }
                    let p = MainParams {
                        k,
                        eps,
                        w,
                        gamma: grids.gammas[gi],
                        gamma_index: gi,
                        seed: mix_seed(seed, gi as u64),
                        tag: TAG_PHASE_ENGINE,
                    };
                    let restricted = || active.iter().copied().filter(|&a| grids.active_for(a, gi)).collect::<Vec<_>>();
                    let view = StepView {
                        t,
                        eta_prime: grids.h[hi],
                        event: range.contains(&gi).then_some(ev),
                        active: &restricted,
                        is_active: &is_active,
                        is_predicted: &is_predicted,
                    };
                    let (s, started) =
                        updatesol_main(f, &mut slots[gi], &p, &view, || store.lookup(gi, hi, t), &mut out.phases)?;
                    step.restarts += started as usize;
                    candidates.push((gi, s));
                }
                if candidates.len() == 1 {
                    step.solution = candidates.pop().expect("one candidate").1;
                } else {
                    let mut best: Option<(f64, Vec<ElementId>)> = None;
                    for (gi, s) in candidates {
                        let v = slots[gi].value(f, &s, TAG_ARGMAX)?;
                        if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
                            best = Some((v, s));
                        }
                    }
                    step.solution = best.map(|(_, s)| s).unwrap_or_default();
                }
            }
            (variant, _) => {
                return Err(Error::invalid(format!("precomputation does not match variant {variant}")));
            }
        }
        on_step(&step);
        out.steps.push(step);
    }
    for (gi, slot) in slots.iter_mut().enumerate() {
        slot.reset(&mut out.phases, gi);
    }
    out.v2_insertions = if config.variant == Variant::Warmup { dynamic.insertions() } else { 0 };
    Ok(out)
}
