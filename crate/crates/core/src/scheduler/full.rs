//! The full variant: one main-variant instance per value guess `γ ∈ Γ`, each restricted
//! to the elements relevant to it, with the error guess taken from the online estimate.

use alloc::vec::Vec;

use crate::error::Result;
use crate::oracle::{Oracle, Tag};
use crate::scheduler::grids::GuessGrids;
use crate::scheduler::phase::precomputations_main;
use crate::scheduler::store::PrecomputationStore;
use crate::stream::{PredictedTimeline, PredictionTable};
use crate::util::mix_seed;

/// Runs the main-variant precomputation on `V̂_t(γ)` for every `γ` whose restricted
/// predicted sets are not always empty, for all error guesses at once.
#[allow(clippy::too_many_arguments)]
pub fn precomputations_full<O: Oracle>(
    f: &O,
    k: usize,
    eps: f64,
    w: usize,
    n: usize,
    pred: &PredictionTable,
    grids: &GuessGrids,
    seed: u64,
    tag: Tag,
) -> Result<PrecomputationStore> {
    let mut per_gamma = Vec::with_capacity(grids.gammas.len());
    for (gi, &gamma) in grids.gammas.iter().enumerate() {
        let timeline = PredictedTimeline::filtered(pred, n, |a| grids.active_for(a, gi));
        if timeline.churn() == 0 {
            per_gamma.push(None);
            continue;
        }
        let gs = precomputations_main(f, k, eps, w, &timeline, gamma, &grids.h, mix_seed(seed, gi as u64), tag)?;
        per_gamma.push(Some(gs));
    }
    Ok(PrecomputationStore { k, eps, w, n, per_gamma })
}
