//! Guess grids: the value grid `Γ` and the error grid `H`.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::multi::{relevant, relevant_exponents};
use crate::oracle::{ElementId, Oracle, Tag};

/// `H = {⌈n/2^i⌉ : i = 0..=⌊log₂(n / max(k − 2w, 1))⌋}`, largest first.
pub fn error_grid(n: usize, k: usize, w: usize) -> Vec<usize> {
    let n = n.max(1);
    let floor = k.saturating_sub(2 * w).max(1);
    let mut h = alloc::vec![n];
    let mut i = 1u32;
    while i < usize::BITS && (n >> i) >= floor {
        h.push(n.div_ceil(1 << i));
        i += 1;
    }
    h
}

/// Index of `min{h ∈ H : h ≥ η}` in a largest-first grid, and whether `η` exceeded
/// every guess (in which case the largest guess is returned).
pub fn error_guess(h: &[usize], eta: usize) -> (usize, bool) {
    match h.iter().rposition(|&x| x >= eta) {
        Some(i) => (i, false),
        None => (0, true),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GuessGrids {
    pub k: usize,
    pub eps: f64,
    /// `Γ = {m(1+ε)^j}` from the smallest positive singleton value `m` up to the first
    /// point at or above `f(V)`.
    pub gammas: Vec<f64>,
    /// Error guesses, largest first.
    pub h: Vec<usize>,
    pub singletons: BTreeMap<ElementId, f64>,
    pub total_value: f64,
}

impl GuessGrids {
    /// Spends `|V| + 1` queries: every singleton and `f(V)`.
    pub fn build<O: Oracle>(f: &O, k: usize, eps: f64, n: usize, w: usize, tag: Tag) -> Result<Self> {
        let universe = f.universe().to_vec();
        let mut singletons = BTreeMap::new();
        for &a in &universe {
            singletons.insert(a, f.evaluate(&[a], tag)?);
        }
        let total_value = f.evaluate(&universe, tag)?;
        let min = singletons.values().copied().filter(|&v| v > 0.0).fold(f64::INFINITY, f64::min);
        let mut gammas = Vec::new();
        if min.is_finite() {
            let mut j = 0;
            loop {
                let g = min * libm::pow(1.0 + eps, j as f64);
                gammas.push(g);
                if g >= total_value {
                    break;
                }
                j += 1;
            }
        }
        Ok(GuessGrids { k, eps, gammas, h: error_grid(n, k, w), singletons, total_value })
    }

    pub fn singleton(&self, a: ElementId) -> f64 {
        self.singletons.get(&a).copied().unwrap_or(0.0)
    }

    pub fn active_for(&self, a: ElementId, gamma_index: usize) -> bool {
        relevant(self.singleton(a), self.gammas[gamma_index], self.k, self.eps)
    }

    /// Indices of `Γ(a) = {γ ∈ Γ : εγ/k ≤ f(a) ≤ 2γ}` as a half-open range.
    pub fn gamma_range(&self, a: ElementId) -> core::ops::Range<usize> {
        let Some(&min) = self.gammas.first() else { return 0..0 };
        match relevant_exponents(self.singleton(a), min, self.k, self.eps) {
            Some((lo, hi)) => {
                let len = self.gammas.len() as i64;
                let lo = lo.clamp(0, len) as usize;
                let hi = (hi + 1).clamp(0, len) as usize;
                lo..hi.max(lo)
            }
            None => 0..0,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{CountingOracle, CoverageOracle, Phase};

    #[test]
    fn error_grid_example() {
        assert_eq!(error_grid(1024, 34, 1), alloc::vec![1024, 512, 256, 128, 64, 32]);
        assert_eq!(error_grid(8, 16, 8), alloc::vec![8, 4, 2, 1]);
        assert_eq!(error_guess(&error_grid(1024, 34, 1), 0), (5, false));
        assert_eq!(error_guess(&error_grid(1024, 34, 1), 100), (3, false));
        assert_eq!(error_guess(&error_grid(1024, 34, 1), 2000), (0, true));
    }

    #[test]
    fn single_element_grid() {
        let f = CountingOracle::new(CoverageOracle::modular([(ElementId(0), 1.0)]).unwrap()).unwrap();
        let g = GuessGrids::build(&f, 1, 0.5, 1, 0, Tag::new(Phase::Precompute, "grids")).unwrap();
        assert_eq!(g.gammas, alloc::vec![1.0]);
        assert_eq!(f.total(), 2);
    }

    #[test]
    fn gamma_range_matches_predicate() {
        let f = CountingOracle::new(
            CoverageOracle::modular((0..30).map(|i| (ElementId(i), 1.0 + (i * i) as f64))).unwrap(),
        )
        .unwrap();
        let g = GuessGrids::build(&f, 16, 0.1, 100, 2, Tag::new(Phase::Precompute, "grids")).unwrap();
        // a geometric grid meets an interval of ratio 2k/ε in at most ⌊log_{1+ε}(2k/ε)⌋ + 1 points
        let bound = libm::floor(crate::util::log_base(2.0 * 16.0 / 0.1, 1.1)) as usize + 1;
        assert_eq!(bound, 61);
        let mut widest = 0;
        for &a in f.universe() {
            let r = g.gamma_range(a);
            for i in 0..g.gammas.len() {
                assert_eq!(g.active_for(a, i), r.contains(&i));
            }
            widest = widest.max(r.len());
        }
        assert!(widest <= bound);
    }
}
