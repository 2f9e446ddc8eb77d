//! Prediction-free dynamic maximization: one [`Engine`] per guess `γ_j = (1+ε)^j`,
//! each fed only the elements whose singleton value makes them relevant to that guess.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;

use crate::engine::{Engine, EngineParams};
use crate::error::{Error, Result};
use crate::oracle::{ElementId, Oracle, Tag};
use crate::util::{log_base, mix_seed};

/// `εγ/k ≤ f(a) ≤ 2γ`: element `a` with singleton value `fa` is relevant to guess `γ`.
pub fn relevant(fa: f64, gamma: f64, k: usize, eps: f64) -> bool {
    eps * gamma / k as f64 <= fa && fa <= 2.0 * gamma
}

/// Exponents `j` of `anchor·(1+ε)^j` for which [`relevant`] holds, as an inclusive range.
pub fn relevant_exponents(fa: f64, anchor: f64, k: usize, eps: f64) -> Option<(i64, i64)> {
    if !(fa > 0.0) || !(anchor > 0.0) {
        return None;
    }
    let gamma = |j: i64| anchor * libm::pow(1.0 + eps, j as f64);
    let mut lo = libm::floor(log_base(fa / (2.0 * anchor), 1.0 + eps)) as i64 - 1;
    while !(fa <= 2.0 * gamma(lo)) {
        lo += 1;
    }
    while lo > i64::MIN / 2 && fa <= 2.0 * gamma(lo - 1) {
        lo -= 1;
    }
    let mut hi = libm::ceil(log_base(k as f64 * fa / (eps * anchor), 1.0 + eps)) as i64 + 1;
    while !(eps * gamma(hi) / k as f64 <= fa) {
        hi -= 1;
    }
    while eps * gamma(hi + 1) / k as f64 <= fa {
        hi += 1;
    }
    (lo <= hi).then_some((lo, hi))
}

#[derive(Clone, Debug)]
pub struct DynamicMax {
    k: usize,
    eps: f64,
    seed: u64,
    capacity_hint: usize,
    engine_tag: Tag,
    singleton_tag: Tag,
    engines: BTreeMap<i64, Engine>,
    routes: BTreeMap<ElementId, (i64, i64)>,
    members: BTreeMap<ElementId, ()>,
    insertions: u64,
}

impl DynamicMax {
    pub fn new(k: usize, eps: f64, capacity_hint: usize, seed: u64, engine_tag: Tag, singleton_tag: Tag) -> Result<Self> {
        if k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if !(eps > 0.0 && eps < 0.5) {
            return Err(Error::invalid(alloc::format!("eps must lie in (0, 1/2), got {eps}")));
        }
        Ok(DynamicMax {
            k,
            eps,
            seed,
            capacity_hint,
            engine_tag,
            singleton_tag,
            engines: BTreeMap::new(),
            routes: BTreeMap::new(),
            members: BTreeMap::new(),
            insertions: 0,
        })
    }

    /// Number of insert calls so far.
    pub fn insertions(&self) -> u64 {
        self.insertions
    }

    pub fn contains(&self, a: ElementId) -> bool {
        self.members.contains_key(&a)
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn elements(&self) -> impl Iterator<Item = ElementId> + '_ {
        self.members.keys().copied()
    }

    /// One singleton query, then an insertion into every relevant engine.
    pub fn insert<O: Oracle>(&mut self, f: &O, a: ElementId) -> Result<()> {
        if self.members.contains_key(&a) {
            return Err(Error::State(alloc::format!("{a} is already active")));
        }
        let fa = f.evaluate(&[a], self.singleton_tag)?;
        self.members.insert(a, ());
        self.insertions += 1;
        let Some((lo, hi)) = relevant_exponents(fa, 1.0, self.k, self.eps) else {
            return Ok(());
        };
        self.routes.insert(a, (lo, hi));
        for j in lo..=hi {
            let engine = match self.engines.get_mut(&j) {
                Some(e) => e,
                None => {
                    let params = EngineParams {
                        k: self.k,
                        gamma: libm::pow(1.0 + self.eps, j as f64),
                        eps: self.eps,
                        capacity_hint: self.capacity_hint,
                        seed: mix_seed(self.seed, j as u64),
                        tag: self.engine_tag,
                    };
                    let mut e = Engine::new(f, params)?;
                    e.end_init_batch(f)?;
                    self.engines.entry(j).or_insert(e)
                }
            };
            engine.insert(f, a)?;
        }
        Ok(())
    }

    pub fn delete<O: Oracle>(&mut self, f: &O, a: ElementId) -> Result<()> {
        if self.members.remove(&a).is_none() {
            return Err(Error::State(alloc::format!("{a} is not active")));
        }
        if let Some((lo, hi)) = self.routes.remove(&a) {
            for j in lo..=hi {
                let engine = self.engines.get_mut(&j).expect("routed engines exist");
                engine.delete(f, a)?;
                if engine.active().is_empty() {
                    self.engines.remove(&j);
                }
            }
        }
        Ok(())
    }

    /// Best engine solution and its value; query-free.
    pub fn solution(&self) -> (Vec<ElementId>, f64) {
        let mut best: Option<&Engine> = None;
        for e in self.engines.values() {
            if best.map_or(true, |b| e.solution_value() > b.solution_value()) {
                best = Some(e);
            }
        }
        best.map_or((Vec::new(), 0.0), |e| (e.solution().to_vec(), e.solution_value()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{CountingOracle, CoverageOracle, Phase};

    #[test]
    fn exponent_range_matches_predicate() {
        for &fa in &[0.01, 1.0, 3.7, 250.0] {
            for &(k, eps) in &[(1usize, 0.1), (16, 0.45), (5, 0.25)] {
                let (lo, hi) = relevant_exponents(fa, 1.0, k, eps).unwrap();
                for j in lo - 3..=hi + 3 {
                    let g = libm::pow(1.0 + eps, j as f64);
                    assert_eq!(relevant(fa, g, k, eps), (lo..=hi).contains(&j), "fa={fa} j={j}");
                }
            }
        }
        assert_eq!(relevant_exponents(0.0, 1.0, 3, 0.1), None);
    }

    #[test]
    fn tracks_best_engine() {
        let f = CountingOracle::new(CoverageOracle::modular((0..10).map(|i| (ElementId(i), 1.0 + i as f64))).unwrap())
            .unwrap();
        let tag = Tag::new(Phase::Stream, "dyn");
        let mut d = DynamicMax::new(3, 0.2, 0, 1, tag, tag).unwrap();
        for i in 0..10 {
            d.insert(&f, ElementId(i)).unwrap();
        }
        let (sol, value) = d.solution();
        assert!(sol.len() <= 3);
        assert_eq!(f.evaluate(&sol, tag).unwrap(), value);
        assert!(value >= 0.5 * 27.0 * (1.0 - 0.2) - 1e-9);
        for i in 0..10 {
            d.delete(&f, ElementId(i)).unwrap();
        }
        assert_eq!(d.solution(), (Vec::new(), 0.0));
    }
}
