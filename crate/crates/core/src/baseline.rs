//! Offline reference algorithms: lazy greedy, eager greedy and exhaustive search.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::error::{Error, Result};
use crate::oracle::{ElementId, Oracle, Tag};

/// Largest number of subsets [`brute_force_opt`] agrees to enumerate.
pub const BRUTE_FORCE_LIMIT: u128 = 1_000_000;

#[derive(Clone, Copy, Debug)]
struct Stale {
    gain: f64,
    elem: ElementId,
    round: usize,
}

impl PartialEq for Stale {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}
impl Eq for Stale {}
impl PartialOrd for Stale {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Stale {
    // max-heap on gain; ties go to the smaller id
    fn cmp(&self, other: &Self) -> Ordering {
        self.gain.total_cmp(&other.gain).then_with(|| other.elem.cmp(&self.elem))
    }
}

fn candidates(v: &[ElementId]) -> Vec<ElementId> {
    let mut c = v.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

/// Greedy with stale upper bounds kept in a max-heap, optionally starting from `seed`.
/// Returns the chosen set (seed first) and its value.
pub fn lazy_greedy_from<O: Oracle>(
    f: &O,
    seed: &[ElementId],
    v: &[ElementId],
    k: usize,
    tag: Tag,
) -> Result<(Vec<ElementId>, f64)> {
    let mut sol: Vec<ElementId> = seed.to_vec();
    let mut value = if sol.is_empty() { 0.0 } else { f.evaluate(&sol, tag)? };
    let pool: Vec<ElementId> = candidates(v).into_iter().filter(|a| !sol.contains(a)).collect();
    if sol.len() >= k || pool.is_empty() {
        return Ok((sol, value));
    }
    let mut heap = BinaryHeap::with_capacity(pool.len());
    for &a in &pool {
        sol.push(a);
        let with = f.evaluate(&sol, tag)?;
        sol.pop();
        heap.push(Stale { gain: with - value, elem: a, round: sol.len() });
    }
    while sol.len() < k {
        let Some(top) = heap.pop() else { break };
        if top.round == sol.len() {
            if top.gain <= 0.0 {
                break;
            }
            sol.push(top.elem);
            value += top.gain;
            continue;
        }
        sol.push(top.elem);
        let with = f.evaluate(&sol, tag)?;
        sol.pop();
        heap.push(Stale { gain: with - value, elem: top.elem, round: sol.len() });
    }
    Ok((sol, value))
}

pub fn lazy_greedy<O: Oracle>(f: &O, v: &[ElementId], k: usize, tag: Tag) -> Result<(Vec<ElementId>, f64)> {
    lazy_greedy_from(f, &[], v, k, tag)
}

/// Textbook greedy: re-evaluates every remaining element each round.
pub fn eager_greedy<O: Oracle>(f: &O, v: &[ElementId], k: usize, tag: Tag) -> Result<(Vec<ElementId>, f64)> {
    let mut pool = candidates(v);
    let mut sol = Vec::new();
    let mut value = 0.0;
    while sol.len() < k && !pool.is_empty() {
        let mut best: Option<(f64, usize)> = None;
        for (i, &a) in pool.iter().enumerate() {
            sol.push(a);
            let gain = f.evaluate(&sol, tag)? - value;
            sol.pop();
            if best.map_or(true, |(g, _)| gain > g) {
                best = Some((gain, i));
            }
        }
        let (gain, i) = best.expect("pool is nonempty");
        if gain <= 0.0 {
            break;
        }
        sol.push(pool.remove(i));
        value += gain;
    }
    Ok((sol, value))
}

fn binomial(n: u128, r: u128) -> u128 {
    let r = r.min(n - r.min(n));
    let mut acc: u128 = 1;
    for i in 0..r {
        acc = acc.saturating_mul(n - i) / (i + 1);
    }
    acc
}

/// Number of subsets of size `min(k, n)` of an `n`-set.
pub fn brute_force_size(n: usize, k: usize) -> u128 {
    binomial(n as u128, k.min(n) as u128)
}

/// Exact `max_{|S| ≤ k} f(S)` by enumerating the subsets of size `min(k, |V|)`
/// (enough for monotone `f`). Refuses when more than [`BRUTE_FORCE_LIMIT`] subsets
/// would be needed.
pub fn brute_force_opt<O: Oracle>(f: &O, v: &[ElementId], k: usize, tag: Tag) -> Result<(Vec<ElementId>, f64)> {
    let pool = candidates(v);
    let size = k.min(pool.len());
    let subsets = brute_force_size(pool.len(), k);
    if subsets > BRUTE_FORCE_LIMIT {
        return Err(Error::TooLarge { subsets, limit: BRUTE_FORCE_LIMIT });
    }
    if size == 0 {
        return Ok((Vec::new(), 0.0));
    }
    let mut idx: Vec<usize> = (0..size).collect();
    let mut set: Vec<ElementId> = idx.iter().map(|&i| pool[i]).collect();
    let mut best = (set.clone(), f.evaluate(&set, tag)?);
    loop {
        // next combination in lexicographic order
        let mut i = size;
        while i > 0 && idx[i - 1] == pool.len() - size + i - 1 {
            i -= 1;
        }
        if i == 0 {
            break;
        }
        idx[i - 1] += 1;
        for j in i..size {
            idx[j] = idx[j - 1] + 1;
        }
        for (slot, &j) in set.iter_mut().zip(&idx) {
            *slot = pool[j];
        }
        let value = f.evaluate(&set, tag)?;
        if value > best.1 {
            best = (set.clone(), value);
        }
    }
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::{CountingOracle, CoverageOracle, Phase};
    use alloc::collections::BTreeMap;
    use alloc::vec;

    const T: Tag = Tag::new(Phase::Stream, "baseline");

    fn three_sets() -> CountingOracle<CoverageOracle> {
        let f = CoverageOracle::new(
            vec![(ElementId(0), vec![1, 2]), (ElementId(1), vec![2, 3]), (ElementId(2), vec![3])],
            &BTreeMap::new(),
        )
        .unwrap();
        CountingOracle::new(f).unwrap()
    }

    #[test]
    fn greedy_on_three_sets() {
        let f = three_sets();
        let v: Vec<ElementId> = f.universe().to_vec();
        assert_eq!(lazy_greedy(&f, &v, 2, T).unwrap().1, 3.0);
        assert_eq!(eager_greedy(&f, &v, 2, T).unwrap().1, 3.0);
        assert_eq!(brute_force_opt(&f, &v, 2, T).unwrap().1, 3.0);
    }

    #[test]
    fn modular_top_k() {
        let f = CountingOracle::new(
            CoverageOracle::modular(vec![(ElementId(0), 1.0), (ElementId(1), 5.0), (ElementId(2), 3.0)]).unwrap(),
        )
        .unwrap();
        let v: Vec<ElementId> = f.universe().to_vec();
        let (mut s, val) = lazy_greedy(&f, &v, 2, T).unwrap();
        s.sort();
        assert_eq!((s, val), (vec![ElementId(1), ElementId(2)], 8.0));
        assert_eq!(brute_force_opt(&f, &v, 2, T).unwrap().1, 8.0);
        assert_eq!(brute_force_opt(&f, &v, 5, T).unwrap().1, 9.0);
    }

    #[test]
    fn guard_refuses_large() {
        let f = CountingOracle::new(CoverageOracle::modular((0..60).map(|i| (ElementId(i), 1.0))).unwrap()).unwrap();
        let v: Vec<ElementId> = f.universe().to_vec();
        assert!(matches!(brute_force_opt(&f, &v, 10, T), Err(Error::TooLarge { .. })));
        assert_eq!(f.total(), 0);
    }

    #[test]
    fn empty_inputs() {
        let f = three_sets();
        assert_eq!(lazy_greedy(&f, &[], 3, T).unwrap(), (Vec::new(), 0.0));
        assert_eq!(brute_force_opt(&f, &[], 3, T).unwrap(), (Vec::new(), 0.0));
        assert_eq!(lazy_greedy(&f, f.universe(), 0, T).unwrap(), (Vec::new(), 0.0));
    }
}
