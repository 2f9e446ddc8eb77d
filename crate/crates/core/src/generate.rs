//! Seeded synthetic instances: coverage functions and update streams with a
//! controlled number of mispredicted elements.

use alloc::collections::BTreeMap;
use alloc::collections::VecDeque;
use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::{CoverageOracle, ElementId};
use crate::stream::{prediction_error, Op, Prediction, PredictionTable, UpdateEvent, UpdateStream};
use crate::util::{mix_seed, rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FunctionFamily {
    /// Unit-weight coverage.
    Coverage,
    /// Coverage with item weights drawn from `{1, 2, 3, 4}`.
    Weighted,
    /// Every element owns one private item with weight drawn from `{1, …, 8}`.
    Modular,
}

/// Random bipartite element/item instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoverageParams {
    pub elements: usize,
    pub items: usize,
    /// Inclusive range of items per element.
    pub min_degree: usize,
    pub max_degree: usize,
    pub family: FunctionFamily,
    pub seed: u64,
}

/// Raw rows of a generated instance, suitable for serialization.
#[derive(Clone, Debug, PartialEq)]
pub struct CoverageRows {
    pub elements: Vec<(ElementId, Vec<u64>)>,
    pub item_weights: BTreeMap<u64, f64>,
}

impl CoverageRows {
    pub fn build(&self) -> Result<CoverageOracle> {
        CoverageOracle::new(self.elements.iter().cloned(), &self.item_weights)
    }
}

pub fn coverage_rows(p: &CoverageParams) -> Result<CoverageRows> {
    let mut r = rng(mix_seed(p.seed, 0xC0));
    let mut item_weights = BTreeMap::new();
    let mut elements = Vec::with_capacity(p.elements);
    match p.family {
        FunctionFamily::Modular => {
            for e in 0..p.elements {
                let item = e as u64;
                item_weights.insert(item, r.gen_range(1..=8) as f64);
                elements.push((ElementId(e as u32), alloc::vec![item]));
            }
        }
        FunctionFamily::Coverage | FunctionFamily::Weighted => {
            if p.items == 0 || p.min_degree == 0 || p.min_degree > p.max_degree || p.max_degree > p.items {
                return Err(Error::invalid(format!(
                    "degree range {}..={} infeasible for {} items",
                    p.min_degree, p.max_degree, p.items
                )));
            }
            if p.family == FunctionFamily::Weighted {
                for item in 0..p.items as u64 {
                    item_weights.insert(item, r.gen_range(1..=4) as f64);
                }
            }
            let pool: Vec<u64> = (0..p.items as u64).collect();
            for e in 0..p.elements {
                let deg = r.gen_range(p.min_degree..=p.max_degree);
                let items: Vec<u64> = pool.choose_multiple(&mut r, deg).copied().collect();
                elements.push((ElementId(e as u32), items));
            }
        }
    }
    Ok(CoverageRows { elements, item_weights })
}

pub fn coverage(p: &CoverageParams) -> Result<CoverageOracle> {
    coverage_rows(p)?.build()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Lifetime {
    /// Deletions remove a uniformly random active element.
    Uniform,
    /// Deletions remove the oldest active element.
    Fifo,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Corruption {
    /// Both predicted times move by the same signed offset of magnitude in `[w+1, 4w+4]`.
    Shift,
    /// Predict another stream element's true times (falls back to a shift when those
    /// happen to lie within the window).
    Swap,
    /// Predict insertion (and deletion) after the end of the stream.
    Omission,
    /// Pick one of the three modes uniformly per corrupted element.
    Mixed,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StreamParams {
    /// Elements `0..universe` are available; each is inserted at most once.
    pub universe: usize,
    pub n: usize,
    /// Active-set size the insert/delete mix drifts towards.
    pub target_active: usize,
    pub lifetime: Lifetime,
    /// Exact number of mispredicted elements.
    pub corrupt: usize,
    pub corruption: Corruption,
    /// Maximal perturbation of correct predictions; must not exceed `w`.
    pub jitter: usize,
    pub w: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratedStream {
    pub stream: UpdateStream,
    pub pred: PredictionTable,
    /// Number of corrupted elements, checked against [`prediction_error`].
    pub eta: usize,
}

pub fn gen_stream(p: &StreamParams) -> Result<GeneratedStream> {
    if p.jitter > p.w {
        return Err(Error::invalid(format!("jitter {} exceeds window {}", p.jitter, p.w)));
    }
    if p.corrupt > p.universe {
        return Err(Error::invalid(format!("cannot corrupt {} of {} elements", p.corrupt, p.universe)));
    }
    let mut r = rng(mix_seed(p.seed, 0x57));
    let mut order: Vec<u32> = (0..p.universe as u32).collect();
    order.shuffle(&mut r);
    let mut fresh = order.into_iter();
    let mut uninserted = p.universe;
    let mut active: Vec<ElementId> = Vec::new();
    let mut fifo: VecDeque<ElementId> = VecDeque::new();
    let mut events = Vec::with_capacity(p.n);
    for t in 1..=p.n {
        let can_insert = uninserted > 0;
        let can_delete = !active.is_empty();
        let insert = match (can_insert, can_delete) {
            (false, false) => {
                return Err(Error::invalid(format!(
                    "universe of {} elements exhausted at t={t} of n={}",
                    p.universe, p.n
                )))
            }
            (true, false) => true,
            (false, true) => false,
            (true, true) => r.gen_bool(if active.len() < p.target_active { 0.75 } else { 0.25 }),
        };
        if insert {
            let a = ElementId(fresh.next().expect("counted"));
            uninserted -= 1;
            active.push(a);
            fifo.push_back(a);
            events.push(UpdateEvent { t, op: Op::Insert, elem: a });
        } else {
            let a = match p.lifetime {
                Lifetime::Uniform => active.swap_remove(r.gen_range(0..active.len())),
                Lifetime::Fifo => {
                    let a = fifo.pop_front().expect("nonempty");
                    let pos = active.iter().position(|&x| x == a).expect("active");
                    active.swap_remove(pos);
                    a
                }
            };
            if p.lifetime == Lifetime::Uniform {
                fifo.retain(|&x| x != a);
            }
            events.push(UpdateEvent { t, op: Op::Delete, elem: a });
        }
    }
    let stream = UpdateStream::new(events)?;
    let pred = predictions(&stream, p, &mut r)?;
    let eta = prediction_error(&stream, &pred)?;
    if eta != p.corrupt {
        return Err(Error::State(format!("generator produced η={eta}, expected {}", p.corrupt)));
    }
    Ok(GeneratedStream { stream, pred, eta })
}

fn predictions(stream: &UpdateStream, p: &StreamParams, r: &mut impl Rng) -> Result<PredictionTable> {
    let n = stream.len() as i64;
    let w = p.w as i64;
    let j = p.jitter as i64;
    let members: Vec<ElementId> = stream.elements().collect();
    let mut universe: Vec<ElementId> = (0..p.universe as u32).map(ElementId).collect();
    universe.shuffle(r);
    let corrupted: BTreeMap<ElementId, ()> = universe[..p.corrupt].iter().map(|&a| (a, ())).collect();
    let mut entries = BTreeMap::new();
    for &a in &members {
        let (ti, td) = (stream.t_ins(a), stream.t_del(a));
        let pred = if corrupted.contains_key(&a) {
            let mode = match p.corruption {
                Corruption::Mixed => [Corruption::Shift, Corruption::Swap, Corruption::Omission][r.gen_range(0..3)],
                m => m,
            };
            match mode {
                Corruption::Swap => {
                    let b = members[r.gen_range(0..members.len())];
                    let (bi, bd) = (stream.t_ins(b), stream.t_del(b));
                    if (bi - ti).abs() > w || (bd - td).abs() > w {
                        Prediction { t_ins_hat: bi, t_del_hat: bd }
                    } else {
                        shifted(ti, td, w, r)
                    }
                }
                Corruption::Omission => {
                    let at = n + w + 2 + r.gen_range(0..=w);
                    Prediction { t_ins_hat: at, t_del_hat: at }
                }
                _ => shifted(ti, td, w, r),
            }
        } else {
            let ih = ti + r.gen_range(-j..=j);
            let dh = (td + r.gen_range(-j..=j)).max(ih);
            Prediction { t_ins_hat: ih, t_del_hat: dh }
        };
        entries.insert(a, pred);
    }
    // corrupted elements that never appear get invented lifetimes that start early
    // enough to be wrong about the `n + 1` insertion convention
    for &a in corrupted.keys() {
        if stream.insertion_time(a).is_some() {
            continue;
        }
        if n - w < 1 {
            return Err(Error::invalid(format!(
                "cannot mispredict absent element {a}: n={n} leaves no time before n+1-w"
            )));
        }
        let ih = r.gen_range(1..=n - w);
        let dh = ih + r.gen_range(0..=(n / 4).max(1));
        entries.insert(a, Prediction { t_ins_hat: ih, t_del_hat: dh });
    }
    PredictionTable::new(entries, p.w)
}

fn shifted(ti: i64, td: i64, w: i64, r: &mut impl Rng) -> Prediction {
    let s = r.gen_range(w + 1..=4 * w + 4);
    let s = if r.gen_bool(0.5) { s } else { -s };
    Prediction { t_ins_hat: ti + s, t_del_hat: td + s }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::SetFunction;

    fn params(corrupt: usize, corruption: Corruption) -> StreamParams {
        StreamParams {
            universe: 300,
            n: 400,
            target_active: 40,
            lifetime: Lifetime::Uniform,
            corrupt,
            corruption,
            jitter: 2,
            w: 3,
            seed: 11,
        }
    }

    #[test]
    fn exact_count_of_corruptions() {
        for mode in [Corruption::Shift, Corruption::Swap, Corruption::Omission, Corruption::Mixed] {
            for c in [0, 1, 7, 120] {
                let g = gen_stream(&params(c, mode)).unwrap();
                assert_eq!(g.eta, c);
                assert_eq!(prediction_error(&g.stream, &g.pred).unwrap(), c);
                assert_eq!(g.stream.len(), 400);
            }
        }
    }

    #[test]
    fn deterministic() {
        let a = gen_stream(&params(5, Corruption::Mixed)).unwrap();
        let b = gen_stream(&params(5, Corruption::Mixed)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn fifo_deletes_oldest() {
        let mut p = params(0, Corruption::Shift);
        p.lifetime = Lifetime::Fifo;
        let g = gen_stream(&p).unwrap();
        let dels: Vec<ElementId> = g.stream.events().iter().filter(|e| e.op == Op::Delete).map(|e| e.elem).collect();
        let ins: Vec<ElementId> = g.stream.events().iter().filter(|e| e.op == Op::Insert).map(|e| e.elem).collect();
        assert_eq!(&ins[..dels.len()], &dels[..]);
    }

    #[test]
    fn infeasible_parameters() {
        let mut p = params(0, Corruption::Shift);
        p.jitter = 9;
        assert!(gen_stream(&p).is_err());
        let mut p = params(0, Corruption::Shift);
        p.universe = 10;
        p.target_active = 100;
        assert!(gen_stream(&p).is_err());
    }

    #[test]
    fn coverage_shapes() {
        let p = CoverageParams {
            elements: 200,
            items: 500,
            min_degree: 2,
            max_degree: 6,
            family: FunctionFamily::Weighted,
            seed: 3,
        };
        let f = coverage(&p).unwrap();
        assert_eq!(f.universe().len(), 200);
        let m = coverage(&CoverageParams { family: FunctionFamily::Modular, ..p }).unwrap();
        assert_eq!(m.item_count(), 200);
    }
}
