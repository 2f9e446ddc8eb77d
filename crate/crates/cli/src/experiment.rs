//! One run of a variant on one instance: per-step records and a summary.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use anyhow::{Context, Result};
use predsub_core::baseline::{brute_force_opt, brute_force_size, lazy_greedy, BRUTE_FORCE_LIMIT};
use predsub_core::scheduler::{precompute, run_stream_with, validate_inputs, FrameworkConfig, Precomputed, Variant};
use predsub_core::stream::{prediction_error, Op};
use predsub_core::{ElementId, Oracle, Phase, Tag};
use serde::{Deserialize, Serialize};

use crate::instance::Instance;
use crate::io::{write_json, write_jsonl, SCHEMA};

const TAG_REFERENCE: Tag = Tag::new(Phase::Stream, "reference");

/// How the per-step reference value for ratios is obtained.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OptPolicy {
    /// No reference; ratios are omitted.
    Off,
    /// Lazy greedy divided by `1 − 1/e`, an upper bound on OPT, flagged as a proxy.
    Greedy,
    /// Brute force when the enumeration guard allows, else the greedy proxy.
    #[default]
    Auto,
}

/// Per-step reference values, computed with a separate uncounted oracle.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct References {
    pub greedy: Vec<f64>,
    /// Exact optimum or the greedy upper-bound proxy.
    pub opt: Vec<f64>,
    pub proxy: Vec<bool>,
}

impl References {
    pub fn compute(inst: &Instance, k: usize, policy: OptPolicy) -> Result<Option<Self>> {
        if policy == OptPolicy::Off {
            return Ok(None);
        }
        let g = inst.oracle()?;
        let mut refs = References::default();
        let mut active = BTreeSet::new();
        let shrink = 1.0 - (-1.0f64).exp();
        for ev in inst.stream.events() {
            match ev.op {
                Op::Insert => active.insert(ev.elem),
                Op::Delete => active.remove(&ev.elem),
            };
            let v: Vec<ElementId> = active.iter().copied().collect();
            let (_, greedy) = lazy_greedy(&g, &v, k, TAG_REFERENCE)?;
            refs.greedy.push(greedy);
            if policy == OptPolicy::Auto && brute_force_size(v.len(), k) <= BRUTE_FORCE_LIMIT {
                refs.opt.push(brute_force_opt(&g, &v, k, TAG_REFERENCE)?.1);
                refs.proxy.push(false);
            } else {
                refs.opt.push(greedy / shrink);
                refs.proxy.push(true);
            }
        }
        Ok(Some(refs))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    pub active: usize,
    pub value: f64,
    pub solution: Vec<ElementId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub greedy: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub opt: Option<f64>,
    /// `opt` is the greedy upper-bound proxy rather than the exact optimum.
    pub opt_proxy: bool,
    /// Cumulative stream-phase queries after this step.
    pub stream_queries: u64,
    pub precompute_queries: u64,
    pub eta_t: usize,
    pub restarts: usize,
    pub overflow: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema: u32,
    pub variant: Variant,
    pub n: usize,
    pub k: usize,
    pub eps: f64,
    pub w: usize,
    pub seed: u64,
    /// Offline prediction error of the instance.
    pub eta: usize,
    pub precompute_queries: u64,
    pub stream_queries: u64,
    pub amortized_stream_queries: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ratio_min: Option<f64>,
    /// Steps whose reference was the greedy proxy.
    pub proxy_steps: usize,
    pub phases: usize,
    pub v2_insertions: u64,
    pub queries_by_caller: BTreeMap<String, u64>,
}

#[derive(Clone, Debug)]
pub struct Experiment {
    pub steps: Vec<StepRecord>,
    pub summary: Summary,
    pub phases: Vec<predsub_core::scheduler::phase::PhaseRecord>,
}

impl Experiment {
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_jsonl(&dir.join("steps.jsonl"), &self.steps)?;
        write_json(&dir.join("summary.json"), &self.summary)
    }
}

/// A precomputation produced earlier, with the queries it cost.
pub struct Loaded {
    pub pre: Precomputed,
    pub precompute_queries: u64,
}

/// `f(S_t) / ref_t` per step; a zero reference (empty `V_t`) counts as ratio 1.
pub fn ratios(values: &[f64], refs: &[f64]) -> Vec<f64> {
    values.iter().zip(refs).map(|(&v, &r)| if r > 0.0 { v / r } else { 1.0 }).collect()
}

pub fn run_experiment(
    inst: &Instance,
    config: &FrameworkConfig,
    refs: Option<&References>,
    loaded: Option<Loaded>,
) -> Result<Experiment> {
    let f = inst.oracle()?;
    validate_inputs(&f, &inst.stream, &inst.pred, config)?;
    let (pre, precompute_queries) = match loaded {
        Some(l) => (l.pre, l.precompute_queries),
        None => {
            let pre = precompute(&f, inst.stream.len(), &inst.pred, config).context("precomputation failed")?;
            (pre, f.phase_total(Phase::Precompute))
        }
    };
    let mut cumulative = Vec::with_capacity(inst.stream.len());
    let run = run_stream_with(&f, &inst.stream, &inst.pred, config, &pre, |_| {
        cumulative.push(f.phase_total(Phase::Stream));
    })
    .with_context(|| format!("stream phase failed at step {}", cumulative.len() + 1))?;

    let g = inst.oracle()?;
    let mut active = 0usize;
    let mut steps = Vec::with_capacity(run.steps.len());
    for (i, (out, ev)) in run.steps.iter().zip(inst.stream.events()).enumerate() {
        match ev.op {
            Op::Insert => active += 1,
            Op::Delete => active -= 1,
        }
        steps.push(StepRecord {
            t: out.t,
            active,
            value: g.evaluate(&out.solution, TAG_REFERENCE)?,
            solution: out.solution.clone(),
            greedy: refs.map(|r| r.greedy[i]),
            opt: refs.map(|r| r.opt[i]),
            opt_proxy: refs.map_or(false, |r| r.proxy[i]),
            stream_queries: cumulative[i],
            precompute_queries,
            eta_t: out.eta_t,
            restarts: out.restarts,
            overflow: out.overflow,
        });
    }
    let n = inst.stream.len();
    let report = f.report();
    let (ratio_mean, ratio_min) = match refs {
        Some(r) if n > 0 => {
            let values: Vec<f64> = steps.iter().map(|s| s.value).collect();
            let rs = ratios(&values, &r.opt);
            (Some(rs.iter().sum::<f64>() / n as f64), Some(rs.iter().copied().fold(f64::INFINITY, f64::min)))
        }
        _ => (None, None),
    };
    let summary = Summary {
        schema: SCHEMA,
        variant: config.variant,
        n,
        k: config.k,
        eps: config.eps,
        w: inst.pred.w(),
        seed: config.seed,
        eta: prediction_error(&inst.stream, &inst.pred)?,
        precompute_queries,
        stream_queries: report.stream,
        amortized_stream_queries: if n > 0 { report.stream as f64 / n as f64 } else { 0.0 },
        ratio_mean,
        ratio_min,
        proxy_steps: refs.map_or(0, |r| r.proxy.iter().filter(|&&p| p).count()),
        phases: run.phases.len(),
        v2_insertions: run.v2_insertions,
        queries_by_caller: report.by_tag.into_iter().map(|(p, c, n)| (format!("{}.{c}", phase_name(p)), n)).collect(),
    };
    Ok(Experiment { steps, summary, phases: run.phases })
}

fn phase_name(p: Phase) -> &'static str {
    match p {
        Phase::Precompute => "precompute",
        Phase::Stream => "stream",
    }
}
