//! Acceptance criteria, one PASS/FAIL line each.
//!
//! A failure listed as known (with its ledger entry) is printed as FAIL but does not
//! fail the process; any other failure does.

use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use predsub::experiment::run_experiment;
use predsub::instance::GenParams;
use predsub::verify::{
    approximation, greedy_agreement, phase_guarantee, robust2_spot, scheduler_invariants, strong_robustness,
    threshold_property, uniform_selection,
};
use predsub_core::scheduler::{precompute, FrameworkConfig, Variant};
use predsub_core::Phase;
use rayon::prelude::*;

const EPS: f64 = 0.1;
/// ε for the standard-instance query runs (Q1, Q2).
const EPS_STANDARD: f64 = 0.45;
const K_STANDARD: usize = 16;

struct Outcome {
    passed: bool,
    detail: String,
    /// Why a failure is expected; only consulted when `passed` is false.
    known: Option<&'static str>,
}

impl Outcome {
    fn new(passed: bool, detail: String) -> Self {
        Outcome { passed, detail, known: None }
    }
}

fn criterion_1() -> Result<Outcome> {
    let s = scheduler_invariants(100, 3, 0)?;
    let checks = s.checks();
    let failing: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
    let detail = checks.iter().map(|c| format!("{}={}", c.name, if c.passed { "ok" } else { "violated" })).collect::<Vec<_>>();
    let mut o = Outcome::new(
        failing.is_empty(),
        format!(
            "{}; η+2w exceeded at {} of {} steps (worst by {})",
            detail.join(" "),
            s.stream.over_stated,
            s.stream.steps,
            s.stream.worst_stated_excess
        ),
    );
    if failing == ["predicted_inactive_le_eta_2w"] {
        o.known = Some("the η + 2w bound is false; η + 4w + 1 holds (ledger: predicted-but-inactive bound)");
    }
    Ok(o)
}

fn criterion_2() -> Result<Outcome> {
    let a = approximation(Variant::Full, 100, 20, EPS, 0)?;
    Ok(Outcome::new(a.worst >= 0.35, format!("worst per-instance mean of min_t ratio {:.3} (mean {:.3}) ≥ 0.35", a.worst, a.mean)))
}

fn criterion_3() -> Result<Outcome> {
    let a = approximation(Variant::Warmup, 100, 20, EPS, 0)?;
    Ok(Outcome::new(a.worst >= 0.10, format!("worst per-instance mean of min_t ratio {:.3} (mean {:.3}) ≥ 0.10", a.worst, a.mean)))
}

fn criterion_4() -> Result<Outcome> {
    let p = phase_guarantee(100, 10, EPS, 0)?;
    let bar = (1.0 - 5.0 * EPS) / 2.0 - 0.05;
    Ok(Outcome::new(
        p.samples >= 200 && p.mean_ratio >= bar,
        format!("per-phase mean f(S)/γ {:.3} ≥ {bar:.2} over {} phase samples (need ≥ 200)", p.mean_ratio, p.samples),
    ))
}

fn criterion_5() -> Result<Outcome> {
    let r = strong_robustness(500, 0.5, 2, 0)?;
    Ok(Outcome::new(
        r.passed() && r.mean_q_value > 0.0,
        format!(
            "{} builds: size={} value={} exhaustive={:?} robustness={} (worst mean f(Q\\D)/mean f(Q) {:.3} ≥ 0.45, mean f(Q) {:.2})",
            r.builds, r.size_ok, r.value_ok, r.exhaustive_ok, r.robustness_ok, r.worst_ratio, r.mean_q_value
        ),
    ))
}

fn criterion_6() -> Result<Outcome> {
    let t = threshold_property(2000, EPS, 0)?;
    let u = uniform_selection(1000, 0)?;
    Ok(Outcome::new(
        t.updates >= 2000
            && t.property1_violations == 0
            && t.property2_violations == 0
            && t.feasibility_violations == 0
            && u.p_value > 0.01,
        format!(
            "{} updates: property 1 violations {}, property 2 violations {} ({} subsets, worst excess {:.4}γ); uniform pick p={:.3}",
            t.updates, t.property1_violations, t.property2_violations, t.subsets_checked, t.worst_excess, u.p_value
        ),
    ))
}

fn standard_amortized(variant: Variant, eta: usize, seed: u64) -> Result<f64> {
    let inst = GenParams::standard(eta, seed).generate()?;
    let cfg = FrameworkConfig { k: K_STANDARD, eps: EPS_STANDARD, variant, known_eta: None, gamma: None, seed };
    Ok(run_experiment(&inst, &cfg, None, None)?.summary.amortized_stream_queries)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn criterion_7() -> Result<Outcome> {
    let runs: Vec<(f64, f64)> = (0..10u64)
        .into_par_iter()
        .map(|s| Ok((standard_amortized(Variant::Full, 0, s)?, standard_amortized(Variant::BaselineDynamic, 0, s)?)))
        .collect::<Result<_>>()?;
    let full = mean(&runs.iter().map(|r| r.0).collect::<Vec<_>>());
    let base = mean(&runs.iter().map(|r| r.1).collect::<Vec<_>>());
    Ok(Outcome::new(
        full <= 0.25 * base,
        format!("full {full:.1} vs baseline-dynamic {base:.1} amortized stream queries, ratio {:.3} ≤ 0.25", full / base),
    ))
}

/// Average ranks, ties sharing the mean rank.
fn ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]));
    let mut r = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        for &p in &idx[i..=j] {
            r[p] = (i + j) as f64 / 2.0 + 1.0;
        }
        i = j + 1;
    }
    r
}

fn spearman(x: &[f64], y: &[f64]) -> f64 {
    let (rx, ry) = (ranks(x), ranks(y));
    let (mx, my) = (mean(&rx), mean(&ry));
    let cov: f64 = rx.iter().zip(&ry).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = rx.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = ry.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx * vy).sqrt()
}

fn criterion_8() -> Result<Outcome> {
    let etas = [0usize, 64, 256, 1024, 4096];
    let jobs: Vec<(usize, u64)> = etas.iter().flat_map(|&e| (0..10u64).map(move |s| (e, s))).collect();
    let values: Vec<f64> =
        jobs.par_iter().map(|&(e, s)| standard_amortized(Variant::Full, e, s)).collect::<Result<_>>()?;
    let means: Vec<f64> = values.chunks(10).map(mean).collect();
    let rho = spearman(&etas.map(|e| e as f64), &means);
    let monotone = means.windows(2).all(|w| w[0] <= w[1]);
    let mut o = Outcome::new(
        monotone && rho >= 0.9,
        format!(
            "means {:?} over η {:?}; nondecreasing={monotone}, Spearman ρ {rho:.2} ≥ 0.9",
            means.iter().map(|m| m.round()).collect::<Vec<_>>(),
            etas
        ),
    );
    o.known = Some("cost peaks at moderate η where d/ε + k empties Q and each phase restart rebuilds (ledger: Q2)");
    Ok(o)
}

/// Full-variant precomputation queries on an instance of length `n` at fixed density.
fn precompute_queries(n: usize, seed: u64) -> Result<u64> {
    let g = GenParams {
        elements: n,
        items: 5 * n,
        universe: n,
        n,
        target_active: n / 10,
        ..GenParams::standard(0, seed)
    };
    let inst = g.generate()?;
    let f = inst.oracle()?;
    let cfg = FrameworkConfig { k: K_STANDARD, eps: EPS, variant: Variant::Full, known_eta: None, gamma: None, seed };
    precompute(&f, n, &inst.pred, &cfg)?;
    Ok(f.phase_total(Phase::Precompute))
}

fn criterion_9() -> Result<Outcome> {
    let ns = [1024usize, 2048, 4096, 8192];
    let qs: Vec<u64> = ns.iter().map(|&n| precompute_queries(n, 0)).collect::<Result<_>>()?;
    let xs: Vec<f64> = ns.iter().map(|&n| (n as f64).ln()).collect();
    let ys: Vec<f64> = qs.iter().map(|&q| (q as f64).ln()).collect();
    let (mx, my) = (mean(&xs), mean(&ys));
    let slope = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum::<f64>()
        / xs.iter().map(|x| (x - mx).powi(2)).sum::<f64>();
    Ok(Outcome::new(slope <= 1.3, format!("queries {qs:?} over n {ns:?}; log-log slope {slope:.3} ≤ 1.3")))
}

fn criterion_10() -> Result<Outcome> {
    let s = robust2_spot(100, 0)?;
    let g = greedy_agreement(100, 0)?;
    Ok(Outcome::new(
        s.mean >= 0.35 && g == 0,
        format!("robust2/OPT mean {:.3} (min {:.3}) ≥ 0.35 over {} draws; lazy/eager mismatches {g}", s.mean, s.min, s.draws),
    ))
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Result<Outcome>); 10] = [
        ("1 feasibility and exact invariants", criterion_1),
        ("2 A1 full-variant approximation", criterion_2),
        ("3 A2 warm-up approximation", criterion_3),
        ("4 A3 per-phase guarantee", criterion_4),
        ("5 R1 strong robustness", criterion_5),
        ("6 T1 threshold-based property", criterion_6),
        ("7 Q1 prediction speedup", criterion_7),
        ("8 Q2 error scaling trend", criterion_8),
        ("9 Q3 precompute budget shape", criterion_9),
        ("10 oracle-equivalence spot checks", criterion_10),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut unexpected = 0;
    for (name, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.split(' ').next() == Some(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let secs = || start.elapsed().as_secs_f64();
        match run() {
            Ok(o) if o.passed => println!("PASS  criterion {name}: {} [{:.0}s]", o.detail, secs()),
            Ok(o) => match o.known {
                Some(why) => println!("FAIL  criterion {name} (known: {why}): {} [{:.0}s]", o.detail, secs()),
                None => {
                    unexpected += 1;
                    println!("FAIL  criterion {name}: {} [{:.0}s]", o.detail, secs());
                }
            },
            Err(e) => {
                unexpected += 1;
                println!("FAIL  criterion {name}: error {e:#} [{:.0}s]", secs());
            }
        }
    }
    if unexpected > 0 {
        println!("{unexpected} criteria failed unexpectedly");
        ExitCode::FAILURE
    } else {
        ExitCode::SUCCESS
    }
}
