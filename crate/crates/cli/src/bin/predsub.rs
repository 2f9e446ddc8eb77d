use std::path::Path;
use std::process::ExitCode;

use anyhow::{bail, ensure, Context, Result};
use clap::{Parser, Subcommand};
use predsub::config::Params;
use predsub::experiment::{run_experiment, Loaded, References};
use predsub::instance::{GenParams, Instance};
use predsub::io::{
    load_store, read_instance, read_predictions, read_stream, save_store, write_instance, write_json, write_jsonl,
    write_predictions, write_stream, StoreMeta, SCHEMA,
};
use predsub::sweep::{aggregate, run_cells, write_csv, SweepSpec};
use predsub::verify::{run_suite, Suite, VerifyOptions};
use predsub_core::scheduler::{precompute, validate_inputs};
use predsub_core::stream::prediction_error;
use predsub_core::Phase;
use serde::Serialize;

#[derive(Parser)]
#[command(name = "predsub", version, about = "Dynamic submodular maximization with predicted update times")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a coverage instance, a stream and its predictions into --out.
    Gen(Params),
    /// Run the precomputation phase on --instance and --pred; write a store to --out.
    Precompute(Params),
    /// Run one variant and write steps.jsonl and summary.json to --out.
    Run(Params),
    /// Sweep a grid of generated instances and write sweep.csv to --out.
    Sweep(Params),
    /// Run a property suite; exits nonzero if any check fails.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        instances: Option<usize>,
        #[arg(long)]
        seeds: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long)]
        d: Option<usize>,
        /// Write the report as JSON here.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
}

#[derive(Serialize)]
struct GenMeta {
    schema: u32,
    params: GenParams,
    eta: usize,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Gen(p) => gen(p.resolve()?)?,
        Command::Precompute(p) => precompute_cmd(p.resolve()?)?,
        Command::Run(p) => run_cmd(p.resolve()?)?,
        Command::Sweep(p) => sweep(p.resolve()?)?,
        Command::Verify { suite, seed, trials, instances, seeds, eps, d, out } => {
            let opts = VerifyOptions { seed: seed.unwrap_or(0), trials, instances, seeds, eps, d };
            let report = run_suite(suite, &opts)?;
            for c in &report.checks {
                println!("{} {} {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(out) = out {
                write_json(&out, &report)?;
            }
            return Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::FAILURE });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn gen(p: Params) -> Result<()> {
    let out = p.out_dir()?;
    let g = p.gen_params()?;
    let inst = g.generate()?;
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    write_instance(&out.join("instance.json"), &inst.rows)?;
    write_stream(&out.join("stream.jsonl"), &inst.stream)?;
    write_predictions(&out.join("predictions.jsonl"), &inst.pred)?;
    write_json(&out.join("gen.json"), &GenMeta { schema: SCHEMA, params: g, eta: inst.eta })?;
    log::info!("wrote {} events with prediction error {} to {}", inst.stream.len(), inst.eta, out.display());
    Ok(())
}

fn required<'a>(path: &'a Option<std::path::PathBuf>, flag: &str) -> Result<&'a Path> {
    path.as_deref().with_context(|| format!("--{flag} is required"))
}

fn load_instance(p: &Params) -> Result<Instance> {
    let rows = read_instance(required(&p.instance, "instance")?)?;
    let stream = read_stream(required(&p.stream, "stream")?)?;
    let w = p.w.context("--w is required with --pred")?;
    let pred = read_predictions(required(&p.pred, "pred")?, w)?;
    let eta = prediction_error(&stream, &pred)?;
    Ok(Instance { rows, stream, pred, eta })
}

fn precompute_cmd(p: Params) -> Result<()> {
    let out = p.out_dir()?;
    let inst = load_instance(&p)?;
    let cfg = p.framework(Some(inst.eta))?;
    let f = inst.oracle()?;
    validate_inputs(&f, &inst.stream, &inst.pred, &cfg)?;
    let n = p.n.unwrap_or(inst.stream.len());
    let pre = precompute(&f, n, &inst.pred, &cfg).context("precomputation failed")?;
    let meta = StoreMeta {
        variant: cfg.variant,
        k: cfg.k,
        eps: cfg.eps,
        w: inst.pred.w(),
        n,
        seed: cfg.seed,
        precompute_queries: f.phase_total(Phase::Precompute),
    };
    save_store(out, &pre, &meta)?;
    log::info!("{} precompute queries; store written to {}", meta.precompute_queries, out.display());
    Ok(())
}

fn run_cmd(p: Params) -> Result<()> {
    let out = p.out_dir()?;
    let inst = load_instance(&p)?;
    let cfg = p.framework(Some(inst.eta))?;
    let loaded = match &p.store {
        None => None,
        Some(dir) => {
            let (pre, m) = load_store(dir)?;
            ensure!(
                m.variant == cfg.variant && m.k == cfg.k && m.eps == cfg.eps && m.w == inst.pred.w(),
                "store {} was built for variant {} k={} eps={} w={}",
                dir.display(),
                m.variant,
                m.k,
                m.eps,
                m.w
            );
            ensure!(m.n == inst.stream.len(), "store covers n={} but the stream has {} events", m.n, inst.stream.len());
            Some(Loaded { pre, precompute_queries: m.precompute_queries })
        }
    };
    let refs = References::compute(&inst, cfg.k, p.opt.unwrap_or_default())?;
    let exp = run_experiment(&inst, &cfg, refs.as_ref(), loaded)?;
    exp.write(out)?;
    let s = &exp.summary;
    log::info!(
        "{}: {:.1} amortized stream queries, {} precompute queries, ratio mean {:?}",
        s.variant,
        s.amortized_stream_queries,
        s.precompute_queries,
        s.ratio_mean
    );
    Ok(())
}

fn sweep(p: Params) -> Result<()> {
    let out = p.out_dir()?;
    let grid = p.grid.context("--grid is required")?;
    let values = p.values.clone().context("--values is required")?;
    if values.is_empty() {
        bail!("--values is empty");
    }
    let base = p.gen_params()?;
    let spec = SweepSpec {
        framework: p.framework(Some(base.corrupt))?,
        base,
        grid,
        values,
        replicas: p.replicas()?,
        opt: p.opt.unwrap_or_default(),
    };
    let cells = run_cells(&spec);
    std::fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let rows = aggregate(&spec, &cells);
    write_csv(&out.join("sweep.csv"), &rows)?;
    #[derive(Serialize)]
    struct CellRow<'a> {
        value: usize,
        replica: usize,
        #[serde(skip_serializing_if = "Option::is_none")]
        summary: Option<&'a predsub::experiment::Summary>,
        #[serde(skip_serializing_if = "Option::is_none")]
        error: Option<&'a str>,
    }
    write_jsonl(
        &out.join("cells.jsonl"),
        cells.iter().map(|c| CellRow {
            value: c.value,
            replica: c.replica,
            summary: c.result.as_ref().ok(),
            error: c.result.as_ref().err().map(String::as_str),
        }),
    )?;
    let failed = cells.iter().filter(|c| c.result.is_err()).count();
    if failed > 0 {
        log::warn!("{failed} of {} cells failed; see cells.jsonl", cells.len());
    }
    Ok(())
}
