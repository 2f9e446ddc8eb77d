//! Grid sweeps over `η`, `w` or `k` with replicas, run on a rayon pool.

use std::path::Path;

use anyhow::Result;
use predsub_core::mix_seed;
use predsub_core::scheduler::FrameworkConfig;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::experiment::{run_experiment, OptPolicy, References, Summary};
use crate::instance::GenParams;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum GridParam {
    Eta,
    W,
    K,
}

impl GridParam {
    pub fn name(self) -> &'static str {
        match self {
            GridParam::Eta => "eta",
            GridParam::W => "w",
            GridParam::K => "k",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepSpec {
    pub base: GenParams,
    pub framework: FrameworkConfig,
    pub grid: GridParam,
    pub values: Vec<usize>,
    pub replicas: usize,
    pub opt: OptPolicy,
}

impl SweepSpec {
    /// Generator and framework settings of one cell.
    pub fn cell(&self, value: usize, replica: usize) -> (GenParams, FrameworkConfig) {
        let mut g = self.base.clone();
        let mut c = self.framework.clone();
        g.seed = mix_seed(self.base.seed, replica as u64);
        c.seed = mix_seed(self.framework.seed, replica as u64);
        match self.grid {
            GridParam::Eta => {
                g.corrupt = value;
                c.known_eta = Some(value);
            }
            GridParam::W => {
                g.w = value;
                g.jitter = g.jitter.min(value);
            }
            GridParam::K => c.k = value,
        }
        if self.grid != GridParam::Eta && c.known_eta.is_some() {
            c.known_eta = Some(g.corrupt);
        }
        (g, c)
    }
}

/// Outcome of one `(value, replica)` cell.
#[derive(Clone, Debug)]
pub struct Cell {
    pub value: usize,
    pub replica: usize,
    pub result: Result<Summary, String>,
}

/// One CSV row per grid value; failed cells are left out of the statistics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub grid_param: String,
    pub value: usize,
    pub amortized_stream_queries_mean: f64,
    pub stderr: f64,
    /// Empty when the sweep ran without references.
    pub ratio_mean: Option<f64>,
    pub ratio_min: Option<f64>,
    pub eta_realized: f64,
}

pub fn run_cell(spec: &SweepSpec, value: usize, replica: usize) -> Result<Summary> {
    let (g, c) = spec.cell(value, replica);
    let inst = g.generate()?;
    let refs = References::compute(&inst, c.k, spec.opt)?;
    Ok(run_experiment(&inst, &c, refs.as_ref(), None)?.summary)
}

pub fn run_cells(spec: &SweepSpec) -> Vec<Cell> {
    let jobs: Vec<(usize, usize)> =
        spec.values.iter().flat_map(|&v| (0..spec.replicas).map(move |r| (v, r))).collect();
    jobs.into_par_iter()
        .map(|(value, replica)| {
            let result = run_cell(spec, value, replica).map_err(|e| format!("{e:#}"));
            if let Err(e) = &result {
                log::warn!("cell {}={value} replica {replica} failed: {e}", spec.grid.name());
            }
            Cell { value, replica, result }
        })
        .collect()
}

pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

pub fn aggregate(spec: &SweepSpec, cells: &[Cell]) -> Vec<SweepRow> {
    spec.values
        .iter()
        .map(|&value| {
            let ok: Vec<&Summary> =
                cells.iter().filter(|c| c.value == value).filter_map(|c| c.result.as_ref().ok()).collect();
            let amortized: Vec<f64> = ok.iter().map(|s| s.amortized_stream_queries).collect();
            let (mean, stderr) = mean_stderr(&amortized);
            let ratio_means: Vec<f64> = ok.iter().filter_map(|s| s.ratio_mean).collect();
            let ratio_min = ok.iter().filter_map(|s| s.ratio_min).reduce(f64::min);
            let etas: Vec<f64> = ok.iter().map(|s| s.eta as f64).collect();
            SweepRow {
                grid_param: spec.grid.name().to_string(),
                value,
                amortized_stream_queries_mean: mean,
                stderr,
                ratio_mean: (!ratio_means.is_empty()).then(|| mean_stderr(&ratio_means).0),
                ratio_min,
                eta_realized: mean_stderr(&etas).0,
            }
        })
        .collect()
}

pub fn write_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
