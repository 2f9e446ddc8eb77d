//! File formats.
//!
//! * instance: JSON `{"schema":1,"elements":[{"id":0,"items":[3,7]},…],"item_weights":{"3":2.5}}`;
//!   items without a weight count 1.
//! * stream: JSONL, one `{"t":1,"op":"ins","elem":0}` per line.
//! * predictions: JSONL, one `{"elem":0,"t_ins_hat":1,"t_del_hat":9}` per line; the
//!   window `w` is a run parameter, not part of the file.
//! * precomputation store: a directory with `manifest.json` and one JSONL pair log
//!   per `(γ, h)` (main, full) or `warmup.jsonl` (warm-up).

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use predsub_core::generate::CoverageRows;
use predsub_core::robust::StronglyRobustPair;
use predsub_core::scheduler::grids::GuessGrids;
use predsub_core::scheduler::store::{GammaStore, LogEntry, PairLog, PrecomputationStore};
use predsub_core::scheduler::warmup::WarmupStore;
use predsub_core::scheduler::{Precomputed, Variant};
use predsub_core::stream::{Prediction, PredictionTable, UpdateEvent, UpdateStream};
use predsub_core::ElementId;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

pub const SCHEMA: u32 = 1;

fn schema() -> u32 {
    SCHEMA
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ElementRow {
    pub id: ElementId,
    pub items: Vec<u64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceFile {
    #[serde(default = "schema")]
    pub schema: u32,
    pub elements: Vec<ElementRow>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub item_weights: BTreeMap<u64, f64>,
}

impl From<&CoverageRows> for InstanceFile {
    fn from(rows: &CoverageRows) -> Self {
        InstanceFile {
            schema: SCHEMA,
            elements: rows.elements.iter().map(|(id, items)| ElementRow { id: *id, items: items.clone() }).collect(),
            item_weights: rows.item_weights.clone(),
        }
    }
}

impl From<InstanceFile> for CoverageRows {
    fn from(file: InstanceFile) -> Self {
        CoverageRows {
            elements: file.elements.into_iter().map(|r| (r.id, r.items)).collect(),
            item_weights: file.item_weights,
        }
    }
}

fn check_schema(found: u32, path: &Path) -> Result<()> {
    if found != SCHEMA {
        bail!("{}: unsupported schema {found} (expected {SCHEMA})", path.display());
    }
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    serde_json::from_reader(BufReader::new(file)).with_context(|| format!("parsing {}", path.display()))
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Blank lines are skipped; errors name the offending line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    let mut rows = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        rows.push(serde_json::from_str(&line).with_context(|| format!("{}:{}", path.display(), i + 1))?);
    }
    Ok(rows)
}

pub fn read_instance(path: &Path) -> Result<CoverageRows> {
    let file: InstanceFile = read_json(path)?;
    check_schema(file.schema, path)?;
    Ok(file.into())
}

pub fn write_instance(path: &Path, rows: &CoverageRows) -> Result<()> {
    write_json(path, &InstanceFile::from(rows))
}

pub fn read_stream(path: &Path) -> Result<UpdateStream> {
    let events: Vec<UpdateEvent> = read_jsonl(path)?;
    UpdateStream::new(events).with_context(|| format!("validating {}", path.display()))
}

pub fn write_stream(path: &Path, stream: &UpdateStream) -> Result<()> {
    write_jsonl(path, stream.events())
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
struct PredictionRow {
    elem: ElementId,
    t_ins_hat: i64,
    t_del_hat: i64,
}

pub fn read_predictions(path: &Path, w: usize) -> Result<PredictionTable> {
    let rows: Vec<PredictionRow> = read_jsonl(path)?;
    let mut entries = BTreeMap::new();
    for r in rows {
        if entries.insert(r.elem, Prediction { t_ins_hat: r.t_ins_hat, t_del_hat: r.t_del_hat }).is_some() {
            bail!("{}: duplicate prediction for {}", path.display(), r.elem);
        }
    }
    PredictionTable::new(entries, w).with_context(|| format!("validating {}", path.display()))
}

pub fn write_predictions(path: &Path, pred: &PredictionTable) -> Result<()> {
    write_jsonl(
        path,
        pred.entries().iter().map(|(&elem, p)| PredictionRow { elem, t_ins_hat: p.t_ins_hat, t_del_hat: p.t_del_hat }),
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaManifest {
    pub gamma: f64,
    pub h_values: Vec<usize>,
    /// Log file per entry of `h_values`, relative to the store directory.
    pub logs: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StoreManifest {
    pub schema: u32,
    pub variant: Variant,
    pub k: usize,
    pub eps: f64,
    pub w: usize,
    pub n: usize,
    pub seed: u64,
    /// Queries spent building the store.
    pub precompute_queries: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub main: Option<MainManifest>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grids: Option<GuessGrids>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_gamma: Vec<Option<GammaManifest>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warmup_d: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MainManifest {
    pub gamma: f64,
    pub h_index: usize,
    pub h: Vec<usize>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct WarmupPoint {
    t: usize,
    pairs: Vec<StronglyRobustPair>,
}

/// Run parameters recorded alongside a store.
#[derive(Clone, Debug, PartialEq)]
pub struct StoreMeta {
    pub variant: Variant,
    pub k: usize,
    pub eps: f64,
    pub w: usize,
    pub n: usize,
    pub seed: u64,
    pub precompute_queries: u64,
}

fn write_gamma_stores(dir: &Path, per_gamma: &[Option<GammaStore>]) -> Result<Vec<Option<GammaManifest>>> {
    let mut out = Vec::with_capacity(per_gamma.len());
    for (gi, gs) in per_gamma.iter().enumerate() {
        let Some(gs) = gs else {
            out.push(None);
            continue;
        };
        let mut logs = Vec::new();
        for (hi, log) in gs.logs.iter().enumerate() {
            let name = format!("pairs_g{gi}_h{hi}.jsonl");
            write_jsonl(&dir.join(&name), log.entries())?;
            logs.push(name);
        }
        out.push(Some(GammaManifest { gamma: gs.gamma, h_values: gs.h_values.clone(), logs }));
    }
    Ok(out)
}

fn read_gamma_stores(dir: &Path, per_gamma: &[Option<GammaManifest>]) -> Result<Vec<Option<GammaStore>>> {
    let mut out = Vec::with_capacity(per_gamma.len());
    for gm in per_gamma {
        let Some(gm) = gm else {
            out.push(None);
            continue;
        };
        if gm.logs.len() != gm.h_values.len() {
            bail!("manifest lists {} logs for {} error guesses", gm.logs.len(), gm.h_values.len());
        }
        let mut logs = Vec::with_capacity(gm.logs.len());
        for name in &gm.logs {
            let path = dir.join(name);
            let entries: Vec<LogEntry> = read_jsonl(&path)?;
            logs.push(PairLog::from_entries(entries).with_context(|| format!("replaying {}", path.display()))?);
        }
        out.push(Some(GammaStore { gamma: gm.gamma, h_values: gm.h_values.clone(), logs }));
    }
    Ok(out)
}

pub fn save_store(dir: &Path, pre: &Precomputed, meta: &StoreMeta) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut manifest = StoreManifest {
        schema: SCHEMA,
        variant: meta.variant,
        k: meta.k,
        eps: meta.eps,
        w: meta.w,
        n: meta.n,
        seed: meta.seed,
        precompute_queries: meta.precompute_queries,
        main: None,
        grids: None,
        per_gamma: Vec::new(),
        warmup_d: None,
    };
    match pre {
        Precomputed::None => {}
        Precomputed::Warmup(store) => {
            manifest.warmup_d = Some(store.d);
            let points = store.points.iter().map(|(t, pairs)| WarmupPoint { t: *t, pairs: pairs.as_ref().clone() });
            write_jsonl(&dir.join("warmup.jsonl"), points)?;
        }
        Precomputed::Main { gamma, h_index, h, store } => {
            manifest.main = Some(MainManifest { gamma: *gamma, h_index: *h_index, h: h.clone() });
            manifest.per_gamma = write_gamma_stores(dir, &store.per_gamma)?;
        }
        Precomputed::Full { grids, store } => {
            manifest.grids = Some(grids.clone());
            manifest.per_gamma = write_gamma_stores(dir, &store.per_gamma)?;
        }
    }
    write_json(&dir.join("manifest.json"), &manifest)
}

pub fn load_store(dir: &Path) -> Result<(Precomputed, StoreManifest)> {
    let path = dir.join("manifest.json");
    let m: StoreManifest = read_json(&path)?;
    check_schema(m.schema, &path)?;
    let store = |per_gamma| PrecomputationStore { k: m.k, eps: m.eps, w: m.w, n: m.n, per_gamma };
    let pre = match m.variant {
        Variant::BaselineDynamic => Precomputed::None,
        Variant::Warmup => {
            let d = m.warmup_d.context("warm-up manifest without d")?;
            let points: Vec<WarmupPoint> = read_jsonl(&dir.join("warmup.jsonl"))?;
            Precomputed::Warmup(WarmupStore { d, points: points.into_iter().map(|p| (p.t, Arc::new(p.pairs))).collect() })
        }
        Variant::Main => {
            let main = m.main.clone().context("main manifest without guesses")?;
            Precomputed::Main {
                gamma: main.gamma,
                h_index: main.h_index,
                h: main.h,
                store: store(read_gamma_stores(dir, &m.per_gamma)?),
            }
        }
        Variant::Full => {
            let grids = m.grids.clone().context("full manifest without grids")?;
            Precomputed::Full { grids, store: store(read_gamma_stores(dir, &m.per_gamma)?) }
        }
    };
    Ok((pre, m))
}
