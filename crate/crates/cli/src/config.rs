//! Parameters accepted both as flags and as a JSON `--config` file; flags win.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use predsub_core::generate::FunctionFamily;
use predsub_core::scheduler::{FrameworkConfig, Variant};
use serde::{Deserialize, Serialize};

use crate::experiment::OptPolicy;
use crate::instance::GenParams;
use crate::io::read_json;
use crate::sweep::GridParam;

fn parse_variant(s: &str) -> Result<Variant, String> {
    s.parse().map_err(|e: predsub_core::Error| e.to_string())
}

fn parse_function(s: &str) -> Result<FunctionFamily, String> {
    match s {
        "coverage" => Ok(FunctionFamily::Coverage),
        "weighted" => Ok(FunctionFamily::Weighted),
        "modular" => Ok(FunctionFamily::Modular),
        _ => Err(format!("unknown function {s:?}; expected coverage, weighted or modular")),
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    /// JSON file with any of these parameters; flags override it.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Coverage instance (JSON).
    #[arg(long)]
    pub instance: Option<PathBuf>,
    /// Update stream (JSONL).
    #[arg(long)]
    pub stream: Option<PathBuf>,
    /// Predicted times (JSONL).
    #[arg(long)]
    pub pred: Option<PathBuf>,
    /// Precomputation store directory written by `precompute`.
    #[arg(long)]
    pub store: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,

    /// Prediction window tolerance.
    #[arg(long)]
    pub w: Option<usize>,
    #[arg(long)]
    pub k: Option<usize>,
    #[arg(long)]
    pub eps: Option<f64>,
    /// warmup | main | full | baseline-dynamic
    #[arg(long, value_parser = parse_variant)]
    pub variant: Option<Variant>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub replicas: Option<usize>,
    /// Prediction error handed to the warm-up and main variants; defaults to the
    /// offline error of the loaded instance.
    #[arg(long)]
    pub eta: Option<usize>,
    /// Fixed optimum guess for the main variant.
    #[arg(long)]
    pub gamma: Option<f64>,
    /// Reference values for ratios.
    #[arg(long, value_enum)]
    pub opt: Option<OptPolicy>,

    /// Number of distinct elements the stream draws from.
    #[arg(long)]
    pub universe: Option<usize>,
    /// Stream length.
    #[arg(long)]
    pub n: Option<usize>,
    /// Number of mispredicted elements.
    #[arg(long)]
    pub corrupt: Option<usize>,
    /// Largest offset of a correct prediction from the true time (at most `w`).
    #[arg(long)]
    pub jitter: Option<usize>,
    /// coverage | weighted | modular
    #[arg(long, value_parser = parse_function)]
    pub function: Option<FunctionFamily>,
    /// Elements in the coverage instance.
    #[arg(long)]
    pub elements: Option<usize>,
    /// Items in the coverage instance.
    #[arg(long)]
    pub items: Option<usize>,
    #[arg(long)]
    pub min_degree: Option<usize>,
    #[arg(long)]
    pub max_degree: Option<usize>,
    /// Typical number of simultaneously active elements.
    #[arg(long)]
    pub target_active: Option<usize>,

    /// Swept parameter.
    #[arg(long, value_enum)]
    pub grid: Option<GridParam>,
    /// Grid values, comma separated.
    #[arg(long, value_delimiter = ',')]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<usize>>,
}

macro_rules! overlay {
    ($flags:ident, $file:ident; $($field:ident),*) => {
        Params { config: None, $($field: $flags.$field.or($file.$field)),* }
    };
}

impl Params {
    /// Flags layered over the `--config` file, if one was given.
    pub fn resolve(self) -> Result<Params> {
        let Some(path) = self.config.clone() else { return Ok(self) };
        let file: Params = read_json(&path).with_context(|| format!("loading config {}", path.display()))?;
        let flags = self;
        Ok(overlay!(flags, file; instance, stream, pred, store, out, w, k, eps, variant, seed, replicas, eta, gamma,
            opt, universe, n, corrupt, jitter, function, elements, items, min_degree, max_degree, target_active,
            grid, values))
    }

    pub fn out_dir(&self) -> Result<&Path> {
        self.out.as_deref().context("--out is required")
    }

    /// Generator settings: the standard instance with any overrides.
    pub fn gen_params(&self) -> Result<GenParams> {
        let mut g = GenParams::standard(self.corrupt.unwrap_or(0), self.seed.unwrap_or(0));
        macro_rules! set {
            ($($field:ident),*) => { $(if let Some(v) = self.$field { g.$field = v; })* };
        }
        set!(universe, n, jitter, w, function, elements, items, min_degree, max_degree, target_active);
        if self.universe.is_some() && self.elements.is_none() {
            g.elements = g.elements.max(g.universe);
        }
        if self.w.is_some() && self.jitter.is_none() {
            g.jitter = g.jitter.min(g.w);
        }
        if g.jitter > g.w {
            bail!("--jitter {} exceeds --w {}", g.jitter, g.w);
        }
        Ok(g)
    }

    /// Framework settings; `eta` fills `known_eta` when the flag is absent.
    pub fn framework(&self, eta: Option<usize>) -> Result<FrameworkConfig> {
        let variant = self.variant.unwrap_or(Variant::Full);
        let known_eta = match variant {
            Variant::Warmup | Variant::Main => self.eta.or(eta),
            _ => self.eta,
        };
        let cfg = FrameworkConfig {
            k: self.k.unwrap_or(16),
            eps: self.eps.unwrap_or(0.1),
            variant,
            known_eta,
            gamma: self.gamma,
            seed: self.seed.unwrap_or(0),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn replicas(&self) -> Result<usize> {
        let r = self.replicas.unwrap_or(1);
        if r == 0 {
            bail!("--replicas must be at least 1");
        }
        Ok(r)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"k": 3, "eps": 0.2, "variant": "main", "values": [1, 2]}"#).unwrap();
        let flags = Params { config: Some(path), k: Some(5), ..Default::default() };
        let p = flags.resolve().unwrap();
        assert_eq!((p.k, p.eps, p.variant), (Some(5), Some(0.2), Some(Variant::Main)));
        assert_eq!(p.values, Some(vec![1, 2]));
    }

    #[test]
    fn unknown_config_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.json");
        std::fs::write(&path, r#"{"kk": 3}"#).unwrap();
        let flags = Params { config: Some(path), ..Default::default() };
        assert!(flags.resolve().is_err());
    }

    #[test]
    fn jitter_clamped_to_w() {
        let p = Params { w: Some(2), ..Default::default() };
        assert_eq!(p.gen_params().unwrap().jitter, 2);
        let p = Params { w: Some(2), jitter: Some(3), ..Default::default() };
        assert!(p.gen_params().is_err());
    }
}
