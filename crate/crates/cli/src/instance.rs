//! Instances: a coverage function plus a stream and its predictions.

use anyhow::Result;
use predsub_core::generate::{
    coverage_rows, gen_stream, CoverageParams, CoverageRows, Corruption, FunctionFamily, Lifetime, StreamParams,
};
use predsub_core::stream::{PredictionTable, UpdateStream};
use predsub_core::{mix_seed, CountingOracle, CoverageOracle};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug)]
pub struct Instance {
    pub rows: CoverageRows,
    pub stream: UpdateStream,
    pub pred: PredictionTable,
    /// Prediction error; known for generated instances.
    pub eta: usize,
}

impl Instance {
    /// A fresh counting oracle; every run should own one.
    pub fn oracle(&self) -> Result<CountingOracle<CoverageOracle>> {
        Ok(CountingOracle::new(self.rows.build()?)?)
    }
}

/// Generator settings for one synthetic instance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GenParams {
    pub elements: usize,
    pub items: usize,
    pub min_degree: usize,
    pub max_degree: usize,
    pub function: FunctionFamily,
    pub universe: usize,
    pub n: usize,
    pub target_active: usize,
    pub lifetime: Lifetime,
    pub corrupt: usize,
    pub corruption: Corruption,
    pub jitter: usize,
    pub w: usize,
    pub seed: u64,
}

impl GenParams {
    /// The desk-scale benchmark: 4096 unweighted coverage sets over 20000 items, a
    /// 4096-event stream drifting around 400 active elements, `w = 8`.
    pub fn standard(eta: usize, seed: u64) -> Self {
        GenParams {
            elements: 4096,
            items: 20_000,
            min_degree: 5,
            max_degree: 15,
            function: FunctionFamily::Coverage,
            universe: 4096,
            n: 4096,
            target_active: 400,
            lifetime: Lifetime::Uniform,
            corrupt: eta,
            corruption: Corruption::Mixed,
            jitter: 8,
            w: 8,
            seed,
        }
    }

    /// Entry `index` of the small-instance matrix used by the approximation checks:
    /// at most 18 elements, `n ≤ 36`, `η ∈ {0, 2, 5}`, `w ∈ {0, 2}`. Returns `(params, k)`.
    pub fn small(index: usize) -> (Self, usize) {
        let h = mix_seed(0x5A11, index as u64);
        let universe = 10 + (h % 9) as usize;
        let n = universe + ((h >> 8) % (universe as u64 + 1)) as usize;
        let n = n.min(36);
        let k = 2 + ((h >> 16) % 3) as usize;
        let eta = [0, 2, 5][index % 3];
        let w = [0, 2][(index / 3) % 2];
        let function = if (h >> 24) % 2 == 0 { FunctionFamily::Coverage } else { FunctionFamily::Weighted };
        let params = GenParams {
            elements: universe,
            items: 2 * universe,
            min_degree: 1,
            max_degree: 5,
            function,
            universe,
            n,
            target_active: 4 + ((h >> 32) % 7) as usize,
            lifetime: Lifetime::Uniform,
            corrupt: eta,
            corruption: Corruption::Mixed,
            jitter: w,
            w,
            seed: h,
        };
        (params, k)
    }

    pub fn coverage_params(&self) -> CoverageParams {
        CoverageParams {
            elements: self.elements,
            items: self.items,
            min_degree: self.min_degree,
            max_degree: self.max_degree,
            family: self.function,
            seed: mix_seed(self.seed, 1),
        }
    }

    pub fn stream_params(&self) -> StreamParams {
        StreamParams {
            universe: self.universe,
            n: self.n,
            target_active: self.target_active,
            lifetime: self.lifetime,
            corrupt: self.corrupt,
            corruption: self.corruption,
            jitter: self.jitter,
            w: self.w,
            seed: mix_seed(self.seed, 2),
        }
    }

    pub fn generate(&self) -> Result<Instance> {
        let rows = coverage_rows(&self.coverage_params())?;
        let g = gen_stream(&self.stream_params())?;
        Ok(Instance { rows, stream: g.stream, pred: g.pred, eta: g.eta })
    }
}
