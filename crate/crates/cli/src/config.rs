//! The run configuration: one JSON document shared by every subcommand.
//! Command-line flags take precedence over file values, and the file's
//! top-level `seed` overrides the per-section seeds so a single knob can
//! pin a whole run.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use tgformer::encode;
use tgformer::graph::{SplitFractions, Splits, TemporalGraph};
use tgformer::model::ModelConfig;
use tgformer::synth::SynthSpec;
use tgformer::train::TrainConfig;
use tgformer::{Error, Result};

#[derive(Debug, Clone, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; when set it overrides `train.seed` and `synth.seed`.
    pub seed: Option<u64>,
    /// Where artifacts land; the `--out-dir` flag wins over this.
    pub out_dir: Option<PathBuf>,
    /// Event CSV consumed by train and eval.
    pub data: Option<PathBuf>,
    pub split: SplitFractions,
    pub model: ModelSection,
    pub train: TrainConfig,
    pub synth: Option<SynthSpec>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<RunConfig> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("invalid config {}: {e}", path.display())))
    }
}

/// Model settings as written in a config file. Differs from [`ModelConfig`]
/// in the data-dependent fields: `alpha` may be left out to be derived from
/// the training time span, and the edge-feature width always comes from the
/// ingested events.
#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub seq_len: usize,
    pub d: usize,
    pub heads: usize,
    pub layers: usize,
    pub top_k_scale: f64,
    pub beta: f64,
    pub alpha: Option<f64>,
}

impl Default for ModelSection {
    fn default() -> Self {
        ModelSection {
            seq_len: 32,
            d: 8,
            heads: 2,
            layers: 1,
            top_k_scale: 2.0,
            beta: 1.0,
            alpha: None,
        }
    }
}

impl ModelSection {
    pub fn resolve(&self, graph: &TemporalGraph, splits: &Splits) -> Result<ModelConfig> {
        let alpha = match self.alpha {
            Some(alpha) => alpha,
            None => {
                let (lo, hi) = graph.time_range(splits.train.clone()).ok_or_else(|| {
                    Error::Config("cannot derive alpha from an empty train split".into())
                })?;
                encode::default_alpha(hi - lo, self.d, self.beta)
            }
        };
        let config = ModelConfig {
            seq_len: self.seq_len,
            d: self.d,
            heads: self.heads,
            layers: self.layers,
            top_k_scale: self.top_k_scale,
            alpha,
            beta: self.beta,
            edge_feature_dim: graph.edge_feature_dim(),
        };
        config.validate()?;
        Ok(config)
    }
}
