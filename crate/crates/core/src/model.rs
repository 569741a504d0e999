//! The full link-prediction model: encoders, stacked auto-correlation
//! transformer layers, adaptive readout, and a two-class predictor head.
//!
//! Layers are pre-norm residual blocks. At initialization the attention
//! mixer and the second feed-forward affine are zero, so every layer starts
//! as an exact passthrough, and the predictor's final affine starts at zero
//! so every pair scores 0.5; training wakes these paths up from the first
//! optimizer step.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::acom::{self, AcomConfig, DelaySelection};
use crate::encode::{self, EncodeDims};
use crate::error::{Error, Result};
use crate::graph::InteractionSequence;
use crate::params::{xavier, LeafSet, ParamStore};
use crate::tensor::Tensor;

const LN_EPS: f64 = 1e-5;
const PROB_EPS: f64 = 1e-7;
const PAD_LOGIT: f64 = -1e30;
const CHECKPOINT_MAGIC: [u8; 4] = *b"TGCK";
const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Interaction sequence length L (history plus the anchor self-loop).
    pub seq_len: usize,
    /// Aligned width of each encoding block; the transformer width is `4d`.
    pub d: usize,
    pub heads: usize,
    pub layers: usize,
    /// Scale `c` in the attention delay budget `floor(c * ln L)`.
    pub top_k_scale: f64,
    /// Time-encoding ladder base, resolved to a concrete value before
    /// construction (see [`encode::default_alpha`]).
    pub alpha: f64,
    pub beta: f64,
    /// Raw edge-feature width of the data set (0 when absent).
    pub edge_feature_dim: usize,
}

impl ModelConfig {
    /// Transformer channel count.
    pub fn width(&self) -> usize {
        4 * self.d
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |reason: String| Err(Error::Config(reason));
        if self.seq_len < 2 {
            return fail(format!(
                "seq_len must be at least 2 (one event plus the anchor), got {}",
                self.seq_len
            ));
        }
        if self.d == 0 || self.layers == 0 || self.heads == 0 {
            return fail("d, layers and heads must all be positive".into());
        }
        if self.width() % self.heads != 0 {
            return fail(format!(
                "{} heads cannot split {} channels",
                self.heads,
                self.width()
            ));
        }
        if !(self.top_k_scale > 0.0) {
            return fail(format!("top_k_scale must be positive, got {}", self.top_k_scale));
        }
        if !(self.alpha > 0.0) || !(self.beta > 0.0) {
            return fail(format!(
                "alpha and beta must be positive, got {} and {}",
                self.alpha, self.beta
            ));
        }
        Ok(())
    }
}

/// Scored pair with the delays each attention head kept, layer by layer.
pub struct PairOutput {
    /// `[1, 1]` probability of the interaction, attached to the graph.
    pub prob: Tensor,
    pub delays_u: Vec<Vec<DelaySelection>>,
    pub delays_v: Vec<Vec<DelaySelection>>,
}

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamStore,
    omega: Vec<f64>,
}

impl Model {
    pub fn new(config: ModelConfig, seed: u64) -> Result<Model> {
        config.validate()?;
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let dims = Self::encode_dims_for(&config);
        encode::register_params(&mut params, &dims, &mut rng)?;
        let c = config.width();
        for j in 0..config.layers {
            let p = |suffix: &str| format!("layer.{j}.{suffix}");
            params.register(&p("ln1.gamma"), 1, c, vec![1.0; c])?;
            params.register(&p("ln1.beta"), 1, c, vec![0.0; c])?;
            params.register(&p("attn.w_out"), c, c, vec![0.0; c * c])?;
            params.register(&p("ln2.gamma"), 1, c, vec![1.0; c])?;
            params.register(&p("ln2.beta"), 1, c, vec![0.0; c])?;
            params.register(&p("ffn.w1"), c, c, xavier(c, c, &mut rng))?;
            params.register(&p("ffn.b1"), 1, c, vec![0.0; c])?;
            params.register(&p("ffn.w2"), c, c, vec![0.0; c * c])?;
            params.register(&p("ffn.b2"), 1, c, vec![0.0; c])?;
        }
        params.register("readout.w_a", 2 * c, 1, vec![0.0; 2 * c])?;
        params.register("predictor.w1", 2 * c, c, xavier(2 * c, c, &mut rng))?;
        params.register("predictor.b1", 1, c, vec![0.0; c])?;
        params.register("predictor.w2", c, 2, vec![0.0; 2 * c])?;
        params.register("predictor.b2", 1, 2, vec![0.0; 2])?;
        let omega = encode::time_frequencies(dims.d_time, config.alpha, config.beta)?;
        Ok(Model { config, params, omega })
    }

    fn encode_dims_for(config: &ModelConfig) -> EncodeDims {
        EncodeDims {
            d: config.d,
            d_node: config.d,
            d_edge: config.d,
            d_time: config.d,
            d_freq: config.d,
            edge_feature_dim: config.edge_feature_dim,
        }
    }

    pub fn encode_dims(&self) -> EncodeDims {
        Self::encode_dims_for(&self.config)
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    fn leaf<'a>(leaves: &'a LeafSet, name: &str) -> Result<&'a Tensor> {
        leaves.get(name)
    }

    /// One pre-norm residual block; returns the new state and the delays the
    /// heads kept.
    pub fn series_layer(
        &self,
        z: &Tensor,
        leaves: &LeafSet,
        layer: usize,
    ) -> Result<(Tensor, Vec<DelaySelection>)> {
        let p = |suffix: &str| format!("layer.{layer}.{suffix}");
        let ln1 = z
            .layer_norm_rows(LN_EPS)?
            .mul_row(Self::leaf(leaves, &p("ln1.gamma"))?)?
            .add_row(Self::leaf(leaves, &p("ln1.beta"))?)?;
        let cfg = AcomConfig {
            heads: self.config.heads,
            top_k_scale: self.config.top_k_scale,
        };
        let (attn, selections) = acom::multi_head(&ln1, Self::leaf(leaves, &p("attn.w_out"))?, &cfg)?;
        let mid = attn.add(z)?;
        let ln2 = mid
            .layer_norm_rows(LN_EPS)?
            .mul_row(Self::leaf(leaves, &p("ln2.gamma"))?)?
            .add_row(Self::leaf(leaves, &p("ln2.beta"))?)?;
        let ffn = ln2
            .matmul(Self::leaf(leaves, &p("ffn.w1"))?)?
            .add_row(Self::leaf(leaves, &p("ffn.b1"))?)?
            .relu()?
            .matmul(Self::leaf(leaves, &p("ffn.w2"))?)?
            .add_row(Self::leaf(leaves, &p("ffn.b2"))?)?;
        Ok((ffn.add(&mid)?, selections))
    }

    /// Anchor-plus-attention pooling over the event rows. The anchor is the
    /// final row (the self-loop at the query time); the other rows compete
    /// through a masked softmax, and padding never receives weight. With no
    /// live event rows the anchor is returned alone.
    pub fn readout(&self, z: &Tensor, pad: &[bool], leaves: &LeafSet) -> Result<Tensor> {
        let l = z.rows();
        if pad.len() != l {
            return Err(Error::ShapeMismatch {
                op: "readout",
                lhs: format!("[{l}] pad flags"),
                rhs: format!("[{}]", pad.len()),
            });
        }
        let anchor = z.slice(0, l - 1, 1)?;
        if l == 1 || pad[..l - 1].iter().all(|p| *p) {
            return Ok(anchor);
        }
        let events = z.slice(0, 0, l - 1)?;
        let paired = Tensor::concat(1, &[anchor.repeat_rows(l - 1)?, events.clone()])?;
        let logits = paired.matmul(Self::leaf(leaves, "readout.w_a")?)?;
        let mask = Tensor::new(
            l - 1,
            1,
            pad[..l - 1]
                .iter()
                .map(|p| if *p { PAD_LOGIT } else { 0.0 })
                .collect(),
        )?;
        let lambda = logits.add(&mask)?.softmax(0)?;
        anchor.add(&lambda.transpose()?.matmul(&events)?)
    }

    /// Sequence representation `[1, 4d]` given its pair count matrix.
    pub fn embed(
        &self,
        seq: &InteractionSequence,
        counts: &Tensor,
        leaves: &LeafSet,
    ) -> Result<(Tensor, Vec<Vec<DelaySelection>>)> {
        let dims = self.encode_dims();
        let mut z = encode::encode_sequence(seq, counts, leaves, &dims, &self.omega)?;
        let mut all = Vec::with_capacity(self.config.layers);
        for j in 0..self.config.layers {
            let (next, sel) = self.series_layer(&z, leaves, j)?;
            z = next;
            all.push(sel);
        }
        let h = self.readout(&z, &seq.pad, leaves)?;
        Ok((h, all))
    }

    /// Probability that the two sequences' nodes interact at their shared
    /// anchor time, with full attention introspection.
    pub fn pair_output(
        &self,
        seq_u: &InteractionSequence,
        seq_v: &InteractionSequence,
        leaves: &LeafSet,
    ) -> Result<PairOutput> {
        if seq_u.time != seq_v.time {
            return Err(Error::InvalidArgument {
                op: "pair_output",
                reason: format!(
                    "sequence anchors disagree: {} vs {}",
                    seq_u.time, seq_v.time
                ),
            });
        }
        let (counts_u, counts_v) = encode::count_frequencies(seq_u, seq_v)?;
        let (h_u, delays_u) = self.embed(seq_u, &counts_u, leaves)?;
        let (h_v, delays_v) = self.embed(seq_v, &counts_v, leaves)?;
        let joint = Tensor::concat(1, &[h_u, h_v])?;
        let hidden = joint
            .matmul(Self::leaf(leaves, "predictor.w1")?)?
            .add_row(Self::leaf(leaves, "predictor.b1")?)?
            .relu()?;
        let classes = hidden
            .matmul(Self::leaf(leaves, "predictor.w2")?)?
            .add_row(Self::leaf(leaves, "predictor.b2")?)?
            .softmax(1)?;
        let prob = classes.slice(1, 1, 1)?;
        Ok(PairOutput { prob, delays_u, delays_v })
    }

    /// Detached scalar probability, for evaluation paths.
    pub fn probability(&self, seq_u: &InteractionSequence, seq_v: &InteractionSequence) -> Result<f64> {
        let leaves = self.params.frozen()?;
        Ok(self.pair_output(seq_u, seq_v, &leaves)?.prob.item()?)
    }

    /// Delays the trained attention keeps when a sequence is scored against
    /// itself, flattened across layers. Used for period recovery checks.
    pub fn delay_profile(&self, seq: &InteractionSequence) -> Result<Vec<DelaySelection>> {
        let leaves = self.params.frozen()?;
        let (counts, _) = encode::count_frequencies(seq, seq)?;
        let (_, layers) = self.embed(seq, &counts, &leaves)?;
        Ok(layers.into_iter().flatten().collect())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(File::create(path)?);
        out.write_all(&CHECKPOINT_MAGIC)?;
        out.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
        let config = serde_json::to_vec(&self.config)?;
        out.write_all(&(config.len() as u64).to_le_bytes())?;
        out.write_all(&config)?;
        self.params.write_blob(&mut out)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Model> {
        let mut input = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Checkpoint(format!(
                "{} is not a model checkpoint",
                path.display()
            )));
        }
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != CHECKPOINT_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported checkpoint version {version}"
            )));
        }
        let mut u64buf = [0u8; 8];
        input.read_exact(&mut u64buf)?;
        let config_len = u64::from_le_bytes(u64buf) as usize;
        let mut config_bytes = vec![0u8; config_len];
        input.read_exact(&mut config_bytes)?;
        let config: ModelConfig = serde_json::from_slice(&config_bytes)?;
        let params = ParamStore::read_blob(&mut input)?;
        Model::from_parts(config, params)
    }

    /// Load and require the stored configuration to match `expected`.
    pub fn load_expecting(path: &Path, expected: &ModelConfig) -> Result<Model> {
        let model = Model::load(path)?;
        if model.config != *expected {
            return Err(Error::Checkpoint(format!(
                "checkpoint configuration does not match: stored {:?}, expected {:?}",
                model.config, expected
            )));
        }
        Ok(model)
    }

    /// Rebuild a model around stored parameters, validating every entry's
    /// name and shape against the configuration.
    pub fn from_parts(config: ModelConfig, params: ParamStore) -> Result<Model> {
        let template = Model::new(config.clone(), 0)?;
        let expected = template.params;
        if expected.entries().len() != params.entries().len() {
            return Err(Error::Checkpoint(format!(
                "checkpoint has {} parameter blocks, configuration needs {}",
                params.entries().len(),
                expected.entries().len()
            )));
        }
        for (want, got) in expected.entries().iter().zip(params.entries()) {
            if want.name != got.name || want.rows != got.rows || want.cols != got.cols {
                return Err(Error::Checkpoint(format!(
                    "parameter block mismatch: expected {} [{}, {}], found {} [{}, {}]",
                    want.name, want.rows, want.cols, got.name, got.rows, got.cols
                )));
            }
        }
        let omega = encode::time_frequencies(config.d, config.alpha, config.beta)?;
        Ok(Model { config, params, omega })
    }
}

/// Summed binary cross-entropy of predicted probabilities against 0/1
/// labels, with probabilities clamped away from the log singularities.
pub fn bce_loss(preds: &Tensor, labels: &[f64]) -> Result<Tensor> {
    if preds.cols() != 1 || preds.rows() != labels.len() {
        return Err(Error::ShapeMismatch {
            op: "bce_loss",
            lhs: format!("[{}, 1]", labels.len()),
            rhs: format!("[{}, {}]", preds.rows(), preds.cols()),
        });
    }
    if labels.iter().any(|y| *y != 0.0 && *y != 1.0) {
        return Err(Error::InvalidArgument {
            op: "bce_loss",
            reason: "labels must be 0 or 1".into(),
        });
    }
    let y = Tensor::new(labels.len(), 1, labels.to_vec())?;
    let p = preds.clamp(PROB_EPS, 1.0 - PROB_EPS)?;
    let hit = y.mul(&p.ln()?)?;
    let miss = y.affine(-1.0, 1.0)?.mul(&p.affine(-1.0, 1.0)?.ln()?)?;
    hit.add(&miss)?.sum_all()?.scale(-1.0)
}
