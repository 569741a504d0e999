//! Adam training with early stopping, and ranked link-prediction evaluation.
//!
//! Training walks the train split chronologically, pairs every positive with
//! one random negative, and accumulates per-sample gradients inside each
//! batch before the optimizer steps; the math matches one loss over the
//! whole batch while only one sample's graph is alive at a time. Validation
//! ranks the val split's positives against a fixed set of random negatives,
//! and the best-scoring parameters are restored at the end.
//!
//! Evaluation is split into a sequential phase that draws negatives
//! deterministically (one rng stream per event, so the outcome never depends
//! on the worker count) and a parallel phase that scores the candidate
//! pairs.

use std::collections::HashSet;
use std::ops::Range;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{
    InteractionSequence, NegativeSampler, NegativeStrategy, Splits, TemporalGraph,
};
use crate::metrics::{auc_roc, average_precision};
use crate::model::{bce_loss, Model};
use crate::params::{NamedGrads, ParamStore};
use crate::tensor::Tensor;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub max_epochs: usize,
    pub patience: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            max_epochs: 100,
            patience: 10,
            learning_rate: 1e-5,
            batch_size: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || self.batch_size == 0 {
            return Err(Error::Config(
                "max_epochs and batch_size must be positive".into(),
            ));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        Ok(())
    }
}

/// First-moment/second-moment adaptive optimizer, moments keyed by parameter
/// name.
pub struct Adam {
    learning_rate: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    step_count: u64,
    m: std::collections::HashMap<String, Vec<f64>>,
    v: std::collections::HashMap<String, Vec<f64>>,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step_count: 0,
            m: Default::default(),
            v: Default::default(),
        }
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &NamedGrads) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count as i32;
        let m_corr = 1.0 - self.beta1.powi(t);
        let v_corr = 1.0 - self.beta2.powi(t);
        for entry in params.entries_mut() {
            let Some(g) = grads.get(&entry.name) else {
                continue;
            };
            if g.len() != entry.data.len() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    lhs: format!("{} values for {}", entry.data.len(), entry.name),
                    rhs: format!("{} gradient values", g.len()),
                });
            }
            let m = self
                .m
                .entry(entry.name.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            let v = self
                .v
                .entry(entry.name.clone())
                .or_insert_with(|| vec![0.0; g.len()]);
            for i in 0..g.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / m_corr;
                let v_hat = v[i] / v_corr;
                entry.data[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_ap: f64,
    pub val_auc: f64,
    pub elapsed_s: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_ap: f64,
}

/// Train in place; on return the model holds the parameters of the best
/// validation epoch. `on_epoch` fires after every epoch, in order.
pub fn train(
    model: &mut Model,
    graph: &TemporalGraph,
    splits: &Splits,
    cfg: &TrainConfig,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if splits.train.is_empty() || splits.val.is_empty() {
        return Err(Error::Config(
            "training needs non-empty train and val splits".into(),
        ));
    }
    let seq_len = model.config.seq_len;
    let sampler = NegativeSampler::new(graph.node_count(), HashSet::new());
    let no_current = HashSet::new();

    // Validation candidates are drawn once so epochs compete on a fixed
    // benchmark.
    let mut val_rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    val_rng.set_stream(u64::MAX);
    let val_pairs: Vec<(usize, (usize, usize))> = splits
        .val
        .clone()
        .map(|i| {
            let ev = &graph.events()[i];
            let neg = sampler.sample(
                NegativeStrategy::Random,
                (ev.src, ev.dst),
                &no_current,
                &mut val_rng,
            );
            (i, (neg.src, neg.dst))
        })
        .collect();

    let mut adam = Adam::new(cfg.learning_rate);
    let mut rng = ChaCha12Rng::seed_from_u64(cfg.seed);
    let train_indices: Vec<usize> = splits.train.clone().collect();
    let mut logs: Vec<EpochLog> = Vec::new();
    let mut best: Option<(f64, Vec<Vec<f64>>, usize)> = None;
    let mut stale = 0usize;

    for epoch in 1..=cfg.max_epochs {
        let started = Instant::now();
        let mut epoch_loss = 0.0;
        for (batch_idx, batch) in train_indices.chunks(cfg.batch_size).enumerate() {
            let leaves = model.params.leaves()?;
            let mut acc = NamedGrads::new();
            for &i in batch {
                let ev = &graph.events()[i];
                let neg =
                    sampler.sample(NegativeStrategy::Random, (ev.src, ev.dst), &no_current, &mut rng);
                let s_u = graph.extract_sequence(ev.src, ev.timestamp, seq_len)?;
                let s_v = graph.extract_sequence(ev.dst, ev.timestamp, seq_len)?;
                let s_n = graph.extract_sequence(neg.dst, ev.timestamp, seq_len)?;
                let pos = model.pair_output(&s_u, &s_v, &leaves)?.prob;
                let negp = model.pair_output(&s_u, &s_n, &leaves)?.prob;
                let preds = Tensor::concat(0, &[pos, negp])?;
                let loss = bce_loss(&preds, &[1.0, 0.0])?;
                let value = loss.item()?;
                if !value.is_finite() {
                    return Err(Error::NanLoss { epoch, batch: batch_idx });
                }
                epoch_loss += value;
                let grads = loss.backward()?;
                leaves.fold_grads(&grads, &mut acc);
            }
            adam.step(&mut model.params, &acc)?;
        }

        let (val_ap, val_auc) = validation_metrics(model, graph, &val_pairs, seq_len)?;
        let log = EpochLog {
            epoch,
            train_loss: epoch_loss,
            val_ap,
            val_auc,
            elapsed_s: started.elapsed().as_secs_f64(),
        };
        on_epoch(&log);
        logs.push(log);

        let improved = best.as_ref().map_or(true, |(ap, _, _)| val_ap > *ap);
        if improved {
            best = Some((val_ap, model.params.snapshot(), epoch));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }

    let (best_val_ap, snapshot, best_epoch) = best.expect("at least one epoch ran");
    model.params.restore(&snapshot)?;
    Ok(TrainOutcome {
        epochs: logs,
        best_epoch,
        best_val_ap,
    })
}

fn validation_metrics(
    model: &Model,
    graph: &TemporalGraph,
    val_pairs: &[(usize, (usize, usize))],
    seq_len: usize,
) -> Result<(f64, f64)> {
    let mut scores = Vec::with_capacity(val_pairs.len() * 2);
    let mut labels = Vec::with_capacity(val_pairs.len() * 2);
    for (i, neg) in val_pairs {
        let ev = &graph.events()[*i];
        let s_u = graph.extract_sequence(ev.src, ev.timestamp, seq_len)?;
        let s_v = graph.extract_sequence(ev.dst, ev.timestamp, seq_len)?;
        scores.push(model.probability(&s_u, &s_v)?);
        labels.push(true);
        let s_ns = graph.extract_sequence(neg.0, ev.timestamp, seq_len)?;
        let s_nd = graph.extract_sequence(neg.1, ev.timestamp, seq_len)?;
        scores.push(model.probability(&s_ns, &s_nd)?);
        labels.push(false);
    }
    Ok((
        average_precision(&scores, &labels)?,
        auc_roc(&scores, &labels)?,
    ))
}

/// Which positives an evaluation keeps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// Every event in the segment.
    Transductive,
    /// Only events touching at least one node absent from the train split.
    Inductive,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Regime::Transductive => write!(f, "transductive"),
            Regime::Inductive => write!(f, "inductive"),
        }
    }
}

/// Anything that can score a candidate interaction given the two extracted
/// sequences. Implementations must be safe to call from worker threads.
pub trait LinkScorer: Sync {
    fn score_pair(&self, seq_u: &InteractionSequence, seq_v: &InteractionSequence) -> Result<f64>;
}

impl LinkScorer for Model {
    fn score_pair(&self, seq_u: &InteractionSequence, seq_v: &InteractionSequence) -> Result<f64> {
        self.probability(seq_u, seq_v)
    }
}

/// Scores 1.0 exactly for the true events it was built from and 0.0 for
/// everything else. A harness for validating the evaluation protocol itself.
pub struct PerfectOracle {
    positives: HashSet<(usize, usize, u64)>,
}

impl PerfectOracle {
    pub fn from_graph(graph: &TemporalGraph) -> PerfectOracle {
        let positives = graph
            .events()
            .iter()
            .map(|e| (e.src, e.dst, e.timestamp.to_bits()))
            .collect();
        PerfectOracle { positives }
    }
}

impl LinkScorer for PerfectOracle {
    fn score_pair(&self, seq_u: &InteractionSequence, seq_v: &InteractionSequence) -> Result<f64> {
        let key = (seq_u.node, seq_v.node, seq_u.time.to_bits());
        Ok(if self.positives.contains(&key) { 1.0 } else { 0.0 })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSettings {
    pub strategy: NegativeStrategy,
    pub regime: Regime,
    pub seq_len: usize,
    pub seed: u64,
    pub workers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub strategy: NegativeStrategy,
    pub regime: Regime,
    pub ap: f64,
    pub auc: f64,
    pub positives: usize,
    /// Negatives that exhausted the rejection budget and fell back to a
    /// random draw.
    pub fallback_negatives: usize,
}

struct EvalTask {
    event: usize,
    neg: (usize, usize),
}

/// Rank one segment's positives against sampled negatives.
///
/// The first phase walks the graph chronologically, maintaining the
/// historical pair pool, and draws each event's negative from an rng stream
/// tied to the event index; results are identical for any worker count. The
/// second phase extracts and scores pairs in parallel. Scores line up as
/// positive, negative, positive, negative in event order.
pub fn evaluate(
    scorer: &dyn LinkScorer,
    graph: &TemporalGraph,
    splits: &Splits,
    segment: Range<usize>,
    settings: &EvalSettings,
) -> Result<EvalReport> {
    if segment.is_empty() {
        return Err(Error::Eval("evaluation segment is empty".into()));
    }
    if segment.end > graph.len() {
        return Err(Error::Eval(format!(
            "segment {segment:?} exceeds the event count {}",
            graph.len()
        )));
    }
    let train_nodes = graph.nodes_in(splits.train.clone());
    let keep = |src: usize, dst: usize| match settings.regime {
        Regime::Transductive => true,
        Regime::Inductive => !train_nodes.contains(&src) || !train_nodes.contains(&dst),
    };

    let mut sampler = NegativeSampler::new(graph.node_count(), graph.edge_set(splits.train.clone()));
    let events = graph.events();
    for e in &events[..segment.start] {
        sampler.observe(e.src, e.dst);
    }

    // Phase 1: deterministic negative selection, timestamp group by group.
    let mut tasks: Vec<EvalTask> = Vec::new();
    let mut fallback_negatives = 0usize;
    let mut i = segment.start;
    while i < segment.end {
        let mut j = i;
        while j + 1 < segment.end && events[j + 1].timestamp == events[i].timestamp {
            j += 1;
        }
        let current: HashSet<(usize, usize)> =
            events[i..=j].iter().map(|e| (e.src, e.dst)).collect();
        for (k, ev) in events[i..=j].iter().enumerate() {
            let idx = i + k;
            if !keep(ev.src, ev.dst) {
                continue;
            }
            let mut rng = ChaCha12Rng::seed_from_u64(settings.seed);
            rng.set_stream(idx as u64);
            let neg = sampler.sample(settings.strategy, (ev.src, ev.dst), &current, &mut rng);
            if neg.fell_back {
                fallback_negatives += 1;
            }
            tasks.push(EvalTask {
                event: idx,
                neg: (neg.src, neg.dst),
            });
        }
        for ev in &events[i..=j] {
            sampler.observe(ev.src, ev.dst);
        }
        i = j + 1;
    }
    if tasks.is_empty() {
        return Err(Error::Eval(format!(
            "no positives to evaluate in the {} regime",
            settings.regime
        )));
    }

    // Phase 2: parallel scoring.
    let workers = settings.workers.max(1).min(tasks.len());
    let chunk = tasks.len().div_ceil(workers);
    let seq_len = settings.seq_len;
    let score_task = |task: &EvalTask| -> Result<(f64, f64)> {
        let ev = &events[task.event];
        let s_u = graph.extract_sequence(ev.src, ev.timestamp, seq_len)?;
        let s_v = graph.extract_sequence(ev.dst, ev.timestamp, seq_len)?;
        let pos = scorer.score_pair(&s_u, &s_v)?;
        let s_ns = graph.extract_sequence(task.neg.0, ev.timestamp, seq_len)?;
        let s_nd = graph.extract_sequence(task.neg.1, ev.timestamp, seq_len)?;
        let neg = scorer.score_pair(&s_ns, &s_nd)?;
        Ok((pos, neg))
    };
    let results: Vec<Result<Vec<(f64, f64)>>> = std::thread::scope(|scope| {
        let handles: Vec<_> = tasks
            .chunks(chunk)
            .map(|part| scope.spawn(move || part.iter().map(score_task).collect()))
            .collect();
        handles.into_iter().map(|h| h.join().expect("eval worker panicked")).collect()
    });

    let mut scores = Vec::with_capacity(tasks.len() * 2);
    let mut labels = Vec::with_capacity(tasks.len() * 2);
    for part in results {
        for (pos, neg) in part? {
            scores.push(pos);
            labels.push(true);
            scores.push(neg);
            labels.push(false);
        }
    }
    Ok(EvalReport {
        strategy: settings.strategy,
        regime: settings.regime,
        ap: average_precision(&scores, &labels)?,
        auc: auc_roc(&scores, &labels)?,
        positives: tasks.len(),
        fallback_negatives,
    })
}
