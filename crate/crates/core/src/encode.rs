//! Per-event encodings for interaction sequences.
//!
//! Each row of a sequence is mapped to four aligned blocks that are
//! concatenated into the transformer input:
//!
//! * node block: a two-layer map over neighbor-node features. Events in this
//!   pipeline carry no node features, so the input is a zero column and the
//!   block learns a shared bias-driven row.
//! * edge block: the same shape of map over the event's edge features
//!   (zero on padding and on the anchor self-loop row).
//! * time block: fixed cosine features of the time gap to the sequence
//!   anchor, `cos(dt * w_i)` over a geometric frequency ladder.
//! * frequency block: a shared two-layer map applied to each column of the
//!   co-occurrence count matrix, summed across the two columns.
//!
//! Every block is then projected to a common width `d` by its own affine
//! alignment map, and the four blocks are concatenated to `[L, 4d]`.

use std::collections::HashMap;

use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::graph::InteractionSequence;
use crate::params::{xavier, LeafSet, ParamStore};
use crate::tensor::Tensor;

/// Widths of the encoding blocks.
///
/// `d` is the aligned per-block width (transformer input is `4d`); the other
/// fields are the native widths of each block before alignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EncodeDims {
    pub d: usize,
    pub d_node: usize,
    pub d_edge: usize,
    pub d_time: usize,
    pub d_freq: usize,
    /// Raw edge-feature width of the data set; 0 means absent, in which case
    /// the edge block sees a zero column of width 1.
    pub edge_feature_dim: usize,
}

impl EncodeDims {
    pub fn validate(&self) -> Result<()> {
        for (label, v) in [
            ("d", self.d),
            ("d_node", self.d_node),
            ("d_edge", self.d_edge),
            ("d_time", self.d_time),
            ("d_freq", self.d_freq),
        ] {
            if v == 0 {
                return Err(Error::InvalidArgument {
                    op: "encode_dims",
                    reason: format!("{label} must be at least 1"),
                });
            }
        }
        Ok(())
    }

    fn edge_input_width(&self) -> usize {
        self.edge_feature_dim.max(1)
    }
}

/// Register every encoder parameter in `store`. Weights are Glorot-uniform,
/// biases zero.
pub fn register_params(
    store: &mut ParamStore,
    dims: &EncodeDims,
    rng: &mut ChaCha12Rng,
) -> Result<()> {
    dims.validate()?;
    let mut mlp = |store: &mut ParamStore, prefix: &str, input: usize, width: usize| -> Result<()> {
        store.register(
            &format!("{prefix}.w1"),
            input,
            width,
            xavier(input, width, rng),
        )?;
        store.register(&format!("{prefix}.b1"), 1, width, vec![0.0; width])?;
        store.register(
            &format!("{prefix}.w2"),
            width,
            width,
            xavier(width, width, rng),
        )?;
        store.register(&format!("{prefix}.b2"), 1, width, vec![0.0; width])
    };
    mlp(store, "encoder.node", 1, dims.d_node)?;
    mlp(store, "encoder.edge", dims.edge_input_width(), dims.d_edge)?;
    mlp(store, "encoder.freq", 1, dims.d_freq)?;
    let mut rng2 = rng.clone();
    let mut align = |store: &mut ParamStore, label: &str, input: usize| -> Result<()> {
        store.register(
            &format!("encoder.align.{label}.w"),
            input,
            dims.d,
            xavier(input, dims.d, &mut rng2),
        )?;
        store.register(&format!("encoder.align.{label}.b"), 1, dims.d, vec![0.0; dims.d])
    };
    align(store, "node", dims.d_node)?;
    align(store, "edge", dims.d_edge)?;
    align(store, "time", dims.d_time)?;
    align(store, "freq", dims.d_freq)
}

/// Geometric frequency ladder `w_i = alpha^(-(i-1)/beta)` for `i = 1..=d_time`.
/// The first frequency is always 1.
pub fn time_frequencies(d_time: usize, alpha: f64, beta: f64) -> Result<Vec<f64>> {
    if d_time == 0 {
        return Err(Error::InvalidArgument {
            op: "time_frequencies",
            reason: "d_time must be at least 1".into(),
        });
    }
    if !(alpha > 0.0) || !(beta > 0.0) {
        return Err(Error::InvalidArgument {
            op: "time_frequencies",
            reason: format!("alpha and beta must be positive, got {alpha} and {beta}"),
        });
    }
    Ok((0..d_time)
        .map(|i| alpha.powf(-(i as f64) / beta))
        .collect())
}

/// Default ladder base: chosen so the slowest channel's argument is about 1
/// at `dt = t_span`. Degenerate spans or a single channel give a flat ladder.
pub fn default_alpha(t_span: f64, d_time: usize, beta: f64) -> f64 {
    if d_time <= 1 || !(t_span > 1.0) {
        return 1.0;
    }
    t_span.powf(beta / (d_time - 1) as f64)
}

/// Cosine time features `[L, d_time]` for one sequence. Constant with respect
/// to training (the ladder is fixed), so the result is not a graph leaf.
pub fn encode_time(seq: &InteractionSequence, omega: &[f64]) -> Result<Tensor> {
    if omega.is_empty() {
        return Err(Error::InvalidArgument {
            op: "encode_time",
            reason: "empty frequency ladder".into(),
        });
    }
    let mut data = Vec::with_capacity(seq.len * omega.len());
    for i in 0..seq.len {
        let dt = seq.time - seq.timestamps[i];
        if dt < 0.0 {
            return Err(Error::InvalidArgument {
                op: "encode_time",
                reason: format!(
                    "event at {} is later than the sequence anchor {}",
                    seq.timestamps[i], seq.time
                ),
            });
        }
        for w in omega {
            data.push((dt * w).cos());
        }
    }
    Tensor::new(seq.len, omega.len(), data)
}

/// Co-occurrence counts for a sequence pair.
///
/// Row `i` of the first output counts how often the `i`-th neighbor in `u`'s
/// sequence appears in `u`'s neighbor multiset (column 0) and in `v`'s
/// (column 1); the second output does the same for `v`'s rows against the
/// same two multisets. Anchor self-loop rows participate like any other
/// event; padding rows count as absent and get zero rows.
pub fn count_frequencies(
    seq_u: &InteractionSequence,
    seq_v: &InteractionSequence,
) -> Result<(Tensor, Tensor)> {
    let multiset = |seq: &InteractionSequence| {
        let mut m: HashMap<usize, f64> = HashMap::new();
        for i in 0..seq.len {
            if !seq.pad[i] {
                *m.entry(seq.neighbors[i]).or_insert(0.0) += 1.0;
            }
        }
        m
    };
    let in_u = multiset(seq_u);
    let in_v = multiset(seq_v);
    let counts = |seq: &InteractionSequence| -> Result<Tensor> {
        let mut data = Vec::with_capacity(seq.len * 2);
        for i in 0..seq.len {
            if seq.pad[i] {
                data.extend_from_slice(&[0.0, 0.0]);
            } else {
                let id = seq.neighbors[i];
                data.push(in_u.get(&id).copied().unwrap_or(0.0));
                data.push(in_v.get(&id).copied().unwrap_or(0.0));
            }
        }
        Tensor::new(seq.len, 2, data)
    };
    Ok((counts(seq_u)?, counts(seq_v)?))
}

fn mlp2(x: &Tensor, leaves: &LeafSet, prefix: &str) -> Result<Tensor> {
    let h = x
        .matmul(leaves.get(&format!("{prefix}.w1"))?)?
        .add_row(leaves.get(&format!("{prefix}.b1"))?)?
        .relu()?;
    h.matmul(leaves.get(&format!("{prefix}.w2"))?)?
        .add_row(leaves.get(&format!("{prefix}.b2"))?)
}

fn align(x: &Tensor, leaves: &LeafSet, label: &str) -> Result<Tensor> {
    x.matmul(leaves.get(&format!("encoder.align.{label}.w"))?)?
        .add_row(leaves.get(&format!("encoder.align.{label}.b"))?)
}

/// Edge-feature input rows for one sequence (zero column when the data set
/// has no edge features).
fn edge_input(seq: &InteractionSequence, dims: &EncodeDims) -> Result<Tensor> {
    let width = dims.edge_input_width();
    if dims.edge_feature_dim == 0 {
        return Ok(Tensor::zeros(seq.len, width));
    }
    if seq.features.len() != seq.len * dims.edge_feature_dim {
        return Err(Error::ShapeMismatch {
            op: "encode_edge",
            lhs: format!("[{}, {}]", seq.len, dims.edge_feature_dim),
            rhs: format!("{} feature values", seq.features.len()),
        });
    }
    Tensor::new(seq.len, width, seq.features.clone())
}

/// Frequency block before alignment: the shared column map applied to each
/// count column, summed.
pub fn encode_frequency(counts: &Tensor, leaves: &LeafSet) -> Result<Tensor> {
    if counts.cols() != 2 {
        return Err(Error::ShapeMismatch {
            op: "encode_frequency",
            lhs: "[L, 2]".into(),
            rhs: format!("[{}, {}]", counts.rows(), counts.cols()),
        });
    }
    let c0 = counts.slice(1, 0, 1)?;
    let c1 = counts.slice(1, 1, 1)?;
    mlp2(&c0, leaves, "encoder.freq")?.add(&mlp2(&c1, leaves, "encoder.freq")?)
}

/// Full `[L, 4d]` input block for one sequence given its count matrix.
pub fn encode_sequence(
    seq: &InteractionSequence,
    counts: &Tensor,
    leaves: &LeafSet,
    dims: &EncodeDims,
    omega: &[f64],
) -> Result<Tensor> {
    let node_in = Tensor::zeros(seq.len, 1);
    let node = align(&mlp2(&node_in, leaves, "encoder.node")?, leaves, "node")?;
    let edge = align(
        &mlp2(&edge_input(seq, dims)?, leaves, "encoder.edge")?,
        leaves,
        "edge",
    )?;
    let time = align(&encode_time(seq, omega)?, leaves, "time")?;
    let freq = align(&encode_frequency(counts, leaves)?, leaves, "freq")?;
    Tensor::concat(1, &[node, edge, time, freq])
}

/// Encode both sides of a candidate interaction: computes the shared count
/// matrices, then the two `[L, 4d]` blocks.
pub fn encode_pair(
    seq_u: &InteractionSequence,
    seq_v: &InteractionSequence,
    leaves: &LeafSet,
    dims: &EncodeDims,
    omega: &[f64],
) -> Result<(Tensor, Tensor)> {
    let (counts_u, counts_v) = count_frequencies(seq_u, seq_v)?;
    let z_u = encode_sequence(seq_u, &counts_u, leaves, dims, omega)?;
    let z_v = encode_sequence(seq_v, &counts_v, leaves, dims, omega)?;
    Ok((z_u, z_v))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::grad_check::grad_check;
    use rand::SeedableRng;

    fn seq(node: usize, time: f64, rows: &[(usize, f64, bool)], feats: &[f64]) -> InteractionSequence {
        InteractionSequence {
            node,
            time,
            len: rows.len(),
            neighbors: rows.iter().map(|r| r.0).collect(),
            timestamps: rows.iter().map(|r| r.1).collect(),
            features: feats.to_vec(),
            pad: rows.iter().map(|r| r.2).collect(),
        }
    }

    fn dims() -> EncodeDims {
        EncodeDims {
            d: 2,
            d_node: 2,
            d_edge: 2,
            d_time: 2,
            d_freq: 2,
            edge_feature_dim: 1,
        }
    }

    fn store_with(dims: &EncodeDims, seed: u64) -> ParamStore {
        let mut store = ParamStore::new();
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        register_params(&mut store, dims, &mut rng).unwrap();
        store
    }

    #[test]
    fn pair_counts_track_both_multisets() {
        // u interacted with b twice before its anchor self-loop; v interacted
        // with d then b. Node ids: u=0, v=1, b=2, d=3.
        let s_u = seq(0, 5.0, &[(2, 1.0, false), (2, 3.0, false), (0, 5.0, false)], &[0.0; 3]);
        let s_v = seq(1, 5.0, &[(3, 2.0, false), (2, 4.0, false), (1, 5.0, false)], &[0.0; 3]);
        let (f_u, f_v) = count_frequencies(&s_u, &s_v).unwrap();
        assert_eq!(f_u.data(), &[2.0, 1.0, 2.0, 1.0, 1.0, 0.0]);
        assert_eq!(f_v.data(), &[0.0, 1.0, 2.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn pad_rows_count_zero_and_are_excluded() {
        let s_u = seq(0, 9.0, &[(5, 9.0, true), (2, 7.0, false), (0, 9.0, false)], &[0.0; 3]);
        let s_v = seq(1, 9.0, &[(5, 9.0, true), (5, 9.0, true), (1, 9.0, false)], &[0.0; 3]);
        let (f_u, f_v) = count_frequencies(&s_u, &s_v).unwrap();
        // Pad sentinel id 5 must not leak into any multiset.
        assert_eq!(f_u.data(), &[0.0, 0.0, 1.0, 0.0, 1.0, 0.0]);
        assert_eq!(f_v.data(), &[0.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn time_ladder_and_rows() {
        let omega = time_frequencies(3, 16.0, 1.0).unwrap();
        assert_eq!(omega, vec![1.0, 0.0625, 0.00390625]);
        assert_eq!(time_frequencies(1, 7.0, 1.0).unwrap(), vec![1.0]);

        let s = seq(0, 10.0, &[(1, 2.0, false), (0, 10.0, false)], &[]);
        let t = encode_time(&s, &omega).unwrap();
        assert_eq!((t.rows(), t.cols()), (2, 3));
        let dt = 8.0;
        for (j, w) in omega.iter().enumerate() {
            assert_eq!(t.at(0, j), (dt * w).cos());
        }
        // Zero gap rows (the anchor self-loop, and any padding) are all ones.
        assert_eq!(t.data()[3..6], [1.0, 1.0, 1.0]);
    }

    #[test]
    fn default_alpha_scales_slowest_channel() {
        let alpha = default_alpha(100.0, 3, 1.0);
        assert!((alpha - 10.0).abs() < 1e-12);
        let omega = time_frequencies(3, alpha, 1.0).unwrap();
        // Slowest channel's argument at the full span is about one radian.
        assert!((100.0 * omega[2] - 1.0).abs() < 1e-9);
        assert_eq!(default_alpha(100.0, 1, 1.0), 1.0);
        assert_eq!(default_alpha(0.0, 8, 1.0), 1.0);
    }

    #[test]
    fn future_event_is_rejected() {
        let s = seq(0, 1.0, &[(1, 2.0, false)], &[]);
        assert!(encode_time(&s, &[1.0]).is_err());
    }

    #[test]
    fn zero_inputs_with_zero_biases_stay_zero() {
        let d = dims();
        let store = store_with(&d, 3);
        let leaves = store.leaves().unwrap();
        // Zero features on every row: node and edge blocks reduce to the
        // bias path, which is zero at initialization.
        let s = seq(0, 4.0, &[(1, 1.0, false), (0, 4.0, false)], &[0.0, 0.0]);
        let node_in = Tensor::zeros(2, 1);
        let node = mlp2(&node_in, &leaves, "encoder.node").unwrap();
        assert!(node.data().iter().all(|v| *v == 0.0));
        let edge = mlp2(&edge_input(&s, &d).unwrap(), &leaves, "encoder.edge").unwrap();
        assert!(edge.data().iter().all(|v| *v == 0.0));
    }

    #[test]
    fn frequency_block_sums_shared_map_over_columns() {
        let d = dims();
        let mut store = ParamStore::new();
        let mut rng = ChaCha12Rng::seed_from_u64(4);
        register_params(&mut store, &d, &mut rng).unwrap();
        // Freeze the shared map to something hand-computable:
        // f(c) = relu([c + 0.5, -c + 0.5]) through an identity second layer.
        store.get_mut("encoder.freq.w1").unwrap().data = vec![1.0, -1.0];
        store.get_mut("encoder.freq.b1").unwrap().data = vec![0.5, 0.5];
        store.get_mut("encoder.freq.w2").unwrap().data = vec![1.0, 0.0, 0.0, 1.0];
        store.get_mut("encoder.freq.b2").unwrap().data = vec![0.0, 0.0];
        let leaves = store.leaves().unwrap();
        let counts = Tensor::new(2, 2, vec![2.0, 1.0, 0.0, 0.0]).unwrap();
        let out = encode_frequency(&counts, &leaves).unwrap();
        // Row 0: f(2) + f(1) = [2.5, 0] + [1.5, 0] = [4, 0].
        // Row 1: f(0) + f(0) = [0.5, 0.5] * 2 = [1, 1].
        assert_eq!(out.data(), &[4.0, 0.0, 1.0, 1.0]);
    }

    #[test]
    fn pair_encoding_has_aligned_shape() {
        let d = dims();
        let store = store_with(&d, 5);
        let leaves = store.leaves().unwrap();
        let omega = time_frequencies(d.d_time, 4.0, 1.0).unwrap();
        let s_u = seq(
            0,
            6.0,
            &[(2, 1.0, false), (3, 2.0, false), (0, 6.0, false)],
            &[0.3, -0.4, 0.0],
        );
        let s_v = seq(
            1,
            6.0,
            &[(4, 6.0, true), (2, 5.0, false), (1, 6.0, false)],
            &[0.0, 0.7, 0.0],
        );
        let (z_u, z_v) = encode_pair(&s_u, &s_v, &leaves, &d, &omega).unwrap();
        assert_eq!((z_u.rows(), z_u.cols()), (3, 4 * d.d));
        assert_eq!((z_v.rows(), z_v.cols()), (3, 4 * d.d));
        assert!(z_u.data().iter().all(|v| v.is_finite()));
        assert!(z_u.data() != z_v.data());
    }

    #[test]
    fn encoder_parameters_receive_correct_gradients() {
        let d = dims();
        let store = store_with(&d, 6);
        let omega = time_frequencies(d.d_time, 4.0, 1.0).unwrap();
        let s_u = seq(
            0,
            6.0,
            &[(2, 1.0, false), (2, 2.0, false), (0, 6.0, false)],
            &[0.3, -0.4, 0.0],
        );
        let s_v = seq(
            1,
            6.0,
            &[(4, 6.0, true), (2, 5.0, false), (1, 6.0, false)],
            &[0.0, 0.7, 0.0],
        );
        for name in ["encoder.freq.w1", "encoder.align.time.w", "encoder.edge.b1"] {
            let entry = store.get(name).unwrap().clone();
            let store = store.clone();
            let s_u = s_u.clone();
            let s_v = s_v.clone();
            let omega = omega.clone();
            let f = move |x: &Tensor| {
                let leaves = store.leaves().unwrap().replaced(name, x.clone())?;
                let (z_u, z_v) = encode_pair(&s_u, &s_v, &leaves, &d, &omega)?;
                z_u.add(&z_v)?.mul(&z_u.add(&z_v)?)?.sum_all()
            };
            let x0 = Tensor::new(entry.rows, entry.cols, entry.data.clone()).unwrap();
            let report = grad_check(&f, &x0, 1e-5, 1e-6).unwrap();
            assert!(report.pass, "{name}: {report:?}");
        }
    }
}
