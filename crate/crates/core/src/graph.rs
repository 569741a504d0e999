//! Append-only temporal event store.
//!
//! Events are undirected interactions `(src, dst, timestamp)` with an
//! optional per-edge feature vector. The store keeps them sorted by
//! timestamp (ties keep ingest order, so later file order means more
//! recent), maintains per-node adjacency for sequence extraction, and
//! provides chronological splits plus the three negative-sampling
//! strategies used during evaluation.

use std::collections::{HashMap, HashSet};
use std::io::{BufRead, BufWriter, Read, Write};
use std::ops::Range;
use std::path::Path;

use rand::Rng;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub src: usize,
    pub dst: usize,
    pub timestamp: f64,
    /// Edge features; empty when the dataset has none.
    pub features: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct TemporalGraph {
    events: Vec<Event>,
    node_count: usize,
    edge_feature_dim: usize,
    /// Dense id -> id as it appeared in the source file.
    original_ids: Vec<u64>,
    /// Per node, indices into `events` in chronological order.
    adjacency: Vec<Vec<usize>>,
}

/// One node's recent-interaction window ending in a query-time self-loop.
///
/// Rows run oldest to newest: padding first (when the node has fewer than
/// `len - 1` prior events), then history, then the self-loop row at the very
/// end. Padding rows carry the sentinel neighbor id `node_count`, the query
/// timestamp (so their time offset is zero), and zero features.
#[derive(Debug, Clone, PartialEq)]
pub struct InteractionSequence {
    pub node: usize,
    pub time: f64,
    pub len: usize,
    pub neighbors: Vec<usize>,
    pub timestamps: Vec<f64>,
    /// Row-major `len * edge_feature_dim` block; zero on padding and on the
    /// self-loop row.
    pub features: Vec<f64>,
    pub pad: Vec<bool>,
}

impl InteractionSequence {
    /// Index of the self-loop row (always the last row).
    pub fn self_loop_row(&self) -> usize {
        self.len - 1
    }

    /// Number of real history rows (excludes padding and the self-loop).
    pub fn event_count(&self) -> usize {
        self.pad.iter().filter(|p| !**p).count() - 1
    }
}

#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitFractions {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitFractions {
    fn default() -> Self {
        SplitFractions {
            train: 0.7,
            val: 0.15,
            test: 0.15,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Splits {
    pub train: Range<usize>,
    pub val: Range<usize>,
    pub test: Range<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeStrategy {
    Random,
    Historical,
    Inductive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NegativeSample {
    pub src: usize,
    pub dst: usize,
    /// Set when the strategy exhausted its retry budget (or had no admissible
    /// pool) and fell back to a uniformly random destination.
    pub fell_back: bool,
}

/// Bounded retry budget for the rejection-sampling strategies.
pub const NEGATIVE_RETRY_LIMIT: usize = 100;

const CACHE_MAGIC: [u8; 4] = *b"TGEV";
const CACHE_VERSION: u32 = 1;

impl TemporalGraph {
    /// Build a store from already-dense events. Sorts by timestamp (stable,
    /// so equal-timestamp events keep their given order).
    pub fn from_events(mut events: Vec<Event>, node_count: usize) -> Result<TemporalGraph> {
        let mut edge_feature_dim = None;
        for e in &events {
            if e.src >= node_count || e.dst >= node_count {
                return Err(Error::Graph(format!(
                    "event ({}, {}) references a node outside 0..{node_count}",
                    e.src, e.dst
                )));
            }
            if !e.timestamp.is_finite() || e.timestamp < 0.0 {
                return Err(Error::Graph(format!(
                    "event ({}, {}) has invalid timestamp {}",
                    e.src, e.dst, e.timestamp
                )));
            }
            match edge_feature_dim {
                None => edge_feature_dim = Some(e.features.len()),
                Some(d) if d != e.features.len() => {
                    return Err(Error::Graph(format!(
                        "inconsistent feature widths: {d} then {}",
                        e.features.len()
                    )))
                }
                _ => {}
            }
        }
        events.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        let original_ids = (0..node_count as u64).collect();
        Ok(Self::assemble(
            events,
            node_count,
            edge_feature_dim.unwrap_or(0),
            original_ids,
        ))
    }

    fn assemble(
        events: Vec<Event>,
        node_count: usize,
        edge_feature_dim: usize,
        original_ids: Vec<u64>,
    ) -> TemporalGraph {
        let mut adjacency = vec![Vec::new(); node_count];
        for (i, e) in events.iter().enumerate() {
            adjacency[e.src].push(i);
            if e.dst != e.src {
                adjacency[e.dst].push(i);
            }
        }
        TemporalGraph {
            events,
            node_count,
            edge_feature_dim,
            original_ids,
            adjacency,
        }
    }

    /// Parse a `src,dst,ts[,f0,f1,...]` CSV. Node ids are densely re-indexed
    /// from 0 in order of first appearance after the timestamp sort; the
    /// original ids stay available through [`TemporalGraph::original_id`].
    pub fn ingest_csv(path: &Path) -> Result<TemporalGraph> {
        let file = std::fs::File::open(path)?;
        let mut reader = std::io::BufReader::new(file);

        let mut header = String::new();
        reader.read_line(&mut header)?;
        let header = header.trim_end();
        let cols: Vec<&str> = header.split(',').collect();
        if cols.len() < 3 || cols[0] != "src" || cols[1] != "dst" || cols[2] != "ts" {
            return Err(Error::CsvParse {
                line: 1,
                reason: format!("header must start with src,dst,ts, got {header:?}"),
            });
        }
        let feature_dim = cols.len() - 3;

        struct RawEvent {
            src: u64,
            dst: u64,
            ts: f64,
            features: Vec<f64>,
        }
        let mut raw: Vec<RawEvent> = Vec::new();
        for (idx, line) in reader.lines().enumerate() {
            let line_no = idx + 2;
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() != 3 + feature_dim {
                return Err(Error::CsvParse {
                    line: line_no,
                    reason: format!("expected {} fields, got {}", 3 + feature_dim, fields.len()),
                });
            }
            let src: u64 = fields[0].trim().parse().map_err(|_| Error::CsvParse {
                line: line_no,
                reason: format!("bad src {:?}", fields[0]),
            })?;
            let dst: u64 = fields[1].trim().parse().map_err(|_| Error::CsvParse {
                line: line_no,
                reason: format!("bad dst {:?}", fields[1]),
            })?;
            let ts: f64 = fields[2].trim().parse().map_err(|_| Error::CsvParse {
                line: line_no,
                reason: format!("bad ts {:?}", fields[2]),
            })?;
            if !ts.is_finite() || ts < 0.0 {
                return Err(Error::CsvParse {
                    line: line_no,
                    reason: format!("timestamp must be finite and non-negative, got {ts}"),
                });
            }
            let mut features = Vec::with_capacity(feature_dim);
            for (f, raw_field) in fields[3..].iter().enumerate() {
                let v: f64 = raw_field.trim().parse().map_err(|_| Error::CsvParse {
                    line: line_no,
                    reason: format!("bad feature f{f}: {raw_field:?}"),
                })?;
                features.push(v);
            }
            raw.push(RawEvent {
                src,
                dst,
                ts,
                features,
            });
        }

        raw.sort_by(|a, b| a.ts.total_cmp(&b.ts));

        let mut dense: HashMap<u64, usize> = HashMap::new();
        let mut original_ids: Vec<u64> = Vec::new();
        let intern = |id: u64, dense: &mut HashMap<u64, usize>, originals: &mut Vec<u64>| {
            *dense.entry(id).or_insert_with(|| {
                originals.push(id);
                originals.len() - 1
            })
        };
        let events: Vec<Event> = raw
            .into_iter()
            .map(|r| Event {
                src: intern(r.src, &mut dense, &mut original_ids),
                dst: intern(r.dst, &mut dense, &mut original_ids),
                timestamp: r.ts,
                features: r.features,
            })
            .collect();

        let node_count = original_ids.len();
        Ok(Self::assemble(events, node_count, feature_dim, original_ids))
    }

    /// Write the sorted event log as CSV in the ingest schema, using dense
    /// node ids.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        write!(out, "src,dst,ts")?;
        for f in 0..self.edge_feature_dim {
            write!(out, ",f{f}")?;
        }
        writeln!(out)?;
        for e in &self.events {
            write!(out, "{},{},{}", e.src, e.dst, e.timestamp)?;
            for v in &e.features {
                write!(out, ",{v}")?;
            }
            writeln!(out)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn node_count(&self) -> usize {
        self.node_count
    }

    pub fn edge_feature_dim(&self) -> usize {
        self.edge_feature_dim
    }

    pub fn original_id(&self, dense: usize) -> u64 {
        self.original_ids[dense]
    }

    /// Dense id for an id as it appeared in the source file.
    pub fn dense_id(&self, original: u64) -> Option<usize> {
        self.original_ids.iter().position(|v| *v == original)
    }

    /// Chronological indices of the events touching `node`.
    pub fn neighbor_events(&self, node: usize) -> &[usize] {
        &self.adjacency[node]
    }

    /// (min, max) timestamp over an index range, if non-empty.
    pub fn time_range(&self, range: Range<usize>) -> Option<(f64, f64)> {
        let slice = &self.events[range];
        let first = slice.first()?;
        let last = slice.last()?;
        Some((first.timestamp, last.timestamp))
    }

    /// The node's `len`-row interaction window at query time `t`: the most
    /// recent events strictly before `t` (newest last), left-padded, with the
    /// self-loop row appended at the end.
    pub fn extract_sequence(&self, node: usize, t: f64, len: usize) -> Result<InteractionSequence> {
        if node >= self.node_count {
            return Err(Error::Graph(format!(
                "node {node} out of range for {} nodes",
                self.node_count
            )));
        }
        if len < 1 {
            return Err(Error::Graph("sequence length must be at least 1".into()));
        }
        if !t.is_finite() || t < 0.0 {
            return Err(Error::Graph(format!("invalid query time {t}")));
        }

        let adj = &self.adjacency[node];
        // Events are time-sorted, so the prefix strictly before t is
        // contiguous; equal-stamp events at t are excluded.
        let end = adj.partition_point(|&ei| self.events[ei].timestamp < t);
        let take = (len - 1).min(end);
        let start = end - take;
        let pad_rows = len - 1 - take;
        let dim = self.edge_feature_dim;

        let mut neighbors = Vec::with_capacity(len);
        let mut timestamps = Vec::with_capacity(len);
        let mut features = vec![0.0; len * dim];
        let mut pad = Vec::with_capacity(len);

        for _ in 0..pad_rows {
            neighbors.push(self.node_count);
            timestamps.push(t);
            pad.push(true);
        }
        for (row, &ei) in adj[start..end].iter().enumerate() {
            let e = &self.events[ei];
            let other = if e.src == node { e.dst } else { e.src };
            neighbors.push(other);
            timestamps.push(e.timestamp);
            features[(pad_rows + row) * dim..(pad_rows + row + 1) * dim]
                .copy_from_slice(&e.features);
            pad.push(false);
        }
        // Self-loop row: the node attends to itself at the query time.
        neighbors.push(node);
        timestamps.push(t);
        pad.push(false);

        Ok(InteractionSequence {
            node,
            time: t,
            len,
            neighbors,
            timestamps,
            features,
            pad,
        })
    }

    /// Floor-based chronological split: train gets `floor(train * N)` events,
    /// train+val ends at `floor((train + val) * N)`, test takes the rest.
    pub fn chronological_split(&self, fractions: &SplitFractions) -> Result<Splits> {
        let f = fractions;
        for (name, v) in [("train", f.train), ("val", f.val), ("test", f.test)] {
            if !(v > 0.0 && v < 1.0) {
                return Err(Error::Config(format!(
                    "split fraction {name} must lie in (0, 1), got {v}"
                )));
            }
        }
        if ((f.train + f.val + f.test) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1, got {}",
                f.train + f.val + f.test
            )));
        }
        let n = self.events.len();
        let cut1 = (f.train * n as f64).floor() as usize;
        let cut2 = ((f.train + f.val) * n as f64).floor() as usize;
        if cut1 == 0 || cut2 <= cut1 || cut2 >= n {
            return Err(Error::Graph(format!(
                "{n} events cannot form three non-empty chronological splits"
            )));
        }
        Ok(Splits {
            train: 0..cut1,
            val: cut1..cut2,
            test: cut2..n,
        })
    }

    /// Distinct (src, dst) pairs over an event index range.
    pub fn edge_set(&self, range: Range<usize>) -> HashSet<(usize, usize)> {
        self.events[range]
            .iter()
            .map(|e| (e.src, e.dst))
            .collect()
    }

    /// Nodes that appear in an event index range.
    pub fn nodes_in(&self, range: Range<usize>) -> HashSet<usize> {
        let mut out = HashSet::new();
        for e in &self.events[range] {
            out.insert(e.src);
            out.insert(e.dst);
        }
        out
    }

    pub fn write_cache(&self, path: &Path) -> Result<()> {
        let mut out = BufWriter::new(std::fs::File::create(path)?);
        out.write_all(&CACHE_MAGIC)?;
        out.write_all(&CACHE_VERSION.to_le_bytes())?;
        out.write_all(&(self.node_count as u64).to_le_bytes())?;
        out.write_all(&(self.edge_feature_dim as u64).to_le_bytes())?;
        out.write_all(&(self.events.len() as u64).to_le_bytes())?;
        for id in &self.original_ids {
            out.write_all(&id.to_le_bytes())?;
        }
        for e in &self.events {
            out.write_all(&(e.src as u64).to_le_bytes())?;
            out.write_all(&(e.dst as u64).to_le_bytes())?;
            out.write_all(&e.timestamp.to_le_bytes())?;
            for v in &e.features {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_cache(path: &Path) -> Result<TemporalGraph> {
        let mut file = std::io::BufReader::new(std::fs::File::open(path)?);
        let mut magic = [0u8; 4];
        file.read_exact(&mut magic)?;
        if magic != CACHE_MAGIC {
            return Err(Error::Graph(format!(
                "not an event cache (magic {magic:?})"
            )));
        }
        let mut u32buf = [0u8; 4];
        file.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != CACHE_VERSION {
            return Err(Error::Graph(format!(
                "unsupported cache version {version}, expected {CACHE_VERSION}"
            )));
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |f: &mut std::io::BufReader<std::fs::File>| -> Result<u64> {
            f.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let node_count = read_u64(&mut file)? as usize;
        let edge_feature_dim = read_u64(&mut file)? as usize;
        let event_count = read_u64(&mut file)? as usize;
        let mut original_ids = Vec::with_capacity(node_count);
        for _ in 0..node_count {
            original_ids.push(read_u64(&mut file)?);
        }
        let mut f64buf = [0u8; 8];
        let mut events = Vec::with_capacity(event_count);
        for _ in 0..event_count {
            let src = read_u64(&mut file)? as usize;
            let dst = read_u64(&mut file)? as usize;
            file.read_exact(&mut f64buf)?;
            let timestamp = f64::from_le_bytes(f64buf);
            let mut features = Vec::with_capacity(edge_feature_dim);
            for _ in 0..edge_feature_dim {
                file.read_exact(&mut f64buf)?;
                features.push(f64::from_le_bytes(f64buf));
            }
            events.push(Event {
                src,
                dst,
                timestamp,
                features,
            });
        }
        Ok(Self::assemble(
            events,
            node_count,
            edge_feature_dim,
            original_ids,
        ))
    }
}

/// Rejection sampler for evaluation negatives. The historical pool grows as
/// evaluation advances through time via [`NegativeSampler::observe`].
pub struct NegativeSampler {
    node_count: usize,
    train_edges: HashSet<(usize, usize)>,
    past_list: Vec<(usize, usize)>,
    past_set: HashSet<(usize, usize)>,
}

impl NegativeSampler {
    pub fn new(node_count: usize, train_edges: HashSet<(usize, usize)>) -> NegativeSampler {
        NegativeSampler {
            node_count,
            train_edges,
            past_list: Vec::new(),
            past_set: HashSet::new(),
        }
    }

    /// Record a pair as seen; it becomes eligible for historical sampling.
    pub fn observe(&mut self, src: usize, dst: usize) {
        if self.past_set.insert((src, dst)) {
            self.past_list.push((src, dst));
        }
    }

    pub fn past_contains(&self, src: usize, dst: usize) -> bool {
        self.past_set.contains(&(src, dst))
    }

    pub fn train_contains(&self, src: usize, dst: usize) -> bool {
        self.train_edges.contains(&(src, dst))
    }

    /// Draw one negative for a positive `(src, dst)` event.
    ///
    /// * random: keep `src`, destination uniform over all nodes.
    /// * historical: a previously seen pair not among `current` (the positive
    ///   pairs at this step).
    /// * inductive: a pair that never occurs in the training range.
    ///
    /// The rejection strategies retry up to [`NEGATIVE_RETRY_LIMIT`] times,
    /// then fall back to a random draw with `fell_back` set.
    pub fn sample<R: Rng>(
        &self,
        strategy: NegativeStrategy,
        positive: (usize, usize),
        current: &HashSet<(usize, usize)>,
        rng: &mut R,
    ) -> NegativeSample {
        match strategy {
            NegativeStrategy::Random => self.random(positive.0, rng, false),
            NegativeStrategy::Historical => {
                if self.past_list.is_empty() {
                    return self.random(positive.0, rng, true);
                }
                for _ in 0..NEGATIVE_RETRY_LIMIT {
                    let (src, dst) = self.past_list[rng.random_range(0..self.past_list.len())];
                    if !current.contains(&(src, dst)) {
                        return NegativeSample {
                            src,
                            dst,
                            fell_back: false,
                        };
                    }
                }
                self.random(positive.0, rng, true)
            }
            NegativeStrategy::Inductive => {
                for _ in 0..NEGATIVE_RETRY_LIMIT {
                    let src = rng.random_range(0..self.node_count);
                    let dst = rng.random_range(0..self.node_count);
                    if !self.train_edges.contains(&(src, dst)) {
                        return NegativeSample {
                            src,
                            dst,
                            fell_back: false,
                        };
                    }
                }
                self.random(positive.0, rng, true)
            }
        }
    }

    fn random<R: Rng>(&self, src: usize, rng: &mut R, fell_back: bool) -> NegativeSample {
        NegativeSample {
            src,
            dst: rng.random_range(0..self.node_count),
            fell_back,
        }
    }
}
