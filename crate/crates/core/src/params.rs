//! Named trainable parameters.
//!
//! The store owns raw `f64` buffers in a stable registration order. Each
//! forward pass borrows them as fresh graph leaves via [`ParamStore::leaves`];
//! after the backward sweep the per-leaf gradients are folded back into
//! name-keyed buffers, and the optimizer mutates the raw data in place. This
//! keeps the expression graph immutable while parameters evolve.

use std::collections::HashMap;
use std::io::{Read, Write};

use rand::Rng;
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::tensor::{Gradients, Tensor};

#[derive(Debug, Clone)]
pub struct ParamEntry {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    entries: Vec<ParamEntry>,
    index: HashMap<String, usize>,
}

/// Per-name gradient buffers accumulated across a batch.
pub type NamedGrads = HashMap<String, Vec<f64>>;

const BLOB_MAGIC: [u8; 4] = *b"TGPB";
const BLOB_VERSION: u32 = 1;

impl ParamStore {
    pub fn new() -> ParamStore {
        ParamStore::default()
    }

    pub fn register(&mut self, name: &str, rows: usize, cols: usize, data: Vec<f64>) -> Result<()> {
        if data.len() != rows * cols {
            return Err(Error::ShapeMismatch {
                op: "param_register",
                lhs: format!("[{rows}, {cols}]"),
                rhs: format!("{} values", data.len()),
            });
        }
        if self.index.contains_key(name) {
            return Err(Error::InvalidArgument {
                op: "param_register",
                reason: format!("duplicate parameter {name:?}"),
            });
        }
        self.index.insert(name.to_string(), self.entries.len());
        self.entries.push(ParamEntry {
            name: name.to_string(),
            rows,
            cols,
            data,
        });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Result<&ParamEntry> {
        self.index
            .get(name)
            .map(|i| &self.entries[*i])
            .ok_or_else(|| Error::InvalidArgument {
                op: "param_get",
                reason: format!("unknown parameter {name:?}"),
            })
    }

    pub fn get_mut(&mut self, name: &str) -> Result<&mut ParamEntry> {
        match self.index.get(name) {
            Some(i) => Ok(&mut self.entries[*i]),
            None => Err(Error::InvalidArgument {
                op: "param_get",
                reason: format!("unknown parameter {name:?}"),
            }),
        }
    }

    /// Entries in registration order.
    pub fn entries(&self) -> &[ParamEntry] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [ParamEntry] {
        &mut self.entries
    }

    pub fn total_values(&self) -> usize {
        self.entries.iter().map(|e| e.data.len()).sum()
    }

    /// Snapshot the current values of every entry, in registration order.
    pub fn snapshot(&self) -> Vec<Vec<f64>> {
        self.entries.iter().map(|e| e.data.clone()).collect()
    }

    /// Restore a snapshot taken from this store.
    pub fn restore(&mut self, snapshot: &[Vec<f64>]) -> Result<()> {
        if snapshot.len() != self.entries.len() {
            return Err(Error::InvalidArgument {
                op: "param_restore",
                reason: format!(
                    "snapshot has {} entries, store has {}",
                    snapshot.len(),
                    self.entries.len()
                ),
            });
        }
        for (e, s) in self.entries.iter_mut().zip(snapshot) {
            if e.data.len() != s.len() {
                return Err(Error::InvalidArgument {
                    op: "param_restore",
                    reason: format!("size mismatch for {}", e.name),
                });
            }
            e.data.copy_from_slice(s);
        }
        Ok(())
    }

    /// Materialize every parameter as a trainable graph leaf.
    pub fn leaves(&self) -> Result<LeafSet> {
        let mut map = HashMap::with_capacity(self.entries.len());
        for e in &self.entries {
            map.insert(e.name.clone(), Tensor::leaf(e.rows, e.cols, e.data.clone())?);
        }
        Ok(LeafSet { map })
    }

    /// Same view with gradients disabled, for scoring outside training.
    pub fn frozen(&self) -> Result<LeafSet> {
        let mut map = HashMap::with_capacity(self.entries.len());
        for e in &self.entries {
            map.insert(e.name.clone(), Tensor::new(e.rows, e.cols, e.data.clone())?);
        }
        Ok(LeafSet { map })
    }

    pub fn write_blob<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(&BLOB_MAGIC)?;
        out.write_all(&BLOB_VERSION.to_le_bytes())?;
        out.write_all(&(self.entries.len() as u64).to_le_bytes())?;
        for e in &self.entries {
            let name = e.name.as_bytes();
            out.write_all(&(name.len() as u64).to_le_bytes())?;
            out.write_all(name)?;
            out.write_all(&(e.rows as u64).to_le_bytes())?;
            out.write_all(&(e.cols as u64).to_le_bytes())?;
            for v in &e.data {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_blob<R: Read>(mut input: R) -> Result<ParamStore> {
        let mut magic = [0u8; 4];
        input.read_exact(&mut magic)?;
        if magic != BLOB_MAGIC {
            return Err(Error::Checkpoint(format!(
                "not a parameter blob (magic {magic:?})"
            )));
        }
        let mut u32buf = [0u8; 4];
        input.read_exact(&mut u32buf)?;
        let version = u32::from_le_bytes(u32buf);
        if version != BLOB_VERSION {
            return Err(Error::Checkpoint(format!(
                "unsupported parameter blob version {version}"
            )));
        }
        let mut u64buf = [0u8; 8];
        let mut read_u64 = |input: &mut R| -> Result<u64> {
            input.read_exact(&mut u64buf)?;
            Ok(u64::from_le_bytes(u64buf))
        };
        let count = read_u64(&mut input)? as usize;
        let mut store = ParamStore::new();
        for _ in 0..count {
            let name_len = read_u64(&mut input)? as usize;
            let mut name_bytes = vec![0u8; name_len];
            input.read_exact(&mut name_bytes)?;
            let name = String::from_utf8(name_bytes).map_err(|_| {
                Error::Checkpoint("parameter name is not valid utf-8".into())
            })?;
            let rows = read_u64(&mut input)? as usize;
            let cols = read_u64(&mut input)? as usize;
            let mut data = vec![0.0; rows * cols];
            let mut f64buf = [0u8; 8];
            for v in data.iter_mut() {
                input.read_exact(&mut f64buf)?;
                *v = f64::from_le_bytes(f64buf);
            }
            store.register(&name, rows, cols, data)?;
        }
        Ok(store)
    }
}

/// One forward pass's view of the parameters as graph leaves.
pub struct LeafSet {
    map: HashMap<String, Tensor>,
}

impl LeafSet {
    pub fn get(&self, name: &str) -> Result<&Tensor> {
        self.map.get(name).ok_or_else(|| Error::InvalidArgument {
            op: "leaf_get",
            reason: format!("unknown parameter {name:?}"),
        })
    }

    /// Copy of this set with one leaf swapped out, keeping its shape. Used by
    /// gradient checks to probe a single parameter.
    pub fn replaced(&self, name: &str, tensor: Tensor) -> Result<LeafSet> {
        let current = self.get(name)?;
        if (current.rows(), current.cols()) != (tensor.rows(), tensor.cols()) {
            return Err(Error::ShapeMismatch {
                op: "leaf_replace",
                lhs: format!("[{}, {}]", current.rows(), current.cols()),
                rhs: format!("[{}, {}]", tensor.rows(), tensor.cols()),
            });
        }
        let mut map = self.map.clone();
        map.insert(name.to_string(), tensor);
        Ok(LeafSet { map })
    }

    /// Fold one backward sweep's gradients into name-keyed accumulators.
    /// Parameters untouched by the graph contribute nothing.
    pub fn fold_grads(&self, grads: &Gradients, acc: &mut NamedGrads) {
        for (name, leaf) in &self.map {
            if let Some(g) = grads.get(leaf) {
                match acc.get_mut(name) {
                    Some(buf) => {
                        for (b, v) in buf.iter_mut().zip(g) {
                            *b += v;
                        }
                    }
                    None => {
                        acc.insert(name.clone(), g.to_vec());
                    }
                }
            }
        }
    }
}

/// Uniform Glorot initialization.
pub fn xavier(rows: usize, cols: usize, rng: &mut ChaCha12Rng) -> Vec<f64> {
    let bound = (6.0 / (rows + cols) as f64).sqrt();
    (0..rows * cols).map(|_| rng.random_range(-bound..bound)).collect()
}
