//! In-memory datasets, edge bookkeeping for the complete directed graph,
//! min-max normalization and mini-batching.

use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::sim::Family;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DataError {
    #[error("a complete graph needs at least 2 nodes, got {0}")]
    TooFewNodes(usize),
    #[error("sample {index}: expected {expected} values, found {found}")]
    SampleShape {
        index: usize,
        expected: usize,
        found: usize,
    },
    #[error("sample {index}: graph has a self-loop or a type >= {k}")]
    BadGraph { index: usize, k: usize },
    #[error("datasets disagree on (n, t, d)")]
    Incompatible,
}

/// Directed edges of the complete graph on `n` nodes, receiver-major with
/// senders ascending inside each receiver block.
#[derive(Clone, Debug, PartialEq)]
pub struct EdgeIndex {
    n: usize,
    senders: Vec<usize>,
    receivers: Vec<usize>,
    transpose: Vec<usize>,
}

impl EdgeIndex {
    pub fn new(n: usize) -> Result<Self, DataError> {
        if n < 2 {
            return Err(DataError::TooFewNodes(n));
        }
        let mut senders = Vec::with_capacity(n * (n - 1));
        let mut receivers = Vec::with_capacity(n * (n - 1));
        for j in 0..n {
            for i in (0..n).filter(|&i| i != j) {
                senders.push(i);
                receivers.push(j);
            }
        }
        let transpose = senders
            .iter()
            .zip(&receivers)
            .map(|(&i, &j)| Self::position_in(n, j, i))
            .collect();
        Ok(Self {
            n,
            senders,
            receivers,
            transpose,
        })
    }

    fn position_in(n: usize, sender: usize, receiver: usize) -> usize {
        receiver * (n - 1) + if sender < receiver { sender } else { sender - 1 }
    }

    pub fn num_nodes(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.senders.len()
    }

    pub fn is_empty(&self) -> bool {
        self.senders.is_empty()
    }

    /// Incoming edges per receiver, `n - 1`.
    pub fn in_degree(&self) -> usize {
        self.n - 1
    }

    /// Position of the edge `sender -> receiver`.
    pub fn position(&self, sender: usize, receiver: usize) -> usize {
        assert!(sender != receiver && sender < self.n && receiver < self.n);
        Self::position_in(self.n, sender, receiver)
    }

    pub fn pair(&self, e: usize) -> (usize, usize) {
        (self.senders[e], self.receivers[e])
    }

    pub fn senders(&self) -> &[usize] {
        &self.senders
    }

    pub fn receivers(&self) -> &[usize] {
        &self.receivers
    }

    /// Position of `(j, i)` for the edge at position `e = (i, j)`.
    pub fn transpose(&self) -> &[usize] {
        &self.transpose
    }

    /// Range of edge positions whose receiver is `j`.
    pub fn incoming(&self, j: usize) -> core::ops::Range<usize> {
        j * (self.n - 1)..(j + 1) * (self.n - 1)
    }

    /// Row indices into a `[batch * n, ..]` node tensor for every edge of every sample.
    pub fn batched_senders(&self, batch: usize) -> Arc<[usize]> {
        self.batched(batch, &self.senders, self.n)
    }

    pub fn batched_receivers(&self, batch: usize) -> Arc<[usize]> {
        self.batched(batch, &self.receivers, self.n)
    }

    /// Row index of the transposed edge in a `[batch * E, ..]` edge tensor.
    pub fn batched_transpose(&self, batch: usize) -> Arc<[usize]> {
        self.batched(batch, &self.transpose, self.len())
    }

    fn batched(&self, batch: usize, per: &[usize], stride: usize) -> Arc<[usize]> {
        (0..batch)
            .flat_map(|b| per.iter().map(move |&i| b * stride + i))
            .collect()
    }
}

/// Edge-type assignment over ordered node pairs, `types[i * n + j]` for `i -> j`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RelationGraph {
    pub n: usize,
    pub types: Vec<u8>,
}

impl RelationGraph {
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            types: vec![0; n * n],
        }
    }

    pub fn get(&self, sender: usize, receiver: usize) -> u8 {
        self.types[sender * self.n + receiver]
    }

    pub fn set(&mut self, sender: usize, receiver: usize, t: u8) {
        self.types[sender * self.n + receiver] = t;
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..self.n).all(|j| self.get(i, j) == self.get(j, i)))
    }

    pub fn has_self_loop(&self) -> bool {
        (0..self.n).any(|i| self.get(i, i) != 0)
    }

    /// Edge types in [`EdgeIndex`] order.
    pub fn edge_types(&self, edges: &EdgeIndex) -> Vec<usize> {
        (0..edges.len())
            .map(|e| {
                let (i, j) = edges.pair(e);
                self.get(i, j) as usize
            })
            .collect()
    }
}

/// One observed sample: states `[t, n, d]` and the graph that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub states: Vec<f64>,
    pub graph: RelationGraph,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub family: Family,
    pub n: usize,
    pub t: usize,
    pub d: usize,
    pub k: usize,
    pub samples: Vec<Trajectory>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks shapes, self-loops and type range of every sample.
    pub fn validate(&self) -> Result<(), DataError> {
        let expected = self.t * self.n * self.d;
        for (index, s) in self.samples.iter().enumerate() {
            if s.states.len() != expected {
                return Err(DataError::SampleShape {
                    index,
                    expected,
                    found: s.states.len(),
                });
            }
            if s.graph.n != self.n
                || s.graph.has_self_loop()
                || s.graph.types.iter().any(|&v| v as usize >= self.k)
            {
                return Err(DataError::BadGraph { index, k: self.k });
            }
        }
        Ok(())
    }

    /// Assembles the samples at `indices` into a batch.
    pub fn batch(&self, indices: &[usize], edges: &EdgeIndex) -> Batch {
        let mut states = Vec::with_capacity(indices.len() * self.t * self.n * self.d);
        let mut edge_types = Vec::with_capacity(indices.len() * edges.len());
        for &i in indices {
            states.extend_from_slice(&self.samples[i].states);
            edge_types.extend(self.samples[i].graph.edge_types(edges));
        }
        Batch {
            b: indices.len(),
            t: self.t,
            n: self.n,
            d: self.d,
            states,
            edge_types,
        }
    }

    /// Index lists of consecutive batches; shuffled when `rng` is given.
    pub fn batch_indices<R: Rng + ?Sized>(&self, batch_size: usize, rng: Option<&mut R>) -> Vec<Vec<usize>> {
        let mut order: Vec<usize> = (0..self.len()).collect();
        if let Some(rng) = rng {
            order.shuffle(rng);
        }
        order.chunks(batch_size.max(1)).map(<[usize]>::to_vec).collect()
    }
}

/// States `[b, t, n, d]` with ground-truth edge types `[b * E]` in [`EdgeIndex`] order.
#[derive(Clone, Debug, PartialEq)]
pub struct Batch {
    pub b: usize,
    pub t: usize,
    pub n: usize,
    pub d: usize,
    pub states: Vec<f64>,
    pub edge_types: Vec<usize>,
}

impl Batch {
    /// States at time `t` as `[b * n, d]`, rows sample-major.
    pub fn time_step(&self, t: usize) -> Vec<f64> {
        let block = self.n * self.d;
        let mut out = Vec::with_capacity(self.b * block);
        for b in 0..self.b {
            let off = (b * self.t + t) * block;
            out.extend_from_slice(&self.states[off..off + block]);
        }
        out
    }

    /// Whole trajectory of every node flattened to `[b * n, t * d]`.
    pub fn node_sequences(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.b * self.n * self.t * self.d];
        for b in 0..self.b {
            for t in 0..self.t {
                for i in 0..self.n {
                    let src = ((b * self.t + t) * self.n + i) * self.d;
                    let dst = (b * self.n + i) * self.t * self.d + t * self.d;
                    out[dst..dst + self.d].copy_from_slice(&self.states[src..src + self.d]);
                }
            }
        }
        out
    }
}

/// Per-feature affine map onto `[-1, 1]`, fitted on the training split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormStats {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl NormStats {
    pub fn fit(train: &Dataset) -> Self {
        let mut min = vec![f64::INFINITY; train.d];
        let mut max = vec![f64::NEG_INFINITY; train.d];
        for s in &train.samples {
            for row in s.states.chunks(train.d) {
                for (f, &v) in row.iter().enumerate() {
                    min[f] = min[f].min(v);
                    max[f] = max[f].max(v);
                }
            }
        }
        Self { min, max }
    }

    /// (center, scale) of feature `f`; a constant feature keeps scale 1.
    fn affine(&self, f: usize) -> (f64, f64) {
        let (lo, hi) = (self.min[f], self.max[f]);
        let center = 0.5 * (lo + hi);
        let scale = if hi > lo { 2.0 / (hi - lo) } else { 1.0 };
        (center, scale)
    }

    pub fn normalize_value(&self, f: usize, v: f64) -> f64 {
        let (c, s) = self.affine(f);
        (v - c) * s
    }

    pub fn denormalize_value(&self, f: usize, v: f64) -> f64 {
        let (c, s) = self.affine(f);
        v / s + c
    }

    pub fn normalize(&self, data: &mut Dataset) {
        self.map(data, Self::normalize_value);
    }

    pub fn denormalize(&self, data: &mut Dataset) {
        self.map(data, Self::denormalize_value);
    }

    fn map(&self, data: &mut Dataset, f: fn(&Self, usize, f64) -> f64) {
        let d = data.d;
        for s in &mut data.samples {
            for row in s.states.chunks_mut(d) {
                for (i, v) in row.iter_mut().enumerate() {
                    *v = f(self, i, *v);
                }
            }
        }
    }

    /// Multiplier turning a squared error in normalized units back into raw units.
    pub fn squared_scale(&self, f: usize) -> f64 {
        let (_, s) = self.affine(f);
        1.0 / (s * s)
    }
}
