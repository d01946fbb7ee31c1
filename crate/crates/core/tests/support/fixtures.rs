//! Random models and batches for tests.
#![allow(dead_code)]

use nri_core::config::ModelConfig;
use nri_core::data::{Batch, Dataset, EdgeIndex, RelationGraph, Trajectory};
use nri_core::model::Model;
use nri_core::sim::Family;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::naive::Rows;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Model with every parameter, biases included, drawn from `±scale`.
pub fn random_model(cfg: ModelConfig, seed: u64, scale: f64) -> Model {
    let mut model = Model::new(cfg, seed).unwrap();
    let mut r = rng(seed ^ 0x9e37_79b9);
    for p in model.store.iter_mut() {
        p.data.iter_mut().for_each(|v| *v = r.random_range(-scale..scale));
    }
    model
}

pub fn random_dataset(n: usize, t: usize, d: usize, samples: usize, seed: u64) -> Dataset {
    let mut r = rng(seed);
    let samples = (0..samples)
        .map(|_| {
            let mut graph = RelationGraph::empty(n);
            for i in 0..n {
                for j in 0..n {
                    if i != j {
                        graph.set(i, j, r.random_range(0..2));
                    }
                }
            }
            Trajectory {
                states: (0..t * n * d).map(|_| r.random_range(-1.0..1.0)).collect(),
                graph,
            }
        })
        .collect();
    Dataset {
        family: Family::Springs,
        n,
        t,
        d,
        k: 2,
        samples,
    }
}

pub fn full_batch(data: &Dataset) -> Batch {
    let idx: Vec<usize> = (0..data.len()).collect();
    data.batch(&idx, &EdgeIndex::new(data.n).unwrap())
}

/// Node sequences of sample `b` as rows.
pub fn sample_sequences(batch: &Batch, b: usize) -> Rows {
    let seq = batch.node_sequences();
    let w = batch.t * batch.d;
    (0..batch.n)
        .map(|i| seq[(b * batch.n + i) * w..(b * batch.n + i + 1) * w].to_vec())
        .collect()
}

/// States of sample `b` at every time step as rows per node.
pub fn sample_steps(batch: &Batch, b: usize) -> Vec<Rows> {
    (0..batch.t)
        .map(|t| {
            let s = batch.time_step(t);
            (0..batch.n)
                .map(|i| s[(b * batch.n + i) * batch.d..(b * batch.n + i + 1) * batch.d].to_vec())
                .collect()
        })
        .collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub fn random_rows(r: &mut ChaCha8Rng, rows: usize, cols: usize) -> Rows {
    (0..rows).map(|_| (0..cols).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
}
