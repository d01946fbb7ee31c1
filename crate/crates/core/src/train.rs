//! Adam optimisation of the three training modes.
//!
//! All randomness of epoch `e` (shuffling and Gumbel noise) comes from a
//! ChaCha stream keyed by `(seed, e)`, so resuming only needs the parameters,
//! the Adam moments and the epoch counter.

use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, SymMode, TrainConfig, TrainMode};
use crate::data::{Batch, Dataset, EdgeIndex};
use crate::encoder::{argmax_rows, gumbel_noise, gumbel_softmax, symmetric_gumbel_noise, GraphIndex};
use crate::eval::relation_accuracy;
use crate::model::{one_hot, BatchInputs, Model};
use crate::objective::{edge_cross_entropy, gaussian_nll, total_loss, LossReport};
use crate::params::ParamStore;
use crate::tensor::{Tape, TensorError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrainError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("non-finite loss at epoch {epoch}, batch {batch}")]
    NonFinite { epoch: usize, batch: usize },
    #[error("dataset shape (n={n}, t={t}, d={d}) does not match the model")]
    ShapeMismatch { n: usize, t: usize, d: usize },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// First and second moment estimates, one buffer per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
    pub step: u64,
}

impl AdamState {
    pub fn new(store: &ParamStore) -> Self {
        let zeros: Vec<Vec<f64>> = store.iter().map(|p| vec![0.0; p.data.len()]).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(store: &mut ParamStore, grads: &[Vec<f64>], state: &mut AdamState, lr: f64, beta1: f64, beta2: f64, eps: f64) {
    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - beta1.powi(t);
    let c2 = 1.0 - beta2.powi(t);
    for (((param, g), m), v) in store.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        for i in 0..param.data.len() {
            m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
            param.data[i] -= lr * (m[i] / c1) / ((v[i] / c2).sqrt() + eps);
        }
    }
}

/// Rescales `grads` so their joint L2 norm is at most `max_norm`; returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Vec<f64>], max_norm: f64) -> f64 {
    let norm = grads.iter().flatten().map(|g| g * g).sum::<f64>().sqrt();
    if norm > max_norm {
        let s = max_norm / norm;
        grads.iter_mut().flatten().for_each(|g| *g *= s);
    }
    norm
}

/// RNG stream for the given epoch; `None` selects the evaluation stream.
pub fn epoch_rng(seed: u64, epoch: Option<usize>) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(epoch.map_or(u64::MAX, |e| e as u64 + 1));
    rng
}

/// Sample-weighted averages over one pass through a dataset.
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct EpochStats {
    pub loss: LossReport,
    /// Relation accuracy; absent when the graph is given.
    pub acc: Option<f64>,
}

struct BatchOutcome {
    report: LossReport,
    types: Option<Vec<usize>>,
    grads: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug)]
pub struct Trainer {
    pub model: Model,
    pub config: TrainConfig,
    pub adam: AdamState,
    /// Completed epochs.
    pub epoch: usize,
    edges: EdgeIndex,
}

impl Trainer {
    pub fn new(model: Model, config: TrainConfig) -> Result<Self, TrainError> {
        config.validate()?;
        let adam = AdamState::new(&model.store);
        let edges = EdgeIndex::new(model.config.n).expect("validated node count");
        Ok(Self {
            model,
            config,
            adam,
            epoch: 0,
            edges,
        })
    }

    pub fn edges(&self) -> &EdgeIndex {
        &self.edges
    }

    fn check(&self, data: &Dataset) -> Result<(), TrainError> {
        let c = &self.model.config;
        if data.n != c.n || data.t != c.t || data.d != c.d {
            return Err(TrainError::ShapeMismatch {
                n: data.n,
                t: data.t,
                d: data.d,
            });
        }
        if data.is_empty() {
            return Err(TrainError::EmptyDataset);
        }
        Ok(())
    }

    fn run_batch(&self, batch: &Batch, rng: &mut ChaCha8Rng, with_grads: bool) -> Result<BatchOutcome, TensorError> {
        let cfg = &self.config;
        let k = self.model.config.k;
        let g = GraphIndex::new(&self.edges, batch.b);
        let mut tape = Tape::new();
        let p = if with_grads {
            self.model.store.bind(&mut tape)?
        } else {
            self.model.store.bind_frozen(&mut tape)?
        };
        let inputs = BatchInputs::new(&mut tape, batch)?;
        let targets = &inputs.steps[1..];
        let (loss, report, types) = match cfg.mode {
            TrainMode::Joint => {
                let dist = self.model.edge_distribution(&mut tape, &p, &g, &inputs, cfg.sym_mode)?;
                let noise = match cfg.sym_mode {
                    SymMode::HardSym => symmetric_gumbel_noise(rng, &g, k),
                    SymMode::SoftSym | SymMode::NoSym => gumbel_noise(rng, g.num_edges() * k),
                };
                let z = gumbel_softmax(&mut tape, dist.logits, &noise, cfg.tau)?;
                let preds = self
                    .model
                    .decoder
                    .rollout(&mut tape, &p, &g, &inputs.steps, z, cfg.segment)?;
                let lambda = cfg.effective_lambda();
                let terms = total_loss(&mut tape, &g, &preds, targets, &dist, lambda, cfg.sigma2)?;
                let types = argmax_rows(tape.value(dist.probs), k);
                (terms.total, terms.report(&tape, lambda), Some(types))
            }
            TrainMode::SupervisedEncoder => {
                let dist = self.model.edge_distribution(&mut tape, &p, &g, &inputs, cfg.sym_mode)?;
                let ce = edge_cross_entropy(&mut tape, &dist, &batch.edge_types)?;
                let report = LossReport {
                    total: tape.item(ce),
                    ..LossReport::default()
                };
                (ce, report, Some(argmax_rows(tape.value(dist.probs), k)))
            }
            TrainMode::TrueGraphDecoder => {
                let z = one_hot(&mut tape, &batch.edge_types, k)?;
                let preds = self
                    .model
                    .decoder
                    .rollout(&mut tape, &p, &g, &inputs.steps, z, cfg.segment)?;
                let nll = gaussian_nll(&mut tape, &preds, targets, cfg.sigma2, batch.b)?;
                let v = tape.item(nll);
                let report = LossReport {
                    total: v,
                    nll: v,
                    ..LossReport::default()
                };
                (nll, report, None)
            }
        };
        let grads = if with_grads && report.total.is_finite() {
            tape.backward(loss)?;
            Some(p.take_grads(&mut tape))
        } else {
            None
        };
        Ok(BatchOutcome { report, types, grads })
    }

    /// One shuffled pass over `train` with an optimiser step per batch.
    pub fn train_epoch(&mut self, train: &Dataset) -> Result<EpochStats, TrainError> {
        self.check(train)?;
        let mut rng = epoch_rng(self.config.seed, Some(self.epoch));
        let order = train.batch_indices(self.config.batch_size, Some(&mut rng));
        let lr = self.config.lr_at(self.epoch);
        let mut acc = Accumulator::default();
        for (bi, idx) in order.iter().enumerate() {
            let batch = train.batch(idx, &self.edges);
            let non_finite = TrainError::NonFinite {
                epoch: self.epoch,
                batch: bi,
            };
            let mut out = match self.run_batch(&batch, &mut rng, true) {
                Err(TensorError::NumericalDomain { .. }) => return Err(non_finite),
                other => other?,
            };
            if !out.report.total.is_finite() {
                return Err(non_finite);
            }
            let mut grads = out.grads.take().expect("gradients requested");
            clip_global_norm(&mut grads, self.config.clip_norm);
            let c = &self.config;
            adam_step(&mut self.model.store, &grads, &mut self.adam, lr, c.beta1, c.beta2, c.eps);
            acc.add(&batch, &out);
        }
        self.epoch += 1;
        Ok(acc.finish(self.model.config.k))
    }

    /// Loss and accuracy on `data` without updating anything.
    pub fn evaluate(&self, data: &Dataset) -> Result<EpochStats, TrainError> {
        self.check(data)?;
        let mut rng = epoch_rng(self.config.seed, None);
        let mut acc = Accumulator::default();
        for idx in data.batch_indices::<ChaCha8Rng>(self.config.batch_size, None) {
            let batch = data.batch(&idx, &self.edges);
            let out = self.run_batch(&batch, &mut rng, false)?;
            acc.add(&batch, &out);
        }
        Ok(acc.finish(self.model.config.k))
    }

    /// Model-selection score on validation statistics; lower is better.
    pub fn selection_score(&self, val: &EpochStats) -> f64 {
        match self.config.mode {
            TrainMode::Joint => val.loss.nll + val.loss.kl_prior,
            TrainMode::SupervisedEncoder => -val.acc.unwrap_or(0.0),
            TrainMode::TrueGraphDecoder => val.loss.nll,
        }
    }
}

#[derive(Default)]
struct Accumulator {
    samples: usize,
    sum: LossReport,
    predicted: Vec<usize>,
    truth: Vec<usize>,
    has_types: bool,
}

impl Accumulator {
    fn add(&mut self, batch: &Batch, out: &BatchOutcome) {
        let w = batch.b as f64;
        self.samples += batch.b;
        self.sum.total += out.report.total * w;
        self.sum.nll += out.report.nll * w;
        self.sum.kl_prior += out.report.kl_prior * w;
        self.sum.kl_sym += out.report.kl_sym * w;
        self.sum.lambda = out.report.lambda;
        if let Some(t) = &out.types {
            self.has_types = true;
            self.predicted.extend_from_slice(t);
            self.truth.extend_from_slice(&batch.edge_types);
        }
    }

    fn finish(self, k: usize) -> EpochStats {
        let n = self.samples.max(1) as f64;
        let loss = LossReport {
            total: self.sum.total / n,
            nll: self.sum.nll / n,
            kl_prior: self.sum.kl_prior / n,
            kl_sym: self.sum.kl_sym / n,
            lambda: self.sum.lambda,
        };
        let acc = self
            .has_types
            .then(|| relation_accuracy(&self.predicted, &self.truth, k).map(|(a, _)| a).unwrap_or(0.0));
        EpochStats { loss, acc }
    }
}
