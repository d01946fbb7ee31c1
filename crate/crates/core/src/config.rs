//! Architecture and optimisation settings.

#[allow(unused_imports)]
use num_traits::Float;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("{field} must be {requirement}")]
    Invalid {
        field: &'static str,
        requirement: &'static str,
    },
}

fn check(ok: bool, field: &'static str, requirement: &'static str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(ConfigError::Invalid { field, requirement })
    }
}

/// Sequence model used by the relation-interaction operations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SequenceKind {
    Gru,
    SelfAttention,
    /// Pass-through; a test hook.
    Identity,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SymMode {
    /// KL penalty towards the transposed distribution, weighted by λ.
    SoftSym,
    /// No symmetry term.
    NoSym,
    /// Logits averaged with their transpose before sampling.
    HardSym,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Joint,
    SupervisedEncoder,
    TrueGraphDecoder,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub n: usize,
    pub t: usize,
    pub d: usize,
    pub k: usize,
    pub hidden: usize,
    pub sequence: SequenceKind,
    pub use_intra: bool,
    pub use_inter: bool,
    pub use_st: bool,
    /// History attention in the node-level recurrence.
    pub node_attention: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            n: 5,
            t: 49,
            d: 4,
            k: 2,
            hidden: 64,
            sequence: SequenceKind::Gru,
            use_intra: true,
            use_inter: true,
            use_st: true,
            node_attention: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.n >= 2, "model.n", "at least 2")?;
        check(self.t >= 2, "model.t", "at least 2")?;
        check(self.d >= 1, "model.d", "positive")?;
        check(self.k >= 2, "model.k", "at least 2")?;
        check(self.hidden >= 1, "model.hidden", "positive")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub mode: TrainMode,
    pub sym_mode: SymMode,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Weight of the symmetry KL.
    pub lambda: f64,
    /// Gumbel-Softmax temperature.
    pub tau: f64,
    /// Re-feed ground truth every `segment` predicted steps.
    pub segment: usize,
    pub sigma2: f64,
    pub clip_norm: f64,
    /// Halve the learning rate every this many epochs; 0 keeps it constant.
    pub lr_halve_every: usize,
    pub seed: u64,
    /// Save a checkpoint every this many epochs; 0 only keeps last and best.
    pub checkpoint_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: TrainMode::Joint,
            sym_mode: SymMode::SoftSym,
            epochs: 30,
            batch_size: 32,
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            lambda: 100.0,
            tau: 0.5,
            segment: 10,
            sigma2: 5e-5,
            clip_norm: 5.0,
            lr_halve_every: 0,
            seed: 0,
            checkpoint_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        check(self.batch_size >= 1, "train.batch_size", "positive")?;
        check(self.lr > 0.0, "train.lr", "positive")?;
        check((0.0..1.0).contains(&self.beta1), "train.beta1", "in [0, 1)")?;
        check((0.0..1.0).contains(&self.beta2), "train.beta2", "in [0, 1)")?;
        check(self.eps > 0.0, "train.eps", "positive")?;
        check(self.lambda >= 0.0, "train.lambda", "non-negative")?;
        check(self.tau > 0.0, "train.tau", "positive")?;
        check(self.segment >= 1, "train.segment", "at least 1")?;
        check(self.sigma2 > 0.0, "train.sigma2", "positive")?;
        check(self.clip_norm > 0.0, "train.clip_norm", "positive")
    }

    /// Symmetry weight used when a run does not set one: 10² in general, 1 for
    /// small and 10³ for large Kuramoto systems.
    pub fn default_lambda(family: crate::sim::Family, n: usize) -> f64 {
        match family {
            crate::sim::Family::Kuramoto if n <= 5 => 1.0,
            crate::sim::Family::Kuramoto => 1000.0,
            _ => 100.0,
        }
    }

    /// λ actually applied, zero unless the soft prior is active.
    pub fn effective_lambda(&self) -> f64 {
        match self.sym_mode {
            SymMode::SoftSym => self.lambda,
            SymMode::NoSym | SymMode::HardSym => 0.0,
        }
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.lr_halve_every {
            0 => self.lr,
            every => self.lr * 0.5f64.powi((epoch / every) as i32),
        }
    }
}
