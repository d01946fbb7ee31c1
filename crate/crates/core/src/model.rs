//! Encoder and decoder sharing one parameter store.

use alloc::vec::Vec;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{ConfigError, ModelConfig, SymMode};
use crate::data::Batch;
use crate::decoder::Decoder;
use crate::encoder::{argmax_rows, symmetrize_logits, EdgeDistribution, Encoder, GraphIndex};
use crate::params::{Bound, ParamStore};
use crate::tensor::{Result, Tape, Var};

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub encoder: Encoder,
    pub decoder: Decoder,
}

/// A batch pushed onto a tape as constants.
#[derive(Clone, Debug)]
pub struct BatchInputs {
    /// Whole sequences per node, `[B * N, T * D]`.
    pub sequences: Var,
    /// States per time step, each `[B * N, D]`.
    pub steps: Vec<Var>,
}

impl BatchInputs {
    pub fn new(tape: &mut Tape, batch: &Batch) -> Result<Self> {
        let rows = batch.b * batch.n;
        let sequences = tape.constant(&[rows, batch.t * batch.d], batch.node_sequences())?;
        let steps = (0..batch.t)
            .map(|t| tape.constant(&[rows, batch.d], batch.time_step(t)))
            .collect::<Result<_>>()?;
        Ok(Self { sequences, steps })
    }
}

impl Model {
    /// Fresh model with parameters drawn from `seed`.
    pub fn new(config: ModelConfig, seed: u64) -> core::result::Result<Self, ConfigError> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::new();
        let encoder = Encoder::new(&mut store, "encoder", &config, &mut rng);
        let decoder = Decoder::new(&mut store, "decoder", &config, &mut rng);
        Ok(Self {
            config,
            store,
            encoder,
            decoder,
        })
    }

    /// Edge distribution; with [`SymMode::HardSym`] the logits are symmetrised first.
    pub fn edge_distribution(
        &self,
        tape: &mut Tape,
        p: &Bound,
        g: &GraphIndex,
        inputs: &BatchInputs,
        sym: SymMode,
    ) -> Result<EdgeDistribution> {
        let logits = self.encoder.logits(tape, p, g, inputs.sequences)?;
        let logits = match sym {
            SymMode::HardSym => symmetrize_logits(tape, g, logits)?,
            SymMode::SoftSym | SymMode::NoSym => logits,
        };
        EdgeDistribution::from_logits(tape, logits)
    }

    /// Hard edge types `[B * E]` by argmax of the encoder's probabilities.
    pub fn predict_types(&self, batch: &Batch, g: &GraphIndex, sym: SymMode) -> Result<Vec<usize>> {
        let mut tape = Tape::new();
        let p = self.store.bind_frozen(&mut tape)?;
        let inputs = BatchInputs::new(&mut tape, batch)?;
        let dist = self.edge_distribution(&mut tape, &p, g, &inputs, sym)?;
        Ok(argmax_rows(tape.value(dist.probs), self.config.k))
    }
}

/// One-hot rows `[types.len(), k]`.
pub fn one_hot(tape: &mut Tape, types: &[usize], k: usize) -> Result<Var> {
    let mut data = alloc::vec![0.0; types.len() * k];
    for (e, &t) in types.iter().enumerate() {
        data[e * k + t] = 1.0;
    }
    tape.constant(&[types.len(), k], data)
}
