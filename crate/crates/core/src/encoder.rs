//! Relation encoder: node/edge message passing over whole trajectories,
//! followed by intra-edge (incoming edges of a receiver) and inter-edge
//! (across receivers) interaction and a per-edge classifier.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand::Rng;

use crate::config::{ModelConfig, SequenceKind};
use crate::data::EdgeIndex;
use crate::nn::{AttentionBlock, GruCell, Mlp};
use crate::params::{Bound, ParamStore};
use crate::tensor::{Result, Tape, TensorError, Var};

/// Sequence model applied independently to groups of equally long sequences.
#[derive(Clone, Debug)]
pub enum SequenceModel {
    Gru(GruCell),
    SelfAttention(AttentionBlock),
    Identity,
}

impl SequenceModel {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, kind: SequenceKind, width: usize, rng: &mut R) -> Self {
        match kind {
            SequenceKind::Gru => Self::Gru(GruCell::new(store, name, width, width, rng)),
            SequenceKind::SelfAttention => {
                Self::SelfAttention(AttentionBlock::new(store, name, width, width, width, rng))
            }
            SequenceKind::Identity => Self::Identity,
        }
    }

    /// Maps the step list `[groups, width]` of every sequence position to outputs.
    fn run_steps(&self, tape: &mut Tape, p: &Bound, steps: &[Var]) -> Result<Vec<Var>> {
        match self {
            Self::Gru(cell) => cell.run(tape, p, steps),
            Self::Identity => Ok(steps.to_vec()),
            Self::SelfAttention(block) => {
                let (groups, width) = (tape.shape(steps[0])[0], tape.shape(steps[0])[1]);
                let len = steps.len();
                let stacked = tape.concat(steps)?;
                let rows = tape.reshape(stacked, &[groups * len, width])?;
                let ctx = block.forward_grouped(tape, p, rows, groups, len)?;
                let out_width = tape.shape(ctx)[1];
                let ctx = tape.reshape(ctx, &[groups, len * out_width])?;
                (0..len).map(|s| tape.slice_last(ctx, s * out_width, out_width)).collect()
            }
        }
    }

    /// Runs over `x: [groups * len, width]` (group-major). Positions are fed
    /// in the order `order` and the outputs put back in place, i.e. the
    /// result is `π⁻¹ ∘ S ∘ π` for the permutation `π = order`.
    pub fn forward_grouped(
        &self,
        tape: &mut Tape,
        p: &Bound,
        x: Var,
        groups: usize,
        len: usize,
        order: Option<&[usize]>,
    ) -> Result<Var> {
        if let Self::Identity = self {
            return Ok(x);
        }
        let width = tape.shape(x)[1];
        let grouped = tape.reshape(x, &[groups, len * width])?;
        let natural: Vec<usize> = (0..len).collect();
        let order = order.unwrap_or(&natural);
        if order.len() != len {
            return Err(TensorError::Invalid {
                op: "sequence_model",
                reason: "permutation length differs from sequence length",
            });
        }
        let steps = order
            .iter()
            .map(|&s| tape.slice_last(grouped, s * width, width))
            .collect::<Result<Vec<_>>>()?;
        let outputs = self.run_steps(tape, p, &steps)?;
        let mut placed = vec![outputs[0]; len];
        for (m, &s) in order.iter().enumerate() {
            placed[s] = outputs[m];
        }
        let out_width = tape.shape(placed[0])[1];
        let joined = tape.concat(&placed)?;
        tape.reshape(joined, &[groups * len, out_width])
    }
}

/// Logits, probabilities and log-probabilities of the per-edge types, `[B * E, K]`.
#[derive(Clone, Copy, Debug)]
pub struct EdgeDistribution {
    pub logits: Var,
    pub probs: Var,
    pub log_probs: Var,
}

impl EdgeDistribution {
    pub fn from_logits(tape: &mut Tape, logits: Var) -> Result<Self> {
        Ok(Self {
            logits,
            probs: tape.softmax(logits)?,
            log_probs: tape.log_softmax(logits)?,
        })
    }
}

/// Index tensors of the complete graph for one batch size.
#[derive(Clone, Debug)]
pub struct GraphIndex {
    pub edges: EdgeIndex,
    pub batch: usize,
    pub senders: Arc<[usize]>,
    pub receivers: Arc<[usize]>,
    pub transpose: Arc<[usize]>,
}

impl GraphIndex {
    pub fn new(edges: &EdgeIndex, batch: usize) -> Self {
        Self {
            edges: edges.clone(),
            batch,
            senders: edges.batched_senders(batch),
            receivers: edges.batched_receivers(batch),
            transpose: edges.batched_transpose(batch),
        }
    }

    pub fn n(&self) -> usize {
        self.edges.num_nodes()
    }

    pub fn num_nodes(&self) -> usize {
        self.batch * self.n()
    }

    pub fn num_edges(&self) -> usize {
        self.batch * self.edges.len()
    }

    /// `[f(x_i), f(x_j)]` for every edge `i -> j`.
    pub fn node_to_edge(&self, tape: &mut Tape, x: Var) -> Result<Var> {
        let s = tape.index_select(x, &self.senders)?;
        let r = tape.index_select(x, &self.receivers)?;
        tape.concat(&[s, r])
    }

    /// Sum of edge rows into their receivers.
    pub fn edge_to_node(&self, tape: &mut Tape, e: Var) -> Result<Var> {
        tape.scatter_add(e, &self.receivers, self.num_nodes())
    }
}

#[derive(Clone, Debug)]
pub struct Encoder {
    pub f_emb: Mlp,
    pub f_e1: Mlp,
    pub f_v1: Mlp,
    pub f_e2: Mlp,
    pub intra: SequenceModel,
    pub inter: SequenceModel,
    pub fuse: Mlp,
    pub use_intra: bool,
    pub use_inter: bool,
    pub hidden: usize,
}

impl Encoder {
    pub fn new<R: Rng + ?Sized>(store: &mut ParamStore, name: &str, cfg: &ModelConfig, rng: &mut R) -> Self {
        let h = cfg.hidden;
        let n = |s: &str| format!("{name}.{s}");
        let f_emb = Mlp::new(store, &n("f_emb"), (cfg.t * cfg.d, h, h), true, rng);
        let f_e1 = Mlp::new(store, &n("f_e1"), (2 * h, h, h), true, rng);
        let f_v1 = Mlp::new(store, &n("f_v1"), (h, h, h), true, rng);
        let f_e2 = Mlp::new(store, &n("f_e2"), (2 * h, h, h), true, rng);
        let intra = if cfg.use_intra {
            SequenceModel::new(store, &n("g_intra"), cfg.sequence, h, rng)
        } else {
            SequenceModel::Identity
        };
        let inter = if cfg.use_inter {
            SequenceModel::new(store, &n("g_inter"), cfg.sequence, h, rng)
        } else {
            SequenceModel::Identity
        };
        let fuse_in = if cfg.use_inter { 2 * h } else { h };
        let fuse = Mlp::new(store, &n("fuse"), (fuse_in, h, cfg.k), false, rng);
        Self {
            f_emb,
            f_e1,
            f_v1,
            f_e2,
            intra,
            inter,
            fuse,
            use_intra: cfg.use_intra,
            use_inter: cfg.use_inter,
            hidden: h,
        }
    }

    /// Edge embeddings `[B * E, H]` from whole node sequences `x: [B * N, T * D]`.
    pub fn encode_base(&self, tape: &mut Tape, p: &Bound, g: &GraphIndex, x: Var) -> Result<Var> {
        let h1 = self.f_emb.forward(tape, p, x)?;
        let pairs = g.node_to_edge(tape, h1)?;
        let h1e = self.f_e1.forward(tape, p, pairs)?;
        let agg = g.edge_to_node(tape, h1e)?;
        let h2 = self.f_v1.forward(tape, p, agg)?;
        let pairs = g.node_to_edge(tape, h2)?;
        self.f_e2.forward(tape, p, pairs)
    }

    /// Sequence model over the incoming edges of each receiver, senders ascending.
    pub fn intra_edge(&self, tape: &mut Tape, p: &Bound, g: &GraphIndex, h2: Var, order: Option<&[usize]>) -> Result<Var> {
        self.intra
            .forward_grouped(tape, p, h2, g.num_nodes(), g.edges.in_degree(), order)
    }

    /// Mean-pooled incoming edges per node, then a sequence model across nodes: `[B * N, H]`.
    pub fn inter_edge(&self, tape: &mut Tape, p: &Bound, g: &GraphIndex, e1: Var, order: Option<&[usize]>) -> Result<Var> {
        let pooled = mean_incoming(tape, g, e1)?;
        self.inter.forward_grouped(tape, p, pooled, g.batch, g.n(), order)
    }

    /// Logits `[B * E, K]`.
    pub fn fuse(&self, tape: &mut Tape, p: &Bound, g: &GraphIndex, e1: Var, e2: Option<Var>) -> Result<Var> {
        let input = match e2 {
            Some(e2) => {
                let per_edge = tape.index_select(e2, &g.receivers)?;
                tape.concat(&[e1, per_edge])?
            }
            None => e1,
        };
        self.fuse.forward(tape, p, input)
    }

    pub fn logits(&self, tape: &mut Tape, p: &Bound, g: &GraphIndex, x: Var) -> Result<Var> {
        let h2 = self.encode_base(tape, p, g, x)?;
        let e1 = if self.use_intra {
            self.intra_edge(tape, p, g, h2, None)?
        } else {
            h2
        };
        let e2 = if self.use_inter {
            Some(self.inter_edge(tape, p, g, e1, None)?)
        } else {
            None
        };
        self.fuse(tape, p, g, e1, e2)
    }
}

/// Mean over the `N - 1` incoming edges of each receiver.
pub fn mean_incoming(tape: &mut Tape, g: &GraphIndex, e: Var) -> Result<Var> {
    let width = tape.shape(e)[1];
    let grouped = tape.reshape(e, &[g.num_nodes(), g.edges.in_degree(), width])?;
    tape.mean(grouped, 1)
}

/// `(h_ij + h_ji) / 2` per edge.
pub fn symmetrize_logits(tape: &mut Tape, g: &GraphIndex, logits: Var) -> Result<Var> {
    let t = tape.index_select(logits, &g.transpose)?;
    let s = tape.add(logits, t)?;
    Ok(tape.scale(s, 0.5))
}

/// Standard Gumbel draws `-ln(-ln U)`.
pub fn gumbel_noise<R: Rng + ?Sized>(rng: &mut R, len: usize) -> Vec<f64> {
    (0..len)
        .map(|_| {
            let u: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
            -(-u.ln()).ln()
        })
        .collect()
}

/// Gumbel noise shared between each edge and its transpose, so that
/// symmetric logits give symmetric samples.
pub fn symmetric_gumbel_noise<R: Rng + ?Sized>(rng: &mut R, g: &GraphIndex, k: usize) -> Vec<f64> {
    let mut noise = vec![0.0; g.num_edges() * k];
    for e in 0..g.num_edges() {
        let t = g.transpose[e];
        if e < t {
            let draw = gumbel_noise(rng, k);
            noise[e * k..(e + 1) * k].copy_from_slice(&draw);
            noise[t * k..(t + 1) * k].copy_from_slice(&draw);
        }
    }
    noise
}

/// Relaxed one-hot sample `softmax((logits + g) / τ)`; gradients reach the logits only.
pub fn gumbel_softmax(tape: &mut Tape, logits: Var, noise: &[f64], tau: f64) -> Result<Var> {
    if !(tau > 0.0) {
        return Err(TensorError::Invalid {
            op: "gumbel_softmax",
            reason: "temperature must be positive",
        });
    }
    let shape = tape.shape(logits).to_vec();
    let g = tape.constant(&shape, noise.to_vec())?;
    let y = tape.add(logits, g)?;
    let y = tape.scale(y, 1.0 / tau);
    tape.softmax(y)
}

/// Row-wise argmax of a `[rows, k]` buffer.
pub fn argmax_rows(values: &[f64], k: usize) -> Vec<usize> {
    values
        .chunks(k)
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn gumbel_softmax_closed_forms() {
        let mut tape = Tape::new();
        let l = tape.leaf(&[2, 2], vec![0.0, 0.0, 3.0f64.ln(), 0.0]).unwrap();
        let z = gumbel_softmax(&mut tape, l, &[0.0; 4], 1.0).unwrap();
        let v = tape.value(z);
        assert_eq!(&v[..2], &[0.5, 0.5]);
        assert!((v[2] - 0.75).abs() < 1e-15 && (v[3] - 0.25).abs() < 1e-15);
        assert!(gumbel_softmax(&mut tape, l, &[0.0; 4], 0.0).is_err());
    }

    #[test]
    fn gumbel_noise_is_finite() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(gumbel_noise(&mut rng, 10_000).iter().all(|g| g.is_finite()));
    }

    #[test]
    fn argmax_picks_first_maximum() {
        assert_eq!(argmax_rows(&[0.1, 0.9, 0.5, 0.5, 2.0, -1.0], 2), vec![1, 0, 0]);
    }
}
