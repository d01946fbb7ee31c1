//! Training objective: Gaussian reconstruction NLL, KL to the uniform edge
//! prior and the λ-weighted KL towards the transposed edge distribution.

use alloc::vec::Vec;
use core::f64::consts::PI;

#[allow(unused_imports)]
use num_traits::Float;

use crate::encoder::{EdgeDistribution, GraphIndex};
use crate::tensor::{Result, Tape, TensorError, Var};

/// Lower clamp applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-12;

/// `Σ p (log p + log K)` over all edges, divided by the batch size.
pub fn kl_to_uniform(tape: &mut Tape, dist: &EdgeDistribution, batch: usize) -> Result<Var> {
    let k = *tape.shape(dist.probs).last().unwrap() as f64;
    let shifted = tape.affine(dist.log_probs, 1.0, k.ln());
    let terms = tape.mul(dist.probs, shifted)?;
    let total = tape.sum_all(terms);
    Ok(tape.scale(total, 1.0 / batch as f64))
}

/// `KL[q' ‖ q]` with `q'_ij = q_ji`, summed over directed edges and divided
/// by the batch size.
pub fn symmetry_kl(tape: &mut Tape, probs: Var, g: &GraphIndex) -> Result<Var> {
    let q_t = tape.index_select(probs, &g.transpose)?;
    let log_q_t = tape.clamp_min(q_t, PROB_FLOOR);
    let log_q_t = tape.log(log_q_t)?;
    let log_q = tape.clamp_min(probs, PROB_FLOOR);
    let log_q = tape.log(log_q)?;
    let ratio = tape.sub(log_q_t, log_q)?;
    let terms = tape.mul(q_t, ratio)?;
    let total = tape.sum_all(terms);
    Ok(tape.scale(total, 1.0 / g.batch as f64))
}

/// `Σ (x − μ)² / 2σ² + ½ log 2πσ²` over every element of every step, divided by the batch size.
pub fn gaussian_nll(tape: &mut Tape, preds: &[Var], targets: &[Var], sigma2: f64, batch: usize) -> Result<Var> {
    if !(sigma2 > 0.0) {
        return Err(TensorError::Invalid {
            op: "gaussian_nll",
            reason: "variance must be positive",
        });
    }
    if preds.len() != targets.len() {
        return Err(TensorError::Invalid {
            op: "gaussian_nll",
            reason: "prediction and target sequences differ in length",
        });
    }
    let mut sq = Vec::with_capacity(preds.len());
    let mut count = 0usize;
    for (&mu, &x) in preds.iter().zip(targets) {
        let diff = tape.sub(x, mu)?;
        let s = tape.mul(diff, diff)?;
        count += tape.value(s).len();
        sq.push(tape.sum_all(s));
    }
    let mut total = tape.scalar(0.0);
    for s in sq {
        total = tape.add(total, s)?;
    }
    let b = batch as f64;
    let constant = 0.5 * (2.0 * PI * sigma2).ln() * count as f64 / b;
    Ok(tape.affine(total, 1.0 / (2.0 * sigma2 * b), constant))
}

/// Mean per-edge cross-entropy of the edge distribution against known types.
pub fn edge_cross_entropy(tape: &mut Tape, dist: &EdgeDistribution, types: &[usize]) -> Result<Var> {
    let k = *tape.shape(dist.log_probs).last().unwrap();
    if types.len() * k != tape.value(dist.log_probs).len() {
        return Err(TensorError::Invalid {
            op: "edge_cross_entropy",
            reason: "one type per edge required",
        });
    }
    let mut onehot = alloc::vec![0.0; types.len() * k];
    for (e, &t) in types.iter().enumerate() {
        onehot[e * k + t] = 1.0;
    }
    let target = tape.constant(&[types.len(), k], onehot)?;
    let picked = tape.mul(dist.log_probs, target)?;
    let total = tape.sum_all(picked);
    Ok(tape.scale(total, -1.0 / types.len() as f64))
}

/// Loss terms of one batch; `total = nll + kl_prior + λ·kl_sym`.
#[derive(Clone, Copy, Debug)]
pub struct LossTerms {
    pub total: Var,
    pub nll: Var,
    pub kl_prior: Var,
    pub kl_sym: Var,
}

/// Plain-number view of [`LossTerms`].
#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct LossReport {
    pub total: f64,
    pub nll: f64,
    pub kl_prior: f64,
    pub kl_sym: f64,
    pub lambda: f64,
}

impl LossTerms {
    pub fn report(&self, tape: &Tape, lambda: f64) -> LossReport {
        LossReport {
            total: tape.item(self.total),
            nll: tape.item(self.nll),
            kl_prior: tape.item(self.kl_prior),
            kl_sym: tape.item(self.kl_sym),
            lambda,
        }
    }
}

pub fn total_loss(
    tape: &mut Tape,
    g: &GraphIndex,
    preds: &[Var],
    targets: &[Var],
    dist: &EdgeDistribution,
    lambda: f64,
    sigma2: f64,
) -> Result<LossTerms> {
    let nll = gaussian_nll(tape, preds, targets, sigma2, g.batch)?;
    let kl_prior = kl_to_uniform(tape, dist, g.batch)?;
    let kl_sym = symmetry_kl(tape, dist.probs, g)?;
    let elbo = tape.add(nll, kl_prior)?;
    let weighted = tape.scale(kl_sym, lambda);
    let total = tape.add(elbo, weighted)?;
    Ok(LossTerms {
        total,
        nll,
        kl_prior,
        kl_sym,
    })
}
