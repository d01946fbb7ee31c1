//! Relation accuracy under label matching, multi-step prediction error,
//! asymmetry rate and the correlation baseline.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

#[allow(unused_imports)]
use num_traits::Float;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::SymMode;
use crate::data::{Dataset, EdgeIndex, NormStats};
use crate::encoder::GraphIndex;
use crate::model::{one_hot, BatchInputs, Model};
use crate::tensor::{Tape, TensorError};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("{0} predictions for {1} ground-truth edges")]
    LengthMismatch(usize, usize),
    #[error("horizon {horizon} is outside 1..{t}")]
    Horizon { horizon: usize, t: usize },
    #[error(transparent)]
    Tensor(#[from] TensorError),
}

/// All permutations of `0..k`, identity first.
pub fn permutations(k: usize) -> Vec<Vec<usize>> {
    fn go(prefix: &mut Vec<usize>, left: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if left.is_empty() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..left.len() {
            let v = left.remove(i);
            prefix.push(v);
            go(prefix, left, out);
            prefix.pop();
            left.insert(i, v);
        }
    }
    let mut out = Vec::new();
    go(&mut Vec::new(), &mut (0..k).collect(), &mut out);
    out
}

/// Fraction of edges where `perm[pred] == truth`.
pub fn accuracy_with(pred: &[usize], truth: &[usize], perm: &[usize]) -> Result<f64, EvalError> {
    if pred.len() != truth.len() {
        return Err(EvalError::LengthMismatch(pred.len(), truth.len()));
    }
    let hits = pred.iter().zip(truth).filter(|(&p, &t)| perm[p] == t).count();
    Ok(hits as f64 / pred.len().max(1) as f64)
}

/// Accuracy maximised over relabelings of the predicted types, with the maximising permutation.
pub fn relation_accuracy(pred: &[usize], truth: &[usize], k: usize) -> Result<(f64, Vec<usize>), EvalError> {
    let mut best = (f64::NEG_INFINITY, Vec::new());
    for perm in permutations(k) {
        let a = accuracy_with(pred, truth, &perm)?;
        if a > best.0 {
            best = (a, perm);
        }
    }
    Ok(best)
}

/// Mean over samples of the fraction of unordered pairs whose two directions disagree.
pub fn asymmetry_rate(types: &[usize], edges: &EdgeIndex) -> f64 {
    let e = edges.len();
    let samples = types.len() / e;
    let pairs = e / 2;
    let mut total = 0.0;
    for s in types.chunks(e) {
        let differ = (0..e)
            .filter(|&p| p < edges.transpose()[p] && s[p] != s[edges.transpose()[p]])
            .count();
        total += differ as f64 / pairs as f64;
    }
    total / samples.max(1) as f64
}

/// Pearson correlation; zero when either side has no variance.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    if va <= 0.0 || vb <= 0.0 {
        return 0.0;
    }
    cov / (va.sqrt() * vb.sqrt())
}

/// `|corr|` of the flattened sequences of every directed edge, with the true type.
pub fn pair_correlations(data: &Dataset, edges: &EdgeIndex) -> Vec<(f64, usize)> {
    let mut out = Vec::with_capacity(data.len() * edges.len());
    let (n, t, d) = (data.n, data.t, data.d);
    for s in &data.samples {
        let seq: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..t).flat_map(|k| s.states[(k * n + i) * d..(k * n + i + 1) * d].iter().copied()).collect())
            .collect();
        for p in 0..edges.len() {
            let (i, j) = edges.pair(p);
            out.push((pearson(&seq[i], &seq[j]).abs(), s.graph.get(i, j) as usize));
        }
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorrelationBaseline {
    /// `None` when predicting no interactions at all beats every threshold.
    pub threshold: Option<f64>,
    pub val_accuracy: f64,
    pub test_accuracy: f64,
}

/// Thresholded `|corr|` classifier: type 1 iff `|corr| >= threshold`, with the
/// threshold chosen to maximise validation accuracy.
pub fn correlation_baseline(val: &Dataset, test: &Dataset, edges: &EdgeIndex) -> CorrelationBaseline {
    let mut scored = pair_correlations(val, edges);
    scored.sort_by(|a, b| a.0.total_cmp(&b.0));
    let total = scored.len();
    let positives = scored.iter().filter(|s| s.1 == 1).count();
    // Threshold above everything: all predicted 0.
    let mut best = (positives.max(total - positives) as f64 / total as f64, f64::INFINITY);
    // Sweeping down: entries at index >= i are predicted 1.
    let mut ones_above = 0usize;
    let mut zeros_above = 0usize;
    for i in (0..total).rev() {
        if scored[i].1 == 1 {
            ones_above += 1;
        } else {
            zeros_above += 1;
        }
        if i > 0 && scored[i - 1].0 == scored[i].0 {
            continue;
        }
        let zeros_below = (total - positives) - zeros_above;
        let correct = ones_above + zeros_below;
        let acc = correct.max(total - correct) as f64 / total as f64;
        if acc > best.0 {
            best = (acc, scored[i].0);
        }
    }
    let threshold = best.1.is_finite().then_some(best.1);
    let test_scored = pair_correlations(test, edges);
    let pred: Vec<usize> = test_scored.iter().map(|s| (s.0 >= best.1) as usize).collect();
    let truth: Vec<usize> = test_scored.iter().map(|s| s.1).collect();
    CorrelationBaseline {
        threshold,
        val_accuracy: best.0,
        test_accuracy: relation_accuracy(&pred, &truth, 2).map(|r| r.0).unwrap_or(0.0),
    }
}

/// Where the decoder's relations come from during evaluation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RelationSource {
    /// Argmax of the encoder's distribution.
    Encoder(SymMode),
    /// The dataset's ground-truth graphs.
    TrueGraph,
}

/// Hard edge types for every sample, concatenated in dataset order.
pub fn predict_types(model: &Model, data: &Dataset, sym: SymMode, batch_size: usize) -> Result<Vec<usize>, EvalError> {
    let edges = EdgeIndex::new(data.n).expect("dataset has at least 2 nodes");
    let mut out = Vec::with_capacity(data.len() * edges.len());
    for idx in data.batch_indices::<ChaCha8Rng>(batch_size, None) {
        let batch = data.batch(&idx, &edges);
        let g = GraphIndex::new(&edges, batch.b);
        out.extend(model.predict_types(&batch, &g, sym)?);
    }
    Ok(out)
}

/// Free-running squared error per horizon `1..T`, in normalized units and,
/// when `stats` is given, in raw units.
#[derive(Clone, Debug, PartialEq)]
pub struct MseCurve {
    pub normalized: Vec<f64>,
    pub raw: Option<Vec<f64>>,
}

impl MseCurve {
    pub fn at(&self, horizon: usize) -> Result<f64, EvalError> {
        self.normalized
            .get(horizon.wrapping_sub(1))
            .copied()
            .ok_or(EvalError::Horizon {
                horizon,
                t: self.normalized.len() + 1,
            })
    }
}

/// Rolls the decoder forward from the first state only, with hard relations.
pub fn mse_curve(
    model: &Model,
    data: &Dataset,
    source: RelationSource,
    batch_size: usize,
    stats: Option<&NormStats>,
) -> Result<MseCurve, EvalError> {
    let edges = EdgeIndex::new(data.n).expect("dataset has at least 2 nodes");
    let (t, d, k) = (data.t, data.d, model.config.k);
    let mut norm = vec![0.0; t - 1];
    let mut raw = vec![0.0; t - 1];
    let mut count = 0usize;
    for idx in data.batch_indices::<ChaCha8Rng>(batch_size, None) {
        let batch = data.batch(&idx, &edges);
        let g = GraphIndex::new(&edges, batch.b);
        let types = match source {
            RelationSource::Encoder(sym) => model.predict_types(&batch, &g, sym)?,
            RelationSource::TrueGraph => batch.edge_types.clone(),
        };
        let mut tape = Tape::new();
        let p = model.store.bind_frozen(&mut tape)?;
        let inputs = BatchInputs::new(&mut tape, &batch)?;
        let z = one_hot(&mut tape, &types, k)?;
        let preds = model.decoder.rollout(&mut tape, &p, &g, &inputs.steps, z, t)?;
        for (h, &mu) in preds.iter().enumerate() {
            let (pv, xv) = (tape.value(mu), tape.value(inputs.steps[h + 1]));
            for (e, (a, b)) in pv.iter().zip(xv).enumerate() {
                let sq = (a - b) * (a - b);
                norm[h] += sq;
                if let Some(s) = stats {
                    raw[h] += sq * s.squared_scale(e % d);
                }
            }
        }
        count += batch.b * batch.n * d;
    }
    let c = count.max(1) as f64;
    Ok(MseCurve {
        normalized: norm.iter().map(|v| v / c).collect(),
        raw: stats.map(|_| raw.iter().map(|v| v / c).collect()),
    })
}

/// Serialisable summary of one evaluation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub accuracy: Option<f64>,
    pub permutation: Option<Vec<usize>>,
    pub mse_at: BTreeMap<usize, f64>,
    pub mse_raw_at: BTreeMap<usize, f64>,
    pub asymmetry_rate: Option<f64>,
    pub correlation_baseline: Option<CorrelationBaseline>,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn permutation_list() {
        assert_eq!(permutations(2), vec![vec![0, 1], vec![1, 0]]);
        assert_eq!(permutations(3).len(), 6);
        assert_eq!(permutations(3)[0], vec![0, 1, 2]);
    }

    #[test]
    fn accuracy_examples() {
        let truth = [0, 1, 1, 0, 1];
        assert_eq!(relation_accuracy(&truth, &truth, 2).unwrap(), (1.0, vec![0, 1]));
        let flipped: Vec<usize> = truth.iter().map(|t| 1 - t).collect();
        assert_eq!(relation_accuracy(&flipped, &truth, 2).unwrap(), (1.0, vec![1, 0]));
        assert!(relation_accuracy(&[0], &truth, 2).is_err());
    }

    #[test]
    fn asymmetry_examples() {
        let e = EdgeIndex::new(2).unwrap();
        assert_eq!(asymmetry_rate(&[0, 1], &e), 1.0);
        assert_eq!(asymmetry_rate(&[1, 1, 0, 0], &e), 0.0);
        let e = EdgeIndex::new(3).unwrap();
        // (1->0)=1 differs from (0->1)=0; the other pairs agree.
        let types = [1, 0, 0, 0, 0, 0];
        assert!((asymmetry_rate(&types, &e) - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn correlation_examples() {
        let a = [1.0, 2.0, 3.5, -1.0];
        assert!((pearson(&a, &a) - 1.0).abs() < 1e-15);
        let neg: Vec<f64> = a.iter().map(|v| -v).collect();
        assert!((pearson(&a, &neg) + 1.0).abs() < 1e-15);
        assert_eq!(pearson(&[2.0; 4], &a), 0.0);
        assert_eq!(pearson(&[2.0; 4], &[2.0; 4]), 0.0);
    }

    #[test]
    fn horizon_lookup() {
        let c = MseCurve {
            normalized: vec![0.1, 0.2],
            raw: None,
        };
        assert_eq!(c.at(2).unwrap(), 0.2);
        assert_eq!(c.at(3), Err(EvalError::Horizon { horizon: 3, t: 3 }));
        assert!(c.at(0).is_err());
    }
}
