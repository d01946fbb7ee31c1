//! Evaluation of a checkpoint: accuracy with the label permutation fixed on
//! validation, asymmetry, free-running error per horizon, correlation baseline.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nri_core::config::{SymMode, TrainMode};
use nri_core::data::{Batch, Dataset, EdgeIndex, NormStats};
use nri_core::encoder::GraphIndex;
use nri_core::eval::{
    accuracy_with, asymmetry_rate, correlation_baseline, mse_curve, predict_types, relation_accuracy, EvalReport,
    RelationSource,
};
use nri_core::model::{one_hot, BatchInputs, Model};
use nri_core::tensor::Tape;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::format::load_checkpoint;
use crate::run::model_from_checkpoint;
use crate::format::Sidecar;
use crate::simulate::load_splits;
use crate::RunError;

pub const REPORT: &str = "eval.json";
pub const HORIZON_CSV: &str = "mse.csv";
pub const TRAJECTORY: &str = "trajectory.json";

/// Ground truth and free-running prediction of one test sample, in raw units.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPair {
    pub n: usize,
    pub t: usize,
    pub d: usize,
    /// `[T, N, D]`
    pub truth: Vec<f64>,
    /// `[T, N, D]`; the first step is the shared initial state.
    pub predicted: Vec<f64>,
}

pub fn relation_source(cfg: &RunConfig) -> RelationSource {
    match cfg.train.mode {
        TrainMode::TrueGraphDecoder => RelationSource::TrueGraph,
        TrainMode::Joint | TrainMode::SupervisedEncoder => RelationSource::Encoder(cfg.train.sym_mode),
    }
}

fn truths(data: &Dataset, edges: &EdgeIndex) -> Vec<usize> {
    data.samples.iter().flat_map(|s| s.graph.edge_types(edges)).collect()
}

/// Free-running rollout of the first test sample.
pub fn trajectory_pair(
    model: &Model,
    data: &Dataset,
    source: RelationSource,
    norm: &NormStats,
) -> Result<TrajectoryPair, RunError> {
    let edges = EdgeIndex::new(data.n).expect("dataset has at least 2 nodes");
    let batch: Batch = data.batch(&[0], &edges);
    let g = GraphIndex::new(&edges, 1);
    let types = match source {
        RelationSource::Encoder(sym) => model.predict_types(&batch, &g, sym).map_err(nri_core::eval::EvalError::from)?,
        RelationSource::TrueGraph => batch.edge_types.clone(),
    };
    let mut tape = Tape::new();
    let eval_err = nri_core::eval::EvalError::from;
    let p = model.store.bind_frozen(&mut tape).map_err(eval_err)?;
    let inputs = BatchInputs::new(&mut tape, &batch).map_err(eval_err)?;
    let z = one_hot(&mut tape, &types, model.config.k).map_err(eval_err)?;
    let preds = model
        .decoder
        .rollout(&mut tape, &p, &g, &inputs.steps, z, data.t)
        .map_err(eval_err)?;
    let d = data.d;
    let raw = |v: &[f64]| -> Vec<f64> { v.iter().enumerate().map(|(i, &x)| norm.denormalize_value(i % d, x)).collect() };
    let mut predicted = raw(tape.value(inputs.steps[0]));
    for &mu in &preds {
        predicted.extend(raw(tape.value(mu)));
    }
    Ok(TrajectoryPair {
        n: data.n,
        t: data.t,
        d,
        truth: raw(&data.samples[0].states),
        predicted,
    })
}

/// Full evaluation of a model on validation and test splits.
pub fn evaluate_model(
    cfg: &RunConfig,
    model: &Model,
    val: &Dataset,
    test: &Dataset,
    sidecar: &Sidecar,
) -> Result<(EvalReport, Vec<(usize, f64, f64)>), RunError> {
    let edges = EdgeIndex::new(test.n).expect("dataset has at least 2 nodes");
    let source = relation_source(cfg);
    let bs = cfg.eval.batch_size;
    let (mut accuracy, mut permutation, mut asymmetry) = (None, None, None);
    if let RelationSource::Encoder(sym) = source {
        let (_, perm) = relation_accuracy(&predict_types(model, val, sym, bs)?, &truths(val, &edges), model.config.k)?;
        let test_pred = predict_types(model, test, sym, bs)?;
        accuracy = Some(accuracy_with(&test_pred, &truths(test, &edges), &perm)?);
        permutation = Some(perm);
        asymmetry = Some(asymmetry_rate(&test_pred, &edges));
    }
    let curve = mse_curve(model, test, source, bs, Some(&sidecar.norm))?;
    let raw = curve.raw.clone().unwrap_or_default();
    let mut mse_at = BTreeMap::new();
    let mut mse_raw_at = BTreeMap::new();
    for &h in &cfg.eval.horizons {
        if let Ok(v) = curve.at(h) {
            mse_at.insert(h, v);
            mse_raw_at.insert(h, raw[h - 1]);
        }
    }
    let rows = curve
        .normalized
        .iter()
        .zip(&raw)
        .enumerate()
        .map(|(i, (&a, &b))| (i + 1, a, b))
        .collect();
    let report = EvalReport {
        accuracy,
        permutation,
        mse_at,
        mse_raw_at,
        asymmetry_rate: asymmetry,
        correlation_baseline: Some(correlation_baseline(val, test, &edges)),
    };
    Ok((report, rows))
}

/// Evaluates `ckpt` and writes the report, the horizon CSV and one trajectory into `out`.
pub fn eval_run(ckpt: &Path, data: Option<&Path>, out: &Path) -> Result<EvalReport, RunError> {
    let ck = load_checkpoint(ckpt).map_err(|e| RunError::format(ckpt, e))?;
    let (cfg, model) = model_from_checkpoint(&ck)?;
    let dir: PathBuf = data.map_or_else(|| cfg.data.clone(), Path::to_path_buf);
    let (sidecar, [_, val, test]) = load_splits(&dir)?;
    if (test.n, test.t, test.d) != (cfg.model.n, cfg.model.t, cfg.model.d) {
        return Err(RunError::Schema {
            path: "data".into(),
            message: format!(
                "dataset has (n, t, d) = ({}, {}, {}), checkpoint expects ({}, {}, {})",
                test.n, test.t, test.d, cfg.model.n, cfg.model.t, cfg.model.d
            ),
        });
    }
    let (report, rows) = evaluate_model(&cfg, &model, &val, &test, &sidecar)?;
    fs::create_dir_all(out)?;
    fs::write(out.join(REPORT), serde_json::to_string_pretty(&report)?)?;
    let mut w = csv::Writer::from_path(out.join(HORIZON_CSV))?;
    w.write_record(["horizon", "mse", "mse_raw"])?;
    for (h, a, b) in rows {
        w.write_record([h.to_string(), format!("{a:?}"), format!("{b:?}")])?;
    }
    w.flush()?;
    let pair = trajectory_pair(&model, &test, relation_source(&cfg), &sidecar.norm)?;
    fs::write(out.join(TRAJECTORY), serde_json::to_string(&pair)?)?;
    Ok(report)
}

/// Label used for a run in the ablation table, if it is one of the seven variants.
pub fn ablation_variant(cfg: &RunConfig) -> Option<&'static str> {
    let m = &cfg.model;
    if cfg.train.mode != TrainMode::Joint {
        return None;
    }
    let sym = cfg.train.sym_mode;
    let soft = sym == SymMode::SoftSym && cfg.train.lambda > 0.0;
    Some(match (m.use_intra, m.use_inter, m.use_st, sym) {
        (true, true, true, SymMode::HardSym) => "hard Sym",
        (true, true, true, _) if soft => "full",
        (true, true, true, _) => "w/o Sym",
        (false, false, true, _) if soft => "w/o RI",
        (false, true, true, _) if soft => "w/o intra-RI",
        (true, false, true, _) if soft => "w/o inter-RI",
        (true, true, false, _) if soft => "w/o ST",
        _ => return None,
    })
}
