//! Training inside a run directory: lock, config echo, metric log, checkpoints.
//!
//! Layout of a run directory:
//!
//! ```text
//! config.json    resolved configuration (re-running from it reproduces the run)
//! metrics.csv    epoch,split,nll,kl_prior,kl_sym,total,acc
//! last.nrim      state after the latest epoch
//! best.nrim      state with the best validation score
//! epoch_NNNN.nrim  optional periodic snapshots
//! ```

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use nri_core::model::Model;
use nri_core::params::ParamStore;
use nri_core::train::{EpochStats, Trainer};

use crate::config::RunConfig;
use crate::format::{config_hash, load_checkpoint, save_checkpoint, Checkpoint};
use crate::simulate::load_splits;
use crate::RunError;

pub const CONFIG_ECHO: &str = "config.json";
pub const METRICS: &str = "metrics.csv";
pub const LAST: &str = "last.nrim";
pub const BEST: &str = "best.nrim";
const LOCK: &str = "run.lock";
const METRICS_HEADER: [&str; 7] = ["epoch", "split", "nll", "kl_prior", "kl_sym", "total", "acc"];

/// Exclusive ownership of a run directory; released on drop.
#[derive(Debug)]
pub struct RunLock {
    path: PathBuf,
}

impl RunLock {
    pub fn acquire(dir: &Path) -> Result<Self, RunError> {
        fs::create_dir_all(dir)?;
        let path = dir.join(LOCK);
        match OpenOptions::new().write(true).create_new(true).open(&path) {
            Ok(mut f) => {
                writeln!(f, "{}", std::process::id())?;
                Ok(Self { path })
            }
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(RunError::Locked(dir.to_path_buf())),
            Err(e) => Err(e.into()),
        }
    }
}

impl Drop for RunLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

/// Copies checkpointed parameters into a freshly built model, checking names and shapes.
pub fn restore_params(model: &mut Model, saved: &ParamStore) -> Result<(), RunError> {
    let mismatch = |what: String| RunError::Schema {
        path: "checkpoint.params".into(),
        message: what,
    };
    if saved.len() != model.store.len() {
        return Err(mismatch(format!("{} tensors saved, model has {}", saved.len(), model.store.len())));
    }
    for (dst, src) in model.store.iter_mut().zip(saved.iter()) {
        if dst.name != src.name || dst.shape != src.shape {
            return Err(mismatch(format!("{} {:?} saved where {} {:?} expected", src.name, src.shape, dst.name, dst.shape)));
        }
        dst.data.clone_from(&src.data);
    }
    Ok(())
}

/// Rebuilds the model stored in a checkpoint together with its configuration.
pub fn model_from_checkpoint(ck: &Checkpoint) -> Result<(RunConfig, Model), RunError> {
    let cfg = RunConfig::from_json(&ck.config)?;
    let mut model = Model::new(cfg.model.clone(), cfg.train.seed).map_err(|e| RunError::Schema {
        path: "model".into(),
        message: e.to_string(),
    })?;
    restore_params(&mut model, &ck.params)?;
    Ok((cfg, model))
}

fn fmt_f64(v: f64) -> String {
    // Shortest representation that round-trips, so equal logs mean equal bits.
    format!("{v:?}")
}

fn metric_row(epoch: usize, split: &str, s: &EpochStats) -> [String; 7] {
    [
        epoch.to_string(),
        split.to_string(),
        fmt_f64(s.loss.nll),
        fmt_f64(s.loss.kl_prior),
        fmt_f64(s.loss.kl_sym),
        fmt_f64(s.loss.total),
        s.acc.map(fmt_f64).unwrap_or_default(),
    ]
}

/// Keeps the header and the rows of epochs `<= keep`.
fn truncate_metrics(path: &Path, keep: usize) -> Result<(), RunError> {
    let mut rows = Vec::new();
    if path.exists() {
        let mut rdr = csv::Reader::from_path(path)?;
        for rec in rdr.records() {
            let rec = rec?;
            if rec.get(0).and_then(|e| e.parse::<usize>().ok()).is_some_and(|e| e <= keep) {
                rows.push(rec);
            }
        }
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(METRICS_HEADER)?;
    for r in rows {
        w.write_record(&r)?;
    }
    w.flush()?;
    Ok(())
}

/// Outcome of a training run.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainSummary {
    pub epochs: usize,
    pub best_epoch: Option<usize>,
    pub best_score: Option<f64>,
    pub last_val: Option<EpochStats>,
}

/// Trains `config` in `out`; with `resume`, continues from `out/last.nrim` if present.
pub fn train_run(
    config: &RunConfig,
    out: &Path,
    resume: bool,
    mut progress: impl FnMut(usize, &EpochStats, &EpochStats),
) -> Result<TrainSummary, RunError> {
    let _lock = RunLock::acquire(out)?;
    let mut cfg = config.clone();
    let (_, [train, val, _]) = load_splits(&cfg.data)?;
    cfg.resolve(&train)?;
    let echo = cfg.to_json();

    let model = Model::new(cfg.model.clone(), cfg.train.seed).map_err(|e| RunError::Schema {
        path: "model".into(),
        message: e.to_string(),
    })?;
    let mut trainer = Trainer::new(model, cfg.train.clone())?;
    let mut best: Option<(f64, usize)> = None;

    let last = out.join(LAST);
    if resume && last.exists() {
        let ck = load_checkpoint(&last).map_err(|e| RunError::format(&last, e))?;
        if config_hash(&ck.config) != config_hash(&echo) {
            return Err(RunError::Schema {
                path: CONFIG_ECHO.into(),
                message: "configuration differs from the checkpoint being resumed".into(),
            });
        }
        restore_params(&mut trainer.model, &ck.params)?;
        trainer.adam = ck.adam;
        trainer.epoch = ck.epoch;
        best = ck.best;
    }
    fs::write(out.join(CONFIG_ECHO), &echo)?;
    let metrics = out.join(METRICS);
    truncate_metrics(&metrics, trainer.epoch)?;

    let mut last_val = None;
    while trainer.epoch < cfg.train.epochs {
        let tr = trainer.train_epoch(&train)?;
        let va = trainer.evaluate(&val)?;
        let epoch = trainer.epoch;
        {
            let file = OpenOptions::new().append(true).open(&metrics)?;
            let mut w = csv::Writer::from_writer(file);
            w.write_record(metric_row(epoch, "train", &tr))?;
            w.write_record(metric_row(epoch, "val", &va))?;
            w.flush()?;
        }
        let score = trainer.selection_score(&va);
        let improved = best.is_none_or(|(b, _)| score < b);
        if improved {
            best = Some((score, epoch));
        }
        let ck = Checkpoint {
            config: echo.clone(),
            epoch,
            best,
            params: trainer.model.store.clone(),
            adam: trainer.adam.clone(),
        };
        let save = |name: &str| {
            let path = out.join(name);
            save_checkpoint(&path, &ck).map_err(|e| RunError::format(&path, e))
        };
        save(LAST)?;
        if improved {
            save(BEST)?;
        }
        let every = cfg.train.checkpoint_every;
        if every > 0 && epoch % every == 0 {
            save(&format!("epoch_{epoch:04}.nrim"))?;
        }
        progress(epoch, &tr, &va);
        last_val = Some(va);
    }
    Ok(TrainSummary {
        epochs: trainer.epoch,
        best_epoch: best.map(|b| b.1),
        best_score: best.map(|b| b.0),
        last_val,
    })
}

