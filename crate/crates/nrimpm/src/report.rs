//! Aggregation of evaluated run directories into tables, curves and plots.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use nri_core::config::{SymMode, TrainMode};
use nri_core::eval::EvalReport;

use crate::config::{RunConfig, TABLE_HORIZONS};
use crate::evaluate::{ablation_variant, TrajectoryPair, HORIZON_CSV, REPORT, TRAJECTORY};
use crate::run::CONFIG_ECHO;
use crate::simulate::load_sidecar;
use crate::svg::trajectory_svg;
use crate::RunError;

/// Row order of the ablation table.
pub const ABLATION_ROWS: [&str; 7] = [
    "full",
    "w/o RI",
    "w/o intra-RI",
    "w/o inter-RI",
    "w/o ST",
    "w/o Sym",
    "hard Sym",
];

/// One evaluated run directory.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub name: String,
    pub dir: PathBuf,
    pub config: RunConfig,
    pub family: Option<String>,
    pub report: EvalReport,
    /// `(horizon, normalised mse)` for every horizon.
    pub curve: Vec<(usize, f64)>,
}

pub fn load_run(dir: &Path) -> Result<RunRecord, RunError> {
    let read = |name: &str| {
        let path = dir.join(name);
        fs::read_to_string(&path).map_err(|e| RunError::missing(&path, e))
    };
    let config = RunConfig::from_json(&read(CONFIG_ECHO)?)?;
    let report: EvalReport = serde_json::from_str(&read(REPORT)?).map_err(|e| RunError::Schema {
        path: format!("{REPORT}: line {}", e.line()),
        message: e.to_string(),
    })?;
    let mut curve = Vec::new();
    let path = dir.join(HORIZON_CSV);
    if path.exists() {
        let mut rdr = csv::Reader::from_path(&path)?;
        for rec in rdr.records() {
            let rec = rec?;
            if let (Some(Ok(h)), Some(Ok(v))) = (rec.get(0).map(str::parse), rec.get(1).map(str::parse)) {
                curve.push((h, v));
            }
        }
    }
    let family = load_sidecar(&config.data).ok().map(|s| s.spec.family.name().to_string());
    Ok(RunRecord {
        name: dir.file_name().map_or_else(|| dir.display().to_string(), |n| n.to_string_lossy().into_owned()),
        dir: dir.to_path_buf(),
        config,
        family,
        report,
        curve,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

fn mode_name(m: TrainMode) -> &'static str {
    match m {
        TrainMode::Joint => "joint",
        TrainMode::SupervisedEncoder => "supervised_encoder",
        TrainMode::TrueGraphDecoder => "true_graph_decoder",
    }
}

/// λ-sweep rows `(λ, runs, mean accuracy, mean asymmetry)` over full-architecture joint runs.
pub fn lambda_sweep(runs: &[RunRecord]) -> Vec<(f64, usize, Option<f64>, Option<f64>)> {
    let mut groups: BTreeMap<u64, (Vec<f64>, Vec<f64>, usize)> = BTreeMap::new();
    for r in runs {
        let (m, t) = (&r.config.model, &r.config.train);
        let full = m.use_intra && m.use_inter && m.use_st;
        if t.mode != TrainMode::Joint || t.sym_mode == SymMode::HardSym || !full {
            continue;
        }
        let g = groups.entry(t.effective_lambda().to_bits()).or_default();
        g.2 += 1;
        g.0.extend(r.report.accuracy);
        g.1.extend(r.report.asymmetry_rate);
    }
    let mut rows: Vec<_> = groups
        .into_iter()
        .map(|(l, (acc, asym, n))| (f64::from_bits(l), n, mean(&acc), mean(&asym)))
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0));
    rows
}

/// Ablation rows `(variant, runs, mean accuracy)` in [`ABLATION_ROWS`] order.
pub fn ablation_table(runs: &[RunRecord]) -> Vec<(&'static str, usize, Option<f64>)> {
    ABLATION_ROWS
        .iter()
        .map(|&v| {
            let acc: Vec<f64> = runs
                .iter()
                .filter(|r| ablation_variant(&r.config) == Some(v))
                .filter_map(|r| r.report.accuracy)
                .collect();
            (v, acc.len(), mean(&acc))
        })
        .collect()
}

/// Writes every report file into `out` and returns the loaded runs.
pub fn write_report(run_dirs: &[PathBuf], out: &Path) -> Result<Vec<RunRecord>, RunError> {
    let runs = run_dirs.iter().map(|d| load_run(d)).collect::<Result<Vec<_>, _>>()?;
    fs::create_dir_all(out)?;

    let mut w = csv::Writer::from_path(out.join("table1_accuracy.csv"))?;
    w.write_record(["run", "family", "n", "mode", "variant", "accuracy", "correlation_baseline"])?;
    for r in &runs {
        w.write_record([
            r.name.clone(),
            r.family.clone().unwrap_or_default(),
            r.config.model.n.to_string(),
            mode_name(r.config.train.mode).to_string(),
            ablation_variant(&r.config).unwrap_or("").to_string(),
            cell(r.report.accuracy),
            cell(r.report.correlation_baseline.as_ref().map(|c| c.test_accuracy)),
        ])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("table2_mse.csv"))?;
    let mut header = vec!["run".to_string(), "family".into(), "n".into(), "mode".into()];
    header.extend(TABLE_HORIZONS.iter().map(|h| format!("mse_{h}")));
    w.write_record(&header)?;
    for r in &runs {
        let mut row = vec![
            r.name.clone(),
            r.family.clone().unwrap_or_default(),
            r.config.model.n.to_string(),
            mode_name(r.config.train.mode).to_string(),
        ];
        row.extend(TABLE_HORIZONS.iter().map(|h| cell(r.report.mse_at.get(h).copied())));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("fig7_mse_curve.csv"))?;
    w.write_record(["run", "horizon", "mse"])?;
    for r in &runs {
        for &(h, v) in &r.curve {
            w.write_record([r.name.clone(), h.to_string(), format!("{v:?}")])?;
        }
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("fig8_lambda_sweep.csv"))?;
    w.write_record(["lambda", "runs", "accuracy", "asymmetry_rate"])?;
    for (l, n, acc, asym) in lambda_sweep(&runs) {
        w.write_record([format!("{l:?}"), n.to_string(), cell(acc), cell(asym)])?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(out.join("table3_ablation.csv"))?;
    w.write_record(["variant", "runs", "accuracy"])?;
    for (v, n, acc) in ablation_table(&runs) {
        w.write_record([v.to_string(), n.to_string(), cell(acc)])?;
    }
    w.flush()?;

    for r in &runs {
        let path = r.dir.join(TRAJECTORY);
        if let Ok(text) = fs::read_to_string(&path) {
            let pair: TrajectoryPair = serde_json::from_str(&text)?;
            fs::write(out.join(format!("trajectory_{}.svg", r.name)), trajectory_svg(&pair))?;
        }
    }
    Ok(runs)
}
