//! Dataset generation and loading of dataset directories.

use std::fs;
use std::path::Path;

use nri_core::data::{Dataset, NormStats};
use nri_core::sim::{assemble, generate_sample, Split, SplitCounts, SystemSpec};

use crate::format::{load_dataset, save_dataset, Sidecar};
use crate::RunError;

pub const SIDECAR: &str = "dataset.json";

pub fn split_file(split: Split) -> String {
    format!("{}.nrid", split.name())
}

/// Simulates one split on `threads` workers; the result does not depend on
/// the worker count because every sample has its own RNG stream.
pub fn generate_split_parallel(spec: &SystemSpec, split: Split, count: usize, threads: usize) -> Dataset {
    let threads = threads.clamp(1, count.max(1));
    let chunk = count.div_ceil(threads);
    let samples = std::thread::scope(|s| {
        let handles: Vec<_> = (0..threads)
            .map(|w| {
                s.spawn(move || {
                    (w * chunk..((w + 1) * chunk).min(count))
                        .map(|i| generate_sample(spec, split, i))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        handles.into_iter().flat_map(|h| h.join().expect("simulation worker panicked")).collect()
    });
    assemble(spec, samples)
}

/// Writes the three splits and the sidecar into `out`.
pub fn simulate_to_dir(spec: &SystemSpec, counts: SplitCounts, out: &Path, threads: usize) -> Result<Sidecar, RunError> {
    spec.validate()?;
    if Split::ALL.iter().any(|&s| counts.get(s) == 0) {
        return Err(nri_core::sim::SimError::EmptySplit.into());
    }
    fs::create_dir_all(out)?;
    let mut norm = None;
    for split in Split::ALL {
        let data = generate_split_parallel(spec, split, counts.get(split), threads);
        if split == Split::Train {
            norm = Some(NormStats::fit(&data));
        }
        let path = out.join(split_file(split));
        save_dataset(&path, &data).map_err(|e| RunError::format(&path, e))?;
    }
    let sidecar = Sidecar {
        spec: spec.clone(),
        counts,
        norm: norm.expect("train split generated first"),
    };
    fs::write(out.join(SIDECAR), serde_json::to_string_pretty(&sidecar)?)?;
    Ok(sidecar)
}

pub fn load_sidecar(dir: &Path) -> Result<Sidecar, RunError> {
    let path = dir.join(SIDECAR);
    let text = fs::read_to_string(&path).map_err(|e| RunError::missing(&path, e))?;
    let de = &mut serde_json::Deserializer::from_str(&text);
    serde_path_to_error::deserialize(de).map_err(|e| RunError::Schema {
        path: format!("{SIDECAR}: {}", e.path()),
        message: e.inner().to_string(),
    })
}

/// Loads one split, normalised with the sidecar's training statistics.
pub fn load_split(dir: &Path, split: Split, norm: &NormStats) -> Result<Dataset, RunError> {
    let path = dir.join(split_file(split));
    let mut data = load_dataset(&path).map_err(|e| RunError::format(&path, e))?;
    if norm.min.len() != data.d {
        return Err(RunError::Schema {
            path: format!("{SIDECAR}: norm"),
            message: format!("{} features in the statistics, {} in the data", norm.min.len(), data.d),
        });
    }
    norm.normalize(&mut data);
    Ok(data)
}

/// Normalised train, validation and test splits.
pub fn load_splits(dir: &Path) -> Result<(Sidecar, [Dataset; 3]), RunError> {
    let sidecar = load_sidecar(dir)?;
    let [a, b, c] = Split::ALL.map(|s| load_split(dir, s, &sidecar.norm));
    Ok((sidecar, [a?, b?, c?]))
}
