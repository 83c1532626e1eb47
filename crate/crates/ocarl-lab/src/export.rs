//! Plot-ready CSV exports: one file per curve, seeds aggregated into mean
//! and standard error.

use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{LabError, Result};
use crate::metrics::{read_jsonl, CollectRecord, EvalRecord};

/// One aggregated point of a curve.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CurvePoint {
    pub step: u64,
    pub mean: f64,
    pub stderr: f64,
}

/// Mean and standard error of the mean; a single value has no spread.
fn aggregate(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Collapses per-seed series into one curve. Every series must cover the
/// same steps, which holds for seeds of one spec.
pub fn align_series(series: &[Vec<(u64, f64)>]) -> Result<Vec<CurvePoint>> {
    let Some(first) = series.first() else {
        return Err(LabError::argument("no series to aggregate"));
    };
    for s in series {
        if s.len() != first.len() || s.iter().zip(first).any(|(a, b)| a.0 != b.0) {
            return Err(LabError::format("seed series disagree on their step grids"));
        }
    }
    Ok((0..first.len())
        .map(|i| {
            let values: Vec<f64> = series.iter().map(|s| s[i].1).collect();
            let (mean, stderr) = aggregate(&values);
            CurvePoint { step: first[i].0, mean, stderr }
        })
        .collect())
}

pub fn write_csv(path: &Path, points: &[CurvePoint]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    }
    let mut text = String::from("step,mean,stderr\n");
    for p in points {
        text.push_str(&format!("{},{},{}\n", p.step, p.mean, p.stderr));
    }
    fs::write(path, text).map_err(|e| LabError::io(path, e))?;
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<Vec<CurvePoint>> {
    let text = fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
    let mut lines = text.lines();
    match lines.next() {
        Some("step,mean,stderr") => {}
        other => {
            return Err(LabError::format(format!("unexpected CSV header {other:?}")));
        }
    }
    let mut points = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(LabError::format(format!(
                "{}:{}: expected 3 CSV columns, found {}",
                path.display(),
                lineno + 2,
                fields.len()
            )));
        }
        let step = fields[0]
            .parse()
            .map_err(|_| LabError::format("step column must be an integer"))?;
        let mean =
            fields[1].parse().map_err(|_| LabError::format("mean column must be a float"))?;
        let stderr =
            fields[2].parse().map_err(|_| LabError::format("stderr column must be a float"))?;
        points.push(CurvePoint { step, mean, stderr });
    }
    Ok(points)
}

/// Seed directories of one experiment, sorted for stable aggregation order.
fn seed_dirs(exp_dir: &Path) -> Result<Vec<PathBuf>> {
    let mut dirs = Vec::new();
    let entries = fs::read_dir(exp_dir).map_err(|e| LabError::io(exp_dir, e))?;
    for entry in entries {
        let entry = entry.map_err(|e| LabError::io(exp_dir, e))?;
        let path = entry.path();
        if path.is_dir()
            && path.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.starts_with("seed-"))
        {
            dirs.push(path);
        }
    }
    dirs.sort();
    if dirs.is_empty() {
        return Err(LabError::argument(format!(
            "{} holds no seed-* run directories",
            exp_dir.display()
        )));
    }
    Ok(dirs)
}

/// Exports every curve an experiment directory holds: the training
/// mean-return curve plus one evaluation curve per environment. Returns the
/// paths written.
pub fn export_experiment(exp_dir: &Path, out_dir: &Path) -> Result<Vec<PathBuf>> {
    let dirs = seed_dirs(exp_dir)?;
    let mut written = Vec::new();

    let train_series: Vec<Vec<(u64, f64)>> = dirs
        .iter()
        .map(|d| {
            let records: Vec<CollectRecord> = read_jsonl(&d.join("metrics.jsonl"))?;
            Ok(records.iter().map(|r| (r.step, r.mean_return)).collect())
        })
        .collect::<Result<_>>()?;
    let path = out_dir.join("curve-train.csv");
    write_csv(&path, &align_series(&train_series)?)?;
    written.push(path);

    let eval_records: Vec<Vec<EvalRecord>> =
        dirs.iter().map(|d| read_jsonl(&d.join("evals.jsonl"))).collect::<Result<_>>()?;
    let mut env_ids: Vec<String> = eval_records
        .first()
        .map(|r| r.iter().map(|e| e.env.clone()).collect::<Vec<_>>())
        .unwrap_or_default();
    env_ids.sort();
    env_ids.dedup();
    for env in env_ids {
        let series: Vec<Vec<(u64, f64)>> = eval_records
            .iter()
            .map(|records| {
                records
                    .iter()
                    .filter(|e| e.env == env)
                    .map(|e| (e.step, e.mean_return))
                    .collect()
            })
            .collect();
        let path = out_dir.join(format!("curve-eval-{}.csv", env.to_lowercase()));
        write_csv(&path, &align_series(&series)?)?;
        written.push(path);
    }
    Ok(written)
}
