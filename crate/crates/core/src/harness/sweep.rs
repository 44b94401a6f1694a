//! Grid selection of learning rate and batch size by validation metric.

use crate::error::{invalid, Result};
use crate::harness::config::{Config, RunConfig, SuiteKeys};
use crate::harness::datasets::build_tasks;
use crate::harness::runlog::RunLog;
use crate::harness::train::{run_seed, select};

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub lr: f64,
    pub batch: usize,
    /// Mean over seeds of the best epoch's task-averaged validation metric.
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub points: Vec<SweepPoint>,
    pub best: SweepPoint,
}

/// Mean over seeds of the best per-epoch mean validation metric.
pub fn validation_score(logs: &[RunLog]) -> f64 {
    let per_seed: Vec<f64> = logs
        .iter()
        .map(|l| {
            let mut by_epoch: std::collections::BTreeMap<usize, (f64, usize)> = Default::default();
            for r in &l.records {
                let e = by_epoch.entry(r.epoch).or_default();
                e.0 += r.val_metric;
                e.1 += 1;
            }
            by_epoch.values().map(|(s, n)| s / *n as f64).fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    per_seed.iter().sum::<f64>() / per_seed.len().max(1) as f64
}

/// Train every grid point of `base` (diagnostics off) and pick the best.
/// Ties keep the earlier grid point; aborted runs score `-inf`.
pub fn run_sweep(base: &Config) -> Result<SweepResult> {
    let keys = SuiteKeys::from_config(base)?;
    if keys.sweep_lr.is_empty() || keys.sweep_batch.is_empty() {
        return Err(invalid("sweep.lr and sweep.batch must be non-empty"));
    }
    let mut c = base.clone();
    for k in ["sharpness.every", "cov.every", "fim.every", "sim.every"] {
        c.set(k, "0")?;
    }
    if let Some(e) = keys.sweep_epochs {
        c.set("optim.epochs", e.to_string())?;
    }
    let probe = RunConfig::from_config(&c)?;
    let all = build_tasks(&probe.data, &probe.recipes)?;
    let smallest = select(&probe, &all)?.iter().map(|t| t.train.len()).min().unwrap_or(0);
    let mut points = Vec::new();
    for &lr in &keys.sweep_lr {
        for &batch in keys.sweep_batch.iter().filter(|&&b| b <= smallest) {
            c.set("optim.lr", lr.to_string())?;
            c.set("optim.batch", batch.to_string())?;
            let cfg = RunConfig::from_config(&c)?;
            let tasks = select(&cfg, &all)?;
            let logs: Vec<RunLog> = cfg.seeds.iter().map(|&s| run_seed(&cfg, &tasks, s)).collect::<Result<_>>()?;
            let score = if logs.iter().any(RunLog::aborted) { f64::NEG_INFINITY } else { validation_score(&logs) };
            points.push(SweepPoint { lr, batch, score });
        }
    }
    let best = points
        .iter()
        .fold(None::<&SweepPoint>, |b, p| match b {
            Some(b) if b.score >= p.score => Some(b),
            _ => Some(p),
        })
        .cloned()
        .ok_or_else(|| invalid("no sweep batch size fits the smallest task"))?;
    Ok(SweepResult { points, best })
}

/// `base` with the selected learning rate and batch size.
pub fn apply_sweep(base: &Config, result: &SweepResult) -> Result<Config> {
    let mut c = base.clone();
    c.set("optim.lr", result.best.lr.to_string())?;
    c.set("optim.batch", result.best.batch.to_string())?;
    Ok(c)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn picks_from_the_grid() {
        let text = "data.synthetic.side = 4\ndata.train_per_task = 40\ndata.val_per_task = 10\ndata.test_per_task = 10\n\
                    model.hidden = 6\nrun.seeds = 1\nrun.tasks = fashion1\nsweep.lr = 1e-1,1e-3\nsweep.batch = 16,64\nsweep.epochs = 2\n";
        let c = Config::parse(text).unwrap();
        let r = run_sweep(&c).unwrap();
        // batch 64 exceeds the 40 training samples
        assert_eq!(r.points.len(), 2);
        assert!(r.points.iter().all(|p| p.batch == 16));
        assert!([1e-1, 1e-3].contains(&r.best.lr));
        let applied = RunConfig::from_config(&apply_sweep(&c, &r).unwrap()).unwrap();
        assert_eq!((applied.lr, applied.batch), (r.best.lr, 16));
        assert_eq!(applied.epochs, 60);
    }
}
