use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::bins::LOSS_FLOOR;
use crate::error::invalid;

/// One logged row: a task's metrics and factors at one epoch of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub run_id: String,
    pub method: String,
    pub seed: u64,
    pub epoch: usize,
    pub task_id: String,
    pub train_loss: f64,
    pub val_metric: f64,
    pub test_metric: f64,
    pub sharpness: Option<f64>,
    pub fim_trace: Option<f64>,
    pub cov_trace: Option<f64>,
    pub grad_sim: Option<f64>,
}

/// Which training loss places a checkpoint on the loss axis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossAxis {
    /// The task's own loss `L_k`.
    #[default]
    Task,
    /// The sum of every task's loss at that epoch.
    Total,
}

impl FromStr for LossAxis {
    type Err = crate::Error;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s {
            "task" => Ok(LossAxis::Task),
            "total" => Ok(LossAxis::Total),
            _ => Err(invalid(format!("unknown loss axis `{s}` (expected task or total)"))),
        }
    }
}

impl fmt::Display for LossAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LossAxis::Task => "task",
            LossAxis::Total => "total",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub epoch: usize,
    pub loss: f64,
    pub metric: f64,
}

/// Loss/test-metric pairs of one task along one (run, seed) trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedCurve {
    pub run_id: String,
    pub seed: u64,
    pub points: Vec<CurvePoint>,
}

impl SeedCurve {
    pub fn min_loss(&self) -> f64 {
        self.points.iter().map(|p| p.loss).fold(f64::INFINITY, f64::min)
    }
}

/// Curves for `task_id`, one per (run, seed), epochs ascending, losses
/// floored at [`LOSS_FLOOR`].
pub fn seed_curves(records: &[TrajectoryRecord], task_id: &str, axis: LossAxis) -> Vec<SeedCurve> {
    let mut totals: BTreeMap<(&str, u64, usize), f64> = BTreeMap::new();
    for r in records {
        *totals.entry((&r.run_id, r.seed, r.epoch)).or_default() += r.train_loss;
    }
    let mut curves: BTreeMap<(&str, u64), Vec<CurvePoint>> = BTreeMap::new();
    for r in records.iter().filter(|r| r.task_id == task_id) {
        let loss = match axis {
            LossAxis::Task => r.train_loss,
            LossAxis::Total => totals[&(r.run_id.as_str(), r.seed, r.epoch)],
        };
        curves.entry((&r.run_id, r.seed)).or_default().push(CurvePoint {
            epoch: r.epoch,
            loss: loss.max(LOSS_FLOOR),
            metric: r.test_metric,
        });
    }
    curves
        .into_iter()
        .map(|((run, seed), mut points)| {
            points.sort_by_key(|p| p.epoch);
            SeedCurve { run_id: run.to_string(), seed, points }
        })
        .collect()
}
