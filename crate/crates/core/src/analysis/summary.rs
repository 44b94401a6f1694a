use super::bins::{LossBinning, LOSS_FLOOR};
use super::compare::Factor;
use super::record::TrajectoryRecord;
use super::stats::{mean_std, Stat};
use crate::error::{invalid, Result};

/// Window sizes for the per-run aggregates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WindowConfig {
    /// Checkpoints with the best validation metric averaged for generalization.
    pub top_validation: usize,
    /// Last late-bin checkpoints averaged for sharpness and coherence.
    pub late_window: usize,
    /// Largest early-bin FIM values averaged for the explosion.
    pub fim_window: usize,
    /// Windows thinner than this are flagged.
    pub min_checkpoints: usize,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self { top_validation: 10, late_window: 20, fim_window: 20, min_checkpoints: 5 }
    }
}

/// Aggregates of one task along one (run, seed) trajectory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub run_id: String,
    pub method: String,
    pub seed: u64,
    pub task_id: String,
    pub generalization: f64,
    pub sharpness: Option<f64>,
    pub fim_explosion: Option<f64>,
    pub coherence: Option<f64>,
    pub min_train_loss: f64,
    /// Windows that shrank or came out thin.
    pub flags: Vec<String>,
}

fn window_mean(
    name: &str,
    values: Vec<f64>,
    window: usize,
    cfg: &WindowConfig,
    flags: &mut Vec<String>,
) -> Option<f64> {
    let n = values.len();
    if n < window {
        flags.push(format!("{name}: window shrank to {n} of {window} checkpoints"));
    }
    if n < cfg.min_checkpoints {
        flags.push(format!("{name}: only {n} checkpoints inside the bin range"));
    }
    mean_std(&values).map(|s| s.mean)
}

/// The four trajectory aggregates of one (run, seed, task) series.
pub fn summarize_run(records: &[TrajectoryRecord], binning: &LossBinning, cfg: &WindowConfig) -> Result<RunSummary> {
    let first = records.first().ok_or_else(|| invalid("cannot summarize an empty trajectory"))?;
    if records.iter().any(|r| r.run_id != first.run_id || r.seed != first.seed || r.task_id != first.task_id) {
        return Err(invalid("summarize_run takes the records of a single (run, seed, task)"));
    }
    let mut rows: Vec<&TrajectoryRecord> = records.iter().collect();
    rows.sort_by_key(|r| r.epoch);
    if rows.windows(2).any(|w| w[0].epoch == w[1].epoch) {
        return Err(invalid(format!("duplicate epoch in run `{}` seed {}", first.run_id, first.seed)));
    }
    let mut flags = Vec::new();

    let mut by_val = rows.clone();
    by_val.sort_by(|a, b| b.val_metric.total_cmp(&a.val_metric).then(a.epoch.cmp(&b.epoch)));
    let top: Vec<f64> = by_val.iter().take(cfg.top_validation).map(|r| r.test_metric).collect();
    if top.len() < cfg.top_validation {
        flags.push(format!("generalization: window shrank to {} of {}", top.len(), cfg.top_validation));
    }
    let generalization = mean_std(&top).map(|s| s.mean).unwrap_or(f64::NAN);

    let loss = |r: &TrajectoryRecord| r.train_loss.max(LOSS_FLOOR);
    let late = |get: fn(&TrajectoryRecord) -> Option<f64>| -> Vec<f64> {
        let v: Vec<f64> = rows.iter().filter(|r| binning.in_late(loss(r))).filter_map(|r| get(r)).collect();
        v[v.len().saturating_sub(cfg.late_window)..].to_vec()
    };
    let sharpness = window_mean("sharpness", late(|r| r.sharpness), cfg.late_window, cfg, &mut flags);
    let coherence = window_mean("coherence", late(|r| r.cov_trace), cfg.late_window, cfg, &mut flags);

    let mut early: Vec<f64> = rows.iter().filter(|r| binning.in_early(loss(r))).filter_map(|r| r.fim_trace).collect();
    early.sort_by(|a, b| b.total_cmp(a));
    early.truncate(cfg.fim_window);
    let fim_explosion = window_mean("fim", early, cfg.fim_window, cfg, &mut flags);

    Ok(RunSummary {
        run_id: first.run_id.clone(),
        method: first.method.clone(),
        seed: first.seed,
        task_id: first.task_id.clone(),
        generalization,
        sharpness,
        fim_explosion,
        coherence,
        min_train_loss: rows.iter().map(|r| r.train_loss).fold(f64::INFINITY, f64::min),
        flags,
    })
}

/// Cross-seed statistics of per-run aggregates for one task and run.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorSummary {
    pub run_id: String,
    pub method: String,
    pub task_id: String,
    pub seeds: usize,
    pub generalization: Stat,
    pub sharpness: Option<Stat>,
    pub fim_explosion: Option<Stat>,
    pub coherence: Option<Stat>,
    pub min_train_loss: Stat,
}

impl FactorSummary {
    pub fn get(&self, factor: Factor) -> Option<Stat> {
        match factor {
            Factor::Generalization => Some(self.generalization),
            Factor::Sharpness => self.sharpness,
            Factor::FimTrace => self.fim_explosion,
            Factor::Coherence => self.coherence,
            Factor::MinTrainLoss => Some(self.min_train_loss),
        }
    }
}

/// Combine the per-seed summaries of one (run, task).
pub fn summarize_seeds(runs: &[RunSummary]) -> Result<FactorSummary> {
    let first = runs.first().ok_or_else(|| invalid("no runs to summarize"))?;
    if runs.iter().any(|r| r.run_id != first.run_id || r.task_id != first.task_id) {
        return Err(invalid("summarize_seeds takes runs of a single (run, task)"));
    }
    let collect = |f: fn(&RunSummary) -> Option<f64>| -> Vec<f64> { runs.iter().filter_map(f).collect() };
    let must = |v: Vec<f64>| mean_std(&v).expect("one value per run");
    Ok(FactorSummary {
        run_id: first.run_id.clone(),
        method: first.method.clone(),
        task_id: first.task_id.clone(),
        seeds: runs.len(),
        generalization: must(collect(|r| Some(r.generalization))),
        sharpness: mean_std(&collect(|r| r.sharpness)),
        fim_explosion: mean_std(&collect(|r| r.fim_explosion)),
        coherence: mean_std(&collect(|r| r.coherence)),
        min_train_loss: must(collect(|r| Some(r.min_train_loss))),
    })
}

#[cfg(test)]
mod tests {
    use super::super::bins::build_bins;
    use super::*;

    fn rec(epoch: usize, loss: f64, val: f64, test: f64, factor: f64, fim: f64) -> TrajectoryRecord {
        TrajectoryRecord {
            run_id: "r".into(),
            method: "umtg".into(),
            seed: 0,
            epoch,
            task_id: "t".into(),
            train_loss: loss,
            val_metric: val,
            test_metric: test,
            sharpness: Some(factor),
            fim_trace: Some(fim),
            cov_trace: Some(factor),
            grad_sim: None,
        }
    }

    fn decaying(n: usize) -> Vec<f64> {
        (0..n).map(|i| 10f64.powf(-(i as f64) * 6.0 / (n - 1) as f64)).collect()
    }

    #[test]
    fn constant_trajectory() {
        let losses = decaying(100);
        let recs: Vec<_> = losses.iter().enumerate().map(|(e, &l)| rec(e, l, 0.7, 0.7, 3.0, 3.0)).collect();
        let bins = build_bins(&losses, 20).unwrap();
        let s = summarize_run(&recs, &bins, &WindowConfig::default()).unwrap();
        assert_eq!(s.generalization, 0.7);
        assert_eq!(s.sharpness, Some(3.0));
        assert_eq!(s.coherence, Some(3.0));
        assert_eq!(s.fim_explosion, Some(3.0));
        assert_eq!(s.min_train_loss, 1e-6);
    }

    #[test]
    fn fim_spike_is_recovered() {
        let losses = decaying(200);
        let bins = build_bins(&losses, 20).unwrap();
        let recs: Vec<_> = losses
            .iter()
            .enumerate()
            .map(|(e, &l)| rec(e, l, 0.5, 0.5, 0.0, if bins.in_early(l) { 9.0 } else { 0.0 }))
            .collect();
        assert!(recs.iter().filter(|r| r.fim_trace == Some(9.0)).count() >= 20);
        let s = summarize_run(&recs, &bins, &WindowConfig::default()).unwrap();
        assert_eq!(s.fim_explosion, Some(9.0));
    }

    #[test]
    fn hand_computed_fixture() {
        // 6 checkpoints, bins over [1, 1e-5] with 5 bins -> edges 1, 0.1, ..., 1e-5;
        // early = bins 2-3, late = bins 4-5 with windows of 2.
        let recs = vec![
            rec(0, 1.0, 0.10, 0.11, 5.0, 1.0),
            rec(1, 0.05, 0.30, 0.29, 4.0, 7.0),
            rec(2, 0.005, 0.50, 0.52, 3.0, 6.0),
            rec(3, 5e-4, 0.60, 0.58, 2.0, 2.0),
            rec(4, 5e-5, 0.55, 0.60, 1.0, 9.0),
            rec(5, 1e-5, 0.40, 0.41, 0.5, 8.0),
        ];
        let bins = build_bins(&[1.0, 1e-5], 5).unwrap().with_ranges((2, 3), (4, 5)).unwrap();
        let cfg = WindowConfig { top_validation: 3, late_window: 2, fim_window: 2, min_checkpoints: 1 };
        let s = summarize_run(&recs, &bins, &cfg).unwrap();
        // top-3 validation: epochs 3, 4, 2 -> tests 0.58, 0.60, 0.52
        assert!((s.generalization - (0.58 + 0.60 + 0.52) / 3.0).abs() < 1e-15);
        // late bins hold epochs 3, 4, 5; last two -> 1.0, 0.5
        assert_eq!(s.sharpness, Some(0.75));
        // early bins hold epochs 1, 2; largest two FIM values 7, 6
        assert_eq!(s.fim_explosion, Some(6.5));
        assert!(s.flags.is_empty(), "{:?}", s.flags);
    }

    #[test]
    fn short_windows_are_flagged() {
        let recs = vec![rec(0, 1.0, 0.1, 0.1, 1.0, 1.0), rec(1, 0.1, 0.2, 0.2, 1.0, 1.0)];
        let bins = build_bins(&[1.0, 0.1], 20).unwrap();
        let s = summarize_run(&recs, &bins, &WindowConfig::default()).unwrap();
        assert!(s.flags.iter().any(|f| f.starts_with("sharpness")));
        assert!(s.flags.iter().any(|f| f.starts_with("generalization")));
    }

    #[test]
    fn seed_aggregation_is_order_free() {
        let mk = |seed: u64, g: f64| RunSummary {
            run_id: "r".into(),
            method: "umtg".into(),
            seed,
            task_id: "t".into(),
            generalization: g,
            sharpness: Some(g * 2.0),
            fim_explosion: None,
            coherence: Some(1.0),
            min_train_loss: 0.1 * g,
            flags: vec![],
        };
        let a = vec![mk(0, 0.1), mk(1, 0.7), mk(2, 0.3)];
        let mut b = a.clone();
        b.reverse();
        assert_eq!(summarize_seeds(&a).unwrap(), summarize_seeds(&b).unwrap());
        assert!(summarize_seeds(&a).unwrap().fim_explosion.is_none());
    }
}
