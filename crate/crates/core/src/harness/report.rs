//! Analysis over a directory of run logs: gaps at matched loss, transfer
//! tables, SMTO percentage deltas, conflict correlations and figures.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use crate::analysis::{
    bin_stats, build_bins, conflict_vs_factor, gap_at_matched_loss, percent_delta, reference_for_comparison,
    seed_curves, summarize_run, summarize_seeds, transfer_table, ConflictFit, ConflictPoint, Factor, FactorSummary,
    GapReport, LossBinning, PercentDelta, RunSummary, SeedCurve, Stat, TrajectoryRecord, TransferRow, WindowConfig,
};
use crate::error::{invalid, Result};
use crate::harness::config::AnalysisConfig;
use crate::harness::runlog::{fmt_f64, RunLog};
use crate::harness::svg::{line_chart, scatter_chart, ScatterGroup, Series};

/// All logs of an experiment directory.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogSet {
    pub logs: Vec<RunLog>,
}

impl LogSet {
    pub fn new(logs: Vec<RunLog>) -> Self {
        Self { logs }
    }

    /// Every `*.csv` directly under `dir`, in file-name order.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut paths: Vec<_> = fs::read_dir(dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "csv"))
            .collect();
        paths.sort();
        if paths.is_empty() {
            return Err(invalid(format!("no run logs in {}", dir.display())));
        }
        Ok(Self { logs: paths.iter().map(|p| RunLog::read(p)).collect::<Result<_>>()? })
    }

    fn of_run<'a>(&'a self, run: &'a str) -> impl Iterator<Item = &'a RunLog> + 'a {
        self.logs.iter().filter(move |l| l.header_value("run_id") == Some(run))
    }

    pub fn run_ids(&self) -> Vec<String> {
        let ids: BTreeSet<&str> = self.logs.iter().filter_map(|l| l.header_value("run_id")).collect();
        ids.into_iter().map(str::to_string).collect()
    }

    pub fn run_tasks(&self, run: &str) -> Vec<String> {
        self.of_run(run)
            .next()
            .and_then(|l| l.header_value("tasks"))
            .map(|t| t.split(',').map(str::to_string).collect())
            .unwrap_or_default()
    }

    pub fn method(&self, run: &str) -> String {
        self.of_run(run).next().and_then(|l| l.header_value("method")).unwrap_or("").to_string()
    }

    pub fn tasks(&self) -> Vec<String> {
        let all: BTreeSet<String> = self.run_ids().iter().flat_map(|r| self.run_tasks(r)).collect();
        all.into_iter().collect()
    }

    pub fn records(&self, run: &str, task: &str) -> Vec<TrajectoryRecord> {
        self.of_run(run).flat_map(|l| l.records.iter().filter(|r| r.task_id == task).cloned()).collect()
    }

    /// Every record of `run` (all tasks), for the total-loss axis.
    pub fn run_records(&self, run: &str) -> Vec<TrajectoryRecord> {
        self.of_run(run).flat_map(|l| l.records.iter().cloned()).collect()
    }

    pub fn runs_with_task(&self, task: &str) -> Vec<String> {
        self.run_ids().into_iter().filter(|r| self.run_tasks(r).iter().any(|t| t == task)).collect()
    }

    /// The run training `task` alone (smallest id if several).
    pub fn single_task_run(&self, task: &str) -> Option<String> {
        self.runs_with_task(task).into_iter().find(|r| self.run_tasks(r) == [task])
    }

    pub fn analysis(&self) -> Result<AnalysisConfig> {
        match self.logs.first() {
            Some(l) => AnalysisConfig::from_header(&l.header),
            None => AnalysisConfig::from_header(&[]),
        }
    }

    pub fn curves(&self, run: &str, task: &str, axis: crate::analysis::LossAxis) -> Vec<SeedCurve> {
        seed_curves(&self.run_records(run), task, axis)
    }
}

/// Binning of `task` from the reference among `runs`.
pub fn reference_binning(set: &LogSet, task: &str, runs: &[String], a: &AnalysisConfig) -> Result<(String, LossBinning)> {
    let losses: Vec<(String, Vec<f64>)> = runs
        .iter()
        .map(|r| {
            let l = set.curves(r, task, a.loss_axis).iter().flat_map(|c| c.points.iter().map(|p| p.loss)).collect();
            (r.clone(), l)
        })
        .collect();
    let cands: Vec<(&str, &[f64])> = losses.iter().map(|(r, l)| (r.as_str(), l.as_slice())).collect();
    let reference = reference_for_comparison(&cands)?.to_string();
    let own = &losses.iter().find(|(r, _)| *r == reference).expect("chosen from candidates").1;
    Ok((reference, build_bins(own, a.bins)?.with_ranges(a.early, a.late)?))
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapComparison {
    pub task_id: String,
    pub a_run: String,
    pub b_run: String,
    pub reference: String,
    pub binning: LossBinning,
    pub report: GapReport,
    /// Largest per-seed minimum loss of `b_run`.
    pub b_min_loss: f64,
}

impl GapComparison {
    /// Longest run of consecutive significant bins of the given sign whose
    /// lower edge is at least `factor` times `b_min_loss`, as `(first, length)`.
    pub fn significant_run_above(&self, positive: bool, factor: f64) -> Option<(usize, usize)> {
        let floor = factor * self.b_min_loss;
        let mut best: Option<(usize, usize)> = None;
        let mut cur: Option<(usize, usize)> = None;
        for g in &self.report.bins {
            let hit = g.significant && g.lower >= floor && g.gap.is_some_and(|d| (d > 0.0) == positive);
            cur = match (hit, cur) {
                (true, Some((s, l))) => Some((s, l + 1)),
                (true, None) => Some((g.bin, 1)),
                (false, _) => None,
            };
            if let Some(c) = cur {
                if best.is_none_or(|b| c.1 > b.1) {
                    best = Some(c);
                }
            }
        }
        best
    }
}

/// Test-metric gap `a − b` for `task` at matched loss.
pub fn compare_gaps(set: &LogSet, task: &str, a_run: &str, b_run: &str, a: &AnalysisConfig) -> Result<GapComparison> {
    let runs = [a_run.to_string(), b_run.to_string()];
    let (reference, binning) = reference_binning(set, task, &runs, a)?;
    let ca = set.curves(a_run, task, a.loss_axis);
    let cb = set.curves(b_run, task, a.loss_axis);
    if ca.is_empty() || cb.is_empty() {
        return Err(invalid(format!("`{task}` has no records in `{a_run}` or `{b_run}`")));
    }
    let b_min_loss = cb.iter().map(SeedCurve::min_loss).fold(f64::NEG_INFINITY, f64::max);
    let report = gap_at_matched_loss(&ca, &cb, &binning);
    Ok(GapComparison { task_id: task.into(), a_run: a_run.into(), b_run: b_run.into(), reference, binning, report, b_min_loss })
}

/// Per-seed summaries of `task` in `run` and their cross-seed aggregate.
pub fn factor_summary(
    set: &LogSet,
    run: &str,
    task: &str,
    binning: &LossBinning,
    window: &WindowConfig,
) -> Result<(FactorSummary, Vec<RunSummary>)> {
    let mut by_seed: BTreeMap<u64, Vec<TrajectoryRecord>> = BTreeMap::new();
    for r in set.records(run, task) {
        by_seed.entry(r.seed).or_default().push(r);
    }
    let runs: Vec<RunSummary> = by_seed.values().map(|rs| summarize_run(rs, binning, window)).collect::<Result<_>>()?;
    Ok((summarize_seeds(&runs)?, runs))
}

/// MT-vs-ST rows of `task` for every multi-task run containing it.
pub fn transfer_rows(set: &LogSet, task: &str, a: &AnalysisConfig, window: &WindowConfig) -> Result<Vec<TransferRow>> {
    let Some(st) = set.single_task_run(task) else {
        return Ok(Vec::new());
    };
    let mut rows = Vec::new();
    for mt in set.runs_with_task(task).into_iter().filter(|r| *r != st) {
        let (_, binning) = reference_binning(set, task, &[mt.clone(), st.clone()], a)?;
        let (m, _) = factor_summary(set, &mt, task, &binning, window)?;
        let (s, _) = factor_summary(set, &st, task, &binning, window)?;
        rows.extend(transfer_table(&[m], &[s]));
    }
    Ok(rows)
}

/// SMTO-vs-UMTG deltas among runs that train the same task set.
pub fn percent_deltas(set: &LogSet, a: &AnalysisConfig, window: &WindowConfig) -> Result<Vec<PercentDelta>> {
    let mut groups: BTreeMap<Vec<String>, Vec<String>> = BTreeMap::new();
    for r in set.run_ids() {
        let mut t = set.run_tasks(&r);
        t.sort();
        groups.entry(t).or_default().push(r);
    }
    let mut out = Vec::new();
    for (tasks, runs) in groups {
        let Some(base) = runs.iter().find(|r| set.method(r) == "umtg").cloned() else { continue };
        let others: Vec<&String> = runs.iter().filter(|r| set.method(r) != "umtg").collect();
        if others.is_empty() {
            continue;
        }
        for task in &tasks {
            let (_, binning) = reference_binning(set, task, &runs, a)?;
            let (u, _) = factor_summary(set, &base, task, &binning, window)?;
            for r in &others {
                let (s, _) = factor_summary(set, r, task, &binning, window)?;
                out.push(percent_delta(&s, &u));
            }
        }
    }
    Ok(out)
}

/// Mean gradient similarity of `task` over every logged checkpoint of `run`.
pub fn mean_similarity(set: &LogSet, run: &str, task: &str) -> Option<f64> {
    let v: Vec<f64> = set.records(run, task).iter().filter_map(|r| r.grad_sim).collect();
    crate::analysis::mean_std(&v).map(|s: Stat| s.mean)
}

/// One conflict point per multi-task run containing `target`.
pub fn conflict_points(set: &LogSet, target: &str, a: &AnalysisConfig, window: &WindowConfig) -> Result<Vec<ConflictPoint>> {
    let runs: Vec<String> = set.runs_with_task(target).into_iter().filter(|r| set.run_tasks(r).len() > 1).collect();
    if runs.is_empty() {
        return Ok(Vec::new());
    }
    let (_, binning) = reference_binning(set, target, &runs, a)?;
    let mut out = Vec::new();
    for r in &runs {
        let Some(similarity) = mean_similarity(set, r, target) else { continue };
        let (s, _) = factor_summary(set, r, target, &binning, window)?;
        out.push(ConflictPoint {
            label: r.clone(),
            similarity,
            factors: Factor::TABLE.iter().map(|&f| (f, s.get(f).map(|v| v.mean))).collect(),
        });
    }
    Ok(out)
}

fn opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

pub fn gaps_csv(c: &GapComparison) -> String {
    let mut s = String::from("bin,upper,lower,a_mean,a_std,a_seeds,b_mean,b_std,b_seeds,gap,significant\n");
    for g in &c.report.bins {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{},{}\n",
            g.bin,
            fmt_f64(g.upper),
            fmt_f64(g.lower),
            opt(g.a.map(|x| x.mean)),
            opt(g.a.map(|x| x.std)),
            g.a.map_or(0, |x| x.seeds),
            opt(g.b.map(|x| x.mean)),
            opt(g.b.map(|x| x.std)),
            g.b.map_or(0, |x| x.seeds),
            opt(g.gap),
            g.significant
        ));
    }
    s
}

pub fn transfer_csv(rows: &[TransferRow]) -> String {
    let mut s = String::from("task_id,mt_run,factor,mt_mean,mt_std,st_mean,st_std,delta,shade\n");
    for r in rows {
        s.push_str(&format!(
            "{},{},{},{},{},{},{},{},{}\n",
            r.task_id,
            r.mt_run,
            r.factor,
            opt(r.mt.map(|x| x.mean)),
            opt(r.mt.map(|x| x.std)),
            opt(r.st.map(|x| x.mean)),
            opt(r.st.map(|x| x.std)),
            opt(r.delta),
            r.shade.as_str()
        ));
    }
    s
}

pub fn percent_delta_csv(rows: &[PercentDelta]) -> String {
    let mut s = String::from("task_id,method,factor,percent_delta,quadrant\n");
    for r in rows {
        for &(f, v) in &r.values {
            let q = r.quadrant(f).map(|q| q.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{},{},{}\n", r.task_id, r.method, f, opt(v), q));
        }
    }
    s
}

pub fn conflict_csv(points: &[ConflictPoint], fits: &[ConflictFit]) -> String {
    let mut s = String::from("label,similarity");
    for f in Factor::TABLE {
        s.push_str(&format!(",{f}"));
    }
    s.push('\n');
    for p in points {
        s.push_str(&format!("{},{}", p.label, fmt_f64(p.similarity)));
        for f in Factor::TABLE {
            let v = p.factors.iter().find(|(g, _)| *g == f).and_then(|(_, v)| *v);
            s.push_str(&format!(",{}", opt(v)));
        }
        s.push('\n');
    }
    s.push_str("\nfactor,points,slope,intercept,r,p,note\n");
    for f in fits {
        s.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            f.factor,
            f.points.len(),
            opt(f.fit.map(|x| x.0)),
            opt(f.fit.map(|x| x.1)),
            opt(f.correlation.map(|c| c.r)),
            opt(f.correlation.map(|c| c.p)),
            f.note.as_deref().unwrap_or("").replace(',', ";")
        ));
    }
    s
}

/// Per-bin mean ± 2·std of a per-record value for each run, on the bins of `binning`.
pub fn binned_series(
    set: &LogSet,
    task: &str,
    runs: &[String],
    binning: &LossBinning,
    a: &AnalysisConfig,
    value: fn(&TrajectoryRecord) -> Option<f64>,
) -> Vec<Series> {
    runs.iter()
        .map(|r| {
            let recs: Vec<TrajectoryRecord> = set
                .run_records(r)
                .into_iter()
                .filter(|x| x.task_id != task || value(x).is_some())
                .map(|mut x| {
                    if x.task_id == task {
                        x.test_metric = value(&x).expect("filtered");
                    }
                    x
                })
                .collect();
            let curves = seed_curves(&recs, task, a.loss_axis);
            let points = bin_stats(&curves, binning)
                .iter()
                .enumerate()
                .filter_map(|(i, s)| {
                    let (hi, lo) = binning.bounds(i + 1);
                    s.map(|s| ((hi * lo).sqrt(), s.mean, 2.0 * s.std))
                })
                .collect();
            Series { label: r.clone(), points }
        })
        .collect()
}

const FACTOR_PLOTS: [(&str, &str, fn(&TrajectoryRecord) -> Option<f64>); 5] = [
    ("generalization", "test metric", |r| Some(r.test_metric)),
    ("sharpness", "sharpness", |r| r.sharpness),
    ("fim_trace", "FIM trace", |r| r.fim_trace),
    ("coherence", "covariance trace", |r| r.cov_trace),
    ("grad_sim", "gradient similarity", |r| r.grad_sim),
];

/// One SVG per factor with any data: the factor against training loss for each of `runs`.
pub fn factor_figures(set: &LogSet, task: &str, runs: &[String], a: &AnalysisConfig) -> Result<Vec<(String, String)>> {
    let (_, binning) = reference_binning(set, task, runs, a)?;
    let mut out = Vec::new();
    for (name, label, f) in FACTOR_PLOTS {
        let series = binned_series(set, task, runs, &binning, a, f);
        if series.iter().all(|s| s.points.is_empty()) {
            continue;
        }
        let svg = line_chart(&format!("{task}: {label} at matched training loss"), "training loss", label, true, &series);
        out.push((format!("{task}_{name}.svg"), svg));
    }
    Ok(out)
}

pub fn quadrant_figures(rows: &[PercentDelta]) -> Vec<(String, String)> {
    let mut out = Vec::new();
    for f in [Factor::Sharpness, Factor::FimTrace, Factor::Coherence, Factor::MinTrainLoss] {
        let mut groups: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
        for r in rows {
            if let (Some(x), Some(y)) = (r.value(f), r.value(Factor::Generalization)) {
                groups.entry(r.method.clone()).or_default().push((x, y));
            }
        }
        if groups.is_empty() {
            continue;
        }
        let groups: Vec<ScatterGroup> = groups.into_iter().map(|(label, points)| ScatterGroup { label, points }).collect();
        let svg = scatter_chart(
            &format!("%Δ {f} vs %Δ generalization"),
            &format!("%Δ {f}"),
            "%Δ generalization",
            &groups,
            None,
            true,
        );
        out.push((format!("quadrant_{f}.svg"), svg));
    }
    out
}

pub fn conflict_figures(fits: &[ConflictFit]) -> Vec<(String, String)> {
    fits.iter()
        .filter(|f| !f.points.is_empty())
        .map(|f| {
            let g = [ScatterGroup { label: "settings".into(), points: f.points.clone() }];
            let title = match f.correlation {
                Some(c) => format!("{} vs gradient similarity (r = {:.3}, p = {:.3})", f.factor, c.r, c.p),
                None => format!("{} vs gradient similarity (correlation undefined)", f.factor),
            };
            (format!("conflict_{}.svg", f.factor), scatter_chart(&title, "mean gradient similarity", f.factor.as_str(), &g, f.fit, false))
        })
        .collect()
}

/// Which sections [`analyze`] produces.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Sections {
    pub gaps: bool,
    pub table: bool,
    pub percent_delta: bool,
    pub correlate: bool,
}

impl Sections {
    pub const ALL: Sections = Sections { gaps: true, table: true, percent_delta: true, correlate: true };
}

/// Every applicable report over `set`, as `(file name, contents)` in a fixed order.
pub fn analyze(set: &LogSet, sections: Sections, target: Option<&str>) -> Result<Vec<(String, String)>> {
    let a = set.analysis()?;
    let window = WindowConfig::default();
    let mut files = Vec::new();
    let mut summary = String::from("# Analysis\n\n");
    if sections.gaps {
        summary.push_str("## Gaps at matched loss (MT − ST)\n\n");
        for task in set.tasks() {
            let Some(st) = set.single_task_run(&task) else { continue };
            for mt in set.runs_with_task(&task).into_iter().filter(|r| *r != st) {
                let c = compare_gaps(set, &task, &mt, &st, &a)?;
                let pos = c.significant_run_above(true, 1.0);
                let neg = c.significant_run_above(false, 1.0);
                summary.push_str(&format!(
                    "- {task}: {mt} vs {st} (reference {}): longest positive run {}, longest negative run {}\n",
                    c.reference,
                    run_text(pos),
                    run_text(neg)
                ));
                files.push((format!("gaps_{task}_{mt}_vs_{st}.csv"), gaps_csv(&c)));
            }
        }
        summary.push('\n');
    }
    if sections.table {
        let mut rows = Vec::new();
        for task in set.tasks() {
            rows.extend(transfer_rows(set, &task, &a, &window)?);
        }
        if !rows.is_empty() {
            summary.push_str("## Transfer table\n\n| task | MT run | factor | MT − ST | shade |\n|---|---|---|---|---|\n");
            for r in &rows {
                summary.push_str(&format!(
                    "| {} | {} | {} | {} | {} |\n",
                    r.task_id,
                    r.mt_run,
                    r.factor,
                    r.delta.map_or("n/a".into(), |d| format!("{d:.4e}")),
                    r.shade.as_str()
                ));
            }
            summary.push('\n');
            files.push(("transfer.csv".into(), transfer_csv(&rows)));
        }
    }
    if sections.percent_delta {
        let rows = percent_deltas(set, &a, &window)?;
        if !rows.is_empty() {
            summary.push_str("## Percentage change over the uniform gradient\n\n| task | method | factor | %Δ | quadrant |\n|---|---|---|---|---|\n");
            for r in &rows {
                for &(f, v) in &r.values {
                    let q = r.quadrant(f).map(|q| q.to_string()).unwrap_or_default();
                    summary.push_str(&format!(
                        "| {} | {} | {f} | {} | {q} |\n",
                        r.task_id,
                        r.method,
                        v.map_or("n/a".into(), |v| format!("{v:.2}"))
                    ));
                }
            }
            summary.push('\n');
            files.push(("percent_delta.csv".into(), percent_delta_csv(&rows)));
            files.extend(quadrant_figures(&rows));
        }
    }
    if sections.correlate {
        if let Some(t) = target {
            let points = conflict_points(set, t, &a, &window)?;
            let fits = conflict_vs_factor(&points);
            summary.push_str(&format!("## Gradient conflict ({t}, {} settings)\n\n", points.len()));
            for f in &fits {
                match (f.correlation, &f.note) {
                    (Some(c), _) => summary.push_str(&format!("- {}: r = {:.4}, p = {:.4}, n = {}\n", f.factor, c.r, c.p, c.n)),
                    (None, Some(n)) => summary.push_str(&format!("- {}: {n}\n", f.factor)),
                    (None, None) => {}
                }
            }
            summary.push('\n');
            files.push((format!("conflict_{t}.csv"), conflict_csv(&points, &fits)));
            files.extend(conflict_figures(&fits));
        }
    }
    files.insert(0, ("analysis.md".into(), summary));
    Ok(files)
}

pub fn run_text(r: Option<(usize, usize)>) -> String {
    match r {
        Some((first, len)) => format!("{len} bins from bin {first}"),
        None => "none".into(),
    }
}

pub fn write_files(dir: &Path, files: &[(String, String)]) -> Result<()> {
    fs::create_dir_all(dir)?;
    for (name, body) in files {
        fs::write(dir.join(name), body)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::runlog::RunLog;

    fn log(run: &str, method: &str, tasks: &[&str], seed: u64, curve: impl Fn(usize, &str) -> (f64, f64)) -> RunLog {
        let mut l = RunLog::default();
        l.set_header("run_id", run);
        l.set_header("method", method);
        l.set_header("tasks", tasks.join(","));
        l.set_header("analysis.bins", "4");
        l.set_header("analysis.early", "1-2");
        l.set_header("analysis.late", "3-4");
        for e in 0..=16 {
            for t in tasks {
                let (loss, acc) = curve(e, t);
                l.push(TrajectoryRecord {
                    run_id: run.into(),
                    method: method.into(),
                    seed,
                    epoch: e,
                    task_id: t.to_string(),
                    train_loss: loss,
                    val_metric: acc,
                    test_metric: acc,
                    sharpness: Some(loss),
                    fim_trace: None,
                    cov_trace: None,
                    grad_sim: Some(if tasks.len() == 1 { 1.0 } else { 0.5 + 0.01 * seed as f64 }),
                });
            }
        }
        l
    }

    fn set() -> LogSet {
        let mut logs = Vec::new();
        for s in 0..3 {
            let jitter = 1e-3 * s as f64;
            logs.push(log("st", "umtg", &["a"], s, |e, _| (2f64.powi(-(e as i32)), 0.5 + jitter)));
            logs.push(log("mt", "umtg", &["a", "b"], s, |e, _| (2f64.powi(-(e as i32)), 0.6 + jitter)));
            logs.push(log("mt_pcgrad", "pcgrad", &["a", "b"], s, |e, _| (2f64.powi(-(e as i32)), 0.66 + jitter)));
        }
        LogSet::new(logs)
    }

    #[test]
    fn gaps_tables_and_deltas() {
        let s = set();
        let a = s.analysis().unwrap();
        assert_eq!(a.bins, 4);
        assert_eq!(s.single_task_run("a").as_deref(), Some("st"));
        let c = compare_gaps(&s, "a", "mt", "st", &a).unwrap();
        assert!(c.report.bins.iter().all(|g| g.significant && (g.gap.unwrap() - 0.1).abs() < 1e-12));
        assert_eq!(c.significant_run_above(true, 1.0), Some((1, 4)));
        assert_eq!(c.significant_run_above(false, 1.0), None);
        // only bins whose lower edge is >= 2^-16 * 100 qualify
        let (first, len) = c.significant_run_above(true, 100.0).unwrap();
        assert_eq!(first, 1);
        assert!(len < 4);
        let rows = transfer_rows(&s, "a", &a, &WindowConfig::default()).unwrap();
        let gen = rows.iter().find(|r| r.mt_run == "mt" && r.factor == Factor::Generalization).unwrap();
        assert_eq!(gen.shade.as_str(), "positive");
        let pd = percent_deltas(&s, &a, &WindowConfig::default()).unwrap();
        let pa = pd.iter().find(|p| p.task_id == "a").unwrap();
        // seed means 0.661 and 0.601
        assert!((pa.value(Factor::Generalization).unwrap() - 100.0 * 0.06 / 0.601).abs() < 1e-9);
        assert_eq!(pa.value(Factor::Sharpness), Some(0.0));
    }

    #[test]
    fn analysis_is_byte_identical_on_rerun() {
        let s = set();
        let a = analyze(&s, Sections::ALL, Some("a")).unwrap();
        let b = analyze(&s, Sections::ALL, Some("a")).unwrap();
        assert_eq!(a, b);
        assert_eq!(a[0].0, "analysis.md");
        assert!(a.iter().any(|(n, _)| n == "transfer.csv"));
        assert!(a.iter().any(|(n, _)| n == "conflict_a.csv"));
        let conflict = &a.iter().find(|(n, _)| n == "conflict_a.csv").unwrap().1;
        assert!(conflict.contains("mt_pcgrad"));
    }

    #[test]
    fn single_setting_correlation_is_undefined() {
        let logs = vec![log("mt", "umtg", &["a", "b"], 0, |e, _| (2f64.powi(-(e as i32)), 0.6))];
        let s = LogSet::new(logs);
        let pts = conflict_points(&s, "a", &s.analysis().unwrap(), &WindowConfig::default()).unwrap();
        assert_eq!(pts.len(), 1);
        let fits = conflict_vs_factor(&pts);
        assert!(fits.iter().all(|f| f.correlation.is_none() && f.note.is_some()));
    }
}
