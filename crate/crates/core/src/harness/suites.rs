//! Packaged experiments built from one base configuration.

use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::{conflict_vs_factor, ConflictFit, ConflictPoint, PercentDelta, TransferRow, WindowConfig};
use crate::data::{sample_auxiliary_sets, TaskSplits};
use crate::error::{invalid, Result};
use crate::harness::config::{Config, RunConfig, SuiteKeys};
use crate::harness::datasets::build_tasks;
use crate::harness::report::{
    compare_gaps, conflict_csv, conflict_figures, conflict_points, factor_figures, gaps_csv, percent_delta_csv,
    percent_deltas, quadrant_figures, run_text, transfer_csv, transfer_rows, write_files, GapComparison, LogSet,
};
use crate::harness::runlog::RunLog;
use crate::harness::train::{log_path, run_seed, select};
use crate::optim::Method;
use crate::rng::RngState;

/// Header keys that must agree across the arms of a controlled comparison.
fn controlled(key: &str) -> bool {
    let fixed = ["steps", "steps_per_epoch", "seed", "version", "run.seeds", "run.seed_base"];
    fixed.contains(&key) || ["optim.", "gradnorm.", "model.", "data."].iter().any(|p| key.starts_with(p))
}

/// Differences in controlled header entries between logs of the same seed,
/// ignoring `ignore`. Empty means the comparison is controlled.
pub fn controlled_mismatches(logs: &[RunLog], ignore: &[&str]) -> Vec<String> {
    let mut out = Vec::new();
    for log in logs {
        let seed = log.header_value("seed");
        let Some(first) = logs.iter().find(|l| l.header_value("seed") == seed) else { continue };
        if std::ptr::eq(first, log) {
            continue;
        }
        for (k, v) in first.header.iter().filter(|(k, _)| controlled(k) && !ignore.contains(&k.as_str())) {
            let other = log.header_value(k);
            if other != Some(v.as_str()) {
                out.push(format!(
                    "seed {}: `{k}` is {v} in {} but {} in {}",
                    seed.unwrap_or("?"),
                    first.header_value("run_id").unwrap_or("?"),
                    other.unwrap_or("<missing>"),
                    log.header_value("run_id").unwrap_or("?")
                ));
            }
        }
    }
    out
}

/// The config of one suite arm: overrides of `arm` applied, then the
/// run name and task list set.
pub fn arm_config(base: &Config, arm: &str, name: &str, tasks: &[&str], out: &Path) -> Result<RunConfig> {
    let mut c = base.for_arm(arm);
    c.set("experiment.name", name)?;
    c.set("run.tasks", tasks.join(","))?;
    c.set("experiment.out", out.display().to_string())?;
    RunConfig::from_config(&c)
}

struct TaskCache(Vec<(RunConfig, Vec<TaskSplits>)>);

impl TaskCache {
    fn get(&mut self, cfg: &RunConfig) -> Result<&[TaskSplits]> {
        let pos = self.0.iter().position(|(c, _)| c.data == cfg.data && c.recipes == cfg.recipes);
        let i = match pos {
            Some(i) => i,
            None => {
                self.0.push((cfg.clone(), build_tasks(&cfg.data, &cfg.recipes)?));
                self.0.len() - 1
            }
        };
        Ok(&self.0[i].1)
    }
}

fn run_arms(arms: &[RunConfig]) -> Result<(Vec<RunLog>, Vec<PathBuf>)> {
    let mut cache = TaskCache(Vec::new());
    let mut logs = Vec::new();
    let mut paths = Vec::new();
    for cfg in arms {
        let all = cache.get(cfg)?.to_vec();
        let tasks = select(cfg, &all)?;
        for &seed in &cfg.seeds {
            let log = run_seed(cfg, &tasks, seed)?;
            let p = log_path(&cfg.out, &cfg.name, seed);
            log.write(&p)?;
            logs.push(log);
            paths.push(p);
        }
    }
    Ok((logs, paths))
}

fn suite_dirs(base: &Config) -> Result<(PathBuf, PathBuf)> {
    let out = RunConfig::from_config(base)?.out;
    let logs = out.join("logs");
    fs::create_dir_all(&logs)?;
    Ok((out, logs))
}

fn write_bundle(out: &Path, report: &str, tables: &[(String, String)], figures: &[(String, String)]) -> Result<PathBuf> {
    write_files(&out.join("tables"), tables)?;
    write_files(&out.join("figures"), figures)?;
    let path = out.join("report.md");
    fs::write(&path, report)?;
    Ok(path)
}

fn controlled_section(mismatches: &[String]) -> String {
    if mismatches.is_empty() {
        "Controlled comparison: every arm shares optimizer, step count, C and seeds.\n\n".into()
    } else {
        let mut s = String::from("Controlled comparison VIOLATED:\n\n");
        for m in mismatches {
            s.push_str(&format!("- {m}\n"));
        }
        s.push('\n');
        s
    }
}

#[derive(Debug, Clone)]
pub struct FashionMtlOutput {
    pub logs: Vec<PathBuf>,
    pub run_logs: Vec<RunLog>,
    pub report: PathBuf,
    pub st_run: String,
    pub positive: GapComparison,
    pub negative: GapComparison,
    pub transfer: Vec<TransferRow>,
    pub mismatches: Vec<String>,
}

/// ST(target), MT(target + positive), MT(target + negative) over every seed,
/// then gaps, transfer table and factor figures.
pub fn run_fashionmtl_suite(base: &Config) -> Result<FashionMtlOutput> {
    let keys = SuiteKeys::from_config(base)?;
    let (out, logs_dir) = suite_dirs(base)?;
    let (t, p, n) = (keys.fashion_target.as_str(), keys.fashion_positive.as_str(), keys.fashion_negative.as_str());
    let st = format!("st_{t}");
    let mt_pos = format!("mt_{t}+{p}");
    let mt_neg = format!("mt_{t}+{n}");
    let arms = vec![
        arm_config(base, "st", &st, &[t], &logs_dir)?,
        arm_config(base, "mt", &mt_pos, &[t, p], &logs_dir)?,
        arm_config(base, "mt", &mt_neg, &[t, n], &logs_dir)?,
    ];
    let (run_logs, logs) = run_arms(&arms)?;
    let mismatches = controlled_mismatches(&run_logs, &[]);
    let set = LogSet::new(run_logs.clone());
    let a = arms[0].analysis.clone();
    let positive = compare_gaps(&set, t, &mt_pos, &st, &a)?;
    let negative = compare_gaps(&set, t, &mt_neg, &st, &a)?;
    let transfer = transfer_rows(&set, t, &a, &WindowConfig::default())?;
    let runs = [st.clone(), mt_pos.clone(), mt_neg.clone()];
    let figures = factor_figures(&set, t, &runs, &a)?;

    let mut r = format!("# {} transfer suite\n\n", base.value("experiment.name"));
    r.push_str(&format!(
        "Target `{t}`; positive auxiliary `{p}`; negative auxiliary `{n}`; {} seeds; {} logs.\n\n",
        arms[0].seeds.len(),
        logs.len()
    ));
    r.push_str(&controlled_section(&mismatches));
    r.push_str("## Generalization gap at matched training loss\n\n");
    for c in [&positive, &negative] {
        r.push_str(&format!(
            "- {} − {}: reference `{}`, ST minimum loss {:.3e}; longest positive run {}; longest negative run {}; \
             at ≥100× the ST minimum: positive {}, negative {}\n",
            c.a_run,
            c.b_run,
            c.reference,
            c.b_min_loss,
            run_text(c.significant_run_above(true, 1.0)),
            run_text(c.significant_run_above(false, 1.0)),
            run_text(c.significant_run_above(true, 100.0)),
            run_text(c.significant_run_above(false, 100.0)),
        ));
    }
    r.push_str("\n## Transfer table\n\n| MT run | factor | MT − ST | shade |\n|---|---|---|---|\n");
    for row in &transfer {
        r.push_str(&format!(
            "| {} | {} | {} | {} |\n",
            row.mt_run,
            row.factor,
            row.delta.map_or("n/a".into(), |d| format!("{d:.4e}")),
            row.shade.as_str()
        ));
    }
    let tables = vec![
        (format!("gaps_{mt_pos}.csv"), gaps_csv(&positive)),
        (format!("gaps_{mt_neg}.csv"), gaps_csv(&negative)),
        ("transfer.csv".to_string(), transfer_csv(&transfer)),
    ];
    let report = write_bundle(&out, &r, &tables, &figures)?;
    Ok(FashionMtlOutput { logs, run_logs, report, st_run: st, positive, negative, transfer, mismatches })
}

#[derive(Debug, Clone)]
pub struct SmtoOutput {
    pub logs: Vec<PathBuf>,
    pub run_logs: Vec<RunLog>,
    pub report: PathBuf,
    pub deltas: Vec<PercentDelta>,
    pub mismatches: Vec<String>,
}

/// Every aggregator on the base task set and seeds, compared to the uniform gradient.
pub fn run_smto_comparison(base: &Config) -> Result<SmtoOutput> {
    let (out, logs_dir) = suite_dirs(base)?;
    let probe = RunConfig::from_config(base)?;
    let tasks: Vec<&str> = probe.run_tasks.iter().map(String::as_str).collect();
    let mut arms = Vec::new();
    for m in Method::ALL {
        let mut c = base.clone();
        c.set("optim.method", m.as_str())?;
        arms.push(arm_config(&c, m.as_str(), &format!("smto_{m}"), &tasks, &logs_dir)?);
    }
    let (run_logs, logs) = run_arms(&arms)?;
    let mismatches = controlled_mismatches(&run_logs, &["optim.method"]);
    let set = LogSet::new(run_logs.clone());
    let a = probe.analysis.clone();
    let deltas = percent_deltas(&set, &a, &WindowConfig::default())?;
    let mut figures = quadrant_figures(&deltas);
    let runs: Vec<String> = arms.iter().map(|c| c.name.clone()).collect();
    for t in &tasks {
        figures.extend(factor_figures(&set, t, &runs, &a)?);
    }
    let mut r = format!("# Aggregator comparison\n\nTasks: {}; {} seeds.\n\n", tasks.join(", "), probe.seeds.len());
    r.push_str(&controlled_section(&mismatches));
    r.push_str("## Percentage change over the uniform gradient\n\n| task | method | factor | %Δ | quadrant |\n|---|---|---|---|---|\n");
    for d in &deltas {
        for &(f, v) in &d.values {
            let q = d.quadrant(f).map(|q| q.to_string()).unwrap_or_default();
            r.push_str(&format!(
                "| {} | {} | {f} | {} | {q} |\n",
                d.task_id,
                d.method,
                v.map_or("n/a".into(), |v| format!("{v:.2}"))
            ));
        }
    }
    let tables = vec![("percent_delta.csv".to_string(), percent_delta_csv(&deltas))];
    let report = write_bundle(&out, &r, &tables, &figures)?;
    Ok(SmtoOutput { logs, run_logs, report, deltas, mismatches })
}

#[derive(Debug, Clone)]
pub struct ConflictOutput {
    pub logs: Vec<PathBuf>,
    pub report: PathBuf,
    pub points: Vec<ConflictPoint>,
    pub fits: Vec<ConflictFit>,
}

/// Train the target against sampled auxiliary sets and relate gradient
/// similarity to each factor.
pub fn run_conflict_sweep(base: &Config) -> Result<ConflictOutput> {
    let keys = SuiteKeys::from_config(base)?;
    let (out, logs_dir) = suite_dirs(base)?;
    let probe = RunConfig::from_config(base)?;
    if probe.diagnostics.sim_every == 0 {
        return Err(invalid("the conflict sweep needs gradient similarity (sim.every > 0)"));
    }
    let target = keys.conflict_target.as_str();
    if target.is_empty() || keys.conflict_pool.is_empty() {
        return Err(invalid("the conflict sweep needs conflict.target and conflict.pool"));
    }
    let all = build_tasks(&probe.data, &probe.recipes)?;
    let find = |id: &str| {
        all.iter().find(|t| t.task_id() == id).ok_or_else(|| invalid(format!("conflict task `{id}` is not declared")))
    };
    let tgt = find(target)?;
    let pool: Vec<&TaskSplits> = keys.conflict_pool.iter().map(|id| find(id)).collect::<Result<_>>()?;
    let pool_train: Vec<_> = pool.iter().map(|t| t.train.clone()).collect();
    let rng = RngState::new(probe.data.seed).fork_named("conflict");
    let sets = sample_auxiliary_sets(&pool_train, &tgt.train, keys.conflict_set_size, keys.conflict_settings, &mut rng.clone())?;
    let mut arms = Vec::new();
    for (i, s) in sets.iter().enumerate() {
        let mut tasks = vec![target];
        tasks.extend(s.members.iter().map(|&m| keys.conflict_pool[m].as_str()));
        arms.push(arm_config(base, "conflict", &format!("conflict_{i}"), &tasks, &logs_dir)?);
    }
    let (run_logs, logs) = run_arms(&arms)?;
    let set = LogSet::new(run_logs);
    let points = conflict_points(&set, target, &probe.analysis, &WindowConfig::default())?;
    let fits = conflict_vs_factor(&points);
    let mut r = format!("# Gradient conflict sweep\n\nTarget `{target}`; {} settings of {} auxiliary tasks.\n\n", sets.len(), keys.conflict_set_size);
    r.push_str("| setting | tasks | mean similarity |\n|---|---|---|\n");
    for (p, a) in points.iter().zip(&arms) {
        r.push_str(&format!("| {} | {} | {:.4} |\n", p.label, a.run_tasks.join(", "), p.similarity));
    }
    r.push_str("\n## Correlations\n\n");
    for f in &fits {
        match (f.correlation, &f.note) {
            (Some(c), _) => r.push_str(&format!("- {}: r = {:.4}, p = {:.4}, n = {}\n", f.factor, c.r, c.p, c.n)),
            (None, Some(note)) => r.push_str(&format!("- {}: {note}\n", f.factor)),
            (None, None) => {}
        }
    }
    let tables = vec![(format!("conflict_{target}.csv"), conflict_csv(&points, &fits))];
    let report = write_bundle(&out, &r, &tables, &conflict_figures(&fits))?;
    Ok(ConflictOutput { logs, report, points, fits })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path, extra: &str) -> Config {
        let text = format!(
            "experiment.out = {}\ndata.synthetic.side = 4\ndata.train_per_task = 40\ndata.val_per_task = 10\n\
             data.test_per_task = 10\nmodel.hidden = 6\noptim.batch = 8\noptim.epochs = 2\nrun.seeds = 2\n\
             sharpness.every = 0\ncov.every = 0\nfim.every = 0\nsim.batches = 2\nanalysis.bins = 4\n\
             analysis.early = 1-2\nanalysis.late = 3-4\n{extra}",
            dir.display()
        );
        Config::parse(&text).unwrap()
    }

    #[test]
    fn fashionmtl_arithmetic_and_controls() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_fashionmtl_suite(&tiny(dir.path(), "")).unwrap();
        assert_eq!(out.logs.len(), 6);
        assert!(out.logs.iter().all(|p| p.exists()));
        assert!(out.mismatches.is_empty(), "{:?}", out.mismatches);
        assert!(out.report.exists());
        assert!(dir.path().join("figures/fashion1_generalization.svg").exists());
        let text = fs::read_to_string(&out.report).unwrap();
        assert!(text.contains("Controlled comparison: every arm"));
    }

    #[test]
    fn overrides_break_the_control_check() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_fashionmtl_suite(&tiny(dir.path(), "override.mt.optim.lr = 0.01")).unwrap();
        assert!(out.mismatches.iter().any(|m| m.contains("optim.lr")));
    }

    #[test]
    fn smto_shares_seeds() {
        let dir = tempfile::tempdir().unwrap();
        let out = run_smto_comparison(&tiny(dir.path(), "run.tasks = fashion1,fashion2")).unwrap();
        assert_eq!(out.logs.len(), 8);
        assert!(out.mismatches.is_empty(), "{:?}", out.mismatches);
        // 3 SMTOs × 2 tasks
        assert_eq!(out.deltas.len(), 6);
    }

    #[test]
    fn conflict_single_setting_and_self_copies() {
        let dir = tempfile::tempdir().unwrap();
        let extra = "task.t = part=0\ntask.copy = part=0\ntask.noise = part=1 permute\ndata.parts = 2\n\
                     conflict.target = t\nconflict.pool = copy\nconflict.set_size = 1\nconflict.settings = 1\n";
        let out = run_conflict_sweep(&tiny(dir.path(), extra)).unwrap();
        assert_eq!(out.points.len(), 1);
        assert!(out.fits.iter().all(|f| f.correlation.is_none()));
        // the copy has the same data and labels, so gradients differ only through the heads
        assert!(out.points[0].similarity > 0.5, "{}", out.points[0].similarity);
    }
}
