use std::fs;
use std::path::Path;

use mtl_optlab::analysis::Factor;
use mtl_optlab::harness::report::{analyze, LogSet, Sections};
use mtl_optlab::harness::suites::run_smto_comparison;
use mtl_optlab::harness::{build_tasks, run_experiment, run_seed, select, Config, RunConfig, RunLog};

fn tiny(dir: &Path, extra: &str) -> Config {
    let text = format!(
        "experiment.name = pipeline\nexperiment.out = {}\ndata.synthetic.side = 4\ndata.train_per_task = 48\n\
         data.val_per_task = 12\ndata.test_per_task = 12\nmodel.hidden = 6\noptim.batch = 8\noptim.epochs = 2\n\
         run.seeds = 2\nsharpness.batch = 8\nsharpness.truncate = 16\nsharpness.steps = 3\ncov.n = 2\ncov.batch = 4\n\
         fim.truncate = 16\nsim.batches = 2\nanalysis.bins = 4\nanalysis.early = 1-2\nanalysis.late = 3-4\n",
        dir.display()
    );
    let mut c = Config::parse(&text).unwrap();
    for line in extra.lines().filter(|l| !l.trim().is_empty()) {
        let (k, v) = line.split_once('=').unwrap();
        c.set(k.trim(), v.trim()).unwrap();
    }
    c
}

fn single_run(cfg: &Config, seed: u64) -> RunLog {
    let run = RunConfig::from_config(cfg).unwrap();
    let tasks = build_tasks(&run.data, &run.recipes).unwrap();
    let chosen = select(&run, &tasks).unwrap();
    run_seed(&run, &chosen, seed).unwrap()
}

#[test]
fn zero_epochs_log_only_the_initial_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let log = single_run(&tiny(dir.path(), "optim.epochs = 0\nrun.tasks = fashion1,fashion2"), 0);
    assert_eq!(log.header_value("steps"), Some("0"));
    assert_eq!(log.records.len(), 2);
    for r in &log.records {
        assert_eq!(r.epoch, 0);
        assert!(r.train_loss.is_finite() && r.sharpness.is_some() && r.cov_trace.is_some() && r.fim_trace.is_some());
    }
}

#[test]
fn noisy_labels_alone_generalize_at_chance() {
    let dir = tempfile::tempdir().unwrap();
    let extra = "run.tasks = noisyfashion\ndata.train_per_task = 300\ndata.test_per_task = 400\noptim.epochs = 30\n\
                 model.hidden = 64\ndata.synthetic.side = 8\noptim.lr = 3e-3\nsharpness.every = 0\ncov.every = 0\nfim.every = 0\nsim.every = 0\n";
    let log = single_run(&tiny(dir.path(), extra), 0);
    let first = log.records.first().unwrap();
    let last = log.records.last().unwrap();
    // the labels get memorized while test accuracy stays near 1/10
    assert!(last.train_loss < 0.5 * first.train_loss, "{} -> {}", first.train_loss, last.train_loss);
    assert!((last.test_metric - 0.1).abs() < 0.06, "test accuracy {}", last.test_metric);
}

#[test]
fn single_task_aggregators_reduce_to_the_uniform_gradient() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_smto_comparison(&tiny(dir.path(), "run.tasks = fashion1\nsim.every = 0")).unwrap();
    assert!(out.mismatches.is_empty(), "{:?}", out.mismatches);
    for d in out.deltas.iter().filter(|d| d.method == "pcgrad" || d.method == "mgda") {
        for f in [Factor::Generalization, Factor::Sharpness, Factor::FimTrace] {
            assert_eq!(d.value(f), Some(0.0), "{} {f}", d.method);
        }
    }
    assert_eq!(out.deltas.iter().filter(|d| d.method == "pcgrad" || d.method == "mgda").count(), 2);
}

#[test]
fn logs_on_disk_reanalyze_byte_identically() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::from_config(&tiny(dir.path(), "run.tasks = fashion1,fashion2")).unwrap();
    let paths = run_experiment(&cfg).unwrap();
    assert_eq!(paths.len(), 2);
    let mut st = tiny(dir.path(), "run.tasks = fashion1");
    st.set("experiment.name", "st").unwrap();
    run_experiment(&RunConfig::from_config(&st).unwrap()).unwrap();
    let a = analyze(&LogSet::load_dir(dir.path()).unwrap(), Sections::ALL, None).unwrap();
    let b = analyze(&LogSet::load_dir(dir.path()).unwrap(), Sections::ALL, None).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().any(|(name, _)| name.ends_with(".csv")));
    for p in &paths {
        let text = fs::read_to_string(p).unwrap();
        assert_eq!(RunLog::parse(&text).unwrap().to_text().unwrap(), text);
    }
}
