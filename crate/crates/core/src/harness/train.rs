//! Seeded training runs and per-epoch instrumentation.

use std::path::{Path, PathBuf};

use crate::analysis::TrajectoryRecord;
use crate::data::{BatchPlan, LossKind, TaskData, TaskSplits};
use crate::diagnostics::{covariance_trace, fim_trace, gradient_similarity, sharpness};
use crate::error::{invalid, Result};
use crate::harness::config::{DiagnosticSchedule, RunConfig};
use crate::harness::datasets::build_tasks;
use crate::harness::runlog::{RunLog, STATUS_ABORTED, STATUS_OK};
use crate::model::{generalization, task_gradients, task_loss_full, ModelSpec, ParamState};
use crate::optim::{
    adam_step, aggregate_gradnorm, aggregate_mgda, aggregate_pcgrad, aggregate_umtg, assemble_gradient, head_scales,
    Method, OptimizerState,
};
use crate::rng::RngState;

pub fn log_path(out: &Path, run_id: &str, seed: u64) -> PathBuf {
    out.join(format!("{run_id}_seed{seed}.csv"))
}

/// The tasks `cfg.run_tasks` selects, in that order.
pub fn select<'a>(cfg: &RunConfig, all: &'a [TaskSplits]) -> Result<Vec<&'a TaskSplits>> {
    cfg.run_tasks
        .iter()
        .map(|id| all.iter().find(|t| t.task_id() == id).ok_or_else(|| invalid(format!("task `{id}` not built"))))
        .collect()
}

fn observe(
    cfg: &RunConfig,
    params: &ParamState,
    spec: &ModelSpec,
    tasks: &[&TaskSplits],
    seed: u64,
    epoch: usize,
    rng: &RngState,
) -> Result<Vec<TrajectoryRecord>> {
    let d = &cfg.diagnostics;
    let train: Vec<&TaskData> = tasks.iter().map(|t| &t.train).collect();
    let mut out = Vec::with_capacity(tasks.len());
    for t in tasks {
        let id = t.task_id();
        let fork = |name: &str| rng.fork_named(&format!("diag/{epoch}/{name}/{id}"));
        let sharp = if DiagnosticSchedule::due(d.sharpness_every, epoch) {
            Some(sharpness(params, spec, &t.train, &d.sharpness, &mut fork("sharpness"))?)
        } else {
            None
        };
        let fim_ok = t.train.loss_kind() == LossKind::SoftmaxCrossEntropy || d.fim.empirical_regression;
        let fim = if fim_ok && DiagnosticSchedule::due(d.fim_every, epoch) {
            Some(fim_trace(params, spec, &t.train, &d.fim, &mut fork("fim"))?)
        } else {
            None
        };
        let cov = if DiagnosticSchedule::due(d.cov_every, epoch) {
            Some(covariance_trace(params, spec, &t.train, &d.cov, &mut fork("cov"))?.trace)
        } else {
            None
        };
        let sim = if DiagnosticSchedule::due(d.sim_every, epoch) {
            gradient_similarity(params, spec, &t.train, &train, cfg.batch, d.sim_batches, &mut fork("sim"))?.mean
        } else {
            None
        };
        out.push(TrajectoryRecord {
            run_id: cfg.name.clone(),
            method: cfg.aggregator.method.to_string(),
            seed,
            epoch,
            task_id: id.to_string(),
            train_loss: task_loss_full(params, spec, &t.train)?,
            val_metric: generalization(params, spec, &t.val)?,
            test_metric: generalization(params, spec, &t.test)?,
            sharpness: sharp,
            fim_trace: fim,
            cov_trace: cov,
            grad_sim: sim,
        });
    }
    Ok(out)
}

/// Train one seed of `cfg` on `tasks` and return its log.
pub fn run_seed(cfg: &RunConfig, tasks: &[&TaskSplits], seed: u64) -> Result<RunLog> {
    run_seed_with_params(cfg, tasks, seed).map(|(log, _)| log)
}

/// [`run_seed`], also returning the final parameters.
pub fn run_seed_with_params(cfg: &RunConfig, tasks: &[&TaskSplits], seed: u64) -> Result<(RunLog, ParamState)> {
    if tasks.is_empty() {
        return Err(invalid("a run needs at least one task"));
    }
    let method = cfg.aggregator.method;
    let ids: Vec<&str> = tasks.iter().map(|t| t.task_id()).collect();
    let mut log = RunLog::default();
    log.set_header("version", env!("CARGO_PKG_VERSION"));
    log.set_header("run_id", cfg.name.as_str());
    log.set_header("method", method.as_str());
    log.set_header("seed", seed.to_string());
    log.set_header("tasks", ids.join(","));
    for (k, v) in &cfg.echo {
        log.set_header(k, v.as_str());
    }
    log.set_header("steps", "0");
    log.set_header("status", STATUS_OK);

    let rng = RngState::new(seed);
    let train: Vec<&TaskData> = tasks.iter().map(|t| &t.train).collect();
    let spec = ModelSpec::for_tasks(&cfg.hidden, cfg.activation, &train)?;
    let mut params = spec.init(&mut rng.fork_named("init"))?;
    let mut plans: Vec<BatchPlan> = train
        .iter()
        .map(|t| BatchPlan::new(t.len(), cfg.batch.min(t.len()), rng.fork_named(&format!("batches/{}", t.task_id()))))
        .collect::<Result<_>>()?;
    let steps_per_epoch = plans.iter().map(BatchPlan::batches_per_epoch).max().unwrap_or(0);
    log.set_header("steps_per_epoch", steps_per_epoch.to_string());
    let mut opt = OptimizerState::with_betas(params.len(), cfg.lr, cfg.beta1, cfg.beta2, cfg.eps);
    let mut pc_rng = rng.fork_named("pcgrad");
    let mut gn_weights = vec![1.0; tasks.len()];
    let mut gn_initial: Option<Vec<f64>> = None;
    let mut steps = 0usize;

    let abort = |log: &mut RunLog, why: String, steps: usize| {
        log.set_header("steps", steps.to_string());
        log.set_header("status", STATUS_ABORTED);
        log.set_header("abort_reason", why);
    };

    let first = observe(cfg, &params, &spec, tasks, seed, 0, &rng)?;
    let bad = first.iter().any(|r| !r.train_loss.is_finite());
    log.records.extend(first);
    if bad {
        abort(&mut log, "non-finite loss at initialization".into(), 0);
        return Ok((log, params));
    }
    for epoch in 1..=cfg.epochs {
        for _ in 0..steps_per_epoch {
            let batches: Vec<Vec<usize>> = plans.iter_mut().map(BatchPlan::next_indices).collect();
            let bundle = task_gradients(&params, &spec, &train, &batches)?;
            if let Some(k) = bundle.losses.iter().position(|l| !l.is_finite()) {
                abort(&mut log, format!("non-finite batch loss on `{}` at step {steps}", ids[k]), steps);
                return Ok((log, params));
            }
            let (shared, scales) = match method {
                Method::Umtg => (aggregate_umtg(&bundle, &cfg.aggregator)?, head_scales(&bundle, &cfg.aggregator)),
                Method::Pcgrad => (aggregate_pcgrad(&bundle, &mut pc_rng)?.gradient, vec![1.0; bundle.len()]),
                Method::Mgda => (aggregate_mgda(&bundle)?.gradient, vec![1.0; bundle.len()]),
                Method::Gradnorm => {
                    let init = gn_initial.get_or_insert_with(|| bundle.losses.clone());
                    let out = aggregate_gradnorm(
                        &bundle,
                        &bundle.losses,
                        init,
                        &gn_weights,
                        cfg.aggregator.gradnorm_alpha,
                        cfg.gradnorm_lr(),
                    )?;
                    gn_weights = out.weights;
                    (out.gradient, vec![1.0; bundle.len()])
                }
            };
            let full = assemble_gradient(&params, &shared, &bundle, &scales);
            if full.iter().any(|g| !g.is_finite()) {
                abort(&mut log, format!("non-finite gradient at step {steps}"), steps);
                return Ok((log, params));
            }
            adam_step(&mut params, &full, &mut opt)?;
            steps += 1;
        }
        let rows = observe(cfg, &params, &spec, tasks, seed, epoch, &rng)?;
        let bad = rows.iter().find(|r| !r.train_loss.is_finite()).map(|r| r.task_id.clone());
        log.records.extend(rows);
        if let Some(id) = bad {
            abort(&mut log, format!("non-finite loss on `{id}` at epoch {epoch}"), steps);
            return Ok((log, params));
        }
    }
    log.set_header("steps", steps.to_string());
    Ok((log, params))
}

/// Build the data, train every seed and write one log per seed under `cfg.out`.
pub fn run_experiment(cfg: &RunConfig) -> Result<Vec<PathBuf>> {
    let all = build_tasks(&cfg.data, &cfg.recipes)?;
    run_experiment_on(cfg, &all)
}

/// [`run_experiment`] on already materialized tasks.
pub fn run_experiment_on(cfg: &RunConfig, all: &[TaskSplits]) -> Result<Vec<PathBuf>> {
    let tasks = select(cfg, all)?;
    let mut paths = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        let log = run_seed(cfg, &tasks, seed)?;
        let path = log_path(&cfg.out, &cfg.name, seed);
        log.write(&path)?;
        paths.push(path);
    }
    Ok(paths)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::config::Config;

    fn tiny(extra: &str) -> RunConfig {
        let text = "data.synthetic.side = 4\ndata.train_per_task = 40\ndata.val_per_task = 10\ndata.test_per_task = 10\n\
             model.hidden = 6\noptim.batch = 8\noptim.epochs = 2\nrun.seeds = 1\n\
             sharpness.truncate = 16\nsharpness.batch = 8\nsharpness.steps = 3\nfim.truncate = 16\nfim.batch = 8\n\
             fim.samples = 2\ncov.n = 2\ncov.batch = 4\nsim.batches = 3\n";
        let mut c = Config::parse(text).unwrap();
        for (k, v) in extra.lines().filter_map(|l| l.split_once('=')) {
            c.set(k.trim(), v.trim()).unwrap();
        }
        RunConfig::from_config(&c).unwrap()
    }

    #[test]
    fn zero_epochs_logs_the_initial_snapshot() {
        let cfg = tiny("optim.epochs = 0\nrun.tasks = fashion1");
        let all = build_tasks(&cfg.data, &cfg.recipes).unwrap();
        let log = run_seed(&cfg, &select(&cfg, &all).unwrap(), 0).unwrap();
        assert_eq!(log.records.len(), 1);
        assert_eq!(log.records[0].epoch, 0);
        assert_eq!(log.header_value("steps"), Some("0"));
        assert_eq!(log.records[0].grad_sim, Some(1.0));
        assert!(log.records[0].sharpness.unwrap() >= 0.0);
    }

    #[test]
    fn every_method_runs_and_is_deterministic() {
        for m in Method::ALL {
            let cfg = tiny(&format!("optim.method = {m}\nsharpness.every = 2\ncov.every = 0"));
            let all = build_tasks(&cfg.data, &cfg.recipes).unwrap();
            let tasks = select(&cfg, &all).unwrap();
            let a = run_seed(&cfg, &tasks, 3).unwrap();
            let b = run_seed(&cfg, &tasks, 3).unwrap();
            assert_eq!(a.to_text().unwrap(), b.to_text().unwrap(), "{m}");
            assert_eq!(a.records.len(), 3 * 3);
            assert_eq!(a.header_value("steps"), Some("10"));
            assert!(a.records.iter().all(|r| r.cov_trace.is_none()));
            assert!(a.records.iter().all(|r| r.sharpness.is_some() == (r.epoch % 2 == 0)));
            assert!(!a.aborted());
        }
    }

    #[test]
    fn divergence_is_flagged() {
        let cfg = tiny("optim.lr = 1e300\nrun.tasks = fashion1\noptim.epochs = 3");
        let all = build_tasks(&cfg.data, &cfg.recipes).unwrap();
        let log = run_seed(&cfg, &select(&cfg, &all).unwrap(), 0).unwrap();
        assert!(log.aborted(), "{:?}", log.header);
        assert!(log.header_value("abort_reason").unwrap().contains("non-finite"));
    }
}
