use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use mtl_optlab::data::{write_idx, SyntheticImages};
use mtl_optlab::harness::config::KEYS;
use mtl_optlab::harness::report::{analyze, write_files, LogSet, Sections};
use mtl_optlab::harness::suites::{run_conflict_sweep, run_fashionmtl_suite, run_smto_comparison};
use mtl_optlab::harness::sweep::{apply_sweep, run_sweep};
use mtl_optlab::harness::{run_experiment, Config, RunConfig};

#[derive(Parser)]
#[command(name = "mtl-optlab", version, about = "Multi-task optimization laboratory")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Overrides {
    /// Number of seeds.
    #[arg(long)]
    seeds: Option<usize>,
    /// Aggregator: umtg, pcgrad, mgda or gradnorm.
    #[arg(long)]
    method: Option<String>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scaling factor C of the uniform gradient.
    #[arg(long)]
    scale_c: Option<f64>,
    #[arg(long)]
    gradnorm_alpha: Option<f64>,
    /// Select learning rate and batch size from the sweep grid first.
    #[arg(long)]
    sweep: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Suite {
    Fashionmtl,
    Smto,
    Conflict,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of one configuration and write its logs.
    Run {
        config: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// Run a packaged experiment and write logs, tables, figures and a report.
    Suite {
        suite: Suite,
        config: PathBuf,
        #[command(flatten)]
        o: Overrides,
    },
    /// Recompute reports from a directory of run logs.
    Analyze {
        log_dir: PathBuf,
        #[arg(long)]
        gaps: bool,
        #[arg(long)]
        table: bool,
        #[arg(long)]
        percent_delta: bool,
        #[arg(long)]
        correlate: bool,
        /// Target task for --correlate.
        #[arg(long)]
        target: Option<String>,
        /// Write the reports here instead of printing the summary.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write synthetic images and labels as IDX files.
    GenData {
        #[arg(long, default_value_t = 10_000)]
        count: usize,
        #[arg(long, default_value_t = 2023)]
        seed: u64,
        out: PathBuf,
    },
    /// List every configuration key with its default.
    Keys,
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

/// `sweep_on`: task list the sweep trains, when it differs from the config's.
fn load(path: &Path, o: &Overrides, sweep_on: Option<&str>) -> Result<Config> {
    let mut c = Config::load(path).with_context(|| format!("reading {}", path.display()))?;
    if let Some(s) = o.seeds {
        c.set("run.seeds", s.to_string())?;
    }
    if let Some(m) = &o.method {
        c.set("optim.method", m.as_str())?;
    }
    if let Some(p) = &o.out {
        c.set("experiment.out", p.display().to_string())?;
    }
    if let Some(v) = o.scale_c {
        c.set("optim.scale_c", v.to_string())?;
    }
    if let Some(v) = o.gradnorm_alpha {
        c.set("gradnorm.alpha", v.to_string())?;
    }
    RunConfig::from_config(&c)?;
    if o.sweep {
        let mut probe = c.clone();
        if let Some(t) = sweep_on {
            probe.set("run.tasks", t)?;
        }
        let r = run_sweep(&probe)?;
        for p in &r.points {
            eprintln!("sweep lr={} batch={} score={:.6}", p.lr, p.batch, p.score);
        }
        eprintln!("selected lr={} batch={}", r.best.lr, r.best.batch);
        c = apply_sweep(&c, &r)?;
    }
    Ok(c)
}

fn real_main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { config, o } => {
            let cfg = RunConfig::from_config(&load(&config, &o, None)?)?;
            for p in run_experiment(&cfg)? {
                println!("{}", p.display());
            }
        }
        Command::Suite { suite, config, o } => {
            // the transfer suite selects on its single-task arm
            let target = Config::load(&config)?.get("fashionmtl.target").unwrap_or("fashion1").to_string();
            let sweep_on = matches!(suite, Suite::Fashionmtl).then_some(target.as_str());
            let c = load(&config, &o, sweep_on)?;
            let report = match suite {
                Suite::Fashionmtl => run_fashionmtl_suite(&c)?.report,
                Suite::Smto => run_smto_comparison(&c)?.report,
                Suite::Conflict => run_conflict_sweep(&c)?.report,
            };
            println!("{}", report.display());
        }
        Command::Analyze { log_dir, gaps, table, percent_delta, correlate, target, out } => {
            let any = gaps || table || percent_delta || correlate;
            let sections = if any { Sections { gaps, table, percent_delta, correlate } } else { Sections::ALL };
            if correlate && target.is_none() {
                bail!("--correlate needs --target <task>");
            }
            let set = LogSet::load_dir(&log_dir)?;
            let files = analyze(&set, sections, target.as_deref())?;
            match out {
                Some(dir) => {
                    write_files(&dir, &files)?;
                    for (name, _) in &files {
                        println!("{}", dir.join(name).display());
                    }
                }
                None => print!("{}", files[0].1),
            }
        }
        Command::GenData { count, seed, out } => {
            let g = SyntheticImages { seed, ..Default::default() };
            let (images, labels) = g.to_idx(count, seed)?;
            std::fs::create_dir_all(&out)?;
            write_idx(&out.join("images-idx3-ubyte"), &images)?;
            write_idx(&out.join("labels-idx1-ubyte"), &labels)?;
            println!("{}", out.display());
        }
        Command::Keys => {
            for (k, d, help) in KEYS {
                println!("{k} = {d}    # {help}");
            }
            println!("task.<id> = part=<n> [permute] [corrupt=<fraction>] [classes=<a,b,...>]    # task recipe");
            println!("weights.<id> = 1    # task weight w_k");
            println!("override.<arm>.<key> = <value>    # per-arm override (st, mt, conflict, or a method name)");
        }
    }
    Ok(())
}
