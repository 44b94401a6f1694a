//! Flat `key = value` experiment configuration.
//!
//! Keys are dotted (`optim.lr`). Lines starting with `#` are comments.
//! `task.<id>`, `weights.<id>` and `override.<arm>.<key>` are open families;
//! every other key must appear in [`KEYS`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use crate::analysis::LossAxis;
use crate::data::SyntheticImages;
use crate::diagnostics::{CovarianceConfig, FimConfig, SharpnessConfig};
use crate::error::{Error, Result};
use crate::layers::Activation;
use crate::optim::{AggregatorConfig, Method};

/// Every fixed key with its default (`""` means unset) and a one-line description.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("experiment.name", "experiment", "label written into every log"),
    ("experiment.out", "out", "output directory"),
    ("data.source", "synthetic", "synthetic or idx"),
    ("data.images", "", "IDX image file (data.source = idx)"),
    ("data.labels", "", "IDX label file (data.source = idx)"),
    ("data.seed", "2023", "seed for data generation, splits and label noise"),
    ("data.parts", "2", "disjoint parts the pool is cut into"),
    ("data.train_per_task", "4000", "training samples per part"),
    ("data.val_per_task", "1000", "validation samples per part"),
    ("data.test_per_task", "1000", "test samples per part"),
    ("data.synthetic.side", "12", "image side length"),
    ("data.synthetic.classes", "10", "number of classes"),
    ("data.synthetic.styles", "4", "prototype variants per class"),
    ("data.synthetic.noise", "0.25", "pixel noise standard deviation"),
    ("data.synthetic.shift", "1", "maximum translation in pixels"),
    ("data.synthetic.blend", "0.35", "maximum blend weight of a distractor prototype"),
    ("run.tasks", "", "comma-separated task ids to train (default: all declared)"),
    ("run.seeds", "3", "number of seeds"),
    ("run.seed_base", "0", "first seed"),
    ("model.hidden", "256,256", "encoder hidden widths"),
    ("model.activation", "relu", "relu, tanh or identity"),
    ("optim.method", "umtg", "umtg, pcgrad, mgda or gradnorm"),
    ("optim.scale_c", "1", "scaling factor C of the uniform gradient"),
    ("optim.lr", "1e-3", "Adam learning rate"),
    ("optim.batch", "64", "batch size per task"),
    ("optim.epochs", "60", "training epochs"),
    ("optim.beta1", "0.9", "Adam beta1"),
    ("optim.beta2", "0.999", "Adam beta2"),
    ("optim.eps", "1e-8", "Adam epsilon"),
    ("gradnorm.alpha", "1.5", "GradNorm asymmetry"),
    ("gradnorm.lr", "", "GradNorm weight learning rate (default: optim.lr)"),
    ("sharpness.rho", "1e-3", "relative box radius"),
    ("sharpness.batch", "128", "probe batch size"),
    ("sharpness.truncate", "2048", "probe pool size"),
    ("sharpness.steps", "20", "sign-ascent steps"),
    ("sharpness.step_fraction", "0.1", "ascent step as a fraction of the box"),
    ("sharpness.every", "1", "evaluate every n-th epoch (0 disables)"),
    ("cov.n", "8", "number of small batches"),
    ("cov.batch", "16", "small batch size"),
    ("cov.every", "1", "evaluate every n-th epoch (0 disables)"),
    ("fim.batch", "16", "probe batch size"),
    ("fim.samples", "8", "sampled labels per input"),
    ("fim.truncate", "2048", "probe pool size"),
    ("fim.empirical_regression", "true", "allow the empirical variant on regression tasks"),
    ("fim.every", "1", "evaluate every n-th epoch (0 disables)"),
    ("sim.batches", "200", "batches averaged for gradient similarity"),
    ("sim.every", "1", "evaluate every n-th epoch (0 disables)"),
    ("analysis.loss_axis", "task", "task (per-task loss) or total (summed loss)"),
    ("analysis.bins", "20", "number of geometric loss bins"),
    ("analysis.early", "2-5", "early-phase bin range"),
    ("analysis.late", "18-20", "end-of-training bin range"),
    ("fashionmtl.target", "fashion1", "target task of the transfer suite"),
    ("fashionmtl.positive", "fashion2", "auxiliary task expected to help"),
    ("fashionmtl.negative", "noisyfashion", "auxiliary task expected to hurt"),
    ("conflict.target", "", "target task of the conflict sweep"),
    ("conflict.pool", "", "comma-separated auxiliary pool"),
    ("conflict.set_size", "2", "auxiliary tasks per setting"),
    ("conflict.settings", "6", "number of sampled auxiliary sets"),
    ("sweep.lr", "1e-1,5e-2,1e-2,5e-3,1e-3,5e-4,1e-4,5e-5,1e-5", "learning-rate grid"),
    ("sweep.batch", "4,16,32,64,128,256", "batch-size grid"),
    ("sweep.epochs", "", "epochs per sweep point (default: optim.epochs)"),
];

const DEFAULT_TASKS: &[(&str, &str)] =
    &[("fashion1", "part=0"), ("fashion2", "part=1"), ("noisyfashion", "part=1 permute")];

fn known(key: &str) -> bool {
    KEYS.iter().any(|(k, _, _)| *k == key)
}

fn family(key: &str) -> Option<(&str, &str)> {
    for prefix in ["task.", "weights.", "override."] {
        if let Some(rest) = key.strip_prefix(prefix) {
            return Some((&prefix[..prefix.len() - 1], rest));
        }
    }
    None
}

fn check_key(key: &str, line: usize) -> Result<()> {
    let bad = |m: String| Err(Error::Config { line, message: m });
    match family(key) {
        Some((_, "")) => bad(format!("`{key}` needs a name after the dot")),
        Some(("override", rest)) => match rest.split_once('.') {
            Some((_, inner)) if known(inner) => Ok(()),
            _ => bad(format!("`{key}` must be override.<arm>.<known key>")),
        },
        Some(_) => Ok(()),
        None if known(key) => Ok(()),
        None => bad(format!("unknown key `{key}`")),
    }
}

/// Raw validated entries.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Config {
    entries: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = i + 1;
            let s = raw.trim();
            if s.is_empty() || s.starts_with('#') {
                continue;
            }
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| Error::Config { line, message: format!("expected `key = value`, got `{s}`") })?;
            let (k, v) = (k.trim(), v.trim());
            check_key(k, line)?;
            if entries.insert(k.to_string(), v.to_string()).is_some() {
                return Err(Error::Config { line, message: format!("duplicate key `{k}`") });
            }
        }
        Ok(Self { entries })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&fs::read_to_string(path)?)
    }

    pub fn set(&mut self, key: &str, value: impl Into<String>) -> Result<()> {
        check_key(key, 0)?;
        self.entries.insert(key.to_string(), value.into());
        Ok(())
    }

    pub fn remove(&mut self, key: &str) {
        self.entries.remove(key);
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.entries.get(key).map(String::as_str)
    }

    pub(crate) fn value(&self, key: &str) -> &str {
        self.get(key).unwrap_or_else(|| KEYS.iter().find(|(k, _, _)| *k == key).map(|(_, d, _)| *d).unwrap_or(""))
    }

    /// Declared tasks in key order, or the built-in three-task preset.
    pub fn tasks(&self) -> Vec<(String, String)> {
        let declared: Vec<(String, String)> = self
            .entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix("task.").map(|id| (id.to_string(), v.clone())))
            .collect();
        if declared.is_empty() {
            DEFAULT_TASKS.iter().map(|(a, b)| (a.to_string(), b.to_string())).collect()
        } else {
            declared
        }
    }

    /// The config seen by one arm: `override.<arm>.*` applied, overrides dropped.
    pub fn for_arm(&self, arm: &str) -> Config {
        let prefix = format!("override.{arm}.");
        let mut out = Config::default();
        for (k, v) in &self.entries {
            if !k.starts_with("override.") {
                out.entries.insert(k.clone(), v.clone());
            }
        }
        for (k, v) in &self.entries {
            if let Some(inner) = k.strip_prefix(&prefix) {
                out.entries.insert(inner.to_string(), v.clone());
            }
        }
        out
    }

    /// Every fixed key with its effective value, then the tasks and weights.
    pub fn echo(&self) -> Vec<(String, String)> {
        let mut out: Vec<(String, String)> = KEYS.iter().map(|(k, _, _)| (k.to_string(), self.value(k).to_string())).collect();
        for (id, recipe) in self.tasks() {
            out.push((format!("task.{id}"), recipe));
        }
        for (k, v) in &self.entries {
            if k.starts_with("weights.") || k.starts_with("override.") {
                out.push((k.clone(), v.clone()));
            }
        }
        out
    }

    fn parse_value<T: std::str::FromStr>(&self, key: &str) -> Result<T>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.value(key);
        v.parse().map_err(|e| Error::Config { line: 0, message: format!("`{key} = {v}`: {e}") })
    }

    fn list<T: std::str::FromStr>(&self, key: &str) -> Result<Vec<T>>
    where
        T::Err: std::fmt::Display,
    {
        let v = self.value(key);
        v.split(',')
            .map(str::trim)
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|e| Error::Config { line: 0, message: format!("`{key}`: `{s}`: {e}") }))
            .collect()
    }

    fn range(&self, key: &str) -> Result<(usize, usize)> {
        let v = self.value(key);
        let bad = || Error::Config { line: 0, message: format!("`{key} = {v}` must look like `2-5`") };
        let (a, b) = v.split_once('-').ok_or_else(bad)?;
        Ok((a.trim().parse().map_err(|_| bad())?, b.trim().parse().map_err(|_| bad())?))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic(SyntheticImages),
    Idx { images: PathBuf, labels: PathBuf },
}

#[derive(Debug, Clone, PartialEq)]
pub struct DataConfig {
    pub source: DataSource,
    pub seed: u64,
    pub parts: usize,
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

/// How one task is cut from the data pool.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskRecipe {
    pub id: String,
    pub part: usize,
    pub permute: bool,
    pub corrupt: Option<f64>,
    pub classes: Option<Vec<usize>>,
}

impl TaskRecipe {
    pub fn parse(id: &str, text: &str) -> Result<Self> {
        let bad = |m: String| Error::Config { line: 0, message: format!("task.{id}: {m}") };
        let mut r = TaskRecipe { id: id.to_string(), part: 0, permute: false, corrupt: None, classes: None };
        let mut has_part = false;
        for tok in text.split_whitespace() {
            match tok.split_once('=') {
                Some(("part", v)) => {
                    r.part = v.parse().map_err(|_| bad(format!("bad part `{v}`")))?;
                    has_part = true;
                }
                Some(("corrupt", v)) => {
                    let f: f64 = v.parse().map_err(|_| bad(format!("bad fraction `{v}`")))?;
                    if !(0.0..=1.0).contains(&f) {
                        return Err(bad(format!("corrupt fraction {f} outside [0, 1]")));
                    }
                    r.corrupt = Some(f);
                }
                Some(("classes", v)) => {
                    let cs: std::result::Result<Vec<usize>, _> = v.split(',').map(str::parse).collect();
                    r.classes = Some(cs.map_err(|_| bad(format!("bad class list `{v}`")))?);
                }
                None if tok == "permute" => r.permute = true,
                _ => return Err(bad(format!("unknown recipe token `{tok}`"))),
            }
        }
        if !has_part {
            return Err(bad("recipe needs `part=<n>`".into()));
        }
        Ok(r)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticSchedule {
    pub sharpness: SharpnessConfig,
    pub sharpness_every: usize,
    pub cov: CovarianceConfig,
    pub cov_every: usize,
    pub fim: FimConfig,
    pub fim_every: usize,
    pub sim_batches: usize,
    pub sim_every: usize,
}

impl DiagnosticSchedule {
    pub fn due(every: usize, epoch: usize) -> bool {
        every > 0 && epoch.is_multiple_of(every)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisConfig {
    pub loss_axis: LossAxis,
    pub bins: usize,
    pub early: (usize, usize),
    pub late: (usize, usize),
}

impl AnalysisConfig {
    pub fn from_config(c: &Config) -> Result<Self> {
        let a = Self {
            loss_axis: c.parse_value("analysis.loss_axis")?,
            bins: c.parse_value("analysis.bins")?,
            early: c.range("analysis.early")?,
            late: c.range("analysis.late")?,
        };
        if a.bins == 0 {
            return Err(cfg_err("analysis.bins must be positive"));
        }
        Ok(a)
    }

    /// Settings echoed in a log header; absent keys take their defaults.
    pub fn from_header(header: &[(String, String)]) -> Result<Self> {
        let mut c = Config::default();
        for (k, v) in header.iter().filter(|(k, _)| k.starts_with("analysis.")) {
            c.set(k, v.as_str())?;
        }
        Self::from_config(&c)
    }
}

/// Fully typed experiment settings.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub name: String,
    pub out: PathBuf,
    pub data: DataConfig,
    pub recipes: Vec<TaskRecipe>,
    pub run_tasks: Vec<String>,
    pub seeds: Vec<u64>,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub aggregator: AggregatorConfig,
    pub lr: f64,
    pub batch: usize,
    pub epochs: usize,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub diagnostics: DiagnosticSchedule,
    pub analysis: AnalysisConfig,
    /// The resolved key/value echo written into log headers.
    pub echo: Vec<(String, String)>,
}

fn cfg_err(message: impl Into<String>) -> Error {
    Error::Config { line: 0, message: message.into() }
}

impl RunConfig {
    pub fn from_config(c: &Config) -> Result<Self> {
        let source = match c.value("data.source") {
            "synthetic" => DataSource::Synthetic(SyntheticImages {
                side: c.parse_value("data.synthetic.side")?,
                classes: c.parse_value("data.synthetic.classes")?,
                styles: c.parse_value("data.synthetic.styles")?,
                pixel_noise: c.parse_value("data.synthetic.noise")?,
                max_shift: c.parse_value("data.synthetic.shift")?,
                blend: c.parse_value("data.synthetic.blend")?,
                seed: c.parse_value("data.seed")?,
            }),
            "idx" => {
                let (i, l) = (c.value("data.images"), c.value("data.labels"));
                if i.is_empty() || l.is_empty() {
                    return Err(cfg_err("data.source = idx needs data.images and data.labels"));
                }
                DataSource::Idx { images: i.into(), labels: l.into() }
            }
            other => return Err(cfg_err(format!("unknown data.source `{other}`"))),
        };
        let data = DataConfig {
            source,
            seed: c.parse_value("data.seed")?,
            parts: c.parse_value("data.parts")?,
            train: c.parse_value("data.train_per_task")?,
            val: c.parse_value("data.val_per_task")?,
            test: c.parse_value("data.test_per_task")?,
        };
        if data.parts == 0 || data.train == 0 || data.val == 0 || data.test == 0 {
            return Err(cfg_err("data.parts and every split size must be positive"));
        }
        let recipes: Vec<TaskRecipe> =
            c.tasks().iter().map(|(id, r)| TaskRecipe::parse(id, r)).collect::<Result<_>>()?;
        if let Some(r) = recipes.iter().find(|r| r.part >= data.parts) {
            return Err(cfg_err(format!("task.{} uses part {} but data.parts = {}", r.id, r.part, data.parts)));
        }
        let mut run_tasks: Vec<String> = c.list("run.tasks")?;
        if run_tasks.is_empty() {
            run_tasks = recipes.iter().map(|r| r.id.clone()).collect();
        }
        if let Some(t) = run_tasks.iter().find(|t| !recipes.iter().any(|r| &&r.id == t)) {
            return Err(cfg_err(format!("run.tasks names undeclared task `{t}`")));
        }
        let n_seeds: usize = c.parse_value("run.seeds")?;
        if n_seeds == 0 {
            return Err(cfg_err("run.seeds must be at least 1"));
        }
        let base: u64 = c.parse_value("run.seed_base")?;
        let method: Method = c.parse_value("optim.method")?;
        let lr: f64 = c.parse_value("optim.lr")?;
        let mut weights = BTreeMap::new();
        for (k, v) in &c.entries {
            if let Some(id) = k.strip_prefix("weights.") {
                weights.insert(id.to_string(), v.parse().map_err(|_| cfg_err(format!("`{k} = {v}` is not a number")))?);
            }
        }
        let gn_lr = c.value("gradnorm.lr");
        let aggregator = AggregatorConfig {
            method,
            scale_c: c.parse_value("optim.scale_c")?,
            weights,
            gradnorm_alpha: c.parse_value("gradnorm.alpha")?,
            gradnorm_lr: if gn_lr.is_empty() { None } else { Some(c.parse_value("gradnorm.lr")?) },
        };
        aggregator.validate().map_err(|e| cfg_err(e.to_string()))?;
        let batch: usize = c.parse_value("optim.batch")?;
        if !(lr > 0.0) || batch == 0 {
            return Err(cfg_err("optim.lr and optim.batch must be positive"));
        }
        let diagnostics = DiagnosticSchedule {
            sharpness: SharpnessConfig {
                rho: c.parse_value("sharpness.rho")?,
                batch: c.parse_value("sharpness.batch")?,
                truncate: c.parse_value("sharpness.truncate")?,
                steps: c.parse_value("sharpness.steps")?,
                step_fraction: c.parse_value("sharpness.step_fraction")?,
            },
            sharpness_every: c.parse_value("sharpness.every")?,
            cov: CovarianceConfig { batches: c.parse_value("cov.n")?, batch: c.parse_value("cov.batch")? },
            cov_every: c.parse_value("cov.every")?,
            fim: FimConfig {
                batch: c.parse_value("fim.batch")?,
                samples: c.parse_value("fim.samples")?,
                truncate: c.parse_value("fim.truncate")?,
                empirical_regression: c.parse_value("fim.empirical_regression")?,
            },
            fim_every: c.parse_value("fim.every")?,
            sim_batches: c.parse_value("sim.batches")?,
            sim_every: c.parse_value("sim.every")?,
        };
        diagnostics.sharpness.validate().map_err(|e| cfg_err(e.to_string()))?;
        let analysis = AnalysisConfig::from_config(c)?;
        Ok(Self {
            name: c.value("experiment.name").to_string(),
            out: c.value("experiment.out").into(),
            data,
            recipes,
            run_tasks,
            seeds: (base..base + n_seeds as u64).collect(),
            hidden: c.list("model.hidden")?,
            activation: c.parse_value("model.activation")?,
            aggregator,
            lr,
            batch,
            epochs: c.parse_value("optim.epochs")?,
            beta1: c.parse_value("optim.beta1")?,
            beta2: c.parse_value("optim.beta2")?,
            eps: c.parse_value("optim.eps")?,
            diagnostics,
            analysis,
            echo: c.echo(),
        })
    }

    pub fn gradnorm_lr(&self) -> f64 {
        self.aggregator.gradnorm_lr.unwrap_or(self.lr)
    }
}

/// Typed view of the suite-specific keys.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteKeys {
    pub fashion_target: String,
    pub fashion_positive: String,
    pub fashion_negative: String,
    pub conflict_target: String,
    pub conflict_pool: Vec<String>,
    pub conflict_set_size: usize,
    pub conflict_settings: usize,
    pub sweep_lr: Vec<f64>,
    pub sweep_batch: Vec<usize>,
    pub sweep_epochs: Option<usize>,
}

impl SuiteKeys {
    pub fn from_config(c: &Config) -> Result<Self> {
        let se = c.value("sweep.epochs");
        Ok(Self {
            fashion_target: c.value("fashionmtl.target").into(),
            fashion_positive: c.value("fashionmtl.positive").into(),
            fashion_negative: c.value("fashionmtl.negative").into(),
            conflict_target: c.value("conflict.target").into(),
            conflict_pool: c.list("conflict.pool")?,
            conflict_set_size: c.parse_value("conflict.set_size")?,
            conflict_settings: c.parse_value("conflict.settings")?,
            sweep_lr: c.list("sweep.lr")?,
            sweep_batch: c.list("sweep.batch")?,
            sweep_epochs: if se.is_empty() { None } else { Some(c.parse_value("sweep.epochs")?) },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_parse() {
        let c = Config::parse("").unwrap();
        let r = RunConfig::from_config(&c).unwrap();
        assert_eq!(r.seeds, vec![0, 1, 2]);
        assert_eq!(r.hidden, vec![256, 256]);
        assert_eq!(r.run_tasks, vec!["fashion1", "fashion2", "noisyfashion"]);
        assert!(r.recipes[2].permute);
        assert_eq!((r.lr, r.batch, r.epochs), (1e-3, 64, 60));
        assert_eq!(r.gradnorm_lr(), 1e-3);
        assert_eq!(r.aggregator.scale_c, 1.0);
    }

    #[test]
    fn unknown_and_duplicate_keys_rejected() {
        let e = Config::parse("optim.lr = 1e-3\noptim.learning_rate = 2").unwrap_err();
        assert!(matches!(e, Error::Config { line: 2, .. }), "{e}");
        assert!(Config::parse("optim.lr = 1\noptim.lr = 2").is_err());
        assert!(Config::parse("no equals sign").is_err());
        assert!(Config::parse("override.st.bogus = 1").is_err());
        assert!(Config::parse("override.st.optim.lr = 1e-2").is_ok());
    }

    #[test]
    fn recipes_and_overrides() {
        let text = "# tasks\ntask.a = part=0 classes=0,1,2\ntask.b = part=1 corrupt=0.5\ndata.parts = 2\nrun.tasks = b\noverride.st.optim.lr = 0.01\n";
        let c = Config::parse(text).unwrap();
        let r = RunConfig::from_config(&c).unwrap();
        assert_eq!(r.recipes[0].classes, Some(vec![0, 1, 2]));
        assert_eq!(r.recipes[1].corrupt, Some(0.5));
        assert_eq!(r.run_tasks, vec!["b"]);
        assert_eq!(RunConfig::from_config(&c.for_arm("st")).unwrap().lr, 0.01);
        assert_eq!(RunConfig::from_config(&c.for_arm("mt")).unwrap().lr, 1e-3);
        assert!(TaskRecipe::parse("x", "permute").is_err());
        assert!(TaskRecipe::parse("x", "part=0 shuffle").is_err());
        let bad = Config::parse("task.a = part=3").unwrap();
        assert!(RunConfig::from_config(&bad).is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        for text in ["optim.scale_c = 0", "run.seeds = 0", "optim.method = adamw", "weights.x = -1", "gradnorm.alpha = -1"] {
            let c = Config::parse(text).unwrap();
            assert!(RunConfig::from_config(&c).is_err(), "{text}");
        }
    }
}
