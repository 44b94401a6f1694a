use crate::data::{BatchTargets, TaskData};
use crate::error::Result;
use crate::model::{loss_on_batch, predict, task_loss_batch, ModelSpec, ParamState};
use crate::rng::RngState;
use crate::tensor::DenseTensor;

/// A mean loss over indexed examples as a function of a flat parameter vector.
pub trait Objective {
    /// Number of parameters.
    fn dim(&self) -> usize;
    /// Number of examples.
    fn len(&self) -> usize;
    fn is_empty(&self) -> bool {
        self.len() == 0
    }
    /// The snapshot point.
    fn point(&self) -> Vec<f64>;
    fn loss(&self, point: &[f64], batch: &[usize]) -> Result<f64>;
    fn loss_grad(&self, point: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)>;
    /// `‖∇ℓ(x_i, ŷ_i)‖²` for each example of `batch`, with `ŷ_i` drawn from the
    /// model's predictive distribution (or the true target for regression).
    fn sampled_sq_grad_norms(&self, point: &[f64], batch: &[usize], rng: &mut RngState) -> Result<Vec<f64>>;
}

/// Task `k` of a model, over its own parameters `(θ, φ_k)`.
#[derive(Debug, Clone, Copy)]
pub struct TaskObjective<'a> {
    params: &'a ParamState,
    spec: &'a ModelSpec,
    task: &'a TaskData,
    head: usize,
}

impl<'a> TaskObjective<'a> {
    pub fn new(params: &'a ParamState, spec: &'a ModelSpec, task: &'a TaskData) -> Result<Self> {
        let head = spec.head_index(task.task_id())?;
        Ok(Self { params, spec, task, head })
    }

    fn at(&self, point: &[f64]) -> Result<ParamState> {
        let mut p = self.params.clone();
        p.set_task_flat(self.head, point)?;
        Ok(p)
    }
}

fn softmax_rows(logits: &DenseTensor) -> Vec<Vec<f64>> {
    let (m, c) = logits.dims2();
    (0..m)
        .map(|r| {
            let row = &logits.data()[r * c..(r + 1) * c];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let e: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
            let s: f64 = e.iter().sum();
            e.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

impl Objective for TaskObjective<'_> {
    fn dim(&self) -> usize {
        self.params.shared_len() + self.params.head_len(self.head)
    }

    fn len(&self) -> usize {
        self.task.len()
    }

    fn point(&self) -> Vec<f64> {
        self.params.task_flat(self.head)
    }

    fn loss(&self, point: &[f64], batch: &[usize]) -> Result<f64> {
        Ok(task_loss_batch(&self.at(point)?, self.spec, self.task, batch)?.loss)
    }

    fn loss_grad(&self, point: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
        let bl = task_loss_batch(&self.at(point)?, self.spec, self.task, batch)?;
        Ok((bl.loss, bl.gradient()?.task_flat()))
    }

    fn sampled_sq_grad_norms(&self, point: &[f64], batch: &[usize], rng: &mut RngState) -> Result<Vec<f64>> {
        let p = self.at(point)?;
        let (x, y) = self.task.gather(batch);
        let targets = match y {
            BatchTargets::Classes(_) => {
                let probs = softmax_rows(&predict(&p, self.spec, self.head, &x)?);
                BatchTargets::Classes(probs.iter().map(|row| rng.categorical(row)).collect())
            }
            real => real,
        };
        loss_on_batch(&p, self.spec, self.head, x, &targets)?.per_example_sq_grad_norms()
    }
}

#[cfg(test)]
pub(crate) mod fixtures {
    use super::*;
    use crate::data::Targets;
    use crate::layers::Activation;

    /// `ℓ_i(p) = ½‖p − c_i‖²`.
    pub struct Quadratic {
        pub centers: Vec<Vec<f64>>,
        pub at: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn dim(&self) -> usize {
            self.at.len()
        }
        fn len(&self) -> usize {
            self.centers.len()
        }
        fn point(&self) -> Vec<f64> {
            self.at.clone()
        }
        fn loss(&self, p: &[f64], batch: &[usize]) -> Result<f64> {
            Ok(self.loss_grad(p, batch)?.0)
        }
        fn loss_grad(&self, p: &[f64], batch: &[usize]) -> Result<(f64, Vec<f64>)> {
            let m = batch.len() as f64;
            let mut g = vec![0.0; p.len()];
            let mut l = 0.0;
            for &i in batch {
                for (j, gj) in g.iter_mut().enumerate() {
                    let d = p[j] - self.centers[i][j];
                    l += 0.5 * d * d / m;
                    *gj += d / m;
                }
            }
            Ok((l, g))
        }
        fn sampled_sq_grad_norms(&self, p: &[f64], batch: &[usize], _: &mut RngState) -> Result<Vec<f64>> {
            Ok(batch
                .iter()
                .map(|&i| p.iter().zip(&self.centers[i]).map(|(a, c)| (a - c) * (a - c)).sum())
                .collect())
        }
    }

    pub fn toy_task(n: usize, d: usize, classes: usize, seed: u64) -> TaskData {
        let mut r = RngState::new(seed);
        let x = (0..n * d).map(|_| r.normal()).collect();
        let labels = (0..n).map(|_| r.below(classes)).collect();
        TaskData::new("toy", DenseTensor::matrix(n, d, x).unwrap(), Targets::Classes { labels, num_classes: classes })
            .unwrap()
    }

    pub fn toy_model(task: &TaskData, hidden: &[usize], seed: u64) -> (ModelSpec, ParamState) {
        let spec = ModelSpec::for_tasks(hidden, Activation::Relu, &[task]).unwrap();
        let p = spec.init(&mut RngState::new(seed)).unwrap();
        (spec, p)
    }
}
