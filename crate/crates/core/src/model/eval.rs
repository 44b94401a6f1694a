use crate::data::{BatchTargets, LossKind, TaskData, Targets};
use crate::error::{invalid, Error, Result};
use crate::model::params::{ModelSpec, ParamState};
use crate::tape::{ComputationTape, NodeId};
use crate::tensor::DenseTensor;

/// A recorded batch loss for one task, ready for [`BatchLoss::gradient`].
#[derive(Debug, Clone)]
pub struct BatchLoss {
    pub loss: f64,
    pub tape: ComputationTape,
    pub node: NodeId,
    pub head: usize,
    shared_blocks: usize,
    head_blocks: usize,
}

/// Gradient of one task's batch loss, split into shared and head blocks.
#[derive(Debug, Clone, PartialEq)]
pub struct TaskGradient {
    pub shared: Vec<DenseTensor>,
    pub head: Vec<DenseTensor>,
}

fn flat(blocks: &[DenseTensor]) -> Vec<f64> {
    blocks.iter().flat_map(|b| b.data().iter().copied()).collect()
}

impl TaskGradient {
    pub fn shared_flat(&self) -> Vec<f64> {
        flat(&self.shared)
    }

    pub fn head_flat(&self) -> Vec<f64> {
        flat(&self.head)
    }

    /// Shared then head, matching [`ParamState::task_flat`].
    pub fn task_flat(&self) -> Vec<f64> {
        let mut v = self.shared_flat();
        v.extend(self.head_flat());
        v
    }
}

impl BatchLoss {
    pub fn gradient(&self) -> Result<TaskGradient> {
        use crate::tape::ParamKey;
        let g = self.tape.backward(self.node)?;
        let take = |k: usize| -> DenseTensor { g.get(ParamKey(k)).cloned().expect("registered block") };
        Ok(TaskGradient {
            shared: (0..self.shared_blocks).map(take).collect(),
            head: (self.shared_blocks..self.shared_blocks + self.head_blocks).map(take).collect(),
        })
    }

    /// Class probabilities of the batch (classification heads only).
    pub fn probabilities(&self) -> Option<&[f64]> {
        self.tape.softmax_probs(self.node)
    }

    /// Per-example squared norms of `∇_(θ, φ_k) ℓ`.
    pub fn per_example_sq_grad_norms(&self) -> Result<Vec<f64>> {
        self.tape.per_example_sq_grad_norms(self.node)
    }
}

fn check_kind(spec: &ModelSpec, k: usize, targets: &BatchTargets) -> Result<()> {
    let want = spec.heads[k].loss;
    let ok = matches!(
        (want, targets),
        (LossKind::SoftmaxCrossEntropy, BatchTargets::Classes(_)) | (LossKind::SquaredError, BatchTargets::Real(_))
    );
    if ok {
        Ok(())
    } else {
        Err(invalid(format!(
            "head `{}` uses {want:?} but the targets have the other kind",
            spec.heads[k].task_id
        )))
    }
}

/// Record `ℓ_k` on an explicit batch `x` with `targets` through head `k`.
pub fn loss_on_batch(
    params: &ParamState,
    spec: &ModelSpec,
    k: usize,
    x: DenseTensor,
    targets: &BatchTargets,
) -> Result<BatchLoss> {
    check_kind(spec, k, targets)?;
    let enc = spec.encoder()?;
    let head = spec.head(k)?;
    let shared = params.shared_tensors();
    let heads = params.head_tensors(k);
    let mut tape = ComputationTape::new();
    let xin = tape.input(x);
    let z = enc.record(&mut tape, xin, &shared, 0)?;
    let out = head.record(&mut tape, z, &heads, shared.len())?;
    let node = match targets {
        BatchTargets::Classes(labels) => tape.softmax_cross_entropy(out, labels)?,
        BatchTargets::Real(values) => tape.squared_error(out, values)?,
    };
    Ok(BatchLoss {
        loss: tape.value(node).data()[0],
        tape,
        node,
        head: k,
        shared_blocks: shared.len(),
        head_blocks: heads.len(),
    })
}

/// Mean of `ℓ_k` over the rows `batch` of `task`, with the tape for backward.
pub fn task_loss_batch(params: &ParamState, spec: &ModelSpec, task: &TaskData, batch: &[usize]) -> Result<BatchLoss> {
    let k = spec.head_index(task.task_id())?;
    let (x, y) = task.gather(batch);
    loss_on_batch(params, spec, k, x, &y)
}

/// Head outputs (logits or regression values) for `x`, without recording a tape.
pub fn predict(params: &ParamState, spec: &ModelSpec, k: usize, x: &DenseTensor) -> Result<DenseTensor> {
    let z = spec.encoder()?.apply(&params.shared_tensors(), x)?;
    spec.head(k)?.apply(&params.head_tensors(k), &z)
}

const EVAL_CHUNK: usize = 1024;

fn per_example_losses(out: &DenseTensor, targets: &BatchTargets) -> Vec<f64> {
    let (m, c) = out.dims2();
    match targets {
        BatchTargets::Classes(labels) => (0..m)
            .map(|r| {
                let row = &out.data()[r * c..(r + 1) * c];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                lse - row[labels[r]]
            })
            .collect(),
        BatchTargets::Real(values) => (0..m)
            .map(|r| {
                (0..c)
                    .map(|j| {
                        let d = out.data()[r * c + j] - values[r * c + j];
                        d * d
                    })
                    .sum()
            })
            .collect(),
    }
}

/// Neumaier-compensated sum.
fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn for_each_chunk(
    params: &ParamState,
    spec: &ModelSpec,
    task: &TaskData,
    mut f: impl FnMut(&DenseTensor, &BatchTargets),
) -> Result<()> {
    let k = spec.head_index(task.task_id())?;
    let idx: Vec<usize> = (0..task.len()).collect();
    for chunk in idx.chunks(EVAL_CHUNK) {
        let (x, y) = task.gather(chunk);
        check_kind(spec, k, &y)?;
        let out = predict(params, spec, k, &x)?;
        f(&out, &y);
    }
    Ok(())
}

/// Exact mean loss `L_k` over every sample of `task`.
pub fn task_loss_full(params: &ParamState, spec: &ModelSpec, task: &TaskData) -> Result<f64> {
    if task.is_empty() {
        return Err(invalid(format!("task `{}` has no samples", task.task_id())));
    }
    let mut losses = Vec::with_capacity(task.len());
    for_each_chunk(params, spec, task, |out, y| losses.extend(per_example_losses(out, y)))?;
    Ok(compensated_sum(losses) / task.len() as f64)
}

/// Generalization metric `E_k` on `eval`: accuracy for classification,
/// negative mean squared error for regression (higher is better for both).
pub fn generalization(params: &ParamState, spec: &ModelSpec, eval: &TaskData) -> Result<f64> {
    if eval.is_empty() {
        return Err(invalid(format!("evaluation split of `{}` is empty", eval.task_id())));
    }
    let mut correct = 0usize;
    let mut sq = Vec::new();
    for_each_chunk(params, spec, eval, |out, y| {
        let (m, c) = out.dims2();
        match y {
            BatchTargets::Classes(labels) => {
                for r in 0..m {
                    let row = &out.data()[r * c..(r + 1) * c];
                    let mut best = 0;
                    for j in 1..c {
                        if row[j] > row[best] {
                            best = j;
                        }
                    }
                    if best == labels[r] {
                        correct += 1;
                    }
                }
            }
            BatchTargets::Real(_) => sq.extend(per_example_losses(out, y)),
        }
    })?;
    Ok(match eval.targets() {
        Targets::Classes { .. } => correct as f64 / eval.len() as f64,
        Targets::Real { .. } => -compensated_sum(sq) / eval.len() as f64,
    })
}

/// Per-task batch gradients for one training step.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub task_ids: Vec<String>,
    /// Head index of each entry in the model.
    pub heads: Vec<usize>,
    pub losses: Vec<f64>,
    /// `∇_θ L_k^B`, flattened over the shared blocks.
    pub shared: Vec<Vec<f64>>,
    /// `∇_φk L_k^B`, flattened over head `k`.
    pub head_grads: Vec<Vec<f64>>,
}

impl GradientBundle {
    /// A bundle holding only shared-parameter gradients.
    pub fn from_shared(shared: Vec<Vec<f64>>) -> Result<Self> {
        let k = shared.len();
        if k > 0 && shared.iter().any(|g| g.len() != shared[0].len()) {
            return Err(Error::Shape {
                context: "GradientBundle::from_shared",
                expected: format!("all gradients of length {}", shared[0].len()),
                actual: format!("{:?}", shared.iter().map(Vec::len).collect::<Vec<_>>()),
            });
        }
        Ok(Self {
            task_ids: (0..k).map(|i| format!("task{i}")).collect(),
            heads: (0..k).collect(),
            losses: vec![0.0; k],
            shared,
            head_grads: vec![Vec::new(); k],
        })
    }

    pub fn len(&self) -> usize {
        self.shared.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shared.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.shared.first().map_or(0, Vec::len)
    }
}

/// Batch gradients of every task in `tasks`, each on its own batch.
pub fn task_gradients(
    params: &ParamState,
    spec: &ModelSpec,
    tasks: &[&TaskData],
    batches: &[Vec<usize>],
) -> Result<GradientBundle> {
    if tasks.len() != batches.len() {
        return Err(invalid(format!("{} tasks but {} batches", tasks.len(), batches.len())));
    }
    let mut bundle = GradientBundle {
        task_ids: Vec::new(),
        heads: Vec::new(),
        losses: Vec::new(),
        shared: Vec::new(),
        head_grads: Vec::new(),
    };
    for (task, batch) in tasks.iter().zip(batches) {
        let bl = task_loss_batch(params, spec, task, batch)?;
        let g = bl.gradient()?;
        bundle.task_ids.push(task.task_id().to_string());
        bundle.heads.push(bl.head);
        bundle.losses.push(bl.loss);
        bundle.shared.push(g.shared_flat());
        bundle.head_grads.push(g.head_flat());
    }
    Ok(bundle)
}
