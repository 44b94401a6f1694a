use serde::{Deserialize, Serialize};

use crate::data::{LossKind, TaskData};
use crate::error::{invalid, Error, Result};
use crate::layers::{Activation, Layer, LayerStack};
use crate::rng::RngState;
use crate::tensor::DenseTensor;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HeadSpec {
    pub task_id: String,
    pub outputs: usize,
    pub loss: LossKind,
}

/// Encoder widths, nonlinearity, and one head per task.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelSpec {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub activation: Activation,
    pub heads: Vec<HeadSpec>,
}

impl ModelSpec {
    /// A spec with one head per task, sized from the task targets.
    pub fn for_tasks(hidden: &[usize], activation: Activation, tasks: &[&TaskData]) -> Result<Self> {
        let first = tasks.first().ok_or_else(|| invalid("a model needs at least one task"))?;
        let input_dim = first.input_dim();
        let mut heads: Vec<HeadSpec> = Vec::new();
        for t in tasks {
            if t.input_dim() != input_dim {
                return Err(Error::Shape {
                    context: "ModelSpec::for_tasks",
                    expected: format!("input width {input_dim}"),
                    actual: format!("`{}` has width {}", t.task_id(), t.input_dim()),
                });
            }
            if heads.iter().any(|h| h.task_id == t.task_id()) {
                return Err(invalid(format!("duplicate task id `{}`", t.task_id())));
            }
            heads.push(HeadSpec {
                task_id: t.task_id().to_string(),
                outputs: t.targets().output_dim(),
                loss: t.loss_kind(),
            });
        }
        Ok(Self {
            input_dim,
            hidden: hidden.to_vec(),
            activation,
            heads,
        })
    }

    pub fn encoder(&self) -> Result<LayerStack> {
        LayerStack::mlp(self.input_dim, &self.hidden, self.activation)
    }

    pub fn representation_dim(&self) -> usize {
        self.hidden.last().copied().unwrap_or(self.input_dim)
    }

    pub fn head(&self, k: usize) -> Result<LayerStack> {
        let h = self.heads.get(k).ok_or_else(|| invalid(format!("no head {k}")))?;
        LayerStack::new(vec![Layer::Affine {
            inputs: self.representation_dim(),
            outputs: h.outputs,
        }])
    }

    pub fn head_index(&self, task_id: &str) -> Result<usize> {
        self.heads
            .iter()
            .position(|h| h.task_id == task_id)
            .ok_or_else(|| invalid(format!("model has no head for task `{task_id}`")))
    }

    pub fn num_tasks(&self) -> usize {
        self.heads.len()
    }

    pub fn init(&self, rng: &mut RngState) -> Result<ParamState> {
        let enc = self.encoder()?;
        let shared = name_blocks("encoder", enc.init_params(&mut rng.fork_named("encoder")));
        let mut heads = Vec::with_capacity(self.heads.len());
        for (k, h) in self.heads.iter().enumerate() {
            // keyed by task id so a head starts the same in every run containing it
            let blocks = self.head(k)?.init_params(&mut rng.fork_named(&format!("head/{}", h.task_id)));
            heads.push(TaskHead {
                task_id: h.task_id.clone(),
                blocks: name_blocks(&format!("head.{}", h.task_id), blocks),
            });
        }
        Ok(ParamState { shared, heads })
    }
}

fn name_blocks(prefix: &str, blocks: Vec<DenseTensor>) -> Vec<NamedBlock> {
    blocks
        .into_iter()
        .enumerate()
        .map(|(i, tensor)| NamedBlock {
            name: format!("{prefix}.{}.{}", i / 2, if i % 2 == 0 { "weight" } else { "bias" }),
            tensor,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NamedBlock {
    pub name: String,
    #[serde(skip, default = "empty_tensor")]
    pub tensor: DenseTensor,
}

fn empty_tensor() -> DenseTensor {
    DenseTensor::from_vec(vec![])
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskHead {
    pub task_id: String,
    pub blocks: Vec<NamedBlock>,
}

/// Shared encoder blocks `θ` plus one head `φ_k` per task.
///
/// The flat layout used by the optimizer is all shared blocks in order,
/// followed by each head's blocks in task order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamState {
    pub shared: Vec<NamedBlock>,
    pub heads: Vec<TaskHead>,
}

fn flatten(blocks: &[NamedBlock], out: &mut Vec<f64>) {
    for b in blocks {
        out.extend_from_slice(b.tensor.data());
    }
}

fn unflatten(blocks: &mut [NamedBlock], flat: &[f64]) -> usize {
    let mut off = 0;
    for b in blocks {
        let n = b.tensor.len();
        b.tensor.data_mut().copy_from_slice(&flat[off..off + n]);
        off += n;
    }
    off
}

impl ParamState {
    pub fn shared_len(&self) -> usize {
        self.shared.iter().map(|b| b.tensor.len()).sum()
    }

    pub fn head_len(&self, k: usize) -> usize {
        self.heads[k].blocks.iter().map(|b| b.tensor.len()).sum()
    }

    pub fn len(&self) -> usize {
        self.shared_len() + (0..self.heads.len()).map(|k| self.head_len(k)).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn head_index(&self, task_id: &str) -> Result<usize> {
        self.heads
            .iter()
            .position(|h| h.task_id == task_id)
            .ok_or_else(|| invalid(format!("no head for task `{task_id}`")))
    }

    pub fn shared_tensors(&self) -> Vec<DenseTensor> {
        self.shared.iter().map(|b| b.tensor.clone()).collect()
    }

    pub fn head_tensors(&self, k: usize) -> Vec<DenseTensor> {
        self.heads[k].blocks.iter().map(|b| b.tensor.clone()).collect()
    }

    pub fn shared_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.shared_len());
        flatten(&self.shared, &mut v);
        v
    }

    pub fn to_flat(&self) -> Vec<f64> {
        let mut v = Vec::with_capacity(self.len());
        flatten(&self.shared, &mut v);
        for h in &self.heads {
            flatten(&h.blocks, &mut v);
        }
        v
    }

    pub fn set_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.len() {
            return Err(Error::Shape {
                context: "ParamState::set_flat",
                expected: format!("{} values", self.len()),
                actual: format!("{}", flat.len()),
            });
        }
        let mut off = unflatten(&mut self.shared, flat);
        for h in &mut self.heads {
            off += unflatten(&mut h.blocks, &flat[off..]);
        }
        Ok(())
    }

    /// `(θ, φ_k)` as one vector: shared blocks then head `k`.
    pub fn task_flat(&self, k: usize) -> Vec<f64> {
        let mut v = self.shared_flat();
        flatten(&self.heads[k].blocks, &mut v);
        v
    }

    pub fn set_task_flat(&mut self, k: usize, flat: &[f64]) -> Result<()> {
        let want = self.shared_len() + self.head_len(k);
        if flat.len() != want {
            return Err(Error::Shape {
                context: "ParamState::set_task_flat",
                expected: format!("{want} values"),
                actual: format!("{}", flat.len()),
            });
        }
        let off = unflatten(&mut self.shared, flat);
        unflatten(&mut self.heads[k].blocks, &flat[off..]);
        Ok(())
    }

    /// Offset of head `k` in the flat layout.
    pub fn head_offset(&self, k: usize) -> usize {
        self.shared_len() + (0..k).map(|j| self.head_len(j)).sum::<usize>()
    }

    pub fn all_finite(&self) -> bool {
        self.shared.iter().all(|b| b.tensor.all_finite())
            && self.heads.iter().all(|h| h.blocks.iter().all(|b| b.tensor.all_finite()))
    }
}
