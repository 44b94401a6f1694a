//! Shared-encoder multi-task networks `f_k = h_k ∘ g`: one encoder shared by
//! every task and an independent linear head per task.

mod eval;
mod params;
mod snapshot;

pub use eval::{
    generalization, loss_on_batch, predict, task_gradients, task_loss_batch, task_loss_full, BatchLoss,
    GradientBundle, TaskGradient,
};
pub use params::{HeadSpec, ModelSpec, NamedBlock, ParamState, TaskHead};
pub use snapshot::{read_snapshot, write_snapshot, BlockEntry, SnapshotLayout};
