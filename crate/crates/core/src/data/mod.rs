//! Task datasets: IDX ingestion, synthetic construction, multi-task splits
//! and per-epoch batch iteration.

mod batch;
mod idx;
mod synth;
mod task;
mod transform;

pub use batch::BatchPlan;
pub use idx::{load_idx, read_idx, write_idx, IdxArray};
pub use synth::SyntheticImages;
pub use task::{BatchTargets, LossKind, TaskData, TaskSplits, Targets};
pub use transform::{
    corrupt_labels, permute_labels, restrict_classes, sample_auxiliary_sets, split_task,
    AuxiliarySet,
};
