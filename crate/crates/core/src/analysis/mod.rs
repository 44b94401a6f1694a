//! Matched-loss analysis of logged trajectories.
//!
//! Trajectories are compared inside geometrically spaced loss bins rather
//! than at equal epochs: a multi-task run usually stops at a much higher
//! training loss than its single-task counterpart, so generalization and
//! loss-surface factors only line up when read off at the same loss.

mod bins;
mod compare;
mod conflict;
mod gaps;
mod record;
mod stats;
mod summary;

pub use bins::{build_bins, reference_for_comparison, LossBinning, LOSS_FLOOR};
pub use compare::{percent_delta, transfer_table, Factor, PercentDelta, Quadrant, Shade, Sign, TransferRow};
pub use conflict::{conflict_vs_factor, ConflictFit, ConflictPoint};
pub use gaps::{bin_stats, gap_at_matched_loss, BinGap, GapReport, GroupStat};
pub use record::{seed_curves, CurvePoint, LossAxis, SeedCurve, TrajectoryRecord};
pub use stats::{least_squares, mean_std, pearson, Correlation, Stat};
pub use summary::{summarize_run, summarize_seeds, FactorSummary, RunSummary, WindowConfig};
