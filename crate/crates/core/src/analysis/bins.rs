use crate::error::{invalid, Result};

/// Losses are floored here before binning; geometric bins need positivity.
pub const LOSS_FLOOR: f64 = 1e-12;

/// Geometrically spaced loss bins, numbered from 1 at the high-loss end.
#[derive(Debug, Clone, PartialEq)]
pub struct LossBinning {
    /// `count + 1` strictly decreasing edges from the maximum to the minimum.
    pub edges: Vec<f64>,
    /// Inclusive 1-based bin range for the early phase.
    pub early: (usize, usize),
    /// Inclusive 1-based bin range for the end of training.
    pub late: (usize, usize),
}

/// `e_i = max·(min/max)^{i/count}` over the range of `losses`.
pub fn build_bins(losses: &[f64], count: usize) -> Result<LossBinning> {
    if count == 0 {
        return Err(invalid("bin count must be positive"));
    }
    if let Some(l) = losses.iter().find(|l| !(**l > 0.0 && l.is_finite())) {
        return Err(invalid(format!("geometric bins need positive finite losses, got {l}")));
    }
    let max = losses.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = losses.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(max > min) {
        return Err(invalid("geometric bins need max loss > min loss"));
    }
    let ratio = min / max;
    let mut edges: Vec<f64> = (0..=count).map(|i| max * ratio.powf(i as f64 / count as f64)).collect();
    edges[0] = max;
    edges[count] = min;
    Ok(LossBinning { edges, early: (2.min(count), 5.min(count)), late: (18.min(count), 20.min(count)) })
}

impl LossBinning {
    pub fn count(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn max(&self) -> f64 {
        self.edges[0]
    }

    pub fn min(&self) -> f64 {
        self.edges[self.count()]
    }

    /// `(upper, lower)` edges of 1-based bin `i`.
    pub fn bounds(&self, i: usize) -> (f64, f64) {
        (self.edges[i - 1], self.edges[i])
    }

    /// Bin `i` holds `e_i ≤ L < e_{i−1}`; the maximum itself falls in bin 1.
    /// Losses outside `[min, max]` belong to no bin.
    pub fn bin_of(&self, loss: f64) -> Option<usize> {
        if !(loss <= self.max() && loss >= self.min()) {
            return None;
        }
        let n = self.count();
        // locate by the log position, then correct against the stored edges
        let t = (self.max() / loss).ln() / (self.max() / self.min()).ln() * n as f64;
        let mut i = (t.floor() as usize + 1).clamp(1, n);
        while i > 1 && loss >= self.edges[i - 1] {
            i -= 1;
        }
        while i < n && loss < self.edges[i] {
            i += 1;
        }
        Some(i)
    }

    pub fn in_early(&self, loss: f64) -> bool {
        self.bin_of(loss).is_some_and(|b| b >= self.early.0 && b <= self.early.1)
    }

    pub fn in_late(&self, loss: f64) -> bool {
        self.bin_of(loss).is_some_and(|b| b >= self.late.0 && b <= self.late.1)
    }

    pub fn with_ranges(mut self, early: (usize, usize), late: (usize, usize)) -> Result<Self> {
        let n = self.count();
        for (lo, hi) in [early, late] {
            if lo == 0 || lo > hi || hi > n {
                return Err(invalid(format!("bin range {lo}-{hi} outside 1-{n}")));
            }
        }
        self.early = early;
        self.late = late;
        Ok(self)
    }
}

/// The candidate with the largest minimum loss; ties go to the smallest id.
pub fn reference_for_comparison<'a>(candidates: &[(&'a str, &[f64])]) -> Result<&'a str> {
    let mut best: Option<(&str, f64)> = None;
    for &(id, losses) in candidates {
        let m = losses.iter().cloned().fold(f64::INFINITY, f64::min);
        best = match best {
            Some((bid, bm)) if bm > m || (bm == m && bid <= id) => Some((bid, bm)),
            _ => Some((id, m)),
        };
    }
    best.map(|(id, _)| id).ok_or_else(|| invalid("no trajectories to choose a reference from"))
}
