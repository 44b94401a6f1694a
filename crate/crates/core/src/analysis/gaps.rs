use super::bins::LossBinning;
use super::record::SeedCurve;
use super::stats::{mean_std, Stat};

/// One group's statistics in one bin: per-seed means of the test metric,
/// then their cross-seed mean and std.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GroupStat {
    pub mean: f64,
    pub std: f64,
    /// Seeds with at least one checkpoint in the bin.
    pub seeds: usize,
    pub checkpoints: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BinGap {
    pub bin: usize,
    pub upper: f64,
    pub lower: f64,
    pub a: Option<GroupStat>,
    pub b: Option<GroupStat>,
    /// `mean_a − mean_b`; `None` when either group has no data in the bin.
    pub gap: Option<f64>,
    /// The `mean ± 2·std` intervals are disjoint (needs two seeds per group).
    pub significant: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GapReport {
    pub bins: Vec<BinGap>,
}

fn group_stat(curves: &[SeedCurve], binning: &LossBinning, bin: usize) -> Option<GroupStat> {
    let mut per_seed = Vec::new();
    let mut checkpoints = 0;
    for c in curves {
        let vals: Vec<f64> =
            c.points.iter().filter(|p| binning.bin_of(p.loss) == Some(bin)).map(|p| p.metric).collect();
        if !vals.is_empty() {
            checkpoints += vals.len();
            per_seed.push(mean_std(&vals).map(|s| s.mean).unwrap_or_default());
        }
    }
    mean_std(&per_seed).map(|Stat { mean, std, n }| GroupStat { mean, std, seeds: n, checkpoints })
}

/// Per-bin statistics of one group, bins `1..=count`.
pub fn bin_stats(curves: &[SeedCurve], binning: &LossBinning) -> Vec<Option<GroupStat>> {
    (1..=binning.count()).map(|bin| group_stat(curves, binning, bin)).collect()
}

/// Generalization gap between groups `a` and `b` in every bin of `binning`.
pub fn gap_at_matched_loss(a: &[SeedCurve], b: &[SeedCurve], binning: &LossBinning) -> GapReport {
    let bins = (1..=binning.count())
        .map(|bin| {
            let (upper, lower) = binning.bounds(bin);
            let sa = group_stat(a, binning, bin);
            let sb = group_stat(b, binning, bin);
            let (gap, significant) = match (sa, sb) {
                (Some(x), Some(y)) => {
                    let d = x.mean - y.mean;
                    (Some(d), x.seeds >= 2 && y.seeds >= 2 && d.abs() > 2.0 * (x.std + y.std))
                }
                _ => (None, false),
            };
            BinGap { bin, upper, lower, a: sa, b: sb, gap, significant }
        })
        .collect();
    GapReport { bins }
}

impl GapReport {
    /// Longest run of consecutive bins that are significant with the sign of
    /// `positive`, as `(first bin, length)`.
    pub fn longest_significant_run(&self, positive: bool) -> Option<(usize, usize)> {
        let mut best: Option<(usize, usize)> = None;
        let mut cur: Option<(usize, usize)> = None;
        for g in &self.bins {
            let hit = g.significant && g.gap.is_some_and(|d| (d > 0.0) == positive);
            cur = match (hit, cur) {
                (true, Some((s, l))) => Some((s, l + 1)),
                (true, None) => Some((g.bin, 1)),
                (false, _) => None,
            };
            if let Some(c) = cur {
                if best.is_none_or(|b| c.1 > b.1) {
                    best = Some(c);
                }
            }
        }
        best
    }

    pub fn get(&self, bin: usize) -> Option<&BinGap> {
        self.bins.get(bin.wrapping_sub(1))
    }
}

#[cfg(test)]
mod tests {
    use super::super::bins::build_bins;
    use super::super::record::CurvePoint;
    use super::*;

    fn curve(seed: u64, losses: &[f64], metric: impl Fn(f64) -> f64) -> SeedCurve {
        SeedCurve {
            run_id: "r".into(),
            seed,
            points: losses
                .iter()
                .enumerate()
                .map(|(epoch, &loss)| CurvePoint { epoch, loss, metric: metric(loss) })
                .collect(),
        }
    }

    fn group(shift: f64) -> Vec<SeedCurve> {
        let losses: Vec<f64> = (0..40).map(|i| 10f64.powf(-(i as f64) / 8.0)).collect();
        (0..3).map(|s| curve(s, &losses, |l| 0.5 - 0.05 * l.log10() + 0.001 * s as f64 + shift)).collect()
    }

    #[test]
    fn identical_groups_have_no_gap() {
        let g = group(0.0);
        let bins = build_bins(&[1.0, 1e-5], 10).unwrap();
        let r = gap_at_matched_loss(&g, &g, &bins);
        assert!(r.bins.iter().all(|b| b.gap.is_none_or(|d| d == 0.0) && !b.significant));
        assert!(r.longest_significant_run(true).is_none());
    }

    #[test]
    fn forced_separation_is_significant_everywhere() {
        let a = group(0.0);
        let std = 0.001;
        let b = group(10.0 * std * 4.0);
        let bins = build_bins(&[1.0, 1e-5], 10).unwrap();
        let r = gap_at_matched_loss(&b, &a, &bins);
        for g in &r.bins {
            if g.gap.is_some() {
                assert!(g.significant, "bin {}", g.bin);
            }
        }
        assert_eq!(r.longest_significant_run(true), Some((1, 10)));
        // antisymmetry
        let s = gap_at_matched_loss(&a, &b, &bins);
        for (x, y) in r.bins.iter().zip(&s.bins) {
            assert_eq!(x.gap.map(|d| -d), y.gap);
            assert_eq!(x.significant, y.significant);
        }
        assert_eq!(s.longest_significant_run(false), Some((1, 10)));
    }

    #[test]
    fn empty_bins_have_no_data() {
        let a = vec![curve(0, &[1.0, 0.9], |_| 1.0), curve(1, &[1.0, 0.9], |_| 1.0)];
        let bins = build_bins(&[1.0, 1e-3], 3).unwrap();
        let r = gap_at_matched_loss(&a, &a, &bins);
        assert!(r.bins[2].gap.is_none());
        assert!(r.bins[2].a.is_none());
    }

    #[test]
    fn single_seed_is_never_significant() {
        let a = vec![curve(0, &[1.0, 0.1], |_| 1.0)];
        let b = vec![curve(0, &[1.0, 0.1], |_| 0.0)];
        let r = gap_at_matched_loss(&a, &b, &build_bins(&[1.0, 0.1], 2).unwrap());
        assert_eq!(r.bins[0].gap, Some(1.0));
        assert!(!r.bins[0].significant);
    }
}
