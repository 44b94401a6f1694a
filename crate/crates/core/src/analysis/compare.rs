use std::fmt;

use serde::{Deserialize, Serialize};

use super::stats::Stat;
use super::summary::FactorSummary;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Factor {
    Generalization,
    Sharpness,
    FimTrace,
    Coherence,
    MinTrainLoss,
}

impl Factor {
    pub const TABLE: [Factor; 4] = [Factor::Generalization, Factor::Sharpness, Factor::FimTrace, Factor::Coherence];
    pub const ALL: [Factor; 5] =
        [Factor::Generalization, Factor::Sharpness, Factor::FimTrace, Factor::Coherence, Factor::MinTrainLoss];

    pub fn as_str(self) -> &'static str {
        match self {
            Factor::Generalization => "generalization",
            Factor::Sharpness => "sharpness",
            Factor::FimTrace => "fim_trace",
            Factor::Coherence => "coherence",
            Factor::MinTrainLoss => "min_train_loss",
        }
    }
}

impl fmt::Display for Factor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shade {
    Positive,
    Negative,
    Insignificant,
}

impl Shade {
    pub fn as_str(self) -> &'static str {
        match self {
            Shade::Positive => "positive",
            Shade::Negative => "negative",
            Shade::Insignificant => "insignificant",
        }
    }

    /// Sign of `a − b` when the `mean ± 2·std` intervals are disjoint.
    pub fn of(a: Stat, b: Stat) -> Shade {
        let (a_lo, a_hi) = (a.mean - 2.0 * a.std, a.mean + 2.0 * a.std);
        let (b_lo, b_hi) = (b.mean - 2.0 * b.std, b.mean + 2.0 * b.std);
        if a_lo > b_hi {
            Shade::Positive
        } else if a_hi < b_lo {
            Shade::Negative
        } else {
            Shade::Insignificant
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransferRow {
    pub task_id: String,
    pub mt_run: String,
    pub factor: Factor,
    pub mt: Option<Stat>,
    pub st: Option<Stat>,
    /// `mean_MT − mean_ST`; for generalization this is the transfer.
    pub delta: Option<f64>,
    pub shade: Shade,
}

/// MT-versus-ST deltas for every task present on both sides.
pub fn transfer_table(mt: &[FactorSummary], st: &[FactorSummary]) -> Vec<TransferRow> {
    let mut rows = Vec::new();
    for m in mt {
        let Some(s) = st.iter().find(|s| s.task_id == m.task_id) else { continue };
        for factor in Factor::TABLE {
            let (a, b) = (m.get(factor), s.get(factor));
            let (delta, shade) = match (a, b) {
                (Some(a), Some(b)) => (Some(a.mean - b.mean), Shade::of(a, b)),
                _ => (None, Shade::Insignificant),
            };
            rows.push(TransferRow {
                task_id: m.task_id.clone(),
                mt_run: m.run_id.clone(),
                factor,
                mt: a,
                st: b,
                delta,
                shade,
            });
        }
    }
    rows
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Sign {
    Positive,
    Negative,
    Zero,
}

impl Sign {
    pub fn of(v: f64) -> Sign {
        if v > 0.0 {
            Sign::Positive
        } else if v < 0.0 {
            Sign::Negative
        } else {
            Sign::Zero
        }
    }

    fn symbol(self) -> char {
        match self {
            Sign::Positive => '+',
            Sign::Negative => '-',
            Sign::Zero => '0',
        }
    }
}

/// Position of a (factor %Δ, generalization %Δ) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Quadrant {
    pub factor: Sign,
    pub generalization: Sign,
}

impl fmt::Display for Quadrant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({},{})", self.factor.symbol(), self.generalization.symbol())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PercentDelta {
    pub task_id: String,
    pub method: String,
    /// `100·(smto − umtg)/|umtg|` per factor; `None` is incomparable.
    pub values: Vec<(Factor, Option<f64>)>,
    /// Quadrant of each non-generalization factor against generalization.
    pub quadrants: Vec<(Factor, Option<Quadrant>)>,
}

impl PercentDelta {
    pub fn value(&self, factor: Factor) -> Option<f64> {
        self.values.iter().find(|(f, _)| *f == factor).and_then(|(_, v)| *v)
    }

    pub fn quadrant(&self, factor: Factor) -> Option<Quadrant> {
        self.quadrants.iter().find(|(f, _)| *f == factor).and_then(|(_, q)| *q)
    }
}

fn pct(s: f64, u: f64) -> Option<f64> {
    if u == 0.0 || !u.is_finite() || !s.is_finite() {
        None
    } else {
        Some(100.0 * (s - u) / u.abs())
    }
}

/// Percentage change of each factor mean of an SMTO over the uniform gradient.
pub fn percent_delta(smto: &FactorSummary, umtg: &FactorSummary) -> PercentDelta {
    let values: Vec<(Factor, Option<f64>)> = Factor::ALL
        .iter()
        .map(|&f| {
            let v = match (smto.get(f), umtg.get(f)) {
                (Some(s), Some(u)) => pct(s.mean, u.mean),
                _ => None,
            };
            (f, v)
        })
        .collect();
    let gen = values[0].1;
    let quadrants = values[1..]
        .iter()
        .map(|&(f, v)| {
            let q = match (v, gen) {
                (Some(v), Some(g)) => Some(Quadrant { factor: Sign::of(v), generalization: Sign::of(g) }),
                _ => None,
            };
            (f, q)
        })
        .collect();
    PercentDelta { task_id: smto.task_id.clone(), method: smto.method.clone(), values, quadrants }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn stat(mean: f64, std: f64) -> Stat {
        Stat { mean, std, n: 3 }
    }

    pub(crate) fn summary(run: &str, g: Stat, s: Stat, f: Stat, c: Stat, l: Stat) -> FactorSummary {
        FactorSummary {
            run_id: run.into(),
            method: run.into(),
            task_id: "t".into(),
            seeds: 3,
            generalization: g,
            sharpness: Some(s),
            fim_explosion: Some(f),
            coherence: Some(c),
            min_train_loss: l,
        }
    }

    #[test]
    fn equal_sides_are_insignificant() {
        let a = summary("mt", stat(0.8, 0.01), stat(1.0, 0.1), stat(2.0, 0.0), stat(3.0, 0.5), stat(0.1, 0.0));
        let rows = transfer_table(std::slice::from_ref(&a), std::slice::from_ref(&a));
        assert_eq!(rows.len(), 4);
        assert!(rows.iter().all(|r| r.delta == Some(0.0) && r.shade == Shade::Insignificant));
    }

    #[test]
    fn disjoint_negative_transfer() {
        // a -8.81 point accuracy drop with tight seeds
        assert_eq!(Shade::of(stat(80.0 - 8.81, 0.5), stat(80.0, 0.4)), Shade::Negative);
        assert_eq!(Shade::of(stat(1.0, 0.3), stat(0.0, 0.15)), Shade::Positive);
        assert_eq!(Shade::of(stat(1.0, 0.3), stat(0.0, 0.19)), Shade::Positive);
        // touching intervals overlap
        assert_eq!(Shade::of(stat(1.0, 0.25), stat(0.0, 0.25)), Shade::Insignificant);
    }

    #[test]
    fn percent_and_quadrants() {
        let u = summary("umtg", stat(0.8, 0.0), stat(1.0, 0.0), stat(2.0, 0.0), stat(4.0, 0.0), stat(0.0, 0.0));
        let s = summary("pcgrad", stat(0.84, 0.0), stat(1.5, 0.0), stat(1.0, 0.0), stat(4.0, 0.0), stat(0.1, 0.0));
        let d = percent_delta(&s, &u);
        assert!((d.value(Factor::Generalization).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(d.value(Factor::Sharpness), Some(50.0));
        assert_eq!(d.value(Factor::FimTrace), Some(-50.0));
        assert_eq!(d.value(Factor::Coherence), Some(0.0));
        assert_eq!(d.value(Factor::MinTrainLoss), None);
        assert_eq!(d.quadrant(Factor::Sharpness).unwrap().to_string(), "(+,+)");
        assert_eq!(d.quadrant(Factor::FimTrace).unwrap().to_string(), "(-,+)");
        assert_eq!(d.quadrant(Factor::Coherence).unwrap().to_string(), "(0,+)");
        assert_eq!(d.quadrant(Factor::MinTrainLoss), None);
        let same = percent_delta(&u, &u);
        assert!(same.values.iter().all(|(f, v)| *f == Factor::MinTrainLoss || *v == Some(0.0)));
    }
}
