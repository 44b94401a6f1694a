use super::compare::Factor;
use super::stats::{least_squares, pearson, Correlation};

/// One auxiliary setting: mean similarity of the target gradient to the
/// uniform gradient and the target's factor aggregates.
#[derive(Debug, Clone, PartialEq)]
pub struct ConflictPoint {
    pub label: String,
    pub similarity: f64,
    pub factors: Vec<(Factor, Option<f64>)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConflictFit {
    pub factor: Factor,
    /// `(similarity, factor)` pairs of settings with a value.
    pub points: Vec<(f64, f64)>,
    /// Least-squares `(slope, intercept)`.
    pub fit: Option<(f64, f64)>,
    pub correlation: Option<Correlation>,
    /// Why the fit or correlation is missing.
    pub note: Option<String>,
}

/// Scatter, line and correlation of each factor against gradient similarity.
pub fn conflict_vs_factor(settings: &[ConflictPoint]) -> Vec<ConflictFit> {
    Factor::TABLE
        .iter()
        .map(|&factor| {
            let points: Vec<(f64, f64)> = settings
                .iter()
                .filter_map(|s| {
                    s.factors.iter().find(|(f, _)| *f == factor).and_then(|(_, v)| *v).map(|v| (s.similarity, v))
                })
                .collect();
            let xs: Vec<f64> = points.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
            let fit = least_squares(&xs, &ys).ok();
            let (correlation, note) = match pearson(&xs, &ys) {
                Ok(c) => (Some(c), None),
                Err(e) => (None, Some(format!("correlation undefined: {e}"))),
            };
            ConflictFit { factor, points, fit, correlation, note }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn point(sim: f64, sharp: f64, fim: f64) -> ConflictPoint {
        ConflictPoint {
            label: format!("{sim}"),
            similarity: sim,
            factors: vec![
                (Factor::Generalization, Some(0.5)),
                (Factor::Sharpness, Some(sharp)),
                (Factor::FimTrace, Some(fim)),
                (Factor::Coherence, None),
            ],
        }
    }

    #[test]
    fn fits_and_degenerate_cases() {
        let pts = vec![point(0.2, 3.0, 1.0), point(0.5, 2.4, 4.0), point(0.9, 1.6, 2.0), point(0.7, 2.0, 3.0)];
        let fits = conflict_vs_factor(&pts);
        let gen = &fits[0];
        assert!(gen.correlation.is_none() && gen.note.is_some());
        let sharp = &fits[1];
        assert!((sharp.correlation.unwrap().r + 1.0).abs() < 1e-12);
        let (m, b) = sharp.fit.unwrap();
        assert!((m + 2.0).abs() < 1e-12 && (b - 3.4).abs() < 1e-12);
        // normal equations for the FIM column
        let xs = [0.2, 0.5, 0.9, 0.7];
        let ys = [1.0, 4.0, 2.0, 3.0];
        let (n, sx, sy) = (4.0, xs.iter().sum::<f64>(), ys.iter().sum::<f64>());
        let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| x * y).sum();
        let sxx: f64 = xs.iter().map(|x| x * x).sum();
        let slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
        assert!((fits[2].fit.unwrap().0 - slope).abs() < 1e-12);
        assert!(fits[3].points.is_empty() && fits[3].fit.is_none());
        let single = conflict_vs_factor(&pts[..1]);
        assert!(single.iter().all(|f| f.correlation.is_none()));
    }
}
