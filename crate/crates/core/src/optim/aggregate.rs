use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::model::GradientBundle;
use crate::rng::RngState;
use crate::tensor::{axpy, dot, sq_norm};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Umtg,
    Pcgrad,
    Mgda,
    Gradnorm,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Umtg, Method::Pcgrad, Method::Mgda, Method::Gradnorm];

    pub fn as_str(self) -> &'static str {
        match self {
            Method::Umtg => "umtg",
            Method::Pcgrad => "pcgrad",
            Method::Mgda => "mgda",
            Method::Gradnorm => "gradnorm",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Method {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| invalid(format!("unknown method `{s}` (expected umtg, pcgrad, mgda or gradnorm)")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregatorConfig {
    pub method: Method,
    /// Scaling factor `C` of the uniform gradient.
    pub scale_c: f64,
    /// Task weights `w_k`; absent tasks weigh 1.
    pub weights: BTreeMap<String, f64>,
    pub gradnorm_alpha: f64,
    /// GradNorm weight learning rate; `None` means "same as the model".
    pub gradnorm_lr: Option<f64>,
}

impl Default for AggregatorConfig {
    fn default() -> Self {
        Self {
            method: Method::Umtg,
            scale_c: 1.0,
            weights: BTreeMap::new(),
            gradnorm_alpha: 1.5,
            gradnorm_lr: None,
        }
    }
}

impl AggregatorConfig {
    pub fn with_method(method: Method) -> Self {
        Self { method, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale_c > 0.0 && self.scale_c.is_finite()) {
            return Err(invalid(format!("scale C must be positive, got {}", self.scale_c)));
        }
        if let Some((k, w)) = self.weights.iter().find(|(_, w)| !(**w > 0.0 && w.is_finite())) {
            return Err(invalid(format!("weight of `{k}` must be positive, got {w}")));
        }
        if !(self.gradnorm_alpha >= 0.0 && self.gradnorm_alpha.is_finite()) {
            return Err(invalid(format!("gradnorm alpha must be >= 0, got {}", self.gradnorm_alpha)));
        }
        if let Some(lr) = self.gradnorm_lr {
            if !(lr > 0.0 && lr.is_finite()) {
                return Err(invalid(format!("gradnorm learning rate must be positive, got {lr}")));
            }
        }
        Ok(())
    }

    pub fn weight(&self, task_id: &str) -> f64 {
        self.weights.get(task_id).copied().unwrap_or(1.0)
    }
}

fn nonempty(bundle: &GradientBundle) -> Result<()> {
    if bundle.is_empty() {
        Err(invalid("cannot aggregate an empty gradient bundle"))
    } else {
        Ok(())
    }
}

/// `(1/C) Σ_k w_k g_k`.
pub fn aggregate_umtg(bundle: &GradientBundle, cfg: &AggregatorConfig) -> Result<Vec<f64>> {
    nonempty(bundle)?;
    cfg.validate()?;
    let mut out = vec![0.0; bundle.dim()];
    for (id, g) in bundle.task_ids.iter().zip(&bundle.shared) {
        axpy(cfg.weight(id) / cfg.scale_c, g, &mut out);
    }
    Ok(out)
}

/// Per-entry multipliers for head gradients. The uniform gradient scales
/// heads like its loss, `w_k / C`; the other methods leave heads untouched.
pub fn head_scales(bundle: &GradientBundle, cfg: &AggregatorConfig) -> Vec<f64> {
    match cfg.method {
        Method::Umtg => bundle.task_ids.iter().map(|id| cfg.weight(id) / cfg.scale_c).collect(),
        _ => vec![1.0; bundle.len()],
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PcGradOutput {
    pub gradient: Vec<f64>,
    /// Each task's gradient after its projections, `g_i′`.
    pub projected: Vec<Vec<f64>>,
    pub projections: usize,
    /// Projections skipped because the other gradient had zero norm.
    pub skipped_zero_norm: usize,
}

/// Project each task gradient off every conflicting original gradient, visiting
/// the others in a shuffled order, and sum the results.
pub fn aggregate_pcgrad(bundle: &GradientBundle, rng: &mut RngState) -> Result<PcGradOutput> {
    nonempty(bundle)?;
    let k = bundle.len();
    let norms: Vec<f64> = bundle.shared.iter().map(|g| sq_norm(g)).collect();
    let mut out = PcGradOutput {
        gradient: vec![0.0; bundle.dim()],
        projected: Vec::with_capacity(k),
        projections: 0,
        skipped_zero_norm: 0,
    };
    for i in 0..k {
        let mut gi = bundle.shared[i].clone();
        let mut order: Vec<usize> = (0..k).filter(|&j| j != i).collect();
        rng.shuffle(&mut order);
        for j in order {
            let d = dot(&gi, &bundle.shared[j]);
            if d < 0.0 {
                if norms[j] == 0.0 {
                    out.skipped_zero_norm += 1;
                    continue;
                }
                axpy(-d / norms[j], &bundle.shared[j], &mut gi);
                out.projections += 1;
            }
        }
        axpy(1.0, &gi, &mut out.gradient);
        out.projected.push(gi);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bundle(gs: &[&[f64]]) -> GradientBundle {
        GradientBundle::from_shared(gs.iter().map(|g| g.to_vec()).collect()).unwrap()
    }

    #[test]
    fn umtg_examples() {
        let cfg = AggregatorConfig::default();
        assert_eq!(aggregate_umtg(&bundle(&[&[1.0, 2.0]]), &cfg).unwrap(), vec![1.0, 2.0]);
        let b = bundle(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(aggregate_umtg(&b, &cfg).unwrap(), vec![1.0, 1.0]);
        let half = AggregatorConfig { scale_c: 2.0, ..cfg.clone() };
        assert_eq!(aggregate_umtg(&b, &half).unwrap(), vec![0.5, 0.5]);
        let mut w = cfg.clone();
        w.weights.insert("task1".into(), 3.0);
        assert_eq!(aggregate_umtg(&b, &w).unwrap(), vec![1.0, 3.0]);
        assert_eq!(head_scales(&b, &half), vec![0.5, 0.5]);
    }

    #[test]
    fn invalid_configs_rejected() {
        let b = bundle(&[&[1.0]]);
        let c0 = AggregatorConfig { scale_c: 0.0, ..Default::default() };
        assert!(aggregate_umtg(&b, &c0).is_err());
        let mut w = AggregatorConfig::default();
        w.weights.insert("task0".into(), -1.0);
        assert!(aggregate_umtg(&b, &w).is_err());
        let a = AggregatorConfig { gradnorm_alpha: -0.5, ..Default::default() };
        assert!(a.validate().is_err());
        assert!(aggregate_umtg(&GradientBundle::from_shared(vec![]).unwrap(), &AggregatorConfig::default()).is_err());
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.to_string().parse::<Method>().unwrap(), m);
        }
        assert!("cagrad".parse::<Method>().is_err());
    }

    /// Straight-line reimplementation used as the projection oracle.
    fn project_oracle(gs: &[Vec<f64>], i: usize, order: &[usize]) -> Vec<f64> {
        let mut g = gs[i].clone();
        for &j in order {
            let d: f64 = g.iter().zip(&gs[j]).map(|(a, b)| a * b).sum();
            let n: f64 = gs[j].iter().map(|v| v * v).sum();
            if d < 0.0 && n > 0.0 {
                for (x, y) in g.iter_mut().zip(&gs[j]) {
                    *x -= d / n * y;
                }
            }
        }
        g
    }

    #[test]
    fn pcgrad_examples() {
        let mut rng = RngState::new(0);
        let out = aggregate_pcgrad(&bundle(&[&[1.0, 0.0], &[-1.0, 1.0]]), &mut rng).unwrap();
        assert!((out.gradient[0] - 0.5).abs() < 1e-15 && (out.gradient[1] - 1.5).abs() < 1e-15);
        assert_eq!(out.projections, 2);
        let gs = vec![vec![1.0, 0.0], vec![-1.0, 1.0]];
        assert_eq!(project_oracle(&gs, 0, &[1]), vec![0.5, 0.5]);
        assert_eq!(project_oracle(&gs, 1, &[0]), vec![0.0, 1.0]);

        let cancel = aggregate_pcgrad(&bundle(&[&[1.0, 0.0], &[-1.0, 0.0]]), &mut rng).unwrap();
        assert_eq!(cancel.gradient, vec![0.0, 0.0]);

        let b = bundle(&[&[1.0, 2.0], &[3.0, -1.0]]);
        let umtg = aggregate_umtg(&b, &AggregatorConfig::default()).unwrap();
        assert_eq!(aggregate_pcgrad(&b, &mut rng).unwrap().gradient, umtg);
    }

    #[test]
    fn pcgrad_matches_oracle_with_same_order() {
        let gs = vec![vec![1.0, -2.0, 0.5], vec![-1.0, 1.0, 1.0], vec![0.3, 0.4, -2.0], vec![0.0, 0.0, 0.0]];
        let b = GradientBundle::from_shared(gs.clone()).unwrap();
        let mut rng = RngState::new(42);
        let got = aggregate_pcgrad(&b, &mut rng).unwrap().gradient;
        let mut replay = RngState::new(42);
        let mut want = vec![0.0; 3];
        for i in 0..4 {
            let mut order: Vec<usize> = (0..4).filter(|&j| j != i).collect();
            replay.shuffle(&mut order);
            for (w, v) in want.iter_mut().zip(project_oracle(&gs, i, &order)) {
                *w += v;
            }
        }
        for (a, b) in got.iter().zip(&want) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    fn vecs(k: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
        prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), k)
    }

    proptest! {
        #[test]
        fn umtg_is_linear(gs in vecs(3, 4), a in -5.0f64..5.0) {
            let cfg = AggregatorConfig::default();
            let base = aggregate_umtg(&GradientBundle::from_shared(gs.clone()).unwrap(), &cfg).unwrap();
            let scaled: Vec<Vec<f64>> = gs.iter().map(|g| g.iter().map(|v| a * v).collect()).collect();
            let got = aggregate_umtg(&GradientBundle::from_shared(scaled).unwrap(), &cfg).unwrap();
            for (x, y) in got.iter().zip(&base) {
                prop_assert!((x - a * y).abs() <= 1e-12 * (1.0 + y.abs() * a.abs()));
            }
        }

        #[test]
        fn pcgrad_projection_is_orthogonal(gi in prop::collection::vec(-10.0f64..10.0, 5),
                                           gj in prop::collection::vec(-10.0f64..10.0, 5)) {
            let d = dot(&gi, &gj);
            let n = sq_norm(&gj);
            prop_assume!(d < 0.0 && n > 1e-6);
            let mut p = gi.clone();
            axpy(-d / n, &gj, &mut p);
            let scale = sq_norm(&gi).sqrt() * n.sqrt();
            prop_assert!(dot(&p, &gj).abs() <= 1e-12 * scale);
            // same through the aggregator with K = 2: the projected g_1 is the
            // sum minus the projected g_2
            let b = GradientBundle::from_shared(vec![gi.clone(), gj.clone()]).unwrap();
            let out = aggregate_pcgrad(&b, &mut RngState::new(1)).unwrap();
            prop_assert_eq!(out.projections, 2);
        }
    }
}
