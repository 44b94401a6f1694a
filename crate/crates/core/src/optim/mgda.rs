use crate::error::Result;
use crate::model::GradientBundle;
use crate::tensor::{axpy, dot};

const FW_TOL: f64 = 1e-8;
const FW_MAX_ITERS: usize = 250;

#[derive(Debug, Clone, PartialEq)]
pub struct MgdaOutput {
    pub gradient: Vec<f64>,
    /// Simplex weights `γ`.
    pub gamma: Vec<f64>,
    pub iterations: usize,
    /// Frank–Wolfe duality gap at exit (0 for the closed form).
    pub gap: f64,
}

/// Minimizer `γ` of `‖γ g1 + (1−γ) g2‖²` over `[0, 1]` given the three inner products.
pub fn min_norm_two(g11: f64, g12: f64, g22: f64) -> f64 {
    let denom = g11 - 2.0 * g12 + g22;
    if denom <= 0.0 {
        return 0.5;
    }
    ((g22 - g12) / denom).clamp(0.0, 1.0)
}

fn gram(gs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let k = gs.len();
    let mut m = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in i..k {
            let v = dot(&gs[i], &gs[j]);
            m[i][j] = v;
            m[j][i] = v;
        }
    }
    m
}

fn mat_vec(m: &[Vec<f64>], x: &[f64]) -> Vec<f64> {
    m.iter().map(|row| dot(row, x)).collect()
}

/// Frank–Wolfe with away steps on `min_γ γᵀ M γ` over the simplex, from `init`
/// (or the best pair when `None`). Returns `(γ, iterations, gap)`.
pub fn min_norm_frank_wolfe(m: &[Vec<f64>], init: Option<Vec<f64>>) -> (Vec<f64>, usize, f64) {
    let k = m.len();
    let mut gamma = init.unwrap_or_else(|| best_pair(m));
    let mut gap = f64::INFINITY;
    let mut iters = 0;
    while iters < FW_MAX_ITERS {
        let mg = mat_vec(m, &gamma);
        let f = dot(&gamma, &mg);
        let t = (0..k).fold(0, |b, i| if mg[i] < mg[b] { i } else { b });
        gap = 2.0 * (f - mg[t]);
        if gap <= FW_TOL {
            break;
        }
        iters += 1;
        let a = (0..k)
            .filter(|&i| gamma[i] > 0.0)
            .fold(None, |b: Option<usize>, i| match b {
                Some(j) if mg[j] >= mg[i] => Some(j),
                _ => Some(i),
            })
            .expect("simplex point has support");
        let away_gap = 2.0 * (mg[a] - f);
        let (d, s_max) = if gap >= away_gap || gamma[a] >= 1.0 {
            let mut d: Vec<f64> = gamma.iter().map(|g| -g).collect();
            d[t] += 1.0;
            (d, 1.0)
        } else {
            let mut d = gamma.clone();
            d[a] -= 1.0;
            (d, gamma[a] / (1.0 - gamma[a]))
        };
        let md = mat_vec(m, &d);
        let curv = dot(&d, &md);
        let slope = dot(&d, &mg);
        let s = if curv > 0.0 { (-slope / curv).clamp(0.0, s_max) } else { s_max };
        if s == 0.0 {
            break;
        }
        for (g, di) in gamma.iter_mut().zip(&d) {
            *g = (*g + s * di).max(0.0);
        }
        if s == s_max && s_max < 1.0 {
            gamma[a] = 0.0;
        }
        let total: f64 = gamma.iter().sum();
        gamma.iter_mut().for_each(|g| *g /= total);
    }
    (gamma, iters, gap.max(0.0))
}

fn best_pair(m: &[Vec<f64>]) -> Vec<f64> {
    let k = m.len();
    let mut gamma = vec![0.0; k];
    if k == 1 {
        gamma[0] = 1.0;
        return gamma;
    }
    let mut best = (f64::INFINITY, 0, 1, 0.5);
    for i in 0..k {
        for j in i + 1..k {
            let c = min_norm_two(m[i][i], m[i][j], m[j][j]);
            let f = c * c * m[i][i] + 2.0 * c * (1.0 - c) * m[i][j] + (1.0 - c) * (1.0 - c) * m[j][j];
            if f < best.0 {
                best = (f, i, j, c);
            }
        }
    }
    gamma[best.1] = best.3;
    gamma[best.2] = 1.0 - best.3;
    gamma
}

/// Minimum-norm point of the convex hull of the task gradients.
pub fn aggregate_mgda(bundle: &GradientBundle) -> Result<MgdaOutput> {
    if bundle.is_empty() {
        return Err(crate::error::invalid("cannot aggregate an empty gradient bundle"));
    }
    let k = bundle.len();
    let m = gram(&bundle.shared);
    let (gamma, iterations, gap) = if (0..k).all(|i| m[i][i] == 0.0) {
        (vec![1.0 / k as f64; k], 0, 0.0)
    } else if k == 1 {
        (vec![1.0], 0, 0.0)
    } else if k == 2 {
        let c = min_norm_two(m[0][0], m[0][1], m[1][1]);
        (vec![c, 1.0 - c], 0, 0.0)
    } else {
        min_norm_frank_wolfe(&m, None)
    };
    let mut gradient = vec![0.0; bundle.dim()];
    for (g, &c) in bundle.shared.iter().zip(&gamma) {
        axpy(c, g, &mut gradient);
    }
    Ok(MgdaOutput { gradient, gamma, iterations, gap })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::sq_norm;
    use proptest::prelude::*;

    fn run(gs: &[&[f64]]) -> MgdaOutput {
        aggregate_mgda(&GradientBundle::from_shared(gs.iter().map(|g| g.to_vec()).collect()).unwrap()).unwrap()
    }

    #[test]
    fn two_task_examples() {
        let same = run(&[&[1.0, 2.0], &[1.0, 2.0]]);
        assert_eq!(same.gamma, vec![0.5, 0.5]);
        assert_eq!(same.gradient, vec![1.0, 2.0]);
        let orth = run(&[&[1.0, 0.0], &[0.0, 1.0]]);
        assert_eq!(orth.gamma, vec![0.5, 0.5]);
        assert_eq!(orth.gradient, vec![0.5, 0.5]);
        let col = run(&[&[1.0, 0.0], &[2.0, 0.0]]);
        assert_eq!(col.gradient, vec![1.0, 0.0]);
    }

    #[test]
    fn all_zero_is_uniform() {
        let z = run(&[&[0.0, 0.0], &[0.0, 0.0], &[0.0, 0.0]]);
        assert_eq!(z.gradient, vec![0.0, 0.0]);
        assert!(z.gamma.iter().all(|&g| (g - 1.0 / 3.0).abs() < 1e-15));
    }

    #[test]
    fn frank_wolfe_matches_closed_form_for_two_tasks() {
        for (g1, g2) in [
            (vec![1.0, 0.0], vec![0.0, 1.0]),
            (vec![3.0, 1.0], vec![-1.0, 0.5]),
            (vec![1.0, 0.0], vec![2.0, 0.1]),
            (vec![0.2, -4.0], vec![0.1, 1.0]),
        ] {
            let m = gram(&[g1.clone(), g2.clone()]);
            let c = min_norm_two(m[0][0], m[0][1], m[1][1]);
            for init in [vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]] {
                let (gamma, _, _) = min_norm_frank_wolfe(&m, Some(init));
                assert!((gamma[0] - c).abs() < 1e-8, "{gamma:?} vs {c}");
            }
        }
    }

    fn brute_force_min(gs: &[Vec<f64>]) -> f64 {
        let n = 1000;
        let norm = |gamma: &[f64]| {
            let mut v = vec![0.0; gs[0].len()];
            for (g, &c) in gs.iter().zip(gamma) {
                axpy(c, g, &mut v);
            }
            sq_norm(&v).sqrt()
        };
        let mut best = f64::INFINITY;
        if gs.len() == 2 {
            for i in 0..=n {
                let a = i as f64 / n as f64;
                best = best.min(norm(&[a, 1.0 - a]));
            }
        } else {
            for i in 0..=n {
                for j in 0..=n - i {
                    let (a, b) = (i as f64 / n as f64, j as f64 / n as f64);
                    best = best.min(norm(&[a, b, 1.0 - a - b]));
                }
            }
        }
        best
    }

    #[test]
    fn brute_force_fixture_three_tasks() {
        let gs = vec![vec![1.0, 0.2, -0.3], vec![-0.8, 0.9, 0.1], vec![0.1, -1.1, 0.4]];
        let out = aggregate_mgda(&GradientBundle::from_shared(gs.clone()).unwrap()).unwrap();
        assert!(sq_norm(&out.gradient).sqrt() <= brute_force_min(&gs) + 1e-6);
        assert!((out.gamma.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn mgda_beats_simplex_grid(k in 2usize..=3, flat in prop::collection::vec(-3.0f64..3.0, 12)) {
            let gs: Vec<Vec<f64>> = flat.chunks(4).take(k).map(|c| c.to_vec()).collect();
            let out = aggregate_mgda(&GradientBundle::from_shared(gs.clone()).unwrap()).unwrap();
            prop_assert!(sq_norm(&out.gradient).sqrt() <= brute_force_min(&gs) + 1e-6);
            prop_assert!(out.gamma.iter().all(|&g| (0.0..=1.0).contains(&g)));
            prop_assert!((out.gamma.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }
}
