//! Central finite differences, used as an independent check on the tape.

use crate::error::{invalid, Result};

/// `∂f/∂p_i ≈ (f(p + h e_i) − f(p − h e_i)) / 2h` for every coordinate.
pub fn finite_difference_gradient<F>(mut loss: F, params: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> Result<f64>,
{
    if !(step > 0.0) {
        return Err(invalid(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut point = params.to_vec();
    let mut grad = Vec::with_capacity(params.len());
    for i in 0..params.len() {
        let orig = point[i];
        point[i] = orig + step;
        let up = loss(&point)?;
        point[i] = orig - step;
        let down = loss(&point)?;
        point[i] = orig;
        grad.push((up - down) / (2.0 * step));
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic() {
        let g = finite_difference_gradient(|p| Ok(p[0] * p[0]), &[1.0], 1e-4).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-6);
    }

    #[test]
    fn absolute_value_away_from_kink() {
        let g = finite_difference_gradient(|p| Ok(p[0].abs()), &[1.0], 1e-4).unwrap();
        assert!((g[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_nonpositive_step() {
        assert!(finite_difference_gradient(|p| Ok(p[0]), &[1.0], 0.0).is_err());
    }
}
