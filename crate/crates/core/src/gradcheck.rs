//! Central finite-difference verification of backward rules.
//!
//! A computation is supplied as a closure that rebuilds the graph on a fresh
//! tape from a slice of leaf ids. The checker runs one analytic backward
//! pass, then perturbs sampled coordinates by `±h` and compares against the
//! central difference.

use crate::error::TensorError;
use crate::rng::Rng;
use crate::tape::{Tape, TensorId};
use crate::tensor::Tensor;

#[derive(Debug, Clone)]
pub struct GradCheckConfig {
    /// Central-difference step.
    pub step: f64,
    /// Cap on checked coordinates per parameter tensor; `None` checks all.
    pub max_coords_per_tensor: Option<usize>,
    /// Seed for coordinate sampling when capped.
    pub seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig {
            step: 1e-5,
            max_coords_per_tensor: None,
            seed: 0,
        }
    }
}

/// Maximum relative error between analytic and numeric gradients, taken
/// over sampled coordinates of every parameter:
/// `|analytic - central| / max(1, |analytic|)`.
pub fn grad_check<F>(
    build: F,
    params: &[Tensor],
    cfg: &GradCheckConfig,
) -> Result<f64, TensorError>
where
    F: Fn(&mut Tape, &[TensorId]) -> Result<TensorId, TensorError>,
{
    // Analytic pass.
    let mut tape = Tape::new();
    let ids: Vec<TensorId> = params.iter().map(|p| tape.leaf(p.clone())).collect();
    let out = build(&mut tape, &ids)?;
    let value = tape.value(out).item()?;
    if !value.is_finite() {
        return Err(TensorError::NonFinite {
            context: "grad_check output".to_string(),
        });
    }
    tape.backward(out)?;
    let analytic: Vec<Vec<f64>> = ids
        .iter()
        .map(|&id| tape.grad(id).expect("leaf gradient").to_vec())
        .collect();
    if analytic.iter().flatten().any(|g| !g.is_finite()) {
        return Err(TensorError::NonFinite {
            context: "grad_check analytic gradient".to_string(),
        });
    }

    let eval = |perturbed: &[Tensor]| -> Result<f64, TensorError> {
        let mut tape = Tape::new();
        let ids: Vec<TensorId> = perturbed.iter().map(|p| tape.constant(p.clone())).collect();
        let out = build(&mut tape, &ids)?;
        let v = tape.value(out).item()?;
        if !v.is_finite() {
            return Err(TensorError::NonFinite {
                context: "grad_check perturbed evaluation".to_string(),
            });
        }
        Ok(v)
    };

    let mut rng = Rng::new(cfg.seed);
    let mut work: Vec<Tensor> = params.to_vec();
    let mut max_err = 0.0_f64;
    for (pi, param) in params.iter().enumerate() {
        let coords = sample_coords(param.numel(), cfg.max_coords_per_tensor, &mut rng);
        for c in coords {
            let orig = param.data()[c];
            work[pi].data_mut()[c] = orig + cfg.step;
            let plus = eval(&work)?;
            work[pi].data_mut()[c] = orig - cfg.step;
            let minus = eval(&work)?;
            work[pi].data_mut()[c] = orig;
            let numeric = (plus - minus) / (2.0 * cfg.step);
            let a = analytic[pi][c];
            let err = (a - numeric).abs() / a.abs().max(1.0);
            if err > max_err {
                max_err = err;
            }
        }
    }
    Ok(max_err)
}

fn sample_coords(numel: usize, cap: Option<usize>, rng: &mut Rng) -> Vec<usize> {
    match cap {
        Some(cap) if numel > cap => {
            // partial Fisher-Yates: first `cap` entries of a random permutation
            let mut idx: Vec<usize> = (0..numel).collect();
            for i in 0..cap {
                let j = i + rng.index(numel - i);
                idx.swap(i, j);
            }
            idx.truncate(cap);
            idx
        }
        _ => (0..numel).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// sum of squares via xᵀx
    fn sum_of_squares(tape: &mut Tape, ids: &[TensorId]) -> Result<TensorId, TensorError> {
        let n = tape.value(ids[0]).numel();
        let col = tape.reshape(ids[0], vec![n, 1])?;
        let row = tape.transpose(col)?;
        let prod = tape.matmul(row, col)?;
        tape.reshape(prod, vec![])
    }

    #[test]
    fn sum_of_squares_near_machine_precision() {
        let x = Tensor::from_vec(vec![0.3, -1.2, 2.0, 0.0]);
        let err = grad_check(sum_of_squares, &[x], &GradCheckConfig::default()).unwrap();
        assert!(err < 1e-8, "sum of squares gradient error {err}");
    }

    #[test]
    fn constant_function_has_zero_error() {
        let build = |tape: &mut Tape, ids: &[TensorId]| {
            let s = sum_of_squares(tape, ids)?;
            Ok(tape.scale(s, 0.0))
        };
        let x = Tensor::from_vec(vec![1.0, 2.0]);
        let err = grad_check(build, &[x], &GradCheckConfig::default()).unwrap();
        assert_eq!(err, 0.0);
    }

    #[test]
    fn sigmoid_gradient_at_fixed_point() {
        let build = |tape: &mut Tape, ids: &[TensorId]| {
            let y = tape.sigmoid(ids[0]);
            tape.reshape(y, vec![])
        };
        let x = Tensor::from_vec(vec![1.5]);
        let err = grad_check(build, &[x], &GradCheckConfig::default()).unwrap();
        assert!(err < 1e-6, "sigmoid gradient error {err}");
    }

    #[test]
    fn coordinate_sampling_caps_work() {
        let mut rng = Rng::new(1);
        let coords = sample_coords(100, Some(10), &mut rng);
        assert_eq!(coords.len(), 10);
        let mut unique = coords.clone();
        unique.sort_unstable();
        unique.dedup();
        assert_eq!(unique.len(), 10);
    }
}
