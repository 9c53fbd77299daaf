//! Finite-difference verification of analytic gradients.
//!
//! For each element of each named parameter the central difference
//! `(L(θ+ε) − L(θ−ε)) / 2ε` is compared against the gradient produced by the
//! backward pass. This is the independent oracle for everything the graph
//! computes; it must never share code with the backward implementation.

use std::collections::BTreeMap;

use crate::tensor::Param;
use crate::NumericError;

/// Outcome of a finite-difference sweep over a set of parameters.
#[derive(Debug, Clone)]
pub struct GradCheckReport {
    /// Largest relative error over every element of every parameter.
    pub max_relative_error: f64,
    /// Name of the parameter holding that element.
    pub worst_parameter: String,
    /// Per-parameter maxima, keyed by parameter name.
    pub per_parameter_errors: BTreeMap<String, f64>,
}

/// Relative error used throughout: `|a−n| / max(1e-8, |a|+|n|)`.
fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (1e-8_f64).max(analytic.abs() + numeric.abs())
}

/// Compare analytic gradients against central finite differences.
///
/// `loss_fn(false)` must evaluate the loss from the current parameter values
/// without touching gradients; `loss_fn(true)` must additionally run a
/// backward pass that accumulates into the parameter gradients. The closure
/// has to be deterministic. `eps` is restricted to `[1e-7, 1e-3]`, the range
/// where central differences are trustworthy in double precision.
pub fn finite_diff_check(
    params: &[(String, Param)],
    eps: f64,
    mut loss_fn: impl FnMut(bool) -> Result<f64, NumericError>,
) -> Result<GradCheckReport, NumericError> {
    if !(1e-7..=1e-3).contains(&eps) {
        return Err(NumericError::Contract {
            op: "finite_diff_check",
            msg: format!("eps must be in [1e-7, 1e-3], got {eps}"),
        });
    }

    for (name, p) in params {
        p.borrow_mut().zero_grad();
        if !p.borrow().is_finite() {
            return Err(NumericError::NonFinite { context: format!("parameter {name}") });
        }
    }

    let base = loss_fn(true)?;
    if !base.is_finite() {
        return Err(NumericError::NonFinite { context: "loss at base point".to_string() });
    }
    let analytic: Vec<Vec<f64>> =
        params.iter().map(|(_, p)| p.borrow().grad().unwrap_or(&[]).to_vec()).collect();

    let mut per_parameter_errors = BTreeMap::new();
    let mut max_relative_error = 0.0;
    let mut worst_parameter = String::new();

    for (pi, (name, p)) in params.iter().enumerate() {
        let numel = p.numel();
        let mut worst = 0.0_f64;
        for i in 0..numel {
            let original = p.borrow().values()[i];

            p.borrow_mut().values_mut()[i] = original + eps;
            let up = loss_fn(false)?;
            p.borrow_mut().values_mut()[i] = original - eps;
            let down = loss_fn(false)?;
            p.borrow_mut().values_mut()[i] = original;

            if !up.is_finite() || !down.is_finite() {
                return Err(NumericError::NonFinite {
                    context: format!("loss while perturbing {name}[{i}]"),
                });
            }
            let numeric = (up - down) / (2.0 * eps);
            worst = worst.max(relative_error(analytic[pi][i], numeric));
        }
        if worst > max_relative_error {
            max_relative_error = worst;
            worst_parameter = name.clone();
        }
        per_parameter_errors.insert(name.clone(), worst);
    }

    Ok(GradCheckReport { max_relative_error, worst_parameter, per_parameter_errors })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;
    use crate::tensor::Tensor;

    #[test]
    fn linear_loss_is_exact() {
        // L = Σ wᵢ xᵢ: central differences are exact for linear functions.
        let w = Param::new(Tensor::vector(vec![0.3, -1.2, 2.5]));
        let x = vec![1.0, 2.0, -0.5];
        let params = vec![("w".to_string(), w.clone())];
        let report = finite_diff_check(&params, 1e-5, |with_grad| {
            let mut g = Graph::new();
            let wn = g.param(&w);
            let xn = g.constant_vector(x.clone());
            let d = g.dot(wn, xn)?;
            if with_grad {
                g.backward(d)?;
            }
            Ok(g.scalar_value(d))
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-10, "{report:?}");
        assert_eq!(report.worst_parameter, "w");
    }

    #[test]
    fn quadratic_loss_within_taylor_bound() {
        // L = Σ wᵢ²: truncation error is O(eps²).
        let w = Param::new(Tensor::vector(vec![0.7, -0.4]));
        let params = vec![("w".to_string(), w.clone())];
        let report = finite_diff_check(&params, 1e-5, |with_grad| {
            let mut g = Graph::new();
            let wn = g.param(&w);
            let sq = g.mul(wn, wn)?;
            let s = g.sum(sq);
            if with_grad {
                g.backward(s)?;
            }
            Ok(g.scalar_value(s))
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-8, "{report:?}");
    }

    #[test]
    fn composite_matmul_tanh_sum() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let a = Param::new(
            Tensor::new(vec![3, 4], (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
        );
        let b = Param::new(
            Tensor::new(vec![4, 2], (0..8).map(|_| rng.gen_range(-1.0..1.0)).collect()).unwrap(),
        );
        let params = vec![("a".to_string(), a.clone()), ("b".to_string(), b.clone())];
        let report = finite_diff_check(&params, 1e-5, |with_grad| {
            let mut g = Graph::new();
            let an = g.param(&a);
            let bn = g.param(&b);
            let mm = g.matmul(an, bn)?;
            let t = g.tanh(mm);
            let s = g.sum(t);
            if with_grad {
                g.backward(s)?;
            }
            Ok(g.scalar_value(s))
        })
        .unwrap();
        assert!(report.max_relative_error < 1e-6, "{report:?}");
        // The headline number is the max over the per-parameter map.
        let map_max = report.per_parameter_errors.values().copied().fold(0.0, f64::max);
        assert_eq!(report.max_relative_error, map_max);
        assert!(report.per_parameter_errors.contains_key(&report.worst_parameter));
    }

    #[test]
    fn eps_out_of_range_rejected() {
        let w = Param::new(Tensor::scalar(1.0));
        let params = vec![("w".to_string(), w)];
        assert!(finite_diff_check(&params, 1e-2, |_| Ok(0.0)).is_err());
        assert!(finite_diff_check(&params, 1e-8, |_| Ok(0.0)).is_err());
    }

    #[test]
    fn non_finite_loss_is_a_fault() {
        let w = Param::new(Tensor::scalar(1.0));
        let params = vec![("w".to_string(), w)];
        let err = finite_diff_check(&params, 1e-5, |_| Ok(f64::NAN)).unwrap_err();
        assert!(matches!(err, NumericError::NonFinite { .. }));
    }
}
