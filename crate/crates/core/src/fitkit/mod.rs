//! Weighted damped least-squares fitting with the model functions used by
//! the estimators, including instrument-response convolution.

mod irf;
mod lm;
mod models;

pub use irf::{convolve_with_irf, Irf};
pub use lm::{linear_solve, lm_fit, poisson_weights, FitOptions};
pub use models::{ExpTrain, ModelSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("invalid fit input: {0}")]
    Input(String),
    #[error("normal matrix is rank deficient; unidentifiable parameters: {}", params.join(", "))]
    RankDeficient { params: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub names: Vec<String>,
    pub params: Vec<f64>,
    /// `√diag(covariance)`; zero for fixed parameters.
    pub std_errors: Vec<f64>,
    /// Inverse of `JᵀWJ` over the free parameters (scaled by the reduced χ²
    /// when requested); rows and columns of fixed parameters are zero.
    pub covariance: Vec<Vec<f64>>,
    pub chi2: f64,
    pub reduced_chi2: f64,
    pub dof: usize,
    pub n_iterations: usize,
    pub converged: bool,
    pub fixed: Vec<bool>,
}

impl FitResult {
    pub fn index(&self, name: &str) -> Option<usize> {
        self.names.iter().position(|n| n == name)
    }

    pub fn value(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.params[i])
    }

    pub fn error(&self, name: &str) -> Option<f64> {
        self.index(name).map(|i| self.std_errors[i])
    }

    /// JSON object with `params` and `errors` keyed by name, the covariance
    /// matrix, `reduced_chi2` and `converged`.
    pub fn to_json(&self) -> serde_json::Value {
        let map = |v: &[f64]| {
            serde_json::Value::Object(
                self.names
                    .iter()
                    .zip(v)
                    .map(|(n, x)| (n.clone(), serde_json::json!(x)))
                    .collect(),
            )
        };
        serde_json::json!({
            "params": map(&self.params),
            "errors": map(&self.std_errors),
            "covariance": self.covariance,
            "reduced_chi2": self.reduced_chi2,
            "converged": self.converged,
            "n_iterations": self.n_iterations,
        })
    }
}

/// Largest relative difference between the analytic Jacobian and central
/// finite differences with step `1e-6·(1 + |p|)`.
///
/// Points closer to a model kink than the finite-difference reach are
/// skipped. Entries are compared relative to their own size, floored at 1e-3
/// of the largest entry of the same column, after discounting the round-off
/// bound of the difference quotient.
pub fn jacobian_check(model: &ModelSpec, params: &[f64], x: &[f64]) -> f64 {
    let analytic = model.jacobian(x, params);
    let steps: Vec<f64> = params.iter().map(|p| 1e-6 * (1.0 + p.abs())).collect();
    let reach = kink_reach(model, params, &steps);
    let keep: Vec<bool> = x
        .iter()
        .map(|&xi| model.kinks(params).iter().all(|k| (xi - k).abs() > reach))
        .collect();
    let mut worst: f64 = 0.0;
    for (j, &h) in steps.iter().enumerate() {
        let mut plus = params.to_vec();
        let mut minus = params.to_vec();
        plus[j] += h;
        minus[j] -= h;
        let fp = model.eval(x, &plus);
        let fm = model.eval(x, &minus);
        let col_max = (0..x.len())
            .filter(|&i| keep[i])
            .map(|i| analytic[(i, j)].abs())
            .fold(0.0, f64::max);
        if col_max == 0.0 {
            continue;
        }
        for i in (0..x.len()).filter(|&i| keep[i]) {
            let fd = (fp[i] - fm[i]) / (2.0 * h);
            // Round-off bound of the difference quotient itself.
            let noise = 4.0 * f64::EPSILON * (fp[i].abs() + fm[i].abs()) / (2.0 * h);
            let a = analytic[(i, j)];
            let dev = ((a - fd).abs() - noise).max(0.0) / a.abs().max(1e-3 * col_max);
            worst = worst.max(dev);
        }
    }
    worst
}

/// How far a kink can move when parameters are perturbed by `steps`.
fn kink_reach(model: &ModelSpec, p: &[f64], steps: &[f64]) -> f64 {
    match model {
        ModelSpec::ExpDecay => 2.0 * steps[1],
        ModelSpec::ExpTrain(t) => {
            let kmax = t.peaks.iter().map(|k| k.unsigned_abs()).max().unwrap_or(0) as f64;
            2.0 * (steps[ExpTrain::T0] + kmax * steps[ExpTrain::PERIOD])
        }
        _ => {
            let _ = p;
            0.0
        }
    }
}
