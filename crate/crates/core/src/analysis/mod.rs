//! Figures of merit built from the correlator and the fitter: g²(0), HOM
//! visibility, lifetimes and their detuning dependence, degree of
//! polarization, emission linewidth and the brightness budget.

mod budget;
mod dop;
mod hbt;
mod hom;
mod lifetime;
mod linewidth;

pub use budget::{brightness_budget, deadtime_correct, BudgetEntry, BudgetResult, BudgetTable};
pub use dop::{dop_fit, DopResult};
pub use hbt::{hbt_g2, hbt_g2_with, measure_irf, HbtOptions, HbtResult};
pub use hom::{
    dephasing_estimate, hom_visibility, hom_visibility_with, visibility_closed_form,
    visibility_from_areas, DephasingEstimate, HomOptions, HomResult, HomWindow, PeakAreas,
    TimescaleMode,
};
pub use lifetime::{
    fit_lifetime, lifetime_vs_detuning, rate_ratio, DetuningFit, DetuningPoint, DetuningSeries,
    LifetimeOptions, LifetimeResult, RateRatio,
};
pub use linewidth::{linewidth, LinewidthResult};

use thiserror::Error;

use crate::correlator::CorrelatorError;
use crate::fitkit::{lm_fit, poisson_weights, FitError, FitOptions, FitResult, ModelSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AnalysisError {
    #[error(transparent)]
    Correlator(#[from] CorrelatorError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("fit did not converge after {} iterations (reduced χ² {:.4})", .0.n_iterations, .0.reduced_chi2)]
    NotConverged(Box<FitResult>),
    #[error("{0}")]
    Input(String),
    #[error("value outside the domain: {0}")]
    Domain(String),
    #[error("visibility undefined: {0}")]
    UndefinedVisibility(String),
}

/// Passes of weight refinement after the initial fit.
const IRLS_PASSES: usize = 6;
/// Model-value floor for the refined weights.
const WEIGHT_FLOOR: f64 = 0.1;

/// Fit to Poisson-distributed counts. The first pass uses weights
/// `1/max(y, 1)`; later passes reweight with `1/max(f̂, 0.1)` from the current
/// model, whose fixed point solves the Poisson likelihood equations and removes
/// the low-count bias of data-based weights.
pub(crate) fn poisson_fit(
    model: &ModelSpec,
    x: &[f64],
    y: &[f64],
    initial: &[f64],
    fixed: Vec<bool>,
) -> Result<FitResult, AnalysisError> {
    let options = FitOptions::default().with_fixed(fixed);
    let mut fit = lm_fit(model, x, y, &poisson_weights(y), initial, &options)?;
    for _ in 0..IRLS_PASSES {
        if !fit.converged {
            break;
        }
        let w: Vec<f64> = model
            .eval(x, &fit.params)
            .iter()
            .map(|f| 1.0 / f.max(WEIGHT_FLOOR))
            .collect();
        let next = lm_fit(model, x, y, &w, &fit.params, &options)?;
        let settled = next
            .params
            .iter()
            .zip(&fit.params)
            .zip(&next.std_errors)
            .all(|((a, b), e)| (a - b).abs() <= 1e-3 * e.max(1e-12 * a.abs()));
        fit = next;
        if settled {
            break;
        }
    }
    if !fit.converged {
        return Err(AnalysisError::NotConverged(Box::new(fit)));
    }
    Ok(fit)
}
