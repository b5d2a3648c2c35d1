use serde::{Deserialize, Serialize};

use super::{poisson_fit, AnalysisError};
use crate::fitkit::{FitResult, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinewidthResult {
    pub fwhm_uev: f64,
    pub fwhm_error_uev: f64,
    pub center_ev: f64,
    pub center_error_uev: f64,
    /// The fitted width is below two spectrometer bins.
    pub resolution_limited: bool,
    pub bin_uev: f64,
    /// Fit in µeV relative to the mean energy of the grid.
    pub fit: FitResult,
}

/// Emission linewidth from a Lorentzian fit with constant background.
///
/// Energies are in eV on a uniform ascending grid. A fit whose amplitude is
/// below three standard errors has found no line and is reported as an error.
pub fn linewidth(energies_ev: &[f64], counts: &[f64]) -> Result<LinewidthResult, AnalysisError> {
    let n = energies_ev.len();
    if n != counts.len() {
        return Err(AnalysisError::Input("energies and counts differ in length".into()));
    }
    if n < 8 {
        return Err(AnalysisError::Input(format!("need at least 8 spectral bins, got {n}")));
    }
    if energies_ev.iter().chain(counts).any(|v| !v.is_finite()) {
        return Err(AnalysisError::Input("non-finite energy or count".into()));
    }
    if energies_ev.windows(2).any(|p| p[1] <= p[0]) {
        return Err(AnalysisError::Input("energies must be strictly ascending".into()));
    }
    let reference = energies_ev.iter().sum::<f64>() / n as f64;
    let x: Vec<f64> = energies_ev.iter().map(|e| 1e6 * (e - reference)).collect();
    let bin = (x[n - 1] - x[0]) / (n - 1) as f64;

    let edge = (n / 10).max(1);
    let background = (counts[..edge].iter().sum::<f64>() + counts[n - edge..].iter().sum::<f64>())
        / (2 * edge) as f64;
    let (imax, &ymax) = counts
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    let amplitude = ymax - background;
    let above = counts.iter().filter(|&&c| c - background >= 0.5 * amplitude).count();
    let fwhm0 = (above as f64 * bin).max(bin);
    let initial = [amplitude, x[imax], fwhm0, background];

    let fit = poisson_fit(&ModelSpec::Lorentzian, &x, counts, &initial, vec![false; 4])?;
    let (a, sa) = (fit.params[0], fit.std_errors[0]);
    if !(a > 3.0 * sa) {
        return Err(AnalysisError::Domain(format!(
            "no significant line: amplitude {a:.3} ± {sa:.3}"
        )));
    }
    let fwhm = fit.params[2];
    Ok(LinewidthResult {
        fwhm_uev: fwhm,
        fwhm_error_uev: fit.std_errors[2],
        center_ev: reference + 1e-6 * fit.params[1],
        center_error_uev: fit.std_errors[1],
        resolution_limited: fwhm < 2.0 * bin,
        bin_uev: bin,
        fit,
    })
}
