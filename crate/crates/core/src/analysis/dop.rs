use serde::{Deserialize, Serialize};

use super::{poisson_fit, AnalysisError};
use crate::fitkit::{FitError, FitResult, ModelSpec};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DopResult {
    /// `(I_max − I_min)/(I_max + I_min)` of the fitted curve.
    pub rho: f64,
    pub rho_error: f64,
    /// Angle of maximum transmission in `[0, 180)`.
    pub theta0_deg: f64,
    pub theta0_error: f64,
    /// Set when the data carry no polarization contrast and the angle was
    /// held fixed.
    pub undefined_angle: bool,
    pub fit: FitResult,
}

/// Degree of linear polarization from intensities behind a rotating
/// polarizer, fitted with Malus's law without background.
///
/// The angles must cover at least `180°·(1 − 1/n)` for `n` angles, i.e. a
/// full half turn of the polarizer at the sampling step.
pub fn dop_fit(angles_deg: &[f64], intensities: &[f64]) -> Result<DopResult, AnalysisError> {
    let n = angles_deg.len();
    if n != intensities.len() {
        return Err(AnalysisError::Input("angles and intensities differ in length".into()));
    }
    if n < 8 {
        return Err(AnalysisError::Input(format!("need at least 8 angles, got {n}")));
    }
    if angles_deg.iter().chain(intensities).any(|v| !v.is_finite()) {
        return Err(AnalysisError::Input("non-finite angle or intensity".into()));
    }
    if intensities.iter().any(|&v| v < 0.0) {
        return Err(AnalysisError::Input("intensities must be non-negative".into()));
    }
    let lo = angles_deg.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = angles_deg.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let need = 180.0 * (1.0 - 1.0 / n as f64);
    if hi - lo < need - 1e-9 {
        return Err(AnalysisError::Input(format!(
            "angles span {:.1}°, need at least {need:.1}°",
            hi - lo
        )));
    }
    let total: f64 = intensities.iter().sum();
    if total == 0.0 {
        return Err(AnalysisError::Input("all intensities are zero".into()));
    }

    // Second Fourier component of I(θ).
    let mean = total / n as f64;
    let (mut c, mut s) = (0.0, 0.0);
    for (a, i) in angles_deg.iter().zip(intensities) {
        let t = 2.0 * a.to_radians();
        c += i * t.cos();
        s += i * t.sin();
    }
    c *= 2.0 / n as f64;
    s *= 2.0 / n as f64;
    let mut rho0 = ((c * c + s * s).sqrt() / mean).min(0.99);
    if rho0 < 1e-9 {
        // Round-off contrast only; start from the unpolarized point.
        rho0 = 0.0;
    }
    let theta0 = 0.5 * s.atan2(c).to_degrees();
    let initial = [2.0 * mean, rho0, theta0, 0.0];

    let model = ModelSpec::Malus;
    let (fit, undefined_angle) =
        match poisson_fit(&model, angles_deg, intensities, &initial, vec![false, false, false, true]) {
            Ok(fit) => (fit, false),
            Err(AnalysisError::Fit(FitError::RankDeficient { .. })) => {
                let fit = poisson_fit(
                    &model,
                    angles_deg,
                    intensities,
                    &initial,
                    vec![false, false, true, true],
                )?;
                (fit, true)
            }
            Err(e) => return Err(e),
        };
    let mut rho = fit.params[1];
    let mut theta = fit.params[2];
    if rho < 0.0 {
        rho = -rho;
        theta += 90.0;
    }
    Ok(DopResult {
        rho,
        rho_error: fit.std_errors[1],
        theta0_deg: theta.rem_euclid(180.0),
        theta0_error: fit.std_errors[2],
        undefined_angle,
        fit,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::synthetic::{uniform_grid, PolarizationScan};

    fn scan(theta0: f64, dop: f64) -> PolarizationScan {
        PolarizationScan {
            peak_counts: 20_000.0,
            dop,
            theta0_deg: theta0,
            background: 0.0,
        }
    }

    #[test]
    fn noiseless_recovery() {
        let angles = uniform_grid(0.0, 10.0, 36);
        let s = scan(23.0, 0.984);
        let y: Vec<f64> = angles.iter().map(|&a| s.mean_counts(a)).collect();
        let r = dop_fit(&angles, &y).unwrap();
        assert!((r.rho - 0.984).abs() < 1e-8);
        assert!((r.theta0_deg - 23.0).abs() < 1e-6);
        assert!(!r.undefined_angle);
    }

    #[test]
    fn quarter_turn_swaps_extremes_only() {
        let angles = uniform_grid(0.0, 10.0, 36);
        let a = scan(23.0, 0.9).sample(&angles, 4).unwrap();
        let b = scan(113.0, 0.9).sample(&angles, 4).unwrap();
        let (ra, rb) = (dop_fit(&angles, &a).unwrap(), dop_fit(&angles, &b).unwrap());
        assert!((ra.rho - 0.9).abs() < 3.0 * ra.rho_error);
        assert!((rb.rho - 0.9).abs() < 3.0 * rb.rho_error);
        assert!((rb.theta0_deg - 113.0).abs() < 1.0);
    }

    #[test]
    fn unpolarized_light() {
        let angles = uniform_grid(0.0, 10.0, 36);
        let y = scan(0.0, 0.0).sample(&angles, 9).unwrap();
        let r = dop_fit(&angles, &y).unwrap();
        assert!(r.rho < 2.0 * r.rho_error + 1e-3, "{} ± {}", r.rho, r.rho_error);
        let flat = vec![500.0; 36];
        let r = dop_fit(&angles, &flat).unwrap();
        assert!(r.undefined_angle);
        assert!(r.rho.abs() < 1e-9);
    }

    #[test]
    fn sampling_requirements() {
        let few = uniform_grid(0.0, 20.0, 7);
        assert!(dop_fit(&few, &[1.0; 7]).is_err());
        let narrow = uniform_grid(0.0, 5.0, 20);
        assert!(dop_fit(&narrow, &[1.0; 20]).is_err());
    }
}
