use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::irf::Irf;
use super::FitError;

/// Peak train `c + Σ_k h_k·e^{−|t − k·P − t0|/τ}`, optionally convolved with
/// an instrument response. Parameters: `background, t0, tau, period`, then one
/// height per entry of `peaks` (named `h[k]`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpTrain {
    pub peaks: Vec<i64>,
    pub irf: Option<Irf>,
}

impl ExpTrain {
    pub const BACKGROUND: usize = 0;
    pub const T0: usize = 1;
    pub const TAU: usize = 2;
    pub const PERIOD: usize = 3;
    pub const FIRST_HEIGHT: usize = 4;

    /// Peaks `−n..=n`.
    pub fn symmetric(n: i64, irf: Option<Irf>) -> Self {
        Self {
            peaks: (-n..=n).collect(),
            irf,
        }
    }

    pub fn height_index(&self, peak: i64) -> Option<usize> {
        self.peaks
            .iter()
            .position(|&k| k == peak)
            .map(|i| Self::FIRST_HEIGHT + i)
    }
}

/// Model functions available to the fitter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ModelSpec {
    /// `A·e^{−(t−t0)/τ} + c` for `t ≥ t0`, `c` before. Parameters
    /// `amplitude, t0, tau, background`.
    ExpDecay,
    ExpTrain(ExpTrain),
    /// `A·(Γ/2)²/((E−E0)² + (Γ/2)²) + c`. Parameters
    /// `amplitude, center, fwhm, background`.
    Lorentzian,
    /// `I0·(1 + ρ·cos 2(θ − θ0))/2 + c` with angles in degrees. Parameters
    /// `intensity, dop, theta0_deg, background`.
    Malus,
    /// Lifetime `1/γ(δ)` of the detuned decay model at fixed free-space rate.
    /// Parameters `f_res, f_inh, kappa`.
    DetunedLifetime { gamma_free_per_ns: f64 },
}

fn sign(u: f64) -> f64 {
    if u > 0.0 {
        1.0
    } else if u < 0.0 {
        -1.0
    } else {
        0.0
    }
}

impl ModelSpec {
    pub fn param_names(&self) -> Vec<String> {
        let fixed: &[&str] = match self {
            ModelSpec::ExpDecay => &["amplitude", "t0", "tau", "background"],
            ModelSpec::ExpTrain(_) => &["background", "t0", "tau", "period"],
            ModelSpec::Lorentzian => &["amplitude", "center", "fwhm", "background"],
            ModelSpec::Malus => &["intensity", "dop", "theta0_deg", "background"],
            ModelSpec::DetunedLifetime { .. } => &["f_res", "f_inh", "kappa"],
        };
        let mut names: Vec<String> = fixed.iter().map(|s| s.to_string()).collect();
        if let ModelSpec::ExpTrain(t) = self {
            names.extend(t.peaks.iter().map(|k| format!("h[{k}]")));
        }
        names
    }

    pub fn n_params(&self) -> usize {
        match self {
            ModelSpec::ExpTrain(t) => ExpTrain::FIRST_HEIGHT + t.peaks.len(),
            ModelSpec::DetunedLifetime { .. } => 3,
            _ => 4,
        }
    }

    /// Whether `p` lies in the model's domain (positive widths and scales).
    pub fn in_domain(&self, p: &[f64]) -> bool {
        if p.iter().any(|v| !v.is_finite()) {
            return false;
        }
        match self {
            ModelSpec::ExpDecay => p[2] > 0.0,
            ModelSpec::ExpTrain(_) => p[ExpTrain::TAU] > 0.0 && p[ExpTrain::PERIOD] > 0.0,
            ModelSpec::Lorentzian => p[2] > 0.0,
            ModelSpec::Malus => p[0] >= 0.0 && p[1].abs() <= 1.0,
            ModelSpec::DetunedLifetime { .. } => p[0] > 0.0 && p[1] > 0.0 && p[2] > 0.0,
        }
    }

    /// Checks that `x` suits the model; IRF convolution needs a uniform grid
    /// with the kernel's spacing.
    pub fn check_grid(&self, x: &[f64]) -> Result<(), FitError> {
        if let ModelSpec::ExpTrain(ExpTrain { irf: Some(irf), .. }) = self {
            if x.len() < 2 {
                return Err(FitError::Input("IRF convolution needs at least two points".into()));
            }
            let w = irf.bin_width_ps();
            for pair in x.windows(2) {
                if ((pair[1] - pair[0]) - w).abs() > 1e-6 * w {
                    return Err(FitError::Input(format!(
                        "IRF convolution needs ascending data spaced by the IRF bin width {w} ps"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Positions where the model is not differentiable in its parameters.
    pub fn kinks(&self, p: &[f64]) -> Vec<f64> {
        match self {
            ModelSpec::ExpDecay => vec![p[1]],
            ModelSpec::ExpTrain(t) if t.irf.is_none() => t
                .peaks
                .iter()
                .map(|&k| p[ExpTrain::T0] + k as f64 * p[ExpTrain::PERIOD])
                .collect(),
            _ => Vec::new(),
        }
    }

    pub fn eval(&self, x: &[f64], p: &[f64]) -> Vec<f64> {
        match self {
            ModelSpec::ExpTrain(t) => match &t.irf {
                None => x.iter().map(|&xi| train_value(t, xi, p)).collect(),
                Some(irf) => {
                    let padded: Vec<f64> = padded_grid(x, irf)
                        .iter()
                        .map(|&xi| train_value(t, xi, p))
                        .collect();
                    irf.convolve_padded(&padded, x.len())
                }
            },
            _ => x.iter().map(|&xi| self.point_value(xi, p)).collect(),
        }
    }

    /// Analytic Jacobian `∂f(x_i)/∂p_j`.
    pub fn jacobian(&self, x: &[f64], p: &[f64]) -> DMatrix<f64> {
        let m = self.n_params();
        match self {
            ModelSpec::ExpTrain(t) => match &t.irf {
                None => {
                    let mut jac = DMatrix::zeros(x.len(), m);
                    for (i, &xi) in x.iter().enumerate() {
                        train_gradient(t, xi, p, |j, v| jac[(i, j)] = v);
                    }
                    jac
                }
                Some(irf) => {
                    let grid = padded_grid(x, irf);
                    let mut cols = vec![vec![0.0; grid.len()]; m];
                    for (i, &xi) in grid.iter().enumerate() {
                        train_gradient(t, xi, p, |j, v| cols[j][i] = v);
                    }
                    let mut jac = DMatrix::zeros(x.len(), m);
                    for (j, col) in cols.iter().enumerate() {
                        for (i, v) in irf.convolve_padded(col, x.len()).into_iter().enumerate() {
                            jac[(i, j)] = v;
                        }
                    }
                    jac
                }
            },
            _ => {
                let mut jac = DMatrix::zeros(x.len(), m);
                for (i, &xi) in x.iter().enumerate() {
                    let g = self.point_gradient(xi, p);
                    for (j, v) in g.iter().enumerate() {
                        jac[(i, j)] = *v;
                    }
                }
                jac
            }
        }
    }

    fn point_value(&self, x: f64, p: &[f64]) -> f64 {
        match self {
            ModelSpec::ExpDecay => {
                let (a, t0, tau, c) = (p[0], p[1], p[2], p[3]);
                if x >= t0 {
                    a * (-(x - t0) / tau).exp() + c
                } else {
                    c
                }
            }
            ModelSpec::Lorentzian => {
                let (a, e0, g, c) = (p[0], p[1], 0.5 * p[2], p[3]);
                a * g * g / ((x - e0).powi(2) + g * g) + c
            }
            ModelSpec::Malus => {
                let (i0, rho, th0, c) = (p[0], p[1], p[2], p[3]);
                i0 * (1.0 + rho * (2.0 * (x - th0).to_radians()).cos()) / 2.0 + c
            }
            ModelSpec::DetunedLifetime { gamma_free_per_ns } => {
                let (fr, fi, k) = (p[0], p[1], p[2]);
                let l = k * k / (k * k + 4.0 * x * x);
                1.0 / (gamma_free_per_ns * (fi + (fr - fi) * l))
            }
            ModelSpec::ExpTrain(_) => unreachable!("handled in eval"),
        }
    }

    fn point_gradient(&self, x: f64, p: &[f64]) -> Vec<f64> {
        match self {
            ModelSpec::ExpDecay => {
                let (a, t0, tau) = (p[0], p[1], p[2]);
                if x >= t0 {
                    let e = (-(x - t0) / tau).exp();
                    vec![e, a * e / tau, a * e * (x - t0) / (tau * tau), 1.0]
                } else {
                    vec![0.0, 0.0, 0.0, 1.0]
                }
            }
            ModelSpec::Lorentzian => {
                let (a, e0, g) = (p[0], p[1], 0.5 * p[2]);
                let u = x - e0;
                let d = u * u + g * g;
                vec![
                    g * g / d,
                    a * g * g * 2.0 * u / (d * d),
                    a * g * u * u / (d * d),
                    1.0,
                ]
            }
            ModelSpec::Malus => {
                let (i0, rho, th0) = (p[0], p[1], p[2]);
                let arg = 2.0 * (x - th0).to_radians();
                vec![
                    (1.0 + rho * arg.cos()) / 2.0,
                    i0 * arg.cos() / 2.0,
                    i0 * rho * arg.sin() * std::f64::consts::PI / 180.0,
                    1.0,
                ]
            }
            ModelSpec::DetunedLifetime { gamma_free_per_ns } => {
                let g = *gamma_free_per_ns;
                let (fr, fi, k) = (p[0], p[1], p[2]);
                let q = k * k + 4.0 * x * x;
                let l = k * k / q;
                let d = g * (fi + (fr - fi) * l);
                let dl_dk = 8.0 * k * x * x / (q * q);
                let s = -1.0 / (d * d);
                vec![s * g * l, s * g * (1.0 - l), s * g * (fr - fi) * dl_dk]
            }
            ModelSpec::ExpTrain(_) => unreachable!("handled in jacobian"),
        }
    }
}

fn padded_grid(x: &[f64], irf: &Irf) -> Vec<f64> {
    let pad = irf.padding() as i64;
    let w = irf.bin_width_ps();
    (-pad..x.len() as i64 + pad).map(|i| x[0] + i as f64 * w).collect()
}

fn train_value(t: &ExpTrain, x: f64, p: &[f64]) -> f64 {
    let (t0, tau, period) = (p[ExpTrain::T0], p[ExpTrain::TAU], p[ExpTrain::PERIOD]);
    let mut f = p[ExpTrain::BACKGROUND];
    for (i, &k) in t.peaks.iter().enumerate() {
        let u = x - k as f64 * period - t0;
        f += p[ExpTrain::FIRST_HEIGHT + i] * (-u.abs() / tau).exp();
    }
    f
}

fn train_gradient(t: &ExpTrain, x: f64, p: &[f64], mut set: impl FnMut(usize, f64)) {
    let (t0, tau, period) = (p[ExpTrain::T0], p[ExpTrain::TAU], p[ExpTrain::PERIOD]);
    let (mut d_t0, mut d_tau, mut d_period) = (0.0, 0.0, 0.0);
    set(ExpTrain::BACKGROUND, 1.0);
    for (i, &k) in t.peaks.iter().enumerate() {
        let u = x - k as f64 * period - t0;
        let e = (-u.abs() / tau).exp();
        let h = p[ExpTrain::FIRST_HEIGHT + i];
        set(ExpTrain::FIRST_HEIGHT + i, e);
        let s = h * e * sign(u) / tau;
        d_t0 += s;
        d_period += s * k as f64;
        d_tau += h * e * u.abs() / (tau * tau);
    }
    set(ExpTrain::T0, d_t0);
    set(ExpTrain::TAU, d_tau);
    set(ExpTrain::PERIOD, d_period);
}
