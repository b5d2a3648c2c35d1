use serde::{Deserialize, Serialize};

use super::{poisson_fit, AnalysisError};
use crate::correlator::{start_stop, CorrelationHistogram};
use crate::fitkit::{lm_fit, FitError, FitOptions, FitResult, ModelSpec};
use crate::optics::DetunedDecayModel;
use crate::stream::TimeTagStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeOptions {
    pub sync_channel: u8,
    pub signal_channel: u8,
    pub bin_width_ps: u64,
    /// Start of the fit; by default `skip_ps` after the histogram maximum.
    pub fit_from_ps: Option<f64>,
    /// Gap after the maximum, and before the end of the period, that is left
    /// out of the fit so that the instrument response does not distort it.
    pub skip_ps: f64,
}

impl Default for LifetimeOptions {
    fn default() -> Self {
        Self {
            sync_channel: 0,
            signal_channel: 1,
            bin_width_ps: 100,
            fit_from_ps: None,
            skip_ps: 750.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifetimeResult {
    pub lifetime_ns: f64,
    pub lifetime_error_ns: f64,
    pub fit_from_ps: f64,
    pub fit: FitResult,
    pub histogram: CorrelationHistogram,
}

/// Radiative lifetime from a start-stop histogram over one laser period.
///
/// An exponential with a constant background is fitted to the bins between
/// the fit start and `skip_ps` before the end of the period. Emission that
/// spills into later periods keeps the single-exponential shape.
pub fn fit_lifetime(
    stream: &TimeTagStream,
    period_ps: f64,
    options: &LifetimeOptions,
) -> Result<LifetimeResult, AnalysisError> {
    if !(period_ps > 0.0 && period_ps.is_finite()) {
        return Err(AnalysisError::Input("period must be positive".into()));
    }
    let w = options.bin_width_ps;
    if w == 0 {
        return Err(AnalysisError::Input("bin width must be positive".into()));
    }
    let range = (period_ps / w as f64).floor() as i64 * w as i64;
    let hist = start_stop(stream, options.sync_channel, options.signal_channel, w, range)?;
    let centers = hist.bin_centers();
    let peak = hist
        .counts
        .iter()
        .enumerate()
        .max_by_key(|(i, c)| (**c, std::cmp::Reverse(*i)))
        .map(|(i, _)| centers[i])
        .expect("non-empty histogram");
    let from = options.fit_from_ps.unwrap_or(peak + options.skip_ps);
    let to = range as f64 - options.skip_ps;
    let (x, y): (Vec<f64>, Vec<f64>) = centers
        .iter()
        .zip(&hist.counts)
        .filter(|(t, _)| **t >= from && **t <= to)
        .map(|(t, c)| (*t, *c as f64))
        .unzip();
    if x.len() < 8 {
        return Err(AnalysisError::Input(format!(
            "only {} bins between {from} ps and {to} ps",
            x.len()
        )));
    }
    if y.iter().sum::<f64>() == 0.0 {
        return Err(AnalysisError::Input("no counts in the fit range".into()));
    }
    let tau0 = decay_guess(&x, &y, from);
    let initial = [y[0].max(1.0), from, tau0, 0.0];
    let fit = poisson_fit(&ModelSpec::ExpDecay, &x, &y, &initial, vec![false, true, false, false])?;
    Ok(LifetimeResult {
        lifetime_ns: fit.params[2] / 1000.0,
        lifetime_error_ns: fit.std_errors[2] / 1000.0,
        fit_from_ps: from,
        fit,
        histogram: hist,
    })
}

/// Decay time from the counts in the first and second half of the range.
fn decay_guess(x: &[f64], y: &[f64], from: f64) -> f64 {
    let span = x[x.len() - 1] - from;
    let half = from + 0.5 * span;
    let early: f64 = x.iter().zip(y).filter(|(t, _)| **t < half).map(|(_, c)| c).sum();
    let late: f64 = x.iter().zip(y).filter(|(t, _)| **t >= half).map(|(_, c)| c).sum();
    if late > 0.0 && early > late {
        0.5 * span / (early / late).ln()
    } else {
        span
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetuningPoint {
    pub detuning_mev: f64,
    pub lifetime_ns: f64,
    pub lifetime_error_ns: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningSeries {
    pub points: Vec<DetuningPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetuningFit {
    pub model: DetunedDecayModel,
    pub f_res_error: f64,
    pub f_inh_error: f64,
    pub kappa_error_mev: f64,
    pub fit: FitResult,
    pub warnings: Vec<String>,
}

/// Fits `τ(δ) = 1/γ(δ)` of the detuned decay model at fixed free-space rate,
/// weighting each lifetime by its inverse variance.
///
/// A rank-deficient problem (e.g. a flat series with `κ` unidentifiable) is
/// returned as a fit error naming the parameters involved.
pub fn lifetime_vs_detuning(
    series: &DetuningSeries,
    gamma_free_per_ns: f64,
) -> Result<DetuningFit, AnalysisError> {
    let pts = &series.points;
    if pts.len() < 4 {
        return Err(AnalysisError::Input(format!(
            "need at least 4 detuning points, got {}",
            pts.len()
        )));
    }
    if !(gamma_free_per_ns > 0.0 && gamma_free_per_ns.is_finite()) {
        return Err(AnalysisError::Input("free-space rate must be positive".into()));
    }
    for p in pts {
        if !(p.lifetime_ns > 0.0 && p.lifetime_error_ns > 0.0 && p.detuning_mev.is_finite()) {
            return Err(AnalysisError::Input(format!(
                "point at {} meV needs a positive lifetime and error",
                p.detuning_mev
            )));
        }
    }
    let x: Vec<f64> = pts.iter().map(|p| p.detuning_mev).collect();
    let y: Vec<f64> = pts.iter().map(|p| p.lifetime_ns).collect();
    let w: Vec<f64> = pts.iter().map(|p| p.lifetime_error_ns.powi(-2)).collect();

    let rate = |tau: f64| 1.0 / (gamma_free_per_ns * tau);
    let tau_min = y.iter().cloned().fold(f64::INFINITY, f64::min);
    let tau_max = y.iter().cloned().fold(0.0, f64::max);
    let (f_res, f_inh) = (rate(tau_min), rate(tau_max));
    let kappa = kappa_guess(&x, &y, f_res, f_inh, rate);
    let mut warnings = Vec::new();
    if !(x.iter().any(|&d| d < 0.0) && x.iter().any(|&d| d > 0.0)) {
        warnings.push("all detunings lie on one side of the resonance; the fit is poorly conditioned".to_string());
    }
    let model = ModelSpec::DetunedLifetime { gamma_free_per_ns };
    let fit = lm_fit(&model, &x, &y, &w, &[f_res, f_inh, kappa], &FitOptions::default())?;
    if !fit.converged {
        return Err(AnalysisError::NotConverged(Box::new(fit)));
    }
    let (fr, fi, k) = (fit.params[0], fit.params[1], fit.params[2]);
    let span = x.iter().map(|d| d.abs()).fold(0.0, f64::max);
    if span <= k {
        warnings.push(format!(
            "largest detuning {span} meV does not exceed the fitted linewidth {k:.3} meV"
        ));
    }
    let decay = DetunedDecayModel::new(gamma_free_per_ns, fr, fi, k).map_err(|e| {
        AnalysisError::Fit(FitError::Input(format!("fitted parameters are unphysical: {e}")))
    })?;
    Ok(DetuningFit {
        model: decay,
        f_res_error: fit.std_errors[0],
        f_inh_error: fit.std_errors[1],
        kappa_error_mev: fit.std_errors[2],
        fit,
        warnings,
    })
}

/// Linewidth from the detunings where the rate sits between its extremes:
/// the Lorentzian fraction `L` gives `κ = 2|δ|·√(L/(1 − L))`.
fn kappa_guess(x: &[f64], y: &[f64], f_res: f64, f_inh: f64, rate: impl Fn(f64) -> f64) -> f64 {
    let estimates: Vec<f64> = x
        .iter()
        .zip(y)
        .filter_map(|(&d, &tau)| {
            if f_res <= f_inh || d == 0.0 {
                return None;
            }
            let l = (rate(tau) - f_inh) / (f_res - f_inh);
            (0.1..=0.9).contains(&l).then(|| 2.0 * d.abs() * (l / (1.0 - l)).sqrt())
        })
        .collect();
    if estimates.is_empty() {
        let mut abs: Vec<f64> = x.iter().map(|d| d.abs()).filter(|d| *d > 0.0).collect();
        abs.sort_by(f64::total_cmp);
        abs.get(abs.len() / 2).copied().unwrap_or(1.0)
    } else {
        estimates.iter().sum::<f64>() / estimates.len() as f64
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateRatio {
    pub ratio: f64,
    pub error: f64,
}

/// Ratio of the on-resonance to the far-detuned decay rate, `τ_far/τ_res`,
/// with relative errors added in quadrature.
pub fn rate_ratio(
    tau_res_ns: f64,
    tau_res_error_ns: f64,
    tau_far_ns: f64,
    tau_far_error_ns: f64,
) -> Result<RateRatio, AnalysisError> {
    if !(tau_res_ns > 0.0 && tau_far_ns > 0.0) {
        return Err(AnalysisError::Input("lifetimes must be positive".into()));
    }
    if !(tau_res_error_ns >= 0.0 && tau_far_error_ns >= 0.0) {
        return Err(AnalysisError::Input("lifetime errors must be non-negative".into()));
    }
    let ratio = tau_far_ns / tau_res_ns;
    let rel = ((tau_res_error_ns / tau_res_ns).powi(2) + (tau_far_error_ns / tau_far_ns).powi(2)).sqrt();
    Ok(RateRatio {
        ratio,
        error: ratio * rel,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{simulate_decay, EmitterModel, InstrumentChain, PulseTrain};

    #[test]
    fn recovers_simulated_lifetime() {
        let emitter = EmitterModel {
            t1_ns: 2.3,
            ..EmitterModel::default()
        };
        let chain = InstrumentChain {
            eta_first_lens: 1.0,
            eta_setup: 0.2,
            ..InstrumentChain::default()
        };
        let train = PulseTrain::new(76_227.93, 500_000, 5);
        let out = simulate_decay(&emitter, &chain, &train).unwrap();
        let r = fit_lifetime(&out.stream, train.period_ps(), &LifetimeOptions::default()).unwrap();
        assert!((r.lifetime_ns - 2.3).abs() < 4.0 * r.lifetime_error_ns, "{} ± {}", r.lifetime_ns, r.lifetime_error_ns);
        assert!(r.lifetime_error_ns < 0.03, "{}", r.lifetime_error_ns);
    }

    #[test]
    fn ratio_example() {
        let r = rate_ratio(1.725, 0.02, 4.66, 0.1).unwrap();
        assert!((r.ratio - 2.70).abs() < 0.01);
        assert!(r.error > 0.0 && r.error < 0.08);
        assert!(rate_ratio(0.0, 0.1, 1.0, 0.1).is_err());
    }

    fn series(model: &DetunedDecayModel, detunings: &[f64]) -> DetuningSeries {
        DetuningSeries {
            points: detunings
                .iter()
                .map(|&d| DetuningPoint {
                    detuning_mev: d,
                    lifetime_ns: model.lifetime_ns(d),
                    lifetime_error_ns: 0.03 * model.lifetime_ns(d),
                })
                .collect(),
        }
    }

    #[test]
    fn noiseless_series_is_recovered() {
        let truth = DetunedDecayModel::new(1.0 / 2.3, 1.333, 0.492, 2.62).unwrap();
        let d: Vec<f64> = (-8..=8).map(|i| i as f64).collect();
        let fit = lifetime_vs_detuning(&series(&truth, &d), 1.0 / 2.3).unwrap();
        assert!((fit.model.f_res - 1.333).abs() < 1e-6);
        assert!((fit.model.f_inh - 0.492).abs() < 1e-6);
        assert!((fit.model.kappa_mev - 2.62).abs() < 1e-5);
        assert!(fit.warnings.is_empty());
    }

    #[test]
    fn one_sided_series_warns() {
        let truth = DetunedDecayModel::new(1.0 / 2.3, 1.333, 0.492, 2.62).unwrap();
        let d: Vec<f64> = (0..=8).map(|i| i as f64).collect();
        let fit = lifetime_vs_detuning(&series(&truth, &d), 1.0 / 2.3).unwrap();
        assert_eq!(fit.warnings.len(), 1);
    }

    #[test]
    fn flat_series_is_unidentifiable() {
        let s = DetuningSeries {
            points: (-4..=4)
                .map(|i| DetuningPoint {
                    detuning_mev: i as f64,
                    lifetime_ns: 2.3,
                    lifetime_error_ns: 0.05,
                })
                .collect(),
        };
        match lifetime_vs_detuning(&s, 1.0 / 2.3) {
            Err(AnalysisError::Fit(FitError::RankDeficient { params })) => {
                assert!(params.contains(&"kappa".to_string()))
            }
            other => panic!("{other:?}"),
        }
        let short = DetuningSeries {
            points: s.points[..3].to_vec(),
        };
        assert!(lifetime_vs_detuning(&short, 1.0 / 2.3).is_err());
    }
}
