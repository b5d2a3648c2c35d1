use serde::{Deserialize, Serialize};

use super::hbt::{centred_range, initial_guess};
use super::{poisson_fit, AnalysisError};
use crate::correlator::{cross_correlate_range, integrate_peaks_with_offset, CorrelationHistogram};
use crate::fitkit::{ExpTrain, ModelSpec};
use crate::stream::TimeTagStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomOptions {
    /// Bin width of the histograms that are integrated.
    pub bin_width_ps: u64,
    /// Bin width of the histogram used to locate the peaks.
    pub fit_bin_width_ps: u64,
    /// Peaks `−n..=n` are integrated.
    pub n_peaks: usize,
    /// Interferometer delay in pulse periods; peaks `±k` carry the
    /// interference-dependent coincidences and are not used as reference.
    pub arm_delay_periods: u64,
    pub channel_a: u8,
    pub channel_b: u8,
}

impl Default for HomOptions {
    fn default() -> Self {
        Self {
            bin_width_ps: 10,
            fit_bin_width_ps: 100,
            n_peaks: 4,
            arm_delay_periods: 1,
            channel_a: 0,
            channel_b: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HomWindow {
    /// Full width of the integration window.
    pub window_ns: f64,
    pub area_hh: f64,
    pub area_hv: f64,
    pub g2_hh: f64,
    pub g2_hv: f64,
    pub visibility: f64,
    pub visibility_error: f64,
    pub ci_low: f64,
    pub ci_high: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HomResult {
    /// Fitted position of the zero-delay peak.
    pub offset_ps: f64,
    pub windows: Vec<HomWindow>,
    pub histogram_hh: CorrelationHistogram,
    pub histogram_hv: CorrelationHistogram,
}

/// HOM visibility with default options.
pub fn hom_visibility(
    stream_hh: &TimeTagStream,
    stream_hv: &TimeTagStream,
    period_ps: f64,
    windows_ns: &[f64],
) -> Result<HomResult, AnalysisError> {
    hom_visibility_with(stream_hh, stream_hv, period_ps, windows_ns, &HomOptions::default())
}

/// Visibility `(g²_HV − g²_HH)/g²_HV` for each full window width, where each
/// g² is the central-peak area over the mean area of the reference peaks
/// (all integrated peaks except `0` and `±k`).
///
/// Windows are centred on the peak positions of an exponential-train fit to
/// the HV histogram. The interval is `V ± σ` with σ from Poisson statistics
/// of the four areas.
pub fn hom_visibility_with(
    stream_hh: &TimeTagStream,
    stream_hv: &TimeTagStream,
    period_ps: f64,
    windows_ns: &[f64],
    options: &HomOptions,
) -> Result<HomResult, AnalysisError> {
    if !(period_ps > 0.0 && period_ps.is_finite()) {
        return Err(AnalysisError::Input("period must be positive".into()));
    }
    if windows_ns.is_empty() {
        return Err(AnalysisError::Input("no integration windows given".into()));
    }
    let n = options.n_peaks as i64;
    let k = options.arm_delay_periods as i64;
    if n <= k {
        return Err(AnalysisError::Input(format!(
            "{n} peaks per side leave no reference peaks beyond the arm delay of {k} periods"
        )));
    }
    for &wn in windows_ns {
        if !(wn > 0.0) || 1000.0 * wn > period_ps {
            return Err(AnalysisError::Input(format!(
                "window {wn} ns must be positive and no wider than the period"
            )));
        }
    }
    let (a, b) = (options.channel_a, options.channel_b);
    let reach = (n as f64 + 0.5) * period_ps;
    let (lo, hi) = centred_range(options.bin_width_ps, reach);
    let hh = cross_correlate_range(stream_hh, a, b, options.bin_width_ps, lo, hi)?;
    let hv = cross_correlate_range(stream_hv, a, b, options.bin_width_ps, lo, hi)?;
    let offset = peak_offset(stream_hv, period_ps, options)?;

    let reference = |m: i64| m != 0 && m.abs() != k && m.abs() <= n;
    let mut windows = Vec::with_capacity(windows_ns.len());
    for &wn in windows_ns {
        let areas = |h: &CorrelationHistogram| -> Result<PeakAreas, AnalysisError> {
            let peaks = integrate_peaks_with_offset(h, period_ps, 1000.0 * wn, offset)?;
            let central = peaks
                .iter()
                .find(|p| p.index == 0)
                .map(|p| p.area)
                .ok_or_else(|| AnalysisError::Input("central peak outside the histogram".into()))?;
            let refs: Vec<f64> = peaks.iter().filter(|p| reference(p.index)).map(|p| p.area).collect();
            Ok(PeakAreas {
                central,
                reference_sum: refs.iter().sum(),
                n_reference: refs.len(),
            })
        };
        let area_hh = areas(&hh)?;
        let area_hv = areas(&hv)?;
        let (visibility, sigma) = visibility_from_areas(&area_hh, &area_hv).map_err(|e| match e {
            AnalysisError::UndefinedVisibility(m) => {
                AnalysisError::UndefinedVisibility(format!("{m} at window {wn} ns"))
            }
            other => other,
        })?;
        windows.push(HomWindow {
            window_ns: wn,
            area_hh: area_hh.central,
            area_hv: area_hv.central,
            g2_hh: area_hh.g2(),
            g2_hv: area_hv.g2(),
            visibility,
            visibility_error: sigma,
            ci_low: visibility - sigma,
            ci_high: visibility + sigma,
        });
    }
    Ok(HomResult {
        offset_ps: offset,
        windows,
        histogram_hh: hh,
        histogram_hv: hv,
    })
}

/// Integrated coincidences of one histogram at one window.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PeakAreas {
    pub central: f64,
    pub reference_sum: f64,
    pub n_reference: usize,
}

impl PeakAreas {
    /// Central area over the mean reference area.
    pub fn g2(&self) -> f64 {
        self.central / (self.reference_sum / self.n_reference as f64)
    }
}

/// Visibility `1 − g²_HH/g²_HV` and its Poisson standard error.
///
/// With `R = g²_HH/g²_HV`, `var(R)/R² = 1/C_HH + 1/ΣS_HH + 1/C_HV + 1/ΣS_HV`;
/// the `C_HH` term keeps a floor of one count so that an empty HH peak still
/// carries an uncertainty.
pub fn visibility_from_areas(hh: &PeakAreas, hv: &PeakAreas) -> Result<(f64, f64), AnalysisError> {
    if hh.n_reference == 0 || hv.n_reference == 0 {
        return Err(AnalysisError::Input("no reference peaks inside the histogram".into()));
    }
    if hv.central == 0.0 {
        return Err(AnalysisError::UndefinedVisibility("HV central area is zero".into()));
    }
    if hh.reference_sum == 0.0 || hv.reference_sum == 0.0 {
        return Err(AnalysisError::UndefinedVisibility("reference peaks are empty".into()));
    }
    let ratio = hh.g2() / hv.g2();
    let per_count = hv.reference_sum / hv.n_reference as f64
        / (hh.reference_sum / hh.n_reference as f64)
        / hv.central;
    let var = per_count * per_count * hh.central.max(1.0)
        + ratio * ratio * (1.0 / hh.reference_sum + 1.0 / hv.central + 1.0 / hv.reference_sum);
    Ok((1.0 - ratio, var.sqrt()))
}

/// Position of the zero-delay peak from a peak-train fit at fixed period.
fn peak_offset(stream: &TimeTagStream, period_ps: f64, options: &HomOptions) -> Result<f64, AnalysisError> {
    let w = options.fit_bin_width_ps;
    if w == 0 {
        return Err(AnalysisError::Input("fit bin width must be positive".into()));
    }
    let fitted = options.n_peaks as i64;
    let (lo, hi) = centred_range(w, (fitted as f64 + 0.5) * period_ps);
    let hist = cross_correlate_range(stream, options.channel_a, options.channel_b, w, lo, hi)?;
    let x = hist.bin_centers();
    let y: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    if y.iter().sum::<f64>() == 0.0 {
        return Err(AnalysisError::UndefinedVisibility("HV histogram is empty".into()));
    }
    let outer = fitted + 1;
    let mut peaks: Vec<i64> = (-fitted..=fitted).collect();
    peaks.extend([-outer, outer]);
    let guess = initial_guess(&x, &y, period_ps, w as f64, fitted);
    let tail = guess.heights[..peaks.len() - 2].iter().sum::<f64>() / (peaks.len() - 2) as f64;
    let mut p = vec![guess.background, guess.t0, guess.tau, period_ps];
    let mut fixed = vec![false, false, false, true];
    for (i, &m) in peaks.iter().enumerate() {
        if m.abs() == outer {
            p.push(tail);
            fixed.push(true);
        } else {
            p.push(guess.heights[i]);
            fixed.push(false);
        }
    }
    let model = ModelSpec::ExpTrain(ExpTrain { peaks, irf: None });
    let fit = poisson_fit(&model, &x, &y, &p, fixed)?;
    Ok(fit.params[ExpTrain::T0])
}

/// Visibility of two photons from an emitter with lifetime `T1` and coherence
/// time `T2`, post-selected to delays within `±window/2`:
///
/// `V(T) = γ₁/(γ₁ + 2γ*) · (1 − e^{−(γ₁+2γ*)T}) / (1 − e^{−γ₁T})`, `T = window/2`,
///
/// with `γ* = 1/T2 − 1/(2T1)`. An infinite window gives `T2/(2T1)`.
pub fn visibility_closed_form(t1_ns: f64, t2_ps: f64, window_ns: f64) -> Result<f64, AnalysisError> {
    if !(t1_ns > 0.0 && t2_ps > 0.0 && window_ns > 0.0) {
        return Err(AnalysisError::Input("T1, T2 and the window must be positive".into()));
    }
    let g1 = 1.0 / t1_ns;
    let t2 = t2_ps / 1000.0;
    let g_star = 1.0 / t2 - 0.5 * g1;
    if g_star < -1e-12 * g1 {
        return Err(AnalysisError::Domain(format!("T2 = {t2_ps} ps exceeds 2·T1")));
    }
    let g = g1 + 2.0 * g_star.max(0.0);
    let t = 0.5 * window_ns;
    Ok(g1 / g * (-(g * t)).exp_m1() / (-(g1 * t)).exp_m1())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TimescaleMode {
    /// Timescale is the radiative lifetime.
    Lifetime,
    /// Timescale is the width of the post-selection window.
    Window,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DephasingEstimate {
    pub t2_ps: f64,
    pub timescale_ns: f64,
    pub mode: TimescaleMode,
}

/// `T2 ≈ 2·τ·V` for a visibility `V` limited by dephasing on timescale `τ`.
pub fn dephasing_estimate(
    visibility: f64,
    timescale_ns: f64,
    mode: TimescaleMode,
) -> Result<DephasingEstimate, AnalysisError> {
    if !(visibility > 0.0 && visibility <= 1.0) {
        return Err(AnalysisError::Domain(format!(
            "visibility {visibility} is not in (0, 1]"
        )));
    }
    if !(timescale_ns > 0.0 && timescale_ns.is_finite()) {
        return Err(AnalysisError::Input("timescale must be positive".into()));
    }
    Ok(DephasingEstimate {
        t2_ps: 2000.0 * timescale_ns * visibility,
        timescale_ns,
        mode,
    })
}
