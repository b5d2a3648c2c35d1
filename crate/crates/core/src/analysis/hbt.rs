use serde::{Deserialize, Serialize};

use super::{poisson_fit, AnalysisError};
use crate::correlator::{cross_correlate_range, CorrelationHistogram};
use crate::fitkit::{ExpTrain, FitResult, Irf, ModelSpec};
use crate::stream::TimeTagStream;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HbtOptions {
    pub bin_width_ps: u64,
    /// Side peaks on each side whose heights enter the normalization.
    pub n_side_peaks: usize,
    pub channel_a: u8,
    pub channel_b: u8,
}

impl Default for HbtOptions {
    fn default() -> Self {
        Self {
            bin_width_ps: 100,
            n_side_peaks: 4,
            channel_a: 0,
            channel_b: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HbtResult {
    pub g2_zero: f64,
    pub g2_error: f64,
    pub tau_fit_ns: f64,
    pub t0_ps: f64,
    pub fit: FitResult,
    pub histogram: CorrelationHistogram,
    /// Fitted model at each bin centre.
    pub fit_curve: Vec<f64>,
}

/// Symmetric range `[−(m+½)w, (m+½)w)` covering `reach_ps`, so that bin
/// centres fall on multiples of `w`.
pub(crate) fn centred_range(bin_width_ps: u64, reach_ps: f64) -> (i64, i64) {
    let w = bin_width_ps as i64;
    let m = (reach_ps / bin_width_ps as f64).ceil() as i64;
    let lo = w / 2;
    (-(m * w + lo), m * w + (w - lo))
}

/// g²(0) from the HBT cross-correlation with default binning.
pub fn hbt_g2(
    stream: &TimeTagStream,
    irf: Option<&Irf>,
    period_ps: f64,
    n_side_peaks: usize,
) -> Result<HbtResult, AnalysisError> {
    let options = HbtOptions {
        n_side_peaks,
        ..HbtOptions::default()
    };
    hbt_g2_with(stream, irf, period_ps, &options)
}

/// Fits a two-sided exponential peak train, optionally convolved with `irf`,
/// to the cross-correlation histogram and returns the ratio of the zero-delay
/// height to the mean height of the `n_side_peaks` peaks on each side.
///
/// Peaks `±(n+1)` are fitted with free heights to absorb the tails at the
/// range ends; peaks `±(n+2)` lie outside the range and only contribute their
/// tails, with heights held at the initial mean side height.
pub fn hbt_g2_with(
    stream: &TimeTagStream,
    irf: Option<&Irf>,
    period_ps: f64,
    options: &HbtOptions,
) -> Result<HbtResult, AnalysisError> {
    let n = options.n_side_peaks;
    if n < 4 {
        return Err(AnalysisError::Input(format!(
            "at least 4 side peaks are needed, got {n}"
        )));
    }
    if !(period_ps > 0.0 && period_ps.is_finite()) {
        return Err(AnalysisError::Input("period must be positive".into()));
    }
    if options.bin_width_ps == 0 {
        return Err(AnalysisError::Input("bin width must be positive".into()));
    }
    let w = options.bin_width_ps as f64;
    if let Some(irf) = irf {
        if (irf.bin_width_ps() - w).abs() > 1e-9 * w {
            return Err(AnalysisError::Input(format!(
                "IRF bin width {} ps differs from the histogram bin width {w} ps",
                irf.bin_width_ps()
            )));
        }
    }
    let fitted = n as i64 + 1;
    let (lo, hi) = centred_range(options.bin_width_ps, (fitted as f64 + 0.5) * period_ps);
    let hist = cross_correlate_range(
        stream,
        options.channel_a,
        options.channel_b,
        options.bin_width_ps,
        lo,
        hi,
    )?;
    let x = hist.bin_centers();
    let y: Vec<f64> = hist.counts.iter().map(|&c| c as f64).collect();
    if y.iter().sum::<f64>() == 0.0 {
        return Err(AnalysisError::Input("correlation histogram is empty".into()));
    }

    let outer = fitted + 1;
    let mut peaks: Vec<i64> = (-fitted..=fitted).collect();
    peaks.extend([-outer, outer]);
    let train = ExpTrain {
        peaks: peaks.clone(),
        irf: irf.cloned(),
    };

    let init = initial_guess(&x, &y, period_ps, w, fitted);
    let side_mean = side_mean(&peaks, &init.heights, n as i64);
    let mut p = vec![init.background, init.t0, init.tau, period_ps];
    let mut fixed = vec![false, false, false, true];
    for (i, &k) in peaks.iter().enumerate() {
        if k.abs() == outer {
            p.push(side_mean);
            fixed.push(true);
        } else {
            p.push(init.heights[i]);
            fixed.push(false);
        }
    }
    let model = ModelSpec::ExpTrain(train.clone());
    let fit = poisson_fit(&model, &x, &y, &p, fixed)?;

    let h0_idx = train.height_index(0).expect("zero peak is modelled");
    let side_idx: Vec<usize> = peaks
        .iter()
        .filter(|k| (1..=n as i64).contains(&k.abs()))
        .map(|&k| train.height_index(k).expect("side peak is modelled"))
        .collect();
    let h0 = fit.params[h0_idx];
    let mean: f64 = side_idx.iter().map(|&i| fit.params[i]).sum::<f64>() / side_idx.len() as f64;
    if !(mean > 0.0) {
        return Err(AnalysisError::Domain("mean side-peak height is not positive".into()));
    }
    let g2 = h0 / mean;
    // Delta method on h0 / mean(h_k).
    let mut grad = vec![0.0; fit.params.len()];
    grad[h0_idx] = 1.0 / mean;
    for &i in &side_idx {
        grad[i] = -h0 / (side_idx.len() as f64 * mean * mean);
    }
    let var: f64 = (0..grad.len())
        .flat_map(|a| (0..grad.len()).map(move |b| (a, b)))
        .map(|(a, b)| grad[a] * fit.covariance[a][b] * grad[b])
        .sum();
    Ok(HbtResult {
        g2_zero: g2.max(0.0),
        g2_error: var.max(0.0).sqrt(),
        tau_fit_ns: fit.params[ExpTrain::TAU] / 1000.0,
        t0_ps: fit.params[ExpTrain::T0],
        fit_curve: model.eval(&x, &fit.params),
        fit,
        histogram: hist,
    })
}

fn side_mean(peaks: &[i64], heights: &[f64], n: i64) -> f64 {
    let side: Vec<f64> = peaks
        .iter()
        .zip(heights)
        .filter(|(k, _)| (1..=n).contains(&k.abs()))
        .map(|(_, h)| *h)
        .collect();
    side.iter().sum::<f64>() / side.len() as f64
}

pub(crate) struct TrainGuess {
    pub background: f64,
    pub t0: f64,
    pub tau: f64,
    /// One per peak of `−fitted..=fitted`, then zeros for any extra peaks.
    pub heights: Vec<f64>,
}

/// Starting values for a peak train at known period: the background from the
/// bins midway between peaks, the offset and width from the count-weighted
/// first and absolute moments around each side peak, heights from window sums.
pub(crate) fn initial_guess(x: &[f64], y: &[f64], period: f64, w: f64, fitted: i64) -> TrainGuess {
    let nearest = |t: f64| (t / period).round() as i64;
    let mid: Vec<f64> = x
        .iter()
        .zip(y)
        .filter(|(t, _)| {
            let u = *t - nearest(**t) as f64 * period;
            u.abs() > 0.45 * period && nearest(**t).abs() <= fitted
        })
        .map(|(_, c)| *c)
        .collect();
    let background = if mid.is_empty() {
        0.0
    } else {
        mid.iter().sum::<f64>() / mid.len() as f64
    };

    let moment = |shift: f64, f: &dyn Fn(f64) -> f64| {
        let (mut s, mut sw) = (0.0, 0.0);
        for (t, c) in x.iter().zip(y) {
            let k = nearest(*t);
            if k == 0 || k.abs() > fitted {
                continue;
            }
            let wt = (c - background).max(0.0);
            s += wt * f(t - k as f64 * period - shift);
            sw += wt;
        }
        if sw > 0.0 {
            Some(s / sw)
        } else {
            None
        }
    };
    let t0 = moment(0.0, &|u| u).unwrap_or(0.0);
    let tau = moment(t0, &|u| u.abs()).unwrap_or(0.1 * period).max(w);

    let mut heights = Vec::new();
    for k in -fitted..=fitted {
        let c = t0 + k as f64 * period;
        let (mut sum, mut bins) = (0.0, 0.0);
        for (t, v) in x.iter().zip(y) {
            if (t - c).abs() < 0.5 * period {
                sum += v;
                bins += 1.0;
            }
        }
        let area = (sum - background * bins).max(0.0);
        heights.push(area / (2.0 * tau / w));
    }
    heights.extend([0.0, 0.0]);
    TrainGuess {
        background,
        t0,
        tau,
        heights,
    }
}

/// Instrument response from a correlation of a prompt source, e.g. a laser
/// through the HBT set-up: the zero-delay peak within `±half_range_ps`, with
/// the flat level of the outer tenth of the range on each side subtracted and
/// bins below 10⁻³ of the maximum trimmed from the ends.
pub fn measure_irf(
    stream: &TimeTagStream,
    channel_a: u8,
    channel_b: u8,
    bin_width_ps: u64,
    half_range_ps: f64,
) -> Result<Irf, AnalysisError> {
    if bin_width_ps == 0 || !(half_range_ps > 0.0) {
        return Err(AnalysisError::Input("bin width and range must be positive".into()));
    }
    let (lo, hi) = centred_range(bin_width_ps, half_range_ps);
    let hist = cross_correlate_range(stream, channel_a, channel_b, bin_width_ps, lo, hi)?;
    let n = hist.n_bins();
    let edge = (n / 10).max(1);
    let level = hist.counts[..edge]
        .iter()
        .chain(&hist.counts[n - edge..])
        .map(|&c| c as f64)
        .sum::<f64>()
        / (2 * edge) as f64;
    let weights: Vec<f64> = hist.counts.iter().map(|&c| (c as f64 - level).max(0.0)).collect();
    let zero = hist
        .bin_centers()
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
        .map(|(i, _)| i)
        .expect("non-empty range");
    let irf = Irf::new(bin_width_ps as f64, weights, zero)?;
    Ok(irf.trimmed(1e-3))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::montecarlo::{simulate_hbt, EmitterModel, InstrumentChain, PulseTrain};

    #[test]
    fn centred_range_puts_centres_on_multiples() {
        let (lo, hi) = centred_range(100, 1234.0);
        assert_eq!((lo, hi), (-1350, 1350));
        assert_eq!((hi - lo) % 100, 0);
    }

    #[test]
    fn perfect_single_photons() {
        let emitter = EmitterModel::default();
        let chain = InstrumentChain::ideal();
        let train = PulseTrain::new(76_227.93, 200_000, 3);
        let out = simulate_hbt(&emitter, &chain, &train, 0.0).unwrap();
        let r = hbt_g2(&out.stream, None, train.period_ps(), 4).unwrap();
        assert!(r.g2_zero < 0.005, "{}", r.g2_zero);
        assert!((r.tau_fit_ns - 1.725).abs() < 0.05, "{}", r.tau_fit_ns);
        assert!(r.g2_error > 0.0);
    }

    #[test]
    fn too_few_side_peaks() {
        let emitter = EmitterModel::default();
        let train = PulseTrain::new(76_227.93, 1000, 3);
        let out = simulate_hbt(&emitter, &InstrumentChain::ideal(), &train, 0.0).unwrap();
        assert!(matches!(
            hbt_g2(&out.stream, None, train.period_ps(), 3),
            Err(AnalysisError::Input(_))
        ));
    }
}
