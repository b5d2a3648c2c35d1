use serde::{Deserialize, Serialize};

use super::FitError;
use crate::correlator::CorrelationHistogram;

/// Instrument response on a uniform delay grid, normalized to unit sum.
/// `zero_index` is the bin holding zero delay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Irf {
    bin_width_ps: f64,
    weights: Vec<f64>,
    zero_index: usize,
}

impl Irf {
    pub fn new(bin_width_ps: f64, weights: Vec<f64>, zero_index: usize) -> Result<Self, FitError> {
        if !(bin_width_ps > 0.0) {
            return Err(FitError::Input("IRF bin width must be positive".into()));
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(FitError::Input("IRF weights must be finite and non-negative".into()));
        }
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0) {
            return Err(FitError::Input("IRF has no counts".into()));
        }
        if zero_index >= weights.len() {
            return Err(FitError::Input("IRF zero bin lies outside the kernel".into()));
        }
        Ok(Self {
            bin_width_ps,
            weights: weights.into_iter().map(|w| w / sum).collect(),
            zero_index,
        })
    }

    /// Unit kernel: convolution is the identity.
    pub fn delta(bin_width_ps: f64) -> Self {
        Self::new(bin_width_ps, vec![1.0], 0).expect("valid delta kernel")
    }

    /// Gaussian of standard deviation `sigma_ps`, integrated over each bin and
    /// truncated at ±`n_sigma`.
    pub fn gaussian(bin_width_ps: f64, sigma_ps: f64, n_sigma: f64) -> Result<Self, FitError> {
        if !(sigma_ps > 0.0) {
            return Ok(Self::delta(bin_width_ps));
        }
        let half = (n_sigma * sigma_ps / bin_width_ps).ceil() as usize;
        let cdf = |x: f64| 0.5 * (1.0 + libm::erf(x / (sigma_ps * std::f64::consts::SQRT_2)));
        let weights = (0..=2 * half)
            .map(|j| {
                let c = (j as f64 - half as f64) * bin_width_ps;
                cdf(c + 0.5 * bin_width_ps) - cdf(c - 0.5 * bin_width_ps)
            })
            .collect();
        Self::new(bin_width_ps, weights, half)
    }

    /// Kernel from a measured histogram; bins are centred on the histogram's
    /// bin centres and the bin nearest zero delay becomes the origin.
    pub fn from_histogram(hist: &CorrelationHistogram) -> Result<Self, FitError> {
        let centers = hist.bin_centers();
        let zero = centers
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
            .map(|(i, _)| i)
            .ok_or_else(|| FitError::Input("empty IRF histogram".into()))?;
        Self::new(
            hist.bin_width_ps as f64,
            hist.counts.iter().map(|&c| c as f64).collect(),
            zero,
        )
    }

    /// Drops leading and trailing bins whose weight is below `threshold`
    /// times the maximum, then renormalizes.
    pub fn trimmed(&self, threshold: f64) -> Self {
        let max = self.weights.iter().cloned().fold(0.0, f64::max);
        let keep = |w: &f64| *w > threshold * max;
        let first = self.weights.iter().position(keep).unwrap_or(0);
        let last = self.weights.iter().rposition(keep).unwrap_or(self.weights.len() - 1);
        let first = first.min(self.zero_index);
        let last = last.max(self.zero_index);
        Self::new(
            self.bin_width_ps,
            self.weights[first..=last].to_vec(),
            self.zero_index - first,
        )
        .expect("trimmed kernel keeps its peak")
    }

    pub fn bin_width_ps(&self) -> f64 {
        self.bin_width_ps
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn zero_index(&self) -> usize {
        self.zero_index
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Bins needed on each side of a grid so that a convolution of the
    /// padded curve is exact on the original points.
    pub(crate) fn padding(&self) -> usize {
        self.weights.len()
    }

    /// `out[i] = Σ_j w[j]·padded[i + pad − (j − zero)]` for the `n` original
    /// points, where `padded` extends them by `pad` samples on each side.
    pub(crate) fn convolve_padded(&self, padded: &[f64], n: usize) -> Vec<f64> {
        let pad = self.padding();
        debug_assert_eq!(padded.len(), n + 2 * pad);
        (0..n)
            .map(|i| {
                self.weights
                    .iter()
                    .enumerate()
                    .map(|(j, w)| w * padded[i + pad + self.zero_index - j])
                    .sum()
            })
            .collect()
    }
}

/// Discrete linear convolution of a curve sampled on the IRF's grid. Samples
/// beyond the ends are taken as zero and the result is rescaled so that its
/// sum equals the input sum.
pub fn convolve_with_irf(curve: &[f64], curve_bin_ps: f64, irf: &Irf) -> Result<Vec<f64>, FitError> {
    if (curve_bin_ps - irf.bin_width_ps).abs() > 1e-9 * irf.bin_width_ps {
        return Err(FitError::Input(format!(
            "curve bin width {curve_bin_ps} ps differs from IRF bin width {} ps",
            irf.bin_width_ps
        )));
    }
    let n = curve.len();
    let pad = irf.padding();
    let mut padded = vec![0.0; n + 2 * pad];
    padded[pad..pad + n].copy_from_slice(curve);
    let mut out = irf.convolve_padded(&padded, n);
    let sum_in: f64 = curve.iter().sum();
    let sum_out: f64 = out.iter().sum();
    if sum_out != 0.0 && sum_in != 0.0 {
        let s = sum_in / sum_out;
        out.iter_mut().for_each(|v| *v *= s);
    }
    Ok(out)
}
