//! Count-level synthetic data for the estimators that do not need a full
//! time-tag stream: polarization scans and emission spectra.

use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use super::rng::{substream, Domain};
use super::{check_non_negative, check_probability, param, SimError};

fn poisson(rng: &mut rand_xoshiro::Xoshiro256PlusPlus, mean: f64) -> f64 {
    if mean <= 0.0 {
        0.0
    } else {
        Poisson::new(mean).expect("positive mean").sample(rng)
    }
}

/// Intensity behind a rotating linear polarizer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolarizationScan {
    /// Counts at the intensity maximum (without background).
    pub peak_counts: f64,
    pub dop: f64,
    pub theta0_deg: f64,
    pub background: f64,
}

impl PolarizationScan {
    pub fn mean_counts(&self, angle_deg: f64) -> f64 {
        let c = (2.0 * (angle_deg - self.theta0_deg).to_radians()).cos();
        self.peak_counts * (1.0 + self.dop * c) / (1.0 + self.dop) + self.background
    }

    /// Poisson-sampled counts at each angle; index `i` uses substream `i`.
    pub fn sample(&self, angles_deg: &[f64], seed: u64) -> Result<Vec<f64>, SimError> {
        check_probability("dop", self.dop)?;
        check_non_negative("peak_counts", self.peak_counts)?;
        check_non_negative("background", self.background)?;
        Ok(angles_deg
            .iter()
            .enumerate()
            .map(|(i, &a)| {
                let mut rng = substream(seed, Domain::Synthetic, i as u64);
                poisson(&mut rng, self.mean_counts(a))
            })
            .collect())
    }
}

/// Lorentzian emission line on a flat background.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianLine {
    pub center_ev: f64,
    pub fwhm_ev: f64,
    /// Expected signal counts summed over an unbounded grid.
    pub total_counts: f64,
    pub background_per_bin: f64,
}

impl LorentzianLine {
    /// Expected counts in a bin of width `bin_ev` centred on `energy_ev`.
    pub fn mean_counts(&self, energy_ev: f64, bin_ev: f64) -> f64 {
        let g = 0.5 * self.fwhm_ev;
        let lo = ((energy_ev - 0.5 * bin_ev - self.center_ev) / g).atan();
        let hi = ((energy_ev + 0.5 * bin_ev - self.center_ev) / g).atan();
        self.total_counts * (hi - lo) / std::f64::consts::PI + self.background_per_bin
    }

    /// Poisson-sampled spectrum on a uniform grid.
    pub fn sample(&self, energies_ev: &[f64], seed: u64) -> Result<Vec<f64>, SimError> {
        if !(self.fwhm_ev > 0.0) {
            return Err(param("fwhm_ev", "must be positive"));
        }
        check_non_negative("total_counts", self.total_counts)?;
        check_non_negative("background_per_bin", self.background_per_bin)?;
        if energies_ev.len() < 2 {
            return Err(param("energies_ev", "need at least two grid points"));
        }
        let bin = (energies_ev[energies_ev.len() - 1] - energies_ev[0]) / (energies_ev.len() - 1) as f64;
        Ok(energies_ev
            .iter()
            .enumerate()
            .map(|(i, &e)| {
                let mut rng = substream(seed, Domain::Synthetic, i as u64);
                poisson(&mut rng, self.mean_counts(e, bin))
            })
            .collect())
    }
}

/// `n` equally spaced points from `start` with spacing `step`.
pub fn uniform_grid(start: f64, step: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| start + step * i as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn malus_extremes() {
        let s = PolarizationScan {
            peak_counts: 1000.0,
            dop: 0.984,
            theta0_deg: 30.0,
            background: 0.0,
        };
        assert!((s.mean_counts(30.0) - 1000.0).abs() < 1e-9);
        let min = s.mean_counts(120.0);
        let rho = (1000.0 - min) / (1000.0 + min);
        assert!((rho - 0.984).abs() < 1e-12);
        let a = s.sample(&[0.0, 10.0], 1).unwrap();
        assert_eq!(a, s.sample(&[0.0, 10.0], 1).unwrap());
    }

    #[test]
    fn lorentzian_bins_sum_to_total() {
        let line = LorentzianLine {
            center_ev: 1.5707,
            fwhm_ev: 200e-6,
            total_counts: 1e5,
            background_per_bin: 0.0,
        };
        let grid = uniform_grid(1.5707 - 0.05, 1e-5, 10_001);
        let sum: f64 = grid.iter().map(|&e| line.mean_counts(e, 1e-5)).sum();
        // Tails beyond ±0.05 eV hold 2/π·atan(1e-4/0.05) of the area.
        assert!((sum / 1e5 - (1.0 - 0.00127)).abs() < 1e-4);
    }
}
