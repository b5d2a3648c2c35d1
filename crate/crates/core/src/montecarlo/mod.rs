//! Monte Carlo generation of time-tag streams from a pulsed two-level
//! emitter, routed through lifetime, HBT and HOM set-ups and a detector
//! chain with loss, timing jitter, dead time and dark counts.
//!
//! Every random draw comes from a substream keyed by `(seed, domain, index)`,
//! so output is independent of chunking and thread count.

mod hom;
mod instrument;
mod rng;
mod sources;
pub mod synthetic;

pub use hom::simulate_hom;
pub use instrument::{apply_instrument, IdealEvent, StreamLayout};
pub use rng::{substream, Domain};
pub use sources::{multi_photon_probability, simulate_coherent_hbt, simulate_decay, simulate_hbt};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::stream::TimeTagStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid parameter {name}: {message}")]
    Parameter { name: &'static str, message: String },
    #[error("g2 target {target} is out of reach at excitation probability {p_exc} (maximum {max})")]
    UnreachableG2 { target: f64, p_exc: f64, max: f64 },
}

fn param(name: &'static str, message: impl Into<String>) -> SimError {
    SimError::Parameter {
        name,
        message: message.into(),
    }
}

fn check_probability(name: &'static str, p: f64) -> Result<(), SimError> {
    if (0.0..=1.0).contains(&p) {
        Ok(())
    } else {
        Err(param(name, format!("{p} is not in [0, 1]")))
    }
}

fn check_non_negative(name: &'static str, x: f64) -> Result<(), SimError> {
    if x >= 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(param(name, format!("{x} must be finite and non-negative")))
    }
}

/// Pulsed two-level emitter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EmitterModel {
    pub energy_ev: f64,
    /// Radiative lifetime, ns.
    pub t1_ns: f64,
    /// Optical coherence time, ps.
    pub t2_ps: f64,
    /// Probability that a pulse excites the emitter.
    pub p_exc: f64,
    /// Probability that an excitation yields one extra, uncorrelated photon.
    pub p_multi: f64,
    /// Degree of linear polarization.
    pub dop: f64,
    pub pol_angle_deg: f64,
}

impl Default for EmitterModel {
    fn default() -> Self {
        Self {
            energy_ev: 1.5707,
            t1_ns: 1.725,
            t2_ps: 45.0,
            p_exc: 1.0,
            p_multi: 0.0,
            dop: 0.984,
            pol_angle_deg: 0.0,
        }
    }
}

impl EmitterModel {
    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.energy_ev > 0.0) {
            return Err(param("energy_ev", "must be positive"));
        }
        if !(self.t1_ns > 0.0 && self.t1_ns.is_finite()) {
            return Err(param("t1_ns", "must be positive"));
        }
        if !(self.t2_ps > 0.0) {
            return Err(param("t2_ps", "must be positive"));
        }
        // Tolerate rounding when T2 is set to exactly 2·T1.
        if self.t2_ps > 2000.0 * self.t1_ns * (1.0 + 1e-12) {
            return Err(param(
                "t2_ps",
                format!("T2 = {} ps exceeds 2·T1 = {} ps", self.t2_ps, 2000.0 * self.t1_ns),
            ));
        }
        check_probability("p_exc", self.p_exc)?;
        check_probability("p_multi", self.p_multi)?;
        check_probability("dop", self.dop)?;
        if !self.pol_angle_deg.is_finite() {
            return Err(param("pol_angle_deg", "must be finite"));
        }
        Ok(())
    }

    /// Decay rate 1/T1 in 1/ps.
    pub fn gamma1_per_ps(&self) -> f64 {
        1.0 / (1000.0 * self.t1_ns)
    }

    /// Pure dephasing rate γ* = 1/T2 − 1/(2·T1) in 1/ps, clamped at zero.
    pub fn pure_dephasing_per_ps(&self) -> f64 {
        (1.0 / self.t2_ps - 0.5 * self.gamma1_per_ps()).max(0.0)
    }
}

/// Detection chain shared by all detectors of a set-up.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InstrumentChain {
    /// Probability an emitted photon reaches the first lens.
    pub eta_first_lens: f64,
    /// Probability a photon at the first lens produces a click.
    pub eta_setup: f64,
    pub jitter_fwhm_ps: f64,
    pub dead_time_ns: f64,
    pub dark_rate_hz: f64,
}

impl Default for InstrumentChain {
    fn default() -> Self {
        Self {
            eta_first_lens: 0.65,
            eta_setup: 0.0217,
            jitter_fwhm_ps: 500.0,
            dead_time_ns: 45.0,
            dark_rate_hz: 100.0,
        }
    }
}

impl InstrumentChain {
    /// Lossless, noiseless detectors.
    pub fn ideal() -> Self {
        Self {
            eta_first_lens: 1.0,
            eta_setup: 1.0,
            jitter_fwhm_ps: 0.0,
            dead_time_ns: 0.0,
            dark_rate_hz: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        check_probability("eta_first_lens", self.eta_first_lens)?;
        check_probability("eta_setup", self.eta_setup)?;
        check_non_negative("jitter_fwhm_ps", self.jitter_fwhm_ps)?;
        check_non_negative("dead_time_ns", self.dead_time_ns)?;
        check_non_negative("dark_rate_hz", self.dark_rate_hz)?;
        Ok(())
    }

    pub fn eta_total(&self) -> f64 {
        self.eta_first_lens * self.eta_setup
    }

    pub fn jitter_sigma_ps(&self) -> f64 {
        self.jitter_fwhm_ps / FWHM_PER_SIGMA
    }
}

/// FWHM of a Gaussian in units of its standard deviation, 2·√(2 ln 2).
pub const FWHM_PER_SIGMA: f64 = 2.354_820_045_030_949;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PulseTrain {
    pub rep_rate_khz: f64,
    pub n_pulses: u64,
    pub seed: u64,
}

impl PulseTrain {
    pub fn new(rep_rate_khz: f64, n_pulses: u64, seed: u64) -> Self {
        Self {
            rep_rate_khz,
            n_pulses,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), SimError> {
        if !(self.rep_rate_khz > 0.0 && self.rep_rate_khz.is_finite()) {
            return Err(param("rep_rate_khz", "must be positive"));
        }
        if self.n_pulses == 0 {
            return Err(param("n_pulses", "need at least one pulse"));
        }
        Ok(())
    }

    pub fn period_ps(&self) -> f64 {
        1e9 / self.rep_rate_khz
    }

    /// Nominal time of pulse `index`, ps.
    pub fn pulse_time_ps(&self, index: u64) -> f64 {
        index as f64 * self.period_ps()
    }
}

/// Laser repetition rate of the reference set-up, kHz.
pub const DEFAULT_REP_RATE_KHZ: f64 = 76_227.93;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolarizationMode {
    /// Parallel polarizations: photons are indistinguishable apart from dephasing.
    HH,
    /// Perpendicular polarizations: no two-photon interference.
    HV,
}

impl PolarizationMode {
    /// Mode-overlap prefactor of the interference term.
    pub fn overlap(self) -> f64 {
        match self {
            PolarizationMode::HH => 1.0,
            PolarizationMode::HV => 0.0,
        }
    }
}

/// Path-unbalanced Mach-Zehnder interferometer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MziConfig {
    /// Extra delay of the long arm. It is rounded to a whole number of pulse
    /// periods; the residual mismatch is `start_offset_ps`.
    pub arm_delay_ns: f64,
    pub polarization_mode: PolarizationMode,
    /// Probability that the first splitter sends a photon into the long arm.
    pub first_bs_ratio: f64,
    /// Reflectivity of the second splitter.
    pub second_bs_ratio: f64,
    /// Residual wavepacket offset between the arms, ps.
    pub start_offset_ps: f64,
}

impl Default for MziConfig {
    fn default() -> Self {
        Self {
            arm_delay_ns: 13.0,
            polarization_mode: PolarizationMode::HH,
            first_bs_ratio: 0.5,
            second_bs_ratio: 0.5,
            start_offset_ps: 0.0,
        }
    }
}

impl MziConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        check_non_negative("arm_delay_ns", self.arm_delay_ns)?;
        for (name, r) in [
            ("first_bs_ratio", self.first_bs_ratio),
            ("second_bs_ratio", self.second_bs_ratio),
        ] {
            if !(r > 0.0 && r < 1.0) {
                return Err(param(name, format!("{r} is not in (0, 1)")));
            }
        }
        if !self.start_offset_ps.is_finite() {
            return Err(param("start_offset_ps", "must be finite"));
        }
        Ok(())
    }
}

/// A simulated stream plus the non-fatal warnings raised while producing it.
#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub stream: TimeTagStream,
    pub warnings: Vec<String>,
}

fn pile_up_warning(emitter: &EmitterModel, train: &PulseTrain) -> Option<String> {
    let period_ns = train.period_ps() / 1000.0;
    (period_ns < 5.0 * emitter.t1_ns).then(|| {
        format!(
            "pulse period {period_ns:.3} ns is shorter than 5·T1 = {:.3} ns; decays overlap the next pulse",
            5.0 * emitter.t1_ns
        )
    })
}
