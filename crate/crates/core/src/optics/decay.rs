use serde::{Deserialize, Serialize};

use super::OpticsError;

/// Spontaneous emission rate of an emitter coupled to a cavity mode of
/// linewidth `kappa_mev`, interpolating between the on-resonance factor
/// `f_res` and the far-detuned factor `f_inh` with a Lorentzian:
///
/// `γ(δ) = γ_free · [F_inh + (F_res − F_inh) · κ² / (κ² + 4δ²)]`
///
/// Detuning is `δ = E_cavity − E_emitter` in meV.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetunedDecayModel {
    pub gamma_free_per_ns: f64,
    pub f_res: f64,
    pub f_inh: f64,
    pub kappa_mev: f64,
}

impl DetunedDecayModel {
    pub fn new(
        gamma_free_per_ns: f64,
        f_res: f64,
        f_inh: f64,
        kappa_mev: f64,
    ) -> Result<Self, OpticsError> {
        let model = Self {
            gamma_free_per_ns,
            f_res,
            f_inh,
            kappa_mev,
        };
        model.validate()?;
        Ok(model)
    }

    /// Model from the free-space lifetime in ns.
    pub fn from_free_lifetime(
        t1_free_ns: f64,
        f_res: f64,
        f_inh: f64,
        kappa_mev: f64,
    ) -> Result<Self, OpticsError> {
        if !(t1_free_ns > 0.0) {
            return Err(OpticsError::NonPositive("free-space lifetime"));
        }
        Self::new(1.0 / t1_free_ns, f_res, f_inh, kappa_mev)
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        if !(self.gamma_free_per_ns > 0.0) {
            return Err(OpticsError::DecayModel("free-space rate must be positive".into()));
        }
        if !(self.f_res > self.f_inh && self.f_inh > 0.0) {
            return Err(OpticsError::DecayModel(format!(
                "need F_res > F_inh > 0, got F_res = {}, F_inh = {}",
                self.f_res, self.f_inh
            )));
        }
        if !(self.kappa_mev > 0.0) {
            return Err(OpticsError::DecayModel("cavity linewidth must be positive".into()));
        }
        Ok(())
    }

    /// Decay rate in 1/ns at detuning `detuning_mev`.
    pub fn decay_rate(&self, detuning_mev: f64) -> f64 {
        let k2 = self.kappa_mev * self.kappa_mev;
        let lorentz = k2 / (k2 + 4.0 * detuning_mev * detuning_mev);
        self.gamma_free_per_ns * (self.f_inh + (self.f_res - self.f_inh) * lorentz)
    }

    /// Lifetime in ns at detuning `detuning_mev`.
    pub fn lifetime_ns(&self, detuning_mev: f64) -> f64 {
        1.0 / self.decay_rate(detuning_mev)
    }

    /// Ratio of the on-resonance to the far-detuned rate.
    pub fn contrast(&self) -> f64 {
        self.f_res / self.f_inh
    }
}

/// Cavity linewidth (FWHM, meV) of a resonance at `energy_ev` with quality factor `q`.
pub fn kappa_from_q(energy_ev: f64, q_factor: f64) -> Result<f64, OpticsError> {
    if !(energy_ev > 0.0) {
        return Err(OpticsError::NonPositive("resonance energy"));
    }
    if !(q_factor > 0.0) {
        return Err(OpticsError::NonPositive("quality factor"));
    }
    Ok(1000.0 * energy_ev / q_factor)
}

pub fn q_from_kappa(energy_ev: f64, kappa_mev: f64) -> Result<f64, OpticsError> {
    if !(kappa_mev > 0.0) {
        return Err(OpticsError::NonPositive("cavity linewidth"));
    }
    Ok(1000.0 * energy_ev / kappa_mev)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn model() -> DetunedDecayModel {
        DetunedDecayModel::from_free_lifetime(2.3, 1.0 / 0.75, 0.492, 2.62).unwrap()
    }

    #[test]
    fn on_resonance_lifetime() {
        assert!((model().lifetime_ns(0.0) - 1.725).abs() < 1e-12);
    }

    #[test]
    fn far_detuned_inhibition() {
        let m = model();
        let far = m.lifetime_ns(1e4 * m.kappa_mev);
        assert!((far - 2.3 / 0.492).abs() < 1e-6);
        assert!(far > 4.6);
    }

    #[test]
    fn contrast_ratio() {
        let m = DetunedDecayModel::from_free_lifetime(2.3, 2.71 * 0.5, 0.5, 2.62).unwrap();
        let ratio = m.decay_rate(0.0) / m.decay_rate(1e4 * m.kappa_mev);
        assert!((ratio - 2.71).abs() / 2.71 < 1e-4);
        assert!((m.contrast() - 2.71).abs() < 1e-12);
    }

    #[test]
    fn even_and_monotone() {
        let m = model();
        let mut prev = m.decay_rate(0.0);
        for k in 1..200 {
            let d = 0.05 * k as f64;
            assert_eq!(m.decay_rate(d), m.decay_rate(-d));
            let r = m.decay_rate(d);
            assert!(r < prev);
            prev = r;
        }
    }

    #[test]
    fn invalid_models() {
        assert!(DetunedDecayModel::new(0.4, 0.5, 0.5, 1.0).is_err());
        assert!(DetunedDecayModel::new(0.4, 1.5, 0.0, 1.0).is_err());
        assert!(DetunedDecayModel::new(0.4, 1.5, 0.5, 0.0).is_err());
    }

    #[test]
    fn kappa_and_q() {
        let k = kappa_from_q(1.5707, 600.0).unwrap();
        assert!((k - 2.6178).abs() < 1e-3);
        assert!(kappa_from_q(1.5707, 1e15).unwrap() < 1e-9);
        let q = q_from_kappa(1.5707, k).unwrap();
        assert!((q - 600.0).abs() <= 600.0 * f64::EPSILON * 4.0);
    }
}
