use std::f64::consts::PI;

use serde::Serialize;

use super::{OpticsError, HC_EV_NM};

/// Number of transverse orders (0, 1, 2) listed per longitudinal family.
pub const DEFAULT_TRANSVERSE_ORDERS: u32 = 3;

/// Plano-concave open resonator: flat DBR below, curved gold mirror above.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CavityGeometry {
    /// Mirror separation.
    pub length_um: f64,
    /// Radius of curvature of the top mirror; `f64::INFINITY` for a planar mirror.
    pub radius_um: f64,
    pub lens_diameter_um: f64,
    pub lens_depth_nm: f64,
    pub wavelength_ref_nm: f64,
}

impl CavityGeometry {
    pub fn new(
        length_um: f64,
        radius_um: f64,
        lens_diameter_um: f64,
        lens_depth_nm: f64,
        wavelength_ref_nm: f64,
    ) -> Result<Self, OpticsError> {
        let geom = Self {
            length_um,
            radius_um,
            lens_diameter_um,
            lens_depth_nm,
            wavelength_ref_nm,
        };
        geom.validate()?;
        Ok(geom)
    }

    /// Geometry whose radius of curvature follows from the milled lens cap.
    pub fn from_lens(
        length_um: f64,
        lens_diameter_um: f64,
        lens_depth_nm: f64,
        wavelength_ref_nm: f64,
    ) -> Result<Self, OpticsError> {
        let radius_um = roc_from_spherical_cap(lens_diameter_um, lens_depth_nm)?;
        Self::new(
            length_um,
            radius_um,
            lens_diameter_um,
            lens_depth_nm,
            wavelength_ref_nm,
        )
    }

    pub fn validate(&self) -> Result<(), OpticsError> {
        if !(self.length_um > 0.0 && self.length_um < self.radius_um) {
            return Err(OpticsError::Unstable {
                length_um: self.length_um,
                radius_um: self.radius_um,
            });
        }
        if !(self.lens_depth_nm > 0.0 && self.lens_depth_nm / 1000.0 < self.lens_diameter_um / 2.0) {
            return Err(OpticsError::CapGeometry {
                diameter_um: self.lens_diameter_um,
                depth_nm: self.lens_depth_nm,
            });
        }
        if !(self.wavelength_ref_nm > 0.0) {
            return Err(OpticsError::NonPositiveWavelength(self.wavelength_ref_nm));
        }
        Ok(())
    }

    /// Free spectral range of the air-filled resonator, meV.
    pub fn longitudinal_spacing_mev(&self) -> f64 {
        1000.0 * HC_EV_NM / (2.0 * self.length_um * 1000.0)
    }

    /// One-way Gouy phase over π; the transverse spacing in units of the free spectral range.
    pub fn gouy_fraction(&self) -> f64 {
        (1.0 - self.length_um / self.radius_um).sqrt().acos() / PI
    }

    pub fn transverse_spacing_mev(&self) -> f64 {
        self.longitudinal_spacing_mev() * self.gouy_fraction()
    }
}

/// Radius of a spherical cap of base diameter `diameter_um` and sagitta `depth_nm`.
pub fn roc_from_spherical_cap(diameter_um: f64, depth_nm: f64) -> Result<f64, OpticsError> {
    let a = diameter_um / 2.0;
    let h = depth_nm / 1000.0;
    if !(h > 0.0) || !(a > 0.0) || h > a {
        return Err(OpticsError::CapGeometry {
            diameter_um,
            depth_nm,
        });
    }
    Ok((a * a + h * h) / (2.0 * h))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CavityMode {
    pub longitudinal_index: u32,
    pub transverse_order: u32,
    pub energy_ev: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSpectrum {
    /// Sorted by energy.
    pub modes: Vec<CavityMode>,
    pub longitudinal_spacing_mev: f64,
    pub transverse_spacing_mev: f64,
}

impl ModeSpectrum {
    /// Modes of one longitudinal family, lowest transverse order first.
    pub fn family(&self, longitudinal_index: u32) -> Vec<CavityMode> {
        let mut family: Vec<_> = self
            .modes
            .iter()
            .filter(|m| m.longitudinal_index == longitudinal_index)
            .copied()
            .collect();
        family.sort_by_key(|m| m.transverse_order);
        family
    }
}

pub fn cavity_mode_spectrum(
    geom: &CavityGeometry,
    energy_window_ev: (f64, f64),
) -> Result<ModeSpectrum, OpticsError> {
    cavity_mode_spectrum_with_orders(geom, energy_window_ev, DEFAULT_TRANSVERSE_ORDERS)
}

/// Hermite-Gauss resonances `E = ΔE_long·(q + (m + 1)·ζ)` of the plano-concave
/// resonator inside the energy window, with `ζ` the Gouy fraction and `m < orders`.
pub fn cavity_mode_spectrum_with_orders(
    geom: &CavityGeometry,
    energy_window_ev: (f64, f64),
    orders: u32,
) -> Result<ModeSpectrum, OpticsError> {
    geom.validate()?;
    if geom.radius_um.is_infinite() {
        return Err(OpticsError::NoTransverseConfinement);
    }
    let (lo, hi) = energy_window_ev;
    let fsr_ev = geom.longitudinal_spacing_mev() / 1000.0;
    let zeta = geom.gouy_fraction();
    let mut modes = Vec::new();
    let q_min = ((lo / fsr_ev) - orders as f64 - 1.0).floor().max(1.0) as u32;
    let q_max = (hi / fsr_ev).ceil() as u32;
    for q in q_min..=q_max {
        for m in 0..orders {
            let energy_ev = fsr_ev * (q as f64 + (m as f64 + 1.0) * zeta);
            if energy_ev >= lo && energy_ev <= hi {
                modes.push(CavityMode {
                    longitudinal_index: q,
                    transverse_order: m,
                    energy_ev,
                });
            }
        }
    }
    modes.sort_by(|a, b| a.energy_ev.total_cmp(&b.energy_ev));
    Ok(ModeSpectrum {
        modes,
        longitudinal_spacing_mev: geom.longitudinal_spacing_mev(),
        transverse_spacing_mev: geom.transverse_spacing_mev(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GaussianWaist {
    pub waist_um: f64,
    pub mode_diameter_um: f64,
}

/// Fundamental-mode waist on the flat mirror, `w0² = (λL/π)·√(R/L − 1)`.
pub fn gaussian_waist(geom: &CavityGeometry, wavelength_nm: f64) -> Result<GaussianWaist, OpticsError> {
    if !(geom.length_um > 0.0 && geom.length_um < geom.radius_um) {
        return Err(OpticsError::Unstable {
            length_um: geom.length_um,
            radius_um: geom.radius_um,
        });
    }
    if !(wavelength_nm > 0.0) {
        return Err(OpticsError::NonPositiveWavelength(wavelength_nm));
    }
    let lambda_um = wavelength_nm / 1000.0;
    let w0_sq = (lambda_um * geom.length_um / PI) * (geom.radius_um / geom.length_um - 1.0).sqrt();
    let waist_um = w0_sq.sqrt();
    Ok(GaussianWaist {
        waist_um,
        mode_diameter_um: 2.0 * waist_um,
    })
}

/// Standing-wave volume of the fundamental mode, `π w0² L / 4`, in µm³.
pub fn gaussian_mode_volume(geom: &CavityGeometry, wavelength_nm: f64) -> Result<f64, OpticsError> {
    let w = gaussian_waist(geom, wavelength_nm)?;
    Ok(PI * w.waist_um * w.waist_um * geom.length_um / 4.0)
}

/// Purcell factor `ξ · (3/4π²)(λ/n)³ Q/V` with an explicit field-overlap factor
/// `ξ ∈ [0, 1]` for an emitter away from the antinode.
pub fn purcell_factor(
    wavelength_nm: f64,
    refractive_index: f64,
    q_factor: f64,
    mode_volume_um3: f64,
    overlap: f64,
) -> f64 {
    let lambda_n = wavelength_nm / 1000.0 / refractive_index;
    overlap * 3.0 / (4.0 * PI * PI) * lambda_n.powi(3) * q_factor / mode_volume_um3
}

/// Overlap factor that makes the Purcell estimate equal `target` for the given cavity.
pub fn calibrated_overlap(
    geom: &CavityGeometry,
    wavelength_nm: f64,
    q_factor: f64,
    target: f64,
) -> Result<f64, OpticsError> {
    let volume = gaussian_mode_volume(geom, wavelength_nm)?;
    Ok(target / purcell_factor(wavelength_nm, 1.0, q_factor, volume, 1.0))
}

/// Calibration: overlap that reproduces an on-resonance enhancement of 1.5 at
/// Q = 600 for L = 5.5 µm, R = 6.8 µm, λ = 786 nm. A fitted constant, not a prediction.
pub fn default_overlap() -> f64 {
    let geom = CavityGeometry::new(5.5, 6.8, 4.0, 300.0, 786.0).expect("valid constant");
    calibrated_overlap(&geom, 786.0, 600.0, 1.5).expect("valid constant")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cap_radius() {
        assert!((roc_from_spherical_cap(4.0, 300.0).unwrap() - 6.8167).abs() < 1e-3);
        assert!((roc_from_spherical_cap(5.0, 300.0).unwrap() - 10.5667).abs() < 1e-3);
        assert!((roc_from_spherical_cap(0.6, 300.0).unwrap() - 0.3).abs() < 1e-12);
        assert!(roc_from_spherical_cap(0.5, 300.0).is_err());
    }

    #[test]
    fn spacings() {
        let geom = CavityGeometry::from_lens(5.5, 5.0, 300.0, 786.0).unwrap();
        assert!((geom.longitudinal_spacing_mev() - 112.713).abs() < 1e-3);
        let t = geom.transverse_spacing_mev();
        assert!((t - 28.92).abs() < 0.01, "{t}");
        assert!(((t - 26.3) / 26.3).abs() < 0.15);
        let concentric = CavityGeometry::new(5.5 * (1.0 - 1e-12), 5.5, 5.0, 300.0, 786.0).unwrap();
        assert!((concentric.gouy_fraction() - 0.5).abs() < 1e-5);
    }

    #[test]
    fn unstable_geometry_rejected() {
        assert!(matches!(
            CavityGeometry::new(7.0, 6.8, 4.0, 300.0, 786.0),
            Err(OpticsError::Unstable { .. })
        ));
        let geom = CavityGeometry {
            length_um: 7.0,
            radius_um: 6.8,
            lens_diameter_um: 4.0,
            lens_depth_nm: 300.0,
            wavelength_ref_nm: 786.0,
        };
        assert!(cavity_mode_spectrum(&geom, (1.5, 1.7)).is_err());
        assert!(gaussian_waist(&geom, 786.0).is_err());
    }

    #[test]
    fn mode_families_sorted_and_windowed() {
        let geom = CavityGeometry::from_lens(5.5, 5.0, 300.0, 786.0).unwrap();
        let spectrum = cavity_mode_spectrum(&geom, (1.4, 1.8)).unwrap();
        assert!(!spectrum.modes.is_empty());
        assert!(spectrum.modes.windows(2).all(|w| w[0].energy_ev <= w[1].energy_ev));
        assert!(spectrum.modes.iter().all(|m| (1.4..=1.8).contains(&m.energy_ev)));
        let q = spectrum.modes[3].longitudinal_index;
        let family = spectrum.family(q);
        assert!(family.windows(2).all(|w| w[0].energy_ev < w[1].energy_ev));
    }

    #[test]
    fn waist() {
        let geom = CavityGeometry::new(5.5, 6.8, 4.0, 300.0, 786.0).unwrap();
        let w = gaussian_waist(&geom, 786.0).unwrap();
        assert!((w.waist_um - 0.8179).abs() < 1e-3, "{w:?}");
        assert!((w.mode_diameter_um - 1.636).abs() < 2e-3);
        let w2 = gaussian_waist(&geom, 1572.0).unwrap();
        assert!((w2.waist_um / w.waist_um - 2f64.sqrt()).abs() < 1e-12);
        let planar = CavityGeometry::new(5.5, f64::INFINITY, 4.0, 300.0, 786.0).unwrap();
        assert!(gaussian_waist(&planar, 786.0).unwrap().waist_um.is_infinite());
        assert_eq!(
            cavity_mode_spectrum(&planar, (1.5, 1.6)),
            Err(OpticsError::NoTransverseConfinement)
        );
    }

    #[test]
    fn purcell_calibration() {
        let xi = default_overlap();
        assert!(xi > 0.0 && xi < 1.0, "{xi}");
        let geom = CavityGeometry::new(5.5, 6.8, 4.0, 300.0, 786.0).unwrap();
        let v = gaussian_mode_volume(&geom, 786.0).unwrap();
        assert!((purcell_factor(786.0, 1.0, 600.0, v, xi) - 1.5).abs() < 1e-12);
    }
}
