use num_complex::Complex64;
use serde::Serialize;

use super::OpticsError;

pub const TIO2_INDEX: f64 = 2.28;
pub const TIO2_THICKNESS_NM: f64 = 85.0;
pub const SIO2_INDEX: f64 = 1.45;
pub const SIO2_THICKNESS_NM: f64 = 131.0;
pub const GLASS_INDEX: f64 = 1.5;
pub const WSE2_INDEX: f64 = 4.3;
/// Monolayer thickness used for the emitter sheet.
pub const WSE2_THICKNESS_NM: f64 = 0.65;
pub const HBN_INDEX: f64 = 2.25;
pub const HBN_THICKNESS_NM: f64 = 5.0;
pub const GOLD_THICKNESS_NM: f64 = 33.0;
pub const DBR_PAIRS: usize = 10;

/// A homogeneous film. Absorbing media carry a positive imaginary index
/// (`n + ik`, fields evolving as `exp(i(kz - ωt))`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layer {
    index: Complex64,
    thickness_nm: f64,
}

impl Layer {
    pub fn new(index: Complex64, thickness_nm: f64) -> Result<Self, OpticsError> {
        if !(thickness_nm > 0.0) || !thickness_nm.is_finite() {
            return Err(OpticsError::NonPositiveThickness(thickness_nm));
        }
        if !(index.re > 0.0) || index.im < 0.0 || !index.im.is_finite() {
            return Err(OpticsError::InvalidIndex(format!("{index}")));
        }
        Ok(Self {
            index,
            thickness_nm,
        })
    }

    pub fn dielectric(index: f64, thickness_nm: f64) -> Result<Self, OpticsError> {
        Self::new(Complex64::new(index, 0.0), thickness_nm)
    }

    pub fn index(&self) -> Complex64 {
        self.index
    }

    pub fn thickness_nm(&self) -> f64 {
        self.thickness_nm
    }

    pub fn is_lossless(&self) -> bool {
        self.index.im == 0.0
    }
}

/// Planar multilayer between a semi-infinite ambient medium (light incident
/// from here) and a semi-infinite substrate. `layers[0]` faces the ambient.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerStack {
    ambient_index: f64,
    layers: Vec<Layer>,
    substrate_index: f64,
}

impl LayerStack {
    pub fn new(
        ambient_index: f64,
        layers: Vec<Layer>,
        substrate_index: f64,
    ) -> Result<Self, OpticsError> {
        for n in [ambient_index, substrate_index] {
            if !(n > 0.0) || !n.is_finite() {
                return Err(OpticsError::InvalidIndex(format!("{n}")));
            }
        }
        Ok(Self {
            ambient_index,
            layers,
            substrate_index,
        })
    }

    /// `pairs` repetitions of (high, low), high-index film facing the ambient.
    pub fn bragg_mirror(
        high: Layer,
        low: Layer,
        pairs: usize,
        ambient_index: f64,
        substrate_index: f64,
    ) -> Result<Self, OpticsError> {
        let layers = (0..pairs).flat_map(|_| [high, low]).collect();
        Self::new(ambient_index, layers, substrate_index)
    }

    /// The TiO₂/SiO₂ bottom mirror of the open cavity, seen from air.
    pub fn tio2_sio2_dbr() -> Self {
        let high = Layer::dielectric(TIO2_INDEX, TIO2_THICKNESS_NM).expect("valid constant");
        let low = Layer::dielectric(SIO2_INDEX, SIO2_THICKNESS_NM).expect("valid constant");
        Self::bragg_mirror(high, low, DBR_PAIRS, 1.0, GLASS_INDEX).expect("valid constant")
    }

    pub fn ambient_index(&self) -> f64 {
        self.ambient_index
    }

    pub fn substrate_index(&self) -> f64 {
        self.substrate_index
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn is_lossless(&self) -> bool {
        self.layers.iter().all(Layer::is_lossless)
    }

    /// The same structure illuminated from the substrate side.
    pub fn reversed(&self) -> Self {
        Self {
            ambient_index: self.substrate_index,
            layers: self.layers.iter().rev().copied().collect(),
            substrate_index: self.ambient_index,
        }
    }

    pub fn with_layer_on_top(&self, layer: Layer) -> Self {
        let mut layers = Vec::with_capacity(self.layers.len() + 1);
        layers.push(layer);
        layers.extend_from_slice(&self.layers);
        Self {
            layers,
            ..self.clone()
        }
    }

    fn response(&self, wavelength_nm: f64) -> Reflectance {
        let eta0 = Complex64::new(self.ambient_index, 0.0);
        let eta_s = Complex64::new(self.substrate_index, 0.0);
        let i = Complex64::i();
        // [[m11, m12], [m21, m22]], accumulated ambient side first.
        let (mut m11, mut m12, mut m21, mut m22) = (
            Complex64::new(1.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(1.0, 0.0),
        );
        for layer in &self.layers {
            let n = layer.index;
            let delta = 2.0 * std::f64::consts::PI * n * layer.thickness_nm / wavelength_nm;
            let (c, s) = (delta.cos(), delta.sin());
            let a11 = c;
            let a12 = -i * s / n;
            let a21 = -i * n * s;
            let a22 = c;
            (m11, m12, m21, m22) = (
                m11 * a11 + m12 * a21,
                m11 * a12 + m12 * a22,
                m21 * a11 + m22 * a21,
                m21 * a12 + m22 * a22,
            );
        }
        let b = m11 + m12 * eta_s;
        let c = m21 + m22 * eta_s;
        let r = (eta0 * b - c) / (eta0 * b + c);
        let denom = (eta0 * b + c).norm_sqr();
        let transmission = 4.0 * eta0.re * eta_s.re / denom;
        Reflectance {
            wavelength_nm,
            r,
            reflectivity: r.norm_sqr(),
            transmission,
        }
    }
}

/// Normal-incidence response of a stack at one wavelength.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Reflectance {
    pub wavelength_nm: f64,
    /// Complex amplitude reflection coefficient.
    pub r: Complex64,
    pub reflectivity: f64,
    pub transmission: f64,
}

/// Characteristic-matrix reflectance and transmittance at normal incidence.
pub fn dbr_reflectivity(
    stack: &LayerStack,
    wavelengths_nm: &[f64],
) -> Result<Vec<Reflectance>, OpticsError> {
    if let Some(&bad) = wavelengths_nm.iter().find(|&&w| !(w > 0.0)) {
        return Err(OpticsError::NonPositiveWavelength(bad));
    }
    Ok(wavelengths_nm.iter().map(|&w| stack.response(w)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Stopband {
    /// Wavelength of maximal reflectivity on the scan grid.
    pub center_nm: f64,
    pub peak_reflectivity: f64,
    /// Contiguous region around the maximum where R stays above half the peak.
    pub lower_edge_nm: f64,
    pub upper_edge_nm: f64,
}

/// Scans `[lo, hi]` in steps of `step` nm and locates the high-reflectivity band.
pub fn stopband(
    stack: &LayerStack,
    lo_nm: f64,
    hi_nm: f64,
    step_nm: f64,
) -> Result<Stopband, OpticsError> {
    if !(step_nm > 0.0) {
        return Err(OpticsError::NonPositive("scan step"));
    }
    let n = ((hi_nm - lo_nm) / step_nm).floor() as usize + 1;
    let grid: Vec<f64> = (0..n).map(|k| lo_nm + k as f64 * step_nm).collect();
    let spectrum = dbr_reflectivity(stack, &grid)?;
    let (imax, peak) = spectrum
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (k, s)| {
            if s.reflectivity > acc.1 {
                (k, s.reflectivity)
            } else {
                acc
            }
        });
    let half = 0.5 * peak;
    let mut lo = imax;
    while lo > 0 && spectrum[lo - 1].reflectivity >= half {
        lo -= 1;
    }
    let mut hi = imax;
    while hi + 1 < spectrum.len() && spectrum[hi + 1].reflectivity >= half {
        hi += 1;
    }
    Ok(Stopband {
        center_nm: grid[imax],
        peak_reflectivity: peak,
        lower_edge_nm: grid[lo],
        upper_edge_nm: grid[hi],
    })
}

/// Planar model of the open cavity at one wavelength, seen from the top
/// (glass) side: gold film, air gap, hBN cap, WSe₂ sheet, then the DBR on glass.
pub fn open_cavity_stack(gap_um: f64, gold_index: Complex64) -> Result<LayerStack, OpticsError> {
    let mut layers = vec![
        Layer::new(gold_index, GOLD_THICKNESS_NM)?,
        Layer::dielectric(1.0, gap_um * 1000.0)?,
        Layer::dielectric(HBN_INDEX, HBN_THICKNESS_NM)?,
        Layer::dielectric(WSE2_INDEX, WSE2_THICKNESS_NM)?,
    ];
    layers.extend_from_slice(LayerStack::tio2_sio2_dbr().layers());
    LayerStack::new(GLASS_INDEX, layers, GLASS_INDEX)
}
