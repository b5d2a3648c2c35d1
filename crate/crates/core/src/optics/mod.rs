//! Passive cavity optics: mirror stacks, resonator modes and the
//! detuning-dependent spontaneous emission rate of a cavity-coupled emitter.
//!
//! Units follow the conventions of the rest of the crate: wavelengths and
//! layer thicknesses in nm, cavity lengths and radii in µm, energies in eV
//! (spacings and linewidths in meV), rates in 1/ns.

mod cavity;
mod decay;
mod gold;
mod stack;

pub use cavity::{
    calibrated_overlap, cavity_mode_spectrum, cavity_mode_spectrum_with_orders, default_overlap,
    gaussian_mode_volume, gaussian_waist, purcell_factor, roc_from_spherical_cap, CavityGeometry,
    CavityMode, GaussianWaist, ModeSpectrum, DEFAULT_TRANSVERSE_ORDERS,
};
pub use decay::{kappa_from_q, q_from_kappa, DetunedDecayModel};
pub use gold::{GoldTable, DEFAULT_GOLD_TABLE};
pub use stack::{
    dbr_reflectivity, open_cavity_stack, stopband, Layer, LayerStack, Reflectance, Stopband,
};

use thiserror::Error;

/// Planck constant times speed of light, eV·nm.
pub const HC_EV_NM: f64 = 1239.841_984;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OpticsError {
    #[error("wavelength must be positive, got {0} nm")]
    NonPositiveWavelength(f64),
    #[error("layer thickness must be positive, got {0} nm")]
    NonPositiveThickness(f64),
    #[error("refractive index {0} is not allowed (real part must be positive, imaginary part non-negative)")]
    InvalidIndex(String),
    #[error("unstable resonator: length {length_um} µm must be positive and below the radius of curvature {radius_um} µm")]
    Unstable { length_um: f64, radius_um: f64 },
    #[error("lens depth {depth_nm} nm is not compatible with diameter {diameter_um} µm")]
    CapGeometry { diameter_um: f64, depth_nm: f64 },
    #[error("planar resonator has no transverse confinement")]
    NoTransverseConfinement,
    #[error("invalid decay model: {0}")]
    DecayModel(String),
    #[error("{0} must be positive")]
    NonPositive(&'static str),
    #[error("gold table line {line}: {message}")]
    GoldTable { line: usize, message: String },
    #[error("wavelength {0} nm is outside the tabulated range")]
    OutOfTable(f64),
}
