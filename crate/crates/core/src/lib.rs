//! Simulation and analysis of a cavity-coupled single-photon emitter:
//! cavity optics, Monte Carlo time-tag generation, photon correlation,
//! least-squares fitting and the derived figures of merit.

pub mod analysis;
pub mod correlator;
pub mod fitkit;
pub mod montecarlo;
pub mod optics;
pub mod ptag;
pub mod stream;
