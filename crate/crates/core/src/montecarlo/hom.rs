use rand::Rng;

use super::instrument::{finish, IdealEvent, StreamLayout};
use super::rng::{substream, Domain};
use super::sources::{emit_pulse, generate, photon_key, Photon};
use super::{pile_up_warning, EmitterModel, InstrumentChain, MziConfig, PulseTrain, SimError, SimOutput};

/// Whole pulse periods spanned by the long arm.
pub(crate) fn arm_delay_periods(mzi: &MziConfig, train: &PulseTrain) -> u64 {
    (1000.0 * mzi.arm_delay_ns / train.period_ps()).round() as u64
}

/// Probability that one photon in each input of the second splitter leaves
/// through different ports: `R² + T² − 2RT·M` with mode overlap `M`.
pub fn cross_port_probability(reflectivity: f64, overlap: f64) -> f64 {
    let r = reflectivity;
    let t = 1.0 - r;
    r * r + t * t - 2.0 * r * t * overlap
}

/// Mode overlap of two photons whose emission delays (relative to their
/// own pulses) differ by `dt_ps`.
pub fn pair_overlap(emitter: &EmitterModel, mzi: &MziConfig, dt_ps: f64) -> f64 {
    mzi.polarization_mode.overlap()
        * (-2.0 * emitter.pure_dephasing_per_ps() * dt_ps.abs()).exp()
        * (-emitter.gamma1_per_ps() * mzi.start_offset_ps.abs()).exp()
}

/// HOM set-up: unbalanced Mach-Zehnder interferometer with detectors on
/// channels 0 and 1 behind the second splitter.
///
/// Photons are grouped by the pulse slot in which they reach the second
/// splitter. A slot holding exactly one photon per input interferes; any other
/// occupancy is routed photon by photon. A short-arm photon leaves through
/// port 0 when transmitted, a long-arm photon when reflected.
pub fn simulate_hom(
    emitter: &EmitterModel,
    chain: &InstrumentChain,
    train: &PulseTrain,
    mzi: &MziConfig,
) -> Result<SimOutput, SimError> {
    emitter.validate()?;
    chain.validate()?;
    train.validate()?;
    mzi.validate()?;
    let k = arm_delay_periods(mzi, train);
    let n = train.n_pulses;
    let n_slots = n + k;
    let layout = StreamLayout {
        channel_count: 2,
        duration_ps: (n_slots as f64 * train.period_ps()).ceil() as u64,
        detector_channels: vec![0, 1],
    };
    let r2 = mzi.second_bs_ratio;
    let t2 = 1.0 - r2;
    let seed = train.seed;

    let arm_photons = |pulse: u64, long: bool| -> Vec<(u64, Photon)> {
        let (photons, count) = emit_pulse(emitter, chain, seed, pulse, Some(mzi.first_bs_ratio));
        photons[..count]
            .iter()
            .filter(|p| p.long_arm == long)
            .map(|p| (pulse, *p))
            .collect()
    };

    let tags = generate(n_slots, chain, seed, &layout, |slot, out| {
        let short = if slot < n { arm_photons(slot, false) } else { Vec::new() };
        let long = if slot >= k && slot - k < n {
            arm_photons(slot - k, true)
        } else {
            Vec::new()
        };
        if short.is_empty() && long.is_empty() {
            return;
        }
        let t_slot = train.pulse_time_ps(slot);
        let mut rng = substream(seed, Domain::Routing, slot);
        let mut push = |pulse: u64, p: &Photon, port: u8| {
            let offset = if p.long_arm { mzi.start_offset_ps } else { 0.0 };
            out.push(IdealEvent {
                channel: port,
                time_ps: t_slot + offset + p.delay_ps,
                key: photon_key(pulse, p.index),
            });
        };
        if short.len() == 1 && long.len() == 1 {
            let (ps, s) = short[0];
            let (pl, l) = long[0];
            let (u, v, w): (f64, f64, f64) = (rng.random(), rng.random(), rng.random());
            let overlap = pair_overlap(emitter, mzi, s.delay_ps - l.delay_ps);
            if u < cross_port_probability(r2, overlap) {
                let both_transmitted = v * (r2 * r2 + t2 * t2) < t2 * t2;
                let short_port = if both_transmitted { 0 } else { 1 };
                push(ps, &s, short_port);
                push(pl, &l, 1 - short_port);
            } else {
                let port = (w >= 0.5) as u8;
                push(ps, &s, port);
                push(pl, &l, port);
            }
        } else {
            for (pulse, p) in short.iter() {
                let port = (rng.random::<f64>() >= t2) as u8;
                push(*pulse, p, port);
            }
            for (pulse, p) in long.iter() {
                let port = (rng.random::<f64>() >= r2) as u8;
                push(*pulse, p, port);
            }
        }
    });
    Ok(SimOutput {
        stream: finish(tags, chain, seed, &layout),
        warnings: pile_up_warning(emitter, train).into_iter().collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_splitter_probabilities() {
        assert!((cross_port_probability(0.5, 1.0)).abs() < 1e-15);
        assert!((cross_port_probability(0.5, 0.0) - 0.5).abs() < 1e-15);
        assert!((cross_port_probability(0.3, 0.0) - 0.58).abs() < 1e-12);
    }

    #[test]
    fn overlap_model() {
        let e = EmitterModel {
            t1_ns: 1.0,
            t2_ps: 2000.0,
            ..Default::default()
        };
        let mut mzi = MziConfig::default();
        assert!((pair_overlap(&e, &mzi, 500.0) - 1.0).abs() < 1e-15);
        mzi.polarization_mode = super::super::PolarizationMode::HV;
        assert_eq!(pair_overlap(&e, &mzi, 0.0), 0.0);
        let e = EmitterModel {
            t1_ns: 1.725,
            t2_ps: 45.0,
            ..Default::default()
        };
        let mzi = MziConfig {
            start_offset_ps: 100.0,
            ..Default::default()
        };
        let expect = (-e.gamma1_per_ps() * 100.0).exp();
        assert!((pair_overlap(&e, &mzi, 0.0) - expect).abs() < 1e-15);
    }

    #[test]
    fn arm_delay_rounds_to_periods() {
        let train = PulseTrain::new(76_227.93, 10, 0);
        let mzi = MziConfig::default();
        assert_eq!(arm_delay_periods(&mzi, &train), 1);
    }
}
