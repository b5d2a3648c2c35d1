use rand::Rng;
use rand_distr::{Distribution, Exp1, Poisson};
use rand_xoshiro::Xoshiro256PlusPlus;
use rayon::prelude::*;

use super::instrument::{detect, finish, IdealEvent, StreamLayout};
use super::rng::{substream, Domain};
use super::{
    param, pile_up_warning, EmitterModel, InstrumentChain, PulseTrain, SimError, SimOutput,
};
use crate::stream::TimeTag;

/// Pulses handled per parallel work item.
pub(crate) const CHUNK_PULSES: u64 = 1 << 15;

/// Photon identity used to key the instrument draws.
pub(crate) fn photon_key(pulse: u64, index: usize) -> u64 {
    (pulse << 8) | index.min(255) as u64
}

#[derive(Debug, Clone, Copy, Default)]
pub(crate) struct Photon {
    pub delay_ps: f64,
    pub index: usize,
    pub long_arm: bool,
}

/// Photons of one pulse that reach the first lens: at most the signal photon
/// and one extra photon. Each has its own exponential emission delay. When
/// `long_arm_ratio` is set, each photon also picks an interferometer arm.
pub(crate) fn emit_pulse(
    emitter: &EmitterModel,
    chain: &InstrumentChain,
    seed: u64,
    pulse: u64,
    long_arm_ratio: Option<f64>,
) -> ([Photon; 2], usize) {
    let mut rng = substream(seed, Domain::Emission, pulse);
    let mut out = [Photon::default(); 2];
    let mut n = 0;
    if rng.random::<f64>() >= emitter.p_exc {
        return (out, 0);
    }
    let emitted = if emitter.p_multi > 0.0 && rng.random::<f64>() < emitter.p_multi {
        2
    } else {
        1
    };
    let tau_ps = 1000.0 * emitter.t1_ns;
    for index in 0..emitted {
        let e: f64 = Exp1.sample(&mut rng);
        let reaches_lens = rng.random::<f64>() < chain.eta_first_lens;
        let long_arm = long_arm_ratio.is_some_and(|r| rng.random::<f64>() < r);
        if reaches_lens {
            out[n] = Photon {
                delay_ps: tau_ps * e,
                index,
                long_arm,
            };
            n += 1;
        }
    }
    (out, n)
}

fn layout_for(train: &PulseTrain, channel_count: u8, detectors: Vec<u8>) -> StreamLayout {
    StreamLayout {
        channel_count,
        duration_ps: (train.n_pulses as f64 * train.period_ps()).ceil() as u64,
        detector_channels: detectors,
    }
}

/// Runs `per_pulse` over all pulses in parallel chunks and concatenates the
/// detected tags in pulse order.
pub(crate) fn generate<F>(
    n_pulses: u64,
    chain: &InstrumentChain,
    seed: u64,
    layout: &StreamLayout,
    per_pulse: F,
) -> Vec<TimeTag>
where
    F: Fn(u64, &mut Vec<IdealEvent>) + Sync,
{
    let n_chunks = n_pulses.div_ceil(CHUNK_PULSES);
    let parts: Vec<Vec<TimeTag>> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let mut ideal = Vec::new();
            let mut tags = Vec::new();
            let end = ((c + 1) * CHUNK_PULSES).min(n_pulses);
            for pulse in c * CHUNK_PULSES..end {
                ideal.clear();
                per_pulse(pulse, &mut ideal);
                tags.extend(ideal.iter().filter_map(|e| detect(e, chain, seed, layout)));
            }
            tags
        })
        .collect();
    parts.concat()
}

fn validate_all(
    emitter: &EmitterModel,
    chain: &InstrumentChain,
    train: &PulseTrain,
) -> Result<(), SimError> {
    emitter.validate()?;
    chain.validate()?;
    train.validate()
}

/// Start-stop lifetime set-up: channel 0 carries one sync tag per pulse,
/// channel 1 the detector.
pub fn simulate_decay(
    emitter: &EmitterModel,
    chain: &InstrumentChain,
    train: &PulseTrain,
) -> Result<SimOutput, SimError> {
    validate_all(emitter, chain, train)?;
    let layout = layout_for(train, 2, vec![1]);
    let tags = generate(train.n_pulses, chain, train.seed, &layout, |pulse, out| {
        let t0 = train.pulse_time_ps(pulse);
        out.push(IdealEvent {
            channel: 0,
            time_ps: t0,
            key: 0,
        });
        let (photons, n) = emit_pulse(emitter, chain, train.seed, pulse, None);
        for p in &photons[..n] {
            out.push(IdealEvent {
                channel: 1,
                time_ps: t0 + p.delay_ps,
                key: photon_key(pulse, p.index),
            });
        }
    });
    Ok(SimOutput {
        stream: finish(tags, chain, train.seed, &layout),
        warnings: pile_up_warning(emitter, train).into_iter().collect(),
    })
}

/// Extra-photon probability that makes the two-photon peak reach `g2_target`.
///
/// With the signal photon emitted at probability `p_exc` and an extra photon
/// at `p_m` per excitation, the zero-delay to side-peak area ratio is
/// `g2 = 2·p_m / (p_exc·(1 + p_m)²)`, which inverts in closed form.
pub fn multi_photon_probability(g2_target: f64, p_exc: f64) -> Result<f64, SimError> {
    if !(0.0..=1.0).contains(&g2_target) {
        return Err(param("g2_target", format!("{g2_target} is not in [0, 1]")));
    }
    if g2_target == 0.0 {
        return Ok(0.0);
    }
    if !(p_exc > 0.0 && p_exc <= 1.0) {
        return Err(param("p_exc", "must be in (0, 1] for a non-zero g2 target"));
    }
    let a = g2_target * p_exc;
    if a > 0.5 {
        return Err(SimError::UnreachableG2 {
            target: g2_target,
            p_exc,
            max: 0.5 / p_exc,
        });
    }
    // Smaller root of a·p² + 2(a − 1)·p + a = 0, in cancellation-free form.
    Ok(a / ((1.0 - a) + (1.0 - 2.0 * a).sqrt()))
}

/// HBT set-up: a 50:50 splitter feeding detectors on channels 0 and 1.
/// The emitter's `p_multi` is replaced by the value that yields `g2_target`.
pub fn simulate_hbt(
    emitter: &EmitterModel,
    chain: &InstrumentChain,
    train: &PulseTrain,
    g2_target: f64,
) -> Result<SimOutput, SimError> {
    validate_all(emitter, chain, train)?;
    let emitter = EmitterModel {
        p_multi: multi_photon_probability(g2_target, emitter.p_exc)?,
        ..*emitter
    };
    let layout = layout_for(train, 2, vec![0, 1]);
    let tags = generate(train.n_pulses, chain, train.seed, &layout, |pulse, out| {
        let t0 = train.pulse_time_ps(pulse);
        // A 50:50 arm draw doubles as the splitter output port.
        let (photons, n) = emit_pulse(&emitter, chain, train.seed, pulse, Some(0.5));
        for p in &photons[..n] {
            out.push(IdealEvent {
                channel: p.long_arm as u8,
                time_ps: t0 + p.delay_ps,
                key: photon_key(pulse, p.index),
            });
        }
    });
    Ok(SimOutput {
        stream: finish(tags, chain, train.seed, &layout),
        warnings: pile_up_warning(&emitter, train).into_iter().collect(),
    })
}

fn poisson_count(rng: &mut Xoshiro256PlusPlus, mean: f64) -> usize {
    if mean <= 0.0 {
        return 0;
    }
    Poisson::new(mean).expect("positive mean").sample(rng) as usize
}

/// HBT set-up fed by a coherent (Poissonian) source: each pulse carries a
/// Poisson number of photons with mean `mean_photons`, each delayed by an
/// independent exponential of mean `t1_ns` (zero for a bare laser pulse).
pub fn simulate_coherent_hbt(
    mean_photons: f64,
    t1_ns: f64,
    chain: &InstrumentChain,
    train: &PulseTrain,
) -> Result<SimOutput, SimError> {
    if !(mean_photons >= 0.0 && mean_photons.is_finite()) {
        return Err(param("mean_photons", "must be finite and non-negative"));
    }
    if !(t1_ns >= 0.0 && t1_ns.is_finite()) {
        return Err(param("t1_ns", "must be finite and non-negative"));
    }
    chain.validate()?;
    train.validate()?;
    let layout = layout_for(train, 2, vec![0, 1]);
    let tau_ps = 1000.0 * t1_ns;
    let tags = generate(train.n_pulses, chain, train.seed, &layout, |pulse, out| {
        let t0 = train.pulse_time_ps(pulse);
        let mut rng = substream(train.seed, Domain::Emission, pulse);
        let k = poisson_count(&mut rng, mean_photons);
        for index in 0..k {
            let e: f64 = Exp1.sample(&mut rng);
            let reaches_lens = rng.random::<f64>() < chain.eta_first_lens;
            let channel = (rng.random::<f64>() >= 0.5) as u8;
            if reaches_lens {
                out.push(IdealEvent {
                    channel,
                    time_ps: t0 + tau_ps * e,
                    key: photon_key(pulse, index),
                });
            }
        }
    });
    Ok(SimOutput {
        stream: finish(tags, chain, train.seed, &layout),
        warnings: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_photon_inverse() {
        for &(g2, p_exc) in &[(0.047, 1.0), (0.2, 0.8), (0.5, 1.0), (1e-6, 0.3)] {
            let p = multi_photon_probability(g2, p_exc).unwrap();
            let back = 2.0 * p / (p_exc * (1.0 + p) * (1.0 + p));
            assert!((back - g2).abs() < 1e-12 * g2.max(1.0), "{g2} {p_exc}");
        }
        assert_eq!(multi_photon_probability(0.0, 0.0).unwrap(), 0.0);
        assert!(matches!(
            multi_photon_probability(0.9, 1.0),
            Err(SimError::UnreachableG2 { .. })
        ));
        assert!(multi_photon_probability(1.5, 0.5).is_err());
    }

    #[test]
    fn decay_stream_layout() {
        let train = PulseTrain::new(76_227.93, 1000, 5);
        let out = simulate_decay(&EmitterModel::default(), &InstrumentChain::ideal(), &train)
            .unwrap();
        assert_eq!(out.stream.count_on(0), 1000);
        assert!(out.stream.count_on(1) > 950);
        assert_eq!(out.warnings.len(), 0);
        let slow = EmitterModel {
            t1_ns: 4.0,
            ..Default::default()
        };
        let out = simulate_decay(&slow, &InstrumentChain::ideal(), &train).unwrap();
        assert_eq!(out.warnings.len(), 1);
    }
}
