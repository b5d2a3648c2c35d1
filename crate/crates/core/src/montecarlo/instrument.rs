use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use rayon::prelude::*;

use super::rng::{substream, Domain};
use super::InstrumentChain;
use crate::stream::{TimeTag, TimeTagStream};

/// A photon arriving at a detector (or a sync pulse) before any detector
/// effect. `key` identifies the photon; its loss and jitter draws depend on
/// `(seed, key)` only.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IdealEvent {
    pub channel: u8,
    pub time_ps: f64,
    pub key: u64,
}

/// Shape of the output stream. Channels not listed in `detector_channels`
/// (sync) bypass loss, jitter, dead time and dark counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StreamLayout {
    pub channel_count: u8,
    pub duration_ps: u64,
    pub detector_channels: Vec<u8>,
}

impl StreamLayout {
    fn is_detector(&self, channel: u8) -> bool {
        self.detector_channels.contains(&channel)
    }
}

/// Loss and jitter for a single event; `None` when it is lost or pushed
/// outside `[0, duration)`.
pub(crate) fn detect(
    event: &IdealEvent,
    chain: &InstrumentChain,
    seed: u64,
    layout: &StreamLayout,
) -> Option<TimeTag> {
    let mut t = event.time_ps;
    if layout.is_detector(event.channel) {
        let sigma = chain.jitter_sigma_ps();
        if chain.eta_setup < 1.0 || sigma > 0.0 {
            let mut rng = substream(seed, Domain::Instrument, event.key);
            if rng.random::<f64>() >= chain.eta_setup {
                return None;
            }
            if sigma > 0.0 {
                let z: f64 = StandardNormal.sample(&mut rng);
                t += sigma * z;
            }
        }
    }
    let t = t.round();
    if t < 0.0 || t >= layout.duration_ps as f64 {
        return None;
    }
    Some(TimeTag::new(event.channel, t as u64))
}

/// Merges dark counts, sorts, and applies per-channel dead time.
pub(crate) fn finish(
    mut tags: Vec<TimeTag>,
    chain: &InstrumentChain,
    seed: u64,
    layout: &StreamLayout,
) -> TimeTagStream {
    let mean_darks = chain.dark_rate_hz * layout.duration_ps as f64 * 1e-12;
    if mean_darks > 0.0 && layout.duration_ps > 0 {
        for &ch in &layout.detector_channels {
            let mut rng = substream(seed, Domain::Dark, ch as u64);
            let n = Poisson::new(mean_darks).expect("positive mean").sample(&mut rng) as u64;
            for _ in 0..n {
                tags.push(TimeTag::new(ch, rng.random_range(0..layout.duration_ps)));
            }
        }
    }
    tags.par_sort_unstable_by_key(|t| (t.time_ps, t.channel));

    let dead_ps = (chain.dead_time_ns * 1000.0).round() as u64;
    if dead_ps > 0 {
        let mut last: Vec<Option<u64>> = vec![None; layout.channel_count as usize];
        tags.retain(|t| {
            if !layout.is_detector(t.channel) {
                return true;
            }
            let slot = &mut last[t.channel as usize];
            match *slot {
                Some(prev) if t.time_ps - prev < dead_ps => false,
                _ => {
                    *slot = Some(t.time_ps);
                    true
                }
            }
        });
    }
    TimeTagStream::new(1, layout.duration_ps, layout.channel_count, tags)
        .expect("instrument output satisfies stream invariants")
}

/// Detector chain applied to time-sorted ideal events: Bernoulli loss at
/// `eta_setup`, Gaussian jitter (σ = FWHM/2.3548, rounded to 1 ps), dark
/// counts, then per-channel dead time measured from the last accepted click.
///
/// Dark counts are merged before the dead-time filter, since a dark click
/// blinds a real detector just like a photon click.
pub fn apply_instrument(
    events: &[IdealEvent],
    chain: &InstrumentChain,
    seed: u64,
    layout: &StreamLayout,
) -> TimeTagStream {
    let tags: Vec<TimeTag> = events
        .par_iter()
        .filter_map(|e| detect(e, chain, seed, layout))
        .collect();
    finish(tags, chain, seed, layout)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn layout(duration_ps: u64) -> StreamLayout {
        StreamLayout {
            channel_count: 2,
            duration_ps,
            detector_channels: vec![0, 1],
        }
    }

    fn events(times: &[(u8, u64)]) -> Vec<IdealEvent> {
        times
            .iter()
            .enumerate()
            .map(|(i, &(channel, t))| IdealEvent {
                channel,
                time_ps: t as f64,
                key: i as u64,
            })
            .collect()
    }

    #[test]
    fn identity_chain() {
        let input = [(0, 5), (1, 5), (1, 9), (0, 1_000)];
        let out = apply_instrument(&events(&input), &InstrumentChain::ideal(), 3, &layout(2_000));
        let expect: Vec<TimeTag> = input.iter().map(|&(c, t)| TimeTag::new(c, t)).collect();
        assert_eq!(out.tags(), expect.as_slice());
    }

    #[test]
    fn dead_time_drops_second_click() {
        let chain = InstrumentChain {
            dead_time_ns: 45.0,
            ..InstrumentChain::ideal()
        };
        let out = apply_instrument(
            &events(&[(0, 0), (0, 10_000), (1, 10_000), (0, 45_000)]),
            &chain,
            0,
            &layout(100_000),
        );
        assert_eq!(
            out.tags(),
            &[TimeTag::new(0, 0), TimeTag::new(1, 10_000), TimeTag::new(0, 45_000)]
        );
    }

    #[test]
    fn sync_channels_bypass_the_detectors() {
        let chain = InstrumentChain {
            eta_setup: 0.0,
            dead_time_ns: 1.0,
            ..InstrumentChain::ideal()
        };
        let lay = StreamLayout {
            channel_count: 2,
            duration_ps: 100,
            detector_channels: vec![1],
        };
        let out = apply_instrument(&events(&[(0, 1), (0, 2), (1, 3)]), &chain, 0, &lay);
        assert_eq!(out.tags(), &[TimeTag::new(0, 1), TimeTag::new(0, 2)]);
    }

    #[test]
    fn jittered_events_stay_inside_the_stream() {
        let chain = InstrumentChain {
            jitter_fwhm_ps: 500.0,
            ..InstrumentChain::ideal()
        };
        let out = apply_instrument(&events(&[(0, 0), (1, 999)]), &chain, 11, &layout(1_000));
        assert!(out.validate().is_ok());
        assert!(out.len() <= 2);
    }
}
