use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;

/// Independent families of random draws.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Domain {
    /// Excitation, emission delays and first-splitter routing of one pulse.
    Emission = 1,
    /// Setup loss and timing jitter of one photon.
    Instrument = 2,
    /// Dark counts of one detector channel.
    Dark = 3,
    /// Second-splitter decisions of one interferometer time slot.
    Routing = 4,
    /// Synthetic spectra and scans.
    Synthetic = 5,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Generator for draw family `domain`, item `index`, under `seed`.
pub fn substream(seed: u64, domain: Domain, index: u64) -> Xoshiro256PlusPlus {
    let h = splitmix64(seed);
    let h = splitmix64(h ^ (domain as u64).wrapping_mul(0xd6e8_feb8_6659_fd93));
    let h = splitmix64(h ^ index);
    Xoshiro256PlusPlus::seed_from_u64(h)
}
