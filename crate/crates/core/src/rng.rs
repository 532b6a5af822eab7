//! Seeded, portable random streams.
//!
//! Every random quantity in the crate is drawn from a PCG-XSL-RR 128/64
//! generator (`rand_pcg::Pcg64`). A user seed fans out into independent
//! substreams: the substream id selects the PCG increment, and the seed is
//! spread over the 128-bit state with a SplitMix64 finalizer. Consumers pick a
//! fixed substream per channel or per initial condition, so the values a
//! consumer sees never depend on how many threads ran or in which order.

use rand::Rng;
pub use rand_pcg::Pcg64;

/// Substream ids used by the generators and samplers in this crate.
pub mod streams {
    pub const TWO_SYMBOL: u64 = 0x10;
    pub const UNIFORM_SCALED: u64 = 0x20;
    pub const CONTEXT_NOISE_1: u64 = 0x30;
    pub const CONTEXT_NOISE_2: u64 = 0x31;
    pub const CONTEXT_PULSE_ON: u64 = 0x32;
    pub const CONTEXT_PULSE_OFF: u64 = 0x33;
    pub const RESERVOIR_W_R: u64 = 0x40;
    pub const RESERVOIR_MASK: u64 = 0x41;
    pub const RESERVOIR_W_IN: u64 = 0x42;
    pub const RESERVOIR_W_FB: u64 = 0x43;
    pub const TRAINING_NOISE: u64 = 0x50;
    pub const FIBRE_CLOUD: u64 = 0x60;
    /// Initial condition `i` of an ensemble uses `INITIAL_CONDITION_BASE + i`.
    pub const INITIAL_CONDITION_BASE: u64 = 1 << 32;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent generator for `(seed, stream)`.
pub fn substream(seed: u64, stream: u64) -> Pcg64 {
    let hi = splitmix64(seed);
    let lo = splitmix64(hi ^ seed.rotate_left(17));
    let state = ((hi as u128) << 64) | lo as u128;
    Pcg64::new(state, stream as u128)
}

/// Uniform draw in `[lo, hi)`.
pub fn uniform<R: Rng>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_stream() {
        let a: Vec<u64> = (0..8).map({
            let mut r = substream(7, 3);
            move |_| r.random()
        }).collect();
        let b: Vec<u64> = (0..8).map({
            let mut r = substream(7, 3);
            move |_| r.random()
        }).collect();
        assert_eq!(a, b);
    }

    #[test]
    fn streams_differ() {
        let mut a = substream(7, 3);
        let mut b = substream(7, 4);
        let mut c = substream(8, 3);
        let x: u64 = a.random();
        assert_ne!(x, b.random::<u64>());
        assert_ne!(x, c.random::<u64>());
    }

    #[test]
    fn committed_stream_value() {
        // Pins the seed expansion so a refactor cannot silently change every
        // generated sequence.
        let mut r = substream(0, 0);
        let first: u64 = r.random();
        assert_eq!(first, 13_333_621_140_202_739_352);
        assert!(uniform(&mut r, -1.0, 1.0).abs() <= 1.0);
    }
}
