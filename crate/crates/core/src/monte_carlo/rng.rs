//! Per-path random-number substreams.
//!
//! Every path owns four ChaCha streams keyed by `(seed, path_index, channel)`
//! via the cipher's 64-bit stream nonce, so draws are reproducible for any
//! worker count and the channels never alias: primary signal gaps, secondary
//! signal gaps (the inf player's private stream), colour marks, and Gaussian
//! increments.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const CHANNELS: u64 = 4;

#[derive(Clone, Copy)]
pub(crate) enum Channel {
    PrimaryGaps = 0,
    SecondaryGaps = 1,
    Colors = 2,
    Gauss = 3,
}

pub(crate) fn base_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn channel_rng(base: &ChaCha8Rng, path: u64, channel: Channel) -> ChaCha8Rng {
    let mut rng = base.clone();
    // stream 0 is the freshly seeded default; skip it
    rng.set_stream(
        path.wrapping_mul(CHANNELS)
            .wrapping_add(channel as u64)
            .wrapping_add(1),
    );
    rng
}

/// All four substreams of one path.
pub(crate) struct PathStreams {
    pub primary_gaps: ChaCha8Rng,
    pub secondary_gaps: ChaCha8Rng,
    pub colors: ChaCha8Rng,
    pub gauss: ChaCha8Rng,
}

impl PathStreams {
    pub fn new(base: &ChaCha8Rng, path: u64) -> Self {
        Self {
            primary_gaps: channel_rng(base, path, Channel::PrimaryGaps),
            secondary_gaps: channel_rng(base, path, Channel::SecondaryGaps),
            colors: channel_rng(base, path, Channel::Colors),
            gauss: channel_rng(base, path, Channel::Gauss),
        }
    }

    pub fn standard_normal(&mut self) -> f64 {
        self.gauss.sample(StandardNormal)
    }
}

/// Exponential draw by inversion; kept explicit so the gap law is pinned to
/// the rng stream and nothing else.
pub(crate) fn exp_gap(rng: &mut ChaCha8Rng, rate: f64) -> f64 {
    debug_assert!(rate > 0.0);
    let u: f64 = rng.gen::<f64>();
    -(1.0 - u).ln() / rate
}
