//! Randomness for the slot simulator.
//!
//! Every (user, purpose) pair owns its own ChaCha8 stream keyed by the
//! master seed and the replication number. One arrival draw and one channel
//! draw are consumed per user per slot whatever the policy does, so two
//! policies run on the same seed see identical arrivals and channel states.

use alloc::vec::Vec;

use rand_chacha::ChaCha8Rng;
use rand_core::{RngCore, SeedableRng};

use crate::params::UserParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Arrival = 0,
    Channel = 1,
}

/// Builds the stream for one (replication, user, purpose) triple.
pub fn substream(master_seed: u64, replication: u64, user: usize, purpose: Purpose) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&replication.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(2 * user as u64 + purpose as u64);
    rng
}

/// Uniform draw in `[0, 1)` with 53 random bits.
#[inline]
pub fn unit_f64<R: RngCore>(rng: &mut R) -> f64 {
    (rng.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Bernoulli draw; `prob = 1` always succeeds.
#[inline]
pub fn bernoulli<R: RngCore>(rng: &mut R, prob: f64) -> bool {
    unit_f64(rng) < prob
}

/// Per-user arrival and channel streams for one replication.
#[derive(Debug, Clone)]
pub struct SlotRandomness {
    arrival: Vec<ChaCha8Rng>,
    channel: Vec<ChaCha8Rng>,
}

impl SlotRandomness {
    pub fn new(master_seed: u64, replication: u64, users: usize) -> Self {
        Self {
            arrival: (0..users)
                .map(|n| substream(master_seed, replication, n, Purpose::Arrival))
                .collect(),
            channel: (0..users)
                .map(|n| substream(master_seed, replication, n, Purpose::Channel))
                .collect(),
        }
    }

    pub fn num_users(&self) -> usize {
        self.arrival.len()
    }

    /// Fills one slot's arrival indicators and channel success indicators.
    #[inline]
    pub fn draw(&mut self, users: &[UserParams], arrivals: &mut [bool], channel: &mut [bool]) {
        for (n, u) in users.iter().enumerate() {
            arrivals[n] = bernoulli(&mut self.arrival[n], u.lambda());
            channel[n] = bernoulli(&mut self.channel[n], u.p());
        }
    }
}
