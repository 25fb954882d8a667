//! Network parameters.

use alloc::vec::Vec;

use crate::error::{Error, Result};

fn check_probability(name: &'static str, value: f64) -> Result<f64> {
    if value > 0.0 && value <= 1.0 {
        Ok(value)
    } else {
        Err(Error::InvalidProbability { name, value })
    }
}

/// Per-user update arrival probability and channel success probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UserParams {
    lambda: f64,
    p: f64,
}

impl UserParams {
    pub fn new(lambda: f64, p: f64) -> Result<Self> {
        Ok(Self {
            lambda: check_probability("lambda", lambda)?,
            p: check_probability("p", p)?,
        })
    }

    /// Probability that the source produces an update in a slot.
    #[inline]
    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    /// Probability that a scheduled transmission is delivered.
    #[inline]
    pub fn p(&self) -> f64 {
        self.p
    }

    /// Mean idle run between deliveries and the next update, `(1 - λ) / λ`.
    #[inline]
    pub fn idle_ratio(&self) -> f64 {
        (1.0 - self.lambda) / self.lambda
    }
}

/// A broadcast network: the users, the per-slot bandwidth, horizon and seed.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    users: Vec<UserParams>,
    bandwidth: usize,
    horizon: u64,
    master_seed: u64,
}

impl NetworkConfig {
    pub fn new(users: Vec<UserParams>, bandwidth: usize, horizon: u64, master_seed: u64) -> Result<Self> {
        if users.is_empty() {
            return Err(Error::InvalidParameter {
                name: "users",
                reason: "at least one user is required",
            });
        }
        if bandwidth == 0 || bandwidth > users.len() {
            return Err(Error::InvalidParameter {
                name: "bandwidth",
                reason: "must satisfy 1 <= M <= N",
            });
        }
        if horizon == 0 {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: "must be at least one slot",
            });
        }
        Ok(Self {
            users,
            bandwidth,
            horizon,
            master_seed,
        })
    }

    /// Single-channel network (`M = 1`).
    pub fn single_channel(users: Vec<UserParams>, horizon: u64, master_seed: u64) -> Result<Self> {
        Self::new(users, 1, horizon, master_seed)
    }

    pub fn users(&self) -> &[UserParams] {
        &self.users
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    pub fn bandwidth(&self) -> usize {
        self.bandwidth
    }

    pub fn horizon(&self) -> u64 {
        self.horizon
    }

    pub fn master_seed(&self) -> u64 {
        self.master_seed
    }

    pub fn with_horizon(mut self, horizon: u64) -> Result<Self> {
        if horizon == 0 {
            return Err(Error::InvalidParameter {
                name: "horizon",
                reason: "must be at least one slot",
            });
        }
        self.horizon = horizon;
        Ok(self)
    }

    pub fn with_seed(mut self, master_seed: u64) -> Self {
        self.master_seed = master_seed;
        self
    }

    /// Sum of arrival probabilities across users.
    pub fn lambda_total(&self) -> f64 {
        self.users.iter().map(UserParams::lambda).sum()
    }
}
