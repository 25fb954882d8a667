//! Age-of-synchronization scheduling for slotted broadcast networks.
//!
//! Users receive Bernoulli source updates and are served over erasure
//! channels by a base station that can transmit to at most `M` users per
//! slot. This crate holds the age dynamics, the scheduling policies, the
//! single-arm bandit analysis behind the Whittle index, a truncated MDP
//! solver, the relaxed lower bound and a seeded slot simulator. It needs
//! only `alloc`.

#![cfg_attr(not(feature = "std"), no_std)]

extern crate alloc;

pub mod bandit;
pub mod bound;
pub mod dynamics;
pub mod error;
pub mod mdp;
pub mod params;
pub mod policy;
pub mod rng;
pub mod sim;

pub use bandit::{avg_cost_f, tau_opt, whittle_index, BanditParams};
pub use bound::{solve_bound, BoundSolution};
pub use dynamics::NetworkState;
pub use error::{Error, Result};
pub use params::{NetworkConfig, UserParams};
pub use policy::{AoiIndexBaseline, GreedyAos, IndexTable, Scheduler, WhittleAos};
pub use sim::{simulate, Recording, RunMetrics, Summary};
