//! Slotted simulation of a broadcast network under a scheduler.

use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::{validate_decision, NetworkState};
use crate::error::Result;
use crate::params::NetworkConfig;
use crate::policy::Scheduler;
use crate::rng::SlotRandomness;

/// What to record besides the running sums.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Recording {
    /// Count slots per (user, AoS at decision time) in which the user was served.
    pub schedule_histogram: bool,
    /// Count slots per (user, AoS) regardless of the decision.
    pub state_occupancy: bool,
}

impl Recording {
    pub const NONE: Recording = Recording {
        schedule_histogram: false,
        state_occupancy: false,
    };
    pub const ALL: Recording = Recording {
        schedule_histogram: true,
        state_occupancy: true,
    };
}

/// Raw counters of one simulated trajectory.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunMetrics {
    pub slots: u64,
    /// `Σ_t s_n(t)` per user over `t = 1..=T`.
    pub aos_sum: Vec<u128>,
    /// `Σ_t h_n(t)` per user.
    pub aoi_sum: Vec<u128>,
    /// Number of slots in which each user was served.
    pub scheduled: Vec<u64>,
    /// Number of successful deliveries per user.
    pub delivered: Vec<u64>,
    /// `schedule_histogram[n][s]`: slots where `n` was served at AoS `s`.
    pub schedule_histogram: Option<Vec<Vec<u64>>>,
    /// `state_occupancy[n][s]`: slots that began with `s_n(t) = s`.
    pub state_occupancy: Option<Vec<Vec<u64>>>,
}

impl RunMetrics {
    fn new(users: usize, slots: u64, rec: Recording) -> Self {
        Self {
            slots,
            aos_sum: vec![0; users],
            aoi_sum: vec![0; users],
            scheduled: vec![0; users],
            delivered: vec![0; users],
            schedule_histogram: rec.schedule_histogram.then(|| vec![Vec::new(); users]),
            state_occupancy: rec.state_occupancy.then(|| vec![Vec::new(); users]),
        }
    }

    pub fn num_users(&self) -> usize {
        self.aos_sum.len()
    }

    /// Network time-average AoS, `(1/NT) Σ_t Σ_n s_n(t)`.
    pub fn network_aos(&self) -> f64 {
        let total: u128 = self.aos_sum.iter().sum();
        total as f64 / (self.slots as f64 * self.num_users() as f64)
    }

    pub fn network_aoi(&self) -> f64 {
        let total: u128 = self.aoi_sum.iter().sum();
        total as f64 / (self.slots as f64 * self.num_users() as f64)
    }

    pub fn user_aos(&self, n: usize) -> f64 {
        self.aos_sum[n] as f64 / self.slots as f64
    }

    pub fn user_aoi(&self, n: usize) -> f64 {
        self.aoi_sum[n] as f64 / self.slots as f64
    }

    /// Fraction of slots in which user `n` was served.
    pub fn activation_rate(&self, n: usize) -> f64 {
        self.scheduled[n] as f64 / self.slots as f64
    }

    /// Total served (user, slot) pairs.
    pub fn total_scheduled(&self) -> u64 {
        self.scheduled.iter().sum()
    }

    /// Mean AoS at which user `n` was served, if it ever was.
    pub fn mean_scheduled_age(&self, n: usize) -> Option<f64> {
        let hist = self.schedule_histogram.as_ref()?.get(n)?;
        let count: u64 = hist.iter().sum();
        if count == 0 {
            return None;
        }
        let weighted: u128 = hist.iter().enumerate().map(|(s, &c)| s as u128 * c as u128).sum();
        Some(weighted as f64 / count as f64)
    }
}

#[inline]
fn bump(hist: &mut Vec<u64>, s: u64) {
    let s = s as usize;
    if hist.len() <= s {
        hist.resize(s + 1, 0);
    }
    hist[s] += 1;
}

/// Simulates one replication of `config` under `policy`.
///
/// The ages start synchronized. Slot `t` contributes the ages at its start,
/// so a one-slot run has zero cost. Randomness comes from the
/// `(master_seed, replication)` substreams.
pub fn simulate<S: Scheduler + ?Sized>(
    config: &NetworkConfig,
    policy: &S,
    replication: u64,
    rec: Recording,
) -> Result<RunMetrics> {
    let n = config.num_users();
    let users = config.users();
    let bandwidth = config.bandwidth();
    let mut rng = SlotRandomness::new(config.master_seed(), replication, n);
    let mut state = NetworkState::synchronized(n);
    let mut metrics = RunMetrics::new(n, config.horizon(), rec);

    let mut decision = Vec::with_capacity(bandwidth);
    let mut arrivals = vec![false; n];
    let mut channel = vec![false; n];
    let mut delivered = vec![false; n];

    for _ in 0..config.horizon() {
        for u in 0..n {
            metrics.aos_sum[u] += u128::from(state.aos()[u]);
            metrics.aoi_sum[u] += u128::from(state.aoi()[u]);
        }
        if let Some(occ) = metrics.state_occupancy.as_mut() {
            for (u, h) in occ.iter_mut().enumerate() {
                bump(h, state.aos()[u]);
            }
        }

        policy.decide(&state, bandwidth, &mut decision);
        validate_decision(&decision, n, bandwidth)?;
        for &u in &decision {
            metrics.scheduled[u] += 1;
            if let Some(hist) = metrics.schedule_histogram.as_mut() {
                bump(&mut hist[u], state.aos()[u]);
            }
        }

        rng.draw(users, &mut arrivals, &mut channel);
        state.advance(&decision, &arrivals, &channel, &mut delivered);
        for (u, &d) in delivered.iter().enumerate() {
            metrics.delivered[u] += u64::from(d);
        }
    }
    Ok(metrics)
}

/// Mean and standard error of a set of replication values.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mean: f64,
    /// Standard error of the mean; zero for a single value.
    pub std_err: f64,
    pub count: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                std_err: f64::NAN,
                count,
            };
        }
        // Welford
        let mut mean = 0.0;
        let mut m2 = 0.0;
        for (i, &x) in values.iter().enumerate() {
            let d = x - mean;
            mean += d / (i + 1) as f64;
            m2 += d * (x - mean);
        }
        let std_err = if count > 1 {
            libm::sqrt(m2 / (count - 1) as f64 / count as f64)
        } else {
            0.0
        };
        Self { mean, std_err, count }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::UserParams;
    use crate::policy::{GreedyAos, IdlePolicy, ThresholdPolicy};

    fn net(l: &[f64], p: &[f64], t: u64) -> NetworkConfig {
        let users = l.iter().zip(p).map(|(&l, &p)| UserParams::new(l, p).unwrap()).collect();
        NetworkConfig::single_channel(users, t, 11).unwrap()
    }

    #[test]
    fn single_slot_costs_nothing() {
        let m = simulate(&net(&[0.7, 0.2], &[0.5, 0.5], 1), &GreedyAos, 0, Recording::NONE).unwrap();
        assert_eq!(m.network_aos(), 0.0);
    }

    #[test]
    fn deterministic_single_user() {
        let cfg = net(&[1.0], &[1.0], 100_000);
        let m = simulate(&cfg, &GreedyAos, 0, Recording::ALL).unwrap();
        // s(1) = 0, then 1 forever
        assert!((m.network_aos() - (99_999.0 / 100_000.0)).abs() < 1e-12);
        let hist = m.schedule_histogram.as_ref().unwrap();
        assert_eq!(hist[0][1], 99_999);
        assert_eq!(hist[0].iter().sum::<u64>(), m.scheduled[0]);
    }

    #[test]
    fn idle_policy_records_nothing() {
        let cfg = net(&[0.5], &[0.5], 1000);
        let m = simulate(&cfg, &IdlePolicy, 0, Recording::ALL).unwrap();
        assert_eq!(m.total_scheduled(), 0);
        assert!(m.schedule_histogram.unwrap()[0].iter().all(|&c| c == 0));
    }

    #[test]
    fn same_seed_same_trajectory() {
        let cfg = net(&[0.3, 0.6], &[0.4, 0.8], 5000);
        let a = simulate(&cfg, &GreedyAos, 3, Recording::ALL).unwrap();
        let b = simulate(&cfg, &GreedyAos, 3, Recording::ALL).unwrap();
        assert_eq!(a, b);
        let c = simulate(&cfg, &GreedyAos, 4, Recording::ALL).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn threshold_activation_matches_closed_form() {
        use crate::bandit::{steady_state, BanditParams};
        let cfg = net(&[0.5], &[0.5], 400_000);
        let m = simulate(&cfg, &ThresholdPolicy::new(vec![2]).unwrap(), 0, Recording::NONE).unwrap();
        let a = steady_state(2, &BanditParams::new(0.5, 0.5, 0.0).unwrap()).unwrap();
        assert!((m.activation_rate(0) - a.activation_prob).abs() < 0.01);
        assert!((m.network_aos() - a.avg_cost).abs() / a.avg_cost < 0.02);
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[1.0, 2.0, 3.0, 4.0]);
        assert!((s.mean - 2.5).abs() < 1e-15);
        // sample sd = sqrt(5/3), se = sd / 2
        assert!((s.std_err - libm::sqrt(5.0 / 3.0) / 2.0).abs() < 1e-15);
        assert_eq!(Summary::of(&[7.0]).std_err, 0.0);
    }
}
