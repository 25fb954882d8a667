//! Analysis of the decoupled single-user bandit.
//!
//! One user is treated as a restless arm whose state is its AoS. Activating
//! the arm costs an extra charge `W` per slot. Under a threshold policy that
//! activates exactly when `s >= τ`, the chain has a closed-form stationary
//! law, from which the average cost `F(τ, W)`, the optimal threshold and the
//! Whittle index follow. A relative value iteration on the truncated chain
//! is provided as an independent check of those closed forms.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::UserParams;

/// A single arm together with its activation charge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BanditParams {
    arm: UserParams,
    w: f64,
}

impl BanditParams {
    pub fn new(lambda: f64, p: f64, w: f64) -> Result<Self> {
        Self::from_arm(UserParams::new(lambda, p)?, w)
    }

    pub fn from_arm(arm: UserParams, w: f64) -> Result<Self> {
        if !(w >= 0.0 && w.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "W",
                reason: "activation charge must be finite and non-negative",
            });
        }
        Ok(Self { arm, w })
    }

    pub fn arm(&self) -> UserParams {
        self.arm
    }

    pub fn lambda(&self) -> f64 {
        self.arm.lambda()
    }

    pub fn p(&self) -> f64 {
        self.arm.p()
    }

    pub fn w(&self) -> f64 {
        self.w
    }
}

/// Stationary behaviour of the arm under a fixed threshold policy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ThresholdAnalysis {
    pub tau: u64,
    /// Probability of the synchronized state.
    pub xi0: f64,
    /// Common probability of each state `1..=τ`.
    pub xi1: f64,
    /// Geometric decay `1 - p` of the probabilities beyond `τ`.
    pub tail_decay: f64,
    /// `F(τ, W)` for the charge the analysis was built with.
    pub avg_cost: f64,
    /// Long-run fraction of active slots.
    pub activation_prob: f64,
}

impl ThresholdAnalysis {
    /// Stationary probability of state `s`.
    pub fn prob(&self, s: u64) -> f64 {
        match s {
            0 => self.xi0,
            s if s <= self.tau => self.xi1,
            s => self.xi1 * powu(self.tail_decay, s - self.tau),
        }
    }

    /// Total mass, summed in closed form.
    pub fn total_mass(&self) -> f64 {
        let tail = if self.tail_decay < 1.0 {
            self.xi1 * self.tail_decay / (1.0 - self.tail_decay)
        } else {
            f64::INFINITY
        };
        self.xi0 + self.tau as f64 * self.xi1 + tail
    }
}

fn powu(base: f64, exp: u64) -> f64 {
    libm::pow(base, exp as f64)
}

fn check_tau(tau: u64) -> Result<()> {
    if tau == 0 {
        Err(Error::InvalidThreshold(tau))
    } else {
        Ok(())
    }
}

/// `(1-λ)/λ + 1/p - 1`: the part of `1/ξ_1` that does not depend on τ.
#[inline]
fn base_length(arm: UserParams) -> f64 {
    arm.idle_ratio() + 1.0 / arm.p() - 1.0
}

#[inline]
fn xi1(arm: UserParams, tau: u64) -> f64 {
    1.0 / (base_length(arm) + tau as f64)
}

/// Stationary distribution of the threshold-`τ` policy.
pub fn steady_state(tau: u64, params: &BanditParams) -> Result<ThresholdAnalysis> {
    check_tau(tau)?;
    let arm = params.arm();
    let x1 = xi1(arm, tau);
    Ok(ThresholdAnalysis {
        tau,
        xi0: arm.idle_ratio() * x1,
        xi1: x1,
        tail_decay: 1.0 - arm.p(),
        avg_cost: cost_unchecked(arm, tau, params.w()),
        activation_prob: x1 / arm.p(),
    })
}

#[inline]
fn cost_unchecked(arm: UserParams, tau: u64, w: f64) -> f64 {
    let t = tau as f64;
    let p = arm.p();
    let x1 = xi1(arm, tau);
    t * (t - 1.0) / 2.0 * x1 + x1 / p * (1.0 / p - 1.0) + x1 / p * (t + w)
}

/// Average cost `F(τ, W)` of the threshold-`τ` policy.
pub fn avg_cost_f(tau: u64, params: &BanditParams) -> Result<f64> {
    check_tau(tau)?;
    Ok(cost_unchecked(params.arm(), tau, params.w()))
}

/// Real-valued root behind the optimal threshold, before flooring.
pub fn threshold_root(params: &BanditParams) -> Option<f64> {
    let lambda = params.lambda();
    let p = params.p();
    let w = params.w();
    let b = 2.5 - 1.0 / p - 1.0 / lambda;
    let fail = (1.0 - p) / p;
    let disc = b * b + 2.0 * (w / p - params.arm().idle_ratio() * fail) + 2.0 * fail;
    if disc < 0.0 {
        None
    } else {
        Some(b + libm::sqrt(disc))
    }
}

/// Optimal activation threshold for charge `W`, clamped to at least 1.
///
/// The closed-form root is floored, then nudged by direct comparison of
/// `F` with its neighbours to absorb rounding error. When the root is an
/// integer `k`, `F(k-1) = F(k)` and the floor picks `k`, so ties between
/// neighbours resolve to the larger threshold.
pub fn tau_opt(params: &BanditParams) -> u64 {
    let arm = params.arm();
    let w = params.w();
    let mut tau = match threshold_root(params) {
        Some(r) if r >= 1.0 => libm::floor(r) as u64,
        _ => 1,
    };
    let better = |a: f64, b: f64| a < b - 1e-12 * (1.0 + libm::fabs(b));
    while !better(cost_unchecked(arm, tau, w), cost_unchecked(arm, tau + 1, w)) {
        tau += 1;
    }
    while tau > 1 && better(cost_unchecked(arm, tau - 1, w), cost_unchecked(arm, tau, w)) {
        tau -= 1;
    }
    tau
}

/// Whittle index `I(s)` of an arm at age `s >= 1`.
///
/// Evaluates `p (F(s+1,0) - F(s,0)) / (ξ_1(s) - ξ_1(s+1))` after clearing
/// the common denominator, which leaves the cancellation-free form
/// `p [(s + 1/p)(c + s) - N(s)]` with `c = (1-λ)/λ + 1/p - 1` and
/// `N(s) = s(s-1)/2 + (1/p)(1/p - 1) + s/p`.
pub fn whittle_index(s: u64, arm: UserParams) -> Result<f64> {
    if s == 0 {
        return Err(Error::InvalidAge(s));
    }
    Ok(whittle_unchecked(s, arm))
}

#[inline]
pub(crate) fn whittle_unchecked(s: u64, arm: UserParams) -> f64 {
    let p = arm.p();
    let inv_p = 1.0 / p;
    let s = s as f64;
    let c = base_length(arm);
    let numer_f = s * (s - 1.0) / 2.0 + inv_p * (inv_p - 1.0) + s * inv_p;
    p * ((s + inv_p) * (c + s) - numer_f)
}

/// Long-run activation frequency `φ(τ) = ξ_1(τ) / p`.
pub fn activation_probability(tau: u64, arm: UserParams) -> Result<f64> {
    check_tau(tau)?;
    Ok(xi1(arm, tau) / arm.p())
}

/// Result of the relative value iteration on the truncated arm.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    /// Smallest age at which activation is strictly better than idling.
    pub threshold: u64,
    /// Optimal average cost.
    pub avg_cost: f64,
    /// Relative values `V(s) - V(0)` for `s = 0..=truncation`.
    pub relative_values: Vec<f64>,
    /// Whether every age from `threshold` up to the cap is active.
    pub is_threshold_policy: bool,
    pub iterations: usize,
}

/// Settings of the dynamic-programming oracle.
#[derive(Debug, Clone, Copy)]
pub struct OracleOptions {
    /// Largest age represented; `None` picks one from the closed-form threshold.
    pub truncation: Option<u64>,
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for OracleOptions {
    fn default() -> Self {
        Self {
            truncation: None,
            tolerance: 1e-11,
            max_iterations: 2_000_000,
        }
    }
}

/// Default truncation: ten times the threshold estimate, and far enough
/// past it that the geometric tail has decayed below `1e-14`.
pub fn default_truncation(params: &BanditParams) -> u64 {
    let tau = tau_opt(params);
    let q = 1.0 - params.p();
    let tail = if q <= 0.0 {
        2
    } else {
        libm::ceil(libm::log(1e-14) / libm::log(q)) as u64 + 2
    };
    (10 * tau).max(tau + tail).max(8)
}

/// Solves the average-cost Bellman equation of the truncated arm by relative
/// value iteration, independently of the closed forms above.
///
/// Ages are capped at the truncation level: an idle arm at the cap stays
/// there, an active one stays on failure. A lazy self-loop of weight 1/2 is
/// mixed into every transition so the iteration converges on periodic
/// chains; it leaves the optimal policy and gain unchanged.
pub fn bandit_dp_oracle(params: &BanditParams, options: OracleOptions) -> Result<OracleSolution> {
    let cap = options.truncation.unwrap_or_else(|| default_truncation(params));
    if cap < 2 {
        return Err(Error::InvalidParameter {
            name: "truncation",
            reason: "must be at least 2",
        });
    }
    let lambda = params.lambda();
    let p = params.p();
    let w = params.w();
    let len = cap as usize + 1;
    const LAZY: f64 = 0.5;

    let mut h = vec![0.0; len];
    let mut next = vec![0.0; len];
    let mut iterations = 0;
    let mut gain;
    loop {
        iterations += 1;
        // Expected value after a successful delivery.
        let reset = lambda * h[1] + (1.0 - lambda) * h[0];
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for s in 0..len {
            let up = h[(s + 1).min(len - 1)];
            let q = if s == 0 {
                // both actions lead to the same place; activation only costs W
                reset
            } else {
                let idle = s as f64 + up;
                let active = s as f64 + w + p * reset + (1.0 - p) * up;
                idle.min(active)
            };
            let val = LAZY * q + (1.0 - LAZY) * h[s];
            let diff = val - h[s];
            lo = lo.min(diff);
            hi = hi.max(diff);
            next[s] = val;
        }
        let base = next[0];
        for (hs, ns) in h.iter_mut().zip(next.iter()) {
            *hs = ns - base;
        }
        gain = 0.5 * (lo + hi) / LAZY;
        if hi - lo <= options.tolerance * LAZY {
            break;
        }
        if iterations >= options.max_iterations {
            return Err(Error::NotConverged {
                solver: "bandit relative value iteration",
                iterations,
                residual: hi - lo,
            });
        }
    }

    let reset = lambda * h[1] + (1.0 - lambda) * h[0];
    let active_better = |s: usize| {
        let up = h[(s + 1).min(len - 1)];
        let idle = up;
        let active = w + p * reset + (1.0 - p) * up;
        active < idle - 1e-9 * (1.0 + libm::fabs(idle))
    };
    let threshold = (1..len).find(|&s| active_better(s)).ok_or(Error::NotConverged {
        solver: "bandit relative value iteration (no active state within truncation)",
        iterations,
        residual: 0.0,
    })?;
    let is_threshold_policy = (threshold..len).all(active_better);

    Ok(OracleSolution {
        threshold: threshold as u64,
        avg_cost: gain,
        relative_values: h,
        is_threshold_policy,
        iterations,
    })
}

/// Outcome of an indexability check over a grid of charges.
#[derive(Debug, Clone, PartialEq)]
pub struct IndexabilityReport {
    pub indexable: bool,
    /// `(W, τ_opt(W))` for every grid point.
    pub thresholds: Vec<(f64, u64)>,
    /// First grid position where the threshold decreased.
    pub first_violation: Option<usize>,
}

/// Certifies that the passive set grows with `W`, i.e. that `τ_opt` is
/// nondecreasing along an ascending grid of charges.
pub fn indexability_certify(arm: UserParams, w_grid: &[f64]) -> Result<IndexabilityReport> {
    if w_grid.windows(2).any(|win| win[1] < win[0]) {
        return Err(Error::InvalidParameter {
            name: "W grid",
            reason: "must be sorted ascending",
        });
    }
    let mut thresholds = Vec::with_capacity(w_grid.len());
    for &w in w_grid {
        let params = BanditParams::from_arm(arm, w)?;
        thresholds.push((w, tau_opt(&params)));
    }
    let first_violation = thresholds.windows(2).position(|win| win[1].1 < win[0].1).map(|i| i + 1);
    Ok(IndexabilityReport {
        indexable: first_violation.is_none(),
        thresholds,
        first_violation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn bp(l: f64, p: f64, w: f64) -> BanditParams {
        BanditParams::new(l, p, w).unwrap()
    }

    fn arm(l: f64, p: f64) -> UserParams {
        UserParams::new(l, p).unwrap()
    }

    #[test]
    fn steady_state_examples() {
        let a = steady_state(1, &bp(1.0, 1.0, 0.0)).unwrap();
        assert_eq!(a.xi0, 0.0);
        assert_eq!(a.xi1, 1.0);
        assert_eq!(a.prob(2), 0.0);

        let b = steady_state(2, &bp(0.5, 0.5, 0.0)).unwrap();
        assert!((b.xi1 - 0.25).abs() < 1e-15);
        assert!((b.total_mass() - 1.0).abs() < 1e-12);
        assert!((b.activation_prob - b.xi1 / 0.5).abs() < 1e-15);
        assert!(steady_state(0, &bp(0.5, 0.5, 0.0)).is_err());
    }

    #[test]
    fn cost_examples() {
        assert!((avg_cost_f(1, &bp(0.5, 0.5, 0.0)).unwrap() - 4.0 / 3.0).abs() < 1e-14);
        assert!((avg_cost_f(2, &bp(0.5, 0.5, 0.0)).unwrap() - 1.75).abs() < 1e-14);
        assert!((avg_cost_f(1, &bp(1.0, 1.0, 0.0)).unwrap() - 1.0).abs() < 1e-14);
        assert!(avg_cost_f(0, &bp(1.0, 1.0, 0.0)).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(tau_opt(&bp(1.0, 1.0, 0.0)), 1);
        assert_eq!(tau_opt(&bp(1.0, 1.0, 4.0)), 3);
        assert_eq!(tau_opt(&bp(0.5, 0.5, 2.5)), 2);
        // raw root is below 1 here and gets clamped
        assert_eq!(tau_opt(&bp(0.5, 0.5, 0.0)), 1);
    }

    #[test]
    fn index_examples() {
        let unit = arm(1.0, 1.0);
        assert!((whittle_index(1, unit).unwrap() - 1.0).abs() < 1e-12);
        assert!((whittle_index(2, unit).unwrap() - 3.0).abs() < 1e-12);
        let half = arm(0.5, 0.5);
        assert!((whittle_index(1, half).unwrap() - 2.5).abs() < 1e-12);
        assert!((whittle_index(2, half).unwrap() - 4.5).abs() < 1e-12);
        assert!(whittle_index(0, half).is_err());
    }

    #[test]
    fn index_jump_points_match_threshold() {
        // τ_opt moves from s to s+1 once W passes I(s)
        let half = arm(0.5, 0.5);
        assert_eq!(tau_opt(&bp(0.5, 0.5, 4.4)), 2);
        assert_eq!(tau_opt(&bp(0.5, 0.5, 4.6)), 3);
        let i2 = whittle_index(2, half).unwrap();
        assert!((i2 - 4.5).abs() < 1e-12);
    }

    #[test]
    fn oracle_simple_cases() {
        let sol = bandit_dp_oracle(&bp(1.0, 1.0, 0.0), OracleOptions::default()).unwrap();
        assert_eq!(sol.threshold, 1);
        assert!((sol.avg_cost - 1.0).abs() < 1e-8);

        let params = bp(0.5, 0.5, 2.5);
        let sol = bandit_dp_oracle(&params, OracleOptions::default()).unwrap();
        let f2 = avg_cost_f(2, &params).unwrap();
        let f3 = avg_cost_f(3, &params).unwrap();
        assert!((sol.avg_cost - f2.min(f3)).abs() < 1e-8);
        assert!(sol.relative_values.windows(2).all(|w| w[1] >= w[0] - 1e-9));
    }

    #[test]
    fn indexability_examples() {
        let grid: Vec<f64> = (0..=20).map(f64::from).collect();
        let rep = indexability_certify(arm(0.5, 0.5), &grid).unwrap();
        assert!(rep.indexable);

        let rep = indexability_certify(arm(1.0, 1.0), &[0.0, 4.0]).unwrap();
        assert_eq!(rep.thresholds, vec![(0.0, 1), (4.0, 3)]);
        assert!(rep.indexable);

        assert!(indexability_certify(arm(0.3, 0.3), &[2.0]).unwrap().indexable);
        assert!(indexability_certify(arm(0.3, 0.3), &[2.0, 1.0]).is_err());
    }
}
