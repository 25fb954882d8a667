//! Network-wide AoS lower bound.
//!
//! Relaxing the per-slot bandwidth constraint to a time-average one turns
//! the scheduling problem into a convex program over the per-user delivery
//! rates `γ_n`:
//!
//! ```text
//! minimize   (1/N) Σ γ_n [ ½(1/γ_n − c_n)² + ½(1/γ_n − c_n) ],  c_n = (1 − λ_n)/λ_n
//! subject to Σ γ_n / p_n ≤ 1,   0 < γ_n ≤ λ_n
//! ```
//!
//! Stationarity gives `γ_n(μ)` in closed form for a multiplier `μ` on the
//! rate constraint; `μ` is then found by bisection.

use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::UserParams;

/// Tolerance on `Σ γ_n / p_n = 1` when the rate constraint binds.
pub const RATE_TOLERANCE: f64 = 1e-9;
const MAX_DOUBLINGS: u32 = 200;
const MAX_BISECTIONS: u32 = 2000;

#[derive(Debug, Clone, PartialEq)]
pub struct BoundSolution {
    /// Optimal delivery rates.
    pub gamma: Vec<f64>,
    /// Multiplier of the rate constraint.
    pub mu: f64,
    /// Multipliers of the caps `γ_n ≤ λ_n`; zero where the cap is slack.
    pub nu: Vec<f64>,
    pub aos_lb: f64,
    /// Whether the rate constraint is active.
    pub binding: bool,
    /// Rates obtained by clamping the stationary root from below,
    /// `max{root, λ_n}`, at the same `μ`. Present only when they differ
    /// from `gamma`.
    pub max_variant: Option<Vec<f64>>,
}

impl BoundSolution {
    /// `Σ γ_n / p_n`.
    pub fn rate_usage(&self, users: &[UserParams]) -> f64 {
        rate_usage(&self.gamma, users)
    }
}

#[inline]
fn idle_ratio(u: &UserParams) -> f64 {
    (1.0 - u.lambda()) / u.lambda()
}

/// Unconstrained stationary root `1/√(c² − c + 2μN/p)`, or `None` when the
/// radicand is not positive.
fn stationary_root(mu: f64, n_users: usize, u: &UserParams) -> Option<f64> {
    let c = idle_ratio(u);
    let disc = c * c - c + 2.0 * mu * n_users as f64 / u.p();
    (disc > 0.0).then(|| 1.0 / libm::sqrt(disc))
}

/// `γ_n(μ)`, the stationary root clamped to `λ_n`.
pub fn gamma_of_mu(mu: f64, users: &[UserParams]) -> Result<Vec<f64>> {
    if !(mu >= 0.0) || !mu.is_finite() {
        return Err(Error::InvalidParameter {
            name: "mu",
            reason: "must be a finite nonnegative number",
        });
    }
    Ok(gamma_unchecked(mu, users))
}

fn gamma_unchecked(mu: f64, users: &[UserParams]) -> Vec<f64> {
    let n = users.len();
    users
        .iter()
        .map(|u| stationary_root(mu, n, u).map_or(u.lambda(), |r| r.min(u.lambda())))
        .collect()
}

pub fn rate_usage(gamma: &[f64], users: &[UserParams]) -> f64 {
    gamma.iter().zip(users).map(|(g, u)| g / u.p()).sum()
}

/// Per-user term of the objective.
fn user_cost(gamma: f64, u: &UserParams) -> f64 {
    let d = 1.0 / gamma - idle_ratio(u);
    gamma * (0.5 * d * d + 0.5 * d)
}

/// Objective of the relaxed program at `gamma`.
pub fn bound_objective(gamma: &[f64], users: &[UserParams]) -> f64 {
    let total: f64 = gamma.iter().zip(users).map(|(&g, u)| user_cost(g, u)).sum();
    total / users.len() as f64
}

/// `∂/∂γ_n` of the objective.
fn user_cost_slope(gamma: f64, n_users: usize, u: &UserParams) -> f64 {
    let c = idle_ratio(u);
    (-0.5 / (gamma * gamma) + 0.5 * (c * c - c)) / n_users as f64
}

/// Largest Lagrangian-gradient magnitude over the coordinates where the
/// cap `γ_n ≤ λ_n` is slack.
pub fn kkt_residual(sol: &BoundSolution, users: &[UserParams]) -> f64 {
    let n = users.len();
    sol.gamma
        .iter()
        .zip(users)
        .filter(|(&g, u)| g < u.lambda())
        .map(|(&g, u)| libm::fabs(user_cost_slope(g, n, u) + sol.mu / u.p()))
        .fold(0.0, f64::max)
}

/// Solves the relaxed program.
pub fn solve_bound(users: &[UserParams]) -> Result<BoundSolution> {
    if users.is_empty() {
        return Err(Error::InvalidParameter {
            name: "users",
            reason: "at least one user is required",
        });
    }
    let excess = |mu: f64| rate_usage(&gamma_unchecked(mu, users), users) - 1.0;

    let (mu, binding) = if excess(0.0) <= 0.0 {
        (0.0, false)
    } else {
        let mut hi = 1.0;
        let mut doublings = 0;
        while excess(hi) > 0.0 {
            hi *= 2.0;
            doublings += 1;
            if doublings > MAX_DOUBLINGS {
                return Err(Error::BracketFailure { upper: hi });
            }
        }
        let mut lo = 0.0;
        let mut it = 0;
        let mu = loop {
            let mid = 0.5 * (lo + hi);
            let e = excess(mid);
            // aim well inside the tolerance; accept it once the bracket collapses
            if libm::fabs(e) <= 1e-3 * RATE_TOLERANCE {
                break mid;
            }
            if e > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
            it += 1;
            let collapsed = hi - lo <= f64::EPSILON * hi;
            if collapsed && libm::fabs(e) <= RATE_TOLERANCE {
                break mid;
            }
            if it >= MAX_BISECTIONS || collapsed {
                return Err(Error::NotConverged {
                    solver: "bound bisection",
                    iterations: it as usize,
                    residual: e,
                });
            }
        };
        (mu, true)
    };

    let n = users.len();
    let gamma = gamma_unchecked(mu, users);
    let nu = gamma
        .iter()
        .zip(users)
        .map(|(&g, u)| {
            if g < u.lambda() {
                0.0
            } else {
                (-user_cost_slope(g, n, u) - mu / u.p()).max(0.0)
            }
        })
        .collect();
    let max_variant: Vec<f64> = users
        .iter()
        .map(|u| stationary_root(mu, n, u).map_or(u.lambda(), |r| r.max(u.lambda())))
        .collect();
    let max_variant = (max_variant != gamma).then_some(max_variant);
    let aos_lb = bound_objective(&gamma, users);
    Ok(BoundSolution {
        gamma,
        mu,
        nu,
        aos_lb,
        binding,
        max_variant,
    })
}
