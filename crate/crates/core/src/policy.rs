//! Scheduling policies.
//!
//! A policy looks at the ages at the start of a slot and names at most `M`
//! users to serve. Users whose AoS is zero are never chosen since serving
//! them cannot lower any age. All ties go to the lowest user index.

use alloc::boxed::Box;
use alloc::vec::Vec;
use core::cmp::Ordering;

use crate::bandit::whittle_unchecked;
use crate::dynamics::NetworkState;
use crate::error::{Error, Result};
use crate::params::UserParams;

/// A stationary, non-anticipating scheduler.
pub trait Scheduler: Send + Sync {
    /// Short name used in reports.
    fn name(&self) -> &str;

    /// Writes the chosen users into `out` (cleared first). An empty `out`
    /// means the slot is idle.
    fn decide(&self, state: &NetworkState, bandwidth: usize, out: &mut Vec<usize>);
}

impl<S: Scheduler + ?Sized> Scheduler for Box<S> {
    fn name(&self) -> &str {
        (**self).name()
    }

    fn decide(&self, state: &NetworkState, bandwidth: usize, out: &mut Vec<usize>) {
        (**self).decide(state, bandwidth, out)
    }
}

/// Keeps the `m` highest scores, ties broken toward the lower index.
/// `out` receives the chosen indices in descending score order.
pub fn select_top<I>(m: usize, candidates: I, out: &mut Vec<usize>)
where
    I: IntoIterator<Item = (usize, f64)>,
{
    out.clear();
    if m == 0 {
        return;
    }
    if m == 1 {
        let mut best: Option<(usize, f64)> = None;
        for (i, v) in candidates {
            match best {
                Some((_, bv)) if v <= bv => {}
                _ => best = Some((i, v)),
            }
        }
        if let Some((i, _)) = best {
            out.push(i);
        }
        return;
    }
    let mut all: Vec<(usize, f64)> = candidates.into_iter().collect();
    all.sort_by(|a, b| b.1.partial_cmp(&a.1).unwrap_or(Ordering::Equal).then(a.0.cmp(&b.0)));
    out.extend(all.into_iter().take(m).map(|(i, _)| i));
}

/// Serves the users with the largest AoS.
#[derive(Debug, Clone, Copy, Default)]
pub struct GreedyAos;

impl Scheduler for GreedyAos {
    fn name(&self) -> &str {
        "greedy"
    }

    fn decide(&self, state: &NetworkState, bandwidth: usize, out: &mut Vec<usize>) {
        let cands = state
            .aos()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0)
            .map(|(n, &s)| (n, s as f64));
        select_top(bandwidth, cands, out);
    }
}

/// Per-user table of Whittle indices `I_n(s)`.
///
/// Values up to `max_age` are precomputed and checked to be strictly
/// increasing; larger ages are evaluated from the closed form on demand, so
/// the table is read-only after construction.
#[derive(Debug, Clone)]
pub struct IndexTable {
    users: Vec<UserParams>,
    /// `values[n][s - 1] = I_n(s)`.
    values: Vec<Vec<f64>>,
}

impl IndexTable {
    pub fn build(users: &[UserParams], max_age: u64) -> Result<Self> {
        let max_age = max_age.max(1);
        let mut values = Vec::with_capacity(users.len());
        for u in users {
            let col: Vec<f64> = (1..=max_age).map(|s| whittle_unchecked(s, *u)).collect();
            if col.windows(2).any(|w| !(w[1] > w[0])) || col.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidParameter {
                    name: "index table",
                    reason: "Whittle index is not strictly increasing in age",
                });
            }
            values.push(col);
        }
        Ok(Self {
            users: users.to_vec(),
            values,
        })
    }

    pub fn num_users(&self) -> usize {
        self.users.len()
    }

    /// Largest age stored in the table.
    pub fn max_age(&self) -> u64 {
        self.values.first().map_or(0, |c| c.len() as u64)
    }

    /// `I_n(s)` for `s >= 1`.
    #[inline]
    pub fn get(&self, user: usize, s: u64) -> f64 {
        debug_assert!(s >= 1);
        match self.values[user].get(s as usize - 1) {
            Some(&v) => v,
            None => whittle_unchecked(s, self.users[user]),
        }
    }
}

/// Serves the users with the largest Whittle index of their current AoS.
#[derive(Debug, Clone)]
pub struct WhittleAos {
    table: IndexTable,
}

impl WhittleAos {
    pub fn new(table: IndexTable) -> Self {
        Self { table }
    }

    pub fn from_users(users: &[UserParams], max_age: u64) -> Result<Self> {
        Ok(Self::new(IndexTable::build(users, max_age)?))
    }

    pub fn table(&self) -> &IndexTable {
        &self.table
    }
}

impl Scheduler for WhittleAos {
    fn name(&self) -> &str {
        "whittle"
    }

    fn decide(&self, state: &NetworkState, bandwidth: usize, out: &mut Vec<usize>) {
        let cands = state
            .aos()
            .iter()
            .enumerate()
            .filter(|(_, &s)| s > 0)
            .map(|(n, &s)| (n, self.table.get(n, s)));
        select_top(bandwidth, cands, out);
    }
}

/// Index used by the AoI baseline: `(p h / 2)(h + (2 - p) / p)`.
#[inline]
pub fn aoi_index(h: u64, p: f64) -> f64 {
    let h = h as f64;
    p * h / 2.0 * (h + (2.0 - p) / p)
}

/// AoI-driven baseline: ranks users by the AoI index of their AoI among
/// those for whom the base station holds a packet fresher than the one
/// the receiver has.
#[derive(Debug, Clone)]
pub struct AoiIndexBaseline {
    p: Vec<f64>,
}

impl AoiIndexBaseline {
    pub fn new(users: &[UserParams]) -> Self {
        Self {
            p: users.iter().map(UserParams::p).collect(),
        }
    }
}

impl Scheduler for AoiIndexBaseline {
    fn name(&self) -> &str {
        "aoi"
    }

    fn decide(&self, state: &NetworkState, bandwidth: usize, out: &mut Vec<usize>) {
        let cands = state
            .aoi()
            .iter()
            .zip(state.bs_age())
            .enumerate()
            .filter_map(|(n, (&h, bs))| match bs {
                Some(b) if *b < h => Some((n, aoi_index(h, self.p[n]))),
                _ => None,
            });
        select_top(bandwidth, cands, out);
    }
}

/// Serves users whose AoS has reached their own threshold, oldest first.
#[derive(Debug, Clone)]
pub struct ThresholdPolicy {
    thresholds: Vec<u64>,
}

impl ThresholdPolicy {
    pub fn new(thresholds: Vec<u64>) -> Result<Self> {
        if let Some(&t) = thresholds.iter().find(|&&t| t == 0) {
            return Err(Error::InvalidThreshold(t));
        }
        Ok(Self { thresholds })
    }
}

impl Scheduler for ThresholdPolicy {
    fn name(&self) -> &str {
        "threshold"
    }

    fn decide(&self, state: &NetworkState, bandwidth: usize, out: &mut Vec<usize>) {
        let cands = state
            .aos()
            .iter()
            .zip(&self.thresholds)
            .enumerate()
            .filter(|(_, (&s, &t))| s >= t)
            .map(|(n, (&s, _))| (n, s as f64));
        select_top(bandwidth, cands, out);
    }
}

/// Never transmits.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdlePolicy;

impl Scheduler for IdlePolicy {
    fn name(&self) -> &str {
        "idle"
    }

    fn decide(&self, _state: &NetworkState, _bandwidth: usize, out: &mut Vec<usize>) {
        out.clear();
    }
}
