//! Slot-level age dynamics.
//!
//! Within slot `t` the scheduling decision is taken from the ages at the
//! start of the slot, source updates arrive during the slot and a scheduled
//! transmission either succeeds or fails by the end of it. The ages at the
//! start of slot `t + 1` follow from those three events.

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::UserParams;
use crate::rng::SlotRandomness;

/// Age of the newest packet held at the base station for one source.
/// `None` until the source has produced its first update.
pub type BsAge = Option<u64>;

/// Age of synchronization of one user after one slot.
///
/// `arrival` is whether the source updated during the slot, `scheduled`
/// whether the user was served and `success` whether that transmission got
/// through.
pub fn step_aos(s: u64, arrival: bool, scheduled: bool, success: bool) -> Result<u64> {
    if success && !scheduled {
        return Err(Error::DeliveryWithoutSchedule { user: 0 });
    }
    Ok(step_aos_unchecked(s, arrival, success))
}

#[inline]
pub(crate) fn step_aos_unchecked(s: u64, arrival: bool, delivered: bool) -> u64 {
    if s == 0 || delivered {
        u64::from(arrival)
    } else {
        s + 1
    }
}

/// Age of information of one user after one slot, together with the age of
/// the packet the base station holds for that source.
///
/// The receiver starts synchronized with `h = 0`; the age starts counting
/// once the source produces its first update. A delivery hands over the
/// packet held at the start of the slot, so the new age is that packet's
/// age one slot later.
pub fn step_aoi(h: u64, bs_age: BsAge, arrival: bool, scheduled: bool, success: bool) -> Result<(u64, BsAge)> {
    if success && !scheduled {
        return Err(Error::DeliveryWithoutSchedule { user: 0 });
    }
    Ok(step_aoi_unchecked(h, bs_age, arrival, success))
}

#[inline]
pub(crate) fn step_aoi_unchecked(h: u64, bs_age: BsAge, arrival: bool, delivered: bool) -> (u64, BsAge) {
    let next_bs = if arrival { Some(1) } else { bs_age.map(|b| b + 1) };
    let next_h = match bs_age {
        Some(b) if delivered => b + 1,
        _ if next_bs.is_some() || h > 0 => h + 1,
        _ => 0,
    };
    (next_h, next_bs)
}

/// Events of one slot.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SlotOutcome {
    pub arrivals: Vec<bool>,
    /// Users served in the slot; empty when idle.
    pub scheduled: Vec<usize>,
    pub delivered: Vec<bool>,
}

impl SlotOutcome {
    pub fn is_idle(&self) -> bool {
        self.scheduled.is_empty()
    }
}

/// Ages of every user at the start of a slot: AoS, AoI and the age of the
/// packet waiting at the base station.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NetworkState {
    aos: Vec<u64>,
    aoi: Vec<u64>,
    bs_age: Vec<BsAge>,
}

impl NetworkState {
    /// All users synchronized, nothing buffered at the base station.
    pub fn synchronized(users: usize) -> Self {
        Self {
            aos: vec![0; users],
            aoi: vec![0; users],
            bs_age: vec![None; users],
        }
    }

    /// Builds a state from explicit AoS values. A desynchronized user is
    /// taken to hold the content just before the pending packet, which has
    /// waited `s` slots at the base station.
    pub fn from_aos(aos: Vec<u64>) -> Self {
        let aoi = aos.iter().map(|&s| if s > 0 { s + 1 } else { 0 }).collect();
        let bs_age = aos.iter().map(|&s| if s > 0 { Some(s) } else { None }).collect();
        Self { aos, aoi, bs_age }
    }

    pub fn from_parts(aos: Vec<u64>, aoi: Vec<u64>, bs_age: Vec<BsAge>) -> Result<Self> {
        if aos.len() != aoi.len() || aos.len() != bs_age.len() {
            return Err(Error::InvalidParameter {
                name: "state",
                reason: "AoS, AoI and BS vectors differ in length",
            });
        }
        Ok(Self { aos, aoi, bs_age })
    }

    pub fn num_users(&self) -> usize {
        self.aos.len()
    }

    pub fn aos(&self) -> &[u64] {
        &self.aos
    }

    pub fn aoi(&self) -> &[u64] {
        &self.aoi
    }

    pub fn bs_age(&self) -> &[BsAge] {
        &self.bs_age
    }

    /// Advances every user by one slot. `channel[n]` is the channel draw for
    /// user `n`, used only if `n` is scheduled. The decision must already be
    /// validated.
    pub(crate) fn advance(&mut self, scheduled: &[usize], arrivals: &[bool], channel: &[bool], delivered: &mut [bool]) {
        delivered.iter_mut().for_each(|d| *d = false);
        for &n in scheduled {
            delivered[n] = channel[n];
        }
        for n in 0..self.aos.len() {
            let arrival = arrivals[n];
            let got = delivered[n];
            self.aos[n] = step_aos_unchecked(self.aos[n], arrival, got);
            let (h, b) = step_aoi_unchecked(self.aoi[n], self.bs_age[n], arrival, got);
            self.aoi[n] = h;
            self.bs_age[n] = b;
        }
    }

    /// Applies one slot with explicit arrival and channel realizations.
    pub fn apply_slot(
        &mut self,
        bandwidth: usize,
        scheduled: &[usize],
        arrivals: &[bool],
        channel: &[bool],
    ) -> Result<SlotOutcome> {
        let n = self.num_users();
        if arrivals.len() != n || channel.len() != n {
            return Err(Error::InvalidParameter {
                name: "slot realization",
                reason: "arrival and channel vectors must have one entry per user",
            });
        }
        validate_decision(scheduled, n, bandwidth)?;
        let mut delivered = vec![false; n];
        self.advance(scheduled, arrivals, channel, &mut delivered);
        Ok(SlotOutcome {
            arrivals: arrivals.to_vec(),
            scheduled: scheduled.to_vec(),
            delivered,
        })
    }

    /// Draws arrivals and channel outcomes from `rng` and applies one slot.
    pub fn run_slot(
        &mut self,
        users: &[UserParams],
        bandwidth: usize,
        scheduled: &[usize],
        rng: &mut SlotRandomness,
    ) -> Result<SlotOutcome> {
        let n = self.num_users();
        if users.len() != n {
            return Err(Error::InvalidParameter {
                name: "users",
                reason: "parameter count does not match state",
            });
        }
        let mut arrivals = vec![false; n];
        let mut channel = vec![false; n];
        rng.draw(users, &mut arrivals, &mut channel);
        self.apply_slot(bandwidth, scheduled, &arrivals, &channel)
    }
}

/// Checks that a decision names distinct, in-range users within bandwidth.
pub fn validate_decision(scheduled: &[usize], users: usize, bandwidth: usize) -> Result<()> {
    if scheduled.len() > bandwidth {
        return Err(Error::BandwidthExceeded {
            scheduled: scheduled.len(),
            bandwidth,
        });
    }
    for (i, &u) in scheduled.iter().enumerate() {
        if u >= users {
            return Err(Error::UserOutOfRange { user: u, users });
        }
        if scheduled[..i].contains(&u) {
            return Err(Error::InvalidParameter {
                name: "decision",
                reason: "user scheduled twice in one slot",
            });
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn aos_cases() {
        assert_eq!(step_aos(0, false, false, false), Ok(0));
        assert_eq!(step_aos(0, true, false, false), Ok(1));
        assert_eq!(step_aos(5, true, true, true), Ok(1));
        assert_eq!(step_aos(5, false, true, false), Ok(6));
        assert_eq!(step_aos(7, false, true, true), Ok(0));
        assert_eq!(step_aos(7, true, false, false), Ok(8));
        // serving a synchronized user changes nothing
        assert_eq!(step_aos(0, false, true, true), Ok(0));
    }

    #[test]
    fn success_requires_schedule() {
        assert!(step_aos(3, false, false, true).is_err());
        assert!(step_aoi(3, Some(1), false, false, true).is_err());
    }

    #[test]
    fn aoi_cases() {
        assert_eq!(step_aoi(0, None, false, false, false), Ok((0, None)));
        assert_eq!(step_aoi(4, Some(2), false, true, true), Ok((3, Some(3))));
        assert_eq!(step_aoi(4, Some(2), true, false, false), Ok((5, Some(1))));
        // first update starts the clock
        assert_eq!(step_aoi(0, None, true, false, false), Ok((1, Some(1))));
        // failed transmission
        assert_eq!(step_aoi(4, Some(2), false, true, false), Ok((5, Some(3))));
    }

    #[test]
    fn forced_slot_single_user() {
        let mut st = NetworkState::synchronized(1);
        let out = st.apply_slot(1, &[], &[true], &[true]).unwrap();
        assert_eq!(st.aos(), &[1]);
        assert_eq!(out.arrivals, vec![true]);
        assert!(out.is_idle());

        let mut st = NetworkState::from_aos(vec![5]);
        st.apply_slot(1, &[0], &[true], &[true]).unwrap();
        assert_eq!(st.aos(), &[1]);
    }

    #[test]
    fn forced_slot_two_users() {
        let mut st = NetworkState::from_aos(vec![3, 0]);
        let out = st.apply_slot(1, &[0], &[false, true], &[true, false]).unwrap();
        assert_eq!(st.aos(), &[0, 1]);
        assert_eq!(out.delivered, vec![true, false]);
    }

    #[test]
    fn decision_validation() {
        let mut st = NetworkState::synchronized(2);
        assert!(matches!(
            st.apply_slot(1, &[2], &[false; 2], &[false; 2]),
            Err(Error::UserOutOfRange { .. })
        ));
        assert!(matches!(
            st.apply_slot(1, &[0, 1], &[false; 2], &[false; 2]),
            Err(Error::BandwidthExceeded { .. })
        ));
        assert!(st.apply_slot(2, &[1, 1], &[false; 2], &[false; 2]).is_err());
    }
}
