//! EDCA contention for the VO access category, with the MU EDCA override.
//!
//! [`EdcaContender`] holds one device's parameters, contention window and
//! back-off counter. [`EdcaArbiter`] resolves who of the currently contending
//! devices reaches the end of its back-off first, treating the medium in an
//! event-driven way: counters only advance over idle periods, one slot at a
//! time after AIFS, and freeze while the medium is busy.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::phy::Outcome;
use crate::sim::{RngStream, SimTime};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdcaParams {
    /// 0 means EDCA is disabled.
    pub aifsn: u32,
    pub cw_min: u32,
    pub cw_max: u32,
}

impl EdcaParams {
    /// 802.11 defaults for AC_VO.
    pub const VO: EdcaParams = EdcaParams { aifsn: 2, cw_min: 3, cw_max: 7 };

    /// MU EDCA set that switches contention off entirely.
    pub const DISABLED: EdcaParams = EdcaParams { aifsn: 0, cw_min: 3, cw_max: 7 };

    pub fn new(aifsn: u32, cw_min: u32, cw_max: u32) -> Result<Self> {
        let p = EdcaParams { aifsn, cw_min, cw_max };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cw_min > self.cw_max {
            return Err(Error::config(format!(
                "EDCA cw_min {} exceeds cw_max {}",
                self.cw_min, self.cw_max
            )));
        }
        Ok(())
    }

    pub fn is_disabled(&self) -> bool {
        self.aifsn == 0
    }

    pub fn aifs_us(&self, sifs_us: u64, slot_us: u64) -> u64 {
        sifs_us + u64::from(self.aifsn) * slot_us
    }
}

impl Default for EdcaParams {
    fn default() -> Self {
        EdcaParams::VO
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MuEdcaState {
    pub override_params: EdcaParams,
    pub timer_expiry: SimTime,
    pub timer_duration_us: u64,
}

#[derive(Debug, Clone)]
pub struct EdcaContender {
    defaults: EdcaParams,
    mu: Option<MuEdcaState>,
    cw_current: u32,
    backoff_slots_remaining: Option<u32>,
    retry_count: u32,
}

impl EdcaContender {
    pub fn new(defaults: EdcaParams) -> Self {
        EdcaContender {
            defaults,
            mu: None,
            cw_current: defaults.cw_min,
            backoff_slots_remaining: None,
            retry_count: 0,
        }
    }

    pub fn defaults(&self) -> EdcaParams {
        self.defaults
    }

    pub fn params_in_effect(&self, now: SimTime) -> EdcaParams {
        match self.mu {
            Some(mu) if now < mu.timer_expiry => mu.override_params,
            _ => self.defaults,
        }
    }

    pub fn mu_state(&self) -> Option<MuEdcaState> {
        self.mu
    }

    /// True while an AIFSN 0 override is in force.
    pub fn is_disabled(&self, now: SimTime) -> bool {
        self.params_in_effect(now).is_disabled()
    }

    pub fn cw_current(&self) -> u32 {
        self.cw_current
    }

    pub fn retry_count(&self) -> u32 {
        self.retry_count
    }

    pub fn backoff(&self) -> Option<u32> {
        self.backoff_slots_remaining
    }

    /// Draws a back-off if none is held and returns the slot count the device
    /// must count down after AIFS.
    pub fn begin_contention(&mut self, now: SimTime, rng: &mut RngStream) -> Result<u32> {
        let params = self.params_in_effect(now);
        if params.is_disabled() {
            return Err(Error::Contract("EDCA contention attempted while AIFSN is 0".into()));
        }
        self.cw_current = self.cw_current.clamp(params.cw_min, params.cw_max);
        match self.backoff_slots_remaining {
            Some(b) => Ok(b),
            None => {
                let b = rng.uniform_int(0, self.cw_current)?;
                self.backoff_slots_remaining = Some(b);
                Ok(b)
            }
        }
    }

    /// Discards the current counter, e.g. after winning access with nothing
    /// left to send.
    pub fn clear_backoff(&mut self) {
        self.backoff_slots_remaining = None;
    }

    /// Stores the counter left after an interrupted countdown.
    pub fn freeze(&mut self, remaining: u32) {
        self.backoff_slots_remaining = Some(remaining);
    }

    pub fn on_tx_outcome(&mut self, outcome: Outcome, now: SimTime, rng: &mut RngStream) -> Result<()> {
        let params = self.params_in_effect(now);
        match outcome {
            Outcome::Delivered => {
                self.cw_current = params.cw_min;
                self.retry_count = 0;
                self.backoff_slots_remaining = None;
            }
            Outcome::Collided => {
                self.cw_current = (2 * self.cw_current + 1).min(params.cw_max).max(params.cw_min);
                self.retry_count += 1;
                self.backoff_slots_remaining = Some(rng.uniform_int(0, self.cw_current)?);
            }
            Outcome::Pending => {
                return Err(Error::Contract("EDCA outcome reported while still pending".into()))
            }
        }
        Ok(())
    }

    /// Installs `params` until `at + duration_us`. A zero duration is a no-op.
    pub fn apply_mu_edca(&mut self, params: EdcaParams, duration_us: u64, at: SimTime) {
        if duration_us == 0 {
            return;
        }
        self.mu = Some(MuEdcaState {
            override_params: params,
            timer_expiry: at + duration_us,
            timer_duration_us: duration_us,
        });
    }

    /// Restarts the MU EDCA timer after a Block Ack for OFDMA data.
    pub fn refresh_mu_edca_timer(&mut self, at: SimTime) {
        if let Some(mu) = self.mu.as_mut() {
            mu.timer_expiry = at + mu.timer_duration_us;
        }
    }

    /// Drops an expired override and restores the default contention state.
    /// Returns true if a revert happened.
    pub fn revert_if_expired(&mut self, now: SimTime) -> bool {
        match self.mu {
            Some(mu) if now >= mu.timer_expiry => {
                self.mu = None;
                self.cw_current = self.defaults.cw_min;
                self.backoff_slots_remaining = None;
                true
            }
            _ => false,
        }
    }
}

#[derive(Debug, Clone)]
struct Entry<K> {
    key: K,
    aifs_us: u64,
    backoff: u32,
    joined_at: SimTime,
}

/// Event-driven view of the contention among all devices currently
/// holding a frame for EDCA access.
#[derive(Debug, Clone)]
pub struct EdcaArbiter<K> {
    slot_us: u64,
    idle_since: Option<SimTime>,
    entries: Vec<Entry<K>>,
}

impl<K: Copy + PartialEq + std::fmt::Debug> EdcaArbiter<K> {
    pub fn new(slot_us: u64, now: SimTime) -> Self {
        EdcaArbiter { slot_us, idle_since: Some(now), entries: Vec::new() }
    }

    pub fn is_contending(&self, key: K) -> bool {
        self.entries.iter().any(|e| e.key == key)
    }

    pub fn contenders(&self) -> usize {
        self.entries.len()
    }

    pub fn is_idle(&self) -> bool {
        self.idle_since.is_some()
    }

    pub fn join(&mut self, key: K, aifs_us: u64, backoff: u32, now: SimTime) -> Result<()> {
        if self.is_contending(key) {
            return Err(Error::Contract(format!("{key:?} joined EDCA contention twice")));
        }
        self.entries.push(Entry { key, aifs_us, backoff, joined_at: now });
        Ok(())
    }

    /// Withdraws a device, returning its remaining back-off.
    pub fn leave(&mut self, key: K, now: SimTime) -> Option<u32> {
        let pos = self.entries.iter().position(|e| e.key == key)?;
        let e = self.entries.remove(pos);
        Some(e.backoff.saturating_sub(self.elapsed_slots(&e, now)))
    }

    /// Slot boundary at which `e` starts counting down. Devices joining an
    /// already idle medium wait for the next boundary of the shared slot grid.
    fn countdown_start(&self, e: &Entry<K>) -> Option<SimTime> {
        self.idle_since.map(|t0| {
            let start = t0 + e.aifs_us;
            if e.joined_at <= start {
                start
            } else {
                start + (e.joined_at - start).div_ceil(self.slot_us) * self.slot_us
            }
        })
    }

    fn elapsed_slots(&self, e: &Entry<K>, now: SimTime) -> u32 {
        match self.countdown_start(e) {
            Some(start) if now > start => ((now - start) / self.slot_us).min(u64::from(u32::MAX)) as u32,
            _ => 0,
        }
    }

    /// The medium turned busy at `now`: freeze all counters.
    pub fn medium_busy(&mut self, now: SimTime) {
        if self.idle_since.is_none() {
            return;
        }
        let slots: Vec<u32> = self.entries.iter().map(|e| self.elapsed_slots(e, now)).collect();
        for (e, used) in self.entries.iter_mut().zip(slots) {
            e.backoff = e.backoff.saturating_sub(used);
        }
        self.idle_since = None;
    }

    pub fn medium_idle(&mut self, now: SimTime) {
        if self.idle_since.is_none() {
            self.idle_since = Some(now);
        }
    }

    /// Earliest instant at which some contender finishes its back-off, if the
    /// medium stays idle.
    pub fn next_access(&self) -> Option<SimTime> {
        self.entries
            .iter()
            .filter_map(|e| self.countdown_start(e).map(|s| s + u64::from(e.backoff) * self.slot_us))
            .min()
    }

    /// Removes and returns every contender whose back-off ends exactly at `now`.
    /// More than one winner means their transmissions collide.
    pub fn take_winners(&mut self, now: SimTime) -> Vec<K> {
        let mut winners = Vec::new();
        let mut i = 0;
        while i < self.entries.len() {
            let e = &self.entries[i];
            let due = self.countdown_start(e).map(|s| s + u64::from(e.backoff) * self.slot_us);
            if due == Some(now) {
                winners.push(self.entries.remove(i).key);
            } else {
                i += 1;
            }
        }
        winners
    }
}
