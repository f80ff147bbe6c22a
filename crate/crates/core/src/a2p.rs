//! Adaptive polling (A2P): the AP polls only STAs it has recently heard
//! uplink data from.
//!
//! Each uplink reception (re)arms a per-STA expiry `x` TU in the future. The
//! AP contends for the channel only while the list is non-empty, and polls at
//! most one RU per listed STA, visiting the list round-robin.

use std::collections::BTreeMap;
use std::ops::Bound;

use crate::ids::Aid;
use crate::sim::{SimTime, TU_US};

#[derive(Debug, Clone, Default)]
pub struct PollingList {
    expiry: BTreeMap<Aid, SimTime>,
    /// Last AID polled; the next round starts after it.
    last_polled: Option<Aid>,
}

impl PollingList {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn on_uplink_received(&mut self, aid: Aid, at: SimTime, x_tu: u64) {
        self.expiry.insert(aid, at + x_tu * TU_US);
    }

    pub fn contains(&self, aid: Aid) -> bool {
        self.expiry.contains_key(&aid)
    }

    pub fn expiry_of(&self, aid: Aid) -> Option<SimTime> {
        self.expiry.get(&aid).copied()
    }

    pub fn len(&self) -> usize {
        self.expiry.len()
    }

    pub fn is_empty(&self) -> bool {
        self.expiry.is_empty()
    }

    /// Removes entries whose expiry is at or before `at`.
    pub fn prune(&mut self, at: SimTime) {
        self.expiry.retain(|_, &mut e| e > at);
    }

    /// Prunes, then returns up to `k` listed AIDs continuing round-robin from
    /// the previous call.
    pub fn select_and_prune(&mut self, at: SimTime, k: usize) -> Vec<Aid> {
        self.prune(at);
        let start = match self.last_polled {
            Some(a) => Bound::Excluded(a),
            None => Bound::Unbounded,
        };
        let out: Vec<Aid> = self
            .expiry
            .range((start, Bound::Unbounded))
            .chain(self.expiry.range(..))
            .map(|(&a, _)| a)
            .take(k.min(self.expiry.len()))
            .collect();
        if let Some(&last) = out.last() {
            self.last_polled = Some(last);
        }
        out
    }

    pub fn listed(&self) -> impl Iterator<Item = Aid> + '_ {
        self.expiry.keys().copied()
    }
}
