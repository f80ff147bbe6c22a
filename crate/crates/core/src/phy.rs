//! Shared 20 MHz medium: RU layout, PPDU airtime and the collision rule.
//!
//! Losses happen only when two transmissions overlap in time on the same
//! resource. A full-band transmission conflicts with everything.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::Aid;
use crate::sim::SimTime;

/// RU size class. Only 26-tone RUs are supported.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ToneClass {
    #[serde(rename = "26-tone")]
    Tone26,
    #[serde(rename = "52-tone")]
    Tone52,
    #[serde(rename = "106-tone")]
    Tone106,
    #[serde(rename = "242-tone")]
    Tone242,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RuLayout {
    pub bandwidth_mhz: u32,
    pub tone_class: ToneClass,
    pub ru_count: usize,
}

impl RuLayout {
    pub fn new(bandwidth_mhz: u32, tone_class: ToneClass) -> Result<Self> {
        let ru_count = ru_count(bandwidth_mhz, tone_class)?;
        Ok(RuLayout { bandwidth_mhz, tone_class, ru_count })
    }
}

pub fn ru_count(bandwidth_mhz: u32, tone_class: ToneClass) -> Result<usize> {
    match (bandwidth_mhz, tone_class) {
        (20, ToneClass::Tone26) => Ok(9),
        _ => Err(Error::config(format!(
            "unsupported RU layout: {bandwidth_mhz} MHz with {tone_class:?}"
        ))),
    }
}

/// Whether a PPDU occupies one 26-tone RU or the whole 20 MHz channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PpduClass {
    FullBand,
    PerRu,
}

const SERVICE_BITS: u64 = 16;
const TAIL_BITS: u64 = 6;
const SUPPORTED_MCS: u8 = 8;

/// Data bits per OFDM symbol at MCS 8 (256-QAM, rate 3/4).
fn bits_per_symbol(class: PpduClass) -> u64 {
    const BITS_PER_TONE_X4: u64 = 8 * 3; // 8 bits * 3/4, scaled by 4
    let data_tones = match class {
        PpduClass::PerRu => 24,
        // 242-tone RU spanning the 20 MHz channel.
        PpduClass::FullBand => 234,
    };
    data_tones * BITS_PER_TONE_X4 / 4
}

/// Airtime constants. Everything here is overridable from the scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PhyConfig {
    pub mcs: u8,
    pub guard_interval_ns: u64,
    pub sifs_us: u64,
    pub slot_us: u64,
    pub txop_us: u64,
    /// Preamble of a trigger-based PPDU.
    pub tb_preamble_us: u64,
    /// Preamble of a full-band single-user PPDU.
    pub su_preamble_us: u64,
    pub trigger_frame_us: u64,
    /// Explicit BSR (QoS Null) on one RU.
    pub bsr_us: u64,
    pub multi_sta_ba_us: u64,
    pub ack_us: u64,
    pub mac_overhead_bytes: u64,
}

impl Default for PhyConfig {
    fn default() -> Self {
        PhyConfig {
            mcs: SUPPORTED_MCS,
            guard_interval_ns: 800,
            sifs_us: 16,
            slot_us: 9,
            txop_us: 2080,
            tb_preamble_us: 40,
            su_preamble_us: 20,
            trigger_frame_us: 100,
            bsr_us: 68,
            multi_sta_ba_us: 68,
            ack_us: 44,
            mac_overhead_bytes: 30,
        }
    }
}

impl PhyConfig {
    fn preamble(&self, class: PpduClass) -> u64 {
        match class {
            PpduClass::FullBand => self.su_preamble_us,
            PpduClass::PerRu => self.tb_preamble_us,
        }
    }

    /// Airtime of one PPDU, rounded up to the next microsecond.
    pub fn ppdu_duration(&self, payload_bits: u64, class: PpduClass) -> Result<u64> {
        ppdu_duration(payload_bits, class, self.mcs, self.guard_interval_ns, self.preamble(class))
    }

    /// Bits on air for `msdus` MSDUs of `payload_bytes` each.
    pub fn mpdu_bits(&self, payload_bytes: u64, msdus: u64) -> u64 {
        msdus * (payload_bytes + self.mac_overhead_bytes) * 8
    }

    /// Airtime of a trigger-based data PPDU carrying one MSDU. Fails if it
    /// does not fit the TXOP.
    pub fn tb_data_duration(&self, payload_bytes: u64) -> Result<u64> {
        let d = self.ppdu_duration(self.mpdu_bits(payload_bytes, 1), PpduClass::PerRu)?;
        if d > self.txop_us {
            return Err(Error::config(format!(
                "trigger-based data PPDU of {d} us exceeds the {} us TXOP",
                self.txop_us
            )));
        }
        Ok(d)
    }

    /// Largest number of MSDUs a full-band PPDU can aggregate within the TXOP.
    pub fn max_aggregate(&self, payload_bytes: u64) -> Result<u64> {
        let mut k = 0;
        while self.ppdu_duration(self.mpdu_bits(payload_bytes, k + 1), PpduClass::FullBand)?
            <= self.txop_us
        {
            k += 1;
        }
        if k == 0 {
            return Err(Error::config("a single MSDU does not fit the TXOP on the full band"));
        }
        Ok(k)
    }

    pub fn validate(&self) -> Result<()> {
        if self.mcs != SUPPORTED_MCS {
            return Err(Error::config(format!("MCS {} unsupported (only MCS 8)", self.mcs)));
        }
        if self.sifs_us == 0 || self.slot_us == 0 {
            return Err(Error::config("SIFS and slot must be positive"));
        }
        for (name, v) in [
            ("trigger_frame_us", self.trigger_frame_us),
            ("bsr_us", self.bsr_us),
            ("multi_sta_ba_us", self.multi_sta_ba_us),
            ("ack_us", self.ack_us),
        ] {
            if v == 0 {
                return Err(Error::config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

/// `preamble + ceil((16 + bits + 6) / bits_per_symbol) * (12.8 us + GI)`,
/// rounded up to whole microseconds.
pub fn ppdu_duration(
    payload_bits: u64,
    class: PpduClass,
    mcs: u8,
    guard_interval_ns: u64,
    preamble_us: u64,
) -> Result<u64> {
    if payload_bits == 0 {
        return Err(Error::Contract("ppdu_duration: payload must be non-empty".into()));
    }
    if mcs != SUPPORTED_MCS {
        return Err(Error::config(format!("MCS {mcs} unsupported (only MCS 8)")));
    }
    let symbols = (SERVICE_BITS + payload_bits + TAIL_BITS).div_ceil(bits_per_symbol(class));
    let symbol_ns = 12_800 + guard_interval_ns;
    let total_ns = symbols * symbol_ns + preamble_us * 1_000;
    Ok(total_ns.div_ceil(1_000))
}

/// Frequency resource a transmission occupies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Resource {
    FullBand,
    Ru(u8),
}

impl Resource {
    fn conflicts(self, other: Resource) -> bool {
        match (self, other) {
            (Resource::Ru(a), Resource::Ru(b)) => a == b,
            _ => true,
        }
    }
}

/// Who put a PPDU on the air.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Source {
    Ap,
    Sta(Aid),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pending,
    Delivered,
    Collided,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TxId(u64);

#[derive(Debug, Clone)]
pub struct TransmissionRecord {
    pub id: TxId,
    pub source: Source,
    pub resource: Resource,
    pub start: SimTime,
    pub end: SimTime,
    collided: bool,
}

/// Active transmissions on the shared channel. Intervals are half-open
/// `[start, end)`; propagation delay is zero.
#[derive(Debug, Default)]
pub struct Medium {
    next_id: u64,
    active: Vec<TransmissionRecord>,
}

impl Medium {
    pub fn new() -> Self {
        Self::default()
    }

    /// Puts a PPDU on the air. Any active transmission that overlaps it on a
    /// conflicting resource collides with it (both parties).
    pub fn transmit(
        &mut self,
        source: Source,
        resource: Resource,
        start: SimTime,
        duration_us: u64,
    ) -> Result<TxId> {
        if duration_us == 0 {
            return Err(Error::Contract("transmission with zero duration".into()));
        }
        let end = start + duration_us;
        let id = TxId(self.next_id);
        self.next_id += 1;
        let mut collided = false;
        for other in &mut self.active {
            let overlaps = other.start < end && start < other.end;
            if overlaps && other.resource.conflicts(resource) {
                other.collided = true;
                collided = true;
            }
        }
        self.active.push(TransmissionRecord { id, source, resource, start, end, collided });
        Ok(id)
    }

    /// Current outcome of an active record (`Pending` while it can still be
    /// hit by a later overlapping start).
    pub fn outcome(&self, id: TxId, now: SimTime) -> Outcome {
        match self.active.iter().find(|r| r.id == id) {
            Some(r) if r.collided => Outcome::Collided,
            Some(r) if now >= r.end => Outcome::Delivered,
            Some(_) => Outcome::Pending,
            None => Outcome::Pending,
        }
    }

    /// Resolves a record at (or after) its end and forgets it.
    pub fn resolve(&mut self, id: TxId, now: SimTime) -> Result<Outcome> {
        let pos = self
            .active
            .iter()
            .position(|r| r.id == id)
            .ok_or_else(|| Error::Contract(format!("resolve of unknown transmission {id:?}")))?;
        let rec = &self.active[pos];
        if now < rec.end {
            return Err(Error::Contract(format!(
                "transmission {id:?} resolved at {now} before its end {}",
                rec.end
            )));
        }
        let outcome = if rec.collided { Outcome::Collided } else { Outcome::Delivered };
        self.active.swap_remove(pos);
        Ok(outcome)
    }

    pub fn medium_busy(&self, at: SimTime) -> bool {
        self.active.iter().any(|r| r.start <= at && at < r.end)
    }

    pub fn active_count(&self) -> usize {
        self.active.len()
    }
}
