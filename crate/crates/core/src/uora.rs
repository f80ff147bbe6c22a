//! Per-STA UL OFDMA random access (UORA) back-off.
//!
//! On every trigger frame advertising random-access RUs, a STA with a
//! buffer status to report compares its OFDMA back-off (OBO) against the
//! number of RA RUs. If the counter fits, it zeroes it and transmits on one
//! of the RA RUs chosen uniformly at random; otherwise the counter drops by
//! the RA RU count. Failed attempts double the contention window (OCW) up to
//! its maximum; a success resets it.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct OcwRange {
    pub eocw_min: u32,
    pub eocw_max: u32,
}

impl OcwRange {
    pub fn from_exponents(eocw_min: u32, eocw_max: u32) -> Result<Self> {
        if eocw_min > eocw_max || eocw_max > 16 {
            return Err(Error::config(format!(
                "invalid EOCW range [{eocw_min}, {eocw_max}]"
            )));
        }
        Ok(OcwRange { eocw_min, eocw_max })
    }

    /// Builds the range from window bounds, which must both be `2^k - 1`.
    pub fn from_bounds(ocw_min: u32, ocw_max: u32) -> Result<Self> {
        let exponent = |w: u32| -> Result<u32> {
            let k = (w + 1).trailing_zeros();
            if w.checked_add(1).is_some_and(|v| v.is_power_of_two()) {
                Ok(k)
            } else {
                Err(Error::config(format!("OCW bound {w} is not of the form 2^k - 1")))
            }
        };
        Self::from_exponents(exponent(ocw_min)?, exponent(ocw_max)?)
    }

    pub fn ocw_min(&self) -> u32 {
        (1 << self.eocw_min) - 1
    }

    pub fn ocw_max(&self) -> u32 {
        (1 << self.eocw_max) - 1
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UoraDecision {
    Defer,
    /// Transmit on the RU with this index.
    TransmitOn(u8),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RaResult {
    Success,
    Failure,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UoraState {
    range: OcwRange,
    ocw: u32,
    obo: u32,
    pending_report: bool,
}

impl UoraState {
    /// `OCW := OCW_min`, `OBO := U[0, OCW]`.
    pub fn init(range: OcwRange, rng: &mut RngStream) -> Result<Self> {
        let ocw = range.ocw_min();
        let obo = rng.uniform_int(0, ocw)?;
        Ok(UoraState { range, ocw, obo, pending_report: false })
    }

    /// State with an explicit counter, for replaying recorded traces.
    pub fn with_obo(range: OcwRange, ocw: u32, obo: u32) -> Self {
        UoraState { range, ocw, obo, pending_report: true }
    }

    pub fn range(&self) -> OcwRange {
        self.range
    }

    pub fn ocw(&self) -> u32 {
        self.ocw
    }

    pub fn obo(&self) -> u32 {
        self.obo
    }

    pub fn pending_report(&self) -> bool {
        self.pending_report
    }

    pub fn set_pending_report(&mut self, pending: bool) {
        self.pending_report = pending;
    }

    /// Reacts to a trigger frame whose RA RUs are `ra_rus` (RU indices).
    /// The caller must not invoke this for a STA that was given an SA RU in
    /// the same frame.
    pub fn on_trigger(&mut self, ra_rus: &[u8], rng: &mut RngStream) -> Result<UoraDecision> {
        if ra_rus.is_empty() {
            return Err(Error::Contract("UORA countdown on a TF without RA RUs".into()));
        }
        if !self.pending_report {
            return Err(Error::Contract("UORA countdown without a pending report".into()));
        }
        let n = ra_rus.len() as u32;
        if self.obo <= n {
            self.obo = 0;
            let pick = rng.uniform_int(0, n - 1)? as usize;
            Ok(UoraDecision::TransmitOn(ra_rus[pick]))
        } else {
            self.obo -= n;
            Ok(UoraDecision::Defer)
        }
    }

    /// Applies the Multi-STA BA verdict for an RA transmission and draws the
    /// next back-off.
    pub fn on_tx_result(&mut self, result: RaResult, rng: &mut RngStream) -> Result<()> {
        match result {
            RaResult::Success => {
                self.ocw = self.range.ocw_min();
                self.pending_report = false;
            }
            RaResult::Failure => {
                self.ocw = (2 * self.ocw + 1).min(self.range.ocw_max());
            }
        }
        self.obo = rng.uniform_int(0, self.ocw)?;
        Ok(())
    }
}
