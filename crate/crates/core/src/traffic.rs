//! Uplink traffic: constant-bit-rate flows for the deterministic STAs and
//! exponential inter-arrivals for the stochastic ones.

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{Aid, PacketId};
use crate::sim::{RngStream, SimTime};

pub const PAYLOAD_BYTES: u64 = 1700;
pub const CBR_INTERVAL_US: u64 = 2080;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Packet {
    pub id: PacketId,
    pub source_aid: Aid,
    pub generated_at: SimTime,
    pub size_bytes: u64,
    pub delivered_at: Option<SimTime>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FlowKind {
    Deterministic { interval_us: u64 },
    Stochastic { mean_s: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub kind: FlowKind,
    pub payload_bytes: u64,
}

impl FlowConfig {
    pub fn cbr() -> Self {
        FlowConfig { kind: FlowKind::Deterministic { interval_us: CBR_INTERVAL_US }, payload_bytes: PAYLOAD_BYTES }
    }

    pub fn poisson(mean_s: f64) -> Self {
        FlowConfig { kind: FlowKind::Stochastic { mean_s }, payload_bytes: PAYLOAD_BYTES }
    }

    pub fn is_stochastic(&self) -> bool {
        matches!(self.kind, FlowKind::Stochastic { .. })
    }

    /// Offered load in bit/s.
    pub fn offered_bps(&self) -> f64 {
        let interval_s = match self.kind {
            FlowKind::Deterministic { interval_us } => interval_us as f64 * 1e-6,
            FlowKind::Stochastic { mean_s } => mean_s,
        };
        (self.payload_bytes * 8) as f64 / interval_s
    }

    pub fn validate(&self) -> Result<()> {
        match self.kind {
            FlowKind::Deterministic { interval_us: 0 } => Err(Error::config("CBR interval must be positive")),
            FlowKind::Stochastic { mean_s } if !(mean_s.is_finite() && mean_s > 0.0) => {
                Err(Error::config(format!("exponential mean {mean_s} s must be positive")))
            }
            _ if self.payload_bytes == 0 => Err(Error::config("payload must be non-empty")),
            _ => Ok(()),
        }
    }
}

/// Arrival process of one flow, yielding successive generation instants.
#[derive(Debug, Clone)]
pub struct TrafficSource {
    flow: FlowConfig,
    next: SimTime,
    rng: RngStream,
}

impl TrafficSource {
    /// CBR arrivals start at `phase_us`; exponential ones after a first draw.
    pub fn new(flow: FlowConfig, phase_us: u64, mut rng: RngStream) -> Result<Self> {
        flow.validate()?;
        let next = match flow.kind {
            FlowKind::Deterministic { .. } => SimTime::from_micros(phase_us),
            FlowKind::Stochastic { mean_s } => SimTime::from_secs_f64(rng.exponential(mean_s)?),
        };
        Ok(TrafficSource { flow, next, rng })
    }

    pub fn flow(&self) -> &FlowConfig {
        &self.flow
    }

    pub fn peek(&self) -> SimTime {
        self.next
    }

    /// Returns the pending arrival instant and schedules the following one.
    pub fn advance(&mut self) -> Result<SimTime> {
        let at = self.next;
        let gap = match self.flow.kind {
            FlowKind::Deterministic { interval_us } => interval_us,
            FlowKind::Stochastic { mean_s } => SimTime::from_secs_f64(self.rng.exponential(mean_s)?).as_micros(),
        };
        self.next = at + gap;
        Ok(at)
    }

    pub fn arrivals_until(mut self, end: SimTime) -> Result<Vec<SimTime>> {
        let mut out = Vec::new();
        while self.peek() < end {
            out.push(self.advance()?);
        }
        Ok(out)
    }
}

/// FIFO transmit queue of one STA.
#[derive(Debug, Clone, Default)]
pub struct PacketQueue {
    packets: VecDeque<Packet>,
    bytes: u64,
}

impl PacketQueue {
    pub fn push(&mut self, p: Packet) {
        self.bytes += p.size_bytes;
        self.packets.push_back(p);
    }

    pub fn pop(&mut self) -> Option<Packet> {
        let p = self.packets.pop_front()?;
        self.bytes -= p.size_bytes;
        Some(p)
    }

    /// Puts packets back at the head, preserving their order.
    pub fn requeue_front(&mut self, packets: Vec<Packet>) {
        for p in packets.into_iter().rev() {
            self.bytes += p.size_bytes;
            self.packets.push_front(p);
        }
    }

    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn bytes(&self) -> u64 {
        self.bytes
    }

    pub fn front(&self) -> Option<&Packet> {
        self.packets.front()
    }
}
