//! Uplink delay and throughput bookkeeping for one run.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ids::{Aid, PacketId};
use crate::sim::SimTime;
use crate::traffic::Packet;

/// Name of the quantile convention, written into output metadata.
pub const QUANTILE_CONVENTION: &str = "linear interpolation between order statistics (h = (n-1)p)";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelaySample {
    pub packet_id: PacketId,
    pub source_aid: Aid,
    pub generated_at_us: u64,
    pub delivered_at_us: u64,
    pub delay_us: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    /// Stochastic-STA deliveries outside the warm-up window.
    pub delay_samples: Vec<DelaySample>,
    /// Deliveries from every STA.
    pub delivered_total: u64,
    pub generated_total: u64,
    /// Generated but neither delivered nor lost by the end of the run.
    pub queued_at_end: u64,
    pub in_flight_at_end: u64,
    pub warmup_excluded: u64,
    pub duration_s: f64,
    /// EDCA frames STAs put on air after the startup gate.
    pub sta_edca_tx_after_gate: u64,
    /// Largest deterministic-STA queue seen after warm-up.
    pub max_deterministic_queue: usize,
    pub exchanges: u64,
    pub tf_collisions: u64,
    /// Mean delay kept after [`discard_samples`](Self::discard_samples).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    retained_mean_delay_us: Option<f64>,
    #[serde(default)]
    samples_discarded: bool,
    #[serde(skip)]
    delivered_ids: HashSet<PacketId>,
}

impl RunResult {
    pub fn new(duration_s: f64) -> Self {
        RunResult { duration_s, ..Default::default() }
    }

    /// Marks `packet` delivered at `at`. Delay is sampled only for stochastic
    /// sources whose packet was generated at or after `warmup_cutoff`.
    pub fn record_delivery(&mut self, packet: &mut Packet, at: SimTime, stochastic: bool, warmup_cutoff: SimTime) -> Result<()> {
        if packet.delivered_at.is_some() || !self.delivered_ids.insert(packet.id) {
            return Err(Error::Invariant(format!("packet {} delivered twice", packet.id.0)));
        }
        if at < packet.generated_at {
            return Err(Error::Invariant(format!("packet {} delivered before it was generated", packet.id.0)));
        }
        packet.delivered_at = Some(at);
        self.delivered_total += 1;
        if stochastic {
            if packet.generated_at < warmup_cutoff {
                self.warmup_excluded += 1;
            } else {
                self.delay_samples.push(DelaySample {
                    packet_id: packet.id,
                    source_aid: packet.source_aid,
                    generated_at_us: packet.generated_at.as_micros(),
                    delivered_at_us: at.as_micros(),
                    delay_us: at - packet.generated_at,
                });
            }
        }
        Ok(())
    }

    pub fn throughput_pps(&self) -> f64 {
        if self.duration_s > 0.0 {
            self.delivered_total as f64 / self.duration_s
        } else {
            0.0
        }
    }

    /// `generated == delivered + queued + in flight`.
    pub fn check_conservation(&self) -> Result<()> {
        let accounted = self.delivered_total + self.queued_at_end + self.in_flight_at_end;
        if accounted != self.generated_total {
            return Err(Error::Invariant(format!(
                "packet conservation: generated {} != delivered {} + queued {} + in flight {}",
                self.generated_total, self.delivered_total, self.queued_at_end, self.in_flight_at_end
            )));
        }
        Ok(())
    }

    pub fn mean_delay_us(&self) -> Option<f64> {
        if self.samples_discarded {
            return self.retained_mean_delay_us;
        }
        mean(self.delay_samples.iter().map(|s| s.delay_us as f64))
    }

    /// Ends bookkeeping: frees the duplicate-delivery index.
    pub fn seal(&mut self) {
        self.delivered_ids = HashSet::new();
    }

    /// Frees the per-packet samples, keeping their mean.
    pub fn discard_samples(&mut self) {
        self.retained_mean_delay_us = self.mean_delay_us();
        self.samples_discarded = true;
        self.delay_samples = Vec::new();
    }

    pub fn samples_discarded(&self) -> bool {
        self.samples_discarded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DelayStats {
    pub mean: f64,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub min: f64,
    pub max: f64,
    pub count: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    /// Absent when the run produced no delay samples.
    pub delay: Option<DelayStats>,
    pub throughput_pps: f64,
}

pub fn summarize(result: &RunResult) -> Summary {
    let delays: Vec<f64> = result.delay_samples.iter().map(|s| s.delay_us as f64).collect();
    Summary { delay: delay_stats(&delays), throughput_pps: result.throughput_pps() }
}

pub fn delay_stats(values: &[f64]) -> Option<DelayStats> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(DelayStats {
        mean: mean(sorted.iter().copied())?,
        median: quantile_sorted(&sorted, 0.5)?,
        q1: quantile_sorted(&sorted, 0.25)?,
        q3: quantile_sorted(&sorted, 0.75)?,
        min: *sorted.first()?,
        max: *sorted.last()?,
        count: sorted.len(),
    })
}

/// Linear-interpolation quantile of ascending `sorted` at `p` in [0, 1].
pub fn quantile_sorted(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let h = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    Some(sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo]))
}

pub fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

/// Sample standard deviation (n − 1 denominator); 0 for a single value.
pub fn std_dev(values: &[f64]) -> Option<f64> {
    let m = mean(values.iter().copied())?;
    if values.len() < 2 {
        return Some(0.0);
    }
    let ss: f64 = values.iter().map(|v| (v - m).powi(2)).sum();
    Some((ss / (values.len() - 1) as f64).sqrt())
}
