//! AP side of UL OFDMA: trigger frame construction, buffer-status
//! bookkeeping and the SIFS-separated BSRP / Basic exchange.
//!
//! One exchange is
//! `BSRP TF | SIFS | BSR burst | SIFS | M-BA | SIFS | Basic TF | SIFS | data burst | SIFS | M-BA`.
//! [`Exchange`] walks through it step by step; the embedding simulation calls
//! each step at the instant returned by the previous one, so traffic
//! arriving mid-exchange is observed at the right moments.

use std::collections::{BTreeMap, BTreeSet};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ids::{Aid, PacketId};
use crate::phy::{Medium, Outcome, PhyConfig, Resource, Source, TxId};
use crate::sim::SimTime;
use crate::uora::{RaResult, UoraDecision};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TriggerKind {
    Bsrp,
    Basic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RuAllocation {
    pub ru: u8,
    pub aid: Aid,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TriggerFrame {
    pub kind: TriggerKind,
    pub allocations: Vec<RuAllocation>,
    pub tx_duration_limit_us: u64,
}

impl TriggerFrame {
    pub fn ra_rus(&self) -> Vec<u8> {
        self.allocations.iter().filter(|a| a.aid.is_random_access()).map(|a| a.ru).collect()
    }

    pub fn sa_allocations(&self) -> impl Iterator<Item = &RuAllocation> {
        self.allocations.iter().filter(|a| !a.aid.is_random_access())
    }

    pub fn ru_of(&self, aid: Aid) -> Option<u8> {
        self.sa_allocations().find(|a| a.aid == aid).map(|a| a.ru)
    }

    /// Each RU at most once, each specific AID at most once, and no AID 0 in
    /// a Basic TF.
    pub fn check(&self) -> Result<()> {
        let mut rus = BTreeSet::new();
        let mut aids = BTreeSet::new();
        for a in &self.allocations {
            if !rus.insert(a.ru) {
                return Err(Error::Invariant(format!("RU {} allocated twice", a.ru)));
            }
            if !a.aid.is_random_access() && !aids.insert(a.aid) {
                return Err(Error::Invariant(format!("AID {} allocated twice", a.aid)));
            }
        }
        if self.kind == TriggerKind::Basic && self.allocations.iter().any(|a| a.aid.is_random_access()) {
            return Err(Error::Invariant("Basic TF carries a random-access RU".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BufferStatus {
    pub reported_bytes: u64,
    pub last_report_time: SimTime,
}

/// What the AP believes each STA has buffered.
#[derive(Debug, Clone, Default)]
pub struct BufferStatusTable {
    entries: BTreeMap<Aid, BufferStatus>,
}

impl BufferStatusTable {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn update(&mut self, aid: Aid, reported_bytes: u64, at: SimTime) {
        self.entries.insert(aid, BufferStatus { reported_bytes, last_report_time: at });
    }

    pub fn get(&self, aid: Aid) -> Option<BufferStatus> {
        self.entries.get(&aid).copied()
    }

    /// AIDs with a non-zero report, oldest report first.
    pub fn reporters(&self) -> Vec<Aid> {
        let mut r: Vec<(SimTime, Aid)> = self
            .entries
            .iter()
            .filter(|(_, s)| s.reported_bytes > 0)
            .map(|(&aid, s)| (s.last_report_time, aid))
            .collect();
        r.sort_unstable();
        r.into_iter().map(|(_, aid)| aid).collect()
    }
}

/// Position in the ordered ring of associated AIDs.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RoundRobinCursor {
    pub position: usize,
}

impl RoundRobinCursor {
    /// Next `n` distinct AIDs from the ring (wrapping), advancing by the
    /// number taken.
    pub fn take(&mut self, ring: &[Aid], n: usize) -> Vec<Aid> {
        if ring.is_empty() {
            return Vec::new();
        }
        let n = n.min(ring.len());
        let start = self.position % ring.len();
        let out = (0..n).map(|i| ring[(start + i) % ring.len()]).collect();
        self.position = (start + n) % ring.len();
        out
    }

    /// Like [`take`](Self::take) but skipping AIDs in `exclude`; the cursor
    /// moves past the last AID taken.
    pub fn take_excluding(&mut self, ring: &[Aid], n: usize, exclude: &BTreeSet<Aid>) -> Vec<Aid> {
        let mut out = Vec::new();
        if ring.is_empty() {
            return out;
        }
        let start = self.position % ring.len();
        for i in 0..ring.len() {
            if out.len() == n {
                break;
            }
            let idx = (start + i) % ring.len();
            if !exclude.contains(&ring[idx]) {
                out.push(ring[idx]);
                self.position = (idx + 1) % ring.len();
            }
        }
        out
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MultiStaBlockAck {
    pub acked_aids: BTreeSet<Aid>,
}

/// BSRP with the last `ra_rus` RUs open for random access and the others
/// polled round-robin over `associated`.
pub fn build_bsrp(
    associated: &[Aid],
    cursor: &mut RoundRobinCursor,
    total_rus: usize,
    ra_rus: usize,
    tx_duration_limit_us: u64,
) -> Result<TriggerFrame> {
    if ra_rus > total_rus {
        return Err(Error::config(format!("{ra_rus} RA RUs exceed the {total_rus} available")));
    }
    if associated.is_empty() {
        return Err(Error::Contract("BSRP with no associated STAs".into()));
    }
    let sa = cursor.take(associated, total_rus - ra_rus);
    let mut allocations: Vec<RuAllocation> =
        sa.into_iter().enumerate().map(|(i, aid)| RuAllocation { ru: i as u8, aid }).collect();
    allocations.extend(
        (total_rus - ra_rus..total_rus).map(|ru| RuAllocation { ru: ru as u8, aid: Aid::RANDOM_ACCESS }),
    );
    Ok(TriggerFrame { kind: TriggerKind::Bsrp, allocations, tx_duration_limit_us })
}

/// BSRP polling an explicit list of AIDs, one RU each, no random access.
pub fn build_bsrp_for(aids: &[Aid], total_rus: usize, tx_duration_limit_us: u64) -> TriggerFrame {
    let allocations = aids
        .iter()
        .take(total_rus)
        .enumerate()
        .map(|(i, &aid)| RuAllocation { ru: i as u8, aid })
        .collect();
    TriggerFrame { kind: TriggerKind::Bsrp, allocations, tx_duration_limit_us }
}

/// Basic TF: STAs with reported data first (oldest report first), then
/// round-robin speculative grants over the remaining associated STAs.
pub fn build_basic(
    table: &BufferStatusTable,
    associated: &[Aid],
    cursor: &mut RoundRobinCursor,
    total_rus: usize,
    tx_duration_limit_us: u64,
) -> TriggerFrame {
    let mut chosen: Vec<Aid> = table.reporters().into_iter().take(total_rus).collect();
    let taken: BTreeSet<Aid> = chosen.iter().copied().collect();
    let fill = cursor.take_excluding(associated, total_rus - chosen.len(), &taken);
    chosen.extend(fill);
    basic_from(chosen, tx_duration_limit_us)
}

/// Basic TF limited to `allowed` reporters; RUs nobody qualifies for stay idle.
pub fn build_basic_restricted(
    table: &BufferStatusTable,
    allowed: &BTreeSet<Aid>,
    total_rus: usize,
    tx_duration_limit_us: u64,
) -> TriggerFrame {
    let chosen = table
        .reporters()
        .into_iter()
        .filter(|a| allowed.contains(a))
        .take(total_rus)
        .collect();
    basic_from(chosen, tx_duration_limit_us)
}

fn basic_from(aids: Vec<Aid>, tx_duration_limit_us: u64) -> TriggerFrame {
    let allocations =
        aids.into_iter().enumerate().map(|(i, aid)| RuAllocation { ru: i as u8, aid }).collect();
    TriggerFrame { kind: TriggerKind::Basic, allocations, tx_duration_limit_us }
}

/// STA-side hooks the exchange needs.
pub trait StaSide {
    /// Bytes currently buffered at `aid`.
    fn buffered_bytes(&self, aid: Aid) -> u64;
    /// Whether `aid` may use random access on this trigger.
    fn ra_eligible(&self, aid: Aid) -> bool;
    /// UORA countdown for an eligible STA.
    fn ra_decision(&mut self, aid: Aid, ra_rus: &[u8]) -> Result<UoraDecision>;
    /// Multi-STA BA verdict for an RA transmission.
    fn ra_result(&mut self, aid: Aid, result: RaResult) -> Result<()>;
    /// The AP received a buffer status from `aid` (explicit or piggybacked).
    fn report_delivered(&mut self, aid: Aid);
    /// Hands the head-of-line packet to the PHY. Returns the packet and the
    /// bytes left behind it.
    fn take_hol(&mut self, aid: Aid) -> Option<(PacketId, u64)>;
    fn data_delivered(&mut self, aid: Aid, packet: PacketId, at: SimTime) -> Result<()>;
    /// Block Ack for OFDMA data received.
    fn data_acked(&mut self, aid: Aid, at: SimTime);
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FrameKind {
    BsrpTf,
    BsrBurst,
    BsrBlockAck,
    BasicTf,
    DataBurst,
    DataBlockAck,
}

/// One frame (or UL burst window) of an exchange.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct FrameSpan {
    pub kind: FrameKind,
    pub start: SimTime,
    pub end: SimTime,
}

#[derive(Debug, Clone, Copy)]
struct UlTx {
    aid: Aid,
    tx: TxId,
    via_ra: bool,
    bytes: u64,
    packet: Option<PacketId>,
}

/// Next action an [`Exchange`] expects.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Step {
    BsrpEnd,
    BsrBurstEnd,
    BsrAckEnd,
    BasicEnd,
    DataBurstEnd,
    DataAckEnd,
    Done,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ExchangeOutcome {
    pub delivered_bsrs: Vec<Aid>,
    pub collided_ra: Vec<Aid>,
    pub delivered_data: Vec<(Aid, PacketId)>,
    pub bsr_ack: MultiStaBlockAck,
    pub data_ack: MultiStaBlockAck,
    pub basic: Option<TriggerFrame>,
    pub frames: Vec<FrameSpan>,
}

/// State of one BSRP + Basic exchange in progress.
#[derive(Debug)]
pub struct Exchange {
    phy: PhyConfig,
    data_us: u64,
    step: Step,
    bsrp: TriggerFrame,
    burst: Vec<UlTx>,
    burst_end: SimTime,
    outcome: ExchangeOutcome,
}

impl Exchange {
    /// Starts with the BSRP going on air at `start`. Returns the exchange and
    /// the instant of the next step (end of the BSRP).
    pub fn begin(phy: &PhyConfig, data_us: u64, bsrp: TriggerFrame, start: SimTime) -> Result<(Self, SimTime)> {
        bsrp.check()?;
        if bsrp.kind != TriggerKind::Bsrp {
            return Err(Error::Contract("exchange must open with a BSRP".into()));
        }
        let end = start + phy.trigger_frame_us;
        let mut outcome = ExchangeOutcome::default();
        outcome.frames.push(FrameSpan { kind: FrameKind::BsrpTf, start, end });
        let ex = Exchange {
            phy: phy.clone(),
            data_us,
            step: Step::BsrpEnd,
            bsrp,
            burst: Vec::new(),
            burst_end: end,
            outcome,
        };
        Ok((ex, end))
    }

    pub fn bsrp(&self) -> &TriggerFrame {
        &self.bsrp
    }

    pub fn step(&self) -> Step {
        self.step
    }

    pub fn is_done(&self) -> bool {
        self.step == Step::Done
    }

    /// True when the next call must be [`start_basic`](Self::start_basic).
    pub fn awaiting_basic(&self) -> bool {
        self.step == Step::BsrAckEnd
    }

    fn expect(&self, step: Step) -> Result<()> {
        if self.step != step {
            return Err(Error::Contract(format!("exchange step {:?} while at {:?}", step, self.step)));
        }
        Ok(())
    }

    fn push_frame(&mut self, kind: FrameKind, start: SimTime, dur: u64) -> SimTime {
        let end = start + dur;
        self.outcome.frames.push(FrameSpan { kind, start, end });
        end
    }

    /// BSRP received: SA-polled STAs answer on their RU, UORA STAs count down.
    pub fn on_bsrp_end<S: StaSide>(&mut self, now: SimTime, stas: &mut S, medium: &mut Medium, candidates: &[Aid]) -> Result<SimTime> {
        self.expect(Step::BsrpEnd)?;
        let start = now + self.phy.sifs_us;
        let dur = self.phy.bsr_us;
        for a in self.bsrp.sa_allocations().copied().collect::<Vec<_>>() {
            let bytes = stas.buffered_bytes(a.aid);
            let tx = medium.transmit(Source::Sta(a.aid), Resource::Ru(a.ru), start, dur)?;
            self.burst.push(UlTx { aid: a.aid, tx, via_ra: false, bytes, packet: None });
        }
        let ra = self.bsrp.ra_rus();
        if !ra.is_empty() {
            for &aid in candidates {
                if self.bsrp.ru_of(aid).is_some() || !stas.ra_eligible(aid) {
                    continue;
                }
                if let UoraDecision::TransmitOn(ru) = stas.ra_decision(aid, &ra)? {
                    let bytes = stas.buffered_bytes(aid);
                    let tx = medium.transmit(Source::Sta(aid), Resource::Ru(ru), start, dur)?;
                    self.burst.push(UlTx { aid, tx, via_ra: true, bytes, packet: None });
                }
            }
        }
        self.burst_end = self.push_frame(FrameKind::BsrBurst, start, dur);
        self.step = Step::BsrBurstEnd;
        Ok(self.burst_end)
    }

    /// BSR burst over: record delivered reports. Returns the end of the M-BA.
    pub fn on_bsr_burst_end<S: StaSide>(&mut self, now: SimTime, stas: &mut S, medium: &mut Medium, table: &mut BufferStatusTable) -> Result<SimTime> {
        self.expect(Step::BsrBurstEnd)?;
        for ul in &self.burst {
            match medium.resolve(ul.tx, now)? {
                Outcome::Delivered => {
                    table.update(ul.aid, ul.bytes, now);
                    stas.report_delivered(ul.aid);
                    self.outcome.delivered_bsrs.push(ul.aid);
                    self.outcome.bsr_ack.acked_aids.insert(ul.aid);
                }
                Outcome::Collided => {
                    if ul.via_ra {
                        self.outcome.collided_ra.push(ul.aid);
                    }
                }
                Outcome::Pending => unreachable!("resolved outcome"),
            }
        }
        self.step = Step::BsrAckEnd;
        Ok(self.push_frame(FrameKind::BsrBlockAck, now + self.phy.sifs_us, self.phy.multi_sta_ba_us))
    }

    /// Multi-STA BA received by the RA transmitters.
    pub fn on_bsr_ack_end<S: StaSide>(&mut self, stas: &mut S) -> Result<()> {
        self.expect(Step::BsrAckEnd)?;
        for ul in self.burst.drain(..) {
            if ul.via_ra {
                let res = if self.outcome.bsr_ack.acked_aids.contains(&ul.aid) {
                    RaResult::Success
                } else {
                    RaResult::Failure
                };
                stas.ra_result(ul.aid, res)?;
            }
        }
        Ok(())
    }

    /// Sends the Basic TF one SIFS after the M-BA ended at `ba_end`, or ends
    /// the exchange when `basic` has no allocations.
    pub fn start_basic(&mut self, ba_end: SimTime, basic: TriggerFrame) -> Result<Option<SimTime>> {
        self.expect(Step::BsrAckEnd)?;
        basic.check()?;
        if basic.kind != TriggerKind::Basic {
            return Err(Error::Contract("data phase needs a Basic TF".into()));
        }
        if basic.allocations.is_empty() {
            self.step = Step::Done;
            return Ok(None);
        }
        let end = self.push_frame(FrameKind::BasicTf, ba_end + self.phy.sifs_us, self.phy.trigger_frame_us);
        self.outcome.basic = Some(basic);
        self.step = Step::BasicEnd;
        Ok(Some(end))
    }

    /// Basic TF received: every scheduled STA sends its head-of-line packet,
    /// or a QoS Null if its queue is empty. All PPDUs are padded to the
    /// longest one.
    pub fn on_basic_end<S: StaSide>(&mut self, now: SimTime, stas: &mut S, medium: &mut Medium) -> Result<SimTime> {
        self.expect(Step::BasicEnd)?;
        let start = now + self.phy.sifs_us;
        let basic = self.outcome.basic.as_ref().expect("basic set");
        let mut plan = Vec::new();
        for a in basic.allocations.iter() {
            let (packet, bytes) = match stas.take_hol(a.aid) {
                Some((p, rest)) => (Some(p), rest),
                None => (None, 0),
            };
            plan.push((a.aid, a.ru, packet, bytes));
        }
        let dur = if plan.iter().any(|p| p.2.is_some()) { self.data_us } else { self.phy.bsr_us };
        for (aid, ru, packet, bytes) in plan {
            let tx = medium.transmit(Source::Sta(aid), Resource::Ru(ru), start, dur)?;
            self.burst.push(UlTx { aid, tx, via_ra: false, bytes, packet });
        }
        self.burst_end = self.push_frame(FrameKind::DataBurst, start, dur);
        self.step = Step::DataBurstEnd;
        Ok(self.burst_end)
    }

    /// Data burst over: deliveries and piggybacked buffer status.
    pub fn on_data_burst_end<S: StaSide>(&mut self, now: SimTime, stas: &mut S, medium: &mut Medium, table: &mut BufferStatusTable) -> Result<SimTime> {
        self.expect(Step::DataBurstEnd)?;
        for ul in &self.burst {
            match medium.resolve(ul.tx, now)? {
                Outcome::Delivered => {
                    table.update(ul.aid, ul.bytes, now);
                    stas.report_delivered(ul.aid);
                    if let Some(p) = ul.packet {
                        stas.data_delivered(ul.aid, p, now)?;
                        self.outcome.delivered_data.push((ul.aid, p));
                        self.outcome.data_ack.acked_aids.insert(ul.aid);
                    }
                }
                Outcome::Collided => {
                    return Err(Error::Invariant(format!(
                        "scheduled data from AID {} collided on a Basic TF RU",
                        ul.aid
                    )))
                }
                Outcome::Pending => unreachable!("resolved outcome"),
            }
        }
        self.burst.clear();
        self.step = Step::DataAckEnd;
        Ok(self.push_frame(FrameKind::DataBlockAck, now + self.phy.sifs_us, self.phy.multi_sta_ba_us))
    }

    pub fn on_data_ack_end<S: StaSide>(&mut self, now: SimTime, stas: &mut S) -> Result<()> {
        self.expect(Step::DataAckEnd)?;
        for &aid in &self.outcome.data_ack.acked_aids {
            stas.data_acked(aid, now);
        }
        self.step = Step::Done;
        Ok(())
    }

    pub fn finish(self) -> ExchangeOutcome {
        self.outcome
    }

    pub fn frames(&self) -> &[FrameSpan] {
        &self.outcome.frames
    }
}

/// Channel-access request cadence of the AP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AccessRequestPolicy {
    pub ari_us: u64,
    pub startup_gate_us: u64,
}

impl AccessRequestPolicy {
    /// No trigger frame goes out before the startup gate.
    pub fn first_request(&self) -> SimTime {
        SimTime::from_micros(self.startup_gate_us)
    }

    /// Next request after an exchange completes or an attempt fails at `t`.
    pub fn next_request(&self, t: SimTime) -> SimTime {
        (t + self.ari_us).max(self.first_request())
    }
}
