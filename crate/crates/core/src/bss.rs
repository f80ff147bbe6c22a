//! One BSS: an AP plus deterministic and stochastic STAs, wired according to
//! the configured scheme and driven by the event scheduler.

use std::collections::BTreeSet;

use crate::a2p::PollingList;
use crate::edca::{EdcaArbiter, EdcaContender, EdcaParams};
use crate::error::{Error, Result};
use crate::harness::{ScenarioConfig, Scheme};
use crate::ids::{Aid, PacketId};
use crate::metrics::RunResult;
use crate::ofdma_ap::{
    build_basic, build_basic_restricted, build_bsrp, build_bsrp_for, AccessRequestPolicy,
    BufferStatusTable, Exchange, FrameSpan, RoundRobinCursor, StaSide, Step,
};
use crate::phy::{Medium, Outcome, PhyConfig, PpduClass, Resource, Source, TxId};
use crate::sim::{RngStream, Scheduler, SimTime, StreamId, TU_US};
use crate::traffic::{FlowConfig, Packet, PacketQueue, TrafficSource, CBR_INTERVAL_US};
use crate::uora::{RaResult, UoraDecision, UoraState};

/// Optional per-run logs, for timing and contract checks.
#[derive(Debug, Clone, Default)]
pub struct RunTrace {
    pub exchange_frames: Vec<Vec<FrameSpan>>,
    /// (sender, start) of every STA-originated EDCA PPDU.
    pub sta_edca_tx: Vec<(Aid, SimTime)>,
}

#[derive(Debug, Clone, Copy)]
enum Ev {
    Arrival(usize),
    Access(u64),
    EdcaPpduEnd(usize),
    EdcaDone(usize),
    ApRequest,
    ExchangeStep,
    MuExpiry(usize),
    Gate,
}

#[derive(Debug)]
struct EdcaTx {
    tx: TxId,
    packets: Vec<Packet>,
}

#[derive(Debug)]
struct Sta {
    aid: Aid,
    stochastic: bool,
    queue: PacketQueue,
    source: TrafficSource,
    rng: RngStream,
    edca: EdcaContender,
    uora: UoraState,
    edca_tx: Option<EdcaTx>,
    ofdma_pkt: Option<Packet>,
    mu_event_pending: bool,
}

#[derive(Debug)]
enum ApState {
    Idle,
    Contending,
    Exchange { ex: Exchange, tf: TxId },
}

struct Bss {
    cfg: ScenarioConfig,
    phy: PhyConfig,
    total_rus: usize,
    data_us: u64,
    end: SimTime,
    gate: SimTime,
    warmup_cutoff: SimTime,
    policy: AccessRequestPolicy,
    mu_timer_us: u64,
    x_tu: u64,
    sched: Scheduler<Ev>,
    medium: Medium,
    arb: EdcaArbiter<Source>,
    holds: u32,
    access_at: Option<(SimTime, u64)>,
    access_gen: u64,
    stas: Vec<Sta>,
    ring: Vec<Aid>,
    ap: ApState,
    ap_edca: EdcaContender,
    ap_rng: RngStream,
    sa_cursor: RoundRobinCursor,
    fill_cursor: RoundRobinCursor,
    table: BufferStatusTable,
    polling: PollingList,
    next_packet: u64,
    mu_rearm: Vec<usize>,
    result: RunResult,
    trace: Option<RunTrace>,
}

/// Runs one scenario to completion.
pub fn run_scenario(cfg: &ScenarioConfig) -> Result<RunResult> {
    Ok(run_scenario_traced(cfg, false)?.0)
}

/// Like [`run_scenario`], optionally keeping frame logs.
pub fn run_scenario_traced(cfg: &ScenarioConfig, trace: bool) -> Result<(RunResult, Option<RunTrace>)> {
    cfg.validate()?;
    let mut bss = Bss::new(cfg, trace)?;
    bss.run()?;
    bss.finish()
}

macro_rules! view {
    ($b:expr) => {
        View {
            stas: &mut $b.stas,
            result: &mut $b.result,
            polling: &mut $b.polling,
            scheme: $b.cfg.scheme,
            warmup_cutoff: $b.warmup_cutoff,
            x_tu: $b.x_tu,
            mu_rearm: &mut $b.mu_rearm,
        }
    };
}

fn idx_of(aid: Aid) -> usize {
    usize::from(aid.0) - 1
}

impl Bss {
    fn new(cfg: &ScenarioConfig, trace: bool) -> Result<Self> {
        let phy = cfg.phy.clone();
        let total_rus = cfg.total_rus()?;
        let data_us = phy.tb_data_duration(cfg.payload_bytes)?;
        let end = SimTime::from_secs_f64(cfg.duration);
        let gate = SimTime::from_micros(cfg.startup_gate_us);
        let n_sta = usize::from(cfg.n_deterministic) + usize::from(cfg.n_stochastic);
        let warmup_cutoff = if cfg.warmup_exclusion {
            gate + n_sta.div_ceil(total_rus) as u64 * phy.txop_us
        } else {
            SimTime::ZERO
        };
        let range = cfg.ocw_range()?;
        let mut stas = Vec::with_capacity(n_sta);
        for i in 0..n_sta {
            let aid = Aid(i as u16 + 1);
            let stochastic = i >= usize::from(cfg.n_deterministic);
            let mut traffic_rng = RngStream::new(cfg.seed, StreamId::Traffic(aid.0));
            let (flow, phase) = if stochastic {
                (FlowConfig { payload_bytes: cfg.payload_bytes, ..FlowConfig::poisson(cfg.exp_mean) }, 0)
            } else {
                let phase = if cfg.cbr_random_phase {
                    u64::from(traffic_rng.uniform_int(0, CBR_INTERVAL_US as u32 - 1)?)
                } else {
                    0
                };
                (FlowConfig { payload_bytes: cfg.payload_bytes, ..FlowConfig::cbr() }, phase)
            };
            let source = TrafficSource::new(flow, phase, traffic_rng)?;
            let mut rng = RngStream::new(cfg.seed, StreamId::Sta(aid.0));
            let uora = UoraState::init(range, &mut rng)?;
            stas.push(Sta {
                aid,
                stochastic,
                queue: PacketQueue::default(),
                source,
                rng,
                edca: EdcaContender::new(cfg.edca),
                uora,
                edca_tx: None,
                ofdma_pkt: None,
                mu_event_pending: false,
            });
        }
        let ring = stas.iter().map(|s| s.aid).collect();
        Ok(Bss {
            phy: phy.clone(),
            total_rus,
            data_us,
            end,
            gate,
            warmup_cutoff,
            policy: AccessRequestPolicy { ari_us: cfg.ari_us(), startup_gate_us: cfg.startup_gate_us },
            mu_timer_us: cfg.mu_edca_timer_us(),
            x_tu: cfg.a2p_x_tu,
            sched: Scheduler::new(),
            medium: Medium::new(),
            arb: EdcaArbiter::new(phy.slot_us, SimTime::ZERO),
            holds: 0,
            access_at: None,
            access_gen: 0,
            stas,
            ring,
            ap: ApState::Idle,
            ap_edca: EdcaContender::new(cfg.edca),
            ap_rng: RngStream::new(cfg.seed, StreamId::Ap),
            sa_cursor: RoundRobinCursor::default(),
            fill_cursor: RoundRobinCursor::default(),
            table: BufferStatusTable::new(),
            polling: PollingList::new(),
            next_packet: 0,
            mu_rearm: Vec::new(),
            result: RunResult::new(cfg.duration),
            trace: trace.then(RunTrace::default),
            cfg: cfg.clone(),
        })
    }

    fn run(&mut self) -> Result<()> {
        for i in 0..self.stas.len() {
            let at = self.stas[i].source.peek();
            self.sched.schedule(at, Ev::Arrival(i))?;
        }
        if self.cfg.scheme != Scheme::Edca {
            self.sched.schedule(self.gate, Ev::Gate)?;
            self.sched.schedule(self.policy.first_request(), Ev::ApRequest)?;
        }
        while let Some((now, ev)) = self.sched.pop_until(self.end) {
            self.handle(now, ev)?;
            self.reschedule_access(now)?;
        }
        Ok(())
    }

    fn finish(mut self) -> Result<(RunResult, Option<RunTrace>)> {
        let mut queued = 0;
        let mut in_flight = 0;
        for s in &self.stas {
            queued += s.queue.len() as u64;
            in_flight += s.edca_tx.as_ref().map_or(0, |t| t.packets.len() as u64);
            in_flight += u64::from(s.ofdma_pkt.is_some());
        }
        self.result.queued_at_end = queued;
        self.result.in_flight_at_end = in_flight;
        self.result.check_conservation()?;
        self.result.seal();
        Ok((self.result, self.trace))
    }

    fn handle(&mut self, now: SimTime, ev: Ev) -> Result<()> {
        match ev {
            Ev::Arrival(i) => self.on_arrival(i, now),
            Ev::Access(gen) => {
                if self.access_at.is_some_and(|(_, g)| g == gen) {
                    self.access_at = None;
                    self.on_access(now)?;
                }
                Ok(())
            }
            Ev::EdcaPpduEnd(i) => self.on_edca_ppdu_end(i, now),
            Ev::EdcaDone(i) => {
                self.release(now);
                self.sta_try_contend(i, now)
            }
            Ev::ApRequest => self.on_ap_request(now),
            Ev::ExchangeStep => self.on_exchange_step(now),
            Ev::MuExpiry(i) => self.on_mu_expiry(i, now),
            Ev::Gate => self.on_gate(now),
        }
    }

    fn reschedule_access(&mut self, _now: SimTime) -> Result<()> {
        let next = self.arb.next_access();
        match (next, self.access_at) {
            (Some(t), Some((at, _))) if t == at => {}
            (Some(t), _) => {
                self.access_gen += 1;
                self.access_at = Some((t, self.access_gen));
                self.sched.schedule(t, Ev::Access(self.access_gen))?;
            }
            (None, _) => self.access_at = None,
        }
        Ok(())
    }

    fn acquire(&mut self, now: SimTime) {
        if self.holds == 0 {
            self.arb.medium_busy(now);
        }
        self.holds += 1;
    }

    fn release(&mut self, now: SimTime) {
        self.holds -= 1;
        if self.holds == 0 {
            self.arb.medium_idle(now);
        }
    }

    fn sta_edca_allowed(&self, i: usize, now: SimTime) -> bool {
        match self.cfg.scheme {
            Scheme::Edca => true,
            Scheme::SaOfdma | Scheme::Uora => now < self.gate && !self.stas[i].edca.is_disabled(now),
            Scheme::A2p => !self.stas[i].edca.is_disabled(now),
        }
    }

    fn sta_try_contend(&mut self, i: usize, now: SimTime) -> Result<()> {
        let key = Source::Sta(self.stas[i].aid);
        if self.stas[i].queue.is_empty()
            || self.stas[i].edca_tx.is_some()
            || self.arb.is_contending(key)
            || !self.sta_edca_allowed(i, now)
        {
            return Ok(());
        }
        let s = &mut self.stas[i];
        let backoff = s.edca.begin_contention(now, &mut s.rng)?;
        let aifs = s.edca.params_in_effect(now).aifs_us(self.phy.sifs_us, self.phy.slot_us);
        self.arb.join(key, aifs, backoff, now)
    }

    fn sta_withdraw(&mut self, i: usize, now: SimTime) {
        if let Some(rem) = self.arb.leave(Source::Sta(self.stas[i].aid), now) {
            self.stas[i].edca.freeze(rem);
        }
    }

    fn on_arrival(&mut self, i: usize, now: SimTime) -> Result<()> {
        let at = self.stas[i].source.advance()?;
        debug_assert_eq!(at, now);
        let next = self.stas[i].source.peek();
        if next < self.end {
            self.sched.schedule(next, Ev::Arrival(i))?;
        }
        self.next_packet += 1;
        let s = &mut self.stas[i];
        let was_empty = s.queue.is_empty();
        s.queue.push(Packet {
            id: PacketId(self.next_packet),
            source_aid: s.aid,
            generated_at: now,
            size_bytes: self.cfg.payload_bytes,
            delivered_at: None,
        });
        self.result.generated_total += 1;
        if was_empty {
            s.uora.set_pending_report(true);
        }
        if !s.stochastic && now >= self.warmup_cutoff {
            self.result.max_deterministic_queue = self.result.max_deterministic_queue.max(s.queue.len());
        }
        self.sta_try_contend(i, now)
    }

    fn on_access(&mut self, now: SimTime) -> Result<()> {
        let winners = self.arb.take_winners(now);
        for w in winners {
            match w {
                Source::Ap => self.ap_start_exchange(now)?,
                Source::Sta(aid) => self.sta_start_edca(idx_of(aid), now)?,
            }
        }
        Ok(())
    }

    fn sta_start_edca(&mut self, i: usize, now: SimTime) -> Result<()> {
        if self.stas[i].edca.is_disabled(now) {
            return Err(Error::Invariant(format!("AID {} won EDCA access with AIFSN 0", self.stas[i].aid)));
        }
        let max_msdus = if self.cfg.scheme == Scheme::Edca {
            self.phy.max_aggregate(self.cfg.payload_bytes)?
        } else {
            1
        };
        let s = &mut self.stas[i];
        let n = (s.queue.len() as u64).min(max_msdus);
        if n == 0 {
            s.edca.clear_backoff();
            return Ok(());
        }
        let packets: Vec<Packet> = (0..n).filter_map(|_| s.queue.pop()).collect();
        let bits = self.phy.mpdu_bits(self.cfg.payload_bytes, n);
        let dur = self.phy.ppdu_duration(bits, PpduClass::FullBand)?;
        let tx = self.medium.transmit(Source::Sta(s.aid), Resource::FullBand, now, dur)?;
        s.edca_tx = Some(EdcaTx { tx, packets });
        if now >= self.gate {
            self.result.sta_edca_tx_after_gate += 1;
        }
        if let Some(t) = self.trace.as_mut() {
            t.sta_edca_tx.push((s.aid, now));
        }
        self.acquire(now);
        self.sched.schedule(now + dur, Ev::EdcaPpduEnd(i))?;
        Ok(())
    }

    fn on_edca_ppdu_end(&mut self, i: usize, now: SimTime) -> Result<()> {
        let tx = self.stas[i].edca_tx.take().expect("EDCA frame in flight");
        let outcome = self.medium.resolve(tx.tx, now)?;
        let aid = self.stas[i].aid;
        match outcome {
            Outcome::Delivered => {
                let stochastic = self.stas[i].stochastic;
                for mut p in tx.packets {
                    self.result.record_delivery(&mut p, now, stochastic, self.warmup_cutoff)?;
                }
                let s = &mut self.stas[i];
                s.edca.on_tx_outcome(Outcome::Delivered, now, &mut s.rng)?;
                // QoS control of the data frame carries the queue size.
                self.table.update(aid, s.queue.bytes(), now);
                s.uora.set_pending_report(false);
                if self.cfg.scheme == Scheme::A2p {
                    self.polling.on_uplink_received(aid, now, self.x_tu);
                    self.stas[i].edca.apply_mu_edca(EdcaParams::DISABLED, self.x_tu * TU_US, now);
                    self.arm_mu_expiry(i)?;
                }
            }
            Outcome::Collided => {
                let s = &mut self.stas[i];
                s.queue.requeue_front(tx.packets);
                s.edca.on_tx_outcome(Outcome::Collided, now, &mut s.rng)?;
            }
            Outcome::Pending => unreachable!("resolved outcome"),
        }
        // ACK, or the equivalent ACK timeout after a collision.
        let done = now + self.phy.sifs_us + self.phy.ack_us;
        self.sched.schedule(done, Ev::EdcaDone(i))?;
        Ok(())
    }

    fn arm_mu_expiry(&mut self, i: usize) -> Result<()> {
        let s = &mut self.stas[i];
        if s.mu_event_pending {
            return Ok(());
        }
        if let Some(mu) = s.edca.mu_state() {
            if mu.timer_expiry < self.end {
                s.mu_event_pending = true;
                self.sched.schedule(mu.timer_expiry, Ev::MuExpiry(i))?;
            }
        }
        Ok(())
    }

    fn on_mu_expiry(&mut self, i: usize, now: SimTime) -> Result<()> {
        self.stas[i].mu_event_pending = false;
        if self.stas[i].edca.revert_if_expired(now) {
            self.sta_try_contend(i, now)
        } else {
            self.arm_mu_expiry(i)
        }
    }

    fn on_gate(&mut self, now: SimTime) -> Result<()> {
        if matches!(self.cfg.scheme, Scheme::Uora | Scheme::SaOfdma) {
            for i in 0..self.stas.len() {
                self.stas[i].edca.apply_mu_edca(EdcaParams::DISABLED, self.mu_timer_us, now);
                self.sta_withdraw(i, now);
            }
        }
        Ok(())
    }

    fn on_ap_request(&mut self, now: SimTime) -> Result<()> {
        if !matches!(self.ap, ApState::Idle) {
            return Ok(());
        }
        if self.cfg.scheme == Scheme::A2p {
            self.polling.prune(now);
            if self.polling.is_empty() {
                return self.schedule_ap_request(now);
            }
        }
        let backoff = self.ap_edca.begin_contention(now, &mut self.ap_rng)?;
        let aifs = self.ap_edca.params_in_effect(now).aifs_us(self.phy.sifs_us, self.phy.slot_us);
        self.arb.join(Source::Ap, aifs, backoff, now)?;
        self.ap = ApState::Contending;
        Ok(())
    }

    fn schedule_ap_request(&mut self, now: SimTime) -> Result<()> {
        let at = self.policy.next_request(now);
        if at < self.end {
            self.sched.schedule(at, Ev::ApRequest)?;
        }
        Ok(())
    }

    fn ap_start_exchange(&mut self, now: SimTime) -> Result<()> {
        let limit = self.phy.txop_us;
        let bsrp = match self.cfg.scheme {
            Scheme::A2p => {
                let polled = self.polling.select_and_prune(now, self.total_rus);
                if polled.is_empty() {
                    self.ap_edca.clear_backoff();
                    self.ap = ApState::Idle;
                    return self.schedule_ap_request(now);
                }
                build_bsrp_for(&polled, self.total_rus, limit)
            }
            _ => build_bsrp(&self.ring, &mut self.sa_cursor, self.total_rus, self.cfg.ra_rus, limit)?,
        };
        let (ex, tf_end) = Exchange::begin(&self.phy, self.data_us, bsrp, now)?;
        let tf = self.medium.transmit(Source::Ap, Resource::FullBand, now, self.phy.trigger_frame_us)?;
        self.acquire(now);
        self.ap = ApState::Exchange { ex, tf };
        self.sched.schedule(tf_end, Ev::ExchangeStep)?;
        Ok(())
    }

    fn on_exchange_step(&mut self, now: SimTime) -> Result<()> {
        let ApState::Exchange { mut ex, tf } = std::mem::replace(&mut self.ap, ApState::Idle) else {
            return Err(Error::Contract("exchange step without an exchange".into()));
        };
        let next = match ex.step() {
            Step::BsrpEnd => {
                let outcome = self.medium.resolve(tf, now)?;
                self.ap_edca.on_tx_outcome(outcome, now, &mut self.ap_rng)?;
                if outcome == Outcome::Collided {
                    self.result.tf_collisions += 1;
                    self.release(now);
                    return self.schedule_ap_request(now);
                }
                Some(ex.on_bsrp_end(now, &mut view!(self), &mut self.medium, &self.ring)?)
            }
            Step::BsrBurstEnd => Some(ex.on_bsr_burst_end(now, &mut view!(self), &mut self.medium, &mut self.table)?),
            Step::BsrAckEnd => {
                ex.on_bsr_ack_end(&mut view!(self))?;
                let basic = self.build_basic(now);
                ex.start_basic(now, basic)?
            }
            Step::BasicEnd => Some(ex.on_basic_end(now, &mut view!(self), &mut self.medium)?),
            Step::DataBurstEnd => Some(ex.on_data_burst_end(now, &mut view!(self), &mut self.medium, &mut self.table)?),
            Step::DataAckEnd => {
                ex.on_data_ack_end(now, &mut view!(self))?;
                None
            }
            Step::Done => return Err(Error::Contract("exchange stepped after completion".into())),
        };
        self.arm_pending_mu()?;
        match next {
            Some(t) => {
                self.ap = ApState::Exchange { ex, tf };
                self.sched.schedule(t, Ev::ExchangeStep)?;
            }
            None => {
                self.result.exchanges += 1;
                let out = ex.finish();
                if let Some(t) = self.trace.as_mut() {
                    t.exchange_frames.push(out.frames);
                }
                self.release(now);
                // STAs drained or silenced by OFDMA leave EDCA contention.
                for i in 0..self.stas.len() {
                    if self.stas[i].queue.is_empty() || !self.sta_edca_allowed(i, now) {
                        self.sta_withdraw(i, now);
                    }
                }
                self.schedule_ap_request(now)?;
            }
        }
        Ok(())
    }

    fn build_basic(&mut self, now: SimTime) -> crate::ofdma_ap::TriggerFrame {
        let limit = self.data_us;
        match self.cfg.scheme {
            Scheme::A2p => {
                self.polling.prune(now);
                let allowed: BTreeSet<Aid> = self.polling.listed().collect();
                build_basic_restricted(&self.table, &allowed, self.total_rus, limit)
            }
            _ => build_basic(&self.table, &self.ring, &mut self.fill_cursor, self.total_rus, limit),
        }
    }

    fn arm_pending_mu(&mut self) -> Result<()> {
        for i in std::mem::take(&mut self.mu_rearm) {
            self.arm_mu_expiry(i)?;
        }
        Ok(())
    }
}

/// STA-side behaviour during an OFDMA exchange.
struct View<'a> {
    stas: &'a mut [Sta],
    result: &'a mut RunResult,
    polling: &'a mut PollingList,
    scheme: Scheme,
    warmup_cutoff: SimTime,
    x_tu: u64,
    mu_rearm: &'a mut Vec<usize>,
}

impl View<'_> {
    fn sta(&mut self, aid: Aid) -> &mut Sta {
        &mut self.stas[idx_of(aid)]
    }
}

impl StaSide for View<'_> {
    fn buffered_bytes(&self, aid: Aid) -> u64 {
        self.stas[idx_of(aid)].queue.bytes()
    }

    fn ra_eligible(&self, aid: Aid) -> bool {
        self.scheme == Scheme::Uora && self.stas[idx_of(aid)].uora.pending_report()
    }

    fn ra_decision(&mut self, aid: Aid, ra_rus: &[u8]) -> Result<UoraDecision> {
        let s = self.sta(aid);
        s.uora.on_trigger(ra_rus, &mut s.rng)
    }

    fn ra_result(&mut self, aid: Aid, result: RaResult) -> Result<()> {
        let s = self.sta(aid);
        s.uora.on_tx_result(result, &mut s.rng)
    }

    fn report_delivered(&mut self, aid: Aid) {
        self.sta(aid).uora.set_pending_report(false);
    }

    fn take_hol(&mut self, aid: Aid) -> Option<(PacketId, u64)> {
        let s = self.sta(aid);
        if s.ofdma_pkt.is_some() {
            return None;
        }
        let p = s.queue.pop()?;
        let id = p.id;
        s.ofdma_pkt = Some(p);
        Some((id, s.queue.bytes()))
    }

    fn data_delivered(&mut self, aid: Aid, packet: PacketId, at: SimTime) -> Result<()> {
        let cutoff = self.warmup_cutoff;
        let s = &mut self.stas[idx_of(aid)];
        let mut p = s
            .ofdma_pkt
            .take()
            .filter(|p| p.id == packet)
            .ok_or_else(|| Error::Invariant(format!("AID {aid} delivered packet {} it never sent", packet.0)))?;
        let stochastic = s.stochastic;
        self.result.record_delivery(&mut p, at, stochastic, cutoff)?;
        if self.scheme == Scheme::A2p {
            self.polling.on_uplink_received(aid, at, self.x_tu);
        }
        Ok(())
    }

    fn data_acked(&mut self, aid: Aid, at: SimTime) {
        let i = idx_of(aid);
        let x = self.x_tu;
        let scheme = self.scheme;
        let s = &mut self.stas[i];
        if scheme == Scheme::A2p {
            s.edca.apply_mu_edca(EdcaParams::DISABLED, x * TU_US, at);
            self.mu_rearm.push(i);
        } else {
            s.edca.refresh_mu_edca_timer(at);
        }
    }
}
