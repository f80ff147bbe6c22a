//! End-to-end acceptance checks. Prints one verdict line per criterion and
//! exits non-zero if any criterion fails.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::process::ExitCode;
use std::time::Instant;

use uora_sim::harness::{
    pooled_se, run_cells, run_cells_with, run_scenario_traced, CellKey, CellResult, OutputFormat, ScenarioConfig, Scheme, SweepResult,
    SweepSpec, OCW_GRID, R_GRID,
};
use uora_sim::ids::{Aid, PacketId};
use uora_sim::ofdma_ap::{Exchange, RuAllocation, StaSide, TriggerFrame, TriggerKind};
use uora_sim::phy::{Medium, PhyConfig};
use uora_sim::sim::{RngStream, SimTime, StreamId};
use uora_sim::uora::{OcwRange, RaResult, UoraDecision, UoraState};
use uora_sim::Result;

const RUNS: u32 = 10;
const DURATION_S: f64 = 30.0;
const BASE_GATE_US: u64 = 100_000;

struct Verdict {
    id: u8,
    pass: bool,
    detail: String,
}

fn verdict(id: u8, pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { id, pass, detail: detail.into() }
}

fn erred(id: u8, e: uora_sim::Error) -> Verdict {
    verdict(id, false, format!("error: {e}"))
}

// ---------------------------------------------------------------------------
// 1. UORA countdown against a from-scratch interpreter.

#[derive(Debug, PartialEq)]
struct Step {
    obo: u32,
    ocw: u32,
    sent_on: Option<u8>,
}

/// Textbook reading of the OFDMA back-off: countdown by the number of RA
/// RUs, transmit once the counter fits, reset or double the window on the
/// verdict. Consumes random draws in the same order the procedure states
/// them: RU choice, then the next back-off.
struct Reference {
    ocw_min: u32,
    ocw_max: u32,
    ocw: u32,
    obo: u32,
    pending: bool,
}

impl Reference {
    fn new(ocw_min: u32, ocw_max: u32, rng: &mut RngStream) -> Self {
        let obo = rng.uniform_int(0, ocw_min).unwrap();
        Reference { ocw_min, ocw_max, ocw: ocw_min, obo, pending: false }
    }

    fn trigger(&mut self, ra_rus: &[u8], rng: &mut RngStream) -> Option<u8> {
        let n = ra_rus.len() as u32;
        if self.obo > n {
            self.obo -= n;
            return None;
        }
        self.obo = 0;
        Some(ra_rus[rng.uniform_int(0, n - 1).unwrap() as usize])
    }

    fn verdict(&mut self, success: bool, rng: &mut RngStream) {
        if success {
            self.ocw = self.ocw_min;
            self.pending = false;
        } else {
            self.ocw = (self.ocw * 2 + 1).min(self.ocw_max);
        }
        self.obo = rng.uniform_int(0, self.ocw).unwrap();
    }
}

fn criterion_1() -> Verdict {
    const EPISODES: u64 = 100_000;
    let mut mismatches = 0u64;
    let mut steps = 0u64;
    for ep in 0..EPISODES {
        // Episode shape (window bounds, TF sequence, verdicts, arrivals)
        // comes from its own stream so both sides see the same world.
        let mut world = RngStream::new(ep, StreamId::Ap);
        let e_min = world.uniform_int(0, 6).unwrap();
        let e_max = world.uniform_int(e_min.max(1), 7).unwrap();
        let (ocw_min, ocw_max) = ((1 << e_min) - 1, (1 << e_max) - 1);
        let range = OcwRange::from_bounds(ocw_min, ocw_max).unwrap();
        let mut rng_impl = RngStream::new(ep, StreamId::Sta(1));
        let mut rng_ref = RngStream::new(ep, StreamId::Sta(1));
        let mut sut = UoraState::init(range, &mut rng_impl).unwrap();
        let mut oracle = Reference::new(ocw_min, ocw_max, &mut rng_ref);
        let tfs = world.uniform_int(1, 60).unwrap();
        for _ in 0..tfs {
            if world.uniform_int(0, 2).unwrap() == 0 {
                sut.set_pending_report(true);
                oracle.pending = true;
            }
            let n_ra = world.uniform_int(1, 9).unwrap() as u8;
            let first = world.uniform_int(0, 9 - u32::from(n_ra)).unwrap() as u8;
            let ra: Vec<u8> = (first..first + n_ra).collect();
            let has_sa = world.uniform_int(0, 4).unwrap() == 0;
            let success = world.uniform_int(0, 1).unwrap() == 1;
            if has_sa || !oracle.pending {
                if sut.pending_report() != oracle.pending {
                    mismatches += 1;
                }
                continue;
            }
            steps += 1;
            let got = match sut.on_trigger(&ra, &mut rng_impl) {
                Ok(UoraDecision::TransmitOn(ru)) => Some(ru),
                Ok(UoraDecision::Defer) => None,
                Err(_) => {
                    mismatches += 1;
                    break;
                }
            };
            let want = oracle.trigger(&ra, &mut rng_ref);
            if got.is_some() {
                let r = if success { RaResult::Success } else { RaResult::Failure };
                sut.on_tx_result(r, &mut rng_impl).unwrap();
            }
            if want.is_some() {
                oracle.verdict(success, &mut rng_ref);
            }
            let a = Step { obo: sut.obo(), ocw: sut.ocw(), sent_on: got };
            let b = Step { obo: oracle.obo, ocw: oracle.ocw, sent_on: want };
            if a != b || sut.pending_report() != oracle.pending {
                mismatches += 1;
            }
        }
    }
    verdict(1, mismatches == 0, format!("{EPISODES} episodes, {steps} countdown steps, {mismatches} mismatches"))
}

// ---------------------------------------------------------------------------
// 2. Worked single-BSRP example with pinned RU choices.

struct FigureStas {
    uora: HashMap<Aid, UoraState>,
    ru_choice: HashMap<Aid, u8>,
    rng: RngStream,
}

impl StaSide for FigureStas {
    fn buffered_bytes(&self, aid: Aid) -> u64 {
        if self.uora.contains_key(&aid) || aid == Aid(5) || aid == Aid(7) {
            1700
        } else {
            0
        }
    }
    fn ra_eligible(&self, aid: Aid) -> bool {
        self.uora.get(&aid).is_some_and(UoraState::pending_report)
    }
    fn ra_decision(&mut self, aid: Aid, ra: &[u8]) -> Result<UoraDecision> {
        let d = self.uora.get_mut(&aid).expect("UORA STA").on_trigger(ra, &mut self.rng)?;
        Ok(match d {
            UoraDecision::TransmitOn(_) => UoraDecision::TransmitOn(self.ru_choice[&aid]),
            UoraDecision::Defer => d,
        })
    }
    fn ra_result(&mut self, aid: Aid, r: RaResult) -> Result<()> {
        self.uora.get_mut(&aid).expect("UORA STA").on_tx_result(r, &mut self.rng)
    }
    fn report_delivered(&mut self, aid: Aid) {
        if let Some(s) = self.uora.get_mut(&aid) {
            s.set_pending_report(false);
        }
    }
    fn take_hol(&mut self, _aid: Aid) -> Option<(PacketId, u64)> {
        None
    }
    fn data_delivered(&mut self, _aid: Aid, _p: PacketId, _at: SimTime) -> Result<()> {
        Ok(())
    }
    fn data_acked(&mut self, _aid: Aid, _at: SimTime) {}
}

fn criterion_2() -> Verdict {
    let run = || -> Result<(BTreeMap<u16, u32>, BTreeSet<u16>, BTreeSet<u16>, BTreeSet<u16>)> {
        let range = OcwRange::from_bounds(15, 127)?;
        let initial = [(1u16, 15u32), (2, 1), (3, 2), (4, 5), (6, 7), (8, 3)];
        // The two colliding STAs share the first RA RU; STA 3 uses the third.
        let mut stas = FigureStas {
            uora: initial.iter().map(|&(a, o)| (Aid(a), UoraState::with_obo(range, 15, o))).collect(),
            ru_choice: [(Aid(2), 0), (Aid(8), 0), (Aid(3), 2)].into(),
            rng: RngStream::new(3, StreamId::Ap),
        };
        let mut allocations: Vec<RuAllocation> = (0..3).map(|ru| RuAllocation { ru, aid: Aid::RANDOM_ACCESS }).collect();
        allocations.push(RuAllocation { ru: 3, aid: Aid(5) });
        allocations.push(RuAllocation { ru: 4, aid: Aid(7) });
        let bsrp = TriggerFrame { kind: TriggerKind::Bsrp, allocations, tx_duration_limit_us: 2080 };
        let all: Vec<Aid> = (1..=8).map(Aid).collect();
        let phy = PhyConfig::default();
        let mut medium = Medium::new();
        let mut table = uora_sim::ofdma_ap::BufferStatusTable::new();
        let (mut ex, t) = Exchange::begin(&phy, 1360, bsrp, SimTime::from_micros(500))?;
        let t = ex.on_bsrp_end(t, &mut stas, &mut medium, &all)?;
        // Counters right after the countdown, before the verdict redraws.
        let post: BTreeMap<u16, u32> = stas.uora.iter().map(|(a, s)| (a.0, s.obo())).collect();
        ex.on_bsr_burst_end(t, &mut stas, &mut medium, &mut table)?;
        ex.on_bsr_ack_end(&mut stas)?;
        let out = ex.finish();
        let delivered_ra: BTreeSet<u16> =
            out.delivered_bsrs.iter().filter(|a| stas.uora.contains_key(a)).map(|a| a.0).collect();
        let collided: BTreeSet<u16> = out.collided_ra.iter().map(|a| a.0).collect();
        let transmitters: BTreeSet<u16> = delivered_ra.union(&collided).copied().collect();
        Ok((post, transmitters, delivered_ra, collided))
    };
    match run() {
        Ok((post, tx, delivered, collided)) => {
            let want_post: BTreeMap<u16, u32> = [(1, 12), (2, 0), (3, 0), (4, 2), (6, 4), (8, 0)].into();
            let pass = post == want_post
                && tx == BTreeSet::from([2, 3, 8])
                && delivered == BTreeSet::from([3])
                && collided == BTreeSet::from([2, 8]);
            verdict(2, pass, format!("post-OBO {post:?}, transmitters {tx:?}, delivered {delivered:?}, collided {collided:?}"))
        }
        Err(e) => erred(2, e),
    }
}

// ---------------------------------------------------------------------------
// 3 and 5. One traced 30 s UORA run.

fn uora_run_config() -> ScenarioConfig {
    ScenarioConfig {
        scheme: Scheme::Uora,
        n_stochastic: 90,
        ra_rus: 5,
        ocw_min: 7,
        duration: DURATION_S,
        seed: 11,
        ..ScenarioConfig::default()
    }
}

fn criteria_3_and_5() -> (Verdict, Verdict) {
    let cfg = uora_run_config();
    let (result, trace) = match run_scenario_traced(&cfg, true) {
        Ok((r, Some(t))) => (r, t),
        Ok((_, None)) => return (verdict(3, false, "no trace"), verdict(5, false, "no trace")),
        Err(e) => return (verdict(3, false, format!("error: {e}")), erred(5, e)),
    };
    let mut gaps = 0u64;
    let mut bad = Vec::new();
    for frames in &trace.exchange_frames {
        for w in frames.windows(2) {
            gaps += 1;
            let gap = w[1].start.saturating_sub(w[0].end);
            if w[1].start < w[0].end || gap != 16 {
                bad.push((w[0].kind, w[1].kind, w[1].start.as_micros() as i64 - w[0].end.as_micros() as i64));
            }
        }
    }
    let c3 = verdict(
        3,
        bad.is_empty() && gaps > 0,
        format!("{} exchanges, {gaps} gaps checked, {} off-SIFS{}", trace.exchange_frames.len(), bad.len(),
            bad.first().map(|b| format!(" (first: {b:?})")).unwrap_or_default()),
    );
    let gate = SimTime::from_micros(cfg.startup_gate_us);
    let logged_after = trace.sta_edca_tx.iter().filter(|(_, t)| *t >= gate).count();
    let c5 = verdict(
        5,
        logged_after == 0 && result.sta_edca_tx_after_gate == 0,
        format!(
            "{} STA EDCA frames before the gate, {} after (counter {})",
            trace.sta_edca_tx.len() - logged_after,
            logged_after,
            result.sta_edca_tx_after_gate
        ),
    );
    (c3, c5)
}

// ---------------------------------------------------------------------------
// 4. Conservation over the whole preset grid, short runs.

fn criterion_4() -> Verdict {
    let base = ScenarioConfig { duration: 1.0, ..ScenarioConfig::default() };
    let spec = match SweepSpec::preset("full", base, 1) {
        Ok(s) => s,
        Err(e) => return erred(4, e),
    };
    match uora_sim::harness::run_sweep(&spec) {
        Ok(sweep) => {
            let mut runs = 0;
            let mut broken = 0;
            for cell in &sweep.cells {
                for r in &cell.runs {
                    runs += 1;
                    let ids: BTreeSet<_> = r.delay_samples.iter().map(|s| s.packet_id).collect();
                    let unique = ids.len() == r.delay_samples.len();
                    if r.check_conservation().is_err() || !unique || r.delivered_total > r.generated_total {
                        broken += 1;
                    }
                }
            }
            verdict(4, broken == 0, format!("{} cells, {runs} runs of 1 s, {broken} violations", sweep.cells.len()))
        }
        Err(e) => erred(4, e),
    }
}

// ---------------------------------------------------------------------------
// 6. Determinism of the emitted samples.

fn criterion_6() -> Verdict {
    let key = CellKey { scheme: Scheme::Uora, n_stochastic: 30, ra_rus: 3, ocw_min: 7 };
    let base = ScenarioConfig { duration: 5.0, ..ScenarioConfig::default() };
    let once = || -> Result<Vec<u8>> {
        let cells = run_cells(&base, 2, &[(0.1, key)])?;
        let sweep = SweepResult { spec: SweepSpec { runs: 2, base: base.clone(), ..Default::default() }, cells };
        let dir = tempfile::tempdir().map_err(|e| uora_sim::Error::Io { path: "tempdir".into(), source: e })?;
        sweep.emit(OutputFormat::Csv, dir.path())?;
        let path = dir.path().join("exp_mean_0.1").join(format!("{}_samples.csv", key.file_stem()));
        std::fs::read(&path).map_err(|e| uora_sim::Error::Io { path: path.display().to_string(), source: e })
    };
    match (once(), once()) {
        (Ok(a), Ok(b)) => verdict(6, a == b && !a.is_empty(), format!("two emissions of {} bytes each, identical: {}", a.len(), a == b)),
        (Err(e), _) | (_, Err(e)) => erred(6, e),
    }
}

// ---------------------------------------------------------------------------
// Quantitative criteria share one cache of simulated cells.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct Slot {
    gate_us: u64,
    exp_mean_milli: u32,
    key: CellKey,
}

struct Lab {
    cells: HashMap<Slot, CellResult>,
}

fn sa(n: u16) -> CellKey {
    CellKey { scheme: Scheme::SaOfdma, n_stochastic: n, ra_rus: 0, ocw_min: 7 }
}

fn uora(n: u16, r: usize, w: u32) -> CellKey {
    CellKey { scheme: Scheme::Uora, n_stochastic: n, ra_rus: r, ocw_min: w }
}

fn other(scheme: Scheme, n: u16) -> CellKey {
    CellKey { scheme, n_stochastic: n, ra_rus: 0, ocw_min: 7 }
}

fn uora_grid(n: u16) -> Vec<CellKey> {
    R_GRID.iter().flat_map(|&r| OCW_GRID.iter().map(move |&w| uora(n, r, w))).collect()
}

impl Lab {
    fn ensure(&mut self, gate_us: u64, exp_mean: f64, keys: &[CellKey]) -> Result<()> {
        let milli = (exp_mean * 1000.0).round() as u32;
        let missing: Vec<(f64, CellKey)> = keys
            .iter()
            .filter(|k| !self.cells.contains_key(&Slot { gate_us, exp_mean_milli: milli, key: **k }))
            .map(|k| (exp_mean, *k))
            .collect();
        if missing.is_empty() {
            return Ok(());
        }
        let base = ScenarioConfig { duration: DURATION_S, startup_gate_us: gate_us, ..ScenarioConfig::default() };
        let done = run_cells_with(&base, RUNS, &missing, |cell| {
            cell.discard_samples();
            Ok(())
        })?;
        for cell in done {
            self.cells.insert(Slot { gate_us, exp_mean_milli: milli, key: cell.key }, cell);
        }
        Ok(())
    }

    fn get(&self, gate_us: u64, exp_mean: f64, key: CellKey) -> &CellResult {
        let milli = (exp_mean * 1000.0).round() as u32;
        &self.cells[&Slot { gate_us, exp_mean_milli: milli, key }]
    }

    fn delay(&self, gate_us: u64, exp_mean: f64, key: CellKey) -> f64 {
        self.get(gate_us, exp_mean, key).mean_delay().unwrap_or(f64::INFINITY)
    }

    /// Lowest-delay UORA cell among `keys`.
    fn best<'a>(&'a self, gate_us: u64, exp_mean: f64, keys: &[CellKey]) -> &'a CellResult {
        keys.iter()
            .map(|&k| self.get(gate_us, exp_mean, k))
            .min_by(|a, b| {
                let (da, db) = (a.mean_delay().unwrap_or(f64::INFINITY), b.mean_delay().unwrap_or(f64::INFINITY));
                da.total_cmp(&db).then(a.key.ocw_min.cmp(&b.key.ocw_min))
            })
            .expect("non-empty candidate set")
    }
}

fn se(a: &CellResult, b: &CellResult) -> f64 {
    pooled_se(a, b).unwrap_or(f64::INFINITY)
}

fn ms(us: f64) -> String {
    format!("{:.2} ms", us / 1000.0)
}

fn throughput_cells() -> Vec<CellKey> {
    let mut keys = Vec::new();
    for n in [10, 50, 90] {
        keys.push(sa(n));
        if n == 90 {
            keys.extend(uora_grid(90));
        } else {
            keys.extend(R_GRID.iter().map(|&r| uora(n, r, 7)));
        }
    }
    keys
}

fn criterion_7(lab: &mut Lab, gate: u64) -> Verdict {
    let keys = throughput_cells();
    if let Err(e) = lab.ensure(gate, 0.1, &keys) {
        return erred(7, e);
    }
    let reference = lab.get(gate, 0.1, sa(10)).throughput_pps();
    let mut worst = (0.0f64, sa(10));
    let mut ra_high = Vec::new();
    for &k in &keys {
        let tp = lab.get(gate, 0.1, k).throughput_pps();
        if k.ra_rus == 9 {
            if tp >= reference {
                ra_high.push((k.n_stochastic, k.ocw_min, tp));
            }
            continue;
        }
        let dev = tp / reference - 1.0;
        if dev.abs() > worst.0.abs() {
            worst = (dev, k);
        }
    }
    let pass = worst.0.abs() <= 0.05 && ra_high.is_empty();
    verdict(
        7,
        pass,
        format!(
            "reference {reference:.1} pkt/s; worst R<9 deviation {:+.2}% at {}; R=9 cells not below reference: {}",
            worst.0 * 100.0,
            worst.1.file_stem(),
            if ra_high.is_empty() { "none".to_string() } else { format!("{ra_high:?}") }
        ),
    )
}

fn criterion_8(lab: &mut Lab, gate: u64) -> Verdict {
    let grid = uora_grid(90);
    if let Err(e) = lab.ensure(gate, 0.1, &[&grid[..], &[sa(90)]].concat()) {
        return erred(8, e);
    }
    let d_sa = lab.delay(gate, 0.1, sa(90));
    let best = lab.best(gate, 0.1, &grid);
    let d_best = best.mean_delay().unwrap_or(f64::INFINITY);
    verdict(
        8,
        d_sa < 15_000.0 && d_best < 15_000.0,
        format!("N=90: SA {}, best UORA {} ({})", ms(d_sa), ms(d_best), best.key.file_stem()),
    )
}

fn criterion_9(lab: &mut Lab, gate: u64) -> Verdict {
    let keys = [sa(90), uora(90, 5, 0), uora(90, 5, 7), uora(90, 5, 63)];
    if let Err(e) = lab.ensure(gate, 0.1, &keys) {
        return erred(9, e);
    }
    let [c_sa, c0, c7, c63] = keys.map(|k| lab.get(gate, 0.1, k));
    let (d_sa, d0, d7, d63) = (lab.delay(gate, 0.1, keys[0]), lab.delay(gate, 0.1, keys[1]), lab.delay(gate, 0.1, keys[2]), lab.delay(gate, 0.1, keys[3]));
    let wide = d63 - d_sa > se(c63, c_sa);
    let tuned = d0 - d7 > se(c0, c7);
    verdict(
        9,
        wide && tuned,
        format!(
            "N=90 R=5: D(63) {} vs SA {} (se {:.0} us) {}; D(7) {} vs D(0) {} (se {:.0} us) {}",
            ms(d63), ms(d_sa), se(c63, c_sa), if wide { "ok" } else { "NOT above" },
            ms(d7), ms(d0), se(c0, c7), if tuned { "ok" } else { "NOT below" }
        ),
    )
}

fn criterion_10(lab: &mut Lab) -> Verdict {
    let gate = BASE_GATE_US;
    if let Err(e) = lab.ensure(gate, 0.1, &uora_grid(90)) {
        return erred(10, e);
    }
    let best: Vec<&CellResult> = R_GRID
        .iter()
        .map(|&r| lab.best(gate, 0.1, &OCW_GRID.iter().map(|&w| uora(90, r, w)).collect::<Vec<_>>()))
        .collect();
    let d: Vec<f64> = best.iter().map(|c| c.mean_delay().unwrap_or(f64::INFINITY)).collect();
    let mut broken = Vec::new();
    for i in 0..R_GRID.len() - 1 {
        let tol = se(best[i], best[i + 1]);
        let ok = if R_GRID[i + 1] <= 5 { d[i + 1] <= d[i] + tol } else { d[i + 1] >= d[i] - tol };
        if !ok {
            broken.push(format!("R{}->R{}", R_GRID[i], R_GRID[i + 1]));
        }
    }
    let curve: Vec<String> = R_GRID.iter().zip(&d).map(|(r, v)| format!("R{r}={}", ms(*v))).collect();
    verdict(
        10,
        broken.is_empty(),
        format!("{}; violating steps: {}", curve.join(" "), if broken.is_empty() { "none".into() } else { broken.join(", ") }),
    )
}

/// (gain %, difference / pooled se) of the best UORA cell over SA.
fn gain(lab: &mut Lab, exp_mean: f64, n: u16) -> Result<(f64, f64, String)> {
    let grid = uora_grid(n);
    lab.ensure(BASE_GATE_US, exp_mean, &[&grid[..], &[sa(n)]].concat())?;
    let base = lab.get(BASE_GATE_US, exp_mean, sa(n));
    let best = lab.best(BASE_GATE_US, exp_mean, &grid);
    let (db, dm) = (base.mean_delay().unwrap_or(f64::INFINITY), best.mean_delay().unwrap_or(f64::INFINITY));
    let g = uora_sim::harness::delay_gain(db, dm).unwrap_or(f64::NAN);
    Ok((g, (db - dm) / se(base, best), format!("SA {} vs {} {}", ms(db), best.key.file_stem(), ms(dm))))
}

fn criterion_11(lab: &mut Lab) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for m in [0.5, 1.0] {
        match gain(lab, m, 90) {
            Ok((g, z, text)) => {
                let ok = g >= 30.0 && z > 3.0;
                pass &= ok;
                parts.push(format!("exp_mean {m}: gain {g:.1}% at {z:.1} se ({text})"));
            }
            Err(e) => return erred(11, e),
        }
    }
    verdict(11, pass, parts.join("; "))
}

fn criterion_12(lab: &mut Lab) -> Verdict {
    match (gain(lab, 0.03, 10), gain(lab, 0.03, 90)) {
        (Ok((g10, _, _)), Ok((g90, _, _))) => {
            verdict(12, g90 < g10, format!("exp_mean 0.03: gain at N=10 {g10:.1}%, at N=90 {g90:.1}%"))
        }
        (Err(e), _) | (_, Err(e)) => erred(12, e),
    }
}

fn criterion_13(lab: &mut Lab) -> Verdict {
    let gate = BASE_GATE_US;
    let ns = [1u16, 10, 20, 30, 40];
    let mut keys = vec![other(Scheme::A2p, 60)];
    for &n in &ns {
        keys.extend(uora_grid(n));
        keys.extend([sa(n), other(Scheme::A2p, n), other(Scheme::Edca, n)]);
    }
    if let Err(e) = lab.ensure(gate, 0.1, &keys) {
        return erred(13, e);
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for &n in &ns {
        let a2p = lab.delay(gate, 0.1, other(Scheme::A2p, n));
        let best = lab.best(gate, 0.1, &uora_grid(n));
        let rivals = [
            ("SA", lab.delay(gate, 0.1, sa(n))),
            ("UORA", best.mean_delay().unwrap_or(f64::INFINITY)),
            ("EDCA", lab.delay(gate, 0.1, other(Scheme::Edca, n))),
        ];
        let (name, lowest) = rivals.iter().copied().min_by(|a, b| a.1.total_cmp(&b.1)).expect("three rivals");
        let ok = a2p < lowest;
        pass &= ok;
        parts.push(format!("N={n}: A2P {} vs {name} {}{}", ms(a2p), ms(lowest), if ok { "" } else { " FAIL" }));
    }
    let (d40, d60) = (lab.delay(gate, 0.1, other(Scheme::A2p, 40)), lab.delay(gate, 0.1, other(Scheme::A2p, 60)));
    let jump = d60 / d40;
    pass &= jump >= 2.0;
    parts.push(format!("A2P N=60/N=40 = {jump:.2}x"));
    verdict(13, pass, parts.join("; "))
}

fn criterion_14(lab: &mut Lab) -> Verdict {
    let gate = BASE_GATE_US;
    let mut keys = uora_grid(1);
    keys.extend([sa(1), other(Scheme::A2p, 1), other(Scheme::Edca, 1)]);
    if let Err(e) = lab.ensure(gate, 0.1, &keys) {
        return erred(14, e);
    }
    let edca = lab.delay(gate, 0.1, other(Scheme::Edca, 1));
    let (worst_key, worst) = keys
        .iter()
        .filter(|k| k.scheme != Scheme::Edca)
        .map(|&k| (k, lab.delay(gate, 0.1, k)))
        .max_by(|a, b| a.1.total_cmp(&b.1))
        .expect("OFDMA cells");
    verdict(
        14,
        edca > worst,
        format!("N=1: EDCA {} vs slowest OFDMA cell {} ({})", ms(edca), ms(worst), worst_key.file_stem()),
    )
}

fn criterion_15(lab: &mut Lab, base: [bool; 3]) -> Verdict {
    let mut parts = Vec::new();
    let mut same = true;
    for gate in [50_000u64, 200_000] {
        let outcome = [criterion_7(lab, gate).pass, criterion_8(lab, gate).pass, criterion_9(lab, gate).pass];
        same &= outcome == base;
        parts.push(format!("gate {} ms: 7/8/9 = {outcome:?}", gate / 1000));
    }
    parts.push(format!("gate 100 ms: {base:?}"));
    verdict(15, same, parts.join("; "))
}

fn main() -> ExitCode {
    let started = Instant::now();
    let mut verdicts = Vec::new();
    let mut report = |v: Verdict| {
        println!(
            "criterion {:>2} {} [{:>6.1}s] {}",
            v.id,
            if v.pass { "PASS" } else { "FAIL" },
            started.elapsed().as_secs_f64(),
            v.detail
        );
        verdicts.push(v.pass);
    };
    report(criterion_1());
    report(criterion_2());
    let (c3, c5) = criteria_3_and_5();
    report(c3);
    report(criterion_4());
    report(c5);
    report(criterion_6());

    let mut lab = Lab { cells: HashMap::new() };
    let c7 = criterion_7(&mut lab, BASE_GATE_US);
    let c8 = criterion_8(&mut lab, BASE_GATE_US);
    let c9 = criterion_9(&mut lab, BASE_GATE_US);
    let base = [c7.pass, c8.pass, c9.pass];
    report(c7);
    report(c8);
    report(c9);
    report(criterion_10(&mut lab));
    report(criterion_11(&mut lab));
    report(criterion_12(&mut lab));
    report(criterion_13(&mut lab));
    report(criterion_14(&mut lab));
    report(criterion_15(&mut lab, base));

    let passed = verdicts.iter().filter(|p| **p).count();
    println!("acceptance: {passed}/{} criteria passed in {:.0}s", verdicts.len(), started.elapsed().as_secs_f64());
    if passed == verdicts.len() {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
