//! Scenario configuration, seeded repetitions, parameter sweeps and result
//! files.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::edca::EdcaParams;
use crate::error::{Error, Result};
use crate::metrics::{self, DelayStats, RunResult, QUANTILE_CONVENTION};
use crate::phy::{ru_count, PhyConfig, ToneClass};
use crate::traffic::PAYLOAD_BYTES;
use crate::uora::OcwRange;

pub use crate::bss::{run_scenario, run_scenario_traced, RunTrace};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "EDCA")]
    Edca,
    #[serde(rename = "SA_OFDMA")]
    SaOfdma,
    #[serde(rename = "UORA")]
    Uora,
    #[serde(rename = "A2P")]
    A2p,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::Edca, Scheme::SaOfdma, Scheme::Uora, Scheme::A2p];

    pub fn as_str(self) -> &'static str {
        match self {
            Scheme::Edca => "EDCA",
            Scheme::SaOfdma => "SA_OFDMA",
            Scheme::Uora => "UORA",
            Scheme::A2p => "A2P",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().replace('-', "_").as_str() {
            "EDCA" => Ok(Scheme::Edca),
            "SA_OFDMA" | "SA" => Ok(Scheme::SaOfdma),
            "UORA" => Ok(Scheme::Uora),
            "A2P" => Ok(Scheme::A2p),
            _ => Err(Error::config(format!("unknown scheme '{s}'"))),
        }
    }
}

/// Everything one run needs. All fields have defaults, so a config file only
/// lists what it overrides.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioConfig {
    pub scheme: Scheme,
    pub n_stochastic: u16,
    pub n_deterministic: u16,
    pub ra_rus: usize,
    pub ocw_min: u32,
    pub ocw_max: u32,
    /// Mean stochastic inter-arrival time, seconds.
    pub exp_mean: f64,
    /// Simulated time, seconds.
    pub duration: f64,
    pub seed: u64,
    pub payload_bytes: u64,
    pub bandwidth_mhz: u32,
    pub ru_type: ToneClass,
    pub phy: PhyConfig,
    pub edca: EdcaParams,
    /// Access request interval; scheme default when absent.
    pub ari_us: Option<u64>,
    /// MU EDCA timer; scheme default when absent.
    pub mu_edca_timer_us: Option<u64>,
    pub startup_gate_us: u64,
    /// A2P polling-list timeout, TU.
    pub a2p_x_tu: u64,
    /// Drop packets generated during the start-up transient from delay
    /// statistics.
    pub warmup_exclusion: bool,
    /// Random per-STA phase for CBR flows; all zero otherwise.
    pub cbr_random_phase: bool,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        ScenarioConfig {
            scheme: Scheme::Uora,
            n_stochastic: 10,
            n_deterministic: 9,
            ra_rus: 5,
            ocw_min: 7,
            ocw_max: 127,
            exp_mean: 0.1,
            duration: 30.0,
            seed: 1,
            payload_bytes: PAYLOAD_BYTES,
            bandwidth_mhz: 20,
            ru_type: ToneClass::Tone26,
            phy: PhyConfig::default(),
            edca: EdcaParams::VO,
            ari_us: None,
            mu_edca_timer_us: None,
            startup_gate_us: 100_000,
            a2p_x_tu: 8,
            warmup_exclusion: true,
            cbr_random_phase: true,
        }
    }
}

impl ScenarioConfig {
    pub fn for_scheme(scheme: Scheme) -> Self {
        let ra_rus = if scheme == Scheme::Uora { 5 } else { 0 };
        ScenarioConfig { scheme, ra_rus, ..Default::default() }
    }

    pub fn total_rus(&self) -> Result<usize> {
        ru_count(self.bandwidth_mhz, self.ru_type)
    }

    pub fn ari_us(&self) -> u64 {
        self.ari_us.unwrap_or(match self.scheme {
            Scheme::A2p => 128,
            _ => self.phy.sifs_us,
        })
    }

    pub fn mu_edca_timer_us(&self) -> u64 {
        self.mu_edca_timer_us.unwrap_or(match self.scheme {
            Scheme::A2p => self.a2p_x_tu * crate::sim::TU_US,
            _ => (self.duration * 1e6).ceil() as u64,
        })
    }

    pub fn ocw_range(&self) -> Result<OcwRange> {
        OcwRange::from_bounds(self.ocw_min, self.ocw_max)
            .map_err(|e| Error::config(format!("ocw_min/ocw_max: {e}")))
    }

    /// Rejects inconsistent combinations, naming the violated rule.
    pub fn validate(&self) -> Result<()> {
        let total = self.total_rus()?;
        match self.scheme {
            Scheme::SaOfdma if self.ra_rus != 0 => return Err(Error::config("scheme SA_OFDMA requires ra_rus == 0")),
            Scheme::A2p if self.ra_rus != 0 => return Err(Error::config("scheme A2P requires ra_rus == 0")),
            Scheme::Uora if !(1..=total).contains(&self.ra_rus) => {
                return Err(Error::config(format!("scheme UORA requires 1 <= ra_rus <= {total}")))
            }
            Scheme::Edca if self.ra_rus != 0 => return Err(Error::config("scheme EDCA requires ra_rus == 0")),
            _ => {}
        }
        if usize::from(self.n_deterministic) + usize::from(self.n_stochastic) == 0 {
            return Err(Error::config("the BSS needs at least one STA"));
        }
        if usize::from(self.n_deterministic) + usize::from(self.n_stochastic) > 2007 {
            return Err(Error::config("more STAs than assignable AIDs"));
        }
        if !(self.duration.is_finite() && self.duration > 0.0) {
            return Err(Error::config("duration must be positive"));
        }
        if !(self.exp_mean.is_finite() && self.exp_mean > 0.0) {
            return Err(Error::config("exp_mean must be positive"));
        }
        if self.payload_bytes == 0 {
            return Err(Error::config("payload_bytes must be positive"));
        }
        self.ocw_range()?;
        self.edca.validate()?;
        if self.edca.is_disabled() {
            return Err(Error::config("default EDCA parameters must have aifsn > 0"));
        }
        self.phy.validate()?;
        let data = self.phy.tb_data_duration(self.payload_bytes)?;
        let p = &self.phy;
        // BSRP, BSR, BA, Basic TF, data, BA and the SIFS between them.
        let control = 2 * p.trigger_frame_us + p.bsr_us + 2 * p.multi_sta_ba_us + 5 * p.sifs_us;
        if data + control > p.txop_us {
            return Err(Error::config(format!(
                "exchange of {} us (data {data} us + control {control} us) exceeds the {} us TXOP",
                data + control,
                p.txop_us
            )));
        }
        if self.scheme == Scheme::A2p && self.a2p_x_tu == 0 {
            return Err(Error::config("a2p_x_tu must be positive"));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::config(format!("config: {e}")))
    }
}

/// Cell of a sweep grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CellKey {
    pub scheme: Scheme,
    pub n_stochastic: u16,
    pub ra_rus: usize,
    pub ocw_min: u32,
}

impl CellKey {
    pub fn file_stem(&self) -> String {
        format!("{}_N{}_R{}_OCW{}", self.scheme, self.n_stochastic, self.ra_rus, self.ocw_min)
    }
}

/// Seed of one repetition of one cell, independent of which other cells run.
pub fn cell_seed(base_seed: u64, key: &CellKey, run_index: u32) -> u64 {
    let mut h = Sha256::new();
    h.update(base_seed.to_le_bytes());
    h.update(key.scheme.as_str().as_bytes());
    h.update(u64::from(key.n_stochastic).to_le_bytes());
    h.update((key.ra_rus as u64).to_le_bytes());
    h.update(u64::from(key.ocw_min).to_le_bytes());
    h.update(run_index.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("digest has 32 bytes"))
}

/// Mean of the per-run mean delays. `None` if some run has no samples.
pub fn mean_delay(runs: &[RunResult]) -> Option<f64> {
    let per_run: Option<Vec<f64>> = runs.iter().map(RunResult::mean_delay_us).collect();
    metrics::mean(per_run?.into_iter())
}

/// The `ocw_min` with the lowest mean delay; ties go to the smaller value.
pub fn ocw_star(candidates: &[(u32, f64)]) -> Option<u32> {
    candidates
        .iter()
        .copied()
        .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)))
        .map(|(w, _)| w)
}

/// Percentage delay reduction relative to the baseline.
pub fn delay_gain(d_base: f64, d_min: f64) -> Option<f64> {
    (d_base > 0.0 && d_base.is_finite()).then(|| (d_base - d_min) / d_base * 100.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellResult {
    pub key: CellKey,
    pub exp_mean: f64,
    pub runs: Vec<RunResult>,
    /// Box statistics kept after the samples are discarded.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    retained_stats: Option<DelayStats>,
}

impl CellResult {
    pub fn new(key: CellKey, exp_mean: f64, runs: Vec<RunResult>) -> Self {
        CellResult { key, exp_mean, runs, retained_stats: None }
    }

    /// Frees every per-packet sample, keeping the summary statistics.
    pub fn discard_samples(&mut self) {
        if self.runs.iter().all(RunResult::samples_discarded) {
            return;
        }
        self.retained_stats = self.pooled_stats();
        for r in &mut self.runs {
            r.discard_samples();
        }
    }

    pub fn per_run_mean_delay(&self) -> Vec<Option<f64>> {
        self.runs.iter().map(RunResult::mean_delay_us).collect()
    }

    pub fn mean_delay(&self) -> Option<f64> {
        mean_delay(&self.runs)
    }

    /// Standard deviation of the per-run mean delays.
    pub fn delay_std(&self) -> Option<f64> {
        let v: Option<Vec<f64>> = self.per_run_mean_delay().into_iter().collect();
        metrics::std_dev(&v?)
    }

    /// Standard error of [`mean_delay`](Self::mean_delay).
    pub fn delay_se(&self) -> Option<f64> {
        Some(self.delay_std()? / (self.runs.len() as f64).sqrt())
    }

    pub fn throughput_pps(&self) -> f64 {
        metrics::mean(self.runs.iter().map(RunResult::throughput_pps)).unwrap_or(0.0)
    }

    /// Box-plot statistics over the samples of all runs.
    pub fn pooled_stats(&self) -> Option<DelayStats> {
        if self.runs.iter().any(RunResult::samples_discarded) {
            return self.retained_stats;
        }
        let v: Vec<f64> =
            self.runs.iter().flat_map(|r| r.delay_samples.iter().map(|s| s.delay_us as f64)).collect();
        metrics::delay_stats(&v)
    }
}

/// Combined standard error of the difference of two cell means.
pub fn pooled_se(a: &CellResult, b: &CellResult) -> Option<f64> {
    Some((a.delay_se()?.powi(2) + b.delay_se()?.powi(2)).sqrt())
}

/// Grid description. Schemes without random access ignore `ra_rus` and
/// `ocw_mins`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSpec {
    pub schemes: Vec<Scheme>,
    pub n_stochastic: Vec<u16>,
    pub ra_rus: Vec<usize>,
    pub ocw_mins: Vec<u32>,
    pub exp_means: Vec<f64>,
    /// Per-scheme cap on N, e.g. A2P plotted only up to 60.
    pub n_max: BTreeMap<Scheme, u16>,
    pub runs: u32,
    pub base: ScenarioConfig,
}

impl Default for SweepSpec {
    fn default() -> Self {
        SweepSpec {
            schemes: vec![Scheme::SaOfdma, Scheme::Uora],
            n_stochastic: N_GRID.to_vec(),
            ra_rus: R_GRID.to_vec(),
            ocw_mins: OCW_GRID.to_vec(),
            exp_means: vec![0.1],
            n_max: BTreeMap::new(),
            runs: 10,
            base: ScenarioConfig::default(),
        }
    }
}

pub const N_GRID: [u16; 10] = [1, 10, 20, 30, 40, 50, 60, 70, 80, 90];
pub const R_GRID: [usize; 5] = [1, 3, 5, 7, 9];
pub const OCW_GRID: [u32; 7] = [0, 1, 3, 7, 15, 31, 63];
pub const EXP_MEAN_GRID: [f64; 6] = [0.03, 0.05, 0.1, 0.3, 0.5, 1.0];

pub const PRESETS: [&str; 5] = ["delay", "throughput", "gain", "full", "smoke"];

impl SweepSpec {
    /// Named grids: `delay` (all schemes at 0.1 s), `throughput` (same cells),
    /// `gain` (SA vs UORA over every exponential mean), `full` (everything)
    /// and `smoke` (a handful of short cells).
    pub fn preset(name: &str, base: ScenarioConfig, runs: u32) -> Result<Self> {
        let mut n_max = BTreeMap::new();
        n_max.insert(Scheme::A2p, 60);
        n_max.insert(Scheme::Edca, 1);
        let all = Scheme::ALL.to_vec();
        let spec = match name {
            "delay" | "throughput" => SweepSpec { schemes: all, exp_means: vec![0.1], n_max, runs, base, ..Default::default() },
            "gain" => SweepSpec {
                schemes: vec![Scheme::SaOfdma, Scheme::Uora],
                exp_means: EXP_MEAN_GRID.to_vec(),
                runs,
                base,
                ..Default::default()
            },
            "full" => SweepSpec { schemes: all, exp_means: EXP_MEAN_GRID.to_vec(), n_max, runs, base, ..Default::default() },
            "smoke" => SweepSpec {
                schemes: all,
                n_stochastic: vec![1, 10],
                ra_rus: vec![3],
                ocw_mins: vec![7],
                exp_means: vec![0.1],
                n_max: BTreeMap::new(),
                runs,
                base: ScenarioConfig { duration: base.duration.min(1.0), ..base },
            },
            other => {
                return Err(Error::config(format!("unknown sweep preset '{other}' (known: {})", PRESETS.join(", "))))
            }
        };
        Ok(spec)
    }

    /// Every (exp_mean, cell) pair, in output order.
    pub fn cells(&self) -> Vec<(f64, CellKey)> {
        let mut out = Vec::new();
        for &m in &self.exp_means {
            for &scheme in &self.schemes {
                let cap = self.n_max.get(&scheme).copied().unwrap_or(u16::MAX);
                for &n in self.n_stochastic.iter().filter(|&&n| n <= cap) {
                    if scheme == Scheme::Uora {
                        for &r in &self.ra_rus {
                            for &w in &self.ocw_mins {
                                out.push((m, CellKey { scheme, n_stochastic: n, ra_rus: r, ocw_min: w }));
                            }
                        }
                    } else {
                        out.push((m, CellKey { scheme, n_stochastic: n, ra_rus: 0, ocw_min: self.base.ocw_min }));
                    }
                }
            }
        }
        out
    }

    pub fn config_for(&self, exp_mean: f64, key: &CellKey, run_index: u32) -> ScenarioConfig {
        ScenarioConfig {
            scheme: key.scheme,
            n_stochastic: key.n_stochastic,
            ra_rus: key.ra_rus,
            ocw_min: key.ocw_min,
            exp_mean,
            seed: cell_seed(self.base.seed, key, run_index),
            ..self.base.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.runs == 0 {
            return Err(Error::config("runs must be at least 1"));
        }
        for (m, key) in self.cells() {
            self.config_for(m, &key, 0).validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub spec: SweepSpec,
    pub cells: Vec<CellResult>,
}

/// Runs every repetition of every cell; repetitions execute in parallel and
/// are merged back in grid order.
pub fn run_sweep(spec: &SweepSpec) -> Result<SweepResult> {
    spec.validate()?;
    let cells = run_cells(&spec.base, spec.runs, &spec.cells())?;
    Ok(SweepResult { spec: spec.clone(), cells })
}

/// Runs `runs` repetitions of each listed cell on top of `base`, with the
/// same per-run seeds a grid sweep would use.
pub fn run_cells(base: &ScenarioConfig, runs: u32, cells: &[(f64, CellKey)]) -> Result<Vec<CellResult>> {
    run_cells_with(base, runs, cells, |_| Ok(()))
}

/// Cells simulated together before `on_cell` sees them; bounds how many
/// sample sets are alive at once.
const CHUNK_CELLS: usize = 16;

/// Like [`run_cells`], handing each finished cell to `on_cell` (in grid
/// order) before it is stored, so callers can write out and discard samples.
pub fn run_cells_with<F>(base: &ScenarioConfig, runs: u32, cells: &[(f64, CellKey)], mut on_cell: F) -> Result<Vec<CellResult>>
where
    F: FnMut(&mut CellResult) -> Result<()>,
{
    let spec = SweepSpec { runs, base: base.clone(), ..Default::default() };
    let mut out = Vec::with_capacity(cells.len());
    for chunk in cells.chunks(CHUNK_CELLS) {
        let jobs: Vec<(usize, u32)> = (0..chunk.len()).flat_map(|c| (0..runs).map(move |r| (c, r))).collect();
        let results: Vec<Result<RunResult>> = jobs
            .par_iter()
            .map(|&(c, r)| {
                let (m, key) = chunk[c];
                run_scenario(&spec.config_for(m, &key, r))
            })
            .collect();
        let mut done: Vec<CellResult> = chunk.iter().map(|&(m, key)| CellResult::new(key, m, Vec::new())).collect();
        for (&(c, _), res) in jobs.iter().zip(results) {
            done[c].runs.push(res?);
        }
        for mut cell in done {
            on_cell(&mut cell)?;
            out.push(cell);
        }
    }
    Ok(out)
}

/// Runs a sweep, writing each cell's samples under `dir` as soon as the cell
/// finishes and keeping only summary statistics in memory. Pair with
/// [`SweepResult::emit_tables`].
pub fn run_sweep_streaming(spec: &SweepSpec, dir: &Path) -> Result<SweepResult> {
    spec.validate()?;
    let cells = run_cells_with(&spec.base, spec.runs, &spec.cells(), |cell| {
        write_samples(dir, cell)?;
        cell.discard_samples();
        Ok(())
    })?;
    Ok(SweepResult { spec: spec.clone(), cells })
}

fn samples_path(dir: &Path, cell: &CellResult) -> PathBuf {
    dir.join(format!("exp_mean_{}", cell.exp_mean)).join(format!("{}_samples.csv", cell.key.file_stem()))
}

fn write_samples(dir: &Path, cell: &CellResult) -> Result<PathBuf> {
    let path = samples_path(dir, cell);
    if let Some(parent) = path.parent() {
        mkdir(parent)?;
    }
    write_file(&path, &SweepResult::samples_csv(cell))
}

/// One row of the delay-gain table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainRow {
    pub exp_mean: f64,
    pub n_stochastic: u16,
    pub d_base_us: f64,
    pub d_min_us: f64,
    pub best_ra_rus: usize,
    pub best_ocw_min: u32,
    pub gain_pct: Option<f64>,
    /// Standard deviation across runs of the per-run gain.
    pub gain_std_pct: Option<f64>,
}

impl SweepResult {
    pub fn cell(&self, exp_mean: f64, key: &CellKey) -> Option<&CellResult> {
        self.cells.iter().find(|c| c.key == *key && c.exp_mean == exp_mean)
    }

    /// Cells excluded from derived metrics, with the reason.
    pub fn diagnostics(&self) -> Vec<String> {
        self.cells
            .iter()
            .filter(|c| c.mean_delay().is_none())
            .map(|c| format!("{} exp_mean {}: a run delivered no stochastic packets", c.key.file_stem(), c.exp_mean))
            .collect()
    }

    /// Best `ocw_min` for each (exp_mean, N, R) among UORA cells.
    pub fn ocw_star(&self, exp_mean: f64, n: u16, r: usize) -> Option<u32> {
        let cands: Vec<(u32, f64)> = self
            .cells
            .iter()
            .filter(|c| c.key.scheme == Scheme::Uora && c.exp_mean == exp_mean && c.key.n_stochastic == n && c.key.ra_rus == r)
            .filter_map(|c| Some((c.key.ocw_min, c.mean_delay()?)))
            .collect();
        ocw_star(&cands)
    }

    pub fn gain_table(&self) -> Vec<GainRow> {
        let mut rows = Vec::new();
        for base in self.cells.iter().filter(|c| c.key.scheme == Scheme::SaOfdma) {
            let Some(d_base) = base.mean_delay() else { continue };
            let best = self
                .cells
                .iter()
                .filter(|c| c.key.scheme == Scheme::Uora && c.exp_mean == base.exp_mean && c.key.n_stochastic == base.key.n_stochastic)
                .filter_map(|c| Some((c, c.mean_delay()?)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.key.cmp(&b.0.key)));
            let Some((best, d_min)) = best else { continue };
            let per_run: Option<Vec<f64>> = base
                .per_run_mean_delay()
                .into_iter()
                .zip(best.per_run_mean_delay())
                .map(|(b, m)| delay_gain(b?, m?))
                .collect();
            rows.push(GainRow {
                exp_mean: base.exp_mean,
                n_stochastic: base.key.n_stochastic,
                d_base_us: d_base,
                d_min_us: d_min,
                best_ra_rus: best.key.ra_rus,
                best_ocw_min: best.key.ocw_min,
                gain_pct: delay_gain(d_base, d_min),
                gain_std_pct: per_run.and_then(|v| metrics::std_dev(&v)),
            });
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutputFormat {
    Csv,
    Json,
}

impl FromStr for OutputFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(OutputFormat::Csv),
            "json" => Ok(OutputFormat::Json),
            _ => Err(Error::config(format!("unknown output format '{s}'"))),
        }
    }
}

pub const SUMMARY_HEADER: &str = "scheme,n_stochastic,ra_rus,ocw_min,exp_mean,seed_base,t_runs,mean_delay_us,median_delay_us,q1_us,q3_us,min_us,max_us,throughput_pps";
pub const SAMPLES_HEADER: &str = "run_index,packet_id,source_aid,generated_at_us,delivered_at_us,delay_us";
pub const GAIN_HEADER: &str = "exp_mean,n_stochastic,d_base_us,d_min_us,best_ra_rus,best_ocw_min,gain_pct,gain_std_pct";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub scheme: Scheme,
    pub n_stochastic: u16,
    pub ra_rus: usize,
    pub ocw_min: u32,
    pub exp_mean: f64,
    pub seed_base: u64,
    pub t_runs: usize,
    pub mean_delay_us: Option<f64>,
    pub median_delay_us: Option<f64>,
    pub q1_us: Option<f64>,
    pub q3_us: Option<f64>,
    pub min_us: Option<f64>,
    pub max_us: Option<f64>,
    pub throughput_pps: f64,
    pub mean_delay_std_us: Option<f64>,
    pub per_run_mean_delay_us: Vec<Option<f64>>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| format!("{x:.3}"))
}

impl SweepResult {
    pub fn summary_rows(&self) -> Vec<SummaryRow> {
        self.cells
            .iter()
            .map(|c| {
                let s = c.pooled_stats();
                SummaryRow {
                    scheme: c.key.scheme,
                    n_stochastic: c.key.n_stochastic,
                    ra_rus: c.key.ra_rus,
                    ocw_min: c.key.ocw_min,
                    exp_mean: c.exp_mean,
                    seed_base: self.spec.base.seed,
                    t_runs: c.runs.len(),
                    mean_delay_us: c.mean_delay(),
                    median_delay_us: s.map(|s| s.median),
                    q1_us: s.map(|s| s.q1),
                    q3_us: s.map(|s| s.q3),
                    min_us: s.map(|s| s.min),
                    max_us: s.map(|s| s.max),
                    throughput_pps: c.throughput_pps(),
                    mean_delay_std_us: c.delay_std(),
                    per_run_mean_delay_us: c.per_run_mean_delay(),
                }
            })
            .collect()
    }

    pub fn summary_csv(&self) -> String {
        let mut s = String::from(SUMMARY_HEADER);
        s.push('\n');
        for r in self.summary_rows() {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{},{},{},{},{:.3}\n",
                r.scheme,
                r.n_stochastic,
                r.ra_rus,
                r.ocw_min,
                r.exp_mean,
                r.seed_base,
                r.t_runs,
                opt(r.mean_delay_us),
                opt(r.median_delay_us),
                opt(r.q1_us),
                opt(r.q3_us),
                opt(r.min_us),
                opt(r.max_us),
                r.throughput_pps
            ));
        }
        s
    }

    pub fn gain_csv(&self) -> String {
        let mut s = String::from(GAIN_HEADER);
        s.push('\n');
        for g in self.gain_table() {
            s.push_str(&format!(
                "{},{},{:.3},{:.3},{},{},{},{}\n",
                g.exp_mean,
                g.n_stochastic,
                g.d_base_us,
                g.d_min_us,
                g.best_ra_rus,
                g.best_ocw_min,
                opt(g.gain_pct),
                opt(g.gain_std_pct)
            ));
        }
        s
    }

    pub fn samples_csv(cell: &CellResult) -> String {
        let mut s = String::from(SAMPLES_HEADER);
        s.push('\n');
        for (i, run) in cell.runs.iter().enumerate() {
            for d in &run.delay_samples {
                s.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    i, d.packet_id.0, d.source_aid, d.generated_at_us, d.delivered_at_us, d.delay_us
                ));
            }
        }
        s
    }

    fn metadata(&self) -> serde_json::Value {
        serde_json::json!({
            "quantile_convention": QUANTILE_CONVENTION,
            "mean_delay": "mean over runs of the per-run mean delay",
            "duration_s": self.spec.base.duration,
            "startup_gate_us": self.spec.base.startup_gate_us,
            "warmup_exclusion": self.spec.base.warmup_exclusion,
            "t_runs": self.spec.runs,
            "seed_base": self.spec.base.seed,
            "base_config": self.spec.base,
        })
    }

    /// Writes summary, gain table and metadata under `dir`.
    pub fn emit_tables(&self, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = Vec::new();
        mkdir(dir)?;
        match format {
            OutputFormat::Csv => {
                written.push(write_file(&dir.join("summary.csv"), &self.summary_csv())?);
                written.push(write_file(&dir.join("gain.csv"), &self.gain_csv())?);
            }
            OutputFormat::Json => {
                let summary = serde_json::to_string_pretty(&self.summary_rows())?;
                written.push(write_file(&dir.join("summary.json"), &summary)?);
                let gain = serde_json::to_string_pretty(&self.gain_table())?;
                written.push(write_file(&dir.join("gain.json"), &gain)?);
            }
        }
        written.push(write_file(&dir.join("metadata.json"), &serde_json::to_string_pretty(&self.metadata())?)?);
        Ok(written)
    }

    /// Writes the tables plus one samples CSV per cell. Cells whose samples
    /// were discarded are skipped.
    pub fn emit(&self, format: OutputFormat, dir: &Path) -> Result<Vec<PathBuf>> {
        let mut written = self.emit_tables(format, dir)?;
        for c in self.cells.iter().filter(|c| !c.runs.iter().any(RunResult::samples_discarded)) {
            written.push(write_samples(dir, c)?);
        }
        Ok(written)
    }
}

fn mkdir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|source| Error::Io { path: dir.display().to_string(), source })
}

fn write_file(path: &Path, contents: &str) -> Result<PathBuf> {
    let io = |source| Error::Io { path: path.display().to_string(), source };
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(contents.as_bytes()).map_err(io)?;
    Ok(path.to_path_buf())
}
