use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use uora_sim::harness::{run_sweep_streaming, OutputFormat, ScenarioConfig, Scheme, SweepSpec};
use uora_sim::Error;

/// Simulates uplink access schemes in a single Wi-Fi 6 BSS and writes delay
/// and throughput results.
#[derive(Debug, Parser)]
#[command(name = "uora-sim", version)]
struct Args {
    /// Comma-separated schemes: EDCA, SA_OFDMA, UORA, A2P.
    #[arg(long, value_delimiter = ',')]
    scheme: Vec<String>,
    /// Comma-separated numbers of stochastic STAs.
    #[arg(long, value_delimiter = ',')]
    n_stochastic: Vec<u16>,
    /// Comma-separated numbers of random-access RUs (UORA only).
    #[arg(long, value_delimiter = ',')]
    ra_rus: Vec<usize>,
    /// Comma-separated OCW minimums (UORA only), each 2^k - 1.
    #[arg(long, value_delimiter = ',')]
    ocw_min: Vec<u32>,
    /// Comma-separated mean inter-arrival times of stochastic traffic, seconds.
    #[arg(long, value_delimiter = ',')]
    exp_mean: Vec<f64>,
    /// Simulated seconds per run.
    #[arg(long)]
    duration: Option<f64>,
    /// Repetitions per cell.
    #[arg(long, default_value_t = 10)]
    runs: u32,
    /// Base seed; per-run seeds are derived from it.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// csv or json.
    #[arg(long, default_value = "csv")]
    format: String,
    /// JSON scenario file; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Named grid: delay, throughput, gain, full, smoke.
    #[arg(long)]
    sweep: Option<String>,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Config(_) | Error::Serde(_) => 2,
        e if e.is_runtime_breach() => 3,
        _ => 1,
    }
}

fn build_spec(args: &Args) -> Result<SweepSpec, Error> {
    let mut base = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|source| Error::Io { path: path.display().to_string(), source })?;
            ScenarioConfig::from_json(&text)?
        }
        None => ScenarioConfig::default(),
    };
    if let Some(d) = args.duration {
        base.duration = d;
    }
    if let Some(s) = args.seed {
        base.seed = s;
    }
    let mut spec = match &args.sweep {
        Some(name) => SweepSpec::preset(name, base.clone(), args.runs)?,
        None => {
            let schemes = if args.scheme.is_empty() {
                vec![base.scheme]
            } else {
                args.scheme.iter().map(|s| s.parse()).collect::<Result<Vec<Scheme>, _>>()?
            };
            SweepSpec {
                schemes,
                n_stochastic: vec![base.n_stochastic],
                ra_rus: vec![base.ra_rus],
                ocw_mins: vec![base.ocw_min],
                exp_means: vec![base.exp_mean],
                n_max: BTreeMap::new(),
                runs: args.runs,
                base: base.clone(),
            }
        }
    };
    if !args.scheme.is_empty() {
        spec.schemes = args.scheme.iter().map(|s| s.parse()).collect::<Result<Vec<Scheme>, _>>()?;
    }
    if !args.n_stochastic.is_empty() {
        spec.n_stochastic = args.n_stochastic.clone();
    }
    if !args.ra_rus.is_empty() {
        spec.ra_rus = args.ra_rus.clone();
    }
    if !args.ocw_min.is_empty() {
        spec.ocw_mins = args.ocw_min.clone();
    }
    if !args.exp_mean.is_empty() {
        spec.exp_means = args.exp_mean.clone();
    }
    Ok(spec)
}

fn run(args: &Args) -> Result<(), Error> {
    let format: OutputFormat = args.format.parse()?;
    let spec = build_spec(args)?;
    let sweep = run_sweep_streaming(&spec, &args.out)?;
    let tables = sweep.emit_tables(format, &args.out)?;
    for row in sweep.summary_rows() {
        let d = row.mean_delay_us.map_or_else(|| "n/a".to_string(), |d| format!("{:.1} us", d));
        println!(
            "{:<8} N={:<3} R={} OCW={:<3} exp_mean={:<5} mean_delay={:<12} throughput={:.1} pkt/s",
            row.scheme, row.n_stochastic, row.ra_rus, row.ocw_min, row.exp_mean, d, row.throughput_pps
        );
    }
    for d in sweep.diagnostics() {
        eprintln!("excluded: {d}");
    }
    eprintln!("wrote {} tables and {} sample files under {}", tables.len(), sweep.cells.len(), args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match run(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
