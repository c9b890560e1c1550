//! Command-line front end: single-channel comparisons, capacity-region
//! boundaries, two-unidirectional heatmaps, OFDM power-allocation solvers,
//! and SNR sweeps, emitted as CSV or JSON for downstream plotting.
//!
//! Exit codes: 0 success, 2 usage error, 3 input-data error, 4 numeric
//! failure. `FD_RATER_THREADS` caps solver parallelism.

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use fd_rater::*;

#[derive(Parser)]
#[command(
    name = "fd-rater",
    version,
    about = "Full-duplex wireless rate gains and joint power/canceller-placement optimization"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Compare FD against TDD on a single channel and report the
    /// capacity-region extension
    Single(SingleArgs),
    /// Emit the FD capacity-region boundary as CSV, normalized by the TDD
    /// maxima
    Capregion(CapregionArgs),
    /// Capacity-extension heatmap for two unidirectional links over an SNR
    /// grid with path-loss-consistent inter-node interference
    TwoUni(TwoUniArgs),
    /// Jointly optimize per-channel powers and the canceller position for an
    /// OFDM link
    Multiopt(MultioptArgs),
    /// Closed-form high-SINR allocation (equal BS split, centered canceller)
    Hsinr(HsinrArgs),
    /// Sum rate and extension versus average SNR for several channel counts
    /// and allocation policies
    Sweep(SweepArgs),
}

#[derive(Args)]
struct SingleArgs {
    /// Uplink SNR at full MS power, dB
    #[arg(long, allow_negative_numbers = true)]
    snr_ul_db: f64,
    /// Downlink SNR at full BS power, dB
    #[arg(long, allow_negative_numbers = true)]
    snr_dl_db: f64,
    /// BS residual self-interference to noise at full power, linear
    #[arg(long, default_value_t = 0.0)]
    xinr_bs: f64,
    /// MS residual self-interference to noise at full power, linear
    #[arg(long, default_value_t = 0.0)]
    xinr_ms: f64,
}

#[derive(Args)]
struct CapregionArgs {
    #[arg(long, allow_negative_numbers = true)]
    snr_ul_db: f64,
    #[arg(long, allow_negative_numbers = true)]
    snr_dl_db: f64,
    #[arg(long, default_value_t = 0.0)]
    xinr_bs: f64,
    #[arg(long, default_value_t = 0.0)]
    xinr_ms: f64,
    /// Boundary points per sweep direction
    #[arg(long, default_value_t = 101)]
    points: usize,
    /// Write the CSV here instead of stdout
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TwoUniArgs {
    /// Path-loss exponent
    #[arg(long, default_value_t = 4.0)]
    eta: f64,
    /// Inter-MS distance as a fraction of the two hop distances
    #[arg(long, default_value_t = 1.0)]
    rho: f64,
    /// Uplink SNR at the reference distance, dB
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    gamma_m1b_max_db: f64,
    /// Downlink SNR at the reference distance, dB
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    gamma_bm2_max_db: f64,
    /// Inter-node INR at the reference distance, dB
    #[arg(long, default_value_t = 20.0, allow_negative_numbers = true)]
    gamma_m1m2_max_db: f64,
    /// BS residual self-interference to noise at full power, linear
    #[arg(long, default_value_t = 1.0)]
    xinr_bs: f64,
    /// Lower edge of both swept SNR axes, dB
    #[arg(long, default_value_t = -10.0, allow_negative_numbers = true)]
    min_db: f64,
    /// Grid points per axis
    #[arg(long, default_value_t = 25)]
    steps: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct MultioptArgs {
    /// Number of OFDM channels
    #[arg(long)]
    k: usize,
    /// Average per-channel SNR at the equal power split, dB
    #[arg(long, allow_negative_numbers = true)]
    gamma_avg_db: f64,
    /// MS canceller profile: `model` for the calibrated quadratic model or
    /// `trace:PATH` for a measured isolation trace
    #[arg(long, default_value = "model")]
    sic: String,
    /// Absolute sum-rate error budget of the canceller grid search
    #[arg(long, default_value_t = 0.23)]
    epsilon: f64,
    /// Extra digital cancellation applied to a trace profile, dB
    #[arg(long, default_value_t = 50.0)]
    digital_sic_db: f64,
    /// Canceller retuning center used to re-anchor a trace profile, Hz
    #[arg(long, default_value_t = 2.14e9)]
    center_freq_hz: f64,
    /// OFDM channel width, Hz
    #[arg(long, default_value_t = 600e3)]
    channel_width_hz: f64,
    /// Randomized restarts of the alternating solver
    #[arg(long, default_value_t = 1)]
    multi_start: usize,
    /// Also write the per-channel allocation as CSV
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct HsinrArgs {
    #[arg(long)]
    k: usize,
    #[arg(long, allow_negative_numbers = true)]
    gamma_avg_db: f64,
    /// Share-sum tolerance of the binary search
    #[arg(long, default_value_t = 1e-6)]
    epsilon: f64,
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Channel counts to sweep
    #[arg(long, value_delimiter = ',', default_value = "9,17,33")]
    k_list: Vec<usize>,
    /// Average SNR grid, dB
    #[arg(
        long,
        value_delimiter = ',',
        default_value = "0,10,20,30,40,50",
        allow_hyphen_values = true
    )]
    gamma_avg_db_list: Vec<f64>,
    #[arg(long, default_value_t = 0.23)]
    epsilon: f64,
    /// Scale each allocation so the combined MS+BS transmit power matches the
    /// single-station TDD budget
    #[arg(long, default_value_t = false)]
    normalize_total_power: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

enum CliError {
    Input(String),
    Numeric(String),
}

impl From<TraceError> for CliError {
    fn from(e: TraceError) -> Self {
        CliError::Input(e.to_string())
    }
}

impl From<SolveError> for CliError {
    fn from(e: SolveError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<HsinrError> for CliError {
    fn from(e: HsinrError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        CliError::Numeric(e.to_string())
    }
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("FD_RATER_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Single(args) => run_single(args),
        Command::Capregion(args) => run_capregion(args),
        Command::TwoUni(args) => run_two_uni(args),
        Command::Multiopt(args) => run_multiopt(args),
        Command::Hsinr(args) => run_hsinr(args),
        Command::Sweep(args) => run_sweep(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Input(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
        Err(CliError::Numeric(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(4)
        }
    }
}

/// 12 significant digits, locale-independent; keeps CSV output byte-stable.
fn sig12(x: f64) -> String {
    format!("{x:.11e}")
}

fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

fn emit(out: &Option<PathBuf>, content: &str) -> Result<(), CliError> {
    match out {
        Some(path) => fs::write(path, content)
            .map_err(|e| CliError::Input(format!("cannot write {}: {e}", path.display()))),
        None => std::io::stdout()
            .write_all(content.as_bytes())
            .map_err(|e| CliError::Input(format!("cannot write to stdout: {e}"))),
    }
}

/// Normalized stations for the dB-level single-channel commands: unit noise
/// and power, gains carrying the SNRs, flat residuals carrying the XINRs.
fn stations_from_flags(
    snr_ul_db: f64,
    snr_dl_db: f64,
    xinr_bs: f64,
    xinr_ms: f64,
) -> (StationParams, StationParams, f64, f64) {
    let bs = StationParams::new(1.0, 1.0, SicProfile::Flat { g: xinr_bs });
    let ms = StationParams::new(1.0, 1.0, SicProfile::Flat { g: xinr_ms });
    (bs, ms, db_to_linear(snr_ul_db), db_to_linear(snr_dl_db))
}

fn run_single(args: SingleArgs) -> Result<(), CliError> {
    let (bs, ms, h_mb, h_bm) =
        stations_from_flags(args.snr_ul_db, args.snr_dl_db, args.xinr_bs, args.xinr_ms);
    let out = single_channel_optimum(&bs, &ms, h_mb, h_bm);
    let p = capacity_extension_p(h_bm, h_mb, args.xinr_ms, args.xinr_bs)
        .map_err(|e| CliError::Numeric(e.to_string()))?;
    let winner = match out.winner {
        DuplexWinner::FullDuplex => "FD",
        DuplexWinner::TddUplink => "TDD_UL",
        DuplexWinner::TddDownlink => "TDD_DL",
    };
    println!("fd_sum_rate_bps_hz: {}", sig12(out.fd_sum_rate));
    println!("tdd_ul_max_bps_hz: {}", sig12(out.tdd_ul_max));
    println!("tdd_dl_max_bps_hz: {}", sig12(out.tdd_dl_max));
    println!("winner: {winner}");
    println!("extension_p: {}", sig12(p));
    Ok(())
}

fn run_capregion(args: CapregionArgs) -> Result<(), CliError> {
    if args.points < 2 {
        return Err(CliError::Input("--points must be at least 2".into()));
    }
    let (bs, ms, h_mb, h_bm) =
        stations_from_flags(args.snr_ul_db, args.snr_dl_db, args.xinr_bs, args.xinr_ms);
    let boundary = trace_capacity_boundary(&bs, &ms, h_mb, h_bm, args.points);
    let tdd_ul = (1.0 + h_mb).log2();
    let tdd_dl = (1.0 + h_bm).log2();
    let mut csv = String::from("r_dl_norm,r_ul_norm\n");
    for pt in &boundary {
        csv.push_str(&format!(
            "{},{}\n",
            sig12(pt.r_dl / tdd_dl),
            sig12(pt.r_ul / tdd_ul)
        ));
    }
    emit(&args.out, &csv)
}

fn run_two_uni(args: TwoUniArgs) -> Result<(), CliError> {
    if args.steps < 2 {
        return Err(CliError::Input("--steps must be at least 2".into()));
    }
    let geom = TwoUniGeometry::new(
        args.eta,
        args.rho,
        db_to_linear(args.gamma_m1b_max_db),
        db_to_linear(args.gamma_bm2_max_db),
        db_to_linear(args.gamma_m1m2_max_db),
    );
    let bs = StationParams::new(1.0, 1.0, SicProfile::Flat { g: args.xinr_bs });
    let axis = |max_db: f64| -> Vec<f64> {
        (0..args.steps)
            .map(|i| args.min_db + (max_db - args.min_db) * i as f64 / (args.steps - 1) as f64)
            .collect()
    };
    let ul_db = axis(args.gamma_m1b_max_db);
    let dl_db = axis(args.gamma_bm2_max_db);
    let ul_lin: Vec<f64> = ul_db.iter().map(|&d| db_to_linear(d)).collect();
    let dl_lin: Vec<f64> = dl_db.iter().map(|&d| db_to_linear(d)).collect();
    let map = two_uni_extension_map(&geom, &bs, &ul_lin, &dl_lin);
    let mut csv = String::from("gamma_m1b_db,gamma_bm2_db,p\n");
    for (i, row) in map.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            csv.push_str(&format!(
                "{},{},{}\n",
                sig12(ul_db[i]),
                sig12(dl_db[j]),
                sig12(p)
            ));
        }
    }
    emit(&args.out, &csv)
}

#[derive(Serialize)]
struct AllocationOut {
    c: f64,
    p_b: Vec<f64>,
    p_m: Vec<f64>,
    rate: f64,
}

fn allocation_csv(link: &LinkInstance, alloc: &Allocation) -> Result<String, CliError> {
    let rates = per_channel_rates(link, alloc)?;
    let mut csv = String::from("channel,p_b,p_m,rate_ul,rate_dl\n");
    for (i, (ul, dl)) in rates.iter().enumerate() {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            sig12(alloc.p_b[i]),
            sig12(alloc.p_m[i]),
            sig12(*ul),
            sig12(*dl)
        ));
    }
    Ok(csv)
}

fn evaluation_link(args_k: usize, gamma_avg_db: f64) -> Result<LinkInstance, CliError> {
    if args_k == 0 {
        return Err(CliError::Input("--k must be positive".into()));
    }
    Ok(calibrate_evaluation(args_k, gamma_avg_db))
}

fn run_multiopt(args: MultioptArgs) -> Result<(), CliError> {
    let mut link = evaluation_link(args.k, args.gamma_avg_db)?;
    match args.sic.as_str() {
        "model" => {}
        other => {
            let path = other.strip_prefix("trace:").ok_or_else(|| {
                CliError::Input(format!(
                    "--sic must be `model` or `trace:PATH`, got `{other}`"
                ))
            })?;
            let trace = load_trace(std::path::Path::new(path))?;
            link.ms.sic = to_profile(
                &trace,
                args.center_freq_hz,
                args.digital_sic_db,
                args.channel_width_hz,
            )?;
        }
    }
    let opts = SolveOptions {
        epsilon: args.epsilon,
        multi_start: args.multi_start.max(1),
        ..SolveOptions::default()
    };
    let (alloc, rate) = maximum_rate(&link, &opts)?;
    let json = serde_json::to_string_pretty(&AllocationOut {
        c: alloc.c,
        p_b: alloc.p_b.clone(),
        p_m: alloc.p_m.clone(),
        rate,
    })
    .expect("serializing allocation");
    println!("{json}");
    if let Some(csv_path) = &args.csv {
        let csv = allocation_csv(&link, &alloc)?;
        emit(&Some(csv_path.clone()), &csv)?;
    }
    Ok(())
}

fn run_hsinr(args: HsinrArgs) -> Result<(), CliError> {
    if args.epsilon <= 0.0 {
        return Err(CliError::Input("--epsilon must be positive".into()));
    }
    let link = evaluation_link(args.k, args.gamma_avg_db)?;
    let alloc = hsinr_maximum_rate(&link, args.epsilon)?;
    let rate = fd_sum_rate(&link, &alloc)?;
    let json = serde_json::to_string_pretty(&AllocationOut {
        c: alloc.c,
        p_b: alloc.p_b.clone(),
        p_m: alloc.p_m.clone(),
        rate,
    })
    .expect("serializing allocation");
    println!("{json}");
    if let Some(csv_path) = &args.csv {
        let csv = allocation_csv(&link, &alloc)?;
        emit(&Some(csv_path.clone()), &csv)?;
    }
    Ok(())
}

/// Optionally rescale an allocation so the combined transmit power equals the
/// single-station TDD budget, then report its rates.
fn policy_report(
    link: &LinkInstance,
    alloc: &Allocation,
    normalize: bool,
) -> Result<RateReport, CliError> {
    let report_alloc = if normalize {
        let total: f64 = alloc.p_b.iter().sum::<f64>() + alloc.p_m.iter().sum::<f64>();
        if total > 0.0 {
            let s = link.bs.p_max.max(link.ms.p_max) / total;
            Allocation {
                p_b: alloc.p_b.iter().map(|&p| p * s).collect(),
                p_m: alloc.p_m.iter().map(|&p| p * s).collect(),
                c: alloc.c,
            }
        } else {
            alloc.clone()
        }
    } else {
        alloc.clone()
    };
    Ok(sum_rate_multi(link, &report_alloc)?)
}

fn run_sweep(args: SweepArgs) -> Result<(), CliError> {
    if args.k_list.is_empty() || args.gamma_avg_db_list.is_empty() {
        return Err(CliError::Input("sweep lists must be non-empty".into()));
    }
    let mut csv = String::from("k,gamma_avg_db,policy,sum_rate,extension_p\n");
    for &k in &args.k_list {
        for &gamma_db in &args.gamma_avg_db_list {
            let link = evaluation_link(k, gamma_db)?;
            let opts = SolveOptions {
                epsilon: args.epsilon,
                ..SolveOptions::default()
            };
            let optimized = if k >= 2 {
                maximum_rate(&link, &opts)?.0
            } else {
                let cons = build_constraints(&link, 1.0)?;
                solve_fixed_c(&link, 1.0, &cons, &opts)?.0
            };
            let hsinr = hsinr_maximum_rate(&link, 1e-6)?;
            let equal = Allocation {
                p_b: vec![link.bs.p_max / k as f64; k],
                p_m: vec![link.ms.p_max / k as f64; k],
                c: (k as f64 + 1.0) / 2.0,
            };
            for (name, alloc) in [
                ("optimized", &optimized),
                ("hsinr", &hsinr),
                ("equal", &equal),
            ] {
                let report = policy_report(&link, alloc, args.normalize_total_power)?;
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    k,
                    sig12(gamma_db),
                    name,
                    sig12(report.sum_rate),
                    sig12(report.extension_p)
                ));
            }
        }
    }
    emit(&args.out, &csv)
}
