//! `biscale`: sketch-partitioned wavelet-leader scaling analysis of packet
//! traces, one subcommand per pipeline stage plus an `analyze` command that
//! runs the whole thing and emits a self-contained JSON report.
//!
//! Option resolution for `analyze`, highest priority first: explicit flags,
//! then a `--config` TOML file, then the `BISCALE_SEED` environment variable
//! (seed only), then built-in defaults. The built-ins reproduce the reference
//! measurement setup: 0.125 ms bins, db3, gamma 1, 2^4 sub-traces keyed on
//! source IP, fine octaves 4..10, coarse 12..18, 499 bootstrap resamples.
//!
//! Exit status: 0 on success, 1 on any error, 2 when `--require-biscaling`
//! is set and the primary diagram does not show a scaling frontier.

mod input;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use biscale_core::aggregate::{
    aggregate, aggregate_with_duration, write_samples, write_series, write_series_csv,
};
use biscale_core::analyze::{run_analyze, run_report, AnalysisConfig, ReportFormat};
use biscale_core::estimate::{
    bootstrap_ci, find_frontier, fit_scaling, BootstrapSource, DEFAULT_SLOPE_GATE,
};
use biscale_core::flows::{
    build_flows_with_timeout, fisher_ci, karn_rtt, partial_correlations, rtt_partition,
    tail_index, FlowRecord, DEFAULT_FLOW_TIMEOUT, DEFAULT_TAIL_QUANTILES,
};
use biscale_core::ingest::{write_csv, write_pcap};
use biscale_core::leaders::{compute_leaders, cumulants, leader_structure_fn, DEFAULT_GAMMA};
use biscale_core::sketch::{partition, HashKey};
use biscale_core::synth::{
    generate, AnomalySpec, GeneratorKind, GeneratorSpec, Length, SynthOutput,
};
use biscale_core::wavelet::{dwt, structure_fn, DEFAULT_N_MIN};
use biscale_core::analyze::AnalysisInput;
use biscale_core::{AnalysisReport, FrontierOutcome, LdKind, LogscaleDiagram, Wavelet};

use input::{emit_json, load_analysis_input, load_packets, materialize};

#[derive(Parser)]
#[command(
    name = "biscale",
    version,
    about = "Biscaling analysis of packet traces via sketched wavelet leaders",
    propagate_version = true
)]
struct Cli {
    /// Worker threads for sub-trace analysis (default: all cores).
    /// Results are merged by index, so the output does not depend on this.
    #[arg(long, global = true)]
    jobs: Option<usize>,

    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Bin a packet trace into counts at a fixed resolution
    Aggregate(AggregateArgs),
    /// Split a trace into 2^m hash-keyed sub-trace count series
    Sketch(SketchArgs),
    /// Compute one logscale diagram from a trace or series
    Ld(LdArgs),
    /// Fit a scaling exponent over an octave range
    Estimate(EstimateArgs),
    /// Locate the fine/coarse scaling frontier in a diagram
    Frontier(FrontierArgs),
    /// Fit the flow-size tail index from a packet trace
    Tail(TailArgs),
    /// Karn-style RTT sampling and RTT-class partitioning
    Rtt(RttArgs),
    /// Partial correlations among scale statistics across reports
    Corr(CorrArgs),
    /// Generate synthetic traffic with known scaling behavior
    Synth(SynthArgs),
    /// Run the full pipeline and write a JSON report
    Analyze(AnalyzeArgs),
    /// Project a report to plot-ready CSV or gnuplot files
    Report(ReportArgs),
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KeyArg {
    /// Source address
    Src,
    /// Destination address
    Dst,
    /// Source/destination pair
    Pair,
}

impl From<KeyArg> for HashKey {
    fn from(k: KeyArg) -> HashKey {
        match k {
            KeyArg::Src => HashKey::SrcIp,
            KeyArg::Dst => HashKey::DstIp,
            KeyArg::Pair => HashKey::SrcDstPair,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum KindArg {
    /// log2 of mean squared coefficients (slope maps to H)
    Sd,
    /// First log-leader cumulant (slope/ln2 is c1)
    C1,
    /// Second log-leader cumulant (slope/ln2 is c2)
    C2,
    /// Third log-leader cumulant (slope/ln2 is c3)
    C3,
    /// log2 of mean q-th power of leaders (slope is zeta(q))
    Sl,
}

impl KindArg {
    fn to_kind(self, q: f64) -> LdKind {
        match self {
            KindArg::Sd => LdKind::Log2Sd,
            KindArg::C1 => LdKind::C1,
            KindArg::C2 => LdKind::C2,
            KindArg::C3 => LdKind::C3,
            KindArg::Sl => LdKind::Log2Sl(q),
        }
    }
}

/// "a:b" -> (a, b), ascending octaves.
fn parse_range(s: &str) -> Result<(u32, u32)> {
    let (a, b) = s
        .split_once(':')
        .with_context(|| format!("range {s:?} is not of the form j1:j2"))?;
    let j1: u32 = a.trim().parse().with_context(|| format!("bad octave {a:?}"))?;
    let j2: u32 = b.trim().parse().with_context(|| format!("bad octave {b:?}"))?;
    if j1 >= j2 {
        bail!("range {s:?} must be ascending");
    }
    Ok((j1, j2))
}

/// "db3" (or bare "3") -> 3 vanishing moments.
fn parse_wavelet(s: &str) -> Result<u32> {
    let digits = s.strip_prefix("db").or_else(|| s.strip_prefix("DB")).unwrap_or(s);
    let n: u32 = digits
        .parse()
        .with_context(|| format!("wavelet {s:?}: expected dbN, e.g. db3"))?;
    Wavelet::daubechies(n).map(|_| n).map_err(Into::into)
}

fn wavelet_of(n: u32) -> Result<Wavelet> {
    Wavelet::daubechies(n).map_err(Into::into)
}

// ---------------------------------------------------------------------------
// aggregate

#[derive(Args)]
struct AggregateArgs {
    /// Packet trace: pcap or packet CSV; "-" reads stdin
    #[arg(long)]
    input: String,
    /// Tolerate malformed CSV rows instead of failing
    #[arg(long)]
    lenient: bool,
    /// Bin width in milliseconds
    #[arg(long = "delta0-ms", default_value_t = 0.125)]
    delta0_ms: f64,
    /// Fix the series length to this many seconds (complete bins only)
    #[arg(long)]
    duration: Option<f64>,
    /// Output series: .bin (binary) or .csv by extension; "-" writes
    /// binary to stdout
    #[arg(long, default_value = "-")]
    out: String,
}

fn cmd_aggregate(a: &AggregateArgs) -> Result<u8> {
    let (packets, stats) = load_packets(&a.input, a.lenient)?;
    let delta0 = a.delta0_ms / 1000.0;
    let series = match a.duration {
        Some(d) => aggregate_with_duration(&packets, delta0, d)?,
        None => aggregate(&packets, delta0)?,
    };
    if let Some(st) = stats {
        if st.parse_failures > 0 {
            eprintln!("note: {} malformed records skipped on ingest", st.parse_failures);
        }
    }
    eprintln!(
        "{} packets -> {} bins of {} ms",
        packets.len(),
        series.counts.len(),
        a.delta0_ms
    );
    write_series_out(&series, &a.out)
}

/// Writes a series to a path (.csv by extension, binary otherwise) or to
/// stdout in binary form for piping.
fn write_series_out(series: &biscale_core::BinnedSeries, out: &str) -> Result<u8> {
    if out == "-" {
        let tmp = tempfile::NamedTempFile::new()?;
        write_series(tmp.path(), series)?;
        spool_to_stdout(tmp.path())?;
    } else if out.ends_with(".csv") {
        write_series_csv(out, series)?;
    } else {
        write_series(out, series)?;
    }
    Ok(0)
}

fn spool_to_stdout(path: &Path) -> Result<()> {
    let mut f = std::fs::File::open(path)?;
    std::io::copy(&mut f, &mut std::io::stdout().lock())?;
    Ok(())
}

// ---------------------------------------------------------------------------
// sketch

#[derive(Args)]
struct SketchArgs {
    /// Packet trace: pcap or packet CSV; "-" reads stdin
    #[arg(long)]
    input: String,
    #[arg(long)]
    lenient: bool,
    /// Sketch depth: the trace splits into 2^m sub-traces
    #[arg(long, default_value_t = 4)]
    m: u32,
    /// Flow key the sketch hashes
    #[arg(long, value_enum, default_value_t = KeyArg::Src)]
    key: KeyArg,
    /// Seed for the tabulation hash
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Bin width in milliseconds
    #[arg(long = "delta0-ms", default_value_t = 0.125)]
    delta0_ms: f64,
    /// Directory for global.bin and sketch-NN.bin series
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
    /// Write CSV series instead of binary
    #[arg(long)]
    csv: bool,
}

fn cmd_sketch(a: &SketchArgs) -> Result<u8> {
    let (packets, _) = load_packets(&a.input, a.lenient)?;
    let part = partition(&packets, a.m, a.key.into(), a.seed, a.delta0_ms / 1000.0)?;
    std::fs::create_dir_all(&a.out_dir)
        .with_context(|| format!("creating {}", a.out_dir.display()))?;
    let ext = if a.csv { "csv" } else { "bin" };
    let write_one = |series: &biscale_core::BinnedSeries| -> Result<()> {
        let path = a.out_dir.join(format!("{}.{}", series.label, ext));
        if a.csv {
            write_series_csv(&path, series)?;
        } else {
            write_series(&path, series)?;
        }
        println!("{}", path.display());
        Ok(())
    };
    write_one(&part.global())?;
    for sub in &part.subtraces {
        write_one(sub)?;
    }
    eprintln!(
        "sketched {} packets into {} sub-traces (m={}, seed={})",
        packets.len(),
        part.subtraces.len(),
        a.m,
        a.seed
    );
    Ok(0)
}

// ---------------------------------------------------------------------------
// ld

#[derive(Args)]
struct LdArgs {
    /// Trace or series input; "-" reads stdin
    #[arg(long)]
    input: String,
    #[arg(long)]
    lenient: bool,
    /// Which diagram to compute
    #[arg(long, value_enum, default_value_t = KindArg::Sd)]
    kind: KindArg,
    /// Moment order for --kind sl
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    /// Analyzing wavelet (Daubechies family)
    #[arg(long, default_value = "db3")]
    wavelet: String,
    /// Leader concavity weight 2^(gamma j)
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    /// Coarsest octave keeps at least this many coefficients
    #[arg(long, default_value_t = DEFAULT_N_MIN)]
    nmin: usize,
    /// Bin width in milliseconds, used when the input is packets
    #[arg(long = "delta0-ms", default_value_t = 0.125)]
    delta0_ms: f64,
    /// Output JSON path (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Any input down to (delta0, samples) for the transform.
fn input_samples(input: &str, lenient: bool, delta0_ms: f64) -> Result<(f64, Vec<f64>)> {
    match load_analysis_input(input, lenient)? {
        AnalysisInput::Packets(p) => {
            let s = aggregate(&p, delta0_ms / 1000.0)?;
            Ok((s.delta0, s.samples()))
        }
        AnalysisInput::Counts(s) => Ok((s.delta0, s.samples())),
        AnalysisInput::Samples { delta0, values } => Ok((delta0, values)),
    }
}

fn cmd_ld(a: &LdArgs) -> Result<u8> {
    let (delta0, samples) = input_samples(&a.input, a.lenient, a.delta0_ms)?;
    let moments = parse_wavelet(&a.wavelet)?;
    let pyr = dwt(&samples, delta0, wavelet_of(moments)?, a.nmin)?;
    let ld: LogscaleDiagram = match a.kind {
        KindArg::Sd => structure_fn(&pyr),
        KindArg::Sl => {
            let lp = compute_leaders(&pyr, a.gamma)?;
            leader_structure_fn(&lp, a.q)?
        }
        c => {
            let lp = compute_leaders(&pyr, a.gamma)?;
            let order = c.to_kind(a.q).cumulant_order().unwrap();
            cumulants(&lp, order)
                .pop()
                .context("no octave had enough leaders for that cumulant")?
        }
    };
    emit_json(&ld, a.out.as_deref())?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// estimate

#[derive(Args)]
struct EstimateArgs {
    /// Fit a stored diagram (biscale ld output)
    #[arg(long, conflicts_with = "input")]
    ld: Option<PathBuf>,
    /// Or compute the diagram from this trace/series first
    #[arg(long)]
    input: Option<String>,
    #[arg(long)]
    lenient: bool,
    #[arg(long, value_enum, default_value_t = KindArg::Sd)]
    kind: KindArg,
    #[arg(long, default_value_t = 2.0)]
    q: f64,
    /// Fit range, finest octave
    #[arg(long)]
    j1: u32,
    /// Fit range, coarsest octave
    #[arg(long)]
    j2: u32,
    /// Bootstrap resamples for the CI; 0 keeps the analytic WLS interval.
    /// Only available with --input (resampling needs the coefficients)
    #[arg(long, default_value_t = 0)]
    bootstrap: u32,
    /// Bootstrap resampling seed
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value = "db3")]
    wavelet: String,
    #[arg(long, default_value_t = DEFAULT_GAMMA)]
    gamma: f64,
    #[arg(long, default_value_t = DEFAULT_N_MIN)]
    nmin: usize,
    #[arg(long = "delta0-ms", default_value_t = 0.125)]
    delta0_ms: f64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_estimate(a: &EstimateArgs) -> Result<u8> {
    let est = match (&a.ld, &a.input) {
        (Some(path), None) => {
            if a.bootstrap > 0 {
                bail!("--bootstrap needs --input: a stored diagram has no coefficients to resample");
            }
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let ld: LogscaleDiagram = serde_json::from_str(&text)
                .with_context(|| format!("{} is not a logscale diagram", path.display()))?;
            fit_scaling(&ld, a.j1, a.j2)?
        }
        (None, Some(input)) => {
            let (delta0, samples) = input_samples(input, a.lenient, a.delta0_ms)?;
            let moments = parse_wavelet(&a.wavelet)?;
            let pyr = dwt(&samples, delta0, wavelet_of(moments)?, a.nmin)?;
            let kind = a.kind.to_kind(a.q);
            if a.bootstrap > 0 {
                match a.kind {
                    KindArg::Sd => bootstrap_ci(
                        BootstrapSource::Coeffs(&pyr),
                        kind,
                        a.j1,
                        a.j2,
                        a.bootstrap,
                        a.seed,
                    )?,
                    _ => {
                        let lp = compute_leaders(&pyr, a.gamma)?;
                        bootstrap_ci(
                            BootstrapSource::Leaders(&lp),
                            kind,
                            a.j1,
                            a.j2,
                            a.bootstrap,
                            a.seed,
                        )?
                    }
                }
            } else {
                let ld = match a.kind {
                    KindArg::Sd => structure_fn(&pyr),
                    KindArg::Sl => leader_structure_fn(&compute_leaders(&pyr, a.gamma)?, a.q)?,
                    c => {
                        let lp = compute_leaders(&pyr, a.gamma)?;
                        let order = c.to_kind(a.q).cumulant_order().unwrap();
                        cumulants(&lp, order)
                            .pop()
                            .context("no octave had enough leaders for that cumulant")?
                    }
                };
                fit_scaling(&ld, a.j1, a.j2)?
            }
        }
        _ => bail!("exactly one of --ld or --input is required"),
    };
    emit_json(&est, a.out.as_deref())?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// frontier

#[derive(Args)]
struct FrontierArgs {
    /// Stored diagram (biscale ld output)
    #[arg(long)]
    ld: PathBuf,
    /// Fine-scale octave range, e.g. 4:10
    #[arg(long, value_parser = parse_range)]
    fs: (u32, u32),
    /// Coarse-scale octave range, e.g. 12:18
    #[arg(long, value_parser = parse_range)]
    cs: (u32, u32),
    /// Slope-separation gate in standard errors
    #[arg(long, default_value_t = DEFAULT_SLOPE_GATE)]
    gate: f64,
    /// Exit 2 when the diagram is monoscaling
    #[arg(long = "require-biscaling")]
    require_biscaling: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn cmd_frontier(a: &FrontierArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&a.ld)
        .with_context(|| format!("reading {}", a.ld.display()))?;
    let ld: LogscaleDiagram = serde_json::from_str(&text)
        .with_context(|| format!("{} is not a logscale diagram", a.ld.display()))?;
    let outcome = find_frontier(&ld, a.fs, a.cs, a.gate)?;
    let mono = matches!(outcome, FrontierOutcome::Monoscaling { .. });
    emit_json(&outcome, a.out.as_deref())?;
    Ok(if mono && a.require_biscaling { 2 } else { 0 })
}

// ---------------------------------------------------------------------------
// tail

#[derive(Args)]
struct TailArgs {
    /// Packet trace: pcap or packet CSV; "-" reads stdin
    #[arg(long)]
    input: String,
    #[arg(long)]
    lenient: bool,
    /// Lower quantile of the flow-size tail window
    #[arg(long, default_value_t = DEFAULT_TAIL_QUANTILES.0)]
    qlo: f64,
    /// Upper quantile of the flow-size tail window
    #[arg(long, default_value_t = DEFAULT_TAIL_QUANTILES.1)]
    qhi: f64,
    /// Idle seconds that split a five-tuple into separate flows
    #[arg(long, default_value_t = DEFAULT_FLOW_TIMEOUT)]
    timeout: f64,
    /// Also export the flow table as CSV
    #[arg(long = "flows-csv")]
    flows_csv: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn write_flows_csv(path: &Path, flows: &[FlowRecord]) -> Result<()> {
    use std::io::Write;
    let f = std::fs::File::create(path)
        .with_context(|| format!("creating {}", path.display()))?;
    let mut w = std::io::BufWriter::new(f);
    writeln!(
        w,
        "src_ip,src_port,dst_ip,dst_port,protocol,first_ts,last_ts,packets,bytes,rtt_samples,rtt_median"
    )?;
    for fl in flows {
        let k = &fl.key;
        let median = fl.rtt_median.map(|m| m.to_string()).unwrap_or_default();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{},{},{},{}",
            k.src_ip,
            k.src_port,
            k.dst_ip,
            k.dst_port,
            k.protocol,
            fl.first_ts,
            fl.last_ts,
            fl.packet_count,
            fl.byte_count,
            fl.rtt_samples.len(),
            median
        )?;
    }
    w.flush()?;
    Ok(())
}

fn cmd_tail(a: &TailArgs) -> Result<u8> {
    let (packets, _) = load_packets(&a.input, a.lenient)?;
    let flows = build_flows_with_timeout(&packets, a.timeout);
    if let Some(path) = &a.flows_csv {
        write_flows_csv(path, &flows)?;
        eprintln!("{} flows -> {}", flows.len(), path.display());
    }
    let sizes: Vec<f64> = flows.iter().map(|f| f.byte_count as f64).collect();
    let est = tail_index(&sizes, a.qlo, a.qhi)?;
    emit_json(&est, a.out.as_deref())?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// rtt

#[derive(Args)]
struct RttArgs {
    /// Packet trace: pcap or packet CSV; "-" reads stdin
    #[arg(long)]
    input: String,
    #[arg(long)]
    lenient: bool,
    /// Number of equal-count RTT classes
    #[arg(long, default_value_t = 4)]
    classes: usize,
    /// Bin width in milliseconds for the class count series
    #[arg(long = "delta0-ms", default_value_t = 0.125)]
    delta0_ms: f64,
    /// Also export the flow table (with RTT medians) as CSV
    #[arg(long = "flows-csv")]
    flows_csv: Option<PathBuf>,
    /// Directory for per-class count series (rtt-class-N.bin)
    #[arg(long = "series-dir")]
    series_dir: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Serialize)]
struct RttClassOut {
    label: String,
    j_r: f64,
    j_m: f64,
    n_flows: usize,
    median_rtt: f64,
    n_bins: usize,
    total_packets: u64,
}

#[derive(Serialize)]
struct RttOut {
    delta0: f64,
    n_flows: usize,
    n_rtt_flows: usize,
    boundaries: Vec<f64>,
    classes: Vec<RttClassOut>,
}

fn cmd_rtt(a: &RttArgs) -> Result<u8> {
    let (packets, _) = load_packets(&a.input, a.lenient)?;
    let flows = karn_rtt(&packets);
    if let Some(path) = &a.flows_csv {
        write_flows_csv(path, &flows)?;
        eprintln!("{} flows -> {}", flows.len(), path.display());
    }
    let delta0 = a.delta0_ms / 1000.0;
    let part = rtt_partition(&packets, &flows, a.classes, delta0)?;
    if let Some(dir) = &a.series_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        for class in &part.classes {
            let path = dir.join(format!("{}.bin", class.series.label));
            write_series(&path, &class.series)?;
            eprintln!("wrote {}", path.display());
        }
    }
    let out = RttOut {
        delta0,
        n_flows: flows.len(),
        n_rtt_flows: flows.iter().filter(|f| f.rtt_median.is_some()).count(),
        boundaries: part.boundaries.clone(),
        classes: part
            .classes
            .iter()
            .map(|c| RttClassOut {
                label: c.series.label.clone(),
                j_r: c.j_r,
                j_m: c.j_m,
                n_flows: c.n_flows,
                median_rtt: c.median_rtt,
                n_bins: c.series.counts.len(),
                total_packets: c.series.total(),
            })
            .collect(),
    };
    emit_json(&out, a.out.as_deref())?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// corr

#[derive(Args)]
struct CorrArgs {
    /// Analysis reports (biscale analyze output), one observation each
    #[arg(required = true)]
    reports: Vec<PathBuf>,
    /// Comma-separated variables: jr, jm, jf, h, c1, c2
    #[arg(long, default_value = "jr,jm,jf,h")]
    vars: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, PartialEq, Eq)]
enum CorrVar {
    Jr,
    Jm,
    Jf,
    H,
    C1,
    C2,
}

impl CorrVar {
    fn parse(s: &str) -> Result<CorrVar> {
        Ok(match s.trim().to_ascii_lowercase().as_str() {
            "jr" | "j_r" => CorrVar::Jr,
            "jm" | "j_m" => CorrVar::Jm,
            "jf" | "j_f" => CorrVar::Jf,
            "h" => CorrVar::H,
            "c1" | "c_1" => CorrVar::C1,
            "c2" | "c_2" => CorrVar::C2,
            other => bail!("unknown variable {other:?} (expected jr, jm, jf, h, c1, c2)"),
        })
    }

    fn name(self) -> &'static str {
        match self {
            CorrVar::Jr => "jr",
            CorrVar::Jm => "jm",
            CorrVar::Jf => "jf",
            CorrVar::H => "h",
            CorrVar::C1 => "c1",
            CorrVar::C2 => "c2",
        }
    }
}

fn median_of(mut xs: Vec<f64>) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    xs.sort_by(|a, b| a.total_cmp(b));
    let n = xs.len();
    Some(if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    })
}

/// One variable from one report; Err carries the reason it is missing.
fn extract_var(report: &AnalysisReport, var: CorrVar) -> Result<f64, String> {
    // Estimates come from the median branch when sketching ran, else global.
    let branch = report.median.as_ref().unwrap_or(&report.global);
    match var {
        CorrVar::Jr | CorrVar::Jm => {
            let rtt = report.rtt.as_ref().ok_or("no RTT section (run with --rtt)")?;
            let vals: Vec<f64> = rtt
                .classes
                .iter()
                .map(|c| if var == CorrVar::Jr { c.j_r } else { c.j_m })
                .collect();
            median_of(vals).ok_or_else(|| "RTT section has no classes".to_string())
        }
        CorrVar::Jf => match report.primary_frontier() {
            Some(FrontierOutcome::Biscaling { j_f, .. }) => Ok(*j_f),
            Some(FrontierOutcome::Monoscaling { .. }) => {
                Err("monoscaling: no frontier octave".to_string())
            }
            None => Err("no frontier fit in the report".to_string()),
        },
        CorrVar::H => branch
            .cs
            .h
            .as_ref()
            .map(|e| e.value)
            .ok_or_else(|| "no coarse-range H fit".to_string()),
        CorrVar::C1 => branch
            .cs
            .c1
            .as_ref()
            .map(|e| e.value)
            .ok_or_else(|| "no coarse-range c1 fit".to_string()),
        CorrVar::C2 => branch
            .cs
            .c2
            .as_ref()
            .map(|e| e.value)
            .ok_or_else(|| "no coarse-range c2 fit".to_string()),
    }
}

#[derive(Serialize)]
struct PairStat {
    a: String,
    b: String,
    r: f64,
    ci_low: f64,
    ci_high: f64,
}

#[derive(Serialize)]
struct CorrOut {
    vars: Vec<String>,
    n_obs: usize,
    n_dropped: usize,
    direct: Vec<Vec<f64>>,
    partial: Vec<Vec<f64>>,
    direct_pairs: Vec<PairStat>,
    partial_pairs: Vec<PairStat>,
}

fn cmd_corr(a: &CorrArgs) -> Result<u8> {
    let vars: Vec<CorrVar> = a
        .vars
        .split(',')
        .map(CorrVar::parse)
        .collect::<Result<_>>()?;
    if vars.len() < 2 {
        bail!("need at least two variables");
    }
    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); vars.len()];
    let mut dropped = 0usize;
    for path in &a.reports {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let report: AnalysisReport = serde_json::from_str(&text)
            .with_context(|| format!("{} is not an analysis report", path.display()))?;
        let row: Result<Vec<f64>, (CorrVar, String)> = vars
            .iter()
            .map(|&v| extract_var(&report, v).map_err(|e| (v, e)))
            .collect();
        match row {
            Ok(values) => {
                for (col, v) in columns.iter_mut().zip(values) {
                    col.push(v);
                }
            }
            Err((v, reason)) => {
                eprintln!("note: dropping {}: {}: {}", path.display(), v.name(), reason);
                dropped += 1;
            }
        }
    }
    let corr = partial_correlations(&columns)?;
    let names: Vec<String> = vars.iter().map(|v| v.name().to_string()).collect();
    let mut direct_pairs = Vec::new();
    let mut partial_pairs = Vec::new();
    for i in 0..vars.len() {
        for j in (i + 1)..vars.len() {
            let (dl, dh) = fisher_ci(corr.direct[i][j], corr.n_obs, 0);
            direct_pairs.push(PairStat {
                a: names[i].clone(),
                b: names[j].clone(),
                r: corr.direct[i][j],
                ci_low: dl,
                ci_high: dh,
            });
            let (pl, ph) = fisher_ci(corr.partial[i][j], corr.n_obs, vars.len() - 2);
            partial_pairs.push(PairStat {
                a: names[i].clone(),
                b: names[j].clone(),
                r: corr.partial[i][j],
                ci_low: pl,
                ci_high: ph,
            });
        }
    }
    let out = CorrOut {
        vars: names,
        n_obs: corr.n_obs,
        n_dropped: dropped,
        direct: corr.direct,
        partial: corr.partial,
        direct_pairs,
        partial_pairs,
    };
    emit_json(&out, a.out.as_deref())?;
    Ok(0)
}

// ---------------------------------------------------------------------------
// synth

#[derive(Args)]
struct SynthArgs {
    #[command(subcommand)]
    gen: GenCmd,
}

#[derive(Args)]
struct SynthCommon {
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Bin width in milliseconds (annotation for sample outputs)
    #[arg(long = "delta0-ms", default_value_t = 0.125)]
    delta0_ms: f64,
    /// Output path; "-" streams binary series (or pcap) to stdout
    #[arg(long, default_value = "-")]
    out: String,
    /// Ground-truth sidecar path (default: OUT.truth.json for file output)
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Skip the ground-truth sidecar
    #[arg(long = "no-truth")]
    no_truth: bool,
}

#[derive(Subcommand)]
enum GenCmd {
    /// Fractional Gaussian noise with Hurst exponent H
    Fgn {
        /// Hurst exponent in (0, 1)
        #[arg(long, alias = "h")]
        hurst: f64,
        /// Sample count
        #[arg(long)]
        n: usize,
        #[command(flatten)]
        common: SynthCommon,
    },
    /// Multiplicative log-normal cascade with cumulants (c1, c2)
    Cascade {
        #[arg(long, allow_hyphen_values = true)]
        c1: f64,
        #[arg(long, allow_hyphen_values = true)]
        c2: f64,
        /// Cascade depth; output has 2^depth samples
        #[arg(long)]
        depth: u32,
        #[command(flatten)]
        common: SynthCommon,
    },
    /// Superposed On/Off sources with Pareto sojourns (counts or packets)
    Onoff {
        /// Pareto tail index of the On and Off periods
        #[arg(long)]
        alpha: f64,
        /// Number of superposed sources
        #[arg(long, default_value_t = 500)]
        sources: u32,
        /// Mean On-period length in seconds
        #[arg(long = "mean-on", default_value_t = 0.5)]
        mean_on: f64,
        /// Mean Off-period length in seconds
        #[arg(long = "mean-off", default_value_t = 1.0)]
        mean_off: f64,
        /// Packet rate during On periods, packets per second
        #[arg(long, default_value_t = 200.0)]
        rate: f64,
        /// Trace duration in seconds
        #[arg(long)]
        duration: f64,
        /// Emit per-packet records instead of a count series
        #[arg(long)]
        packets: bool,
        /// Overlay a periodic single-source probe train (implies --packets)
        #[arg(long)]
        anomaly: bool,
        /// Anomaly probe spacing in seconds
        #[arg(long = "anomaly-spacing")]
        anomaly_spacing: Option<f64>,
        /// Probes per burst
        #[arg(long = "anomaly-burst")]
        anomaly_burst: Option<u32>,
        /// Seconds between burst starts
        #[arg(long = "anomaly-period")]
        anomaly_period: Option<f64>,
        /// Probe packet size in bytes
        #[arg(long = "anomaly-size")]
        anomaly_size: Option<u32>,
        /// First burst start time in seconds
        #[arg(long = "anomaly-start")]
        anomaly_start: Option<f64>,
        #[command(flatten)]
        common: SynthCommon,
    },
    /// Homogeneous Poisson arrivals (a null with no long-range dependence)
    Poisson {
        /// Arrival rate in packets per second
        #[arg(long)]
        rate: f64,
        /// Trace duration in seconds
        #[arg(long)]
        duration: f64,
        #[command(flatten)]
        common: SynthCommon,
    },
}

fn cmd_synth(a: &SynthArgs) -> Result<u8> {
    let (spec, common, force_packets) = match &a.gen {
        GenCmd::Fgn { hurst, n, common } => (
            GeneratorSpec {
                kind: GeneratorKind::Fgn { h: *hurst },
                length: Length::Samples(*n),
                seed: common.seed,
            },
            common,
            false,
        ),
        GenCmd::Cascade { c1, c2, depth, common } => (
            GeneratorSpec {
                kind: GeneratorKind::Cascade { c1: *c1, c2: *c2, depth: *depth },
                length: Length::Samples(1usize << depth),
                seed: common.seed,
            },
            common,
            false,
        ),
        GenCmd::Onoff {
            alpha,
            sources,
            mean_on,
            mean_off,
            rate,
            duration,
            packets,
            anomaly,
            anomaly_spacing,
            anomaly_burst,
            anomaly_period,
            anomaly_size,
            anomaly_start,
            common,
        } => {
            let base = GeneratorKind::OnOff {
                alpha: *alpha,
                n_sources: *sources,
                mean_on: *mean_on,
                mean_off: *mean_off,
                rate_on: *rate,
            };
            let kind = if *anomaly {
                let mut schedule = AnomalySpec::default();
                if let Some(v) = anomaly_spacing {
                    schedule.spacing = *v;
                }
                if let Some(v) = anomaly_burst {
                    schedule.burst_len = *v;
                }
                if let Some(v) = anomaly_period {
                    schedule.burst_period = *v;
                }
                if let Some(v) = anomaly_size {
                    schedule.size = *v;
                }
                if let Some(v) = anomaly_start {
                    schedule.start = *v;
                }
                GeneratorKind::AnomalyOverlay { base: Box::new(base), schedule }
            } else {
                base
            };
            (
                GeneratorSpec {
                    kind,
                    length: Length::Duration(*duration),
                    seed: common.seed,
                },
                common,
                *packets,
            )
        }
        GenCmd::Poisson { rate, duration, common } => (
            GeneratorSpec {
                kind: GeneratorKind::Poisson { rate: *rate },
                length: Length::Duration(*duration),
                seed: common.seed,
            },
            common,
            false,
        ),
    };

    let delta0 = common.delta0_ms / 1000.0;
    // --packets without an anomaly: generate the same On/Off process at
    // packet granularity rather than as bin counts.
    let output = if force_packets && !matches!(spec.kind, GeneratorKind::AnomalyOverlay { .. }) {
        let GeneratorKind::OnOff { alpha, n_sources, mean_on, mean_off, rate_on } = spec.kind
        else {
            unreachable!("--packets is an on/off flag");
        };
        let Length::Duration(d) = spec.length else {
            unreachable!("on/off length is a duration");
        };
        let (packets, flows) = biscale_core::synth::gen_onoff_packets(
            alpha, n_sources, mean_on, mean_off, rate_on, d, spec.seed,
        )?;
        SynthOutput::Packets { packets, flows }
    } else {
        generate(&spec, delta0)?
    };

    match &output {
        SynthOutput::Samples { delta0, values } => {
            if common.out == "-" {
                let tmp = tempfile::NamedTempFile::new()?;
                write_samples(tmp.path(), *delta0, values)?;
                spool_to_stdout(tmp.path())?;
            } else {
                write_samples(&common.out, *delta0, values)?;
            }
            eprintln!("{} samples at {} ms", values.len(), delta0 * 1000.0);
        }
        SynthOutput::Counts { series, flows } => {
            write_series_out(series, &common.out)?;
            eprintln!(
                "{} bins at {} ms ({} ground-truth flows)",
                series.counts.len(),
                series.delta0 * 1000.0,
                flows.len()
            );
        }
        SynthOutput::Packets { packets, flows } => {
            if common.out == "-" {
                let tmp = tempfile::NamedTempFile::new()?;
                write_pcap(tmp.path(), packets)?;
                spool_to_stdout(tmp.path())?;
            } else if common.out.ends_with(".csv") {
                write_csv(&common.out, packets)?;
            } else {
                write_pcap(&common.out, packets)?;
            }
            eprintln!(
                "{} packets ({} ground-truth flows)",
                packets.len(),
                flows.len()
            );
        }
    }

    if !common.no_truth {
        let truth_path = match (&common.truth, common.out.as_str()) {
            (Some(p), _) => Some(p.clone()),
            (None, "-") => None,
            (None, out) => Some(PathBuf::from(format!("{out}.truth.json"))),
        };
        if let Some(path) = truth_path {
            let mut body = serde_json::to_string_pretty(&spec)?;
            body.push('\n');
            std::fs::write(&path, body)
                .with_context(|| format!("writing {}", path.display()))?;
            eprintln!("ground truth -> {}", path.display());
        }
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// analyze

#[derive(Args)]
struct AnalyzeArgs {
    /// Input: pcap, packet CSV, binned series (.bin/.csv), or samples;
    /// "-" reads stdin
    #[arg(long)]
    input: String,
    #[arg(long)]
    lenient: bool,
    /// TOML config file; explicit flags override its values
    #[arg(long)]
    config: Option<PathBuf>,
    /// Finest bin width in milliseconds [built-in default: 0.125]
    #[arg(long = "delta0-ms")]
    delta0_ms: Option<f64>,
    /// Sketch depth: 2^m sub-traces; 0 analyzes the global trace only
    /// [built-in default: 4]
    #[arg(long)]
    m: Option<u32>,
    /// Flow key the sketch hashes [built-in default: src]
    #[arg(long, value_enum)]
    key: Option<KeyArg>,
    /// Hash and bootstrap seed [built-in default: 1; env: BISCALE_SEED]
    #[arg(long)]
    seed: Option<u64>,
    /// Analyzing wavelet [built-in default: db3]
    #[arg(long)]
    wavelet: Option<String>,
    /// Leader concavity weight exponent [built-in default: 1]
    #[arg(long)]
    gamma: Option<f64>,
    /// Minimum coefficients per octave [built-in default: 8]
    #[arg(long)]
    nmin: Option<usize>,
    /// Fine-scale fit range, e.g. 4:10 [built-in default: 4:10]
    #[arg(long, value_parser = parse_range)]
    fs: Option<(u32, u32)>,
    /// Coarse-scale fit range, e.g. 12:18 [built-in default: 12:18]
    #[arg(long, value_parser = parse_range)]
    cs: Option<(u32, u32)>,
    /// Bootstrap resamples; 0 keeps analytic CIs [built-in default: 499]
    #[arg(long)]
    bootstrap: Option<u32>,
    /// Frontier slope gate in standard errors [built-in default: 2.576]
    #[arg(long = "slope-gate")]
    slope_gate: Option<f64>,
    /// Exit 2 unless the primary diagram shows a scaling frontier
    #[arg(long = "require-biscaling")]
    require_biscaling: bool,
    /// Fit the flow-size tail index (packet input only)
    #[arg(long)]
    tail: bool,
    /// Tail window lower quantile [built-in default: 0.95]
    #[arg(long)]
    qlo: Option<f64>,
    /// Tail window upper quantile [built-in default: 0.999]
    #[arg(long)]
    qhi: Option<f64>,
    /// Karn RTT sampling and RTT-class partitioning (packet input only)
    #[arg(long)]
    rtt: bool,
    /// Number of RTT classes [built-in default: 4]
    #[arg(long)]
    classes: Option<usize>,
    /// Free-form label echoed in the report
    #[arg(long)]
    label: Option<String>,
    /// Omit the creation timestamp for byte-stable reports
    #[arg(long = "no-timestamps")]
    no_timestamps: bool,
    /// Generator sidecar JSON to embed as ground truth
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Report path (default stdout)
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Flags > config file > BISCALE_SEED (seed only) > built-in defaults.
fn resolve_config(a: &AnalyzeArgs, env_seed: Option<&str>) -> Result<AnalysisConfig> {
    let (mut cfg, config_has_seed) = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .with_context(|| format!("reading {}", path.display()))?;
            let table: toml::Value = toml::from_str(&text)
                .with_context(|| format!("{} is not valid TOML", path.display()))?;
            let has_seed = table.get("seed").is_some();
            let cfg: AnalysisConfig = toml::from_str(&text)
                .with_context(|| format!("{} is not a valid config", path.display()))?;
            (cfg, has_seed)
        }
        None => (AnalysisConfig::default(), false),
    };
    if !config_has_seed {
        if let Some(s) = env_seed {
            cfg.seed = s
                .trim()
                .parse()
                .context("BISCALE_SEED must be an unsigned integer")?;
        }
    }
    if let Some(ms) = a.delta0_ms {
        cfg.delta0 = ms / 1000.0;
    }
    if let Some(m) = a.m {
        cfg.m = m;
    }
    if let Some(k) = a.key {
        cfg.key = k.into();
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(w) = &a.wavelet {
        cfg.vanishing_moments = parse_wavelet(w)?;
    }
    if let Some(g) = a.gamma {
        cfg.gamma = g;
    }
    if let Some(n) = a.nmin {
        cfg.n_min = n;
    }
    if let Some(r) = a.fs {
        cfg.fs = r;
    }
    if let Some(r) = a.cs {
        cfg.cs = r;
    }
    if let Some(b) = a.bootstrap {
        cfg.bootstrap = b;
    }
    if let Some(g) = a.slope_gate {
        cfg.slope_gate = g;
    }
    if a.require_biscaling {
        cfg.require_biscaling = true;
    }
    if a.tail {
        cfg.tail = true;
    }
    if let Some(q) = a.qlo {
        cfg.tail_quantiles.0 = q;
    }
    if let Some(q) = a.qhi {
        cfg.tail_quantiles.1 = q;
    }
    if a.rtt {
        cfg.rtt = true;
    }
    if let Some(c) = a.classes {
        cfg.rtt_classes = c;
    }
    if let Some(l) = &a.label {
        cfg.label = l.clone();
    }
    if a.no_timestamps {
        cfg.timestamps = false;
    }
    Ok(cfg)
}

fn cmd_analyze(a: &AnalyzeArgs) -> Result<u8> {
    let env_seed = std::env::var("BISCALE_SEED").ok();
    let cfg = resolve_config(a, env_seed.as_deref())?;
    let input = load_analysis_input(&a.input, a.lenient)?;
    let mut report = run_analyze(input, &cfg)?;
    if let Some(path) = &a.truth {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading {}", path.display()))?;
        let spec: GeneratorSpec = serde_json::from_str(&text)
            .with_context(|| format!("{} is not a generator sidecar", path.display()))?;
        report.meta.generator = Some(spec);
    }
    for w in &report.warnings {
        eprintln!("warning: {w}");
    }
    emit_json(&report, a.out.as_deref())?;
    if cfg.require_biscaling
        && !matches!(
            report.primary_frontier(),
            Some(FrontierOutcome::Biscaling { .. })
        )
    {
        return Ok(2);
    }
    Ok(0)
}

// ---------------------------------------------------------------------------
// report

#[derive(Args)]
struct ReportArgs {
    /// Analysis report JSON (biscale analyze output)
    #[arg(long)]
    input: PathBuf,
    /// Projection format
    #[arg(long, value_enum, default_value_t = FormatArg::Csv)]
    format: FormatArg,
    /// Directory the files are written into
    #[arg(long = "out-dir")]
    out_dir: PathBuf,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum FormatArg {
    Json,
    Csv,
    /// Whitespace columns with a # header, ready for gnuplot
    GnuplotData,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> ReportFormat {
        match f {
            FormatArg::Json => ReportFormat::Json,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::GnuplotData => ReportFormat::GnuplotData,
        }
    }
}

fn cmd_report(a: &ReportArgs) -> Result<u8> {
    let text = std::fs::read_to_string(&a.input)
        .with_context(|| format!("reading {}", a.input.display()))?;
    let report: AnalysisReport = serde_json::from_str(&text)
        .with_context(|| format!("{} is not an analysis report", a.input.display()))?;
    let written = run_report(&report, a.format.into(), &a.out_dir)?;
    for path in written {
        println!("{}", path.display());
    }
    Ok(0)
}

// ---------------------------------------------------------------------------

fn run(cli: Cli) -> Result<u8> {
    if let Some(jobs) = cli.jobs {
        if jobs == 0 {
            bail!("--jobs must be at least 1");
        }
        // Ignore the error when a pool already exists (tests, repeat calls):
        // the merge order is index-based either way.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build_global();
    }
    match &cli.cmd {
        Cmd::Aggregate(a) => cmd_aggregate(a),
        Cmd::Sketch(a) => cmd_sketch(a),
        Cmd::Ld(a) => cmd_ld(a),
        Cmd::Estimate(a) => cmd_estimate(a),
        Cmd::Frontier(a) => cmd_frontier(a),
        Cmd::Tail(a) => cmd_tail(a),
        Cmd::Rtt(a) => cmd_rtt(a),
        Cmd::Corr(a) => cmd_corr(a),
        Cmd::Synth(a) => cmd_synth(a),
        Cmd::Analyze(a) => cmd_analyze(a),
        Cmd::Report(a) => cmd_report(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

// Keep the materialize helper linked even though only input.rs uses it
// internally; unit tests below exercise it via the public loaders.
#[allow(unused_imports)]
use materialize as _materialize_for_tests;

#[cfg(test)]
mod tests {
    use super::*;

    fn analyze_args(argv: &[&str]) -> AnalyzeArgs {
        let mut full = vec!["biscale", "analyze"];
        full.extend_from_slice(argv);
        let cli = Cli::parse_from(full);
        match cli.cmd {
            Cmd::Analyze(a) => a,
            _ => unreachable!(),
        }
    }

    #[test]
    fn bare_invocation_resolves_to_builtin_defaults() {
        let a = analyze_args(&["--input", "x.pcap"]);
        let cfg = resolve_config(&a, None).unwrap();
        assert_eq!(cfg, AnalysisConfig::default());
    }

    #[test]
    fn flags_override_config_file_which_overrides_env() {
        let dir = tempfile::tempdir().unwrap();
        let cfg_path = dir.path().join("biscale.toml");
        std::fs::write(&cfg_path, "m = 2\nseed = 9\nfs = [3, 7]\n").unwrap();
        let cfg_flag = cfg_path.to_str().unwrap().to_string();

        // Config beats env for the seed; untouched fields stay built-in.
        let a = analyze_args(&["--input", "x", "--config", &cfg_flag]);
        let cfg = resolve_config(&a, Some("77")).unwrap();
        assert_eq!(cfg.m, 2);
        assert_eq!(cfg.seed, 9);
        assert_eq!(cfg.fs, (3, 7));
        assert_eq!(cfg.cs, AnalysisConfig::default().cs);

        // Explicit flags beat the config file.
        let a = analyze_args(&[
            "--input", "x", "--config", &cfg_flag, "--m", "6", "--seed", "5",
        ]);
        let cfg = resolve_config(&a, Some("77")).unwrap();
        assert_eq!(cfg.m, 6);
        assert_eq!(cfg.seed, 5);

        // Env fills the seed when neither flag nor config set it.
        std::fs::write(&cfg_path, "m = 2\n").unwrap();
        let a = analyze_args(&["--input", "x", "--config", &cfg_flag]);
        let cfg = resolve_config(&a, Some("77")).unwrap();
        assert_eq!(cfg.seed, 77);
    }

    #[test]
    fn octave_ranges_parse_and_reject_nonsense() {
        assert_eq!(parse_range("4:10").unwrap(), (4, 10));
        assert_eq!(parse_range(" 12 : 18 ").unwrap(), (12, 18));
        assert!(parse_range("10:4").is_err());
        assert!(parse_range("7").is_err());
        assert!(parse_range("a:b").is_err());
    }

    #[test]
    fn wavelet_names_parse_to_vanishing_moments() {
        assert_eq!(parse_wavelet("db3").unwrap(), 3);
        assert_eq!(parse_wavelet("DB8").unwrap(), 8);
        assert_eq!(parse_wavelet("5").unwrap(), 5);
        assert!(parse_wavelet("haar2").is_err());
        assert!(parse_wavelet("db0").is_err());
    }

    #[test]
    fn delta0_flag_is_milliseconds() {
        let a = analyze_args(&["--input", "x", "--delta0-ms", "0.25"]);
        let cfg = resolve_config(&a, None).unwrap();
        assert_eq!(cfg.delta0, 0.00025);
    }

    #[test]
    fn corr_variable_names_parse() {
        assert!(matches!(CorrVar::parse("jr").unwrap(), CorrVar::Jr));
        assert!(matches!(CorrVar::parse("J_F").unwrap(), CorrVar::Jf));
        assert!(matches!(CorrVar::parse(" h ").unwrap(), CorrVar::H));
        assert!(CorrVar::parse("zeta").is_err());
    }

    #[test]
    fn median_helper_averages_even_counts() {
        assert_eq!(median_of(vec![3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median_of(vec![4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median_of(vec![]), None);
    }
}
