//! Input sniffing and loading shared by the subcommands.
//!
//! Every reader in the core crate is path-based, so `--input -` spills stdin
//! into a temporary file first and the sniffer then treats it like any other
//! path. Format detection looks at the leading magic bytes (pcap in all four
//! endianness/resolution variants, the two binary series formats) and falls
//! back to CSV, where the header row distinguishes packet records from a
//! binned series.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use biscale_core::aggregate::{read_samples, read_series, BinnedSeries};
use biscale_core::analyze::AnalysisInput;
use biscale_core::ingest::{read_csv, read_pcap, IngestStats};
use biscale_core::PacketRecord;
use tempfile::NamedTempFile;

/// Resolved input path plus the guard that keeps a stdin spill alive.
pub struct InputPath {
    pub path: PathBuf,
    _spill: Option<NamedTempFile>,
}

/// Resolves `--input`; `-` drains stdin into a temporary file.
pub fn materialize(input: &str) -> Result<InputPath> {
    if input != "-" {
        return Ok(InputPath { path: PathBuf::from(input), _spill: None });
    }
    let mut buf = Vec::new();
    std::io::stdin()
        .lock()
        .read_to_end(&mut buf)
        .context("reading stdin")?;
    let mut spill = NamedTempFile::new().context("creating stdin spill file")?;
    spill.write_all(&buf).context("writing stdin spill file")?;
    spill.flush()?;
    Ok(InputPath { path: spill.path().to_path_buf(), _spill: Some(spill) })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InputKind {
    Pcap,
    PacketCsv,
    CountsBin,
    SamplesBin,
    CountsCsv,
}

const PCAP_MAGICS: [[u8; 4]; 4] = [
    [0xd4, 0xc3, 0xb2, 0xa1], // micros, little endian
    [0xa1, 0xb2, 0xc3, 0xd4], // micros, big endian
    [0x4d, 0x3c, 0xb2, 0xa1], // nanos, little endian
    [0xa1, 0xb2, 0x3c, 0x4d], // nanos, big endian
];

/// Detects the on-disk format from magic bytes, then the CSV header.
pub fn sniff(path: &Path) -> Result<InputKind> {
    let mut head = [0u8; 8];
    let n = {
        let mut f = File::open(path)
            .with_context(|| format!("opening {}", path.display()))?;
        let mut got = 0;
        while got < head.len() {
            let k = f.read(&mut head[got..])?;
            if k == 0 {
                break;
            }
            got += k;
        }
        got
    };
    if n >= 4 && PCAP_MAGICS.iter().any(|m| head[..4] == *m) {
        return Ok(InputKind::Pcap);
    }
    if n >= 8 {
        if &head == b"BINSER01" {
            return Ok(InputKind::CountsBin);
        }
        if &head == b"BINSERF1" {
            return Ok(InputKind::SamplesBin);
        }
    }
    // CSV: decide by header row.
    let mut first_line = String::new();
    {
        let f = File::open(path)?;
        let mut r = std::io::BufReader::new(f);
        std::io::BufRead::read_line(&mut r, &mut first_line)?;
    }
    let header = first_line.trim();
    if header.starts_with("t_seconds") {
        return Ok(InputKind::CountsCsv);
    }
    if header.starts_with("timestamp") {
        return Ok(InputKind::PacketCsv);
    }
    bail!(
        "cannot determine the format of {}: not pcap, not a binary series, \
         and the CSV header starts with {:?} (expected \"timestamp,...\" for \
         packets or \"t_seconds,...\" for a binned series)",
        path.display(),
        header.split(',').next().unwrap_or("")
    );
}

/// Loads a packet trace (pcap or packet CSV). Errors on series inputs.
pub fn load_packets(input: &str, lenient: bool) -> Result<(Vec<PacketRecord>, Option<IngestStats>)> {
    let ip = materialize(input)?;
    match sniff(&ip.path)? {
        InputKind::Pcap => {
            let out = read_pcap(&ip.path, None)?;
            Ok((out.records, Some(out.stats)))
        }
        InputKind::PacketCsv => {
            let out = read_csv(&ip.path, lenient)?;
            Ok((out.records, Some(out.stats)))
        }
        other => bail!(
            "{} holds a binned series ({:?}); this command needs per-packet input",
            input, other
        ),
    }
}

/// Parses the two-column series CSV written by `aggregate`.
fn read_counts_csv(path: &Path) -> Result<BinnedSeries> {
    let text = std::fs::read_to_string(path)
        .with_context(|| format!("reading {}", path.display()))?;
    let mut times = Vec::new();
    let mut counts = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if i == 0 {
            continue; // header
        }
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (Some(t), Some(c)) = (fields.next(), fields.next()) else {
            bail!("{} line {}: expected t_seconds,count", path.display(), i + 1);
        };
        times.push(t.trim().parse::<f64>().with_context(|| {
            format!("{} line {}: bad t_seconds {:?}", path.display(), i + 1, t)
        })?);
        counts.push(c.trim().parse::<f64>().with_context(|| {
            format!("{} line {}: bad count {:?}", path.display(), i + 1, c)
        })?);
    }
    if times.len() < 2 {
        bail!("{}: a series CSV needs at least two rows", path.display());
    }
    let delta0 = times[1] - times[0];
    if !(delta0 > 0.0) {
        bail!("{}: bin times must be strictly increasing", path.display());
    }
    Ok(BinnedSeries {
        delta0,
        start_time: times[0],
        label: String::new(),
        counts: counts.iter().map(|&c| c.round() as u32).collect(),
    })
}

/// Loads any supported input as analyzer input.
pub fn load_analysis_input(input: &str, lenient: bool) -> Result<AnalysisInput> {
    let ip = materialize(input)?;
    match sniff(&ip.path)? {
        InputKind::Pcap => {
            let out = read_pcap(&ip.path, None)?;
            Ok(AnalysisInput::Packets(out.records))
        }
        InputKind::PacketCsv => {
            let out = read_csv(&ip.path, lenient)?;
            Ok(AnalysisInput::Packets(out.records))
        }
        InputKind::CountsBin => Ok(AnalysisInput::Counts(read_series(&ip.path)?)),
        InputKind::SamplesBin => {
            let (delta0, values) = read_samples(&ip.path)?;
            Ok(AnalysisInput::Samples { delta0, values })
        }
        InputKind::CountsCsv => Ok(AnalysisInput::Counts(read_counts_csv(&ip.path)?)),
    }
}

/// Writes pretty JSON with a trailing newline to `--out` or stdout.
pub fn emit_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    match out {
        Some(path) => std::fs::write(path, text)
            .with_context(|| format!("writing {}", path.display()))?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}
