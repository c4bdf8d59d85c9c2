//! Fixed-width packet-count series.
//!
//! The analysis object is the number of packets per bin of width `delta0`,
//! default 0.125 ms. Bin `i` covers `[i delta0, (i+1) delta0)`. A series
//! built from packets alone runs through the bin containing the last
//! packet; when the capture duration is known separately, the trailing
//! partial bin is dropped instead, since an underfilled final bin biases
//! the coarsest octaves more than truncation does.

use std::fs;
use std::io::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ingest::PacketRecord;

/// Default bin width in seconds (0.125 ms).
pub const DEFAULT_DELTA0: f64 = 0.000125;

#[derive(Debug, Error)]
pub enum AggregateError {
    #[error("cannot aggregate an empty packet stream")]
    EmptyStream,
    #[error("bin width must be positive and finite, got {0}")]
    InvalidDelta0(f64),
    #[error("need at least {required} packets, got {got}")]
    TooFewPackets { got: usize, required: usize },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("malformed series file: {0}")]
    MalformedSeries(String),
}

/// A packet-count series on a uniform bin grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BinnedSeries {
    /// Bin width in seconds.
    pub delta0: f64,
    /// Time of the left edge of bin 0, seconds.
    pub start_time: f64,
    /// Free-form provenance.
    pub label: String,
    pub counts: Vec<u32>,
}

impl BinnedSeries {
    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    /// Total packets in the series.
    pub fn total(&self) -> u64 {
        self.counts.iter().map(|&c| c as u64).sum()
    }

    /// Counts as f64 samples for the transform stages.
    pub fn samples(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64).collect()
    }

    /// Pairwise-summed series at bin width `2 delta0`. A trailing odd bin
    /// is dropped.
    pub fn coarsen(&self) -> BinnedSeries {
        let counts = self
            .counts
            .chunks_exact(2)
            .map(|p| p[0] + p[1])
            .collect();
        BinnedSeries {
            delta0: self.delta0 * 2.0,
            start_time: self.start_time,
            label: self.label.clone(),
            counts,
        }
    }
}

/// Bin a packet stream at width `delta0`, running through the bin that
/// contains the last packet.
pub fn aggregate(packets: &[PacketRecord], delta0: f64) -> Result<BinnedSeries, AggregateError> {
    aggregate_timestamps(packets.iter().map(|p| p.timestamp), delta0)
}

/// Bin a packet stream over a known capture duration; only complete bins
/// are kept, so packets past the last full bin are dropped from the series.
pub fn aggregate_with_duration(
    packets: &[PacketRecord],
    delta0: f64,
    duration: f64,
) -> Result<BinnedSeries, AggregateError> {
    check_delta0(delta0)?;
    let n = (duration / delta0).floor() as usize;
    let mut counts = vec![0u32; n];
    for p in packets {
        let i = (p.timestamp / delta0).floor() as usize;
        if i < n {
            counts[i] += 1;
        }
    }
    Ok(BinnedSeries {
        delta0,
        start_time: 0.0,
        label: String::new(),
        counts,
    })
}

/// Bin raw timestamps (seconds, rebased to start at >= 0, non-decreasing).
pub fn aggregate_timestamps(
    timestamps: impl IntoIterator<Item = f64>,
    delta0: f64,
) -> Result<BinnedSeries, AggregateError> {
    check_delta0(delta0)?;
    let mut counts: Vec<u32> = Vec::new();
    let mut any = false;
    for t in timestamps {
        any = true;
        let i = (t / delta0).floor() as usize;
        if i >= counts.len() {
            counts.resize(i + 1, 0);
        }
        counts[i] += 1;
    }
    if !any {
        return Err(AggregateError::EmptyStream);
    }
    Ok(BinnedSeries {
        delta0,
        start_time: 0.0,
        label: String::new(),
        counts,
    })
}

fn check_delta0(delta0: f64) -> Result<(), AggregateError> {
    if !(delta0 > 0.0) || !delta0.is_finite() {
        return Err(AggregateError::InvalidDelta0(delta0));
    }
    Ok(())
}

/// Median packet inter-arrival time in seconds.
pub fn median_iat(packets: &[PacketRecord]) -> Result<f64, AggregateError> {
    if packets.len() < 2 {
        return Err(AggregateError::TooFewPackets {
            got: packets.len(),
            required: 2,
        });
    }
    let mut gaps: Vec<f64> = packets
        .windows(2)
        .map(|w| w[1].timestamp - w[0].timestamp)
        .collect();
    gaps.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(median_of_sorted(&gaps))
}

pub(crate) fn median_of_sorted(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}

/// Octave whose scale is nearest the median inter-arrival time:
/// `round(log2(median_iat / delta0))`.
pub fn iat_octave(median_iat: f64, delta0: f64) -> i32 {
    (median_iat / delta0).log2().round() as i32
}

const SERIES_MAGIC: &[u8; 8] = b"BINSER01";

/// Flat binary serialization: magic, delta0, N, then the counts.
pub fn write_series(path: impl AsRef<Path>, s: &BinnedSeries) -> Result<(), AggregateError> {
    let mut bytes = Vec::with_capacity(24 + 4 * s.counts.len());
    bytes.extend_from_slice(SERIES_MAGIC);
    bytes.extend_from_slice(&s.delta0.to_le_bytes());
    bytes.extend_from_slice(&(s.counts.len() as u64).to_le_bytes());
    for &c in &s.counts {
        bytes.extend_from_slice(&c.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_series(path: impl AsRef<Path>) -> Result<BinnedSeries, AggregateError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 24 || &bytes[..8] != SERIES_MAGIC {
        return Err(AggregateError::MalformedSeries(
            "missing series magic".into(),
        ));
    }
    let delta0 = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
    check_delta0(delta0).map_err(|_| {
        AggregateError::MalformedSeries(format!("bad bin width {delta0}"))
    })?;
    let n = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    if bytes.len() != 24 + 4 * n {
        return Err(AggregateError::MalformedSeries(format!(
            "expected {} count bytes, found {}",
            4 * n,
            bytes.len() - 24
        )));
    }
    let counts = bytes[24..]
        .chunks_exact(4)
        .map(|b| u32::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok(BinnedSeries {
        delta0,
        start_time: 0.0,
        label: String::new(),
        counts,
    })
}

const SAMPLES_MAGIC: &[u8; 8] = b"BINSERF1";

/// Real-valued variant of the series format for synthetic signals that
/// are not counts (fractional integration makes them signed).
pub fn write_samples(
    path: impl AsRef<Path>,
    delta0: f64,
    values: &[f64],
) -> Result<(), AggregateError> {
    let mut bytes = Vec::with_capacity(24 + 8 * values.len());
    bytes.extend_from_slice(SAMPLES_MAGIC);
    bytes.extend_from_slice(&delta0.to_le_bytes());
    bytes.extend_from_slice(&(values.len() as u64).to_le_bytes());
    for &v in values {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn read_samples(path: impl AsRef<Path>) -> Result<(f64, Vec<f64>), AggregateError> {
    let bytes = fs::read(path)?;
    if bytes.len() < 24 || &bytes[..8] != SAMPLES_MAGIC {
        return Err(AggregateError::MalformedSeries(
            "missing samples magic".into(),
        ));
    }
    let delta0 = f64::from_le_bytes(bytes[8..16].try_into().unwrap());
    check_delta0(delta0).map_err(|_| {
        AggregateError::MalformedSeries(format!("bad bin width {delta0}"))
    })?;
    let n = u64::from_le_bytes(bytes[16..24].try_into().unwrap()) as usize;
    if bytes.len() != 24 + 8 * n {
        return Err(AggregateError::MalformedSeries(format!(
            "expected {} sample bytes, found {}",
            8 * n,
            bytes.len() - 24
        )));
    }
    let values = bytes[24..]
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    Ok((delta0, values))
}

/// Sniff which binary series format a file holds.
pub fn series_kind(path: impl AsRef<Path>) -> Result<SeriesKind, AggregateError> {
    let mut magic = [0u8; 8];
    let mut f = fs::File::open(path)?;
    std::io::Read::read_exact(&mut f, &mut magic)?;
    if &magic == SERIES_MAGIC {
        Ok(SeriesKind::Counts)
    } else if &magic == SAMPLES_MAGIC {
        Ok(SeriesKind::Samples)
    } else {
        Err(AggregateError::MalformedSeries(
            "unrecognized series magic".into(),
        ))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeriesKind {
    Counts,
    Samples,
}

/// CSV projection: `t_seconds,count` per bin; the bin width is recoverable
/// from the first two rows.
pub fn write_series_csv(path: impl AsRef<Path>, s: &BinnedSeries) -> Result<(), AggregateError> {
    let mut out = String::from("t_seconds,count\n");
    for (i, &c) in s.counts.iter().enumerate() {
        out.push_str(&format!("{},{}\n", s.start_time + i as f64 * s.delta0, c));
    }
    let mut f = fs::File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{FiveTuple, Protocol};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn pkt(t: f64) -> PacketRecord {
        PacketRecord {
            timestamp: t,
            size: 100,
            flow_key: FiveTuple::v4([10, 0, 0, 1], 1, [10, 0, 0, 2], 2, Protocol::Udp),
            tcp_meta: None,
        }
    }

    #[test]
    fn direct_binning_example() {
        let packets: Vec<PacketRecord> = [0.0, 0.0001, 0.0002].iter().map(|&t| pkt(t)).collect();
        let s = aggregate(&packets, 0.000125).unwrap();
        assert_eq!(s.counts, vec![2, 1]);
        assert_eq!(s.total(), 3);
    }

    #[test]
    fn empty_stream_is_an_error() {
        assert!(matches!(
            aggregate(&[], DEFAULT_DELTA0),
            Err(AggregateError::EmptyStream)
        ));
    }

    #[test]
    fn boundary_timestamp_opens_a_new_bin() {
        let packets: Vec<PacketRecord> = [0.0, 0.00025].iter().map(|&t| pkt(t)).collect();
        let s = aggregate(&packets, 0.000125).unwrap();
        assert_eq!(s.counts, vec![1, 0, 1]);
    }

    #[test]
    fn duration_variant_drops_partial_trailing_bin() {
        let packets: Vec<PacketRecord> = [0.0, 0.0001, 0.0002].iter().map(|&t| pkt(t)).collect();
        let s = aggregate_with_duration(&packets, 0.000125, 0.0002).unwrap();
        // duration 0.2 ms = 1.6 bins: one complete bin
        assert_eq!(s.counts, vec![2]);
    }

    #[test]
    fn uniform_million_histogram_oracle() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let n = 1_000_000usize;
        let mut ts: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let s = aggregate_timestamps(ts.iter().copied(), 0.001).unwrap();
        assert_eq!(s.total(), n as u64);
        assert_eq!(s.len(), 1000);
        // Poisson-ish 6 sigma corridor around 1000 per bin
        let six_sigma = 6.0 * (1000.0f64).sqrt();
        for (i, &c) in s.counts.iter().enumerate() {
            assert!(
                (c as f64 - 1000.0).abs() < six_sigma,
                "bin {i} holds {c}"
            );
        }
    }

    #[test]
    fn pairwise_sum_equals_coarser_aggregation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut ts: Vec<f64> = (0..20_000).map(|_| rng.random::<f64>() * 3.7).collect();
        ts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let packets: Vec<PacketRecord> = ts.iter().map(|&t| pkt(t)).collect();
        let fine = aggregate(&packets, 0.01).unwrap();
        let direct = aggregate_with_duration(
            &packets,
            0.02,
            fine.len() as f64 * 0.01,
        )
        .unwrap();
        let coarse = fine.coarsen();
        assert_eq!(coarse.delta0, 0.02);
        assert_eq!(coarse.counts, direct.counts);
        // total conserved under any delta0
        assert_eq!(fine.total(), packets.len() as u64);
    }

    #[test]
    fn median_iat_examples() {
        let recs: Vec<PacketRecord> = [0.0, 1.0, 2.0, 3.0].iter().map(|&t| pkt(t)).collect();
        assert_eq!(median_iat(&recs).unwrap(), 1.0);
        // gaps {1, 1, 100}: median robust to the straggler
        let recs: Vec<PacketRecord> = [0.0, 1.0, 2.0, 102.0].iter().map(|&t| pkt(t)).collect();
        assert_eq!(median_iat(&recs).unwrap(), 1.0);
        assert!(matches!(
            median_iat(&recs[..1]),
            Err(AggregateError::TooFewPackets { got: 1, .. })
        ));
    }

    #[test]
    fn poisson_median_iat_tracks_exponential_quantile() {
        // rate 1000/s: median gap = ln(2)/1000
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let mut t = 0.0;
        let recs: Vec<PacketRecord> = (0..200_000)
            .map(|_| {
                t += -rng.random::<f64>().ln() / 1000.0;
                pkt(t)
            })
            .collect();
        let med = median_iat(&recs).unwrap();
        let expect = std::f64::consts::LN_2 / 1000.0;
        assert!(
            (med - expect).abs() / expect < 0.05,
            "median {med}, expected {expect}"
        );
        assert_eq!(iat_octave(med, DEFAULT_DELTA0), 2);
    }

    #[test]
    fn binary_and_csv_serialization_round_trip() {
        let s = BinnedSeries {
            delta0: DEFAULT_DELTA0,
            start_time: 0.0,
            label: String::new(),
            counts: vec![3, 0, 1, 7, 2],
        };
        let mut path = std::env::temp_dir();
        path.push(format!("series-{}.bin", std::process::id()));
        write_series(&path, &s).unwrap();
        let back = read_series(&path).unwrap();
        assert_eq!(back, s);
        std::fs::remove_file(&path).unwrap();

        let mut csv_path = std::env::temp_dir();
        csv_path.push(format!("series-{}.csv", std::process::id()));
        write_series_csv(&csv_path, &s).unwrap();
        let text = std::fs::read_to_string(&csv_path).unwrap();
        assert!(text.starts_with("t_seconds,count\n0,3\n0.000125,0\n"));
        std::fs::remove_file(&csv_path).unwrap();
    }

    #[test]
    fn corrupt_series_files_are_rejected() {
        let mut path = std::env::temp_dir();
        path.push(format!("series-bad-{}.bin", std::process::id()));
        std::fs::write(&path, b"not a series").unwrap();
        assert!(matches!(
            read_series(&path),
            Err(AggregateError::MalformedSeries(_))
        ));
        std::fs::remove_file(&path).unwrap();
    }

    #[test]
    fn sample_serialization_round_trips_and_is_sniffable() {
        let values = vec![0.25, -1.5, 3.75, 0.0, f64::MIN_POSITIVE];
        let mut path = std::env::temp_dir();
        path.push(format!("samples-{}.bin", std::process::id()));
        write_samples(&path, 0.5, &values).unwrap();
        assert_eq!(series_kind(&path).unwrap(), SeriesKind::Samples);
        let (delta0, back) = read_samples(&path).unwrap();
        assert_eq!(delta0, 0.5);
        assert_eq!(back, values);
        // counts reader must refuse the samples magic and vice versa
        assert!(matches!(
            read_series(&path),
            Err(AggregateError::MalformedSeries(_))
        ));
        std::fs::remove_file(&path).unwrap();

        let s = BinnedSeries {
            delta0: DEFAULT_DELTA0,
            start_time: 0.0,
            label: String::new(),
            counts: vec![1, 2],
        };
        let mut cpath = std::env::temp_dir();
        cpath.push(format!("counts-kind-{}.bin", std::process::id()));
        write_series(&cpath, &s).unwrap();
        assert_eq!(series_kind(&cpath).unwrap(), SeriesKind::Counts);
        assert!(read_samples(&cpath).is_err());
        std::fs::remove_file(&cpath).unwrap();
    }
}
