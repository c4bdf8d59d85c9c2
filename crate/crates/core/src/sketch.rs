//! Random projection of a trace into 2^M sub-traces.
//!
//! Every packet is routed to sub-trace `h(key) mod 2^M` by a seeded
//! 4-universal hash of a flow key, so all traffic sharing that key lands
//! in one sub-trace and the sub-traces sum to the global series bin by
//! bin. Downstream, the pointwise median of the sub-trace logscale
//! diagrams suppresses anything concentrated on a few key values.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use rand::RngCore;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::aggregate::{aggregate, BinnedSeries};
use crate::ingest::PacketRecord;
use crate::ld::{LdPoint, LogscaleDiagram};

/// Default number of index bits (16 sub-traces).
pub const DEFAULT_M: u32 = 4;

#[derive(Debug, Error)]
pub enum SketchError {
    #[error("m must be in [1, 12], got {0}")]
    InvalidM(u32),
    #[error("cannot partition an empty packet stream")]
    EmptyStream,
    #[error("median needs at least 3 diagrams, got {0}")]
    TooFewInputs(usize),
    #[error("mismatched grids: {0}")]
    MismatchedGrids(String),
}

/// Which flow key the hash reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HashKey {
    SrcIp,
    DstIp,
    SrcDstPair,
}

impl HashKey {
    fn bytes(self, p: &PacketRecord) -> Vec<u8> {
        match self {
            HashKey::SrcIp => p.flow_key.src_key_bytes().to_vec(),
            HashKey::DstIp => p.flow_key.dst_key_bytes().to_vec(),
            HashKey::SrcDstPair => p.flow_key.pair_key_bytes().to_vec(),
        }
    }

    fn key_len(self) -> usize {
        match self {
            HashKey::SrcIp | HashKey::DstIp => 16,
            HashKey::SrcDstPair => 32,
        }
    }
}

impl std::fmt::Display for HashKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            HashKey::SrcIp => "src",
            HashKey::DstIp => "dst",
            HashKey::SrcDstPair => "pair",
        })
    }
}

/// Seeded 4-universal tabulation hash over fixed-length byte keys.
///
/// One table per byte position plus one per position pair, indexed by the
/// integer sum of the two bytes. Per-byte tables alone are 3-independent;
/// the pair tables restore 4: four distinct keys whose bytes all pair
/// evenly must realize two different pairings at some pair of positions,
/// and the four integer sums at that pair cannot themselves pair evenly.
pub struct TabulationHash {
    key_len: usize,
    tables: Vec<u64>,
}

const LEAF_SIZE: usize = 256;
const PAIR_SIZE: usize = 511;

impl TabulationHash {
    pub fn new(seed: u64, key_len: usize) -> TabulationHash {
        let pairs = key_len * (key_len - 1) / 2;
        let mut tables = vec![0u64; key_len * LEAF_SIZE + pairs * PAIR_SIZE];
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        for t in tables.iter_mut() {
            *t = rng.next_u64();
        }
        TabulationHash { key_len, tables }
    }

    pub fn hash(&self, key: &[u8]) -> u64 {
        assert_eq!(key.len(), self.key_len, "key length fixed at construction");
        let mut h = 0u64;
        for (i, &b) in key.iter().enumerate() {
            h ^= self.tables[i * LEAF_SIZE + b as usize];
        }
        let mut off = self.key_len * LEAF_SIZE;
        for i in 0..self.key_len {
            for j in (i + 1)..self.key_len {
                h ^= self.tables[off + key[i] as usize + key[j] as usize];
                off += PAIR_SIZE;
            }
        }
        h
    }
}

/// A trace split into 2^m sub-traces on the global bin grid.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SketchPartition {
    pub m: u32,
    pub key: HashKey,
    pub seed: u64,
    pub subtraces: Vec<BinnedSeries>,
}

impl SketchPartition {
    pub fn delta0(&self) -> f64 {
        self.subtraces[0].delta0
    }

    /// Pointwise sum across sub-traces.
    pub fn global(&self) -> BinnedSeries {
        let mut counts = vec![0u32; self.subtraces[0].len()];
        for s in &self.subtraces {
            for (acc, &c) in counts.iter_mut().zip(&s.counts) {
                *acc += c;
            }
        }
        BinnedSeries {
            delta0: self.delta0(),
            start_time: self.subtraces[0].start_time,
            label: "global".into(),
            counts,
        }
    }
}

/// Split packets into 2^m sub-traces binned at `delta0`.
///
/// All sub-traces share the global grid, so their pointwise sum equals
/// the aggregation of the whole stream.
pub fn partition(
    packets: &[PacketRecord],
    m: u32,
    key: HashKey,
    seed: u64,
    delta0: f64,
) -> Result<SketchPartition, SketchError> {
    if !(1..=12).contains(&m) {
        return Err(SketchError::InvalidM(m));
    }
    if packets.is_empty() {
        return Err(SketchError::EmptyStream);
    }
    let global = aggregate(packets, delta0).map_err(|_| SketchError::EmptyStream)?;
    let n_bins = global.len();
    let hasher = TabulationHash::new(seed, key.key_len());
    let n_sub = 1usize << m;
    let mask = (n_sub - 1) as u64;
    let mut counts = vec![vec![0u32; n_bins]; n_sub];
    for p in packets {
        let idx = (hasher.hash(&key.bytes(p)) & mask) as usize;
        let bin = (p.timestamp / delta0).floor() as usize;
        counts[idx][bin] += 1;
    }
    let subtraces = counts
        .into_iter()
        .enumerate()
        .map(|(i, c)| BinnedSeries {
            delta0,
            start_time: 0.0,
            label: format!("sketch-{i:02}"),
            counts: c,
        })
        .collect();
    Ok(SketchPartition {
        m,
        key,
        seed,
        subtraces,
    })
}

/// Pointwise median across logscale diagrams on a common grid.
///
/// Value and n_j are per-octave medians; the variance is the squared
/// scaled median absolute deviation, (1.4826 MAD)^2.
pub fn median_ld(lds: &[LogscaleDiagram]) -> Result<LogscaleDiagram, SketchError> {
    if lds.len() < 3 {
        return Err(SketchError::TooFewInputs(lds.len()));
    }
    let first = &lds[0];
    for ld in &lds[1..] {
        if ld.kind != first.kind {
            return Err(SketchError::MismatchedGrids(format!(
                "kind {} vs {}",
                ld.kind, first.kind
            )));
        }
        if ld.delta0 != first.delta0 {
            return Err(SketchError::MismatchedGrids(format!(
                "delta0 {} vs {}",
                ld.delta0, first.delta0
            )));
        }
        let same_j = ld.octaves.len() == first.octaves.len()
            && ld
                .octaves
                .iter()
                .zip(&first.octaves)
                .all(|(a, b)| a.j == b.j);
        if !same_j {
            return Err(SketchError::MismatchedGrids("octave sets differ".into()));
        }
    }
    let octaves = first
        .octaves
        .iter()
        .enumerate()
        .map(|(i, pt)| {
            let mut values: Vec<f64> = lds.iter().map(|ld| ld.octaves[i].value).collect();
            values.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let med = median_sorted(&values);
            let mut devs: Vec<f64> = values.iter().map(|v| (v - med).abs()).collect();
            devs.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mad = median_sorted(&devs);
            let mut ns: Vec<u64> = lds.iter().map(|ld| ld.octaves[i].n_j).collect();
            ns.sort_unstable();
            let n_j = if ns.len() % 2 == 1 {
                ns[ns.len() / 2]
            } else {
                let lo = ns[ns.len() / 2 - 1];
                lo + (ns[ns.len() / 2] - lo) / 2
            };
            LdPoint {
                j: pt.j,
                n_j,
                value: med,
                variance: (1.4826 * mad).powi(2),
            }
        })
        .collect();
    Ok(LogscaleDiagram {
        kind: first.kind,
        delta0: first.delta0,
        label: Some("median".into()),
        octaves,
    })
}

fn median_sorted(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n % 2 == 1 {
        xs[n / 2]
    } else {
        0.5 * (xs[n / 2 - 1] + xs[n / 2])
    }
}
