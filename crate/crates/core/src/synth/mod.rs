//! Synthetic traffic with analytically known scaling.
//!
//! Every generator here is an oracle: its construction fixes the scaling
//! exponents, so estimator output can be judged against ground truth.
//! Available sources: exact fractional Gaussian noise, log-normal
//! multiplicative cascades, heavy-tailed On/Off superposition, Poisson
//! streams, and a periodic single-source anomaly overlay. All are
//! deterministic given (parameters, seed).

mod cascade;
mod fgn;
mod onoff;

pub use cascade::{cascade_density, frac_integrate, gen_cascade};
pub use fgn::gen_fgn;
pub use onoff::{gen_onoff, gen_onoff_packets, FlowTruth};

use std::net::IpAddr;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::BinnedSeries;
use crate::ingest::{FiveTuple, PacketRecord, Protocol};

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid generator parameter: {0}")]
    InvalidParameter(String),
    #[error("circulant embedding not positive semidefinite even after doubling")]
    EmbeddingNotPSD,
}

/// Sub-stream seed derivation, splitmix64 finalizer.
pub(crate) fn substream(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_mul(0x9e3779b97f4a7c15);
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// Requested output extent.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Length {
    Samples(usize),
    Duration(f64),
}

/// Serializable description of a synthetic source, emitted as sidecar
/// metadata next to generated files and echoed in analysis reports.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GeneratorKind {
    Fgn {
        h: f64,
    },
    Cascade {
        c1: f64,
        c2: f64,
        depth: u32,
    },
    OnOff {
        alpha: f64,
        n_sources: u32,
        mean_on: f64,
        mean_off: f64,
        rate_on: f64,
    },
    Poisson {
        rate: f64,
    },
    AnomalyOverlay {
        base: Box<GeneratorKind>,
        schedule: AnomalySpec,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(flatten)]
    pub kind: GeneratorKind,
    pub length: Length,
    pub seed: u64,
}

/// Homogeneous Poisson arrivals binned at `delta0`; complete bins only.
///
/// Bin counts over disjoint bins are independent Poisson(rate * delta0),
/// so the counts are drawn directly bin by bin.
pub fn gen_poisson(
    rate: f64,
    duration: f64,
    delta0: f64,
    seed: u64,
) -> Result<BinnedSeries, SynthError> {
    if !(rate > 0.0) || !rate.is_finite() {
        return Err(SynthError::InvalidParameter(format!("rate {rate}")));
    }
    if !(duration > 0.0) || !(delta0 > 0.0) {
        return Err(SynthError::InvalidParameter(
            "duration and delta0 must be positive".into(),
        ));
    }
    let n = (duration / delta0).floor() as usize;
    if n == 0 {
        return Err(SynthError::InvalidParameter(
            "duration shorter than one bin".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pois = Poisson::new(rate * delta0)
        .map_err(|e| SynthError::InvalidParameter(format!("poisson: {e}")))?;
    let counts = (0..n)
        .map(|_| rng.sample::<f64, _>(&pois) as u32)
        .collect();
    Ok(BinnedSeries {
        delta0,
        start_time: 0.0,
        label: "poisson".into(),
        counts,
    })
}

/// Uniform arrival times for `n` points in [a, b), sorted.
pub(crate) fn uniform_arrivals(rng: &mut ChaCha8Rng, n: u64, a: f64, b: f64) -> Vec<f64> {
    let mut ts: Vec<f64> = (0..n).map(|_| a + rng.random::<f64>() * (b - a)).collect();
    ts.sort_by(|x, y| x.partial_cmp(y).unwrap());
    ts
}

/// A periodic single-source packet train: bursts of `burst_len` packets
/// whose consecutive probes are `spacing` seconds apart, bursts repeating
/// every `burst_period` seconds. The probe spacing sets the octave where
/// the train's energy concentrates, j = log2(spacing / delta0).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnomalySpec {
    pub src_ip: IpAddr,
    pub dst_ip: IpAddr,
    pub src_port: u16,
    pub dst_port: u16,
    pub protocol: Protocol,
    pub size: u32,
    pub start: f64,
    pub spacing: f64,
    pub burst_len: u32,
    pub burst_period: f64,
}

impl Default for AnomalySpec {
    fn default() -> Self {
        AnomalySpec {
            src_ip: "198.51.100.66".parse().unwrap(),
            dst_ip: "192.0.2.1".parse().unwrap(),
            src_port: 0,
            dst_port: 0,
            protocol: Protocol::Icmp,
            size: 64,
            start: 0.0,
            spacing: 3.0,
            burst_len: 10,
            burst_period: 660.0,
        }
    }
}

impl AnomalySpec {
    /// Probe timestamps up to `end` (exclusive).
    pub fn schedule(&self, end: f64) -> Vec<f64> {
        let mut ts = Vec::new();
        if self.burst_len == 0 {
            return ts;
        }
        let mut burst_start = self.start;
        while burst_start < end {
            for i in 0..self.burst_len {
                let t = burst_start + i as f64 * self.spacing;
                if t < end {
                    ts.push(t);
                }
            }
            burst_start += self.burst_period;
        }
        ts
    }

    fn record(&self, t: f64) -> PacketRecord {
        PacketRecord {
            timestamp: t,
            size: self.size,
            flow_key: FiveTuple {
                src_ip: self.src_ip,
                dst_ip: self.dst_ip,
                src_port: self.src_port,
                dst_port: self.dst_port,
                protocol: self.protocol,
            },
            tcp_meta: None,
        }
    }
}

/// Overlay a periodic anomaly train on a time-sorted packet stream.
///
/// The train runs until the base stream's last timestamp. Output is
/// merged and time-sorted; base packets precede anomaly packets on ties.
/// A zero-length train returns the base unchanged.
pub fn inject_anomaly(base: &[PacketRecord], spec: &AnomalySpec) -> Vec<PacketRecord> {
    let end = match base.last() {
        Some(p) => p.timestamp,
        None => return Vec::new(),
    };
    let train = spec.schedule(end);
    let mut out = Vec::with_capacity(base.len() + train.len());
    let mut bi = 0;
    for &t in &train {
        while bi < base.len() && base[bi].timestamp <= t {
            out.push(base[bi]);
            bi += 1;
        }
        out.push(spec.record(t));
    }
    out.extend_from_slice(&base[bi..]);
    out
}

/// Generator output: real-valued samples, binned counts, or packets.
#[derive(Debug, Clone)]
pub enum SynthOutput {
    Samples { delta0: f64, values: Vec<f64> },
    Counts { series: BinnedSeries, flows: Vec<FlowTruth> },
    Packets { packets: Vec<PacketRecord>, flows: Vec<FlowTruth> },
}

/// Dispatch a generator description. `delta0` fixes the bin grid for the
/// count-producing kinds and annotates sample-producing ones.
pub fn generate(spec: &GeneratorSpec, delta0: f64) -> Result<SynthOutput, SynthError> {
    match &spec.kind {
        GeneratorKind::Fgn { h } => {
            let n = samples_len(spec)?;
            Ok(SynthOutput::Samples {
                delta0,
                values: gen_fgn(*h, n, spec.seed)?,
            })
        }
        GeneratorKind::Cascade { c1, c2, depth } => {
            if let Length::Samples(n) = spec.length {
                if n != 1usize << depth {
                    return Err(SynthError::InvalidParameter(format!(
                        "cascade length is fixed at 2^depth = {}",
                        1usize << depth
                    )));
                }
            }
            Ok(SynthOutput::Samples {
                delta0,
                values: gen_cascade(*c1, *c2, *depth, spec.seed)?,
            })
        }
        GeneratorKind::OnOff {
            alpha,
            n_sources,
            mean_on,
            mean_off,
            rate_on,
        } => {
            let d = duration_len(spec)?;
            let (series, flows) = gen_onoff(
                *alpha, *n_sources, *mean_on, *mean_off, *rate_on, d, delta0, spec.seed,
            )?;
            Ok(SynthOutput::Counts { series, flows })
        }
        GeneratorKind::Poisson { rate } => {
            let d = duration_len(spec)?;
            Ok(SynthOutput::Counts {
                series: gen_poisson(*rate, d, delta0, spec.seed)?,
                flows: Vec::new(),
            })
        }
        GeneratorKind::AnomalyOverlay { base, schedule } => {
            let GeneratorKind::OnOff {
                alpha,
                n_sources,
                mean_on,
                mean_off,
                rate_on,
            } = base.as_ref()
            else {
                return Err(SynthError::InvalidParameter(
                    "anomaly overlay needs a packet-producing base (on/off)".into(),
                ));
            };
            let d = duration_len(spec)?;
            let (packets, flows) = gen_onoff_packets(
                *alpha, *n_sources, *mean_on, *mean_off, *rate_on, d, spec.seed,
            )?;
            Ok(SynthOutput::Packets {
                packets: inject_anomaly(&packets, schedule),
                flows,
            })
        }
    }
}

fn samples_len(spec: &GeneratorSpec) -> Result<usize, SynthError> {
    match spec.length {
        Length::Samples(n) => Ok(n),
        Length::Duration(_) => Err(SynthError::InvalidParameter(
            "this generator needs a sample count, not a duration".into(),
        )),
    }
}

fn duration_len(spec: &GeneratorSpec) -> Result<f64, SynthError> {
    match spec.length {
        Length::Duration(d) => Ok(d),
        Length::Samples(_) => Err(SynthError::InvalidParameter(
            "this generator needs a duration, not a sample count".into(),
        )),
    }
}
