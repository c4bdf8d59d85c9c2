//! Superposed heavy-tailed On/Off sources.
//!
//! Each source alternates Pareto(alpha) active periods (scale set so the
//! mean is mean_on) and exponential idle periods, emitting Poisson
//! packets at rate_on while active. Superposing many such sources yields
//! long-range dependent counts with H = (3 - alpha)/2; that relation
//! holds asymptotically in source count and duration, so small fixtures
//! only approach it. Sources start a warmup of ten mean cycles before
//! t = 0 to damp the all-idle start transient.
//!
//! The binned generator draws each bin's count once from the summed
//! active rate: Poisson superposition over disjoint bins makes that
//! exact. Its flow table carries per-period totals drawn from the same
//! law but not coupled to the bin draws; when the joint structure
//! matters, use the materialized packet generator instead.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::Poisson;
use serde::{Deserialize, Serialize};
use std::net::IpAddr;

use super::{substream, uniform_arrivals, SynthError};
use crate::aggregate::BinnedSeries;
use crate::ingest::{FiveTuple, PacketRecord, Protocol};

const PACKET_BYTES: u32 = 100;

/// Ground truth for one On period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowTruth {
    pub source: u32,
    pub src_ip: IpAddr,
    pub src_port: u16,
    /// First instant the flow is visible inside the output window.
    pub start: f64,
    /// Full On-period length, unclipped.
    pub duration: f64,
    pub packets: u64,
    pub bytes: u64,
}

struct OnOffParams {
    alpha: f64,
    x_m: f64,
    mean_off: f64,
    rate_on: f64,
    duration: f64,
    warmup: f64,
}

fn check_params(
    alpha: f64,
    n_sources: u32,
    mean_on: f64,
    mean_off: f64,
    rate_on: f64,
    duration: f64,
) -> Result<OnOffParams, SynthError> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(SynthError::InvalidParameter(format!(
            "alpha must lie in (1,2), got {alpha}"
        )));
    }
    if n_sources == 0 {
        return Err(SynthError::InvalidParameter("n_sources must be >= 1".into()));
    }
    if !(mean_on > 0.0 && mean_off > 0.0 && rate_on > 0.0 && duration > 0.0) {
        return Err(SynthError::InvalidParameter(
            "mean_on, mean_off, rate_on, duration must be positive".into(),
        ));
    }
    Ok(OnOffParams {
        alpha,
        x_m: mean_on * (alpha - 1.0) / alpha,
        mean_off,
        rate_on,
        duration,
        warmup: 10.0 * (mean_on + mean_off),
    })
}

fn source_ip(i: u32) -> [u8; 4] {
    [10, (i >> 16) as u8, (i >> 8) as u8, i as u8]
}

/// Pareto(alpha, x_m) via inverse transform; u in [0,1).
fn pareto(x_m: f64, alpha: f64, u: f64) -> f64 {
    x_m * (1.0 - u).powf(-1.0 / alpha)
}

/// Walk one source's alternating timeline, calling `on_period` for every
/// On interval that intersects [0, duration).
fn walk_source<F: FnMut(&mut ChaCha8Rng, f64, f64)>(
    rng: &mut ChaCha8Rng,
    p: &OnOffParams,
    mut on_period: F,
) {
    let mut t = -p.warmup;
    while t < p.duration {
        let on = pareto(p.x_m, p.alpha, rng.random::<f64>());
        if t + on > 0.0 {
            on_period(rng, t, on);
        }
        t += on;
        let off = -p.mean_off * (1.0 - rng.random::<f64>()).ln();
        t += off;
    }
}

/// Binned On/Off superposition plus its flow table.
#[allow(clippy::too_many_arguments)]
pub fn gen_onoff(
    alpha: f64,
    n_sources: u32,
    mean_on: f64,
    mean_off: f64,
    rate_on: f64,
    duration: f64,
    delta0: f64,
    seed: u64,
) -> Result<(BinnedSeries, Vec<FlowTruth>), SynthError> {
    let p = check_params(alpha, n_sources, mean_on, mean_off, rate_on, duration)?;
    if !(delta0 > 0.0) || duration < delta0 {
        return Err(SynthError::InvalidParameter(format!("delta0 {delta0}")));
    }
    let n_bins = (duration / delta0).floor() as usize;
    let mut lambda = vec![0.0f64; n_bins];
    let mut flows = Vec::new();
    for i in 0..n_sources {
        let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, i as u64));
        walk_source(&mut rng, &p, |rng, t, on| {
            let clip_a = t.max(0.0);
            let clip_b = (t + on).min(duration);
            add_rate(&mut lambda, delta0, p.rate_on, clip_a, clip_b);
            let n_pkts = draw_poisson(rng, p.rate_on * (clip_b - clip_a));
            flows.push(FlowTruth {
                source: i,
                src_ip: IpAddr::from(source_ip(i)),
                src_port: 0,
                start: clip_a,
                duration: on,
                packets: n_pkts,
                bytes: n_pkts * PACKET_BYTES as u64,
            });
        });
    }
    let mut bin_rng = ChaCha8Rng::seed_from_u64(substream(seed, u64::MAX));
    let counts = lambda
        .iter()
        .map(|&l| draw_poisson(&mut bin_rng, l) as u32)
        .collect();
    Ok((
        BinnedSeries {
            delta0,
            start_time: 0.0,
            label: "onoff".into(),
            counts,
        },
        flows,
    ))
}

/// Materialized On/Off packet stream: every packet individually placed,
/// one five-tuple per On period (source IP fixed, port cycling).
pub fn gen_onoff_packets(
    alpha: f64,
    n_sources: u32,
    mean_on: f64,
    mean_off: f64,
    rate_on: f64,
    duration: f64,
    seed: u64,
) -> Result<(Vec<PacketRecord>, Vec<FlowTruth>), SynthError> {
    let p = check_params(alpha, n_sources, mean_on, mean_off, rate_on, duration)?;
    let mut packets = Vec::new();
    let mut flows = Vec::new();
    for i in 0..n_sources {
        let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, i as u64));
        let ip = source_ip(i);
        let mut ordinal = 0u32;
        walk_source(&mut rng, &p, |rng, t, on| {
            let clip_a = t.max(0.0);
            let clip_b = (t + on).min(duration);
            let n_pkts = draw_poisson(rng, p.rate_on * (clip_b - clip_a));
            let port = 1024 + (ordinal % 60000) as u16;
            ordinal += 1;
            let key = FiveTuple::v4(ip, port, [192, 0, 2, 1], 9, Protocol::Udp);
            for ts in uniform_arrivals(rng, n_pkts, clip_a, clip_b) {
                packets.push(PacketRecord {
                    timestamp: ts,
                    size: PACKET_BYTES,
                    flow_key: key,
                    tcp_meta: None,
                });
            }
            flows.push(FlowTruth {
                source: i,
                src_ip: IpAddr::from(ip),
                src_port: port,
                start: clip_a,
                duration: on,
                packets: n_pkts,
                bytes: n_pkts * PACKET_BYTES as u64,
            });
        });
    }
    packets.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
    Ok((packets, flows))
}

fn draw_poisson(rng: &mut ChaCha8Rng, lambda: f64) -> u64 {
    if lambda <= 0.0 {
        return 0;
    }
    let pois = Poisson::new(lambda).expect("positive finite rate");
    rng.sample::<f64, _>(&pois) as u64
}

/// Accumulate `rate` over [a, b) into per-bin expected counts.
fn add_rate(lambda: &mut [f64], delta0: f64, rate: f64, a: f64, b: f64) {
    let end = lambda.len() as f64 * delta0;
    let a = a.max(0.0);
    let b = b.min(end);
    if b <= a {
        return;
    }
    let first = (a / delta0).floor() as usize;
    let last = ((b / delta0).ceil() as usize).min(lambda.len());
    for (bin, l) in lambda.iter_mut().enumerate().take(last).skip(first) {
        let lo = bin as f64 * delta0;
        let overlap = b.min(lo + delta0) - a.max(lo);
        if overlap > 0.0 {
            *l += rate * overlap;
        }
    }
}
