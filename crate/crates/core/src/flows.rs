//! Flow-level statistics: size tails, passive RTT, RTT-conditioned
//! partitioning, and correlation structure.
//!
//! Flow sizes carry the heavy-tail side of the scaling story: a Pareto
//! tail index alpha in (1,2) for On-period sizes implies aggregate
//! counts with H = (3 - alpha)/2. RTT estimation follows Karn's rule:
//! a byte range transmitted more than once never yields a sample, and
//! neither does an acknowledgment covering such a range.

use std::collections::HashMap;
use std::net::IpAddr;

use nalgebra::DMatrix;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::BinnedSeries;
use crate::ingest::{FiveTuple, PacketRecord};

/// A 5-tuple idle longer than this starts a new flow record.
pub const DEFAULT_FLOW_TIMEOUT: f64 = 64.0;
/// Default tail regression window, in empirical quantiles.
pub const DEFAULT_TAIL_QUANTILES: (f64, f64) = (0.95, 0.999);
const TAIL_GRID_POINTS: usize = 20;
const TAIL_BOOTSTRAP: usize = 199;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("need at least {required} flows, got {got}")]
    TooFewFlows { got: usize, required: usize },
    #[error("degenerate tail: only {distinct} distinct sizes in the quantile range")]
    DegenerateTail { distinct: usize },
    #[error("quantiles must satisfy 0.5 <= q_lo < q_hi < 1, got ({0}, {1})")]
    InvalidQuantiles(f64, f64),
    #[error("need at least {required} observations for {vars} variables, got {got}")]
    TooFewObservations {
        got: usize,
        required: usize,
        vars: usize,
    },
    #[error("covariance matrix is singular")]
    SingularCovariance,
}

/// One direction of one flow: a 5-tuple active without a 64 s gap.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub key: FiveTuple,
    pub packet_count: u64,
    pub byte_count: u64,
    pub first_ts: f64,
    pub last_ts: f64,
    pub rtt_samples: Vec<f64>,
    pub rtt_median: Option<f64>,
}

/// Group packets into flow records, splitting on idle gaps. Output is
/// ordered by (first_ts, key) so downstream results are reproducible.
pub fn build_flows(packets: &[PacketRecord]) -> Vec<FlowRecord> {
    build_flows_with_timeout(packets, DEFAULT_FLOW_TIMEOUT)
}

pub fn build_flows_with_timeout(packets: &[PacketRecord], timeout: f64) -> Vec<FlowRecord> {
    let mut open: HashMap<FiveTuple, usize> = HashMap::new();
    let mut flows: Vec<FlowRecord> = Vec::new();
    for p in packets {
        let idx = match open.get(&p.flow_key) {
            Some(&i) if p.timestamp - flows[i].last_ts <= timeout => i,
            _ => {
                flows.push(FlowRecord {
                    key: p.flow_key,
                    packet_count: 0,
                    byte_count: 0,
                    first_ts: p.timestamp,
                    last_ts: p.timestamp,
                    rtt_samples: Vec::new(),
                    rtt_median: None,
                });
                let i = flows.len() - 1;
                open.insert(p.flow_key, i);
                i
            }
        };
        let f = &mut flows[idx];
        f.packet_count += 1;
        f.byte_count += p.size as u64;
        f.last_ts = p.timestamp;
    }
    flows.sort_by(|a, b| {
        a.first_ts
            .total_cmp(&b.first_ts)
            .then_with(|| a.key.cmp(&b.key))
    });
    flows
}

/// Heavy-tail index estimate for a size distribution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub alpha: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Hill estimator over the top (1 - q_lo) fraction, as a cross-check.
    pub hill_alpha: f64,
    pub quantile_range: (f64, f64),
    /// (3 - alpha)/2, the Hurst value this tail implies for counts.
    pub implied_h: f64,
    pub n: usize,
}

/// Weighted CCDF regression for the tail index.
///
/// Grid points are log-spaced between the q_lo and q_hi empirical
/// quantiles, snapped onto sample values so the empirical CCDF (with >=)
/// is exact at each point; log10 CCDF is regressed on log10 size with
/// weights n * ccdf. The slope is -alpha. CI by size-level bootstrap.
pub fn tail_index(sizes: &[f64], q_lo: f64, q_hi: f64) -> Result<TailEstimate, FlowError> {
    if !(0.5..1.0).contains(&q_lo) || !(q_lo < q_hi && q_hi < 1.0) {
        return Err(FlowError::InvalidQuantiles(q_lo, q_hi));
    }
    if sizes.len() < 1000 {
        return Err(FlowError::TooFewFlows {
            got: sizes.len(),
            required: 1000,
        });
    }
    let mut sorted: Vec<f64> = sizes.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let alpha = ccdf_regression(&sorted, q_lo, q_hi, true)?;
    let hill_alpha = hill(&sorted, q_lo);

    let mut rng = ChaCha8Rng::seed_from_u64(0x7a11);
    let mut replicates = Vec::with_capacity(TAIL_BOOTSTRAP);
    for _ in 0..TAIL_BOOTSTRAP {
        let mut resample: Vec<f64> = (0..sorted.len())
            .map(|_| sorted[rng.random_range(0..sorted.len())])
            .collect();
        resample.sort_by(|a, b| a.partial_cmp(b).unwrap());
        if let Ok(a) = ccdf_regression(&resample, q_lo, q_hi, false) {
            replicates.push(a);
        }
    }
    let (ci_low, ci_high) = if replicates.len() >= 8 {
        replicates.sort_by(|a, b| a.partial_cmp(b).unwrap());
        (
            percentile(&replicates, 0.025),
            percentile(&replicates, 0.975),
        )
    } else {
        (alpha, alpha)
    };
    Ok(TailEstimate {
        alpha,
        ci_low,
        ci_high,
        hill_alpha,
        quantile_range: (q_lo, q_hi),
        implied_h: (3.0 - alpha) / 2.0,
        n: sizes.len(),
    })
}

/// WLS of log10 ccdf on log10 size over the snapped grid; returns alpha.
fn ccdf_regression(
    sorted: &[f64],
    q_lo: f64,
    q_hi: f64,
    check_distinct: bool,
) -> Result<f64, FlowError> {
    let n = sorted.len();
    let quant = |q: f64| sorted[((n - 1) as f64 * q).round() as usize];
    let v_lo = quant(q_lo).max(f64::MIN_POSITIVE);
    let v_hi = quant(q_hi);
    if check_distinct {
        let mut distinct = 0usize;
        let mut prev = f64::NAN;
        for &s in sorted.iter().filter(|&&s| s >= v_lo && s <= v_hi) {
            if s != prev {
                distinct += 1;
                prev = s;
            }
        }
        if distinct < 20 {
            return Err(FlowError::DegenerateTail { distinct });
        }
    }
    if !(v_hi > v_lo) {
        return Err(FlowError::DegenerateTail { distinct: 1 });
    }
    // log-spaced targets, snapped to the next sample value at or above
    let ratio = (v_hi / v_lo).powf(1.0 / (TAIL_GRID_POINTS - 1) as f64);
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut ws = Vec::new();
    let mut prev_snap = f64::NAN;
    let mut target = v_lo;
    for _ in 0..TAIL_GRID_POINTS {
        let idx = sorted.partition_point(|&s| s < target);
        if idx < n {
            let snap = sorted[idx];
            if snap != prev_snap && snap <= v_hi {
                prev_snap = snap;
                let count = n - sorted.partition_point(|&s| s < snap);
                let ccdf = count as f64 / n as f64;
                xs.push(snap.log10());
                ys.push(ccdf.log10());
                ws.push(count as f64);
            }
        }
        target *= ratio;
    }
    if xs.len() < 5 {
        return Err(FlowError::DegenerateTail { distinct: xs.len() });
    }
    let (slope, _) = wls_line(&xs, &ys, &ws);
    Ok(-slope)
}

/// Hill estimator over the top (1 - q_lo) fraction of the sample.
fn hill(sorted: &[f64], q_lo: f64) -> f64 {
    let n = sorted.len();
    let k = (((1.0 - q_lo) * n as f64).floor() as usize).clamp(2, n - 1);
    let x_k = sorted[n - 1 - k];
    if x_k <= 0.0 {
        return f64::NAN;
    }
    let mean_log: f64 = sorted[n - k..]
        .iter()
        .map(|&x| (x / x_k).ln())
        .sum::<f64>()
        / k as f64;
    1.0 / mean_log
}

fn wls_line(xs: &[f64], ys: &[f64], ws: &[f64]) -> (f64, f64) {
    let sw: f64 = ws.iter().sum();
    let mx: f64 = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my: f64 = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    for ((&x, &y), &w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
    }
    let slope = sxy / sxx;
    (slope, my - slope * mx)
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let pos = p * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        sorted[lo] + (pos - lo as f64) * (sorted[hi] - sorted[lo])
    }
}

/// Sorted disjoint byte intervals with merge-on-insert.
#[derive(Default)]
struct IntervalSet {
    ivs: Vec<(u64, u64)>,
}

impl IntervalSet {
    fn intersects(&self, s: u64, e: u64) -> bool {
        let i = self.ivs.partition_point(|&(_, end)| end <= s);
        i < self.ivs.len() && self.ivs[i].0 < e
    }

    fn insert(&mut self, s: u64, e: u64) {
        let lo = self.ivs.partition_point(|&(_, end)| end < s);
        let mut hi = lo;
        let (mut s, mut e) = (s, e);
        while hi < self.ivs.len() && self.ivs[hi].0 <= e {
            s = s.min(self.ivs[hi].0);
            e = e.max(self.ivs[hi].1);
            hi += 1;
        }
        self.ivs.splice(lo..hi, [(s, e)]);
    }
}

#[derive(Default)]
struct DirState {
    sent: IntervalSet,
    retx: IntervalSet,
    /// (start, end, send time, flow index)
    pending: Vec<(u64, u64, f64, usize)>,
}

type Endpoint = (IpAddr, u16);

fn conv_key(k: &FiveTuple) -> ((Endpoint, Endpoint), bool) {
    let a = (k.src_ip, k.src_port);
    let b = (k.dst_ip, k.dst_port);
    if a <= b {
        ((a, b), true)
    } else {
        ((b, a), false)
    }
}

/// Build flows and fill RTT samples from TCP seq/ack matching.
///
/// A data segment [seq, seq+len) sent at t1 is sampled by the first
/// reverse ACK at t2 with ack >= seq+len, giving t2 - t1. Segments whose
/// range overlaps bytes already sent are retransmissions: they produce
/// no sample, and they poison their byte range so later ACKs of it are
/// not sampled either.
pub fn karn_rtt(packets: &[PacketRecord]) -> Vec<FlowRecord> {
    let mut flows = build_flows(packets);
    // key -> flow indices in time order, for sample attribution
    let mut by_key: HashMap<FiveTuple, Vec<usize>> = HashMap::new();
    for (i, f) in flows.iter().enumerate() {
        by_key.entry(f.key).or_default().push(i);
    }
    let flow_at = |key: &FiveTuple, t: f64| -> Option<usize> {
        by_key
            .get(key)?
            .iter()
            .copied()
            .find(|&i| flows[i].first_ts <= t && t <= flows[i].last_ts)
    };

    let mut conv: HashMap<(Endpoint, Endpoint), [DirState; 2]> = HashMap::new();
    let mut samples: Vec<(usize, f64)> = Vec::new();
    for p in packets {
        let Some(meta) = p.tcp_meta else { continue };
        let (ck, forward) = conv_key(&p.flow_key);
        let dirs = conv.entry(ck).or_default();
        let (me, reverse) = if forward { (0, 1) } else { (1, 0) };

        if meta.flags.ack {
            let ack = meta.ack as u64;
            let rev = &mut dirs[reverse];
            let mut i = 0;
            while i < rev.pending.len() {
                let (s, e, t1, flow_idx) = rev.pending[i];
                if e <= ack {
                    if !rev.retx.intersects(s, e) && p.timestamp >= t1 {
                        samples.push((flow_idx, p.timestamp - t1));
                    }
                    rev.pending.swap_remove(i);
                } else {
                    i += 1;
                }
            }
        }
        if meta.payload_len > 0 {
            let s = meta.seq as u64;
            let e = s + meta.payload_len as u64;
            let dir = &mut dirs[me];
            if meta.is_retransmission || dir.sent.intersects(s, e) {
                dir.retx.insert(s, e);
            } else if let Some(flow_idx) = flow_at(&p.flow_key, p.timestamp) {
                dir.pending.push((s, e, p.timestamp, flow_idx));
            }
            dirs[me].sent.insert(s, e);
        }
    }
    for (idx, rtt) in samples {
        flows[idx].rtt_samples.push(rtt);
    }
    for f in &mut flows {
        if !f.rtt_samples.is_empty() {
            let mut sorted = f.rtt_samples.clone();
            sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
            f.rtt_median = Some(crate::aggregate::median_of_sorted(&sorted));
        }
    }
    flows
}

/// One RTT class: its traffic and octave-scale RTT location/spread.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RttClass {
    pub series: BinnedSeries,
    /// log2(median RTT / delta0).
    pub j_r: f64,
    /// Median absolute deviation of log2(RTT / delta0).
    pub j_m: f64,
    pub n_flows: usize,
    pub median_rtt: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RttClassPartition {
    /// Internal RTT boundaries between consecutive classes (n_classes - 1).
    pub boundaries: Vec<f64>,
    pub classes: Vec<RttClass>,
}

/// Split RTT-bearing flows into equal-count RTT classes and aggregate
/// each class's packets on the global bin grid.
pub fn rtt_partition(
    packets: &[PacketRecord],
    flows: &[FlowRecord],
    n_classes: usize,
    delta0: f64,
) -> Result<RttClassPartition, FlowError> {
    assert!(n_classes >= 1, "need at least one class");
    let mut bearing: Vec<&FlowRecord> = flows.iter().filter(|f| f.rtt_median.is_some()).collect();
    if bearing.len() < n_classes {
        return Err(FlowError::TooFewFlows {
            got: bearing.len(),
            required: n_classes,
        });
    }
    bearing.sort_by(|a, b| {
        a.rtt_median
            .unwrap()
            .total_cmp(&b.rtt_median.unwrap())
            .then_with(|| a.key.cmp(&b.key))
    });
    let n = bearing.len();
    let t_max = packets
        .iter()
        .map(|p| p.timestamp)
        .fold(0.0f64, f64::max);
    let n_bins = (t_max / delta0).floor() as usize + 1;

    let mut class_of: HashMap<FiveTuple, Vec<(f64, f64, usize)>> = HashMap::new();
    let mut spans = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let lo = c * n / n_classes;
        let hi = (c + 1) * n / n_classes;
        spans.push((lo, hi));
        for f in &bearing[lo..hi] {
            class_of
                .entry(f.key)
                .or_default()
                .push((f.first_ts, f.last_ts, c));
        }
    }
    let mut counts = vec![vec![0u32; n_bins]; n_classes];
    for p in packets {
        if let Some(windows) = class_of.get(&p.flow_key) {
            if let Some(&(_, _, c)) = windows
                .iter()
                .find(|&&(a, b, _)| a <= p.timestamp && p.timestamp <= b)
            {
                counts[c][(p.timestamp / delta0).floor() as usize] += 1;
            }
        }
    }
    let classes = spans
        .iter()
        .zip(counts)
        .enumerate()
        .map(|(c, (&(lo, hi), cnt))| {
            let rtts: Vec<f64> = bearing[lo..hi]
                .iter()
                .map(|f| f.rtt_median.unwrap())
                .collect();
            let median_rtt = median_of(&rtts);
            let logs: Vec<f64> = rtts.iter().map(|r| (r / delta0).log2()).collect();
            let log_med = median_of(&logs);
            let devs: Vec<f64> = logs.iter().map(|l| (l - log_med).abs()).collect();
            RttClass {
                series: BinnedSeries {
                    delta0,
                    start_time: 0.0,
                    label: format!("rtt-class-{c}"),
                    counts: cnt,
                },
                j_r: (median_rtt / delta0).log2(),
                j_m: median_of(&devs),
                n_flows: hi - lo,
                median_rtt,
            }
        })
        .collect();
    let boundaries = (1..n_classes)
        .map(|c| bearing[c * n / n_classes].rtt_median.unwrap())
        .collect();
    Ok(RttClassPartition {
        boundaries,
        classes,
    })
}

fn median_of(xs: &[f64]) -> f64 {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    crate::aggregate::median_of_sorted(&v)
}

/// Direct (Pearson) and partial correlation matrices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub direct: Vec<Vec<f64>>,
    pub partial: Vec<Vec<f64>>,
    pub n_obs: usize,
}

/// Correlations among variables given as rows of observations.
///
/// partial(i,j) = -P_ij / sqrt(P_ii P_jj) with P the inverse of the
/// correlation matrix: the correlation of i and j with every other
/// variable regressed out.
pub fn partial_correlations(samples: &[Vec<f64>]) -> Result<Correlations, FlowError> {
    let vars = samples.len();
    assert!(vars >= 2, "need at least two variables");
    let n = samples[0].len();
    assert!(
        samples.iter().all(|s| s.len() == n),
        "observation counts differ"
    );
    if n < vars + 2 {
        return Err(FlowError::TooFewObservations {
            got: n,
            required: vars + 2,
            vars,
        });
    }
    let means: Vec<f64> = samples.iter().map(|s| s.iter().sum::<f64>() / n as f64).collect();
    let sds: Vec<f64> = samples
        .iter()
        .zip(&means)
        .map(|(s, m)| {
            (s.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64).sqrt()
        })
        .collect();
    if sds.iter().any(|&s| !(s > 0.0)) {
        return Err(FlowError::SingularCovariance);
    }
    let mut direct = vec![vec![0.0; vars]; vars];
    for i in 0..vars {
        direct[i][i] = 1.0;
        for j in (i + 1)..vars {
            let cov: f64 = samples[i]
                .iter()
                .zip(&samples[j])
                .map(|(a, b)| (a - means[i]) * (b - means[j]))
                .sum::<f64>()
                / (n - 1) as f64;
            let r = cov / (sds[i] * sds[j]);
            direct[i][j] = r;
            direct[j][i] = r;
        }
    }
    let corr = DMatrix::from_fn(vars, vars, |i, j| direct[i][j]);
    let prec = corr
        .try_inverse()
        .ok_or(FlowError::SingularCovariance)?;
    let mut partial = vec![vec![0.0; vars]; vars];
    for i in 0..vars {
        partial[i][i] = 1.0;
        for j in (i + 1)..vars {
            let p = -prec[(i, j)] / (prec[(i, i)] * prec[(j, j)]).sqrt();
            partial[i][j] = p;
            partial[j][i] = p;
        }
    }
    Ok(Correlations {
        direct,
        partial,
        n_obs: n,
    })
}

/// 95% CI for a correlation via the Fisher z-transform; `controlled` is
/// the number of variables conditioned out (0 for direct correlations).
pub fn fisher_ci(r: f64, n: usize, controlled: usize) -> (f64, f64) {
    let df = n as f64 - 3.0 - controlled as f64;
    if df <= 0.0 {
        return (-1.0, 1.0);
    }
    let z = r.atanh();
    let se = 1.0 / df.sqrt();
    let zc = crate::estimate::Z_975;
    ((z - zc * se).tanh(), (z + zc * se).tanh())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Protocol, TcpFlags, TcpMeta};

    fn udp(t: f64, src: [u8; 4], sport: u16, size: u32) -> PacketRecord {
        PacketRecord {
            timestamp: t,
            size,
            flow_key: FiveTuple::v4(src, sport, [10, 0, 0, 99], 80, Protocol::Udp),
            tcp_meta: None,
        }
    }

    #[test]
    fn grouping_and_timeout() {
        let packets = vec![
            udp(0.0, [10, 0, 0, 1], 1000, 100),
            udp(0.1, [10, 0, 0, 2], 1000, 60),
            udp(0.2, [10, 0, 0, 1], 1000, 100),
        ];
        let flows = build_flows(&packets);
        assert_eq!(flows.len(), 2);
        assert_eq!(flows[0].packet_count, 2);
        assert_eq!(flows[0].byte_count, 200);
        assert_eq!(flows[1].packet_count, 1);
        assert!(build_flows(&[]).is_empty());
        // same tuple, 70 s apart: two records
        let packets = vec![
            udp(0.0, [10, 0, 0, 1], 1000, 100),
            udp(70.0, [10, 0, 0, 1], 1000, 100),
        ];
        assert_eq!(build_flows(&packets).len(), 2);
        assert_eq!(build_flows_with_timeout(&packets, 80.0).len(), 1);
    }

    #[test]
    fn exact_pareto_quantiles_give_exact_alpha() {
        let alpha = 1.5;
        let n = 5000usize;
        // s_i = (n/(n-i))^{1/alpha}: ccdf(s_i with >=) = (n-i)/n exactly
        let sizes: Vec<f64> = (0..n)
            .map(|i| (n as f64 / (n - i) as f64).powf(1.0 / alpha))
            .collect();
        let est = tail_index(&sizes, 0.95, 0.999).unwrap();
        assert!(
            (est.alpha - alpha).abs() < 1e-9,
            "alpha {} off the line",
            est.alpha
        );
        assert_eq!(est.implied_h, (3.0 - est.alpha) / 2.0);
        // scale invariance
        let scaled: Vec<f64> = sizes.iter().map(|s| s * 1000.0).collect();
        let est2 = tail_index(&scaled, 0.95, 0.999).unwrap();
        assert!((est2.alpha - est.alpha).abs() < 1e-10);
    }

    #[test]
    fn sampled_pareto_recovers_the_index() {
        let alpha = 1.19;
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let sizes: Vec<f64> = (0..100_000)
            .map(|_| (1.0 - rng.random::<f64>()).powf(-1.0 / alpha))
            .collect();
        let est = tail_index(&sizes, 0.95, 0.999).unwrap();
        assert!(
            (1.09..=1.29).contains(&est.alpha),
            "alpha estimate {}",
            est.alpha
        );
        assert!(
            (est.hill_alpha - alpha).abs() < 0.15,
            "hill {}",
            est.hill_alpha
        );
        assert!(est.ci_low <= alpha && alpha <= est.ci_high);
        assert!((est.implied_h - 0.905).abs() < 0.06);
    }

    #[test]
    fn tail_error_paths() {
        let few = vec![2.0; 500];
        assert!(matches!(
            tail_index(&few, 0.95, 0.999),
            Err(FlowError::TooFewFlows { .. })
        ));
        let flat = vec![7.0; 5000];
        assert!(matches!(
            tail_index(&flat, 0.95, 0.999),
            Err(FlowError::DegenerateTail { .. })
        ));
        let ok = vec![1.0; 2000];
        assert!(matches!(
            tail_index(&ok, 0.4, 0.999),
            Err(FlowError::InvalidQuantiles(..))
        ));
        assert!(matches!(
            tail_index(&ok, 0.99, 0.95),
            Err(FlowError::InvalidQuantiles(..))
        ));
    }

    const CLIENT: [u8; 4] = [10, 0, 0, 1];
    const SERVER: [u8; 4] = [10, 0, 0, 2];

    fn tcp(
        t: f64,
        from_client: bool,
        seq: u32,
        ack: u32,
        payload: u32,
        ack_flag: bool,
    ) -> PacketRecord {
        let key = if from_client {
            FiveTuple::v4(CLIENT, 40000, SERVER, 80, Protocol::Tcp)
        } else {
            FiveTuple::v4(SERVER, 80, CLIENT, 40000, Protocol::Tcp)
        };
        PacketRecord {
            timestamp: t,
            size: 54 + payload,
            flow_key: key,
            tcp_meta: Some(TcpMeta {
                seq,
                ack,
                flags: TcpFlags {
                    syn: false,
                    ack: ack_flag,
                    fin: false,
                    rst: false,
                },
                payload_len: payload,
                is_retransmission: false,
            }),
        }
    }

    #[test]
    fn single_unambiguous_exchange() {
        let packets = vec![
            tcp(0.00, true, 1, 0, 100, false),
            tcp(0.10, false, 1, 101, 0, true),
        ];
        let flows = karn_rtt(&packets);
        let data_flow = flows.iter().find(|f| f.key.src_port == 40000).unwrap();
        assert_eq!(data_flow.rtt_samples, vec![0.1]);
        assert_eq!(data_flow.rtt_median, Some(0.1));
    }

    #[test]
    fn retransmission_before_ack_kills_the_sample() {
        let packets = vec![
            tcp(0.00, true, 1, 0, 100, false),
            tcp(0.05, true, 1, 0, 100, false), // same range again
            tcp(0.10, false, 1, 101, 0, true),
        ];
        let flows = karn_rtt(&packets);
        let data_flow = flows.iter().find(|f| f.key.src_port == 40000).unwrap();
        assert!(data_flow.rtt_samples.is_empty());
        assert_eq!(data_flow.rtt_median, None);
    }

    #[test]
    fn ten_exchanges_with_one_straggler() {
        let mut packets = Vec::new();
        let delays = [0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.01, 0.05];
        let mut seq = 1u32;
        for (i, d) in delays.iter().enumerate() {
            let t = i as f64;
            packets.push(tcp(t, true, seq, 0, 100, false));
            packets.push(tcp(t + d, false, 1, seq + 100, 0, true));
            seq += 100;
        }
        let flows = karn_rtt(&packets);
        let data_flow = flows.iter().find(|f| f.key.src_port == 40000).unwrap();
        assert_eq!(data_flow.rtt_samples.len(), 10);
        assert!((data_flow.rtt_median.unwrap() - 0.01).abs() < 1e-12);
    }

    #[test]
    fn delayed_ack_samples_every_covered_segment() {
        let packets = vec![
            tcp(0.00, true, 1, 0, 100, false),
            tcp(0.02, true, 101, 0, 100, false),
            tcp(0.10, false, 1, 201, 0, true), // covers both
        ];
        let flows = karn_rtt(&packets);
        let data_flow = flows.iter().find(|f| f.key.src_port == 40000).unwrap();
        let mut got = data_flow.rtt_samples.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert_eq!(got.len(), 2);
        assert!((got[0] - 0.08).abs() < 1e-12);
        assert!((got[1] - 0.10).abs() < 1e-12);
    }

    #[test]
    fn out_of_order_segments_sample_correctly() {
        // second block arrives first; cumulative ACKs release in order
        let packets = vec![
            tcp(0.00, true, 101, 0, 100, false), // bytes 101..201
            tcp(0.01, true, 1, 0, 100, false),   // bytes 1..101 (no overlap)
            tcp(0.10, false, 1, 201, 0, true),   // acks everything
        ];
        let flows = karn_rtt(&packets);
        let data_flow = flows.iter().find(|f| f.key.src_port == 40000).unwrap();
        assert_eq!(data_flow.rtt_samples.len(), 2);
        // both sampled against the single ACK
        let mut got = data_flow.rtt_samples.clone();
        got.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((got[0] - 0.09).abs() < 1e-12);
        assert!((got[1] - 0.10).abs() < 1e-12);
    }

    #[test]
    fn acks_of_retransmitted_ranges_are_never_sampled() {
        // range 1..101 retransmitted; a later fresh range still samples
        let packets = vec![
            tcp(0.00, true, 1, 0, 100, false),
            tcp(0.03, true, 1, 0, 100, false), // retx
            tcp(0.10, false, 1, 101, 0, true), // ack of poisoned range
            tcp(0.20, true, 101, 0, 100, false),
            tcp(0.25, false, 1, 201, 0, true),
        ];
        let flows = karn_rtt(&packets);
        let data_flow = flows.iter().find(|f| f.key.src_port == 40000).unwrap();
        assert_eq!(data_flow.rtt_samples.len(), 1);
        assert!((data_flow.rtt_samples[0] - 0.05).abs() < 1e-12);
    }

    fn rtt_flow(ms: f64, port: u16) -> FlowRecord {
        FlowRecord {
            key: FiveTuple::v4([10, 0, 0, 3], port, [10, 0, 0, 4], 443, Protocol::Tcp),
            packet_count: 1,
            byte_count: 100,
            first_ts: 0.0,
            last_ts: 10.0,
            rtt_samples: vec![ms / 1000.0],
            rtt_median: Some(ms / 1000.0),
        }
    }

    #[test]
    fn quantile_split_one_flow_per_class() {
        let flows: Vec<FlowRecord> = [1.0, 2.0, 3.0, 4.0]
            .iter()
            .enumerate()
            .map(|(i, &ms)| rtt_flow(ms, 1000 + i as u16))
            .collect();
        let packets: Vec<PacketRecord> = flows
            .iter()
            .map(|f| PacketRecord {
                timestamp: 1.0,
                size: 100,
                flow_key: f.key,
                tcp_meta: None,
            })
            .collect();
        let part = rtt_partition(&packets, &flows, 4, 0.000125).unwrap();
        assert_eq!(part.classes.len(), 4);
        for (c, ms) in part.classes.iter().zip([1.0, 2.0, 3.0, 4.0]) {
            assert_eq!(c.n_flows, 1);
            assert_eq!(c.series.total(), 1);
            assert!((c.median_rtt - ms / 1000.0).abs() < 1e-12);
            assert!((c.j_r - (ms / 1000.0 / 0.000125).log2()).abs() < 1e-12);
            assert_eq!(c.j_m, 0.0);
        }
        assert_eq!(part.boundaries.len(), 3);

        let single = rtt_partition(&packets, &flows, 1, 0.000125).unwrap();
        assert_eq!(single.classes[0].series.total(), 4);
        assert_eq!(single.classes[0].n_flows, 4);
    }

    #[test]
    fn two_population_mix_recovers_population_medians() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let mut flows = Vec::new();
        for i in 0..200u16 {
            let base = if i % 2 == 0 { 10.0 } else { 200.0 };
            let ms = base * (0.95 + 0.1 * rng.random::<f64>());
            flows.push(rtt_flow(ms, 1000 + i));
        }
        let packets: Vec<PacketRecord> = flows
            .iter()
            .map(|f| PacketRecord {
                timestamp: 0.5,
                size: 100,
                flow_key: f.key,
                tcp_meta: None,
            })
            .collect();
        let part = rtt_partition(&packets, &flows, 2, 0.000125).unwrap();
        assert!((part.classes[0].median_rtt - 0.010).abs() / 0.010 < 0.1);
        assert!((part.classes[1].median_rtt - 0.200).abs() / 0.200 < 0.1);
        assert!(matches!(
            rtt_partition(&packets, &flows[..1], 2, 0.000125),
            Err(FlowError::TooFewFlows { .. })
        ));
    }

    #[test]
    fn independent_variables_have_no_partials() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|_| {
                (0..10_000)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        let c = partial_correlations(&cols).unwrap();
        for i in 0..3 {
            assert_eq!(c.partial[i][i], 1.0);
            for j in 0..3 {
                if i != j {
                    assert!(c.partial[i][j].abs() < 0.05);
                    assert_eq!(c.partial[i][j], c.partial[j][i]);
                }
            }
        }
    }

    #[test]
    fn chain_dependence_vanishes_given_the_middle() {
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let n = 20_000;
        let x: Vec<f64> = (0..n)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| v + rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let z: Vec<f64> = y
            .iter()
            .map(|&v| v + rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let c = partial_correlations(&[x, y, z]).unwrap();
        assert!(c.direct[0][2] > 0.3, "direct {}", c.direct[0][2]);
        assert!(c.partial[0][2].abs() < 0.05, "partial {}", c.partial[0][2]);
    }

    #[test]
    fn two_variable_partial_is_the_direct_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        let x: Vec<f64> = (0..500)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let y: Vec<f64> = x
            .iter()
            .map(|&v| 0.7 * v + rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let c = partial_correlations(&[x, y]).unwrap();
        assert!((c.partial[0][1] - c.direct[0][1]).abs() < 1e-12);
    }

    #[test]
    fn partial_matches_residual_regression() {
        let mut rng = ChaCha8Rng::seed_from_u64(44);
        let n = 300;
        let mut cols: Vec<Vec<f64>> = (0..4)
            .map(|_| {
                (0..n)
                    .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
                    .collect()
            })
            .collect();
        // mix them so correlations are non-trivial
        for i in 0..n {
            cols[1][i] += 0.5 * cols[0][i];
            cols[2][i] += 0.3 * cols[0][i] - 0.4 * cols[1][i];
            cols[3][i] += 0.2 * cols[2][i];
        }
        let c = partial_correlations(&cols).unwrap();
        let brute = residual_corr(&cols, 0, 3, &[1, 2]);
        assert!(
            (c.partial[0][3] - brute).abs() < 1e-10,
            "formula {} vs brute {}",
            c.partial[0][3],
            brute
        );
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let flat = vec![vec![1.0; 50], vec![2.0; 50]];
        assert!(matches!(
            partial_correlations(&flat),
            Err(FlowError::SingularCovariance)
        ));
        let short = vec![vec![1.0, 2.0, 3.0], vec![2.0, 1.0, 3.0]];
        assert!(matches!(
            partial_correlations(&short),
            Err(FlowError::TooFewObservations { .. })
        ));
    }

    /// Partial correlation by regressing the controls out of both targets
    /// and correlating the residuals.
    pub(crate) fn residual_corr(cols: &[Vec<f64>], i: usize, j: usize, controls: &[usize]) -> f64 {
        let n = cols[0].len();
        let k = controls.len() + 1;
        let mut design = DMatrix::zeros(n, k);
        for r in 0..n {
            design[(r, 0)] = 1.0;
            for (c, &v) in controls.iter().enumerate() {
                design[(r, c + 1)] = cols[v][r];
            }
        }
        let resid = |target: &[f64]| -> Vec<f64> {
            let y = DMatrix::from_column_slice(n, 1, target);
            let xt = design.transpose();
            let beta = (&xt * &design)
                .try_inverse()
                .expect("well-conditioned design")
                * (&xt * &y);
            let fit = &design * beta;
            (0..n).map(|r| target[r] - fit[(r, 0)]).collect()
        };
        let a = resid(&cols[i]);
        let b = resid(&cols[j]);
        let ma = a.iter().sum::<f64>() / n as f64;
        let mb = b.iter().sum::<f64>() / n as f64;
        let cov: f64 = a.iter().zip(&b).map(|(x, y)| (x - ma) * (y - mb)).sum();
        let va: f64 = a.iter().map(|x| (x - ma) * (x - ma)).sum();
        let vb: f64 = b.iter().map(|y| (y - mb) * (y - mb)).sum();
        cov / (va * vb).sqrt()
    }
}
