//! Weighted regression over logscale diagrams and what hangs off it:
//! goodness of fit, bootstrap confidence intervals, biscaling frontier
//! location, and the published octave-range presets.
//!
//! Every parameter estimate is a straight line fit `value(j) ~ a + b j`
//! weighted by inverse variances. The slope maps to the parameter of the
//! diagram's kind: `H = (b + 2) / 2` for second-order structure functions,
//! `c_p = b / ln 2` for cumulant diagrams, and `zeta(q) = b` for leader
//! structure functions.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::ld::{LdKind, LdPoint, LogscaleDiagram, LN_2};
use crate::leaders::LeaderPyramid;
use crate::wavelet::WaveletPyramid;

/// Two-sided 95% normal quantile.
pub const Z_975: f64 = 1.959963984540054;

/// Default number of bootstrap resamples.
pub const DEFAULT_RESAMPLES: u32 = 499;

/// Default z threshold the fine- and coarse-range slopes must clear before
/// a frontier is searched for; below it the diagram is called monoscaling.
pub const DEFAULT_SLOPE_GATE: f64 = 2.576;

#[derive(Debug, Error)]
pub enum EstimateError {
    #[error("octave range [{j1}, {j2}] not covered by diagram (has [{have_lo}, {have_hi}] with gaps allowed)")]
    RangeNotCovered {
        j1: u32,
        j2: u32,
        have_lo: u32,
        have_hi: u32,
    },
    #[error("need at least {required} octaves for a fit, range has {got}")]
    TooFewOctaves { got: usize, required: usize },
    #[error("non-positive variance at octave {j}; weights are degenerate")]
    DegenerateWeights { j: u32 },
    #[error("invalid octave range [{j1}, {j2}]")]
    InvalidRange { j1: u32, j2: u32 },
    #[error("fine range [{fs1}, {fs2}] must end below the start of coarse range [{cs1}, {cs2}]")]
    RangesOverlap {
        fs1: u32,
        fs2: u32,
        cs1: u32,
        cs2: u32,
    },
    #[error("{kind} cannot be bootstrapped from this source; coefficients give log2_Sd, leaders give C_p and log2_SL")]
    KindSourceMismatch { kind: LdKind },
    #[error("diagram is empty")]
    EmptyDiagram,
}

/// How the confidence interval was produced.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CiMethod {
    Wls,
    Bootstrap { resamples: u32 },
}

/// A fitted scaling parameter over an octave range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingEstimate {
    pub kind: LdKind,
    /// The mapped parameter: `H`, `c_p`, or `zeta(q)`.
    pub value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    /// Raw regression slope per octave.
    pub slope: f64,
    pub slope_se: f64,
    pub intercept: f64,
    /// Chi-square tail probability of the weighted residuals.
    pub gof_p: f64,
    pub j1: u32,
    pub j2: u32,
    pub method: CiMethod,
}

impl ScalingEstimate {
    /// Predicted diagram value at octave `j` under this fit.
    pub fn predict(&self, j: f64) -> f64 {
        self.intercept + self.slope * j
    }
}

fn map_slope(kind: LdKind, slope: f64) -> f64 {
    match kind {
        LdKind::Log2Sd => (slope + 2.0) / 2.0,
        LdKind::C1 | LdKind::C2 | LdKind::C3 => slope / LN_2,
        LdKind::Log2Sl(_) => slope,
    }
}

struct WlsFit {
    slope: f64,
    intercept: f64,
    slope_se: f64,
    chi2: f64,
    df: usize,
}

fn wls(points: &[LdPoint]) -> Result<WlsFit, EstimateError> {
    if points.len() < 3 {
        return Err(EstimateError::TooFewOctaves {
            got: points.len(),
            required: 3,
        });
    }
    for p in points {
        if !(p.variance > 0.0) || !p.variance.is_finite() || !p.value.is_finite() {
            return Err(EstimateError::DegenerateWeights { j: p.j });
        }
    }
    let w_sum: f64 = points.iter().map(|p| 1.0 / p.variance).sum();
    let x_bar: f64 = points
        .iter()
        .map(|p| p.j as f64 / p.variance)
        .sum::<f64>()
        / w_sum;
    let y_bar: f64 = points.iter().map(|p| p.value / p.variance).sum::<f64>() / w_sum;
    let mut s_xx = 0.0;
    let mut s_xy = 0.0;
    for p in points {
        let w = 1.0 / p.variance;
        let dx = p.j as f64 - x_bar;
        s_xx += w * dx * dx;
        s_xy += w * dx * (p.value - y_bar);
    }
    if s_xx <= 0.0 {
        return Err(EstimateError::InvalidRange {
            j1: points[0].j,
            j2: points[points.len() - 1].j,
        });
    }
    let slope = s_xy / s_xx;
    let intercept = y_bar - slope * x_bar;
    let chi2: f64 = points
        .iter()
        .map(|p| {
            let r = p.value - (intercept + slope * p.j as f64);
            r * r / p.variance
        })
        .sum();
    Ok(WlsFit {
        slope,
        intercept,
        slope_se: (1.0 / s_xx).sqrt(),
        chi2,
        df: points.len() - 2,
    })
}

fn gof_p(chi2: f64, df: usize) -> f64 {
    if df == 0 {
        return 1.0;
    }
    let dist = ChiSquared::new(df as f64).expect("df >= 1");
    1.0 - dist.cdf(chi2.max(0.0))
}

/// Weighted least-squares fit of a diagram over octaves `j1..=j2`, with
/// the slope mapped to the kind's parameter and a chi-square
/// goodness-of-fit tail probability.
pub fn fit_scaling(
    ld: &LogscaleDiagram,
    j1: u32,
    j2: u32,
) -> Result<ScalingEstimate, EstimateError> {
    if j1 >= j2 {
        return Err(EstimateError::InvalidRange { j1, j2 });
    }
    if ld.octaves.is_empty() {
        return Err(EstimateError::EmptyDiagram);
    }
    let points = ld
        .range(j1, j2)
        .map_err(|_| EstimateError::RangeNotCovered {
            j1,
            j2,
            have_lo: ld.j_min().unwrap_or(0),
            have_hi: ld.j_max().unwrap_or(0),
        })?;
    let fit = wls(&points)?;
    let value = map_slope(ld.kind, fit.slope);
    let se_mapped = match ld.kind {
        LdKind::Log2Sd => fit.slope_se / 2.0,
        LdKind::C1 | LdKind::C2 | LdKind::C3 => fit.slope_se / LN_2,
        LdKind::Log2Sl(_) => fit.slope_se,
    };
    Ok(ScalingEstimate {
        kind: ld.kind,
        value,
        ci_low: value - Z_975 * se_mapped,
        ci_high: value + Z_975 * se_mapped,
        slope: fit.slope,
        slope_se: fit.slope_se,
        intercept: fit.intercept,
        gof_p: gof_p(fit.chi2, fit.df),
        j1,
        j2,
        method: CiMethod::Wls,
    })
}

/// Raw per-octave observations the bootstrap resamples.
pub enum BootstrapSource<'a> {
    /// Detail coefficients; supports `Log2Sd`.
    Coeffs(&'a WaveletPyramid),
    /// Leaders; supports `C1`, `C2`, `C3`, and `Log2Sl(q)`.
    Leaders(&'a LeaderPyramid),
}

/// Per-octave data prepared for block resampling: power sums of the
/// transformed observations plus the fixed regression weight.
struct OctaveData {
    j: u32,
    n: usize,
    block_len: usize,
    /// Circular prefix sums of x, x^2, x^3 (orders as needed).
    prefix: [Vec<f64>; 3],
    orders: usize,
    variance: f64,
    value: f64,
}

fn prefix_sums(xs: &[f64], order: usize) -> [Vec<f64>; 3] {
    let mut out = [Vec::new(), Vec::new(), Vec::new()];
    for (o, dst) in out.iter_mut().enumerate().take(order) {
        let mut acc = 0.0;
        dst.reserve(xs.len() + 1);
        dst.push(0.0);
        for &x in xs {
            acc += x.powi(o as i32 + 1);
            dst.push(acc);
        }
    }
    out
}

fn circular_sum(prefix: &[f64], n: usize, start: usize, len: usize) -> f64 {
    debug_assert!(start < n && len <= n);
    if start + len <= n {
        prefix[start + len] - prefix[start]
    } else {
        (prefix[n] - prefix[start]) + prefix[start + len - n]
    }
}

/// Block length `max(2, n^(1/3))`, rounded to nearest.
pub fn bootstrap_block_len(n: usize) -> usize {
    ((n as f64).powf(1.0 / 3.0).round() as usize).max(2).min(n)
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Deterministic substream seed for octave `j`, resample `r`.
fn substream(seed: u64, j: u32, r: u32) -> u64 {
    splitmix64(seed ^ splitmix64(((j as u64) << 32) | r as u64))
}

fn octave_statistic(kind: LdKind, n: f64, s1: f64, s2: f64, s3: f64) -> f64 {
    match kind {
        LdKind::Log2Sd | LdKind::Log2Sl(_) => (s1 / n).log2(),
        LdKind::C1 => s1 / n,
        LdKind::C2 => {
            let m2 = s2 / n - (s1 / n) * (s1 / n);
            n / (n - 1.0) * m2
        }
        LdKind::C3 => {
            let mean = s1 / n;
            let m3 = s3 / n - 3.0 * mean * s2 / n + 2.0 * mean * mean * mean;
            n * n / ((n - 1.0) * (n - 2.0)) * m3
        }
    }
}

fn prepare_octaves(
    source: &BootstrapSource,
    kind: LdKind,
    j1: u32,
    j2: u32,
) -> Result<Vec<OctaveData>, EstimateError> {
    // Build the reference diagram exactly as the direct path does, then
    // attach raw observations per octave.
    let (ld, raw): (LogscaleDiagram, Vec<(u32, Vec<f64>)>) = match (source, kind) {
        (BootstrapSource::Coeffs(p), LdKind::Log2Sd) => {
            let ld = crate::wavelet::structure_fn(p);
            let raw = p
                .octaves
                .iter()
                .map(|o| (o.j, o.coeffs.iter().map(|d| d * d).collect()))
                .collect();
            (ld, raw)
        }
        (BootstrapSource::Leaders(lp), LdKind::Log2Sl(q)) => {
            let ld = crate::leaders::leader_structure_fn(lp, q)
                .map_err(|_| EstimateError::EmptyDiagram)?;
            let raw = lp
                .octaves
                .iter()
                .map(|o| {
                    (
                        o.j,
                        o.leaders
                            .iter()
                            .filter(|&&l| l > 0.0)
                            .map(|l| l.powf(q))
                            .collect(),
                    )
                })
                .collect();
            (ld, raw)
        }
        (BootstrapSource::Leaders(lp), LdKind::C1 | LdKind::C2 | LdKind::C3) => {
            let order = kind.cumulant_order().unwrap();
            let ld = crate::leaders::cumulants(lp, order)
                .into_iter()
                .find(|d| d.kind == kind)
                .ok_or(EstimateError::EmptyDiagram)?;
            let raw = lp
                .octaves
                .iter()
                .map(|o| {
                    (
                        o.j,
                        o.leaders
                            .iter()
                            .filter(|&&l| l > 0.0)
                            .map(|&l| l.ln())
                            .collect(),
                    )
                })
                .collect();
            (ld, raw)
        }
        _ => return Err(EstimateError::KindSourceMismatch { kind }),
    };
    let points = ld
        .range(j1, j2)
        .map_err(|_| EstimateError::RangeNotCovered {
            j1,
            j2,
            have_lo: ld.j_min().unwrap_or(0),
            have_hi: ld.j_max().unwrap_or(0),
        })?;
    let orders = match kind {
        LdKind::Log2Sd | LdKind::Log2Sl(_) | LdKind::C1 => 1,
        LdKind::C2 => 2,
        LdKind::C3 => 3,
    };
    let mut out = Vec::with_capacity(points.len());
    for p in &points {
        let xs = raw
            .iter()
            .find(|(j, _)| *j == p.j)
            .map(|(_, xs)| xs.as_slice())
            .expect("diagram octaves come from the raw pyramid");
        // cumulant diagrams drop zero leaders, so n_j tracks the filtered count
        debug_assert_eq!(xs.len() as u64, p.n_j);
        out.push(OctaveData {
            j: p.j,
            n: xs.len(),
            block_len: bootstrap_block_len(xs.len()),
            prefix: prefix_sums(xs, orders),
            orders,
            variance: p.variance,
            value: p.value,
        });
    }
    Ok(out)
}

/// Percentile confidence interval for a scaling parameter by circular
/// block bootstrap of the per-octave observations.
///
/// Each resample redraws every octave in blocks of length `max(2, n^(1/3))`
/// (wrapping at the boundary), recomputes the per-octave statistic, and
/// refits the weighted regression with the original weights. The interval
/// is the 2.5%..97.5% span of the resampled parameter; the point estimate,
/// slope, and goodness of fit are those of the direct fit. Resampling is
/// deterministic in `seed` and independent of thread count.
pub fn bootstrap_ci(
    source: BootstrapSource,
    kind: LdKind,
    j1: u32,
    j2: u32,
    resamples: u32,
    seed: u64,
) -> Result<ScalingEstimate, EstimateError> {
    if j1 >= j2 {
        return Err(EstimateError::InvalidRange { j1, j2 });
    }
    let delta0 = match &source {
        BootstrapSource::Coeffs(p) => p.delta0,
        BootstrapSource::Leaders(lp) => lp.delta0,
    };
    let octs = prepare_octaves(&source, kind, j1, j2)?;
    let base_points: Vec<LdPoint> = octs
        .iter()
        .map(|o| LdPoint {
            j: o.j,
            n_j: o.n as u64,
            value: o.value,
            variance: o.variance,
        })
        .collect();
    let base_ld = LogscaleDiagram {
        kind,
        delta0,
        label: None,
        octaves: base_points.clone(),
    };
    let mut est = fit_scaling(&base_ld, j1, j2)?;

    let replicate = |r: u32| -> f64 {
        let mut points = Vec::with_capacity(octs.len());
        for o in &octs {
            let mut rng = ChaCha8Rng::seed_from_u64(substream(seed, o.j, r));
            let n = o.n;
            let l = o.block_len;
            let n_blocks = n.div_ceil(l);
            let mut sums = [0.0f64; 3];
            let mut remaining = n;
            for _ in 0..n_blocks {
                let start = rng.random_range(0..n);
                let take = remaining.min(l);
                for (ord, sum) in sums.iter_mut().enumerate().take(o.orders) {
                    *sum += circular_sum(&o.prefix[ord], n, start, take);
                }
                remaining -= take;
            }
            let value = octave_statistic(kind, n as f64, sums[0], sums[1], sums[2]);
            points.push(LdPoint {
                j: o.j,
                n_j: n as u64,
                value,
                variance: o.variance,
            });
        }
        // weights are fixed, so the refit cannot fail once the base fit passed
        let ld = LogscaleDiagram {
            kind,
            delta0,
            label: None,
            octaves: points,
        };
        fit_scaling(&ld, j1, j2).map(|e| e.value).unwrap_or(f64::NAN)
    };

    let mut values: Vec<f64> = (0..resamples)
        .into_par_iter()
        .map(replicate)
        .filter(|v| v.is_finite())
        .collect();
    if values.len() >= 8 {
        values.sort_by(|a, b| a.partial_cmp(b).unwrap());
        est.ci_low = percentile(&values, 0.025);
        est.ci_high = percentile(&values, 0.975);
        est.method = CiMethod::Bootstrap {
            resamples,
        };
    }
    Ok(est)
}

fn percentile(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    let pos = p * (n - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    if lo == hi {
        sorted[lo]
    } else {
        let frac = pos - lo as f64;
        sorted[lo] * (1.0 - frac) + sorted[hi] * frac
    }
}

/// Outcome of the frontier search.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum FrontierOutcome {
    /// Distinct fine- and coarse-scale regimes with the octave where the
    /// balance of fit departures crosses.
    Biscaling {
        /// Interpolated frontier octave.
        j_f: f64,
        /// Frontier time scale in seconds, `delta0 * 2^j_f`.
        delta_f: f64,
        fs_fit: ScalingEstimate,
        cs_fit: ScalingEstimate,
    },
    /// One scaling regime explains the whole diagram.
    Monoscaling {
        fs_fit: ScalingEstimate,
        cs_fit: ScalingEstimate,
    },
}

impl FrontierOutcome {
    pub fn j_f(&self) -> Option<f64> {
        match self {
            FrontierOutcome::Biscaling { j_f, .. } => Some(*j_f),
            FrontierOutcome::Monoscaling { .. } => None,
        }
    }
}

/// Locate the octave where fine-scale and coarse-scale regimes meet.
///
/// Fits the two ranges separately. If the slopes do not differ by at least
/// `slope_gate` standard errors the diagram is monoscaling: with a single
/// regime both fits extrapolate equally well and the departure difference
/// is pure noise, so no crossing is reported. Otherwise the departure
/// `D(j) = |value(j) - fs_fit(j)| - |value(j) - cs_fit(j)|` is scanned from
/// fine to coarse and the first sign change, linearly interpolated, is the
/// frontier.
pub fn find_frontier(
    ld: &LogscaleDiagram,
    fs: (u32, u32),
    cs: (u32, u32),
    slope_gate: f64,
) -> Result<FrontierOutcome, EstimateError> {
    if fs.1 >= cs.0 {
        return Err(EstimateError::RangesOverlap {
            fs1: fs.0,
            fs2: fs.1,
            cs1: cs.0,
            cs2: cs.1,
        });
    }
    let fs_fit = fit_scaling(ld, fs.0, fs.1)?;
    let cs_fit = fit_scaling(ld, cs.0, cs.1)?;
    let z = (fs_fit.slope - cs_fit.slope).abs()
        / (fs_fit.slope_se * fs_fit.slope_se + cs_fit.slope_se * cs_fit.slope_se).sqrt();
    if !(z >= slope_gate) {
        return Ok(FrontierOutcome::Monoscaling { fs_fit, cs_fit });
    }
    let pts: Vec<&LdPoint> = ld
        .octaves
        .iter()
        .filter(|p| p.j >= fs.0 && p.j <= cs.1)
        .collect();
    let d = |p: &LdPoint| -> f64 {
        let dep_fs = (p.value - fs_fit.predict(p.j as f64)).abs();
        let dep_cs = (p.value - cs_fit.predict(p.j as f64)).abs();
        dep_fs - dep_cs
    };
    let ds: Vec<(u32, f64)> = pts.iter().map(|p| (p.j, d(p))).collect();
    for i in 0..ds.len().saturating_sub(1) {
        let (j_a, d_a) = ds[i];
        let (j_b, d_b) = ds[i + 1];
        if j_b != j_a + 1 {
            continue; // dropped octave; no adjacency to interpolate over
        }
        // finest sign change, including a touch of zero on one side only
        if d_a * d_b <= 0.0 && !(d_a == 0.0 && d_b == 0.0) {
            let j_f = j_a as f64 + d_a / (d_a - d_b);
            return Ok(FrontierOutcome::Biscaling {
                j_f,
                delta_f: ld.delta0 * j_f.exp2(),
                fs_fit,
                cs_fit,
            });
        }
    }
    Ok(FrontierOutcome::Monoscaling { fs_fit, cs_fit })
}

/// Measurement era of a trace, for octave-range presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Era {
    /// 2001 through 2006.
    Y2001To2006,
    /// 2007 through 2014.
    Y2007To2014,
}

/// Length of the analyzed block, for octave-range presets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlockKind {
    /// A single 15-minute trace.
    Trace15Min,
    /// A 6-hour block of a long capture.
    Block6h,
}

/// Fine- and coarse-scale octave ranges for a given era and block length,
/// at the reference bin width of 0.125 ms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RangePreset {
    pub fs: (u32, u32),
    pub cs: (u32, u32),
}

pub fn range_presets(era: Era, block: BlockKind) -> RangePreset {
    let fs = match era {
        Era::Y2001To2006 => (7, 10),
        Era::Y2007To2014 => (4, 10),
    };
    let cs = match block {
        BlockKind::Block6h => (13, 23),
        BlockKind::Trace15Min => match era {
            Era::Y2001To2006 => (13, 18),
            Era::Y2007To2014 => (12, 18),
        },
    };
    RangePreset { fs, cs }
}
