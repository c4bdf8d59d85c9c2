//! End-to-end pipeline orchestration and report plumbing.
//!
//! `run_analyze` drives ingest output through aggregation, sketch
//! partitioning, wavelet/leader diagrams, median robustification, range
//! fits, and the frontier search, and returns one self-contained
//! `AnalysisReport`: rerunning with the recorded config reproduces every
//! number bit-exactly. `run_report` projects a report to CSV or gnuplot
//! data files. Optional analyses that cannot run on the given input
//! (tail on too few flows, coarse octaves on a short trace) degrade to
//! warnings instead of failing the run; requested ranges are clamped to
//! the octaves the trace actually supports and the fit records the
//! range it used.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aggregate::{self, AggregateError, BinnedSeries, DEFAULT_DELTA0};
use crate::estimate::{
    bootstrap_ci, find_frontier, fit_scaling, BootstrapSource, EstimateError, FrontierOutcome,
    ScalingEstimate, DEFAULT_RESAMPLES, DEFAULT_SLOPE_GATE, Z_975,
};
use crate::flows::{self, FlowError, TailEstimate, DEFAULT_TAIL_QUANTILES};
use crate::ingest::{IngestError, PacketRecord};
use crate::ld::{LdKind, LogscaleDiagram};
use crate::leaders::{compute_leaders, cumulants, leader_structure_fn, LeaderError, DEFAULT_GAMMA};
use crate::sketch::{self, HashKey, SketchError, DEFAULT_M};
use crate::synth::GeneratorSpec;
use crate::wavelet::{dwt, structure_fn, Wavelet, WaveletError, DEFAULT_N_MIN};

#[derive(Debug, Error)]
pub enum AnalyzeError {
    #[error("aggregate: {0}")]
    Aggregate(#[from] AggregateError),
    #[error("sketch: {0}")]
    Sketch(#[from] SketchError),
    #[error("wavelet: {0}")]
    Wavelet(#[from] WaveletError),
    #[error("leaders: {0}")]
    Leaders(#[from] LeaderError),
    #[error("estimate: {0}")]
    Estimate(#[from] EstimateError),
    #[error("flows: {0}")]
    Flows(#[from] FlowError),
    #[error("ingest: {0}")]
    Ingest(#[from] IngestError),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Resolved pipeline configuration; the echo of this struct inside a
/// report is what makes the report reproducible.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Finest bin width in seconds.
    pub delta0: f64,
    /// Sketch depth: `2^m` sub-traces. `0` skips sketching entirely.
    pub m: u32,
    pub key: HashKey,
    pub seed: u64,
    pub vanishing_moments: u32,
    pub gamma: f64,
    /// Coarsest octave keeps at least this many coefficients.
    pub n_min: usize,
    /// Fine-scale fit range in octaves.
    pub fs: (u32, u32),
    /// Coarse-scale fit range in octaves.
    pub cs: (u32, u32),
    /// Bootstrap resamples for the global-branch CIs; `0` keeps the
    /// analytic WLS intervals everywhere.
    pub bootstrap: u32,
    pub slope_gate: f64,
    pub require_biscaling: bool,
    /// Fit a flow-size tail index (packet input only).
    pub tail: bool,
    pub tail_quantiles: (f64, f64),
    /// Run Karn RTT sampling and RTT-class partitioning (packet input only).
    pub rtt: bool,
    pub rtt_classes: usize,
    pub label: String,
    /// Stamp the report with a creation time. Off for byte-stable output.
    pub timestamps: bool,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            delta0: DEFAULT_DELTA0,
            m: DEFAULT_M,
            key: HashKey::SrcIp,
            seed: 1,
            vanishing_moments: crate::wavelet::DEFAULT_VANISHING_MOMENTS,
            gamma: DEFAULT_GAMMA,
            n_min: DEFAULT_N_MIN,
            fs: (4, 10),
            cs: (12, 18),
            bootstrap: DEFAULT_RESAMPLES,
            slope_gate: DEFAULT_SLOPE_GATE,
            require_biscaling: false,
            tail: false,
            tail_quantiles: DEFAULT_TAIL_QUANTILES,
            rtt: false,
            rtt_classes: 4,
            label: String::new(),
            timestamps: true,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<(), AnalyzeError> {
        if !(self.delta0 > 0.0) || !self.delta0.is_finite() {
            return Err(AnalyzeError::Config(format!(
                "bin width must be positive, got {}",
                self.delta0
            )));
        }
        if self.m > 12 {
            return Err(AnalyzeError::Config(format!(
                "sketch depth {} exceeds 12",
                self.m
            )));
        }
        if self.fs.0 < 1 || self.fs.0 >= self.fs.1 || self.cs.0 >= self.cs.1 {
            return Err(AnalyzeError::Config(format!(
                "octave ranges must be ascending, got fs {:?} cs {:?}",
                self.fs, self.cs
            )));
        }
        if self.fs.1 >= self.cs.0 {
            return Err(AnalyzeError::Config(format!(
                "fine range {:?} must end below coarse range {:?}",
                self.fs, self.cs
            )));
        }
        if self.rtt_classes == 0 {
            return Err(AnalyzeError::Config("need at least one RTT class".into()));
        }
        Wavelet::daubechies(self.vanishing_moments)?;
        Ok(())
    }
}

/// What the pipeline is fed.
pub enum AnalysisInput {
    /// Full packet records: sketching, tail, and RTT analyses available.
    Packets(Vec<PacketRecord>),
    /// A pre-binned count series.
    Counts(BinnedSeries),
    /// A real-valued series (synthetic signals are signed).
    Samples { delta0: f64, values: Vec<f64> },
}

/// Shape of the input after ingest, echoed into the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputSummary {
    pub kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_packets: Option<u64>,
    pub n_bins: u64,
    pub duration: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median_iat: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub iat_octave: Option<i32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub tool_version: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub created: Option<String>,
    pub label: String,
    pub input: InputSummary,
    pub config: AnalysisConfig,
    /// Ground truth when the input came from a generator.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub generator: Option<GeneratorSpec>,
}

/// Fits of one diagram family over one octave range.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct RangeEstimates {
    pub h: Option<ScalingEstimate>,
    pub c1: Option<ScalingEstimate>,
    pub c2: Option<ScalingEstimate>,
}

/// Everything derived from one series: diagrams, range fits, frontier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BranchReport {
    pub label: String,
    pub lds: Vec<LogscaleDiagram>,
    pub fs: RangeEstimates,
    pub cs: RangeEstimates,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub frontier: Option<FrontierOutcome>,
}

impl BranchReport {
    pub fn ld(&self, kind: LdKind) -> Option<&LogscaleDiagram> {
        self.lds.iter().find(|ld| ld.kind == kind)
    }
}

/// Summary of one RTT class in the report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RttClassReport {
    pub j_r: f64,
    pub j_m: f64,
    pub n_flows: usize,
    pub median_rtt: f64,
    /// Coarse-range H of this class's own count series, when fittable.
    pub h_cs: Option<ScalingEstimate>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RttReport {
    pub boundaries: Vec<f64>,
    pub classes: Vec<RttClassReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisReport {
    pub meta: ReportMeta,
    pub global: BranchReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub median: Option<BranchReport>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub subtraces: Vec<BranchReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tail: Option<TailEstimate>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rtt: Option<RttReport>,
    pub warnings: Vec<String>,
}

impl AnalysisReport {
    /// The frontier verdict that should drive decisions: the median
    /// branch's when sketching ran, otherwise the global one.
    pub fn primary_frontier(&self) -> Option<&FrontierOutcome> {
        self.median
            .as_ref()
            .and_then(|b| b.frontier.as_ref())
            .or(self.global.frontier.as_ref())
    }
}

/// Clamp a requested octave range to what the diagram covers; `None`
/// when fewer than 3 octaves remain.
fn clamp_range(ld: &LogscaleDiagram, want: (u32, u32)) -> Option<(u32, u32)> {
    let lo = ld.j_min()?;
    let hi = ld.j_max()?;
    let j1 = want.0.max(lo);
    let j2 = want.1.min(hi);
    (j2 >= j1 + 2).then_some((j1, j2))
}

struct BranchOutcome {
    report: BranchReport,
    warnings: Vec<String>,
}

/// Diagrams, fits, and (optionally) frontier for one series.
///
/// `bootstrap_seed` of `Some` upgrades the h/c1/c2 CIs to block-bootstrap
/// intervals; subtrace branches keep the cheap analytic ones.
fn analyze_branch(
    samples: &[f64],
    delta0: f64,
    label: &str,
    cfg: &AnalysisConfig,
    with_frontier: bool,
    bootstrap_seed: Option<u64>,
) -> Result<BranchOutcome, AnalyzeError> {
    let wavelet = Wavelet::daubechies(cfg.vanishing_moments)?;
    let pyr = dwt(samples, delta0, wavelet, cfg.n_min)?;
    let lp = compute_leaders(&pyr, cfg.gamma)?;
    let mut warnings = Vec::new();

    let sd = structure_fn(&pyr).with_label(label);
    let mut lds: Vec<LogscaleDiagram> = vec![sd];
    for ld in cumulants(&lp, 3) {
        lds.push(ld.with_label(label));
    }
    match leader_structure_fn(&lp, 2.0) {
        Ok(ld) => lds.push(ld.with_label(label)),
        Err(e) => warnings.push(format!("{label}: leaders: {e}")),
    }

    let mut fit = |kind: LdKind, want: (u32, u32), tag: &str| -> Option<ScalingEstimate> {
        let ld = lds.iter().find(|l| l.kind == kind)?;
        let Some((j1, j2)) = clamp_range(ld, want) else {
            warnings.push(format!(
                "{label}: {kind} has no {tag} octaves in [{}, {}]",
                want.0, want.1
            ));
            return None;
        };
        match fit_scaling(ld, j1, j2) {
            Ok(est) => Some(est),
            Err(e) => {
                warnings.push(format!("{label}: estimate: {e}"));
                None
            }
        }
    };
    let mut fs = RangeEstimates {
        h: fit(LdKind::Log2Sd, cfg.fs, "fine"),
        c1: fit(LdKind::C1, cfg.fs, "fine"),
        c2: fit(LdKind::C2, cfg.fs, "fine"),
    };
    let mut cs = RangeEstimates {
        h: fit(LdKind::Log2Sd, cfg.cs, "coarse"),
        c1: fit(LdKind::C1, cfg.cs, "coarse"),
        c2: fit(LdKind::C2, cfg.cs, "coarse"),
    };

    if let Some(seed) = bootstrap_seed {
        if cfg.bootstrap > 0 {
            let mut upgrade = |est: &mut Option<ScalingEstimate>, kind: LdKind, tag: u64| {
                let Some(e) = est else { return };
                let source = match kind {
                    LdKind::Log2Sd => BootstrapSource::Coeffs(&pyr),
                    _ => BootstrapSource::Leaders(&lp),
                };
                match bootstrap_ci(
                    source,
                    kind,
                    e.j1,
                    e.j2,
                    cfg.bootstrap,
                    crate::synth::substream(seed, tag),
                ) {
                    Ok(b) => *e = b,
                    Err(err) => warnings.push(format!("{label}: bootstrap: {err}")),
                }
            };
            upgrade(&mut fs.h, LdKind::Log2Sd, 0);
            upgrade(&mut fs.c1, LdKind::C1, 1);
            upgrade(&mut fs.c2, LdKind::C2, 2);
            upgrade(&mut cs.h, LdKind::Log2Sd, 3);
            upgrade(&mut cs.c1, LdKind::C1, 4);
            upgrade(&mut cs.c2, LdKind::C2, 5);
        }
    }

    let frontier = if with_frontier {
        frontier_of(&lds, cfg, label, &mut warnings)
    } else {
        None
    };
    Ok(BranchOutcome {
        report: BranchReport {
            label: label.to_string(),
            lds,
            fs,
            cs,
            frontier,
        },
        warnings,
    })
}

fn frontier_of(
    lds: &[LogscaleDiagram],
    cfg: &AnalysisConfig,
    label: &str,
    warnings: &mut Vec<String>,
) -> Option<FrontierOutcome> {
    let sd = lds.iter().find(|l| l.kind == LdKind::Log2Sd)?;
    let (Some(fs), Some(cs)) = (clamp_range(sd, cfg.fs), clamp_range(sd, cfg.cs)) else {
        warnings.push(format!(
            "{label}: frontier skipped; trace does not reach both octave ranges"
        ));
        return None;
    };
    match find_frontier(sd, fs, cs, cfg.slope_gate) {
        Ok(out) => Some(out),
        Err(e) => {
            warnings.push(format!("{label}: frontier: {e}"));
            None
        }
    }
}

/// Restrict diagrams of one kind to the octaves all of them share, so
/// the pointwise median is well defined even when a sparse sub-trace
/// dropped an octave.
fn on_common_octaves(lds: &[&LogscaleDiagram]) -> Vec<LogscaleDiagram> {
    let mut common: Vec<u32> = lds[0].octaves.iter().map(|p| p.j).collect();
    for ld in &lds[1..] {
        common.retain(|j| ld.point(*j).is_some());
    }
    lds.iter()
        .map(|ld| LogscaleDiagram {
            kind: ld.kind,
            delta0: ld.delta0,
            label: ld.label.clone(),
            octaves: ld
                .octaves
                .iter()
                .filter(|p| common.contains(&p.j))
                .copied()
                .collect(),
        })
        .collect()
}

/// A zero MAD across sub-traces gives a zero-variance median point and
/// degenerate regression weights; substitute the median of the input
/// variances at that octave.
fn patch_zero_variances(
    ld: &mut LogscaleDiagram,
    sources: &[&LogscaleDiagram],
    warnings: &mut Vec<String>,
) {
    for p in &mut ld.octaves {
        if p.variance > 0.0 && p.variance.is_finite() {
            continue;
        }
        let mut vars: Vec<f64> = sources
            .iter()
            .filter_map(|s| s.point(p.j))
            .map(|q| q.variance)
            .filter(|v| *v > 0.0 && v.is_finite())
            .collect();
        if vars.is_empty() {
            continue;
        }
        vars.sort_by(|a, b| a.partial_cmp(b).unwrap());
        p.variance = crate::aggregate::median_of_sorted(&vars);
        warnings.push(format!(
            "median {} octave {}: zero spread across sub-traces; substituted median input variance",
            ld.kind, p.j
        ));
    }
}

fn rfc3339_utc(secs: u64) -> String {
    let days = (secs / 86_400) as i64;
    let rem = secs % 86_400;
    let (hh, mm, ss) = (rem / 3600, (rem % 3600) / 60, rem % 60);
    // Gregorian civil-from-days
    let z = days + 719_468;
    let era = z.div_euclid(146_097);
    let doe = z.rem_euclid(146_097);
    let yoe = (doe - doe / 1460 + doe / 36_524 - doe / 146_096) / 365;
    let doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    let mp = (5 * doy + 2) / 153;
    let d = doy - (153 * mp + 2) / 5 + 1;
    let m = if mp < 10 { mp + 3 } else { mp - 9 };
    let y = yoe + era * 400 + i64::from(m <= 2);
    format!("{y:04}-{m:02}-{d:02}T{hh:02}:{mm:02}:{ss:02}Z")
}

/// Run the full pipeline on one input under a resolved configuration.
pub fn run_analyze(
    input: AnalysisInput,
    cfg: &AnalysisConfig,
) -> Result<AnalysisReport, AnalyzeError> {
    cfg.validate()?;
    let mut warnings: Vec<String> = Vec::new();

    // Resolve the input to a global real-valued series plus packet extras.
    let packets: Option<&Vec<PacketRecord>> = match &input {
        AnalysisInput::Packets(p) => Some(p),
        _ => None,
    };
    let (global_samples, delta0, summary, sketch_part) = match &input {
        AnalysisInput::Packets(p) => {
            let part = if cfg.m >= 1 {
                Some(sketch::partition(p, cfg.m, cfg.key, cfg.seed, cfg.delta0)?)
            } else {
                None
            };
            let global = match &part {
                Some(part) => part.global(),
                None => aggregate::aggregate(p, cfg.delta0)?,
            };
            let median_iat = aggregate::median_iat(p).ok();
            let summary = InputSummary {
                kind: "packets".into(),
                n_packets: Some(p.len() as u64),
                n_bins: global.len() as u64,
                duration: global.len() as f64 * cfg.delta0,
                iat_octave: median_iat.map(|m| aggregate::iat_octave(m, cfg.delta0)),
                median_iat,
            };
            (global.samples(), cfg.delta0, summary, part)
        }
        AnalysisInput::Counts(series) => {
            if cfg.m >= 1 {
                warnings.push(
                    "sketching skipped: pre-binned input carries no flow keys".to_string(),
                );
            }
            let summary = InputSummary {
                kind: "counts".into(),
                n_packets: None,
                n_bins: series.len() as u64,
                duration: series.len() as f64 * series.delta0,
                median_iat: None,
                iat_octave: None,
            };
            (series.samples(), series.delta0, summary, None)
        }
        AnalysisInput::Samples { delta0, values } => {
            if cfg.m >= 1 {
                warnings.push(
                    "sketching skipped: real-valued input carries no flow keys".to_string(),
                );
            }
            let summary = InputSummary {
                kind: "samples".into(),
                n_packets: None,
                n_bins: values.len() as u64,
                duration: values.len() as f64 * delta0,
                median_iat: None,
                iat_octave: None,
            };
            (values.clone(), *delta0, summary, None)
        }
    };

    let global_out = analyze_branch(
        &global_samples,
        delta0,
        "global",
        cfg,
        true,
        Some(crate::synth::substream(cfg.seed, 0x61)),
    )?;
    warnings.extend(global_out.warnings);
    let global = global_out.report;

    // Sketch branches in parallel, merged by index.
    let mut subtraces: Vec<BranchReport> = Vec::new();
    let mut median: Option<BranchReport> = None;
    if let Some(part) = &sketch_part {
        let outcomes: Vec<Result<BranchOutcome, AnalyzeError>> = part
            .subtraces
            .par_iter()
            .map(|s| analyze_branch(&s.samples(), delta0, &s.label, cfg, false, None))
            .collect();
        for (s, out) in part.subtraces.iter().zip(outcomes) {
            match out {
                Ok(o) => {
                    warnings.extend(o.warnings);
                    subtraces.push(o.report);
                }
                Err(e) => {
                    warnings.push(format!("{}: {e}", s.label));
                    subtraces.push(BranchReport {
                        label: s.label.clone(),
                        lds: Vec::new(),
                        fs: RangeEstimates::default(),
                        cs: RangeEstimates::default(),
                        frontier: None,
                    });
                }
            }
        }
        median = median_branch(&subtraces, cfg, &mut warnings);
    }

    // Flow-level extras need packets.
    let mut tail = None;
    let mut rtt = None;
    if cfg.tail || cfg.rtt {
        match packets {
            Some(p) => {
                let flow_records = if cfg.rtt {
                    flows::karn_rtt(p)
                } else {
                    flows::build_flows(p)
                };
                if cfg.tail {
                    let sizes: Vec<f64> =
                        flow_records.iter().map(|f| f.byte_count as f64).collect();
                    match flows::tail_index(&sizes, cfg.tail_quantiles.0, cfg.tail_quantiles.1) {
                        Ok(est) => tail = Some(est),
                        Err(e) => warnings.push(format!("flows: {e}")),
                    }
                }
                if cfg.rtt {
                    match flows::rtt_partition(p, &flow_records, cfg.rtt_classes, cfg.delta0) {
                        Ok(part) => {
                            let classes = part
                                .classes
                                .iter()
                                .map(|c| {
                                    let h_cs = class_h(c, cfg);
                                    RttClassReport {
                                        j_r: c.j_r,
                                        j_m: c.j_m,
                                        n_flows: c.n_flows,
                                        median_rtt: c.median_rtt,
                                        h_cs,
                                    }
                                })
                                .collect();
                            rtt = Some(RttReport {
                                boundaries: part.boundaries,
                                classes,
                            });
                        }
                        Err(e) => warnings.push(format!("flows: {e}")),
                    }
                }
            }
            None => warnings.push(
                "tail/rtt analyses skipped: input carries no packet records".to_string(),
            ),
        }
    }

    let created = cfg
        .timestamps
        .then(|| {
            SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| rfc3339_utc(d.as_secs()))
                .ok()
        })
        .flatten();
    Ok(AnalysisReport {
        meta: ReportMeta {
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            created,
            label: cfg.label.clone(),
            input: summary,
            config: cfg.clone(),
            generator: None,
        },
        global,
        median,
        subtraces,
        tail,
        rtt,
        warnings,
    })
}

/// Coarse-range H of one RTT class, when its series supports a fit.
fn class_h(class: &flows::RttClass, cfg: &AnalysisConfig) -> Option<ScalingEstimate> {
    let wavelet = Wavelet::daubechies(cfg.vanishing_moments).ok()?;
    let pyr = dwt(&class.series.samples(), class.series.delta0, wavelet, cfg.n_min).ok()?;
    let sd = structure_fn(&pyr);
    let (j1, j2) = clamp_range(&sd, cfg.cs)?;
    fit_scaling(&sd, j1, j2).ok()
}

/// Median branch over the per-sub-trace diagrams of each kind.
fn median_branch(
    subtraces: &[BranchReport],
    cfg: &AnalysisConfig,
    warnings: &mut Vec<String>,
) -> Option<BranchReport> {
    let kinds = [
        LdKind::Log2Sd,
        LdKind::C1,
        LdKind::C2,
        LdKind::C3,
        LdKind::Log2Sl(2.0),
    ];
    let mut lds = Vec::new();
    for kind in kinds {
        let inputs: Vec<&LogscaleDiagram> = subtraces
            .iter()
            .filter_map(|b| b.ld(kind))
            .collect();
        if inputs.len() < subtraces.len() {
            warnings.push(format!(
                "median {kind}: only {} of {} sub-traces produced the diagram",
                inputs.len(),
                subtraces.len()
            ));
        }
        if inputs.len() < 3 {
            continue;
        }
        let aligned = on_common_octaves(&inputs);
        match sketch::median_ld(&aligned) {
            Ok(mut ld) => {
                patch_zero_variances(&mut ld, &inputs, warnings);
                lds.push(ld);
            }
            Err(e) => warnings.push(format!("median {kind}: {e}")),
        }
    }
    if lds.is_empty() {
        return None;
    }
    let mut fit = |kind: LdKind, want: (u32, u32)| -> Option<ScalingEstimate> {
        let ld = lds.iter().find(|l| l.kind == kind)?;
        let (j1, j2) = clamp_range(ld, want)?;
        match fit_scaling(ld, j1, j2) {
            Ok(est) => Some(est),
            Err(e) => {
                warnings.push(format!("median: estimate: {e}"));
                None
            }
        }
    };
    let fs = RangeEstimates {
        h: fit(LdKind::Log2Sd, cfg.fs),
        c1: fit(LdKind::C1, cfg.fs),
        c2: fit(LdKind::C2, cfg.fs),
    };
    let cs = RangeEstimates {
        h: fit(LdKind::Log2Sd, cfg.cs),
        c1: fit(LdKind::C1, cfg.cs),
        c2: fit(LdKind::C2, cfg.cs),
    };
    let frontier = frontier_of(&lds, cfg, "median", warnings);
    Some(BranchReport {
        label: "median".to_string(),
        lds,
        fs,
        cs,
        frontier,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReportFormat {
    Json,
    Csv,
    GnuplotData,
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '_' || c == '-' { c } else { '-' })
        .collect()
}

fn kind_file_tag(kind: LdKind) -> String {
    match kind {
        LdKind::Log2Sd => "log2_Sd".to_string(),
        LdKind::C1 => "C_1".to_string(),
        LdKind::C2 => "C_2".to_string(),
        LdKind::C3 => "C_3".to_string(),
        LdKind::Log2Sl(q) => format!("log2_SL_q{q}"),
    }
}

/// Project a report to files under `out_dir`. JSON emits one file; CSV
/// and gnuplot emit one plot-ready file per diagram with columns
/// `j, value, ci_low, ci_high` (the CI is the pointwise 95% band from
/// the diagram's own variance). Returns the paths written, in a fixed
/// order: global, median, sub-traces by index, each kind in report order.
pub fn run_report(
    report: &AnalysisReport,
    format: ReportFormat,
    out_dir: &Path,
) -> Result<Vec<PathBuf>, AnalyzeError> {
    fs::create_dir_all(out_dir)?;
    let mut written = Vec::new();
    match format {
        ReportFormat::Json => {
            let path = out_dir.join("report.json");
            let mut body = serde_json::to_string_pretty(report)
                .expect("report serialization is infallible");
            body.push('\n');
            fs::write(&path, body)?;
            written.push(path);
        }
        ReportFormat::Csv | ReportFormat::GnuplotData => {
            let branches: Vec<&BranchReport> = std::iter::once(&report.global)
                .chain(report.median.iter())
                .chain(report.subtraces.iter())
                .collect();
            for branch in branches {
                for ld in &branch.lds {
                    let (ext, sep, header) = match format {
                        ReportFormat::Csv => ("csv", ",", "j,value,ci_low,ci_high\n"),
                        _ => ("dat", " ", "# j value ci_low ci_high\n"),
                    };
                    let mut body = String::from(header);
                    for p in &ld.octaves {
                        let half = Z_975 * p.variance.sqrt();
                        body.push_str(&format!(
                            "{}{sep}{}{sep}{}{sep}{}\n",
                            p.j,
                            p.value,
                            p.value - half,
                            p.value + half
                        ));
                    }
                    let name = format!(
                        "{}-{}.{ext}",
                        file_safe(&branch.label),
                        file_safe(&kind_file_tag(ld.kind))
                    );
                    let path = out_dir.join(name);
                    fs::write(&path, body)?;
                    written.push(path);
                }
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{FiveTuple, Protocol};
    use crate::synth::gen_fgn;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn defaults_match_published_choices() {
        let cfg = AnalysisConfig::default();
        assert_eq!(cfg.delta0, 0.000125);
        assert_eq!(cfg.m, 4);
        assert_eq!(cfg.key, HashKey::SrcIp);
        assert_eq!(cfg.vanishing_moments, 3);
        assert_eq!(cfg.gamma, 1.0);
        assert_eq!(cfg.n_min, 8);
        assert_eq!(cfg.fs, (4, 10));
        assert_eq!(cfg.cs, (12, 18));
        assert_eq!(cfg.bootstrap, 499);
        assert_eq!(cfg.slope_gate, 2.576);
        assert_eq!(cfg.tail_quantiles, (0.95, 0.999));
        assert!(cfg.validate().is_ok());
    }

    #[test]
    fn config_validation_rejects_nonsense() {
        let mut cfg = AnalysisConfig {
            delta0: 0.0,
            ..Default::default()
        };
        assert!(matches!(cfg.validate(), Err(AnalyzeError::Config(_))));
        cfg.delta0 = 0.001;
        cfg.m = 13;
        assert!(matches!(cfg.validate(), Err(AnalyzeError::Config(_))));
        cfg.m = 4;
        cfg.fs = (4, 12);
        assert!(matches!(cfg.validate(), Err(AnalyzeError::Config(_))));
        cfg.fs = (4, 10);
        cfg.vanishing_moments = 99;
        assert!(matches!(cfg.validate(), Err(AnalyzeError::Wavelet(_))));
    }

    #[test]
    fn samples_input_runs_global_only() {
        let values = gen_fgn(0.8, 1 << 16, 5).unwrap();
        let cfg = AnalysisConfig {
            m: 0,
            delta0: 1.0,
            fs: (3, 6),
            cs: (8, 12),
            bootstrap: 49,
            timestamps: false,
            ..Default::default()
        };
        let report = run_analyze(AnalysisInput::Samples { delta0: 1.0, values }, &cfg).unwrap();
        assert!(report.median.is_none());
        assert!(report.subtraces.is_empty());
        let h = report.global.cs.h.expect("coarse H fit");
        assert!((h.value - 0.8).abs() < 0.12, "H = {}", h.value);
        // monofractal input: frontier must not report biscaling
        if let Some(FrontierOutcome::Biscaling { .. }) = report.global.frontier {
            panic!("fGn called biscaling");
        }
        assert_eq!(report.meta.input.kind, "samples");
        assert!(report.meta.created.is_none());
    }

    fn synthetic_packets(n_sources: u32, rate: f64, duration: f64, seed: u64) -> Vec<PacketRecord> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut out = Vec::new();
        for s in 0..n_sources {
            let ip = [10, 0, (s >> 8) as u8, s as u8];
            let key = FiveTuple::v4(ip, 1000 + s as u16, [192, 0, 2, 1], 80, Protocol::Udp);
            let mut t = 0.0;
            loop {
                t += -rng.random::<f64>().ln() / rate;
                if t >= duration {
                    break;
                }
                out.push(PacketRecord {
                    timestamp: t,
                    size: 100,
                    flow_key: key,
                    tcp_meta: None,
                });
            }
        }
        out.sort_by(|a, b| a.timestamp.total_cmp(&b.timestamp));
        out
    }

    #[test]
    fn packet_input_produces_sketch_and_median_branches() {
        let packets = synthetic_packets(64, 40.0, 60.0, 3);
        let cfg = AnalysisConfig {
            m: 2,
            delta0: 0.01,
            fs: (2, 5),
            cs: (6, 9),
            bootstrap: 0,
            timestamps: false,
            ..Default::default()
        };
        let report = run_analyze(AnalysisInput::Packets(packets), &cfg).unwrap();
        assert_eq!(report.subtraces.len(), 4);
        let median = report.median.as_ref().expect("median branch");
        assert!(median.ld(LdKind::Log2Sd).is_some());
        assert!(report.global.cs.h.is_some());
        assert!(median.cs.h.is_some());
        assert_eq!(report.meta.input.n_packets.unwrap() > 0, true);
        assert!(report.meta.input.median_iat.is_some());
        // sub-trace counts must sum back to the global series
        let n: u64 = report.meta.input.n_bins;
        assert!(n >= 6000);
    }

    #[test]
    fn reports_are_byte_identical_across_runs_and_thread_counts() {
        let packets = synthetic_packets(32, 30.0, 30.0, 9);
        let cfg = AnalysisConfig {
            m: 2,
            delta0: 0.01,
            fs: (2, 5),
            cs: (7, 10),
            bootstrap: 29,
            timestamps: false,
            ..Default::default()
        };
        let a = serde_json::to_string(
            &run_analyze(AnalysisInput::Packets(packets.clone()), &cfg).unwrap(),
        )
        .unwrap();
        let b = serde_json::to_string(
            &run_analyze(AnalysisInput::Packets(packets.clone()), &cfg).unwrap(),
        )
        .unwrap();
        assert_eq!(a, b);
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(1)
            .build()
            .unwrap();
        let c = pool.install(|| {
            serde_json::to_string(&run_analyze(AnalysisInput::Packets(packets), &cfg).unwrap())
                .unwrap()
        });
        assert_eq!(a, c);
    }

    #[test]
    fn counts_input_warns_that_sketching_is_impossible() {
        let series = BinnedSeries {
            delta0: 0.01,
            start_time: 0.0,
            label: String::new(),
            counts: (0..4096).map(|i| (i % 7) as u32 + 1).collect(),
        };
        let cfg = AnalysisConfig {
            fs: (2, 5),
            cs: (7, 10),
            bootstrap: 0,
            timestamps: false,
            ..Default::default()
        };
        let report = run_analyze(AnalysisInput::Counts(series), &cfg).unwrap();
        assert!(report
            .warnings
            .iter()
            .any(|w| w.contains("sketching skipped")));
        assert!(report.median.is_none());
        assert_eq!(report.meta.input.kind, "counts");
    }

    #[test]
    fn zero_mad_variances_are_patched_from_sources() {
        let mk = |var: f64| LogscaleDiagram {
            kind: LdKind::Log2Sd,
            delta0: 1.0,
            label: None,
            octaves: vec![crate::ld::LdPoint {
                j: 3,
                n_j: 64,
                value: 1.0,
                variance: var,
            }],
        };
        let sources = [mk(0.2), mk(0.4), mk(0.6)];
        let refs: Vec<&LogscaleDiagram> = sources.iter().collect();
        let mut median = mk(0.0);
        let mut warnings = Vec::new();
        patch_zero_variances(&mut median, &refs, &mut warnings);
        assert_eq!(median.octaves[0].variance, 0.4);
        assert_eq!(warnings.len(), 1);
        assert!(warnings[0].contains("octave 3"));
    }

    #[test]
    fn common_octave_restriction_drops_partial_coverage() {
        let mk = |js: &[u32]| LogscaleDiagram {
            kind: LdKind::Log2Sd,
            delta0: 1.0,
            label: None,
            octaves: js
                .iter()
                .map(|&j| crate::ld::LdPoint {
                    j,
                    n_j: 8,
                    value: j as f64,
                    variance: 1.0,
                })
                .collect(),
        };
        let a = mk(&[1, 2, 3, 4]);
        let b = mk(&[1, 2, 4]);
        let c = mk(&[2, 3, 4]);
        let out = on_common_octaves(&[&a, &b, &c]);
        for ld in &out {
            let js: Vec<u32> = ld.octaves.iter().map(|p| p.j).collect();
            assert_eq!(js, vec![2, 4]);
        }
    }

    #[test]
    fn report_projections_round_trip_loss_free() {
        let values = gen_fgn(0.7, 1 << 13, 11).unwrap();
        let cfg = AnalysisConfig {
            m: 0,
            delta0: 0.5,
            fs: (2, 5),
            cs: (7, 10),
            bootstrap: 0,
            timestamps: false,
            label: "fixture".into(),
            ..Default::default()
        };
        let report = run_analyze(AnalysisInput::Samples { delta0: 0.5, values }, &cfg).unwrap();
        let dir = std::env::temp_dir().join(format!("report-proj-{}", std::process::id()));

        let json_files = run_report(&report, ReportFormat::Json, &dir).unwrap();
        assert_eq!(json_files.len(), 1);
        let back: AnalysisReport =
            serde_json::from_str(&fs::read_to_string(&json_files[0]).unwrap()).unwrap();
        assert_eq!(back, report);

        let csv_files = run_report(&report, ReportFormat::Csv, &dir).unwrap();
        assert_eq!(csv_files.len(), report.global.lds.len());
        let sd = report.global.ld(LdKind::Log2Sd).unwrap();
        let sd_csv = csv_files
            .iter()
            .find(|p| p.file_name().unwrap().to_str().unwrap().contains("log2_Sd"))
            .unwrap();
        let text = fs::read_to_string(sd_csv).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next(), Some("j,value,ci_low,ci_high"));
        for (line, p) in lines.zip(&sd.octaves) {
            let cells: Vec<&str> = line.split(',').collect();
            assert_eq!(cells.len(), 4);
            assert_eq!(cells[0].parse::<u32>().unwrap(), p.j);
            // shortest-roundtrip display: parsing back is bit-exact
            assert_eq!(cells[1].parse::<f64>().unwrap(), p.value);
        }

        let dat_files = run_report(&report, ReportFormat::GnuplotData, &dir).unwrap();
        let text = fs::read_to_string(&dat_files[0]).unwrap();
        assert!(text.starts_with("# j value ci_low ci_high\n"));
        let rows = text.lines().skip(1).count();
        assert_eq!(rows, report.global.lds[0].octaves.len());
        assert!(text
            .lines()
            .skip(1)
            .all(|l| l.split(' ').count() == 4));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn civil_timestamp_formatting() {
        assert_eq!(rfc3339_utc(0), "1970-01-01T00:00:00Z");
        assert_eq!(rfc3339_utc(951_782_400), "2000-02-29T00:00:00Z");
        assert_eq!(rfc3339_utc(1_700_000_000), "2023-11-14T22:13:20Z");
    }

    #[test]
    fn tail_warning_on_small_packet_traces() {
        let packets = synthetic_packets(16, 20.0, 20.0, 21);
        let cfg = AnalysisConfig {
            m: 0,
            delta0: 0.01,
            fs: (2, 5),
            cs: (7, 10),
            bootstrap: 0,
            tail: true,
            timestamps: false,
            ..Default::default()
        };
        let report = run_analyze(AnalysisInput::Packets(packets), &cfg).unwrap();
        assert!(report.tail.is_none());
        assert!(report.warnings.iter().any(|w| w.starts_with("flows:")));
    }
}
