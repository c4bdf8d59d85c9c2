//! Scaling analysis of packet traces that survives anomalies.
//!
//! The pipeline: ingest packets (pcap or CSV), aggregate into fixed-width
//! count bins, split the trace into `2^M` sketch sub-traces with a seeded
//! tabulation hash, run a discrete wavelet transform and wavelet leaders on
//! each sub-trace, and take pointwise medians of the per-sub-trace logscale
//! diagrams. Weighted log-log regressions over octave ranges turn the
//! diagrams into estimates of the self-similarity exponent `H`, the
//! log-cumulants `c1, c2, c3`, and the scaling exponents `zeta(q)`, with
//! goodness-of-fit and bootstrap confidence intervals. A frontier detector
//! locates the octave where fine-scale and coarse-scale scaling regimes
//! meet. Flow-level tools (heavy-tail index, Karn RTT, RTT-class
//! partitions, partial correlations) tie the wavelet picture back to
//! transport-level structure, and synthetic generators with known exponents
//! close the loop for validation.

pub mod aggregate;
pub mod analyze;
pub mod estimate;
pub mod flows;
pub mod ingest;
pub mod ld;
pub mod leaders;
pub mod sketch;
pub mod synth;
pub mod wavelet;

pub use aggregate::BinnedSeries;
pub use analyze::{AnalysisConfig, AnalysisReport};
pub use estimate::{FrontierOutcome, ScalingEstimate};
pub use ingest::{FiveTuple, PacketRecord};
pub use ld::{LdKind, LogscaleDiagram};
pub use leaders::LeaderPyramid;
pub use sketch::SketchPartition;
pub use wavelet::{Wavelet, WaveletPyramid};
