//! Logscale diagrams: per-octave scaling statistics with variances.
//!
//! A logscale diagram is the common currency between the transform stages
//! and the estimation stage: one `(value, variance, n_j)` triple per octave
//! `j`, where octave `j` corresponds to time scale `delta0 * 2^j` seconds.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Natural log of 2; slopes in octave units divide by this to give
/// per-`ln` coefficients.
pub const LN_2: f64 = std::f64::consts::LN_2;

/// Which per-octave statistic a diagram carries.
///
/// * `Log2Sd`: `log2` of the mean squared wavelet coefficient (second-order
///   structure function); slope over `j` is `2H - 2`.
/// * `C1`/`C2`/`C3`: first three sample cumulants of `ln` leaders; slope
///   over `j` is `c_p * ln 2`.
/// * `Log2Sl(q)`: `log2` of the mean `q`-th power of leaders; slope is
///   `zeta(q)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LdKind {
    #[serde(rename = "log2_Sd")]
    Log2Sd,
    #[serde(rename = "C_1")]
    C1,
    #[serde(rename = "C_2")]
    C2,
    #[serde(rename = "C_3")]
    C3,
    #[serde(rename = "log2_SL")]
    Log2Sl(f64),
}

impl LdKind {
    /// Cumulant order for the `C_p` kinds.
    pub fn cumulant_order(self) -> Option<u8> {
        match self {
            LdKind::C1 => Some(1),
            LdKind::C2 => Some(2),
            LdKind::C3 => Some(3),
            _ => None,
        }
    }
}

impl std::fmt::Display for LdKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            LdKind::Log2Sd => write!(f, "log2_Sd"),
            LdKind::C1 => write!(f, "C_1"),
            LdKind::C2 => write!(f, "C_2"),
            LdKind::C3 => write!(f, "C_3"),
            LdKind::Log2Sl(q) => write!(f, "log2_SL(q={q})"),
        }
    }
}

/// One octave of a logscale diagram.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdPoint {
    /// Octave index; time scale is `delta0 * 2^j`.
    pub j: u32,
    /// Number of samples behind the statistic at this octave.
    pub n_j: u64,
    pub value: f64,
    /// Variance of `value`, used as an inverse regression weight.
    pub variance: f64,
}

/// Per-octave statistic with variances, ready for weighted regression.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogscaleDiagram {
    pub kind: LdKind,
    /// Finest bin width in seconds; octave `j` spans `delta0 * 2^j`.
    pub delta0: f64,
    /// Which series this came from: "global", "median", "sketch-03", a trace label.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Ascending in `j`.
    pub octaves: Vec<LdPoint>,
}

#[derive(Debug, Error)]
pub enum LdError {
    #[error("octave {j} not present in diagram")]
    MissingOctave { j: u32 },
}

impl LogscaleDiagram {
    pub fn point(&self, j: u32) -> Option<&LdPoint> {
        self.octaves.iter().find(|p| p.j == j)
    }

    /// Octaves restricted to `j1..=j2`, erroring on gaps.
    pub fn range(&self, j1: u32, j2: u32) -> Result<Vec<LdPoint>, LdError> {
        let mut out = Vec::with_capacity((j2.saturating_sub(j1) + 1) as usize);
        for j in j1..=j2 {
            match self.point(j) {
                Some(p) => out.push(*p),
                None => return Err(LdError::MissingOctave { j }),
            }
        }
        Ok(out)
    }

    pub fn j_min(&self) -> Option<u32> {
        self.octaves.first().map(|p| p.j)
    }

    pub fn j_max(&self) -> Option<u32> {
        self.octaves.last().map(|p| p.j)
    }

    /// Same diagram with a provenance label attached.
    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = Some(label.into());
        self
    }

    /// Grids match when kind, delta0, and the `(j, n_j)` ladder all agree.
    pub fn same_grid(&self, other: &Self) -> bool {
        self.kind == other.kind
            && self.delta0 == other.delta0
            && self.octaves.len() == other.octaves.len()
            && self
                .octaves
                .iter()
                .zip(&other.octaves)
                .all(|(a, b)| a.j == b.j)
    }
}
