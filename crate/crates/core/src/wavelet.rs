//! Discrete wavelet transform producing L1-normalized detail pyramids.
//!
//! Octave `j` of the pyramid holds coefficients `d(j, k)` of the analysis
//! wavelet normalized so that `psi_{j,k}(t) = 2^-j psi(2^-j t - k)` with
//! time measured in units of the bin width. The filter bank computes the
//! usual orthonormal (L2) coefficients and rescales each octave by
//! `2^(-j/2)`. Convolutions are valid-only: no padding is applied and any
//! coefficient whose filter support would leave the series is dropped, so
//! boundary effects never leak into the statistics. Octave bookkeeping is
//! `n_{j+1} = floor((n_j - L) / 2) + 1` for filter length `L`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ld::{LdKind, LdPoint, LogscaleDiagram, LN_2};

mod filters;

/// Default minimum number of coefficients an octave must keep to be
/// retained in the pyramid.
pub const DEFAULT_N_MIN: usize = 8;

/// Default analysis wavelet: Daubechies with 3 vanishing moments, long
/// enough to kill quadratic trends while keeping boundary loss small.
pub const DEFAULT_VANISHING_MOMENTS: u32 = 3;

#[derive(Debug, Error)]
pub enum WaveletError {
    #[error("unsupported wavelet: Daubechies with {0} vanishing moments (supported: 1..=10)")]
    UnsupportedWavelet(u32),
    #[error("series too short: {got} samples, need at least {required}")]
    SeriesTooShort { got: usize, required: usize },
    #[error("n_min must be at least 2, got {0}")]
    InvalidNMin(usize),
}

/// Daubechies analysis wavelet identified by its number of vanishing
/// moments (filter length is twice that).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Wavelet {
    vanishing_moments: u32,
}

impl Default for Wavelet {
    fn default() -> Self {
        Wavelet {
            vanishing_moments: DEFAULT_VANISHING_MOMENTS,
        }
    }
}

impl Wavelet {
    pub fn daubechies(vanishing_moments: u32) -> Result<Self, WaveletError> {
        if !(1..=10).contains(&vanishing_moments) {
            return Err(WaveletError::UnsupportedWavelet(vanishing_moments));
        }
        Ok(Wavelet { vanishing_moments })
    }

    pub fn vanishing_moments(&self) -> u32 {
        self.vanishing_moments
    }

    pub fn filter_len(&self) -> usize {
        2 * self.vanishing_moments as usize
    }

    /// Orthonormal scaling (lowpass) filter.
    pub fn lowpass(&self) -> &'static [f64] {
        filters::scaling_filter(self.vanishing_moments)
    }

    /// Orthonormal wavelet (highpass) filter, `g_k = (-1)^k h_{L-1-k}`.
    pub fn highpass(&self) -> Vec<f64> {
        let h = self.lowpass();
        let l = h.len();
        (0..l)
            .map(|k| {
                let v = h[l - 1 - k];
                if k % 2 == 0 {
                    v
                } else {
                    -v
                }
            })
            .collect()
    }
}

/// Detail coefficients for one octave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OctaveCoeffs {
    pub j: u32,
    /// L1-normalized detail coefficients.
    pub coeffs: Vec<f64>,
}

/// L1-normalized detail pyramid of a series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaveletPyramid {
    /// Bin width of the analyzed series in seconds.
    pub delta0: f64,
    pub wavelet: Wavelet,
    /// Length of the input series.
    pub n0: usize,
    /// Octaves 1..=J, ascending, each with `n_j >= n_min`.
    pub octaves: Vec<OctaveCoeffs>,
}

impl WaveletPyramid {
    pub fn depth(&self) -> u32 {
        self.octaves.len() as u32
    }

    pub fn octave(&self, j: u32) -> Option<&OctaveCoeffs> {
        if j == 0 {
            return None;
        }
        self.octaves.get(j as usize - 1)
    }

    pub fn n_j(&self, j: u32) -> Option<usize> {
        self.octave(j).map(|o| o.coeffs.len())
    }
}

/// One valid-convolution + downsample step: `out[k] = sum_m f[m] a[2k + m]`.
fn analyze_step(a: &[f64], filter: &[f64]) -> Vec<f64> {
    let l = filter.len();
    if a.len() < l {
        return Vec::new();
    }
    let n_out = (a.len() - l) / 2 + 1;
    let mut out = Vec::with_capacity(n_out);
    for k in 0..n_out {
        let base = 2 * k;
        let mut acc = 0.0;
        for (m, &f) in filter.iter().enumerate() {
            acc += f * a[base + m];
        }
        out.push(acc);
    }
    out
}

/// Full detail pyramid of `samples` binned at `delta0` seconds.
///
/// Octaves are produced while at least `n_min` coefficients survive the
/// valid-only convolution. Fails with `SeriesTooShort` when not even the
/// first octave fits.
pub fn dwt(
    samples: &[f64],
    delta0: f64,
    wavelet: Wavelet,
    n_min: usize,
) -> Result<WaveletPyramid, WaveletError> {
    if n_min < 2 {
        return Err(WaveletError::InvalidNMin(n_min));
    }
    let required = 2 * n_min;
    if samples.len() < required {
        return Err(WaveletError::SeriesTooShort {
            got: samples.len(),
            required,
        });
    }
    let h = wavelet.lowpass();
    let g = wavelet.highpass();
    let mut octaves = Vec::new();
    let mut approx = samples.to_vec();
    let mut j = 1u32;
    loop {
        let details = analyze_step(&approx, &g);
        if details.len() < n_min {
            break;
        }
        let next_approx = analyze_step(&approx, h);
        let scale = (-(j as f64) / 2.0).exp2();
        octaves.push(OctaveCoeffs {
            j,
            coeffs: details.iter().map(|d| d * scale).collect(),
        });
        approx = next_approx;
        j += 1;
    }
    if octaves.is_empty() {
        return Err(WaveletError::SeriesTooShort {
            got: samples.len(),
            required: wavelet.filter_len() + 2 * (n_min - 1),
        });
    }
    Ok(WaveletPyramid {
        delta0,
        wavelet,
        n0: samples.len(),
        octaves,
    })
}

/// Second-order structure function diagram: `value(j) = log2 mean d(j,.)^2`
/// with the asymptotic variance `2 / (n_j ln^2 2)`.
///
/// Octaves with zero energy (every coefficient exactly zero) cannot carry a
/// finite log and are omitted.
pub fn structure_fn(pyramid: &WaveletPyramid) -> LogscaleDiagram {
    let octaves = pyramid
        .octaves
        .iter()
        .filter_map(|o| {
            let n = o.coeffs.len();
            let mean_sq = o.coeffs.iter().map(|d| d * d).sum::<f64>() / n as f64;
            if mean_sq <= 0.0 {
                return None;
            }
            Some(LdPoint {
                j: o.j,
                n_j: n as u64,
                value: mean_sq.log2(),
                variance: 2.0 / (n as f64 * LN_2 * LN_2),
            })
        })
        .collect();
    LogscaleDiagram {
        kind: LdKind::Log2Sd,
        delta0: pyramid.delta0,
        label: None,
        octaves,
    }
}
