//! Wavelet leaders: local suprema of detail coefficients across scale.
//!
//! The leader at octave `j`, position `k` is the supremum of weighted
//! coefficient magnitudes `2^(gamma j') |d(j', k')|` over all dyadic cells
//! at scales `j' <= j` contained in the 3-cell neighborhood of `(j, k)`,
//! with neighborhoods clipped at the series boundaries. The weight
//! exponent `gamma` compensates for the insufficient pointwise regularity
//! of noise-like count series: with the default `gamma = 1` the cumulant
//! slopes are reported in the units of the once-integrated process, which
//! is the convention under which `c1` tracks the self-similarity exponent
//! `H` of long-range dependent traffic. `gamma = 0` gives the raw supremum
//! of coefficient magnitudes.
//!
//! The bottom-up recursion runs on a ceil-halved position grid rather than
//! on the coefficient arrays themselves. Valid-only convolution trims more
//! than half the positions at each level, so some fine-scale coefficients
//! sit under coarse cells that have no coefficient of their own; the grid
//! keeps those suprema alive, and the result is exactly the brute-force
//! supremum over every existing coefficient.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ld::{LdKind, LdPoint, LogscaleDiagram, LN_2};
use crate::wavelet::WaveletPyramid;

/// Default regularity-compensation exponent.
pub const DEFAULT_GAMMA: f64 = 1.0;

/// Finest octave whose leaders aggregate at least two finer octaves.
pub const J_MIN_VALID: u32 = 3;

#[derive(Debug, Error)]
pub enum LeaderError {
    #[error("all leaders at octave {j} are zero; the series is degenerate at this scale")]
    AllLeadersZero { j: u32 },
    #[error("gamma must be finite and >= 0, got {0}")]
    InvalidGamma(f64),
    #[error("leaders need at least 2 octaves, pyramid has {got}")]
    TooFewOctaves { got: usize },
}

/// Leaders for one octave.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderOctave {
    pub j: u32,
    pub leaders: Vec<f64>,
}

/// Leader pyramid with the compensation exponent it was built with.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LeaderPyramid {
    pub delta0: f64,
    pub gamma: f64,
    /// Finest octave with enough scale depth below it for leader
    /// statistics to be trustworthy.
    pub j_min_valid: u32,
    pub octaves: Vec<LeaderOctave>,
}

impl LeaderPyramid {
    pub fn octave(&self, j: u32) -> Option<&LeaderOctave> {
        if j == 0 {
            return None;
        }
        self.octaves.get(j as usize - 1)
    }

    pub fn depth(&self) -> u32 {
        self.octaves.len() as u32
    }
}

/// Scale weight `2^(gamma j)` applied to coefficient magnitudes before the
/// supremum. Kept as a function so tests and oracles share the exact
/// floating-point expression.
pub fn scale_weight(gamma: f64, j: u32) -> f64 {
    (gamma * j as f64).exp2()
}

/// Compute the leader pyramid of a detail pyramid.
///
/// Zero leaders are legal here (point masses leave zeros around them);
/// the statistics downstream exclude or reject them as their definitions
/// require.
pub fn compute_leaders(
    pyramid: &WaveletPyramid,
    gamma: f64,
) -> Result<LeaderPyramid, LeaderError> {
    if !gamma.is_finite() || gamma < 0.0 {
        return Err(LeaderError::InvalidGamma(gamma));
    }
    if pyramid.octaves.len() < 2 {
        return Err(LeaderError::TooFewOctaves {
            got: pyramid.octaves.len(),
        });
    }
    let mut octaves = Vec::with_capacity(pyramid.octaves.len());
    // sup over all scales <= j within each grid cell of octave j
    let mut cell_sup: Vec<f64> = Vec::new();
    for oct in &pyramid.octaves {
        let w = scale_weight(gamma, oct.j);
        let n_j = oct.coeffs.len();
        if oct.j == 1 {
            cell_sup = oct.coeffs.iter().map(|d| w * d.abs()).collect();
        } else {
            let g_prev = cell_sup.len();
            let g_j = g_prev.div_ceil(2);
            let mut next = Vec::with_capacity(g_j);
            for k in 0..g_j {
                let mut m = if k < n_j { w * oct.coeffs[k].abs() } else { 0.0 };
                let lo = 2 * k;
                if lo < g_prev && cell_sup[lo] > m {
                    m = cell_sup[lo];
                }
                if lo + 1 < g_prev && cell_sup[lo + 1] > m {
                    m = cell_sup[lo + 1];
                }
                next.push(m);
            }
            cell_sup = next;
        }
        let g_j = cell_sup.len();
        let mut leaders = Vec::with_capacity(n_j);
        for k in 0..n_j {
            let mut m = cell_sup[k];
            if k > 0 && cell_sup[k - 1] > m {
                m = cell_sup[k - 1];
            }
            if k + 1 < g_j && cell_sup[k + 1] > m {
                m = cell_sup[k + 1];
            }
            leaders.push(m);
        }
        octaves.push(LeaderOctave { j: oct.j, leaders });
    }
    Ok(LeaderPyramid {
        delta0: pyramid.delta0,
        gamma,
        j_min_valid: J_MIN_VALID,
        octaves,
    })
}

/// Leader structure function diagram: `value(j) = log2 mean L(j,.)^q`
/// over the positive leaders at each octave.
///
/// Exact zeros (flat stretches of an integer count series) carry no scaling
/// information and would pin the mean for negative `q`, so they are
/// excluded; `n_j` reports the retained count. An octave with no positive
/// leader at all is an error.
pub fn leader_structure_fn(
    lp: &LeaderPyramid,
    q: f64,
) -> Result<LogscaleDiagram, LeaderError> {
    let mut octaves = Vec::with_capacity(lp.octaves.len());
    for o in &lp.octaves {
        let powers: Vec<f64> = o
            .leaders
            .iter()
            .filter(|&&l| l > 0.0)
            .map(|l| l.powf(q))
            .collect();
        if powers.is_empty() {
            return Err(LeaderError::AllLeadersZero { j: o.j });
        }
        let n = powers.len() as f64;
        let mean = powers.iter().sum::<f64>() / n;
        if !(mean > 0.0) || !mean.is_finite() {
            continue; // overflowed moment; octave unusable at this q
        }
        let var_pow = powers.iter().map(|p| (p - mean) * (p - mean)).sum::<f64>() / n;
        octaves.push(LdPoint {
            j: o.j,
            n_j: powers.len() as u64,
            value: mean.log2(),
            variance: var_pow / (n * mean * mean * LN_2 * LN_2),
        });
    }
    Ok(LogscaleDiagram {
        kind: LdKind::Log2Sl(q),
        delta0: lp.delta0,
        label: None,
        octaves,
    })
}

/// Central sample moments 2..=6 of a slice.
fn central_moments(xs: &[f64]) -> (f64, [f64; 5]) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let mut m = [0.0f64; 5]; // m2..m6
    for &x in xs {
        let d = x - mean;
        let d2 = d * d;
        m[0] += d2;
        m[1] += d2 * d;
        m[2] += d2 * d2;
        m[3] += d2 * d2 * d;
        m[4] += d2 * d2 * d2;
    }
    for v in &mut m {
        *v /= n;
    }
    (mean, m)
}

/// Sample cumulant diagrams `C_1 .. C_max_order` of `ln` leaders.
///
/// Zero leaders carry no log and are excluded per octave; an octave enters
/// a diagram only when it retains enough positive leaders for the order
/// (2 for C1/C2, 3 for C3) and a nonzero spread. Variances are the
/// standard large-sample plug-ins from the central moments of `ln L`.
pub fn cumulants(lp: &LeaderPyramid, max_order: u8) -> Vec<LogscaleDiagram> {
    let max_order = max_order.clamp(1, 3);
    let kinds = [LdKind::C1, LdKind::C2, LdKind::C3];
    let mut diagrams: Vec<LogscaleDiagram> = kinds[..max_order as usize]
        .iter()
        .map(|&kind| LogscaleDiagram {
            kind,
            delta0: lp.delta0,
            label: None,
            octaves: Vec::new(),
        })
        .collect();
    for o in &lp.octaves {
        let logs: Vec<f64> = o
            .leaders
            .iter()
            .filter(|&&l| l > 0.0)
            .map(|&l| l.ln())
            .collect();
        let n = logs.len();
        if n < 2 {
            continue;
        }
        let nf = n as f64;
        let (mean, m) = central_moments(&logs);
        let (m2, m3, m4, m6) = (m[0], m[1], m[2], m[4]);
        if m2 <= 0.0 {
            continue;
        }
        let n_j = n as u64;
        // C1: sample mean, Var = m2 / n
        diagrams[0].octaves.push(LdPoint {
            j: o.j,
            n_j,
            value: mean,
            variance: m2 / nf,
        });
        if max_order >= 2 {
            // C2: unbiased sample variance, Var ~ (m4 - m2^2) / n
            let c2 = nf / (nf - 1.0) * m2;
            let mut var = (m4 - m2 * m2) / nf;
            if var <= 0.0 {
                // Gaussian-equivalent fallback keeps weights usable when the
                // plug-in collapses on tiny or heavily tied samples.
                var = 2.0 * m2 * m2 / nf;
            }
            diagrams[1].octaves.push(LdPoint {
                j: o.j,
                n_j,
                value: c2,
                variance: var,
            });
        }
        if max_order >= 3 && n >= 3 {
            // C3: third k-statistic, Var ~ (m6 - m3^2 - 6 m2 m4 + 9 m2^3) / n
            let k3 = nf * nf / ((nf - 1.0) * (nf - 2.0)) * m3;
            let mut var = (m6 - m3 * m3 - 6.0 * m2 * m4 + 9.0 * m2 * m2 * m2) / nf;
            if var <= 0.0 {
                var = 6.0 * m2 * m2 * m2 / nf;
            }
            diagrams[2].octaves.push(LdPoint {
                j: o.j,
                n_j,
                value: k3,
                variance: var,
            });
        }
    }
    diagrams
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wavelet::{dwt, OctaveCoeffs, Wavelet};
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn pyramid_from(coeffs: Vec<Vec<f64>>) -> WaveletPyramid {
        let n0 = coeffs[0].len() * 2 + 4;
        WaveletPyramid {
            delta0: 1.0,
            wavelet: Wavelet::default(),
            n0,
            octaves: coeffs
                .into_iter()
                .enumerate()
                .map(|(i, c)| OctaveCoeffs {
                    j: i as u32 + 1,
                    coeffs: c,
                })
                .collect(),
        }
    }

    #[test]
    fn three_neighborhood_example_raw_sup() {
        let p = pyramid_from(vec![vec![3.0, -1.0, 4.0, 1.0], vec![-2.0, 5.0]]);
        let lp = compute_leaders(&p, 0.0).unwrap();
        let l2 = &lp.octave(2).unwrap().leaders;
        assert_eq!(l2.len(), 2);
        assert_eq!(l2[0], 5.0);
        assert_eq!(l2[1], 5.0);
        let l1 = &lp.octave(1).unwrap().leaders;
        assert_eq!(l1, &vec![3.0, 4.0, 4.0, 4.0]);
    }

    #[test]
    fn compensated_weights_enter_the_sup() {
        let p = pyramid_from(vec![vec![3.0, -1.0, 4.0, 1.0], vec![-2.0, 5.0]]);
        let lp = compute_leaders(&p, 1.0).unwrap();
        // 2^2 * 5 = 20 dominates 2^1 * 4 = 8
        assert_eq!(lp.octave(2).unwrap().leaders, vec![20.0, 20.0]);
    }

    #[test]
    fn point_mass_propagates_exactly() {
        // one nonzero coefficient at octave 2, position 1
        let mut coeffs = vec![vec![0.0; 16], vec![0.0; 8], vec![0.0; 4], vec![0.0; 2]];
        coeffs[1][1] = 7.0;
        let p = pyramid_from(coeffs);
        let lp = compute_leaders(&p, 0.0).unwrap();
        for j in 2..=4u32 {
            let ls = &lp.octave(j).unwrap().leaders;
            let hits = ls.iter().filter(|&&l| l == 7.0).count();
            let zeros = ls.iter().filter(|&&l| l == 0.0).count();
            assert!((1..=3).contains(&hits), "j={j} hits={hits}");
            assert_eq!(hits + zeros, ls.len(), "j={j}");
        }
        // octave 1 never looks upward, so the mass is invisible there
        assert!(lp.octave(1).unwrap().leaders.iter().all(|&l| l == 0.0));
    }

    #[test]
    fn domination_and_scale_monotonicity() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let xs: Vec<f64> = (0..512)
            .map(|_| rng.sample::<f64, _>(rand_distr::StandardNormal))
            .collect();
        let p = dwt(&xs, 1.0, Wavelet::daubechies(2).unwrap(), 4).unwrap();
        for &gamma in &[0.0, 0.5, 1.0] {
            let lp = compute_leaders(&p, gamma).unwrap();
            for o in &p.octaves {
                let w = scale_weight(gamma, o.j);
                let ls = &lp.octave(o.j).unwrap().leaders;
                for (k, d) in o.coeffs.iter().enumerate() {
                    assert!(ls[k] >= w * d.abs(), "domination at j={} k={k}", o.j);
                }
            }
            for j in 1..lp.depth() {
                let fine = &lp.octave(j).unwrap().leaders;
                let coarse = &lp.octave(j + 1).unwrap().leaders;
                for (k, &c) in coarse.iter().enumerate() {
                    for child in [2 * k, 2 * k + 1] {
                        if child < fine.len() {
                            assert!(
                                c >= fine[child],
                                "monotonicity at j={} k={k} gamma={gamma}",
                                j + 1
                            );
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn constant_series_has_no_usable_leaders() {
        let xs = vec![3.0; 256];
        let p = dwt(&xs, 1.0, Wavelet::daubechies(1).unwrap(), 8).unwrap();
        let lp = compute_leaders(&p, 1.0).unwrap();
        assert!(matches!(
            leader_structure_fn(&lp, 2.0),
            Err(LeaderError::AllLeadersZero { j: 1 })
        ));
        // cumulants silently retain nothing
        let ds = cumulants(&lp, 2);
        assert!(ds.iter().all(|d| d.octaves.is_empty()));
    }

    #[test]
    fn invalid_gamma_and_shallow_pyramids_are_rejected() {
        let p = pyramid_from(vec![vec![1.0, 2.0], vec![0.5]]);
        assert!(matches!(
            compute_leaders(&p, -0.5),
            Err(LeaderError::InvalidGamma(_))
        ));
        assert!(compute_leaders(&p, f64::NAN).is_err());
        let shallow = pyramid_from(vec![vec![1.0, 2.0]]);
        assert!(matches!(
            compute_leaders(&shallow, 1.0),
            Err(LeaderError::TooFewOctaves { got: 1 })
        ));
    }

    #[test]
    fn cumulant_values_two_leaders() {
        // ln leaders {0, 2}: C1 = 1, unbiased C2 = 2
        let lp = LeaderPyramid {
            delta0: 1.0,
            gamma: 0.0,
            j_min_valid: J_MIN_VALID,
            octaves: vec![LeaderOctave {
                j: 1,
                leaders: vec![1.0, (2.0f64).exp()],
            }],
        };
        let ds = cumulants(&lp, 2);
        assert_eq!(ds.len(), 2);
        let c1 = ds[0].octaves[0];
        let c2 = ds[1].octaves[0];
        assert!((c1.value - 1.0).abs() < 1e-12);
        assert!((c2.value - 2.0).abs() < 1e-12);
        assert_eq!(c1.n_j, 2);
    }

    #[test]
    fn cumulants_skip_zero_leaders_and_short_octaves() {
        let lp = LeaderPyramid {
            delta0: 1.0,
            gamma: 0.0,
            j_min_valid: J_MIN_VALID,
            octaves: vec![
                LeaderOctave {
                    j: 1,
                    leaders: vec![0.0, 1.0, (1.0f64).exp(), 0.0],
                },
                LeaderOctave {
                    j: 2,
                    leaders: vec![0.0, 5.0],
                },
            ],
        };
        let ds = cumulants(&lp, 3);
        // octave 1 keeps the two positive leaders; octave 2 has only one
        assert_eq!(ds[0].octaves.len(), 1);
        assert_eq!(ds[0].octaves[0].n_j, 2);
        assert!((ds[0].octaves[0].value - 0.5).abs() < 1e-12);
        // C3 needs n >= 3, so nothing anywhere
        assert!(ds[2].octaves.is_empty());
    }

    #[test]
    fn sl_diagram_excludes_zero_leaders() {
        let lp = LeaderPyramid {
            delta0: 0.5,
            gamma: 0.0,
            j_min_valid: J_MIN_VALID,
            octaves: vec![LeaderOctave {
                j: 1,
                leaders: vec![0.0, 2.0, 4.0, 2.0],
            }],
        };
        let ld = leader_structure_fn(&lp, 2.0).unwrap();
        assert_eq!(ld.kind, LdKind::Log2Sl(2.0));
        let p = ld.octaves[0];
        assert_eq!(p.n_j, 3);
        assert!((p.value - ((4.0 + 16.0 + 4.0) / 3.0f64).log2()).abs() < 1e-12);
        assert_eq!(ld.delta0, 0.5);
        // q = 0 flattens every retained octave to exactly zero
        let flat = leader_structure_fn(&lp, 0.0).unwrap();
        assert_eq!(flat.octaves[0].value, 0.0);
        // constant leaders at value 2, q = 2: log2 mean 4 = 2
        let two = LeaderPyramid {
            delta0: 0.5,
            gamma: 0.0,
            j_min_valid: J_MIN_VALID,
            octaves: vec![LeaderOctave {
                j: 1,
                leaders: vec![2.0; 6],
            }],
        };
        let ld2 = leader_structure_fn(&two, 2.0).unwrap();
        assert!((ld2.octaves[0].value - 2.0).abs() < 1e-12);
    }
}
