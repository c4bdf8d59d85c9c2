//! Exact fractional Gaussian noise by circulant embedding.
//!
//! The target covariance is r(k) = (|k+1|^2H - 2|k|^2H + |k-1|^2H)/2,
//! unit variance. Embedding r in a circulant of twice the length makes
//! the covariance diagonal in Fourier space; one FFT of suitably scaled
//! complex Gaussians then yields a sample whose law is exactly
//! N(0, Toeplitz(r)), not an approximation.

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::{num_complex::Complex, FftPlanner};

use super::SynthError;

/// fGn autocovariance at lag k for Hurst parameter h.
pub fn fgn_autocov(h: f64, k: u64) -> f64 {
    let k = k as f64;
    let p = 2.0 * h;
    0.5 * ((k + 1.0).powf(p) - 2.0 * k.powf(p) + (k - 1.0).abs().powf(p))
}

/// Generate n samples of fGn with Hurst parameter h, unit variance.
///
/// The eigenvalues of the fGn circulant are nonnegative for all
/// h in (0,1) up to rounding; values above -1e-8 of the peak are clamped
/// to zero, anything worse triggers one retry at doubled embedding size.
pub fn gen_fgn(h: f64, n: usize, seed: u64) -> Result<Vec<f64>, SynthError> {
    if !(h > 0.0 && h < 1.0) {
        return Err(SynthError::InvalidParameter(format!(
            "hurst parameter must lie in (0,1), got {h}"
        )));
    }
    if n < 2 {
        return Err(SynthError::InvalidParameter(format!(
            "need at least 2 samples, got {n}"
        )));
    }
    let mut m = n.next_power_of_two();
    for _ in 0..2 {
        match try_embed(h, n, m, seed) {
            Some(x) => return Ok(x),
            None => m *= 2,
        }
    }
    Err(SynthError::EmbeddingNotPSD)
}

fn try_embed(h: f64, n: usize, m: usize, seed: u64) -> Option<Vec<f64>> {
    let big = 2 * m;
    // first circulant row: r(0..m), mirrored
    let mut row: Vec<Complex<f64>> = vec![Complex::new(0.0, 0.0); big];
    for k in 0..=m {
        row[k].re = fgn_autocov(h, k as u64);
    }
    for k in 1..m {
        row[big - k].re = row[k].re;
    }
    let mut planner = FftPlanner::new();
    let fft = planner.plan_fft_forward(big);
    fft.process(&mut row);
    let lambda_max = row.iter().map(|c| c.re).fold(f64::MIN, f64::max);
    let mut lambda = Vec::with_capacity(big);
    for c in &row {
        if c.re < -1e-8 * lambda_max {
            return None;
        }
        lambda.push(c.re.max(0.0));
    }
    // z_k = sqrt(lambda_k / big) (xi + i eta); Re FFT(z) ~ N(0, Toeplitz(r))
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut z: Vec<Complex<f64>> = lambda
        .iter()
        .map(|&l| {
            let a = (l / big as f64).sqrt();
            let xi: f64 = rng.sample(StandardNormal);
            let eta: f64 = rng.sample(StandardNormal);
            Complex::new(a * xi, a * eta)
        })
        .collect();
    fft.process(&mut z);
    Some(z[..n].iter().map(|c| c.re).collect())
}
