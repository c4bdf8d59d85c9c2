//! Bottom-up leader recursion checked against the exhaustive supremum.
//!
//! The reference scans, for every octave-j position, every coefficient at
//! every octave j' <= j whose index cell falls inside the clipped 3-cell
//! neighborhood, taking the supremum of the weighted magnitudes directly.
//! Both sides apply the identical weight expression, so the comparison is
//! exact equality, not a tolerance.

use biscale_core::leaders::{compute_leaders, scale_weight};
use biscale_core::wavelet::dwt;
use biscale_core::{Wavelet, WaveletPyramid};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Exhaustive leader at octave `j`, position `k`: sup of weighted
/// magnitudes over octaves `j' <= j` and coefficient indices inside the
/// boundary-clipped cells `k-1, k, k+1` of octave `j`.
fn exhaustive_leader(pyr: &WaveletPyramid, gamma: f64, j: u32, k: usize) -> f64 {
    let mut sup = 0.0f64;
    let lo_cell = k.saturating_sub(1);
    let hi_cell = k + 2; // exclusive
    for oct in pyr.octaves.iter().filter(|o| o.j <= j) {
        let span = 1usize << (j - oct.j);
        let w = scale_weight(gamma, oct.j);
        let lo = lo_cell * span;
        let hi = (hi_cell * span).min(oct.coeffs.len());
        for &d in oct.coeffs.iter().take(hi).skip(lo.min(hi)) {
            let v = w * d.abs();
            if v > sup {
                sup = v;
            }
        }
    }
    sup
}

fn assert_bit_exact(pyr: &WaveletPyramid, gamma: f64) {
    let lp = compute_leaders(pyr, gamma).unwrap();
    for oct in &lp.octaves {
        for (k, &got) in oct.leaders.iter().enumerate() {
            let want = exhaustive_leader(pyr, gamma, oct.j, k);
            assert!(
                got == want,
                "gamma={gamma} octave {} position {k}: recursion {got:?}, exhaustive {want:?}",
                oct.j
            );
        }
    }
}

#[test]
fn random_pyramids_match_the_exhaustive_sup_bit_for_bit() {
    let mut rng = ChaCha8Rng::seed_from_u64(1105);
    let mut checked = 0u32;
    for trial in 0..200 {
        let n = rng.random_range(64..=1024);
        // Mix of heavy-tailed-ish spikes and zeros, the shapes that stress
        // sup bookkeeping.
        let samples: Vec<f64> = (0..n)
            .map(|_| {
                let u: f64 = rng.random();
                if u < 0.2 {
                    0.0
                } else if u < 0.95 {
                    rng.random::<f64>() * 4.0
                } else {
                    rng.random::<f64>() * 400.0
                }
            })
            .collect();
        let moments = [1u32, 2, 3][trial % 3];
        let Ok(pyr) = dwt(&samples, 0.004, Wavelet::daubechies(moments).unwrap(), 8) else {
            continue;
        };
        if pyr.depth() < 2 {
            continue;
        }
        let gamma = [0.0, 0.5, 1.0][trial % 3];
        assert_bit_exact(&pyr, gamma);
        checked += 1;
    }
    assert!(checked >= 150, "only {checked} usable pyramids");
}

#[test]
fn point_mass_is_picked_up_by_exactly_the_covering_neighborhoods() {
    // One spike: at every octave the leaders near the spike's cell carry
    // its weighted magnitude and positions further away do not see it
    // through the 3-neighborhood.
    let mut samples = vec![0.0f64; 512];
    samples[200] = 1000.0;
    let pyr = dwt(&samples, 0.01, Wavelet::daubechies(1).unwrap(), 8).unwrap();
    let gamma = 1.0;
    let lp = compute_leaders(&pyr, gamma).unwrap();
    for oct in &lp.octaves {
        for (k, &got) in oct.leaders.iter().enumerate() {
            assert_eq!(got, exhaustive_leader(&pyr, gamma, oct.j, k));
        }
        let positive = oct.leaders.iter().filter(|&&v| v > 0.0).count();
        assert!(
            positive <= 4,
            "octave {}: spike leaked into {positive} neighborhoods",
            oct.j
        );
    }
}

#[test]
fn boundary_positions_clip_instead_of_wrapping() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let samples: Vec<f64> = (0..300).map(|_| rng.random::<f64>() * 10.0).collect();
    let pyr = dwt(&samples, 0.01, Wavelet::daubechies(2).unwrap(), 8).unwrap();
    // A huge value at the very start must not reach the last position's
    // neighborhood at the finest octave, and vice versa.
    let lp = compute_leaders(&pyr, 0.0).unwrap();
    let fine = &lp.octaves[0];
    let n = fine.leaders.len();
    assert_eq!(fine.leaders[0], exhaustive_leader(&pyr, 0.0, 1, 0));
    assert_eq!(fine.leaders[n - 1], exhaustive_leader(&pyr, 0.0, 1, n - 1));
}
