//! Decimated two-channel analysis/synthesis in symmetric and periodized
//! boundary modes.
//!
//! Symmetric mode follows the common half-sample reflection convention:
//! a length-`n` input yields `floor((n + F - 1) / 2)` coefficients per
//! channel, and synthesis recovers the input exactly.

use super::filters::Wavelet;
use super::{Method, SubbandSet, WaveletError};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Boundary {
    Symmetric,
    /// Circular indexing; inputs are zero-padded to a multiple of `2^levels`.
    Periodized,
}

pub const DWT_LEVELS: usize = 5;

/// Half-sample symmetric reflection of an arbitrary index into `0..n`.
fn reflect(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -i - 1;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

pub fn coeff_len(n: usize, filter_len: usize, mode: Boundary) -> usize {
    match mode {
        Boundary::Symmetric => (n + filter_len - 1) / 2,
        Boundary::Periodized => n.div_ceil(2),
    }
}

/// One analysis step: `(approximation, detail)`.
pub fn analyze(x: &[f64], w: &Wavelet, mode: Boundary) -> (Vec<f64>, Vec<f64>) {
    let n = x.len();
    let f = w.len();
    let m = coeff_len(n, f, mode);
    let mut lo = vec![0.0; m];
    let mut hi = vec![0.0; m];
    for o in 0..m {
        let (mut a, mut d) = (0.0, 0.0);
        for j in 0..f {
            let t = 2 * o as isize + 1 - j as isize;
            let idx = match mode {
                Boundary::Symmetric => reflect(t, n),
                Boundary::Periodized => t.rem_euclid(n as isize) as usize,
            };
            a += w.dec_lo[j] * x[idx];
            d += w.dec_hi[j] * x[idx];
        }
        lo[o] = a;
        hi[o] = d;
    }
    (lo, hi)
}

/// Inverse of [`analyze`] for an output of length `n`.
pub fn synthesize(lo: &[f64], hi: &[f64], w: &Wavelet, mode: Boundary, n: usize) -> Vec<f64> {
    let f = w.len();
    let mut x = vec![0.0; n];
    for o in 0..lo.len() {
        for j in 0..f {
            let t = 2 * o as isize + 1 - j as isize;
            let idx = match mode {
                // Contributions that landed in the extension are dropped;
                // for an orthogonal filter the interior is still exact.
                Boundary::Symmetric => {
                    if t < 0 || t >= n as isize {
                        continue;
                    }
                    t as usize
                }
                Boundary::Periodized => t.rem_euclid(n as isize) as usize,
            };
            x[idx] += lo[o] * w.dec_lo[j] + hi[o] * w.dec_hi[j];
        }
    }
    x
}

pub(crate) fn check_len(n: usize, w: &Wavelet) -> Result<(), WaveletError> {
    let needed = 2 * w.len();
    if n < needed {
        return Err(WaveletError::SignalTooShort { got: n, needed });
    }
    Ok(())
}

/// Pads with zeros up to the next multiple of `2^levels`.
pub fn pad_to_dyadic(x: &[f64], levels: usize) -> Vec<f64> {
    let block = 1usize << levels;
    let mut v = x.to_vec();
    v.resize(x.len().div_ceil(block) * block, 0.0);
    v
}

/// Multi-level pyramid; bands are `[A_L, D_L, ..., D_1]`.
pub fn wavedec(x: &[f64], w: &Wavelet, levels: usize, mode: Boundary) -> Result<Vec<Vec<f64>>, WaveletError> {
    check_len(x.len(), w)?;
    let mut approx = match mode {
        Boundary::Symmetric => x.to_vec(),
        Boundary::Periodized => pad_to_dyadic(x, levels),
    };
    let mut details = Vec::with_capacity(levels);
    for _ in 0..levels {
        let (a, d) = analyze(&approx, w, mode);
        details.push(d);
        approx = a;
    }
    let mut bands = vec![approx];
    bands.extend(details.into_iter().rev());
    Ok(bands)
}

/// Lengths of the intermediate approximations, finest first, starting with
/// the (possibly padded) input length.
fn approx_lengths(n: usize, f: usize, levels: usize, mode: Boundary) -> Vec<usize> {
    let mut lens = vec![match mode {
        Boundary::Symmetric => n,
        Boundary::Periodized => n.div_ceil(1 << levels) << levels,
    }];
    for _ in 0..levels {
        let last = *lens.last().unwrap();
        lens.push(coeff_len(last, f, mode));
    }
    lens
}

/// Inverse of [`wavedec`] for an original signal of length `n`.
pub fn waverec(bands: &[Vec<f64>], w: &Wavelet, mode: Boundary, n: usize) -> Vec<f64> {
    let levels = bands.len() - 1;
    let lens = approx_lengths(n, w.len(), levels, mode);
    let mut approx = bands[0].clone();
    for (k, d) in bands[1..].iter().enumerate() {
        let out_len = lens[levels - 1 - k];
        approx = synthesize(&approx, d, w, mode, out_len);
    }
    approx.truncate(n);
    approx
}

/// Five-level db4 (or other) pyramid with symmetric extension.
pub fn dwt_decompose(x: &[f64], w: &Wavelet) -> Result<SubbandSet, WaveletError> {
    Ok(SubbandSet { method: Method::Dwt, bands: wavedec(x, w, DWT_LEVELS, Boundary::Symmetric)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    #[test]
    fn symmetric_lengths_match_convention() {
        let w = Wavelet::db4();
        let bands = wavedec(&random(500, 1), &w, 5, Boundary::Symmetric).unwrap();
        let lens: Vec<usize> = bands.iter().map(Vec::len).collect();
        assert_eq!(lens, vec![22, 22, 37, 68, 130, 253]);
    }

    #[test]
    fn known_first_coefficient() {
        // Constant input: every approximation coefficient is c * sqrt(2),
        // details vanish, including at the reflected edges.
        let w = Wavelet::db4();
        let (a, d) = analyze(&[3.0; 40], &w, Boundary::Symmetric);
        for v in a {
            assert!((v - 3.0 * 2f64.sqrt()).abs() < 1e-13);
        }
        for v in d {
            assert!(v.abs() < 1e-13);
        }
    }

    #[test]
    fn reconstruction_odd_and_even_lengths() {
        let w = Wavelet::db4();
        for n in [16, 17, 63, 500, 501] {
            let x = random(n, n as u64);
            for mode in [Boundary::Symmetric, Boundary::Periodized] {
                let levels = if n < 64 { 1 } else { 5 };
                let bands = wavedec(&x, &w, levels, mode).unwrap();
                let y = waverec(&bands, &w, mode, n);
                let err = x.iter().zip(&y).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
                assert!(err < 1e-10, "n={n} {mode:?}: {err}");
            }
        }
    }

    #[test]
    fn periodized_parseval() {
        let w = Wavelet::db4();
        let x = random(500, 9);
        let bands = wavedec(&x, &w, 5, Boundary::Periodized).unwrap();
        assert_eq!(bands[0].len(), 16);
        let e_x: f64 = x.iter().map(|v| v * v).sum();
        let e_b: f64 = bands.iter().flatten().map(|v| v * v).sum();
        assert!(((e_x - e_b) / e_x).abs() < 1e-12);
    }

    #[test]
    fn too_short_rejected() {
        let w = Wavelet::db4();
        assert_eq!(dwt_decompose(&[0.0; 15], &w), Err(WaveletError::SignalTooShort { got: 15, needed: 16 }));
    }

    #[test]
    fn reflect_handles_long_overhangs() {
        assert_eq!(reflect(-1, 3), 0);
        assert_eq!(reflect(-4, 3), 2);
        assert_eq!(reflect(3, 3), 2);
        assert_eq!(reflect(7, 3), 1);
    }
}
