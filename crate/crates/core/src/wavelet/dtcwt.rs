//! Dual-tree complex wavelet transform on a periodically extended,
//! zero-padded input.
//!
//! Level 1 filters the input without decimation; the even samples feed
//! tree A and the odd samples tree B, so the two trees start half a
//! level-2 sample apart. The quarter-shift filters used from level 2 on keep
//! that offset, which makes each tree pair an approximately analytic
//! (real, imaginary) couple.

use super::dwt::{check_len, pad_to_dyadic};
use super::filters::{DtcwtFilters, Wavelet};
use super::{Method, SubbandSet, WaveletError};

pub const DTCWT_LEVELS: usize = 5;

/// Circular filtering with output decimation `step` and index alignment
/// `align`: `y[o] = sum_j h[j] x[(step*o + align - j) mod n]`.
fn circular(x: &[f64], h: &[f64], step: usize, align: usize) -> Vec<f64> {
    let n = x.len();
    (0..n / step)
        .map(|o| h.iter().enumerate().map(|(j, hj)| hj * x[(step * o + align + n * h.len() - j) % n]).sum())
        .collect()
}

fn magnitude(re: &[f64], im: &[f64]) -> Vec<f64> {
    re.iter().zip(im).map(|(a, b)| a.hypot(*b)).collect()
}

/// Complex detail coefficients per level (finest first) and the final
/// tree-A and tree-B lowpasses.
#[derive(Debug, Clone, PartialEq)]
pub struct DtcwtPyramid {
    pub details: Vec<(Vec<f64>, Vec<f64>)>,
    pub lowpass_a: Vec<f64>,
    pub lowpass_b: Vec<f64>,
}

pub fn dtcwt_forward(x: &[f64], levels: usize) -> Result<DtcwtPyramid, WaveletError> {
    check_len(x.len(), &Wavelet::db4())?;
    assert!(levels >= 1);
    let f = DtcwtFilters::get();
    let x = pad_to_dyadic(x, levels);

    let lo1 = circular(&x, &f.level1_lo, 1, f.level1_lo.len() / 2);
    let hi1 = circular(&x, &f.level1_hi, 1, f.level1_hi.len() / 2);
    let split = |v: &[f64]| -> (Vec<f64>, Vec<f64>) {
        (v.iter().step_by(2).copied().collect(), v.iter().skip(1).step_by(2).copied().collect())
    };
    let mut details = vec![split(&hi1)];
    let (mut a, mut b) = split(&lo1);

    let align = f.tree_a_lo.len() / 2;
    for _ in 1..levels {
        let da = circular(&a, &f.tree_a_hi, 2, align);
        let db = circular(&b, &f.tree_b_hi, 2, align);
        details.push((da, db));
        a = circular(&a, &f.tree_a_lo, 2, align);
        b = circular(&b, &f.tree_b_lo, 2, align);
    }
    Ok(DtcwtPyramid { details, lowpass_a: a, lowpass_b: b })
}

/// Bands `[A5, |D5|, |D4|, |D3|, |D2|, |D1|]`.
pub fn dtcwt_decompose(x: &[f64]) -> Result<SubbandSet, WaveletError> {
    let p = dtcwt_forward(x, DTCWT_LEVELS)?;
    let mut bands = vec![p.lowpass_a];
    bands.extend(p.details.iter().rev().map(|(re, im)| magnitude(re, im)));
    Ok(SubbandSet { method: Method::Dtcwt, bands })
}
