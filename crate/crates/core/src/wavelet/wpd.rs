use super::dwt::{analyze, check_len, synthesize, Boundary};
use super::filters::Wavelet;
use super::{Method, SubbandSet, WaveletError};

pub const WPD_LEVELS: usize = 5;

/// Full packet tree; leaves in natural order (lowpass child before
/// highpass child at every node).
pub fn wpd_leaves(x: &[f64], w: &Wavelet, levels: usize, mode: Boundary) -> Result<Vec<Vec<f64>>, WaveletError> {
    check_len(x.len(), w)?;
    let root = match mode {
        Boundary::Symmetric => x.to_vec(),
        Boundary::Periodized => super::dwt::pad_to_dyadic(x, levels),
    };
    let mut nodes = vec![root];
    for _ in 0..levels {
        nodes = nodes
            .iter()
            .flat_map(|node| {
                let (a, d) = analyze(node, w, mode);
                [a, d]
            })
            .collect();
    }
    Ok(nodes)
}

/// Rebuilds the signal of length `n` from all leaves of a full tree.
pub fn wpd_reconstruct(leaves: &[Vec<f64>], w: &Wavelet, mode: Boundary, n: usize) -> Vec<f64> {
    assert!(leaves.len().is_power_of_two(), "leaf count must be a power of two");
    let levels = leaves.len().trailing_zeros() as usize;
    let mut lens = vec![match mode {
        Boundary::Symmetric => n,
        Boundary::Periodized => n.div_ceil(1 << levels) << levels,
    }];
    for _ in 0..levels {
        lens.push(super::dwt::coeff_len(*lens.last().unwrap(), w.len(), mode));
    }
    let mut nodes = leaves.to_vec();
    for depth in (0..levels).rev() {
        nodes = nodes.chunks(2).map(|pair| synthesize(&pair[0], &pair[1], w, mode, lens[depth])).collect();
    }
    let mut x = nodes.pop().unwrap();
    x.truncate(n);
    x
}

pub fn wpd_decompose(x: &[f64], w: &Wavelet) -> Result<SubbandSet, WaveletError> {
    Ok(SubbandSet { method: Method::Wpd, bands: wpd_leaves(x, w, WPD_LEVELS, Boundary::Symmetric)? })
}
