use std::sync::OnceLock;

use sha2::{Digest, Sha256};

/// Daubechies-4 scaling filter (8 taps), sums to sqrt(2).
const DB4_SCALING: [f64; 8] = [
    0.230_377_813_308_896_5,
    0.714_846_570_552_915_6,
    0.630_880_767_929_858_9,
    -0.027_983_769_416_859_854,
    -0.187_034_811_719_093_08,
    0.030_841_381_835_560_764,
    0.032_883_011_666_885_2,
    -0.010_597_401_785_069_032,
];

/// An orthogonal two-channel filter bank.
#[derive(Debug, Clone, PartialEq)]
pub struct Wavelet {
    pub name: &'static str,
    pub dec_lo: Vec<f64>,
    pub dec_hi: Vec<f64>,
}

impl Wavelet {
    pub fn db4() -> Self {
        Self::from_scaling("db4", &DB4_SCALING)
    }

    /// Builds the analysis pair from an orthonormal scaling filter.
    pub fn from_scaling(name: &'static str, h: &[f64]) -> Self {
        let n = h.len();
        let dec_lo: Vec<f64> = h.iter().rev().copied().collect();
        let dec_hi = (0..n).map(|k| if k % 2 == 0 { -h[k] } else { h[k] }).collect();
        Wavelet { name, dec_lo, dec_hi }
    }

    pub fn len(&self) -> usize {
        self.dec_lo.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dec_lo.is_empty()
    }
}

impl Default for Wavelet {
    fn default() -> Self {
        Self::db4()
    }
}

const FILTER_ASSET: &str = include_str!("../../assets/dtcwt_filters.txt");
pub const FILTER_ASSET_SHA256: &str = "dc1f3c71aca58214941dda3c31f5b25f30ba2e9daecbf11afd5a686643ebc96a";

/// Analysis filters of the dual-tree transform.
#[derive(Debug, Clone, PartialEq)]
pub struct DtcwtFilters {
    /// Level-1 biorthogonal lowpass/highpass, shared by both trees.
    pub level1_lo: Vec<f64>,
    pub level1_hi: Vec<f64>,
    /// Level >= 2 filters for the tree fed by even level-1 samples.
    pub tree_a_lo: Vec<f64>,
    pub tree_a_hi: Vec<f64>,
    /// Level >= 2 filters for the tree fed by odd level-1 samples.
    pub tree_b_lo: Vec<f64>,
    pub tree_b_hi: Vec<f64>,
}

fn alternating_flip(h: &[f64]) -> Vec<f64> {
    let n = h.len();
    (0..n).map(|k| if k % 2 == 0 { -h[n - 1 - k] } else { h[n - 1 - k] }).collect()
}

pub fn asset_sha256() -> String {
    Sha256::digest(FILTER_ASSET.as_bytes()).iter().map(|b| format!("{b:02x}")).collect()
}

fn parse_asset(text: &str) -> Vec<(String, Vec<f64>)> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|l| {
            let mut parts = l.split_whitespace();
            let name = parts.next().unwrap_or_default().to_string();
            let values = parts.map(|v| v.parse::<f64>().expect("numeric filter tap")).collect();
            (name, values)
        })
        .collect()
}

impl DtcwtFilters {
    /// Filters loaded from the embedded asset. Panics if the asset does not
    /// match its pinned checksum.
    pub fn get() -> &'static DtcwtFilters {
        static FILTERS: OnceLock<DtcwtFilters> = OnceLock::new();
        FILTERS.get_or_init(|| {
            assert_eq!(asset_sha256(), FILTER_ASSET_SHA256, "dtcwt filter asset checksum mismatch");
            let table = parse_asset(FILTER_ASSET);
            let get = |name: &str| {
                table
                    .iter()
                    .find(|(n, _)| n == name)
                    .map(|(_, v)| v.clone())
                    .unwrap_or_else(|| panic!("filter {name} missing from asset"))
            };
            let q = get("qshift_h0");
            // The even-sample tree takes the time-reversed quarter-shift
            // filter so that the odd tree lags by half a sample per level.
            let tree_a_lo: Vec<f64> = q.iter().rev().copied().collect();
            let tree_b_lo = q;
            DtcwtFilters {
                level1_lo: get("near_sym_h0"),
                level1_hi: get("near_sym_h1"),
                tree_a_hi: alternating_flip(&tree_a_lo),
                tree_b_hi: alternating_flip(&tree_b_lo),
                tree_a_lo,
                tree_b_lo,
            }
        })
    }
}
