use std::collections::HashSet;
use std::path::Path;

use crate::recording::EegRecording;

use super::PreprocessError;

/// Electrode names accepted in montage definitions (10-20 system, with the
/// 10-10 aliases T7/T8/P7/P8 and the ear references).
pub const TEN_TWENTY: [&str; 27] = [
    "FP1", "FP2", "FPZ", "F7", "F3", "FZ", "F4", "F8", "T3", "C3", "CZ", "C4", "T4", "T5", "P3", "PZ", "P4", "T6",
    "O1", "OZ", "O2", "A1", "A2", "T7", "T8", "P7", "P8",
];

/// The 20 bipolar pairs of the default transverse central parietal montage.
pub const DEFAULT_TCP: [(&str, &str); 20] = [
    ("FP1", "F7"),
    ("F7", "T3"),
    ("T3", "T5"),
    ("T5", "O1"),
    ("FP2", "F8"),
    ("F8", "T4"),
    ("T4", "T6"),
    ("T6", "O2"),
    ("T3", "C3"),
    ("C3", "CZ"),
    ("CZ", "C4"),
    ("C4", "T4"),
    ("FP1", "F3"),
    ("F3", "C3"),
    ("C3", "P3"),
    ("P3", "O1"),
    ("FP2", "F4"),
    ("F4", "C4"),
    ("C4", "P4"),
    ("P4", "O2"),
];

pub const MONTAGE_CHANNELS: usize = 20;

/// Ordered list of (anode, cathode) electrode pairs.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MontageSpec {
    pairs: Vec<(String, String)>,
}

impl Default for MontageSpec {
    fn default() -> Self {
        MontageSpec { pairs: DEFAULT_TCP.iter().map(|(a, c)| (a.to_string(), c.to_string())).collect() }
    }
}

/// Strips TUH-style decorations ("EEG FP1-REF", "EEG FP1-LE") and uppercases.
pub fn normalize_electrode(label: &str) -> String {
    let mut s = label.trim().to_ascii_uppercase();
    if let Some(rest) = s.strip_prefix("EEG ") {
        s = rest.trim().to_string();
    }
    for suffix in ["-REF", "-LE", "-AR"] {
        if let Some(rest) = s.strip_suffix(suffix) {
            s = rest.to_string();
            break;
        }
    }
    s
}

impl MontageSpec {
    pub fn new(pairs: Vec<(String, String)>) -> Result<Self, PreprocessError> {
        let bad = |m: String| Err(PreprocessError::InvalidMontage(m));
        if pairs.len() != MONTAGE_CHANNELS {
            return bad(format!("expected {MONTAGE_CHANNELS} pairs, got {}", pairs.len()));
        }
        let mut seen = HashSet::new();
        let mut normalized = Vec::with_capacity(pairs.len());
        for (a, c) in pairs {
            let (a, c) = (normalize_electrode(&a), normalize_electrode(&c));
            for e in [&a, &c] {
                if !TEN_TWENTY.contains(&e.as_str()) {
                    return bad(format!("{e:?} is not a 10-20 electrode"));
                }
            }
            if a == c {
                return bad(format!("pair {a}-{c} references itself"));
            }
            if !seen.insert((a.clone(), c.clone())) {
                return bad(format!("duplicate pair {a}-{c}"));
            }
            normalized.push((a, c));
        }
        Ok(MontageSpec { pairs: normalized })
    }

    /// Parses one "ANODE-CATHODE" pair per line; blank lines and `#`
    /// comments are skipped.
    pub fn parse(text: &str) -> Result<Self, PreprocessError> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (a, c) = line.split_once('-').ok_or_else(|| {
                PreprocessError::InvalidMontage(format!("line {}: expected ANODE-CATHODE, got {line:?}", i + 1))
            })?;
            pairs.push((a.trim().to_string(), c.trim().to_string()));
        }
        Self::new(pairs)
    }

    pub fn load(path: &Path) -> Result<Self, PreprocessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| PreprocessError::InvalidMontage(format!("{}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn pairs(&self) -> &[(String, String)] {
        &self.pairs
    }

    pub fn channel_names(&self) -> Vec<String> {
        self.pairs.iter().map(|(a, c)| format!("{a}-{c}")).collect()
    }

    pub fn to_text(&self) -> String {
        self.channel_names().join("\n") + "\n"
    }
}

/// Forms each bipolar channel as anode minus cathode, in montage order.
pub fn apply_tcp_montage(rec: &EegRecording, spec: &MontageSpec) -> Result<EegRecording, PreprocessError> {
    let names: Vec<String> = rec.channel_labels.iter().map(|l| normalize_electrode(l)).collect();
    let find =
        |e: &str| names.iter().position(|n| n == e).ok_or_else(|| PreprocessError::MissingElectrode(e.to_string()));
    let mut samples = Vec::with_capacity(spec.pairs.len());
    for (a, c) in &spec.pairs {
        let (ia, ic) = (find(a)?, find(c)?);
        samples.push(rec.samples[ia].iter().zip(&rec.samples[ic]).map(|(x, y)| x - y).collect());
    }
    Ok(rec.with_samples(spec.channel_names(), samples, rec.sample_rate_hz))
}
