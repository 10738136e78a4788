//! Plain EDF reader and writer.
//!
//! Layout: a 256-byte fixed header, then 256 bytes per signal with each
//! per-signal field stored for all signals before the next field, then the
//! data records. Each data record holds `samples_per_record` little-endian
//! 16-bit two's-complement samples for every signal in header order.

use crate::recording::EegRecording;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EdfError {
    #[error("header truncated: need {needed} bytes, have {have}")]
    TruncatedHeader { needed: usize, have: usize },
    #[error("field {field:?} is not numeric: {value:?}")]
    NonNumericField { field: &'static str, value: String },
    #[error("header_bytes is {declared} but {n_signals} signals imply {expected}")]
    InconsistentHeaderBytes { declared: usize, n_signals: usize, expected: usize },
    #[error("data region truncated: need {needed} bytes, have {have}")]
    TruncatedData { needed: usize, have: usize },
    #[error("signal {label:?}: {reason}")]
    InvalidSignal { label: String, reason: String },
    #[error("signals have different sample rates; plain EEG recordings need one rate")]
    MixedSampleRates,
    #[error("field {field:?} value {value:?} does not fit in {width} ascii bytes")]
    FieldOverflow { field: &'static str, value: String, width: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SignalHeader {
    pub label: String,
    pub transducer: String,
    pub physical_dim: String,
    pub phys_min: f64,
    pub phys_max: f64,
    pub dig_min: i32,
    pub dig_max: i32,
    pub prefilter: String,
    pub samples_per_record: usize,
}

impl SignalHeader {
    /// Digital-to-physical gain.
    pub fn gain(&self) -> f64 {
        (self.phys_max - self.phys_min) / (self.dig_max - self.dig_min) as f64
    }

    pub fn to_physical(&self, d: i16) -> f64 {
        self.phys_min + (d as f64 - self.dig_min as f64) * self.gain()
    }

    /// Inverse of [`to_physical`](Self::to_physical), rounded and clamped to
    /// the digital range.
    pub fn to_digital(&self, p: f64) -> i16 {
        let d = (p - self.phys_min) / self.gain() + self.dig_min as f64;
        let d = d.round().clamp(self.dig_min as f64, self.dig_max as f64);
        d.clamp(i16::MIN as f64, i16::MAX as f64) as i16
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdfHeader {
    pub version: String,
    pub patient_id: String,
    pub recording_id: String,
    pub start_date: String,
    pub start_time: String,
    pub header_bytes: usize,
    pub n_records: usize,
    pub record_duration_s: f64,
    pub signals: Vec<SignalHeader>,
}

impl EdfHeader {
    pub fn n_signals(&self) -> usize {
        self.signals.len()
    }

    pub fn samples_per_record_total(&self) -> usize {
        self.signals.iter().map(|s| s.samples_per_record).sum()
    }

    pub fn data_bytes(&self) -> usize {
        self.n_records * self.samples_per_record_total() * 2
    }

    fn check_signals(&self) -> Result<(), EdfError> {
        for s in &self.signals {
            let bad = |reason: &str| EdfError::InvalidSignal { label: s.label.clone(), reason: reason.to_string() };
            if s.dig_min >= s.dig_max {
                return Err(bad("digital minimum must be below digital maximum"));
            }
            if s.phys_min == s.phys_max {
                return Err(bad("physical minimum equals physical maximum"));
            }
            if s.samples_per_record == 0 {
                return Err(bad("samples per record must be at least 1"));
            }
        }
        Ok(())
    }
}

fn ascii(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).trim_end_matches([' ', '\0']).to_string()
}

fn numeric<T: std::str::FromStr>(bytes: &[u8], field: &'static str) -> Result<T, EdfError> {
    let s = String::from_utf8_lossy(bytes);
    s.trim().parse::<T>().map_err(|_| EdfError::NonNumericField { field, value: s.to_string() })
}

/// Decodes the fixed header and all per-signal header fields.
pub fn parse_edf_header(bytes: &[u8]) -> Result<EdfHeader, EdfError> {
    if bytes.len() < 256 {
        return Err(EdfError::TruncatedHeader { needed: 256, have: bytes.len() });
    }
    let header_bytes: usize = numeric(&bytes[184..192], "header_bytes")?;
    let n_records: i64 = numeric(&bytes[236..244], "n_records")?;
    let record_duration_s: f64 = numeric(&bytes[244..252], "record_duration")?;
    let n_signals: usize = numeric(&bytes[252..256], "n_signals")?;
    if n_records < 0 {
        return Err(EdfError::NonNumericField { field: "n_records", value: n_records.to_string() });
    }
    let expected = 256 * (1 + n_signals);
    if header_bytes != expected {
        return Err(EdfError::InconsistentHeaderBytes { declared: header_bytes, n_signals, expected });
    }
    if bytes.len() < expected {
        return Err(EdfError::TruncatedHeader { needed: expected, have: bytes.len() });
    }

    // Per-signal fields are stored field-major: all labels, then all
    // transducers, and so on.
    let mut cursor = 256;
    let mut field = |width: usize| {
        let start = cursor;
        cursor += width * n_signals;
        (0..n_signals).map(move |i| start + i * width..start + (i + 1) * width)
    };
    let labels: Vec<_> = field(16).map(|r| ascii(&bytes[r])).collect();
    let transducers: Vec<_> = field(80).map(|r| ascii(&bytes[r])).collect();
    let dims: Vec<_> = field(8).map(|r| ascii(&bytes[r])).collect();
    let phys_min = field(8).map(|r| numeric::<f64>(&bytes[r], "phys_min")).collect::<Result<Vec<_>, _>>()?;
    let phys_max = field(8).map(|r| numeric::<f64>(&bytes[r], "phys_max")).collect::<Result<Vec<_>, _>>()?;
    let dig_min = field(8).map(|r| numeric::<i32>(&bytes[r], "dig_min")).collect::<Result<Vec<_>, _>>()?;
    let dig_max = field(8).map(|r| numeric::<i32>(&bytes[r], "dig_max")).collect::<Result<Vec<_>, _>>()?;
    let prefilters: Vec<_> = field(80).map(|r| ascii(&bytes[r])).collect();
    let spr = field(8).map(|r| numeric::<usize>(&bytes[r], "samples_per_record")).collect::<Result<Vec<_>, _>>()?;

    let signals = (0..n_signals)
        .map(|i| SignalHeader {
            label: labels[i].clone(),
            transducer: transducers[i].clone(),
            physical_dim: dims[i].clone(),
            phys_min: phys_min[i],
            phys_max: phys_max[i],
            dig_min: dig_min[i],
            dig_max: dig_max[i],
            prefilter: prefilters[i].clone(),
            samples_per_record: spr[i],
        })
        .collect();

    let header = EdfHeader {
        version: ascii(&bytes[0..8]),
        patient_id: ascii(&bytes[8..88]),
        recording_id: ascii(&bytes[88..168]),
        start_date: ascii(&bytes[168..176]),
        start_time: ascii(&bytes[176..184]),
        header_bytes,
        n_records: n_records as usize,
        record_duration_s,
        signals,
    };
    header.check_signals()?;
    Ok(header)
}

/// Reads the data records that follow the header and maps them to
/// physical units. `bytes` is the whole file.
///
/// Digital values outside `[dig_min, dig_max]` are passed through the
/// affine map unchanged.
pub fn read_edf_signals(bytes: &[u8], header: &EdfHeader) -> Result<EegRecording, EdfError> {
    let data = bytes.get(header.header_bytes..).unwrap_or(&[]);
    let needed = header.data_bytes();
    if data.len() < needed {
        return Err(EdfError::TruncatedData { needed, have: data.len() });
    }
    let rate = sample_rate(header)?;

    let mut samples: Vec<Vec<f64>> =
        header.signals.iter().map(|s| Vec::with_capacity(s.samples_per_record * header.n_records)).collect();
    let mut words = data[..needed].chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]]));
    for _ in 0..header.n_records {
        for (sig, out) in header.signals.iter().zip(samples.iter_mut()) {
            out.extend(words.by_ref().take(sig.samples_per_record).map(|d| sig.to_physical(d)));
        }
    }

    Ok(EegRecording {
        channel_labels: header.signals.iter().map(|s| s.label.clone()).collect(),
        samples,
        sample_rate_hz: rate,
        patient_id: header.patient_id.clone(),
        session_id: header.recording_id.clone(),
        annotations: Vec::new(),
    })
}

fn sample_rate(header: &EdfHeader) -> Result<f64, EdfError> {
    let first = header.signals.first().map_or(1, |s| s.samples_per_record);
    if header.signals.iter().any(|s| s.samples_per_record != first) {
        return Err(EdfError::MixedSampleRates);
    }
    Ok(first as f64 / header.record_duration_s)
}

/// Parses a complete EDF file.
pub fn parse_edf(bytes: &[u8]) -> Result<EegRecording, EdfError> {
    let header = parse_edf_header(bytes)?;
    read_edf_signals(bytes, &header)
}

/// Extracts the raw digital samples, channel-major.
pub fn read_digital(bytes: &[u8], header: &EdfHeader) -> Result<Vec<Vec<i16>>, EdfError> {
    let data = bytes.get(header.header_bytes..).unwrap_or(&[]);
    let needed = header.data_bytes();
    if data.len() < needed {
        return Err(EdfError::TruncatedData { needed, have: data.len() });
    }
    let mut out: Vec<Vec<i16>> = vec![Vec::new(); header.n_signals()];
    let mut words = data[..needed].chunks_exact(2).map(|b| i16::from_le_bytes([b[0], b[1]]));
    for _ in 0..header.n_records {
        for (sig, ch) in header.signals.iter().zip(out.iter_mut()) {
            ch.extend(words.by_ref().take(sig.samples_per_record));
        }
    }
    Ok(out)
}

fn put(buf: &mut Vec<u8>, field: &'static str, value: &str, width: usize) -> Result<(), EdfError> {
    if value.len() > width || !value.is_ascii() {
        return Err(EdfError::FieldOverflow { field, value: value.to_string(), width });
    }
    buf.extend_from_slice(value.as_bytes());
    buf.extend(std::iter::repeat(b' ').take(width - value.len()));
    Ok(())
}

/// Formats a decimal into at most `width` ascii characters, dropping
/// fractional digits as needed.
pub fn format_decimal(value: f64, width: usize) -> Option<String> {
    let plain = format!("{value}");
    if plain.len() <= width {
        return Some(plain);
    }
    (0..width).rev().find_map(|prec| {
        let s = format!("{value:.prec$}");
        (s.len() <= width).then_some(s)
    })
}

/// Serializes the header. `header_bytes` is recomputed from the signal count.
pub fn write_edf_header(header: &EdfHeader) -> Result<Vec<u8>, EdfError> {
    header.check_signals()?;
    let ns = header.n_signals();
    let mut buf = Vec::with_capacity(256 * (1 + ns));
    put(&mut buf, "version", &header.version, 8)?;
    put(&mut buf, "patient_id", &header.patient_id, 80)?;
    put(&mut buf, "recording_id", &header.recording_id, 80)?;
    put(&mut buf, "start_date", &header.start_date, 8)?;
    put(&mut buf, "start_time", &header.start_time, 8)?;
    put(&mut buf, "header_bytes", &(256 * (1 + ns)).to_string(), 8)?;
    put(&mut buf, "reserved", "", 44)?;
    put(&mut buf, "n_records", &header.n_records.to_string(), 8)?;
    let dur = format_decimal(header.record_duration_s, 8).unwrap_or_default();
    put(&mut buf, "record_duration", &dur, 8)?;
    put(&mut buf, "n_signals", &ns.to_string(), 4)?;

    let sig = &header.signals;
    for s in sig {
        put(&mut buf, "label", &s.label, 16)?;
    }
    for s in sig {
        put(&mut buf, "transducer", &s.transducer, 80)?;
    }
    for s in sig {
        put(&mut buf, "physical_dim", &s.physical_dim, 8)?;
    }
    for s in sig {
        put(&mut buf, "phys_min", &format_decimal(s.phys_min, 8).unwrap_or_default(), 8)?;
    }
    for s in sig {
        put(&mut buf, "phys_max", &format_decimal(s.phys_max, 8).unwrap_or_default(), 8)?;
    }
    for s in sig {
        put(&mut buf, "dig_min", &s.dig_min.to_string(), 8)?;
    }
    for s in sig {
        put(&mut buf, "dig_max", &s.dig_max.to_string(), 8)?;
    }
    for s in sig {
        put(&mut buf, "prefilter", &s.prefilter, 80)?;
    }
    for s in sig {
        put(&mut buf, "samples_per_record", &s.samples_per_record.to_string(), 8)?;
    }
    for _ in sig {
        put(&mut buf, "reserved", "", 32)?;
    }
    Ok(buf)
}

/// Writes a header followed by digital samples (channel-major input).
pub fn write_edf_digital(header: &EdfHeader, digital: &[Vec<i16>]) -> Result<Vec<u8>, EdfError> {
    let mut buf = write_edf_header(header)?;
    for (s, ch) in header.signals.iter().zip(digital) {
        let needed = s.samples_per_record * header.n_records;
        if ch.len() < needed {
            return Err(EdfError::InvalidSignal {
                label: s.label.clone(),
                reason: format!("{} samples, header implies {needed}", ch.len()),
            });
        }
    }
    buf.reserve(header.data_bytes());
    for r in 0..header.n_records {
        for (s, ch) in header.signals.iter().zip(digital) {
            let n = s.samples_per_record;
            for &d in &ch[r * n..(r + 1) * n] {
                buf.extend_from_slice(&d.to_le_bytes());
            }
        }
    }
    Ok(buf)
}

/// Quantizes a physical-unit recording with the given header and writes it.
pub fn write_edf(header: &EdfHeader, rec: &EegRecording) -> Result<Vec<u8>, EdfError> {
    let digital: Vec<Vec<i16>> =
        header.signals.iter().zip(&rec.samples).map(|(s, ch)| ch.iter().map(|&p| s.to_digital(p)).collect()).collect();
    write_edf_digital(header, &digital)
}

/// Builds a header for a recording with one-second records, a symmetric
/// physical range of `±phys_range` microvolts and the full 16-bit digital range.
pub fn header_for(rec: &EegRecording, phys_range: f64) -> EdfHeader {
    let spr = rec.sample_rate_hz.round() as usize;
    EdfHeader {
        version: "0".into(),
        patient_id: rec.patient_id.clone(),
        recording_id: rec.session_id.clone(),
        start_date: "01.01.00".into(),
        start_time: "00.00.00".into(),
        header_bytes: 256 * (1 + rec.n_channels()),
        n_records: rec.n_samples() / spr.max(1),
        record_duration_s: 1.0,
        signals: rec
            .channel_labels
            .iter()
            .map(|label| SignalHeader {
                label: label.clone(),
                transducer: "AgAgCl electrode".into(),
                physical_dim: "uV".into(),
                phys_min: -phys_range,
                phys_max: phys_range,
                dig_min: -32768,
                dig_max: 32767,
                prefilter: String::new(),
                samples_per_record: spr,
            })
            .collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn two_signal_header() -> EdfHeader {
        let sig = |label: &str, spr| SignalHeader {
            label: label.into(),
            transducer: "AgAgCl".into(),
            physical_dim: "uV".into(),
            phys_min: -100.0,
            phys_max: 100.0,
            dig_min: -32768,
            dig_max: 32767,
            prefilter: "HP:0.1Hz".into(),
            samples_per_record: spr,
        };
        EdfHeader {
            version: "0".into(),
            patient_id: "00000258".into(),
            recording_id: "s001".into(),
            start_date: "12.03.04".into(),
            start_time: "10.11.12".into(),
            header_bytes: 768,
            n_records: 3,
            record_duration_s: 1.0,
            signals: vec![sig("EEG FP1-REF", 4), sig("EEG FP2-REF", 4)],
        }
    }

    #[test]
    fn fixed_fields_decode_from_offsets() {
        let mut h = two_signal_header();
        h.signals.extend(h.signals.clone());
        let mut bytes = write_edf_header(&h).unwrap();
        assert_eq!(&bytes[0..8], b"0       ");
        bytes[252..256].copy_from_slice(b"  4 ");
        let parsed = parse_edf_header(&bytes).unwrap();
        assert_eq!(parsed.n_signals(), 4);
        assert_eq!(parsed.version, "0");
        assert_eq!(parsed.patient_id, "00000258");
        assert_eq!(parsed.start_time, "10.11.12");
    }

    #[test]
    fn header_round_trip_is_identical() {
        let h = two_signal_header();
        let bytes = write_edf_header(&h).unwrap();
        assert_eq!(bytes.len(), 256 + 2 * 256);
        assert_eq!(parse_edf_header(&bytes).unwrap(), h);
    }

    #[test]
    fn header_errors() {
        assert!(matches!(parse_edf_header(&[b' '; 100]), Err(EdfError::TruncatedHeader { .. })));
        let mut bytes = write_edf_header(&two_signal_header()).unwrap();
        bytes[184..192].copy_from_slice(b"512     ");
        assert!(matches!(
            parse_edf_header(&bytes),
            Err(EdfError::InconsistentHeaderBytes { declared: 512, expected: 768, .. })
        ));
        bytes[184..192].copy_from_slice(b"7x8     ");
        assert!(matches!(parse_edf_header(&bytes), Err(EdfError::NonNumericField { field: "header_bytes", .. })));
        let short = write_edf_header(&two_signal_header()).unwrap();
        assert!(matches!(parse_edf_header(&short[..600]), Err(EdfError::TruncatedHeader { .. })));
    }

    #[test]
    fn numeric_fields_tolerate_padding() {
        let mut bytes = write_edf_header(&two_signal_header()).unwrap();
        bytes[236..244].copy_from_slice(b"   3    ");
        assert_eq!(parse_edf_header(&bytes).unwrap().n_records, 3);
    }

    #[test]
    fn affine_endpoints() {
        let s = &two_signal_header().signals[0];
        assert_eq!(s.to_physical(-32768), -100.0);
        assert_eq!(s.to_physical(32767), 100.0);
    }

    #[test]
    fn truncated_data_is_an_error() {
        let h = two_signal_header();
        let mut bytes = write_edf_header(&h).unwrap();
        bytes.extend(vec![0u8; h.data_bytes() - 2]);
        assert!(matches!(read_edf_signals(&bytes, &h), Err(EdfError::TruncatedData { .. })));
    }

    #[test]
    fn out_of_range_digital_values_pass_through() {
        let mut h = two_signal_header();
        h.signals.iter_mut().for_each(|s| {
            s.dig_min = -100;
            s.dig_max = 100;
        });
        let digital = vec![vec![200i16; 12], vec![-300i16; 12]];
        let bytes = write_edf_digital(&h, &digital).unwrap();
        let rec = parse_edf(&bytes).unwrap();
        assert!((rec.samples[0][0] - 200.0).abs() < 1e-9);
        assert!((rec.samples[1][5] + 300.0).abs() < 1e-9);
    }

    #[test]
    fn records_are_assembled_in_header_order() {
        let h = two_signal_header();
        let digital = vec![(0..12).collect::<Vec<i16>>(), (100..112).collect()];
        let bytes = write_edf_digital(&h, &digital).unwrap();
        // First record: ch0 samples 0..4, then ch1 samples 100..104.
        let data = &bytes[768..];
        assert_eq!(i16::from_le_bytes([data[0], data[1]]), 0);
        assert_eq!(i16::from_le_bytes([data[8], data[9]]), 100);
        assert_eq!(i16::from_le_bytes([data[16], data[17]]), 4);
        assert_eq!(read_digital(&bytes, &h).unwrap(), digital);
    }

    #[test]
    fn random_record_matches_independent_affine_map() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let h = two_signal_header();
        let digital: Vec<Vec<i16>> = (0..2).map(|_| (0..12).map(|_| rng.gen()).collect()).collect();
        let bytes = write_edf_digital(&h, &digital).unwrap();
        let rec = parse_edf(&bytes).unwrap();
        for (ch, dig) in rec.samples.iter().zip(&digital) {
            for (&p, &d) in ch.iter().zip(dig) {
                let expected = -100.0 + (d as f64 + 32768.0) * 200.0 / 65535.0;
                assert!((p - expected).abs() <= 1e-12 * expected.abs().max(1.0));
            }
        }
        assert_eq!(rec.sample_rate_hz, 4.0);
    }

    #[test]
    fn mixed_rates_rejected() {
        let mut h = two_signal_header();
        h.signals[1].samples_per_record = 2;
        let digital = vec![vec![0i16; 12], vec![0i16; 6]];
        let bytes = write_edf_digital(&h, &digital).unwrap();
        assert_eq!(parse_edf(&bytes), Err(EdfError::MixedSampleRates));
    }

    proptest! {
        #[test]
        fn data_region_round_trips_bit_exactly(
            seed in any::<u64>(),
            n_records in 1usize..4,
            spr in 1usize..8,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut h = two_signal_header();
            h.n_records = n_records;
            h.signals.iter_mut().for_each(|s| s.samples_per_record = spr);
            h.signals[1].phys_min = -3276.8;
            h.signals[1].phys_max = 3276.7;
            let digital: Vec<Vec<i16>> =
                (0..2).map(|_| (0..n_records * spr).map(|_| rng.gen()).collect()).collect();
            let bytes = write_edf_digital(&h, &digital).unwrap();
            let parsed_header = parse_edf_header(&bytes).unwrap();
            let rec = read_edf_signals(&bytes, &parsed_header).unwrap();
            let rewritten = write_edf(&parsed_header, &rec).unwrap();
            prop_assert_eq!(&rewritten[768..], &bytes[768..]);
            prop_assert_eq!(&rewritten[..768], &bytes[..768]);
        }

        #[test]
        fn affine_map_is_monotone(d1 in any::<i16>(), d2 in any::<i16>()) {
            let s = &two_signal_header().signals[0];
            if d1 < d2 {
                prop_assert!(s.to_physical(d1) < s.to_physical(d2));
            }
        }
    }
}
