//! Labeled synthetic EEG corpus.
//!
//! Every seizure class has its own spectral archetype laid over a pink-noise
//! background, and every patient has a gain, a noise level, a line-noise
//! level and an electrode field of their own:
//!
//! | class | rhythm                         | amplitude | topography            |
//! |-------|--------------------------------|-----------|-----------------------|
//! | ABZ   | ~3 Hz spike-and-wave            | high      | generalized           |
//! | TNZ   | 15–25 Hz band-limited activity  | low       | generalized           |
//! | TCZ   | ~10.5 Hz slowing to ~8.5 Hz     | very high | generalized           |
//! | CPZ   | 4.5–5.5 Hz                      | medium    | one temporal chain    |
//! | SPZ   | 7–8 Hz                          | low       | one central-parietal  |
//!
//! The archetypes are made to be separable, not clinically faithful.

use std::f64::consts::PI;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::recording::{Annotation, EegRecording, SeizureType};

/// Electrodes in generation priority order: the 17 used by the default
/// bipolar montage first, then the remaining 10-20 sites.
pub const ELECTRODES: [&str; 21] = [
    "FP1", "F7", "T3", "T5", "O1", "FP2", "F8", "T4", "T6", "O2", "C3", "CZ", "C4", "F3", "P3", "F4", "P4", "FZ", "PZ",
    "A1", "A2",
];

/// Dominant-frequency band of each class archetype, in Hz, indexed by class.
pub const ARCHETYPE_BANDS: [(f64, f64); 5] = [
    (4.0, 6.0),   // CPZ
    (6.5, 8.3),   // SPZ
    (2.5, 3.5),   // ABZ
    (15.0, 25.0), // TNZ
    (8.4, 11.0),  // TCZ
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SynthError {
    #[error("invalid corpus spec: {0}")]
    InvalidSpec(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSpec {
    pub patients_per_class: usize,
    pub sessions_per_patient: usize,
    pub events_per_session: usize,
    pub event_duration_s: f64,
    pub sample_rate_hz: f64,
    pub n_electrodes: usize,
    /// Background-only time before the first event and after each event.
    pub gap_s: f64,
    /// Background pink-noise standard deviation in microvolts.
    pub background_uv: f64,
    /// Scales every seizure archetype amplitude.
    pub seizure_gain: f64,
}

impl Default for CorpusSpec {
    fn default() -> Self {
        CorpusSpec {
            patients_per_class: 3,
            sessions_per_patient: 1,
            events_per_session: 3,
            event_duration_s: 10.0,
            sample_rate_hz: 256.0,
            n_electrodes: 21,
            gap_s: 4.0,
            background_uv: 10.0,
            seizure_gain: 1.0,
        }
    }
}

impl CorpusSpec {
    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: String| Err(SynthError::InvalidSpec(m));
        if self.patients_per_class < 3 {
            return bad(format!("patients_per_class must be >= 3, got {}", self.patients_per_class));
        }
        if self.sessions_per_patient == 0 || self.events_per_session == 0 {
            return bad("sessions_per_patient and events_per_session must be positive".into());
        }
        if !(self.event_duration_s > 0.0) || !(self.gap_s >= 0.0) {
            return bad("event_duration_s must be positive and gap_s non-negative".into());
        }
        let rate = self.sample_rate_hz;
        if !(100.0..=1024.0).contains(&rate) || rate.fract() != 0.0 {
            return bad(format!("sample_rate_hz must be an integer in [100, 1024], got {rate}"));
        }
        if !(17..=ELECTRODES.len()).contains(&self.n_electrodes) {
            return bad(format!("n_electrodes must be in [17, 21], got {}", self.n_electrodes));
        }
        if !(self.background_uv >= 0.0) || !(self.seizure_gain > 0.0) {
            return bad("background_uv must be >= 0 and seizure_gain > 0".into());
        }
        Ok(())
    }

    /// Recording length in whole seconds for one session.
    pub fn session_duration_s(&self) -> f64 {
        let raw = self.gap_s + self.events_per_session as f64 * (self.event_duration_s + self.gap_s);
        raw.ceil()
    }
}

pub fn patient_id(class: SeizureType, k: usize) -> String {
    format!("{}{:02}", class.code(), k + 1)
}

/// Per-patient traits drawn once and reused across sessions.
struct PatientTraits {
    gain: f64,
    noise_uv: f64,
    line_uv: f64,
    freq_shift: f64,
    left_side: bool,
    field: Vec<f64>,
    lag_s: Vec<f64>,
    dc_uv: Vec<f64>,
}

impl PatientTraits {
    fn draw(rng: &mut ChaCha8Rng, n_electrodes: usize, spec: &CorpusSpec) -> Self {
        PatientTraits {
            gain: rng.gen_range(0.8..1.25),
            noise_uv: spec.background_uv * rng.gen_range(0.8..1.4),
            line_uv: rng.gen_range(0.0..6.0),
            freq_shift: rng.gen_range(-1.0..1.0),
            left_side: rng.gen_bool(0.5),
            field: (0..n_electrodes).map(|_| rng.gen_range(0.55..1.0)).collect(),
            lag_s: (0..n_electrodes).map(|_| rng.gen_range(0.0..0.012)).collect(),
            dc_uv: (0..n_electrodes).map(|_| rng.gen_range(-20.0..20.0)).collect(),
        }
    }
}

/// Relative involvement of electrode `name` in a class archetype.
fn involvement(class: SeizureType, name: &str, left: bool) -> f64 {
    let (core, near): (&[&str], &[&str]) = match (class, left) {
        (SeizureType::Cpz, true) => (&["F7", "T3", "T5"], &["FP1", "C3", "O1", "A1"]),
        (SeizureType::Cpz, false) => (&["F8", "T4", "T6"], &["FP2", "C4", "O2", "A2"]),
        (SeizureType::Spz, true) => (&["C3", "P3"], &["F3", "T3", "CZ"]),
        (SeizureType::Spz, false) => (&["C4", "P4"], &["F4", "T4", "CZ"]),
        _ => return 1.0,
    };
    if core.contains(&name) {
        1.0
    } else if near.contains(&name) {
        0.35
    } else {
        0.0
    }
}

/// Parameters of one seizure event, drawn per event.
struct EventShape {
    class: SeizureType,
    base_hz: f64,
    amplitude_uv: f64,
    phase: f64,
    /// Component frequencies and phases for the band-limited tonic rhythm.
    partials: Vec<(f64, f64)>,
}

impl EventShape {
    fn draw(rng: &mut ChaCha8Rng, class: SeizureType, traits: &PatientTraits, spec: &CorpusSpec) -> Self {
        let shift = traits.freq_shift;
        let (base_hz, amplitude_uv) = match class {
            SeizureType::Abz => (3.0 + 0.12 * shift + rng.gen_range(-0.05..0.05), 110.0),
            SeizureType::Tnz => (20.0, 30.0),
            SeizureType::Tcz => (10.5 + 0.2 * shift, 140.0),
            SeizureType::Cpz => (5.0 + 0.35 * shift + rng.gen_range(-0.1..0.1), 75.0),
            SeizureType::Spz => (7.5 + 0.3 * shift + rng.gen_range(-0.1..0.1), 32.0),
        };
        let partials = if class == SeizureType::Tnz {
            (0..5).map(|_| (rng.gen_range(17.0..23.0), rng.gen_range(0.0..2.0 * PI))).collect()
        } else {
            Vec::new()
        };
        EventShape {
            class,
            base_hz,
            amplitude_uv: amplitude_uv * traits.gain * spec.seizure_gain,
            phase: rng.gen_range(0.0..2.0 * PI),
            partials,
        }
    }

    /// Unit-envelope waveform at time `tau` seconds into an event of length `dur`.
    fn waveform(&self, tau: f64, dur: f64) -> f64 {
        let ramp = 0.4f64.min(dur / 4.0);
        let env = (tau / ramp).min((dur - tau) / ramp).clamp(0.0, 1.0);
        let w = match self.class {
            SeizureType::Abz => {
                // Slow wave plus a sharp spike once per cycle.
                let cyc = (self.base_hz * tau + self.phase / (2.0 * PI)).fract();
                let spike = (-((cyc - 0.15) / 0.035).powi(2)).exp();
                (2.0 * PI * cyc).sin() * 0.8 - 0.9 * spike
            }
            SeizureType::Tnz => {
                let s: f64 = self.partials.iter().map(|&(f, p)| (2.0 * PI * f * tau + p).sin()).sum();
                s / (self.partials.len() as f64).sqrt()
            }
            SeizureType::Tcz => {
                // Instantaneous frequency falls by 2 Hz over the event.
                let phase = 2.0 * PI * (self.base_hz * tau - tau * tau / dur) + self.phase;
                phase.sin() + 0.3 * (2.0 * phase).sin()
            }
            SeizureType::Cpz | SeizureType::Spz => {
                let phase = 2.0 * PI * self.base_hz * tau + self.phase;
                phase.sin() + 0.2 * (2.0 * phase).sin()
            }
        };
        env * w
    }
}

/// Pink (1/f) noise via a three-pole economy filter, scaled to unit variance.
fn pink_noise(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let (mut b0, mut b1, mut b2) = (0.0, 0.0, 0.0);
    let mut out: Vec<f64> = (0..n)
        .map(|_| {
            let w: f64 = StandardNormal.sample(rng);
            b0 = 0.99765 * b0 + w * 0.0990460;
            b1 = 0.96300 * b1 + w * 0.2965164;
            b2 = 0.57000 * b2 + w * 1.0526913;
            b0 + b1 + b2 + w * 0.1848
        })
        .collect();
    let mean = out.iter().sum::<f64>() / n.max(1) as f64;
    let var = out.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n.max(1) as f64;
    let scale = if var > 0.0 { 1.0 / var.sqrt() } else { 0.0 };
    out.iter_mut().for_each(|x| *x = (*x - mean) * scale);
    out
}

/// Generates `5 · patients_per_class` patients, each with
/// `sessions_per_patient` recordings holding `events_per_session` annotated
/// events of the patient's class. Deterministic for a fixed `(spec, seed)`.
pub fn generate_synthetic_corpus(spec: &CorpusSpec, seed: u64) -> Result<Vec<EegRecording>, SynthError> {
    spec.validate()?;
    let rate = spec.sample_rate_hz;
    let electrodes = &ELECTRODES[..spec.n_electrodes];
    let n = (spec.session_duration_s() * rate) as usize;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut corpus = Vec::new();

    for class in SeizureType::ALL {
        for k in 0..spec.patients_per_class {
            let traits = PatientTraits::draw(&mut rng, electrodes.len(), spec);
            let pid = patient_id(class, k);
            for s in 0..spec.sessions_per_patient {
                let mut samples: Vec<Vec<f64>> = electrodes
                    .iter()
                    .enumerate()
                    .map(|(e, _)| {
                        let mut ch = pink_noise(&mut rng, n);
                        let line_phase = rng.gen_range(0.0..2.0 * PI);
                        for (i, x) in ch.iter_mut().enumerate() {
                            let t = i as f64 / rate;
                            *x = *x * traits.noise_uv
                                + traits.dc_uv[e]
                                + traits.line_uv * (2.0 * PI * 60.0 * t + line_phase).sin();
                        }
                        ch
                    })
                    .collect();

                let mut annotations = Vec::with_capacity(spec.events_per_session);
                for ev in 0..spec.events_per_session {
                    let start_s = spec.gap_s + ev as f64 * (spec.event_duration_s + spec.gap_s);
                    let end_s = start_s + spec.event_duration_s;
                    let shape = EventShape::draw(&mut rng, class, &traits, spec);
                    let first = (start_s * rate).ceil() as usize;
                    let last = ((end_s * rate).floor() as usize).min(n);
                    for (e, name) in electrodes.iter().enumerate() {
                        let weight = involvement(class, name, traits.left_side) * traits.field[e];
                        if weight == 0.0 {
                            continue;
                        }
                        let amp = shape.amplitude_uv * weight;
                        for (i, x) in samples[e].iter_mut().enumerate().take(last).skip(first) {
                            let tau = i as f64 / rate - start_s - traits.lag_s[e];
                            *x += amp * shape.waveform(tau, spec.event_duration_s);
                        }
                    }
                    annotations.push(Annotation { start_s, end_s, label: class });
                }

                corpus.push(EegRecording {
                    channel_labels: electrodes.iter().map(|e| format!("EEG {e}-REF")).collect(),
                    samples,
                    sample_rate_hz: rate,
                    patient_id: pid.clone(),
                    session_id: format!("s{:03}", s + 1),
                    annotations,
                });
            }
        }
    }
    Ok(corpus)
}

/// File stem used when writing a generated recording to disk.
pub fn file_stem(rec: &EegRecording) -> String {
    format!("{}_{}", rec.patient_id, rec.session_id)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rustfft::{num_complex::Complex, FftPlanner};

    fn small_spec() -> CorpusSpec {
        CorpusSpec { event_duration_s: 6.0, ..CorpusSpec::default() }
    }

    /// Welch PSD with 2-s Hann windows and 50% overlap, averaged per window.
    fn welch_psd(x: &[f64], rate: f64) -> Vec<f64> {
        let seg = (2.0 * rate) as usize;
        let hop = seg / 2;
        let window: Vec<f64> = (0..seg).map(|i| 0.5 - 0.5 * (2.0 * PI * i as f64 / seg as f64).cos()).collect();
        let mut planner = FftPlanner::<f64>::new();
        let fft = planner.plan_fft_forward(seg);
        let mut psd = vec![0.0; seg / 2 + 1];
        let (mut start, mut count) = (0, 0);
        while start + seg <= x.len() {
            let chunk = &x[start..start + seg];
            let mean = chunk.iter().sum::<f64>() / seg as f64;
            let mut buf: Vec<Complex<f64>> =
                chunk.iter().zip(&window).map(|(v, w)| Complex::new((v - mean) * w, 0.0)).collect();
            fft.process(&mut buf);
            for (p, c) in psd.iter_mut().zip(&buf) {
                *p += c.norm_sqr();
            }
            start += hop;
            count += 1;
        }
        psd.iter_mut().for_each(|p| *p /= count.max(1) as f64);
        psd
    }

    /// Peak frequency of the PSD of `x`, ignoring the DC bin.
    fn welch_peak(x: &[f64], rate: f64) -> f64 {
        let psd = welch_psd(x, rate);
        let (k, _) =
            psd.iter().enumerate().skip(1).fold((0, f64::MIN), |best, (k, &p)| if p > best.1 { (k, p) } else { best });
        k as f64 / 2.0
    }

    /// Frequency and height of the largest rise of the PSD of `x` over that
    /// of `baseline`, searched from 1 Hz up.
    fn excess_peak(x: &[f64], baseline: &[f64], rate: f64) -> (f64, f64) {
        let (a, b) = (welch_psd(x, rate), welch_psd(baseline, rate));
        let (k, v) =
            (2..a.len()).map(|k| (k, a[k] - b[k])).fold((0, f64::MIN), |best, c| if c.1 > best.1 { c } else { best });
        (k as f64 / 2.0, v)
    }

    /// Background immediately before an event on the same electrode.
    fn pre_event_slice<'a>(rec: &'a EegRecording, ann: &Annotation, electrode: &str, gap_s: f64) -> &'a [f64] {
        let e = rec.channel_labels.iter().position(|l| l == &format!("EEG {electrode}-REF")).unwrap();
        let r = rec.sample_rate_hz;
        &rec.samples[e][((ann.start_s - gap_s) * r) as usize..(ann.start_s * r) as usize]
    }

    fn event_slice<'a>(rec: &'a EegRecording, ann: &Annotation, electrode: &str) -> &'a [f64] {
        let e = rec.channel_labels.iter().position(|l| l == &format!("EEG {electrode}-REF")).unwrap();
        let r = rec.sample_rate_hz;
        &rec.samples[e][(ann.start_s * r) as usize..(ann.end_s * r) as usize]
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let spec = small_spec();
        let a = generate_synthetic_corpus(&spec, 7).unwrap();
        let b = generate_synthetic_corpus(&spec, 7).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(&spec, 8).unwrap();
        assert_ne!(a[0].samples, c[0].samples);
    }

    #[test]
    fn counts_patients_and_events() {
        let spec = CorpusSpec { events_per_session: 2, ..small_spec() };
        let corpus = generate_synthetic_corpus(&spec, 1).unwrap();
        let mut patients: Vec<_> = corpus.iter().map(|r| r.patient_id.clone()).collect();
        patients.sort();
        patients.dedup();
        assert_eq!(patients.len(), 15);
        let events: usize = corpus.iter().map(|r| r.annotations.len()).sum();
        assert_eq!(events, 30);
        for rec in &corpus {
            rec.validate().unwrap();
            assert_eq!(rec.n_channels(), 21);
        }
    }

    #[test]
    fn invalid_specs_rejected() {
        for spec in [
            CorpusSpec { patients_per_class: 2, ..small_spec() },
            CorpusSpec { events_per_session: 0, ..small_spec() },
            CorpusSpec { event_duration_s: 0.0, ..small_spec() },
            CorpusSpec { sample_rate_hz: 2000.0, ..small_spec() },
            CorpusSpec { n_electrodes: 10, ..small_spec() },
        ] {
            assert!(matches!(generate_synthetic_corpus(&spec, 0), Err(SynthError::InvalidSpec(_))));
        }
    }

    #[test]
    fn absence_event_peaks_near_three_hertz() {
        let corpus = generate_synthetic_corpus(&small_spec(), 7).unwrap();
        let rec = corpus.iter().find(|r| r.annotations[0].label == SeizureType::Abz).unwrap();
        let peak = welch_peak(event_slice(rec, &rec.annotations[0], "CZ"), rec.sample_rate_hz);
        assert!((2.5..=3.5).contains(&peak), "peak at {peak} Hz");
    }

    #[test]
    fn archetype_dominant_bands_are_disjoint_and_hit() {
        for (i, a) in ARCHETYPE_BANDS.iter().enumerate() {
            for b in &ARCHETYPE_BANDS[i + 1..] {
                assert!(a.1 < b.0 || b.1 < a.0, "bands {a:?} and {b:?} overlap");
            }
        }
        let corpus = generate_synthetic_corpus(&small_spec(), 7).unwrap();
        for rec in &corpus {
            let class = rec.annotations[0].label;
            let candidates: &[&str] = match class {
                SeizureType::Cpz => &["T3", "T4"],
                SeizureType::Spz => &["C3", "C4"],
                _ => &["CZ"],
            };
            let (lo, hi) = ARCHETYPE_BANDS[class.index()];
            for ann in &rec.annotations {
                // Focal events sit on one hemisphere: keep the side with the
                // larger rise over the preceding background. Pink noise below
                // 1 Hz lies under every archetype band and is skipped.
                let gap = small_spec().gap_s;
                let (peak, _) = candidates
                    .iter()
                    .map(|e| {
                        excess_peak(event_slice(rec, ann, e), pre_event_slice(rec, ann, e, gap), rec.sample_rate_hz)
                    })
                    .max_by(|a, b| a.1.total_cmp(&b.1))
                    .unwrap();
                assert!((lo..=hi).contains(&peak), "{class} {} peak {peak} Hz", rec.patient_id);
            }
        }
    }
}
