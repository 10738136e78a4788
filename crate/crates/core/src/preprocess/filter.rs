//! Zero-phase Butterworth band-pass built from second-order sections.

use std::f64::consts::PI;

use crate::recording::EegRecording;

use super::resample::TARGET_RATE_HZ;
use super::PreprocessError;

pub const BAND_LOW_HZ: f64 = 0.1;
pub const BAND_HIGH_HZ: f64 = 50.0;
pub const FILTER_ORDER: usize = 4;

/// Odd-extension length used at each end before forward-backward filtering.
pub const PAD_LEN: usize = 3 * (FILTER_ORDER + 1);

/// One biquad `[b0, b1, b2, a1, a2]` with `a0 = 1`.
pub type Sos = [f64; 5];

fn bilinear(b: [f64; 3], a: [f64; 3], fs: f64) -> Sos {
    // b, a are analog coefficients of s^2, s, 1.
    let k = 2.0 * fs;
    let k2 = k * k;
    let a0 = a[0] * k2 + a[1] * k + a[2];
    [
        (b[0] * k2 + b[1] * k + b[2]) / a0,
        (2.0 * b[2] - 2.0 * b[0] * k2) / a0,
        (b[0] * k2 - b[1] * k + b[2]) / a0,
        (2.0 * a[2] - 2.0 * a[0] * k2) / a0,
        (a[0] * k2 - a[1] * k + a[2]) / a0,
    ]
}

/// Butterworth low-pass (`highpass == false`) or high-pass sections of even
/// `order`, via the bilinear transform with frequency prewarping.
pub fn butterworth_sections(order: usize, cutoff_hz: f64, fs: f64, highpass: bool) -> Vec<Sos> {
    assert!(order % 2 == 0, "even orders only");
    let wc = 2.0 * fs * (PI * cutoff_hz / fs).tan();
    (0..order / 2)
        .map(|k| {
            // Conjugate pole pair of the normalized prototype: s^2 + 2 sin(theta) s + 1.
            let theta = PI * (2 * k + 1) as f64 / (2 * order) as f64;
            let damping = 2.0 * theta.sin();
            let den = [1.0, damping * wc, wc * wc];
            let num = if highpass { [1.0, 0.0, 0.0] } else { [0.0, 0.0, wc * wc] };
            bilinear(num, den, fs)
        })
        .collect()
}

/// Band-pass as a cascade of a high-pass and a low-pass Butterworth of the
/// same order.
pub fn bandpass_sections(low_hz: f64, high_hz: f64, order: usize, fs: f64) -> Vec<Sos> {
    let mut sos = butterworth_sections(order, low_hz, fs, true);
    sos.extend(butterworth_sections(order, high_hz, fs, false));
    sos
}

/// Steady-state initial conditions of each section for a unit step input.
pub fn sos_initial_state(sos: &[Sos]) -> Vec<[f64; 2]> {
    let mut gain = 1.0;
    sos.iter()
        .map(|s| {
            let [b0, b1, b2, a1, a2] = *s;
            let g = (b0 + b1 + b2) / (1.0 + a1 + a2);
            let z1 = gain * (b2 - a2 * g);
            let z0 = gain * (b1 - a1 * g) + z1;
            gain *= g;
            [z0, z1]
        })
        .collect()
}

/// Direct-form II transposed cascade, in place.
pub fn sosfilt(sos: &[Sos], x: &mut [f64], state: &mut [[f64; 2]]) {
    for (s, z) in sos.iter().zip(state.iter_mut()) {
        let [b0, b1, b2, a1, a2] = *s;
        for v in x.iter_mut() {
            let input = *v;
            let y = b0 * input + z[0];
            z[0] = b1 * input - a1 * y + z[1];
            z[1] = b2 * input - a2 * y;
            *v = y;
        }
    }
}

/// Forward-backward filtering with odd extension of `PAD_LEN` samples and
/// steady-state initial conditions. Output length equals input length.
pub fn sosfiltfilt(sos: &[Sos], x: &[f64]) -> Result<Vec<f64>, PreprocessError> {
    let n = x.len();
    if n <= PAD_LEN {
        return Err(PreprocessError::SignalTooShort { got: n, needed: PAD_LEN + 1 });
    }
    let mut ext = Vec::with_capacity(n + 2 * PAD_LEN);
    ext.extend((1..=PAD_LEN).rev().map(|i| 2.0 * x[0] - x[i]));
    ext.extend_from_slice(x);
    ext.extend((1..=PAD_LEN).map(|i| 2.0 * x[n - 1] - x[n - 1 - i]));

    let zi = sos_initial_state(sos);
    let run = |buf: &mut [f64]| {
        let x0 = buf[0];
        let mut state: Vec<[f64; 2]> = zi.iter().map(|z| [z[0] * x0, z[1] * x0]).collect();
        sosfilt(sos, buf, &mut state);
    };
    run(&mut ext);
    ext.reverse();
    run(&mut ext);
    ext.reverse();
    Ok(ext[PAD_LEN..PAD_LEN + n].to_vec())
}

/// Zero-phase 0.1–50 Hz band-pass for 250 Hz recordings.
pub fn bandpass_filter(rec: &EegRecording) -> Result<EegRecording, PreprocessError> {
    if rec.sample_rate_hz != TARGET_RATE_HZ {
        return Err(PreprocessError::WrongRate { expected: TARGET_RATE_HZ, got: rec.sample_rate_hz });
    }
    let sos = bandpass_sections(BAND_LOW_HZ, BAND_HIGH_HZ, FILTER_ORDER, TARGET_RATE_HZ);
    let samples = rec.samples.iter().map(|ch| sosfiltfilt(&sos, ch)).collect::<Result<Vec<_>, _>>()?;
    Ok(rec.with_samples(rec.channel_labels.clone(), samples, rec.sample_rate_hz))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sine(f: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / 250.0).sin()).collect()
    }

    /// Least-squares amplitude of a known-frequency sinusoid.
    fn fitted_amplitude(y: &[f64], f: f64, offset: usize) -> f64 {
        let (mut ss, mut cc, mut ys, mut yc, mut sc) = (0.0, 0.0, 0.0, 0.0, 0.0);
        for (i, v) in y.iter().enumerate() {
            let a = 2.0 * PI * f * (i + offset) as f64 / 250.0;
            let (s, c) = a.sin_cos();
            ss += s * s;
            cc += c * c;
            sc += s * c;
            ys += v * s;
            yc += v * c;
        }
        let det = ss * cc - sc * sc;
        let a = (ys * cc - yc * sc) / det;
        let b = (yc * ss - ys * sc) / det;
        (a * a + b * b).sqrt()
    }

    fn magnitude(sos: &[Sos], f: f64, fs: f64) -> f64 {
        let w = 2.0 * PI * f / fs;
        sos.iter()
            .map(|s| {
                let z1 = (w.cos(), -w.sin());
                let z2 = ((2.0 * w).cos(), -(2.0 * w).sin());
                let num = (s[0] + s[1] * z1.0 + s[2] * z2.0, s[1] * z1.1 + s[2] * z2.1);
                let den = (1.0 + s[3] * z1.0 + s[4] * z2.0, s[3] * z1.1 + s[4] * z2.1);
                (num.0.hypot(num.1)) / (den.0.hypot(den.1))
            })
            .product()
    }

    #[test]
    fn response_matches_butterworth_shape() {
        let sos = bandpass_sections(0.1, 50.0, 4, 250.0);
        assert!((magnitude(&sos, 50.0, 250.0) - 0.5f64.sqrt()).abs() < 1e-3);
        assert!((magnitude(&sos, 0.1, 250.0) - 0.5f64.sqrt()).abs() < 1e-3);
        assert!((magnitude(&sos, 10.0, 250.0) - 1.0).abs() < 1e-4);
    }

    #[test]
    fn passband_sine_keeps_amplitude() {
        let x = sine(25.0, 2500);
        let y = bandpass_filter(&rec(x)).unwrap().samples.remove(0);
        let amp = fitted_amplitude(&y[250..2250], 25.0, 250);
        assert!((amp - 1.0).abs() < 0.01, "{amp}");
    }

    #[test]
    fn stopband_sine_is_attenuated() {
        let x = sine(100.0, 2500);
        let y = bandpass_filter(&rec(x)).unwrap().samples.remove(0);
        let amp = fitted_amplitude(&y[250..2250], 100.0, 250);
        assert!(amp < 0.05, "{amp}");
    }

    #[test]
    fn zero_in_zero_out_and_length_preserved() {
        let y = bandpass_filter(&rec(vec![0.0; 600])).unwrap();
        assert_eq!(y.samples[0], vec![0.0; 600]);
    }

    #[test]
    fn short_signal_and_wrong_rate_rejected() {
        assert!(matches!(bandpass_filter(&rec(vec![1.0; PAD_LEN])), Err(PreprocessError::SignalTooShort { .. })));
        let mut r = rec(vec![0.0; 100]);
        r.sample_rate_hz = 256.0;
        assert!(matches!(bandpass_filter(&r), Err(PreprocessError::WrongRate { .. })));
    }

    #[test]
    fn dc_offset_is_removed() {
        let x: Vec<f64> = sine(10.0, 5000).iter().map(|v| v + 40.0).collect();
        let y = bandpass_filter(&rec(x)).unwrap().samples.remove(0);
        let mean = y[1000..4000].iter().sum::<f64>() / 3000.0;
        assert!(mean.abs() < 0.5, "{mean}");
    }

    fn rec(x: Vec<f64>) -> EegRecording {
        EegRecording {
            channel_labels: vec!["X".into()],
            samples: vec![x],
            sample_rate_hz: 250.0,
            patient_id: String::new(),
            session_id: String::new(),
            annotations: vec![],
        }
    }
}
