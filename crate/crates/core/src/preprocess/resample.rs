//! Rational polyphase resampling to the 250 Hz working rate.

use crate::recording::EegRecording;

use super::PreprocessError;

pub const TARGET_RATE_HZ: f64 = 250.0;

const KAISER_BETA: f64 = 5.0;
/// Filter half-length in units of `max(up, down)` input-grid samples.
const HALF_LEN_FACTOR: usize = 10;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind (power series).
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let (mut sum, mut term, mut k) = (1.0, 1.0, 1.0);
    while term > 1e-17 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

/// Anti-aliasing low-pass for an `up/down` rational resampler.
///
/// Kaiser-windowed sinc on the upsampled grid with cutoff at the lower of the
/// two Nyquist frequencies. Each polyphase branch is normalized to unit DC
/// gain, so constant inputs map to the same constant away from the edges.
pub fn design_polyphase_filter(up: usize, down: usize) -> Vec<f64> {
    let max_rate = up.max(down);
    let half = HALF_LEN_FACTOR * max_rate;
    let len = 2 * half + 1;
    let cutoff = 1.0 / max_rate as f64;
    let denom = bessel_i0(KAISER_BETA);
    let mut h: Vec<f64> = (0..len)
        .map(|k| {
            let t = k as f64 - half as f64;
            let x = cutoff * t;
            let sinc = if t == 0.0 { 1.0 } else { (std::f64::consts::PI * x).sin() / (std::f64::consts::PI * x) };
            let r = t / half as f64;
            let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / denom;
            cutoff * sinc * w
        })
        .collect();
    for phase in 0..up {
        let sum: f64 = h.iter().skip(phase).step_by(up).sum();
        if sum != 0.0 {
            h.iter_mut().skip(phase).step_by(up).for_each(|v| *v /= sum);
        }
    }
    h
}

/// Resamples one channel by `up/down`, producing `out_len` samples aligned
/// to the input start.
pub fn resample_poly(x: &[f64], up: usize, down: usize, h: &[f64], out_len: usize) -> Vec<f64> {
    let half = (h.len() - 1) / 2;
    (0..out_len)
        .map(|m| {
            // y[m] = sum_j x[j] h[m*down + half - j*up]
            let pos = m * down + half;
            let j_max = (pos / up).min(x.len().saturating_sub(1));
            let j_min = (pos + 1).saturating_sub(h.len()).div_ceil(up);
            let mut acc = 0.0;
            let mut j = j_min;
            while j <= j_max && j < x.len() {
                acc += x[j] * h[pos - j * up];
                j += 1;
            }
            acc
        })
        .collect()
}

/// Brings a recording to 250 Hz. A recording already at 250 Hz is returned
/// sample-for-sample unchanged.
pub fn resample_to_250(rec: &EegRecording) -> Result<EegRecording, PreprocessError> {
    let src = rec.sample_rate_hz;
    if !(100.0..=1024.0).contains(&src) || (src - src.round()).abs() > 1e-9 {
        return Err(PreprocessError::UnsupportedRate(src));
    }
    if src == TARGET_RATE_HZ {
        return Ok(rec.clone());
    }
    let src_i = src.round() as u64;
    let g = gcd(src_i, TARGET_RATE_HZ as u64);
    let up = (TARGET_RATE_HZ as u64 / g) as usize;
    let down = (src_i / g) as usize;
    let h = design_polyphase_filter(up, down);
    let out_len = (rec.n_samples() as f64 * TARGET_RATE_HZ / src).round() as usize;
    let samples = rec.samples.iter().map(|ch| resample_poly(ch, up, down, &h, out_len)).collect();
    Ok(rec.with_samples(rec.channel_labels.clone(), samples, TARGET_RATE_HZ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn single(x: Vec<f64>, rate: f64) -> EegRecording {
        EegRecording {
            channel_labels: vec!["X".into()],
            samples: vec![x],
            sample_rate_hz: rate,
            patient_id: String::new(),
            session_id: String::new(),
            annotations: vec![],
        }
    }

    /// Plain DFT magnitude peak over bins 1..n/2.
    fn dominant_frequency(x: &[f64], rate: f64) -> f64 {
        let n = x.len();
        let (mut best, mut best_k) = (0.0, 0);
        for k in 1..n / 2 {
            let (mut re, mut im) = (0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let a = 2.0 * PI * (k * t) as f64 / n as f64;
                re += v * a.cos();
                im -= v * a.sin();
            }
            let p = re * re + im * im;
            if p > best {
                best = p;
                best_k = k;
            }
        }
        best_k as f64 * rate / n as f64
    }

    #[test]
    fn identity_at_target_rate() {
        let x: Vec<f64> = (0..100).map(|i| (i as f64 * 0.37).sin()).collect();
        let out = resample_to_250(&single(x.clone(), 250.0)).unwrap();
        assert_eq!(out.samples[0], x);
        assert_eq!(out.sample_rate_hz, 250.0);
    }

    #[test]
    fn ten_hertz_sine_survives_downsampling() {
        let x: Vec<f64> = (0..2000).map(|i| (2.0 * PI * 10.0 * i as f64 / 500.0).sin()).collect();
        let out = resample_to_250(&single(x, 500.0)).unwrap();
        assert_eq!(out.samples[0].len(), 1000);
        let f = dominant_frequency(&out.samples[0], 250.0);
        assert!((f - 10.0).abs() <= 0.1, "dominant {f}");
    }

    #[test]
    fn dc_is_preserved_in_the_interior() {
        let out = resample_to_250(&single(vec![1.0; 512 * 4], 512.0)).unwrap();
        let y = &out.samples[0];
        assert_eq!(y.len(), 1000);
        // Edge transients span the filter half-length (10 input samples per
        // output-rate step on each side).
        for &v in &y[30..y.len() - 30] {
            assert!((v - 1.0).abs() < 1e-6, "{v}");
        }
    }

    #[test]
    fn output_length_rounds() {
        let out = resample_to_250(&single(vec![0.0; 1001], 256.0)).unwrap();
        assert_eq!(out.samples[0].len(), (1001.0f64 * 250.0 / 256.0).round() as usize);
        assert_eq!(out.sample_rate_hz, 250.0);
    }

    #[test]
    fn unsupported_rates() {
        for r in [99.0, 2048.0, 256.5] {
            assert_eq!(resample_to_250(&single(vec![0.0; 10], r)), Err(PreprocessError::UnsupportedRate(r)));
        }
    }

    #[test]
    fn upsampling_preserves_tone() {
        let x: Vec<f64> = (0..800).map(|i| (2.0 * PI * 12.0 * i as f64 / 200.0).sin()).collect();
        let out = resample_to_250(&single(x, 200.0)).unwrap();
        assert_eq!(out.samples[0].len(), 1000);
        assert!((dominant_frequency(&out.samples[0], 250.0) - 12.0).abs() <= 0.25);
        let peak = out.samples[0][100..900].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!((peak - 1.0).abs() < 0.02, "{peak}");
    }
}
