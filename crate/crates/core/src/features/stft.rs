use std::f64::consts::TAU;

use realfft::RealFftPlanner;

use super::{frame_count, reflect_pad, to_db_image, FeatureImage, FeatureKind};
use crate::error::{Result, SpcError};
use crate::synth::AudioClip;

pub const FFT_SIZE: usize = 2048;
pub const HOP: usize = 48;

/// Periodic Hann window.
pub(crate) fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (TAU * i as f64 / n as f64).cos())
        .collect()
}

/// Centered, reflect-padded magnitude STFT; returns frames x (n_fft/2 + 1)
/// values in frame-major order.
pub fn stft_magnitude(samples: &[f64], n_fft: usize, hop: usize) -> Result<(Vec<f64>, usize)> {
    if samples.len() < n_fft {
        return Err(SpcError::domain(format!(
            "clip of {} samples is shorter than the FFT size {n_fft}",
            samples.len()
        )));
    }
    let frames = frame_count(samples.len(), hop);
    let padded = reflect_pad(samples, n_fft / 2);
    let window = hann(n_fft);
    let bins = n_fft / 2 + 1;

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(n_fft);
    let mut input = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();
    let mut out = vec![0.0; frames * bins];
    for t in 0..frames {
        let start = t * hop;
        for (i, slot) in input.iter_mut().enumerate() {
            *slot = padded[start + i] * window[i];
        }
        fft.process(&mut input, &mut spectrum)
            .map_err(|e| SpcError::Internal(e.to_string()))?;
        for (b, c) in spectrum.iter().enumerate() {
            out[t * bins + b] = c.norm();
        }
    }
    Ok((out, frames))
}

/// Log-magnitude STFT (2048-point Hann, 48-sample hop), bins at `k fs / 2048`.
pub fn stft_logmag(clip: &AudioClip) -> Result<FeatureImage> {
    let x: Vec<f64> = clip.samples.iter().map(|&s| s as f64).collect();
    let (mag, frames) = stft_magnitude(&x, FFT_SIZE, HOP)?;
    let bins = FFT_SIZE / 2 + 1;
    let fs = clip.sample_rate as f64;
    let freqs = (0..bins).map(|k| k as f64 * fs / FFT_SIZE as f64).collect();
    Ok(to_db_image(
        FeatureKind::Stft,
        &mag,
        frames,
        bins,
        false,
        freqs,
        HOP as f64 / fs,
    ))
}
