//! Band-limited additive synthesis of pitch contours.
//!
//! Every partial shares one running phase accumulator, so partial `k` is
//! `sin(k * theta(m))` with `theta` advanced by `2 pi f0 / fs` per sample.
//! The harmonic sines are generated with the Chebyshev recurrence
//! `sin((k+1)t) = 2 cos(t) sin(kt) - sin((k-1)t)`.

use std::f64::consts::{PI, TAU};

use crate::contour::PitchContour;
use crate::error::{Result, SpcError};

pub const DEFAULT_SAMPLE_RATE: u32 = 48_000;

/// Peak level of normalized synthesized clips.
pub const PEAK_LEVEL: f64 = 0.9;

/// Mono audio buffer.
#[derive(Debug, Clone, PartialEq)]
pub struct AudioClip {
    pub sample_rate: u32,
    pub samples: Vec<f32>,
}

impl AudioClip {
    pub fn new(sample_rate: u32, samples: Vec<f32>) -> Self {
        AudioClip {
            sample_rate,
            samples,
        }
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_s(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> f32 {
        self.samples.iter().fold(0.0f32, |m, s| m.max(s.abs()))
    }

    pub fn rms(&self) -> f64 {
        if self.samples.is_empty() {
            return 0.0;
        }
        let e: f64 = self.samples.iter().map(|&s| (s as f64) * (s as f64)).sum();
        (e / self.samples.len() as f64).sqrt()
    }

    pub fn validate(&self) -> Result<()> {
        if self.sample_rate == 0 {
            return Err(SpcError::domain("sample rate must be positive"));
        }
        if let Some(i) = self.samples.iter().position(|s| !s.is_finite()) {
            return Err(SpcError::domain(format!("sample {i} is not finite")));
        }
        Ok(())
    }
}

/// Amplitude of partial `k`: 1 for the fundamental, `(-1)^k 2/(pi k)` above.
pub fn partial_amplitude(k: usize) -> Result<f64> {
    match k {
        0 => Err(SpcError::domain("partial index starts at 1")),
        1 => Ok(1.0),
        _ => {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            Ok(sign * 2.0 / (PI * k as f64))
        }
    }
}

/// Largest partial count keeping every partial at or below `fs / 2`.
pub fn max_partials(f0_max: f64, fs: f64) -> Result<usize> {
    if !(f0_max > 0.0) || !f0_max.is_finite() {
        return Err(SpcError::domain(format!("maximum f0 must be positive, got {f0_max}")));
    }
    if f0_max > fs / 2.0 {
        return Err(SpcError::domain(format!(
            "f0 {f0_max} Hz exceeds the Nyquist frequency of {} Hz",
            fs / 2.0
        )));
    }
    Ok(((fs / (2.0 * f0_max)).floor() as usize).max(1))
}

/// Running phase shared by all partials, kept in `[0, 2 pi)`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct PhaseAccumulator {
    phase: f64,
}

impl PhaseAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn phase(&self) -> f64 {
        self.phase
    }

    /// Adds `increment` radians (< 2 pi) and returns the new phase.
    #[inline]
    pub fn advance(&mut self, increment: f64) -> f64 {
        self.phase += increment;
        if self.phase >= TAU {
            self.phase -= TAU;
        }
        self.phase
    }
}

/// Contour frame feeding audio sample `j`: zero-order hold of the frame grid.
#[inline]
pub fn frame_for_sample(j: usize, frames: usize, samples: usize) -> usize {
    ((j as u64 * frames as u64 / samples as u64) as usize).min(frames - 1)
}

/// Number of audio samples rendered for a contour at `fs`.
pub fn sample_count(contour: &PitchContour, fs: f64) -> usize {
    (fs * contour.duration_s()).round() as usize
}

/// Per-sample fundamental phase `theta(m)`; unvoiced frames hold the phase.
pub fn fundamental_phase(contour: &PitchContour, fs: f64) -> Vec<f64> {
    let frames = contour.len();
    let m_total = sample_count(contour, fs);
    let increments: Vec<f64> = (0..frames)
        .map(|n| {
            if contour.is_voiced(n) {
                TAU * contour.values[n] / fs
            } else {
                0.0
            }
        })
        .collect();
    let mut acc = PhaseAccumulator::new();
    (0..m_total)
        .map(|j| acc.advance(increments[frame_for_sample(j, frames, m_total)]))
        .collect()
}

fn check_partials(contour: &PitchContour, partials: usize, fs: f64) -> Result<()> {
    contour.validate()?;
    if contour.is_empty() {
        return Err(SpcError::domain("cannot synthesize an empty contour"));
    }
    let f0_max = contour
        .max_voiced()
        .ok_or_else(|| SpcError::domain("contour has no voiced frames"))?;
    let k_max = max_partials(f0_max, fs)?;
    if partials == 0 || partials > k_max {
        return Err(SpcError::domain(format!(
            "partial count {partials} outside [1, {k_max}] for f0 max {f0_max:.3} Hz"
        )));
    }
    Ok(())
}

const BLOCK: usize = 256;

/// Unnormalized additive signal `sum_k a_k sin(k theta(m))`.
pub fn synthesize_raw(contour: &PitchContour, partials: usize, fs: f64) -> Result<Vec<f64>> {
    check_partials(contour, partials, fs)?;
    let theta = fundamental_phase(contour, fs);
    let frames = contour.len();
    let m_total = theta.len();
    let amps: Vec<f64> = (1..=partials)
        .map(|k| partial_amplitude(k).unwrap())
        .collect();

    let mut out = vec![0.0f64; m_total];
    let mut prev = [0.0f64; BLOCK];
    let mut cur = [0.0f64; BLOCK];
    let mut two_cos = [0.0f64; BLOCK];
    let mut acc = [0.0f64; BLOCK];

    for (block_idx, th) in theta.chunks(BLOCK).enumerate() {
        let n = th.len();
        for i in 0..n {
            let (s, c) = th[i].sin_cos();
            prev[i] = 0.0;
            cur[i] = s;
            two_cos[i] = 2.0 * c;
            acc[i] = amps[0] * s;
        }
        for &a in &amps[1..] {
            for i in 0..n {
                let next = two_cos[i] * cur[i] - prev[i];
                acc[i] += a * next;
                prev[i] = cur[i];
                cur[i] = next;
            }
        }
        let base = block_idx * BLOCK;
        for i in 0..n {
            let j = base + i;
            out[j] = if contour.is_voiced(frame_for_sample(j, frames, m_total)) {
                acc[i]
            } else {
                0.0
            };
        }
    }
    Ok(out)
}

/// Renders `contour` with `partials` harmonics at `fs`, peak-normalized to
/// [`PEAK_LEVEL`].
pub fn synthesize(contour: &PitchContour, partials: usize, fs: u32) -> Result<AudioClip> {
    let raw = synthesize_raw(contour, partials, fs as f64)?;
    let peak = raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let gain = if peak > 0.0 { PEAK_LEVEL / peak } else { 0.0 };
    let samples = raw.iter().map(|&v| (gain * v) as f32).collect();
    Ok(AudioClip::new(fs, samples))
}
