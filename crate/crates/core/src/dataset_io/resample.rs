//! Rational-ratio polyphase resampling with a linear-phase Kaiser-windowed
//! sinc lowpass.

use std::f64::consts::PI;

use crate::error::{Result, SpcError};
use crate::synth::AudioClip;

/// Zero crossings of the prototype on each side, in units of the lower rate.
const HALF_ZEROS: usize = 32;
const KAISER_BETA: f64 = 8.6;
/// Passband edge relative to the lower Nyquist frequency.
const ROLLOFF: f64 = 0.94;

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let q = x * x / 4.0;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / (k * k) as f64;
        sum += term;
        if term < 1e-17 * sum {
            break;
        }
    }
    sum
}

#[derive(Debug, Clone)]
pub struct Resampler {
    up: usize,
    down: usize,
    /// Prototype filter at the upsampled rate, centred on `center`.
    taps: Vec<f64>,
    center: usize,
}

impl Resampler {
    pub fn new(from: u32, to: u32) -> Result<Self> {
        if from == 0 || to == 0 {
            return Err(SpcError::domain("sample rates must be positive"));
        }
        let g = gcd(from as u64, to as u64);
        let up = (to as u64 / g) as usize;
        let down = (from as u64 / g) as usize;
        let phases = up.max(down);
        let center = HALF_ZEROS * phases;
        // cutoff in cycles per upsampled sample
        let cutoff = ROLLOFF * 0.5 / phases as f64;
        let i0_beta = bessel_i0(KAISER_BETA);
        let taps = (0..=2 * center)
            .map(|k| {
                let t = k as f64 - center as f64;
                let sinc = if t == 0.0 {
                    2.0 * cutoff
                } else {
                    (2.0 * PI * cutoff * t).sin() / (PI * t)
                };
                let r = t / center as f64;
                let w = bessel_i0(KAISER_BETA * (1.0 - r * r).max(0.0).sqrt()) / i0_beta;
                up as f64 * sinc * w
            })
            .collect();
        Ok(Resampler {
            up,
            down,
            taps,
            center,
        })
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        (input_len * self.up).div_ceil(self.down)
    }

    /// Output sample `n` sits at input time `n * down / up`; the filter delay
    /// is compensated so the result is time-aligned with the input.
    pub fn process(&self, input: &[f64]) -> Vec<f64> {
        let (up, down) = (self.up, self.down);
        let last = self.taps.len() as i64 - 1;
        (0..self.output_len(input.len()))
            .map(|n| {
                // position on the upsampled grid, shifted by the filter delay
                let t = (n * down + self.center) as i64;
                let first = (t - last).max(0);
                let mut j = (first + up as i64 - 1) / up as i64;
                let mut acc = 0.0;
                while j < input.len() as i64 {
                    let k = t - j * up as i64;
                    if k < 0 {
                        break;
                    }
                    acc += self.taps[k as usize] * input[j as usize];
                    j += 1;
                }
                acc
            })
            .collect()
    }
}

/// Resamples a clip to `to` Hz; identity when the rates already agree.
pub fn resample_clip(clip: &AudioClip, to: u32) -> Result<AudioClip> {
    if clip.sample_rate == to {
        return Ok(clip.clone());
    }
    let r = Resampler::new(clip.sample_rate, to)?;
    let x: Vec<f64> = clip.samples.iter().map(|&s| s as f64).collect();
    let y = r.process(&x);
    Ok(AudioClip::new(to, y.into_iter().map(|v| v as f32).collect()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tone(f: f64, fs: u32, n: usize) -> Vec<f64> {
        (0..n).map(|i| (2.0 * PI * f * i as f64 / fs as f64).sin()).collect()
    }

    #[test]
    fn ratio_and_length() {
        let r = Resampler::new(44_100, 48_000).unwrap();
        assert_eq!((r.up, r.down), (160, 147));
        assert_eq!(r.output_len(44_100), 48_000);
        assert_eq!(Resampler::new(16_000, 48_000).unwrap().output_len(10), 30);
    }

    #[test]
    fn tone_survives_upsampling() {
        for from in [16_000u32, 22_050, 44_100, 96_000] {
            let x = tone(1000.0, from, from as usize);
            let r = Resampler::new(from, 48_000).unwrap();
            let y = r.process(&x);
            let want = tone(1000.0, 48_000, y.len());
            let err = y[2000..y.len() - 2000]
                .iter()
                .zip(&want[2000..])
                .map(|(a, b)| (a - b).abs())
                .fold(0.0, f64::max);
            assert!(err < 2e-3, "{from}: {err}");
        }
    }

    #[test]
    fn content_above_target_nyquist_is_removed() {
        let x = tone(30_000.0, 96_000, 96_000);
        let y = Resampler::new(96_000, 48_000).unwrap().process(&x);
        let peak = y[1000..y.len() - 1000].iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(peak < 1e-3, "{peak}");
    }

    #[test]
    fn identity_rate() {
        let c = AudioClip::new(48_000, vec![0.1, -0.2, 0.3]);
        assert_eq!(resample_clip(&c, 48_000).unwrap(), c);
        assert!(Resampler::new(0, 48_000).is_err());
    }
}
