//! Constant-Q magnitude with one Hann-windowed complex kernel per bin.
//!
//! The per-bin correlation `c_b(t) = sum_v x(t + v) k_b(v)` is evaluated in
//! the frequency domain: each kernel spectrum is stored sparsely, multiplied
//! with the spectrum of the padded clip, folded modulo the frame count so
//! that a short inverse FFT yields the hop-spaced outputs directly.

use std::collections::HashMap;
use std::f64::consts::TAU;
use std::sync::{Arc, Mutex, OnceLock};

use num_complex::Complex64;
use realfft::RealFftPlanner;
use rustfft::{Fft, FftPlanner};

use super::stft::HOP;
use super::{frame_count, reflect_pad, to_db_image, FeatureImage, FeatureKind};
use crate::error::{Result, SpcError};
use crate::synth::AudioClip;

pub const CQT_F_MIN: f64 = 25.0;
pub const CQT_F_MAX: f64 = 20_000.0;
pub const CQT_BINS_PER_OCTAVE: usize = 60;
/// Bins at or below `CQT_F_MAX`.
pub const CQT_BINS: usize = 579;

/// Kernel spectrum entries below this fraction of the bin maximum are dropped.
const SPARSITY_THRESHOLD: f64 = 1e-5;

pub fn cqt_bin_freqs() -> Vec<f64> {
    (0..CQT_BINS)
        .map(|b| CQT_F_MIN * 2f64.powf(b as f64 / CQT_BINS_PER_OCTAVE as f64))
        .collect()
}

pub fn quality_factor() -> f64 {
    1.0 / (2f64.powf(1.0 / CQT_BINS_PER_OCTAVE as f64) - 1.0)
}

/// Kernel length of a bin centered at `f` for a clip of `len` samples.
pub fn kernel_len(f: f64, fs: f64, len: usize) -> usize {
    ((quality_factor() * fs / f).ceil() as usize).min(len)
}

/// Time-domain kernel: periodic Hann of length `n` normalized to unit sum,
/// modulated down by `f`, indexed from offset `-(n / 2)`.
pub(crate) fn kernel(f: f64, fs: f64, n: usize) -> (isize, Vec<Complex64>) {
    let w: Vec<f64> = (0..n)
        .map(|u| 0.5 - 0.5 * (TAU * u as f64 / n as f64).cos())
        .collect();
    let norm: f64 = w.iter().sum();
    let offset = -((n / 2) as isize);
    let k = w
        .iter()
        .enumerate()
        .map(|(u, &wu)| {
            let v = (u as isize + offset) as f64;
            Complex64::from_polar(wu / norm, -TAU * f * v / fs)
        })
        .collect();
    (offset, k)
}

struct SparseKernel {
    index: Vec<u32>,
    value: Vec<Complex64>,
}

/// Precomputed kernels for one (sample rate, clip length) pair.
pub struct CqtPlan {
    sample_rate: u32,
    clip_len: usize,
    pad: usize,
    fft_len: usize,
    folded_len: usize,
    frames: usize,
    bin_freqs: Vec<f64>,
    kernels: Vec<SparseKernel>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for CqtPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CqtPlan")
            .field("sample_rate", &self.sample_rate)
            .field("clip_len", &self.clip_len)
            .field("fft_len", &self.fft_len)
            .field("entries", &self.entries())
            .finish()
    }
}

impl CqtPlan {
    pub fn new(sample_rate: u32, clip_len: usize) -> Result<Self> {
        let fs = sample_rate as f64;
        let bin_freqs = cqt_bin_freqs();
        let top = *bin_freqs.last().unwrap();
        if top >= fs / 2.0 {
            return Err(SpcError::domain(format!(
                "sample rate {sample_rate} Hz cannot represent the {top:.1} Hz top bin"
            )));
        }
        if clip_len < 2 {
            return Err(SpcError::domain("clip is too short for a constant-Q transform"));
        }
        let frames = frame_count(clip_len, HOP);
        if frames == 0 {
            return Err(SpcError::domain("clip is shorter than one hop"));
        }
        let longest = kernel_len(bin_freqs[0], fs, clip_len);
        let pad = longest.div_ceil(2);
        let folded_len = frames.max((clip_len + 2 * pad).div_ceil(HOP));
        let fft_len = folded_len * HOP;

        let mut planner = FftPlanner::<f64>::new();
        let kernel_fft = planner.plan_fft_inverse(fft_len);
        let inverse = planner.plan_fft_inverse(folded_len);
        let mut buf = vec![Complex64::new(0.0, 0.0); fft_len];
        let mut scratch = vec![Complex64::new(0.0, 0.0); kernel_fft.get_inplace_scratch_len()];

        let kernels = bin_freqs
            .iter()
            .map(|&f| {
                let n = kernel_len(f, fs, clip_len);
                let (offset, k) = kernel(f, fs, n);
                buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
                for (u, &kv) in k.iter().enumerate() {
                    let v = u as isize + offset;
                    buf[v.rem_euclid(fft_len as isize) as usize] = kv;
                }
                // sum_v k(v) e^{+i 2 pi nu v / N}
                kernel_fft.process_with_scratch(&mut buf, &mut scratch);
                let peak = buf.iter().fold(0.0f64, |m, c| m.max(c.norm()));
                let keep = peak * SPARSITY_THRESHOLD;
                let mut index = Vec::new();
                let mut value = Vec::new();
                for (nu, c) in buf.iter().enumerate() {
                    if c.norm() >= keep {
                        // shift by the padding and fold in the 1/N of the inverse
                        let shift = Complex64::from_polar(
                            1.0 / fft_len as f64,
                            TAU * ((nu as u64 * pad as u64) % fft_len as u64) as f64
                                / fft_len as f64,
                        );
                        index.push(nu as u32);
                        value.push(c * shift);
                    }
                }
                SparseKernel { index, value }
            })
            .collect();

        Ok(CqtPlan {
            sample_rate,
            clip_len,
            pad,
            fft_len,
            folded_len,
            frames,
            bin_freqs,
            kernels,
            inverse,
        })
    }

    /// Shared plan for the given geometry, built on first use.
    pub fn cached(sample_rate: u32, clip_len: usize) -> Result<Arc<CqtPlan>> {
        static PLANS: OnceLock<Mutex<HashMap<(u32, usize), Arc<CqtPlan>>>> = OnceLock::new();
        let plans = PLANS.get_or_init(|| Mutex::new(HashMap::new()));
        if let Some(p) = plans.lock().unwrap().get(&(sample_rate, clip_len)) {
            return Ok(Arc::clone(p));
        }
        let plan = Arc::new(CqtPlan::new(sample_rate, clip_len)?);
        plans
            .lock()
            .unwrap()
            .entry((sample_rate, clip_len))
            .or_insert_with(|| Arc::clone(&plan));
        Ok(plan)
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn bin_freqs(&self) -> &[f64] {
        &self.bin_freqs
    }

    pub fn entries(&self) -> usize {
        self.kernels.iter().map(|k| k.index.len()).sum()
    }

    /// Linear magnitudes, frame-major (`frames x bins`).
    pub fn magnitude(&self, samples: &[f64]) -> Result<Vec<f64>> {
        if samples.len() != self.clip_len {
            return Err(SpcError::domain(format!(
                "plan built for {} samples, got {}",
                self.clip_len,
                samples.len()
            )));
        }
        let mut padded = reflect_pad(samples, self.pad);
        padded.resize(self.fft_len, 0.0);
        let mut planner = RealFftPlanner::<f64>::new();
        let forward = planner.plan_fft_forward(self.fft_len);
        let mut half = forward.make_output_vec();
        forward
            .process(&mut padded, &mut half)
            .map_err(|e| SpcError::Internal(e.to_string()))?;
        let n = self.fft_len;
        let spectrum = |nu: usize| -> Complex64 {
            if nu < half.len() {
                half[nu]
            } else {
                half[n - nu].conj()
            }
        };

        let bins = self.bin_freqs.len();
        let r = self.folded_len;
        let mut folded = vec![Complex64::new(0.0, 0.0); r];
        let mut scratch = vec![Complex64::new(0.0, 0.0); self.inverse.get_inplace_scratch_len()];
        let mut out = vec![0.0; self.frames * bins];
        for (b, k) in self.kernels.iter().enumerate() {
            folded.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for (&nu, &h) in k.index.iter().zip(&k.value) {
                let nu = nu as usize;
                folded[nu % r] += spectrum(nu) * h;
            }
            self.inverse.process_with_scratch(&mut folded, &mut scratch);
            for t in 0..self.frames {
                out[t * bins + b] = folded[t].norm();
            }
        }
        Ok(out)
    }
}

/// 579-bin log-magnitude constant-Q image, 60 bins per octave from 25 Hz.
pub fn cqt_logmag(clip: &AudioClip) -> Result<FeatureImage> {
    let plan = CqtPlan::cached(clip.sample_rate, clip.len())?;
    let x: Vec<f64> = clip.samples.iter().map(|&s| s as f64).collect();
    let mag = plan.magnitude(&x)?;
    Ok(to_db_image(
        FeatureKind::Cqt,
        &mag,
        plan.frames,
        CQT_BINS,
        false,
        plan.bin_freqs.clone(),
        HOP as f64 / clip.sample_rate as f64,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn tone(f: f64, n: usize, phase: f64) -> AudioClip {
        AudioClip::new(
            48_000,
            (0..n)
                .map(|i| (TAU * f * i as f64 / 48_000.0 + phase).sin() as f32 * 0.8)
                .collect(),
        )
    }

    /// Straight time-domain correlation of one bin at one frame.
    fn direct(x: &[f64], f: f64, fs: f64, frame: usize) -> f64 {
        let n = kernel_len(f, fs, x.len());
        let pad = kernel_len(CQT_F_MIN, fs, x.len()).div_ceil(2);
        let xp = reflect_pad(x, pad);
        let w: Vec<f64> = (0..n)
            .map(|u| (std::f64::consts::PI * u as f64 / n as f64).sin().powi(2))
            .collect();
        let norm: f64 = w.iter().sum();
        let centre = (pad + frame * HOP) as isize;
        let mut acc = Complex64::new(0.0, 0.0);
        for (u, wu) in w.iter().enumerate() {
            let v = u as isize - (n / 2) as isize;
            let phase = -TAU * f * v as f64 / fs;
            acc += xp[(centre + v) as usize] * Complex64::from_polar(wu / norm, phase);
        }
        acc.norm()
    }

    #[test]
    fn axis() {
        let f = cqt_bin_freqs();
        assert_eq!(f.len(), 579);
        assert_eq!(f[0], 25.0);
        assert!((f[60] - 50.0).abs() < 1e-12);
        assert!(f[578] <= 20_000.0 && f[578] * 2f64.powf(1.0 / 60.0) > 20_000.0);
        assert!((quality_factor() - 86.0627).abs() < 1e-3);
    }

    #[test]
    fn matches_direct_correlation() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let x: Vec<f64> = (0..9_600).map(|_| rng.gen::<f64>() - 0.5).collect();
        let plan = CqtPlan::new(48_000, x.len()).unwrap();
        let mag = plan.magnitude(&x).unwrap();
        let scale = mag.iter().fold(0.0f64, |m, v| m.max(*v));
        for &b in &[0usize, 37, 248, 400, 578] {
            for &t in &[0usize, 3, 100, 199] {
                let d = direct(&x, plan.bin_freqs[b], 48_000.0, t);
                let got = mag[t * CQT_BINS + b];
                assert!((got - d).abs() < 1e-4 * scale, "bin {b} frame {t}: {got} vs {d}");
            }
        }
    }

    #[test]
    fn sine_ridge_and_octave_shift() {
        // a cosine phase mirrors smoothly at the clip edges
        let a = cqt_logmag(&tone(440.0, 48_000, std::f64::consts::FRAC_PI_2)).unwrap();
        assert_eq!((a.bins, a.frames), (579, 1000));
        assert!(a.argmax_per_frame().iter().all(|&b| b == 248));
        let b = cqt_logmag(&tone(880.0, 48_000, std::f64::consts::FRAC_PI_2)).unwrap();
        assert!(b.argmax_per_frame().iter().all(|&b| b == 308));
        // a sine phase jumps at the mirror; frames clear of the kernel are exact
        let half = kernel_len(440.0, 48_000.0, 48_000) / 2 / HOP + 1;
        let c = cqt_logmag(&tone(440.0, 48_000, 0.0)).unwrap().argmax_per_frame();
        assert!(c[half..1000 - half].iter().all(|&b| b == 248));
    }

    #[test]
    fn unit_sine_has_half_magnitude() {
        let f = 25.0 * 2f64.powf(200.0 / 60.0);
        let x: Vec<f64> = (0..24_000).map(|i| (TAU * f * i as f64 / 48_000.0).cos()).collect();
        let plan = CqtPlan::new(48_000, x.len()).unwrap();
        let mag = plan.magnitude(&x).unwrap();
        assert!((mag[250 * CQT_BINS + 200] - 0.5).abs() < 1e-3);
    }
}
