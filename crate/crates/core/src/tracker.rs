//! Frame-wise F0 estimation by harmonic-template correlation.
//!
//! Each candidate pitch `c` owns a kernel over the square-root magnitude
//! spectrum with positive lobes at `k c` (weight `1/sqrt(k)`) and negative
//! lobes half-way between harmonics. The spectrum of every candidate is
//! taken with a Hann window of about eight periods, rounded to a power of two.

use std::f64::consts::TAU;
use std::io::Write;

use realfft::RealFftPlanner;
use serde::{Deserialize, Serialize};

use crate::contour::PitchContour;
use crate::error::{Result, SpcError};
use crate::synth::AudioClip;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrackerConfig {
    pub f_min: f64,
    pub f_max: f64,
    pub bins_per_octave: usize,
    pub hop: usize,
    pub strength_threshold: f64,
    pub num_harmonics: usize,
    /// Periods per analysis window before rounding to a power of two.
    pub periods_per_window: f64,
    pub min_window: usize,
    pub max_window: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            f_min: 25.0,
            f_max: 10_000.0,
            bins_per_octave: 128,
            hop: 48,
            strength_threshold: 0.0,
            num_harmonics: 8,
            periods_per_window: 8.0,
            min_window: 256,
            max_window: 16_384,
        }
    }
}

impl TrackerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_min > 0.0 && self.f_min < self.f_max && self.f_max.is_finite()) {
            return Err(SpcError::domain(format!(
                "need 0 < f_min < f_max, got {} and {}",
                self.f_min, self.f_max
            )));
        }
        if self.bins_per_octave < 12 {
            return Err(SpcError::domain("bins_per_octave must be at least 12"));
        }
        if self.hop == 0 {
            return Err(SpcError::domain("hop must be at least 1"));
        }
        if self.num_harmonics == 0 {
            return Err(SpcError::domain("num_harmonics must be at least 1"));
        }
        if !self.min_window.is_power_of_two()
            || !self.max_window.is_power_of_two()
            || self.min_window > self.max_window
        {
            return Err(SpcError::domain("window clamps must be ordered powers of two"));
        }
        Ok(())
    }

    /// Log-spaced candidates from `f_min` to `f_max` inclusive.
    pub fn candidates(&self) -> Vec<f64> {
        let octaves = (self.f_max / self.f_min).log2();
        let n = (self.bins_per_octave as f64 * octaves).ceil() as usize + 1;
        (0..n)
            .map(|i| self.f_min * 2f64.powf(octaves * i as f64 / (n - 1) as f64))
            .collect()
    }

    /// Power-of-two window nearest (in log) to the configured period count.
    pub fn window_for(&self, candidate: f64, fs: f64) -> usize {
        let ideal = self.periods_per_window * fs / candidate;
        let n = 2f64.powf(ideal.log2().round());
        (n as usize).clamp(self.min_window, self.max_window)
    }
}

/// Per-frame tracker output.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackedContour {
    pub frame_rate: f64,
    /// Refined estimate; 0 on unvoiced frames.
    pub f0: Vec<f64>,
    pub strength: Vec<f64>,
    pub voiced: Vec<bool>,
}

impl TrackedContour {
    pub fn len(&self) -> usize {
        self.f0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.f0.is_empty()
    }

    pub fn to_contour(&self) -> PitchContour {
        PitchContour {
            frame_rate: self.frame_rate,
            values: self.f0.clone(),
            voicing: Some(self.voiced.clone()),
        }
    }

    /// `time_s,f0_hz,voiced,strength` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let mut out = String::with_capacity(self.len() * 32 + 32);
        out.push_str("time_s,f0_hz,voiced,strength\n");
        for n in 0..self.len() {
            out.push_str(&format!(
                "{:.6},{:.4},{},{:.6}\n",
                n as f64 / self.frame_rate,
                self.f0[n],
                u8::from(self.voiced[n]),
                self.strength[n]
            ));
        }
        w.write_all(out.as_bytes())
    }
}

struct Kernel {
    start: usize,
    weights: Vec<f64>,
}

struct WindowGroup {
    size: usize,
    window: Vec<f64>,
    /// Candidate indices scored with this window, ascending.
    candidates: Vec<usize>,
    kernels: Vec<Kernel>,
}

/// Zero-mean, unit-norm harmonic template for `c` on an `n`-point spectrum.
fn build_kernel(c: f64, n: usize, fs: f64, harmonics: usize) -> Kernel {
    let df = fs / n as f64;
    let top = ((harmonics as f64 + 0.5) * c).min(fs / 2.0);
    let start = ((0.5 * c) / df).ceil() as usize;
    let end = ((top / df).floor() as usize).min(n / 2);
    let mut weights: Vec<f64> = (start..=end.max(start))
        .map(|j| {
            let f = j as f64 * df;
            let k = (f / c).round().max(1.0);
            (TAU * f / c).cos() / k.sqrt()
        })
        .collect();
    let mean = weights.iter().sum::<f64>() / weights.len() as f64;
    weights.iter_mut().for_each(|w| *w -= mean);
    let norm = weights.iter().map(|w| w * w).sum::<f64>().sqrt();
    if norm > 0.0 {
        weights.iter_mut().for_each(|w| *w /= norm);
    }
    Kernel { start, weights }
}

/// Precomputed candidates, windows and kernels for one sample rate.
pub struct Tracker {
    cfg: TrackerConfig,
    fs: f64,
    candidates: Vec<f64>,
    groups: Vec<WindowGroup>,
}

impl Tracker {
    pub fn new(cfg: TrackerConfig, sample_rate: u32) -> Result<Self> {
        cfg.validate()?;
        let fs = sample_rate as f64;
        if cfg.f_max >= fs / 2.0 {
            return Err(SpcError::domain(format!(
                "f_max {} Hz is not below the Nyquist frequency {}",
                cfg.f_max,
                fs / 2.0
            )));
        }
        let candidates = cfg.candidates();
        let mut groups: Vec<WindowGroup> = Vec::new();
        for (i, &c) in candidates.iter().enumerate() {
            let size = cfg.window_for(c, fs);
            let g = match groups.iter_mut().position(|g| g.size == size) {
                Some(p) => &mut groups[p],
                None => {
                    groups.push(WindowGroup {
                        size,
                        window: (0..size)
                            .map(|j| 0.5 - 0.5 * (TAU * j as f64 / size as f64).cos())
                            .collect(),
                        candidates: Vec::new(),
                        kernels: Vec::new(),
                    });
                    groups.last_mut().unwrap()
                }
            };
            g.candidates.push(i);
            g.kernels.push(build_kernel(c, size, fs, cfg.num_harmonics));
        }
        Ok(Tracker {
            cfg,
            fs,
            candidates,
            groups,
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn candidates(&self) -> &[f64] {
        &self.candidates
    }

    /// Longest analysis window in use.
    pub fn max_window(&self) -> usize {
        self.groups.iter().map(|g| g.size).max().unwrap_or(0)
    }

    /// Candidate scores for every frame, frame-major.
    pub fn scores(&self, samples: &[f32]) -> Result<(Vec<f64>, usize)> {
        let min_len = self.groups.iter().map(|g| g.size).min().unwrap_or(0);
        if samples.len() < min_len {
            return Err(SpcError::domain(format!(
                "clip of {} samples is shorter than the {min_len}-sample analysis window",
                samples.len()
            )));
        }
        let frames = samples.len() / self.cfg.hop;
        let nc = self.candidates.len();
        let mut scores = vec![0.0; frames * nc];
        let mut planner = RealFftPlanner::<f64>::new();
        for g in &self.groups {
            let fft = planner.plan_fft_forward(g.size);
            let mut input = fft.make_input_vec();
            let mut spec = fft.make_output_vec();
            let mut mag = vec![0.0; spec.len()];
            let half = (g.size / 2) as isize;
            for t in 0..frames {
                let centre = (t * self.cfg.hop) as isize;
                for (j, slot) in input.iter_mut().enumerate() {
                    let m = centre - half + j as isize;
                    *slot = if m >= 0 && (m as usize) < samples.len() {
                        samples[m as usize] as f64 * g.window[j]
                    } else {
                        0.0
                    };
                }
                fft.process(&mut input, &mut spec)
                    .map_err(|e| SpcError::Internal(e.to_string()))?;
                let mut energy = 0.0;
                for (m, c) in mag.iter_mut().zip(&spec) {
                    let abs = c.norm_sqr().sqrt();
                    *m = abs.sqrt();
                    energy += abs;
                }
                let norm = energy.sqrt();
                if !(norm > 0.0) {
                    continue;
                }
                let row = &mut scores[t * nc..(t + 1) * nc];
                for (&ci, k) in g.candidates.iter().zip(&g.kernels) {
                    let s = &mag[k.start..k.start + k.weights.len()];
                    let dot: f64 = s.iter().zip(&k.weights).map(|(a, b)| a * b).sum();
                    row[ci] = (dot / norm).clamp(-1.0, 1.0);
                }
            }
        }
        Ok((scores, frames))
    }

    pub fn track(&self, clip: &AudioClip) -> Result<TrackedContour> {
        if clip.sample_rate as f64 != self.fs {
            return Err(SpcError::domain(format!(
                "tracker built for {} Hz, clip is {} Hz",
                self.fs, clip.sample_rate
            )));
        }
        let (scores, frames) = self.scores(&clip.samples)?;
        let nc = self.candidates.len();
        let step = (self.cfg.f_max / self.cfg.f_min).log2() / (nc - 1) as f64;
        let mut f0 = vec![0.0; frames];
        let mut strength = vec![0.0; frames];
        let mut voiced = vec![false; frames];
        for t in 0..frames {
            let row = &scores[t * nc..(t + 1) * nc];
            let mut best = 0;
            for i in 1..nc {
                if row[i] > row[best] {
                    best = i;
                }
            }
            strength[t] = row[best];
            if !(row[best] > self.cfg.strength_threshold) {
                continue;
            }
            let mut offset = 0.0;
            if best > 0 && best + 1 < nc {
                let (a, b, c) = (row[best - 1], row[best], row[best + 1]);
                let curvature = a - 2.0 * b + c;
                if curvature < 0.0 {
                    offset = (0.5 * (a - c) / curvature).clamp(-0.5, 0.5);
                }
            }
            let f = self.cfg.f_min * 2f64.powf((best as f64 + offset) * step);
            f0[t] = f.clamp(self.cfg.f_min, self.cfg.f_max);
            voiced[t] = true;
        }
        Ok(TrackedContour {
            frame_rate: self.fs / self.cfg.hop as f64,
            f0,
            strength,
            voiced,
        })
    }
}

/// One-shot tracking; build a [`Tracker`] once to analyse many clips.
pub fn track_pitch(clip: &AudioClip, cfg: &TrackerConfig) -> Result<TrackedContour> {
    Tracker::new(cfg.clone(), clip.sample_rate)?.track(clip)
}

/// Raw pitch accuracy: share of ground-truth voiced frames whose estimate is
/// voiced and within `tol_cents`. Estimate frames are aligned to the nearest
/// ground-truth time.
pub fn rpa(est: &TrackedContour, gt: &PitchContour, tol_cents: f64) -> Result<f64> {
    rpa_contour(&est.to_contour(), gt, tol_cents)
}

pub fn rpa_contour(est: &PitchContour, gt: &PitchContour, tol_cents: f64) -> Result<f64> {
    if est.is_empty() {
        return Err(SpcError::domain("estimate has no frames"));
    }
    let mut total = 0usize;
    let mut hits = 0usize;
    for n in 0..gt.len() {
        if !gt.is_voiced(n) {
            continue;
        }
        total += 1;
        let t = n as f64 / gt.frame_rate;
        let m = ((t * est.frame_rate).round() as usize).min(est.len() - 1);
        if est.is_voiced(m) && est.values[m] > 0.0 {
            let d = 1200.0 * (est.values[m] / gt.values[n]).log2();
            if d.abs() <= tol_cents {
                hits += 1;
            }
        }
    }
    if total == 0 {
        return Err(SpcError::domain(
            "ground truth has no voiced frames; raw pitch accuracy is undefined",
        ));
    }
    Ok(hits as f64 / total as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn candidate_grid() {
        let cfg = TrackerConfig::default();
        let c = cfg.candidates();
        assert_eq!(c.len(), 1108);
        assert_eq!(c[0], 25.0);
        assert!((c[1107] - 10_000.0).abs() < 1e-9);
        let spacing = 1200.0 * (c[1] / c[0]).log2();
        assert!(spacing <= 1200.0 / 128.0);
    }

    #[test]
    fn window_sizes() {
        let cfg = TrackerConfig::default();
        assert_eq!(cfg.window_for(25.0, 48_000.0), 16_384);
        assert_eq!(cfg.window_for(440.0, 48_000.0), 1024);
        assert_eq!(cfg.window_for(10_000.0, 48_000.0), 256);
    }

    #[test]
    fn kernel_is_zero_mean_unit_norm() {
        let k = build_kernel(440.0, 1024, 48_000.0, 8);
        let sum: f64 = k.weights.iter().sum();
        let norm: f64 = k.weights.iter().map(|w| w * w).sum();
        assert!(sum.abs() < 1e-12);
        assert!((norm - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rpa_examples() {
        let gt = PitchContour::voiced(1000.0, vec![220.0; 10]);
        let est = |vals: Vec<f64>, voiced: Vec<bool>| TrackedContour {
            frame_rate: 1000.0,
            strength: vec![0.5; vals.len()],
            f0: vals,
            voiced,
        };
        assert_eq!(rpa(&est(vec![220.0; 10], vec![true; 10]), &gt, 50.0).unwrap(), 1.0);
        let off = 220.0 * 2f64.powf(51.0 / 1200.0);
        assert_eq!(rpa(&est(vec![off; 10], vec![true; 10]), &gt, 50.0).unwrap(), 0.0);
        let mut v = vec![true; 10];
        v[5..].iter_mut().for_each(|x| *x = false);
        let mut f = vec![220.0; 10];
        f[5..].iter_mut().for_each(|x| *x = 0.0);
        assert_eq!(rpa(&est(f, v), &gt, 50.0).unwrap(), 0.5);
        let mut silent = gt.clone();
        silent.voicing = Some(vec![false; 10]);
        assert!(rpa(&est(vec![220.0; 10], vec![true; 10]), &silent, 50.0).is_err());
    }

    #[test]
    fn silence_is_unvoiced() {
        let clip = AudioClip::new(48_000, vec![0.0; 4800]);
        let t = track_pitch(&clip, &TrackerConfig::default()).unwrap();
        assert_eq!(t.len(), 100);
        assert!(t.voiced.iter().all(|v| !v));
        assert!(t.strength.iter().all(|&s| s <= 0.0));
    }

    #[test]
    fn pure_sine() {
        let clip = AudioClip::new(
            48_000,
            (0..48_000)
                .map(|i| (TAU * 100.0 * i as f64 / 48_000.0).sin() as f32)
                .collect(),
        );
        let t = track_pitch(&clip, &TrackerConfig::default()).unwrap();
        let mut v: Vec<f64> = t.f0.iter().copied().filter(|&f| f > 0.0).collect();
        v.sort_by(f64::total_cmp);
        let median = v[v.len() / 2];
        assert!((1200.0 * (median / 100.0).log2()).abs() < 50.0, "median {median}");
        let octave_up = t.f0.iter().filter(|&&f| f > 100.0 * 2f64.powf(0.5)).count();
        assert!(octave_up < t.len() / 10);
    }
}
