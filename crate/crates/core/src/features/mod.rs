//! Time-frequency representations and model-input image preparation.
//!
//! All representations share a 1 ms hop (48 samples at 48 kHz) and one frame
//! per hop, so a one-second clip always yields 1000 frames.

mod cqt;
mod image;
mod mel;
mod pitch;
mod stft;
pub mod tensor;

use serde::{Deserialize, Serialize};

pub use cqt::{cqt_bin_freqs, cqt_logmag, CqtPlan, CQT_BINS, CQT_BINS_PER_OCTAVE, CQT_F_MIN, CQT_F_MAX};
pub use image::{
    normalize_batch, resize_bicubic, to_model_input, to_model_inputs, ModelInput, MODEL_INPUT_SIZE,
};
pub use mel::{mel_filterbank, mel_logmag, MelFilterbank, MEL_BANDS, MEL_F_MAX, MEL_F_MIN};
pub use pitch::binary_pitch_image;
pub use tensor::{read_tensor, sidecar_path, write_tensor, Tensor};
pub use stft::{stft_logmag, stft_magnitude, FFT_SIZE, HOP};

/// Absolute magnitude floor added before taking logarithms.
pub const LOG_EPS: f64 = 1e-10;

/// Dynamic range kept below the clip maximum, in dB.
pub const DYNAMIC_RANGE_DB: f64 = 100.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FeatureKind {
    Stft,
    Mel,
    Cqt,
    Pitch,
}

impl FeatureKind {
    pub fn name(self) -> &'static str {
        match self {
            FeatureKind::Stft => "stft",
            FeatureKind::Mel => "mel",
            FeatureKind::Cqt => "cqt",
            FeatureKind::Pitch => "pitch",
        }
    }
}

impl std::fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FeatureKind {
    type Err = crate::SpcError;

    fn from_str(s: &str) -> crate::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "stft" => Ok(FeatureKind::Stft),
            "mel" => Ok(FeatureKind::Mel),
            "cqt" => Ok(FeatureKind::Cqt),
            "pitch" => Ok(FeatureKind::Pitch),
            other => Err(crate::SpcError::domain(format!("unknown representation '{other}'"))),
        }
    }
}

/// A bins x frames matrix with its frequency axis.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    pub kind: FeatureKind,
    pub bins: usize,
    pub frames: usize,
    /// Row-major, `data[bin * frames + frame]`.
    pub data: Vec<f32>,
    pub bin_freqs: Vec<f64>,
    pub hop_s: f64,
    /// Lowest value of log-magnitude kinds (dB); 0 for the binary pitch kind.
    pub log_floor: f64,
    pub warnings: Vec<String>,
}

impl FeatureImage {
    #[inline]
    pub fn at(&self, bin: usize, frame: usize) -> f32 {
        self.data[bin * self.frames + frame]
    }

    pub fn row(&self, bin: usize) -> &[f32] {
        &self.data[bin * self.frames..(bin + 1) * self.frames]
    }

    /// Index of the largest bin of every frame (lowest index on ties).
    pub fn argmax_per_frame(&self) -> Vec<usize> {
        (0..self.frames)
            .map(|t| {
                let mut best = 0;
                for b in 1..self.bins {
                    if self.at(b, t) > self.at(best, t) {
                        best = b;
                    }
                }
                best
            })
            .collect()
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
    }

    pub fn sidecar(&self) -> Sidecar {
        Sidecar {
            kind: self.kind,
            bin_freqs: self.bin_freqs.clone(),
            hop: self.hop_s,
            log_floor: self.log_floor,
        }
    }
}

/// JSON metadata written next to an exported tensor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub kind: FeatureKind,
    pub bin_freqs: Vec<f64>,
    pub hop: f64,
    pub log_floor: f64,
}

/// Converts a frames x bins linear matrix (magnitude or power) to a
/// bins x frames dB image clamped `DYNAMIC_RANGE_DB` below its maximum.
pub(crate) fn to_db_image(
    kind: FeatureKind,
    frames_major: &[f64],
    frames: usize,
    bins: usize,
    power: bool,
    bin_freqs: Vec<f64>,
    hop_s: f64,
) -> FeatureImage {
    let factor = if power { 10.0 } else { 20.0 };
    let db: Vec<f64> = frames_major
        .iter()
        .map(|&v| factor * (v + LOG_EPS).log10())
        .collect();
    let max_db = db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let log_floor = (max_db - DYNAMIC_RANGE_DB).max(factor * LOG_EPS.log10());
    let mut data = vec![0.0f32; frames * bins];
    for t in 0..frames {
        for b in 0..bins {
            data[b * frames + t] = db[t * bins + b].max(log_floor) as f32;
        }
    }
    FeatureImage {
        kind,
        bins,
        frames,
        data,
        bin_freqs,
        hop_s,
        log_floor: log_floor as f32 as f64,
        warnings: Vec::new(),
    }
}

/// Frame count for a clip of `len` samples: one frame per full hop.
pub fn frame_count(len: usize, hop: usize) -> usize {
    len / hop
}

/// Mirror padding without repeating the edge sample (numpy "reflect").
pub(crate) fn reflect_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(n + 2 * pad);
    let idx = |i: isize| -> f64 {
        if n == 1 {
            return x[0];
        }
        let period = 2 * (n as isize - 1);
        let mut j = i.rem_euclid(period);
        if j >= n as isize {
            j = period - j;
        }
        x[j as usize]
    };
    for i in -(pad as isize)..(n + pad) as isize {
        out.push(idx(i));
    }
    out
}

/// The representation of `clip` selected by `kind`. The pitch kind needs the
/// ground-truth contour and is rejected here.
pub fn compute(kind: FeatureKind, clip: &crate::AudioClip) -> crate::Result<FeatureImage> {
    match kind {
        FeatureKind::Stft => stft_logmag(clip),
        FeatureKind::Mel => mel_logmag(clip),
        FeatureKind::Cqt => cqt_logmag(clip),
        FeatureKind::Pitch => Err(crate::SpcError::domain(
            "the pitch representation is computed from a contour, not audio",
        )),
    }
}
