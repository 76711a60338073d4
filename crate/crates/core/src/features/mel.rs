use super::stft::{stft_magnitude, FFT_SIZE, HOP};
use super::{to_db_image, FeatureImage, FeatureKind};
use crate::error::Result;
use crate::synth::AudioClip;

pub const MEL_BANDS: usize = 128;
pub const MEL_F_MIN: f64 = 25.0;
pub const MEL_F_MAX: f64 = 20_000.0;

pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Sparse triangular filterbank over STFT bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub centers_hz: Vec<f64>,
    /// Per band: first STFT bin and the weights that follow it.
    pub rows: Vec<(usize, Vec<f64>)>,
}

impl MelFilterbank {
    pub fn row_sum(&self, band: usize) -> f64 {
        self.rows[band].1.iter().sum()
    }

    /// Applies the bank to one frame of power values.
    pub fn apply(&self, power: &[f64], out: &mut [f64]) {
        for (o, (start, w)) in out.iter_mut().zip(&self.rows) {
            *o = w.iter().zip(&power[*start..]).map(|(a, b)| a * b).sum();
        }
    }
}

/// HTK-scale triangles whose centers run from `f_lo` to `f_hi` in equal Mel
/// steps; each triangle reaches the neighbouring centers and has unit area.
pub fn mel_filterbank(bands: usize, f_lo: f64, f_hi: f64, n_fft: usize, fs: f64) -> MelFilterbank {
    let m_lo = hz_to_mel(f_lo);
    let m_hi = hz_to_mel(f_hi);
    let step = (m_hi - m_lo) / (bands - 1) as f64;
    // edges[i] for i in 0..bands + 2; band j spans edges[j]..edges[j + 2]
    let edges: Vec<f64> = (0..bands + 2)
        .map(|i| mel_to_hz(m_lo + (i as f64 - 1.0) * step))
        .collect();
    let n_bins = n_fft / 2 + 1;
    let bin_hz = fs / n_fft as f64;
    let rows = (0..bands)
        .map(|j| {
            let (lo, mid, hi) = (edges[j], edges[j + 1], edges[j + 2]);
            let norm = 2.0 / (hi - lo);
            let first = ((lo / bin_hz).ceil() as usize).min(n_bins - 1);
            let last = ((hi / bin_hz).floor() as usize).min(n_bins - 1);
            let weights = (first..=last)
                .map(|k| {
                    let f = k as f64 * bin_hz;
                    let tri = if f <= mid {
                        (f - lo) / (mid - lo)
                    } else {
                        (hi - f) / (hi - mid)
                    };
                    norm * tri.max(0.0)
                })
                .collect();
            (first, weights)
        })
        .collect();
    MelFilterbank {
        centers_hz: edges[1..=bands].to_vec(),
        rows,
    }
}

/// 128-band log-power Mel spectrogram on the STFT grid.
pub fn mel_logmag(clip: &AudioClip) -> Result<FeatureImage> {
    let x: Vec<f64> = clip.samples.iter().map(|&s| s as f64).collect();
    let (mag, frames) = stft_magnitude(&x, FFT_SIZE, HOP)?;
    let fs = clip.sample_rate as f64;
    let bank = mel_filterbank(MEL_BANDS, MEL_F_MIN, MEL_F_MAX, FFT_SIZE, fs);
    let n_bins = FFT_SIZE / 2 + 1;
    let mut power = vec![0.0; n_bins];
    let mut out = vec![0.0; frames * MEL_BANDS];
    for t in 0..frames {
        for (p, m) in power.iter_mut().zip(&mag[t * n_bins..(t + 1) * n_bins]) {
            *p = m * m;
        }
        bank.apply(&power, &mut out[t * MEL_BANDS..(t + 1) * MEL_BANDS]);
    }
    Ok(to_db_image(
        FeatureKind::Mel,
        &out,
        frames,
        MEL_BANDS,
        true,
        bank.centers_hz,
        HOP as f64 / fs,
    ))
}
