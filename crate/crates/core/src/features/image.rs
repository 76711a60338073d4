use super::{FeatureImage, FeatureKind, Sidecar};
use crate::error::{Result, SpcError};

pub const MODEL_INPUT_SIZE: usize = 224;
const CHANNELS: usize = 3;
const KEYS_A: f64 = -0.5;

/// A 224 x 224 x 3 image, height-width-channel order; row `h` follows the
/// frequency axis (low bins first), column `w` follows time.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelInput {
    pub tensor: Vec<f32>,
    pub source_kind: FeatureKind,
    pub source: Sidecar,
}

impl ModelInput {
    pub const SHAPE: [usize; 3] = [MODEL_INPUT_SIZE, MODEL_INPUT_SIZE, CHANNELS];

    #[inline]
    pub fn at(&self, h: usize, w: usize, c: usize) -> f32 {
        self.tensor[(h * MODEL_INPUT_SIZE + w) * CHANNELS + c]
    }
}

fn keys(x: f64) -> f64 {
    let x = x.abs();
    if x <= 1.0 {
        ((KEYS_A + 2.0) * x - (KEYS_A + 3.0)) * x * x + 1.0
    } else if x < 2.0 {
        (((x - 5.0) * x + 8.0) * x - 4.0) * KEYS_A
    } else {
        0.0
    }
}

/// Source taps and weights for each output index along one axis.
fn axis_weights(n_in: usize, n_out: usize) -> Vec<([usize; 4], [f64; 4])> {
    let scale = n_in as f64 / n_out as f64;
    (0..n_out)
        .map(|o| {
            let src = (o as f64 + 0.5) * scale - 0.5;
            let base = src.floor();
            let frac = src - base;
            let mut idx = [0usize; 4];
            let mut w = [0.0; 4];
            for k in 0..4 {
                let offset = k as f64 - 1.0;
                let i = (base + offset).clamp(0.0, (n_in - 1) as f64);
                idx[k] = i as usize;
                w[k] = keys(frac - offset);
            }
            (idx, w)
        })
        .collect()
}

/// Separable bicubic resize of a row-major `rows x cols` matrix with
/// half-pixel alignment and clamped borders.
pub fn resize_bicubic(
    data: &[f32],
    rows: usize,
    cols: usize,
    out_rows: usize,
    out_cols: usize,
) -> Result<Vec<f64>> {
    if rows == 0 || cols == 0 || data.len() != rows * cols {
        return Err(SpcError::domain(format!(
            "cannot resize a {rows} x {cols} matrix with {} values",
            data.len()
        )));
    }
    let across = axis_weights(cols, out_cols);
    let mut tmp = vec![0.0f64; rows * out_cols];
    for r in 0..rows {
        let row = &data[r * cols..(r + 1) * cols];
        for (c, (idx, w)) in across.iter().enumerate() {
            tmp[r * out_cols + c] = (0..4).map(|k| w[k] * row[idx[k]] as f64).sum();
        }
    }
    let down = axis_weights(rows, out_rows);
    let mut out = vec![0.0f64; out_rows * out_cols];
    for (r, (idx, w)) in down.iter().enumerate() {
        for c in 0..out_cols {
            out[r * out_cols + c] = (0..4).map(|k| w[k] * tmp[idx[k] * out_cols + c]).sum();
        }
    }
    Ok(out)
}

/// Affine map of the joint batch range onto [-1, 1]; a constant batch maps
/// to zeros.
pub fn normalize_batch(images: &mut [Vec<f64>]) {
    let (lo, hi) = images
        .iter()
        .flatten()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    // interpolation of a constant can wobble in the last ulp
    let span = hi - lo;
    let flat = !(span > 1e-9 * lo.abs().max(hi.abs()).max(1.0));
    for v in images.iter_mut().flatten() {
        *v = if !flat {
            (2.0 * ((*v - lo) / span) - 1.0).clamp(-1.0, 1.0)
        } else {
            0.0
        };
    }
}

/// Resizes every image of a batch (e.g. all patches of one clip) and
/// normalizes them jointly.
pub fn to_model_inputs(images: &[FeatureImage]) -> Result<Vec<ModelInput>> {
    let mut resized = images
        .iter()
        .map(|img| {
            resize_bicubic(&img.data, img.bins, img.frames, MODEL_INPUT_SIZE, MODEL_INPUT_SIZE)
        })
        .collect::<Result<Vec<_>>>()?;
    normalize_batch(&mut resized);
    Ok(resized
        .into_iter()
        .zip(images)
        .map(|(gray, img)| {
            let mut tensor = Vec::with_capacity(gray.len() * CHANNELS);
            for v in gray {
                tensor.extend([v as f32; CHANNELS]);
            }
            ModelInput {
                tensor,
                source_kind: img.kind,
                source: img.sidecar(),
            }
        })
        .collect())
}

/// Single image treated as its own batch.
pub fn to_model_input(img: &FeatureImage) -> Result<ModelInput> {
    Ok(to_model_inputs(std::slice::from_ref(img))?.remove(0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image(rows: usize, cols: usize, f: impl Fn(usize, usize) -> f32) -> FeatureImage {
        let data = (0..rows * cols).map(|i| f(i / cols, i % cols)).collect();
        FeatureImage {
            kind: FeatureKind::Cqt,
            bins: rows,
            frames: cols,
            data,
            bin_freqs: (0..rows).map(|r| r as f64 + 1.0).collect(),
            hop_s: 0.001,
            log_floor: -100.0,
            warnings: Vec::new(),
        }
    }

    #[test]
    fn kernel_values() {
        assert_eq!(keys(0.0), 1.0);
        assert_eq!(keys(1.0), 0.0);
        assert_eq!(keys(2.0), 0.0);
        assert!((keys(0.5) - 0.5625).abs() < 1e-12);
        assert!((keys(1.5) + 0.0625).abs() < 1e-12);
        for i in 0..=10 {
            let t = i as f64 / 10.0;
            let s: f64 = (-1..=2).map(|k| keys(t - k as f64)).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_size_is_identity() {
        let img = image(224, 224, |r, c| ((r * 31 + c * 7) % 97) as f32 * 0.37 - 5.0);
        let out = resize_bicubic(&img.data, 224, 224, 224, 224).unwrap();
        for (a, b) in img.data.iter().zip(&out) {
            assert!((*a as f64 - b).abs() < 1e-6);
        }
    }

    #[test]
    fn linear_ramp_is_reproduced_inside() {
        let img = image(579, 1000, |r, _| r as f32);
        let out = resize_bicubic(&img.data, 579, 1000, 224, 224).unwrap();
        let scale = 579.0 / 224.0;
        for r in 2..222 {
            let want = (r as f64 + 0.5) * scale - 0.5;
            assert!((out[r * 224 + 7] - want).abs() < 1e-9);
        }
    }

    #[test]
    fn bounds_and_channels() {
        let img = image(579, 1000, |r, c| ((r as f32) * 0.01).sin() * c as f32);
        let m = to_model_input(&img).unwrap();
        assert_eq!(m.tensor.len(), 224 * 224 * 3);
        let lo = m.tensor.iter().copied().fold(f32::INFINITY, f32::min);
        let hi = m.tensor.iter().copied().fold(f32::NEG_INFINITY, f32::max);
        assert_eq!((lo, hi), (-1.0, 1.0));
        for h in 0..224 {
            for w in 0..224 {
                assert_eq!(m.at(h, w, 0), m.at(h, w, 1));
                assert_eq!(m.at(h, w, 0), m.at(h, w, 2));
            }
        }
    }

    #[test]
    fn constant_maps_to_zero() {
        let m = to_model_input(&image(10, 10, |_, _| -42.0)).unwrap();
        assert!(m.tensor.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn batch_is_normalized_jointly() {
        let a = image(8, 8, |_, _| 0.0);
        let b = image(8, 8, |_, _| 10.0);
        let out = to_model_inputs(&[a, b]).unwrap();
        assert!(out[0].tensor.iter().all(|&v| v == -1.0));
        assert!(out[1].tensor.iter().all(|&v| v == 1.0));
    }
}
