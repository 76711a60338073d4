use super::cqt::{cqt_bin_freqs, CQT_BINS, CQT_BINS_PER_OCTAVE, CQT_F_MIN};
use super::{FeatureImage, FeatureKind};
use crate::contour::PitchContour;
use crate::error::{Result, SpcError};

/// One-hot image of a contour on the constant-Q axis; row `b` is hot where
/// `f0` is nearest to bin `b`. Out-of-range values are clamped to the edge
/// bins and reported in `warnings`.
pub fn binary_pitch_image(contour: &PitchContour) -> Result<FeatureImage> {
    contour.validate()?;
    if contour.frame_rate <= 0.0 {
        return Err(SpcError::domain("frame rate must be positive"));
    }
    let frames = contour.len();
    let lo = CQT_F_MIN * 2f64.powf(-1.0 / 120.0);
    let hi = 20_000.0 * 2f64.powf(1.0 / 120.0);
    let mut data = vec![0.0f32; CQT_BINS * frames];
    let mut clamped = 0usize;
    for t in 0..frames {
        if !contour.is_voiced(t) {
            continue;
        }
        let f = contour.values[t];
        if !(f > 0.0) {
            return Err(SpcError::domain(format!("voiced frame {t} has non-positive f0 {f}")));
        }
        if f < lo || f > hi {
            clamped += 1;
        }
        let b = (CQT_BINS_PER_OCTAVE as f64 * (f / CQT_F_MIN).log2()).round();
        let b = b.clamp(0.0, (CQT_BINS - 1) as f64) as usize;
        data[b * frames + t] = 1.0;
    }
    let mut warnings = Vec::new();
    if clamped > 0 {
        warnings.push(format!("{clamped} frame(s) outside the axis range were clamped to edge bins"));
        log::warn!("{}", warnings[0]);
    }
    Ok(FeatureImage {
        kind: FeatureKind::Pitch,
        bins: CQT_BINS,
        frames,
        data,
        bin_freqs: cqt_bin_freqs(),
        hop_s: 1.0 / contour.frame_rate,
        log_floor: 0.0,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flat(f: f64, n: usize) -> PitchContour {
        PitchContour::voiced(1000.0, vec![f; n])
    }

    #[test]
    fn known_rows() {
        let img = binary_pitch_image(&flat(25.0, 10)).unwrap();
        assert!((0..10).all(|t| img.at(0, t) == 1.0));
        let img = binary_pitch_image(&flat(440.0, 10)).unwrap();
        assert!((0..10).all(|t| img.at(248, t) == 1.0));
        assert_eq!(img.data.iter().sum::<f32>(), 10.0);
        assert!(img.warnings.is_empty());
    }

    #[test]
    fn unvoiced_and_clamped() {
        let mut c = flat(440.0, 4);
        c.voicing = Some(vec![false; 4]);
        assert!(binary_pitch_image(&c).unwrap().data.iter().all(|&v| v == 0.0));
        let img = binary_pitch_image(&flat(22_000.0, 3)).unwrap();
        assert_eq!(img.at(578, 0), 1.0);
        assert_eq!(img.warnings.len(), 1);
        let img = binary_pitch_image(&flat(10.0, 3)).unwrap();
        assert_eq!(img.at(0, 2), 1.0);
        assert_eq!(img.warnings.len(), 1);
    }
}
