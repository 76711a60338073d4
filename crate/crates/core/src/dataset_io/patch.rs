use crate::error::{Result, SpcError};
use crate::synth::AudioClip;

pub const DEFAULT_PATCH_SECONDS: f64 = 1.0;

/// Cuts a clip into consecutive non-overlapping patches. A trailing
/// remainder of at least half a patch is zero-padded into a last patch,
/// a shorter one is dropped; a clip shorter than half a patch yields a
/// single padded patch.
pub fn patch_clip(clip: &AudioClip, patch_len: f64) -> Result<Vec<AudioClip>> {
    if !(patch_len > 0.0 && patch_len.is_finite()) {
        return Err(SpcError::domain(format!("patch length must be positive, got {patch_len}")));
    }
    if clip.is_empty() {
        return Err(SpcError::domain("cannot patch an empty clip"));
    }
    let size = (patch_len * clip.sample_rate as f64).round() as usize;
    if size == 0 {
        return Err(SpcError::domain("patch shorter than one sample"));
    }
    let mut patches: Vec<AudioClip> = clip
        .samples
        .chunks_exact(size)
        .map(|c| AudioClip::new(clip.sample_rate, c.to_vec()))
        .collect();
    let tail = clip.samples.chunks_exact(size).remainder();
    if 2 * tail.len() >= size || patches.is_empty() {
        let mut padded = tail.to_vec();
        padded.resize(size, 0.0);
        patches.push(AudioClip::new(clip.sample_rate, padded));
    }
    Ok(patches)
}
