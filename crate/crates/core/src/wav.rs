//! Minimal RIFF/WAVE codec.
//!
//! Writes mono IEEE float (format code 3) or 16-bit PCM. Reads PCM 16/24/32,
//! float 32/64 and `WAVE_FORMAT_EXTENSIBLE` wrappers thereof; multichannel
//! input is downmixed by averaging.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Result, SpcError};
use crate::synth::AudioClip;

const FORMAT_PCM: u16 = 1;
const FORMAT_FLOAT: u16 = 3;
const FORMAT_EXTENSIBLE: u16 = 0xFFFE;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SampleFormat {
    Float32,
    Pcm16,
}

fn header(format: SampleFormat, sample_rate: u32, frames: usize) -> Vec<u8> {
    let (code, bits) = match format {
        SampleFormat::Float32 => (FORMAT_FLOAT, 32u16),
        SampleFormat::Pcm16 => (FORMAT_PCM, 16u16),
    };
    let block_align = bits / 8;
    let data_len = (frames * block_align as usize) as u32;
    let mut h = Vec::with_capacity(44);
    h.extend_from_slice(b"RIFF");
    h.extend_from_slice(&(36 + data_len).to_le_bytes());
    h.extend_from_slice(b"WAVE");
    h.extend_from_slice(b"fmt ");
    h.extend_from_slice(&16u32.to_le_bytes());
    h.extend_from_slice(&code.to_le_bytes());
    h.extend_from_slice(&1u16.to_le_bytes());
    h.extend_from_slice(&sample_rate.to_le_bytes());
    h.extend_from_slice(&(sample_rate * block_align as u32).to_le_bytes());
    h.extend_from_slice(&block_align.to_le_bytes());
    h.extend_from_slice(&bits.to_le_bytes());
    h.extend_from_slice(b"data");
    h.extend_from_slice(&data_len.to_le_bytes());
    h
}

/// Serializes a clip to WAV bytes.
pub fn encode_wav(clip: &AudioClip, format: SampleFormat) -> Vec<u8> {
    let mut out = header(format, clip.sample_rate, clip.samples.len());
    match format {
        SampleFormat::Float32 => {
            out.reserve(clip.samples.len() * 4);
            for s in &clip.samples {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        SampleFormat::Pcm16 => {
            out.reserve(clip.samples.len() * 2);
            for s in &clip.samples {
                let v = (s.clamp(-1.0, 1.0) as f64 * 32767.0).round() as i16;
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn write_wav(path: &Path, clip: &AudioClip, format: SampleFormat) -> Result<()> {
    let file = File::create(path).map_err(|e| SpcError::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&encode_wav(clip, format))
        .and_then(|_| w.flush())
        .map_err(|e| SpcError::io(path, e))
}

/// Description of a decoded file, before downmixing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct WavInfo {
    pub sample_rate: u32,
    pub channels: u16,
    pub bits_per_sample: u16,
    pub float: bool,
}

fn u16_at(b: &[u8], i: usize) -> u16 {
    u16::from_le_bytes([b[i], b[i + 1]])
}

fn u32_at(b: &[u8], i: usize) -> u32 {
    u32::from_le_bytes([b[i], b[i + 1], b[i + 2], b[i + 3]])
}

/// Decodes WAV bytes into a mono clip.
pub fn decode_wav(bytes: &[u8]) -> Result<(AudioClip, WavInfo)> {
    if bytes.len() < 12 || &bytes[0..4] != b"RIFF" || &bytes[8..12] != b"WAVE" {
        return Err(SpcError::format("not a RIFF/WAVE file"));
    }
    let mut pos = 12;
    let mut info: Option<WavInfo> = None;
    let mut data: Option<&[u8]> = None;
    while pos + 8 <= bytes.len() {
        let id = &bytes[pos..pos + 4];
        let size = u32_at(bytes, pos + 4) as usize;
        let body_start = pos + 8;
        let body_end = body_start.saturating_add(size).min(bytes.len());
        let body = &bytes[body_start..body_end];
        match id {
            b"fmt " => {
                if body.len() < 16 {
                    return Err(SpcError::format("fmt chunk too short"));
                }
                let mut code = u16_at(body, 0);
                let channels = u16_at(body, 2);
                let sample_rate = u32_at(body, 4);
                let bits = u16_at(body, 14);
                if code == FORMAT_EXTENSIBLE {
                    if body.len() < 26 {
                        return Err(SpcError::format("extensible fmt chunk too short"));
                    }
                    // first two bytes of the sub-format GUID carry the format code
                    code = u16_at(body, 24);
                }
                let float = match code {
                    FORMAT_PCM => false,
                    FORMAT_FLOAT => true,
                    other => {
                        return Err(SpcError::format(format!("unsupported WAV format code {other}")))
                    }
                };
                let supported = if float {
                    bits == 32 || bits == 64
                } else {
                    matches!(bits, 16 | 24 | 32)
                };
                if !supported {
                    return Err(SpcError::format(format!(
                        "unsupported sample width {bits} bits (float={float})"
                    )));
                }
                if channels == 0 || sample_rate == 0 {
                    return Err(SpcError::format("zero channels or sample rate"));
                }
                info = Some(WavInfo {
                    sample_rate,
                    channels,
                    bits_per_sample: bits,
                    float,
                });
            }
            b"data" => data = Some(body),
            _ => {}
        }
        // chunks are word aligned
        pos = body_start + size + (size & 1);
    }
    let info = info.ok_or_else(|| SpcError::format("missing fmt chunk"))?;
    let data = data.ok_or_else(|| SpcError::format("missing data chunk"))?;

    let width = (info.bits_per_sample / 8) as usize;
    let ch = info.channels as usize;
    let frames = data.len() / (width * ch);
    let decode = |i: usize| -> f32 {
        let b = &data[i * width..(i + 1) * width];
        match (info.float, info.bits_per_sample) {
            (true, 32) => f32::from_le_bytes([b[0], b[1], b[2], b[3]]),
            (true, _) => f64::from_le_bytes(b.try_into().unwrap()) as f32,
            (false, 16) => i16::from_le_bytes([b[0], b[1]]) as f32 / 32768.0,
            (false, 24) => {
                let v = i32::from_le_bytes([0, b[0], b[1], b[2]]) >> 8;
                v as f32 / 8_388_608.0
            }
            (false, _) => (i32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64 / 2_147_483_648.0) as f32,
        }
    };
    let samples = if ch == 1 {
        (0..frames).map(decode).collect()
    } else {
        (0..frames)
            .map(|f| {
                let sum: f32 = (0..ch).map(|c| decode(f * ch + c)).sum();
                sum / ch as f32
            })
            .collect()
    };
    Ok((AudioClip::new(info.sample_rate, samples), info))
}

pub fn read_wav(path: &Path) -> Result<(AudioClip, WavInfo)> {
    let file = File::open(path).map_err(|e| SpcError::io(path, e))?;
    let mut bytes = Vec::new();
    BufReader::new(file)
        .read_to_end(&mut bytes)
        .map_err(|e| SpcError::io(path, e))?;
    decode_wav(&bytes)
}
