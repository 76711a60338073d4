//! Dataset persistence: materializing a manifest to WAV and F0 CSV files,
//! loading entries back, patching clips and ingesting labelled clip sets.

mod ingest;
mod patch;
pub mod resample;

use std::fs;
use std::io::ErrorKind;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::contour::{eval_contour, PitchContour};
use crate::error::{Result, SpcError};
use crate::par::par_map;
use crate::sampler::{DatasetManifest, ManifestEntry};
use crate::synth::{synthesize, AudioClip};
use crate::wav::{decode_wav, encode_wav, read_wav, SampleFormat};

pub use ingest::{ingest_labeled_clips, load_clip, LabeledClip, LabeledClipSet, UnreadableClip};
pub use patch::{patch_clip, DEFAULT_PATCH_SECONDS};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const CHECKSUM_FILE: &str = "checksums.sha256";
/// Present while a generation is in progress or after it failed.
pub const INCOMPLETE_MARKER: &str = ".incomplete";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FileStatus {
    Written,
    Unchanged,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileRecord {
    pub path: String,
    pub sha256: String,
    pub status: FileStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterializeReport {
    pub entries: usize,
    pub wav_files: usize,
    pub csv_files: usize,
    pub written: usize,
    pub unchanged: usize,
    pub files: Vec<FileRecord>,
}

impl MaterializeReport {
    pub fn all_unchanged(&self) -> bool {
        self.written == 0
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Writes `bytes` unless the file already holds exactly them.
fn put_file(path: &Path, bytes: &[u8]) -> Result<FileStatus> {
    match fs::read(path) {
        Ok(old) if old == bytes => return Ok(FileStatus::Unchanged),
        Ok(_) => {}
        Err(e) if e.kind() == ErrorKind::NotFound => {}
        Err(e) => return Err(SpcError::io(path, e)),
    }
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(|e| SpcError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| SpcError::io(path, e))?;
    Ok(FileStatus::Written)
}

/// Contour and audio of one entry, rendered from its parameters.
pub fn render_entry(manifest: &DatasetManifest, entry: &ManifestEntry) -> Result<(PitchContour, AudioClip)> {
    let contour = eval_contour(&entry.params, manifest.config.frame_rate)?;
    let clip = synthesize(&contour, entry.num_partials, manifest.config.sample_rate)?;
    Ok((contour, clip))
}

fn encode_entry(manifest: &DatasetManifest, entry: &ManifestEntry) -> Result<(Vec<u8>, Vec<u8>)> {
    let (contour, clip) = render_entry(manifest, entry)?;
    let wav = encode_wav(&clip, SampleFormat::Float32);
    let mut csv = Vec::new();
    contour
        .write_csv(&mut csv)
        .map_err(|e| SpcError::Internal(format!("csv encoding: {e}")))?;

    let (back, _) = decode_wav(&wav)?;
    let same = back.sample_rate == clip.sample_rate
        && back.samples.len() == clip.samples.len()
        && back.samples.iter().zip(&clip.samples).all(|(a, b)| a.to_bits() == b.to_bits());
    if !same {
        return Err(SpcError::Internal(format!("{}: WAV round trip mismatch", entry.id)));
    }
    let parsed = PitchContour::read_csv(csv.as_slice(), manifest.config.frame_rate)?;
    let close = parsed.len() == contour.len()
        && parsed.values.iter().zip(&contour.values).all(|(a, b)| (a - b).abs() <= 5e-5);
    if !close {
        return Err(SpcError::Internal(format!("{}: F0 CSV round trip mismatch", entry.id)));
    }
    Ok((wav, csv))
}

/// Writes every entry's WAV and F0 CSV below `out_dir`, then the checksum
/// list and finally the manifest. A failed run leaves the marker file behind.
pub fn materialize_dataset(manifest: &DatasetManifest, out_dir: &Path) -> Result<MaterializeReport> {
    manifest.config.validate()?;
    fs::create_dir_all(out_dir).map_err(|e| SpcError::io(out_dir, e))?;
    let marker = out_dir.join(INCOMPLETE_MARKER);
    fs::write(&marker, b"generation in progress\n").map_err(|e| SpcError::io(&marker, e))?;

    let results = par_map(&manifest.entries, |entry| -> Result<[FileRecord; 2]> {
        let (wav, csv) = encode_entry(manifest, entry)?;
        let mut out = Vec::with_capacity(2);
        for (rel, bytes) in [(&entry.wav_path, wav), (&entry.f0_path, csv)] {
            let status = put_file(&out_dir.join(rel), &bytes)?;
            out.push(FileRecord {
                path: rel.clone(),
                sha256: sha256_hex(&bytes),
                status,
            });
        }
        Ok(out.try_into().unwrap())
    });
    let mut files = Vec::with_capacity(2 * manifest.entries.len());
    for r in results {
        files.extend(r?);
    }

    let sums: String = files.iter().map(|f| format!("{}  {}\n", f.sha256, f.path)).collect();
    let mut statuses = vec![put_file(&out_dir.join(CHECKSUM_FILE), sums.as_bytes())?];
    statuses.push(put_file(&out_dir.join(MANIFEST_FILE), manifest.to_json()?.as_bytes())?);
    fs::remove_file(&marker).map_err(|e| SpcError::io(&marker, e))?;

    let written = files.iter().map(|f| f.status).chain(statuses).filter(|s| *s == FileStatus::Written).count();
    Ok(MaterializeReport {
        entries: manifest.entries.len(),
        wav_files: manifest.entries.len(),
        csv_files: manifest.entries.len(),
        written,
        unchanged: files.len() + 2 - written,
        files,
    })
}

/// A materialized dataset directory.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub root: PathBuf,
    pub manifest: DatasetManifest,
}

impl Dataset {
    /// Opens a committed dataset; fails when the manifest is missing or the
    /// incomplete marker is present.
    pub fn open(root: &Path) -> Result<Self> {
        let root = if root.is_file() {
            root.parent().unwrap_or(Path::new(".")).to_path_buf()
        } else {
            root.to_path_buf()
        };
        if root.join(INCOMPLETE_MARKER).exists() {
            return Err(SpcError::format(format!(
                "{} holds an incomplete generation",
                root.display()
            )));
        }
        let path = root.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| SpcError::io(&path, e))?;
        Ok(Dataset {
            manifest: DatasetManifest::from_json(&text)?,
            root,
        })
    }

    pub fn wav_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.wav_path)
    }

    pub fn f0_path(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.f0_path)
    }

    pub fn load_audio(&self, entry: &ManifestEntry) -> Result<AudioClip> {
        Ok(read_wav(&self.wav_path(entry))?.0)
    }

    pub fn load_f0(&self, entry: &ManifestEntry) -> Result<PitchContour> {
        let path = self.f0_path(entry);
        let file = fs::File::open(&path).map_err(|e| SpcError::io(&path, e))?;
        PitchContour::read_csv(std::io::BufReader::new(file), self.manifest.config.frame_rate)
    }

    /// Checks that every referenced file exists and each F0 CSV has the
    /// expected number of rows.
    pub fn verify(&self) -> Result<()> {
        let cfg = &self.manifest.config;
        let rows = crate::contour::frame_count(cfg.duration, cfg.frame_rate);
        for e in &self.manifest.entries {
            let wav = self.wav_path(e);
            if !wav.is_file() {
                return Err(SpcError::format(format!("missing {}", wav.display())));
            }
            let f0 = self.load_f0(e)?;
            if f0.len() != rows {
                return Err(SpcError::format(format!(
                    "{} has {} rows, expected {rows}",
                    e.f0_path,
                    f0.len()
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampler::{build_manifest, SamplerConfig};

    fn small(seed: u64) -> DatasetManifest {
        let cfg = SamplerConfig {
            clips_per_type: 2,
            ..SamplerConfig::with_seed(seed)
        };
        build_manifest(&cfg).unwrap()
    }

    #[test]
    fn smoke_run_and_rerun() {
        let dir = tempfile::tempdir().unwrap();
        let m = small(3);
        let r = materialize_dataset(&m, dir.path()).unwrap();
        assert_eq!((r.entries, r.files.len()), (14, 28));
        assert_eq!(r.written, 30);
        assert!(!dir.path().join(INCOMPLETE_MARKER).exists());
        let ds = Dataset::open(dir.path()).unwrap();
        assert_eq!(ds.manifest, m);
        ds.verify().unwrap();
        let e = &m.entries[5];
        let clip = ds.load_audio(e).unwrap();
        assert_eq!(clip.len(), 48_000);
        let (_, want) = render_entry(&m, e).unwrap();
        assert_eq!(clip, want);

        let again = materialize_dataset(&m, dir.path()).unwrap();
        assert!(again.all_unchanged());
        assert_eq!(again.unchanged, 30);
        assert_eq!(again.files.iter().map(|f| &f.sha256).collect::<Vec<_>>(), r.files.iter().map(|f| &f.sha256).collect::<Vec<_>>());
    }

    #[test]
    fn incomplete_generation_is_detected() {
        let dir = tempfile::tempdir().unwrap();
        materialize_dataset(&small(1), dir.path()).unwrap();
        fs::write(dir.path().join(INCOMPLETE_MARKER), b"").unwrap();
        assert!(Dataset::open(dir.path()).is_err());
    }

    #[test]
    fn digest_matches_known_value() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
