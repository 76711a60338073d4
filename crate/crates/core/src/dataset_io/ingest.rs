use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::patch::DEFAULT_PATCH_SECONDS;
use super::resample::resample_clip;
use crate::error::{Result, SpcError};
use crate::sampler::Split;
use crate::synth::{AudioClip, DEFAULT_SAMPLE_RATE};
use crate::wav::read_wav;

/// In a directory-per-class layout without explicit split folders, every
/// `TEST_EVERY`-th file of a class (sorted by name) goes to the test split.
const TEST_EVERY: usize = 5;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledClip {
    pub path: PathBuf,
    pub label: usize,
    pub split: Split,
    /// Rate stored in the file; anything other than 48 kHz is resampled at load.
    pub source_rate: u32,
}

impl LabeledClip {
    pub fn resampled(&self) -> bool {
        self.source_rate != DEFAULT_SAMPLE_RATE
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UnreadableClip {
    pub path: PathBuf,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledClipSet {
    pub clips: Vec<LabeledClip>,
    pub class_names: Vec<String>,
    pub patch_seconds: f64,
    pub unreadable: Vec<UnreadableClip>,
}

impl LabeledClipSet {
    pub fn split(&self, split: Split) -> impl Iterator<Item = &LabeledClip> {
        self.clips.iter().filter(move |c| c.split == split)
    }

    pub fn resampled_count(&self) -> usize {
        self.clips.iter().filter(|c| c.resampled()).count()
    }

    pub fn validate(&self) -> Result<()> {
        if self.clips.is_empty() {
            return Err(SpcError::domain("clip set is empty"));
        }
        if let Some(c) = self.clips.iter().find(|c| c.label >= self.class_names.len()) {
            return Err(SpcError::domain(format!("{} has unknown label {}", c.path.display(), c.label)));
        }
        Ok(())
    }

    /// Evaluation runs need both splits populated.
    pub fn validate_for_evaluation(&self) -> Result<()> {
        self.validate()?;
        for s in [Split::Train, Split::Test] {
            if self.split(s).next().is_none() {
                return Err(SpcError::domain(format!("{s:?} split is empty")));
            }
        }
        Ok(())
    }
}

/// Reads a WAV file as mono at 48 kHz.
pub fn load_clip(path: &Path) -> Result<AudioClip> {
    let (clip, _) = read_wav(path)?;
    resample_clip(&clip, DEFAULT_SAMPLE_RATE)
}

#[derive(Debug, Deserialize)]
struct IndexRow {
    path: String,
    label: String,
    split: String,
}

fn parse_split(s: &str) -> Result<Split> {
    match s.trim().to_ascii_lowercase().as_str() {
        "train" => Ok(Split::Train),
        "test" => Ok(Split::Test),
        other => Err(SpcError::format(format!("unknown split '{other}'"))),
    }
}

fn wav_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| SpcError::io(dir, e))? {
        let p = entry.map_err(|e| SpcError::io(dir, e))?.path();
        let is_wav = p
            .extension()
            .and_then(|e| e.to_str())
            .is_some_and(|e| e.eq_ignore_ascii_case("wav"));
        if p.is_file() && is_wav {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn subdirs(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| SpcError::io(dir, e))? {
        let p = entry.map_err(|e| SpcError::io(dir, e))?.path();
        if p.is_dir() {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn dir_name(p: &Path) -> String {
    p.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default()
}

fn from_index(path: &Path) -> Result<Vec<(PathBuf, String, Split)>> {
    let base = path.parent().unwrap_or(Path::new("."));
    let mut rdr = csv::Reader::from_path(path)?;
    let headers = rdr.headers()?.clone();
    for col in ["path", "label", "split"] {
        if !headers.iter().any(|h| h.trim() == col) {
            return Err(SpcError::format(format!("index is missing column '{col}'")));
        }
    }
    let mut rows = Vec::new();
    for row in rdr.deserialize::<IndexRow>() {
        let row = row?;
        let p = PathBuf::from(row.path.trim());
        let p = if p.is_absolute() { p } else { base.join(p) };
        rows.push((p, row.label.trim().to_string(), parse_split(&row.split)?));
    }
    Ok(rows)
}

fn from_dirs(root: &Path) -> Result<Vec<(PathBuf, String, Split)>> {
    let (train, test) = (root.join("train"), root.join("test"));
    let mut rows = Vec::new();
    if train.is_dir() && test.is_dir() {
        for (dir, split) in [(train, Split::Train), (test, Split::Test)] {
            for class in subdirs(&dir)? {
                for f in wav_files(&class)? {
                    rows.push((f, dir_name(&class), split));
                }
            }
        }
    } else {
        for class in subdirs(root)? {
            for (i, f) in wav_files(&class)?.into_iter().enumerate() {
                let split = if i % TEST_EVERY == TEST_EVERY - 1 {
                    Split::Test
                } else {
                    Split::Train
                };
                rows.push((f, dir_name(&class), split));
            }
        }
    }
    Ok(rows)
}

/// Builds a clip set from an index CSV (`path,label,split`) or a directory
/// with one folder per class, optionally nested under `train/` and `test/`.
/// Files that cannot be decoded are listed in `unreadable`.
pub fn ingest_labeled_clips(source: &Path) -> Result<LabeledClipSet> {
    let rows = if source.is_file() {
        from_index(source)?
    } else if source.is_dir() {
        from_dirs(source)?
    } else {
        return Err(SpcError::io(
            source,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file or directory"),
        ));
    };
    let class_names: Vec<String> = rows
        .iter()
        .map(|r| r.1.clone())
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let mut clips = Vec::new();
    let mut unreadable = Vec::new();
    for (path, label, split) in rows {
        match read_wav(&path) {
            Ok((clip, _)) if !clip.is_empty() => clips.push(LabeledClip {
                label: class_names.binary_search(&label).unwrap(),
                split,
                source_rate: clip.sample_rate,
                path,
            }),
            Ok(_) => unreadable.push(UnreadableClip {
                path,
                reason: "no samples".into(),
            }),
            Err(e) => unreadable.push(UnreadableClip {
                path,
                reason: e.to_string(),
            }),
        }
    }
    for u in &unreadable {
        log::warn!("skipping {}: {}", u.path.display(), u.reason);
    }
    let set = LabeledClipSet {
        clips,
        class_names,
        patch_seconds: DEFAULT_PATCH_SECONDS,
        unreadable,
    };
    set.validate()?;
    Ok(set)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::wav::{write_wav, SampleFormat};

    fn write(path: &Path, rate: u32) {
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        let clip = AudioClip::new(rate, vec![0.25; rate as usize / 10]);
        write_wav(path, &clip, SampleFormat::Float32).unwrap();
    }

    #[test]
    fn directory_per_class() {
        let dir = tempfile::tempdir().unwrap();
        for class in ["dog", "cat"] {
            for i in 0..3 {
                write(&dir.path().join(class).join(format!("{i}.wav")), 48_000);
            }
        }
        fs::write(dir.path().join("cat").join("notes.txt"), "x").unwrap();
        let set = ingest_labeled_clips(dir.path()).unwrap();
        assert_eq!(set.clips.len(), 6);
        assert_eq!(set.class_names, vec!["cat", "dog"]);
        assert_eq!(set.clips.iter().filter(|c| c.label == 1).count(), 3);
        assert_eq!(set.resampled_count(), 0);
    }

    #[test]
    fn index_keeps_splits_and_flags_rates() {
        let dir = tempfile::tempdir().unwrap();
        write(&dir.path().join("a.wav"), 48_000);
        write(&dir.path().join("b.wav"), 16_000);
        fs::write(dir.path().join("bad.wav"), b"not audio").unwrap();
        let index = dir.path().join("index.csv");
        fs::write(&index, "path,label,split\na.wav,x,test\nb.wav,y,train\nbad.wav,y,train\n").unwrap();
        let set = ingest_labeled_clips(&index).unwrap();
        assert_eq!(set.clips.len(), 2);
        assert_eq!(set.clips[0].split, Split::Test);
        assert_eq!(set.clips[1].split, Split::Train);
        assert_eq!(set.unreadable.len(), 1);
        assert!(set.clips[1].resampled());
        set.validate_for_evaluation().unwrap();
        let clip = load_clip(&set.clips[1].path).unwrap();
        assert_eq!((clip.sample_rate, clip.len()), (48_000, 4800));
    }

    #[test]
    fn empty_and_malformed_sets_fail() {
        let dir = tempfile::tempdir().unwrap();
        assert!(ingest_labeled_clips(dir.path()).is_err());
        let index = dir.path().join("index.csv");
        fs::write(&index, "path,label\na.wav,x\n").unwrap();
        assert!(ingest_labeled_clips(&index).is_err());
        fs::write(&index, "path,label,split\na.wav,x,dev\n").unwrap();
        assert!(ingest_labeled_clips(&index).is_err());
        assert!(ingest_labeled_clips(&dir.path().join("missing")).is_err());
    }
}
