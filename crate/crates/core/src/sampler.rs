//! Contour parameter sampling and the deterministic dataset manifest.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::contour::{eval_contour, ContourParams, ContourType};
use crate::error::{Result, SpcError};
use crate::synth::max_partials;

pub const MANIFEST_FORMAT_VERSION: &str = "spc-manifest/1";

/// Upper bound on joint (f_b, extent) redraws before giving up.
pub const MAX_REJECTION_ATTEMPTS: usize = 1_000_000;

/// Largest modulation extent drawn for non-stable types, in cents.
pub const MAX_EXTENT_CENTS: f64 = 1200.0;

/// Per-clip generator type. ChaCha8 keeps streams stable across platforms.
pub type ClipRng = ChaCha8Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerConfig {
    pub global_seed: u64,
    pub clips_per_type: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub duration: f64,
    pub sample_rate: u32,
    pub frame_rate: f64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            global_seed: 0,
            clips_per_type: 500,
            f_min: 25.0,
            f_max: 10_000.0,
            duration: 1.0,
            sample_rate: 48_000,
            frame_rate: 1000.0,
        }
    }
}

impl SamplerConfig {
    pub fn with_seed(global_seed: u64) -> Self {
        SamplerConfig {
            global_seed,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.f_min > 0.0 && self.f_min < self.f_max && self.f_max.is_finite()) {
            return Err(SpcError::domain(format!(
                "need 0 < f_min < f_max, got f_min={} f_max={}",
                self.f_min, self.f_max
            )));
        }
        if self.clips_per_type == 0 {
            return Err(SpcError::domain("clips_per_type must be at least 1"));
        }
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(SpcError::domain("duration must be positive"));
        }
        if self.sample_rate == 0 || !(self.frame_rate > 0.0) {
            return Err(SpcError::domain("sample and frame rates must be positive"));
        }
        if self.f_max > self.sample_rate as f64 / 2.0 {
            return Err(SpcError::domain("f_max exceeds the Nyquist frequency"));
        }
        Ok(())
    }

    /// Number of training clips per type (400 of 500, 80% otherwise).
    pub fn train_count(&self) -> usize {
        self.clips_per_type * 4 / 5
    }
}

/// Uniform draw on `[lo, hi]`.
pub fn sample_uniform<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(lo <= hi) {
        return Err(SpcError::domain(format!("empty interval [{lo}, {hi}]")));
    }
    if lo == hi {
        return Ok(lo);
    }
    let u: f64 = rng.gen();
    Ok((lo + (hi - lo) * u).clamp(lo, hi))
}

/// Log-uniform draw: `exp(U(ln lo, ln hi))`.
pub fn sample_uniform_log<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> Result<f64> {
    if !(lo > 0.0) {
        return Err(SpcError::domain(format!("log-uniform lower bound must be positive, got {lo}")));
    }
    if !(lo <= hi) {
        return Err(SpcError::domain(format!("empty interval [{lo}, {hi}]")));
    }
    if lo == hi {
        return Ok(lo);
    }
    let v = sample_uniform(lo.ln(), hi.ln(), rng)?;
    Ok(v.exp().clamp(lo, hi))
}

/// Draws one parameter set for `kind` following the per-type ranges.
pub fn sample_params<R: Rng + ?Sized>(
    kind: ContourType,
    cfg: &SamplerConfig,
    rng: &mut R,
) -> Result<ContourParams> {
    let (base_hz, extent_cents) = if kind == ContourType::Stable {
        (sample_uniform_log(cfg.f_min, cfg.f_max, rng)?, 0.0)
    } else {
        let mut attempt = 0;
        loop {
            let fb = sample_uniform_log(cfg.f_min, cfg.f_max, rng)?;
            let df = sample_uniform(0.0, MAX_EXTENT_CENTS, rng)?;
            let r = (df / 1200.0).exp2();
            if fb / r >= cfg.f_min && fb * r <= cfg.f_max {
                break (fb, df);
            }
            attempt += 1;
            if attempt >= MAX_REJECTION_ATTEMPTS {
                return Err(SpcError::Internal(format!(
                    "no admissible (f_b, extent) pair for {kind} after {attempt} draws"
                )));
            }
        }
    };

    let (mod_hz, phase) = match kind {
        ContourType::Stable => (1.0, 0.0),
        ContourType::Alternating => (
            sample_uniform_log(1.0, 50.0, rng)?,
            sample_uniform(0.0, 1.0, rng)?,
        ),
        ContourType::Vibrato | ContourType::Sawtooth | ContourType::Triangle => (
            sample_uniform_log(5.0, 100.0, rng)?,
            sample_uniform(0.0, 1.0, rng)?,
        ),
        ContourType::Glissando => (0.5, -0.25),
        ContourType::Bend => (1.0, -0.25),
    };
    let reversed = kind.is_reversible() && rng.gen::<bool>();

    Ok(ContourParams {
        kind,
        base_hz,
        extent_cents,
        mod_hz,
        phase,
        duration_s: cfg.duration,
        reversed,
    })
}

const MIX_INCREMENT: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of the private generator of clip `(kind, index)`.
pub fn entry_seed(global_seed: u64, kind: ContourType, index: usize) -> u64 {
    let mut h = mix64(global_seed.wrapping_add(MIX_INCREMENT));
    h = mix64(h ^ (kind.label() as u64 + 1).wrapping_mul(MIX_INCREMENT));
    mix64(h ^ (index as u64).wrapping_mul(0xD6E8_FEB8_6659_FD93))
}

pub fn entry_rng(global_seed: u64, kind: ContourType, index: usize) -> ClipRng {
    ClipRng::seed_from_u64(entry_seed(global_seed, kind, index))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "EntryRecord", try_from = "EntryRecord")]
pub struct ManifestEntry {
    pub id: String,
    pub params: ContourParams,
    pub num_partials: usize,
    pub split: Split,
    pub wav_path: String,
    pub f0_path: String,
}

impl ManifestEntry {
    pub fn kind(&self) -> ContourType {
        self.params.kind
    }
}

/// Flat on-disk layout of a manifest entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct EntryRecord {
    id: String,
    #[serde(rename = "type")]
    kind: ContourType,
    f_b_hz: f64,
    delta_f_cents: f64,
    f_m_hz: f64,
    phi: f64,
    duration_s: f64,
    reversed: bool,
    num_partials: usize,
    split: Split,
    wav_path: String,
    f0_path: String,
}

impl From<ManifestEntry> for EntryRecord {
    fn from(e: ManifestEntry) -> Self {
        EntryRecord {
            id: e.id,
            kind: e.params.kind,
            f_b_hz: e.params.base_hz,
            delta_f_cents: e.params.extent_cents,
            f_m_hz: e.params.mod_hz,
            phi: e.params.phase,
            duration_s: e.params.duration_s,
            reversed: e.params.reversed,
            num_partials: e.num_partials,
            split: e.split,
            wav_path: e.wav_path,
            f0_path: e.f0_path,
        }
    }
}

impl TryFrom<EntryRecord> for ManifestEntry {
    type Error = String;

    fn try_from(r: EntryRecord) -> std::result::Result<Self, Self::Error> {
        let params = ContourParams {
            kind: r.kind,
            base_hz: r.f_b_hz,
            extent_cents: r.delta_f_cents,
            mod_hz: r.f_m_hz,
            phase: r.phi,
            duration_s: r.duration_s,
            reversed: r.reversed,
        };
        params.validate().map_err(|e| format!("entry {}: {e}", r.id))?;
        if r.num_partials == 0 {
            return Err(format!("entry {}: num_partials must be >= 1", r.id));
        }
        Ok(ManifestEntry {
            id: r.id,
            params,
            num_partials: r.num_partials,
            split: r.split,
            wav_path: r.wav_path,
            f0_path: r.f0_path,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format_version: String,
    pub config: SamplerConfig,
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(s)?;
        if m.format_version != MANIFEST_FORMAT_VERSION {
            return Err(SpcError::format(format!(
                "unsupported manifest version '{}'",
                m.format_version
            )));
        }
        Ok(m)
    }

    pub fn split(&self, split: Split) -> impl Iterator<Item = &ManifestEntry> {
        self.entries.iter().filter(move |e| e.split == split)
    }

    pub fn entry(&self, id: &str) -> Option<&ManifestEntry> {
        self.entries.iter().find(|e| e.id == id)
    }
}

/// Builds entry `index` of type `kind` from its private generator stream.
pub fn build_entry(cfg: &SamplerConfig, kind: ContourType, index: usize) -> Result<ManifestEntry> {
    let mut rng = entry_rng(cfg.global_seed, kind, index);
    let params = sample_params(kind, cfg, &mut rng)?;
    let contour = eval_contour(&params, cfg.frame_rate)?;
    let f0_max = contour
        .max_voiced()
        .ok_or_else(|| SpcError::Internal("empty contour".into()))?;
    let k_max = max_partials(f0_max, cfg.sample_rate as f64)?;
    let num_partials = rng.gen_range(1..=k_max);
    let id = format!("{}_{}", kind.name(), index);
    Ok(ManifestEntry {
        split: if index < cfg.train_count() {
            Split::Train
        } else {
            Split::Test
        },
        wav_path: format!("audio/{id}.wav"),
        f0_path: format!("f0/{id}.csv"),
        id,
        params,
        num_partials,
    })
}

pub fn build_manifest(cfg: &SamplerConfig) -> Result<DatasetManifest> {
    cfg.validate()?;
    let mut entries = Vec::with_capacity(7 * cfg.clips_per_type);
    for kind in ContourType::ALL {
        for index in 0..cfg.clips_per_type {
            entries.push(build_entry(cfg, kind, index)?);
        }
    }
    Ok(DatasetManifest {
        format_version: MANIFEST_FORMAT_VERSION.to_string(),
        config: cfg.clone(),
        entries,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn degenerate_intervals() {
        let mut rng = ClipRng::seed_from_u64(1);
        assert_eq!(sample_uniform(5.0, 5.0, &mut rng).unwrap(), 5.0);
        assert_eq!(sample_uniform_log(7.0, 7.0, &mut rng).unwrap(), 7.0);
        assert!(sample_uniform(2.0, 1.0, &mut rng).is_err());
        assert!(sample_uniform_log(0.0, 1.0, &mut rng).is_err());
        assert!(sample_uniform_log(-1.0, 1.0, &mut rng).is_err());
    }

    #[test]
    fn uniform_mean() {
        let mut rng = ClipRng::seed_from_u64(11);
        let n = 100_000;
        let mean: f64 = (0..n)
            .map(|_| sample_uniform(0.0, 1.0, &mut rng).unwrap())
            .sum::<f64>()
            / n as f64;
        assert!((mean - 0.5).abs() < 0.01, "mean {mean}");
    }

    #[test]
    fn log_uniform_median_is_geometric_mean() {
        let mut rng = ClipRng::seed_from_u64(12);
        let mut v: Vec<f64> = (0..100_000)
            .map(|_| sample_uniform_log(25.0, 10_000.0, &mut rng).unwrap())
            .collect();
        v.sort_by(f64::total_cmp);
        let median = v[v.len() / 2];
        assert!((median / 500.0 - 1.0).abs() < 0.05, "median {median}");
    }

    #[test]
    fn log_uniform_passes_ks() {
        // Kolmogorov-Smirnov distance of ln(draw)/ln(100) against U(0, 1).
        let mut rng = ClipRng::seed_from_u64(13);
        let n = 100_000;
        let mut u: Vec<f64> = (0..n)
            .map(|_| sample_uniform_log(1.0, 100.0, &mut rng).unwrap().ln() / 100f64.ln())
            .collect();
        u.sort_by(f64::total_cmp);
        let d = u
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                let lo = i as f64 / n as f64;
                let hi = (i + 1) as f64 / n as f64;
                (x - lo).abs().max((hi - x).abs())
            })
            .fold(0.0, f64::max);
        assert!(d < 0.01, "KS statistic {d}");
    }

    #[test]
    fn identical_seeds_identical_streams() {
        let a: Vec<f64> = {
            let mut r = entry_rng(5, ContourType::Vibrato, 3);
            (0..10).map(|_| sample_uniform(0.0, 1.0, &mut r).unwrap()).collect()
        };
        let b: Vec<f64> = {
            let mut r = entry_rng(5, ContourType::Vibrato, 3);
            (0..10).map(|_| sample_uniform(0.0, 1.0, &mut r).unwrap()).collect()
        };
        assert_eq!(a, b);
        assert_ne!(entry_seed(5, ContourType::Vibrato, 3), entry_seed(5, ContourType::Vibrato, 4));
        assert_ne!(entry_seed(5, ContourType::Vibrato, 3), entry_seed(5, ContourType::Triangle, 3));
        assert_ne!(entry_seed(5, ContourType::Vibrato, 3), entry_seed(6, ContourType::Vibrato, 3));
    }

    #[test]
    fn stable_params_fixed_fields() {
        let cfg = SamplerConfig::default();
        let mut rng = ClipRng::seed_from_u64(3);
        for _ in 0..1000 {
            let p = sample_params(ContourType::Stable, &cfg, &mut rng).unwrap();
            assert_eq!(p.extent_cents, 0.0);
            assert_eq!(p.mod_hz, 1.0);
            assert_eq!(p.phase, 0.0);
            assert!(!p.reversed);
            assert!((25.0..=10_000.0).contains(&p.base_hz));
        }
    }

    #[test]
    fn small_manifest_split() {
        let cfg = SamplerConfig {
            clips_per_type: 5,
            ..SamplerConfig::with_seed(1)
        };
        let m = build_manifest(&cfg).unwrap();
        assert_eq!(m.entries.len(), 35);
        assert_eq!(m.split(Split::Train).count(), 28);
        assert_eq!(m.split(Split::Test).count(), 7);
    }

    #[test]
    fn manifest_json_has_exact_entry_fields() {
        let cfg = SamplerConfig {
            clips_per_type: 1,
            ..SamplerConfig::with_seed(2)
        };
        let m = build_manifest(&cfg).unwrap();
        let v: serde_json::Value = serde_json::from_str(&m.to_json().unwrap()).unwrap();
        let entry = v["entries"][0].as_object().unwrap();
        let mut keys: Vec<&str> = entry.keys().map(String::as_str).collect();
        keys.sort_unstable();
        let mut expected = vec![
            "id", "type", "f_b_hz", "delta_f_cents", "f_m_hz", "phi", "duration_s", "reversed",
            "num_partials", "split", "wav_path", "f0_path",
        ];
        expected.sort_unstable();
        assert_eq!(keys, expected);
        assert_eq!(DatasetManifest::from_json(&m.to_json().unwrap()).unwrap(), m);
    }

    #[test]
    fn invalid_config_rejected() {
        let cfg = SamplerConfig {
            f_min: 100.0,
            f_max: 50.0,
            ..Default::default()
        };
        assert!(build_manifest(&cfg).is_err());
        let cfg = SamplerConfig {
            clips_per_type: 0,
            ..Default::default()
        };
        assert!(build_manifest(&cfg).is_err());
    }
}
