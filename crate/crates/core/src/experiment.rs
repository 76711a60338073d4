//! End-to-end experiments over a materialized dataset or an ingested clip
//! set: tracker accuracy curves, the fitter classification/regression
//! table and confidence-weighted clip classification.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::contour::{eval_contour, hz_to_cents, ContourParams, ContourType, PitchContour};
use crate::dataset_io::{load_clip, patch_clip, Dataset, LabeledClipSet};
use crate::error::{Result, SpcError};
use crate::evalkit::{self, confidence_aggregate, ClassProbs, ClassificationReport};
use crate::fitter::{classify_contour, ContourFit};
use crate::par::par_map;
use crate::sampler::{ManifestEntry, Split};
use crate::tracker::{rpa, TrackedContour, Tracker, TrackerConfig};

pub const RPA_TOLERANCE_CENTS: f64 = 50.0;
pub const SMOOTHING_POINTS: usize = 75;
pub const TABLE_COLUMNS: [&str; 5] = ["input", "A", "MAE_fb_cent", "MAE_delta_f", "MAE_fm"];

fn ensure_split<'a>(ds: &'a Dataset, split: Split) -> Result<Vec<&'a ManifestEntry>> {
    let entries: Vec<_> = ds.manifest.split(split).collect();
    if entries.is_empty() {
        return Err(SpcError::domain(format!("dataset has no {split:?} entries")));
    }
    Ok(entries)
}

/// Tracks every WAV of `entries`, in order.
pub fn track_entries(ds: &Dataset, entries: &[&ManifestEntry], cfg: &TrackerConfig) -> Result<Vec<TrackedContour>> {
    let tracker = Tracker::new(cfg.clone(), ds.manifest.config.sample_rate)?;
    par_map(entries, |e| tracker.track(&ds.load_audio(e)?))
        .into_iter()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerRow {
    pub id: String,
    #[serde(rename = "type")]
    pub kind: ContourType,
    pub f_b: f64,
    pub f_m: f64,
    pub rpa: f64,
    /// Moving average over clips of the same type sorted by `f_b`.
    pub rpa_smoothed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeSummary {
    pub clips: usize,
    pub mean_rpa: f64,
    pub smoothed: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackerReport {
    pub tolerance_cents: f64,
    pub rows: Vec<TrackerRow>,
    pub per_type: BTreeMap<String, TypeSummary>,
    pub pooled_mean_rpa: f64,
    pub warnings: Vec<String>,
}

impl TrackerReport {
    /// Mean RPA over rows matching `keep`, `None` when no row matches.
    pub fn mean_where(&self, keep: impl Fn(&TrackerRow) -> bool) -> Option<f64> {
        let v: Vec<f64> = self.rows.iter().filter(|r| keep(r)).map(|r| r.rpa).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["f_b", "type", "rpa", "rpa_smoothed", "id"])?;
        for r in &self.rows {
            out.write_record([
                format!("{:.4}", r.f_b),
                r.kind.name().to_string(),
                format!("{:.6}", r.rpa),
                format!("{:.6}", r.rpa_smoothed),
                r.id.clone(),
            ])?;
        }
        out.flush().map_err(|e| SpcError::io("<csv>", e))
    }
}

/// Hann-weighted moving average with weights renormalized at the edges.
pub fn hann_moving_average(values: &[f64], points: usize) -> Vec<f64> {
    let half = points / 2;
    // endpoints of the window are non-zero so all `points` taps contribute
    let w: Vec<f64> = (0..points)
        .map(|k| (std::f64::consts::PI * (k + 1) as f64 / (points + 1) as f64).sin().powi(2))
        .collect();
    (0..values.len())
        .map(|i| {
            let (mut acc, mut norm) = (0.0, 0.0);
            for (k, wk) in w.iter().enumerate() {
                let j = i as i64 + k as i64 - half as i64;
                if j >= 0 && (j as usize) < values.len() {
                    acc += wk * values[j as usize];
                    norm += wk;
                }
            }
            acc / norm
        })
        .collect()
}

fn tracker_report(entries: &[&ManifestEntry], rpas: &[f64]) -> TrackerReport {
    let mut rows = Vec::new();
    let mut per_type = BTreeMap::new();
    let mut warnings = Vec::new();
    for kind in ContourType::ALL {
        let mut idx: Vec<usize> = (0..entries.len()).filter(|&i| entries[i].kind() == kind).collect();
        if idx.is_empty() {
            let msg = format!("no {kind} clips; type skipped");
            log::warn!("{msg}");
            warnings.push(msg);
            continue;
        }
        idx.sort_by(|&a, &b| entries[a].params.base_hz.total_cmp(&entries[b].params.base_hz));
        let values: Vec<f64> = idx.iter().map(|&i| rpas[i]).collect();
        let smoothed = values.len() >= SMOOTHING_POINTS;
        let curve = if smoothed {
            hann_moving_average(&values, SMOOTHING_POINTS)
        } else {
            let msg = format!("only {} {kind} clips; curve left unsmoothed", values.len());
            log::warn!("{msg}");
            warnings.push(msg);
            values.clone()
        };
        for (&i, s) in idx.iter().zip(curve) {
            let e = entries[i];
            rows.push(TrackerRow {
                id: e.id.clone(),
                kind,
                f_b: e.params.base_hz,
                f_m: e.params.mod_hz,
                rpa: rpas[i],
                rpa_smoothed: s,
            });
        }
        per_type.insert(
            kind.name().to_string(),
            TypeSummary {
                clips: values.len(),
                mean_rpa: values.iter().sum::<f64>() / values.len() as f64,
                smoothed,
            },
        );
    }
    let pooled_mean_rpa = rpas.iter().sum::<f64>() / rpas.len().max(1) as f64;
    TrackerReport {
        tolerance_cents: RPA_TOLERANCE_CENTS,
        rows,
        per_type,
        pooled_mean_rpa,
        warnings,
    }
}

/// RPA of tracked audio against the stored F0 annotations.
pub fn tracker_eval_from(ds: &Dataset, entries: &[&ManifestEntry], tracked: &[TrackedContour]) -> Result<TrackerReport> {
    let rpas = entries
        .iter()
        .zip(tracked)
        .map(|(e, t)| rpa(t, &ds.load_f0(e)?, RPA_TOLERANCE_CENTS))
        .collect::<Result<Vec<_>>>()?;
    Ok(tracker_report(entries, &rpas))
}

pub fn run_tracker_eval(ds: &Dataset, cfg: &TrackerConfig, split: Split) -> Result<TrackerReport> {
    let entries = ensure_split(ds, split)?;
    let tracked = track_entries(ds, &entries, cfg)?;
    tracker_eval_from(ds, &entries, &tracked)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableRow {
    pub input: String,
    #[serde(rename = "A")]
    pub accuracy: f64,
    #[serde(rename = "MAE_fb_cent")]
    pub mae_fb_cent: f64,
    #[serde(rename = "MAE_delta_f")]
    pub mae_delta_f: f64,
    #[serde(rename = "MAE_fm")]
    pub mae_fm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitterReport {
    pub rows: Vec<TableRow>,
    /// Contours too sparse to fit, scored as a flat contour.
    pub fallbacks: BTreeMap<String, usize>,
    pub confusion: BTreeMap<String, evalkit::ConfusionMatrix>,
}

impl FitterReport {
    pub fn row(&self, input: &str) -> Option<&TableRow> {
        self.rows.iter().find(|r| r.input == input)
    }

    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(TABLE_COLUMNS)?;
        for r in &self.rows {
            out.write_record([
                r.input.clone(),
                format!("{:.4}", r.accuracy),
                format!("{:.4}", r.mae_fb_cent),
                format!("{:.4}", r.mae_delta_f),
                format!("{:.4}", r.mae_fm),
            ])?;
        }
        out.flush().map_err(|e| SpcError::io("<csv>", e))
    }
}

/// Stand-in prediction for contours the fitter rejects: a flat contour at
/// the geometric mean of the voiced frames (25 Hz when none are voiced).
fn flat_fallback(c: &PitchContour, duration: f64) -> ContourParams {
    let logs: Vec<f64> = (0..c.len())
        .filter(|&n| c.is_voiced(n) && c.values[n] > 0.0)
        .map(|n| c.values[n].ln())
        .collect();
    let base = if logs.is_empty() {
        crate::contour::CENTS_REFERENCE_HZ
    } else {
        (logs.iter().sum::<f64>() / logs.len() as f64).exp()
    };
    ContourParams::stable(base, duration)
}

/// Fits each contour, falling back to a flat prediction on fit errors.
/// Returns the predicted parameters and the number of fallbacks.
pub fn fit_contours(contours: &[PitchContour]) -> (Vec<ContourParams>, usize) {
    let fits: Vec<Result<ContourFit>> = par_map(contours, classify_contour);
    let mut fallbacks = 0;
    let params = fits
        .into_iter()
        .zip(contours)
        .map(|(f, c)| match f {
            Ok(f) => f.params,
            Err(e) => {
                log::warn!("fit failed ({e}); using flat fallback");
                fallbacks += 1;
                flat_fallback(c, c.duration_s())
            }
        })
        .collect();
    (params, fallbacks)
}

fn table_row(input: &str, truth: &[&ContourParams], pred: &[ContourParams]) -> Result<(TableRow, evalkit::ConfusionMatrix)> {
    let labels: Vec<usize> = truth.iter().map(|p| p.kind.label()).collect();
    let preds: Vec<usize> = pred.iter().map(|p| p.kind.label()).collect();
    let cents = |ps: &mut dyn Iterator<Item = &ContourParams>| -> Result<Vec<f64>> {
        ps.map(|p| hz_to_cents(p.base_hz)).collect()
    };
    let fb_true = cents(&mut truth.iter().copied())?;
    let fb_pred = cents(&mut pred.iter())?;
    let col = |ps: &[ContourParams], f: fn(&ContourParams) -> f64| ps.iter().map(f).collect::<Vec<_>>();
    let truth_owned: Vec<ContourParams> = truth.iter().map(|p| **p).collect();
    Ok((
        TableRow {
            input: input.to_string(),
            accuracy: evalkit::accuracy(&preds, &labels)?,
            mae_fb_cent: evalkit::mae(&fb_pred, &fb_true)?,
            mae_delta_f: evalkit::mae(&col(pred, |p| p.extent_cents), &col(&truth_owned, |p| p.extent_cents))?,
            mae_fm: evalkit::mae(&col(pred, |p| p.mod_hz), &col(&truth_owned, |p| p.mod_hz))?,
        },
        evalkit::ConfusionMatrix::new(&preds, &labels, ContourType::ALL.len())?,
    ))
}

/// Oracle contours are the model evaluated from the manifest parameters at
/// full precision.
pub fn oracle_contours(ds: &Dataset, entries: &[&ManifestEntry]) -> Result<Vec<PitchContour>> {
    entries
        .iter()
        .map(|e| eval_contour(&e.params, ds.manifest.config.frame_rate))
        .collect()
}

/// Table over the test split; the tracked row is present when tracked
/// contours (aligned with the test entries) are given.
pub fn fitter_eval_from(ds: &Dataset, tracked: Option<&[TrackedContour]>) -> Result<FitterReport> {
    let entries = ensure_split(ds, Split::Test)?;
    let truth: Vec<&ContourParams> = entries.iter().map(|e| &e.params).collect();
    let mut inputs = vec![("oracle", oracle_contours(ds, &entries)?)];
    if let Some(t) = tracked {
        if t.len() != entries.len() {
            return Err(SpcError::domain(format!(
                "{} tracked contours for {} test entries",
                t.len(),
                entries.len()
            )));
        }
        inputs.push(("tracked", t.iter().map(TrackedContour::to_contour).collect()));
    }
    let mut report = FitterReport {
        rows: Vec::new(),
        fallbacks: BTreeMap::new(),
        confusion: BTreeMap::new(),
    };
    for (name, contours) in inputs {
        let (pred, fallbacks) = fit_contours(&contours);
        let (row, cm) = table_row(name, &truth, &pred)?;
        report.rows.push(row);
        report.fallbacks.insert(name.to_string(), fallbacks);
        report.confusion.insert(name.to_string(), cm);
    }
    Ok(report)
}

pub fn run_fitter_eval(ds: &Dataset, tracker: Option<&TrackerConfig>) -> Result<FitterReport> {
    let tracked = match tracker {
        Some(cfg) => Some(track_entries(ds, &ensure_split(ds, Split::Test)?, cfg)?),
        None => None,
    };
    fitter_eval_from(ds, tracked.as_deref())
}

const DESCRIPTOR_LEN: usize = ContourType::ALL.len() + 7;

/// Fit-derived description of one patch: predicted type one-hot, base in
/// cents, extent, modulation rate, residual, strength mean and spread, and
/// the voiced fraction.
pub fn patch_descriptor(tracked: &TrackedContour) -> [f64; DESCRIPTOR_LEN] {
    let mut d = [0.0; DESCRIPTOR_LEN];
    let k = ContourType::ALL.len();
    if let Ok(fit) = classify_contour(&tracked.to_contour()) {
        d[fit.kind.label()] = 1.0;
        d[k] = fit.base_cents();
        d[k + 1] = fit.params.extent_cents;
        d[k + 2] = fit.params.mod_hz;
        d[k + 3] = fit.residual_cents;
    }
    let n = tracked.strength.len().max(1) as f64;
    let mean = tracked.strength.iter().sum::<f64>() / n;
    let var = tracked.strength.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / n;
    d[k + 4] = mean;
    d[k + 5] = var.sqrt();
    d[k + 6] = tracked.voiced.iter().filter(|&&v| v).count() as f64 / n;
    d
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipPrediction {
    pub path: PathBuf,
    pub label: usize,
    pub predicted: usize,
    pub patches: usize,
    pub pseudo_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClipClassifyReport {
    pub class_names: Vec<String>,
    pub summary: ClassificationReport,
    pub clips: Vec<ClipPrediction>,
}

/// Nearest-centroid model over standardized descriptors.
struct CentroidModel {
    mean: Vec<f64>,
    scale: Vec<f64>,
    centroids: Vec<Vec<f64>>,
}

impl CentroidModel {
    fn fit(descriptors: &[Vec<f64>], labels: &[usize], classes: usize) -> Self {
        let dim = descriptors[0].len();
        let n = descriptors.len() as f64;
        let mean: Vec<f64> = (0..dim).map(|j| descriptors.iter().map(|d| d[j]).sum::<f64>() / n).collect();
        let scale: Vec<f64> = (0..dim)
            .map(|j| {
                let v = descriptors.iter().map(|d| (d[j] - mean[j]).powi(2)).sum::<f64>() / n;
                if v > 1e-24 {
                    v.sqrt()
                } else {
                    1.0
                }
            })
            .collect();
        let mut centroids = vec![vec![0.0; dim]; classes];
        let mut counts = vec![0usize; classes];
        for (d, &l) in descriptors.iter().zip(labels) {
            counts[l] += 1;
            for j in 0..dim {
                centroids[l][j] += (d[j] - mean[j]) / scale[j];
            }
        }
        for (c, &n) in centroids.iter_mut().zip(&counts) {
            c.iter_mut().for_each(|v| *v /= n.max(1) as f64);
        }
        CentroidModel {
            mean,
            scale,
            centroids,
        }
    }

    fn probs(&self, d: &[f64]) -> Result<ClassProbs> {
        let z: Vec<f64> = d.iter().enumerate().map(|(j, v)| (v - self.mean[j]) / self.scale[j]).collect();
        let scores: Vec<f64> = self
            .centroids
            .iter()
            .map(|c| -c.iter().zip(&z).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt())
            .collect();
        ClassProbs::softmax(&scores)
    }
}

type ClipDescriptors = Vec<Vec<f64>>;

fn describe_clips(set: &LabeledClipSet, split: Split, cfg: &TrackerConfig) -> Result<Vec<(usize, PathBuf, ClipDescriptors)>> {
    let tracker = Tracker::new(cfg.clone(), crate::synth::DEFAULT_SAMPLE_RATE)?;
    let clips: Vec<_> = set.split(split).collect();
    let mut jobs = Vec::new();
    for (ci, c) in clips.iter().enumerate() {
        for patch in patch_clip(&load_clip(&c.path)?, set.patch_seconds)? {
            jobs.push((ci, patch));
        }
    }
    let descriptors = par_map(&jobs, |(_, p)| tracker.track(p).map(|t| patch_descriptor(&t).to_vec()));
    let mut out: Vec<(usize, PathBuf, ClipDescriptors)> =
        clips.iter().map(|c| (c.label, c.path.clone(), Vec::new())).collect();
    for ((ci, _), d) in jobs.iter().zip(descriptors) {
        out[*ci].2.push(d?);
    }
    Ok(out)
}

/// Patch-level nearest-centroid classification aggregated to clips with
/// confidence weighting.
pub fn run_clip_classify(set: &LabeledClipSet, cfg: &TrackerConfig) -> Result<ClipClassifyReport> {
    set.validate_for_evaluation()?;
    let classes = set.class_names.len();
    let train = describe_clips(set, Split::Train, cfg)?;
    let mut seen = vec![false; classes];
    train.iter().for_each(|(l, _, _)| seen[*l] = true);
    if let Some(c) = set.split(Split::Test).find(|c| !seen[c.label]) {
        return Err(SpcError::domain(format!(
            "class '{}' appears in test but not in train",
            set.class_names[c.label]
        )));
    }
    let (patch_desc, patch_labels): (Vec<Vec<f64>>, Vec<usize>) = train
        .iter()
        .flat_map(|(l, _, ds)| ds.iter().map(move |d| (d.clone(), *l)))
        .unzip();
    let model = CentroidModel::fit(&patch_desc, &patch_labels, classes);

    let mut clips = Vec::new();
    for (label, path, ds) in describe_clips(set, Split::Test, cfg)? {
        let probs = ds.iter().map(|d| model.probs(d)).collect::<Result<Vec<_>>>()?;
        let (predicted, pseudo_probs) = confidence_aggregate(&probs)?;
        clips.push(ClipPrediction {
            path,
            label,
            predicted,
            patches: probs.len(),
            pseudo_probs,
        });
    }
    let preds: Vec<usize> = clips.iter().map(|c| c.predicted).collect();
    let labels: Vec<usize> = clips.iter().map(|c| c.label).collect();
    Ok(ClipClassifyReport {
        class_names: set.class_names.clone(),
        summary: ClassificationReport::new(&preds, &labels, &set.class_names)?,
        clips,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Pipeline {
    pub tracker_eval: bool,
    pub fitter_eval: bool,
    pub clip_classify: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum DatasetRef {
    Manifest(PathBuf),
    Clips(PathBuf),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: String,
    pub dataset: DatasetRef,
    pub pipeline: Pipeline,
    pub tracker: TrackerConfig,
    /// Patch length used when classifying labelled clips.
    pub patch_seconds: f64,
    pub out_dir: PathBuf,
    pub force: bool,
}

/// Paths written by [`run_experiment`], relative to the output directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ExperimentOutputs {
    pub files: Vec<String>,
    pub metrics: BTreeMap<String, f64>,
}

fn write_json<T: Serialize>(dir: &Path, name: &str, value: &T, out: &mut ExperimentOutputs) -> Result<()> {
    let path = dir.join(name);
    let text = serde_json::to_string_pretty(value)? + "\n";
    fs::write(&path, text).map_err(|e| SpcError::io(&path, e))?;
    out.files.push(name.to_string());
    Ok(())
}

fn write_with(dir: &Path, name: &str, out: &mut ExperimentOutputs, f: impl FnOnce(&mut Vec<u8>) -> Result<()>) -> Result<()> {
    let mut buf = Vec::new();
    f(&mut buf)?;
    let path = dir.join(name);
    fs::write(&path, buf).map_err(|e| SpcError::io(&path, e))?;
    out.files.push(name.to_string());
    Ok(())
}

fn prepare_out_dir(dir: &Path, force: bool) -> Result<()> {
    if dir.exists() {
        let occupied = fs::read_dir(dir).map_err(|e| SpcError::io(dir, e))?.next().is_some();
        if occupied && !force {
            return Err(SpcError::domain(format!(
                "{} is not empty; pass --force to overwrite",
                dir.display()
            )));
        }
    }
    fs::create_dir_all(dir).map_err(|e| SpcError::io(dir, e))
}

/// Runs the selected pipelines and writes their reports under `out_dir`.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentOutputs> {
    spec.tracker.validate()?;
    let mut out = ExperimentOutputs::default();
    let dir = &spec.out_dir;
    match &spec.dataset {
        DatasetRef::Manifest(path) => {
            if spec.pipeline.clip_classify {
                return Err(SpcError::domain("clip classification needs a labelled clip set"));
            }
            let ds = Dataset::open(path)?;
            prepare_out_dir(dir, spec.force)?;
            let test = ensure_split(&ds, Split::Test)?;
            let tracked = if spec.pipeline.tracker_eval || spec.pipeline.fitter_eval {
                Some(track_entries(&ds, &test, &spec.tracker)?)
            } else {
                None
            };
            if spec.pipeline.tracker_eval {
                let r = tracker_eval_from(&ds, &test, tracked.as_deref().unwrap())?;
                out.metrics.insert("tracker.pooled_mean_rpa".into(), r.pooled_mean_rpa);
                for (k, s) in &r.per_type {
                    out.metrics.insert(format!("tracker.{k}.mean_rpa"), s.mean_rpa);
                }
                write_with(dir, "tracker_curve.csv", &mut out, |b| r.write_csv(b))?;
                write_json(dir, "tracker_report.json", &r, &mut out)?;
            }
            if spec.pipeline.fitter_eval {
                let r = fitter_eval_from(&ds, tracked.as_deref())?;
                for row in &r.rows {
                    out.metrics.insert(format!("fitter.{}.A", row.input), row.accuracy);
                    out.metrics.insert(format!("fitter.{}.MAE_fb_cent", row.input), row.mae_fb_cent);
                    out.metrics.insert(format!("fitter.{}.MAE_delta_f", row.input), row.mae_delta_f);
                    out.metrics.insert(format!("fitter.{}.MAE_fm", row.input), row.mae_fm);
                }
                write_with(dir, "fitter_table.csv", &mut out, |b| r.write_csv(b))?;
                write_json(dir, "fitter_report.json", &r, &mut out)?;
                let names: Vec<String> = ContourType::ALL.iter().map(|k| k.name().to_string()).collect();
                for (input, cm) in &r.confusion {
                    write_with(dir, &format!("fitter_confusion_{input}.csv"), &mut out, |b| cm.write_csv(&names, b))?;
                }
            }
        }
        DatasetRef::Clips(path) => {
            if spec.pipeline.tracker_eval || spec.pipeline.fitter_eval {
                return Err(SpcError::domain("tracker and fitter evaluation need a generated dataset"));
            }
            let mut set = crate::dataset_io::ingest_labeled_clips(path)?;
            set.patch_seconds = spec.patch_seconds;
            prepare_out_dir(dir, spec.force)?;
            if spec.pipeline.clip_classify {
                let r = run_clip_classify(&set, &spec.tracker)?;
                for (k, v) in &r.summary.metrics {
                    out.metrics.insert(format!("clips.{k}"), *v);
                }
                write_json(dir, "clip_report.json", &r, &mut out)?;
                write_with(dir, "clip_confusion.csv", &mut out, |b| {
                    r.summary.confusion.write_csv(&r.class_names, b)
                })?;
            }
        }
    }
    let metrics = out.metrics.clone();
    write_json(dir, "metrics.json", &metrics, &mut out)?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_properties() {
        let flat = hann_moving_average(&[0.7; 100], 75);
        assert!(flat.iter().all(|v| (v - 0.7).abs() < 1e-12));
        let ramp: Vec<f64> = (0..200).map(|i| i as f64).collect();
        let s = hann_moving_average(&ramp, 75);
        for i in 40..160 {
            assert!((s[i] - i as f64).abs() < 1e-9);
        }
        assert_eq!(hann_moving_average(&[1.0, 2.0], 1), vec![1.0, 2.0]);
    }

    #[test]
    fn fallback_uses_geometric_mean() {
        let c = PitchContour::voiced(1000.0, vec![100.0, 400.0]);
        let p = flat_fallback(&c, 1.0);
        assert!((p.base_hz - 200.0).abs() < 1e-9);
        assert_eq!(p.kind, ContourType::Stable);
    }

    #[test]
    fn centroid_probabilities() {
        let d = vec![vec![0.0, 0.0], vec![0.0, 0.2], vec![10.0, 0.0], vec![10.0, 0.2]];
        let m = CentroidModel::fit(&d, &[0, 0, 1, 1], 2);
        assert_eq!(m.probs(&[0.0, 0.1]).unwrap().argmax(), 0);
        assert_eq!(m.probs(&[9.0, 0.1]).unwrap().argmax(), 1);
    }
}
