use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use spc_core::contour::{eval_contour, ContourParams, ContourType};
use spc_core::dataset_io::{ingest_labeled_clips, materialize_dataset, render_entry, Dataset};
use spc_core::evalkit::{
    confidence_aggregate, conformance_vectors, multitask_loss, ClassProbs, ConformanceVectors,
};
use spc_core::experiment::{
    fitter_eval_from, run_clip_classify, track_entries, tracker_eval_from, TABLE_COLUMNS,
};
use spc_core::features::{
    binary_pitch_image, cqt_bin_freqs, cqt_logmag, mel_logmag, stft_logmag, CQT_BINS_PER_OCTAVE,
};
use spc_core::sampler::{build_manifest, SamplerConfig, Split};
use spc_core::synth::{synthesize, AudioClip};
use spc_core::tracker::{rpa, Tracker, TrackerConfig};
use spc_core::wav::{write_wav, SampleFormat};

fn dataset(dir: &Path, clips_per_type: usize, seed: u64) -> Dataset {
    let cfg = SamplerConfig {
        clips_per_type,
        ..SamplerConfig::with_seed(seed)
    };
    materialize_dataset(&build_manifest(&cfg).unwrap(), dir).unwrap();
    Dataset::open(dir).unwrap()
}

fn params(kind: ContourType, fb: f64, d: f64, fm: f64, phi: f64) -> ContourParams {
    ContourParams {
        kind,
        base_hz: fb,
        extent_cents: d,
        mod_hz: fm,
        phase: phi,
        duration_s: 1.0,
        reversed: false,
    }
}

fn render(p: &ContourParams, partials: usize) -> AudioClip {
    synthesize(&eval_contour(p, 1000.0).unwrap(), partials, 48_000).unwrap()
}

#[test]
fn representations_share_the_time_axis() {
    let p = params(ContourType::Vibrato, 330.0, 100.0, 6.0, 0.1);
    let contour = eval_contour(&p, 1000.0).unwrap();
    let clip = synthesize(&contour, 10, 48_000).unwrap();
    let images = [
        stft_logmag(&clip).unwrap(),
        mel_logmag(&clip).unwrap(),
        cqt_logmag(&clip).unwrap(),
        binary_pitch_image(&contour).unwrap(),
    ];
    for img in &images {
        assert_eq!(img.frames, 1000, "{:?}", img.kind);
        assert_eq!(img.data.len(), img.bins * img.frames);
    }
    assert_eq!(images[2].bin_freqs, images[3].bin_freqs);
    assert_eq!(images[2].bin_freqs, cqt_bin_freqs());
}

fn ridge_share(contour: &[f64], img: &spc_core::features::FeatureImage) -> f64 {
    let peaks = img.argmax_per_frame();
    let near = peaks
        .iter()
        .enumerate()
        .filter(|&(t, &b)| {
            (1..=3).any(|k| {
                let want = CQT_BINS_PER_OCTAVE as f64 * (k as f64 * contour[t] / 25.0).log2();
                (b as f64 - want).abs() <= 3.0
            })
        })
        .count();
    near as f64 / peaks.len() as f64
}

// Largest pitch excursion, in CQT bins, seen inside the fundamental's analysis window.
fn excursion_within_window(contour: &[f64]) -> f64 {
    let q = 1.0 / (2f64.powf(1.0 / CQT_BINS_PER_OCTAVE as f64) - 1.0);
    let bins: Vec<f64> = contour
        .iter()
        .map(|f| CQT_BINS_PER_OCTAVE as f64 * (f / 25.0).log2())
        .collect();
    (0..contour.len())
        .map(|t| {
            let half = ((q / contour[t]) * 1000.0 / 2.0).ceil() as usize;
            let w = &bins[t.saturating_sub(half)..(t + half + 1).min(bins.len())];
            let (lo, hi) = w.iter().fold((f64::MAX, f64::MIN), |(a, b), &x| (a.min(x), b.max(x)));
            hi - lo
        })
        .fold(0.0, f64::max)
}

fn ridge_cases(clips_per_type: usize) -> Vec<(String, f64, f64)> {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path(), clips_per_type, 11);
    let mut out = Vec::new();
    for e in ds.manifest.split(Split::Test) {
        let (lo, hi) = e.params.frequency_bounds();
        if lo < 100.0 || hi > 5000.0 || e.num_partials < 3 {
            continue;
        }
        let (contour, clip) = render_entry(&ds.manifest, e).unwrap();
        let img = cqt_logmag(&clip).unwrap();
        out.push((
            e.id.clone(),
            excursion_within_window(&contour.values),
            ridge_share(&contour.values, &img),
        ));
    }
    out
}

#[test]
fn cqt_ridge_follows_low_harmonics_when_resolvable() {
    let cases = ridge_cases(80);
    let resolvable: Vec<_> = cases.iter().filter(|c| c.1 <= 3.0).collect();
    assert!(resolvable.len() >= 8, "only {} clips qualified", resolvable.len());
    for (id, _, share) in resolvable {
        assert!(*share >= 0.9, "{id}: ridge share {share}");
    }
}

// Fast wide modulation moves the pitch by more than the tolerance inside a single
// constant-Q window, so the full claim does not hold on every clip.
#[test]
#[ignore = "fails for clips whose pitch moves more than 3 bins within one CQT window"]
fn cqt_ridge_follows_low_harmonics_on_every_clip() {
    for (id, excursion, share) in ridge_cases(30) {
        assert!(share >= 0.9, "{id}: ridge share {share}, window excursion {excursion:.1} bins");
    }
}

#[test]
fn committed_dataset_matches_its_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path(), 3, 5);
    ds.verify().unwrap();
    assert_eq!(ds.manifest.entries.len(), 21);
    for e in &ds.manifest.entries {
        assert!(ds.wav_path(e).is_file());
        assert_eq!(ds.load_f0(e).unwrap().len(), 1000);
        assert_eq!(ds.load_audio(e).unwrap().len(), 48_000);
    }
    let text = fs::read_to_string(dir.path().join("checksums.sha256")).unwrap();
    assert_eq!(text.lines().count(), 42);
}

#[test]
fn tracker_strength_is_normalized_and_noise_hurts() {
    let tracker = Tracker::new(TrackerConfig::default(), 48_000).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut clean_sum, mut noisy_sum) = (0.0, 0.0);
    for fb in [110.0, 260.0, 700.0, 1500.0] {
        let p = ContourParams::stable(fb, 1.0);
        let truth = eval_contour(&p, 1000.0).unwrap();
        let clip = render(&p, 5);
        let clean = tracker.track(&clip).unwrap();
        assert!(clean.strength.iter().all(|s| (-1.0 - 1e-9..=1.0 + 1e-9).contains(s)));
        // white noise at -10 dB SNR
        let noise_rms = clip.rms() * 10f64.powf(0.5);
        let noisy: Vec<f32> = clip
            .samples
            .iter()
            .map(|&s| s + (noise_rms * 3f64.sqrt() * rng.gen_range(-1.0..1.0)) as f32)
            .collect();
        let noisy = tracker.track(&AudioClip::new(48_000, noisy)).unwrap();
        clean_sum += rpa(&clean, &truth, 50.0).unwrap();
        noisy_sum += rpa(&noisy, &truth, 50.0).unwrap();
    }
    assert!(noisy_sum <= clean_sum, "noisy {noisy_sum} clean {clean_sum}");
    assert!(clean_sum / 4.0 > 0.95);
}

#[test]
fn experiment_reports_are_consistent_and_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dataset(dir.path(), 5, 21);
    let test: Vec<_> = ds.manifest.split(Split::Test).collect();
    let cfg = TrackerConfig::default();
    let tracked = track_entries(&ds, &test, &cfg).unwrap();

    let report = tracker_eval_from(&ds, &test, &tracked).unwrap();
    assert_eq!(report.rows.len(), test.len());
    let weighted: f64 = report.per_type.values().map(|s| s.mean_rpa * s.clips as f64).sum::<f64>()
        / report.per_type.values().map(|s| s.clips).sum::<usize>() as f64;
    assert!((weighted - report.pooled_mean_rpa).abs() < 1e-12);
    assert!(report.per_type.values().all(|s| (0.0..=1.0).contains(&s.mean_rpa) && !s.smoothed));
    assert!(!report.warnings.is_empty());

    let table = fitter_eval_from(&ds, Some(&tracked)).unwrap();
    let mut csv = Vec::new();
    table.write_csv(&mut csv).unwrap();
    let csv = String::from_utf8(csv).unwrap();
    assert_eq!(csv.lines().next().unwrap(), TABLE_COLUMNS.join(","));
    assert_eq!(csv.lines().count(), 3);
    let oracle = table.row("oracle").unwrap();
    assert!(oracle.accuracy >= 0.9);
    assert!(table.row("tracked").unwrap().accuracy <= oracle.accuracy);

    let again = fitter_eval_from(&ds, Some(&tracked)).unwrap();
    assert_eq!(serde_json::to_string(&again).unwrap(), serde_json::to_string(&table).unwrap());
    let tracked_again = track_entries(&ds, &test, &cfg).unwrap();
    assert_eq!(tracked_again, tracked);
}

fn write_clip(dir: &Path, name: &str, clip: &AudioClip) -> String {
    fs::create_dir_all(dir).unwrap();
    write_wav(&dir.join(name), clip, SampleFormat::Float32).unwrap();
    name.to_string()
}

#[test]
fn resubstitution_separates_stable_from_vibrato() {
    let dir = tempfile::tempdir().unwrap();
    let mut index = String::from("path,label,split\n");
    for i in 0..3 {
        let stable = render(&ContourParams::stable(440.0, 1.0), 4 + i);
        let vib = render(&params(ContourType::Vibrato, 440.0, 80.0 + 20.0 * i as f64, 6.0, 0.1 * i as f64), 4 + i);
        for (label, clip) in [("stable", stable), ("vibrato", vib)] {
            let name = write_clip(dir.path(), &format!("{label}{i}.wav"), &clip);
            index.push_str(&format!("{name},{label},train\n{name},{label},test\n"));
        }
    }
    let path = dir.path().join("index.csv");
    fs::write(&path, index).unwrap();
    let set = ingest_labeled_clips(&path).unwrap();
    let report = run_clip_classify(&set, &TrackerConfig::default()).unwrap();
    assert_eq!(report.summary.metrics["macro_f1"], 1.0);
    for c in &report.clips {
        assert_eq!(c.patches, 1);
        let best = (0..c.pseudo_probs.len())
            .fold(0, |b, i| if c.pseudo_probs[i] > c.pseudo_probs[b] { i } else { b });
        assert_eq!(c.predicted, best);
    }
}

#[test]
fn shuffled_labels_score_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(314);
    let classes = 5;
    let per_class = 12;
    let mut labels: Vec<usize> = (0..classes * per_class).map(|i| i % classes).collect();
    labels.shuffle(&mut rng);
    let mut index = String::from("path,label,split\n");
    let cfg = SamplerConfig::default();
    for (i, label) in labels.iter().enumerate() {
        let kind = ContourType::ALL[i % 7];
        let p = spc_core::sampler::sample_params(kind, &cfg, &mut rng).unwrap();
        let name = write_clip(dir.path(), &format!("clip{i}.wav"), &render(&p, 1));
        let split = if i % 2 == 0 { "train" } else { "test" };
        index.push_str(&format!("{name},c{label},{split}\n"));
    }
    let path = dir.path().join("index.csv");
    fs::write(&path, index).unwrap();
    let set = ingest_labeled_clips(&path).unwrap();
    let report = run_clip_classify(&set, &TrackerConfig::default()).unwrap();
    let f1 = report.summary.metrics["macro_f1"];
    assert!((f1 - 1.0 / classes as f64).abs() <= 0.15, "macro-F1 {f1}");
}

#[test]
fn unseen_test_class_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let clip = render(&ContourParams::stable(200.0, 1.0), 2);
    let a = write_clip(dir.path(), "a.wav", &clip);
    let path = dir.path().join("index.csv");
    fs::write(&path, format!("path,label,split\n{a},x,train\n{a},y,test\n")).unwrap();
    let set = ingest_labeled_clips(&path).unwrap();
    assert!(run_clip_classify(&set, &TrackerConfig::default()).is_err());
}

#[test]
fn shared_conformance_vectors_are_current() {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../conformance/evalkit_vectors.json");
    let stored: ConformanceVectors = serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap();
    assert_eq!(stored, conformance_vectors().unwrap());
    for v in &stored.multitask_loss {
        let p = ClassProbs::new(v.probs.clone()).unwrap();
        let l = multitask_loss(&p, v.label, v.reg_preds, v.reg_targets).unwrap();
        assert!((l - v.loss).abs() <= 1e-9);
    }
    for v in &stored.confidence_aggregate {
        let probs: Vec<ClassProbs> = v.patches.iter().map(|p| ClassProbs::new(p.clone()).unwrap()).collect();
        let (c, beta) = confidence_aggregate(&probs).unwrap();
        assert_eq!(c, v.class);
        assert!(beta.iter().zip(&v.pseudo_probs).all(|(a, b)| (a - b).abs() <= 1e-12));
    }
}
