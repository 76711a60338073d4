use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn spc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spc")).args(args).output().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn generate_writes_a_small_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("ds");
    let o = spc(&["generate", "--seed", "3", "--clips-per-type", "2", "--out", p(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["entries"].as_array().unwrap().len(), 14);
    assert_eq!(fs::read_dir(out.join("audio")).unwrap().count(), 14);
    assert!(!out.join(".incomplete").exists());
}

#[test]
fn invalid_parameters_exit_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("x.wav");
    let o = spc(&["synth", "--type", "vibrato", "--f-b", "-5", "--delta-f", "50", "--f-m", "6", "--out", p(&wav)]);
    assert_eq!(o.status.code(), Some(2));
    let o = spc(&["synth", "--type", "wobble", "--out", p(&wav)]);
    assert_eq!(o.status.code(), Some(2));
    let o = spc(&["generate", "--bogus"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_input_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let o = spc(&["track", p(&dir.path().join("absent.wav")), "--out", p(dir.path())]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn synth_track_classify_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let wav = dir.path().join("tone.wav");
    let f0 = dir.path().join("tone.csv");
    let o = spc(&[
        "synth", "--type", "vibrato", "--f-b", "330", "--delta-f", "80", "--f-m", "6", "--phi", "0.2",
        "--partials", "6", "--out", p(&wav), "--f0-out", p(&f0),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));

    let tracks = dir.path().join("tracks");
    let o = spc(&["track", p(&wav), "--out", p(&tracks)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let tracked = fs::read_to_string(tracks.join("tone.f0.csv")).unwrap();
    assert_eq!(tracked.lines().next().unwrap(), "time_s,f0_hz,voiced,strength");
    assert_eq!(tracked.lines().count(), 1001);

    let o = spc(&["classify", p(&f0)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    let row = &rows[0];
    for key in [
        "id", "predicted_type", "f_b_hz", "f_b_cent", "delta_f_cents", "f_m_hz", "phi", "reversed",
        "residual_cents",
    ] {
        assert!(row.get(key).is_some(), "missing {key}");
    }
    assert_eq!(row["predicted_type"], "vibrato");
    assert!((row["f_b_hz"].as_f64().unwrap() - 330.0).abs() < 1.0);

    let csv_out = dir.path().join("fit.csv");
    let o = spc(&["classify", p(&f0), "--format", "csv", "--out", p(&csv_out)]);
    assert!(o.status.success());
    assert!(fs::read_to_string(csv_out).unwrap().starts_with("id,predicted_type,"));
}

#[test]
fn features_and_export_write_tensors() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    assert!(spc(&["generate", "--seed", "1", "--clips-per-type", "1", "--out", p(&ds)]).status.success());

    let feats = dir.path().join("feats");
    let wav = ds.join("audio/stable_0.wav");
    let o = spc(&["features", "--repr", "mel", p(&wav), "--out", p(&feats)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let (tensor, _) = spc_core::features::read_tensor(&feats.join("stable_0.mel.pft")).unwrap();
    assert_eq!(tensor.dims[1], 1000);

    let export = dir.path().join("export");
    let o = spc(&["export", "--manifest", p(&ds), "--repr", "pitch", "--out", p(&export)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let index = fs::read_to_string(export.join("index.csv")).unwrap();
    assert_eq!(index.lines().next().unwrap(), "id,split,type,label,tensor,f0,f_b_cent,delta_f,f_m");
    assert_eq!(index.lines().count(), 8);
    let (t, _) = spc_core::features::read_tensor(&export.join("glissando_0.pitch.pft")).unwrap();
    assert_eq!(t.dims, vec![224, 224, 3]);
    assert!(t.data.iter().all(|v| (-1.0..=1.0).contains(v)));
}

#[test]
fn eval_refuses_to_overwrite_without_force() {
    let dir = tempfile::tempdir().unwrap();
    let ds = dir.path().join("ds");
    assert!(spc(&["generate", "--seed", "2", "--clips-per-type", "1", "--out", p(&ds)]).status.success());
    let out = dir.path().join("report");
    fs::create_dir_all(&out).unwrap();
    fs::write(out.join("old.txt"), "x").unwrap();
    let base = ["eval", "--manifest", p(&ds), "--out", p(&out), "--no-tracker"];
    let o = spc(&base);
    assert!(!o.status.success());
    let mut forced = base.to_vec();
    forced.push("--force");
    let o = spc(&forced);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let metrics: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(metrics.is_object());
    assert!(out.join("fitter_table.csv").is_file());
}
