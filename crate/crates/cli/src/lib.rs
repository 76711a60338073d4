use std::fs;
use std::io::{self, BufReader, Write};
use std::path::{Path, PathBuf};
use std::ffi::OsString;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use spc_core::contour::{eval_contour, ContourParams, ContourType, PitchContour, DEFAULT_FRAME_RATE};
use spc_core::dataset_io::{self, load_clip, materialize_dataset, Dataset};
use spc_core::evalkit::conformance_vectors;
use spc_core::experiment::{run_experiment, DatasetRef, ExperimentSpec, Pipeline};
use spc_core::features::{self, binary_pitch_image, to_model_input, write_tensor, FeatureImage, FeatureKind, ModelInput, Tensor};
use spc_core::fitter::classify_contour;
use spc_core::sampler::{build_manifest, SamplerConfig};
use spc_core::synth::{max_partials, synthesize, DEFAULT_SAMPLE_RATE};
use spc_core::tracker::{Tracker, TrackerConfig};
use spc_core::wav::{write_wav, SampleFormat};
use spc_core::{Result, SpcError};

#[derive(Parser)]
#[command(name = "spc", version, about = "Synthetic pitch contour toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample a dataset manifest and write its audio and F0 files.
    Generate(GenerateArgs),
    /// Render a single contour to WAV.
    Synth(SynthArgs),
    /// Compute time-frequency images as PFT1 tensors.
    Features(FeaturesArgs),
    /// Estimate F0 contours from WAV files.
    Track(TrackArgs),
    /// Classify F0 contours by fitting every contour family.
    Classify(ClassifyArgs),
    /// Run evaluation experiments and write reports.
    Eval(EvalArgs),
    /// Export model inputs (224x224x3 tensors) for a dataset.
    Export(ExportArgs),
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 500)]
    clips_per_type: usize,
}

#[derive(Args)]
struct SynthArgs {
    /// Render this manifest entry instead of explicit parameters.
    #[arg(long, requires = "manifest")]
    id: Option<String>,
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long = "type", default_value = "stable")]
    kind: String,
    #[arg(long, default_value_t = 440.0)]
    f_b: f64,
    #[arg(long, default_value_t = 0.0)]
    delta_f: f64,
    #[arg(long, default_value_t = 1.0)]
    f_m: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    phi: f64,
    #[arg(long)]
    reversed: bool,
    #[arg(long, default_value_t = 1.0)]
    duration: f64,
    /// Harmonic count; defaults to the most that stay below Nyquist.
    #[arg(long)]
    partials: Option<usize>,
    /// Also write the F0 contour CSV here.
    #[arg(long)]
    f0_out: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum Repr {
    Stft,
    Mel,
    Cqt,
    Pitch,
}

impl From<Repr> for FeatureKind {
    fn from(r: Repr) -> Self {
        match r {
            Repr::Stft => FeatureKind::Stft,
            Repr::Mel => FeatureKind::Mel,
            Repr::Cqt => FeatureKind::Cqt,
            Repr::Pitch => FeatureKind::Pitch,
        }
    }
}

#[derive(Args)]
struct FeaturesArgs {
    #[arg(long, value_enum)]
    repr: Repr,
    /// Process every entry of this dataset.
    #[arg(long)]
    manifest: Option<PathBuf>,
    /// WAV inputs, or F0 CSV inputs for `--repr pitch`.
    inputs: Vec<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct TrackArgs {
    inputs: Vec<PathBuf>,
    /// Output directory for `<stem>.f0.csv` files.
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = 25.0)]
    f_min: f64,
    #[arg(long, default_value_t = 10_000.0)]
    f_max: f64,
    #[arg(long, default_value_t = 0.0, allow_hyphen_values = true)]
    threshold: f64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args)]
struct ClassifyArgs {
    /// F0 CSV files.
    inputs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    format: Format,
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalArgs {
    /// Generated dataset (directory or manifest file).
    #[arg(long, conflicts_with = "clips")]
    manifest: Option<PathBuf>,
    /// Labelled clips: index CSV or directory per class.
    #[arg(long)]
    clips: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
    /// Skip the tracker accuracy curves.
    #[arg(long)]
    no_tracker: bool,
    /// Skip the fitter table.
    #[arg(long)]
    no_fitter: bool,
    #[arg(long, default_value_t = 1.0)]
    patch_len: f64,
    #[arg(long)]
    force: bool,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    manifest: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "cqt")]
    repr: Repr,
    #[arg(long, required_unless_present = "conformance")]
    out: Option<PathBuf>,
    /// Also write the evalkit conformance vectors to this path.
    #[arg(long)]
    conformance: Option<PathBuf>,
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| SpcError::io(dir, e))
}

fn stem(p: &Path) -> String {
    p.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "input".into())
}

fn read_f0(path: &Path) -> Result<PitchContour> {
    let f = fs::File::open(path).map_err(|e| SpcError::io(path, e))?;
    PitchContour::read_csv(BufReader::new(f), DEFAULT_FRAME_RATE)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| SpcError::io(path, e))
}

fn generate(a: GenerateArgs) -> Result<()> {
    let cfg = SamplerConfig {
        clips_per_type: a.clips_per_type,
        ..SamplerConfig::with_seed(a.seed)
    };
    let manifest = build_manifest(&cfg)?;
    let report = materialize_dataset(&manifest, &a.out)?;
    println!(
        "{} entries: {} files written, {} unchanged -> {}",
        report.entries,
        report.written,
        report.unchanged,
        a.out.display()
    );
    Ok(())
}

fn synth(a: SynthArgs) -> Result<()> {
    let (contour, clip) = if let (Some(id), Some(m)) = (&a.id, &a.manifest) {
        let ds = Dataset::open(m)?;
        let entry = ds
            .manifest
            .entry(id)
            .ok_or_else(|| SpcError::domain(format!("no entry '{id}' in manifest")))?;
        dataset_io::render_entry(&ds.manifest, entry)?
    } else {
        let kind: ContourType = a.kind.parse()?;
        let params = ContourParams {
            kind,
            base_hz: a.f_b,
            extent_cents: a.delta_f,
            mod_hz: a.f_m,
            phase: a.phi,
            duration_s: a.duration,
            reversed: a.reversed,
        };
        let contour = eval_contour(&params, DEFAULT_FRAME_RATE)?;
        let top = contour.max_voiced().unwrap_or(a.f_b);
        let partials = match a.partials {
            Some(k) => k,
            None => max_partials(top, DEFAULT_SAMPLE_RATE as f64)?,
        };
        let clip = synthesize(&contour, partials, DEFAULT_SAMPLE_RATE)?;
        (contour, clip)
    };
    write_wav(&a.out, &clip, SampleFormat::Float32)?;
    if let Some(p) = a.f0_out {
        let mut buf = Vec::new();
        contour.write_csv(&mut buf).map_err(|e| SpcError::io(&p, e))?;
        write_bytes(&p, &buf)?;
    }
    Ok(())
}

fn image_tensor(img: &FeatureImage) -> Result<Tensor> {
    Tensor::new(vec![img.bins, img.frames], img.data.clone())
}

/// Inputs of the feature commands as (name, audio path or F0 path).
fn feature_jobs(manifest: Option<&Path>, inputs: &[PathBuf], kind: FeatureKind) -> Result<Vec<(String, PathBuf)>> {
    let mut jobs: Vec<(String, PathBuf)> = inputs.iter().map(|p| (stem(p), p.clone())).collect();
    if let Some(m) = manifest {
        let ds = Dataset::open(m)?;
        for e in &ds.manifest.entries {
            let path = if kind == FeatureKind::Pitch { ds.f0_path(e) } else { ds.wav_path(e) };
            jobs.push((e.id.clone(), path));
        }
    }
    if jobs.is_empty() {
        return Err(SpcError::domain("no inputs given"));
    }
    Ok(jobs)
}

fn feature_image(kind: FeatureKind, path: &Path) -> Result<FeatureImage> {
    let img = if kind == FeatureKind::Pitch {
        binary_pitch_image(&read_f0(path)?)?
    } else {
        features::compute(kind, &load_clip(path)?)?
    };
    for w in &img.warnings {
        log::warn!("{}: {w}", path.display());
    }
    Ok(img)
}

fn features_cmd(a: FeaturesArgs) -> Result<()> {
    let kind = FeatureKind::from(a.repr);
    let jobs = feature_jobs(a.manifest.as_deref(), &a.inputs, kind)?;
    create_dir(&a.out)?;
    for (name, path) in jobs {
        let img = feature_image(kind, &path)?;
        let dest = a.out.join(format!("{name}.{kind}.pft"));
        write_tensor(&dest, &image_tensor(&img)?, &img.sidecar())?;
    }
    Ok(())
}

fn track(a: TrackArgs) -> Result<()> {
    if a.inputs.is_empty() {
        return Err(SpcError::domain("no inputs given"));
    }
    let cfg = TrackerConfig {
        f_min: a.f_min,
        f_max: a.f_max,
        strength_threshold: a.threshold,
        ..TrackerConfig::default()
    };
    let tracker = Tracker::new(cfg, DEFAULT_SAMPLE_RATE)?;
    create_dir(&a.out)?;
    for p in &a.inputs {
        let tracked = tracker.track(&load_clip(p)?)?;
        let dest = a.out.join(format!("{}.f0.csv", stem(p)));
        let mut buf = Vec::new();
        tracked.write_csv(&mut buf).map_err(|e| SpcError::io(&dest, e))?;
        write_bytes(&dest, &buf)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct Classification {
    id: String,
    predicted_type: String,
    f_b_hz: f64,
    f_b_cent: f64,
    delta_f_cents: f64,
    f_m_hz: f64,
    phi: f64,
    reversed: bool,
    residual_cents: f64,
}

fn classify(a: ClassifyArgs) -> Result<()> {
    if a.inputs.is_empty() {
        return Err(SpcError::domain("no inputs given"));
    }
    let mut rows = Vec::new();
    for p in &a.inputs {
        let fit = classify_contour(&read_f0(p)?)?;
        rows.push(Classification {
            id: stem(p),
            predicted_type: fit.kind.name().to_string(),
            f_b_hz: fit.params.base_hz,
            f_b_cent: fit.base_cents(),
            delta_f_cents: fit.params.extent_cents,
            f_m_hz: fit.params.mod_hz,
            phi: fit.params.phase,
            reversed: fit.params.reversed,
            residual_cents: fit.residual_cents,
        });
    }
    let mut buf = Vec::new();
    match a.format {
        Format::Json => {
            serde_json::to_writer_pretty(&mut buf, &rows)?;
            buf.push(b'\n');
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(&mut buf);
            for r in &rows {
                w.serialize(r)?;
            }
            w.flush().map_err(|e| SpcError::io("<csv>", e))?;
        }
    }
    match a.out {
        Some(p) => write_bytes(&p, &buf),
        None => io::stdout().write_all(&buf).map_err(|e| SpcError::io("<stdout>", e)),
    }
}

fn eval(a: EvalArgs) -> Result<()> {
    let (dataset, pipeline) = match (a.manifest, a.clips) {
        (Some(m), None) => (
            DatasetRef::Manifest(m),
            Pipeline {
                tracker_eval: !a.no_tracker,
                fitter_eval: !a.no_fitter,
                clip_classify: false,
            },
        ),
        (None, Some(c)) => (
            DatasetRef::Clips(c),
            Pipeline {
                tracker_eval: false,
                fitter_eval: false,
                clip_classify: true,
            },
        ),
        _ => return Err(SpcError::domain("pass exactly one of --manifest or --clips")),
    };
    let spec = ExperimentSpec {
        name: "eval".into(),
        dataset,
        pipeline,
        tracker: TrackerConfig::default(),
        patch_seconds: a.patch_len,
        out_dir: a.out,
        force: a.force,
    };
    let out = run_experiment(&spec)?;
    println!("{}", serde_json::to_string_pretty(&out.metrics)?);
    Ok(())
}

fn export(a: ExportArgs) -> Result<()> {
    if let Some(p) = &a.conformance {
        if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
            create_dir(dir)?;
        }
        let text = serde_json::to_string_pretty(&conformance_vectors()?)? + "\n";
        write_bytes(p, text.as_bytes())?;
    }
    let (Some(m), Some(out)) = (a.manifest, a.out) else {
        if a.conformance.is_none() {
            return Err(SpcError::domain("nothing to export; pass --manifest and --out, or --conformance"));
        }
        return Ok(());
    };
    let kind = FeatureKind::from(a.repr);
    let ds = Dataset::open(&m)?;
    create_dir(&out)?;
    let mut index = csv::Writer::from_writer(Vec::new());
    index.write_record(["id", "split", "type", "label", "tensor", "f0", "f_b_cent", "delta_f", "f_m"])?;
    for e in &ds.manifest.entries {
        let path = if kind == FeatureKind::Pitch { ds.f0_path(e) } else { ds.wav_path(e) };
        let input: ModelInput = to_model_input(&feature_image(kind, &path)?)?;
        let name = format!("{}.{kind}.pft", e.id);
        let tensor = Tensor::new(ModelInput::SHAPE.to_vec(), input.tensor)?;
        write_tensor(&out.join(&name), &tensor, &input.source)?;
        let targets = spc_core::evalkit::MultiTaskTargets::from_params(&e.params)?;
        index.write_record([
            e.id.clone(),
            format!("{:?}", e.split).to_lowercase(),
            e.kind().name().to_string(),
            targets.type_label.to_string(),
            name,
            ds.f0_path(e).display().to_string(),
            targets.f_b_cent.to_string(),
            targets.delta_f.to_string(),
            targets.f_m.to_string(),
        ])?;
    }
    let bytes = index.into_inner().map_err(|e| SpcError::Internal(e.to_string()))?;
    write_bytes(&out.join("index.csv"), &bytes)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => generate(a),
        Command::Synth(a) => synth(a),
        Command::Features(a) => features_cmd(a),
        Command::Track(a) => track(a),
        Command::Classify(a) => classify(a),
        Command::Eval(a) => eval(a),
        Command::Export(a) => export(a),
    }
}

/// Parses `args` (program name first) and runs the command, returning the process exit code:
/// 0 on success, 2 for invalid arguments or parameters, 1 for I/O and other failures.
pub fn execute<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code() as u8;
        }
    };
    match run(cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                2
            } else {
                1
            }
        }
    }
}
