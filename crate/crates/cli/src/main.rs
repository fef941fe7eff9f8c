//! `hwenh`: mix scenes, enhance utterances, score runs and sweep grids.
//!
//! Exit codes: 0 success, 1 sweep finished with failed rows, 2 invalid input.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use hwenh_core::metrics::{evaluate_run, RunSignals};
use hwenh_core::pipeline::{enhance_forced, FrozenOperator, Mode, PipelineConfig};
use hwenh_core::scene::{mix_scene, Scene, SceneManifest, SegmentationSidecar};
use hwenh_core::signal::MultiChannelWave;
use hwenh_core::sweep::{evaluate_scene, run_sweep, summary_table, write_csv, SweepSpec};
use hwenh_core::wav::{read_wav, write_wav};
use hwenh_core::{sidecar, WavFormat};

#[derive(Parser)]
#[command(name = "hwenh", version, about = "Hotword-anchored multichannel speech enhancement")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the scenes of a manifest to WAV plus segmentation sidecars.
    Mix(MixArgs),
    /// Enhance one utterance and print diagnostics as JSON.
    Enhance(EnhanceArgs),
    /// Score an utterance against its clean talker rendering.
    Evaluate(EvaluateArgs),
    /// Run a sweep grid and write the CSV report.
    Sweep(SweepArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Pcm16,
    Float32,
}

impl From<Format> for WavFormat {
    fn from(f: Format) -> Self {
        match f {
            Format::Pcm16 => WavFormat::Pcm16,
            Format::Float32 => WavFormat::Float32,
        }
    }
}

#[derive(Args)]
struct PipelineFlags {
    /// PipelineConfig JSON; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma_db: Option<f64>,
    /// Noise context length in seconds.
    #[arg(long)]
    context_s: Option<f64>,
}

impl PipelineFlags {
    fn load(&self) -> Result<PipelineConfig, Failure> {
        let mut cfg = match &self.config {
            Some(path) => PipelineConfig::from_json(&read_text(path)?)?,
            None => PipelineConfig::default(),
        };
        if let Some(g) = self.gamma_db {
            cfg.gamma_db = g;
        }
        if let Some(c) = self.context_s {
            cfg.context_length_s = c;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct MixArgs {
    manifest: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Overrides the manifest seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the manifest channel count.
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long, value_enum, default_value = "float32")]
    format: Format,
}

#[derive(Args)]
struct EnhanceArgs {
    input: PathBuf,
    /// Segmentation sidecar JSON.
    seg: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value = "select")]
    mode: String,
    /// Clean talker rendering, required by `--mode oracle`.
    #[arg(long)]
    clean_ref: Option<PathBuf>,
    /// Keep only the first N channels.
    #[arg(long)]
    channels: Option<usize>,
    /// Write the frozen beamformer weights or cleaner taps here.
    #[arg(long)]
    sidecar: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "float32")]
    format: Format,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct EvaluateArgs {
    /// Multichannel mixture WAV.
    input: PathBuf,
    seg: PathBuf,
    #[arg(long)]
    clean_ref: PathBuf,
    /// Score this enhanced WAV instead of running the pipeline.
    #[arg(long)]
    enhanced: Option<PathBuf>,
    #[arg(long, default_value = "select")]
    mode: String,
    #[arg(long)]
    channels: Option<usize>,
    /// Write the report JSON here as well as to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineFlags,
}

#[derive(Args)]
struct SweepArgs {
    spec: PathBuf,
    /// CSV destination; defaults to the sweep file's `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// PipelineConfig JSON replacing the sweep file's `config`.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    gamma_db: Option<f64>,
    /// Replaces the context-length grid with one value.
    #[arg(long)]
    context_s: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    channels: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug)]
struct Failure {
    code: u8,
    message: String,
}

impl Failure {
    fn invalid(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }
}

impl From<hwenh_core::Error> for Failure {
    fn from(e: hwenh_core::Error) -> Self {
        Self::invalid(e.to_string())
    }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn read_input(path: &Path) -> Result<MultiChannelWave, Failure> {
    read_wav(path).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn read_segmentation(
    path: &Path,
    wave: &MultiChannelWave,
) -> Result<hwenh_core::UtteranceSegmentation, Failure> {
    let sidecar = SegmentationSidecar::read(path)
        .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    if sidecar.sample_rate != wave.sample_rate() {
        return Err(hwenh_core::Error::SampleRateMismatch {
            expected: wave.sample_rate(),
            actual: sidecar.sample_rate,
        }
        .into());
    }
    let seg = sidecar.segmentation()?;
    if seg.query_end > wave.len() {
        return Err(hwenh_core::Error::InvalidSegmentation(format!(
            "query_end <= input length ({}) violated",
            wave.len()
        ))
        .into());
    }
    Ok(seg)
}

fn leading_channels(wave: MultiChannelWave, n: Option<usize>) -> Result<MultiChannelWave, Failure> {
    match n {
        None => Ok(wave),
        Some(n) if n == 0 || n > wave.channel_count() => Err(Failure::invalid(format!(
            "--channels {n} with {} input channels",
            wave.channel_count()
        ))),
        Some(n) => Ok(wave.select_channels(&(0..n).collect::<Vec<_>>())?),
    }
}

/// Standard output write that tolerates a closed pipe.
fn emit(text: &str) {
    let _ = io::stdout().lock().write_all(text.as_bytes());
}

fn mode(text: &str) -> Result<Mode, Failure> {
    Ok(text.parse()?)
}

/// Files written so far; removed again unless committed.
struct Staged(Vec<PathBuf>);

impl Staged {
    fn commit(mut self) {
        self.0.clear();
    }
}

impl Drop for Staged {
    fn drop(&mut self) {
        for p in &self.0 {
            let _ = fs::remove_file(p);
        }
    }
}

fn cmd_mix(args: &MixArgs) -> Result<ExitCode, Failure> {
    let mut manifest = SceneManifest::from_json(&read_text(&args.manifest)?)?;
    if let Some(seed) = args.seed {
        manifest.seed = seed;
    }
    if let Some(ch) = args.channels {
        manifest.channels = ch;
    }
    let base = args.manifest.parent().unwrap_or(Path::new("."));
    // render everything before touching the output directory
    let mut scenes = Vec::with_capacity(manifest.scenes.len());
    for i in 0..manifest.scenes.len() {
        let id = manifest.scene_id(i);
        let scene = manifest
            .scene_spec(i, base)
            .and_then(|spec| mix_scene(&spec))
            .map_err(|e| Failure::invalid(format!("scene {id}: {e}")))?;
        scenes.push((id, scene));
    }
    fs::create_dir_all(&args.out)
        .map_err(|e| Failure::invalid(format!("{}: {e}", args.out.display())))?;
    let format = WavFormat::from(args.format);
    let mut staged = Staged(Vec::new());
    for (id, scene) in &scenes {
        let sr = scene.mixture.sample_rate();
        for (suffix, wave) in [
            ("wav", &scene.mixture),
            ("clean.wav", &scene.clean_target),
            ("noise.wav", &scene.noise_only),
        ] {
            let path = args.out.join(format!("{id}.{suffix}"));
            staged.0.push(path.clone());
            write_wav(&path, wave, format)?;
        }
        let path = args.out.join(format!("{id}.seg.json"));
        staged.0.push(path.clone());
        SegmentationSidecar::new(&scene.seg, sr).write(&path)?;
        emit(&format!(
            "{id}: snr {:.2} dB, {} ch, {} samples\n",
            scene.measured_snr_db(),
            scene.mixture.channel_count(),
            scene.mixture.len()
        ));
    }
    staged.commit();
    Ok(ExitCode::SUCCESS)
}

fn write_operator(path: &Path, op: &FrozenOperator) -> Result<(), Failure> {
    let mut buf = Vec::new();
    match op {
        FrozenOperator::Beamformer(w) => sidecar::write_weights(&mut buf, w)?,
        FrozenOperator::Cleaner(bank) => sidecar::write_taps(&mut buf, bank)?,
        FrozenOperator::Passthrough { .. } => {
            return Err(Failure::invalid("passthrough has no sidecar"));
        }
    }
    fs::write(path, buf).map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))
}

fn cmd_enhance(args: &EnhanceArgs) -> Result<ExitCode, Failure> {
    let cfg = args.pipeline.load()?;
    let mode = mode(&args.mode)?;
    let wave = leading_channels(read_input(&args.input)?, args.channels)?;
    let seg = read_segmentation(&args.seg, &wave)?;
    let clean = match &args.clean_ref {
        Some(p) => Some(leading_channels(read_input(p)?, args.channels)?),
        None => None,
    };
    let result = match mode {
        Mode::Select => hwenh_core::enhance_utterance(&wave, &seg, &cfg)?,
        _ => enhance_forced(&wave, &seg, &cfg, mode, clean.as_ref())?,
    };
    if let Some(path) = &args.sidecar {
        write_operator(path, &result.operator)?;
    }
    write_wav(&args.out, &result.enhanced, args.format.into())?;
    emit(&format!("{}\n", result.diagnostics.to_json()));
    Ok(ExitCode::SUCCESS)
}

fn cmd_evaluate(args: &EvaluateArgs) -> Result<ExitCode, Failure> {
    let cfg = args.pipeline.load()?;
    let mixture = leading_channels(read_input(&args.input)?, args.channels)?;
    let clean = leading_channels(read_input(&args.clean_ref)?, args.channels)?;
    if clean.channel_count() != mixture.channel_count() || clean.len() != mixture.len() {
        return Err(Failure::invalid(format!(
            "clean reference is {} ch x {} samples, mixture {} ch x {}",
            clean.channel_count(),
            clean.len(),
            mixture.channel_count(),
            mixture.len()
        )));
    }
    let seg = read_segmentation(&args.seg, &mixture)?;
    let report = match &args.enhanced {
        Some(path) => {
            let enhanced = read_input(path)?;
            let span = seg.utterance();
            let passthrough = FrozenOperator::Passthrough {
                reference: cfg.reference_channel,
            }
            .apply(&mixture, span.clone(), &cfg.frame_params)?;
            let reference = &clean.channel(cfg.reference_channel)[span];
            let report = evaluate_run(&RunSignals {
                enhanced: enhanced.channel(0),
                passthrough: &passthrough,
                clean_reference: reference,
                sample_rate: mixture.sample_rate(),
                max_lag: cfg.frame_params.fft_size,
                context_powers: None,
            })?;
            serde_json::json!({ "report": report })
        }
        None => {
            let noise: Vec<Vec<f64>> = mixture
                .channels()
                .iter()
                .zip(clean.channels())
                .map(|(y, s)| y.iter().zip(s).map(|(a, b)| a - b).collect())
                .collect();
            let scene = Scene {
                noise_only: MultiChannelWave::new(noise, mixture.sample_rate())?,
                mixture,
                seg,
                true_seg: seg,
                clean_target: clean,
                interferer_gain: 1.0,
                reference_channel: cfg.reference_channel,
            };
            let eval = evaluate_scene(&scene, mode(&args.mode)?, &cfg)?;
            serde_json::json!({
                "report": eval.report,
                "decision": eval.enhancement.decision,
                "runtime_ms": eval.runtime_ms,
            })
        }
    };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::invalid(e.to_string()))?;
    if let Some(path) = &args.out {
        fs::write(path, format!("{text}\n"))
            .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
    }
    emit(&format!("{text}\n"));
    Ok(ExitCode::SUCCESS)
}

fn cmd_sweep(args: &SweepArgs) -> Result<ExitCode, Failure> {
    let mut spec = SweepSpec::from_json(&read_text(&args.spec)?)?;
    if let Some(path) = &args.config {
        spec.config = PipelineConfig::from_json(&read_text(path)?)?;
    }
    if let Some(g) = args.gamma_db {
        spec.config.gamma_db = g;
    }
    if let Some(c) = args.context_s {
        spec.context_lengths_s = vec![c];
    }
    if let Some(seed) = args.seed {
        spec.seed = seed;
    }
    if let Some(ch) = args.channels {
        spec.channels = ch;
    }
    if args.workers.is_some() {
        spec.workers = args.workers;
    }
    let base = args.spec.parent().unwrap_or(Path::new("."));
    if let Some(m) = spec.manifest.as_mut() {
        if m.is_relative() {
            *m = base.join(&*m);
        }
    }
    let output = args.out.clone().or_else(|| {
        spec.output
            .as_ref()
            .map(|p| if p.is_relative() { base.join(p) } else { p.clone() })
    });
    spec.validate()?;
    let records = run_sweep(&spec)?;
    let failed = records.iter().filter(|r| r.is_failed()).count();
    let summary = summary_table(&records);
    match &output {
        Some(path) => {
            let file = fs::File::create(path)
                .map_err(|e| Failure::invalid(format!("{}: {e}", path.display())))?;
            write_csv(io::BufWriter::new(file), &records)?;
            emit(&summary);
        }
        None => {
            write_csv(io::stdout().lock(), &records)?;
            eprint!("{summary}");
        }
    }
    if failed > 0 {
        eprintln!("{failed} of {} runs failed", records.len());
        return Ok(ExitCode::from(1));
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Mix(a) => cmd_mix(a),
        Command::Enhance(a) => cmd_enhance(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    let _ = io::stdout().flush();
    match result {
        Ok(code) => code,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
