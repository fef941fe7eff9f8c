//! Grid sweeps: scene generation, per-algorithm enhancement and metric
//! reports written as CSV.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{evaluate_run, MetricReport, RunSignals};
use crate::pipeline::{
    effective_segmentation, enhance_forced, enhance_utterance, Algorithm, Enhancement, Mode,
    PipelineConfig,
};
use crate::scene::{
    exact_fir_scene, mix_scene, synthetic_scene, ExactFirParams, NoiseKind, Scene, SceneManifest,
    SyntheticSceneParams,
};

/// Bumped whenever CSV columns change meaning or order.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const CSV_HEADER: [&str; 15] = [
    "scene_id",
    "snr_db",
    "algorithm",
    "si_sdr_db",
    "si_sdr_improvement_db",
    "seg_snr_db",
    "noise_reduction_db",
    "decision",
    "runtime_ms",
    "status",
    "context_s",
    "noise",
    "desired_in_context",
    "estimated_snr_db",
    "schema_version",
];

/// Metrics for one enhancement run of one scene.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub report: MetricReport,
    pub enhancement: Enhancement,
    /// Wall time of the enhancement call alone.
    pub runtime_ms: f64,
}

fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

/// Enhances `scene` with `mode` and scores it against the talker rendering.
pub fn evaluate_scene(scene: &Scene, mode: Mode, config: &PipelineConfig) -> Result<Evaluation> {
    let start = Instant::now();
    let enhancement = match mode {
        Mode::Select => enhance_utterance(&scene.mixture, &scene.seg, config)?,
        _ => enhance_forced(
            &scene.mixture,
            &scene.seg,
            config,
            mode,
            Some(&scene.clean_target),
        )?,
    };
    let runtime_ms = start.elapsed().as_secs_f64() * 1e3;
    let params = config.frame_params;
    let span = scene.seg.utterance();
    let passthrough = crate::pipeline::FrozenOperator::Passthrough {
        reference: config.reference_channel,
    }
    .apply(&scene.mixture, span.clone(), &params)?;
    let reference = &scene.clean_target.channel(config.reference_channel)[span];

    let eff = effective_segmentation(&scene.seg, config.context_length_s, scene.mixture.sample_rate());
    let context_powers = if eff.context().is_empty() {
        None
    } else {
        let input = mean_square(&scene.mixture.channel(config.reference_channel)[eff.context()]);
        let output = enhancement
            .operator
            .apply(&scene.mixture, eff.context(), &params)?;
        Some((input, mean_square(&output)))
    };
    let report = evaluate_run(&RunSignals {
        enhanced: enhancement.enhanced.channel(0),
        passthrough: &passthrough,
        clean_reference: reference,
        sample_rate: scene.mixture.sample_rate(),
        max_lag: params.fft_size,
        context_powers,
    })?;
    Ok(Evaluation {
        report,
        enhancement,
        runtime_ms,
    })
}

/// Scene family produced by the generator grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    /// Talker and point interferer rendered on the preset far-field array.
    FarField,
    /// Two channels whose interference is related by an exact 3-tap FIR.
    ExactFir,
}

/// A single value or a list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn to_vec(&self) -> Vec<T> {
        match self {
            Self::One(v) => vec![v.clone()],
            Self::Many(v) => v.clone(),
        }
    }
}

/// Sweep description. `snr_db` entries may be `null` for a noise-free run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SweepSpec {
    pub snr_db: Vec<Option<f64>>,
    pub context_lengths_s: Vec<f64>,
    pub noise: NoiseKind,
    pub desired_in_context: OneOrMany<bool>,
    pub channels: usize,
    pub algorithms: Vec<Mode>,
    pub scenario: Scenario,
    /// Independent scenes per grid point.
    pub scenes_per_point: usize,
    pub seed: u64,
    /// Scene manifest used instead of the generator grid; its scenes are
    /// crossed with `context_lengths_s` and `algorithms`.
    pub manifest: Option<PathBuf>,
    pub output: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    pub workers: Option<usize>,
    pub config: PipelineConfig,
    /// Fixed source azimuths; unset ones vary per scene seed.
    pub target_azimuth_deg: Option<f64>,
    pub interferer_azimuth_deg: Option<f64>,
    pub boundary_jitter_ms: f64,
}

impl Default for SweepSpec {
    fn default() -> Self {
        let scene = SyntheticSceneParams::default();
        Self {
            snr_db: vec![Some(-12.0), Some(-6.0), Some(0.0), Some(6.0), Some(12.0)],
            context_lengths_s: vec![8.0],
            noise: NoiseKind::SpeechShaped,
            desired_in_context: OneOrMany::One(false),
            channels: 3,
            algorithms: vec![Mode::Cab, Mode::Sc, Mode::Select],
            scenario: Scenario::FarField,
            scenes_per_point: 1,
            seed: 0,
            manifest: None,
            output: None,
            workers: None,
            config: PipelineConfig::default(),
            target_azimuth_deg: scene.target_azimuth_deg,
            interferer_azimuth_deg: scene.interferer_azimuth_deg,
            boundary_jitter_ms: 0.0,
        }
    }
}

impl SweepSpec {
    pub fn from_json(text: &str) -> Result<Self> {
        let spec: Self = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifest.is_none() && self.snr_db.is_empty() {
            return Err(Error::InvalidParameter("snr_db grid is empty".into()));
        }
        if self.context_lengths_s.is_empty() {
            return Err(Error::InvalidParameter("context_lengths_s grid is empty".into()));
        }
        if self
            .context_lengths_s
            .iter()
            .any(|c| !(*c > 0.0) || !c.is_finite())
        {
            return Err(Error::InvalidParameter("context lengths must be > 0".into()));
        }
        if self.algorithms.is_empty() {
            return Err(Error::InvalidParameter("algorithms list is empty".into()));
        }
        if self.desired_in_context.to_vec().is_empty() {
            return Err(Error::InvalidParameter("desired_in_context list is empty".into()));
        }
        if self.scenes_per_point == 0 {
            return Err(Error::InvalidParameter("scenes_per_point must be >= 1".into()));
        }
        if self.workers == Some(0) {
            return Err(Error::InvalidParameter("workers must be >= 1".into()));
        }
        if self.scenario == Scenario::ExactFir && self.channels != 2 {
            return Err(Error::InvalidParameter("the exact-FIR scenario has 2 channels".into()));
        }
        self.config.validate()
    }
}

/// One CSV row.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scene_id: String,
    pub snr_db: Option<f64>,
    pub algorithm: Mode,
    pub context_s: f64,
    pub noise: String,
    pub desired_in_context: bool,
    pub report: Option<MetricReport>,
    pub decision: Option<Algorithm>,
    pub estimated_snr_db: Option<f64>,
    pub runtime_ms: f64,
    /// `None` on success, otherwise the failure message.
    pub error: Option<String>,
}

impl RunRecord {
    pub fn is_failed(&self) -> bool {
        self.error.is_some()
    }

    fn csv_fields(&self) -> Vec<String> {
        let num = |v: Option<f64>| v.map_or_else(String::new, |x| format!("{x:.4}"));
        let r = self.report.as_ref();
        vec![
            self.scene_id.clone(),
            self.snr_db.map_or_else(|| "inf".into(), |x| format!("{x}")),
            self.algorithm.to_string(),
            num(r.map(|r| r.si_sdr_db)),
            num(r.map(|r| r.si_sdr_improvement_db)),
            num(r.map(|r| r.seg_snr_db)),
            num(r.and_then(|r| r.noise_reduction_db)),
            self.decision.map_or_else(String::new, |d| d.to_string()),
            format!("{:.3}", self.runtime_ms),
            match &self.error {
                None => "ok".into(),
                Some(e) => format!("failed: {e}"),
            },
            format!("{}", self.context_s),
            self.noise.clone(),
            self.desired_in_context.to_string(),
            num(self.estimated_snr_db),
            REPORT_SCHEMA_VERSION.to_string(),
        ]
    }
}

/// Row order: SNR ascending with noise-free runs last, then algorithm,
/// then the remaining grid coordinates.
pub fn sort_records(records: &mut [RunRecord]) {
    records.sort_by(|a, b| {
        let snr = |r: &RunRecord| r.snr_db.unwrap_or(f64::INFINITY);
        snr(a)
            .total_cmp(&snr(b))
            .then_with(|| a.algorithm.as_str().cmp(b.algorithm.as_str()))
            .then_with(|| b.context_s.total_cmp(&a.context_s))
            .then_with(|| a.desired_in_context.cmp(&b.desired_in_context))
            .then_with(|| a.scene_id.cmp(&b.scene_id))
    });
}

pub fn write_csv(out: impl Write, records: &[RunRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for r in records {
        w.write_record(r.csv_fields())?;
    }
    w.flush()?;
    Ok(())
}

/// Mean SI-SDR improvement per SNR (rows) and algorithm (columns).
pub fn summary_table(records: &[RunRecord]) -> String {
    let mut algorithms: Vec<&str> = records.iter().map(|r| r.algorithm.as_str()).collect();
    algorithms.sort_unstable();
    algorithms.dedup();
    let mut cells: BTreeMap<(i64, &str), (f64, usize)> = BTreeMap::new();
    let mut snrs: Vec<Option<f64>> = Vec::new();
    for r in records {
        if !snrs.contains(&r.snr_db) {
            snrs.push(r.snr_db);
        }
        if let Some(rep) = &r.report {
            let key = (snr_key(r.snr_db), r.algorithm.as_str());
            let e = cells.entry(key).or_default();
            e.0 += rep.si_sdr_improvement_db;
            e.1 += 1;
        }
    }
    snrs.sort_by(|a, b| a.unwrap_or(f64::INFINITY).total_cmp(&b.unwrap_or(f64::INFINITY)));
    let mut s = String::from("mean SI-SDR improvement (dB)\n");
    let _ = write!(s, "{:>8}", "snr_db");
    for a in &algorithms {
        let _ = write!(s, " {a:>12}");
    }
    s.push('\n');
    for snr in snrs {
        let label = snr.map_or_else(|| "inf".into(), |v| format!("{v}"));
        let _ = write!(s, "{label:>8}");
        for a in &algorithms {
            match cells.get(&(snr_key(snr), *a)) {
                Some((sum, n)) => {
                    let _ = write!(s, " {:>12.2}", sum / *n as f64);
                }
                None => {
                    let _ = write!(s, " {:>12}", "-");
                }
            }
        }
        s.push('\n');
    }
    s
}

fn snr_key(snr: Option<f64>) -> i64 {
    snr.map_or(i64::MAX, |v| (v * 1000.0).round() as i64)
}

struct SceneJob {
    id: String,
    snr_db: Option<f64>,
    desired_in_context: bool,
    noise: String,
    build: Box<dyn Fn() -> Result<Scene> + Send + Sync>,
}

fn grid_jobs(spec: &SweepSpec) -> Result<Vec<SceneJob>> {
    let max_context = spec
        .context_lengths_s
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max);
    let mut jobs = Vec::new();
    if let Some(path) = &spec.manifest {
        let text = std::fs::read_to_string(path)?;
        let manifest = SceneManifest::from_json(&text)?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for i in 0..manifest.scenes.len() {
            let scene_spec = manifest.scene_spec(i, &base)?;
            jobs.push(SceneJob {
                id: manifest.scene_id(i),
                snr_db: scene_spec.snr_db,
                desired_in_context: scene_spec.desired_in_context,
                noise: "manifest".into(),
                build: Box::new(move || mix_scene(&scene_spec)),
            });
        }
        return Ok(jobs);
    }
    for &snr_db in &spec.snr_db {
        for desired in spec.desired_in_context.to_vec() {
            for idx in 0..spec.scenes_per_point {
                let seed = spec.seed.wrapping_add(idx as u64);
                let snr_label = snr_db.map_or_else(|| "inf".into(), |v| format!("{v}"));
                let id = format!("snr{snr_label}_d{}_s{idx}", u8::from(desired));
                let build: Box<dyn Fn() -> Result<Scene> + Send + Sync> = match spec.scenario {
                    Scenario::FarField => {
                        let p = SyntheticSceneParams {
                            channels: spec.channels,
                            snr_db,
                            context_length_s: max_context,
                            noise: spec.noise,
                            desired_in_context: desired,
                            seed,
                            target_azimuth_deg: spec.target_azimuth_deg,
                            interferer_azimuth_deg: spec.interferer_azimuth_deg,
                            boundary_jitter_ms: spec.boundary_jitter_ms,
                            ..SyntheticSceneParams::default()
                        };
                        Box::new(move || synthetic_scene(&p))
                    }
                    Scenario::ExactFir => {
                        let p = ExactFirParams {
                            snr_db,
                            context_length_s: max_context,
                            desired_in_context: desired,
                            seed,
                            noise: spec.noise,
                            ..ExactFirParams::default()
                        };
                        Box::new(move || exact_fir_scene(&p))
                    }
                };
                jobs.push(SceneJob {
                    id,
                    snr_db,
                    desired_in_context: desired,
                    noise: spec.noise.as_str().into(),
                    build,
                });
            }
        }
    }
    Ok(jobs)
}

/// Runs every (scene, context length, algorithm) combination. Failures
/// become failed rows; the returned records are sorted.
pub fn run_sweep(spec: &SweepSpec) -> Result<Vec<RunRecord>> {
    spec.validate()?;
    let jobs = grid_jobs(spec)?;
    let workers = spec
        .workers
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::InvalidParameter(format!("worker pool: {e}")))?;
    let mut records: Vec<RunRecord> = pool.install(|| {
        jobs.par_iter()
            .flat_map_iter(|job| run_scene_job(spec, job))
            .collect()
    });
    sort_records(&mut records);
    Ok(records)
}

fn run_scene_job(spec: &SweepSpec, job: &SceneJob) -> Vec<RunRecord> {
    let base = (job.build)();
    let mut out = Vec::new();
    for &context_s in &spec.context_lengths_s {
        let scene = base.as_ref().map_err(ToString::to_string).and_then(|scene| {
            let available = scene.seg.context_len() as f64 / scene.mixture.sample_rate() as f64;
            if (context_s - available).abs() < 1e-9 || context_s > available {
                Ok(scene.clone())
            } else {
                scene
                    .truncated(context_s, &spec.config.frame_params)
                    .map_err(|e| e.to_string())
            }
        });
        for &algorithm in &spec.algorithms {
            let mut record = RunRecord {
                scene_id: format!("{}_ctx{context_s}", job.id),
                snr_db: job.snr_db,
                algorithm,
                context_s,
                noise: job.noise.clone(),
                desired_in_context: job.desired_in_context,
                report: None,
                decision: None,
                estimated_snr_db: None,
                runtime_ms: 0.0,
                error: None,
            };
            match scene
                .as_ref()
                .map_err(Clone::clone)
                .and_then(|s| evaluate_scene(s, algorithm, &spec.config).map_err(|e| e.to_string()))
            {
                Ok(eval) => {
                    record.report = Some(eval.report);
                    record.decision = Some(eval.enhancement.decision.chosen);
                    record.estimated_snr_db = eval.enhancement.decision.snr.map(|s| s.db);
                    record.runtime_ms = eval.runtime_ms;
                }
                Err(e) => record.error = Some(e),
            }
            out.push(record);
        }
    }
    out
}
