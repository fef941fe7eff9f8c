//! Utterance-level orchestration: SNR estimate from hotword and context
//! powers, threshold selection between the two enhancers, and synthesis of
//! the enhanced hotword and query.

use std::collections::BTreeMap;
use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::cab::{self, BeamformerWeights, LmsMvdrAdapter, LMS_DEFAULT_STEP};
use crate::cleaner::{self, CleanerConfig, CleanerFilterBank};
use crate::error::{Error, Result};
use crate::linalg;
use crate::signal::{
    istft, segment_frames, stft, FrameParams, MultiChannelSpectrogram, MultiChannelWave,
    SegmentFrames, UtteranceSegmentation,
};

pub const SNR_FLOOR_DB: f64 = -40.0;
pub const DEFAULT_GAMMA_DB: f64 = 6.0;
pub const DEFAULT_CONTEXT_LENGTH_S: f64 = 8.0;
/// Shortest hotword or context span accepted by [`estimate_snr`].
pub const MIN_SNR_SPAN_S: f64 = 0.1;

/// `σ²_hotword / σ²_context − 1`, from time-domain mean squares.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SnrEstimate {
    pub hotword_power: f64,
    pub context_power: f64,
    pub linear: f64,
    pub db: f64,
}

impl SnrEstimate {
    pub fn from_powers(hotword_power: f64, context_power: f64) -> Result<Self> {
        if !(context_power > 0.0) || !context_power.is_finite() {
            return Err(Error::SilentContext);
        }
        if !(hotword_power >= 0.0) || !hotword_power.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "hotword power {hotword_power} must be finite and >= 0"
            )));
        }
        let linear = hotword_power / context_power - 1.0;
        let floor = 10f64.powf(SNR_FLOOR_DB / 10.0);
        Ok(Self {
            hotword_power,
            context_power,
            linear,
            db: 10.0 * linear.max(floor).log10(),
        })
    }
}

fn mean_square(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len() as f64
}

/// Broadband reference-channel powers over the exact hotword and context
/// sample ranges.
pub fn estimate_snr(
    wave: &MultiChannelWave,
    seg: &UtteranceSegmentation,
    ref_channel: usize,
) -> Result<SnrEstimate> {
    seg.validate()?;
    if ref_channel >= wave.channel_count() {
        return Err(Error::InvalidParameter(format!(
            "reference channel {ref_channel} of {}",
            wave.channel_count()
        )));
    }
    if seg.hotword_end > wave.len() {
        return Err(Error::InvalidSegmentation(format!(
            "hotword_end <= input length ({}) violated",
            wave.len()
        )));
    }
    let min_len = (MIN_SNR_SPAN_S * wave.sample_rate() as f64).ceil() as usize;
    if seg.context_len() < min_len {
        return Err(Error::SegmentTooShort("context"));
    }
    if seg.hotword().len() < min_len {
        return Err(Error::SegmentTooShort("hotword"));
    }
    let x = wave.channel(ref_channel);
    SnrEstimate::from_powers(mean_square(&x[seg.hotword()]), mean_square(&x[seg.context()]))
}

/// What produced the enhanced output.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Algorithm {
    SpeechCleaner,
    #[serde(rename = "CAB")]
    Cab,
    /// Beamformer steered from the isolated talker rendering.
    Oracle,
    Passthrough,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::SpeechCleaner => "SpeechCleaner",
            Self::Cab => "CAB",
            Self::Oracle => "Oracle",
            Self::Passthrough => "Passthrough",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnhancementDecision {
    pub chosen: Algorithm,
    pub snr: Option<SnrEstimate>,
    pub gamma_db: f64,
}

/// Speech Cleaner strictly below `gamma_db`, CAB at or above.
pub fn select_algorithm(snr: SnrEstimate, gamma_db: f64) -> EnhancementDecision {
    let chosen = if snr.db < gamma_db {
        Algorithm::SpeechCleaner
    } else {
        Algorithm::Cab
    };
    EnhancementDecision {
        chosen,
        snr: Some(snr),
        gamma_db,
    }
}

/// Requested processing path.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Select,
    Cab,
    Sc,
    Oracle,
    Passthrough,
}

impl Mode {
    pub const ALL: [Mode; 5] = [
        Mode::Cab,
        Mode::Oracle,
        Mode::Passthrough,
        Mode::Sc,
        Mode::Select,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Select => "select",
            Self::Cab => "cab",
            Self::Sc => "sc",
            Self::Oracle => "oracle",
            Self::Passthrough => "passthrough",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown mode {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CabConfig {
    /// Refine the steering weights with constrained LMS while applying them.
    pub lms_enabled: bool,
    pub lms_step: f64,
    /// Eigenvalue floor for the PSD projection of `Φ_YY − Φ_VV`.
    pub psd_floor: f64,
}

impl Default for CabConfig {
    fn default() -> Self {
        Self {
            lms_enabled: false,
            lms_step: LMS_DEFAULT_STEP,
            psd_floor: 0.0,
        }
    }
}

/// Every field is optional in JSON; missing ones take the defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub frame_params: FrameParams,
    pub gamma_db: f64,
    /// Only the last `context_length_s` seconds before the hotword are used.
    pub context_length_s: f64,
    pub cleaner: CleanerConfig,
    pub cab: CabConfig,
    pub reference_channel: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            frame_params: FrameParams::default(),
            gamma_db: DEFAULT_GAMMA_DB,
            context_length_s: DEFAULT_CONTEXT_LENGTH_S,
            cleaner: CleanerConfig::default(),
            cab: CabConfig::default(),
            reference_channel: 0,
        }
    }
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: Self = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.frame_params.validate()?;
        self.cleaner.validate()?;
        if !self.gamma_db.is_finite() {
            return Err(Error::InvalidParameter("gamma_db must be finite".into()));
        }
        if !(self.context_length_s > 0.0) || !self.context_length_s.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "context_length_s {} must be > 0",
                self.context_length_s
            )));
        }
        if !(self.cab.lms_step > 0.0) {
            return Err(Error::InvalidParameter("cab.lms_step must be > 0".into()));
        }
        if !(self.cab.psd_floor >= 0.0) {
            return Err(Error::InvalidParameter("cab.psd_floor must be >= 0".into()));
        }
        Ok(())
    }
}

/// The filter fixed by one enhancement run, reusable on other renderings of
/// the same scene. With LMS enabled this holds the initial steering weights.
#[derive(Debug, Clone, PartialEq)]
pub enum FrozenOperator {
    Beamformer(BeamformerWeights),
    Cleaner(CleanerFilterBank),
    Passthrough { reference: usize },
}

impl FrozenOperator {
    /// Output of the operator over `samples`, synthesized like the pipeline
    /// output: only frames overlapping the range contribute.
    pub fn apply(
        &self,
        wave: &MultiChannelWave,
        samples: Range<usize>,
        params: &FrameParams,
    ) -> Result<Vec<f64>> {
        if samples.end > wave.len() || samples.start > samples.end {
            return Err(Error::ShapeMismatch(format!(
                "range {samples:?} outside {} samples",
                wave.len()
            )));
        }
        let spec = stft(wave, params)?;
        let frames = params.frames_overlapping(samples.clone(), spec.frame_count());
        let out = match self {
            Self::Beamformer(w) => beamform_frames(w, &spec, frames)?,
            Self::Cleaner(bank) => cleaner::apply_cleaner(bank, &spec, frames)?,
            Self::Passthrough { reference } => {
                if *reference >= spec.channel_count() {
                    return Err(Error::ShapeMismatch("reference channel out of range".into()));
                }
                reference_frames(&spec, *reference, frames)
            }
        };
        synthesize(&out, samples)
    }
}

fn beamform_frames(
    weights: &BeamformerWeights,
    spec: &MultiChannelSpectrogram,
    frames: Range<usize>,
) -> Result<MultiChannelSpectrogram> {
    if weights.bin_count() != spec.bin_count() || weights.channel_count() != spec.channel_count()
    {
        return Err(Error::ShapeMismatch(format!(
            "weights {}x{} vs spectrogram {}x{}",
            weights.bin_count(),
            weights.channel_count(),
            spec.bin_count(),
            spec.channel_count()
        )));
    }
    let mut out =
        MultiChannelSpectrogram::zeros(1, spec.frame_count(), *spec.params(), spec.sample_rate());
    for n in frames {
        for (k, w) in weights.weights.iter().enumerate() {
            out.set(0, n, k, linalg::dot_conj(w, spec.snapshot(n, k)));
        }
    }
    Ok(out)
}

fn reference_frames(
    spec: &MultiChannelSpectrogram,
    reference: usize,
    frames: Range<usize>,
) -> MultiChannelSpectrogram {
    let mut out =
        MultiChannelSpectrogram::zeros(1, spec.frame_count(), *spec.params(), spec.sample_rate());
    for n in frames {
        for k in 0..spec.bin_count() {
            out.set(0, n, k, spec.get(reference, n, k));
        }
    }
    out
}

fn synthesize(spec: &MultiChannelSpectrogram, samples: Range<usize>) -> Result<Vec<f64>> {
    let wave = istft(spec)?;
    Ok(wave.channel(0)[samples].to_vec())
}

/// Structured record of one run, printable as JSON.
#[derive(Debug, Clone, Serialize)]
pub struct Diagnostics {
    pub mode: Mode,
    pub decision: Algorithm,
    pub snr_db: Option<f64>,
    pub gamma_db: f64,
    /// Wall time per stage in milliseconds.
    pub timings_ms: BTreeMap<&'static str, f64>,
    pub context_frames: usize,
    /// Per-bin `λ_max / trace` of the steering covariance.
    pub eigenvalue_ratios: Vec<f64>,
    pub fallback_bins: Vec<usize>,
    pub warnings: Vec<String>,
    pub config: PipelineConfig,
}

impl Diagnostics {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("diagnostics serialize")
    }
}

#[derive(Debug, Clone)]
pub struct Enhancement {
    /// Single channel covering `[hotword_start, query_end)`.
    pub enhanced: MultiChannelWave,
    pub decision: EnhancementDecision,
    pub diagnostics: Diagnostics,
    pub operator: FrozenOperator,
    /// Segmentation actually used, after trimming the context to the
    /// configured length.
    pub effective_seg: UtteranceSegmentation,
}

/// Estimates the SNR, picks an algorithm and runs it.
pub fn enhance_utterance(
    wave: &MultiChannelWave,
    seg: &UtteranceSegmentation,
    config: &PipelineConfig,
) -> Result<Enhancement> {
    run(wave, seg, config, Mode::Select, None)
}

/// Runs `mode` without selection. `clean` is the isolated talker rendering,
/// needed only by [`Mode::Oracle`].
pub fn enhance_forced(
    wave: &MultiChannelWave,
    seg: &UtteranceSegmentation,
    config: &PipelineConfig,
    mode: Mode,
    clean: Option<&MultiChannelWave>,
) -> Result<Enhancement> {
    run(wave, seg, config, mode, clean)
}

/// `seg` with the context shortened to at most `context_length_s`.
pub fn effective_segmentation(
    seg: &UtteranceSegmentation,
    context_length_s: f64,
    sample_rate: u32,
) -> UtteranceSegmentation {
    let max_len = (context_length_s * sample_rate as f64).round() as usize;
    let start = seg.context_start.max(seg.hotword_start.saturating_sub(max_len));
    UtteranceSegmentation {
        context_start: start,
        ..*seg
    }
}

struct Stopwatch {
    timings: BTreeMap<&'static str, f64>,
    last: Instant,
}

impl Stopwatch {
    fn new() -> Self {
        Self {
            timings: BTreeMap::new(),
            last: Instant::now(),
        }
    }

    fn lap(&mut self, stage: &'static str) {
        let now = Instant::now();
        *self.timings.entry(stage).or_default() += (now - self.last).as_secs_f64() * 1e3;
        self.last = now;
    }
}

fn run(
    wave: &MultiChannelWave,
    seg: &UtteranceSegmentation,
    config: &PipelineConfig,
    mode: Mode,
    clean: Option<&MultiChannelWave>,
) -> Result<Enhancement> {
    config.validate()?;
    seg.validate()?;
    if seg.query_end > wave.len() {
        return Err(Error::InvalidSegmentation(format!(
            "query_end <= input length ({}) violated",
            wave.len()
        )));
    }
    let reference = config.reference_channel;
    if reference >= wave.channel_count() {
        return Err(Error::InvalidParameter(format!(
            "reference channel {reference} of {}",
            wave.channel_count()
        )));
    }
    let params = config.frame_params;
    let eff = effective_segmentation(seg, config.context_length_s, wave.sample_rate());
    let mut warnings = Vec::new();
    let mut mode = mode;
    if wave.channel_count() < 2 && mode != Mode::Passthrough {
        warnings.push(format!(
            "{} channel input: falling back to passthrough",
            wave.channel_count()
        ));
        mode = Mode::Passthrough;
    }
    if mode == Mode::Oracle {
        let clean = clean.ok_or(Error::OracleRequiresCleanReference)?;
        if clean.channel_count() != wave.channel_count() || clean.len() != wave.len() {
            return Err(Error::ShapeMismatch(
                "clean rendering must match the mixture shape".into(),
            ));
        }
    }

    let mut clock = Stopwatch::new();
    let snr = match mode {
        Mode::Select => Some(estimate_snr(wave, &eff, reference)?),
        Mode::Passthrough => None,
        _ => estimate_snr(wave, &eff, reference).ok(),
    };
    let chosen = match mode {
        Mode::Select => select_algorithm(snr.expect("estimated above"), config.gamma_db).chosen,
        Mode::Cab => Algorithm::Cab,
        Mode::Sc => Algorithm::SpeechCleaner,
        Mode::Oracle => Algorithm::Oracle,
        Mode::Passthrough => Algorithm::Passthrough,
    };
    clock.lap("snr");

    let spec = stft(wave, &params)?;
    clock.lap("stft");
    let apply_frames = params.frames_overlapping(eff.utterance(), spec.frame_count());

    let mut eigenvalue_ratios = Vec::new();
    let mut fallback_bins = Vec::new();
    let mut context_frames = 0;
    let (out, operator) = match chosen {
        Algorithm::Passthrough => (
            reference_frames(&spec, reference, apply_frames),
            FrozenOperator::Passthrough { reference },
        ),
        Algorithm::Cab | Algorithm::Oracle => {
            let frames = frames_for(&eff, &params, spec.frame_count(), 1)?;
            context_frames = frames.context.len();
            let steering_cov = if chosen == Algorithm::Cab {
                let noise = cab::estimate_noise_covariance(&spec, frames.context.clone())?;
                let noisy = cab::estimate_covariance(&spec, frames.hotword.clone())?;
                let desired = cab::subtract_covariance(&noisy, &noise)?;
                if config.cab.psd_floor > 0.0 {
                    cab::project_psd_with_floor(&desired, config.cab.psd_floor)
                } else {
                    desired
                }
            } else {
                let clean_spec = stft(clean.expect("checked above"), &params)?;
                cab::oracle_covariance(&clean_spec, frames.hotword.clone())?
            };
            clock.lap("covariance");
            let weights = cab::principal_eigenvector(&steering_cov)?.rereferenced(reference);
            eigenvalue_ratios = weights.dominance.clone();
            fallback_bins = weights.fallback_bins.clone();
            clock.lap("steering");
            let out = if config.cab.lms_enabled {
                let mut adapter = LmsMvdrAdapter::new(&weights, config.cab.lms_step)?;
                let mut out = MultiChannelSpectrogram::zeros(
                    1,
                    spec.frame_count(),
                    params,
                    spec.sample_rate(),
                );
                let mut row = vec![Complex64::new(0.0, 0.0); spec.bin_count()];
                for n in apply_frames {
                    adapter.process_frame(&spec, n, &mut row);
                    for (k, v) in row.iter().enumerate() {
                        out.set(0, n, k, *v);
                    }
                }
                out
            } else {
                beamform_frames(&weights, &spec, apply_frames)?
            };
            clock.lap("apply");
            (out, FrozenOperator::Beamformer(weights))
        }
        Algorithm::SpeechCleaner => {
            let taps = config.cleaner.taps;
            let frames = frames_for(&eff, &params, spec.frame_count(), taps)?;
            context_frames = frames.context.len();
            let mut bank = CleanerFilterBank::new(
                spec.bin_count(),
                spec.channel_count(),
                reference,
                &config.cleaner,
            )?;
            cleaner::rls_adapt(&mut bank, &spec, frames.context.clone())?;
            let bank = bank.freeze();
            clock.lap("adapt");
            let out = cleaner::apply_cleaner(&bank, &spec, apply_frames)?;
            clock.lap("apply");
            (out, FrozenOperator::Cleaner(bank))
        }
    };

    let samples = synthesize(&out, eff.utterance())?;
    clock.lap("istft");
    let enhanced = MultiChannelWave::mono(samples, wave.sample_rate())?;
    let decision = EnhancementDecision {
        chosen,
        snr,
        gamma_db: config.gamma_db,
    };
    Ok(Enhancement {
        enhanced,
        decision,
        diagnostics: Diagnostics {
            mode,
            decision: chosen,
            snr_db: snr.map(|s| s.db),
            gamma_db: config.gamma_db,
            timings_ms: clock.timings,
            context_frames,
            eigenvalue_ratios,
            fallback_bins,
            warnings,
            config: *config,
        },
        operator,
        effective_seg: eff,
    })
}

/// Segment frames, requiring at least `min_context` noise-context frames.
fn frames_for(
    seg: &UtteranceSegmentation,
    params: &FrameParams,
    frame_count: usize,
    min_context: usize,
) -> Result<SegmentFrames> {
    let needed = min_context.max(1);
    let frames = match segment_frames(seg, params) {
        Ok(f) => f.clipped(frame_count),
        Err(Error::SegmentTooShort("context")) => {
            return Err(Error::ContextTooShort(format!("0 frames, need {needed}")))
        }
        Err(e) => return Err(e),
    };
    if frames.context.len() < needed {
        return Err(Error::ContextTooShort(format!(
            "{} frames, need {needed}",
            frames.context.len()
        )));
    }
    if frames.hotword.is_empty() {
        return Err(Error::SegmentTooShort("hotword"));
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn snr(db: f64) -> SnrEstimate {
        SnrEstimate {
            hotword_power: 1.0,
            context_power: 1.0,
            linear: 10f64.powf(db / 10.0),
            db,
        }
    }

    fn noise_wave(channels: usize, len: usize, seed: u64) -> MultiChannelWave {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data = (0..channels)
            .map(|_| (0..len).map(|_| rng.gen_range(-0.5..0.5)).collect())
            .collect();
        MultiChannelWave::new(data, 16_000).unwrap()
    }

    #[test]
    fn snr_examples() {
        let e = SnrEstimate::from_powers(2.0, 1.0).unwrap();
        assert_eq!(e.linear, 1.0);
        assert_eq!(e.db, 0.0);
        let e = SnrEstimate::from_powers(1.0, 1.0).unwrap();
        assert_eq!(e.linear, 0.0);
        assert!((e.db - SNR_FLOOR_DB).abs() < 1e-12);
        assert!(matches!(SnrEstimate::from_powers(1.0, 0.0), Err(Error::SilentContext)));
    }

    #[test]
    fn selection_examples() {
        assert_eq!(select_algorithm(snr(3.0), 6.0).chosen, Algorithm::SpeechCleaner);
        assert_eq!(select_algorithm(snr(12.0), 6.0).chosen, Algorithm::Cab);
        assert_eq!(select_algorithm(snr(6.0), 6.0).chosen, Algorithm::Cab);
        assert_eq!(
            select_algorithm(snr(6.0 - 1e-12), 6.0).chosen,
            Algorithm::SpeechCleaner
        );
    }

    #[test]
    fn config_fields_are_optional() {
        let c = PipelineConfig::from_json("{}").unwrap();
        assert_eq!(c, PipelineConfig::default());
        assert_eq!(c.cleaner.taps, 3);
        assert_eq!(c.gamma_db, 6.0);
        assert_eq!(c.context_length_s, 8.0);
        assert!(!c.cab.lms_enabled);
        let c = PipelineConfig::from_json(r#"{"gamma_db": 3, "cleaner": {"taps": 5}}"#).unwrap();
        assert_eq!(c.gamma_db, 3.0);
        assert_eq!(c.cleaner.taps, 5);
        assert_eq!(c.cleaner.forgetting, 0.9995);
        assert!(PipelineConfig::from_json(r#"{"context_length_s": 0}"#).is_err());
        assert!(PipelineConfig::from_json(r#"{"cleaner": {"taps": 0}}"#).is_err());
    }

    #[test]
    fn mode_parsing() {
        for m in Mode::ALL {
            assert_eq!(m.as_str().parse::<Mode>().unwrap(), m);
        }
        assert!("beam".parse::<Mode>().is_err());
    }

    #[test]
    fn single_channel_passes_through() {
        let wave = noise_wave(1, 16_000, 1);
        let seg = UtteranceSegmentation::new(0, 8000, 12000, 16000).unwrap();
        let out = enhance_utterance(&wave, &seg, &PipelineConfig::default()).unwrap();
        assert_eq!(out.decision.chosen, Algorithm::Passthrough);
        assert_eq!(out.enhanced.len(), 8000);
        assert!(!out.diagnostics.warnings.is_empty());
    }

    #[test]
    fn passthrough_is_bitwise_round_trip() {
        let wave = noise_wave(2, 20_000, 2);
        let seg = UtteranceSegmentation::new(0, 9000, 13000, 19000).unwrap();
        let config = PipelineConfig::default();
        let out = enhance_forced(&wave, &seg, &config, Mode::Passthrough, None).unwrap();
        let ch0 = wave.select_channels(&[0]).unwrap();
        let rt = istft(&stft(&ch0, &config.frame_params).unwrap()).unwrap();
        assert_eq!(out.enhanced.channel(0), &rt.channel(0)[9000..19000]);
    }

    #[test]
    fn cleaner_needs_context_frames() {
        let wave = noise_wave(2, 20_000, 3);
        let config = PipelineConfig::default();
        let seg = UtteranceSegmentation::new(0, 0, 4000, 8000).unwrap();
        let err = enhance_forced(&wave, &seg, &config, Mode::Sc, None).unwrap_err();
        assert!(matches!(err, Error::ContextTooShort(_)), "{err}");
        assert!(err.to_string().contains("context shorter than minimum"));
        // two context frames are fewer than L = 3
        let seg = UtteranceSegmentation::new(0, 700, 5000, 8000).unwrap();
        assert!(matches!(
            enhance_forced(&wave, &seg, &config, Mode::Sc, None),
            Err(Error::ContextTooShort(_))
        ));
    }

    #[test]
    fn oracle_requires_clean_rendering() {
        let wave = noise_wave(2, 20_000, 4);
        let seg = UtteranceSegmentation::new(0, 9000, 13000, 19000).unwrap();
        let err = enhance_forced(&wave, &seg, &PipelineConfig::default(), Mode::Oracle, None)
            .unwrap_err();
        assert_eq!(err.to_string(), "oracle requires clean reference");
    }

    #[test]
    fn context_is_trimmed_to_configured_length() {
        let seg = UtteranceSegmentation::new(0, 64_000, 70_000, 80_000).unwrap();
        let eff = effective_segmentation(&seg, 1.0, 16_000);
        assert_eq!(eff.context_start, 48_000);
        assert_eq!(eff.hotword_start, 64_000);
        let eff = effective_segmentation(&seg, 8.0, 16_000);
        assert_eq!(eff, seg);
    }

    #[test]
    fn frozen_operator_reproduces_output() {
        let wave = noise_wave(3, 40_000, 5);
        let seg = UtteranceSegmentation::new(0, 20_000, 28_000, 38_000).unwrap();
        let config = PipelineConfig::default();
        for mode in [Mode::Cab, Mode::Sc, Mode::Passthrough] {
            let out = enhance_forced(&wave, &seg, &config, mode, None).unwrap();
            let again = out
                .operator
                .apply(&wave, seg.utterance(), &config.frame_params)
                .unwrap();
            assert_eq!(out.enhanced.channel(0), again.as_slice(), "{mode}");
        }
    }

    #[test]
    fn lms_keeps_output_finite() {
        let wave = noise_wave(2, 30_000, 6);
        let seg = UtteranceSegmentation::new(0, 15_000, 20_000, 29_000).unwrap();
        let mut config = PipelineConfig::default();
        config.cab.lms_enabled = true;
        let out = enhance_forced(&wave, &seg, &config, Mode::Cab, None).unwrap();
        assert!(out.enhanced.channel(0).iter().all(|x| x.is_finite()));
    }
}
