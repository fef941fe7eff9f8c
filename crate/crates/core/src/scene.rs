//! Synthetic experiment harness: renders a talker and an interferer onto an
//! M-channel array, mixes them at a calibrated SNR behind a noise context
//! and keeps the isolated renderings as ground truth.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::signal::{FrameParams, MultiChannelWave, UtteranceSegmentation, DEFAULT_SAMPLE_RATE};
use crate::wav::read_wav_at;

pub const SPEED_OF_SOUND: f64 = 343.0;
/// Spacing between neighbouring microphones of the preset arrays, in metres.
pub const MIC_SPACING_M: f64 = 0.071;
/// Distance of the third (front-facing) microphone ahead of the top pair.
pub const FRONT_MIC_OFFSET_M: f64 = 0.05;
/// Loudspeaker azimuths of the preset room, 90° facing the array front.
pub const SPEAKER_AZIMUTHS_DEG: [f64; 7] = [0.0, 30.0, 60.0, 90.0, 120.0, 150.0, 180.0];
/// Length of the windowed-sinc fractional-delay kernel.
pub const FRACTIONAL_DELAY_TAPS: usize = 32;
pub const PINK_FIR_TAPS: usize = 63;

/// How a source reaches each microphone.
#[derive(Debug, Clone, PartialEq)]
pub enum Rendering {
    /// Per-channel delay in (fractional) samples and linear gain.
    DelayGain { delays: Vec<f64>, gains: Vec<f64> },
    /// Per-channel impulse response.
    Rir {
        responses: Vec<Vec<f64>>,
        sample_rate: u32,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SourceSpec {
    pub wave: Vec<f64>,
    pub position_tag: String,
    pub rendering: Rendering,
}

impl SourceSpec {
    pub fn channel_count(&self) -> usize {
        match &self.rendering {
            Rendering::DelayGain { delays, .. } => delays.len(),
            Rendering::Rir { responses, .. } => responses.len(),
        }
    }

    pub fn validate(&self, sample_rate: u32) -> Result<()> {
        match &self.rendering {
            Rendering::DelayGain { delays, gains } => {
                if delays.len() != gains.len() || delays.is_empty() {
                    return Err(Error::InvalidParameter(format!(
                        "{}: {} delays for {} gains",
                        self.position_tag,
                        delays.len(),
                        gains.len()
                    )));
                }
                if delays.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "{}: delays must be finite and >= 0",
                        self.position_tag
                    )));
                }
                if gains.iter().all(|g| *g == 0.0) || gains.iter().any(|g| !g.is_finite()) {
                    return Err(Error::InvalidParameter(format!(
                        "{}: gains must be finite with at least one nonzero",
                        self.position_tag
                    )));
                }
            }
            Rendering::Rir {
                responses,
                sample_rate: rate,
            } => {
                if *rate != sample_rate {
                    return Err(Error::SampleRateMismatch {
                        expected: sample_rate,
                        actual: *rate,
                    });
                }
                if responses.is_empty() || responses.iter().any(Vec::is_empty) {
                    return Err(Error::InvalidParameter(format!(
                        "{}: empty impulse response",
                        self.position_tag
                    )));
                }
            }
        }
        Ok(())
    }
}

fn blackman_sinc(t: f64) -> f64 {
    let half = (FRACTIONAL_DELAY_TAPS / 2) as f64;
    if t.abs() >= half {
        return 0.0;
    }
    let sinc = if t == 0.0 { 1.0 } else { (PI * t).sin() / (PI * t) };
    let w = 0.42 + 0.5 * (PI * t / half).cos() + 0.08 * (2.0 * PI * t / half).cos();
    sinc * w
}

/// `gain·x(t − delay)` on `len` output samples, interpolated with a 32-tap
/// Blackman-windowed sinc. Integer delays are exact shifts.
pub fn fractional_delay(x: &[f64], delay: f64, gain: f64, len: usize) -> Vec<f64> {
    let whole = delay.floor();
    let frac = delay - whole;
    let whole = whole as usize;
    let mut out = vec![0.0; len];
    if frac == 0.0 {
        for (t, y) in out.iter_mut().enumerate().skip(whole) {
            if let Some(v) = x.get(t - whole) {
                *y = gain * v;
            }
        }
        return out;
    }
    let half = (FRACTIONAL_DELAY_TAPS / 2) as isize;
    let kernel: Vec<(isize, f64)> = (1 - half..=half)
        .map(|j| (j, gain * blackman_sinc(j as f64 - frac)))
        .collect();
    for (t, y) in out.iter_mut().enumerate() {
        let base = t as isize - whole as isize;
        let mut acc = 0.0;
        for &(j, h) in &kernel {
            let i = base - j;
            if i >= 0 && (i as usize) < x.len() {
                acc += h * x[i as usize];
            }
        }
        *y = acc;
    }
    out
}

/// Linear convolution `x * h` truncated to `len` samples, via FFT.
pub fn convolve(x: &[f64], h: &[f64], len: usize) -> Vec<f64> {
    if x.is_empty() || h.is_empty() {
        return vec![0.0; len];
    }
    let full = x.len() + h.len() - 1;
    let size = full.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let pad = |v: &[f64]| {
        let mut c: Vec<Complex64> = v.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        c.resize(size, Complex64::new(0.0, 0.0));
        c
    };
    let mut a = pad(x);
    let mut b = pad(h);
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (p, q) in a.iter_mut().zip(&b) {
        *p *= q;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    let mut out: Vec<f64> = a.iter().take(full.min(len)).map(|c| c.re * scale).collect();
    out.resize(len, 0.0);
    out
}

/// Renders `src` onto `channels` microphones, trimmed or zero-padded to
/// `length` samples.
pub fn render_source(
    src: &SourceSpec,
    length: usize,
    channels: usize,
    sample_rate: u32,
) -> Result<MultiChannelWave> {
    src.validate(sample_rate)?;
    if src.channel_count() != channels {
        return Err(Error::ShapeMismatch(format!(
            "{}: rendering has {} channels, scene has {channels}",
            src.position_tag,
            src.channel_count()
        )));
    }
    let data = match &src.rendering {
        Rendering::DelayGain { delays, gains } => delays
            .iter()
            .zip(gains)
            .map(|(&d, &g)| fractional_delay(&src.wave, d, g, length))
            .collect(),
        Rendering::Rir { responses, .. } => responses
            .iter()
            .map(|h| convolve(&src.wave, h, length))
            .collect(),
    };
    MultiChannelWave::new(data, sample_rate)
}

/// Microphone positions of the preset arrays: a 7.1 cm pair on top, plus a
/// front microphone for three channels, otherwise a uniform circle with
/// 7.1 cm between neighbours.
pub fn preset_array(channels: usize) -> Result<Vec<[f64; 3]>> {
    match channels {
        0 | 1 => Err(Error::TooFewChannels(channels)),
        2 => Ok(vec![
            [-MIC_SPACING_M / 2.0, 0.0, 0.0],
            [MIC_SPACING_M / 2.0, 0.0, 0.0],
        ]),
        3 => Ok(vec![
            [-MIC_SPACING_M / 2.0, 0.0, 0.0],
            [MIC_SPACING_M / 2.0, 0.0, 0.0],
            [0.0, FRONT_MIC_OFFSET_M, 0.0],
        ]),
        m => {
            let radius = MIC_SPACING_M / (2.0 * (PI / m as f64).sin());
            Ok((0..m)
                .map(|i| {
                    let a = 2.0 * PI * i as f64 / m as f64 - PI / 2.0;
                    [radius * a.cos(), radius * a.sin(), 0.0]
                })
                .collect())
        }
    }
}

/// Plane-wave arrival delays in samples for a far-field source at
/// `azimuth_deg` in the array plane, shifted so the earliest is zero.
pub fn far_field_delays(mics: &[[f64; 3]], azimuth_deg: f64, sample_rate: u32) -> Vec<f64> {
    let a = azimuth_deg.to_radians();
    let u = [a.cos(), a.sin(), 0.0];
    let lead: Vec<f64> = mics
        .iter()
        .map(|p| (p[0] * u[0] + p[1] * u[1] + p[2] * u[2]) / SPEED_OF_SOUND * sample_rate as f64)
        .collect();
    let max = lead.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    lead.iter().map(|l| max - l).collect()
}

/// Far-field delay/gain rendering from the preset array.
pub fn far_field_rendering(channels: usize, azimuth_deg: f64, sample_rate: u32) -> Result<Rendering> {
    let mics = preset_array(channels)?;
    Ok(Rendering::DelayGain {
        delays: far_field_delays(&mics, azimuth_deg, sample_rate),
        gains: vec![1.0; channels],
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    /// Hotword followed by the query.
    pub target: SourceSpec,
    /// Length of the hotword at the start of `target.wave`.
    pub hotword_len: usize,
    pub interferer: SourceSpec,
    /// Target-to-interferer ratio on the reference channel over the hotword
    /// and query; `None` leaves the interferer out.
    pub snr_db: Option<f64>,
    pub context_length_s: f64,
    /// Tile copies of the query through the context span.
    pub desired_in_context: bool,
    pub sample_rate: u32,
    pub channel_count: usize,
    pub reference_channel: usize,
    /// Uniform random shift of the hotword boundaries, in milliseconds.
    pub boundary_jitter_ms: f64,
    pub jitter_seed: u64,
}

/// A mixed scene with its ground truth. `mixture = clean_target +
/// noise_only` holds sample for sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Scene {
    pub mixture: MultiChannelWave,
    /// Segmentation handed to the enhancer (jittered if requested).
    pub seg: UtteranceSegmentation,
    /// Exact boundaries of the rendered audio.
    pub true_seg: UtteranceSegmentation,
    pub clean_target: MultiChannelWave,
    /// Interferer rendering after SNR scaling.
    pub noise_only: MultiChannelWave,
    pub interferer_gain: f64,
    pub reference_channel: usize,
}

fn power(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum::<f64>() / x.len().max(1) as f64
}

pub fn mix_scene(spec: &SceneSpec) -> Result<Scene> {
    let sr = spec.sample_rate;
    let m = spec.channel_count;
    if spec.target.position_tag == spec.interferer.position_tag {
        return Err(Error::InvalidParameter(format!(
            "target and interferer share position {:?}",
            spec.target.position_tag
        )));
    }
    if !(spec.context_length_s > 0.0) || !spec.context_length_s.is_finite() {
        return Err(Error::InvalidParameter("context_length_s must be > 0".into()));
    }
    if spec.reference_channel >= m {
        return Err(Error::InvalidParameter(format!(
            "reference channel {} of {m}",
            spec.reference_channel
        )));
    }
    let target_len = spec.target.wave.len();
    if spec.hotword_len == 0 || spec.hotword_len > target_len {
        return Err(Error::InvalidParameter(format!(
            "hotword length {} outside target of {target_len} samples",
            spec.hotword_len
        )));
    }
    let context = (spec.context_length_s * sr as f64).round() as usize;
    let total = context + target_len;
    if spec.snr_db.is_some() && spec.interferer.wave.len() < total {
        return Err(Error::InterfererTooShort {
            needed: total,
            available: spec.interferer.wave.len(),
        });
    }
    let true_seg = UtteranceSegmentation::new(0, context, context + spec.hotword_len, total)?;

    // the talker source on the mixture timeline
    let mut placed = vec![0.0; total];
    placed[context..].copy_from_slice(&spec.target.wave);
    if spec.desired_in_context {
        let query = &spec.target.wave[spec.hotword_len..];
        if query.is_empty() {
            return Err(Error::InvalidParameter("no query audio to place in context".into()));
        }
        let mut end = context;
        while end > 0 {
            let n = query.len().min(end);
            placed[end - n..end].copy_from_slice(&query[query.len() - n..]);
            end -= n;
        }
    }
    let talker = SourceSpec {
        wave: placed,
        ..spec.target.clone()
    };
    let clean_target = render_source(&talker, total, m, sr)?;

    let reference_span = true_seg.utterance();
    let target_power = power(&clean_target.channel(spec.reference_channel)[reference_span.clone()]);
    let (noise_only, gain) = match spec.snr_db {
        None => (MultiChannelWave::zeros(m, total, sr)?, 0.0),
        Some(snr_db) => {
            if !snr_db.is_finite() {
                return Err(Error::InvalidParameter(format!("snr_db {snr_db}")));
            }
            if target_power == 0.0 {
                return Err(Error::SilentTarget);
            }
            let raw = render_source(&spec.interferer, total, m, sr)?;
            let noise_power = power(&raw.channel(spec.reference_channel)[reference_span]);
            if noise_power == 0.0 {
                return Err(Error::InvalidParameter("interferer is silent over the utterance".into()));
            }
            let gain = (target_power / noise_power / 10f64.powf(snr_db / 10.0)).sqrt();
            let scaled = raw
                .into_channels()
                .into_iter()
                .map(|c| c.into_iter().map(|v| v * gain).collect())
                .collect();
            (MultiChannelWave::new(scaled, sr)?, gain)
        }
    };
    let mixed = clean_target
        .channels()
        .iter()
        .zip(noise_only.channels())
        .map(|(a, b)| a.iter().zip(b).map(|(x, y)| x + y).collect())
        .collect();
    let mixture = MultiChannelWave::new(mixed, sr)?;

    let seg = if spec.boundary_jitter_ms > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.jitter_seed);
        jitter_segmentation(&true_seg, spec.boundary_jitter_ms, sr, &mut rng)
    } else {
        true_seg
    };
    Ok(Scene {
        mixture,
        seg,
        true_seg,
        clean_target,
        noise_only,
        interferer_gain: gain,
        reference_channel: spec.reference_channel,
    })
}

/// Moves the hotword start and end independently by up to `±max_ms`, keeping
/// the segmentation valid.
pub fn jitter_segmentation(
    seg: &UtteranceSegmentation,
    max_ms: f64,
    sample_rate: u32,
    rng: &mut impl Rng,
) -> UtteranceSegmentation {
    let max = (max_ms * 1e-3 * sample_rate as f64).round() as i64;
    if max <= 0 {
        return *seg;
    }
    let mut shift = |v: usize, lo: usize, hi: usize| {
        let s = v as i64 + rng.gen_range(-max..=max);
        (s.max(lo as i64) as usize).min(hi)
    };
    let hs = shift(seg.hotword_start, seg.context_start, seg.hotword_end - 1);
    let he = shift(seg.hotword_end, hs + 1, seg.query_end);
    UtteranceSegmentation {
        context_start: seg.context_start,
        context_end: hs,
        hotword_start: hs,
        hotword_end: he,
        query_end: seg.query_end,
    }
}

/// Drops the earliest context samples so `new_length_s` of context remain.
pub fn truncate_context(
    mixture: &MultiChannelWave,
    seg: &UtteranceSegmentation,
    new_length_s: f64,
    params: &FrameParams,
) -> Result<(MultiChannelWave, UtteranceSegmentation)> {
    seg.validate()?;
    let new_len = (new_length_s * mixture.sample_rate() as f64).round() as usize;
    if !(new_length_s > 0.0) || new_len < params.fft_size {
        return Err(Error::ContextTooShort(format!(
            "{new_length_s} s is shorter than one {}-sample frame",
            params.fft_size
        )));
    }
    if new_len > seg.context_len() {
        return Err(Error::InvalidParameter(format!(
            "cannot extend a {}-sample context to {new_len}",
            seg.context_len()
        )));
    }
    let start = seg.hotword_start - new_len;
    let wave = mixture.slice(start..mixture.len())?;
    let shifted = UtteranceSegmentation {
        context_start: 0,
        context_end: seg.context_end - start,
        hotword_start: seg.hotword_start - start,
        hotword_end: seg.hotword_end - start,
        query_end: seg.query_end - start,
    };
    Ok((wave, shifted))
}

impl Scene {
    /// The same scene with its context cut to `new_length_s`.
    pub fn truncated(&self, new_length_s: f64, params: &FrameParams) -> Result<Scene> {
        let (mixture, true_seg) =
            truncate_context(&self.mixture, &self.true_seg, new_length_s, params)?;
        let offset = self.true_seg.hotword_start - true_seg.hotword_start;
        let cut = |w: &MultiChannelWave| w.slice(offset..w.len());
        let seg = UtteranceSegmentation {
            context_start: 0,
            context_end: self.seg.context_end - offset,
            hotword_start: self.seg.hotword_start - offset,
            hotword_end: self.seg.hotword_end - offset,
            query_end: self.seg.query_end - offset,
        };
        Ok(Scene {
            mixture,
            seg,
            true_seg,
            clean_target: cut(&self.clean_target)?,
            noise_only: cut(&self.noise_only)?,
            interferer_gain: self.interferer_gain,
            reference_channel: self.reference_channel,
        })
    }

    /// Reference-channel talker over `[hotword_start, query_end)`.
    pub fn reference_target(&self) -> &[f64] {
        &self.clean_target.channel(self.reference_channel)[self.true_seg.utterance()]
    }

    /// Target-to-interferer ratio re-measured from the renderings.
    pub fn measured_snr_db(&self) -> f64 {
        let span = self.true_seg.utterance();
        let t = power(&self.clean_target.channel(self.reference_channel)[span.clone()]);
        let n = power(&self.noise_only.channel(self.reference_channel)[span]);
        10.0 * (t / n).log10()
    }
}

/// Interferer signal families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Stationary noise with a long-term speech spectrum.
    #[serde(alias = "speech_like", alias = "speech-like")]
    SpeechShaped,
    Pink,
    White,
}

impl NoiseKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::SpeechShaped => "speech_shaped",
            Self::Pink => "pink",
            Self::White => "white",
        }
    }
}

impl std::str::FromStr for NoiseKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "speech_shaped" | "speech_like" | "speech-like" => Ok(Self::SpeechShaped),
            "pink" => Ok(Self::Pink),
            "white" => Ok(Self::White),
            _ => Err(Error::InvalidParameter(format!("unknown noise type {s:?}"))),
        }
    }
}

fn gaussian(len: usize, rng: &mut impl Rng) -> Vec<f64> {
    (0..len).map(|_| rng.sample::<f64, _>(StandardNormal)).collect()
}

/// Linear-phase FIR whose magnitude follows `shape(frequency_hz)`, designed
/// by frequency sampling and Hann windowing.
pub fn design_fir(taps: usize, sample_rate: u32, shape: impl Fn(f64) -> f64) -> Vec<f64> {
    let grid = (4 * taps).next_power_of_two().max(1024);
    let mut spectrum: Vec<Complex64> = (0..grid)
        .map(|i| {
            let bin = i.min(grid - i);
            Complex64::new(shape(bin as f64 * sample_rate as f64 / grid as f64), 0.0)
        })
        .collect();
    FftPlanner::<f64>::new()
        .plan_fft_inverse(grid)
        .process(&mut spectrum);
    let half = (taps / 2) as isize;
    (0..taps as isize)
        .map(|j| {
            let lag = j - half;
            let v = spectrum[lag.rem_euclid(grid as isize) as usize].re / grid as f64;
            let w = 0.5 - 0.5 * (2.0 * PI * (j as f64 + 1.0) / (taps as f64 + 1.0)).cos();
            v * w
        })
        .collect()
}

fn normalize_rms(x: &mut [f64], rms: f64) {
    let p = power(x).sqrt();
    if p > 0.0 {
        x.iter_mut().for_each(|v| *v *= rms / p);
    }
}

/// Seeded unit-RMS noise.
pub fn generate_noise(kind: NoiseKind, len: usize, sample_rate: u32, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let fir = match kind {
        NoiseKind::White => None,
        // −10 dB/decade power slope: amplitude ∝ f^(−1/2)
        NoiseKind::Pink => Some(design_fir(PINK_FIR_TAPS, sample_rate, |f| {
            (f.max(sample_rate as f64 / 256.0) / 1000.0).powf(-0.5)
        })),
        NoiseKind::SpeechShaped => Some(design_fir(127, sample_rate, |f| {
            let hp = (f / 120.0) / (1.0 + (f / 120.0).powi(2)).sqrt();
            hp / (1.0 + (f / 600.0).powi(2)).sqrt()
        })),
    };
    let mut out = match fir {
        None => gaussian(len, &mut rng),
        Some(h) => {
            let raw = gaussian(len + h.len(), &mut rng);
            convolve(&raw, &h, len + h.len())[h.len()..].to_vec()
        }
    };
    normalize_rms(&mut out, 1.0);
    out
}

const VOWELS: [[f64; 3]; 6] = [
    [730.0, 1090.0, 2440.0],
    [270.0, 2290.0, 3010.0],
    [530.0, 1840.0, 2480.0],
    [300.0, 870.0, 2240.0],
    [660.0, 1720.0, 2410.0],
    [570.0, 840.0, 2410.0],
];

fn formant_gain(f: f64, formants: &[f64; 3]) -> f64 {
    const BANDWIDTHS: [f64; 3] = [90.0, 120.0, 170.0];
    const LEVELS: [f64; 3] = [1.0, 0.55, 0.3];
    let peaks: f64 = formants
        .iter()
        .zip(BANDWIDTHS.iter().zip(LEVELS))
        .map(|(fc, (bw, lvl))| lvl * (-0.5 * ((f - fc) / bw).powi(2)).exp())
        .sum();
    0.02 + peaks
}

/// Harmonic, formant-shaped syllables with syllabic envelopes and short
/// fricative bursts. Deterministic in `rng`.
pub fn synthetic_speech(len: usize, sample_rate: u32, f0: f64, rng: &mut impl Rng) -> Vec<f64> {
    let sr = sample_rate as f64;
    let nyq_limit = (0.45 * sr).min(4000.0);
    let mut out = vec![0.0; len];
    let mut t = (rng.gen_range(0.01..0.04) * sr) as usize;
    while t < len {
        let syl = (rng.gen_range(0.12..0.28) * sr) as usize;
        if rng.gen_bool(0.3) {
            // unvoiced onset
            let n = (rng.gen_range(0.03..0.07) * sr) as usize;
            let amp = rng.gen_range(0.05..0.15);
            let mut prev = 0.0;
            for i in 0..n.min(len - t) {
                let w: f64 = rng.sample(StandardNormal);
                let env = (PI * i as f64 / n as f64).sin();
                out[t + i] += amp * env * (w - prev);
                prev = w;
            }
            t += n;
        }
        if t >= len {
            break;
        }
        let formants = VOWELS[rng.gen_range(0..VOWELS.len())];
        let pitch = f0 * rng.gen_range(0.85..1.15);
        let glide = rng.gen_range(-0.15..0.1);
        let level = rng.gen_range(0.6..1.0);
        let harmonics = (nyq_limit / (pitch * 1.2)) as usize;
        let amps: Vec<f64> = (1..=harmonics)
            .map(|h| formant_gain(h as f64 * pitch, &formants) / (h as f64).sqrt())
            .collect();
        let mut phases: Vec<f64> = (0..harmonics).map(|_| rng.gen_range(0.0..2.0 * PI)).collect();
        let n = syl.min(len - t);
        for i in 0..n {
            let x = i as f64 / syl as f64;
            let f = pitch * (1.0 + glide * x);
            let env = (PI * x).sin().powf(0.7) * level;
            let mut acc = 0.0;
            for (h, (a, ph)) in amps.iter().zip(phases.iter_mut()).enumerate() {
                *ph += 2.0 * PI * (h + 1) as f64 * f / sr;
                acc += a * ph.sin();
            }
            out[t + i] += env * acc;
        }
        t += syl + (rng.gen_range(0.03..0.09) * sr) as usize;
    }
    out
}

/// Synthetic talker: hotword then query, each at the same RMS.
#[derive(Debug, Clone, PartialEq)]
pub struct TargetAudio {
    pub samples: Vec<f64>,
    pub hotword_len: usize,
}

pub const TARGET_RMS: f64 = 0.1;

pub fn synthetic_target(hotword_s: f64, query_s: f64, sample_rate: u32, seed: u64) -> TargetAudio {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f0 = rng.gen_range(100.0..210.0);
    let sr = sample_rate as f64;
    let mut hotword = synthetic_speech((hotword_s * sr).round() as usize, sample_rate, f0, &mut rng);
    let mut query = synthetic_speech((query_s * sr).round() as usize, sample_rate, f0, &mut rng);
    normalize_rms(&mut hotword, TARGET_RMS);
    normalize_rms(&mut query, TARGET_RMS);
    let hotword_len = hotword.len();
    hotword.extend(query);
    TargetAudio {
        samples: hotword,
        hotword_len,
    }
}

/// Parameters of a fully synthetic far-field scene.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSceneParams {
    pub channels: usize,
    pub snr_db: Option<f64>,
    pub context_length_s: f64,
    pub noise: NoiseKind,
    pub desired_in_context: bool,
    pub seed: u64,
    /// Source azimuths; unset ones are drawn without replacement from
    /// [`SPEAKER_AZIMUTHS_DEG`] using the scene seed.
    pub target_azimuth_deg: Option<f64>,
    pub interferer_azimuth_deg: Option<f64>,
    pub hotword_s: f64,
    pub query_s: f64,
    pub sample_rate: u32,
    pub boundary_jitter_ms: f64,
}

impl Default for SyntheticSceneParams {
    fn default() -> Self {
        Self {
            channels: 3,
            snr_db: Some(0.0),
            context_length_s: 8.0,
            noise: NoiseKind::SpeechShaped,
            desired_in_context: false,
            seed: 0,
            target_azimuth_deg: None,
            interferer_azimuth_deg: None,
            hotword_s: 1.0,
            query_s: 2.0,
            sample_rate: DEFAULT_SAMPLE_RATE,
            boundary_jitter_ms: 0.0,
        }
    }
}

/// Independent per-purpose seeds derived from one scene seed.
fn sub_seed(seed: u64, stream: u64) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03)
}

impl SyntheticSceneParams {
    /// Resolved `(target, interferer)` azimuths in degrees.
    pub fn azimuths(&self) -> (f64, f64) {
        let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(self.seed, 4));
        let t = rng.gen_range(0..SPEAKER_AZIMUTHS_DEG.len());
        let i = (t + rng.gen_range(1..SPEAKER_AZIMUTHS_DEG.len())) % SPEAKER_AZIMUTHS_DEG.len();
        (
            self.target_azimuth_deg.unwrap_or(SPEAKER_AZIMUTHS_DEG[t]),
            self.interferer_azimuth_deg.unwrap_or(SPEAKER_AZIMUTHS_DEG[i]),
        )
    }
}

pub fn synthetic_scene_spec(p: &SyntheticSceneParams) -> Result<SceneSpec> {
    let (target_az, interferer_az) = p.azimuths();
    let target = synthetic_target(p.hotword_s, p.query_s, p.sample_rate, sub_seed(p.seed, 1));
    let total = (p.context_length_s * p.sample_rate as f64).round() as usize + target.samples.len();
    let noise = generate_noise(p.noise, total, p.sample_rate, sub_seed(p.seed, 2));
    Ok(SceneSpec {
        target: SourceSpec {
            wave: target.samples,
            position_tag: format!("az{target_az}"),
            rendering: far_field_rendering(p.channels, target_az, p.sample_rate)?,
        },
        hotword_len: target.hotword_len,
        interferer: SourceSpec {
            wave: noise,
            position_tag: format!("az{interferer_az}"),
            rendering: far_field_rendering(p.channels, interferer_az, p.sample_rate)?,
        },
        snr_db: p.snr_db,
        context_length_s: p.context_length_s,
        desired_in_context: p.desired_in_context,
        sample_rate: p.sample_rate,
        channel_count: p.channels,
        reference_channel: 0,
        boundary_jitter_ms: p.boundary_jitter_ms,
        jitter_seed: sub_seed(p.seed, 3),
    })
}

pub fn synthetic_scene(p: &SyntheticSceneParams) -> Result<Scene> {
    mix_scene(&synthetic_scene_spec(p)?)
}

/// Two-channel scene in which channel 0's interference is an exact FIR of
/// channel 1's, with taps spaced one hop apart so the relation also holds
/// exactly between STFT frames.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExactFirParams {
    pub snr_db: Option<f64>,
    pub context_length_s: f64,
    pub desired_in_context: bool,
    pub seed: u64,
    /// Channel-0 interference `Σ taps[l]·n(t − l·hop)`.
    pub taps: Vec<f64>,
    pub hop: usize,
    /// Gain of the talker on channel 1; channel 0 carries it at unit gain.
    pub aux_target_gain: f64,
    pub noise: NoiseKind,
    pub hotword_s: f64,
    pub query_s: f64,
    pub sample_rate: u32,
}

impl Default for ExactFirParams {
    fn default() -> Self {
        Self {
            snr_db: Some(-12.0),
            context_length_s: 8.0,
            desired_in_context: false,
            seed: 0,
            taps: vec![0.9, -0.45, 0.2],
            hop: FrameParams::default().hop_size,
            aux_target_gain: 0.0,
            noise: NoiseKind::White,
            hotword_s: 1.0,
            query_s: 2.0,
            sample_rate: DEFAULT_SAMPLE_RATE,
        }
    }
}

pub fn exact_fir_scene_spec(p: &ExactFirParams) -> Result<SceneSpec> {
    if p.taps.is_empty() || p.hop == 0 {
        return Err(Error::InvalidParameter("exact FIR needs taps and a hop".into()));
    }
    let target = synthetic_target(p.hotword_s, p.query_s, p.sample_rate, sub_seed(p.seed, 1));
    let total = (p.context_length_s * p.sample_rate as f64).round() as usize + target.samples.len();
    let noise = generate_noise(p.noise, total, p.sample_rate, sub_seed(p.seed, 2));
    let mut fir = vec![0.0; (p.taps.len() - 1) * p.hop + 1];
    for (l, a) in p.taps.iter().enumerate() {
        fir[l * p.hop] = *a;
    }
    Ok(SceneSpec {
        target: SourceSpec {
            wave: target.samples,
            position_tag: "talker".into(),
            rendering: Rendering::DelayGain {
                delays: vec![0.0, 0.0],
                gains: vec![1.0, p.aux_target_gain],
            },
        },
        hotword_len: target.hotword_len,
        interferer: SourceSpec {
            wave: noise,
            position_tag: "interferer".into(),
            rendering: Rendering::Rir {
                responses: vec![fir, vec![1.0]],
                sample_rate: p.sample_rate,
            },
        },
        snr_db: p.snr_db,
        context_length_s: p.context_length_s,
        desired_in_context: p.desired_in_context,
        sample_rate: p.sample_rate,
        channel_count: 2,
        reference_channel: 0,
        boundary_jitter_ms: 0.0,
        jitter_seed: 0,
    })
}

pub fn exact_fir_scene(p: &ExactFirParams) -> Result<Scene> {
    mix_scene(&exact_fir_scene_spec(p)?)
}

/// Segmentation sidecar written next to mixed scenes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationSidecar {
    pub context_start: usize,
    pub hotword_start: usize,
    pub hotword_end: usize,
    pub query_end: usize,
    pub sample_rate: u32,
}

impl SegmentationSidecar {
    pub fn new(seg: &UtteranceSegmentation, sample_rate: u32) -> Self {
        Self {
            context_start: seg.context_start,
            hotword_start: seg.hotword_start,
            hotword_end: seg.hotword_end,
            query_end: seg.query_end,
            sample_rate,
        }
    }

    pub fn segmentation(&self) -> Result<UtteranceSegmentation> {
        UtteranceSegmentation::new(
            self.context_start,
            self.hotword_start,
            self.hotword_end,
            self.query_end,
        )
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Where a manifest source sits relative to the array.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PlacementEntry {
    pub position_tag: Option<String>,
    /// Far-field direction on the preset array.
    pub azimuth_deg: Option<f64>,
    pub delays: Option<Vec<f64>>,
    pub gains: Option<Vec<f64>>,
    /// One impulse-response WAV per channel.
    pub rirs: Option<Vec<PathBuf>>,
}

/// Talker audio: a WAV with hotword boundaries, or synthetic speech.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TargetEntry {
    pub path: Option<PathBuf>,
    /// Sample indices within the file.
    pub hotword_start: Option<usize>,
    pub hotword_end: Option<usize>,
    pub query_end: Option<usize>,
    pub hotword_s: Option<f64>,
    pub query_s: Option<f64>,
    #[serde(flatten)]
    pub placement: PlacementEntry,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct InterfererEntry {
    pub path: Option<PathBuf>,
    /// Generated noise when no path is given.
    pub noise: Option<NoiseKind>,
    #[serde(flatten)]
    pub placement: PlacementEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneEntry {
    pub id: Option<String>,
    pub channels: Option<usize>,
    pub snr_db: Option<f64>,
    #[serde(default = "default_context")]
    pub context_length_s: f64,
    #[serde(default)]
    pub desired_in_context: bool,
    #[serde(default)]
    pub boundary_jitter_ms: f64,
    pub seed: Option<u64>,
    #[serde(default)]
    pub target: TargetEntry,
    #[serde(default)]
    pub interferer: InterfererEntry,
}

fn default_context() -> f64 {
    8.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneManifest {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_rate")]
    pub sample_rate: u32,
    #[serde(default = "default_channels")]
    pub channels: usize,
    pub scenes: Vec<SceneEntry>,
}

fn default_rate() -> u32 {
    DEFAULT_SAMPLE_RATE
}

fn default_channels() -> usize {
    3
}

impl SceneManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: Self = serde_json::from_str(text)?;
        if manifest.scenes.is_empty() {
            return Err(Error::InvalidParameter("manifest lists no scenes".into()));
        }
        Ok(manifest)
    }

    pub fn scene_id(&self, index: usize) -> String {
        self.scenes[index]
            .id
            .clone()
            .unwrap_or_else(|| format!("scene{index}"))
    }

    /// Resolves entry `index` into a scene spec; relative paths are taken
    /// from `base_dir`.
    pub fn scene_spec(&self, index: usize, base_dir: &Path) -> Result<SceneSpec> {
        let e = &self.scenes[index];
        let sr = self.sample_rate;
        let m = e.channels.unwrap_or(self.channels);
        let seed = e.seed.unwrap_or(self.seed.wrapping_add(index as u64));
        let resolve = |p: &Path| -> PathBuf {
            if p.is_absolute() {
                p.to_path_buf()
            } else {
                base_dir.join(p)
            }
        };
        let load_mono = |p: &Path| -> Result<Vec<f64>> {
            let w = read_wav_at(resolve(p), sr)?;
            Ok(w.channel(0).to_vec())
        };

        let (target_wave, hotword_len) = match &e.target.path {
            Some(p) => {
                let audio = load_mono(p)?;
                let hs = e.target.hotword_start.unwrap_or(0);
                let he = e.target.hotword_end.ok_or_else(|| {
                    Error::InvalidParameter("target.hotword_end is required with a path".into())
                })?;
                let qe = e.target.query_end.unwrap_or(audio.len());
                if !(hs < he && he <= qe && qe <= audio.len()) {
                    return Err(Error::InvalidSegmentation(format!(
                        "target boundaries {hs} < {he} <= {qe} <= {} violated",
                        audio.len()
                    )));
                }
                (audio[hs..qe].to_vec(), he - hs)
            }
            None => {
                let t = synthetic_target(
                    e.target.hotword_s.unwrap_or(1.0),
                    e.target.query_s.unwrap_or(2.0),
                    sr,
                    sub_seed(seed, 1),
                );
                (t.samples, t.hotword_len)
            }
        };
        let total = (e.context_length_s * sr as f64).round() as usize + target_wave.len();
        let noise_wave = match (&e.interferer.path, e.interferer.noise) {
            (Some(p), _) => load_mono(p)?,
            (None, kind) => generate_noise(
                kind.unwrap_or(NoiseKind::SpeechShaped),
                total,
                sr,
                sub_seed(seed, 2),
            ),
        };
        let target = SourceSpec {
            wave: target_wave,
            position_tag: e
                .target
                .placement
                .position_tag
                .clone()
                .unwrap_or_else(|| "target".into()),
            rendering: self.rendering(&e.target.placement, m, SPEAKER_AZIMUTHS_DEG[3], &resolve)?,
        };
        let interferer = SourceSpec {
            wave: noise_wave,
            position_tag: e
                .interferer
                .placement
                .position_tag
                .clone()
                .unwrap_or_else(|| "interferer".into()),
            rendering: self.rendering(&e.interferer.placement, m, SPEAKER_AZIMUTHS_DEG[1], &resolve)?,
        };
        Ok(SceneSpec {
            target,
            hotword_len,
            interferer,
            snr_db: e.snr_db,
            context_length_s: e.context_length_s,
            desired_in_context: e.desired_in_context,
            sample_rate: sr,
            channel_count: m,
            reference_channel: 0,
            boundary_jitter_ms: e.boundary_jitter_ms,
            jitter_seed: sub_seed(seed, 3),
        })
    }

    fn rendering(
        &self,
        p: &PlacementEntry,
        channels: usize,
        default_azimuth: f64,
        resolve: &dyn Fn(&Path) -> PathBuf,
    ) -> Result<Rendering> {
        if let Some(rirs) = &p.rirs {
            let mut responses = Vec::with_capacity(rirs.len());
            for path in rirs {
                let w = read_wav_at(resolve(path), self.sample_rate)?;
                responses.push(w.channel(0).to_vec());
            }
            return Ok(Rendering::Rir {
                responses,
                sample_rate: self.sample_rate,
            });
        }
        if p.delays.is_some() || p.gains.is_some() {
            let delays = p.delays.clone().unwrap_or_else(|| vec![0.0; channels]);
            let gains = p.gains.clone().unwrap_or_else(|| vec![1.0; channels]);
            return Ok(Rendering::DelayGain { delays, gains });
        }
        far_field_rendering(channels, p.azimuth_deg.unwrap_or(default_azimuth), self.sample_rate)
    }
}
