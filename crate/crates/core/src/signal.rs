//! Multichannel time-domain and STFT-domain containers.
//!
//! Spectrograms are one-sided (`fft_size / 2 + 1` bins) and stored with the
//! channel index innermost, so the M-vector `Y(k, n)` that every subband
//! algorithm consumes is a contiguous slice.

use std::ops::Range;
use std::sync::Arc;

use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_SAMPLE_RATE: u32 = 16_000;

/// An M-channel block of real samples at full scale ±1.0.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelWave {
    channels: Vec<Vec<f64>>,
    sample_rate: u32,
}

impl MultiChannelWave {
    pub fn new(channels: Vec<Vec<f64>>, sample_rate: u32) -> Result<Self> {
        if channels.is_empty() {
            return Err(Error::InvalidWave("channel_count must be >= 1".into()));
        }
        let len = channels[0].len();
        if let Some((m, c)) = channels.iter().enumerate().find(|(_, c)| c.len() != len) {
            return Err(Error::InvalidWave(format!(
                "channel {m} has {} samples, channel 0 has {len}",
                c.len()
            )));
        }
        if sample_rate == 0 {
            return Err(Error::InvalidWave("sample_rate must be positive".into()));
        }
        Ok(Self {
            channels,
            sample_rate,
        })
    }

    pub fn mono(samples: Vec<f64>, sample_rate: u32) -> Result<Self> {
        Self::new(vec![samples], sample_rate)
    }

    pub fn zeros(channel_count: usize, len: usize, sample_rate: u32) -> Result<Self> {
        Self::new(vec![vec![0.0; len]; channel_count.max(1)], sample_rate)
    }

    pub fn channel_count(&self) -> usize {
        self.channels.len()
    }

    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    pub fn channel(&self, m: usize) -> &[f64] {
        &self.channels[m]
    }

    pub fn channel_mut(&mut self, m: usize) -> &mut [f64] {
        &mut self.channels[m]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Copies out a sample range of every channel.
    pub fn slice(&self, range: Range<usize>) -> Result<Self> {
        if range.start > range.end || range.end > self.len() {
            return Err(Error::InvalidWave(format!(
                "range {range:?} outside 0..{}",
                self.len()
            )));
        }
        let channels = self
            .channels
            .iter()
            .map(|c| c[range.clone()].to_vec())
            .collect();
        Self::new(channels, self.sample_rate)
    }

    /// Keeps only the listed channels, in the given order.
    pub fn select_channels(&self, indices: &[usize]) -> Result<Self> {
        let channels = indices
            .iter()
            .map(|&m| {
                self.channels.get(m).cloned().ok_or_else(|| {
                    Error::InvalidWave(format!("channel {m} out of range"))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(channels, self.sample_rate)
    }
}

/// Analysis/synthesis window pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// Square-root periodic Hann for both analysis and synthesis.
    SqrtHann,
    Rectangular,
}

impl Window {
    pub fn coefficients(self, len: usize) -> Vec<f64> {
        match self {
            Window::SqrtHann => (0..len)
                .map(|i| {
                    let phase = 2.0 * std::f64::consts::PI * i as f64 / len as f64;
                    (0.5 * (1.0 - phase.cos())).sqrt()
                })
                .collect(),
            Window::Rectangular => vec![1.0; len],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameParams {
    pub fft_size: usize,
    pub hop_size: usize,
    pub window: Window,
}

impl Default for FrameParams {
    fn default() -> Self {
        Self {
            fft_size: 512,
            hop_size: 256,
            window: Window::SqrtHann,
        }
    }
}

impl FrameParams {
    pub fn new(fft_size: usize, hop_size: usize, window: Window) -> Result<Self> {
        let params = Self {
            fft_size,
            hop_size,
            window,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let invalid = |msg: String| Err(Error::InvalidFrameParams(msg));
        if self.fft_size < 2 || !self.fft_size.is_power_of_two() {
            return invalid(format!("fft_size {} is not a power of two", self.fft_size));
        }
        if self.hop_size == 0 || self.fft_size % self.hop_size != 0 {
            return invalid(format!(
                "hop_size {} does not divide fft_size {}",
                self.hop_size, self.fft_size
            ));
        }
        let sums = self.overlap_sums();
        let mean = sums.iter().sum::<f64>() / sums.len() as f64;
        if mean <= 0.0 || sums.iter().any(|s| (s - mean).abs() > 1e-9 * mean) {
            return invalid(format!(
                "{:?} window is not constant-overlap-add at hop {}",
                self.window, self.hop_size
            ));
        }
        Ok(())
    }

    pub fn bin_count(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Sum of analysis·synthesis window products over all frames covering
    /// each sample position within one hop.
    pub fn overlap_sums(&self) -> Vec<f64> {
        let w = self.window.coefficients(self.fft_size);
        (0..self.hop_size)
            .map(|i| {
                (i..self.fft_size)
                    .step_by(self.hop_size)
                    .map(|j| w[j] * w[j])
                    .sum()
            })
            .collect()
    }

    pub fn overlap_gain(&self) -> f64 {
        let sums = self.overlap_sums();
        sums.iter().sum::<f64>() / sums.len() as f64
    }

    /// Number of frames produced for a signal of `len` samples. The tail is
    /// zero-padded until every sample past the first hop lies under the full
    /// set of overlapping frames.
    pub fn frame_count(&self, len: usize) -> usize {
        len.max(1).div_ceil(self.hop_size)
    }

    pub fn frame_start(&self, n: usize) -> usize {
        n * self.hop_size
    }

    pub fn frame_center(&self, n: usize) -> usize {
        n * self.hop_size + self.fft_size / 2
    }

    /// Index of the first frame whose center lies at or after `sample`.
    pub fn first_frame_centered_at_or_after(&self, sample: usize) -> usize {
        let half = self.fft_size / 2;
        if sample <= half {
            0
        } else {
            (sample - half).div_ceil(self.hop_size)
        }
    }

    /// Frames whose support overlaps the sample range.
    pub fn frames_overlapping(&self, samples: Range<usize>, frame_count: usize) -> Range<usize> {
        let first = if samples.start >= self.fft_size {
            (samples.start - self.fft_size) / self.hop_size + 1
        } else {
            0
        };
        let last = samples.end.div_ceil(self.hop_size).min(frame_count);
        first.min(last)..last
    }
}

/// STFT frames of an M-channel signal, indexed (channel m, frame n, bin k).
#[derive(Debug, Clone, PartialEq)]
pub struct MultiChannelSpectrogram {
    data: Vec<Complex64>,
    channel_count: usize,
    frame_count: usize,
    bin_count: usize,
    params: FrameParams,
    sample_rate: u32,
}

impl MultiChannelSpectrogram {
    pub fn zeros(
        channel_count: usize,
        frame_count: usize,
        params: FrameParams,
        sample_rate: u32,
    ) -> Self {
        let bin_count = params.bin_count();
        Self {
            data: vec![Complex64::new(0.0, 0.0); channel_count * frame_count * bin_count],
            channel_count,
            frame_count,
            bin_count,
            params,
            sample_rate,
        }
    }

    /// Builds a spectrogram from data laid out as `[frame][bin][channel]`.
    pub fn from_raw(
        data: Vec<Complex64>,
        channel_count: usize,
        frame_count: usize,
        bin_count: usize,
        params: FrameParams,
        sample_rate: u32,
    ) -> Result<Self> {
        if data.len() != channel_count * frame_count * bin_count {
            return Err(Error::ShapeMismatch(format!(
                "{} values for {channel_count}x{frame_count}x{bin_count}",
                data.len()
            )));
        }
        Ok(Self {
            data,
            channel_count,
            frame_count,
            bin_count,
            params,
            sample_rate,
        })
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    pub fn frame_count(&self) -> usize {
        self.frame_count
    }

    pub fn bin_count(&self) -> usize {
        self.bin_count
    }

    pub fn params(&self) -> &FrameParams {
        &self.params
    }

    pub fn sample_rate(&self) -> u32 {
        self.sample_rate
    }

    #[inline]
    fn offset(&self, n: usize, k: usize) -> usize {
        (n * self.bin_count + k) * self.channel_count
    }

    #[inline]
    pub fn get(&self, m: usize, n: usize, k: usize) -> Complex64 {
        self.data[self.offset(n, k) + m]
    }

    #[inline]
    pub fn set(&mut self, m: usize, n: usize, k: usize, value: Complex64) {
        let i = self.offset(n, k) + m;
        self.data[i] = value;
    }

    /// The M-vector `Y(k, n)`.
    #[inline]
    pub fn snapshot(&self, n: usize, k: usize) -> &[Complex64] {
        let i = self.offset(n, k);
        &self.data[i..i + self.channel_count]
    }

    #[inline]
    pub fn snapshot_mut(&mut self, n: usize, k: usize) -> &mut [Complex64] {
        let i = self.offset(n, k);
        let m = self.channel_count;
        &mut self.data[i..i + m]
    }

    pub fn raw(&self) -> &[Complex64] {
        &self.data
    }

    /// Extracts one channel as a single-channel spectrogram.
    pub fn channel(&self, m: usize) -> Self {
        let data = self
            .data
            .iter()
            .skip(m)
            .step_by(self.channel_count)
            .copied()
            .collect();
        Self {
            data,
            channel_count: 1,
            frame_count: self.frame_count,
            bin_count: self.bin_count,
            params: self.params,
            sample_rate: self.sample_rate,
        }
    }

    pub fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.bin_count != other.bin_count
            || self.frame_count != other.frame_count
            || self.channel_count != other.channel_count
        {
            return Err(Error::ShapeMismatch(format!(
                "spectrogram {}x{}x{} vs {}x{}x{}",
                self.channel_count,
                self.frame_count,
                self.bin_count,
                other.channel_count,
                other.frame_count,
                other.bin_count
            )));
        }
        Ok(())
    }
}

struct Transforms {
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl Transforms {
    fn new(fft_size: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            forward: planner.plan_fft_forward(fft_size),
            inverse: planner.plan_fft_inverse(fft_size),
        }
    }
}

/// Windowed, one-sided short-time Fourier transform of every channel.
pub fn stft(wave: &MultiChannelWave, params: &FrameParams) -> Result<MultiChannelSpectrogram> {
    if wave.is_empty() {
        return Err(Error::EmptyInput);
    }
    params.validate()?;
    let n_fft = params.fft_size;
    let bins = params.bin_count();
    let frames = params.frame_count(wave.len());
    let channels = wave.channel_count();
    let window = params.window.coefficients(n_fft);
    let fft = Transforms::new(n_fft).forward;

    let per_channel: Vec<Vec<Complex64>> = wave
        .channels()
        .par_iter()
        .map(|x| {
            let mut out = Vec::with_capacity(frames * bins);
            let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
            let mut scratch = vec![Complex64::new(0.0, 0.0); fft.get_inplace_scratch_len()];
            for n in 0..frames {
                let start = params.frame_start(n);
                for (j, b) in buf.iter_mut().enumerate() {
                    let v = x.get(start + j).copied().unwrap_or(0.0);
                    *b = Complex64::new(v * window[j], 0.0);
                }
                fft.process_with_scratch(&mut buf, &mut scratch);
                out.extend_from_slice(&buf[..bins]);
                // real input: DC and Nyquist are real
                let base = out.len() - bins;
                out[base].im = 0.0;
                out[base + bins - 1].im = 0.0;
            }
            out
        })
        .collect();

    let mut spec = MultiChannelSpectrogram::zeros(channels, frames, *params, wave.sample_rate());
    for (m, values) in per_channel.iter().enumerate() {
        for n in 0..frames {
            for k in 0..bins {
                spec.set(m, n, k, values[n * bins + k]);
            }
        }
    }
    Ok(spec)
}

/// Overlap-add synthesis. Output length is `(frames - 1) * hop + fft_size`.
pub fn istft(spec: &MultiChannelSpectrogram) -> Result<MultiChannelWave> {
    let params = spec.params();
    params.validate()?;
    if spec.bin_count() != params.bin_count() {
        return Err(Error::ShapeMismatch(format!(
            "{} bins for fft_size {}",
            spec.bin_count(),
            params.fft_size
        )));
    }
    let n_fft = params.fft_size;
    let bins = spec.bin_count();
    let frames = spec.frame_count();
    let out_len = (frames.max(1) - 1) * params.hop_size + n_fft;
    let window = params.window.coefficients(n_fft);
    let scale = 1.0 / (n_fft as f64 * params.overlap_gain());
    let ifft = Transforms::new(n_fft).inverse;

    let channels: Vec<Vec<f64>> = (0..spec.channel_count())
        .into_par_iter()
        .map(|m| {
            let mut out = vec![0.0; out_len];
            let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
            let mut scratch = vec![Complex64::new(0.0, 0.0); ifft.get_inplace_scratch_len()];
            for n in 0..frames {
                for k in 0..bins {
                    buf[k] = spec.get(m, n, k);
                }
                buf[0].im = 0.0;
                buf[bins - 1].im = 0.0;
                for k in bins..n_fft {
                    buf[k] = buf[n_fft - k].conj();
                }
                ifft.process_with_scratch(&mut buf, &mut scratch);
                let start = params.frame_start(n);
                for j in 0..n_fft {
                    out[start + j] += buf[j].re * window[j] * scale;
                }
            }
            out
        })
        .collect();
    MultiChannelWave::new(channels, spec.sample_rate())
}

/// Sample-indexed utterance boundaries: noise context, hotword, query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct UtteranceSegmentation {
    pub context_start: usize,
    pub context_end: usize,
    pub hotword_start: usize,
    pub hotword_end: usize,
    pub query_end: usize,
}

impl UtteranceSegmentation {
    /// The context always ends where the hotword starts.
    pub fn new(
        context_start: usize,
        hotword_start: usize,
        hotword_end: usize,
        query_end: usize,
    ) -> Result<Self> {
        let seg = Self {
            context_start,
            context_end: hotword_start,
            hotword_start,
            hotword_end,
            query_end,
        };
        seg.validate()?;
        Ok(seg)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::InvalidSegmentation(msg.to_string()));
        if self.context_start > self.context_end {
            return fail("context_start <= context_end violated");
        }
        if self.context_end > self.hotword_start {
            return fail("context_end <= hotword_start violated");
        }
        if self.hotword_start >= self.hotword_end {
            return fail("hotword_start < hotword_end violated");
        }
        if self.hotword_end > self.query_end {
            return fail("hotword_end <= query_end violated");
        }
        if self.hotword_start != self.context_end {
            return fail("hotword_start == context_end violated");
        }
        Ok(())
    }

    pub fn context(&self) -> Range<usize> {
        self.context_start..self.context_end
    }

    pub fn hotword(&self) -> Range<usize> {
        self.hotword_start..self.hotword_end
    }

    pub fn query(&self) -> Range<usize> {
        self.hotword_end..self.query_end
    }

    /// Hotword plus query, the span the enhanced output covers.
    pub fn utterance(&self) -> Range<usize> {
        self.hotword_start..self.query_end
    }

    pub fn context_len(&self) -> usize {
        self.context_end - self.context_start
    }
}

/// Frame-index ranges for each segment. A frame belongs to the segment that
/// contains its center sample.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SegmentFrames {
    pub context: Range<usize>,
    pub hotword: Range<usize>,
    pub query: Range<usize>,
}

impl SegmentFrames {
    pub fn clipped(&self, frame_count: usize) -> Self {
        let clip = |r: &Range<usize>| r.start.min(frame_count)..r.end.min(frame_count);
        Self {
            context: clip(&self.context),
            hotword: clip(&self.hotword),
            query: clip(&self.query),
        }
    }

    pub fn hotword_and_query(&self) -> Range<usize> {
        self.hotword.start..self.query.end
    }
}

pub fn segment_frames(seg: &UtteranceSegmentation, params: &FrameParams) -> Result<SegmentFrames> {
    seg.validate()?;
    let at = |s| params.first_frame_centered_at_or_after(s);
    let frames = SegmentFrames {
        context: at(seg.context_start)..at(seg.context_end),
        hotword: at(seg.hotword_start)..at(seg.hotword_end),
        query: at(seg.hotword_end)..at(seg.query_end),
    };
    if frames.context.is_empty() {
        return Err(Error::SegmentTooShort("context"));
    }
    if frames.hotword.is_empty() {
        return Err(Error::SegmentTooShort("hotword"));
    }
    if frames.query.is_empty() && !seg.query().is_empty() {
        return Err(Error::SegmentTooShort("query"));
    }
    Ok(frames)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noise(channels: usize, len: usize, seed: u64) -> MultiChannelWave {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let chans = (0..channels)
            .map(|_| (0..len).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        MultiChannelWave::new(chans, 16_000).unwrap()
    }

    #[test]
    fn wave_rejects_ragged_channels() {
        assert!(MultiChannelWave::new(vec![vec![0.0; 3], vec![0.0; 4]], 16_000).is_err());
        assert!(MultiChannelWave::new(vec![], 16_000).is_err());
    }

    #[test]
    fn frame_params_validation() {
        assert!(FrameParams::new(512, 256, Window::SqrtHann).is_ok());
        assert!(FrameParams::new(512, 128, Window::SqrtHann).is_ok());
        assert!(matches!(
            FrameParams::new(500, 250, Window::SqrtHann),
            Err(Error::InvalidFrameParams(_))
        ));
        assert!(FrameParams::new(512, 200, Window::SqrtHann).is_err());
        // sqrt-Hann without overlap is not COLA
        assert!(FrameParams::new(512, 512, Window::SqrtHann).is_err());
        assert!(FrameParams::new(512, 512, Window::Rectangular).is_ok());
    }

    #[test]
    fn cola_sum_is_constant() {
        for params in [
            FrameParams::default(),
            FrameParams::new(256, 64, Window::SqrtHann).unwrap(),
        ] {
            let sums = params.overlap_sums();
            let g = params.overlap_gain();
            assert!(sums.iter().all(|s| (s - g).abs() <= 1e-9 * g));
        }
    }

    #[test]
    fn empty_wave_is_rejected() {
        let wave = MultiChannelWave::zeros(2, 0, 16_000).unwrap();
        assert!(matches!(
            stft(&wave, &FrameParams::default()),
            Err(Error::EmptyInput)
        ));
    }

    #[test]
    fn zero_signal_gives_zero_spectrogram() {
        let wave = MultiChannelWave::zeros(2, 3000, 16_000).unwrap();
        let spec = stft(&wave, &FrameParams::default()).unwrap();
        assert!(spec.raw().iter().all(|c| c.norm() == 0.0));
        let back = istft(&spec).unwrap();
        assert!(back.channels().iter().flatten().all(|&x| x == 0.0));
    }

    #[test]
    fn frame_count_pads_tail() {
        let p = FrameParams::default();
        assert_eq!(p.frame_count(512), 2);
        assert_eq!(p.frame_count(100), 1);
        assert_eq!(p.frame_count(768), 3);
        assert_eq!(p.frame_count(769), 4);
        let wave = noise(1, 769, 1);
        let spec = stft(&wave, &p).unwrap();
        assert_eq!(spec.frame_count(), 4);
        assert_eq!(istft(&spec).unwrap().len(), 3 * 256 + 512);
        let rect = FrameParams::new(512, 512, Window::Rectangular).unwrap();
        assert_eq!(rect.frame_count(512), 1);
        assert_eq!(rect.frame_count(513), 2);
    }

    #[test]
    fn dc_and_nyquist_are_real() {
        let spec = stft(&noise(3, 4000, 2), &FrameParams::default()).unwrap();
        for m in 0..3 {
            for n in 0..spec.frame_count() {
                assert_eq!(spec.get(m, n, 0).im, 0.0);
                assert_eq!(spec.get(m, n, spec.bin_count() - 1).im, 0.0);
            }
        }
    }

    #[test]
    fn bin_centered_sinusoid_concentrates_in_its_bin() {
        let params = FrameParams::new(512, 512, Window::Rectangular).unwrap();
        let k0 = 37;
        let x: Vec<f64> = (0..512)
            .map(|t| (2.0 * std::f64::consts::PI * k0 as f64 * t as f64 / 512.0).cos())
            .collect();
        let spec = stft(&MultiChannelWave::mono(x.clone(), 16_000).unwrap(), &params).unwrap();
        // brute-force DFT oracle
        for k in 0..spec.bin_count() {
            let mut acc = Complex64::new(0.0, 0.0);
            for (t, v) in x.iter().enumerate() {
                let ang = -2.0 * std::f64::consts::PI * (k * t) as f64 / 512.0;
                acc += Complex64::from_polar(*v, ang);
            }
            assert!((spec.get(0, 0, k) - acc).norm() < 1e-8);
        }
        let peak = spec.get(0, 0, k0).norm();
        for k in (0..spec.bin_count()).filter(|&k| k != k0) {
            assert!(20.0 * (spec.get(0, 0, k).norm() / peak).log10() <= -60.0);
        }
    }

    #[test]
    fn bin_centered_sinusoid_with_sqrt_hann_window() {
        let params = FrameParams::new(512, 256, Window::SqrtHann).unwrap();
        let k0 = 64;
        let x: Vec<f64> = (0..512)
            .map(|t| (2.0 * std::f64::consts::PI * k0 as f64 * t as f64 / 512.0).sin())
            .collect();
        let w = Window::SqrtHann.coefficients(512);
        let spec = stft(&MultiChannelWave::mono(x.clone(), 16_000).unwrap(), &params).unwrap();
        let dft = |k: usize| {
            x.iter().enumerate().fold(Complex64::new(0.0, 0.0), |acc, (t, v)| {
                acc + Complex64::from_polar(
                    v * w[t],
                    -2.0 * std::f64::consts::PI * (k * t) as f64 / 512.0,
                )
            })
        };
        for k in [0, 10, 63, 64, 65, 100, 256] {
            assert!((spec.get(0, 0, k) - dft(k)).norm() < 1e-8);
        }
        let peak = spec.get(0, 0, k0).norm();
        for k in (0..spec.bin_count()).filter(|&k| k != k0) {
            assert!(spec.get(0, 0, k).norm() < peak);
        }
    }

    #[test]
    fn impulse_round_trip_matches_windowed_square() {
        let params = FrameParams::default();
        let mut x = vec![0.0; 512];
        x[100] = 1.0;
        let spec = stft(&MultiChannelWave::mono(x, 16_000).unwrap(), &params).unwrap();
        let y = istft(&spec).unwrap();
        let w = Window::SqrtHann.coefficients(512);
        // direct: the impulse passes analysis and synthesis windows once
        for (t, v) in y.channel(0).iter().enumerate() {
            let expected = if t == 100 {
                w[100] * w[100] / params.overlap_gain()
            } else {
                0.0
            };
            assert!((v - expected).abs() < 1e-12, "t={t}");
        }
    }

    #[test]
    fn segment_frames_by_center() {
        let params = FrameParams::default();
        let seg = UtteranceSegmentation::new(0, 128_000, 144_000, 160_000).unwrap();
        let f = segment_frames(&seg, &params).unwrap();
        assert!(f.context.clone().all(|n| params.frame_center(n) < 128_000));
        assert!(params.frame_center(f.context.end) >= 128_000);
        assert_eq!(f.context.end, f.hotword.start);
        assert_eq!(f.hotword.end, f.query.start);
    }

    #[test]
    fn hotword_of_one_frame_length_has_a_frame() {
        let params = FrameParams::default();
        for start in [1000, 1001, 1100, 1255, 1256] {
            let seg = UtteranceSegmentation::new(0, start, start + 512, start + 1024).unwrap();
            let f = segment_frames(&seg, &params).unwrap();
            assert!(!f.hotword.is_empty());
        }
    }

    #[test]
    fn too_short_segments_error() {
        let params = FrameParams::default();
        let seg = UtteranceSegmentation::new(0, 100, 5000, 6000).unwrap();
        assert!(matches!(
            segment_frames(&seg, &params),
            Err(Error::SegmentTooShort("context"))
        ));
        let seg = UtteranceSegmentation::new(0, 5000, 5100, 6000).unwrap();
        assert!(matches!(
            segment_frames(&seg, &params),
            Err(Error::SegmentTooShort(_))
        ));
    }

    #[test]
    fn segmentation_invariants() {
        assert!(UtteranceSegmentation::new(0, 100, 100, 200).is_err());
        assert!(UtteranceSegmentation::new(0, 100, 200, 150).is_err());
        let bad = UtteranceSegmentation {
            context_start: 0,
            context_end: 90,
            hotword_start: 100,
            hotword_end: 200,
            query_end: 300,
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn frames_overlapping_covers_span() {
        let p = FrameParams::default();
        let r = p.frames_overlapping(1000..5000, 100);
        for n in 0..100 {
            let s = p.frame_start(n);
            let overlaps = s < 5000 && s + 512 > 1000;
            assert_eq!(r.contains(&n), overlaps, "n={n}");
        }
    }
}
