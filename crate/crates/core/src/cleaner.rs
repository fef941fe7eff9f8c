//! Subband adaptive noise canceller.
//!
//! In every frequency bin, a tapped delay line of the last `L` STFT values of
//! each auxiliary microphone feeds a complex FIR whose summed output is
//! subtracted from the reference microphone:
//!
//! ```text
//! Z(k, n) = Y_ref(k, n) − Σ_m U_m(k)ᴴ · Ỹ_m(k, n)
//! ```
//!
//! The taps are trained with exponentially weighted RLS on noise-only frames,
//! frozen at hotword onset and then applied unchanged.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::signal::MultiChannelSpectrogram;

const ZERO: Complex64 = Complex64::new(0.0, 0.0);

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CleanerConfig {
    /// Delay-line length `L` in frames.
    pub taps: usize,
    /// RLS forgetting factor.
    pub forgetting: f64,
    /// RLS regularization; `P₀ = δ⁻¹·I`.
    pub delta: f64,
}

impl Default for CleanerConfig {
    fn default() -> Self {
        Self {
            taps: 3,
            forgetting: 0.9995,
            delta: 1e-2,
        }
    }
}

impl CleanerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.taps == 0 {
            return Err(Error::InvalidParameter("cleaner taps must be >= 1".into()));
        }
        if !(self.forgetting > 0.0 && self.forgetting <= 1.0) {
            return Err(Error::InvalidParameter(format!(
                "forgetting factor {} outside (0, 1]",
                self.forgetting
            )));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter(format!("delta {} must be > 0", self.delta)));
        }
        Ok(())
    }
}

/// Per-bin ring of the last `L` values of each auxiliary channel, newest
/// first: `[Y_m(n), Y_m(n−1), …, Y_m(n−L+1)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayLine {
    bins: usize,
    aux: usize,
    taps: usize,
    values: Vec<Complex64>,
}

impl DelayLine {
    pub fn new(bins: usize, aux: usize, taps: usize) -> Self {
        Self {
            bins,
            aux,
            taps,
            values: vec![ZERO; bins * aux * taps],
        }
    }

    /// A line holding the `L − 1` frames before `start` (zeros where the
    /// spectrogram has no such frames).
    pub fn seeded(
        spec: &MultiChannelSpectrogram,
        aux_channels: &[usize],
        taps: usize,
        start: usize,
    ) -> Self {
        let mut line = Self::new(spec.bin_count(), aux_channels.len(), taps);
        for n in start.saturating_sub(taps - 1)..start {
            line.push_frame(spec, n, aux_channels);
        }
        line
    }

    pub fn push_frame(&mut self, spec: &MultiChannelSpectrogram, n: usize, aux_channels: &[usize]) {
        let width = self.aux * self.taps;
        for k in 0..self.bins {
            let snap = spec.snapshot(n, k);
            push_bin(&mut self.values[k * width..(k + 1) * width], self.taps, |a| {
                snap[aux_channels[a]]
            });
        }
    }

    /// Stacked regressor `u(k, n)` of length `aux · L`, ordered by auxiliary
    /// channel then lag.
    pub fn regressor(&self, k: usize) -> &[Complex64] {
        let width = self.aux * self.taps;
        &self.values[k * width..(k + 1) * width]
    }
}

#[inline]
fn push_bin(line: &mut [Complex64], taps: usize, value: impl Fn(usize) -> Complex64) {
    for (a, chunk) in line.chunks_exact_mut(taps).enumerate() {
        chunk.copy_within(0..taps - 1, 1);
        chunk[0] = value(a);
    }
}

/// Per-bin (M−1)×L complex taps plus RLS state.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanerFilterBank {
    taps: Vec<Vec<Complex64>>,
    tap_count: usize,
    channel_count: usize,
    reference: usize,
    frozen: bool,
    forgetting: f64,
    delta: f64,
    /// Inverse correlation matrix per bin; dropped on freeze.
    rls_state: Option<Vec<CMatrix>>,
}

/// Per-frame residual power during adaptation (summed over bins).
#[derive(Debug, Clone, Default)]
pub struct AdaptationTrace {
    pub residual_power: Vec<f64>,
    pub reference_power: Vec<f64>,
}

impl CleanerFilterBank {
    /// Zero taps, `P(k) = δ⁻¹·I`.
    pub fn new(
        bin_count: usize,
        channel_count: usize,
        reference: usize,
        config: &CleanerConfig,
    ) -> Result<Self> {
        config.validate()?;
        if channel_count < 2 {
            return Err(Error::TooFewChannels(channel_count));
        }
        if reference >= channel_count {
            return Err(Error::InvalidParameter(format!(
                "reference channel {reference} out of range for {channel_count} channels"
            )));
        }
        let dim = (channel_count - 1) * config.taps;
        Ok(Self {
            taps: vec![vec![ZERO; dim]; bin_count],
            tap_count: config.taps,
            channel_count,
            reference,
            frozen: false,
            forgetting: config.forgetting,
            delta: config.delta,
            rls_state: Some(vec![CMatrix::identity(dim).scaled(1.0 / config.delta); bin_count]),
        })
    }

    /// A frozen bank with the given per-bin taps.
    pub fn from_frozen_taps(
        taps: Vec<Vec<Complex64>>,
        channel_count: usize,
        tap_count: usize,
        reference: usize,
    ) -> Result<Self> {
        if channel_count < 2 || tap_count == 0 || reference >= channel_count {
            return Err(Error::InvalidParameter(format!(
                "bad filter shape: {channel_count} channels, {tap_count} taps, reference {reference}"
            )));
        }
        let dim = (channel_count - 1) * tap_count;
        if let Some(bad) = taps.iter().find(|t| t.len() != dim) {
            return Err(Error::ShapeMismatch(format!(
                "bin has {} taps, expected {dim}",
                bad.len()
            )));
        }
        let defaults = CleanerConfig::default();
        Ok(Self {
            taps,
            tap_count,
            channel_count,
            reference,
            frozen: true,
            forgetting: defaults.forgetting,
            delta: defaults.delta,
            rls_state: None,
        })
    }

    pub fn bin_count(&self) -> usize {
        self.taps.len()
    }

    pub fn tap_count(&self) -> usize {
        self.tap_count
    }

    pub fn channel_count(&self) -> usize {
        self.channel_count
    }

    pub fn reference(&self) -> usize {
        self.reference
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn forgetting(&self) -> f64 {
        self.forgetting
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    /// Auxiliary channel indices in stacking order.
    pub fn aux_channels(&self) -> Vec<usize> {
        (0..self.channel_count).filter(|&m| m != self.reference).collect()
    }

    /// Stacked taps of bin `k`, ordered by auxiliary channel then lag.
    pub fn taps(&self, k: usize) -> &[Complex64] {
        &self.taps[k]
    }

    pub fn all_taps(&self) -> &[Vec<Complex64>] {
        &self.taps
    }

    pub fn set_taps(&mut self, k: usize, taps: &[Complex64]) -> Result<()> {
        if self.frozen {
            return Err(Error::FilterFrozen);
        }
        if taps.len() != self.taps[k].len() {
            return Err(Error::ShapeMismatch(format!(
                "{} taps for a bin of {}",
                taps.len(),
                self.taps[k].len()
            )));
        }
        self.taps[k].copy_from_slice(taps);
        Ok(())
    }

    pub fn rls_state(&self) -> Option<&[CMatrix]> {
        self.rls_state.as_deref()
    }

    /// Smallest eigenvalue of `P(k)` over all bins, while adapting.
    pub fn min_rls_eigenvalue(&self) -> Option<f64> {
        self.rls_state.as_ref().map(|ps| {
            ps.iter()
                .map(|p| *linalg::hermitian_eigen(p).values.last().unwrap_or(&0.0))
                .fold(f64::INFINITY, f64::min)
        })
    }

    /// Stops adaptation for good. Idempotent.
    pub fn freeze(mut self) -> Self {
        self.frozen = true;
        self.rls_state = None;
        self
    }

    fn check_spec(&self, spec: &MultiChannelSpectrogram) -> Result<()> {
        if spec.bin_count() != self.bin_count() || spec.channel_count() != self.channel_count {
            return Err(Error::ShapeMismatch(format!(
                "filter bank {} bins x {} ch vs spectrogram {} bins x {} ch",
                self.bin_count(),
                self.channel_count,
                spec.bin_count(),
                spec.channel_count()
            )));
        }
        Ok(())
    }
}

/// `Z(k) = Y_ref(k) − U(k)ᴴ·u(k)` for one frame, every bin.
pub fn cleaner_output(
    bank: &CleanerFilterBank,
    reference: &[Complex64],
    delay: &DelayLine,
) -> Result<Vec<Complex64>> {
    if reference.len() != bank.bin_count()
        || delay.bins != bank.bin_count()
        || delay.aux * delay.taps != (bank.channel_count - 1) * bank.tap_count
    {
        return Err(Error::ShapeMismatch("cleaner_output operands disagree".into()));
    }
    Ok(reference
        .iter()
        .enumerate()
        .map(|(k, y0)| y0 - linalg::dot_conj(&bank.taps[k], delay.regressor(k)))
        .collect())
}

/// Exponentially weighted RLS over `frames`, in time order, one independent
/// filter per bin. The delay line starts from the `L − 1` frames preceding
/// the range.
pub fn rls_adapt(
    bank: &mut CleanerFilterBank,
    spec: &MultiChannelSpectrogram,
    frames: Range<usize>,
) -> Result<AdaptationTrace> {
    if bank.frozen {
        return Err(Error::FilterFrozen);
    }
    bank.check_spec(spec)?;
    if frames.is_empty() || frames.end > spec.frame_count() {
        return Err(Error::NoFrames);
    }
    let aux = bank.aux_channels();
    let taps = bank.tap_count;
    let lambda = bank.forgetting;
    let reference = bank.reference;
    let dim = aux.len() * taps;
    let seed_start = frames.start.saturating_sub(taps - 1);
    let p_state = bank.rls_state.as_mut().expect("unfrozen bank keeps RLS state");

    let traces: Vec<Vec<(f64, f64)>> = bank
        .taps
        .par_iter_mut()
        .zip(p_state.par_iter_mut())
        .enumerate()
        .map(|(k, (w, p))| {
            let mut line = vec![ZERO; dim];
            for n in seed_start..frames.start {
                let snap = spec.snapshot(n, k);
                push_bin(&mut line, taps, |a| snap[aux[a]]);
            }
            let mut pi = vec![ZERO; dim];
            let mut gain = vec![ZERO; dim];
            let mut trace = Vec::with_capacity(frames.len());
            for n in frames.clone() {
                let snap = spec.snapshot(n, k);
                push_bin(&mut line, taps, |a| snap[aux[a]]);
                let desired = snap[reference];
                let e = desired - linalg::dot_conj(w, &line);

                // π = P·u ; g = π / (λ + uᴴπ)
                for (i, pi_i) in pi.iter_mut().enumerate() {
                    *pi_i = (0..dim).map(|j| p[(i, j)] * line[j]).sum();
                }
                let denom = lambda + linalg::dot_conj(&line, &pi).re;
                for (g, x) in gain.iter_mut().zip(&pi) {
                    *g = x / denom;
                }
                for (wi, g) in w.iter_mut().zip(&gain) {
                    *wi += g * e.conj();
                }
                // P ← (P − g·πᴴ) / λ
                for i in 0..dim {
                    for j in 0..dim {
                        p[(i, j)] = (p[(i, j)] - gain[i] * pi[j].conj()) / lambda;
                    }
                }
                p.symmetrize();
                trace.push((e.norm_sqr(), desired.norm_sqr()));
            }
            trace
        })
        .collect();

    let mut out = AdaptationTrace {
        residual_power: vec![0.0; frames.len()],
        reference_power: vec![0.0; frames.len()],
    };
    for bin in &traces {
        for (i, (e, d)) in bin.iter().enumerate() {
            out.residual_power[i] += e;
            out.reference_power[i] += d;
        }
    }
    Ok(out)
}

/// Frozen-filter output over `frames`; frames outside the range are zero.
pub fn apply_cleaner(
    bank: &CleanerFilterBank,
    spec: &MultiChannelSpectrogram,
    frames: Range<usize>,
) -> Result<MultiChannelSpectrogram> {
    if !bank.frozen {
        return Err(Error::FilterNotFrozen);
    }
    bank.check_spec(spec)?;
    if frames.end > spec.frame_count() {
        return Err(Error::ShapeMismatch(format!(
            "frames {frames:?} beyond {} frames",
            spec.frame_count()
        )));
    }
    let aux = bank.aux_channels();
    let mut out =
        MultiChannelSpectrogram::zeros(1, spec.frame_count(), *spec.params(), spec.sample_rate());
    let mut line = DelayLine::seeded(spec, &aux, bank.tap_count, frames.start);
    let mut reference = vec![ZERO; spec.bin_count()];
    for n in frames {
        line.push_frame(spec, n, &aux);
        for (k, r) in reference.iter_mut().enumerate() {
            *r = spec.get(bank.reference, n, k);
        }
        for (k, z) in cleaner_output(bank, &reference, &line)?.into_iter().enumerate() {
            out.set(0, n, k, z);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::{FrameParams, Window};

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn tiny_params() -> FrameParams {
        FrameParams::new(4, 2, Window::SqrtHann).unwrap()
    }

    fn spec_from(frames: &[Vec<Complex64>]) -> MultiChannelSpectrogram {
        let m = frames[0].len();
        let mut spec = MultiChannelSpectrogram::zeros(m, frames.len(), tiny_params(), 16_000);
        for (n, y) in frames.iter().enumerate() {
            for k in 0..3 {
                spec.snapshot_mut(n, k).copy_from_slice(y);
            }
        }
        spec
    }

    #[test]
    fn zero_taps_pass_reference_through() {
        let bank = CleanerFilterBank::new(3, 2, 0, &CleanerConfig::default())
            .unwrap()
            .freeze();
        let spec = spec_from(&[vec![c(1.0, 2.0), c(3.0, 0.0)], vec![c(-1.0, 0.5), c(0.0, 1.0)]]);
        let out = apply_cleaner(&bank, &spec, 0..2).unwrap();
        for n in 0..2 {
            for k in 0..3 {
                assert_eq!(out.get(0, n, k), spec.get(0, n, k));
            }
        }
    }

    #[test]
    fn unit_tap_cancels_identical_channels() {
        let bank = CleanerFilterBank::from_frozen_taps(vec![vec![c(1.0, 0.0)]; 3], 2, 1, 0)
            .unwrap();
        let spec = spec_from(&[vec![c(0.4, -2.0), c(0.4, -2.0)]]);
        let out = apply_cleaner(&bank, &spec, 0..1).unwrap();
        assert_eq!(out.get(0, 0, 1), ZERO);
    }

    #[test]
    fn delay_line_is_newest_first() {
        let spec = spec_from(&[
            vec![c(0.0, 0.0), c(1.0, 0.0)],
            vec![c(0.0, 0.0), c(2.0, 0.0)],
            vec![c(0.0, 0.0), c(3.0, 0.0)],
        ]);
        let mut line = DelayLine::seeded(&spec, &[1], 3, 2);
        assert_eq!(line.regressor(0), &[c(2.0, 0.0), c(1.0, 0.0), ZERO]);
        line.push_frame(&spec, 2, &[1]);
        assert_eq!(line.regressor(0), &[c(3.0, 0.0), c(2.0, 0.0), c(1.0, 0.0)]);
    }

    #[test]
    fn zero_context_leaves_taps_at_zero() {
        let mut bank = CleanerFilterBank::new(3, 3, 0, &CleanerConfig::default()).unwrap();
        let spec = spec_from(&vec![vec![ZERO; 3]; 10]);
        rls_adapt(&mut bank, &spec, 0..10).unwrap();
        assert!(bank.all_taps().iter().flatten().all(|t| *t == ZERO));
    }

    #[test]
    fn freeze_contract() {
        let mut bank = CleanerFilterBank::new(3, 2, 0, &CleanerConfig::default()).unwrap();
        let spec = spec_from(&vec![vec![c(1.0, 0.0), c(0.5, 0.5)]; 4]);
        rls_adapt(&mut bank, &spec, 0..4).unwrap();
        let before = bank.all_taps().to_vec();
        let frozen = bank.freeze();
        assert_eq!(frozen.all_taps(), before.as_slice());
        let twice = frozen.clone().freeze();
        assert_eq!(twice, frozen);
        let mut frozen = frozen;
        assert!(matches!(
            rls_adapt(&mut frozen, &spec, 0..4),
            Err(Error::FilterFrozen)
        ));
        assert!(matches!(
            frozen.set_taps(0, &[ZERO; 3]),
            Err(Error::FilterFrozen)
        ));
    }

    #[test]
    fn apply_requires_frozen_bank() {
        let bank = CleanerFilterBank::new(3, 2, 0, &CleanerConfig::default()).unwrap();
        let spec = spec_from(&[vec![c(1.0, 0.0), c(0.5, 0.5)]]);
        assert!(matches!(
            apply_cleaner(&bank, &spec, 0..1),
            Err(Error::FilterNotFrozen)
        ));
    }

    #[test]
    fn config_validation() {
        assert!(CleanerFilterBank::new(3, 1, 0, &CleanerConfig::default()).is_err());
        let bad = CleanerConfig {
            taps: 0,
            ..CleanerConfig::default()
        };
        assert!(CleanerFilterBank::new(3, 2, 0, &bad).is_err());
        assert!(CleanerFilterBank::new(3, 2, 2, &CleanerConfig::default()).is_err());
    }

    #[test]
    fn inverse_correlation_stays_positive_definite() {
        let frames: Vec<Vec<Complex64>> = (0..50)
            .map(|n| {
                let t = n as f64;
                vec![c(t.sin(), 0.3), c((1.3 * t).cos(), (0.7 * t).sin()), c(0.2 * t.cos(), 1.0)]
            })
            .collect();
        let spec = spec_from(&frames);
        let mut bank = CleanerFilterBank::new(3, 3, 0, &CleanerConfig::default()).unwrap();
        rls_adapt(&mut bank, &spec, 0..50).unwrap();
        assert!(bank.min_rls_eigenvalue().unwrap() > 0.0);
    }

    #[test]
    fn non_default_reference_channel() {
        let bank = CleanerFilterBank::from_frozen_taps(vec![vec![ZERO; 2]; 3], 3, 1, 2).unwrap();
        assert_eq!(bank.aux_channels(), vec![0, 1]);
        let spec = spec_from(&[vec![c(1.0, 0.0), c(2.0, 0.0), c(3.0, 0.0)]]);
        let out = apply_cleaner(&bank, &spec, 0..1).unwrap();
        assert_eq!(out.get(0, 0, 0), c(3.0, 0.0));
    }
}
