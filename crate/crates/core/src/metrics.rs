//! Objective signal metrics used in place of recognition accuracy.

use num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reported ceiling (and floor) for SI-SDR.
pub const SI_SDR_CLAMP_DB: f64 = 80.0;
pub const SEG_SNR_MIN_DB: f64 = -10.0;
pub const SEG_SNR_MAX_DB: f64 = 35.0;
/// Windows quieter than this (mean square, dBFS) are skipped.
pub const SEG_SNR_ACTIVITY_DB: f64 = -60.0;

fn energy(x: &[f64]) -> f64 {
    x.iter().map(|v| v * v).sum()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn ratio_db(signal: f64, noise: f64) -> f64 {
    if signal == 0.0 {
        f64::NEG_INFINITY
    } else if noise == 0.0 {
        f64::INFINITY
    } else {
        10.0 * (signal / noise).log10()
    }
}

/// Scale-invariant signal-to-distortion ratio in dB, clamped to ±80.
pub fn si_sdr(estimate: &[f64], reference: &[f64]) -> Result<f64> {
    if estimate.len() != reference.len() || estimate.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let ref_energy = energy(reference);
    if ref_energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    let alpha = dot(estimate, reference) / ref_energy;
    let target = alpha * alpha * ref_energy;
    let residual: f64 = estimate
        .iter()
        .zip(reference)
        .map(|(e, r)| (e - alpha * r).powi(2))
        .sum();
    Ok(ratio_db(target, residual).clamp(-SI_SDR_CLAMP_DB, SI_SDR_CLAMP_DB))
}

/// Mean per-window SNR over active windows. The reference is first scaled by
/// the global least-squares gain onto the estimate, so overall level is not
/// counted as error. Each window is clamped to [−10, 35] dB.
pub fn segmental_snr(
    estimate: &[f64],
    reference: &[f64],
    sample_rate: u32,
    window_ms: f64,
) -> Result<f64> {
    if estimate.len() != reference.len() || estimate.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "estimate has {} samples, reference {}",
            estimate.len(),
            reference.len()
        )));
    }
    let ref_energy = energy(reference);
    if ref_energy == 0.0 {
        return Err(Error::ZeroReference);
    }
    let alpha = dot(estimate, reference) / ref_energy;
    let win = ((window_ms * 1e-3 * sample_rate as f64).round() as usize).max(1);
    let activity = 10f64.powf(SEG_SNR_ACTIVITY_DB / 10.0);
    let mut total = 0.0;
    let mut count = 0usize;
    for (e, r) in estimate.chunks(win).zip(reference.chunks(win)) {
        if energy(r) / r.len() as f64 <= activity {
            continue;
        }
        let target: f64 = r.iter().map(|v| (alpha * v).powi(2)).sum();
        let err: f64 = e.iter().zip(r).map(|(x, y)| (x - alpha * y).powi(2)).sum();
        total += ratio_db(target, err).clamp(SEG_SNR_MIN_DB, SEG_SNR_MAX_DB);
        count += 1;
    }
    if count == 0 {
        return Err(Error::NoActiveWindows);
    }
    Ok(total / count as f64)
}

/// Lag `d` in `[−max_lag, max_lag]` maximizing `|Σ a[t + d]·b[t]|`: a
/// positive lag means `a` trails `b`.
pub fn best_lag(a: &[f64], b: &[f64], max_lag: usize) -> isize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let size = (a.len() + b.len()).next_power_of_two();
    let mut planner = FftPlanner::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let to_complex = |x: &[f64]| {
        let mut v: Vec<Complex64> = x.iter().map(|&s| Complex64::new(s, 0.0)).collect();
        v.resize(size, Complex64::new(0.0, 0.0));
        v
    };
    let mut fa = to_complex(a);
    let mut fb = to_complex(b);
    fwd.process(&mut fa);
    fwd.process(&mut fb);
    let mut prod: Vec<Complex64> = fa.iter().zip(&fb).map(|(x, y)| x * y.conj()).collect();
    inv.process(&mut prod);
    // prod[d mod size] = Σ_t a[t + d]·b[t]
    let max_lag = max_lag.min(size / 2 - 1) as isize;
    let mut best = (0isize, f64::NEG_INFINITY);
    for d in -max_lag..=max_lag {
        let idx = d.rem_euclid(size as isize) as usize;
        let v = prod[idx].re.abs();
        if v > best.1 || (v == best.1 && d.abs() < best.0.abs()) {
            best = (d, v);
        }
    }
    best.0
}

/// Overlapping parts of `estimate` shifted back by `lag` and `reference`.
pub fn align<'a>(estimate: &'a [f64], reference: &'a [f64], lag: isize) -> (&'a [f64], &'a [f64]) {
    let len = estimate.len().min(reference.len()) as isize;
    let (es, rs) = if lag >= 0 { (lag, 0) } else { (0, -lag) };
    let n = (len - lag.abs()).max(0) as usize;
    (
        &estimate[es as usize..es as usize + n],
        &reference[rs as usize..rs as usize + n],
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub si_sdr_db: f64,
    pub si_sdr_improvement_db: f64,
    pub seg_snr_db: f64,
    /// Reference-channel over output power across the context span.
    pub noise_reduction_db: Option<f64>,
    /// Latency compensation applied to the enhanced signal, in samples.
    pub lag: isize,
}

/// Inputs for [`evaluate_run`], all covering the hotword and query.
#[derive(Debug, Clone, Copy)]
pub struct RunSignals<'a> {
    pub enhanced: &'a [f64],
    /// Reference channel through the identity STFT path.
    pub passthrough: &'a [f64],
    /// Reference channel of the isolated talker rendering.
    pub clean_reference: &'a [f64],
    pub sample_rate: u32,
    /// Search range for latency compensation (typically `fft_size`).
    pub max_lag: usize,
    /// `(input power, output power)` over the context span.
    pub context_powers: Option<(f64, f64)>,
}

fn aligned_si_sdr(x: &[f64], reference: &[f64], max_lag: usize) -> Result<(f64, isize)> {
    let lag = best_lag(x, reference, max_lag);
    let (e, r) = align(x, reference, lag);
    Ok((si_sdr(e, r)?, lag))
}

pub fn evaluate_run(signals: &RunSignals<'_>) -> Result<MetricReport> {
    let (enhanced, base) = (signals.enhanced, signals.passthrough);
    let reference = signals.clean_reference;
    let (si, lag) = aligned_si_sdr(enhanced, reference, signals.max_lag)?;
    let (si_base, _) = aligned_si_sdr(base, reference, signals.max_lag)?;
    let (e, r) = align(enhanced, reference, lag);
    let seg = segmental_snr(e, r, signals.sample_rate, 32.0)?;
    let noise_reduction_db = signals
        .context_powers
        .filter(|(input, output)| *input > 0.0 && *output > 0.0)
        .map(|(input, output)| 10.0 * (input / output).log10());
    Ok(MetricReport {
        si_sdr_db: si,
        si_sdr_improvement_db: si - si_base,
        seg_snr_db: seg,
        noise_reduction_db,
        lag,
    })
}
