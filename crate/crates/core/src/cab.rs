//! Context-aware beamforming.
//!
//! The desired talker's spatial covariance is estimated as the difference
//! between the covariance over the hotword (talker plus noise) and over the
//! noise context that precedes it. Its principal eigenvector, per subband,
//! is the beamformer steering vector.

use std::ops::Range;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, CMatrix};
use crate::signal::MultiChannelSpectrogram;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovarianceKind {
    /// Φ_YY, talker plus noise.
    Noisy,
    /// Φ_VV, noise only.
    Noise,
    /// Φ̂_XX = Φ_YY − Φ_VV.
    Desired,
    /// Φ_XX measured on the isolated talker.
    Oracle,
}

/// One M×M Hermitian matrix per frequency bin.
#[derive(Debug, Clone)]
pub struct SubbandCovariance {
    pub matrices: Vec<CMatrix>,
    pub frame_count_used: usize,
    pub kind: CovarianceKind,
}

impl SubbandCovariance {
    pub fn bin_count(&self) -> usize {
        self.matrices.len()
    }

    pub fn channel_count(&self) -> usize {
        self.matrices.first().map_or(0, CMatrix::dim)
    }

    /// Mean per-bin trace, the reference level for degeneracy checks.
    pub fn mean_trace(&self) -> f64 {
        if self.matrices.is_empty() {
            return 0.0;
        }
        self.matrices.iter().map(CMatrix::trace).sum::<f64>() / self.matrices.len() as f64
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.bin_count() != other.bin_count() || self.channel_count() != other.channel_count() {
            return Err(Error::ShapeMismatch(format!(
                "covariance {} bins x {} ch vs {} bins x {} ch",
                self.bin_count(),
                self.channel_count(),
                other.bin_count(),
                other.channel_count()
            )));
        }
        Ok(())
    }
}

fn accumulate(
    spec: &MultiChannelSpectrogram,
    frames: Range<usize>,
    kind: CovarianceKind,
) -> Result<SubbandCovariance> {
    let m = spec.channel_count();
    if m < 2 {
        return Err(Error::TooFewChannels(m));
    }
    if frames.is_empty() || frames.end > spec.frame_count() {
        return Err(Error::NoFrames);
    }
    let count = frames.len();
    let matrices = (0..spec.bin_count())
        .into_par_iter()
        .map(|k| {
            let mut acc = CMatrix::zeros(m);
            for n in frames.clone() {
                acc.add_outer(spec.snapshot(n, k), 1.0);
            }
            acc.scale(1.0 / count as f64);
            acc
        })
        .collect();
    Ok(SubbandCovariance {
        matrices,
        frame_count_used: count,
        kind,
    })
}

/// Φ_YY: per-bin frame average of `Y·Yᴴ` over `frames`.
pub fn estimate_covariance(
    spec: &MultiChannelSpectrogram,
    frames: Range<usize>,
) -> Result<SubbandCovariance> {
    accumulate(spec, frames, CovarianceKind::Noisy)
}

/// Φ_VV: the same average taken over noise-only frames.
pub fn estimate_noise_covariance(
    spec: &MultiChannelSpectrogram,
    frames: Range<usize>,
) -> Result<SubbandCovariance> {
    accumulate(spec, frames, CovarianceKind::Noise)
}

/// Φ_XX computed directly from the isolated talker rendering.
pub fn oracle_covariance(
    clean_spec: &MultiChannelSpectrogram,
    frames: Range<usize>,
) -> Result<SubbandCovariance> {
    accumulate(clean_spec, frames, CovarianceKind::Oracle)
}

/// Φ̂_XX = Φ_YY − Φ_VV, projected back onto the PSD cone. Both inputs are
/// frame-count normalized, so segments of different lengths compare.
pub fn subtract_covariance(
    noisy: &SubbandCovariance,
    noise: &SubbandCovariance,
) -> Result<SubbandCovariance> {
    noisy.check_compatible(noise)?;
    if noisy.kind != CovarianceKind::Noisy || noise.kind != CovarianceKind::Noise {
        return Err(Error::InvalidParameter(format!(
            "expected noisy minus noise covariance, got {:?} minus {:?}",
            noisy.kind, noise.kind
        )));
    }
    let matrices = noisy
        .matrices
        .iter()
        .zip(&noise.matrices)
        .map(|(a, b)| a.sub(b))
        .collect();
    Ok(project_psd(&SubbandCovariance {
        matrices,
        frame_count_used: noisy.frame_count_used,
        kind: CovarianceKind::Desired,
    }))
}

/// Frobenius-nearest PSD matrix per bin: negative eigenvalues clipped to 0.
pub fn project_psd(cov: &SubbandCovariance) -> SubbandCovariance {
    project_psd_with_floor(cov, 0.0)
}

/// As [`project_psd`], clipping eigenvalues at `floor` instead of 0.
pub fn project_psd_with_floor(cov: &SubbandCovariance, floor: f64) -> SubbandCovariance {
    let matrices = cov
        .matrices
        .par_iter()
        .map(|a| {
            let mut eig = linalg::hermitian_eigen(a);
            for v in &mut eig.values {
                *v = v.max(floor);
            }
            let mut out = eig.reconstruct();
            out.symmetrize();
            out
        })
        .collect();
    SubbandCovariance {
        matrices,
        frame_count_used: cov.frame_count_used,
        kind: cov.kind,
    }
}

/// How the arbitrary phase of each steering vector was fixed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PhaseConvention {
    /// Largest-magnitude entry real and non-negative; ties go to the lowest
    /// channel index.
    LargestEntry,
    /// The given channel's entry real and non-negative, so the output keeps
    /// that channel's phase.
    Reference(usize),
}

/// Per-bin beamformer coefficients, applied as `Wᴴ·Y`.
#[derive(Debug, Clone, PartialEq)]
pub struct BeamformerWeights {
    pub weights: Vec<Vec<Complex64>>,
    pub normalization: PhaseConvention,
    /// Bins whose covariance was degenerate and fell back to passthrough.
    pub fallback_bins: Vec<usize>,
    /// λ_max / trace per bin (0 on fallback bins); empty when imported.
    pub dominance: Vec<f64>,
}

impl BeamformerWeights {
    pub fn bin_count(&self) -> usize {
        self.weights.len()
    }

    pub fn channel_count(&self) -> usize {
        self.weights.first().map_or(0, Vec::len)
    }

    /// `e_ref` in every bin.
    pub fn passthrough(bin_count: usize, channel_count: usize, reference: usize) -> Self {
        let mut e = vec![Complex64::new(0.0, 0.0); channel_count];
        e[reference] = Complex64::new(1.0, 0.0);
        Self {
            weights: vec![e; bin_count],
            normalization: PhaseConvention::Reference(reference),
            fallback_bins: Vec::new(),
            dominance: Vec::new(),
        }
    }

    /// Rotates every bin so `reference`'s entry is real and non-negative.
    pub fn rereferenced(&self, reference: usize) -> Self {
        let weights = self
            .weights
            .iter()
            .map(|w| {
                let r = w[reference];
                if r.norm() == 0.0 {
                    w.clone()
                } else {
                    let rot = r.conj() / r.norm();
                    w.iter().map(|x| x * rot).collect()
                }
            })
            .collect();
        Self {
            weights,
            normalization: PhaseConvention::Reference(reference),
            fallback_bins: self.fallback_bins.clone(),
            dominance: self.dominance.clone(),
        }
    }
}

/// Relative tolerance under which two entry magnitudes count as tied.
const PHASE_TIE_TOLERANCE: f64 = 1e-9;

fn normalize_phase(v: &mut [Complex64]) {
    let peak = v.iter().map(|x| x.norm()).fold(0.0, f64::max);
    if peak == 0.0 {
        return;
    }
    let idx = v
        .iter()
        .position(|x| x.norm() >= peak * (1.0 - PHASE_TIE_TOLERANCE))
        .unwrap_or(0);
    let rot = v[idx].conj() / v[idx].norm();
    for x in v.iter_mut() {
        *x *= rot;
    }
    v[idx] = Complex64::new(v[idx].norm(), 0.0);
}

/// Degenerate-bin threshold relative to the mean trace across bins.
const DEGENERATE_TRACE_RATIO: f64 = 1e-12;

/// Unit-norm principal eigenvector per bin with the largest-entry phase
/// convention. Bins with (near) zero covariance get `e₁`.
pub fn principal_eigenvector(cov: &SubbandCovariance) -> Result<BeamformerWeights> {
    let m = cov.channel_count();
    if m < 2 {
        return Err(Error::TooFewChannels(m));
    }
    let floor = DEGENERATE_TRACE_RATIO * cov.mean_trace();
    let per_bin: Vec<Option<(Vec<Complex64>, f64)>> = cov
        .matrices
        .par_iter()
        .map(|a| {
            let trace = a.trace();
            if !(trace > floor) || trace <= 0.0 {
                return None;
            }
            linalg::principal_eigenpair(a).map(|p| {
                let mut v = p.vector;
                let n = linalg::norm(&v);
                v.iter_mut().for_each(|x| *x /= n);
                normalize_phase(&mut v);
                (v, p.value / trace)
            })
        })
        .collect();

    let mut weights = Vec::with_capacity(per_bin.len());
    let mut dominance = Vec::with_capacity(per_bin.len());
    let mut fallback_bins = Vec::new();
    for (k, entry) in per_bin.into_iter().enumerate() {
        match entry {
            Some((v, ratio)) => {
                weights.push(v);
                dominance.push(ratio);
            }
            None => {
                let mut e = vec![Complex64::new(0.0, 0.0); m];
                e[0] = Complex64::new(1.0, 0.0);
                weights.push(e);
                dominance.push(0.0);
                fallback_bins.push(k);
            }
        }
    }
    Ok(BeamformerWeights {
        weights,
        normalization: PhaseConvention::LargestEntry,
        fallback_bins,
        dominance,
    })
}

fn check_weights(weights: &BeamformerWeights, spec: &MultiChannelSpectrogram) -> Result<()> {
    if weights.bin_count() != spec.bin_count() || weights.channel_count() != spec.channel_count() {
        return Err(Error::ShapeMismatch(format!(
            "weights {} bins x {} ch vs spectrogram {} bins x {} ch",
            weights.bin_count(),
            weights.channel_count(),
            spec.bin_count(),
            spec.channel_count()
        )));
    }
    Ok(())
}

/// `X̂(k, n) = W(k)ᴴ·Y(k, n)` for every frame.
pub fn apply_beamformer(
    weights: &BeamformerWeights,
    spec: &MultiChannelSpectrogram,
) -> Result<MultiChannelSpectrogram> {
    check_weights(weights, spec)?;
    let mut out =
        MultiChannelSpectrogram::zeros(1, spec.frame_count(), *spec.params(), spec.sample_rate());
    for n in 0..spec.frame_count() {
        for (k, w) in weights.weights.iter().enumerate() {
            out.set(0, n, k, linalg::dot_conj(w, spec.snapshot(n, k)));
        }
    }
    Ok(out)
}

pub const LMS_DEFAULT_STEP: f64 = 0.05;
pub const LMS_EPSILON: f64 = 1e-6;

/// Frost-style constrained LMS: per frame, a normalized gradient step on the
/// output power followed by re-projection onto `Wᴴd = 1`, where `d` is the
/// initial steering vector.
#[derive(Debug, Clone)]
pub struct LmsMvdrAdapter {
    weights: Vec<Vec<Complex64>>,
    steering: Vec<Vec<Complex64>>,
    step: f64,
    normalization: PhaseConvention,
}

impl LmsMvdrAdapter {
    pub fn new(initial: &BeamformerWeights, step: f64) -> Result<Self> {
        if !(step > 0.0) {
            return Err(Error::InvalidParameter(format!("LMS step must be > 0, got {step}")));
        }
        let steering = initial.weights.clone();
        let weights = steering
            .iter()
            .map(|d| {
                let dn = d.iter().map(|x| x.norm_sqr()).sum::<f64>();
                d.iter().map(|x| x / dn).collect()
            })
            .collect();
        Ok(Self {
            weights,
            steering,
            step,
            normalization: initial.normalization,
        })
    }

    /// Emits `Wᴴ·Y` for frame `n` with the current weights, then adapts.
    pub fn process_frame(
        &mut self,
        spec: &MultiChannelSpectrogram,
        n: usize,
        out: &mut [Complex64],
    ) {
        for (k, (w, d)) in self.weights.iter_mut().zip(&self.steering).enumerate() {
            let y_vec = spec.snapshot(n, k);
            let y = linalg::dot_conj(w, y_vec);
            out[k] = y;
            let power: f64 = y_vec.iter().map(|x| x.norm_sqr()).sum();
            let mu = self.step / (LMS_EPSILON + power);
            for (wi, yi) in w.iter_mut().zip(y_vec) {
                *wi -= yi * y.conj() * mu;
            }
            // back onto dᴴW = 1
            let dd: f64 = d.iter().map(|x| x.norm_sqr()).sum();
            let c = (Complex64::new(1.0, 0.0) - linalg::dot_conj(d, w)) / dd;
            for (wi, di) in w.iter_mut().zip(d) {
                *wi += di * c;
            }
        }
    }

    pub fn constraint_residual(&self) -> f64 {
        self.weights
            .iter()
            .zip(&self.steering)
            .map(|(w, d)| (linalg::dot_conj(w, d) - 1.0).norm())
            .fold(0.0, f64::max)
    }

    pub fn weights(&self) -> BeamformerWeights {
        BeamformerWeights {
            weights: self.weights.clone(),
            normalization: self.normalization,
            fallback_bins: Vec::new(),
            dominance: Vec::new(),
        }
    }
}

/// Runs the constrained LMS over `frames` and returns the adapted weights.
pub fn adapt_lms_mvdr(
    weights: &BeamformerWeights,
    spec: &MultiChannelSpectrogram,
    frames: Range<usize>,
    step: f64,
) -> Result<BeamformerWeights> {
    check_weights(weights, spec)?;
    let mut adapter = LmsMvdrAdapter::new(weights, step)?;
    let mut scratch = vec![Complex64::new(0.0, 0.0); spec.bin_count()];
    for n in frames {
        adapter.process_frame(spec, n, &mut scratch);
    }
    Ok(adapter.weights())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::signal::FrameParams;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn single_bin_spec(frames: &[Vec<Complex64>]) -> MultiChannelSpectrogram {
        // bins = 2 with fft_size 2 is rejected by COLA checks, so use 4 (3 bins)
        let params = FrameParams::new(4, 2, crate::signal::Window::SqrtHann).unwrap();
        let m = frames[0].len();
        let mut spec = MultiChannelSpectrogram::zeros(m, frames.len(), params, 16_000);
        for (n, y) in frames.iter().enumerate() {
            for k in 0..3 {
                spec.snapshot_mut(n, k).copy_from_slice(y);
            }
        }
        spec
    }

    fn cov_of(matrices: Vec<CMatrix>, kind: CovarianceKind) -> SubbandCovariance {
        SubbandCovariance {
            matrices,
            frame_count_used: 1,
            kind,
        }
    }

    #[test]
    fn outer_product_by_hand() {
        let spec = single_bin_spec(&[vec![c(1.0, 0.0), c(0.0, 1.0)]]);
        let cov = estimate_covariance(&spec, 0..1).unwrap();
        let expected = CMatrix::from_rows(&[vec![c(1.0, 0.0), c(0.0, -1.0)], vec![c(0.0, 1.0), c(1.0, 0.0)]]);
        assert!(cov.matrices[1].sub(&expected).frobenius_norm() < 1e-15);
        assert_eq!(cov.frame_count_used, 1);
        assert_eq!(cov.kind, CovarianceKind::Noisy);
    }

    #[test]
    fn covariance_errors() {
        let spec = single_bin_spec(&[vec![c(1.0, 0.0), c(0.0, 1.0)]]);
        assert!(matches!(estimate_covariance(&spec, 0..0), Err(Error::NoFrames)));
        let mono = single_bin_spec(&[vec![c(1.0, 0.0)]]);
        assert!(matches!(
            estimate_covariance(&mono, 0..1),
            Err(Error::TooFewChannels(1))
        ));
    }

    #[test]
    fn subtraction_examples() {
        let eye = CMatrix::identity(2);
        let noisy = cov_of(vec![eye.scaled(2.0)], CovarianceKind::Noisy);
        let noise = cov_of(vec![eye.clone()], CovarianceKind::Noise);
        let d = subtract_covariance(&noisy, &noise).unwrap();
        assert_eq!(d.kind, CovarianceKind::Desired);
        assert!(d.matrices[0].sub(&eye).frobenius_norm() < 1e-12);

        let noisy = cov_of(vec![eye.clone()], CovarianceKind::Noisy);
        let noise = cov_of(vec![eye.scaled(2.0)], CovarianceKind::Noise);
        let d = subtract_covariance(&noisy, &noise).unwrap();
        assert!(d.matrices[0].frobenius_norm() < 1e-12);
    }

    #[test]
    fn subtraction_rejects_mismatch() {
        let a = cov_of(vec![CMatrix::identity(2)], CovarianceKind::Noisy);
        let b = cov_of(vec![CMatrix::identity(3)], CovarianceKind::Noise);
        assert!(matches!(subtract_covariance(&a, &b), Err(Error::ShapeMismatch(_))));
        let b = cov_of(vec![CMatrix::identity(2); 2], CovarianceKind::Noise);
        assert!(subtract_covariance(&a, &b).is_err());
        let b = cov_of(vec![CMatrix::identity(2)], CovarianceKind::Noisy);
        assert!(subtract_covariance(&a, &b).is_err());
    }

    #[test]
    fn psd_projection_clips_negative_eigenvalues() {
        let a = cov_of(vec![CMatrix::from_diagonal(&[3.0, -1.0])], CovarianceKind::Desired);
        let p = project_psd(&a);
        assert!(p.matrices[0].sub(&CMatrix::from_diagonal(&[3.0, 0.0])).frobenius_norm() < 1e-12);
        let again = project_psd(&p);
        assert!(again.matrices[0].sub(&p.matrices[0]).frobenius_norm() < 1e-10);
    }

    #[test]
    fn principal_eigenvector_examples() {
        let w = principal_eigenvector(&cov_of(
            vec![CMatrix::from_diagonal(&[3.0, 1.0])],
            CovarianceKind::Desired,
        ))
        .unwrap();
        assert!((w.weights[0][0] - c(1.0, 0.0)).norm() < 1e-10);
        assert!(w.weights[0][1].norm() < 1e-10);

        let s = std::f64::consts::FRAC_1_SQRT_2;
        let d = vec![c(s, 0.0), c(0.0, s)];
        let w = principal_eigenvector(&cov_of(vec![CMatrix::outer(&d)], CovarianceKind::Desired))
            .unwrap();
        assert!((w.weights[0][0] - d[0]).norm() < 1e-10);
        assert!((w.weights[0][1] - d[1]).norm() < 1e-10);
        assert_eq!(w.normalization, PhaseConvention::LargestEntry);
    }

    #[test]
    fn zero_bin_falls_back_to_first_channel() {
        let cov = cov_of(
            vec![CMatrix::identity(2), CMatrix::zeros(2)],
            CovarianceKind::Desired,
        );
        let w = principal_eigenvector(&cov).unwrap();
        assert_eq!(w.fallback_bins, vec![1]);
        assert_eq!(w.weights[1], vec![c(1.0, 0.0), c(0.0, 0.0)]);
        assert_eq!(w.dominance[1], 0.0);
    }

    #[test]
    fn selector_weights_pass_channel_zero() {
        let spec = single_bin_spec(&[
            vec![c(0.3, -0.2), c(1.0, 4.0), c(2.0, 0.0)],
            vec![c(-1.0, 0.5), c(0.0, 1.0), c(0.0, 0.0)],
        ]);
        let w = BeamformerWeights::passthrough(3, 3, 0);
        let out = apply_beamformer(&w, &spec).unwrap();
        for n in 0..2 {
            for k in 0..3 {
                assert_eq!(out.get(0, n, k), spec.get(0, n, k));
            }
        }
    }

    #[test]
    fn matched_weights_project_source() {
        let d = [c(1.0, 0.0), c(0.0, 2.0), c(-1.0, 1.0)];
        let dn = linalg::norm(&d);
        let s = c(0.7, -0.4);
        let y: Vec<_> = d.iter().map(|x| x * s).collect();
        let spec = single_bin_spec(&[y]);
        let w = BeamformerWeights {
            weights: vec![d.iter().map(|x| x / dn).collect(); 3],
            normalization: PhaseConvention::LargestEntry,
            fallback_bins: vec![],
            dominance: vec![],
        };
        let out = apply_beamformer(&w, &spec).unwrap();
        assert!((out.get(0, 0, 1) - s * dn).norm() < 1e-12);
    }

    #[test]
    fn beamformer_shape_mismatch() {
        let spec = single_bin_spec(&[vec![c(1.0, 0.0), c(0.0, 1.0)]]);
        let w = BeamformerWeights::passthrough(3, 3, 0);
        assert!(matches!(apply_beamformer(&w, &spec), Err(Error::ShapeMismatch(_))));
    }

    #[test]
    fn rereference_makes_reference_entry_real() {
        let w = BeamformerWeights {
            weights: vec![vec![c(0.0, 0.6), c(0.8, 0.0)]],
            normalization: PhaseConvention::LargestEntry,
            fallback_bins: vec![],
            dominance: vec![],
        };
        let r = w.rereferenced(0);
        assert!((r.weights[0][0] - c(0.6, 0.0)).norm() < 1e-15);
        assert!((r.weights[0][1] - c(0.0, -0.8)).norm() < 1e-15);
        assert_eq!(r.normalization, PhaseConvention::Reference(0));
    }

    #[test]
    fn lms_rejects_nonpositive_step() {
        let w = BeamformerWeights::passthrough(3, 2, 0);
        assert!(LmsMvdrAdapter::new(&w, 0.0).is_err());
        assert!(LmsMvdrAdapter::new(&w, -1.0).is_err());
    }

    #[test]
    fn lms_zero_input_keeps_weights() {
        let spec = single_bin_spec(&vec![vec![c(0.0, 0.0); 2]; 5]);
        let s = std::f64::consts::FRAC_1_SQRT_2;
        let w = BeamformerWeights {
            weights: vec![vec![c(s, 0.0), c(0.0, s)]; 3],
            normalization: PhaseConvention::LargestEntry,
            fallback_bins: vec![],
            dominance: vec![],
        };
        let adapted = adapt_lms_mvdr(&w, &spec, 0..5, LMS_DEFAULT_STEP).unwrap();
        for (a, b) in adapted.weights.iter().flatten().zip(w.weights.iter().flatten()) {
            assert!((a - b).norm() < 1e-15);
        }
    }
}
