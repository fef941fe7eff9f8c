//! Hotword-anchored multichannel speech enhancement.
//!
//! Two enhancers share one STFT front end and both exploit the same fact: the
//! audio just before a detected hotword holds only the interference, and the
//! hotword itself holds the wanted talker plus that interference.
//!
//! * [`cab`] steers a beamformer at the principal eigenvector of the talker
//!   covariance estimated as hotword minus context covariance.
//! * [`cleaner`] trains per-subband RLS noise-cancelling filters on the context
//!   and freezes them for the hotword and query.
//! * [`pipeline`] estimates the utterance SNR and picks one of the two.
//!
//! [`scene`] and [`metrics`] form the synthetic evaluation harness, and
//! [`sweep`] runs experiment grids over it.

pub mod cab;
pub mod cleaner;
pub mod error;
pub mod linalg;
pub mod metrics;
pub mod pipeline;
pub mod scene;
pub mod sidecar;
pub mod signal;
pub mod sweep;
pub mod wav;

pub use cab::{BeamformerWeights, CovarianceKind, PhaseConvention, SubbandCovariance};
pub use cleaner::{CleanerConfig, CleanerFilterBank, DelayLine};
pub use error::{Error, Result};
pub use metrics::MetricReport;
pub use pipeline::{
    enhance_forced, enhance_utterance, Algorithm, EnhancementDecision, Mode, PipelineConfig,
    SnrEstimate,
};
pub use scene::{NoiseKind, Scene, SceneSpec, SourceSpec};
pub use signal::{
    istft, segment_frames, stft, FrameParams, MultiChannelSpectrogram, MultiChannelWave,
    SegmentFrames, UtteranceSegmentation, Window,
};
pub use sweep::SweepSpec;
pub use wav::WavFormat;
