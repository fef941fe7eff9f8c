use hwenh_core::pipeline::{
    enhance_forced, enhance_utterance, estimate_snr, Algorithm, FrozenOperator, Mode, PipelineConfig,
};
use hwenh_core::scene::{
    mix_scene, synthetic_scene, synthetic_scene_spec, NoiseKind, Rendering, Scene,
    SyntheticSceneParams,
};
use hwenh_core::sidecar;
use hwenh_core::signal::MultiChannelWave;
use hwenh_core::sweep::evaluate_scene;
use hwenh_core::Error;

fn scene(snr_db: Option<f64>, seed: u64) -> Scene {
    synthetic_scene(&SyntheticSceneParams {
        snr_db,
        seed,
        context_length_s: 2.0,
        ..SyntheticSceneParams::default()
    })
    .unwrap()
}

#[test]
fn repeated_runs_are_bitwise_identical() {
    let s = scene(Some(0.0), 3);
    let cfg = PipelineConfig::default();
    for mode in [Mode::Cab, Mode::Sc, Mode::Select] {
        let a = enhance_forced(&s.mixture, &s.seg, &cfg, mode, None).unwrap();
        let b = enhance_forced(&s.mixture, &s.seg, &cfg, mode, None).unwrap();
        assert_eq!(a.enhanced, b.enhanced, "{mode}");
        assert_eq!(a.operator, b.operator, "{mode}");
    }
}

#[test]
fn frozen_operators_are_causal_up_to_one_frame() {
    let s = scene(Some(0.0), 4);
    let cfg = PipelineConfig::default();
    let span = s.seg.utterance();
    let cut = span.start + 12_000;
    let mut altered: Vec<Vec<f64>> = s.mixture.channels().to_vec();
    for ch in &mut altered {
        for v in &mut ch[cut..] {
            *v = -*v * 3.0 + 0.01;
        }
    }
    let altered = MultiChannelWave::new(altered, s.mixture.sample_rate()).unwrap();
    // output sample t depends on frames starting at or before t
    let safe = cut - span.start;
    for mode in [Mode::Cab, Mode::Sc] {
        let op = enhance_forced(&s.mixture, &s.seg, &cfg, mode, None).unwrap().operator;
        let a = op.apply(&s.mixture, span.clone(), &cfg.frame_params).unwrap();
        let b = op.apply(&altered, span.clone(), &cfg.frame_params).unwrap();
        let edge = safe - cfg.frame_params.fft_size;
        assert_eq!(a[..edge], b[..edge], "{mode}");
        assert_ne!(a[safe..], b[safe..]);
    }
}

#[test]
fn snr_estimate_close_to_truth_at_six_db() {
    for seed in 0..3 {
        let s = synthetic_scene(&SyntheticSceneParams {
            snr_db: Some(6.0),
            seed,
            noise: NoiseKind::SpeechShaped,
            ..SyntheticSceneParams::default()
        })
        .unwrap();
        let est = estimate_snr(&s.mixture, &s.seg, 0).unwrap();
        assert!((5.0..=7.0).contains(&est.db), "seed {seed}: {}", est.db);
    }
}

#[test]
fn selector_follows_threshold() {
    let cfg = PipelineConfig::default();
    let low = scene(Some(-6.0), 5);
    let high = scene(Some(12.0), 5);
    let lo = enhance_utterance(&low.mixture, &low.seg, &cfg).unwrap();
    let hi = enhance_utterance(&high.mixture, &high.seg, &cfg).unwrap();
    assert_eq!(lo.decision.chosen, Algorithm::SpeechCleaner);
    assert_eq!(hi.decision.chosen, Algorithm::Cab);
    assert!(matches!(lo.operator, FrozenOperator::Cleaner(_)));
    assert!(matches!(hi.operator, FrozenOperator::Beamformer(_)));
}

#[test]
fn oracle_on_noiseless_scene_is_near_perfect() {
    // integer delays keep the rendering itself exact
    let mut spec = synthetic_scene_spec(&SyntheticSceneParams {
        snr_db: None,
        seed: 6,
        context_length_s: 2.0,
        ..SyntheticSceneParams::default()
    })
    .unwrap();
    spec.target.rendering = Rendering::DelayGain {
        delays: vec![0.0, 2.0, 1.0],
        gains: vec![1.0, 0.8, 0.6],
    };
    let s = mix_scene(&spec).unwrap();
    let eval = evaluate_scene(&s, Mode::Oracle, &PipelineConfig::default()).unwrap();
    assert!(eval.report.si_sdr_db >= 40.0, "{}", eval.report.si_sdr_db);
}

#[test]
fn passthrough_scores_zero_improvement() {
    let s = scene(Some(0.0), 7);
    let eval = evaluate_scene(&s, Mode::Passthrough, &PipelineConfig::default()).unwrap();
    assert_eq!(eval.report.si_sdr_improvement_db, 0.0);
    // only the single-frame first hop of the context deviates
    assert!(eval.report.noise_reduction_db.unwrap().abs() < 0.05);
}

#[test]
fn oracle_without_clean_reference_is_rejected() {
    let s = scene(Some(0.0), 8);
    let err = enhance_forced(&s.mixture, &s.seg, &PipelineConfig::default(), Mode::Oracle, None)
        .unwrap_err();
    assert!(matches!(err, Error::OracleRequiresCleanReference));
}

#[test]
fn beamformer_improves_and_cleaner_cancels_at_low_snr() {
    let s = scene(Some(-12.0), 9);
    let cfg = PipelineConfig::default();
    let sc = evaluate_scene(&s, Mode::Sc, &cfg).unwrap();
    assert!(sc.report.si_sdr_improvement_db > 3.0);
    assert!(sc.report.noise_reduction_db.unwrap() > 6.0);
    let cab = evaluate_scene(&s, Mode::Cab, &cfg).unwrap();
    assert!(cab.report.si_sdr_improvement_db > 0.0);
}

#[test]
fn sidecars_reproduce_the_run() {
    let s = scene(Some(0.0), 10);
    let cfg = PipelineConfig::default();
    let span = s.seg.utterance();
    for mode in [Mode::Cab, Mode::Sc] {
        let run = enhance_forced(&s.mixture, &s.seg, &cfg, mode, None).unwrap();
        let mut buf = Vec::new();
        let restored = match &run.operator {
            FrozenOperator::Beamformer(w) => {
                sidecar::write_weights(&mut buf, w).unwrap();
                FrozenOperator::Beamformer(sidecar::read_weights(&mut buf.as_slice()).unwrap())
            }
            FrozenOperator::Cleaner(bank) => {
                sidecar::write_taps(&mut buf, bank).unwrap();
                FrozenOperator::Cleaner(sidecar::read_taps(&mut buf.as_slice(), 0).unwrap())
            }
            FrozenOperator::Passthrough { .. } => unreachable!(),
        };
        let out = restored.apply(&s.mixture, span.clone(), &cfg.frame_params).unwrap();
        assert_eq!(out.as_slice(), run.enhanced.channel(0), "{mode}");
    }
}
