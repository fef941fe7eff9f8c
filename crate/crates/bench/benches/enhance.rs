use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use hwenh_core::cab::{
    estimate_covariance, estimate_noise_covariance, principal_eigenvector, project_psd,
    subtract_covariance,
};
use hwenh_core::cleaner::{rls_adapt, CleanerConfig, CleanerFilterBank};
use hwenh_core::pipeline::{enhance_forced, Mode, PipelineConfig};
use hwenh_core::scene::{synthetic_scene, Scene, SyntheticSceneParams};
use hwenh_core::signal::{segment_frames, stft, FrameParams};

/// 7 s context, 1 s hotword, 2 s query.
fn scene() -> Scene {
    synthetic_scene(&SyntheticSceneParams {
        snr_db: Some(0.0),
        context_length_s: 7.0,
        seed: 1,
        ..SyntheticSceneParams::default()
    })
    .unwrap()
}

fn benches(c: &mut Criterion) {
    let s = scene();
    let params = FrameParams::default();
    let spec = stft(&s.mixture, &params).unwrap();
    let frames = segment_frames(&s.seg, &params).unwrap();

    c.bench_function("stft_10s_3ch", |b| b.iter(|| stft(&s.mixture, &params).unwrap()));

    c.bench_function("cab_weights", |b| {
        b.iter(|| {
            let noisy = estimate_covariance(&spec, frames.hotword.clone()).unwrap();
            let noise = estimate_noise_covariance(&spec, frames.context.clone()).unwrap();
            let desired = project_psd(&subtract_covariance(&noisy, &noise).unwrap());
            principal_eigenvector(&desired).unwrap()
        })
    });

    c.bench_function("rls_context", |b| {
        b.iter_batched(
            || {
                CleanerFilterBank::new(spec.bin_count(), spec.channel_count(), 0, &CleanerConfig::default())
                    .unwrap()
            },
            |mut bank| rls_adapt(&mut bank, &spec, frames.context.clone()).unwrap(),
            BatchSize::LargeInput,
        )
    });

    let cfg = PipelineConfig {
        context_length_s: 7.0,
        ..PipelineConfig::default()
    };
    for mode in [Mode::Cab, Mode::Sc, Mode::Select] {
        c.bench_function(&format!("enhance_{mode}"), |b| {
            b.iter(|| enhance_forced(&s.mixture, &s.seg, &cfg, mode, None).unwrap())
        });
    }
}

criterion_group! {
    name = enhance;
    config = Criterion::default().sample_size(10);
    targets = benches
}
criterion_main!(enhance);
