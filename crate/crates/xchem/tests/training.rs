use xchem::engine::RayonEngine;
use xchem::harness::{build_samples, fold_plans};
use xchem::ingest::join;
use xchem::synth::{generate, SynthConfig};
use xchem_core::encoder::EncoderConfig;
use xchem_core::fusion::FusionConfig;
use xchem_core::model::{ModelConfig, Sample, Variant};
use xchem_core::train::{train, SerialEngine, TrainConfig};
use xchem_core::{parse_xyz, Entry, TargetProperty};

fn entries(count: usize, seed: u64) -> Vec<Entry> {
    let records = generate(&SynthConfig { count, seed, missing_rate: 0.0 });
    let molecules = records.iter().map(|r| parse_xyz(&r.xyz).unwrap()).collect();
    let meta: String = records.iter().map(|r| format!("{}\n", r.metadata)).collect();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.jsonl");
    std::fs::write(&path, meta).unwrap();
    join(molecules, &xchem::ingest::read_metadata(&path).unwrap())
}

fn base_samples(count: usize, encoder: EncoderConfig) -> (ModelConfig, Vec<Sample>) {
    let cfg = ModelConfig { encoder, fusion: FusionConfig::default(), variant: Variant::Base };
    let samples = build_samples(&entries(count, 21), TargetProperty::Homo, &cfg, None).unwrap();
    (cfg, samples)
}

#[test]
fn smoothed_training_loss_does_not_increase() {
    let (cfg, samples) = base_samples(200, EncoderConfig::default());
    let tc = TrainConfig { epochs: 5, ..TrainConfig::default() };
    let out = train(&cfg, &samples, &[], &tc, &RayonEngine).unwrap();
    let losses: Vec<f64> = out.curve.iter().map(|e| e.train_loss).collect();
    let smoothed: Vec<f64> = (0..losses.len())
        .map(|i| {
            let w = &losses[i.saturating_sub(2)..=i];
            w.iter().sum::<f64>() / w.len() as f64
        })
        .collect();
    for pair in smoothed.windows(2) {
        assert!(pair[1] <= pair[0], "smoothed losses {smoothed:?}");
    }
}

#[test]
fn parallel_and_serial_training_are_bitwise_identical() {
    let enc = EncoderConfig { blocks: 2, hidden: 16, n_radial: 12, ..EncoderConfig::default() };
    let (cfg, samples) = base_samples(60, enc);
    let tc = TrainConfig { epochs: 3, batch_size: 20, ..TrainConfig::default() };
    let a = train(&cfg, &samples, &samples[..6], &tc, &RayonEngine).unwrap();
    let b = train(&cfg, &samples, &samples[..6], &tc, &RayonEngine).unwrap();
    let c = train(&cfg, &samples, &samples[..6], &tc, &SerialEngine).unwrap();
    assert_eq!(a.curve, b.curve);
    assert_eq!(a.curve, c.curve);
    assert!(a.model.params.values.iter().zip(&c.model.params.values).all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn folds_partition_the_dataset() {
    let ids: Vec<String> = (0..100).map(|i| format!("gdb_{i}")).collect();
    let refs: Vec<&str> = ids.iter().map(String::as_str).collect();
    let plans = fold_plans(&refs, &TrainConfig::default()).unwrap();
    assert_eq!(plans.len(), 3);
    let mut tests: Vec<usize> = plans.iter().flat_map(|p| p.test.clone()).collect();
    tests.sort_unstable();
    assert_eq!(tests, (0..100).collect::<Vec<_>>());
    for p in &plans {
        assert_eq!(p.train.len() + p.val.len() + p.test.len(), 100);
        assert!(p.val.iter().all(|v| !p.test.contains(v) && !p.train.contains(v)));
        assert_eq!(p.val.len(), ((100 - p.test.len()) as f64 * 0.1).round() as usize);
    }
}
