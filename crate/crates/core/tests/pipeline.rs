use lsed::descriptors::{harvest_patch_features, LsedPipeline};
use lsed::encoding::{Encoder, L1EncoderConfig, SparseEncoder};
use lsed::evaluation::{generate_trials, run_verification, ImageCorpus};
use lsed::imaging::{PatchGridConfig, SynthParams};
use lsed::learning::*;
use lsed::matching::raw_distance;

fn corpus(first: usize, count: usize) -> ImageCorpus {
    let params = SynthParams {
        size: 32,
        ..SynthParams::default()
    };
    ImageCorpus::synthetic(first, count, 3, &params, 2).unwrap()
}

fn trained(kind: ModelKind, feats: &[Vec<f64>]) -> Model {
    match kind {
        ModelKind::Dictionary => {
            let cfg = KsvdConfig {
                num_atoms: 24,
                max_iters: 3,
                seed: 1,
                ..KsvdConfig::default()
            };
            ksvd_train(feats, &cfg).unwrap().into()
        }
        ModelKind::Autoencoder => {
            let cfg = SannConfig {
                hidden_units: 24,
                max_epochs: 20,
                seed: 1,
                ..SannConfig::default()
            };
            sann_train(feats, &cfg).unwrap().into()
        }
        ModelKind::Mixture => em_train(feats, 8, 1).unwrap().into(),
    }
}

#[test]
fn every_encoder_separates_identities_better_than_chance() {
    let train = corpus(0, 6);
    let test = corpus(1000, 8);
    let grid = PatchGridConfig::default();
    let feats = harvest_patch_features(&train.images, &grid, 15, Some(40), 0).unwrap();
    let trials = generate_trials(&test.labels, 2, 12, 5).unwrap();
    for kind in [ModelKind::Dictionary, ModelKind::Autoencoder, ModelKind::Mixture] {
        let model = trained(kind, &feats);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.lskm");
        model.write(&path).unwrap();
        let model = Model::read(&path).unwrap();
        let encoder = Encoder::from_model(model, L1EncoderConfig::default()).unwrap();
        let pipeline = LsedPipeline::new(encoder, grid).unwrap();
        let descs: Vec<_> = test.images.iter().map(|im| pipeline.describe(im).unwrap()).collect();
        let n = pipeline.encoder().code_len();
        assert!(descs.iter().all(|d| d.dim() == 9 * n));
        let report = run_verification(&trials, |t| raw_distance(&descs[t.a], &descs[t.b])).unwrap();
        assert!(report.mean_accuracy > 0.6, "{kind:?}: {}", report.mean_accuracy);
    }
}

#[test]
fn parallel_and_sequential_descriptors_agree() {
    let train = corpus(0, 4);
    let grid = PatchGridConfig::default();
    let feats = harvest_patch_features(&train.images, &grid, 15, Some(40), 0).unwrap();
    let encoder = Encoder::from_model(trained(ModelKind::Mixture, &feats), L1EncoderConfig::default()).unwrap();
    let pipeline = LsedPipeline::new(encoder, grid).unwrap();
    let image = &train.images[0];
    let one = lsed::par::with_threads(1, || pipeline.describe(image)).unwrap();
    let many = lsed::par::with_threads(4, || pipeline.describe(image)).unwrap();
    assert_eq!(one, many);
}
