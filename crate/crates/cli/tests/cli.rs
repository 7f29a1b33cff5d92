use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lsed::config::RunConfig;
use lsed::descriptors::FaceDescriptor;
use lsed::evaluation::run_synthetic_class_experiment;
use lsed::learning::{Model, ModelKind};

const SMALL: &str = "\
synthetic.train_identities = 5
synthetic.test_identities = 6
synthetic.per_identity = 4
synthetic.size = 32
gmm.components = 4
gmm.iters = 10
patches_per_image = 30
cohort_size = 3
folds = 2
pairs_per_fold = 6
";

fn lsed(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lsed"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let o = lsed(dir, args);
    assert!(
        o.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&o.stderr)
    );
    String::from_utf8(o.stdout).unwrap()
}

fn setup(extra: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, format!("{SMALL}{extra}")).unwrap();
    (dir, cfg)
}

fn train(dir: &Path, out: &str) -> PathBuf {
    ok(dir, &["--config", "run.cfg", "--seed", "11", "--out", out, "train"]);
    dir.join(out).join("model.lskm")
}

#[test]
fn trained_model_round_trips_bit_exact() {
    let (dir, _) = setup("");
    let path = train(dir.path(), "m");
    let bytes = std::fs::read(&path).unwrap();
    let model = Model::read(&path).unwrap();
    assert_eq!(model.kind(), ModelKind::Mixture);
    assert_eq!(model.code_len(), 4);
    assert_eq!(model.to_bytes(), bytes);
}

#[test]
fn training_is_deterministic() {
    let (dir, _) = setup("");
    let a = std::fs::read(train(dir.path(), "a")).unwrap();
    let b = std::fs::read(train(dir.path(), "b")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn training_needs_a_seed() {
    let (dir, _) = setup("");
    let o = lsed(dir.path(), &["--config", "run.cfg", "train"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("seed"));
}

#[test]
fn missing_corpus_is_named() {
    let (dir, _) = setup("");
    let o = lsed(dir.path(), &["--seed", "1", "train", "--corpus", "no_such_faces"]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("no_such_faces"));
}

#[test]
fn directory_corpus_trains() {
    let (dir, _) = setup("");
    let faces = dir.path().join("faces");
    std::fs::create_dir(&faces).unwrap();
    let params = lsed::imaging::SynthParams {
        size: 32,
        ..Default::default()
    };
    for id in 0..3u64 {
        for v in 0..2u64 {
            let im = lsed::imaging::synth_identity_image(id, v, &params).unwrap();
            lsed::imaging::io::write_pgm(&faces.join(format!("p{id}_{v}.pgm")), &im).unwrap();
        }
    }
    let out = ok(
        dir.path(),
        &["--config", "run.cfg", "--seed", "2", "--out", "d", "train", "--corpus", "faces"],
    );
    assert!(out.starts_with("6 images"));
    assert!(dir.path().join("d/model.lskm").exists());
}

#[test]
fn self_verification_scores_zero() {
    let (dir, _) = setup("");
    train(dir.path(), "m");
    let p = lsed::imaging::SynthParams {
        size: 32,
        ..Default::default()
    };
    let im = lsed::imaging::synth_identity_image(3, 0, &p).unwrap();
    lsed::imaging::io::write_lsk1(&dir.path().join("face.lsk1"), &im).unwrap();
    ok(dir.path(), &["--config", "run.cfg", "--out", "d", "encode", "--model", "m/model.lskm", "face.lsk1"]);
    let d = FaceDescriptor::read(&dir.path().join("d/face.lskd")).unwrap();
    assert_eq!(d.dim(), 9 * 4);
    let out = ok(
        dir.path(),
        &["--config", "run.cfg", "verify", "--model", "m/model.lskm", "d/face.lskd", "d/face.lskd"],
    );
    assert_eq!(out.lines().nth(1), Some("0,same"));
}

#[test]
fn cohort_of_wrong_dimension_is_incompatible() {
    let (dir, _) = setup("");
    train(dir.path(), "m");
    let im = lsed::imaging::synth_identity_image(1, 0, &lsed::imaging::SynthParams { size: 32, ..Default::default() }).unwrap();
    lsed::imaging::io::write_lsk1(&dir.path().join("face.lsk1"), &im).unwrap();
    ok(dir.path(), &["--config", "run.cfg", "--out", "d", "encode", "--model", "m/model.lskm", "face.lsk1"]);
    let d = FaceDescriptor::read(&dir.path().join("d/face.lskd")).unwrap();
    let wrong = FaceDescriptor::new(9, 5, vec![0.1; 45], d.kind(), d.config_hash()).unwrap();
    wrong.write(&dir.path().join("wrong.lskd")).unwrap();
    let o = lsed(
        dir.path(),
        &["--config", "run.cfg", "verify", "d/face.lskd", "d/face.lskd", "--cohort", "wrong.lskd"],
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("incompatible"));
}

#[test]
fn descriptor_from_another_configuration_is_rejected() {
    let (dir, _) = setup("");
    train(dir.path(), "m");
    let im = lsed::imaging::synth_identity_image(1, 0, &lsed::imaging::SynthParams { size: 32, ..Default::default() }).unwrap();
    lsed::imaging::io::write_lsk1(&dir.path().join("face.lsk1"), &im).unwrap();
    ok(dir.path(), &["--config", "run.cfg", "--out", "d", "encode", "--model", "m/model.lskm", "face.lsk1"]);
    std::fs::write(dir.path().join("other.cfg"), format!("{SMALL}features = 10\n")).unwrap();
    let o = lsed(
        dir.path(),
        &["--config", "other.cfg", "verify", "--model", "m/model.lskm", "d/face.lskd", "d/face.lskd"],
    );
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("incompatible"));
}

#[test]
fn corpus_commands_write_reports() {
    let (dir, _) = setup("perturbations = shift_x:2\n");
    train(dir.path(), "m");
    let args = ["--config", "run.cfg", "--seed", "11", "--out", "r"];
    let v = ok(dir.path(), &[&args[..], &["verify", "--model", "m/model.lskm"]].concat());
    assert!(v.contains(",mean,,,,"));
    let i = ok(dir.path(), &[&args[..], &["identify", "--model", "m/model.lskm"]].concat());
    assert!(i.starts_with("lsed_nn rank-1"));
    ok(dir.path(), &[&args[..], &["identify", "--method", "raw-l2", "--side", "8"]].concat());
    let r = ok(dir.path(), &[&args[..], &["experiment", "robustness", "--model", "m/model.lskm"]].concat());
    assert!(r.contains("lsed-mixture+cohort3,shift_x,2,mean,"));
    assert!(r.contains("pca+sr-hamming,none,0,mean,"));
    let b = ok(
        dir.path(),
        &[&args[..], &["bench", "--model", "m/model.lskm", "--gallery-sizes", "2,4"]].concat(),
    );
    assert!(b.contains("hausdorff 16 calls"));
    for f in ["verify.csv", "identify.csv", "robustness.csv", "timing.csv"] {
        assert!(dir.path().join("r").join(f).exists(), "{f}");
    }
}

#[test]
fn synthetic_class_csv_equals_library_output() {
    let extra = "\
synthetic_class.num_classes = 40
synthetic_class.samples_per_class = 16
synthetic_class.train_classes = 8
synthetic_class.pairs_per_fold = 20
synthetic_class.sigma_multipliers = 1, 4, 64
";
    let (dir, cfg) = setup(extra);
    let out = ok(dir.path(), &["--config", "run.cfg", "--seed", "4", "--out", "x", "experiment", "synthetic-class"]);
    let mut rc = RunConfig::from_file(&cfg).unwrap();
    rc.seed = Some(4);
    let lib = run_synthetic_class_experiment(&rc.synthetic_class_config()).unwrap().to_csv();
    assert_eq!(out, lib);
    assert_eq!(std::fs::read_to_string(dir.path().join("x/synthetic_class.csv")).unwrap(), lib);
}
