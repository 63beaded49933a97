//! End-to-end dataset I/O: generation to disk and back, byte-identical
//! rewrites, and checkpoint round-trips.

use a3m_core::data::{
    generate, split_classification, write_dataset, DatasetManifest, ImageFormat, SyntheticSpec,
};
use a3m_core::model::{A3MConfig, A3MParams};
use a3m_core::train::Dataset;
use a3m_core::Rng;

fn small_spec() -> SyntheticSpec {
    let mut spec = SyntheticSpec::default_toy();
    spec.codebook.truncate(6);
    spec.samples_per_category = 4;
    spec
}

#[test]
fn dataset_roundtrip_img1_is_exact() {
    let spec = small_spec();
    let samples = generate(&spec).unwrap();
    let tags = split_classification(&samples, 0.5, &mut Rng::new(2)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let manifest = write_dataset(dir.path(), &samples, &tags, &spec, ImageFormat::Img1).unwrap();

    let manifest_path = dir.path().join("manifest.csv");
    let read_back = DatasetManifest::read(&manifest_path).unwrap();
    assert_eq!(manifest, read_back);

    let dataset = Dataset::from_manifest(&manifest_path).unwrap();
    assert_eq!(dataset.len(), samples.len());
    for (loaded, original) in dataset.images.iter().zip(&samples) {
        assert!(loaded.bitwise_eq(&original.image));
    }
    assert_eq!(dataset.attr_cardinalities, spec.cardinalities());
}

#[test]
fn manifest_rewrite_is_byte_identical() {
    let spec = small_spec();
    let samples = generate(&spec).unwrap();
    let tags = split_classification(&samples, 0.5, &mut Rng::new(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &samples, &tags, &spec, ImageFormat::Img1).unwrap();
    let manifest_path = dir.path().join("manifest.csv");
    let first = std::fs::read(&manifest_path).unwrap();
    let reread = DatasetManifest::read(&manifest_path).unwrap();
    reread.write(&manifest_path).unwrap();
    let second = std::fs::read(&manifest_path).unwrap();
    assert_eq!(first, second);
}

#[test]
fn ppm_dataset_loads_within_quantization_error() {
    let spec = small_spec();
    let samples = generate(&spec).unwrap();
    let tags = split_classification(&samples, 0.5, &mut Rng::new(4)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(dir.path(), &samples, &tags, &spec, ImageFormat::Ppm).unwrap();
    let dataset = Dataset::from_manifest(&dir.path().join("manifest.csv")).unwrap();
    for (loaded, original) in dataset.images.iter().zip(&samples) {
        let err = loaded.max_abs_diff(&original.image);
        assert!(err <= 0.5 / 255.0 + 1e-12, "quantization error {err}");
    }
}

#[test]
fn regenerating_writes_identical_image_bytes() {
    let spec = small_spec();
    let samples_a = generate(&spec).unwrap();
    let samples_b = generate(&spec).unwrap();
    let tags = split_classification(&samples_a, 0.5, &mut Rng::new(5)).unwrap();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    write_dataset(dir_a.path(), &samples_a, &tags, &spec, ImageFormat::Img1).unwrap();
    write_dataset(dir_b.path(), &samples_b, &tags, &spec, ImageFormat::Img1).unwrap();
    let file = "img/c002_s001.img1";
    assert_eq!(
        std::fs::read(dir_a.path().join(file)).unwrap(),
        std::fs::read(dir_b.path().join(file)).unwrap()
    );
}

#[test]
fn checkpoint_file_roundtrip_is_byte_identical() {
    let config = A3MConfig::toy(4, vec![3, 3, 2, 2], 24);
    let params = A3MParams::init(&config, &mut Rng::new(12)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.a3m1");
    params.save(&path).unwrap();
    let first = std::fs::read(&path).unwrap();
    assert_eq!(&first[..4], b"A3M1");
    let loaded = A3MParams::load(&path, &config).unwrap();
    loaded.save(&path).unwrap();
    let second = std::fs::read(&path).unwrap();
    assert_eq!(first, second);
}
