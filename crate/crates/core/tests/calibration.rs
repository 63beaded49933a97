//! Temporary calibration probe.
use a3m_core::data::{generate, split_classification, SyntheticSpec};
use a3m_core::model::{A3MConfig, Variant};
use a3m_core::train::{run_ablation, Dataset, TrainConfig};
use a3m_core::Rng;

#[test]
#[ignore]
fn calibrate_5seed() {
    let mut spec = SyntheticSpec::default_toy();
    spec.noise_level = 0.5;
    let samples = generate(&spec).unwrap();
    let tags = split_classification(&samples, 0.5, &mut Rng::new(spec.seed)).unwrap();
    let dataset = Dataset::from_samples(&samples, tags, &spec);
    let config = A3MConfig::toy(spec.num_attributes(), spec.cardinalities(), spec.num_categories());
    let mut tc = TrainConfig::toy(0);
    tc.learning_rate = 0.05;
    tc.epochs = 30;
    tc.lr_drop_epoch = 22;
    let started = std::time::Instant::now();
    let table = run_ablation(&dataset, &config, &tc, &[0, 1, 2, 3, 4]).unwrap();
    eprintln!("elapsed {:.0}s", started.elapsed().as_secs_f64());
    for v in Variant::ablation_order() {
        let accs: Vec<f64> = table.rows.iter().filter(|r| r.variant == v)
            .map(|r| r.report.accuracy.unwrap()).collect();
        eprintln!("{:<12} mean={:.4} seeds={:?}", v.token(), table.mean_accuracy(v),
            accs.iter().map(|a| (a * 1000.0).round() / 1000.0).collect::<Vec<_>>());
    }
}
