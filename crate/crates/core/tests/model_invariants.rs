//! Algebraic properties of the attention modules and the ablation
//! equivalence ladder.

use a3m_core::data::{generate, split_classification, Split, SyntheticSpec};
use a3m_core::model::{
    attribute_guided_attention, category_guided_attention, combined_loss, forward_full,
    forward_with_overrides, A3MConfig, A3MParams, ForwardOverrides, Variant,
};
use a3m_core::train::Dataset;
use a3m_core::{Rng, SgdState, Tape, Tensor, TensorId};

fn random_tensor(rng: &mut Rng, shape: Vec<usize>) -> Tensor {
    let numel: usize = shape.iter().product();
    Tensor::new(shape, (0..numel).map(|_| rng.uniform(-2.0, 2.0)).collect()).unwrap()
}

#[test]
fn permuting_regions_permutes_masks_and_preserves_f_region() {
    let (d, l, k) = (5, 7, 3);
    let mut rng = Rng::new(1);
    let v = random_tensor(&mut rng, vec![d, l]);
    let embeds: Vec<Tensor> = (0..k).map(|_| random_tensor(&mut rng, vec![d])).collect();

    // column permutation of V
    let perm: Vec<usize> = {
        let mut p: Vec<usize> = (0..l).collect();
        rng.shuffle(&mut p);
        p
    };
    let mut v_perm = vec![0.0; d * l];
    for row in 0..d {
        for (new_col, &old_col) in perm.iter().enumerate() {
            v_perm[row * l + new_col] = v.data()[row * l + old_col];
        }
    }
    let v_perm = Tensor::new(vec![d, l], v_perm).unwrap();

    let run = |v: &Tensor| {
        let mut tape = Tape::new();
        let vid = tape.constant(v.clone());
        let aids: Vec<TensorId> = embeds.iter().map(|a| tape.constant(a.clone())).collect();
        let (masks, region, f_region) = attribute_guided_attention(&mut tape, vid, &aids).unwrap();
        (
            masks.iter().map(|&m| tape.data(m).to_vec()).collect::<Vec<_>>(),
            tape.data(region).to_vec(),
            tape.data(f_region).to_vec(),
        )
    };
    let (masks_a, region_a, f_a) = run(&v);
    let (masks_b, region_b, f_b) = run(&v_perm);

    // masks permute exactly alongside the columns
    for kk in 0..k {
        for (new_col, &old_col) in perm.iter().enumerate() {
            assert_eq!(masks_b[kk][new_col].to_bits(), masks_a[kk][old_col].to_bits());
        }
    }
    for (new_col, &old_col) in perm.iter().enumerate() {
        assert_eq!(region_b[new_col].to_bits(), region_a[old_col].to_bits());
    }
    // the weighted sum is permutation-invariant up to addition order
    for i in 0..d {
        assert!((f_a[i] - f_b[i]).abs() < 1e-12);
    }
}

#[test]
fn permuting_attributes_preserves_region_mask_and_f_attr() {
    let (d, l, k) = (4, 6, 4);
    let mut rng = Rng::new(2);
    let v = random_tensor(&mut rng, vec![d, l]);
    let v_cat = random_tensor(&mut rng, vec![d]);
    let embeds: Vec<Tensor> = (0..k).map(|_| random_tensor(&mut rng, vec![d])).collect();
    let perm = [2usize, 0, 3, 1];

    let run = |order: &[usize]| {
        let mut tape = Tape::new();
        let vid = tape.constant(v.clone());
        let aids: Vec<TensorId> = order
            .iter()
            .map(|&i| tape.constant(embeds[i].clone()))
            .collect();
        let (_, region, _) = attribute_guided_attention(&mut tape, vid, &aids).unwrap();
        let a_matrix = tape.concat_columns(&aids).unwrap();
        let vc = tape.constant(v_cat.clone());
        let (weights, f_attr) = category_guided_attention(&mut tape, a_matrix, vc).unwrap();
        (
            tape.data(region).to_vec(),
            tape.data(weights).to_vec(),
            tape.data(f_attr).to_vec(),
        )
    };
    let identity: Vec<usize> = (0..k).collect();
    let (region_a, weights_a, f_a) = run(&identity);
    let (region_b, weights_b, f_b) = run(&perm);

    // max over attributes is symmetric: region mask identical bitwise
    for (a, b) in region_a.iter().zip(&region_b) {
        assert_eq!(a.to_bits(), b.to_bits());
    }
    // attention weights permute exactly with the embeddings
    for (new_slot, &old_slot) in perm.iter().enumerate() {
        assert_eq!(weights_b[new_slot].to_bits(), weights_a[old_slot].to_bits());
    }
    for i in 0..d {
        assert!((f_a[i] - f_b[i]).abs() < 1e-12);
    }
}

#[test]
fn masks_increase_strictly_with_the_inner_product() {
    let (d, l) = (4, 5);
    let mut rng = Rng::new(3);
    let v = random_tensor(&mut rng, vec![d, l]);
    let a = random_tensor(&mut rng, vec![d]);
    // nudging the embedding along column `l` raises that inner product
    let target = 2usize;
    let mut a_up = a.clone();
    for row in 0..d {
        a_up.data_mut()[row] += 1e-3 * v.data()[row * l + target];
    }
    let mask_of = |a: &Tensor| {
        let mut tape = Tape::new();
        let vid = tape.constant(v.clone());
        let aid = tape.constant(a.clone());
        let (masks, _, _) = attribute_guided_attention(&mut tape, vid, &[aid]).unwrap();
        tape.data(masks[0]).to_vec()
    };
    let before = mask_of(&a);
    let after = mask_of(&a_up);
    assert!(
        after[target] > before[target],
        "mask must rise with the inner product"
    );
}

fn toy_setup(seed: u64) -> (A3MConfig, A3MParams, Tensor) {
    let config = A3MConfig::toy(4, vec![3, 3, 2, 2], 24);
    let params = A3MParams::init(&config, &mut Rng::new(seed)).unwrap();
    let mut rng = Rng::new(seed + 500);
    let image = Tensor::new(vec![3, 16, 16], (0..768).map(|_| rng.next_f64()).collect()).unwrap();
    (config, params, image)
}

fn logits_with(
    config: &A3MConfig,
    params: &A3MParams,
    image: &Tensor,
    variant: Variant,
    overrides: ForwardOverrides,
) -> Vec<u64> {
    let mut config = config.clone();
    config.variant = variant;
    let mut tape = Tape::new();
    let nodes = params.register(&mut tape, false);
    let state = forward_with_overrides(&mut tape, &nodes, image, &config, overrides).unwrap();
    tape.data(state.logits_final).iter().map(|v| v.to_bits()).collect()
}

#[test]
fn equivalence_ladder_reaches_baseline2_bitwise() {
    let (config, params, image) = toy_setup(4);
    let baseline2 = logits_with(&config, &params, &image, Variant::Baseline2, ForwardOverrides::default());

    // full model with both attention vectors clamped to ones
    let both = ForwardOverrides {
        force_uniform_region_weights: true,
        force_uniform_attr_weights: true,
    };
    assert_eq!(logits_with(&config, &params, &image, Variant::A3M, both), baseline2);

    // Att1 (uniform attribute weights) with the region mask additionally clamped
    let clamp_region = ForwardOverrides {
        force_uniform_region_weights: true,
        force_uniform_attr_weights: false,
    };
    assert_eq!(
        logits_with(&config, &params, &image, Variant::Att1, clamp_region),
        baseline2
    );

    // Att2 (uniform region weights) with the attribute weights additionally clamped
    let clamp_attr = ForwardOverrides {
        force_uniform_region_weights: false,
        force_uniform_attr_weights: true,
    };
    assert_eq!(
        logits_with(&config, &params, &image, Variant::Att2, clamp_attr),
        baseline2
    );
}

#[test]
fn final_feature_infinity_norm_is_bounded() {
    // |f_final| <= max_l |v_l| + max_k |a_k| elementwise-infinity, since the
    // attention weights lie in (0, 1) and both sides are averages
    for seed in 0..5u64 {
        let (config, params, image) = toy_setup(40 + seed);
        let mut tape = Tape::new();
        let nodes = params.register(&mut tape, false);
        let state = forward_full(&mut tape, &nodes, &image, &config).unwrap();
        let inf = |v: &[f64]| v.iter().fold(0.0_f64, |m, &x| m.max(x.abs()));
        let v_max = inf(tape.data(state.v_matrix));
        let a_max = state
            .attr_embeddings
            .iter()
            .map(|&a| inf(tape.data(a)))
            .fold(0.0_f64, f64::max);
        let f_max = inf(tape.data(state.f_final));
        assert!(
            f_max <= v_max + a_max + 1e-12,
            "seed {seed}: |f_final| = {f_max} exceeds bound {v_max} + {a_max}"
        );
    }
}

#[test]
fn one_sgd_step_reduces_the_batch_loss() {
    let mut spec = SyntheticSpec::default_toy();
    spec.samples_per_category = 2;
    let samples = generate(&spec).unwrap();
    let tags = split_classification(&samples, 0.5, &mut Rng::new(7)).unwrap();
    let dataset = Dataset::from_samples(&samples, tags, &spec);
    let config = A3MConfig::toy(4, vec![3, 3, 2, 2], 24);
    let batch: Vec<usize> = dataset.indices(Split::Train).into_iter().take(8).collect();

    let batch_loss = |params: &A3MParams, backward: bool| -> (f64, Option<Vec<Vec<f64>>>) {
        let mut tape = Tape::new();
        let nodes = params.register(&mut tape, backward);
        let mut total: Option<TensorId> = None;
        for &i in &batch {
            let state = forward_full(&mut tape, &nodes, &dataset.images[i], &config).unwrap();
            let loss = combined_loss(&mut tape, &state, dataset.categories[i], &dataset.attr_labels[i], &config)
                .unwrap();
            total = Some(match total {
                Some(t) => tape.add(t, loss).unwrap(),
                None => loss,
            });
        }
        let mean = tape.scale(total.unwrap(), 1.0 / batch.len() as f64);
        let value = tape.value(mean).item().unwrap();
        if !backward {
            return (value, None);
        }
        tape.backward(mean).unwrap();
        let grads = nodes
            .ids()
            .iter()
            .map(|&id| tape.grad(id).unwrap().to_vec())
            .collect();
        (value, Some(grads))
    };

    for seed in 0..5u64 {
        let mut params = A3MParams::init(&config, &mut Rng::new(seed)).unwrap();
        let (before, grads) = batch_loss(&params, true);
        let mut optimizer = SgdState::new(1e-3, 0.0, 0.0, &params.tensors());
        optimizer
            .step(&mut params.tensors_mut(), &grads.unwrap())
            .unwrap();
        let (after, _) = batch_loss(&params, false);
        assert!(
            after < before,
            "seed {seed}: loss {before} -> {after} did not decrease"
        );
    }
}

#[test]
fn fixed_seed_forward_respects_state_invariants() {
    let (config, params, image) = toy_setup(11);
    let mut tape = Tape::new();
    let nodes = params.register(&mut tape, false);
    let state = forward_full(&mut tape, &nodes, &image, &config).unwrap();
    for &m in &state.attr_masks {
        assert!(tape.data(m).iter().all(|&v| v > 0.0 && v < 1.0));
    }
    let region = tape.data(state.region_mask.unwrap());
    assert!(region.iter().all(|&v| v > 0.0 && v < 1.0));
    let f_region = tape.data(state.f_region.unwrap());
    let f_attr = tape.data(state.f_attr.unwrap());
    for (i, f) in tape.data(state.f_final).iter().enumerate() {
        assert_eq!(f.to_bits(), (f_region[i] + f_attr[i]).to_bits());
    }
}
