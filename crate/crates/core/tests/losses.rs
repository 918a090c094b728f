use knowlens_core::dataset::{normalize_matrix, FeatureMatrix};
use knowlens_core::embednet::{batch_loss, class_loss, init_model, joint_loss, predict_label, Hyperparams, Snapshot};
use ndarray::Array2;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn instance(
    seed: u64,
    n: usize,
    classes: usize,
) -> (
    knowlens_core::embednet::EmbeddingModel,
    Vec<Option<usize>>,
    FeatureMatrix,
) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hp = Hyperparams {
        embed_dim: 4,
        hidden_dim: 6,
        seed,
        ..Default::default()
    };
    let mut model = init_model(n, 5, &hp).unwrap();
    model.h.mapv_inplace(|_| rng.gen_range(-1.0..1.0));
    let labels = (0..n)
        .map(|i| Some(if i < classes { i } else { rng.gen_range(0..classes) }))
        .collect();
    let x = normalize_matrix(Array2::from_shape_simple_fn((n, 5), || rng.gen::<f64>()));
    (model, labels, x)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn class_loss_is_zero_iff_correct(seed in any::<u64>(), classes in 2..5usize) {
        let (model, labels, _) = instance(seed, 12, classes);
        for i in 0..12 {
            let own = labels[i].unwrap();
            let alone = labels.iter().enumerate().all(|(p, l)| p == i || *l != Some(own));
            if alone {
                continue;
            }
            let lc = class_loss(&model, i, &labels).unwrap();
            let pred = predict_label(&model, i, &labels).unwrap();
            prop_assert!(lc >= 0.0);
            prop_assert_eq!(lc == 0.0, pred == own);
        }
    }

    #[test]
    fn endpoint_weights_ignore_the_other_term(lr in 0.0..10.0f64, lc in 0.0..2.0f64, bump in -5.0..5.0f64) {
        prop_assert!((joint_loss(lr, lc, 0.0).unwrap() - joint_loss(lr, lc + bump, 0.0).unwrap()).abs() < 1e-12);
        prop_assert!((joint_loss(lr, lc, 1.0).unwrap() - joint_loss(lr + bump.abs(), lc, 1.0).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn batch_objective_at_endpoints(seed in any::<u64>()) {
        let (model, labels, x) = instance(seed, 10, 3);
        let batch: Vec<usize> = (0..10).collect();
        let snap = Snapshot::new(&model.h, &labels, 3);
        let r0 = batch_loss(&model, &x, &labels, &snap, &batch, 0.0);
        let r1 = batch_loss(&model, &x, &labels, &snap, &batch, 1.0);
        prop_assert!((r0.objective() - r0.recon / 10.0).abs() < 1e-12);
        prop_assert!((r1.objective() - r1.class / 10.0).abs() < 1e-12);
        prop_assert!(r1.class >= 0.0);
        // perturbing the targets moves only the reconstruction term
        let mut shifted = x.clone();
        shifted.values += 0.5;
        let r1s = batch_loss(&model, &shifted, &labels, &snap, &batch, 1.0);
        prop_assert!((r1s.objective() - r1.objective()).abs() < 1e-12);
        prop_assert!(r1s.recon != r1.recon);
    }
}
